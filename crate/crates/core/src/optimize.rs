//! One-dimensional search helpers: golden-section refinement seeded by a
//! uniform grid scan.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximises `f` on `[lo, hi]` by golden-section search until the bracket is
/// narrower than `tol`. Returns `(argmax, max)`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if b - a <= tol {
        let x = 0.5 * (a + b);
        return (x, f(x));
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    // 200 iterations shrink any bracket below f64 resolution
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_max(|x| -f(x), lo, hi, tol);
    (x, -v)
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// Index of the largest finite value; ties resolve to the first index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if b >= v => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Grid scan on `grid` followed by golden refinement in the neighbouring cells.
/// Returns `(argmax, max, hit_boundary)`.
pub fn grid_then_golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    grid: &[f64],
    tol: f64,
) -> Option<(f64, f64, bool)> {
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    refine_from_grid(f, grid, &values, tol)
}

/// Golden refinement around the best precomputed grid value.
pub fn refine_from_grid<F: FnMut(f64) -> f64>(
    mut f: F,
    grid: &[f64],
    values: &[f64],
    tol: f64,
) -> Option<(f64, f64, bool)> {
    let i = argmax(values)?;
    let last = grid.len() - 1;
    let hit = i == 0 || i == last;
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(last)];
    let (x, v) = golden_max(&mut f, lo, hi, tol);
    if v >= values[i] {
        Some((x, v, hit))
    } else {
        Some((grid[i], values[i], hit))
    }
}
