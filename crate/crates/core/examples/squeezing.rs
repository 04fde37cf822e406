//! Wineland squeezing and quantum Fisher information of each preparation
//! scheme as the twisting strength grows.

use prepbias::fisher::qfi_pure;
use prepbias::metrics::wineland_xi;
use prepbias::{PrepConfig, Preparer, SchemeKind};

fn main() -> prepbias::Result<()> {
    let n = 100;
    let prep = Preparer::new(n)?;
    let ops = prep.ops();
    println!("scheme,lambda,xi,f_q_over_n");
    for scheme in SchemeKind::ALL {
        for lambda in [0.005, 0.01, 0.02, 0.05, 0.1, 0.15] {
            let state = prep.prepare(&PrepConfig::unbiased(n, scheme, lambda))?;
            let xi = wineland_xi(ops, &state).unwrap_or(f64::NAN);
            let fq = qfi_pure(ops, &state, ops.jy())? / n as f64;
            println!("{},{lambda},{xi:.4},{fq:.3}", scheme.name());
        }
    }
    Ok(())
}
