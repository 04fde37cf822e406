//! Experiment configuration: JSON files, `key=value` overrides and per-experiment
//! defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::largescale::{ThresholdMode, ThresholdSpec};
use crate::schemes::SchemeKind;
use crate::spin_core::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    SqueezeSweep,
    MomErrorGrid,
    BiasVarianceTradeoff,
    DeltaCrit,
    NonGaussMC,
    MomVsMle,
    TwoParamRescue,
    MixedState,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::SqueezeSweep,
        ExperimentKind::MomErrorGrid,
        ExperimentKind::BiasVarianceTradeoff,
        ExperimentKind::DeltaCrit,
        ExperimentKind::NonGaussMC,
        ExperimentKind::MomVsMle,
        ExperimentKind::TwoParamRescue,
        ExperimentKind::MixedState,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SqueezeSweep => "SqueezeSweep",
            ExperimentKind::MomErrorGrid => "MomErrorGrid",
            ExperimentKind::BiasVarianceTradeoff => "BiasVarianceTradeoff",
            ExperimentKind::DeltaCrit => "DeltaCrit",
            ExperimentKind::NonGaussMC => "NonGaussMC",
            ExperimentKind::MomVsMle => "MomVsMle",
            ExperimentKind::TwoParamRescue => "TwoParamRescue",
            ExperimentKind::MixedState => "MixedState",
        }
    }

    /// Lowercase snake-case stem used for output file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            ExperimentKind::SqueezeSweep => "squeeze_sweep",
            ExperimentKind::MomErrorGrid => "mom_error_grid",
            ExperimentKind::BiasVarianceTradeoff => "bias_variance_tradeoff",
            ExperimentKind::DeltaCrit => "delta_crit",
            ExperimentKind::NonGaussMC => "non_gauss_mc",
            ExperimentKind::MomVsMle => "mom_vs_mle",
            ExperimentKind::TwoParamRescue => "two_param_rescue",
            ExperimentKind::MixedState => "mixed_state",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts `MomErrorGrid`, `mom_error_grid` and `mom-error-grid`.
impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name().to_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format '{s}' (csv|json)"))),
        }
    }
}

/// Inclusive, equispaced range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

/// A scalar, an explicit list or a `{start, stop, count}` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Single(f64),
    List(Vec<f64>),
    Range(RangeSpec),
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Single(x) => vec![*x],
            Grid::List(v) => v.clone(),
            Grid::Range(r) => match r.count {
                0 => return Err(Error::Config("range count must be >= 1".into())),
                1 => vec![r.start],
                n => crate::optimize::linspace(r.start, r.stop, n),
            },
        };
        if v.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("grid value {x} is not finite")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// One experiment run. Absent optional fields are filled by [`ExperimentConfig::resolve`]
/// so that the echoed config is complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub scheme: SchemeKind,
    #[serde(default = "default_n_atoms")]
    pub n_atoms: OneOrMany<usize>,
    /// Actual twisting strengths; mean `λ₀` for `MixedState`.
    #[serde(default)]
    pub lambda: Option<Grid>,
    /// Absolute assumed strengths (`MomErrorGrid`).
    #[serde(default)]
    pub lambda_assumed: Option<Grid>,
    /// Offsets `λ' - λ`.
    #[serde(default)]
    pub dlambda: Option<Grid>,
    /// Mixture spreads (`MixedState`).
    #[serde(default)]
    pub delta_lambda: Option<Grid>,
    /// Encoded phase. `MomErrorGrid` without a value uses `φ = Q(λ, λ)/√m`.
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub shots: Option<OneOrMany<u64>>,
    #[serde(default)]
    pub repeats: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub basis: Option<Basis>,
    /// Number of estimator strengths `λ_p` on `[0, λ]`.
    #[serde(default)]
    pub lambda_p_points: Option<usize>,
    #[serde(default)]
    pub thresholds: Option<Vec<ThresholdSpec>>,
    /// Quadrature nodes of the mixture.
    #[serde(default)]
    pub nodes: Option<usize>,
    /// Half-width of the λ search window of the two-parameter estimator,
    /// centred on the assumed value.
    #[serde(default)]
    pub lambda_window: Option<f64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_n_atoms() -> OneOrMany<usize> {
    OneOrMany::One(100)
}

/// Repeat counts at `m = 10^5`: 5 for OAT, 25 for TNT.
fn default_repeats(kind: ExperimentKind, scheme: SchemeKind) -> usize {
    match (kind, scheme) {
        (ExperimentKind::NonGaussMC, SchemeKind::Tnt) => 25,
        (ExperimentKind::NonGaussMC, _) => 5,
        (ExperimentKind::TwoParamRescue, _) => 500,
        _ => 1000,
    }
}

impl ExperimentConfig {
    /// Parses a JSON document, applying overrides before validation.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve()
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text, overrides)
    }

    /// Fills experiment-specific defaults and validates.
    pub fn resolve(mut self) -> Result<Self> {
        use ExperimentKind::*;
        let kind = self.experiment;
        if self.basis.is_none() {
            self.basis = Some(match (kind, self.scheme) {
                (NonGaussMC | MomVsMle, _) => Basis::X,
                (TwoParamRescue, SchemeKind::Tnt) => Basis::X,
                _ => Basis::Z,
            });
        }
        if self.phi.is_none() {
            self.phi = match kind {
                MomErrorGrid => None,
                BiasVarianceTradeoff => Some(0.001),
                MixedState => Some(0.0),
                _ => Some(0.02),
            };
        }
        if self.shots.is_none() {
            self.shots = Some(OneOrMany::One(match kind {
                NonGaussMC => 100_000,
                TwoParamRescue => 250,
                _ => 10_000,
            }));
        }
        if self.repeats.is_none() {
            self.repeats = Some(default_repeats(kind, self.scheme));
        }
        if kind == BiasVarianceTradeoff && self.lambda_p_points.is_none() {
            self.lambda_p_points = Some(21);
        }
        if kind == MixedState && self.nodes.is_none() {
            self.nodes = Some(crate::mixedstate::DEFAULT_NODES);
        }
        if kind == DeltaCrit && self.thresholds.is_none() {
            let relative = [2.0, 4.0, 6.0, 8.0].map(|factor| ThresholdSpec {
                mode: ThresholdMode::RelativeToUnbiased,
                factor,
            });
            // fractions of the unentangled error, which is 1 in these units
            let shot_noise = [1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0].map(|factor| ThresholdSpec {
                mode: ThresholdMode::RelativeToShotNoise,
                factor,
            });
            self.thresholds = Some(relative.into_iter().chain(shot_noise).collect());
        }
        if kind == TwoParamRescue && self.lambda_window.is_none() {
            self.lambda_window = Some(0.02);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let kind = self.experiment;
        let need = |field: &str, present: bool| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!("{kind} requires '{field}'")))
            }
        };
        let forbid = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::Config(format!("'{field}' is not used by {kind}")))
            } else {
                Ok(())
            }
        };
        let n = self.n_atoms.to_vec();
        if n.is_empty() || n.contains(&0) {
            return Err(Error::Config("n_atoms must be >= 1".into()));
        }
        if kind != DeltaCrit && n.len() != 1 {
            return Err(Error::Config(format!("{kind} takes a single n_atoms")));
        }
        let shots = self.shots();
        if shots.is_empty() || shots.contains(&0) {
            return Err(Error::Config("shots must be >= 1".into()));
        }
        if kind != BiasVarianceTradeoff && shots.len() != 1 {
            return Err(Error::Config(format!("{kind} takes a single shots value")));
        }
        match kind {
            DeltaCrit => {
                need(
                    "scheme = OatSqueezed",
                    self.scheme == SchemeKind::OatSqueezed,
                )?;
                forbid("lambda", self.lambda.is_some())?;
                if self.thresholds().iter().any(|t| !(t.factor > 0.0)) {
                    return Err(Error::Config("threshold factors must be > 0".into()));
                }
            }
            _ => need("lambda", self.lambda.is_some())?,
        }
        if let Some(g) = &self.lambda {
            if g.values()?.iter().any(|&l| l < 0.0) {
                return Err(Error::Config("lambda values must be >= 0".into()));
            }
        }
        need(
            "lambda_assumed",
            kind != MomErrorGrid || self.lambda_assumed.is_some(),
        )?;
        if kind != MomErrorGrid {
            forbid("lambda_assumed", self.lambda_assumed.is_some())?;
        }
        need(
            "dlambda",
            !matches!(kind, NonGaussMC | MomVsMle | TwoParamRescue) || self.dlambda.is_some(),
        )?;
        need(
            "delta_lambda",
            kind != MixedState || self.delta_lambda.is_some(),
        )?;
        if let Some(g) = &self.lambda_assumed {
            if g.values()?.iter().any(|&l| l < 0.0) {
                return Err(Error::Config("lambda_assumed values must be >= 0".into()));
            }
        }
        if let Some(g) = &self.delta_lambda {
            if g.values()?.iter().any(|&l| l < 0.0) {
                return Err(Error::Config("delta_lambda values must be >= 0".into()));
            }
        }
        if let Some(g) = &self.dlambda {
            g.values()?;
        }
        let r = self.repeats();
        let mc = matches!(kind, NonGaussMC | TwoParamRescue | BiasVarianceTradeoff);
        if (mc && r < 2) || (kind == MomErrorGrid && r == 1) {
            return Err(Error::Config(format!("{kind} needs repeats >= 2, got {r}")));
        }
        if let Some(p) = self.phi {
            if !p.is_finite() || p.abs() > std::f64::consts::FRAC_PI_2 {
                return Err(Error::Config(format!(
                    "phi must lie in [-pi/2, pi/2], got {p}"
                )));
            }
        }
        if kind == BiasVarianceTradeoff && self.lambda_p_points.unwrap_or(0) < 2 {
            return Err(Error::Config("lambda_p_points must be >= 2".into()));
        }
        if kind == MixedState && self.nodes.unwrap_or(0) == 0 {
            return Err(Error::Config("nodes must be >= 1".into()));
        }
        if let Some(w) = self.lambda_window {
            if !(w > 0.0) {
                return Err(Error::Config("lambda_window must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms.to_vec()[0]
    }

    pub fn n_atoms_list(&self) -> Vec<usize> {
        self.n_atoms.to_vec()
    }

    pub fn shots(&self) -> Vec<u64> {
        self.shots
            .as_ref()
            .map(OneOrMany::to_vec)
            .unwrap_or_default()
    }

    pub fn repeats(&self) -> usize {
        self.repeats.unwrap_or(0)
    }

    pub fn basis(&self) -> Basis {
        self.basis.unwrap_or(Basis::Z)
    }

    pub fn thresholds(&self) -> Vec<ThresholdSpec> {
        self.thresholds.clone().unwrap_or_default()
    }

    pub(crate) fn grid(g: &Option<Grid>) -> Result<Vec<f64>> {
        g.as_ref().map(Grid::values).unwrap_or(Ok(Vec::new()))
    }

    /// SHA-256 of the canonical JSON of everything except `out` and `format`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Value::Object(map) = &mut v {
            map.remove("out");
            map.remove("format");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, else taken as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!(
            "override '{assignment}' has an empty key"
        )));
    }
    let value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = cur else {
            return Err(Error::Config(format!(
                "override '{key}': '{part}' is not inside an object"
            )));
        };
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str =
        r#"{"experiment": "SqueezeSweep", "scheme": "TatSqueezed", "lambda": [0.01, 0.02]}"#;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"experiment": "SqueezeSweep", "scheme": "TatSqueezed", "lambda": 0.01, "lamda": 1}"#;
        assert!(matches!(
            ExperimentConfig::from_json_str(text, &[]),
            Err(Error::Config(_))
        ));
        let bad_range = r#"{"experiment": "SqueezeSweep", "scheme": "TatSqueezed",
            "lambda": {"start": 0, "stop": 1, "count": 3, "step": 2}}"#;
        assert!(ExperimentConfig::from_json_str(bad_range, &[]).is_err());
    }

    #[test]
    fn overrides_replace_and_nest() {
        let cfg = ExperimentConfig::from_json_str(
            BASE,
            &[
                "n_atoms=40".into(),
                "lambda={\"start\":0.0,\"stop\":0.1,\"count\":11}".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.n_atoms(), 40);
        let v = ExperimentConfig::grid(&cfg.lambda).unwrap();
        assert_eq!(v.len(), 11);
        assert!((v[10] - 0.1).abs() < 1e-15);
        let mut raw = serde_json::json!({});
        apply_override(&mut raw, "a.b=x").unwrap();
        assert_eq!(raw["a"]["b"], "x");
        assert!(apply_override(&mut raw, "novalue").is_err());
    }

    #[test]
    fn defaults_are_filled_per_experiment() {
        let text = r#"{"experiment": "NonGaussMC", "scheme": "Tnt", "lambda": 0.08, "dlambda": [-0.0015, 0.0015]}"#;
        let cfg = ExperimentConfig::from_json_str(text, &[]).unwrap();
        assert_eq!(cfg.repeats(), 25);
        assert_eq!(cfg.shots(), vec![100_000]);
        assert_eq!(cfg.basis(), Basis::X);
        assert_eq!(cfg.phi, Some(0.02));
    }

    #[test]
    fn missing_fields_are_config_errors() {
        let text = r#"{"experiment": "MomErrorGrid", "scheme": "TatSqueezed", "lambda": 0.02}"#;
        assert!(matches!(
            ExperimentConfig::from_json_str(text, &[]),
            Err(Error::Config(_))
        ));
        let text = r#"{"experiment": "DeltaCrit", "scheme": "TatSqueezed", "n_atoms": [1000]}"#;
        assert!(ExperimentConfig::from_json_str(text, &[]).is_err());
        let text = r#"{"experiment": "SqueezeSweep", "scheme": "TatSqueezed", "lambda": [-0.1]}"#;
        assert!(ExperimentConfig::from_json_str(text, &[]).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::from_json_str(BASE, &[]).unwrap();
        let b =
            ExperimentConfig::from_json_str(BASE, &["out=elsewhere".into(), "format=json".into()])
                .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_json_str(BASE, &["master_seed=7".into()]).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn experiment_names_parse_loosely() {
        assert_eq!(
            "mom-error-grid".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::MomErrorGrid
        );
        assert_eq!(
            "NonGaussMC".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::NonGaussMC
        );
        assert!("nope".parse::<ExperimentKind>().is_err());
    }
}
