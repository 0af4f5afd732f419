//! Experiment configuration: TOML documents, dotted-path overrides and the
//! built-in presets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::comparators::{self, GridSpec, LuenbergerGain};
use crate::error::{Error, Result};
use crate::hints::{self, HintProvider, LuenbergerHint, PolynomialHint};
use crate::lds::{self, NoiseKind, NoiseModel, SpectrumTag, SystemSpec, DEFAULT_FREQ_V, DEFAULT_FREQ_W};
use crate::matkit::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemConfig,
    pub noise: NoiseModel,
    pub horizon: usize,
    pub memory: usize,
    pub lambda: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub predictors: Vec<PredictorConfig>,
    #[serde(default)]
    pub comparator: ComparatorConfig,
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Builtin {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
    Inline {
        name: String,
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        jordan_r: usize,
        kappa_a: f64,
        spectrum_tag: SpectrumTag,
    },
}

impl SystemConfig {
    pub fn builtin(name: &str) -> Self {
        SystemConfig::Builtin {
            name: name.into(),
            theta: None,
        }
    }

    pub fn resolve(&self) -> Result<SystemSpec> {
        match self {
            SystemConfig::Builtin { name, theta } => match (name.as_str(), theta) {
                ("rotation_jordan", Some(th)) => Ok(lds::rotation_jordan(*th)),
                (_, Some(_)) => Err(Error::InvalidConfig(format!("system `{name}` takes no theta"))),
                (_, None) => lds::builtin_system(name),
            },
            SystemConfig::Inline {
                name,
                a,
                c,
                jordan_r,
                kappa_a,
                spectrum_tag,
            } => SystemSpec::new(
                name.clone(),
                mat_from_rows(a)?,
                mat_from_rows(c)?,
                *jordan_r,
                *kappa_a,
                *spectrum_tag,
            ),
        }
    }
}

fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidConfig(format!("matrix rows must be non-empty and equal length: {rows:?}")));
    }
    Mat::from_vec(rows.len(), cols, rows.concat())
}

/// A prediction method evaluated on the shared trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorConfig {
    /// FM-POLS with a hint; `memory` / `lambda` override the experiment defaults.
    Pols {
        label: String,
        hint: HintConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        memory: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    Kalman {
        label: String,
    },
    Hinf {
        label: String,
        #[serde(default = "default_level")]
        level: f64,
    },
    FixedGain {
        label: String,
        gain: Vec<Vec<f64>>,
    },
}

fn default_level() -> f64 {
    1.0
}

impl PredictorConfig {
    pub fn label(&self) -> &str {
        match self {
            PredictorConfig::Pols { label, .. }
            | PredictorConfig::Kalman { label }
            | PredictorConfig::Hinf { label, .. }
            | PredictorConfig::FixedGain { label, .. } => label,
        }
    }

    fn pols(label: &str, hint: HintConfig) -> Self {
        PredictorConfig::Pols {
            label: label.into(),
            hint,
            memory: None,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HintConfig {
    /// Observer hint; either an explicit gain or a target decay placed by pole assignment.
    Luenberger {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<Vec<Vec<f64>>>,
    },
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `(z² − 1)^order`.
    Diff {
        order: usize,
    },
    /// `ỹ_t = y_{t−lag}`.
    Lag {
        lag: usize,
    },
    /// Monic polynomial with the given roots, written as `[re, im]` pairs.
    CayleyHamilton {
        roots: Vec<[f64; 2]>,
    },
    /// `(z² − 2cosθ z + 1)^order`.
    OracleComplex {
        theta: f64,
        order: usize,
    },
    Zero,
    SelfConsistent,
}

impl HintConfig {
    fn luenberger(gamma: f64) -> Self {
        HintConfig::Luenberger {
            gamma: Some(gamma),
            gain: None,
        }
    }

    /// Polynomial coefficients, for the polynomial families.
    pub fn coeffs(&self) -> Result<Option<Vec<f64>>> {
        Ok(match self {
            HintConfig::Polynomial { coeffs } => Some(coeffs.clone()),
            HintConfig::Diff { order } => Some(hints::diff_coeffs(*order)),
            HintConfig::Lag { lag } => {
                if *lag == 0 {
                    return Err(Error::InvalidConfig("lag must be at least 1".into()));
                }
                Some(hints::lag_coeffs(*lag))
            }
            HintConfig::CayleyHamilton { roots } => {
                let roots: Vec<Complex64> = roots.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
                Some(hints::cayley_hamilton_coeffs(&roots)?)
            }
            HintConfig::OracleComplex { theta, order } => Some(hints::oracle_complex_coeffs(*theta, *order)?),
            _ => None,
        })
    }

    /// The observer gain, designed if only a decay target is given.
    pub fn luenberger_gain(&self, sys: &SystemSpec) -> Result<Option<LuenbergerGain>> {
        match self {
            HintConfig::Luenberger { gamma: _, gain: Some(rows) } => {
                let l = mat_from_rows(rows)?;
                let rho = crate::matkit::spectral_radius(&sys.a.sub(&l.matmul(&sys.c)))?;
                let gamma = (1.0 - rho).clamp(1e-6, 1.0);
                Ok(Some(comparators::fit_certificate(sys, &l, gamma)))
            }
            HintConfig::Luenberger { gamma: Some(g), gain: None } => Ok(Some(comparators::design_gain(sys, *g)?)),
            HintConfig::Luenberger { gamma: None, gain: None } => Err(Error::InvalidConfig(
                "luenberger hint needs `gamma` or `gain`".into(),
            )),
            _ => Ok(None),
        }
    }

    /// Fresh provider for one trial.
    pub fn build(&self, sys: &SystemSpec, gain: Option<&LuenbergerGain>) -> Result<HintProvider> {
        if let Some(coeffs) = self.coeffs()? {
            return Ok(HintProvider::Polynomial(PolynomialHint::new(coeffs)?));
        }
        Ok(match self {
            HintConfig::Luenberger { .. } => {
                let g = gain.ok_or_else(|| Error::InvalidConfig("luenberger hint gain not resolved".into()))?;
                HintProvider::Luenberger(LuenbergerHint::new(sys, g.l.clone())?)
            }
            HintConfig::Zero => HintProvider::Zero,
            HintConfig::SelfConsistent => HintProvider::SelfConsistent,
            _ => unreachable!("polynomial families handled above"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComparatorConfig {
    /// Running best-in-hindsight Luenberger gain over a lattice.
    Grid {
        #[serde(flatten)]
        grid: GridSpec,
    },
    Kalman,
    Hinf {
        #[serde(default = "default_level")]
        level: f64,
    },
    FixedGain {
        gain: Vec<Vec<f64>>,
    },
    #[default]
    None,
}

impl ComparatorConfig {
    pub fn is_none(&self) -> bool {
        matches!(self, ComparatorConfig::None)
    }

    pub fn label(&self) -> &'static str {
        match self {
            ComparatorConfig::Grid { .. } => "grid",
            ComparatorConfig::Kalman => "kalman",
            ComparatorConfig::Hinf { .. } => "hinf",
            ComparatorConfig::FixedGain { .. } => "fixed_gain",
            ComparatorConfig::None => "none",
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.memory == 0 {
            return bad("memory must be at least 1".into());
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.predictors.is_empty() {
            return bad("at least one predictor is required".into());
        }
        let mut labels: Vec<&str> = self.predictors.iter().map(PredictorConfig::label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("predictor labels must be unique".into());
        }
        for p in &self.predictors {
            let label = p.label();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
                return bad(format!("predictor label `{label}` must be a non-empty [A-Za-z0-9_.-] string"));
            }
            if let PredictorConfig::Pols { memory, lambda, .. } = p {
                if *memory == Some(0) {
                    return bad(format!("{label}: memory must be at least 1"));
                }
                if lambda.is_some_and(|l| !(l > 0.0)) {
                    return bad(format!("{label}: lambda must be positive"));
                }
            }
        }
        let sys = self.system.resolve()?;
        self.noise.check_dims(sys.n(), sys.p())?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Applies `key=value` overrides with dotted paths (`predictors.0.memory=10`).
    ///
    /// Values are parsed as TOML literals, falling back to bare strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Value::try_from(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for ov in overrides {
            let ov = ov.as_ref();
            let (path, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{ov}` is not key=value")))?;
            set_path(&mut doc, path.trim(), parse_literal(raw.trim()))?;
        }
        let cfg: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let missing = || Error::InvalidConfig(format!("override path `{path}` not found at `{key}`"));
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert((*key).to_string(), value);
                    return Ok(());
                }
                if !t.contains_key(*key) {
                    t.insert((*key).to_string(), toml::Value::Table(toml::Table::new()));
                }
                t.get_mut(*key).ok_or_else(missing)?
            }
            toml::Value::Array(a) => {
                let idx: usize = key.parse().map_err(|_| missing())?;
                let slot = a.get_mut(idx).ok_or_else(missing)?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(missing()),
        };
    }
    Err(Error::InvalidConfig(format!("empty override path `{path}`")))
}

pub const PRESETS: &[&str] = &[
    "exp1",
    "exp2",
    "exp3_H",
    "exp3_lambda",
    "expA1",
    "expA2",
    "expA3",
];

fn nonstochastic(n: usize, p: usize, c_w: f64, c_v: f64) -> NoiseModel {
    let mut m = NoiseModel::zero(n, p);
    m.uniform_w = c_w;
    m.uniform_v = c_v;
    m
}

fn gaussian(n: usize, p: usize, c_w: f64, c_v: f64) -> NoiseModel {
    let mut m = nonstochastic(n, p, c_w, c_v);
    m.kind = NoiseKind::Gaussian;
    m
}

fn exp1_base() -> ExperimentConfig {
    let mut noise = nonstochastic(2, 1, 0.3, 0.3);
    noise.bias_w = vec![0.0, 0.01];
    noise.amp_w = vec![0.01, 0.01];
    noise.amp_v = vec![0.01];
    ExperimentConfig {
        name: "exp1".into(),
        system: SystemConfig::builtin("double_integrator"),
        noise,
        horizon: 2000,
        memory: 15,
        lambda: 1.0,
        trials: 1,
        seed: 1,
        predictors: vec![
            PredictorConfig::pols("ols", HintConfig::SelfConsistent),
            PredictorConfig::pols(
                "cayley_hamilton",
                HintConfig::CayleyHamilton {
                    roots: vec![[1.0, 0.0], [1.0, 0.0]],
                },
            ),
            PredictorConfig::pols("luenberger_g03", HintConfig::luenberger(0.3)),
            PredictorConfig::pols("luenberger_g08", HintConfig::luenberger(0.8)),
        ],
        comparator: ComparatorConfig::Grid {
            grid: GridSpec::default(),
        },
    }
}

fn sweep(name: &str, base: ExperimentConfig, values: &[f64], memory_sweep: bool) -> ExperimentConfig {
    let predictors = values
        .iter()
        .map(|v| {
            let (label, memory, lambda) = if memory_sweep {
                (format!("H{}", *v as usize), Some(*v as usize), None)
            } else {
                (format!("lambda{v}"), None, Some(*v))
            };
            PredictorConfig::Pols {
                label,
                hint: HintConfig::luenberger(0.8),
                memory,
                lambda,
            }
        })
        .collect();
    ExperimentConfig {
        name: name.into(),
        predictors,
        ..base
    }
}

/// Built-in experiment setups.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "exp1" => Ok(exp1_base()),
        "exp2" => {
            let mut noise = nonstochastic(2, 1, 0.01, 0.01);
            noise.bias_w = vec![0.1, 0.1];
            noise.amp_w = vec![0.1, 0.1];
            noise.bias_v = vec![0.1];
            noise.amp_v = vec![0.1];
            Ok(ExperimentConfig {
                name: "exp2".into(),
                system: SystemConfig::builtin("symmetric_swap"),
                noise,
                horizon: 2000,
                memory: 8,
                lambda: 1.0,
                trials: 1,
                seed: 2,
                predictors: vec![
                    PredictorConfig::pols("luenberger", HintConfig::luenberger(0.5)),
                    PredictorConfig::pols("two_lag", HintConfig::Lag { lag: 2 }),
                    PredictorConfig::Kalman { label: "kalman".into() },
                    PredictorConfig::Hinf {
                        label: "hinf".into(),
                        level: 1.0,
                    },
                ],
                comparator: ComparatorConfig::None,
            })
        }
        "exp3_H" => Ok(sweep("exp3_H", exp1_base(), &[5.0, 10.0, 15.0, 20.0], true)),
        "exp3_lambda" => Ok(sweep("exp3_lambda", exp1_base(), &[0.01, 0.1, 1.0, 10.0], false)),
        "expA1" => Ok(ExperimentConfig {
            name: "expA1".into(),
            system: SystemConfig::builtin("double_integrator"),
            noise: gaussian(2, 1, 0.2, 0.05),
            horizon: 5000,
            memory: 15,
            lambda: 1.0,
            trials: 50,
            seed: 11,
            predictors: vec![
                PredictorConfig::pols("ols", HintConfig::SelfConsistent),
                PredictorConfig::pols(
                    "cayley_hamilton",
                    HintConfig::CayleyHamilton {
                        roots: vec![[1.0, 0.0], [1.0, 0.0]],
                    },
                ),
                PredictorConfig::pols("luenberger_g025", HintConfig::luenberger(0.25)),
                PredictorConfig::pols("luenberger_g065", HintConfig::luenberger(0.65)),
            ],
            comparator: ComparatorConfig::Kalman,
        }),
        "expA2" => Ok(ExperimentConfig {
            name: "expA2".into(),
            system: SystemConfig::builtin("jordan3"),
            noise: gaussian(3, 1, 0.02, 0.01),
            horizon: 2000,
            memory: 12,
            lambda: 1.0,
            trials: 50,
            seed: 12,
            predictors: vec![
                PredictorConfig::pols("luenberger", HintConfig::luenberger(0.5)),
                PredictorConfig::pols(
                    "cayley_hamilton",
                    HintConfig::CayleyHamilton {
                        roots: vec![[1.0, 0.0]; 3],
                    },
                ),
                PredictorConfig::pols("three_diff", HintConfig::Diff { order: 3 }),
            ],
            comparator: ComparatorConfig::Kalman,
        }),
        "expA3" => Ok(ExperimentConfig {
            name: "expA3".into(),
            system: SystemConfig::Builtin {
                name: "rotation_jordan".into(),
                theta: Some(lds::ROTATION_THETA),
            },
            noise: nonstochastic(4, 1, 0.1, 0.1),
            horizon: 2000,
            memory: 12,
            lambda: 1.0,
            trials: 1,
            seed: 13,
            predictors: vec![
                PredictorConfig::pols("luenberger", HintConfig::luenberger(0.5)),
                PredictorConfig::pols(
                    "oracle",
                    HintConfig::OracleComplex {
                        theta: lds::ROTATION_THETA,
                        order: 2,
                    },
                ),
                PredictorConfig::pols("two_lag", HintConfig::Lag { lag: 2 }),
                PredictorConfig::pols("four_lag", HintConfig::Lag { lag: 4 }),
            ],
            comparator: ComparatorConfig::None,
        }),
        other => Err(Error::UnknownPreset(other.into())),
    }
}

/// Whether the sinusoid frequencies in use are the library defaults rather than stated values.
pub fn uses_default_frequencies(noise: &NoiseModel) -> bool {
    let has_sine = noise.amp_w.iter().chain(&noise.amp_v).any(|a| *a != 0.0);
    has_sine && noise.freq_w == DEFAULT_FREQ_W && noise.freq_v == DEFAULT_FREQ_V
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            let back = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn preset_facts() {
        assert_eq!(preset("exp2").unwrap().memory, 8);
        let a2 = preset("expA2").unwrap();
        let has_diff3 = a2.predictors.iter().any(|p| match p {
            PredictorConfig::Pols { hint, .. } => {
                hint.coeffs().unwrap() == Some(vec![1.0, 0.0, -3.0, 0.0, 3.0, 0.0, -1.0])
            }
            _ => false,
        });
        assert!(has_diff3);
        let sys = preset("expA3").unwrap().system.resolve().unwrap();
        let eig = crate::matkit::eigenvalues_small(&sys.a).unwrap();
        for z in eig.values {
            assert!((z.norm() - 1.0).abs() < 1e-6);
            assert!((z.arg().abs() - 0.7).abs() < 1e-6);
        }
        assert_eq!(sys.jordan_r, 2);
    }

    #[test]
    fn overrides() {
        let cfg = preset("exp1").unwrap();
        let o = cfg
            .with_overrides(&["horizon=50", "predictors.3.hint.gamma=0.5", "comparator.steps=5", "name=x"])
            .unwrap();
        assert_eq!(o.horizon, 50);
        assert_eq!(o.name, "x");
        match &o.predictors[3] {
            PredictorConfig::Pols { hint, .. } => assert_eq!(*hint, HintConfig::luenberger(0.5)),
            _ => panic!(),
        }
        match &o.comparator {
            ComparatorConfig::Grid { grid } => assert_eq!(grid.steps, 5),
            _ => panic!(),
        }
        assert!(cfg.with_overrides(&["bogus=1"]).is_err());
        assert!(cfg.with_overrides(&["horizon=0"]).is_err());
        assert!(cfg.with_overrides(&["predictors.9.label=a"]).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = preset("exp2").unwrap().to_toml_string().unwrap();
        text = text.replacen("horizon = 2000", "horizon = 2000\nhorizn = 3", 1);
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }
}
