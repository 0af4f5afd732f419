//! Experiment runner: simulates trajectories, drives every configured
//! predictor through the predict/reveal/commit protocol, scores them against
//! the comparator, and writes CSV tables plus a text summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::analysis::{self, BoundInputs, ResidualKind};
use crate::comparators::{self, GridSpec, LuenbergerGain};
use crate::config::{self, ComparatorConfig, ExperimentConfig, HintConfig, PredictorConfig};
use crate::error::{Error, Result};
use crate::hints::ResidualTrace;
use crate::lds::{self, NoiseKind, SpectrumTag, SystemSpec, Trajectory};
use crate::matkit::{self, Mat};
use crate::predictor::{build_feature, PolsState};

/// Per-trial noise seed derived from the master seed (splitmix64 finalizer).
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hands out `y_t` only after a prediction for `t` has been submitted.
#[derive(Debug)]
pub struct SealedOutputs<'a> {
    outputs: &'a [Vec<f64>],
    revealed: usize,
    submitted: bool,
}

impl<'a> SealedOutputs<'a> {
    pub fn new(outputs: &'a [Vec<f64>]) -> Self {
        SealedOutputs {
            outputs,
            revealed: 0,
            submitted: false,
        }
    }

    /// `y_1..y_{t−1}` for the step `t` in progress.
    pub fn history(&self) -> &'a [Vec<f64>] {
        &self.outputs[..self.revealed]
    }

    /// Step index `t` awaiting a prediction.
    pub fn next_t(&self) -> usize {
        self.revealed + 1
    }

    pub fn submit(&mut self) {
        assert!(!self.submitted, "prediction for t = {} submitted twice", self.next_t());
        self.submitted = true;
    }

    /// Reveals `y_t`.
    ///
    /// # Panics
    /// If no prediction was submitted for `t` first.
    pub fn reveal(&mut self) -> &'a [f64] {
        assert!(self.submitted, "y_{} requested before the prediction was made", self.next_t());
        self.submitted = false;
        self.revealed += 1;
        &self.outputs[self.revealed - 1]
    }
}

#[derive(Debug, Clone)]
enum VariantKind {
    Pols {
        hint: HintConfig,
        hint_gain: Option<LuenbergerGain>,
        memory: usize,
        lambda: f64,
    },
    Fixed {
        gain: LuenbergerGain,
    },
}

#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    kind: VariantKind,
}

impl Variant {
    /// Gain of the observer hint or the fixed-gain predictor, if any.
    pub fn gain(&self) -> Option<&LuenbergerGain> {
        match &self.kind {
            VariantKind::Pols { hint_gain, .. } => hint_gain.as_ref(),
            VariantKind::Fixed { gain } => Some(gain),
        }
    }

    pub fn hint(&self) -> Option<&HintConfig> {
        match &self.kind {
            VariantKind::Pols { hint, .. } => Some(hint),
            VariantKind::Fixed { .. } => None,
        }
    }

    pub fn memory(&self) -> Option<usize> {
        match &self.kind {
            VariantKind::Pols { memory, .. } => Some(*memory),
            VariantKind::Fixed { .. } => None,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match &self.kind {
            VariantKind::Pols { lambda, .. } => Some(*lambda),
            VariantKind::Fixed { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
enum ComparatorPlan {
    Grid(GridSpec),
    Fixed(LuenbergerGain),
    None,
}

/// A validated configuration with every gain resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: SystemSpec,
    pub variants: Vec<Variant>,
    comparator: ComparatorPlan,
}

/// One predictor's per-step record within a trial.
#[derive(Debug, Clone)]
pub struct VariantTrace {
    pub label: String,
    pub predictions: Vec<Vec<f64>>,
    pub learner_losses: Vec<f64>,
    /// Running hint-residual maximum; absent for fixed-gain predictors.
    pub delta_max: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub y_norm: Vec<f64>,
    /// Per-step comparator losses; for the grid comparator these are the
    /// increments of the running best-in-hindsight cumulative loss.
    pub comparator_losses: Option<Vec<f64>>,
    /// `L*(T)` for the grid comparator, or the fixed comparator gain.
    pub comparator_gain: Option<Mat>,
    pub variants: Vec<VariantTrace>,
    pub wall_time: Duration,
}

impl TrialRecord {
    pub fn variant(&self, label: &str) -> Option<&VariantTrace> {
        self.variants.iter().find(|v| v.label == label)
    }

    /// Cumulative regret of a variant against the comparator.
    pub fn cumulative_regret(&self, variant: usize) -> Option<Vec<f64>> {
        let comp = self.comparator_losses.as_ref()?;
        let mut acc = 0.0;
        Some(
            self.variants[variant]
                .learner_losses
                .iter()
                .zip(comp)
                .map(|(l, c)| {
                    acc += l - c;
                    acc
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub experiment: Experiment,
    pub trials: Vec<TrialRecord>,
}

fn at_step(trial: usize, variant: &str, t: usize, source: Error) -> Error {
    Error::AtStep {
        trial,
        variant: variant.into(),
        t,
        source: Box::new(source),
    }
}

fn step_of(e: &Error) -> usize {
    match e {
        Error::Divergence { t } | Error::Overflow { t } => *t,
        _ => 0,
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let system = config.system.resolve()?;
        let (q, r) = comparators::rms_covariances(&config.noise);
        let fixed = |gain: &[Vec<f64>]| -> Result<LuenbergerGain> {
            let l = Mat::from_vec(gain.len(), gain.first().map_or(0, Vec::len), gain.concat())?;
            let rho = matkit::spectral_radius(&system.a.sub(&l.matmul(&system.c)))?;
            Ok(comparators::fit_certificate(&system, &l, (0.5 * (1.0 - rho)).clamp(1e-6, 1.0)))
        };
        let mut variants = Vec::with_capacity(config.predictors.len());
        for p in &config.predictors {
            let kind = match p {
                PredictorConfig::Pols {
                    hint,
                    memory,
                    lambda,
                    ..
                } => VariantKind::Pols {
                    hint_gain: hint.luenberger_gain(&system)?,
                    hint: hint.clone(),
                    memory: memory.unwrap_or(config.memory),
                    lambda: lambda.unwrap_or(config.lambda),
                },
                PredictorConfig::Kalman { .. } => VariantKind::Fixed {
                    gain: comparators::kalman_gain(&system, &q, &r)?,
                },
                PredictorConfig::Hinf { level, .. } => VariantKind::Fixed {
                    gain: comparators::hinf_gain(&system, &q, &r, *level)?,
                },
                PredictorConfig::FixedGain { gain, .. } => VariantKind::Fixed { gain: fixed(gain)? },
            };
            // Surface hint construction errors before any trial runs.
            if let VariantKind::Pols { hint, hint_gain, .. } = &kind {
                hint.build(&system, hint_gain.as_ref())?;
            }
            variants.push(Variant {
                label: p.label().to_string(),
                kind,
            });
        }
        let comparator = match &config.comparator {
            ComparatorConfig::Grid { grid } => ComparatorPlan::Grid(grid.clone()),
            ComparatorConfig::Kalman => ComparatorPlan::Fixed(comparators::kalman_gain(&system, &q, &r)?),
            ComparatorConfig::Hinf { level } => ComparatorPlan::Fixed(comparators::hinf_gain(&system, &q, &r, *level)?),
            ComparatorConfig::FixedGain { gain } => ComparatorPlan::Fixed(fixed(gain)?),
            ComparatorConfig::None => ComparatorPlan::None,
        };
        Ok(Experiment {
            config,
            system,
            variants,
            comparator,
        })
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        Experiment::new(config::preset(name)?)
    }

    pub fn has_comparator(&self) -> bool {
        !matches!(self.comparator, ComparatorPlan::None)
    }

    /// Gain of a fixed comparator (Kalman, H∞ or explicit).
    pub fn comparator_gain(&self) -> Option<&LuenbergerGain> {
        match &self.comparator {
            ComparatorPlan::Fixed(g) => Some(g),
            _ => None,
        }
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.comparator {
            ComparatorPlan::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// All trials, in parallel, ordered by trial index.
    pub fn run(&self) -> Result<RunRecord> {
        let trials = (0..self.config.trials)
            .into_par_iter()
            .map(|k| self.run_trial(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunRecord {
            experiment: self.clone(),
            trials,
        })
    }

    pub fn simulate_trial(&self, trial: usize) -> Result<Trajectory> {
        let seed = trial_seed(self.config.seed, trial);
        let noise = self.config.noise.clone().with_seed(seed);
        lds::simulate(&self.system, &noise, self.config.horizon).map_err(|e| at_step(trial, "simulate", step_of(&e), e))
    }

    pub fn run_trial(&self, trial: usize) -> Result<TrialRecord> {
        let start = Instant::now();
        let seed = trial_seed(self.config.seed, trial);
        let trajectory = self.simulate_trial(trial)?;
        let outputs = &trajectory.outputs;
        let y_norm = outputs.iter().map(|y| matkit::norm(y)).collect();
        let (comparator_losses, comparator_gain) = match &self.comparator {
            ComparatorPlan::Grid(grid) => {
                let res = comparators::best_in_hindsight(&self.system, grid, outputs)
                    .map_err(|e| at_step(trial, "comparator", step_of(&e), e))?;
                let last = res.best_gain(outputs.len()).l.clone();
                (Some(res.min_increments()), Some(last))
            }
            ComparatorPlan::Fixed(g) => {
                let preds = comparators::luenberger_rollout(&self.system, &g.l, outputs)
                    .map_err(|e| at_step(trial, "comparator", step_of(&e), e))?;
                (Some(comparators::rollout_losses(&preds, outputs)), Some(g.l.clone()))
            }
            ComparatorPlan::None => (None, None),
        };
        let variants = self
            .variants
            .par_iter()
            .map(|v| self.run_variant(v, trial, outputs))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialRecord {
            trial,
            seed,
            trajectory: trajectory.clone(),
            y_norm,
            comparator_losses,
            comparator_gain,
            variants,
            wall_time: start.elapsed(),
        })
    }

    fn run_variant(&self, v: &Variant, trial: usize, outputs: &[Vec<f64>]) -> Result<VariantTrace> {
        match &v.kind {
            VariantKind::Fixed { gain } => {
                let preds = comparators::luenberger_rollout(&self.system, &gain.l, outputs)
                    .map_err(|e| at_step(trial, &v.label, step_of(&e), e))?;
                Ok(VariantTrace {
                    label: v.label.clone(),
                    learner_losses: comparators::rollout_losses(&preds, outputs),
                    predictions: preds,
                    delta_max: None,
                })
            }
            VariantKind::Pols {
                hint,
                hint_gain,
                memory,
                lambda,
            } => {
                let p = self.system.p();
                let mut provider = hint.build(&self.system, hint_gain.as_ref())?;
                let mut state = PolsState::for_memory(p, *memory, *lambda)?;
                let mut sealed = SealedOutputs::new(outputs);
                let mut trace = ResidualTrace::default();
                let mut predictions = Vec::with_capacity(outputs.len());
                let mut losses = Vec::with_capacity(outputs.len());
                for _ in 0..outputs.len() {
                    let t = sealed.next_t();
                    let history = sealed.history();
                    let f = build_feature(history, t, *memory, p);
                    let h = provider.hint(history, &state, &f.z);
                    let (pred, staged) = state.step(&f.z, &h);
                    if pred.iter().any(|x| !x.is_finite()) {
                        return Err(at_step(trial, &v.label, t, Error::NonFinite("prediction")));
                    }
                    sealed.submit();
                    let y = sealed.reveal();
                    let e = matkit::sub_vec(&pred, y);
                    losses.push(matkit::dot(&e, &e));
                    trace.push(y, &h);
                    predictions.push(pred);
                    state = staged.commit(y);
                }
                Ok(VariantTrace {
                    label: v.label.clone(),
                    predictions,
                    learner_losses: losses,
                    delta_max: Some(trace.running_max),
                })
            }
        }
    }
}

/// Columns of one CSV file; `t` is written as an integer.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub t: Vec<usize>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn header(&self) -> String {
        std::iter::once("t")
            .chain(self.columns.iter().map(|(n, _)| n.as_str()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    /// Header line plus one line per `t`; floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for (i, t) in self.t.iter().enumerate() {
            write!(out, "{t}").expect("writing to String");
            for (_, col) in &self.columns {
                write!(out, ",{}", col[i]).expect("writing to String");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Writes a table to `path` (header only when there are no rows).
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    table.write(path)
}

fn running_sum(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

impl RunRecord {
    pub fn variant_index(&self, label: &str) -> Option<usize> {
        self.experiment.variants.iter().position(|v| v.label == label)
    }

    /// Per-step table of one variant in one trial.
    pub fn trial_table(&self, variant: usize, trial: usize) -> Table {
        let tr = &self.trials[trial];
        let v = &tr.variants[variant];
        let mut columns = vec![
            ("y_norm".to_string(), tr.y_norm.clone()),
            ("learner_loss".to_string(), v.learner_losses.clone()),
        ];
        if let Some(comp) = &tr.comparator_losses {
            columns.push(("comparator_loss".into(), comp.clone()));
            columns.push(("cum_regret".into(), tr.cumulative_regret(variant).expect("comparator present")));
        }
        if let Some(dm) = &v.delta_max {
            columns.push(("delta_max".into(), dm.clone()));
        }
        Table {
            t: (1..=tr.y_norm.len()).collect(),
            columns,
        }
    }

    /// Monte Carlo mean and sample standard deviation of every trial column.
    pub fn aggregate_table(&self, variant: usize) -> Table {
        let tables: Vec<Table> = (0..self.trials.len()).map(|k| self.trial_table(variant, k)).collect();
        let first = &tables[0];
        let n = tables.len() as f64;
        let mut columns = Vec::new();
        for (ci, (name, col)) in first.columns.iter().enumerate() {
            let mut mean = vec![0.0; col.len()];
            for tb in &tables {
                for (m, x) in mean.iter_mut().zip(&tb.columns[ci].1) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let std = (0..col.len())
                .map(|i| {
                    if tables.len() < 2 {
                        return 0.0;
                    }
                    let ss: f64 = tables.iter().map(|tb| (tb.columns[ci].1[i] - mean[i]).powi(2)).sum();
                    (ss / (n - 1.0)).sqrt()
                })
                .collect();
            columns.push((format!("{name}_mean"), mean));
            columns.push((format!("{name}_std"), std));
        }
        Table {
            t: first.t.clone(),
            columns,
        }
    }

    /// The table written for a variant: per-trial when there is one trial, aggregated otherwise.
    pub fn variant_table(&self, variant: usize) -> Table {
        if self.trials.len() == 1 {
            self.trial_table(variant, 0)
        } else {
            self.aggregate_table(variant)
        }
    }

    /// Writes `<name>_<label>.csv` (and per-trial files when trials > 1) plus `summary.txt`.
    pub fn emit(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir)?;
        let name = &self.experiment.config.name;
        let mut written = Vec::new();
        for (vi, v) in self.experiment.variants.iter().enumerate() {
            let path = out_dir.join(format!("{name}_{}.csv", v.label));
            emit_csv(&self.variant_table(vi), &path)?;
            written.push(path);
            if self.trials.len() > 1 {
                for k in 0..self.trials.len() {
                    let path = out_dir.join(format!("{name}_{}_trial{k}.csv", v.label));
                    emit_csv(&self.trial_table(vi, k), &path)?;
                    written.push(path);
                }
            }
        }
        let path = out_dir.join("summary.txt");
        std::fs::write(&path, self.summary())?;
        written.push(path);
        Ok(written)
    }

    /// Trial-averaged final values of a variant.
    pub fn variant_stats(&self, variant: usize) -> VariantStats {
        let table = self.variant_table(variant);
        let suffix = if self.trials.len() == 1 { "" } else { "_mean" };
        let col = |n: &str| table.column(&format!("{n}{suffix}")).map(<[f64]>::to_vec);
        let learner = col("learner_loss").unwrap_or_default();
        let cum_regret = col("cum_regret");
        let delta_max = col("delta_max");
        let t_min = 100.min(learner.len() / 20).max(1);
        VariantStats {
            cumulative_loss: running_sum(&learner).last().copied().unwrap_or(0.0),
            final_regret: cum_regret.as_ref().and_then(|c| c.last().copied()),
            delta_max: delta_max.as_ref().and_then(|d| d.last().copied()),
            regret_log_fit: cum_regret.as_ref().and_then(|c| analysis::log_fit(c, t_min).ok()),
            fit_t_min: t_min,
        }
    }

    /// Bound inputs for the nonstochastic case; `None` for Gaussian noise.
    pub fn bound_inputs(&self) -> Option<BoundInputs> {
        let cfg = &self.experiment.config;
        let (c_w, c_v) = cfg.noise.effective_bounds().ok()?;
        let mut b = BoundInputs::for_system(&self.experiment.system, c_w, c_v);
        b.lambda = cfg.lambda;
        b.memory = cfg.memory;
        b.horizon = cfg.horizon;
        if let Some(g) = self.experiment.grid() {
            b.kappa = g.kappa;
            b.gamma = g.gamma;
        }
        Some(b)
    }

    /// Residual bound matching a variant's hint, when one applies.
    pub fn residual_bound_for(&self, variant: usize) -> Option<(ResidualKind, f64)> {
        let mut b = self.bound_inputs()?;
        let v = &self.experiment.variants[variant];
        let sys = &self.experiment.system;
        let hint = v.hint()?;
        let kind = match hint {
            HintConfig::Luenberger { .. } => {
                let g = v.gain()?;
                if !g.certified {
                    return None;
                }
                b.kappa_tilde = g.kappa;
                b.gamma_tilde = g.gamma;
                ResidualKind::LuenbergerHint
            }
            HintConfig::Lag { lag: 2 } | HintConfig::Diff { order: 1 }
                if sys.spectrum_tag == SpectrumTag::RealDiagonalizable =>
            {
                ResidualKind::TwoLag
            }
            HintConfig::Diff { order } if *order == sys.jordan_r && sys.spectrum_tag != SpectrumTag::ComplexMarginal => {
                ResidualKind::HighOrderDiff
            }
            _ => return None,
        };
        Some((kind, analysis::residual_bound(kind, &b)))
    }

    /// Regret bound for a variant against the grid comparator, using its measured `Δ_max`.
    pub fn regret_bound_for(&self, variant: usize) -> Option<f64> {
        self.experiment.grid()?;
        let mut b = self.bound_inputs()?;
        let v = &self.experiment.variants[variant];
        b.memory = v.memory()?;
        b.lambda = v.lambda()?;
        b.delta_max = self.variant_stats(variant).delta_max?;
        Some(analysis::luenberger_regret_bound(&b))
    }

    pub fn summary(&self) -> String {
        let exp = &self.experiment;
        let cfg = &exp.config;
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "experiment: {}", cfg.name);
        let _ = writeln!(
            w,
            "system: {} (n = {}, p = {}, jordan r = {}, kappa_A = {})",
            exp.system.name,
            exp.system.n(),
            exp.system.p(),
            exp.system.jordan_r,
            exp.system.kappa_a
        );
        let _ = writeln!(
            w,
            "horizon T = {}, memory H = {}, lambda = {}, trials = {}, seed = {}",
            cfg.horizon, cfg.memory, cfg.lambda, cfg.trials, cfg.seed
        );
        let kind = match cfg.noise.kind {
            NoiseKind::Nonstochastic => "nonstochastic (uniform)",
            NoiseKind::Gaussian => "gaussian",
        };
        let _ = writeln!(w, "noise: {kind}, C_w = {}, C_v = {}", cfg.noise.uniform_w, cfg.noise.uniform_v);
        if config::uses_default_frequencies(&cfg.noise) {
            let _ = writeln!(
                w,
                "note: sinusoid frequencies freq_w = {}, freq_v = {} are library defaults",
                cfg.noise.freq_w, cfg.noise.freq_v
            );
        }
        let _ = writeln!(w, "comparator: {}", cfg.comparator.label());
        if let Some(g) = exp.grid() {
            let _ = writeln!(
                w,
                "  grid: [{}, {}] with {} points per entry, kappa = {}, gamma = {} (library defaults)",
                g.lo, g.hi, g.steps, g.kappa, g.gamma
            );
        }
        if let Some(g) = exp.comparator_gain() {
            let _ = writeln!(w, "  gain: {:?}", g.l.as_slice());
        }
        for tr in &self.trials {
            if let Some(l) = &tr.comparator_gain {
                if exp.grid().is_some() {
                    let _ = writeln!(w, "  trial {}: L*(T) = {:?}", tr.trial, l.as_slice());
                }
            }
        }
        let b = self.bound_inputs();
        if let Some(b) = &b {
            let _ = writeln!(
                w,
                "bounds: C_w = {}, C_v = {}, C_y = {}, C_trun = {}, C_pred = {}",
                b.c_w,
                b.c_v,
                b.c_y,
                b.c_trun(),
                b.c_pred()
            );
        } else {
            let _ = writeln!(w, "bounds: not evaluated (stochastic noise has no pathwise norm bound)");
        }
        for (vi, v) in exp.variants.iter().enumerate() {
            let st = self.variant_stats(vi);
            let _ = writeln!(w, "\n[{}]", v.label);
            match (v.hint(), v.gain()) {
                (Some(h), _) => {
                    let _ = writeln!(w, "  predictor: fm-pols, hint = {h:?}");
                    let _ = writeln!(w, "  memory = {}, lambda = {}", v.memory().unwrap_or(0), v.lambda().unwrap_or(0.0));
                }
                (None, _) => {
                    let _ = writeln!(w, "  predictor: fixed gain");
                }
            }
            if let Some(g) = v.gain() {
                let _ = writeln!(
                    w,
                    "  gain L = {:?}, kappa = {}, gamma = {}, certified = {}",
                    g.l.as_slice(),
                    g.kappa,
                    g.gamma,
                    g.certified
                );
            }
            let _ = writeln!(w, "  cumulative loss: {}", st.cumulative_loss);
            if let Some(r) = st.final_regret {
                let _ = writeln!(w, "  final regret: {r}");
            }
            if let Some(fit) = st.regret_log_fit {
                let _ = writeln!(
                    w,
                    "  regret vs log t (t >= {}): slope = {}, intercept = {}, R^2 = {}",
                    st.fit_t_min, fit.slope, fit.intercept, fit.r_squared
                );
            }
            if let Some(d) = st.delta_max {
                let _ = writeln!(w, "  delta_max: {d}");
                if let Some((kind, bound)) = self.residual_bound_for(vi) {
                    let _ = writeln!(w, "  residual bound ({kind:?}): {bound} [{}]", verdict(d <= bound));
                }
            }
            if let (Some(bound), Some(r)) = (self.regret_bound_for(vi), st.final_regret) {
                let _ = writeln!(w, "  regret bound: {bound} [{}]", verdict(r <= bound));
            }
        }
        let _ = writeln!(w);
        for tr in &self.trials {
            let _ = writeln!(
                w,
                "trial {}: seed = {}, wall time = {:.3} s",
                tr.trial,
                tr.seed,
                tr.wall_time.as_secs_f64()
            );
        }
        s
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "VIOLATED"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantStats {
    pub cumulative_loss: f64,
    pub final_regret: Option<f64>,
    pub delta_max: Option<f64>,
    pub regret_log_fit: Option<analysis::Fit>,
    pub fit_t_min: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str, horizon: usize) -> Experiment {
        let cfg = config::preset(name)
            .unwrap()
            .with_overrides(&[format!("horizon={horizon}")])
            .unwrap();
        Experiment::new(cfg).unwrap()
    }

    #[test]
    fn trial_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|k| trial_seed(7, k)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 100);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    #[test]
    #[should_panic(expected = "before the prediction")]
    fn sealed_outputs_refuse_early_reveal() {
        let ys = vec![vec![1.0]];
        let mut s = SealedOutputs::new(&ys);
        s.reveal();
    }

    #[test]
    fn sealed_outputs_protocol() {
        let ys = vec![vec![1.0], vec![2.0]];
        let mut s = SealedOutputs::new(&ys);
        assert!(s.history().is_empty());
        s.submit();
        assert_eq!(s.reveal(), &[1.0]);
        assert_eq!(s.history().len(), 1);
        assert_eq!(s.next_t(), 2);
    }

    #[test]
    fn csv_formatting() {
        let t = Table {
            t: vec![1],
            columns: ["y_norm", "learner_loss", "comparator_loss", "cum_regret", "delta_max"]
                .iter()
                .map(|n| (n.to_string(), vec![0.0]))
                .collect(),
        };
        assert_eq!(t.to_csv(), "t,y_norm,learner_loss,comparator_loss,cum_regret,delta_max\n1,0,0,0,0,0\n");
        let empty = Table {
            t: vec![],
            columns: vec![("y_norm".into(), vec![])],
        };
        assert_eq!(empty.to_csv(), "t,y_norm\n");
    }

    #[test]
    fn schema_without_comparator() {
        let rec = small("exp2", 30).run().unwrap();
        let h = rec.trial_table(1, 0).header();
        assert_eq!(h, "t,y_norm,learner_loss,delta_max");
        assert_eq!(rec.trial_table(2, 0).header(), "t,y_norm,learner_loss");
    }

    #[test]
    fn regret_column_matches_losses() {
        let rec = small("exp1", 60).run().unwrap();
        for vi in 0..rec.experiment.variants.len() {
            let tb = rec.trial_table(vi, 0);
            let l = tb.column("learner_loss").unwrap();
            let c = tb.column("comparator_loss").unwrap();
            let r = tb.column("cum_regret").unwrap();
            let mut acc = 0.0;
            for i in 0..l.len() {
                acc += l[i] - c[i];
                assert!((acc - r[i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mean_columns_match_trials() {
        let cfg = config::preset("expA1")
            .unwrap()
            .with_overrides(&["horizon=40", "trials=3"])
            .unwrap();
        let rec = Experiment::new(cfg).unwrap().run().unwrap();
        let agg = rec.aggregate_table(0);
        let m = agg.column("learner_loss_mean").unwrap();
        for i in 0..40 {
            let direct: f64 = (0..3).map(|k| rec.trials[k].variants[0].learner_losses[i]).sum::<f64>() / 3.0;
            assert!((direct - m[i]).abs() <= 1e-12);
        }
    }
}
