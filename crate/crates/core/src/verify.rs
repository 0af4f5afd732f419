//! Reproducibility checks: one function per acceptance criterion, each
//! returning a [`Check`] with a pass flag and a one-line diagnostic.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, BoundInputs, ResidualKind};
use crate::comparators::{self, GridSpec, TruncatedPredictor};
use crate::config;
use crate::error::Result;
use crate::experiment::{Experiment, RunRecord};
use crate::lds::{self, NoiseModel};
use crate::matkit::{self, Mat};
use crate::predictor::{build_feature, oracle, PolsState};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> Check {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail.push_str(&format!("; runtime {:.2} s exceeds {:.0} s", elapsed.as_secs_f64(), b.as_secs_f64()));
        }
    }
    Check {
        id,
        name,
        passed,
        detail,
        elapsed,
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
}

fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).max_abs_entry()
}

/// Self-consistent hints reproduce the OLS normal-equation iterates.
pub fn ols_recovery() -> Check {
    timed(1, "self-consistent hint recovers OLS", secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let d = rng.random_range(1..=6);
            let p = rng.random_range(1..=2);
            let lambda = rng.random_range(0.1..2.0);
            let mut state = PolsState::new(p, d, lambda)?;
            let mut zs = Vec::new();
            let mut ys = Vec::new();
            // direct oracle kept incrementally: G and B by summation, M by LU solve
            let mut g = Mat::identity(d).scale(lambda);
            let mut b = Mat::zeros(p, d);
            for _ in 0..200 {
                let z = random_vec(&mut rng, d, 1.0);
                let y = random_vec(&mut rng, p, 1.0);
                let hint = state.ols_predict(&z);
                let (_, staged) = state.step(&z, &hint);
                let direct = matkit::solve(&g, &b.transpose())?.transpose();
                worst = worst.max(max_abs_diff(staged.m_pols(), &direct));
                g.add_outer(1.0, &z, &z);
                b.add_outer(1.0, &y, &z);
                state = staged.commit(&y);
                zs.push(z);
                ys.push(y);
            }
            let last = oracle::ols_closed_form(lambda, &zs, &ys, p, d)?;
            worst = worst.max(max_abs_diff(state.predictor(), &last));
        }
        Ok((worst <= 1e-8, format!("max entrywise error {worst:.3e} (tol 1e-8)")))
    })
}

/// Trajectory of the Exp1 preset (first trial).
pub fn exp1_trajectory() -> Result<(Experiment, lds::Trajectory)> {
    let exp = Experiment::from_preset("exp1")?;
    let traj = exp.simulate_trial(0)?;
    Ok((exp, traj))
}

/// Recursive iterates agree with the closed form on the Exp1 stream.
pub fn recursion_vs_closed_form() -> Check {
    timed(2, "recursion matches closed form on Exp1 stream", secs(5), || {
        let (exp, traj) = exp1_trajectory()?;
        let sys = &exp.system;
        let (memory, lambda) = (exp.config.memory, exp.config.lambda);
        let p = sys.p();
        let d = p * memory;
        let gain = comparators::design_gain(sys, 0.8)?;
        let mut hint = crate::hints::LuenbergerHint::new(sys, gain.l)?;
        let ys = &traj.outputs;
        let mut state = PolsState::for_memory(p, memory, lambda)?;
        let mut normal = oracle::NormalEquations::new(p, d, lambda);
        let mut worst = 0.0_f64;
        for t in 1..=ys.len() {
            let z = build_feature(ys, t, memory, p).z;
            let h = hint.step(if t > 1 { Some(&ys[t - 2]) } else { None });
            let (_, staged) = state.step(&z, &h);
            let direct = normal.pols(&z, &h)?;
            worst = worst.max(staged.m_pols().sub(&direct).frobenius());
            normal.push(&z, &ys[t - 1]);
            state = staged.commit(&ys[t - 1]);
        }
        Ok((worst <= 1e-7, format!("max Frobenius error {worst:.3e} over T = {} (tol 1e-7)", ys.len())))
    })
}

/// Residual-scaled regret inequality and the elliptical-potential chain.
pub fn regret_inequality() -> Check {
    timed(3, "residual-scaled regret and elliptical potential", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut min_slack = f64::INFINITY;
        let mut min_chain = f64::INFINITY;
        for _ in 0..100 {
            let d = rng.random_range(1..=6);
            let p = rng.random_range(1..=2);
            let lambda = rng.random_range(0.05..3.0);
            let horizon = rng.random_range(20..=200);
            let z_scale = rng.random_range(0.1..5.0);
            let hint_noise = rng.random_range(0.0..1.0);
            let comparator = Mat::from_vec(p, d, random_vec(&mut rng, p * d, 2.0))?;
            let mut state = PolsState::new(p, d, lambda)?;
            let (mut learner, mut comp, mut delta_max, mut sum_z, mut potential) = (0.0, 0.0, 0.0_f64, 0.0, 0.0);
            let mut g = Mat::identity(d).scale(lambda);
            for _ in 0..horizon {
                let z = random_vec(&mut rng, d, z_scale);
                let y = random_vec(&mut rng, p, 1.0);
                let hint: Vec<f64> = y.iter().map(|v| v + rng.random_range(-hint_noise..=hint_noise)).collect();
                let (pred, staged) = state.step(&z, &hint);
                g.add_outer(1.0, &z, &z);
                potential += matkit::dot(&z, matkit::solve(&g, &Mat::column(&z))?.as_slice());
                let e = matkit::sub_vec(&pred, &y);
                learner += matkit::dot(&e, &e);
                let ec = matkit::sub_vec(&comparator.mul_vec(&z), &y);
                comp += matkit::dot(&ec, &ec);
                delta_max = delta_max.max(matkit::norm(&matkit::sub_vec(&y, &hint)));
                sum_z += matkit::dot(&z, &z);
                state = staged.commit(&y);
            }
            let bound = analysis::pols_regret_bound(lambda, comparator.frobenius().powi(2), delta_max, d, sum_z);
            min_slack = min_slack.min(bound - (learner - comp));
            let log_det = matkit::log_det_spd(&g)? - d as f64 * lambda.ln();
            let cap = d as f64 * (sum_z / (lambda * d as f64)).ln_1p();
            min_chain = min_chain.min((log_det - potential).min(cap - log_det + 1e-8));
        }
        let ok = min_slack >= -1e-6 && min_chain >= 0.0;
        Ok((ok, format!("min regret slack {min_slack:.3e}, min potential-chain slack {min_chain:.3e}")))
    })
}

fn random_diagonalizable(rng: &mut ChaCha8Rng, n: usize) -> Result<(Mat, f64)> {
    loop {
        let p = Mat::from_vec(n, n, random_vec(rng, n * n, 1.0))?;
        let Ok(p_inv) = matkit::inverse(&p) else { continue };
        let kappa = matkit::operator_norm(&p) * matkit::operator_norm(&p_inv);
        if kappa > 50.0 {
            continue;
        }
        let eig: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => 1.0,
                1 => -1.0,
                _ => rng.random_range(-0.95..=0.95),
            })
            .collect();
        return Ok((p.matmul(&Mat::diag(&eig)).matmul(&p_inv), kappa));
    }
}

/// Filtered sums of real-diagonalizable systems stay below `2nκ_A`.
pub fn filtered_sum_oracle() -> Check {
    timed(4, "filtered sum bound for real spectra", secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let swap = lds::symmetric_swap();
        let mut cases = vec![(swap.a.clone(), swap.kappa_a)];
        for _ in 0..20 {
            let n = rng.random_range(2..=4);
            cases.push(random_diagonalizable(&mut rng, n)?);
        }
        let mut worst_ratio = 0.0_f64;
        let mut worst_tail = 0.0_f64;
        for (a, kappa) in &cases {
            let s = analysis::filtered_jordan_sum(a, 1, 500);
            worst_ratio = worst_ratio.max(s.total() / (2.0 * a.rows() as f64 * kappa));
            worst_tail = worst_tail.max(s.last_increment);
        }
        let ok = worst_ratio <= 1.0 && worst_tail < analysis::JORDAN_TAIL_TOL;
        Ok((ok, format!("max sum/(2nκ_A) = {worst_ratio:.4}, max last increment {worst_tail:.3e}")))
    })
}

fn jordan_block(lambda: f64, r: usize) -> Mat {
    let mut j = Mat::identity(r).scale(lambda);
    for i in 0..r.saturating_sub(1) {
        j[(i, i + 1)] = 1.0;
    }
    j
}

/// `(J² − I)^r` vanishes on marginal Jordan blocks.
pub fn marginal_annihilation() -> Check {
    timed(5, "marginal Jordan blocks are annihilated", None, || {
        let mut worst = 0.0_f64;
        for r in 1..=3 {
            for lambda in [-1.0, 1.0] {
                let j = jordan_block(lambda, r);
                let f = j.matmul(&j).sub(&Mat::identity(r));
                let pw = (0..r).fold(Mat::identity(r), |acc, _| acc.matmul(&f));
                worst = worst.max(matkit::operator_norm(&pw));
            }
        }
        Ok((worst <= 1e-12, format!("max ‖(J²−I)^r‖ = {worst:.3e}")))
    })
}

/// Runs a preset and returns its record.
pub fn run_preset(name: &str) -> Result<RunRecord> {
    Experiment::from_preset(name)?.run()
}

/// Logarithmic regret and the observer-hint residual bound on Exp1.
pub fn exp1_reproduction() -> Check {
    timed(6, "Exp1 logarithmic regret", secs(60), || {
        let rec = run_preset("exp1")?;
        let vi = rec.variant_index("luenberger_g08").expect("preset variant");
        let regret = rec.trials[0].cumulative_regret(vi).expect("grid comparator");
        let fit = analysis::log_fit(&regret, 100)?;
        let dm = rec.variant_stats(vi).delta_max.unwrap_or(f64::INFINITY);
        let bound = rec.residual_bound_for(vi).map(|(_, b)| b).unwrap_or(f64::NAN);
        let ok = fit.r_squared >= 0.95 && dm <= bound;
        Ok((
            ok,
            format!(
                "R² = {:.4} (need ≥ 0.95), slope {:.3}; Δ_max = {dm:.4} vs bound {bound:.4}",
                fit.r_squared, fit.slope
            ),
        ))
    })
}

/// Two-lag residuals respect the real-spectrum bound at Exp2 amplitudes.
pub fn two_lag_bound() -> Check {
    timed(7, "two-lag residual bound on symmetric swap", secs(10), || {
        let cfg = config::preset("exp2")?;
        let sys = cfg.system.resolve()?;
        let (c_w, c_v) = cfg.noise.effective_bounds()?;
        let bound = analysis::residual_bound(ResidualKind::TwoLag, &BoundInputs::for_system(&sys, c_w, c_v));
        let coeffs = crate::hints::lag_coeffs(2);
        let mut worst = 0.0_f64;
        for seed in 0..20 {
            let traj = lds::simulate(&sys, &cfg.noise.clone().with_seed(seed), cfg.horizon)?;
            let dm = analysis::direct_residuals(&coeffs, &traj)
                .iter()
                .map(|d| matkit::norm(d))
                .fold(0.0, f64::max);
            worst = worst.max(dm);
        }
        Ok((worst <= bound, format!("max Δ_max {worst:.4} vs bound {bound:.4} over 20 seeds")))
    })
}

/// The three-term noise decomposition reproduces the direct residuals.
pub fn decomposition() -> Check {
    timed(8, "residual decomposition", None, || {
        let swap = lds::symmetric_swap();
        let exp2 = config::preset("exp2")?.noise.with_seed(8);
        let t1 = lds::simulate(&swap, &exp2, 500)?;
        let e1 = analysis::residual_decomposition_check(&swap, &crate::hints::lag_coeffs(2), &t1);
        let j3 = lds::jordan3();
        let t2 = lds::simulate(&j3, &NoiseModel::uniform(3, 1, 0.02, 0.01, 8), 500)?;
        let e2 = analysis::residual_decomposition_check(&j3, &crate::hints::diff_coeffs(3), &t2);
        let ok = e1 <= 1e-8 && e2 <= 1e-8;
        Ok((ok, format!("swap/2-lag {e1:.3e}, jordan3/3-diff {e2:.3e} (tol 1e-8)")))
    })
}

/// Pointwise truncation envelope and the comparator prediction-error bound.
pub fn truncation_and_prediction() -> Check {
    timed(9, "truncation and comparator error bounds", None, || {
        let (exp, traj) = exp1_trajectory()?;
        let sys = &exp.system;
        let ys = &traj.outputs;
        let grid = GridSpec::default();
        let certified: Vec<_> = grid
            .lattice(sys.n(), sys.p())?
            .into_iter()
            .map(|l| comparators::certify_gain(sys, &l, grid.kappa, grid.gamma))
            .filter(|g| g.certified)
            .collect();
        let step = (certified.len() / 10).max(1);
        let picks: Vec<_> = certified.iter().step_by(step).take(10).collect();
        let (c_w, c_v) = exp.config.noise.effective_bounds()?;
        let mut worst_trunc = 0.0_f64;
        let mut worst_pred = 0.0_f64;
        for g in &picks {
            let fitted = comparators::fit_certificate(sys, &g.l, g.gamma);
            let mut b = BoundInputs::for_system(sys, c_w, c_v);
            b.kappa = fitted.kappa;
            b.gamma = fitted.gamma;
            b.memory = exp.config.memory;
            let full = comparators::luenberger_rollout(sys, &g.l, ys)?;
            let trunc = TruncatedPredictor::new(sys, &g.l, exp.config.memory)?.predict_all(ys);
            for t in 1..=ys.len() {
                let gap = matkit::norm(&matkit::sub_vec(&full[t - 1], &trunc[t - 1]));
                worst_trunc = worst_trunc.max(gap / b.truncation_envelope(t));
                let err = matkit::norm(&matkit::sub_vec(&full[t - 1], &ys[t - 1]));
                worst_pred = worst_pred.max(err / b.c_pred());
            }
        }
        let ok = picks.len() == 10 && worst_trunc <= 1.0 && worst_pred <= 1.0;
        Ok((
            ok,
            format!(
                "{} gains; max truncation/envelope {worst_trunc:.3e}, max error/C_pred {worst_pred:.3e}",
                picks.len()
            ),
        ))
    })
}

/// FM-POLS beats the fixed-gain filters, whose losses grow linearly.
pub fn exp2_fixed_gain() -> Check {
    timed(10, "Exp2 fixed-gain filters lose linearly", secs(30), || {
        let rec = run_preset("exp2")?;
        let cum = |label: &str| -> Vec<f64> {
            let vi = rec.variant_index(label).expect("preset variant");
            let mut acc = 0.0;
            rec.trials[0].variants[vi]
                .learner_losses
                .iter()
                .map(|l| {
                    acc += l;
                    acc
                })
                .collect()
        };
        let (lag, kal, hinf) = (cum("two_lag"), cum("kalman"), cum("hinf"));
        let last = |v: &[f64]| *v.last().expect("non-empty");
        let ratio = last(&lag) / last(&kal).min(last(&hinf));
        let r_k = analysis::time_fit(&kal, 1)?.r_squared;
        let r_h = analysis::time_fit(&hinf, 1)?.r_squared;
        let ok = ratio <= 0.5 && r_k >= 0.95 && r_h >= 0.95;
        Ok((
            ok,
            format!("loss ratio {ratio:.4} (need ≤ 0.5); linear R² kalman {r_k:.4}, hinf {r_h:.4}"),
        ))
    })
}

/// Lag hints fail on complex marginal modes while the oracle polynomial stays bounded.
pub fn exp_a3_negative_control() -> Check {
    timed(11, "lag hints fail on rotation, oracle stays bounded", None, || {
        let rec = run_preset("expA3")?;
        let series = |label: &str| -> Vec<f64> {
            let vi = rec.variant_index(label).expect("preset variant");
            rec.trials[0].variants[vi].delta_max.clone().expect("hinted variant")
        };
        let lag = series("two_lag");
        let oracle = series("oracle");
        let t = lag.len();
        let growth = lag[t - 1] / lag[t / 2 - 1];
        let oracle_growth = oracle[t - 1] / oracle[t / 2 - 1];
        let quartile = oracle[t - 1] / oracle[3 * t / 4 - 1] - 1.0;
        let ok = growth >= 1.5 && oracle_growth <= 2.0 && quartile <= 0.05;
        Ok((
            ok,
            format!(
                "2-lag Δ_max(T)/Δ_max(T/2) = {growth:.3}; oracle ratio {oracle_growth:.3}, last-quartile increase {:.2}%",
                100.0 * quartile
            ),
        ))
    })
}

/// Regret is nearly flat in λ ∈ {0.01, 0.1, 1} and worse at λ = 10.
pub fn lambda_sensitivity() -> Check {
    timed(12, "regret insensitive to moderate λ", None, || {
        let rec = run_preset("exp3_lambda")?;
        let fin = |label: &str| {
            let vi = rec.variant_index(label).expect("preset variant");
            rec.variant_stats(vi).final_regret.expect("grid comparator")
        };
        let moderate = [fin("lambda0.01"), fin("lambda0.1"), fin("lambda1")];
        let hi = moderate.iter().cloned().fold(f64::MIN, f64::max);
        let lo = moderate.iter().cloned().fold(f64::MAX, f64::min);
        let spread = (hi - lo) / lo.abs();
        let big = fin("lambda10");
        let ok = spread <= 0.25 && big > moderate[2];
        Ok((
            ok,
            format!(
                "final regrets {:.3} / {:.3} / {:.3} (spread {:.1}%), λ = 10 gives {big:.3}",
                moderate[0],
                moderate[1],
                moderate[2],
                100.0 * spread
            ),
        ))
    })
}

fn csv_snapshot(rec: &RunRecord) -> Vec<String> {
    (0..rec.experiment.variants.len())
        .flat_map(|vi| {
            let mut v = vec![rec.variant_table(vi).to_csv()];
            if rec.trials.len() > 1 {
                v.extend((0..rec.trials.len()).map(|k| rec.trial_table(vi, k).to_csv()));
            }
            v
        })
        .collect()
}

/// Two runs with the same seed emit identical CSV bytes.
pub fn determinism() -> Check {
    timed(13, "same seed gives byte-identical CSV", None, || {
        let mut mismatched = Vec::new();
        for name in ["exp1", "exp2", "expA3"] {
            let a = csv_snapshot(&run_preset(name)?);
            let b = csv_snapshot(&run_preset(name)?);
            if a != b {
                mismatched.push(name);
            }
        }
        let cfg = config::preset("expA1")?.with_overrides(&["horizon=300", "trials=4"])?;
        let a = csv_snapshot(&Experiment::new(cfg.clone())?.run()?);
        let b = csv_snapshot(&Experiment::new(cfg)?.run()?);
        if a != b {
            mismatched.push("expA1 (T = 300, 4 trials)");
        }
        let ok = mismatched.is_empty();
        Ok((ok, if ok { "exp1, exp2, expA3, expA1 reproduce".into() } else { format!("differs: {mismatched:?}") }))
    })
}

pub fn all() -> Vec<Check> {
    vec![
        ols_recovery(),
        recursion_vs_closed_form(),
        regret_inequality(),
        filtered_sum_oracle(),
        marginal_annihilation(),
        exp1_reproduction(),
        two_lag_bound(),
        decomposition(),
        truncation_and_prediction(),
        exp2_fixed_gain(),
        exp_a3_negative_control(),
        lambda_sensitivity(),
        determinism(),
    ]
}
