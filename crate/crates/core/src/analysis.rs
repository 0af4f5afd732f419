//! Regret bookkeeping, the closed-form bound calculators, filtered-Jordan sums
//! and the log-fit diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lds::{SystemSpec, Trajectory};
use crate::matkit::{self, Mat};

/// Per-step losses of a learner against one comparator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub learner_losses: Vec<f64>,
    pub comparator_losses: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub delta_max_series: Vec<f64>,
    pub comparator_id: String,
}

impl RegretReport {
    pub fn from_losses(
        learner_losses: Vec<f64>,
        comparator_losses: Vec<f64>,
        comparator_id: impl Into<String>,
    ) -> Result<Self> {
        if learner_losses.len() != comparator_losses.len() {
            return Err(Error::LengthMismatch(learner_losses.len(), comparator_losses.len()));
        }
        let mut acc = 0.0;
        let cumulative_regret = learner_losses
            .iter()
            .zip(&comparator_losses)
            .map(|(l, c)| {
                acc += l - c;
                acc
            })
            .collect();
        Ok(RegretReport {
            learner_losses,
            comparator_losses,
            cumulative_regret,
            delta_max_series: Vec::new(),
            comparator_id: comparator_id.into(),
        })
    }

    pub fn with_delta_max(mut self, series: Vec<f64>) -> Self {
        self.delta_max_series = series;
        self
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

fn squared_errors(preds: &[Vec<f64>], outputs: &[Vec<f64>]) -> Vec<f64> {
    preds
        .iter()
        .zip(outputs)
        .map(|(p, y)| {
            let e = matkit::sub_vec(p, y);
            matkit::dot(&e, &e)
        })
        .collect()
}

/// `Σ_{s≤t} ‖ŷ_s − y_s‖² − ‖ŷ_s^{LB} − y_s‖²` for every `t`.
pub fn luenberger_regret(
    learner: &[Vec<f64>],
    comparator: &[Vec<f64>],
    outputs: &[Vec<f64>],
) -> Result<RegretReport> {
    if learner.len() != outputs.len() {
        return Err(Error::LengthMismatch(learner.len(), outputs.len()));
    }
    if comparator.len() != outputs.len() {
        return Err(Error::LengthMismatch(comparator.len(), outputs.len()));
    }
    RegretReport::from_losses(
        squared_errors(learner, outputs),
        squared_errors(comparator, outputs),
        "luenberger",
    )
}

/// Constants entering the regret and residual bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub norm_c: f64,
    pub n: usize,
    pub p: usize,
    pub r: usize,
    pub kappa_a: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub kappa_tilde: f64,
    pub gamma_tilde: f64,
    pub c_w: f64,
    pub c_v: f64,
    pub c_y: f64,
    pub lambda: f64,
    pub memory: usize,
    pub horizon: usize,
    pub delta_max: f64,
}

impl BoundInputs {
    /// Fills the system-dependent fields; the rest are set to 1 / 0 for the caller to override.
    pub fn for_system(sys: &SystemSpec, c_w: f64, c_v: f64) -> Self {
        let (_, c_y) = crate::lds::growth_envelope_from_bounds(sys.kappa_a, sys.norm_c(), c_w, c_v);
        BoundInputs {
            norm_c: sys.norm_c(),
            n: sys.n(),
            p: sys.p(),
            r: sys.jordan_r,
            kappa_a: sys.kappa_a,
            kappa: 1.0,
            gamma: 1.0,
            kappa_tilde: 1.0,
            gamma_tilde: 1.0,
            c_w,
            c_v,
            c_y,
            lambda: 1.0,
            memory: 1,
            horizon: 1,
            delta_max: 0.0,
        }
    }

    /// `C_trun = γ⁻¹‖C‖κ²C_y`.
    pub fn c_trun(&self) -> f64 {
        self.norm_c * self.kappa * self.kappa * self.c_y / self.gamma
    }

    /// `C_pred = γ⁻¹‖C‖κ(C_w + κC_v) + C_v`.
    pub fn c_pred(&self) -> f64 {
        self.norm_c * self.kappa * (self.c_w + self.kappa * self.c_v) / self.gamma + self.c_v
    }

    /// Pointwise truncation envelope `γ⁻¹‖C‖κ²C_y(1+t)^r(1−γ)^H`.
    pub fn truncation_envelope(&self, t: usize) -> f64 {
        self.c_trun() * (1.0 + t as f64).powi(self.r as i32) * (1.0 - self.gamma).powi(self.memory as i32)
    }

    /// Memory `⌈γ⁻¹(r+1)log(1+T)⌉` that makes the truncation summable.
    pub fn recommended_memory(&self) -> usize {
        ((self.r as f64 + 1.0) * (1.0 + self.horizon as f64).ln() / self.gamma).ceil() as usize
    }
}

/// Luenberger regret bound of FM-POLS with memory `H` and residual `Δ_max`.
pub fn luenberger_regret_bound(b: &BoundInputs) -> f64 {
    let p = b.p as f64;
    let bias = b.lambda * b.norm_c.powi(2) * b.kappa.powi(4) * p / b.gamma;
    let growth = b.c_y.powi(2) * (1.0 + b.horizon as f64).powi(2 * b.r as i32 + 1) / (b.lambda * p);
    let learning = b.delta_max.powi(2) * p * b.memory as f64 * growth.ln_1p();
    let c_trun = b.c_trun();
    bias + learning + c_trun * c_trun + 2.0 * b.c_pred() * c_trun
}

/// Residual-scaled regression regret bound `λ‖M‖_F² + Δ_max² d log(1 + Σ‖z‖²/(λd))`.
pub fn pols_regret_bound(lambda: f64, comparator_frob_sq: f64, delta_max: f64, d: usize, sum_z_sq: f64) -> f64 {
    let d = d as f64;
    lambda * comparator_frob_sq + delta_max * delta_max * d * (sum_z_sq / (lambda * d)).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResidualKind {
    /// Observer hint with gain in the `(κ̃, γ̃)` class.
    LuenbergerHint,
    /// `ỹ_t = y_{t−2}` on real diagonalizable marginal spectra.
    TwoLag,
    /// `(z² − 1)^r` differencing on Jordan blocks of size `r`.
    HighOrderDiff,
}

/// Upper bound on `Δ_max` for the given hint family.
pub fn residual_bound(kind: ResidualKind, b: &BoundInputs) -> f64 {
    let n = b.n as f64;
    match kind {
        ResidualKind::LuenbergerHint => {
            b.norm_c * b.kappa_tilde * (b.c_w + b.kappa_tilde * b.c_v) / b.gamma_tilde + b.c_v
        }
        ResidualKind::TwoLag => 2.0 * b.c_v + (1.0 + b.kappa_a + 2.0 * n * b.kappa_a) * b.norm_c * b.c_w,
        ResidualKind::HighOrderDiff => {
            let r = b.r as i32;
            2f64.powi(r) * b.c_v + (h_r(b.r) + k_r(b.r) * n) * b.kappa_a * b.norm_c * b.c_w
        }
    }
}

/// `H_r = 8^r`.
pub fn h_r(r: usize) -> f64 {
    8f64.powi(r as i32)
}

/// `K_r = r(2e²)^r`.
pub fn k_r(r: usize) -> f64 {
    r as f64 * (2.0 * std::f64::consts::E.powi(2)).powi(r as i32)
}

/// Partial sums of `Σ_s ‖(A² − I)^r A^s‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanSum {
    /// `partial_sums[s]` holds the sum through index `s`.
    pub partial_sums: Vec<f64>,
    pub last_increment: f64,
    pub converged: bool,
}

impl JordanSum {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

pub const JORDAN_TAIL_TOL: f64 = 1e-10;

pub fn filtered_jordan_sum(a: &Mat, r: usize, s_max: usize) -> JordanSum {
    let n = a.rows();
    let a2 = a.matmul(a).sub(&Mat::identity(n));
    let mut term = (0..r).fold(Mat::identity(n), |acc, _| acc.matmul(&a2));
    let mut acc = 0.0;
    let mut partial_sums = Vec::with_capacity(s_max + 1);
    let mut last = 0.0;
    for s in 0..=s_max {
        if s > 0 {
            term = term.matmul(a);
        }
        last = matkit::operator_norm(&term);
        acc += last;
        partial_sums.push(acc);
    }
    JordanSum {
        partial_sums,
        last_increment: last,
        converged: last < JORDAN_TAIL_TOL,
    }
}

/// Default truncation `max(500, ⌈20/γ_eff⌉)` for [`filtered_jordan_sum`].
pub fn default_sum_horizon(gamma_eff: f64) -> usize {
    500.max((20.0 / gamma_eff).ceil() as usize)
}

/// `Δ_t = Σ_i c_i y_{t−i}` computed directly from the outputs.
pub fn direct_residuals(coeffs: &[f64], traj: &Trajectory) -> Vec<Vec<f64>> {
    let p = traj.p();
    (1..=traj.horizon)
        .map(|t| {
            let mut d = vec![0.0; p];
            for (i, c) in coeffs.iter().enumerate() {
                if *c != 0.0 {
                    for (o, y) in d.iter_mut().zip(traj.y_padded(t as i64 - i as i64)) {
                        *o += c * y;
                    }
                }
            }
            d
        })
        .collect()
}

/// Largest entrywise gap between the direct residual and its noise decomposition
///
/// `Δ_t = Σ_i c_i v_{t−i} + C Σ_{s<m} (Σ_{i≤s} c_i A^{s−i}) w_{t−1−s}
///        + C Σ_{s=0}^{t−m−1} q(A) A^s w_{t−m−1−s}`
///
/// over `t = 1..=T`. Requires a trajectory started from `x_0 = 0`.
pub fn residual_decomposition_check(sys: &SystemSpec, coeffs: &[f64], traj: &Trajectory) -> f64 {
    let horizon = traj.horizon;
    let m = coeffs.len().saturating_sub(1);
    let powers = matkit::mat_power_seq(&sys.a, horizon.max(m));
    let head: Vec<Mat> = (0..m)
        .map(|s| {
            (0..=s).fold(Mat::zeros(sys.n(), sys.n()), |acc, i| acc.add(&powers[s - i].scale(coeffs[i])))
        })
        .map(|mat| sys.c.matmul(&mat))
        .collect();
    let q_a = matkit::poly_eval_mat(coeffs, &sys.a);
    let tail: Vec<Mat> = (0..horizon).map(|s| sys.c.matmul(&q_a).matmul(&powers[s])).collect();
    let direct = direct_residuals(coeffs, traj);
    let mut worst = 0.0_f64;
    for t in 1..=horizon {
        let ti = t as i64;
        let mut d = vec![0.0; sys.p()];
        for (i, c) in coeffs.iter().enumerate() {
            for (o, v) in d.iter_mut().zip(traj.v_padded(ti - i as i64)) {
                *o += c * v;
            }
        }
        for (s, blk) in head.iter().enumerate() {
            let w = traj.w_padded(ti - 1 - s as i64);
            d = matkit::add_vec(&d, &blk.mul_vec(&w));
        }
        if t > m {
            for (s, blk) in tail.iter().enumerate().take(t - m) {
                let w = traj.w_padded(ti - m as i64 - 1 - s as i64);
                d = matkit::add_vec(&d, &blk.mul_vec(&w));
            }
        }
        for (a, b) in d.iter().zip(&direct[t - 1]) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Least-squares line with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub const MIN_FIT_POINTS: usize = 10;

/// Ordinary least squares `y ≈ slope·x + intercept`. A zero total sum of
/// squares reports `R² = 1`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<Fit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::Degenerate(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate(n));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(Fit {
        slope,
        intercept,
        r_squared,
    })
}

fn fit_against(series: &[f64], t_min: usize, x: impl Fn(f64) -> f64) -> Result<Fit> {
    let t_min = t_min.max(1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .skip(t_min - 1)
        .map(|(i, v)| (x((i + 1) as f64), *v))
        .unzip();
    linear_fit(&xs, &ys)
}

/// Fit of `series[t − 1]` against `log t` over `t ≥ t_min`.
pub fn log_fit(series: &[f64], t_min: usize) -> Result<Fit> {
    fit_against(series, t_min, f64::ln)
}

/// Fit of `series[t − 1]` against `t` over `t ≥ t_min`.
pub fn time_fit(series: &[f64], t_min: usize) -> Result<Fit> {
    fit_against(series, t_min, |t| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::{self, NoiseModel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn regret_examples() {
        let y = vec![vec![0.0], vec![0.0]];
        let rep = luenberger_regret(&[vec![1.0], vec![2.0]], &[vec![2.0], vec![1.0]], &y).unwrap();
        assert_eq!(rep.cumulative_regret, vec![-3.0, 0.0]);
        let same = luenberger_regret(&y, &y, &y).unwrap();
        assert!(same.cumulative_regret.iter().all(|r| *r == 0.0));
        assert!(matches!(
            luenberger_regret(&y[..1], &y, &y),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    fn unit_inputs() -> BoundInputs {
        BoundInputs {
            norm_c: 1.0,
            n: 1,
            p: 1,
            r: 1,
            kappa_a: 1.0,
            kappa: 1.0,
            gamma: 1.0,
            kappa_tilde: 1.0,
            gamma_tilde: 1.0,
            c_w: 1.0,
            c_v: 1.0,
            c_y: 1.0,
            lambda: 1.0,
            memory: 1,
            horizon: 1,
            delta_max: 1.0,
        }
    }

    #[test]
    fn regret_bound_unit_constants() {
        let b = unit_inputs();
        assert_eq!(b.c_trun(), 1.0);
        assert_eq!(b.c_pred(), 3.0);
        // growth term C_y²(1+T)^{2r+1}/(λp) = 2³ = 8
        assert_abs_diff_eq!(luenberger_regret_bound(&b), 8.0 + 9f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn regret_bound_limits_and_scaling() {
        let mut b = unit_inputs();
        b.delta_max = 0.0;
        b.lambda = 1e-300;
        let tail = b.c_trun().powi(2) + 2.0 * b.c_pred() * b.c_trun();
        assert_abs_diff_eq!(luenberger_regret_bound(&b), tail, epsilon = 1e-12);
        let mut b = unit_inputs();
        let base = luenberger_regret_bound(&b);
        let middle = 9f64.ln();
        b.delta_max = 2.0;
        assert_abs_diff_eq!(luenberger_regret_bound(&b) - base, 3.0 * middle, epsilon = 1e-12);
    }

    #[test]
    fn residual_bound_examples() {
        let mut b = unit_inputs();
        b.n = 2;
        b.c_v = 0.1;
        b.c_w = 0.1;
        assert_abs_diff_eq!(residual_bound(ResidualKind::TwoLag, &b), 0.8, epsilon = 1e-15);
        let looser = residual_bound(ResidualKind::HighOrderDiff, &b);
        assert!(looser > 0.8);
        assert_abs_diff_eq!(
            looser,
            0.2 + (8.0 + 2.0 * std::f64::consts::E.powi(2) * 2.0) * 0.1,
            epsilon = 1e-12
        );
        let mut b = unit_inputs();
        b.c_v = 0.0;
        assert_eq!(residual_bound(ResidualKind::LuenbergerHint, &b), 1.0);
    }

    #[test]
    fn jordan_sum_examples() {
        let s = filtered_jordan_sum(&Mat::diag(&[0.5, 1.0]), 1, 200);
        assert_abs_diff_eq!(s.total(), 1.5, epsilon = 1e-12);
        assert!(s.converged);
        assert_eq!(filtered_jordan_sum(&Mat::identity(3), 2, 50).total(), 0.0);
        let j = Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        assert!(filtered_jordan_sum(&j, 2, 100).total() <= 1e-12);
        let ps = &s.partial_sums;
        assert!(ps.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn decomposition_trivial_cases() {
        let sys = lds::symmetric_swap();
        let zero = lds::simulate(&sys, &NoiseModel::zero(2, 1), 50).unwrap();
        assert_eq!(residual_decomposition_check(&sys, &[1.0, 0.0, -1.0], &zero), 0.0);
        let traj = lds::simulate(&sys, &NoiseModel::uniform(2, 1, 0.3, 0.3, 5), 100).unwrap();
        assert!(residual_decomposition_check(&sys, &[1.0], &traj) <= 1e-10);
        assert!(residual_decomposition_check(&sys, &[1.0, 0.0, -1.0], &traj) <= 1e-10);
    }

    #[test]
    fn log_fit_examples() {
        let s: Vec<f64> = (1..=100).map(|t| 3.0 * (t as f64).ln() + 1.0).collect();
        let f = log_fit(&s, 1).unwrap();
        assert_abs_diff_eq!(f.slope, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        let c = log_fit(&[2.0; 30], 1).unwrap();
        assert_eq!((c.slope, c.r_squared), (0.0, 1.0));
        assert!(matches!(log_fit(&[1.0; 15], 10), Err(Error::Degenerate(6))));
    }
}
