//! Benchmark predictors: Luenberger rollouts, their finite-memory truncations,
//! gain design and certification, best-in-hindsight grid search, and the
//! fixed-gain Kalman / H∞ baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lds::{NoiseModel, SystemSpec};
use crate::matkit::{self, Mat};
use crate::predictor::build_feature;

/// Internal observer states beyond this norm count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Largest grid that [`best_in_hindsight`] will enumerate.
pub const MAX_GRID_CANDIDATES: usize = 1_000_000;

/// A gain together with the strong-stability constants it was checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct LuenbergerGain {
    pub l: Mat,
    pub kappa: f64,
    pub gamma: f64,
    pub certified: bool,
}

impl LuenbergerGain {
    /// `A_L = A − LC`.
    pub fn closed_loop(&self, sys: &SystemSpec) -> Mat {
        sys.a.sub(&self.l.matmul(&sys.c))
    }
}

fn check_gain_shape(sys: &SystemSpec, l: &Mat, op: &'static str) -> Result<()> {
    if l.rows() != sys.n() || l.cols() != sys.p() {
        return Err(Error::DimensionMismatch {
            op,
            expected: format!("{}x{} gain", sys.n(), sys.p()),
            got: format!("{}x{}", l.rows(), l.cols()),
        });
    }
    Ok(())
}

/// `ŷ_t = C x̂_t`, `x̂_{t+1} = A_L x̂_t + L y_t`, `x̂_1 = 0`.
///
/// `outputs[t − 1]` is `y_t`; the returned vector is aligned the same way.
pub fn luenberger_rollout(sys: &SystemSpec, l: &Mat, outputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_gain_shape(sys, l, "luenberger_rollout")?;
    let a_l = sys.a.sub(&l.matmul(&sys.c));
    let mut x = vec![0.0; sys.n()];
    let mut preds = Vec::with_capacity(outputs.len());
    for (i, y) in outputs.iter().enumerate() {
        preds.push(sys.c.mul_vec(&x));
        x = matkit::add_vec(&a_l.mul_vec(&x), &l.mul_vec(y));
        if !(matkit::norm(&x) <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { t: i + 1 });
        }
    }
    Ok(preds)
}

/// Squared prediction errors `‖ŷ_t − y_t‖²` of a rollout.
pub fn rollout_losses(preds: &[Vec<f64>], outputs: &[Vec<f64>]) -> Vec<f64> {
    preds
        .iter()
        .zip(outputs)
        .map(|(p, y)| {
            let e = matkit::sub_vec(p, y);
            matkit::dot(&e, &e)
        })
        .collect()
}

/// The `H`-tap approximation `M_L = [CL, CA_L L, …, CA_L^{H−1} L]`.
#[derive(Debug, Clone)]
pub struct TruncatedPredictor {
    pub m_l: Mat,
    pub memory: usize,
    pub gain: Mat,
}

impl TruncatedPredictor {
    pub fn new(sys: &SystemSpec, gain: &Mat, memory: usize) -> Result<Self> {
        check_gain_shape(sys, gain, "TruncatedPredictor::new")?;
        if memory == 0 {
            return Err(Error::InvalidArgument("memory must be at least 1".into()));
        }
        let a_l = sys.a.sub(&gain.matmul(&sys.c));
        let powers = matkit::mat_power_seq(&a_l, memory - 1);
        let blocks = powers.iter().map(|pk| sys.c.matmul(pk).matmul(gain));
        let m_l = blocks.reduce(|acc, b| acc.hcat(&b)).expect("memory ≥ 1");
        Ok(TruncatedPredictor {
            m_l,
            memory,
            gain: gain.clone(),
        })
    }

    /// `M_L z_t` with `history[s − 1] = y_s` for `s < t`.
    pub fn predict(&self, history: &[Vec<f64>], t: usize) -> Vec<f64> {
        let f = build_feature(history, t, self.memory, self.m_l.rows());
        self.m_l.mul_vec(&f.z)
    }

    /// Predictions for every `t = 1..=outputs.len()`.
    pub fn predict_all(&self, outputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (1..=outputs.len()).map(|t| self.predict(outputs, t)).collect()
    }
}

/// Decay horizon `K₀ = ⌈10/γ⌉`.
pub fn decay_horizon(gamma: f64) -> usize {
    (10.0 / gamma).ceil() as usize
}

/// `max_{0≤k≤K₀} ‖A_L^k‖ / (1−γ)^k`; infinite when `γ = 1` and some power is nonzero.
pub fn decay_ratio(a_l: &Mat, gamma: f64) -> f64 {
    let k0 = decay_horizon(gamma);
    let base = 1.0 - gamma;
    let mut power = Mat::identity(a_l.rows());
    let mut worst = 1.0_f64;
    for k in 1..=k0 {
        power = power.matmul(a_l);
        let norm = matkit::operator_norm(&power);
        let scale = base.powi(k as i32);
        let ratio = if scale > 0.0 {
            norm / scale
        } else if norm <= 1e-9 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(ratio);
        if !worst.is_finite() {
            break;
        }
    }
    worst
}

/// Checks `‖L‖ ≤ κ`, `ρ(A_L) ≤ 1−γ`, and `‖A_L^k‖ ≤ κ(1−γ)^k` for `k ≤ K₀`.
///
/// Never fails; an uncertified gain is returned when any check does not hold
/// or the spectrum cannot be computed.
pub fn certify_gain(sys: &SystemSpec, l: &Mat, kappa: f64, gamma: f64) -> LuenbergerGain {
    let certified = check_gain_shape(sys, l, "certify_gain").is_ok()
        && gamma > 0.0
        && gamma <= 1.0
        && kappa > 0.0
        && certify_inner(sys, l, kappa, gamma);
    LuenbergerGain {
        l: l.clone(),
        kappa,
        gamma,
        certified,
    }
}

fn certify_inner(sys: &SystemSpec, l: &Mat, kappa: f64, gamma: f64) -> bool {
    if matkit::operator_norm(l) > kappa {
        return false;
    }
    let a_l = sys.a.sub(&l.matmul(&sys.c));
    match matkit::spectral_radius(&a_l) {
        Ok(rho) if rho <= 1.0 - gamma + 1e-9 => {}
        _ => return false,
    }
    decay_ratio(&a_l, gamma) <= kappa * (1.0 + 1e-6)
}

/// Smallest `κ` that certifies `l` at decay rate `γ`, if the spectrum allows it.
pub fn fit_certificate(sys: &SystemSpec, l: &Mat, gamma: f64) -> LuenbergerGain {
    let a_l = sys.a.sub(&l.matmul(&sys.c));
    let kappa = matkit::operator_norm(l).max(decay_ratio(&a_l, gamma));
    if kappa.is_finite() {
        certify_gain(sys, l, kappa, gamma)
    } else {
        LuenbergerGain {
            l: l.clone(),
            kappa,
            gamma,
            certified: false,
        }
    }
}

/// Certificate for a baseline gain with an unspecified target: `γ = (1 − ρ(A_L))/2`.
fn baseline_certificate(sys: &SystemSpec, l: Mat) -> LuenbergerGain {
    let a_l = sys.a.sub(&l.matmul(&sys.c));
    match matkit::spectral_radius(&a_l) {
        Ok(rho) if rho < 1.0 => fit_certificate(sys, &l, (0.5 * (1.0 - rho)).max(1e-6)),
        _ => LuenbergerGain {
            kappa: matkit::operator_norm(&l).max(1.0),
            l,
            gamma: 1e-6,
            certified: false,
        },
    }
}

/// Observer pole placement with every eigenvalue of `A − LC` at `1 − γ̃`.
///
/// Uses Ackermann's formula on the first output channel whose row makes the
/// pair observable; other channels get zero gain. `κ` is the empirical value
/// from [`fit_certificate`]. For `n ≥ 3` the repeated closed-loop pole is
/// defective, so rounding can push the computed spectral radius slightly past
/// `1 − γ̃` and the result may come back uncertified.
pub fn design_gain(sys: &SystemSpec, target_gamma: f64) -> Result<LuenbergerGain> {
    if !(target_gamma > 0.0 && target_gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target decay {target_gamma} must lie in (0, 1]"
        )));
    }
    let n = sys.n();
    let pole = 1.0 - target_gamma;
    for channel in 0..sys.p() {
        let c_row = Mat::row(sys.c.row_slice(channel));
        let mut obs = c_row.clone();
        let mut block = c_row;
        for _ in 1..n {
            block = block.matmul(&sys.a);
            obs = obs.vcat(&block);
        }
        if matkit::rank(&obs, 1e-9) < n {
            continue;
        }
        // φ(z) = (z − pole)^n, highest power first.
        let mut phi = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; phi.len() + 1];
            for (i, c) in phi.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * pole;
            }
            phi = next;
        }
        let mut e_n = Mat::zeros(n, 1);
        e_n[(n - 1, 0)] = 1.0;
        let col = matkit::poly_eval_mat(&phi, &sys.a).matmul(&matkit::solve(&obs, &e_n)?);
        let mut l = Mat::zeros(n, sys.p());
        for i in 0..n {
            l[(i, channel)] = col[(i, 0)];
        }
        return Ok(fit_certificate(sys, &l, target_gamma));
    }
    Err(Error::NotObservable)
}

/// Axis-aligned lattice over every gain entry plus the certification class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: -2.0,
            hi: 2.0,
            steps: 41,
            kappa: 20.0,
            gamma: 0.05,
        }
    }
}

impl GridSpec {
    fn axis(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + h * i as f64).collect()
    }

    /// Row-major gains; the first entry of `L` varies slowest.
    pub fn lattice(&self, n: usize, p: usize) -> Result<Vec<Mat>> {
        let dims = n * p;
        let total = (self.steps as f64).powi(dims as i32);
        if self.steps == 0 {
            return Err(Error::EmptyGrid);
        }
        if total > MAX_GRID_CANDIDATES as f64 {
            return Err(Error::GridTooLarge(total as usize));
        }
        let axis = self.axis();
        let total = total as usize;
        Ok((0..total)
            .map(|mut idx| {
                let mut entries = vec![0.0; dims];
                for k in (0..dims).rev() {
                    entries[k] = axis[idx % self.steps];
                    idx /= self.steps;
                }
                Mat::from_vec(n, p, entries).expect("lattice entries are finite")
            })
            .collect())
    }
}

/// Outcome of the hindsight search.
#[derive(Debug, Clone)]
pub struct HindsightResult {
    /// Certified candidates in lattice order.
    pub candidates: Vec<LuenbergerGain>,
    /// Lattice index of each certified candidate.
    pub lattice_index: Vec<usize>,
    /// Per-step squared losses, one row per candidate.
    pub losses: Vec<Vec<f64>>,
    /// `best[t − 1]` indexes `candidates` with the smallest loss through `t`.
    pub best: Vec<usize>,
    /// `min_L Σ_{s≤t} ‖y_s − ŷ_s(L)‖²`.
    pub min_cumulative: Vec<f64>,
}

impl HindsightResult {
    /// `L*(t)`.
    pub fn best_gain(&self, t: usize) -> &LuenbergerGain {
        &self.candidates[self.best[t - 1]]
    }

    /// Increments of the running minimum, so that their prefix sums reproduce it.
    pub fn min_increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.min_cumulative
            .iter()
            .map(|m| {
                let d = m - prev;
                prev = *m;
                d
            })
            .collect()
    }
}

/// Rolls out every certified lattice gain and tracks the prefix-wise argmin.
pub fn best_in_hindsight(sys: &SystemSpec, grid: &GridSpec, outputs: &[Vec<f64>]) -> Result<HindsightResult> {
    let lattice = grid.lattice(sys.n(), sys.p())?;
    let certified: Vec<(usize, LuenbergerGain)> = lattice
        .par_iter()
        .enumerate()
        .map(|(i, l)| (i, certify_gain(sys, l, grid.kappa, grid.gamma)))
        .filter(|(_, g)| g.certified)
        .collect();
    hindsight_over(sys, certified, outputs)
}

/// Hindsight search over an explicit candidate list; indices are list positions.
pub fn best_in_hindsight_of(sys: &SystemSpec, gains: &[LuenbergerGain], outputs: &[Vec<f64>]) -> Result<HindsightResult> {
    hindsight_over(sys, gains.iter().cloned().enumerate().collect(), outputs)
}

fn hindsight_over(sys: &SystemSpec, certified: Vec<(usize, LuenbergerGain)>, outputs: &[Vec<f64>]) -> Result<HindsightResult> {
    if certified.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let losses = certified
        .par_iter()
        .map(|(_, g)| luenberger_rollout(sys, &g.l, outputs).map(|p| rollout_losses(&p, outputs)))
        .collect::<Result<Vec<_>>>()?;
    let horizon = outputs.len();
    let mut cumulative = vec![0.0; losses.len()];
    let mut best = Vec::with_capacity(horizon);
    let mut min_cumulative = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut arg = 0;
        for (k, row) in losses.iter().enumerate() {
            cumulative[k] += row[t];
            if cumulative[k] < cumulative[arg] {
                arg = k;
            }
        }
        best.push(arg);
        min_cumulative.push(cumulative[arg]);
    }
    let (lattice_index, candidates) = certified.into_iter().unzip();
    Ok(HindsightResult {
        candidates,
        lattice_index,
        losses,
        best,
        min_cumulative,
    })
}

/// Diagonal `(Q, R)` from the per-coordinate second moments of a noise model.
pub fn rms_covariances(model: &NoiseModel) -> (Mat, Mat) {
    let (q, r) = model.rms_second_moments();
    (Mat::diag(&q), Mat::diag(&r))
}

/// Steady-state Kalman predictor gain.
pub fn kalman_gain(sys: &SystemSpec, q: &Mat, r: &Mat) -> Result<LuenbergerGain> {
    let (_, l) = matkit::solve_dare(&sys.a, &sys.c, q, r)?;
    Ok(baseline_certificate(sys, l))
}

/// Robust baseline: the Kalman gain for the inflated process covariance `Q(1 + level)`.
pub fn hinf_gain(sys: &SystemSpec, q: &Mat, r: &Mat, level: f64) -> Result<LuenbergerGain> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidLevel(level));
    }
    kalman_gain(sys, &q.scale(1.0 + level), r)
}
