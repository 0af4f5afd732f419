//! Finite-memory predictive online least squares (FM-POLS).
//!
//! The learner regresses `y_t` on the stacked feature
//! `z_t = [y_{t−1}; …; y_{t−H}]` with ridge penalty `λ‖M‖_F²`, and before each
//! prediction it adds a look-ahead term `‖M z_t − ỹ_t‖²` built from a hint
//! `ỹ_t`. The recursion keeps `M_{t−1}` and `P_{t−1} = G_{t−1}⁻¹` where
//! `G_t = λI + Σ_{s≤t} z_s z_sᵀ`:
//!
//! ```text
//! K_t      = P_{t−1} z_t / (1 + z_tᵀ P_{t−1} z_t)
//! P_t      = P_{t−1} − K_t z_tᵀ P_{t−1}
//! M_t^pols = M_{t−1} + (ỹ_t − M_{t−1} z_t) K_tᵀ      ŷ_t = M_t^pols z_t
//! M_t      = M_{t−1} + (y_t − M_{t−1} z_t) K_tᵀ
//! ```
//!
//! A step is split into [`PolsState::step`], which needs only the feature and
//! the hint, and [`StagedPols::commit`], which consumes the revealed `y_t`.

use crate::error::{Error, Result};
use crate::matkit::{sherman_morrison, Mat};

/// Stacked past outputs `z_t = [y_{t−1}; …; y_{t−H}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub z: Vec<f64>,
    pub t: usize,
    pub memory: usize,
}

/// Builds `z_t` from `history = [y_1, y_2, …]`, zero-padding indices `≤ 0`.
///
/// Only `y_1..y_{t−1}` are read, so passing a longer history is harmless.
pub fn build_feature(history: &[Vec<f64>], t: usize, memory: usize, p: usize) -> Feature {
    let mut z = vec![0.0; p * memory];
    for k in 1..=memory {
        if t > k {
            let y = &history[t - k - 1];
            debug_assert_eq!(y.len(), p);
            z[(k - 1) * p..k * p].copy_from_slice(y);
        }
    }
    Feature { z, t, memory }
}

/// Committed learner state after step `t`: `M_t`, `P_t = G_t⁻¹`, and `λ`.
#[derive(Debug, Clone)]
pub struct PolsState {
    m: Mat,
    gram_inv: Mat,
    lambda: f64,
    t: usize,
}

/// State between prediction and observation of step `t`.
///
/// Holds `M_{t−1}`, the updated `P_t`, and `K_t`; the only way forward is
/// [`StagedPols::commit`].
#[derive(Debug, Clone)]
pub struct StagedPols {
    prev_m: Mat,
    gram_inv: Mat,
    gain: Vec<f64>,
    z: Vec<f64>,
    m_pols: Mat,
    lambda: f64,
    t: usize,
}

impl PolsState {
    /// `M_0 = 0`, `P_0 = λ⁻¹ I`.
    pub fn new(p: usize, d: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
        }
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        Ok(PolsState {
            m: Mat::zeros(p, d),
            gram_inv: Mat::identity(d).scale(1.0 / lambda),
            lambda,
            t: 0,
        })
    }

    /// State for memory `H` on `p`-dimensional outputs (`d = pH`).
    pub fn for_memory(p: usize, memory: usize, lambda: f64) -> Result<Self> {
        Self::new(p, p * memory, lambda)
    }

    pub fn predictor(&self) -> &Mat {
        &self.m
    }

    pub fn gram_inv(&self) -> &Mat {
        &self.gram_inv
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of committed steps.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.m.rows()
    }

    pub fn d(&self) -> usize {
        self.m.cols()
    }

    /// `M_{t−1} z`: the plain OLS prediction from committed data only.
    pub fn ols_predict(&self, z: &[f64]) -> Vec<f64> {
        self.m.mul_vec(z)
    }

    /// Covariance update and hinted prediction for the next step.
    pub fn step(self, z: &[f64], hint: &[f64]) -> (Vec<f64>, StagedPols) {
        assert_eq!(z.len(), self.d(), "feature dimension");
        assert_eq!(hint.len(), self.p(), "hint dimension");
        let (gain, gram_inv) = sherman_morrison(&self.gram_inv, z);
        let base = self.m.mul_vec(z);
        let innovation: Vec<f64> = hint.iter().zip(&base).map(|(h, b)| h - b).collect();
        let mut m_pols = self.m.clone();
        m_pols.add_outer(1.0, &innovation, &gain);
        let prediction = m_pols.mul_vec(z);
        let staged = StagedPols {
            prev_m: self.m,
            gram_inv,
            gain,
            z: z.to_vec(),
            m_pols,
            lambda: self.lambda,
            t: self.t + 1,
        };
        (prediction, staged)
    }
}

impl StagedPols {
    /// `M_t^pols`, the transient hinted predictor of this step.
    pub fn m_pols(&self) -> &Mat {
        &self.m_pols
    }

    /// `K_t`.
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    /// `P_t` after this step's covariance update.
    pub fn gram_inv(&self) -> &Mat {
        &self.gram_inv
    }

    /// Absorbs the revealed `y_t` into `M_t`.
    pub fn commit(self, y: &[f64]) -> PolsState {
        assert_eq!(y.len(), self.prev_m.rows(), "observation dimension");
        let base = self.prev_m.mul_vec(&self.z);
        let innovation: Vec<f64> = y.iter().zip(&base).map(|(y, b)| y - b).collect();
        let mut m = self.prev_m;
        m.add_outer(1.0, &innovation, &self.gain);
        PolsState {
            m,
            gram_inv: self.gram_inv,
            lambda: self.lambda,
            t: self.t,
        }
    }
}

/// Direct normal-equation solutions, independent of the recursion above.
///
/// Sums are accumulated in compensated arithmetic and solved with iterative
/// refinement, so the reference stays accurate on the badly conditioned Gram
/// matrices produced by growing signals.
pub mod oracle {
    use super::*;
    use crate::matkit::Compensated;

    /// `G = λI + Σ z zᵀ` over the given features.
    pub fn gram(lambda: f64, zs: &[Vec<f64>], d: usize) -> Mat {
        let mut g = Mat::identity(d).scale(lambda);
        for z in zs {
            g.add_outer(1.0, z, z);
        }
        g
    }

    /// Running `G_t = λI + Σ_{s≤t} z_s z_sᵀ` and `B_t = Σ_{s≤t} y_s z_sᵀ`.
    #[derive(Debug, Clone)]
    pub struct NormalEquations {
        g: Compensated,
        b: Compensated,
    }

    impl NormalEquations {
        pub fn new(p: usize, d: usize, lambda: f64) -> Self {
            NormalEquations {
                g: Compensated::from_mat(&Mat::identity(d).scale(lambda)),
                b: Compensated::zeros(p, d),
            }
        }

        /// Adds the pair `(z_t, y_t)`.
        pub fn push(&mut self, z: &[f64], y: &[f64]) {
            self.g.add_outer(1.0, z, z);
            self.b.add_outer(1.0, y, z);
        }

        /// `B G⁻¹` for the pairs pushed so far.
        pub fn ols(&self) -> Result<Mat> {
            self.g.solve_right(&self.b)
        }

        /// `(B + ỹ zᵀ)(G + z zᵀ)⁻¹` for a new feature `z` and hint `ỹ`, without recording them.
        pub fn pols(&self, z: &[f64], hint: &[f64]) -> Result<Mat> {
            let mut g = self.g.clone();
            let mut b = self.b.clone();
            g.add_outer(1.0, z, z);
            b.add_outer(1.0, hint, z);
            g.solve_right(&b)
        }
    }

    /// `M_t^pols = (B_{t−1} + ỹ_t z_tᵀ) G_t⁻¹` for features `z_1..z_t`,
    /// targets `y_1..y_{t−1}` and hint `ỹ_t`.
    pub fn pols_closed_form(lambda: f64, zs: &[Vec<f64>], ys: &[Vec<f64>], hint: &[f64]) -> Result<Mat> {
        let t = zs.len();
        if t == 0 || ys.len() + 1 != t {
            return Err(Error::LengthMismatch(zs.len(), ys.len() + 1));
        }
        let mut ne = NormalEquations::new(hint.len(), zs[0].len(), lambda);
        for (y, z) in ys.iter().zip(zs) {
            ne.push(z, y);
        }
        ne.pols(&zs[t - 1], hint)
    }

    /// `M_t^ols = B_{t−1} G_{t−1}⁻¹` from the first `t−1` pairs.
    pub fn ols_closed_form(lambda: f64, zs: &[Vec<f64>], ys: &[Vec<f64>], p: usize, d: usize) -> Result<Mat> {
        if zs.len() != ys.len() {
            return Err(Error::LengthMismatch(zs.len(), ys.len()));
        }
        let mut ne = NormalEquations::new(p, d, lambda);
        for (y, z) in ys.iter().zip(zs) {
            ne.push(z, y);
        }
        ne.ols()
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn feature_padding() {
        let h = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(build_feature(&h, 1, 4, 1).z, vec![0.0; 4]);
        assert_eq!(build_feature(&h, 3, 2, 1).z, vec![2.0, 1.0]);
        assert_eq!(build_feature(&[vec![5.0]], 2, 3, 1).z, vec![5.0, 0.0, 0.0]);
        let h2 = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(build_feature(&h2, 3, 2, 2).z, vec![3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn scalar_step_and_commit() {
        // m² + (m − 2)² is minimized at m = 1; m² + (m − 3)² at m = 1.5.
        let s = PolsState::new(1, 1, 1.0).unwrap();
        let (pred, staged) = s.step(&[1.0], &[2.0]);
        assert_abs_diff_eq!(staged.m_pols()[(0, 0)], 1.0);
        assert_abs_diff_eq!(pred[0], 1.0);
        let s = staged.commit(&[3.0]);
        assert_abs_diff_eq!(s.predictor()[(0, 0)], 1.5);
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn zero_feature_keeps_predictor() {
        let s = PolsState::new(1, 1, 1.0).unwrap();
        let (_, st) = s.step(&[2.0], &[1.0]);
        let s = st.commit(&[4.0]);
        let m_prev = s.predictor().clone();
        let (pred, staged) = s.step(&[0.0], &[7.0]);
        assert_eq!(pred, vec![0.0]);
        assert_eq!(staged.m_pols(), &m_prev);
    }

    #[test]
    fn zero_innovation_cases() {
        let s = PolsState::new(1, 2, 0.5).unwrap();
        let (_, st) = s.step(&[1.0, -1.0], &[0.3]);
        let s = st.commit(&[0.8]);
        let z = [0.4, 2.0];
        let base = s.ols_predict(&z);
        let m_prev = s.predictor().clone();
        let (pred, staged) = s.clone().step(&z, &base);
        assert_abs_diff_eq!(pred[0], base[0], epsilon = 1e-15);
        assert_eq!(staged.commit(&base).predictor(), &m_prev);

        let hint = [1.7];
        let (_, staged) = s.step(&z, &hint);
        let m_pols = staged.m_pols().clone();
        assert_eq!(staged.commit(&hint).predictor(), &m_pols);
    }

    #[test]
    fn closed_form_examples() {
        let m = pols_closed_form(1.0, &[vec![1.0]], &[], &[2.0]).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 1.0);
        let zs = vec![vec![1.0, 2.0], vec![0.5, -1.0]];
        let m = pols_closed_form(1.0, &zs, &[vec![0.0]], &[0.0]).unwrap();
        assert_eq!(m.max_abs_entry(), 0.0);
    }

    #[test]
    fn closed_form_shrinks_with_lambda() {
        let zs = vec![vec![1.0, 0.2], vec![0.3, -0.7], vec![0.9, 0.4]];
        let ys = vec![vec![0.5], vec![-0.2]];
        let mut last = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let m = pols_closed_form(lambda, &zs, &ys, &[0.8]).unwrap().frobenius();
            assert!(m < last);
            last = m;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn zero_hint_is_vaw_forecaster() {
        // ỹ = 0 ⇒ M^pols = B_{t−1} G_t⁻¹
        let zs = vec![vec![1.0, 0.5], vec![-0.4, 0.9], vec![0.3, 0.3]];
        let ys = vec![vec![0.7], vec![-0.1]];
        let mut s = PolsState::new(1, 2, 1.0).unwrap();
        for (z, y) in zs.iter().zip(&ys) {
            let (_, st) = s.step(z, &[0.0]);
            s = st.commit(y);
        }
        let (_, st) = s.step(&zs[2], &[0.0]);
        let g = gram(1.0, &zs, 2);
        let mut b = Mat::zeros(1, 2);
        for (y, z) in ys.iter().zip(&zs) {
            b.add_outer(1.0, y, z);
        }
        let expect = crate::matkit::solve(&g, &b.transpose()).unwrap().transpose();
        assert!(st.m_pols().sub(&expect).max_abs_entry() < 1e-12);
    }

    #[test]
    fn fresh_ols_prediction_is_zero() {
        let s = PolsState::new(2, 6, 1.0).unwrap();
        assert_eq!(s.ols_predict(&[1.0; 6]), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        assert!(PolsState::new(1, 1, 0.0).is_err());
        assert!(PolsState::new(1, 1, -1.0).is_err());
    }
}
