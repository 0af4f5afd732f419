//! Predictive hints `ỹ_t`: guesses of the next observation that the learner
//! may use before committing to a prediction.
//!
//! * Luenberger hints run an observer `x̂_{t+1} = (A − L̃C) x̂_t + L̃ y_t` and
//!   report `C x̂_t`. They need the model.
//! * Polynomial hints pick coefficients `c_0 = 1, c_1..c_m` and report
//!   `ỹ_t = −Σ_{i≥1} c_i y_{t−i}`, so that `y_t − ỹ_t = Σ_i c_i y_{t−i}`. When
//!   `q(z) = Σ c_i z^{m−i}` annihilates the marginal modes of `A` the residual
//!   stays bounded no matter how fast `y_t` grows.
//! * `Zero` turns the learner into the Vovk–Azoury–Warmuth forecaster and
//!   `SelfConsistent` (the learner's own committed prediction) into plain OLS.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lds::SystemSpec;
use crate::matkit::{self, Mat};
use crate::predictor::PolsState;

/// Coefficients of `(z² − 1)^r`, highest power first (degree `2r`).
pub fn diff_coeffs(r: usize) -> Vec<f64> {
    let mut out = vec![0_i64; 2 * r + 1];
    let mut binom = 1_i64;
    for k in 0..=r {
        out[2 * k] = if k % 2 == 0 { binom } else { -binom };
        binom = binom * (r - k) as i64 / (k + 1) as i64;
    }
    out.into_iter().map(|c| c as f64).collect()
}

/// Coefficients of `z^k − 1` (the k-lag filter `ỹ_t = y_{t−k}`).
pub fn lag_coeffs(k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k + 1];
    c[0] = 1.0;
    c[k] -= 1.0;
    c
}

fn convolve_i64(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Monic polynomial with the given roots, expanded to real coefficients.
///
/// Complex roots must come in conjugate pairs (matched within 1e-9). Integer
/// real roots are expanded exactly in integer arithmetic.
pub fn cayley_hamilton_coeffs(roots: &[Complex64]) -> Result<Vec<f64>> {
    let all_integer = roots
        .iter()
        .all(|z| z.im == 0.0 && z.re.fract() == 0.0 && z.re.abs() < 1e6);
    if all_integer {
        let poly = roots
            .iter()
            .fold(vec![1_i64], |acc, z| convolve_i64(&acc, &[1, -(z.re as i64)]));
        return Ok(poly.into_iter().map(|c| c as f64).collect());
    }
    let mut poly = vec![1.0];
    let mut pending: Vec<Complex64> = Vec::new();
    for z in roots {
        if z.im.abs() <= 1e-12 {
            poly = convolve(&poly, &[1.0, -z.re]);
        } else if let Some(pos) = pending.iter().position(|w| (w.conj() - z).norm() <= 1e-9) {
            let w = pending.swap_remove(pos);
            let re = 0.5 * (w.re + z.re);
            let modulus_sq = 0.5 * (w.norm_sqr() + z.norm_sqr());
            poly = convolve(&poly, &[1.0, -2.0 * re, modulus_sq]);
        } else {
            pending.push(*z);
        }
    }
    if !pending.is_empty() {
        return Err(Error::InvalidRoots(format!(
            "complex roots without conjugate partner: {pending:?}"
        )));
    }
    Ok(poly)
}

/// `(z² − 2cosθ·z + 1)^r`, the minimal annihilator of a rotation by `θ` with blocks of size `r`.
pub fn oracle_complex_coeffs(theta: f64, r: usize) -> Result<Vec<f64>> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!("theta = {theta} must lie in (0, π)")));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let base = [1.0, -2.0 * theta.cos(), 1.0];
    Ok((1..r).fold(base.to_vec(), |acc, _| convolve(&acc, &base)))
}

/// `‖q‖₁ = Σ |c_i|`.
pub fn l1_norm(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c.abs()).sum()
}

/// `ỹ_t = −Σ_{i=1}^m c_i y_{t−i}` with `y_s = 0` for `s ≤ 0`.
///
/// `history[s − 1]` holds `y_s`; only `s < t` is read.
pub fn polynomial_hint(coeffs: &[f64], history: &[Vec<f64>], t: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (i, c) in coeffs.iter().enumerate().skip(1) {
        if *c == 0.0 || t <= i {
            continue;
        }
        for (o, y) in out.iter_mut().zip(&history[t - i - 1]) {
            *o -= c * y;
        }
    }
    out
}

/// Observer-based hint with constant memory.
#[derive(Debug, Clone)]
pub struct LuenbergerHint {
    a_l: Mat,
    gain: Mat,
    c: Mat,
    state: Vec<f64>,
    steps: usize,
}

impl LuenbergerHint {
    /// Requires `ρ(A − L̃C) < 1`.
    pub fn new(sys: &SystemSpec, gain: Mat) -> Result<Self> {
        if gain.rows() != sys.n() || gain.cols() != sys.p() {
            return Err(Error::DimensionMismatch {
                op: "LuenbergerHint::new",
                expected: format!("{}x{} gain", sys.n(), sys.p()),
                got: format!("{}x{}", gain.rows(), gain.cols()),
            });
        }
        let a_l = sys.a.sub(&gain.matmul(&sys.c));
        let rho = matkit::spectral_radius(&a_l)?;
        if rho >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "hint gain does not stabilize A − L̃C (spectral radius {rho})"
            )));
        }
        Ok(LuenbergerHint {
            a_l,
            gain,
            c: sys.c.clone(),
            state: vec![0.0; sys.n()],
            steps: 0,
        })
    }

    pub fn gain(&self) -> &Mat {
        &self.gain
    }

    /// Advances with `y_{t−1}` (nothing at `t = 1`) and returns `ỹ_t = C x̂_t`.
    pub fn step(&mut self, y_prev: Option<&[f64]>) -> Vec<f64> {
        if let Some(y) = y_prev {
            let mut next = self.a_l.mul_vec(&self.state);
            for (n, ly) in next.iter_mut().zip(self.gain.mul_vec(y)) {
                *n += ly;
            }
            self.state = next;
        }
        self.steps += 1;
        self.c.mul_vec(&self.state)
    }
}

/// Polynomial-filter hint with `c_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialHint {
    coeffs: Vec<f64>,
}

impl PolynomialHint {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        match coeffs.first() {
            Some(c0) if *c0 == 1.0 => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "polynomial hint needs c_0 = 1, got {coeffs:?}"
                )))
            }
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("PolynomialHint::new"));
        }
        Ok(PolynomialHint { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Order `m`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }
}

#[derive(Debug, Clone)]
pub enum HintProvider {
    Luenberger(LuenbergerHint),
    Polynomial(PolynomialHint),
    Zero,
    SelfConsistent,
}

impl HintProvider {
    /// `ỹ_t` for `t = history.len() + 1`.
    ///
    /// Providers see only revealed outputs and, for `SelfConsistent`, the
    /// learner's committed state and current feature.
    pub fn hint(&mut self, history: &[Vec<f64>], learner: &PolsState, z: &[f64]) -> Vec<f64> {
        let t = history.len() + 1;
        match self {
            HintProvider::Luenberger(h) => h.step(history.last().map(Vec::as_slice)),
            HintProvider::Polynomial(h) => polynomial_hint(&h.coeffs, history, t, learner.p()),
            HintProvider::Zero => vec![0.0; learner.p()],
            HintProvider::SelfConsistent => learner.ols_predict(z),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            HintProvider::Luenberger(_) => "luenberger",
            HintProvider::Polynomial(_) => "polynomial",
            HintProvider::Zero => "zero",
            HintProvider::SelfConsistent => "self_consistent",
        }
    }
}

/// Hint residuals `Δ_t = y_t − ỹ_t` and their running maximum norm.
#[derive(Debug, Clone, Default)]
pub struct ResidualTrace {
    pub residuals: Vec<Vec<f64>>,
    pub running_max: Vec<f64>,
}

impl ResidualTrace {
    pub fn push(&mut self, y: &[f64], hint: &[f64]) {
        let delta = matkit::sub_vec(y, hint);
        let prev = self.running_max.last().copied().unwrap_or(0.0);
        self.running_max.push(prev.max(matkit::norm(&delta)));
        self.residuals.push(delta);
    }

    /// `Δ_max` over all recorded steps.
    pub fn delta_max(&self) -> f64 {
        self.running_max.last().copied().unwrap_or(0.0)
    }

    /// `Δ_max(t)` for `1 ≤ t ≤ len`.
    pub fn delta_max_at(&self, t: usize) -> f64 {
        self.running_max[t - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds;
    use approx::assert_abs_diff_eq;

    #[test]
    fn differencing_coefficients() {
        assert_eq!(diff_coeffs(1), vec![1.0, 0.0, -1.0]);
        assert_eq!(diff_coeffs(2), vec![1.0, 0.0, -2.0, 0.0, 1.0]);
        assert_eq!(diff_coeffs(3), vec![1.0, 0.0, -3.0, 0.0, 3.0, 0.0, -1.0]);
        for r in 1..10 {
            let c = diff_coeffs(r);
            assert_eq!(c.len(), 2 * r + 1);
            assert!(c.iter().skip(1).step_by(2).all(|x| *x == 0.0));
            assert_eq!(l1_norm(&c), 2f64.powi(r as i32));
        }
    }

    #[test]
    fn cayley_hamilton_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(cayley_hamilton_coeffs(&[one, one]).unwrap(), vec![1.0, -2.0, 1.0]);
        let c3 = cayley_hamilton_coeffs(&[one, one, one]).unwrap();
        assert_eq!(c3, vec![1.0, -3.0, 3.0, -1.0]);
        assert_eq!(l1_norm(&c3), 8.0);
        assert_eq!(cayley_hamilton_coeffs(&[Complex64::new(0.0, 0.0)]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn cayley_hamilton_with_conjugate_pair_matches_oracle() {
        let th = 0.7_f64;
        let z = Complex64::from_polar(1.0, th);
        let c = cayley_hamilton_coeffs(&[z, z.conj()]).unwrap();
        let o = oracle_complex_coeffs(th, 1).unwrap();
        for (a, b) in c.iter().zip(&o) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(cayley_hamilton_coeffs(&[z]).is_err());
    }

    #[test]
    fn oracle_polynomial_examples() {
        let c = oracle_complex_coeffs(std::f64::consts::FRAC_PI_2, 1).unwrap();
        assert_abs_diff_eq!(c[0], 1.0);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], 1.0);
        let c = oracle_complex_coeffs(0.7, 1).unwrap();
        assert_abs_diff_eq!(c[1], -1.529684, epsilon = 1e-6);
        // square by explicit self-convolution of (1, b, 1): (1, 2b, 2 + b², 2b, 1)
        let b = -2.0 * 0.7_f64.cos();
        let sq = oracle_complex_coeffs(0.7, 2).unwrap();
        let expect = [1.0, 2.0 * b, 2.0 + b * b, 2.0 * b, 1.0];
        for (a, e) in sq.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-14);
        }
        assert!(oracle_complex_coeffs(0.0, 1).is_err());
        assert!(oracle_complex_coeffs(3.5, 1).is_err());
    }

    #[test]
    fn polynomial_hint_examples() {
        let y: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|v| vec![*v]).collect();
        assert_eq!(polynomial_hint(&[1.0, 0.0, -1.0], &y, 4, 1), vec![2.0]);
        assert_eq!(polynomial_hint(&[1.0], &y, 4, 1), vec![0.0]);
        assert_eq!(polynomial_hint(&[1.0, -2.0, 1.0], &y, 1, 1), vec![0.0]);
        assert_eq!(polynomial_hint(&lag_coeffs(4), &y, 5, 1), vec![1.0]);
        assert!(PolynomialHint::new(vec![2.0, 1.0]).is_err());
        assert!(PolynomialHint::new(vec![]).is_err());
    }

    #[test]
    fn deadbeat_luenberger_hint_is_previous_output() {
        let sys = lds::SystemSpec::new(
            "int",
            Mat::diag(&[1.0]),
            Mat::identity(1),
            1,
            1.0,
            lds::SpectrumTag::RealDiagonalizable,
        )
        .unwrap();
        let mut h = LuenbergerHint::new(&sys, Mat::diag(&[1.0])).unwrap();
        assert_eq!(h.step(None), vec![0.0]);
        for y in [3.0, -1.0, 7.5] {
            assert_eq!(h.step(Some(&[y])), vec![y]);
        }
    }

    #[test]
    fn luenberger_hint_rejects_unstable_gain() {
        let sys = lds::double_integrator();
        assert!(LuenbergerHint::new(&sys, Mat::zeros(2, 1)).is_err());
    }

    #[test]
    fn residual_trace_running_max() {
        let mut tr = ResidualTrace::default();
        tr.push(&[1.0], &[0.0]);
        tr.push(&[0.5], &[0.0]);
        tr.push(&[-3.0], &[0.0]);
        assert_eq!(tr.running_max, vec![1.0, 1.0, 3.0]);
        assert_eq!(tr.delta_max(), 3.0);
    }

    #[test]
    fn zero_and_self_consistent_dispatch() {
        let s = PolsState::new(1, 2, 1.0).unwrap();
        let mut zero = HintProvider::Zero;
        assert_eq!(zero.hint(&[vec![4.0]], &s, &[4.0, 0.0]), vec![0.0]);
        let mut sc = HintProvider::SelfConsistent;
        assert_eq!(sc.hint(&[], &s, &[0.0, 0.0]), vec![0.0]);
        let (_, st) = s.step(&[1.0, 0.0], &[0.0]);
        let s = st.commit(&[2.0]);
        let z = [2.0, 1.0];
        assert_eq!(sc.hint(&[vec![1.0], vec![2.0]], &s, &z), s.ols_predict(&z));
    }
}
