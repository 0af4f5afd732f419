//! Linear dynamical systems `x_{t+1} = A x_t + w_t`, `y_t = C x_t + v_t`.
//!
//! Systems carry their Jordan metadata (largest block size `r` and the
//! conditioning `κ_A` of the similarity that brings `A` to Jordan form) as
//! declared values. Registration checks them against the power bounds
//! `‖A^k‖ ≤ κ_A (1+k)^{r−1}` and `Σ_{s≤k} ‖A^s‖ ≤ κ_A (1+k)^r` for `k ≤ 200`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, norm, operator_norm, Mat};

/// Horizon over which declared Jordan metadata is validated.
pub const POWER_CHECK_HORIZON: usize = 200;
const POWER_CHECK_SLACK: f64 = 1e-9;
const OVERFLOW_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumTag {
    RealDiagonalizable,
    RealJordan,
    ComplexMarginal,
    Stable,
}

/// A marginally stable system together with its analytic Jordan metadata.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub a: Mat,
    pub c: Mat,
    pub jordan_r: usize,
    pub kappa_a: f64,
    pub spectrum_tag: SpectrumTag,
}

impl SystemSpec {
    /// Validates shapes, `ρ(A) ≤ 1`, `κ_A ≥ 1` and the declared power bounds.
    pub fn new(
        name: impl Into<String>,
        a: Mat,
        c: Mat,
        jordan_r: usize,
        kappa_a: f64,
        spectrum_tag: SpectrumTag,
    ) -> Result<Self> {
        let name = name.into();
        if !a.is_square() || c.cols() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "SystemSpec::new",
                expected: "A n×n and C p×n".into(),
                got: format!("A {}x{}, C {}x{}", a.rows(), a.cols(), c.rows(), c.cols()),
            });
        }
        if !a.is_finite() || !c.is_finite() {
            return Err(Error::NonFinite("SystemSpec::new"));
        }
        if jordan_r == 0 || jordan_r > a.rows() {
            return Err(Error::InvalidArgument(format!(
                "jordan_r = {jordan_r} must lie in 1..={}",
                a.rows()
            )));
        }
        if !(kappa_a >= 1.0) {
            return Err(Error::InvalidArgument(format!("kappa_a = {kappa_a} < 1")));
        }
        let rho = matkit::spectral_radius(&a)?;
        if rho > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "system `{name}` has spectral radius {rho} > 1"
            )));
        }
        let sys = SystemSpec {
            name,
            a,
            c,
            jordan_r,
            kappa_a,
            spectrum_tag,
        };
        if let Some(k) = sys.power_bound_violation(POWER_CHECK_HORIZON) {
            return Err(Error::InvalidArgument(format!(
                "declared (r = {}, kappa_a = {}) fails the power bound at k = {k} for `{}`",
                sys.jordan_r, sys.kappa_a, sys.name
            )));
        }
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn p(&self) -> usize {
        self.c.rows()
    }

    pub fn norm_c(&self) -> f64 {
        operator_norm(&self.c)
    }

    /// First `k ≤ horizon` at which either power bound fails, if any.
    pub fn power_bound_violation(&self, horizon: usize) -> Option<usize> {
        let r = self.jordan_r as i32;
        let mut cum = 0.0;
        for (k, ak) in matkit::mat_power_seq(&self.a, horizon).iter().enumerate() {
            let nk = operator_norm(ak);
            cum += nk;
            let base = 1.0 + k as f64;
            let single = self.kappa_a * base.powi(r - 1);
            let total = self.kappa_a * base.powi(r);
            if nk > single * (1.0 + POWER_CHECK_SLACK) || cum > total * (1.0 + POWER_CHECK_SLACK) {
                return Some(k);
            }
        }
        None
    }

    /// `x_{t+1} = A x_t + w_t, y_t = C x_t + v_t`, fully observed (`C = I`) variant.
    pub fn fully_observed(&self) -> Result<SystemSpec> {
        SystemSpec::new(
            format!("{}-full", self.name),
            self.a.clone(),
            Mat::identity(self.n()),
            self.jordan_r,
            self.kappa_a,
            self.spectrum_tag,
        )
    }
}

/// Smallest `κ_A ≥ 1` passing both power bounds up to `horizon`, times 1.05.
pub fn calibrate_kappa(a: &Mat, jordan_r: usize, horizon: usize) -> f64 {
    let r = jordan_r as i32;
    let mut worst: f64 = 1.0;
    let mut cum = 0.0;
    for (k, ak) in matkit::mat_power_seq(a, horizon).iter().enumerate() {
        let nk = operator_norm(ak);
        cum += nk;
        let base = 1.0 + k as f64;
        worst = worst.max(nk / base.powi(r - 1)).max(cum / base.powi(r));
    }
    (1.05 * worst).max(1.0)
}

pub const BUILTIN_SYSTEMS: &[&str] = &[
    "double_integrator",
    "symmetric_swap",
    "jordan3",
    "rotation_jordan",
    "scalar_stable",
];

/// Double integrator `[[1,1],[0,1]]`, `C = [1, 0]`, `r = 2`, `κ_A = 1` (A is its own Jordan form).
pub fn double_integrator() -> SystemSpec {
    SystemSpec::new(
        "double_integrator",
        Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]),
        Mat::from_rows(&[[1.0, 0.0]]),
        2,
        1.0,
        SpectrumTag::RealJordan,
    )
    .expect("builtin system is valid")
}

/// Swap `[[0,1],[1,0]]` with eigenvalues ±1, `C = [1, 0.5]`, orthogonally diagonalizable.
pub fn symmetric_swap() -> SystemSpec {
    SystemSpec::new(
        "symmetric_swap",
        Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]),
        Mat::from_rows(&[[1.0, 0.5]]),
        1,
        1.0,
        SpectrumTag::RealDiagonalizable,
    )
    .expect("builtin system is valid")
}

/// Single 3×3 Jordan block at 1, `C = [1, 0, 0]`.
pub fn jordan3() -> SystemSpec {
    SystemSpec::new(
        "jordan3",
        Mat::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]]),
        Mat::from_rows(&[[1.0, 0.0, 0.0]]),
        3,
        1.0,
        SpectrumTag::RealJordan,
    )
    .expect("builtin system is valid")
}

/// `[[R_θ, I], [0, R_θ]]` with `C = [1, 0.3, 0, 0]`: eigenvalues `e^{±iθ}`, each with a size-2 block.
///
/// `A^k = diag(R^k, R^k) · [[I, k R⁻¹], [0, I]]` and the right factor is
/// orthogonally similar to the scalar Jordan power, so `‖A^k‖ ≤ 1 + k` and `κ_A = 1`.
pub fn rotation_jordan(theta: f64) -> SystemSpec {
    let (c, s) = (theta.cos(), theta.sin());
    SystemSpec::new(
        "rotation_jordan",
        Mat::from_rows(&[
            [c, -s, 1.0, 0.0],
            [s, c, 0.0, 1.0],
            [0.0, 0.0, c, -s],
            [0.0, 0.0, s, c],
        ]),
        Mat::from_rows(&[[1.0, 0.3, 0.0, 0.0]]),
        2,
        1.0,
        SpectrumTag::ComplexMarginal,
    )
    .expect("builtin system is valid")
}

/// Scalar `a = 0.5, c = 1`.
pub fn scalar_stable() -> SystemSpec {
    SystemSpec::new(
        "scalar_stable",
        Mat::diag(&[0.5]),
        Mat::identity(1),
        1,
        1.0,
        SpectrumTag::Stable,
    )
    .expect("builtin system is valid")
}

/// Default rotation angle of the complex-marginal system.
pub const ROTATION_THETA: f64 = 0.7;

pub fn builtin_system(name: &str) -> Result<SystemSpec> {
    match name {
        "double_integrator" => Ok(double_integrator()),
        "symmetric_swap" => Ok(symmetric_swap()),
        "jordan3" => Ok(jordan3()),
        "rotation_jordan" => Ok(rotation_jordan(ROTATION_THETA)),
        "scalar_stable" => Ok(scalar_stable()),
        other => Err(Error::InvalidConfig(format!(
            "unknown system `{other}`; builtins are {BUILTIN_SYSTEMS:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Nonstochastic,
    Gaussian,
}

/// Disturbance generator: bias + sinusoid + a bounded (uniform) or Gaussian draw.
///
/// Draws come from a ChaCha stream keyed by `(seed, t, stream)` and positioned
/// at a fixed offset per `t`, so any sample can be regenerated on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub bias_w: Vec<f64>,
    pub amp_w: Vec<f64>,
    #[serde(default)]
    pub freq_w: f64,
    #[serde(default)]
    pub uniform_w: f64,
    pub bias_v: Vec<f64>,
    pub amp_v: Vec<f64>,
    #[serde(default)]
    pub freq_v: f64,
    #[serde(default)]
    pub uniform_v: f64,
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

/// Sinusoid frequencies used when a setup leaves them unstated.
pub const DEFAULT_FREQ_W: f64 = 0.05;
pub const DEFAULT_FREQ_V: f64 = 0.08;

const STREAM_W: u64 = 0;
const STREAM_V: u64 = 1;
const WORDS_PER_STEP: u128 = 256;

impl NoiseModel {
    pub fn zero(n: usize, p: usize) -> Self {
        NoiseModel {
            bias_w: vec![0.0; n],
            amp_w: vec![0.0; n],
            freq_w: DEFAULT_FREQ_W,
            uniform_w: 0.0,
            bias_v: vec![0.0; p],
            amp_v: vec![0.0; p],
            freq_v: DEFAULT_FREQ_V,
            uniform_v: 0.0,
            kind: NoiseKind::Nonstochastic,
            seed: 0,
        }
    }

    /// Pure bounded uniform noise, `ε_w ∈ [−c_w, c_w]^n`, `ε_v ∈ [−c_v, c_v]^p`.
    pub fn uniform(n: usize, p: usize, c_w: f64, c_v: f64, seed: u64) -> Self {
        NoiseModel {
            uniform_w: c_w,
            uniform_v: c_v,
            seed,
            ..NoiseModel::zero(n, p)
        }
    }

    pub fn gaussian(n: usize, p: usize, c_w: f64, c_v: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::Gaussian,
            ..NoiseModel::uniform(n, p, c_w, c_v, seed)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.bias_w.len()
    }

    pub fn p(&self) -> usize {
        self.bias_v.len()
    }

    pub fn check_dims(&self, n: usize, p: usize) -> Result<()> {
        let ok = self.bias_w.len() == n
            && self.amp_w.len() == n
            && self.bias_v.len() == p
            && self.amp_v.len() == p;
        if !ok {
            return Err(Error::DimensionMismatch {
                op: "NoiseModel",
                expected: format!("w vectors of length {n}, v vectors of length {p}"),
                got: format!(
                    "bias_w {}, amp_w {}, bias_v {}, amp_v {}",
                    self.bias_w.len(),
                    self.amp_w.len(),
                    self.bias_v.len(),
                    self.amp_v.len()
                ),
            });
        }
        if self.uniform_w < 0.0 || self.uniform_v < 0.0 {
            return Err(Error::InvalidArgument("noise bounds must be nonnegative".into()));
        }
        Ok(())
    }

    /// `(w_t, v_t)`; a pure function of `(self, t)`.
    pub fn sample(&self, t: usize) -> (Vec<f64>, Vec<f64>) {
        let w = self.component(t, STREAM_W, &self.bias_w, &self.amp_w, self.freq_w, self.uniform_w);
        let v = self.component(t, STREAM_V, &self.bias_v, &self.amp_v, self.freq_v, self.uniform_v);
        (w, v)
    }

    fn component(&self, t: usize, stream: u64, bias: &[f64], amp: &[f64], freq: f64, scale: f64) -> Vec<f64> {
        let phase = (freq * t as f64).sin();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(t as u128 * WORDS_PER_STEP);
        bias.iter()
            .zip(amp)
            .map(|(b, a)| {
                let eps = if scale == 0.0 {
                    0.0
                } else {
                    match self.kind {
                        NoiseKind::Nonstochastic => scale * (2.0 * rng.random::<f64>() - 1.0),
                        NoiseKind::Gaussian => scale * rng.sample::<f64, _>(StandardNormal),
                    }
                };
                b + a * phase + eps
            })
            .collect()
    }

    /// Per-step norm bounds `(C_w, C_v)` implied by the model:
    /// `‖bias‖ + ‖amp‖ + C·√dim`. Only meaningful for the bounded kind.
    pub fn effective_bounds(&self) -> Result<(f64, f64)> {
        if self.kind != NoiseKind::Nonstochastic {
            return Err(Error::NotApplicable(
                "norm bounds exist only for nonstochastic noise",
            ));
        }
        let cw = norm(&self.bias_w) + norm(&self.amp_w) + self.uniform_w * (self.n() as f64).sqrt();
        let cv = norm(&self.bias_v) + norm(&self.amp_v) + self.uniform_v * (self.p() as f64).sqrt();
        Ok((cw, cv))
    }

    /// Per-coordinate second moments `bias² + amp²/2 + σ²`, where `σ² = C²/3`
    /// for the uniform draw and `C²` for the Gaussian one.
    pub fn rms_second_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let var = |c: f64| match self.kind {
            NoiseKind::Nonstochastic => c * c / 3.0,
            NoiseKind::Gaussian => c * c,
        };
        let moments = |bias: &[f64], amp: &[f64], c: f64| -> Vec<f64> {
            bias.iter()
                .zip(amp)
                .map(|(b, a)| b * b + a * a / 2.0 + var(c))
                .collect()
        };
        (
            moments(&self.bias_w, &self.amp_w, self.uniform_w),
            moments(&self.bias_v, &self.amp_v, self.uniform_v),
        )
    }
}

/// A simulated run with every disturbance stored for replay.
///
/// Indexing follows the time convention of the model: states `x_0..x_T`,
/// outputs `y_1..y_T`, process noise `w_0..w_{T−1}`, measurement noise
/// `v_1..v_T`. Out-of-range accessors return zeros (`y_s = 0` for `s ≤ 0`).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub horizon: usize,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    pub fn p(&self) -> usize {
        self.v.first().map_or(0, Vec::len)
    }

    pub fn x(&self, t: usize) -> &[f64] {
        &self.states[t]
    }

    /// `y_t` for `1 ≤ t ≤ T`.
    pub fn y(&self, t: usize) -> &[f64] {
        &self.outputs[t - 1]
    }

    /// `y_t` with zero padding for `t ≤ 0`.
    pub fn y_padded(&self, t: i64) -> Vec<f64> {
        if t <= 0 {
            vec![0.0; self.p()]
        } else {
            self.outputs[t as usize - 1].clone()
        }
    }

    /// `w_t` with zeros for `t < 0`.
    pub fn w_padded(&self, t: i64) -> Vec<f64> {
        if t < 0 {
            vec![0.0; self.n()]
        } else {
            self.w[t as usize].clone()
        }
    }

    /// `v_t` with zeros for `t ≤ 0`.
    pub fn v_padded(&self, t: i64) -> Vec<f64> {
        if t <= 0 {
            vec![0.0; self.p()]
        } else {
            self.v[t as usize - 1].clone()
        }
    }
}

/// Rolls the system forward from `x_0 = 0` with noises drawn from `model`.
pub fn simulate(sys: &SystemSpec, model: &NoiseModel, horizon: usize) -> Result<Trajectory> {
    model.check_dims(sys.n(), sys.p())?;
    simulate_with(sys, horizon, |t| model.sample(t))
}

/// Rolls the system forward with an arbitrary disturbance source.
///
/// `noise(t)` returns `(w_t, v_t)`; `w_t` drives `x_{t+1}` and `v_t` enters
/// `y_t`. The `v` part of `noise(0)` is unused.
pub fn simulate_with(
    sys: &SystemSpec,
    horizon: usize,
    mut noise: impl FnMut(usize) -> (Vec<f64>, Vec<f64>),
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let (n, p) = (sys.n(), sys.p());
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon);
    let mut ws = Vec::with_capacity(horizon);
    let mut vs = Vec::with_capacity(horizon);
    states.push(vec![0.0; n]);
    let (w0, _) = noise(0);
    check_len(&w0, n, "w")?;
    ws.push(w0);
    for t in 1..=horizon {
        let prev = &states[t - 1];
        let x: Vec<f64> = sys
            .a
            .mul_vec(prev)
            .iter()
            .zip(&ws[t - 1])
            .map(|(ax, w)| ax + w)
            .collect();
        if x.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return Err(Error::Overflow { t });
        }
        let (w, v) = noise(t);
        check_len(&v, p, "v")?;
        let y: Vec<f64> = sys.c.mul_vec(&x).iter().zip(&v).map(|(cx, v)| cx + v).collect();
        outputs.push(y);
        vs.push(v);
        if t < horizon {
            check_len(&w, n, "w")?;
            ws.push(w);
        }
        states.push(x);
    }
    Ok(Trajectory {
        horizon,
        states,
        outputs,
        w: ws,
        v: vs,
    })
}

fn check_len(v: &[f64], want: usize, what: &'static str) -> Result<()> {
    if v.len() != want {
        return Err(Error::DimensionMismatch {
            op: "simulate_with",
            expected: format!("{what} of length {want}"),
            got: v.len().to_string(),
        });
    }
    Ok(())
}

/// Growth constants `(C_x, C_y)` with `C_x = κ_A C_w` and `C_y = ‖C‖ C_x + C_v`.
pub fn growth_envelope(sys: &SystemSpec, model: &NoiseModel) -> Result<(f64, f64)> {
    let (cw, cv) = model.effective_bounds()?;
    Ok(growth_envelope_from_bounds(sys.kappa_a, sys.norm_c(), cw, cv))
}

pub fn growth_envelope_from_bounds(kappa_a: f64, norm_c: f64, c_w: f64, c_v: f64) -> (f64, f64) {
    let cx = kappa_a * c_w;
    (cx, norm_c * cx + c_v)
}
