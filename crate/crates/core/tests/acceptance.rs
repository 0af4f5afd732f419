//! Acceptance criteria: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Each library check is paired with an oracle written here from scratch
//! where one is cheap to state independently.

#![allow(clippy::needless_range_loop)]

use fmpols::lds;
use fmpols::predictor::PolsState;
use fmpols::verify::{self, Check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gauss–Jordan solve of `G m = b`, kept separate from the library's LU.
fn gauss_jordan(mut g: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| g[i][k].abs().total_cmp(&g[j][k].abs())).unwrap();
        g.swap(k, piv);
        b.swap(k, piv);
        let d = g[k][k];
        for j in 0..n {
            g[k][j] /= d;
        }
        b[k] /= d;
        for i in 0..n {
            if i != k {
                let f = g[i][k];
                for j in 0..n {
                    g[i][j] -= f * g[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    b
}

/// Scalar-output OLS iterates from explicit normal equations.
fn independent_ols_gap() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let d = rng.random_range(1..=6);
        let lambda = 0.5;
        let mut state = PolsState::new(1, d, lambda).unwrap();
        let mut g = vec![vec![0.0; d]; d];
        for (i, row) in g.iter_mut().enumerate() {
            row[i] = lambda;
        }
        let mut b = vec![0.0; d];
        for _ in 0..50 {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: f64 = rng.random_range(-1.0..1.0);
            let hint = state.ols_predict(&z);
            let (_, staged) = state.step(&z, &hint);
            let m = gauss_jordan(g.clone(), b.clone());
            for (j, mj) in m.iter().enumerate() {
                worst = worst.max((staged.m_pols()[(0, j)] - mj).abs());
            }
            for i in 0..d {
                for j in 0..d {
                    g[i][j] += z[i] * z[j];
                }
                b[i] += y * z[i];
            }
            state = staged.commit(&[y]);
        }
    }
    worst
}

/// `(J² − I)^r` by integer arithmetic on explicit arrays.
fn integer_annihilation() -> bool {
    for r in 1..=3usize {
        for lam in [-1i64, 1] {
            let mut j = vec![vec![0i64; r]; r];
            for i in 0..r {
                j[i][i] = lam;
                if i + 1 < r {
                    j[i][i + 1] = 1;
                }
            }
            let mul = |a: &Vec<Vec<i64>>, b: &Vec<Vec<i64>>| -> Vec<Vec<i64>> {
                (0..r).map(|i| (0..r).map(|k| (0..r).map(|m| a[i][m] * b[m][k]).sum()).collect()).collect()
            };
            let mut f = mul(&j, &j);
            for i in 0..r {
                f[i][i] -= 1;
            }
            let mut p: Vec<Vec<i64>> = (0..r).map(|i| (0..r).map(|k| i64::from(i == k)).collect()).collect();
            for _ in 0..r {
                p = mul(&p, &f);
            }
            if p.iter().flatten().any(|x| *x != 0) {
                return false;
            }
        }
    }
    true
}

/// Direct 2-lag residuals `y_t − y_{t−2}` against the closed-form bound.
fn independent_two_lag_residual() -> f64 {
    let sys = lds::symmetric_swap();
    let noise = fmpols::config::preset("exp2").unwrap().noise.with_seed(99);
    let traj = lds::simulate(&sys, &noise, 2000).unwrap();
    (1..=2000)
        .map(|t| {
            let prev = if t > 2 { traj.y(t - 2)[0] } else { 0.0 };
            (traj.y(t)[0] - prev).abs()
        })
        .fold(0.0, f64::max)
}

fn with_oracle(mut c: Check, ok: bool, note: String) -> Check {
    c.passed &= ok;
    c.detail.push_str(&format!("; {note}"));
    c
}

fn main() {
    let gap = independent_ols_gap();
    let annihilated = integer_annihilation();
    let two_lag = independent_two_lag_residual();
    // Two-lag residual constant for the swap system (n = 2, κ_A = 1): 2C_v + 6‖C‖C_w.
    let (c_w, c_v) = fmpols::config::preset("exp2").unwrap().noise.effective_bounds().unwrap();
    let swap_bound = 2.0 * c_v + 6.0 * 1.25f64.sqrt() * c_w;

    let checks = vec![
        with_oracle(verify::ols_recovery(), gap <= 1e-8, format!("Gauss–Jordan oracle gap {gap:.3e}")),
        verify::recursion_vs_closed_form(),
        verify::regret_inequality(),
        verify::filtered_sum_oracle(),
        with_oracle(
            verify::marginal_annihilation(),
            annihilated,
            format!("integer oracle {}", if annihilated { "exact zero" } else { "nonzero" }),
        ),
        verify::exp1_reproduction(),
        with_oracle(
            verify::two_lag_bound(),
            two_lag <= swap_bound,
            format!("direct residual {two_lag:.4} vs {swap_bound:.4}"),
        ),
        verify::decomposition(),
        verify::truncation_and_prediction(),
        verify::exp2_fixed_gain(),
        verify::exp_a3_negative_control(),
        verify::lambda_sensitivity(),
        verify::determinism(),
    ];
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<usize> = checks.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    println!("{} of {} criteria passed", checks.len() - failed.len(), checks.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
