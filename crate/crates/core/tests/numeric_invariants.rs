use fmpols::matkit::{
    self, dare_residual, determinant, eigenvalues_small, inverse, log_det_spd, operator_norm, sherman_morrison,
    solve_dare, Mat,
};
use fmpols::predictor::{oracle, PolsState};
use proptest::prelude::*;

fn mat(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| Mat::from_vec(rows, cols, v).unwrap())
}

fn square() -> impl Strategy<Value = Mat> {
    (1usize..=4).prop_flat_map(|n| mat(n, n, 2.0))
}

/// `(d, λ, z_1..z_T, y_1..y_T, hints)` for a scalar-output regression stream.
fn stream() -> impl Strategy<Value = (usize, f64, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=4, 0.1f64..5.0, 2usize..40).prop_flat_map(|(d, lambda, t)| {
        (
            Just(d),
            Just(lambda),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), t),
            prop::collection::vec(-3.0f64..3.0, t),
            prop::collection::vec(-3.0f64..3.0, t),
        )
    })
}

fn rel_gap(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frobenius() / b.frobenius().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sherman_morrison_matches_direct_inverse(
        base in (1usize..=5).prop_flat_map(|d| (mat(d, d, 1.0), prop::collection::vec(-2.0f64..2.0, d))),
        lambda in 0.1f64..3.0,
    ) {
        let (b, z) = base;
        let d = z.len();
        let g = b.matmul(&b.transpose()).add(&Mat::identity(d).scale(lambda));
        let p = inverse(&g).unwrap();
        let (k, p_new) = sherman_morrison(&p, &z);
        let mut g_new = g.clone();
        g_new.add_outer(1.0, &z, &z);
        let want = inverse(&g_new).unwrap();
        prop_assert!(rel_gap(&p_new, &want) < 1e-9);
        let k_want = want.mul_vec(&z);
        for (a, b) in k.iter().zip(&k_want) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn operator_norm_is_submultiplicative_and_dominates_entries(
        ab in (1usize..=4, 1usize..=4, 1usize..=4).prop_flat_map(|(n, m, k)| (mat(n, m, 3.0), mat(m, k, 3.0))),
    ) {
        let (a, b) = ab;
        let na = operator_norm(&a);
        prop_assert!(operator_norm(&a.matmul(&b)) <= na * operator_norm(&b) * (1.0 + 1e-12) + 1e-14);
        prop_assert!(na + 1e-14 >= a.max_abs_entry());
        prop_assert!(na <= a.frobenius() * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn eigenvalues_respect_trace_and_determinant(a in square()) {
        let eig = eigenvalues_small(&a).unwrap();
        let sum: f64 = eig.values.iter().map(|z| z.re).sum();
        let prod = eig.values.iter().fold(num_complex::Complex64::new(1.0, 0.0), |acc, z| acc * z);
        let scale = 1.0 + a.max_abs_entry().powi(a.rows() as i32);
        prop_assert!((sum - a.trace()).abs() < 1e-9 * (1.0 + a.frobenius()));
        prop_assert!((prod.re - determinant(&a)).abs() < 1e-8 * scale);
        prop_assert!(prod.im.abs() < 1e-8 * scale);
    }

    #[test]
    fn dare_solution_has_small_residual(a in (1usize..=3).prop_flat_map(|n| mat(n, n, 0.7))) {
        let n = a.rows();
        let (c, q, r) = (Mat::identity(n), Mat::identity(n), Mat::identity(n));
        let (p, _) = solve_dare(&a, &c, &q, &r).unwrap();
        prop_assert!(dare_residual(&a, &c, &q, &r, &p).unwrap() < 1e-8 * (1.0 + p.frobenius()));
    }

    #[test]
    fn compensated_solve_satisfies_well_conditioned_systems(
        base in (1usize..=4).prop_flat_map(|d| (mat(d, d, 1.0), mat(2, d, 1.0))),
    ) {
        let (b, rhs) = base;
        let d = b.rows();
        let g = b.matmul(&b.transpose()).add(&Mat::identity(d));
        let x = matkit::Compensated::from_mat(&g).solve_right(&matkit::Compensated::from_mat(&rhs)).unwrap();
        prop_assert!(rel_gap(&x.matmul(&g), &rhs) < 1e-12);
    }

    #[test]
    fn recursion_matches_closed_forms((d, lambda, zs, ys, hints) in stream()) {
        let mut state = PolsState::new(1, d, lambda).unwrap();
        let mut normal = oracle::NormalEquations::new(1, d, lambda);
        for ((z, y), h) in zs.iter().zip(&ys).zip(&hints) {
            let (pred, staged) = state.step(z, &[*h]);
            let want = normal.pols(z, &[*h]).unwrap();
            prop_assert!(rel_gap(staged.m_pols(), &want) < 1e-8);
            prop_assert!((pred[0] - want.mul_vec(z)[0]).abs() < 1e-8 * (1.0 + pred[0].abs()));
            state = staged.commit(&[*y]);
            normal.push(z, &[*y]);
        }
        let ys_vec: Vec<Vec<f64>> = ys.iter().map(|y| vec![*y]).collect();
        let ols = oracle::ols_closed_form(lambda, &zs, &ys_vec, 1, d).unwrap();
        prop_assert!(rel_gap(state.predictor(), &ols) < 1e-8);
        let g = oracle::gram(lambda, &zs, d);
        prop_assert!(rel_gap(&state.gram_inv().matmul(&g), &Mat::identity(d)) < 1e-8);
    }

    #[test]
    fn hinted_regret_bound_holds_against_the_regularized_batch_fit((d, lambda, zs, ys, hints) in stream()) {
        let mut state = PolsState::new(1, d, lambda).unwrap();
        let (mut learner, mut delta_max, mut sum_z_sq) = (0.0, 0.0_f64, 0.0);
        for ((z, y), h) in zs.iter().zip(&ys).zip(&hints) {
            let (pred, staged) = state.step(z, &[*h]);
            learner += (y - pred[0]).powi(2);
            delta_max = delta_max.max((y - h).abs());
            sum_z_sq += matkit::dot(z, z);
            state = staged.commit(&[*y]);
        }
        let m = state.predictor();
        let comparator: f64 = zs.iter().zip(&ys).map(|(z, y)| (y - m.mul_vec(z)[0]).powi(2)).sum();
        let bound = fmpols::analysis::pols_regret_bound(lambda, m.frobenius().powi(2), delta_max, d, sum_z_sq);
        prop_assert!(learner - comparator <= bound * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn elliptical_potential_is_bounded_by_log_det((d, lambda, zs, _ys, _h) in stream()) {
        let mut p = Mat::identity(d).scale(1.0 / lambda);
        let (mut potential, mut sum_z_sq) = (0.0, 0.0);
        for z in &zs {
            let (_, next) = sherman_morrison(&p, z);
            p = next;
            potential += matkit::dot(z, &p.mul_vec(z));
            sum_z_sq += matkit::dot(z, z);
        }
        let log_det = log_det_spd(&oracle::gram(lambda, &zs, d)).unwrap() - d as f64 * lambda.ln();
        let df = d as f64;
        prop_assert!(potential <= log_det + 1e-9);
        prop_assert!(log_det <= df * (sum_z_sq / (lambda * df)).ln_1p() + 1e-9);
    }
}
