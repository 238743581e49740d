mod oracles;

use nalgebra::{DMatrix, DVector};
use prsafe_core::glm::{
    dependent_columns, fit_logistic, log_likelihood, score, vif, DesignMatrix, FitConfig, GlmError, INTERCEPT,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_design(seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(60..=500);
    let p = rng.random_range(1..=6);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        row.extend((1..p).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) { 1.0 } else { 0.0 });
        data.extend(row);
    }
    let mut names = vec![INTERCEPT.to_string()];
    names.extend((1..p).map(|j| format!("x{j}")));
    DesignMatrix::new(DMatrix::from_row_slice(n, p, &data), DVector::from_vec(y), names)
}

fn rows(d: &DesignMatrix) -> Vec<Vec<f64>> {
    d.x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[test]
fn irls_matches_reference_optimizer() {
    for seed in 0..25 {
        let d = random_design(seed);
        let fit = fit_logistic(&d, &FitConfig::default()).unwrap();
        let reference = oracles::reference_logistic(&rows(&d), d.y.as_slice());
        assert!(reference.max_abs_gradient < 1e-8, "reference not converged for seed {seed}: {}", reference.max_abs_gradient);
        for j in 0..fit.num_params() {
            assert!((fit.coefficients[j] - reference.beta[j]).abs() < 1e-6, "seed {seed} beta[{j}]");
            assert!((fit.std_errors[j] - reference.se[j]).abs() < 1e-6, "seed {seed} se[{j}]");
        }
        assert!((fit.log_likelihood - reference.loglik).abs() < 1e-6);
        let n = d.x.nrows() as f64;
        let s = score(&d.x, &d.y, &DVector::from_vec(fit.coefficients.clone()));
        assert!(s.amax() < 1e-6 * n, "seed {seed}: score {}", s.amax());
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let d = random_design(99);
    let p = d.x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let beta = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-2.0..2.0)));
        let g = score(&d.x, &d.y, &beta);
        for j in 0..p {
            let h = 1e-5;
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (log_likelihood(&d.x, &d.y, &up) - log_likelihood(&d.x, &d.y, &down)) / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-6, "component {j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn rescaling_a_column_rescales_its_coefficient() {
    let d = random_design(3);
    if d.x.ncols() < 2 {
        return;
    }
    let base = fit_logistic(&d, &FitConfig::default()).unwrap();
    let mut scaled = d.clone();
    scaled.x.column_mut(1).scale_mut(4.0);
    let fit = fit_logistic(&scaled, &FitConfig::default()).unwrap();
    assert!((fit.coefficients[1] * 4.0 - base.coefficients[1]).abs() < 1e-7);
    assert!((fit.std_errors[1] * 4.0 - base.std_errors[1]).abs() < 1e-7);
    assert!((fit.log_likelihood - base.log_likelihood).abs() < 1e-8);
    assert!((fit.p_values[1] - base.p_values[1]).abs() < 1e-8);
}

#[test]
fn row_order_does_not_matter() {
    let d = random_design(11);
    let n = d.x.nrows();
    let order: Vec<usize> = (0..n).rev().collect();
    let permuted = DesignMatrix::new(d.x.select_rows(&order), DVector::from_iterator(n, order.iter().map(|&i| d.y[i])), d.column_names.clone());
    let a = fit_logistic(&d, &FitConfig::default()).unwrap();
    let b = fit_logistic(&permuted, &FitConfig::default()).unwrap();
    for j in 0..a.num_params() {
        assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-9);
        assert!((a.std_errors[j] - b.std_errors[j]).abs() < 1e-9);
    }
}

#[test]
fn criteria_follow_definitions() {
    let d = random_design(21);
    let f = fit_logistic(&d, &FitConfig::default()).unwrap();
    let (n, p) = (f.n_obs as f64, f.num_params() as f64);
    assert_eq!(f.deviance, -2.0 * f.log_likelihood);
    assert!((f.aic - (2.0 * p - 2.0 * f.log_likelihood)).abs() < 1e-9);
    assert!((f.bic - (p * n.ln() - 2.0 * f.log_likelihood)).abs() < 1e-9);
    for j in 0..f.num_params() {
        assert!((f.odds_ratios[j] - f.coefficients[j].exp()).abs() < 1e-12 * f.odds_ratios[j].max(1.0));
        assert!((f.z_values[j] - f.coefficients[j] / f.std_errors[j]).abs() < 1e-12);
    }
}

#[test]
fn quasi_separation_is_reported() {
    // x <= 0 always fails, x > 0 mixed: the coefficient on x diverges
    let xs: Vec<f64> = (-10..10).map(f64::from).collect();
    let y: Vec<f64> = xs.iter().map(|x| if *x <= 0.0 { 0.0 } else if *x as i64 % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let data: Vec<f64> = xs.iter().flat_map(|x| [1.0, *x, if *x > 0.0 { 1.0 } else { 0.0 }]).collect();
    let d = DesignMatrix::new(
        DMatrix::from_row_slice(20, 3, &data),
        DVector::from_vec(y),
        vec![INTERCEPT.into(), "x".into(), "positive".into()],
    );
    assert!(matches!(fit_logistic(&d, &FitConfig::default()), Err(GlmError::Separation { .. })));
}

#[test]
fn vif_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let n = rng.random_range(30..200);
        let k = rng.random_range(2..6);
        let mut cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        // induce correlation
        for i in 0..n {
            cols[1][i] += 0.8 * cols[0][i];
        }
        let mut data = Vec::new();
        for i in 0..n {
            data.push(1.0);
            data.extend(cols.iter().map(|c| c[i]));
        }
        let mut names = vec![INTERCEPT.to_string()];
        names.extend((0..k).map(|j| format!("c{j}")));
        let d = DesignMatrix::new(DMatrix::from_row_slice(n, k + 1, &data), DVector::zeros(n), names);
        let got = vif(&d).unwrap();
        let want = oracles::normal_equations_vif(&cols);
        for (g, w) in got.iter().zip(&want) {
            assert!((g.vif - w).abs() < 1e-8 * w.max(1.0), "{} vs {w}", g.vif);
        }
    }
}

#[test]
fn rank_check_names_dependent_column() {
    let mut d = random_design(4);
    while d.x.ncols() < 3 {
        d = random_design(d.x.nrows() as u64 + 1000);
    }
    let combo = d.x.column(1) * 2.0 - d.x.column(2);
    let x = d.x.clone().insert_column(d.x.ncols(), 0.0);
    let mut x = x;
    let last = x.ncols() - 1;
    x.set_column(last, &combo);
    let mut names = d.column_names.clone();
    names.push("combo".into());
    let dep = DesignMatrix::new(x, d.y.clone(), names);
    assert_eq!(dependent_columns(&dep), vec!["combo".to_string()]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fitted_coefficients_maximise_likelihood(seed in 0u64..10_000, j in 0usize..6, delta in -0.05f64..0.05) {
        let d = random_design(seed);
        if let Ok(fit) = fit_logistic(&d, &FitConfig::default()) {
            let j = j % fit.num_params();
            let mut beta = DVector::from_vec(fit.coefficients.clone());
            let best = log_likelihood(&d.x, &d.y, &beta);
            beta[j] += delta;
            prop_assert!(log_likelihood(&d.x, &d.y, &beta) <= best + 1e-9);
        }
    }
}

#[test]
fn fitted_probabilities_sum_to_outcomes() {
    for seed in 30..40 {
        let d = random_design(seed);
        let f = fit_logistic(&d, &FitConfig::default()).unwrap();
        let p = prsafe_core::glm::predict(&d.x, &DVector::from_vec(f.coefficients.clone()));
        let n = d.x.nrows() as f64;
        assert!((p.sum() - d.y.sum()).abs() < 1e-8 * n);
        for j in 0..f.num_params() {
            assert_eq!(f.odds_ratios[j] > 1.0, f.coefficients[j] > 0.0);
            let marker = prsafe_core::glm::significance_marker(f.p_values[j]);
            assert_eq!(marker.is_empty(), f.p_values[j] >= 0.05);
        }
        if d.x.ncols() >= 3 {
            for e in vif(&d).unwrap() {
                assert!(e.vif >= 1.0 - 1e-10);
            }
        }
    }
}
