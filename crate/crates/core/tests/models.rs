use ordbounds::models::{
    fit_cumulative_logit, fit_logit, fit_multinomial_logit, CumulativeLogitLikelihood, LogitLikelihood,
    MultinomialLikelihood,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn sig(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Sup-norm error of `grad` against central differences, relative to the
/// sup-norm of the numerical gradient.
fn fd_error(f: impl Fn(&[f64]) -> f64, at: &[f64], grad: &[f64]) -> f64 {
    let h = 1e-5;
    let mut num = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let mut up = at.to_vec();
        let mut dn = at.to_vec();
        up[i] += h;
        dn[i] -= h;
        num.push((f(&up) - f(&dn)) / (2.0 * h));
    }
    let scale = num.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    num.iter().zip(grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn covariates(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

#[test]
fn cumulative_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = covariates(&mut rng, 150, 2);
    let y: Vec<usize> = (0..150).map(|_| rng.random_range(0..4)).collect();
    let w: Vec<f64> = (0..150).map(|_| rng.random_range(0.2..2.0)).collect();
    let lik = CumulativeLogitLikelihood::new(&y, &x, Some(&w), 4).unwrap();
    for _ in 0..100 {
        let mut alpha = vec![rng.random_range(-2.0..0.0)];
        for _ in 0..2 {
            let last = *alpha.last().unwrap();
            alpha.push(last + rng.random_range(0.2..1.5));
        }
        let beta: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, g) = lik.evaluate(&alpha, &beta);
        let mut at = alpha.clone();
        at.extend(&beta);
        let err = fd_error(|t| lik.evaluate(&t[..3], &t[3..]).0, &at, &g);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn logit_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = covariates(&mut rng, 150, 2);
    let d: Vec<bool> = (0..150).map(|_| rng.random_bool(0.4)).collect();
    let lik = LogitLikelihood::new(&d, &x, None).unwrap();
    for _ in 0..100 {
        let at: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = lik.evaluate(&at);
        let err = fd_error(|t| lik.evaluate(t).0, &at, &g);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn multinomial_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = covariates(&mut rng, 150, 2);
    let targets: Vec<Vec<f64>> = (0..150)
        .map(|_| {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let lik = MultinomialLikelihood::new(&targets, &x, None, 1).unwrap();
    assert_eq!(lik.dim(), 6);
    for _ in 0..100 {
        let at: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = lik.evaluate(&at);
        let err = fd_error(|t| lik.evaluate(t).0, &at, &g);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn cumulative_recovers_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 100_000;
    let x = covariates(&mut rng, n, 1);
    let y: Vec<usize> = x
        .iter()
        .map(|r| {
            let u: f64 = rng.random();
            let lin = -2.0 * r[0];
            if u <= sig(-1.0 + lin) {
                0
            } else if u <= sig(0.5 + lin) {
                1
            } else {
                2
            }
        })
        .collect();
    let m = fit_cumulative_logit(&y, &x, None).unwrap();
    assert!((m.cutpoints()[0] + 1.0).abs() < 0.05, "{:?}", m.cutpoints());
    assert!((m.cutpoints()[1] - 0.5).abs() < 0.05, "{:?}", m.cutpoints());
    assert!((m.slope()[0] + 2.0).abs() < 0.05, "{:?}", m.slope());
    assert!(m.info.trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn logit_recovers_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 100_000;
    let x = covariates(&mut rng, n, 1);
    let d: Vec<bool> = x.iter().map(|r| rng.random_bool(sig(0.3 - 0.8 * r[0]))).collect();
    let m = fit_logit(&d, &x).unwrap();
    assert!((m.coefficients()[0] - 0.3).abs() < 0.05);
    assert!((m.coefficients()[1] + 0.8).abs() < 0.05);
}

#[test]
fn multinomial_recovers_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 100_000;
    let x: Vec<Vec<f64>> =
        (0..n).map(|_| vec![rng.sample(StandardNormal), if rng.random_bool(0.5) { 1.0 } else { 0.0 }]).collect();
    let g: Vec<usize> = x
        .iter()
        .map(|r| {
            let ea = (0.5 + r[0]).exp();
            let en = (-0.5 + r[0]).exp();
            let u: f64 = rng.random::<f64>() * (ea + 1.0 + en);
            if u < ea {
                0
            } else if u < ea + 1.0 {
                1
            } else {
                2
            }
        })
        .collect();
    let m = fit_multinomial_logit(&g, &x, None, 1).unwrap();
    let truth = [(0, [0.5, 1.0, 0.0]), (2, [-0.5, 1.0, 0.0])];
    for (class, want) in truth {
        for (got, w) in m.coefficients(class).unwrap().iter().zip(want) {
            assert!((got - w).abs() < 0.05, "class {class}: {got} vs {w}");
        }
    }
}

#[test]
fn cumulative_hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = covariates(&mut rng, 120, 1);
    let y: Vec<usize> = (0..120).map(|_| rng.random_range(0..3)).collect();
    let lik = CumulativeLogitLikelihood::new(&y, &x, None, 3).unwrap();
    for _ in 0..20 {
        let a0 = rng.random_range(-1.5..0.0);
        let alpha = vec![a0, a0 + rng.random_range(0.3..1.5)];
        let beta = vec![rng.random_range(-1.0..1.0)];
        let h = lik.hessian(&alpha, &beta);
        let at = [alpha[0], alpha[1], beta[0]];
        for i in 0..3 {
            let row = h[i].clone();
            let err = fd_error(|t| lik.evaluate(&t[..2], &t[2..]).1[i], &at, &row);
            assert!(err < 1e-4, "row {i}: relative error {err}");
        }
    }
}
