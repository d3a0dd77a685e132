//! Seeded comparisons between library routines and the oracles, each
//! reduced to the number its tolerance applies to.

use ndarray::{array, Array1, Array2, Axis};
use vdpt_core::data::Cohort;
use vdpt_core::drift::{chi2_goodness_of_fit, ks_2sample};
use vdpt_core::eval::metrics::roc_auc;
use vdpt_core::influence::{fi_local, influence_up_loss, InfluenceConfig};
use vdpt_core::mlp::MlpParams;
use vdpt_core::numeric::SeededRng;
use vdpt_core::vdp::{elbo, elbo_gradients, linear_propagate, ElboConfig, MomentVector, VdpLayer};

use super::*;

pub const LAMBDA: f64 = 0.01;

/// Largest deviation, in Monte-Carlo standard errors, of the propagated mean
/// and covariance of a 3-to-2 stochastic layer with a correlated input.
pub fn mc_linear_worst_z(samples: usize) -> f64 {
    let layer = VdpLayer {
        mu_w: array![[0.8, -0.4, 0.3], [0.2, 0.5, -0.9]],
        rho_w: array![-1.2, -2.5],
        mu_b: array![0.1, -0.3],
        rho_b: array![-2.0, -1.5],
    };
    let mean = array![0.5, -1.0, 0.7];
    let cov = array![[0.30, 0.05, -0.02], [0.05, 0.20, 0.04], [-0.02, 0.04, 0.25]];
    let exact = linear_propagate(&layer, &MomentVector::new(mean.clone(), cov.clone()).unwrap()).unwrap();
    let mc = mc_linear(&layer, &mean.to_vec(), &to_mat(&cov), samples, &mut SeededRng::new(4));
    let mut worst = 0.0f64;
    for n in 0..2 {
        worst = worst.max((exact.mean[n] - mc.mean[n]).abs() / mc.mean_se[n]);
        for m in 0..2 {
            worst = worst.max((exact.cov[[n, m]] - mc.cov[n][m]).abs() / mc.cov_se[n][m]);
        }
    }
    worst
}

/// Largest scaled difference between the scalar forward pass and the
/// library's explicit and factored routes, over several architectures.
pub fn scalar_network_worst_diff() -> f64 {
    let mut worst = 0.0f64;
    for (widths, seed) in [(vec![12, 5, 5, 2], 1u64), (vec![12, 8, 2], 2), (vec![4, 6, 6, 6, 3], 3)] {
        let params = random_vdp(&widths, seed);
        let mut rng = SeededRng::new(seed + 100);
        for _ in 0..5 {
            let x = Array1::from_shape_fn(widths[0], |_| rng.normal());
            let oracle = scalar_forward(&params, x.as_slice().unwrap());
            let (logits, probs) = params.propagate_explicit(x.view()).unwrap();
            let fast = params.logit_moments(x.view()).unwrap();
            let fast_probs = params.output_moments(x.view()).unwrap();
            for (m, om, oc) in [
                (&logits, &oracle.logit_mean, &oracle.logit_cov),
                (&fast, &oracle.logit_mean, &oracle.logit_cov),
                (&probs, &oracle.prob_mean, &oracle.prob_cov),
                (&fast_probs, &oracle.prob_mean, &oracle.prob_cov),
            ] {
                worst = worst
                    .max(max_scaled_diff(m.mean.as_slice().unwrap(), om))
                    .max(max_scaled_diff_mat(&to_mat(&m.cov), oc));
            }
            let pred = params.predict(x.view()).unwrap();
            worst = worst
                .max((pred.probability - oracle.prob_mean[1]).abs())
                .max((pred.variance - oracle.prob_cov[1][1]).abs());
        }
    }
    worst
}

/// Backprop of weighted BCE on a seeded 12-5-5-1 network.
pub fn mlp_fd_error() -> f64 {
    let mut rng = SeededRng::new(17);
    let p = MlpParams::init(12, &[5, 5], &mut rng);
    let mut p = p;
    for layer in &mut p.layers {
        layer.bias.mapv_inplace(|_| 0.2 * rng.normal());
    }
    let x = Array2::from_shape_fn((9, 12), |_| rng.normal());
    let y: Vec<u8> = (0..9).map(|i| u8::from(i % 3 == 0)).collect();
    let pw = 3.5;
    let (_, g) = p.backprop(x.view(), &y, pw).unwrap();
    fd_max_rel_error(
        |t| p.with_flat(t).unwrap().loss(x.view(), &y, pw).unwrap(),
        &p.flatten(),
        &g.values,
        1e-5,
    )
}

/// ELBO gradients of a seeded 12-5-5-2 stochastic network.
pub fn vdp_fd_error() -> f64 {
    let p = random_vdp(&[12, 5, 5, 2], 21);
    let mut rng = SeededRng::new(22);
    let x = Array2::from_shape_fn((6, 12), |_| rng.normal());
    let y = [0, 1, 1, 0, 0, 1];
    let config = ElboConfig::new(60);
    let (_, g) = elbo_gradients(&p, x.view(), &y, &config).unwrap();
    fd_max_rel_error(
        |t| elbo(&p.with_flat(t).unwrap(), x.view(), &y, &config).unwrap().loss,
        &p.flatten(),
        &g.values,
        1e-4,
    )
}

/// Pearson correlation between predicted and retrained loss changes for 20
/// removals from a 100-point logistic problem.
pub fn loo_correlation() -> f64 {
    let mut rng = SeededRng::new(7);
    let n = 100;
    let x = Array2::from_shape_fn((n, 3), |_| rng.normal());
    let y: Vec<u8> = x
        .rows()
        .into_iter()
        .map(|r| u8::from(1.2 * r[0] - 0.7 * r[1] + 0.3 * r[2] + rng.normal() > 0.0))
        .collect();
    let obj = logistic_objective(&newton_logistic(x.view(), &y, LAMBDA), 1.0, LAMBDA);
    let test_x = array![0.9, -1.1, 0.4];
    let test_y = 0u8;
    let config = InfluenceConfig {
        cg_tol: 1e-10,
        ..InfluenceConfig::default()
    };
    let base_loss = obj.instance_loss(test_x.view(), test_y).unwrap();
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for i in rng.sample_indices(n, 20) {
        let up = influence_up_loss(&obj, x.view(), &y, (x.row(i), y[i]), (test_x.view(), test_y), &config).unwrap();
        // removing z is upweighting it by −1/n
        predicted.push(-up / n as f64);
        let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let xs = x.select(Axis(0), &keep);
        let ys: Vec<u8> = keep.iter().map(|&k| y[k]).collect();
        let loo = logistic_objective(&newton_logistic(xs.view(), &ys, LAMBDA), 1.0, LAMBDA);
        actual.push(loo.instance_loss(test_x.view(), test_y).unwrap() - base_loss);
    }
    pearson(&predicted, &actual)
}

/// `fi_local` on a 12-feature weighted logistic model (13 parameters)
/// against the explicit-Hessian oracle: the largest `‖fi − oracle‖∞ /
/// ‖oracle‖∞` over four test points, and the test labels they received.
pub fn fi_oracle_error() -> (f64, Vec<u8>) {
    let mut rng = SeededRng::new(31);
    let (n, d) = (150, 12);
    let x = Array2::from_shape_fn((n, d), |_| rng.normal());
    let beta: Vec<f64> = (0..d).map(|j| if j < 4 { 1.0 - 0.4 * j as f64 } else { 0.0 }).collect();
    let y: Vec<u8> = x
        .rows()
        .into_iter()
        .map(|r| u8::from(r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() - 1.0 + rng.normal() > 0.0))
        .collect();
    let pos_weight = 2.5;
    let theta = newton_logistic(x.view(), &y, LAMBDA);
    let obj = logistic_objective(&theta, pos_weight, LAMBDA);
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let training = Cohort::new(names, x.clone(), y.clone()).unwrap();
    let config = InfluenceConfig {
        cg_tol: 1e-12,
        subsample: n,
        ..InfluenceConfig::default()
    };
    let mut worst = 0.0f64;
    let mut labels = Vec::new();
    for _ in 0..4 {
        let test = Array1::from_shape_fn(d, |_| 1.5 * rng.normal());
        let report = fi_local(&obj, test.view(), &training, &config, None).unwrap();
        labels.push(report.test_label);
        let oracle = logistic_fi(&theta, pos_weight, LAMBDA, report.damping, x.view(), &y, test.as_slice().unwrap());
        let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = report.values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    (worst, labels)
}

/// Over the canned two-sample cases: largest `|D − D_brute|` and largest
/// p-value difference from the theta-function form.
pub fn ks_cases_worst() -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for (a, b) in ks_cases() {
        let r = ks_2sample(&a, &b).unwrap();
        let d = ks_brute(&a, &b);
        let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
        worst.0 = worst.0.max((r.d - d).abs());
        worst.1 = worst.1.max((r.p_value - ks_asymptotic_p(d, ne)).abs());
    }
    worst
}

/// Over the canned goodness-of-fit cases: largest relative statistic
/// difference and largest p-value difference from the closed form.
pub fn chi2_cases_worst() -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for (obs, q) in chi2_cases() {
        let r = chi2_goodness_of_fit(&obs, &q).unwrap();
        let stat = chi2_statistic(&obs, &q);
        worst.0 = worst.0.max((r.statistic - stat).abs() / stat.max(1.0));
        worst.1 = worst.1.max((r.p_value - chi2_sf(stat, obs.len() - 1)).abs());
    }
    worst
}

/// `|roc_auc − pair counting|` on `n` instances with coarse, heavily tied
/// scores.
pub fn auc_difference(n: usize) -> f64 {
    let mut rng = SeededRng::new(77);
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.3))).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&y| ((rng.normal() + y as f64) * 4.0).round() / 4.0)
        .collect();
    (roc_auc(&scores, &labels).unwrap() - auc_brute(&scores, &labels)).abs()
}
