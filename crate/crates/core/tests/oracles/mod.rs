//! Independent reference implementations for the integration tests. Each
//! one is written from the defining formulas with plain loops and shares no
//! numerical code with the library beyond the random number generator.

#![allow(dead_code)]

pub mod checks;

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use vdpt_core::influence::Objective;
use vdpt_core::mlp::{Activation, DenseLayer, MlpParams};
use vdpt_core::numeric::SeededRng;
use vdpt_core::vdp::{VdpLayer, VdpParams};

pub type Mat = Vec<Vec<f64>>;

fn zeros(n: usize, m: usize) -> Mat {
    vec![vec![0.0; m]; n]
}

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Largest `|a − b| / max(|b|, 1)` over matching entries.
pub fn max_scaled_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

pub fn max_scaled_diff_mat(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b).map(|(x, y)| max_scaled_diff(x, y)).fold(0.0, f64::max)
}

// ---- moment propagation ----

/// Stochastic linear layer, one entry at a time.
pub fn scalar_linear(layer: &VdpLayer, mean: &[f64], cov: &Mat) -> (Vec<f64>, Mat) {
    let (out, inp) = layer.mu_w.dim();
    let mut t = 0.0;
    for i in 0..inp {
        t += cov[i][i] + mean[i] * mean[i];
    }
    let mut mz = vec![0.0; out];
    let mut cz = zeros(out, out);
    for n in 0..out {
        mz[n] = layer.mu_b[n];
        for i in 0..inp {
            mz[n] += layer.mu_w[[n, i]] * mean[i];
        }
        for m in 0..out {
            let mut s = 0.0;
            for i in 0..inp {
                for k in 0..inp {
                    s += layer.mu_w[[n, i]] * cov[i][k] * layer.mu_w[[m, k]];
                }
            }
            cz[n][m] = s;
        }
        cz[n][n] += layer.rho_w[n].exp() * t + layer.rho_b[n].exp();
    }
    (mz, cz)
}

pub fn scalar_relu(mean: &[f64], cov: &Mat) -> (Vec<f64>, Mat) {
    let gate: Vec<f64> = mean.iter().map(|&m| if m > 0.0 { 1.0 } else { 0.0 }).collect();
    let m = mean.iter().map(|&v| v.max(0.0)).collect();
    let mut c = cov.clone();
    for i in 0..mean.len() {
        for j in 0..mean.len() {
            c[i][j] *= gate[i] * gate[j];
        }
    }
    (m, c)
}

pub fn scalar_softmax(mean: &[f64], cov: &Mat) -> (Vec<f64>, Mat) {
    let k = mean.len();
    let top = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = mean.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    let p: Vec<f64> = e.iter().map(|v| v / s).collect();
    let mut jac = zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            jac[i][j] = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
        }
    }
    let mut c = zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut v = 0.0;
            for a in 0..k {
                for b in 0..k {
                    v += jac[i][a] * cov[a][b] * jac[j][b];
                }
            }
            c[i][j] = v;
        }
    }
    (p, c)
}

pub struct ScalarMoments {
    pub logit_mean: Vec<f64>,
    pub logit_cov: Mat,
    pub prob_mean: Vec<f64>,
    pub prob_cov: Mat,
}

/// Hidden layers are linear then ReLU, the last is linear then softmax.
pub fn scalar_forward(params: &VdpParams, x: &[f64]) -> ScalarMoments {
    let mut mean = x.to_vec();
    let mut cov = zeros(x.len(), x.len());
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        (mean, cov) = scalar_linear(layer, &mean, &cov);
        if l < last {
            (mean, cov) = scalar_relu(&mean, &cov);
        }
    }
    let (prob_mean, prob_cov) = scalar_softmax(&mean, &cov);
    ScalarMoments {
        logit_mean: mean,
        logit_cov: cov,
        prob_mean,
        prob_cov,
    }
}

/// VDP parameters with nonzero biases and log-variances spread over
/// `[−4, −0.5]`.
pub fn random_vdp(widths: &[usize], seed: u64) -> VdpParams {
    let mut rng = SeededRng::new(seed);
    let k = widths.len();
    let mut p = VdpParams::init(widths[0], &widths[1..k - 1], widths[k - 1], &mut rng);
    for l in &mut p.layers {
        l.mu_b.mapv_inplace(|_| 0.3 * rng.normal());
        l.rho_w.mapv_inplace(|_| rng.uniform_range(-4.0, -0.5));
        l.rho_b.mapv_inplace(|_| rng.uniform_range(-4.0, -0.5));
    }
    p
}

fn cholesky_lower(a: &Mat) -> Mat {
    let n = a.len();
    let mut l = zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if i == j { s.max(0.0).sqrt() } else if l[j][j] > 0.0 { s / l[j][j] } else { 0.0 };
        }
    }
    l
}

pub struct McMoments {
    pub mean: Vec<f64>,
    pub cov: Mat,
    pub mean_se: Vec<f64>,
    pub cov_se: Mat,
}

/// Samples inputs from `N(mean, cov)`, weight rows from
/// `N(M_n, σ²_w,n I)` and biases from `N(μ_b, σ²_b)`, and returns the
/// empirical moments of `z = W a + b` with their standard errors.
pub fn mc_linear(layer: &VdpLayer, mean: &[f64], cov: &Mat, samples: usize, rng: &mut SeededRng) -> McMoments {
    let (out, inp) = layer.mu_w.dim();
    let chol = cholesky_lower(cov);
    let sw: Vec<f64> = layer.rho_w.iter().map(|r| (0.5 * r).exp()).collect();
    let sb: Vec<f64> = layer.rho_b.iter().map(|r| (0.5 * r).exp()).collect();
    let mut zs = vec![0.0; samples * out];
    let mut eps = vec![0.0; inp];
    let mut a = vec![0.0; inp];
    for s in 0..samples {
        for e in eps.iter_mut() {
            *e = rng.normal();
        }
        for i in 0..inp {
            a[i] = mean[i] + (0..=i).map(|k| chol[i][k] * eps[k]).sum::<f64>();
        }
        for n in 0..out {
            let mut z = layer.mu_b[n] + sb[n] * rng.normal();
            for i in 0..inp {
                z += (layer.mu_w[[n, i]] + sw[n] * rng.normal()) * a[i];
            }
            zs[s * out + n] = z;
        }
    }
    let nf = samples as f64;
    let mut m = vec![0.0; out];
    for s in 0..samples {
        for n in 0..out {
            m[n] += zs[s * out + n] / nf;
        }
    }
    let mut c = zeros(out, out);
    let mut c2 = zeros(out, out);
    let mut var = vec![0.0; out];
    for s in 0..samples {
        for i in 0..out {
            let di = zs[s * out + i] - m[i];
            var[i] += di * di;
            for j in 0..out {
                let prod = di * (zs[s * out + j] - m[j]);
                c[i][j] += prod;
                c2[i][j] += prod * prod;
            }
        }
    }
    let mut cov_se = zeros(out, out);
    for i in 0..out {
        for j in 0..out {
            let mu = c[i][j] / nf;
            let sd = (c2[i][j] / nf - mu * mu).max(0.0).sqrt();
            cov_se[i][j] = sd / nf.sqrt();
            c[i][j] = c[i][j] / (nf - 1.0);
        }
    }
    McMoments {
        mean: m,
        cov: c,
        mean_se: var.iter().map(|v| (v / (nf - 1.0)).sqrt() / nf.sqrt()).collect(),
        cov_se,
    }
}

// ---- finite differences ----

/// Central-difference check of `grad` against `f` at `theta`, returning the
/// largest `|g − fd| / max(|g|, 1)`.
pub fn fd_max_rel_error<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], grad: &[f64], h: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut up = theta.to_vec();
        up[i] += h;
        let mut dn = theta.to_vec();
        dn[i] -= h;
        let fd = (f(&up) - f(&dn)) / (2.0 * h);
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1.0));
    }
    worst
}

// ---- test statistics ----

/// Two-sample KS statistic by evaluating both ECDFs at every pooled value.
pub fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
        .fold(0.0, f64::max)
}

/// One-sample KS statistic against `cdf`, from both one-sided gaps at each
/// order statistic.
pub fn ks_brute_1sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in s.iter().enumerate() {
        d = d.max((i + 1) as f64 / n - cdf(v)).max(cdf(v) - i as f64 / n);
    }
    d
}

/// Kolmogorov CDF in its theta-function form,
/// `√(2π)/λ Σ_{k≥1} exp(−(2k−1)²π²/(8λ²))`, which converges fast everywhere.
pub fn kolmogorov_cdf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 1..=80 {
        let m = (2 * k - 1) as f64;
        s += (-m * m * PI * PI / (8.0 * lambda * lambda)).exp();
    }
    ((2.0 * PI).sqrt() / lambda * s).min(1.0)
}

pub fn ks_asymptotic_p(d: f64, effective_n: f64) -> f64 {
    1.0 - kolmogorov_cdf(effective_n.sqrt() * d)
}

/// `erf` by its Maclaurin series below 3, `erfc` by its continued fraction
/// above.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            let t = term / (2 * n + 1) as f64;
            sum += t;
            if t.abs() < 1e-18 {
                break;
            }
        }
        1.0 - 2.0 / PI.sqrt() * sum
    } else {
        let mut t = x;
        for k in (1..=300).rev() {
            t = x + (k as f64 / 2.0) / t;
        }
        (-x * x).exp() / (PI.sqrt() * t)
    }
}

/// Chi-square upper tail from the finite sums for integer degrees of
/// freedom.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    assert!(dof >= 1);
    if x <= 0.0 {
        return 1.0;
    }
    let h = x / 2.0;
    if dof % 2 == 0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..dof / 2 {
            term *= h / i as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        let mut q = erfc(h.sqrt());
        // Γ(k/2 + 1) for k = 1, 3, 5, …
        let mut gamma = PI.sqrt() / 2.0;
        let mut k = 1;
        while k < dof {
            q += h.powf(k as f64 / 2.0) * (-h).exp() / gamma;
            gamma *= k as f64 / 2.0 + 1.0;
            k += 2;
        }
        q
    }
}

pub fn chi2_statistic(observed: &[u64], proportions: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(proportions)
        .map(|(&o, &q)| {
            let e = q * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties one half.
pub fn auc_brute(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

// ---- canned p-value cases ----

// reference values computed at 40 significant digits
pub const KOLMOGOROV_SF: [(f64, f64); 6] = [
    (0.5, 0.963_945_243_664_875_1),
    (0.8, 0.544_142_411_574_198_1),
    (1.0, 0.269_999_671_677_354_5),
    (1.36, 0.049_485_876_755_377_88),
    (1.63, 0.009_846_364_888_486_531),
    (2.0, 0.000_670_925_255_779_695_4),
];
pub const CHI2_SF: [(f64, usize, f64); 9] = [
    (0.5, 1, 0.479_500_122_186_953_5),
    (3.841_458_820_694_124, 1, 0.05),
    (7.0, 3, 0.071_897_772_496_465_13),
    (11.07, 5, 0.050_009_618_622_405_48),
    (2.0, 2, 0.367_879_441_171_442_3),
    (9.21, 2, 0.010_001_702_004_705_48),
    (15.0, 6, 0.020_256_715_056_664_41),
    (0.1, 1, 0.751_829_634_045_849_3),
    (25.0, 9, 0.002_971_180_485_917_622),
];

/// Ten two-sample cases: sizes, location shift, and rounding (to create
/// ties).
pub fn ks_cases() -> Vec<(Vec<f64>, Vec<f64>)> {
    let specs: [(usize, usize, f64, Option<f64>); 10] = [
        (20, 20, 0.0, None),
        (30, 45, 0.5, None),
        (50, 50, 1.0, None),
        (100, 80, 0.2, None),
        (200, 200, 0.3, Some(0.5)),
        (500, 300, 0.1, None),
        (15, 60, 0.8, Some(1.0)),
        (1000, 1000, 0.05, None),
        (40, 40, 0.0, Some(0.25)),
        (250, 120, 0.35, None),
    ];
    let mut rng = SeededRng::new(2024);
    specs
        .iter()
        .map(|&(n, m, shift, round)| {
            let mut draw = |k: usize, mu: f64| -> Vec<f64> {
                (0..k)
                    .map(|_| {
                        let v = mu + rng.normal();
                        round.map_or(v, |r| (v / r).round() * r)
                    })
                    .collect()
            };
            (draw(n, 0.0), draw(m, shift))
        })
        .collect()
}

pub fn chi2_cases() -> Vec<(Vec<u64>, Vec<f64>)> {
    vec![
        (vec![460, 40], vec![0.92, 0.08]),
        (vec![250, 250], vec![0.92, 0.08]),
        (vec![45, 55], vec![0.5, 0.5]),
        (vec![30, 20, 50], vec![0.3, 0.3, 0.4]),
        (vec![12, 8, 9, 11], vec![0.25; 4]),
        (vec![100, 80, 60, 40, 20], vec![0.2; 5]),
        (vec![5, 5, 5, 5, 5, 25], vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.5]),
        (vec![900, 100], vec![0.85, 0.15]),
        (vec![18, 22, 20, 25, 15, 30, 20], vec![1.0 / 7.0; 7]),
        (vec![7, 3], vec![0.5, 0.5]),
    ]
}

// ---- logistic regression ----

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Mat, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn features_with_bias(row: &[f64]) -> Vec<f64> {
    let mut phi = row.to_vec();
    phi.push(1.0);
    phi
}

/// Minimizes `mean BCE + λ/2‖θ‖²` (bias included) by Newton's method;
/// `θ = (w, b)`.
pub fn newton_logistic(x: ArrayView2<f64>, y: &[u8], lambda: f64) -> Vec<f64> {
    let (n, d) = x.dim();
    let mut theta = vec![0.0; d + 1];
    for _ in 0..100 {
        let mut g: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
        let mut h = zeros(d + 1, d + 1);
        for a in 0..=d {
            h[a][a] = lambda;
        }
        for (r, &label) in x.rows().into_iter().zip(y) {
            let phi = features_with_bias(&r.to_vec());
            let p = sigmoid(phi.iter().zip(&theta).map(|(a, b)| a * b).sum());
            for a in 0..=d {
                g[a] += (p - label as f64) * phi[a] / n as f64;
                for c in 0..=d {
                    h[a][c] += p * (1.0 - p) * phi[a] * phi[c] / n as f64;
                }
            }
        }
        let step = solve(h, g);
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    theta
}

/// A network with no hidden layer, i.e. logistic regression, as an
/// influence objective.
pub fn logistic_objective(theta: &[f64], pos_weight: f64, weight_decay: f64) -> Objective {
    let d = theta.len() - 1;
    Objective::Mlp {
        params: MlpParams {
            widths: vec![d, 1],
            activation: Activation::Relu,
            layers: vec![DenseLayer {
                weights: Array2::from_shape_vec((1, d), theta[..d].to_vec()).unwrap(),
                bias: ndarray::array![theta[d]],
            }],
        },
        pos_weight,
        weight_decay,
    }
}

/// Feature importance of a weighted, L2-regularized logistic model from an
/// explicit Hessian and analytic input derivatives:
///
/// ```text
/// a_i = (w·y_i + 1 − y_i) p_i(1 − p_i)     c_i = w·y_i(p_i − 1) + (1 − y_i) p_i
/// H   = mean_i a_i φ_i φ_iᵀ + (λ + δ) I
/// s   = H⁻¹ c_t φ_t                       (test label = predicted class)
/// FI_j = −mean_i [a_i β_j (s_wᵀx_i + s_b) + c_i s_w,j]
/// ```
pub fn logistic_fi(theta: &[f64], pos_weight: f64, lambda: f64, damping: f64, x: ArrayView2<f64>, y: &[u8], test: &[f64]) -> Vec<f64> {
    let d = theta.len() - 1;
    let n = x.nrows() as f64;
    let logit = |phi: &[f64]| phi.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    let weights = |p: f64, label: u8| {
        let yf = label as f64;
        let a = (pos_weight * yf + 1.0 - yf) * p * (1.0 - p);
        let c = pos_weight * yf * (p - 1.0) + (1.0 - yf) * p;
        (a, c)
    };
    let mut h = zeros(d + 1, d + 1);
    for k in 0..=d {
        h[k][k] = lambda + damping;
    }
    for (r, &label) in x.rows().into_iter().zip(y) {
        let phi = features_with_bias(&r.to_vec());
        let (a, _) = weights(sigmoid(logit(&phi)), label);
        for i in 0..=d {
            for j in 0..=d {
                h[i][j] += a * phi[i] * phi[j] / n;
            }
        }
    }
    let phi_t = features_with_bias(test);
    let p_t = sigmoid(logit(&phi_t));
    let (_, c_t) = weights(p_t, u8::from(p_t >= 0.5));
    let s = solve(h, phi_t.iter().map(|v| c_t * v).collect());
    let mut fi = vec![0.0; d];
    for (r, &label) in x.rows().into_iter().zip(y) {
        let phi = features_with_bias(&r.to_vec());
        let (a, c) = weights(sigmoid(logit(&phi)), label);
        let proj: f64 = phi.iter().zip(&s).map(|(u, v)| u * v).sum();
        for j in 0..d {
            fi[j] -= (a * theta[j] * proj + c * s[j]) / n;
        }
    }
    fi
}
