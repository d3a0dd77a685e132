//! Instance-level explanations from influence functions: per-instance
//! gradients, Hessian-vector products by central differences of the
//! objective gradient, damped conjugate-gradient inverse HVPs, and the
//! input-perturbation feature importance averaged over a training subsample.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::mlp::{mean_weighted_bce, MlpParams};
use crate::model::{FittedModel, ModelKind, Network};
use crate::numeric::stats::{compensated_sum, correlation_p_value};
use crate::numeric::{conjugate_gradient, pearson, spearman, SeededRng};
use crate::params::ParamVector;
use crate::vdp::{elbo_gradients, ElboConfig, VdpParams};

pub const REPORT_FORMAT: &str = "vdpt.influence_report.v1";
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;
pub const TOP_K: usize = 3;
pub const DEFAULT_PERMUTATIONS: usize = 1999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceConfig {
    /// Added to the Hessian operator as `(H + δI)`.
    pub damping: f64,
    /// Relative residual `‖r‖/‖b‖` at which CG stops.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Step of the Hessian-vector finite difference. Small enough that a
    /// step rarely moves a ReLU pre-activation across zero on full-size
    /// networks.
    pub h_theta: f64,
    /// Step of the input finite difference, in standardized units.
    pub h_x: f64,
    pub subsample: usize,
    pub seed: u64,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            damping: 0.01,
            cg_tol: 1e-6,
            cg_max_iter: 500,
            h_theta: 1e-6,
            h_x: 1e-3,
            subsample: 1000,
            seed: 0,
        }
    }
}

impl InfluenceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("damping", self.damping),
            ("cg_tol", self.cg_tol),
            ("h_theta", self.h_theta),
            ("h_x", self.h_x),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be positive")));
            }
        }
        if self.cg_max_iter == 0 || self.subsample == 0 {
            return Err(Error::InvalidSpec("cg_max_iter and subsample must be positive".into()));
        }
        Ok(())
    }
}

/// Training objective of a fitted network, as a function of its flattened
/// parameters.
///
/// Deterministic network: mean weighted BCE plus `λ/2‖θ‖²`.
/// Stochastic network: mean weighted Gaussian NLL plus `KL/n_train` plus
/// `λ/2‖μ‖²` on the means. Per-instance losses exclude the regularizers.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Mlp {
        params: MlpParams,
        pos_weight: f64,
        weight_decay: f64,
    },
    Vdp {
        params: VdpParams,
        jitter: f64,
        weight_decay: f64,
        pos_weight: f64,
        n_train: usize,
    },
}

impl Objective {
    /// `n_train` scales the KL term of the stochastic network.
    pub fn from_network(network: &Network, n_train: usize) -> Self {
        match network {
            Network::Mlp {
                params,
                pos_weight,
                weight_decay,
            } => Objective::Mlp {
                params: params.clone(),
                pos_weight: *pos_weight,
                weight_decay: *weight_decay,
            },
            Network::Vdp {
                params,
                jitter,
                weight_decay,
                ..
            } => Objective::Vdp {
                params: params.clone(),
                jitter: *jitter,
                weight_decay: *weight_decay,
                pos_weight: 1.0,
                n_train: n_train.max(1),
            },
        }
    }

    pub fn from_model(model: &FittedModel, n_train: usize) -> Self {
        Self::from_network(&model.network, n_train)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Objective::Mlp { .. } => ModelKind::Mlp,
            Objective::Vdp { .. } => ModelKind::Vdp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Objective::Mlp { params, .. } => params.input_dim(),
            Objective::Vdp { params, .. } => params.widths[0],
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Objective::Mlp { params, .. } => params.n_params(),
            Objective::Vdp { params, .. } => params.n_params(),
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        match self {
            Objective::Mlp { params, .. } => params.flatten(),
            Objective::Vdp { params, .. } => params.flatten(),
        }
    }

    /// The same objective at other parameter values.
    pub fn at(&self, theta: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Objective::Mlp { params, .. } => params.assign_flat(theta)?,
            Objective::Vdp { params, .. } => params.assign_flat(theta)?,
        }
        Ok(out)
    }

    fn decay_mask(&self) -> Vec<bool> {
        match self {
            Objective::Mlp { params, .. } => vec![true; params.n_params()],
            Objective::Vdp { params, .. } => params.layout().decay_mask(),
        }
    }

    fn weight(&self, y: u8) -> f64 {
        let pw = match self {
            Objective::Mlp { pos_weight, .. } | Objective::Vdp { pos_weight, .. } => *pos_weight,
        };
        if y == 1 {
            pw
        } else {
            1.0
        }
    }

    /// Positive-class probability.
    pub fn probability(&self, x: ArrayView1<f64>) -> Result<f64> {
        match self {
            Objective::Mlp { params, .. } => params.forward(x),
            Objective::Vdp { params, .. } => Ok(params.predict(x)?.probability),
        }
    }

    pub fn predicted_label(&self, x: ArrayView1<f64>) -> Result<u8> {
        Ok(u8::from(self.probability(x)? >= 0.5))
    }

    /// Per-instance loss without regularizers.
    pub fn instance_loss(&self, x: ArrayView1<f64>, y: u8) -> Result<f64> {
        match self {
            Objective::Mlp { params, pos_weight, .. } => {
                let p = params.forward(x)?;
                Ok(mean_weighted_bce(&[p], &[y], *pos_weight))
            }
            Objective::Vdp { params, jitter, .. } => Ok(self.weight(y) * params.instance_gradient(x, y, *jitter)?.0),
        }
    }

    /// `∇θ L(z)` of the per-instance loss.
    pub fn instance_grad(&self, x: ArrayView1<f64>, y: u8) -> Result<ParamVector> {
        match self {
            Objective::Mlp { params, pos_weight, .. } => {
                let row = x.insert_axis(ndarray::Axis(0));
                Ok(params.backprop(row, &[y], *pos_weight)?.1)
            }
            Objective::Vdp { params, jitter, .. } => {
                let (_, mut g) = params.instance_gradient(x, y, *jitter)?;
                let w = self.weight(y);
                if w != 1.0 {
                    g.iter_mut().for_each(|v| *v *= w);
                }
                Ok(ParamVector {
                    values: g,
                    layout: params.layout(),
                })
            }
        }
    }

    /// Gradient of the full objective over the rows of `x`.
    pub fn objective_grad(&self, x: ArrayView2<f64>, y: &[u8]) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Err(Error::EmptySubsample);
        }
        let (mut g, decay) = match self {
            Objective::Mlp {
                params,
                pos_weight,
                weight_decay,
            } => (params.backprop(x, y, *pos_weight)?.1.values, *weight_decay),
            Objective::Vdp {
                params,
                jitter,
                weight_decay,
                pos_weight,
                n_train,
            } => {
                let config = ElboConfig {
                    jitter: *jitter,
                    n_total: *n_train,
                    pos_weight: *pos_weight,
                };
                // Σ NLL + (B/N)·KL, divided by B
                let mut g = elbo_gradients(params, x, y, &config)?.1.values;
                let inv = 1.0 / x.nrows() as f64;
                g.iter_mut().for_each(|v| *v *= inv);
                (g, *weight_decay)
            }
        };
        if decay > 0.0 {
            let theta = self.theta();
            for ((gi, t), d) in g.iter_mut().zip(&theta).zip(self.decay_mask()) {
                if d {
                    *gi += decay * t;
                }
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("objective gradient".into()));
        }
        Ok(g)
    }

    /// `dᵀ∇θ L(z_i)` for every row.
    pub fn directional_grads(&self, x: ArrayView2<f64>, y: &[u8], direction: &[f64]) -> Result<Vec<f64>> {
        if y.len() != x.nrows() {
            return Err(Error::ShapeMismatch(format!("{} labels for {} rows", y.len(), x.nrows())));
        }
        match self {
            Objective::Mlp { params, pos_weight, .. } => params.directional_instance_grads(x, y, *pos_weight, direction),
            Objective::Vdp { .. } => x
                .rows()
                .into_iter()
                .zip(y)
                .map(|(row, &label)| Ok(self.instance_grad(row, label)?.dot(direction)))
                .collect(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

pub fn per_instance_grad(obj: &Objective, x: ArrayView1<f64>, y: u8) -> Result<ParamVector> {
    obj.instance_grad(x, y)
}

/// Central difference of a gradient map along `v`:
/// `(g(θ + h·v̂) − g(θ − h·v̂)) / 2h · ‖v‖`.
pub fn fd_hvp<F>(grad: F, theta: &[f64], v: &[f64], h_theta: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if v.len() != theta.len() {
        return Err(Error::ShapeMismatch(format!("vector of {} for {} parameters", v.len(), theta.len())));
    }
    check_finite(v, "hvp direction")?;
    let scale = norm(v);
    if scale == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let shifted = |sign: f64| -> Result<Vec<f64>> {
        let t: Vec<f64> = theta.iter().zip(v).map(|(t, vi)| t + sign * h_theta * vi / scale).collect();
        grad(&t)
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    let k = scale / (2.0 * h_theta);
    let out: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) * k).collect();
    check_finite(&out, "hvp")?;
    Ok(out)
}

/// Undamped Hessian-vector product of the full objective over `(x, y)`.
pub fn hvp(obj: &Objective, x: ArrayView2<f64>, y: &[u8], v: &[f64], h_theta: f64) -> Result<Vec<f64>> {
    fd_hvp(|t| obj.at(t)?.objective_grad(x, y), &obj.theta(), v, h_theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseHvp {
    pub x: Vec<f64>,
    /// Damping of the returned solve; larger than configured when the
    /// configured operator was indefinite.
    pub damping: f64,
    /// Summed over damping retries.
    pub iterations: usize,
    pub residual_norm: f64,
    /// False when CG hit `cg_max_iter` before reaching the tolerance; `x` is
    /// then the best iterate seen.
    pub converged: bool,
}

/// Retries with damping multiplied by 10 when CG meets non-positive
/// curvature, at most this many times.
pub const MAX_DAMPING_RETRIES: usize = 6;

/// Solves `(H + δI) x = b` by conjugate gradients given the undamped
/// operator `apply_h`. Away from a minimum `H + δI` can be indefinite; CG
/// then stops on a direction with `pᵀ(H + δI)p ≤ 0` and the solve restarts
/// with `10·δ`.
pub fn solve_damped<F>(apply_h: F, b: &[f64], config: &InfluenceConfig) -> Result<InverseHvp>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    config.validate()?;
    check_finite(b, "right-hand side")?;
    let rhs = Array1::from(b.to_vec());
    let mut damping = config.damping;
    let mut iterations = 0;
    for attempt in 0..=MAX_DAMPING_RETRIES {
        let failure = std::cell::RefCell::new(None);
        let solution = conjugate_gradient(
            |p| {
                if failure.borrow().is_some() {
                    return Array1::zeros(p.len());
                }
                match apply_h(p.as_slice().expect("contiguous")) {
                    Ok(hv) => Array1::from(hv) + damping * p,
                    Err(e) => {
                        *failure.borrow_mut() = Some(e);
                        Array1::zeros(p.len())
                    }
                }
            },
            &rhs,
            config.cg_tol,
            config.cg_max_iter,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        iterations += solution.iterations;
        if !solution.indefinite || attempt == MAX_DAMPING_RETRIES {
            return Ok(InverseHvp {
                x: solution.x.to_vec(),
                damping,
                iterations,
                residual_norm: solution.residual_norm,
                converged: solution.converged,
            });
        }
        damping *= 10.0;
    }
    unreachable!("loop returns on its last attempt")
}

/// Solves `(H + δI) x = b` with the Hessian of the objective over `(x, y)`.
pub fn inverse_hvp(obj: &Objective, x: ArrayView2<f64>, y: &[u8], b: &[f64], config: &InfluenceConfig) -> Result<InverseHvp> {
    if b.len() != obj.n_params() {
        return Err(Error::ShapeMismatch(format!("vector of {} for {} parameters", b.len(), obj.n_params())));
    }
    let theta = obj.theta();
    solve_damped(|v| fd_hvp(|t| obj.at(t)?.objective_grad(x, y), &theta, v, config.h_theta), b, config)
}

/// `s_test = (H + δI)⁻¹ ∇L(z_test)`.
pub fn s_test(
    obj: &Objective,
    x: ArrayView2<f64>,
    y: &[u8],
    test_x: ArrayView1<f64>,
    test_y: u8,
    config: &InfluenceConfig,
) -> Result<InverseHvp> {
    let g = obj.instance_grad(test_x, test_y)?;
    inverse_hvp(obj, x, y, &g.values, config)
}

/// `−∇L(z_test)ᵀ (H + δI)⁻¹ ∇L(z)` with the Hessian over `(x, y)`.
pub fn influence_up_loss(
    obj: &Objective,
    x: ArrayView2<f64>,
    y: &[u8],
    z: (ArrayView1<f64>, u8),
    z_test: (ArrayView1<f64>, u8),
    config: &InfluenceConfig,
) -> Result<f64> {
    let s = s_test(obj, x, y, z_test.0, z_test.1, config)?;
    Ok(-obj.instance_grad(z.0, z.1)?.dot(&s.x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub format: String,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
    pub feature_names: Vec<String>,
    /// Signed, in loss-change sense.
    pub values: Vec<f64>,
    /// Label used in `∇L(z_test)`: the predicted class.
    pub test_label: u8,
    pub config: InfluenceConfig,
    /// Damping actually used for `s_test`.
    pub damping: f64,
    pub subsample_size: usize,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub cg_converged: bool,
}

/// Local feature importance of one prepared test row against a prepared
/// training set. The Hessian and the mean over training instances both use
/// the same seeded subsample.
pub fn fi_local(
    obj: &Objective,
    test_x: ArrayView1<f64>,
    training: &Cohort,
    config: &InfluenceConfig,
    instance_id: Option<String>,
) -> Result<InfluenceReport> {
    config.validate()?;
    let d = obj.input_dim();
    if test_x.len() != d || training.n_features() != d {
        return Err(Error::ShapeMismatch(format!(
            "model has {d} inputs; test row has {}, training set {}",
            test_x.len(),
            training.n_features()
        )));
    }
    if training.n_rows() == 0 {
        return Err(Error::EmptySubsample);
    }
    let mut rng = SeededRng::new(config.seed);
    let rows = rng.sample_indices(training.n_rows(), config.subsample);
    let sub = training.select_rows(&rows);
    let test_y = obj.predicted_label(test_x)?;
    let s = s_test(obj, sub.x.view(), &sub.y, test_x, test_y, config)?;
    let values = perturbation_importance(obj, &sub, &s.x, config.h_x)?;
    Ok(InfluenceReport {
        format: REPORT_FORMAT.into(),
        model: obj.kind(),
        instance_id,
        feature_names: training.feature_names.clone(),
        values,
        test_label: test_y,
        config: *config,
        damping: s.damping,
        subsample_size: sub.n_rows(),
        cg_iterations: s.iterations,
        cg_residual: s.residual_norm,
        cg_converged: s.converged,
    })
}

/// `FI[j] = −mean_z ∂/∂x_j (sᵀ∇θ L(z))`, each derivative a central
/// difference with step `h_x`.
pub fn perturbation_importance(obj: &Objective, sample: &Cohort, s: &[f64], h_x: f64) -> Result<Vec<f64>> {
    let (n, d) = sample.x.dim();
    if n == 0 {
        return Err(Error::EmptySubsample);
    }
    // row layout: instance i, feature j, sign (+ then −)
    let mut xs = Array2::<f64>::zeros((n * d * 2, d));
    let mut ys = Vec::with_capacity(n * d * 2);
    for i in 0..n {
        for j in 0..d {
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let r = (i * d + j) * 2 + k;
                xs.row_mut(r).assign(&sample.x.row(i));
                xs[[r, j]] += sign * h_x;
                ys.push(sample.y[i]);
            }
        }
    }
    let f = obj.directional_grads(xs.view(), &ys, s)?;
    let values: Vec<f64> = (0..d)
        .map(|j| {
            let total = compensated_sum((0..n).map(|i| {
                let r = (i * d + j) * 2;
                (f[r] - f[r + 1]) / (2.0 * h_x)
            }));
            -total / n as f64
        })
        .collect();
    check_finite(&values, "feature importance")?;
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    /// `|r|`, absent when the feature is degenerate over the sampled pairs.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// t-distribution p-values treating pairs as independent, Bonferroni
    /// corrected over features.
    pub pearson_p: Option<f64>,
    pub spearman_p: Option<f64>,
    /// Subject-permutation p-value of `|Pearson|`, Bonferroni corrected.
    pub permutation_p: Option<f64>,
    /// `permutation_p < SIGNIFICANCE_LEVEL`.
    pub significant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationValidation {
    pub n_pairs: usize,
    pub permutations: usize,
    pub features: Vec<FeatureCorrelation>,
    pub warnings: Vec<String>,
}

/// Draws `k` distinct unordered pairs from `n` subjects.
pub fn sample_pairs(n: usize, k: usize, rng: &mut SeededRng) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let k = k.min(total);
    let decode = |mut idx: usize| {
        let mut i = 0;
        while idx >= n - 1 - i {
            idx -= n - 1 - i;
            i += 1;
        }
        (i, i + 1 + idx)
    };
    if total <= 4_000_000 {
        return rng.sample_indices(total, k).into_iter().map(decode).collect();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.index(n);
        let j = rng.index(n);
        if i == j {
            continue;
        }
        let pair = (i.min(j), i.max(j));
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    out
}

/// Correlates pair-wise feature differences with pair-wise importance
/// differences, per feature. `x` and `fi` are `subjects × features`.
///
/// Pairs sharing a subject are dependent, so the t-based p-values are
/// optimistic. Significance is decided by permuting importance vectors
/// across subjects (`permutations` draws) and recomputing `|Pearson|` over
/// the same pairs.
pub fn validate_explanations(
    x: ArrayView2<f64>,
    fi: ArrayView2<f64>,
    feature_names: &[String],
    n_pairs: usize,
    permutations: usize,
    rng: &mut SeededRng,
) -> Result<ExplanationValidation> {
    let (n, d) = x.dim();
    if fi.dim() != (n, d) || feature_names.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "features {:?}, importances {:?}, {} names",
            x.dim(),
            fi.dim(),
            feature_names.len()
        )));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut warnings = Vec::new();
    let available = n * (n - 1) / 2;
    if n_pairs > available {
        warnings.push(format!("requested {n_pairs} pairs but only {available} unique pairs exist; using all"));
    }
    let pairs = sample_pairs(n, n_pairs, rng);
    let m = pairs.len();
    let perms: Vec<Vec<usize>> = (0..permutations).map(|_| rng.permutation(n)).collect();
    let bonferroni = |p: f64| (p * d as f64).min(1.0);
    let features = (0..d)
        .map(|j| {
            let dx: Vec<f64> = pairs.iter().map(|&(a, b)| x[[a, j]] - x[[b, j]]).collect();
            let diffs = |perm: Option<&[usize]>| -> Vec<f64> {
                let at = |i: usize| perm.map_or(i, |p| p[i]);
                pairs.iter().map(|&(a, b)| fi[[at(a), j]] - fi[[at(b), j]]).collect()
            };
            let df = diffs(None);
            match (pearson(&dx, &df), spearman(&dx, &df)) {
                (Ok(rp), Ok(rs)) => {
                    let observed = rp.abs();
                    let exceed = perms
                        .iter()
                        .filter(|p| pearson(&dx, &diffs(Some(p))).map_or(true, |r| r.abs() >= observed))
                        .count();
                    let perm_p = bonferroni((exceed + 1) as f64 / (permutations + 1) as f64);
                    FeatureCorrelation {
                        feature: feature_names[j].clone(),
                        pearson: Some(observed),
                        spearman: Some(rs.abs()),
                        pearson_p: Some(bonferroni(correlation_p_value(rp, m))),
                        spearman_p: Some(bonferroni(correlation_p_value(rs, m))),
                        permutation_p: Some(perm_p),
                        significant: perm_p < SIGNIFICANCE_LEVEL,
                        note: None,
                    }
                }
                (Err(e), _) | (_, Err(e)) => FeatureCorrelation {
                    feature: feature_names[j].clone(),
                    pearson: None,
                    spearman: None,
                    pearson_p: None,
                    spearman_p: None,
                    permutation_p: None,
                    significant: false,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(ExplanationValidation {
        n_pairs: m,
        permutations,
        features,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub feature: String,
    /// Reports in which the feature is among the top three by `|FI|`.
    pub top_count: usize,
    /// Mean of `sign(FI)`, in `[−1, 1]`.
    pub sentiment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationProfile {
    pub n_reports: usize,
    pub features: Vec<FeatureProfile>,
}

/// Indices of the `k` largest `|v|`, ties to the lower index.
pub fn top_k_by_magnitude(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Top-three frequency and sentiment per feature over a set of importance
/// vectors sharing `feature_names`.
pub fn explanation_profile(feature_names: &[String], reports: &[Vec<f64>]) -> Result<ExplanationProfile> {
    if reports.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let d = feature_names.len();
    if let Some(r) = reports.iter().find(|r| r.len() != d) {
        return Err(Error::ShapeMismatch(format!("report of {} values for {d} features", r.len())));
    }
    let mut counts = vec![0usize; d];
    for r in reports {
        for j in top_k_by_magnitude(r, TOP_K) {
            counts[j] += 1;
        }
    }
    let n = reports.len() as f64;
    let features = (0..d)
        .map(|j| FeatureProfile {
            feature: feature_names[j].clone(),
            top_count: counts[j],
            sentiment: reports.iter().map(|r| sign(r[j])).sum::<f64>() / n,
        })
        .collect();
    Ok(ExplanationProfile {
        n_reports: reports.len(),
        features,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
