//! Point-estimate multilayer perceptron: ReLU hidden layers, one sigmoid
//! logit, weighted binary cross-entropy, Nesterov SGD.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::numeric::SeededRng;
use crate::optim::NesterovSgd;
use crate::params::{ParamLayout, ParamVector};

const P_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Input width, hidden widths, then 1.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub pos_weight: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Selected deterministic profile: widths 197/198/112, full batch,
    /// 127 epochs.
    pub fn default_profile() -> Self {
        Self {
            hidden: vec![197, 198, 112],
            epochs: 127,
            batch_size: 0,
            learning_rate: 0.03104,
            weight_decay: 0.0104,
            momentum: 0.4204,
            pos_weight: 14.80,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidSpec("learning rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidSpec("weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidSpec("momentum must lie in [0,1)".into()));
        }
        if !(self.pos_weight > 0.0) {
            return Err(Error::InvalidSpec("pos_weight must be positive".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−[w·y·ln p + (1−y)·ln(1−p)]` with `p` clamped to `[1e-12, 1−1e-12]`.
pub fn weighted_bce(p: f64, y: u8, pos_weight: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if y == 1 {
        -pos_weight * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`weighted_bce`] with respect to the logit.
pub fn weighted_bce_logit_grad(p: f64, y: u8, pos_weight: f64) -> f64 {
    if y == 1 {
        -pos_weight * (1.0 - p)
    } else {
        p
    }
}

/// Mean weighted BCE over a batch of probabilities.
pub fn mean_weighted_bce(p: &[f64], y: &[u8], pos_weight: f64) -> f64 {
    p.iter().zip(y).map(|(&p, &y)| weighted_bce(p, y, pos_weight)).sum::<f64>() / p.len() as f64
}

impl MlpParams {
    /// Kaiming-uniform weights (`±√(6/fan_in)`), zero biases.
    pub fn init(input: usize, hidden: &[usize], rng: &mut SeededRng) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                DenseLayer {
                    weights: Array2::from_shape_fn((w[1], w[0]), |_| rng.uniform_range(-bound, bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self {
            widths,
            activation: Activation::Relu,
            layers,
        }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            widths: widths.to_vec(),
            activation: Activation::Relu,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::default();
        for (l, layer) in self.layers.iter().enumerate() {
            let (o, i) = layer.weights.dim();
            layout.push(format!("w{l}"), l, o, i, true);
            layout.push(format!("b{l}"), l, o, 1, true);
        }
        layout
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn to_param_vector(&self) -> ParamVector {
        ParamVector {
            values: self.flatten(),
            layout: self.layout(),
        }
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = flat[k];
                k += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.assign_flat(flat)?;
        Ok(p)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {cols} features, model expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Outputs of every layer for a batch (rows are instances): ReLU
    /// activations for hidden layers, logits for the last.
    fn forward_trace(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = match acts.last() {
                Some(a) => a.dot(&layer.weights.t()),
                None => x.dot(&layer.weights.t()),
            };
            z += &layer.bias;
            if l + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(x.ncols())?;
        let acts = self.forward_trace(x);
        Ok(acts.last().expect("at least one layer").column(0).to_owned())
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.iter().map(|&z| sigmoid(z)).collect())
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(self.predict_proba(x.insert_axis(Axis(0)))?[0])
    }

    /// Mean weighted BCE of a batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[u8], pos_weight: f64) -> Result<f64> {
        Ok(mean_weighted_bce(&self.predict_proba(x)?, y, pos_weight))
    }

    /// Reverse pass given per-row loss derivatives with respect to the logit.
    /// Returns the flat gradient `Σ_i dlogit_i · ∇θ z_i` and the per-layer
    /// pre-activation deltas.
    fn backward(&self, x: ArrayView2<f64>, acts: &[Array2<f64>], dlogit: Array1<f64>) -> (Vec<f64>, Vec<Array2<f64>>) {
        let n_layers = self.layers.len();
        let mut deltas: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut delta = dlogit.insert_axis(Axis(1));
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                ndarray::Zip::from(&mut delta).and(&acts[l]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let next = (l > 0).then(|| delta.dot(&self.layers[l].weights));
            deltas.push(delta);
            match next {
                Some(n) => delta = n,
                None => break,
            }
        }
        deltas.reverse();
        let mut grad = Vec::with_capacity(self.n_params());
        for (l, delta) in deltas.iter().enumerate() {
            let gw = if l == 0 {
                delta.t().dot(&x)
            } else {
                delta.t().dot(&acts[l - 1])
            };
            grad.extend(gw.iter());
            grad.extend(delta.sum_axis(Axis(0)).iter());
        }
        (grad, deltas)
    }

    /// Gradient of the mean weighted BCE over the batch with respect to every
    /// parameter, plus the loss value.
    pub fn backprop(&self, x: ArrayView2<f64>, y: &[u8], pos_weight: f64) -> Result<(f64, ParamVector)> {
        self.check_input(x.ncols())?;
        if y.len() != x.nrows() {
            return Err(Error::ShapeMismatch(format!("{} labels for {} rows", y.len(), x.nrows())));
        }
        let n = x.nrows() as f64;
        let acts = self.forward_trace(x);
        let logits = acts.last().expect("layers").column(0).to_owned();
        let p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let loss = mean_weighted_bce(&p, y, pos_weight);
        let dlogit: Array1<f64> = p
            .iter()
            .zip(y)
            .map(|(&p, &y)| weighted_bce_logit_grad(p, y, pos_weight) / n)
            .collect();
        let (grad, _) = self.backward(x, &acts, dlogit);
        Ok((
            loss,
            ParamVector {
                values: grad,
                layout: self.layout(),
            },
        ))
    }

    /// Per-row directional derivatives `dᵀ∇θ ℓ_i` for a batch, using the
    /// layer deltas of one batched reverse pass.
    pub fn directional_instance_grads(
        &self,
        x: ArrayView2<f64>,
        y: &[u8],
        pos_weight: f64,
        direction: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_input(x.ncols())?;
        let dir = self.with_flat(direction)?;
        let acts = self.forward_trace(x);
        let logits = acts.last().expect("layers").column(0).to_owned();
        let dlogit: Array1<f64> = logits
            .iter()
            .zip(y)
            .map(|(&z, &y)| weighted_bce_logit_grad(sigmoid(z), y, pos_weight))
            .collect();
        let (_, deltas) = self.backward(x, &acts, dlogit);
        let mut out = Array1::<f64>::zeros(x.nrows());
        for (l, delta) in deltas.iter().enumerate() {
            let w = dir.layers[l].weights.t();
            let proj = if l == 0 { x.dot(&w) } else { acts[l - 1].dot(&w) } + &dir.layers[l].bias;
            out += &(delta * &proj).sum_axis(Axis(1));
        }
        Ok(out.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome<P> {
    pub params: P,
    /// Loss on the full training set before the first step.
    pub initial_loss: f64,
    /// Mean batch loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains the MLP on a standardized, imputed cohort.
pub fn train(cohort: &Cohort, config: &TrainConfig) -> Result<TrainOutcome<MlpParams>> {
    config.validate()?;
    if cohort.has_missing() {
        return Err(Error::InvalidSpec("training cohort must be imputed".into()));
    }
    let rng = SeededRng::new(config.seed);
    let mut params = MlpParams::init(cohort.n_features(), &config.hidden, &mut rng.split(0));
    let mut order_rng = rng.split(1);
    let layout = params.layout();
    let mut opt = NesterovSgd::new(&layout, config.learning_rate, config.weight_decay, config.momentum);
    let initial_loss = params.loss(cohort.x.view(), &cohort.y, config.pos_weight)?;
    let n = cohort.n_rows();
    let batch = if config.batch_size == 0 { n } else { config.batch_size.min(n) };
    let mut flat = params.flatten();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let order: Vec<usize> = if batch == n {
            (0..n).collect()
        } else {
            order_rng.permutation(n)
        };
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = if chunk.len() == n {
                params.backprop(cohort.x.view(), &cohort.y, config.pos_weight)?
            } else {
                let xb = cohort.x.select(Axis(0), chunk);
                let yb: Vec<u8> = chunk.iter().map(|&i| cohort.y[i]).collect();
                params.backprop(xb.view(), &yb, config.pos_weight)?
            };
            total += loss * chunk.len() as f64;
            opt.step(&mut flat, &grad.values)?;
            params.assign_flat(&flat)?;
        }
        loss_curve.push(total / n as f64);
    }
    Ok(TrainOutcome {
        params,
        initial_loss,
        loss_curve,
    })
}
