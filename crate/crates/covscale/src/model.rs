//! The full network: multi-scale transform → activation → FC classifier →
//! softmax cross-entropy, with hand-derived gradients, AdamW, and the
//! full-batch training loop shared with the MLP baselines.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{adasyn_oversample, Dataset, OversampleConfig};
use crate::error::{Error, Result};
use crate::kernel::{BandPassFilter, KernelSpec};
use crate::rng::{derive_seed, substream};
use crate::spectral::{covariance, eigendecompose, project, SpectralBasis};
use crate::transform::{
    embed_all_projected, scale_gradients_projected, MultiScaleEmbedding, ScaleSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// σ′; for relu the subgradient at 0 is taken as 0.
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh() * x.tanh(),
            Activation::Identity => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Activation> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation '{other}' (expected relu, tanh, or identity)"
            ))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

/// Classifier weights plus the trainable scale set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// C×(J·p).
    pub weights: Array2<f64>,
    /// Length C.
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub scales: ScaleSet,
}

impl ModelParams {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn j(&self) -> usize {
        self.scales.j()
    }

    pub fn p(&self) -> usize {
        self.weights.ncols() / self.scales.j()
    }
}

/// Trainable parameter count: C·(J·p) weights, C biases, J scales.
pub fn param_count(p: usize, c: usize, j: usize) -> usize {
    c * (j * p) + c + j
}

/// Weight-matrix entries only (no biases, no scales).
pub fn weight_count(p: usize, c: usize, j: usize) -> usize {
    c * j * p
}

/// Thousands with one decimal, the convention used in model-size tables.
pub fn k_string(count: usize) -> String {
    format!("{:.1}K", count as f64 / 1000.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub lr_weights: f64,
    pub lr_scales: f64,
    pub weight_decay: f64,
    /// Number of scales J.
    pub j: usize,
    /// Scale init range in raw s units; θ is drawn uniformly in log₁₀ of it.
    pub scale_init: (f64, f64),
    pub kernel: KernelSpec,
    pub activation: Activation,
    pub freeze_scales: bool,
    /// ADASYN the training split before fitting.
    pub oversample: bool,
    pub neighbors: usize,
    pub balance: f64,
    pub normalize_eigenvalues: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            seed: 0,
            lr_weights: 0.01,
            lr_scales: 0.01,
            weight_decay: 0.01,
            j: 4,
            scale_init: (0.1, 10.0),
            kernel: KernelSpec::default(),
            activation: Activation::Relu,
            freeze_scales: false,
            oversample: true,
            neighbors: 5,
            balance: 1.0,
            normalize_eigenvalues: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.j == 0 {
            return Err(Error::InvalidConfig("j must be >= 1".into()));
        }
        if !(self.lr_weights > 0.0 && self.lr_scales > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be >= 0".into()));
        }
        let (lo, hi) = self.scale_init;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "scale_init range ({lo}, {hi}) needs 0 < low < high"
            )));
        }
        self.kernel.validate()?;
        if self.oversample {
            if self.neighbors == 0 {
                return Err(Error::InvalidConfig("neighbors must be >= 1".into()));
            }
            if !(self.balance > 0.0 && self.balance <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "balance {} outside (0, 1]",
                    self.balance
                )));
            }
        }
        Ok(())
    }
}

/// He initialization from the "init" substream of cfg.seed. Draw order is
/// fixed (θ first, then W row-major) so runs are reproducible bit for bit.
pub fn init_params(p: usize, c: usize, cfg: &TrainConfig) -> ModelParams {
    assert!(p > 0 && c >= 2, "need p >= 1 features and >= 2 classes");
    let mut rng = substream(cfg.seed, "init");
    let (lo, hi) = (cfg.scale_init.0.log10(), cfg.scale_init.1.log10());
    let log_scales = Array1::from_shape_fn(cfg.j, |_| rng.random_range(lo..hi));
    let fan_in = cfg.j * p;
    let he = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let weights = Array2::from_shape_fn((c, fan_in), |_| he.sample(&mut rng));
    ModelParams {
        weights,
        bias: Array1::zeros(c),
        activation: cfg.activation,
        scales: ScaleSet::new(log_scales),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// C×n.
    pub logits: Array2<f64>,
    /// Column softmax of logits.
    pub probabilities: Array2<f64>,
}

pub struct ForwardCache {
    pub embedding: MultiScaleEmbedding,
    /// Z = σ(E).
    pub activated: Array2<f64>,
}

/// Column-wise softmax with max subtraction.
pub fn softmax_columns(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut col in out.columns_mut() {
        let max = col.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        col.mapv_inplace(|v| (v - max).exp());
        let total = col.sum();
        col.mapv_inplace(|v| v / total);
    }
    out
}

/// Forward pass from the projected signal X̂ = UᵀX (the training hot path).
pub fn forward_projected<F: BandPassFilter>(
    params: &ModelParams,
    basis: &SpectralBasis,
    filter: &F,
    xhat: &ArrayView2<f64>,
) -> Result<(Prediction, ForwardCache)> {
    let embedding = embed_all_projected(basis, filter, xhat, &params.scales)?;
    let activated = embedding.stacked.mapv(|e| params.activation.apply(e));
    if activated.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteStage("activation".into()));
    }
    let logits = params.weights.dot(&activated) + params.bias.clone().insert_axis(Axis(1));
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteStage("logits".into()));
    }
    let probabilities = softmax_columns(&logits);
    Ok((
        Prediction {
            logits,
            probabilities,
        },
        ForwardCache {
            embedding,
            activated,
        },
    ))
}

pub fn forward<F: BandPassFilter>(
    params: &ModelParams,
    basis: &SpectralBasis,
    filter: &F,
    x: &ArrayView2<f64>,
) -> Result<(Prediction, ForwardCache)> {
    let xhat = project(basis, x);
    forward_projected(params, basis, filter, &xhat.view())
}

/// Mean cross-entropy; probabilities are floored at 1e−12 inside the log.
pub fn loss(pred: &Prediction, labels: &[usize]) -> Result<f64> {
    let (c, n) = pred.probabilities.dim();
    assert_eq!(labels.len(), n, "one label per prediction column");
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: c,
            });
        }
        total -= pred.probabilities[[y, i]].max(1e-12).ln();
    }
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub d_weights: Array2<f64>,
    pub d_bias: Array1<f64>,
    pub d_scales: Array1<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn backward<F: BandPassFilter>(
    cache: &ForwardCache,
    pred: &Prediction,
    params: &ModelParams,
    basis: &SpectralBasis,
    filter: &F,
    xhat: &ArrayView2<f64>,
    labels: &[usize],
    freeze_scales: bool,
) -> Result<Gradients> {
    let n = labels.len();
    assert_eq!(
        pred.probabilities.ncols(),
        n,
        "stale cache: {} columns for {} labels",
        pred.probabilities.ncols(),
        n
    );
    let mut d_logits = pred.probabilities.clone();
    for (i, &y) in labels.iter().enumerate() {
        d_logits[[y, i]] -= 1.0;
    }
    d_logits /= n as f64;

    let d_weights = d_logits.dot(&cache.activated.t());
    let d_bias = d_logits.sum_axis(Axis(1));
    let d_scales = if freeze_scales {
        Array1::zeros(params.j())
    } else {
        let d_z = params.weights.t().dot(&d_logits);
        let d_embedding = &d_z * &cache.embedding.stacked.mapv(|e| params.activation.deriv(e));
        scale_gradients_projected(basis, filter, xhat, &params.scales, &d_embedding.view())?
    };
    Ok(Gradients {
        d_weights,
        d_bias,
        d_scales,
    })
}

/// AdamW state for the covariance-scale model: moments mirror W, b, θ.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m_weights: Array2<f64>,
    pub v_weights: Array2<f64>,
    pub m_bias: Array1<f64>,
    pub v_bias: Array1<f64>,
    pub m_scales: Array1<f64>,
    pub v_scales: Array1<f64>,
    pub step_count: usize,
    pub lr_weights: f64,
    pub lr_scales: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> OptimState {
        OptimState {
            m_weights: Array2::zeros(params.weights.dim()),
            v_weights: Array2::zeros(params.weights.dim()),
            m_bias: Array1::zeros(params.bias.len()),
            v_bias: Array1::zeros(params.bias.len()),
            m_scales: Array1::zeros(params.j()),
            v_scales: Array1::zeros(params.j()),
            step_count: 0,
            lr_weights: cfg.lr_weights,
            lr_scales: cfg.lr_scales,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
        }
    }
}

/// One AdamW update on a flat parameter slice. Decay is the decoupled
/// multiplicative form, param *= (1 − lr·wd), applied before the moment
/// step; wd = 0 leaves parameters bitwise untouched when gradients are 0.
#[allow(clippy::too_many_arguments)]
pub(crate) fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: usize,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    weight_decay: f64,
) {
    assert_eq!(param.len(), grad.len());
    assert!(step >= 1, "step count must be incremented before updating");
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    for i in 0..param.len() {
        if weight_decay > 0.0 {
            param[i] *= 1.0 - lr * weight_decay;
        }
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Decay applies to W only (the linear layer); bias and scales are updated
/// without decay, scales with their own learning rate.
pub fn adamw_step(params: &mut ModelParams, grads: &Gradients, opt: &mut OptimState) {
    opt.step_count += 1;
    let t = opt.step_count;
    adamw_update(
        params.weights.as_slice_mut().unwrap(),
        grads.d_weights.as_slice().unwrap(),
        opt.m_weights.as_slice_mut().unwrap(),
        opt.v_weights.as_slice_mut().unwrap(),
        t,
        opt.lr_weights,
        opt.betas,
        opt.eps,
        opt.weight_decay,
    );
    adamw_update(
        params.bias.as_slice_mut().unwrap(),
        grads.d_bias.as_slice().unwrap(),
        opt.m_bias.as_slice_mut().unwrap(),
        opt.v_bias.as_slice_mut().unwrap(),
        t,
        opt.lr_weights,
        opt.betas,
        opt.eps,
        0.0,
    );
    adamw_update(
        params.scales.log_scales.as_slice_mut().unwrap(),
        grads.d_scales.as_slice().unwrap(),
        opt.m_scales.as_slice_mut().unwrap(),
        opt.v_scales.as_slice_mut().unwrap(),
        t,
        opt.lr_scales,
        opt.betas,
        opt.eps,
        0.0,
    );
}

/// Index of the column maximum; ties go to the lowest index.
pub fn argmax_column(col: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in col.iter().enumerate() {
        if v > col[best] {
            best = i;
        }
    }
    best
}

pub fn predicted_classes(pred: &Prediction) -> Vec<usize> {
    pred.logits
        .columns()
        .into_iter()
        .map(argmax_column)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

/// One model family's view of an epoch: do a full-batch update, report the
/// pre-update training loss, and score the held-out split. Baselines
/// implement this too, so every comparison shares the same loop.
pub trait FullBatchTrainer {
    fn epoch_step(&mut self) -> Result<f64>;
    fn test_accuracy(&self) -> Result<f64>;
}

pub fn run_epochs<T: FullBatchTrainer>(trainer: &mut T, epochs: usize) -> Result<Vec<EpochRecord>> {
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let train_loss = trainer.epoch_step()?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence(epoch));
        }
        let test_accuracy = trainer.test_accuracy()?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            test_accuracy,
        });
    }
    Ok(log)
}

pub struct CovScaleTrainer {
    pub params: ModelParams,
    pub opt: OptimState,
    pub basis: SpectralBasis,
    kernel: KernelSpec,
    freeze_scales: bool,
    xhat_train: Array2<f64>,
    train_labels: Vec<usize>,
    xhat_test: Array2<f64>,
    test_labels: Vec<usize>,
}

impl FullBatchTrainer for CovScaleTrainer {
    fn epoch_step(&mut self) -> Result<f64> {
        let (pred, cache) = forward_projected(
            &self.params,
            &self.basis,
            &self.kernel,
            &self.xhat_train.view(),
        )?;
        let train_loss = loss(&pred, &self.train_labels)?;
        if !train_loss.is_finite() {
            return Ok(train_loss);
        }
        let grads = backward(
            &cache,
            &pred,
            &self.params,
            &self.basis,
            &self.kernel,
            &self.xhat_train.view(),
            &self.train_labels,
            self.freeze_scales,
        )?;
        adamw_step(&mut self.params, &grads, &mut self.opt);
        Ok(train_loss)
    }

    fn test_accuracy(&self) -> Result<f64> {
        let (pred, _) = forward_projected(
            &self.params,
            &self.basis,
            &self.kernel,
            &self.xhat_test.view(),
        )?;
        let classes = predicted_classes(&pred);
        let hits = classes
            .iter()
            .zip(&self.test_labels)
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / self.test_labels.len() as f64)
    }
}

/// Everything needed to score or interpret new samples later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub basis: SpectralBasis,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Prediction> {
        let (pred, _) = forward(&self.params, &self.basis, &self.config.kernel, x)?;
        Ok(pred)
    }
}

/// Train on a standardized split: ADASYN the training samples, build the
/// spectral basis from the real (pre-oversampling) samples, then run the
/// epoch loop. Deterministic given cfg.seed.
pub fn train(
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    let p = train_data.n_features();
    let c = train_data.n_classes();
    if test_data.n_features() != p || test_data.n_classes() != c {
        return Err(Error::DimensionMismatch(format!(
            "train split is {}×·/{} classes, test split is {}×·/{} classes",
            p,
            c,
            test_data.n_features(),
            test_data.n_classes()
        )));
    }

    let (train_x, train_labels) = if cfg.oversample {
        adasyn_oversample(
            &train_data.features.view(),
            &train_data.labels,
            &OversampleConfig {
                neighbors: cfg.neighbors,
                balance: cfg.balance,
                seed: derive_seed(cfg.seed, "adasyn"),
            },
        )?
    } else {
        (train_data.features.clone(), train_data.labels.clone())
    };

    let cov = covariance(&train_data.features.view())?;
    let mut basis = eigendecompose(&cov)?;
    if cfg.normalize_eigenvalues {
        basis = basis.with_normalized_eigenvalues();
    }

    let params = init_params(p, c, cfg);
    let opt = OptimState::new(&params, cfg);
    let mut trainer = CovScaleTrainer {
        xhat_train: project(&basis, &train_x.view()),
        xhat_test: project(&basis, &test_data.features.view()),
        params,
        opt,
        basis,
        kernel: cfg.kernel.clone(),
        freeze_scales: cfg.freeze_scales,
        train_labels,
        test_labels: test_data.labels.clone(),
    };
    let log = run_epochs(&mut trainer, cfg.epochs)?;
    Ok((
        TrainedModel {
            params: trainer.params,
            basis: trainer.basis,
            config: cfg.clone(),
        },
        log,
    ))
}
