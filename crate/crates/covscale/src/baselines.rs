//! MLP baselines at matched parameter budgets. They share the optimizer,
//! initialization scheme, oversampling, and epoch loop with the main model
//! so accuracy and convergence comparisons isolate the architecture.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{adasyn_oversample, Dataset, OversampleConfig};
use crate::error::{Error, Result};
use crate::model::{
    adamw_update, loss, predicted_classes, run_epochs, softmax_columns, Activation, EpochRecord,
    FullBatchTrainer, Prediction, TrainConfig,
};
use crate::rng::{derive_seed, substream};

/// Layer widths from input to output, e.g. [p, h, C].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> MlpSpec {
        assert!(layer_widths.len() >= 2, "need at least input and output");
        assert!(
            layer_widths.iter().all(|&w| w > 0),
            "layer widths must be positive"
        );
        MlpSpec {
            layer_widths,
            activation,
        }
    }

    /// Weights plus biases across all layers.
    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Weight-matrix entries only.
    pub fn weight_count(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// Linear softmax classifier: widths [p, C].
pub fn make_1mlp(p: usize, c: usize) -> MlpSpec {
    MlpSpec::new(vec![p, c], Activation::Relu)
}

/// One hidden layer as wide as the input: widths [p, p, C].
pub fn make_2mlp_identity(p: usize, c: usize) -> MlpSpec {
    MlpSpec::new(vec![p, p, c], Activation::Relu)
}

/// One hidden layer sized to fit a parameter budget: the largest h with
/// h·(p+C) + h + C ≤ target_params.
pub fn make_2mlp_reduced(p: usize, c: usize, target_params: usize) -> Result<MlpSpec> {
    let per_unit = p + c + 1;
    if target_params < per_unit + c {
        return Err(Error::BudgetTooSmall(target_params));
    }
    let h = (target_params - c) / per_unit;
    Ok(MlpSpec::new(vec![p, h, c], Activation::Relu))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// He initialization from the "init" substream, one layer after another,
/// each weight matrix filled row-major; biases zero.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> MlpModel {
    let mut rng = substream(seed, "init");
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in spec.layer_widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let he = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
            he.sample(&mut rng)
        }));
        biases.push(Array1::zeros(fan_out));
    }
    MlpModel {
        spec: spec.clone(),
        weights,
        biases,
    }
}

pub struct MlpCache {
    /// Layer inputs: a_0 = X, then each hidden activation.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activation values of the hidden layers.
    pub pre_activations: Vec<Array2<f64>>,
}

pub fn mlp_forward(model: &MlpModel, x: &ArrayView2<f64>) -> Result<(Prediction, MlpCache)> {
    let layers = model.weights.len();
    if x.nrows() != model.spec.layer_widths[0] {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows for width-{} network",
            x.nrows(),
            model.spec.layer_widths[0]
        )));
    }
    let mut inputs = vec![x.to_owned()];
    let mut pre_activations = Vec::new();
    for l in 0..layers - 1 {
        let u = model.weights[l].dot(inputs.last().unwrap())
            + model.biases[l].clone().insert_axis(Axis(1));
        let a = u.mapv(|v| model.spec.activation.apply(v));
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteStage(format!("hidden layer {l}")));
        }
        pre_activations.push(u);
        inputs.push(a);
    }
    let logits = model.weights[layers - 1].dot(inputs.last().unwrap())
        + model.biases[layers - 1].clone().insert_axis(Axis(1));
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteStage("logits".into()));
    }
    let probabilities = softmax_columns(&logits);
    Ok((
        Prediction {
            logits,
            probabilities,
        },
        MlpCache {
            inputs,
            pre_activations,
        },
    ))
}

pub struct MlpGradients {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

pub fn mlp_backward(
    model: &MlpModel,
    cache: &MlpCache,
    pred: &Prediction,
    labels: &[usize],
) -> MlpGradients {
    let n = labels.len();
    let layers = model.weights.len();
    let mut d_logits = pred.probabilities.clone();
    for (i, &y) in labels.iter().enumerate() {
        d_logits[[y, i]] -= 1.0;
    }
    d_logits /= n as f64;

    let mut d_weights = vec![Array2::zeros((0, 0)); layers];
    let mut d_biases = vec![Array1::zeros(0); layers];
    let mut upstream = d_logits;
    for l in (0..layers).rev() {
        d_weights[l] = upstream.dot(&cache.inputs[l].t());
        d_biases[l] = upstream.sum_axis(Axis(1));
        if l > 0 {
            let da = model.weights[l].t().dot(&upstream);
            let sigma_prime = cache.pre_activations[l - 1].mapv(|u| model.spec.activation.deriv(u));
            upstream = da * sigma_prime;
        }
    }
    MlpGradients {
        d_weights,
        d_biases,
    }
}

struct MlpOptimState {
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
    step_count: usize,
}

impl MlpOptimState {
    fn new(model: &MlpModel) -> MlpOptimState {
        MlpOptimState {
            m_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            step_count: 0,
        }
    }
}

pub struct MlpTrainer {
    pub model: MlpModel,
    opt: MlpOptimState,
    cfg: TrainConfig,
    train_x: Array2<f64>,
    train_labels: Vec<usize>,
    test_x: Array2<f64>,
    test_labels: Vec<usize>,
}

impl FullBatchTrainer for MlpTrainer {
    fn epoch_step(&mut self) -> Result<f64> {
        let (pred, cache) = mlp_forward(&self.model, &self.train_x.view())?;
        let train_loss = loss(&pred, &self.train_labels)?;
        if !train_loss.is_finite() {
            return Ok(train_loss);
        }
        let grads = mlp_backward(&self.model, &cache, &pred, &self.train_labels);
        self.opt.step_count += 1;
        let t = self.opt.step_count;
        // every weight matrix is a linear layer: all of them decay
        for l in 0..self.model.weights.len() {
            adamw_update(
                self.model.weights[l].as_slice_mut().unwrap(),
                grads.d_weights[l].as_slice().unwrap(),
                self.opt.m_weights[l].as_slice_mut().unwrap(),
                self.opt.v_weights[l].as_slice_mut().unwrap(),
                t,
                self.cfg.lr_weights,
                (0.9, 0.999),
                1e-8,
                self.cfg.weight_decay,
            );
            adamw_update(
                self.model.biases[l].as_slice_mut().unwrap(),
                grads.d_biases[l].as_slice().unwrap(),
                self.opt.m_biases[l].as_slice_mut().unwrap(),
                self.opt.v_biases[l].as_slice_mut().unwrap(),
                t,
                self.cfg.lr_weights,
                (0.9, 0.999),
                1e-8,
                0.0,
            );
        }
        Ok(train_loss)
    }

    fn test_accuracy(&self) -> Result<f64> {
        let (pred, _) = mlp_forward(&self.model, &self.test_x.view())?;
        let classes = predicted_classes(&pred);
        let hits = classes
            .iter()
            .zip(&self.test_labels)
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / self.test_labels.len() as f64)
    }
}

/// Baseline counterpart of model::train: identical ADASYN seeding and epoch
/// loop, dense layers instead of the spectral transform.
pub fn train_mlp(
    spec: &MlpSpec,
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    let p = train_data.n_features();
    let c = train_data.n_classes();
    assert_eq!(spec.layer_widths[0], p, "spec input width must match data");
    assert_eq!(
        *spec.layer_widths.last().unwrap(),
        c,
        "spec output width must match class count"
    );
    if test_data.n_features() != p || test_data.n_classes() != c {
        return Err(Error::DimensionMismatch(
            "train and test splits disagree on shape".into(),
        ));
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

    let mut spec = spec.clone();
    spec.activation = cfg.activation;
    let model = init_mlp(&spec, cfg.seed);
    let opt = MlpOptimState::new(&model);
    let mut trainer = MlpTrainer {
        model,
        opt,
        cfg: cfg.clone(),
        train_x,
        train_labels,
        test_x: test_data.features.clone(),
        test_labels: test_data.labels.clone(),
    };
    let log = run_epochs(&mut trainer, cfg.epochs)?;
    Ok((trainer.model, log))
}
