//! Scale-summed Grad-CAM saliency: how much each input variable's filtered
//! coefficients pushed the model toward a class, ReLU-gated and summed over
//! the J scales.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax_column, forward, TrainedModel};

/// Which scalar ŷ_c to backpropagate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaliencyTarget {
    /// Post-softmax class probability (default).
    #[default]
    Probability,
    /// Pre-softmax logit.
    Logit,
}

/// Per-variable, per-class saliency M^c(k) ≥ 0 for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    /// p×C.
    pub values: Array2<f64>,
    pub sample_id: usize,
    pub predicted_class: usize,
}

/// ∂ŷ_c/∂E and E itself for one standardized sample, both flattened to
/// length J·p in scale-block order.
pub fn embedding_gradient(
    model: &TrainedModel,
    x: &ArrayView1<f64>,
    class: usize,
    target: SaliencyTarget,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let c = model.params.n_classes();
    if class >= c {
        return Err(Error::BadClassIndex {
            index: class,
            count: c,
        });
    }
    let column = x.to_owned().insert_axis(ndarray::Axis(1));
    let (pred, cache) = forward(
        &model.params,
        &model.basis,
        &model.config.kernel,
        &column.view(),
    )?;
    let probs = pred.probabilities.column(0);
    let d_logits: Array1<f64> = match target {
        SaliencyTarget::Logit => {
            let mut one_hot = Array1::zeros(c);
            one_hot[class] = 1.0;
            one_hot
        }
        // ∂p_c/∂logits = p_c·(e_c − p)
        SaliencyTarget::Probability => {
            let p_c = probs[class];
            Array1::from_shape_fn(c, |i| p_c * ((i == class) as usize as f64 - probs[i]))
        }
    };
    let d_z = model.params.weights.t().dot(&d_logits);
    let embedding = cache.embedding.stacked.column(0).to_owned();
    let d_embedding = &d_z * &embedding.mapv(|e| model.params.activation.deriv(e));
    Ok((d_embedding, embedding))
}

/// M^c(k) = Σ_{i=1..J} ReLU(∂ŷ_c/∂C_{x_k}(s_i) · C_{x_k}(s_i)).
pub fn grad_cam_class(
    model: &TrainedModel,
    x: &ArrayView1<f64>,
    class: usize,
    target: SaliencyTarget,
) -> Result<Array1<f64>> {
    let (d_embedding, embedding) = embedding_gradient(model, x, class, target)?;
    let p = model.params.p();
    let mut saliency = Array1::zeros(p);
    for (slot, (&g, &e)) in d_embedding.iter().zip(embedding.iter()).enumerate() {
        saliency[slot % p] += (g * e).max(0.0);
    }
    Ok(saliency)
}

/// Saliency for every class at once; `predicted_class` is the model's own
/// argmax on this sample.
pub fn grad_cam(
    model: &TrainedModel,
    x: &ArrayView1<f64>,
    sample_id: usize,
    target: SaliencyTarget,
) -> Result<SaliencyMap> {
    let column = x.to_owned().insert_axis(ndarray::Axis(1));
    let pred = model.predict(&column.view())?;
    let predicted_class = argmax_column(pred.logits.column(0));
    let c = model.params.n_classes();
    let p = model.params.p();
    let mut values = Array2::zeros((p, c));
    for class in 0..c {
        values
            .column_mut(class)
            .assign(&grad_cam_class(model, x, class, target)?);
    }
    Ok(SaliencyMap {
        values,
        sample_id,
        predicted_class,
    })
}

/// Variables ordered by predicted-class saliency, descending; ties keep
/// ascending variable order.
pub fn rank_regions(map: &SaliencyMap, names: &[String]) -> Result<Vec<(String, f64)>> {
    let p = map.values.nrows();
    if names.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} variables",
            names.len(),
            p
        )));
    }
    let scores = map.values.column(map.predicted_class);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .map(|k| (names[k].clone(), scores[k]))
        .collect())
}
