//! Multi-scale embedding C_X(s) = U g(sΛ) UᵀX and its backward pass to the
//! scale parameters.
//!
//! The dense p×p operator U g(sΛ) Uᵀ is never materialized: with the
//! projection X̂ = UᵀX in hand, each scale costs one diagonal filter and one
//! p×p·p×n product. Training code caches X̂ per fold and calls the
//! `*_projected` variants; the plain entry points project on the fly.

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::BandPassFilter;
use crate::spectral::{project, SpectralBasis};

pub const LN_10: f64 = std::f64::consts::LN_10;

/// J trainable log-scales θ with s_j = 10^θ_j. Positivity of every scale is
/// structural: no clamping, no projection step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub log_scales: Array1<f64>,
}

impl ScaleSet {
    pub fn new(log_scales: Array1<f64>) -> ScaleSet {
        assert!(!log_scales.is_empty(), "need at least one scale");
        assert!(
            log_scales.iter().all(|t| t.is_finite()),
            "log-scales must be finite"
        );
        ScaleSet { log_scales }
    }

    pub fn j(&self) -> usize {
        self.log_scales.len()
    }

    pub fn scale(&self, j: usize) -> f64 {
        10f64.powf(self.log_scales[j])
    }

    pub fn scales(&self) -> Array1<f64> {
        self.log_scales.mapv(|t| 10f64.powf(t))
    }
}

/// One filtered coefficient matrix C_X(s_j) with the diagonal filter values
/// kept for backprop and saliency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEmbedding {
    pub coefficients: Array2<f64>,
    pub scale_index: usize,
    /// g(s_j λ_k) for k = 0..p.
    pub cached_filter: Array1<f64>,
}

/// All J scale blocks plus their vertical concatenation E of shape (J·p)×n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleEmbedding {
    pub blocks: Vec<ScaleEmbedding>,
    pub stacked: Array2<f64>,
}

impl MultiScaleEmbedding {
    pub fn j(&self) -> usize {
        self.blocks.len()
    }
}

fn check_dims(basis: &SpectralBasis, x: &ArrayView2<f64>) -> Result<()> {
    if basis.dim() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "basis dimension {} vs data rows {}",
            basis.dim(),
            x.nrows()
        )));
    }
    Ok(())
}

/// C_X(s) for one scale, from the already-projected signal X̂ = UᵀX.
pub fn embed_projected<F: BandPassFilter>(
    basis: &SpectralBasis,
    filter: &F,
    xhat: &ArrayView2<f64>,
    s: f64,
    scale_index: usize,
) -> Result<ScaleEmbedding> {
    // s = 10^θ is positive for any finite θ, but a diverged θ can underflow
    // to 0 or overflow to inf; surface that as a recoverable error.
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::NonFiniteStage(format!(
            "scale {s} at index {scale_index}"
        )));
    }
    check_dims(basis, xhat)?;
    let cached_filter = basis.eigenvalues.mapv(|l| filter.eval(s * l));
    let mut filtered = xhat.to_owned();
    for (k, mut row) in filtered.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| v * cached_filter[k]);
    }
    let coefficients = basis.eigenvectors.dot(&filtered);
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteStage(format!(
            "embedding at scale index {scale_index} (s={s})"
        )));
    }
    Ok(ScaleEmbedding {
        coefficients,
        scale_index,
        cached_filter,
    })
}

/// C_X(s) = U·(g(sλ) ⊙ (UᵀX)) for one scale.
pub fn embed_one<F: BandPassFilter>(
    basis: &SpectralBasis,
    filter: &F,
    x: &ArrayView2<f64>,
    s: f64,
) -> Result<ScaleEmbedding> {
    check_dims(basis, x)?;
    let xhat = project(basis, x);
    embed_projected(basis, filter, &xhat.view(), s, 0)
}

/// All J blocks, stacked in scale order, from the projected signal.
pub fn embed_all_projected<F: BandPassFilter>(
    basis: &SpectralBasis,
    filter: &F,
    xhat: &ArrayView2<f64>,
    scales: &ScaleSet,
) -> Result<MultiScaleEmbedding> {
    check_dims(basis, xhat)?;
    let (p, n) = xhat.dim();
    let j = scales.j();
    let mut blocks = Vec::with_capacity(j);
    let mut stacked = Array2::zeros((j * p, n));
    for idx in 0..j {
        let block = embed_projected(basis, filter, xhat, scales.scale(idx), idx)?;
        stacked
            .slice_mut(s![idx * p..(idx + 1) * p, ..])
            .assign(&block.coefficients);
        blocks.push(block);
    }
    Ok(MultiScaleEmbedding { blocks, stacked })
}

pub fn embed_all<F: BandPassFilter>(
    basis: &SpectralBasis,
    filter: &F,
    x: &ArrayView2<f64>,
    scales: &ScaleSet,
) -> Result<MultiScaleEmbedding> {
    check_dims(basis, x)?;
    let xhat = project(basis, x);
    embed_all_projected(basis, filter, &xhat.view(), scales)
}

/// ∂L/∂θ for every scale, given upstream = ∂L/∂E (activation derivative
/// already folded in by the caller).
///
/// Per scale j, with B_j the j-th row block of upstream,
///   ∂L/∂s_j = Σ_entries B_j ⊙ (U diag(λ g′(s_jλ)) UᵀX)
///           = Σ_k λ_k g′(s_jλ_k) · ⟨row_k(UᵀB_j), row_k(X̂)⟩,
/// and ∂L/∂θ_j = ln(10)·s_j·∂L/∂s_j for the log₁₀ parameterization.
pub fn scale_gradients_projected<F: BandPassFilter>(
    basis: &SpectralBasis,
    filter: &F,
    xhat: &ArrayView2<f64>,
    scales: &ScaleSet,
    upstream: &ArrayView2<f64>,
) -> Result<Array1<f64>> {
    check_dims(basis, xhat)?;
    let (p, n) = xhat.dim();
    let j = scales.j();
    if upstream.dim() != (j * p, n) {
        return Err(Error::DimensionMismatch(format!(
            "upstream shape {:?}, expected ({}, {})",
            upstream.dim(),
            j * p,
            n
        )));
    }
    let mut grads = Array1::zeros(j);
    for idx in 0..j {
        let s_j = scales.scale(idx);
        let block = upstream.slice(s![idx * p..(idx + 1) * p, ..]);
        let projected_upstream = basis.eigenvectors.t().dot(&block);
        let mut ds = 0.0;
        for k in 0..p {
            let lambda = basis.eigenvalues[k];
            let weight = lambda * filter.deriv(s_j * lambda);
            if weight != 0.0 {
                ds += weight * projected_upstream.row(k).dot(&xhat.row(k));
            }
        }
        grads[idx] = LN_10 * s_j * ds;
    }
    Ok(grads)
}

pub fn scale_gradients<F: BandPassFilter>(
    basis: &SpectralBasis,
    filter: &F,
    x: &ArrayView2<f64>,
    scales: &ScaleSet,
    upstream: &ArrayView2<f64>,
) -> Result<Array1<f64>> {
    check_dims(basis, x)?;
    let xhat = project(basis, x);
    scale_gradients_projected(basis, filter, &xhat.view(), scales, upstream)
}
