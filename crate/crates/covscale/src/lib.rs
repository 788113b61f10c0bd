//! Multi-scale learning on the covariance spectrum.
//!
//! The pipeline: standardize a small tabular dataset, eigendecompose its
//! sample covariance, filter the dual-space signal through a bank of
//! band-pass kernels at trainable scales, and feed the stacked embeddings to
//! a softmax classifier. Everything downstream (baselines, oversampling,
//! cross-validation, saliency) hangs off those pieces.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod interpret;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod transform;

pub use baselines::{make_1mlp, make_2mlp_identity, make_2mlp_reduced, train_mlp, MlpModel, MlpSpec};
pub use config::{load_config, parse_config_text, ExperimentConfig, ModelKind};
pub use data::{
    adasyn_oversample, apply_standardizer, fit_standardizer, load_csv, make_folds, save_csv,
    Dataset, FoldPlan, OversampleConfig, StandardizeMode, Standardizer,
};
pub use error::{Error, Result};
pub use experiment::{
    compare_convergence, interpret_sample, run_cv, sweep_scales, write_run_dir, ConvergenceReport,
    CvReport, FoldOutcome, FittedModel, RunArtifact, SweepReport,
};
pub use interpret::{grad_cam, rank_regions, SaliencyMap, SaliencyTarget};
pub use kernel::{BandPassFilter, KernelSpec};
pub use metrics::{compute_metrics, format_mean_std, mean_std, ConfusionMatrix, Metrics};
pub use model::{
    train, Activation, EpochRecord, ModelParams, Prediction, TrainConfig, TrainedModel,
};
pub use spectral::{covariance, eigendecompose, project, CovarianceMatrix, SpectralBasis};
pub use synth::{synth_generate, SynthSpec};
pub use transform::{
    embed_all, embed_one, scale_gradients, MultiScaleEmbedding, ScaleEmbedding, ScaleSet,
};
