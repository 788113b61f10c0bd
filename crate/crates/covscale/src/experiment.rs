//! Cross-validated experiment runs and their on-disk artifacts.
//!
//! Per fold: fit the standardizer on the training split, standardize both
//! splits, train (oversampling and basis construction happen inside the
//! trainers, on training data only), then score the untouched test fold.
//! A [`RunArtifact`] captures enough state to re-evaluate every stored
//! model on its stored test indices and reproduce the metrics bit for bit.
//! Wall-clock timings live in a serde-skipped field so reruns of the same
//! config serialize to identical bytes.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::{
    make_1mlp, make_2mlp_identity, make_2mlp_reduced, mlp_forward, train_mlp, MlpModel,
};
use crate::config::{ExperimentConfig, ModelKind};
use crate::data::{
    apply_standardizer, fit_standardizer, make_folds, Dataset, FoldPlan, StandardizeMode,
    Standardizer,
};
use crate::error::{Error, Result};
use crate::interpret::{grad_cam, rank_regions, SaliencyTarget};
use crate::metrics::{compute_metrics, format_mean_std, mean_std, Metrics};
use crate::model::{
    param_count, predicted_classes, train, EpochRecord, Prediction, TrainConfig, TrainedModel,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Ours(Box<TrainedModel>),
    Mlp(MlpModel),
}

impl FittedModel {
    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Prediction> {
        match self {
            FittedModel::Ours(model) => model.predict(x),
            FittedModel::Mlp(model) => mlp_forward(model, x).map(|(pred, _)| pred),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub standardizer: Standardizer,
    pub model: FittedModel,
    pub metrics: Metrics,
    pub epoch_log: Vec<EpochRecord>,
}

/// One model's cross-validated outcome: per-fold details plus the fold
/// mean and population std of each metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub label: String,
    pub model_kind: ModelKind,
    pub train_config: TrainConfig,
    pub folds: Vec<FoldOutcome>,
    pub mean: Metrics,
    pub std: Metrics,
}

fn aggregate(folds: &[FoldOutcome]) -> (Metrics, Metrics) {
    let pick = |f: fn(&Metrics) -> f64| -> (f64, f64) {
        let values: Vec<f64> = folds.iter().map(|o| f(&o.metrics)).collect();
        mean_std(&values)
    };
    let accuracy = pick(|m| m.accuracy);
    let precision = pick(|m| m.macro_precision);
    let recall = pick(|m| m.macro_recall);
    (
        Metrics {
            accuracy: accuracy.0,
            macro_precision: precision.0,
            macro_recall: recall.0,
        },
        Metrics {
            accuracy: accuracy.1,
            macro_precision: precision.1,
            macro_recall: recall.1,
        },
    )
}

fn fit_model(
    kind: ModelKind,
    train_std: &Dataset,
    test_std: &Dataset,
    cfg: &TrainConfig,
) -> Result<(FittedModel, Vec<EpochRecord>)> {
    let p = train_std.n_features();
    let c = train_std.n_classes();
    match kind {
        ModelKind::Ours => {
            let (model, log) = train(train_std, test_std, cfg)?;
            Ok((FittedModel::Ours(Box::new(model)), log))
        }
        ModelKind::Mlp1 => {
            let (model, log) = train_mlp(&make_1mlp(p, c), train_std, test_std, cfg)?;
            Ok((FittedModel::Mlp(model), log))
        }
        ModelKind::Mlp2I => {
            let (model, log) = train_mlp(&make_2mlp_identity(p, c), train_std, test_std, cfg)?;
            Ok((FittedModel::Mlp(model), log))
        }
        ModelKind::Mlp2R => {
            // match the covariance-scale model's trainable budget at this J
            let spec = make_2mlp_reduced(p, c, param_count(p, c, cfg.j))?;
            let (model, log) = train_mlp(&spec, train_std, test_std, cfg)?;
            Ok((FittedModel::Mlp(model), log))
        }
    }
}

/// Run one model over every fold of `plan`. Folds are independent, so they
/// run in parallel; outputs stay in fold order.
fn cv_single(
    data: &Dataset,
    plan: &FoldPlan,
    kind: ModelKind,
    train_cfg: &TrainConfig,
    standardize: StandardizeMode,
    label: &str,
) -> Result<(CvReport, Vec<f64>)> {
    let results: Vec<(FoldOutcome, f64)> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let start = Instant::now();
            let test_indices = plan.test_indices(fold);
            let train_raw = data.subset(&plan.train_indices(fold))?;
            let test_raw = data.subset(&test_indices)?;
            let standardizer = fit_standardizer(&train_raw, standardize)?;
            let train_std = apply_standardizer(&standardizer, &train_raw)?;
            let test_std = apply_standardizer(&standardizer, &test_raw)?;
            let (model, epoch_log) = fit_model(kind, &train_std, &test_std, train_cfg)?;
            let pred = model.predict(&test_std.features.view())?;
            let metrics = compute_metrics(
                &test_std.labels,
                &predicted_classes(&pred),
                data.n_classes(),
            );
            let outcome = FoldOutcome {
                fold,
                test_indices,
                standardizer,
                model,
                metrics,
                epoch_log,
            };
            Ok((outcome, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let (folds, secs): (Vec<FoldOutcome>, Vec<f64>) = results.into_iter().unzip();
    let (mean, std) = aggregate(&folds);
    let report = CvReport {
        label: label.to_string(),
        model_kind: kind,
        train_config: train_cfg.clone(),
        folds,
        mean,
        std,
    };
    Ok((report, secs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub j: usize,
    pub trained_scales: bool,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Long format, one row per (J, scale mode) run: 2·|J_list| data rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,scales,mean_accuracy,std_accuracy\n");
        for row in &self.rows {
            let mode = if row.trained_scales { "trained" } else { "frozen" };
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.j, mode, row.mean_accuracy, row.std_accuracy
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub model: String,
    pub lr: f64,
    pub fold: usize,
    /// First epoch whose post-update test accuracy reached the threshold.
    pub first_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub threshold: f64,
    pub rows: Vec<ThresholdRow>,
}

impl ConvergenceReport {
    pub fn table_csv(&self) -> String {
        let mut out = String::from("model,lr,fold,first_epoch\n");
        for row in &self.rows {
            let epoch = row
                .first_epoch
                .map_or_else(|| "none".to_string(), |e| e.to_string());
            out.push_str(&format!("{},{},{},{}\n", row.model, row.lr, row.fold, epoch));
        }
        out
    }
}

pub fn first_epoch_at(log: &[EpochRecord], threshold: f64) -> Option<usize> {
    log.iter()
        .find(|rec| rec.test_accuracy >= threshold)
        .map(|rec| rec.epoch)
}

/// Per-epoch test-accuracy curves for every run and fold.
pub fn curves_csv(runs: &[CvReport]) -> String {
    let mut out = String::from("epoch,model,lr,fold,test_accuracy\n");
    for run in runs {
        for fold in &run.folds {
            for rec in &fold.epoch_log {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    rec.epoch, run.model_kind, run.train_config.lr_weights, fold.fold,
                    rec.test_accuracy
                ));
            }
        }
    }
    out
}

/// Wall-clock seconds. Deliberately excluded from artifact serialization:
/// they differ between otherwise identical runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
    pub fold_secs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub kind: String,
    pub config_snapshot: String,
    pub seed: u64,
    pub dataset: Dataset,
    pub fold_plan: FoldPlan,
    pub runs: Vec<CvReport>,
    #[serde(default)]
    pub sweep: Option<SweepReport>,
    #[serde(default)]
    pub convergence: Option<ConvergenceReport>,
    #[serde(skip)]
    pub timings: Timings,
}

impl RunArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunArtifact> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-run one stored model on its stored test indices.
    pub fn reevaluate_fold(&self, run: usize, fold: usize) -> Result<Metrics> {
        let run = self
            .runs
            .get(run)
            .ok_or_else(|| Error::Artifact(format!("run index {run} out of range")))?;
        let outcome = run
            .folds
            .get(fold)
            .ok_or_else(|| Error::Artifact(format!("fold index {fold} out of range")))?;
        let test_raw = self.dataset.subset(&outcome.test_indices)?;
        let test_std = apply_standardizer(&outcome.standardizer, &test_raw)?;
        let pred = outcome.model.predict(&test_std.features.view())?;
        Ok(compute_metrics(
            &test_std.labels,
            &predicted_classes(&pred),
            self.dataset.n_classes(),
        ))
    }

    /// Check that every stored metric is reproduced exactly (bitwise) by
    /// re-evaluating the stored model on the stored test indices.
    pub fn verify(&self) -> Result<()> {
        for (r, run) in self.runs.iter().enumerate() {
            for (f, outcome) in run.folds.iter().enumerate() {
                let fresh = self.reevaluate_fold(r, f)?;
                if fresh != outcome.metrics {
                    return Err(Error::Artifact(format!(
                        "run '{}' fold {f}: stored metrics not reproduced",
                        run.label
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn run_cv(data: &Dataset, kind: ModelKind, cfg: &ExperimentConfig) -> Result<RunArtifact> {
    let start = Instant::now();
    let plan = make_folds(data, cfg.folds, cfg.train.seed)?;
    let (report, fold_secs) = cv_single(
        data,
        &plan,
        kind,
        &cfg.train,
        cfg.standardize,
        &kind.to_string(),
    )?;
    Ok(RunArtifact {
        kind: "cv".to_string(),
        config_snapshot: cfg.snapshot(),
        seed: cfg.train.seed,
        dataset: data.clone(),
        fold_plan: plan,
        runs: vec![report],
        sweep: None,
        convergence: None,
        timings: Timings {
            total_secs: start.elapsed().as_secs_f64(),
            fold_secs,
        },
    })
}

/// Cross-validate the covariance-scale model at every J in `j_list`, once
/// with trainable scales and once frozen at their initialization.
pub fn sweep_scales(
    data: &Dataset,
    j_list: &[usize],
    cfg: &ExperimentConfig,
) -> Result<RunArtifact> {
    let start = Instant::now();
    let plan = make_folds(data, cfg.folds, cfg.train.seed)?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut fold_secs = Vec::new();
    for &j in j_list {
        for frozen in [false, true] {
            let mut train_cfg = cfg.train.clone();
            train_cfg.j = j;
            train_cfg.freeze_scales = frozen;
            let label = format!("ours_j{}_{}", j, if frozen { "frozen" } else { "trained" });
            let (report, secs) =
                cv_single(data, &plan, ModelKind::Ours, &train_cfg, cfg.standardize, &label)?;
            rows.push(SweepRow {
                j,
                trained_scales: !frozen,
                mean_accuracy: report.mean.accuracy,
                std_accuracy: report.std.accuracy,
            });
            runs.push(report);
            fold_secs.extend(secs);
        }
    }
    Ok(RunArtifact {
        kind: "sweep".to_string(),
        config_snapshot: cfg.snapshot(),
        seed: cfg.train.seed,
        dataset: data.clone(),
        fold_plan: plan,
        runs,
        sweep: Some(SweepReport { rows }),
        convergence: None,
        timings: Timings {
            total_secs: start.elapsed().as_secs_f64(),
            fold_secs,
        },
    })
}

/// Train ours and 2-MLP_I with identical learning rates and seeds, keeping
/// per-epoch curves and the first epoch at which each fold reached the
/// configured test-accuracy threshold.
pub fn compare_convergence(
    data: &Dataset,
    cfg: &ExperimentConfig,
    lrs: &[f64],
) -> Result<RunArtifact> {
    let start = Instant::now();
    let plan = make_folds(data, cfg.folds, cfg.train.seed)?;
    let mut runs = Vec::new();
    let mut fold_secs = Vec::new();
    for &lr in lrs {
        for kind in [ModelKind::Ours, ModelKind::Mlp2I] {
            let mut train_cfg = cfg.train.clone();
            train_cfg.lr_weights = lr;
            train_cfg.lr_scales = lr;
            let label = format!("{kind}_lr{lr}");
            let (report, secs) =
                cv_single(data, &plan, kind, &train_cfg, cfg.standardize, &label)?;
            runs.push(report);
            fold_secs.extend(secs);
        }
    }
    let rows = runs
        .iter()
        .flat_map(|run| {
            run.folds.iter().map(|fold| ThresholdRow {
                model: run.model_kind.to_string(),
                lr: run.train_config.lr_weights,
                fold: fold.fold,
                first_epoch: first_epoch_at(&fold.epoch_log, cfg.threshold),
            })
        })
        .collect();
    Ok(RunArtifact {
        kind: "converge".to_string(),
        config_snapshot: cfg.snapshot(),
        seed: cfg.train.seed,
        dataset: data.clone(),
        fold_plan: plan,
        runs,
        sweep: None,
        convergence: Some(ConvergenceReport {
            threshold: cfg.threshold,
            rows,
        }),
        timings: Timings {
            total_secs: start.elapsed().as_secs_f64(),
            fold_secs,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyRow {
    pub region: String,
    pub class: String,
    pub saliency: f64,
    pub rank: usize,
}

/// Saliency for one sample, attributed by the model from the fold that held
/// it out, so the explained prediction comes from a model that never
/// trained on the sample.
pub fn interpret_sample(
    artifact: &RunArtifact,
    sample_index: usize,
    target: SaliencyTarget,
) -> Result<Vec<SaliencyRow>> {
    let n = artifact.dataset.n_samples();
    if sample_index >= n {
        return Err(Error::BadSampleIndex {
            index: sample_index,
            count: n,
        });
    }
    let fold = artifact.fold_plan.assignments[sample_index];
    let run = artifact
        .runs
        .iter()
        .find(|run| run.model_kind == ModelKind::Ours)
        .ok_or_else(|| {
            Error::Artifact("artifact holds no covariance-scale model to interpret".to_string())
        })?;
    let outcome = run
        .folds
        .iter()
        .find(|outcome| outcome.fold == fold)
        .ok_or_else(|| Error::Artifact(format!("fold {fold} missing from run '{}'", run.label)))?;
    let model = match &outcome.model {
        FittedModel::Ours(model) => model,
        FittedModel::Mlp(_) => {
            return Err(Error::Artifact(format!(
                "run '{}' stored a baseline model, not the covariance-scale model",
                run.label
            )))
        }
    };
    let raw = artifact.dataset.subset(&[sample_index])?;
    let standardized = apply_standardizer(&outcome.standardizer, &raw)?;
    let x = standardized.features.column(0).to_owned();
    let map = grad_cam(model, &x.view(), sample_index, target)?;
    let ranked = rank_regions(&map, &artifact.dataset.feature_names)?;
    let class = artifact.dataset.class_names[map.predicted_class].clone();
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(i, (region, saliency))| SaliencyRow {
            region,
            class: class.clone(),
            saliency,
            rank: i + 1,
        })
        .collect())
}

pub fn saliency_csv(rows: &[SaliencyRow]) -> String {
    let mut out = String::from("region_name,class,saliency,rank\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.region, row.class, row.saliency, row.rank
        ));
    }
    out
}

pub fn epoch_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,test_accuracy\n");
    for rec in log {
        out.push_str(&format!(
            "{},{},{}\n",
            rec.epoch, rec.train_loss, rec.test_accuracy
        ));
    }
    out
}

fn metrics_json(artifact: &RunArtifact) -> Result<String> {
    let mut per_fold = serde_json::Map::new();
    let mut agg = serde_json::Map::new();
    for run in &artifact.runs {
        let folds: Vec<_> = run
            .folds
            .iter()
            .map(|o| {
                json!({
                    "fold": o.fold,
                    "accuracy": o.metrics.accuracy,
                    "macro_precision": o.metrics.macro_precision,
                    "macro_recall": o.metrics.macro_recall,
                })
            })
            .collect();
        per_fold.insert(run.label.clone(), json!(folds));
        agg.insert(
            run.label.clone(),
            json!({
                "accuracy_mean": run.mean.accuracy,
                "accuracy_std": run.std.accuracy,
                "accuracy": format_mean_std(run.mean.accuracy, run.std.accuracy),
                "macro_precision_mean": run.mean.macro_precision,
                "macro_precision_std": run.std.macro_precision,
                "macro_precision": format_mean_std(run.mean.macro_precision, run.std.macro_precision),
                "macro_recall_mean": run.mean.macro_recall,
                "macro_recall_std": run.std.macro_recall,
                "macro_recall": format_mean_std(run.mean.macro_recall, run.std.macro_recall),
            }),
        );
    }
    let doc = json!({ "per_fold": per_fold, "aggregate": agg });
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Lay a run artifact out as a directory: config snapshot, artifact JSON,
/// metrics JSON, per-fold epoch logs, and the kind-specific CSVs. Only
/// timings.json varies between reruns of the same config.
pub fn write_run_dir(artifact: &RunArtifact, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), &artifact.config_snapshot)?;
    artifact.save(&dir.join("artifact.json"))?;
    let mut metrics = metrics_json(artifact)?;
    metrics.push('\n');
    fs::write(dir.join("metrics.json"), metrics)?;
    for run in &artifact.runs {
        for fold in &run.folds {
            let name = format!("epochs_{}_fold{}.csv", run.label, fold.fold);
            fs::write(dir.join(name), epoch_csv(&fold.epoch_log))?;
        }
    }
    if let Some(sweep) = &artifact.sweep {
        fs::write(dir.join("sweep.csv"), sweep.to_csv())?;
    }
    if artifact.convergence.is_some() {
        fs::write(dir.join("curves.csv"), curves_csv(&artifact.runs))?;
    }
    if let Some(convergence) = &artifact.convergence {
        fs::write(dir.join("thresholds.csv"), convergence.table_csv())?;
    }
    let mut timings = serde_json::to_string_pretty(&artifact.timings)?;
    timings.push('\n');
    fs::write(dir.join("timings.json"), timings)?;
    Ok(())
}
