//! Epoch loop, evaluation, prediction, metric histories and model archives.

mod archive;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use archive::{from_bytes, load_model, save_model, to_bytes, write_archive, ArchiveHeader, LayerRecord, FORMAT_VERSION, MAGIC};

use crate::dataset::{batches, split_stratified, DatasetManifest, Examples, ManifestSubset, SplitIndices, TensorCache};
use crate::ela::{ela_transform, ElaConfig, RgbImage};
use crate::error::{ensure, Error, Result};
use crate::loss::{argmax, cross_entropy, Label};
use crate::nn::{build_paper_model, Mode, Model};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub split_ratio: f64,
    pub ela: ElaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 50,
            batch_size: 32,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 42,
            split_ratio: 0.8,
            ela: ElaConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The 50-epoch run.
    pub fn paper_50() -> Self {
        Self::default()
    }

    /// The 100-epoch run, with its own initialisation seed.
    pub fn paper_100() -> Self {
        Self { epochs: 100, seed: 43, ..Self::default() }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, "batch size must be at least 1");
        ensure!(
            self.split_ratio > 0.0 && self.split_ratio < 1.0,
            "split ratio must lie in (0, 1), got {}",
            self.split_ratio
        );
        self.adam().validate()?;
        self.ela.validate()
    }

    /// Hex SHA-256 of the configuration's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serialises");
        Sha256::digest(&json).iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Metrics of one finished epoch, measured in evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// One record per completed epoch, numbered from 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsHistory {
    records: Vec<EpochMetrics>,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

impl MetricsHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EpochMetrics) -> Result<()> {
        ensure!(
            record.epoch == self.records.len() + 1,
            "epoch {} recorded after {} epochs",
            record.epoch,
            self.records.len()
        );
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[EpochMetrics] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.records.last()
    }

    /// The CSV text written by [`export_history`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }
}

pub fn export_history(history: &MetricsHistory, path: impl AsRef<Path>) -> Result<()> {
    ensure!(!history.is_empty(), "cannot export an empty history");
    let path = path.as_ref();
    std::fs::write(path, history.to_csv()).map_err(|e| Error::io(path, e))
}

/// Mean cross-entropy and accuracy over a set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Evaluation-mode pass over every item of `set`, `batch_size` at a time.
pub fn evaluate(model: &Model, set: &dyn Examples, batch_size: usize) -> Result<Evaluation> {
    ensure!(!set.is_empty(), "cannot evaluate an empty set");
    ensure!(batch_size >= 1, "batch size must be at least 1");
    let positions: Vec<usize> = (0..set.len()).collect();
    let (mut loss, mut hits) = (0.0f64, 0usize);
    for chunk in positions.chunks(batch_size) {
        let batch = set.load(chunk)?;
        let probs = model.infer(&batch.inputs)?;
        for (p, label) in probs.data().chunks_exact(2).zip(&batch.labels) {
            loss += cross_entropy(p, &label.one_hot());
            hits += usize::from(argmax(p) == label.index());
        }
    }
    let n = set.len() as f64;
    Ok(Evaluation { loss: loss / n, accuracy: hits as f64 / n })
}

/// Parameters from the epoch with the best validation accuracy.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub epoch: usize,
    pub val_acc: f64,
    pub parameters: Vec<Tensor>,
}

impl Checkpoint {
    /// A copy of `model` carrying these parameters.
    pub fn apply_to(&self, model: &Model) -> Result<Model> {
        let mut out = model.clone();
        out.load_parameters(self.parameters.clone())?;
        Ok(out)
    }
}

/// Optional controls for [`fit`].
#[derive(Default)]
pub struct FitControl<'a> {
    /// Checked before every batch; when set, training stops with an error and
    /// the history keeps the completed epochs.
    pub stop: Option<&'a AtomicBool>,
    /// Keep a copy of the parameters from the best validation epoch.
    pub keep_best: bool,
    /// Called after every epoch's evaluation.
    pub on_epoch: Option<Box<dyn FnMut(&EpochMetrics) + 'a>>,
}

/// Trains `model` in place for `cfg.epochs` epochs.
///
/// Each epoch shuffles `train` with `(cfg.seed, epoch)`, takes one Adam step per
/// batch on the batch-mean cross-entropy, then evaluates `train` and `val` with
/// dropout off and appends the result to `history`.
pub fn fit(
    model: &mut Model,
    train: &dyn Examples,
    val: &dyn Examples,
    cfg: &TrainConfig,
    history: &mut MetricsHistory,
    control: &mut FitControl<'_>,
) -> Result<Option<Checkpoint>> {
    cfg.validate()?;
    ensure!(!train.is_empty(), "training set is empty");
    ensure!(!val.is_empty(), "validation set is empty");
    ensure!(history.is_empty(), "history must start empty");
    model.set_config_digest(cfg.digest());
    let mut adam = AdamState::new(cfg.adam(), model.parameters())?;
    let positions: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=cfg.epochs {
        model.set_mode(Mode::Train);
        for batch_positions in batches(&positions, cfg.batch_size, cfg.seed, epoch as u64)? {
            if control.stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                model.set_mode(Mode::Eval);
                return Err(Error::Training(format!("interrupted during epoch {epoch}")));
            }
            let batch = train.load(&batch_positions)?;
            let probs = model.forward(&batch.inputs)?;
            let scale = 1.0 / batch.len() as f32;
            let grad = probs.sub(&batch.targets)?.scale(scale);
            if !probs.data().iter().all(|v| v.is_finite()) {
                model.set_mode(Mode::Eval);
                return Err(Error::Training(format!("non-finite output in epoch {epoch}")));
            }
            model.backward(&grad)?;
            adam.step(model.params_and_grads())?;
        }
        model.set_mode(Mode::Eval);
        let on_train = evaluate(model, train, cfg.batch_size)?;
        let on_val = evaluate(model, val, cfg.batch_size)?;
        let record = EpochMetrics {
            epoch,
            train_loss: on_train.loss,
            train_acc: on_train.accuracy,
            val_loss: on_val.loss,
            val_acc: on_val.accuracy,
        };
        history.push(record)?;
        if control.keep_best && best.as_ref().map_or(true, |b| record.val_acc > b.val_acc) {
            let parameters = model.parameters().into_iter().cloned().collect();
            best = Some(Checkpoint { epoch, val_acc: record.val_acc, parameters });
        }
        if let Some(cb) = control.on_epoch.as_mut() {
            cb(&record);
        }
    }
    Ok(best)
}

/// Result of [`train`].
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub split: SplitIndices,
    pub best: Option<Checkpoint>,
}

/// Splits `manifest`, builds a model seeded with `cfg.seed` and runs [`fit`].
pub fn train(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    cache: &TensorCache,
    history: &mut MetricsHistory,
    control: &mut FitControl<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let split = split_stratified(manifest, cfg.split_ratio, cfg.seed)?;
    let train_set = ManifestSubset { manifest, indices: split.train.clone(), ela: cfg.ela, cache };
    let val_set = ManifestSubset { manifest, indices: split.val.clone(), ela: cfg.ela, cache };
    let mut model = build_paper_model(cfg.seed);
    let best = fit(&mut model, &train_set, &val_set, cfg, history, control)?;
    Ok(TrainOutcome { model, split, best })
}

/// Class probabilities for one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub authentic: f32,
    pub tampered: f32,
    pub label: Label,
}

pub fn predict_image(model: &Model, img: &RgbImage, ela: &ElaConfig) -> Result<Prediction> {
    let x = ela_transform(img, ela)?;
    let probs = model.infer(&x)?;
    let p = probs.data();
    let label = Label::from_index(argmax(p)).expect("two classes");
    Ok(Prediction { authentic: p[0], tampered: p[1], label })
}

/// Runs [`predict_image`] on a file.
pub fn predict(model: &Model, path: impl AsRef<Path>, ela: &ElaConfig) -> Result<Prediction> {
    let img = RgbImage::open(path)?;
    predict_image(model, &img, ela)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize) -> EpochMetrics {
        EpochMetrics { epoch, train_loss: 0.5, train_acc: 0.75, val_loss: 1.0 / 3.0, val_acc: 0.5 }
    }

    #[test]
    fn history_csv() {
        let mut h = MetricsHistory::new();
        h.push(record(1)).unwrap();
        h.push(record(2)).unwrap();
        assert!(h.push(record(4)).is_err());
        assert_eq!(
            h.to_csv(),
            "epoch,train_loss,train_acc,val_loss,val_acc\n\
             1,0.500000,0.750000,0.333333,0.500000\n\
             2,0.500000,0.750000,0.333333,0.500000\n"
        );
    }

    #[test]
    fn config_checks_and_digest() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.digest(), TrainConfig::paper_50().digest());
        assert_ne!(cfg.digest(), TrainConfig::paper_100().digest());
        assert_eq!(cfg.digest().len(), 64);
        assert!(TrainConfig { epochs: 0, ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { split_ratio: 1.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = TrainConfig::paper_100();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), cfg);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.batch_size, 32);
    }
}
