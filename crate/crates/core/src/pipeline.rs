//! The offline decoding chain: bandpass → decimate → xDAWN → epochs → BLDA,
//! then per-character decoding and metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blda::{fit_blda, BldaError, BldaModel, BldaOptions};
use crate::decoder::{accuracy_by_repetition, decode_characters, CharDecision, DecodeError};
use crate::dsp::{self, DspError, Recording};
use crate::metrics::{self, MetricsError, RocCurve};
use crate::patterns::SpellerMatrix;
use crate::scheduler::Schedule;
use crate::xdawn::{self, SpatialFilterModel, XdawnError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dsp: {0}")]
    Dsp(#[from] DspError),
    #[error("xdawn: {0}")]
    Xdawn(#[from] XdawnError),
    #[error("blda: {0}")]
    Blda(#[from] BldaError),
    #[error("decoder: {0}")]
    Decode(#[from] DecodeError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("pipeline: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter_order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs_out_hz: f64,
    pub window_s: f64,
    pub erp_len: usize,
    pub n_f: usize,
    pub blda_tol: f64,
    pub blda_max_iter: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter_order: dsp::DEFAULT_FILTER_ORDER,
            low_hz: dsp::DEFAULT_LOW_HZ,
            high_hz: dsp::DEFAULT_HIGH_HZ,
            fs_out_hz: dsp::DEFAULT_FS_OUT_HZ,
            window_s: dsp::DEFAULT_EPOCH_WINDOW_S,
            erp_len: xdawn::DEFAULT_ERP_LEN,
            n_f: xdawn::DEFAULT_N_FILTERS,
            blda_tol: crate::blda::DEFAULT_TOL,
            blda_max_iter: crate::blda::DEFAULT_MAX_ITER,
        }
    }
}

impl PipelineConfig {
    fn blda_options(&self) -> BldaOptions {
        BldaOptions { tol: self.blda_tol, max_iter: self.blda_max_iter, ..BldaOptions::default() }
    }
}

/// Spatial filters and classifier fitted on one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub xdawn: SpatialFilterModel,
    pub blda: BldaModel,
}

/// Bandpass at the acquisition rate, then subsample.
pub fn preprocess(rec: &Recording, cfg: &PipelineConfig) -> Result<Recording, PipelineError> {
    let spec = dsp::design_bandpass_with(cfg.filter_order, cfg.low_hz, cfg.high_hz, rec.fs_hz)?;
    let filtered = dsp::filter_recording(&spec, rec)?;
    Ok(dsp::decimate(&filtered, cfg.fs_out_hz)?)
}

fn features(
    xdawn_model: &SpatialFilterModel,
    decimated: &Recording,
    cfg: &PipelineConfig,
) -> Result<(DMatrix<f64>, Vec<bool>), PipelineError> {
    let enhanced = xdawn::apply_spatial_filter(xdawn_model, decimated)?;
    let epochs = dsp::extract_epochs(&enhanced, cfg.window_s)?;
    Ok((epochs.epochs, epochs.labels))
}

pub fn train(rec: &Recording, cfg: &PipelineConfig) -> Result<TrainedModel, PipelineError> {
    let decimated = preprocess(rec, cfg)?;
    let labels: Vec<bool> = decimated.events.iter().filter(|e| e.is_flash()).map(|e| e.is_target).collect();
    if !labels.iter().any(|&l| l) {
        let non_targets = labels.len();
        return Err(BldaError::SingleClass { targets: 0, non_targets }.into());
    }
    let xdawn_model = xdawn::fit_xdawn(&decimated, cfg.erp_len, cfg.n_f)?;
    let (x, labels) = features(&xdawn_model, &decimated, cfg)?;
    let blda = fit_blda(&x, &labels, &cfg.blda_options())?;
    Ok(TrainedModel { xdawn: xdawn_model, blda })
}

/// One classifier score per flash event, with its label.
pub fn score_session(model: &TrainedModel, rec: &Recording, cfg: &PipelineConfig) -> Result<(Vec<f64>, Vec<bool>), PipelineError> {
    let decimated = preprocess(rec, cfg)?;
    let (x, labels) = features(&model.xdawn, &decimated, cfg)?;
    Ok((model.blda.score_rows(&x)?, labels))
}

/// Accuracy, ITR and ROC for one scored session.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Index `k-1` holds the value after `k` repetitions.
    pub accuracy: Vec<f64>,
    pub itr_bpm: Vec<f64>,
    pub roc: RocCurve,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub decisions: Vec<CharDecision>,
}

impl Evaluation {
    pub fn auc(&self) -> f64 {
        self.roc.auc
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy.iter().sum::<f64>() / self.accuracy.len() as f64
    }
}

/// ITR after `k` repetitions for each accuracy in `accuracy`.
pub fn itr_curve(schedule: &Schedule, accuracy: &[f64]) -> Result<Vec<f64>, PipelineError> {
    let n = schedule.pattern.n;
    accuracy
        .iter()
        .enumerate()
        .map(|(i, &p)| Ok(metrics::itr_bpm(p, n * n, schedule.paradigm, i + 1, schedule.isi_s, n)?))
        .collect()
}

/// Scores, decodes and measures a test session with a trained model.
pub fn evaluate(
    model: &TrainedModel,
    schedule: &Schedule,
    rec: &Recording,
    matrix: &SpellerMatrix,
    cfg: &PipelineConfig,
) -> Result<Evaluation, PipelineError> {
    let (scores, labels) = score_session(model, rec, cfg)?;
    let decisions = decode_characters(schedule, &scores, matrix)?;
    let accuracy = accuracy_by_repetition(&decisions, &schedule.targets)?;
    let itr_bpm = itr_curve(schedule, &accuracy)?;
    let roc = metrics::roc(&scores, &labels)?;
    Ok(Evaluation { accuracy, itr_bpm, roc, scores, labels, decisions })
}

/// Averages two directional evaluations into one accuracy/ITR/AUC summary.
///
/// The ROC curve is recomputed from the pooled scores; the AUC reported is the
/// mean of the directional AUCs.
pub fn combine(a: &Evaluation, b: &Evaluation, schedule: &Schedule) -> Result<Evaluation, PipelineError> {
    if a.accuracy.len() != b.accuracy.len() {
        return Err(PipelineError::Invalid("evaluations cover different repetition counts".into()));
    }
    let accuracy: Vec<f64> = a.accuracy.iter().zip(&b.accuracy).map(|(x, y)| (x + y) / 2.0).collect();
    let itr_bpm = itr_curve(schedule, &accuracy)?;
    let scores: Vec<f64> = a.scores.iter().chain(&b.scores).copied().collect();
    let labels: Vec<bool> = a.labels.iter().chain(&b.labels).copied().collect();
    let mut roc = metrics::roc(&scores, &labels)?;
    roc.auc = (a.auc() + b.auc()) / 2.0;
    Ok(Evaluation { accuracy, itr_bpm, roc, scores, labels, decisions: Vec::new() })
}
