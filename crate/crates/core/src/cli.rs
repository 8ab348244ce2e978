//! Command-line front end.
//!
//! Every command takes an optional JSON [`RunConfig`] file; flags override
//! values from the file. Exit codes: 0 success, 2 configuration or validation
//! error, 3 I/O error, 4 pipeline or numerical error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blda::BldaModel;
use crate::decoder::write_decisions_csv;
use crate::dsp::Recording;
use crate::metrics::{self, MetricsError, TTest};
use crate::patterns::{seeded_pattern, Cell, FlashPattern, PatternError, PatternKind, SpellerMatrix};
use crate::pipeline::{self, Evaluation, PipelineConfig, PipelineError, TrainedModel};
use crate::scheduler::{self, Paradigm, Schedule, ScheduleError, ScheduleParams};
use crate::session_io::{self, SessionError, SessionMeta};
use crate::synth::{self, SynthConfig, SynthError};
use crate::xdawn::SpatialFilterModel;

pub const XDAWN_MODEL_FILE: &str = "xdawn.json";
pub const BLDA_MODEL_FILE: &str = "blda.json";
pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const TTEST_FILE: &str = "ttest.txt";

/// Twenty symbols from the standard grid.
pub const DEFAULT_TARGETS: &str = "BRAIN_COMPUTER_IFACE";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Pipeline(_) => 4,
        }
    }
}

impl From<PatternError> for CliError {
    fn from(e: PatternError) -> Self {
        CliError::Config(format!("patterns: {e}"))
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        CliError::Config(format!("scheduler: {e}"))
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(format!("synth: {e}"))
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        CliError::Io(format!("session_io: {e}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Pipeline(format!("metrics: {e}"))
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    /// Defaults to classical for CP300 and constrained for XP300.
    pub kind: Option<PatternKind>,
    /// Seed for the free permutations; identity permutations when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Evaluate both train/test directions and average them.
    pub swap: bool,
}

/// Everything a run depends on besides file paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paradigm: Paradigm,
    pub n: usize,
    pub reps: usize,
    pub isi_s: f64,
    /// Defaults to half the ISI.
    pub flash_duration_s: Option<f64>,
    pub inter_char_gap_s: f64,
    pub targets: String,
    pub pattern: PatternConfig,
    /// Seeds the schedule shuffles and the synthetic signal.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::Xp300,
            n: 6,
            reps: scheduler::DEFAULT_REPS,
            isi_s: scheduler::DEFAULT_ISI_S,
            flash_duration_s: None,
            inter_char_gap_s: 0.0,
            targets: DEFAULT_TARGETS.to_string(),
            pattern: PatternConfig::default(),
            seed: None,
            synth: SynthConfig::default(),
            pipeline: PipelineConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn pattern_kind(&self) -> PatternKind {
        self.pattern.kind.unwrap_or(match self.paradigm {
            Paradigm::Cp300 => PatternKind::Classical,
            Paradigm::Xp300 => PatternKind::Constrained,
        })
    }

    pub fn schedule_params(&self, seed: u64) -> ScheduleParams {
        let mut p = ScheduleParams::new(self.reps, self.isi_s, seed);
        if let Some(d) = self.flash_duration_s {
            p.flash_duration_s = d;
        }
        p.inter_char_gap_s = self.inter_char_gap_s;
        p
    }

    pub fn matrix(&self) -> Result<SpellerMatrix, CliError> {
        Ok(SpellerMatrix::default_for(self.n)?)
    }

    pub fn flash_pattern(&self) -> Result<FlashPattern, CliError> {
        Ok(seeded_pattern(self.pattern_kind(), self.n, self.pattern.seed)?)
    }

    pub fn target_cells(&self) -> Result<Vec<Cell>, CliError> {
        let m = self.matrix()?;
        self.targets
            .chars()
            .map(|c| m.find(c).ok_or_else(|| CliError::Config(format!("target symbol '{c}' is not on the {0}x{0} grid", self.n))))
            .collect()
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n < 3 {
            return Err(CliError::Config(format!("n = {} must be >= 3", self.n)));
        }
        if self.targets.is_empty() {
            return Err(CliError::Config("targets text is empty".into()));
        }
        if self.paradigm == Paradigm::Cp300 && self.pattern_kind() != PatternKind::Classical {
            return Err(CliError::Config("cp300 requires the classical pattern".into()));
        }
        self.schedule(0)?;
        self.synth.validate()?;
        let p = &self.pipeline;
        if p.n_f == 0 || p.erp_len == 0 || !(p.window_s > 0.0) || !(p.fs_out_hz > 0.0) || !(p.blda_tol > 0.0) {
            return Err(CliError::Config("pipeline: n_f, erp_len, window_s, fs_out_hz and blda_tol must be positive".into()));
        }
        if !(p.low_hz > 0.0 && p.low_hz < p.high_hz) {
            return Err(CliError::Config(format!("pipeline: band edges {} .. {} Hz", p.low_hz, p.high_hz)));
        }
        Ok(())
    }

    pub fn schedule(&self, seed: u64) -> Result<Schedule, CliError> {
        let pattern = self.flash_pattern()?;
        let targets = self.target_cells()?;
        Ok(scheduler::make_schedule(self.paradigm, &pattern, &self.schedule_params(seed), &targets)?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "xp300", version, about = "P300 speller patterns, simulation and offline decoding")]
pub struct Cli {
    /// Require explicit seeds (also enabled by XP300_CI=1).
    #[arg(long, global = true, env = "XP300_CI")]
    pub ci: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a flash pattern as JSON.
    Pattern(PatternArgs),
    /// Generate a synthetic session bundle.
    Simulate(SimulateArgs),
    /// Fit xDAWN and BLDA on a session.
    Train(TrainArgs),
    /// Train on one session, score another.
    Eval(EvalArgs),
    /// Compare CP300 and XP300 cohorts of eval outputs.
    Report(ReportArgs),
    /// Print the resolved run configuration as JSON.
    Config(ConfigArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "classical")]
    Rc,
    Permuted,
    Constrained,
}

impl From<KindArg> for PatternKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Rc => PatternKind::Classical,
            KindArg::Permuted => PatternKind::Permuted,
            KindArg::Constrained => PatternKind::Constrained,
        }
    }
}

/// Flags shared by every command that reads a run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub paradigm: Option<Paradigm>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub isi: Option<f64>,
    /// Text to copy-spell.
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, value_enum)]
    pub pattern_kind: Option<KindArg>,
    #[arg(long)]
    pub pattern_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies every ERP template amplitude.
    #[arg(long)]
    pub template_scale: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Turn off attentional-blink attenuation.
    #[arg(long)]
    pub no_blink: bool,
    #[arg(long)]
    pub n_f: Option<usize>,
    #[arg(long)]
    pub erp_len: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.paradigm {
            cfg.paradigm = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.isi {
            cfg.isi_s = v;
        }
        if let Some(v) = &self.targets {
            cfg.targets = v.clone();
        }
        if let Some(v) = self.pattern_kind {
            cfg.pattern.kind = Some(v.into());
        }
        if let Some(v) = self.pattern_seed {
            cfg.pattern.seed = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = self.template_scale {
            cfg.synth.template_scale = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.synth.noise.background_sigma_uv = v;
        }
        if self.no_blink {
            cfg.synth.blink.enabled = false;
        }
        if let Some(v) = self.n_f {
            cfg.pipeline.n_f = v;
        }
        if let Some(v) = self.erp_len {
            cfg.pipeline.erp_len = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[arg(long, value_enum, default_value = "constrained")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Seed for the free permutations; identities when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write to a file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Bundle directory to create.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub session: PathBuf,
    /// Directory for xdawn.json and blda.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Also train on the test session and score the training one, then average.
    #[arg(long)]
    pub swap: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Eval output directories, one per subject.
    #[arg(long, num_args = 1.., required = true)]
    pub cp300: Vec<PathBuf>,
    /// Eval output directories, in the same subject order.
    #[arg(long, num_args = 1.., required = true)]
    pub xp300: Vec<PathBuf>,
    /// Repetition counts to tabulate; defaults to 5 and the largest count
    /// every subject has.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Directory for comparison.csv and ttest.txt; stdout only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Pattern(a) => cmd_pattern(a, cli.ci),
        Command::Simulate(a) => cmd_simulate(a, cli.ci),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
        Command::Config(a) => {
            print!("{}", String::from_utf8_lossy(&to_json_pretty(&a.resolve()?)));
            Ok(())
        }
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    Ok(session_io::write_atomic(path, bytes)?)
}

fn to_json_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn require_seed(seed: Option<u64>, ci: bool) -> Result<u64, CliError> {
    match seed {
        Some(s) => Ok(s),
        None if ci => Err(CliError::Config("--seed is required in CI mode".into())),
        None => {
            log::warn!("no seed given, using 0");
            Ok(0)
        }
    }
}

pub fn cmd_pattern(a: &PatternArgs, ci: bool) -> Result<(), CliError> {
    if ci && a.seed.is_none() && a.kind != KindArg::Rc {
        return Err(CliError::Config("--seed is required in CI mode".into()));
    }
    let p = seeded_pattern(a.kind.into(), a.n, a.seed)?;
    let bytes = to_json_pretty(&p);
    match &a.out {
        Some(path) => write_out(path, &bytes),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs, ci: bool) -> Result<(), CliError> {
    let mut cfg = a.config.resolve()?;
    let seed = require_seed(cfg.seed, ci)?;
    cfg.seed = Some(seed);
    let schedule = cfg.schedule(seed)?;
    let rec = synth::synthesize_session(&schedule, &cfg.synth, seed)?;
    let echo = serde_json::to_value(&cfg).expect("config serializes");
    session_io::write_session(&rec, &SessionMeta::for_schedule(&schedule, seed, echo), &a.out)?;
    log::info!(
        "{}: {} characters x {} repetitions, {} samples",
        a.out.display(),
        schedule.targets.len(),
        schedule.reps,
        rec.n_samples()
    );
    Ok(())
}

fn load_session(dir: &Path) -> Result<(Recording, Schedule), CliError> {
    let (rec, bundle) = session_io::read_bundle(dir)?;
    let schedule = bundle
        .schedule(&rec.events)
        .ok_or_else(|| CliError::Io(format!("{}: manifest has no schedule", dir.display())))?;
    Ok((rec, schedule))
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let (rec, _) = session_io::read_bundle(&a.session)?;
    let model = pipeline::train(&rec, &cfg.pipeline)?;
    log::info!(
        "blda: {} iterations, converged={}, alpha={:.4e}, beta={:.4e}",
        model.blda.iterations,
        model.blda.converged,
        model.blda.alpha,
        model.blda.beta
    );
    write_out(&a.out.join(XDAWN_MODEL_FILE), &to_json_pretty(&model.xdawn))?;
    write_out(&a.out.join(BLDA_MODEL_FILE), &to_json_pretty(&model.blda))?;
    Ok(())
}

/// Reads the two model files written by `train`.
pub fn load_model(dir: &Path) -> Result<TrainedModel, CliError> {
    let xdawn: SpatialFilterModel = read_json(&dir.join(XDAWN_MODEL_FILE))?;
    let blda: BldaModel = read_json(&dir.join(BLDA_MODEL_FILE))?;
    Ok(TrainedModel { xdawn, blda })
}

fn accuracy_csv(e: &Evaluation) -> String {
    let mut s = String::from("k,accuracy,itr_bpm\n");
    for (i, (acc, itr)) in e.accuracy.iter().zip(&e.itr_bpm).enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, acc, itr);
    }
    s
}

fn roc_csv(e: &Evaluation) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (fpr, tpr) in &e.roc.points {
        let _ = writeln!(s, "{fpr},{tpr}");
    }
    s
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let swap = a.swap || cfg.evaluation.swap;
    let (train_rec, train_schedule) = load_session(&a.train)?;
    let (test_rec, test_schedule) = load_session(&a.test)?;
    if train_schedule.paradigm != test_schedule.paradigm || train_schedule.reps != test_schedule.reps {
        return Err(CliError::Config("train and test sessions use different paradigms or repetition counts".into()));
    }
    let matrix = SpellerMatrix::default_for(test_schedule.pattern.n)?;
    let model = pipeline::train(&train_rec, &cfg.pipeline)?;
    let forward = pipeline::evaluate(&model, &test_schedule, &test_rec, &matrix, &cfg.pipeline)?;
    let result = if swap {
        let back_model = pipeline::train(&test_rec, &cfg.pipeline)?;
        let backward = pipeline::evaluate(&back_model, &train_schedule, &train_rec, &matrix, &cfg.pipeline)?;
        pipeline::combine(&forward, &backward, &test_schedule)?
    } else {
        forward.clone()
    };

    let mut decisions = Vec::new();
    write_decisions_csv(&forward.decisions, &test_schedule.targets, &mut decisions).expect("in-memory write");
    let summary = format!("auc={}\n", result.auc());
    write_out(&a.out.join(ACCURACY_FILE), accuracy_csv(&result).as_bytes())?;
    write_out(&a.out.join(ROC_FILE), roc_csv(&result).as_bytes())?;
    write_out(&a.out.join(DECISIONS_FILE), &decisions)?;
    write_out(&a.out.join(SUMMARY_FILE), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

/// One subject's `eval` output, as read back by `report`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// `(k, accuracy, itr_bpm)` rows.
    pub rows: Vec<(usize, f64, f64)>,
    pub auc: f64,
}

impl EvalSummary {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let acc_path = dir.join(ACCURACY_FILE);
        let text = fs::read_to_string(&acc_path).map_err(|e| io_error(&acc_path, e))?;
        let bad = |line: usize, msg: &str| CliError::Io(format!("{}:{line}: {msg}", acc_path.display()));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "k,accuracy,itr_bpm")) => {}
            _ => return Err(bad(1, "expected header k,accuracy,itr_bpm")),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let parsed = match fields.as_slice() {
                [k, acc, itr] => k.parse().ok().zip(acc.parse().ok()).zip(itr.parse().ok()).map(|((k, a), r)| (k, a, r)),
                _ => None,
            };
            rows.push(parsed.ok_or_else(|| bad(i + 1, "expected k,accuracy,itr_bpm"))?);
        }
        if rows.is_empty() {
            return Err(bad(2, "no rows"));
        }
        let sum_path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&sum_path).map_err(|e| io_error(&sum_path, e))?;
        let auc = text
            .lines()
            .find_map(|l| l.strip_prefix("auc="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| CliError::Io(format!("{}: missing auc=<float>", sum_path.display())))?;
        Ok(Self { rows, auc })
    }

    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == k).map(|r| r.1)
    }

    pub fn itr_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == k).map(|r| r.2)
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.rows.iter().map(|r| r.1).sum::<f64>() / self.rows.len() as f64
    }
}

type Column = Box<dyn Fn(&EvalSummary) -> Option<f64>>;

/// Comparison table and t-test text for two matched cohorts.
///
/// Accuracies are reported in percent. t statistics are for CP300 − XP300.
pub fn build_report(cp: &[EvalSummary], xp: &[EvalSummary], ks: &[usize]) -> Result<(String, String), CliError> {
    if cp.len() != xp.len() {
        return Err(CliError::Config(format!("unmatched cohorts: {} CP300 vs {} XP300 subjects", cp.len(), xp.len())));
    }
    if cp.len() < 2 {
        return Err(CliError::Config("report needs at least 2 subjects per cohort".into()));
    }
    let mut columns: Vec<(String, Column)> = vec![
        ("acc_mean_pct".into(), Box::new(|e: &EvalSummary| Some(100.0 * e.mean_accuracy()))),
        ("auc".into(), Box::new(|e: &EvalSummary| Some(e.auc))),
    ];
    for &k in ks {
        columns.push((format!("acc_k{k}_pct"), Box::new(move |e: &EvalSummary| e.accuracy_at(k).map(|a| 100.0 * a))));
        columns.push((format!("itr_k{k}_bpm"), Box::new(move |e: &EvalSummary| e.itr_at(k))));
    }

    let mut values: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (name, f) in &columns {
        let collect = |cohort: &[EvalSummary]| -> Result<Vec<f64>, CliError> {
            cohort
                .iter()
                .map(|e| f(e).ok_or_else(|| CliError::Config(format!("column {name}: a subject lacks that repetition count"))))
                .collect()
        };
        values.push((collect(cp)?, collect(xp)?));
    }

    let mut csv = String::from("subject");
    for (name, _) in &columns {
        let _ = write!(csv, ",cp300_{name},xp300_{name}");
    }
    csv.push('\n');
    for i in 0..cp.len() {
        let _ = write!(csv, "S{:02}", i + 1);
        for (c, x) in &values {
            let _ = write!(csv, ",{},{}", c[i], x[i]);
        }
        csv.push('\n');
    }
    for (label, pick) in [("Mean", 0usize), ("SD", 1)] {
        csv.push_str(label);
        for (c, x) in &values {
            let (cm, cs) = metrics::mean_sd(c);
            let (xm, xs) = metrics::mean_sd(x);
            let (cv, xv) = if pick == 0 { (cm, xm) } else { (cs, xs) };
            let _ = write!(csv, ",{cv},{xv}");
        }
        csv.push('\n');
    }

    let mut tests = String::new();
    for (idx, ((name, _), (c, x))) in columns.iter().zip(&values).enumerate() {
        match metrics::paired_t_test(c, x) {
            Ok(t) => {
                let _ = writeln!(tests, "{name} cp300-xp300: {}", format_ttest(&t));
            }
            Err(MetricsError::DegenerateTest) if idx > 0 => {
                let _ = writeln!(tests, "{name} cp300-xp300: degenerate (zero variance of differences)");
            }
            Err(e) => return Err(CliError::Pipeline(format!("metrics: {name}: {e}"))),
        }
    }
    Ok((csv, tests))
}

fn default_ks<'a>(evals: impl Iterator<Item = &'a EvalSummary>) -> Vec<usize> {
    let max_k = evals.map(|e| e.rows.iter().map(|r| r.0).max().unwrap_or(0)).min().unwrap_or(0);
    let mut ks: Vec<usize> = [5, max_k].into_iter().filter(|&k| k >= 1 && k <= max_k).collect();
    ks.dedup();
    ks
}

fn format_ttest(t: &TTest) -> String {
    format!("{t}, p_one_sided={:.2e}", t.p_one_sided)
}

pub fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let cp: Vec<EvalSummary> = a.cp300.iter().map(|d| EvalSummary::read(d)).collect::<Result<_, _>>()?;
    let xp: Vec<EvalSummary> = a.xp300.iter().map(|d| EvalSummary::read(d)).collect::<Result<_, _>>()?;
    let ks = match &a.ks {
        Some(ks) => ks.clone(),
        None => default_ks(cp.iter().chain(&xp)),
    };
    let (csv, tests) = build_report(&cp, &xp, &ks)?;
    if let Some(dir) = &a.out {
        write_out(&dir.join(COMPARISON_FILE), csv.as_bytes())?;
        write_out(&dir.join(TTEST_FILE), tests.as_bytes())?;
    }
    print!("{csv}\n{tests}");
    Ok(())
}
