//! Stimulus scheduling for the classical (CP300) and split-block (XP300)
//! paradigms.
//!
//! Both paradigms present, per character and repetition, each row-block flash
//! and each column-block flash exactly once. They differ in ordering:
//!
//! - CP300 shuffles all `2N` flashes of a repetition together, so the two
//!   flashes that contain the target can land on consecutive slots.
//! - XP300 shuffles the row block, inserts a one-ISI pause, shuffles the
//!   column block and inserts a second pause. Two flashes on the same cell are
//!   therefore always at least two ISIs apart.
//!
//! Every slot, flash or pause, lasts one ISI. Onsets are computed from a global
//! slot counter so they are exact multiples of the ISI (plus the optional
//! inter-character gap).

use std::fmt;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patterns::{cells_for_flash, Block, Cell, FlashId, FlashPattern, PatternError, PatternKind};

/// ISI used in the reference experiments, in seconds.
pub const DEFAULT_ISI_S: f64 = 0.133;
/// Intensification duration used with [`DEFAULT_ISI_S`].
pub const DEFAULT_FLASH_DURATION_S: f64 = 0.066_66;
pub const DEFAULT_REPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("empty schedule: no target characters given")]
    EmptyTargets,
    #[error("repetitions must be >= 1")]
    InvalidReps,
    #[error("invalid timing: {0}")]
    InvalidTiming(String),
    #[error("CP300 requires a classical row/column pattern, got {0}")]
    NotClassical(PatternKind),
    #[error("target {0} is outside the {1}x{1} grid")]
    TargetOutOfGrid(Cell, usize),
    #[error("insufficient events: need at least two target flashes, found {0}")]
    InsufficientEvents(usize),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Cp300,
    Xp300,
}

impl Paradigm {
    /// ISI slots per repetition: `2N` for CP300, `2N + 2` for XP300.
    pub fn slots_per_repetition(self, n: usize) -> usize {
        match self {
            Paradigm::Cp300 => 2 * n,
            Paradigm::Xp300 => 2 * n + 2,
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Cp300 => "cp300",
            Paradigm::Xp300 => "xp300",
        })
    }
}

impl std::str::FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cp300" => Ok(Paradigm::Cp300),
            "xp300" => Ok(Paradigm::Xp300),
            other => Err(format!("unknown paradigm '{other}' (expected cp300 or xp300)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Flash,
    Pause,
}

/// One slot of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub onset_s: f64,
    pub kind: EventKind,
    pub block: Block,
    /// `None` for pauses.
    pub flash_id: Option<FlashId>,
    pub cells: Vec<Cell>,
    pub char_index: usize,
    pub repetition: usize,
    pub is_target: bool,
}

impl StimulusEvent {
    pub fn is_flash(&self) -> bool {
        self.kind == EventKind::Flash
    }
}

/// Timing and seeding parameters shared by both paradigms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub reps: usize,
    pub isi_s: f64,
    pub flash_duration_s: f64,
    /// Extra silence between characters; 0 reproduces the reference timing model.
    pub inter_char_gap_s: f64,
    pub seed: u64,
}

impl ScheduleParams {
    pub fn new(reps: usize, isi_s: f64, seed: u64) -> Self {
        Self {
            reps,
            isi_s,
            flash_duration_s: isi_s / 2.0,
            inter_char_gap_s: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), ScheduleError> {
        if self.reps < 1 {
            return Err(ScheduleError::InvalidReps);
        }
        if !(self.isi_s.is_finite() && self.isi_s > 0.0) {
            return Err(ScheduleError::InvalidTiming(format!("isi_s = {} must be > 0", self.isi_s)));
        }
        if !(self.flash_duration_s > 0.0 && self.flash_duration_s <= self.isi_s) {
            return Err(ScheduleError::InvalidTiming(format!(
                "flash duration {} s must be in (0, isi = {} s]",
                self.flash_duration_s, self.isi_s
            )));
        }
        if !(self.inter_char_gap_s.is_finite() && self.inter_char_gap_s >= 0.0) {
            return Err(ScheduleError::InvalidTiming("inter-character gap must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            reps: DEFAULT_REPS,
            isi_s: DEFAULT_ISI_S,
            flash_duration_s: DEFAULT_FLASH_DURATION_S,
            inter_char_gap_s: 0.0,
            seed: 0,
        }
    }
}

/// A complete copy-spelling session plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub paradigm: Paradigm,
    pub pattern: FlashPattern,
    pub isi_s: f64,
    pub flash_duration_s: f64,
    pub inter_char_gap_s: f64,
    pub reps: usize,
    pub seed: u64,
    pub targets: Vec<Cell>,
    pub events: Vec<StimulusEvent>,
}

/// Schedule metadata without the event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleHeader {
    pub paradigm: Paradigm,
    pub pattern: FlashPattern,
    pub isi_s: f64,
    pub flash_duration_s: f64,
    pub inter_char_gap_s: f64,
    pub reps: usize,
    pub seed: u64,
    pub targets: Vec<Cell>,
    pub slots_per_repetition: usize,
}

impl Schedule {
    pub fn header(&self) -> ScheduleHeader {
        ScheduleHeader {
            paradigm: self.paradigm,
            pattern: self.pattern.clone(),
            isi_s: self.isi_s,
            flash_duration_s: self.flash_duration_s,
            inter_char_gap_s: self.inter_char_gap_s,
            reps: self.reps,
            seed: self.seed,
            targets: self.targets.clone(),
            slots_per_repetition: self.slots_per_repetition(),
        }
    }

    pub fn from_parts(header: ScheduleHeader, events: Vec<StimulusEvent>) -> Self {
        Self {
            paradigm: header.paradigm,
            pattern: header.pattern,
            isi_s: header.isi_s,
            flash_duration_s: header.flash_duration_s,
            inter_char_gap_s: header.inter_char_gap_s,
            reps: header.reps,
            seed: header.seed,
            targets: header.targets,
            events,
        }
    }

    pub fn slots_per_repetition(&self) -> usize {
        self.paradigm.slots_per_repetition(self.pattern.n)
    }

    /// Time from the first slot of a character to the first slot of the next.
    pub fn char_duration_s(&self) -> f64 {
        (self.reps * self.slots_per_repetition()) as f64 * self.isi_s + self.inter_char_gap_s
    }

    /// End of the last slot.
    pub fn duration_s(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.onset_s + self.isi_s)
    }

    pub fn flashes(&self) -> impl Iterator<Item = &StimulusEvent> {
        self.events.iter().filter(|e| e.is_flash())
    }

    /// Writes one JSON object per event.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        write_events_jsonl(&self.events, &mut w)
    }
}

pub fn write_events_jsonl<W: Write>(events: &[StimulusEvent], mut w: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn validate_targets(p: &FlashPattern, targets: &[Cell]) -> Result<(), ScheduleError> {
    if targets.is_empty() {
        return Err(ScheduleError::EmptyTargets);
    }
    if let Some(&t) = targets
        .iter()
        .find(|t| t.row < 1 || t.col < 1 || t.row > p.n || t.col > p.n)
    {
        return Err(ScheduleError::TargetOutOfGrid(t, p.n));
    }
    Ok(())
}

/// Accumulates slots with onsets derived from a global slot counter.
struct Builder<'a> {
    pattern: &'a FlashPattern,
    params: &'a ScheduleParams,
    row_cells: Vec<Vec<Cell>>,
    col_cells: Vec<Vec<Cell>>,
    slot: usize,
    events: Vec<StimulusEvent>,
}

impl<'a> Builder<'a> {
    fn new(pattern: &'a FlashPattern, params: &'a ScheduleParams) -> Result<Self, ScheduleError> {
        let cells = |block| -> Result<Vec<Vec<Cell>>, PatternError> {
            (1..=pattern.n as FlashId).map(|f| cells_for_flash(pattern, block, f)).collect()
        };
        Ok(Self {
            pattern,
            params,
            row_cells: cells(Block::Row)?,
            col_cells: cells(Block::Col)?,
            slot: 0,
            events: Vec::new(),
        })
    }

    fn onset(&self, char_index: usize) -> f64 {
        self.slot as f64 * self.params.isi_s + char_index as f64 * self.params.inter_char_gap_s
    }

    fn flash(&mut self, block: Block, flash_id: FlashId, char_index: usize, repetition: usize, target: Cell) {
        let cells = match block {
            Block::Row => self.row_cells[flash_id as usize - 1].clone(),
            _ => self.col_cells[flash_id as usize - 1].clone(),
        };
        let is_target = cells.contains(&target);
        self.events.push(StimulusEvent {
            onset_s: self.onset(char_index),
            kind: EventKind::Flash,
            block,
            flash_id: Some(flash_id),
            cells,
            char_index,
            repetition,
            is_target,
        });
        self.slot += 1;
    }

    fn pause(&mut self, char_index: usize, repetition: usize) {
        self.events.push(StimulusEvent {
            onset_s: self.onset(char_index),
            kind: EventKind::Pause,
            block: Block::Mixed,
            flash_id: None,
            cells: Vec::new(),
            char_index,
            repetition,
            is_target: false,
        });
        self.slot += 1;
    }

    fn finish(self, paradigm: Paradigm, targets: &[Cell]) -> Schedule {
        Schedule {
            paradigm,
            pattern: self.pattern.clone(),
            isi_s: self.params.isi_s,
            flash_duration_s: self.params.flash_duration_s,
            inter_char_gap_s: self.params.inter_char_gap_s,
            reps: self.params.reps,
            seed: self.params.seed,
            targets: targets.to_vec(),
            events: self.events,
        }
    }
}

/// Classical paradigm: each repetition is a uniform shuffle of all `2N`
/// row and column flashes, without pauses.
pub fn make_cp300_schedule(
    p: &FlashPattern,
    params: &ScheduleParams,
    targets: &[Cell],
) -> Result<Schedule, ScheduleError> {
    if p.kind != PatternKind::Classical {
        return Err(ScheduleError::NotClassical(p.kind));
    }
    params.validate()?;
    validate_targets(p, targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut b = Builder::new(p, params)?;
    let n = p.n as FlashId;
    let mut order: Vec<(Block, FlashId)> = (1..=n)
        .map(|f| (Block::Row, f))
        .chain((1..=n).map(|f| (Block::Col, f)))
        .collect();
    for (char_index, &target) in targets.iter().enumerate() {
        for rep in 0..params.reps {
            order.shuffle(&mut rng);
            for &(block, f) in &order {
                b.flash(block, f, char_index, rep, target);
            }
        }
    }
    Ok(b.finish(Paradigm::Cp300, targets))
}

/// Split-block paradigm: shuffled row block, pause, shuffled column block, pause.
pub fn make_xp300_schedule(
    p: &FlashPattern,
    params: &ScheduleParams,
    targets: &[Cell],
) -> Result<Schedule, ScheduleError> {
    params.validate()?;
    // the pair map must be invertible for decoding
    crate::patterns::PairIndex::new(p)?;
    validate_targets(p, targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut b = Builder::new(p, params)?;
    let mut rows: Vec<FlashId> = (1..=p.n as FlashId).collect();
    let mut cols = rows.clone();
    for (char_index, &target) in targets.iter().enumerate() {
        for rep in 0..params.reps {
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            for &f in &rows {
                b.flash(Block::Row, f, char_index, rep, target);
            }
            b.pause(char_index, rep);
            for &f in &cols {
                b.flash(Block::Col, f, char_index, rep, target);
            }
            b.pause(char_index, rep);
        }
    }
    Ok(b.finish(Paradigm::Xp300, targets))
}

/// Dispatches on `paradigm`.
pub fn make_schedule(
    paradigm: Paradigm,
    p: &FlashPattern,
    params: &ScheduleParams,
    targets: &[Cell],
) -> Result<Schedule, ScheduleError> {
    match paradigm {
        Paradigm::Cp300 => make_cp300_schedule(p, params, targets),
        Paradigm::Xp300 => make_xp300_schedule(p, params, targets),
    }
}

/// Target-to-target interval statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub min_tti_s: f64,
    pub mean_tti_s: f64,
    pub max_tti_s: f64,
    pub count_below: usize,
    pub count: usize,
}

/// Statistics of onset differences between consecutive target flashes.
///
/// `count_below` counts intervals strictly shorter than `threshold_s`, with a
/// relative slack of `1e-9` so that intervals equal to the threshold up to
/// rounding are not counted.
pub fn target_interval_stats(s: &Schedule, threshold_s: f64) -> Result<IntervalStats, ScheduleError> {
    let onsets: Vec<f64> = s.flashes().filter(|e| e.is_target).map(|e| e.onset_s).collect();
    if onsets.len() < 2 {
        return Err(ScheduleError::InsufficientEvents(onsets.len()));
    }
    let gaps: Vec<f64> = onsets.windows(2).map(|w| w[1] - w[0]).collect();
    let slack = 1e-9 * threshold_s.abs().max(1e-12);
    Ok(IntervalStats {
        min_tti_s: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        mean_tti_s: gaps.iter().sum::<f64>() / gaps.len() as f64,
        max_tti_s: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count_below: gaps.iter().filter(|&&g| g < threshold_s - slack).count(),
        count: gaps.len(),
    })
}

/// For each (character, repetition), the onset gap between the two target
/// flashes of that repetition, in schedule order.
pub fn within_repetition_target_gaps(s: &Schedule) -> Vec<f64> {
    let mut gaps = Vec::new();
    let mut current: Option<((usize, usize), f64)> = None;
    for e in s.flashes().filter(|e| e.is_target) {
        let key = (e.char_index, e.repetition);
        match current {
            Some((k, first)) if k == key => {
                gaps.push(e.onset_s - first);
                current = None;
            }
            _ => current = Some((key, e.onset_s)),
        }
    }
    gaps
}
