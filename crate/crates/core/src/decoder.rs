//! Character selection from per-flash classifier scores.
//!
//! For every character and every repetition budget `k`, scores of the first
//! `k` repetitions are summed per `(block, flash_id)`. The best row-block flash
//! and the best column-block flash are mapped through the pattern's pair map
//! to a cell. Ties go to the lowest flash id.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patterns::{Block, Cell, FlashId, PairIndex, PatternError, SpellerMatrix};
use crate::scheduler::Schedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// Accumulated scores after `k` repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    /// Indexed by `flash_id - 1`.
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub row_flash: FlashId,
    pub col_flash: FlashId,
    pub cell: Cell,
    pub symbol: char,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharDecision {
    pub char_index: usize,
    /// `per_k[k-1]` is the selection after `k` repetitions.
    pub per_k: Vec<Selection>,
    pub score_table: Vec<ScoreTable>,
}

/// First index of the maximum; lowest flash id wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Decodes every character of `schedule` from one score per flash event, in
/// schedule order.
pub fn decode_characters(
    schedule: &Schedule,
    scores: &[f64],
    matrix: &SpellerMatrix,
) -> Result<Vec<CharDecision>, DecodeError> {
    let pattern = &schedule.pattern;
    let n = pattern.n;
    if matrix.n() != n {
        return Err(DecodeError::Alignment(format!(
            "speller matrix is {0}x{0}, pattern is {n}x{n}",
            matrix.n()
        )));
    }
    let index = PairIndex::new(pattern)?;
    let flashes: Vec<_> = schedule.flashes().collect();
    if flashes.len() != scores.len() {
        return Err(DecodeError::Alignment(format!(
            "{} scores for {} flash events",
            scores.len(),
            flashes.len()
        )));
    }

    let n_chars = schedule.targets.len();
    let reps = schedule.reps;
    // sums[char][rep] = (row sums, col sums) for that single repetition
    let mut sums = vec![vec![(vec![0.0; n], vec![0.0; n]); reps]; n_chars];
    for (e, &s) in flashes.iter().zip(scores) {
        if e.char_index >= n_chars || e.repetition >= reps {
            return Err(DecodeError::Alignment(format!(
                "event for character {} repetition {} outside the schedule",
                e.char_index, e.repetition
            )));
        }
        let f = e.flash_id.ok_or_else(|| DecodeError::Alignment("flash event without flash id".into()))?;
        let slot = &mut sums[e.char_index][e.repetition];
        match e.block {
            Block::Row => slot.0[f as usize - 1] += s,
            Block::Col => slot.1[f as usize - 1] += s,
            Block::Mixed => return Err(DecodeError::Alignment("flash event with mixed block".into())),
        }
    }

    let decisions = sums
        .into_iter()
        .enumerate()
        .map(|(char_index, per_rep)| {
            let mut row = vec![0.0; n];
            let mut col = vec![0.0; n];
            let mut per_k = Vec::with_capacity(reps);
            let mut score_table = Vec::with_capacity(reps);
            for (k, (r, c)) in per_rep.into_iter().enumerate() {
                row.iter_mut().zip(&r).for_each(|(acc, v)| *acc += v);
                col.iter_mut().zip(&c).for_each(|(acc, v)| *acc += v);
                let row_flash = argmax(&row) as FlashId + 1;
                let col_flash = argmax(&col) as FlashId + 1;
                let cell = index.cell(row_flash, col_flash);
                per_k.push(Selection { k: k + 1, row_flash, col_flash, cell, symbol: matrix.symbol(cell) });
                score_table.push(ScoreTable { row: row.clone(), col: col.clone() });
            }
            CharDecision { char_index, per_k, score_table }
        })
        .collect();
    Ok(decisions)
}

/// Fraction of characters decoded correctly after `k = 1..=reps` repetitions.
pub fn accuracy_by_repetition(decisions: &[CharDecision], truth: &[Cell]) -> Result<Vec<f64>, DecodeError> {
    if decisions.len() != truth.len() {
        return Err(DecodeError::Alignment(format!(
            "{} decisions for {} target characters",
            decisions.len(),
            truth.len()
        )));
    }
    let reps = decisions.first().map_or(0, |d| d.per_k.len());
    if decisions.iter().any(|d| d.per_k.len() != reps) {
        return Err(DecodeError::Alignment("decisions have differing repetition counts".into()));
    }
    let total = decisions.len() as f64;
    Ok((0..reps)
        .map(|k| {
            decisions
                .iter()
                .zip(truth)
                .filter(|(d, &t)| d.per_k[k].cell == t)
                .count() as f64
                / total
        })
        .collect())
}

/// CSV with header `char_index,k,selected_symbol,correct`.
pub fn write_decisions_csv<W: Write>(decisions: &[CharDecision], truth: &[Cell], mut w: W) -> io::Result<()> {
    writeln!(w, "char_index,k,selected_symbol,correct")?;
    for (d, t) in decisions.iter().zip(truth) {
        for s in &d.per_k {
            writeln!(w, "{},{},{},{}", d.char_index, s.k, s.symbol, u8::from(s.cell == *t))?;
        }
    }
    Ok(())
}
