//! P300 speller toolkit.
//!
//! Flash-pattern construction ([`patterns`]), stimulus scheduling for the
//! classical row/column paradigm and the split-block paradigm ([`scheduler`]),
//! synthetic EEG ([`synth`]), the offline decoding chain ([`dsp`], [`xdawn`],
//! [`blda`], [`decoder`], [`pipeline`]), metrics ([`metrics`]) and the session
//! file format ([`session_io`]). The [`cli`] module implements the `xp300`
//! command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blda;
pub mod cli;
pub mod decoder;
pub mod dsp;
pub mod metrics;
pub mod patterns;
pub mod pipeline;
pub mod scheduler;
pub mod session_io;
pub mod synth;
pub mod xdawn;
