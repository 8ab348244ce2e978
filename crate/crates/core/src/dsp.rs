//! Temporal preprocessing: Butterworth bandpass, decimation and epoching.
//!
//! The reference chain is a 4th-order Butterworth bandpass between 1 and
//! 12.5 Hz applied at the acquisition rate, followed by plain subsampling to
//! 25 Hz (the bandpass upper edge is the Nyquist frequency of the output clock)
//! and fixed 0.6 s windows starting at each flash onset.
//!
//! The bandpass is designed from the analog lowpass prototype with the
//! lowpass-to-bandpass substitution and the bilinear transform, with both band
//! edges prewarped, so the digital response is exactly -3 dB at the edges. It
//! is realised as cascaded biquads, one per conjugate pole pair, each with a
//! zero at `z = 1` and one at `z = -1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::StimulusEvent;

pub const DEFAULT_CHANNELS: [&str; 8] = ["O1", "O2", "P3", "P4", "P7", "P8", "Pz", "FCz"];
pub const DEFAULT_FILTER_ORDER: usize = 4;
pub const DEFAULT_LOW_HZ: f64 = 1.0;
pub const DEFAULT_HIGH_HZ: f64 = 12.5;
pub const DEFAULT_FS_OUT_HZ: f64 = 25.0;
pub const DEFAULT_EPOCH_WINDOW_S: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid filter design: {0}")]
    InvalidDesign(String),
    #[error("filter designed for {spec} Hz applied to a {rec} Hz recording")]
    RateMismatch { spec: f64, rec: f64 },
    #[error("unsupported rate: {fs_in} Hz is not an integer multiple of {fs_out} Hz")]
    UnsupportedRate { fs_in: f64, fs_out: f64 },
    #[error("truncated epoch: event {event} at {onset_s} s needs samples up to {needed}, recording has {available}")]
    TruncatedEpoch {
        event: usize,
        onset_s: f64,
        needed: usize,
        available: usize,
    },
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
}

/// A multichannel recording with its event markers.
///
/// `samples` is `T×C`: one row per time sample, one column per channel, in
/// microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub fs_hz: f64,
    pub samples: DMatrix<f64>,
    pub channel_names: Vec<String>,
    pub events: Vec<StimulusEvent>,
}

impl Recording {
    pub fn new(
        fs_hz: f64,
        samples: DMatrix<f64>,
        channel_names: Vec<String>,
        events: Vec<StimulusEvent>,
    ) -> Result<Self, DspError> {
        let rec = Self { fs_hz, samples, channel_names, events };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(DspError::InvalidRecording(format!("sampling rate {} Hz", self.fs_hz)));
        }
        if self.n_samples() == 0 || self.n_channels() == 0 {
            return Err(DspError::InvalidRecording("need at least one sample and one channel".into()));
        }
        if self.channel_names.len() != self.n_channels() {
            return Err(DspError::InvalidRecording(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.n_channels()
            )));
        }
        let end = self.n_samples() as f64 / self.fs_hz;
        if let Some(e) = self.events.iter().find(|e| !(0.0..=end).contains(&e.onset_s)) {
            return Err(DspError::InvalidRecording(format!(
                "event onset {} s outside [0, {end}] s",
                e.onset_s
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    /// Nearest sample index of a time in seconds.
    pub fn sample_index(&self, t_s: f64) -> usize {
        (t_s * self.fs_hz).round() as usize
    }

    pub fn default_channel_names() -> Vec<String> {
        DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect()
    }
}

/// One direct-form biquad, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (self.a[0] + self.a[1] * z_inv + self.a[2] * z2)
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a[1] * self.a[1] - 4.0 * self.a[2], 0.0).sqrt();
        [(-self.a[1] + disc) / 2.0, (-self.a[1] - disc) / 2.0]
    }

    /// Transposed direct form II over a whole signal, zero initial state.
    fn run(&self, signal: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        for x in signal.iter_mut() {
            let y = b0 * *x + s1;
            s1 = b1 * *x - a1 * y + s2;
            s2 = b2 * *x - a2 * y;
            *x = y;
        }
    }
}

/// A realised Butterworth bandpass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs_hz: f64,
    pub sections: Vec<Biquad>,
}

impl FilterSpec {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / self.fs_hz);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude_db(&self, f_hz: f64) -> f64 {
        20.0 * self.response(f_hz).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    /// Filters one channel in place.
    pub fn apply(&self, signal: &mut [f64]) {
        for s in &self.sections {
            s.run(signal);
        }
    }
}

/// The default 4th-order 1–12.5 Hz bandpass at `fs_hz`.
pub fn design_bandpass(fs_hz: f64) -> Result<FilterSpec, DspError> {
    if !(fs_hz > 2.0 * DEFAULT_HIGH_HZ) {
        return Err(DspError::InvalidDesign(format!(
            "sampling rate {fs_hz} Hz puts the {DEFAULT_HIGH_HZ} Hz band edge at or above Nyquist"
        )));
    }
    design_bandpass_with(DEFAULT_FILTER_ORDER, DEFAULT_LOW_HZ, DEFAULT_HIGH_HZ, fs_hz)
}

/// Butterworth bandpass with `order` prototype poles (`2·order` poles overall,
/// one biquad per prototype pole).
pub fn design_bandpass_with(order: usize, low_hz: f64, high_hz: f64, fs_hz: f64) -> Result<FilterSpec, DspError> {
    if order == 0 {
        return Err(DspError::InvalidDesign("order must be >= 1".into()));
    }
    if !(low_hz > 0.0 && low_hz < high_hz) {
        return Err(DspError::InvalidDesign(format!("need 0 < low ({low_hz}) < high ({high_hz})")));
    }
    if high_hz >= fs_hz / 2.0 {
        return Err(DspError::InvalidDesign(format!(
            "band edge {high_hz} Hz at or above Nyquist {} Hz",
            fs_hz / 2.0
        )));
    }

    let k = 2.0 * fs_hz;
    let w_low = k * (PI * low_hz / fs_hz).tan();
    let w_high = k * (PI * high_hz / fs_hz).tan();
    let w0_sq = w_low * w_high;
    let half_bw = (w_high - w_low) / 2.0;
    // digital image of the analog centre frequency
    let omega_c = 2.0 * (w0_sq.sqrt() / k).atan();
    let z_c_inv = Complex64::from_polar(1.0, -omega_c);

    // Prototype poles in the upper half plane (plus the real pole for odd
    // orders). A complex prototype pole maps to two bandpass poles, each of
    // which forms a biquad with its conjugate; the real one maps to a single
    // pair that is either conjugate or real.
    let mut pole_pairs: Vec<[Complex64; 2]> = Vec::with_capacity(order);
    for i in 0..order.div_ceil(2) {
        let theta = PI * (2 * i + 1 + order) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let pb = p * half_bw;
        let root = (pb * pb - w0_sq).sqrt();
        let (s1, s2) = (pb + root, pb - root);
        if p.im.abs() < 1e-12 {
            pole_pairs.push([s1, s2]);
        } else {
            pole_pairs.push([s1, s1.conj()]);
            pole_pairs.push([s2, s2.conj()]);
        }
    }

    let mut sections = Vec::with_capacity(pole_pairs.len());
    for [s1, s2] in pole_pairs {
        let z1 = (k + s1) / (k - s1);
        let z2 = (k + s2) / (k - s2);
        let a = [1.0, -(z1 + z2).re, (z1 * z2).re];
        let unnormalized = Biquad { b: [1.0, 0.0, -1.0], a };
        let g = 1.0 / unnormalized.response(z_c_inv).norm();
        sections.push(Biquad { b: [g, 0.0, -g], a });
    }

    let spec = FilterSpec { order, low_hz, high_hz, fs_hz, sections };
    if let Some(p) = spec.poles().into_iter().find(|p| p.norm() >= 1.0) {
        return Err(DspError::InvalidDesign(format!("unstable pole {p} (|p| = {})", p.norm())));
    }
    Ok(spec)
}

/// Causal forward filtering of every channel, zero initial conditions.
pub fn filter_recording(spec: &FilterSpec, rec: &Recording) -> Result<Recording, DspError> {
    if (spec.fs_hz - rec.fs_hz).abs() > 1e-9 * rec.fs_hz {
        return Err(DspError::RateMismatch { spec: spec.fs_hz, rec: rec.fs_hz });
    }
    let mut out = rec.clone();
    for mut col in out.samples.column_iter_mut() {
        spec.apply(col.as_mut_slice());
    }
    Ok(out)
}

/// Keeps every `fs_in / fs_out`-th sample starting at index 0.
///
/// Event onsets are snapped to the nearest output sample.
pub fn decimate(rec: &Recording, fs_out: f64) -> Result<Recording, DspError> {
    let ratio = rec.fs_hz / fs_out;
    let factor = ratio.round();
    if !(fs_out > 0.0) || factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(DspError::UnsupportedRate { fs_in: rec.fs_hz, fs_out });
    }
    let factor = factor as usize;
    let t_out = rec.n_samples().div_ceil(factor);
    let samples = DMatrix::from_fn(t_out, rec.n_channels(), |t, c| rec.samples[(t * factor, c)]);
    let last = (t_out - 1) as f64;
    let events = rec
        .events
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.onset_s = (e.onset_s * fs_out).round().min(last) / fs_out;
            e
        })
        .collect();
    Ok(Recording {
        fs_hz: fs_out,
        samples,
        channel_names: rec.channel_names.clone(),
        events,
    })
}

/// Fixed-length post-onset windows, one per flash event.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    /// `E × (L·K)`, channel-major within a row.
    pub epochs: DMatrix<f64>,
    pub labels: Vec<bool>,
    pub window_s: f64,
    pub samples_per_window: usize,
    pub n_channels: usize,
}

impl EpochSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Cuts one window of `round(window_s·fs)` samples per flash event (pauses
/// are skipped), starting at the onset sample. Channels are concatenated
/// channel-major: all samples of channel 1, then channel 2, and so on.
pub fn extract_epochs(rec: &Recording, window_s: f64) -> Result<EpochSet, DspError> {
    let len = (window_s * rec.fs_hz).round() as usize;
    if len == 0 {
        return Err(DspError::InvalidRecording(format!("window {window_s} s is shorter than one sample")));
    }
    let k = rec.n_channels();
    let flashes: Vec<(usize, &StimulusEvent)> =
        rec.events.iter().enumerate().filter(|(_, e)| e.is_flash()).collect();
    let mut epochs = DMatrix::zeros(flashes.len(), len * k);
    let mut labels = Vec::with_capacity(flashes.len());
    for (row, &(event, e)) in flashes.iter().enumerate() {
        let start = rec.sample_index(e.onset_s);
        if start + len > rec.n_samples() {
            return Err(DspError::TruncatedEpoch {
                event,
                onset_s: e.onset_s,
                needed: start + len,
                available: rec.n_samples(),
            });
        }
        for c in 0..k {
            for l in 0..len {
                epochs[(row, c * len + l)] = rec.samples[(start + l, c)];
            }
        }
        labels.push(e.is_target);
    }
    Ok(EpochSet {
        epochs,
        labels,
        window_s,
        samples_per_window: len,
        n_channels: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::{make_rc_pattern, Cell};
    use crate::scheduler::{make_cp300_schedule, ScheduleParams};

    fn flat_recording(t: usize, c: usize, fs: f64) -> Recording {
        Recording::new(
            fs,
            DMatrix::zeros(t, c),
            (0..c).map(|i| format!("ch{i}")).collect(),
            Vec::new(),
        )
        .unwrap()
    }

    #[test]
    fn band_edges_are_minus_3db() {
        let f = design_bandpass(2000.0).unwrap();
        let edge = 20.0 * (0.5f64).sqrt().log10();
        assert!((f.magnitude_db(1.0) - edge).abs() < 0.1, "{}", f.magnitude_db(1.0));
        assert!((f.magnitude_db(12.5) - edge).abs() < 0.1, "{}", f.magnitude_db(12.5));
    }

    #[test]
    fn exact_null_at_dc_and_nyquist() {
        let f = design_bandpass(2000.0).unwrap();
        assert_eq!(f.response(0.0).norm(), 0.0);
        assert!(f.response(1000.0).norm() < 1e-12);
    }

    #[test]
    fn passband_is_flat_at_5hz() {
        let f = design_bandpass(2000.0).unwrap();
        assert!(f.magnitude_db(5.0) >= -0.2);
        assert!(f.magnitude_db(5.0) <= 1e-9);
    }

    #[test]
    fn design_is_stable_and_has_four_sections() {
        let f = design_bandpass(2000.0).unwrap();
        assert_eq!(f.sections.len(), 4);
        assert!(f.poles().iter().all(|p| p.norm() < 1.0));
    }

    #[test]
    fn odd_order_design() {
        let f = design_bandpass_with(3, 2.0, 20.0, 250.0).unwrap();
        assert_eq!(f.sections.len(), 3);
        let edge = 20.0 * (0.5f64).sqrt().log10();
        assert!((f.magnitude_db(2.0) - edge).abs() < 1e-6);
        assert!((f.magnitude_db(20.0) - edge).abs() < 1e-6);
    }

    #[test]
    fn design_rejects_edges_above_nyquist() {
        assert!(matches!(design_bandpass(20.0), Err(DspError::InvalidDesign(_))));
        assert!(matches!(
            design_bandpass_with(4, 1.0, 60.0, 100.0),
            Err(DspError::InvalidDesign(_))
        ));
    }

    #[test]
    fn zero_in_zero_out() {
        let spec = design_bandpass(2000.0).unwrap();
        let rec = flat_recording(500, 3, 2000.0);
        let out = filter_recording(&spec, &rec).unwrap();
        assert!(out.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn channels_are_independent() {
        let spec = design_bandpass(2000.0).unwrap();
        let mut rec = flat_recording(500, 3, 2000.0);
        rec.samples[(0, 1)] = 1.0;
        let out = filter_recording(&spec, &rec).unwrap();
        assert!(out.samples.column(0).iter().all(|&x| x == 0.0));
        assert!(out.samples.column(2).iter().all(|&x| x == 0.0));
        assert!(out.samples.column(1).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn rate_mismatch_rejected() {
        let spec = design_bandpass(2000.0).unwrap();
        let rec = flat_recording(10, 1, 1000.0);
        assert!(matches!(filter_recording(&spec, &rec), Err(DspError::RateMismatch { .. })));
    }

    #[test]
    fn sinusoid_steady_state_gain() {
        let fs = 2000.0;
        let spec = design_bandpass(fs).unwrap();
        let n = 40_000;
        let mut x: Vec<f64> = (0..n).map(|t| (2.0 * PI * 5.0 * t as f64 / fs).sin()).collect();
        spec.apply(&mut x);
        // last 2 s, well past the transient
        let tail = &x[n - 4000..];
        let amp = tail.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let expected = spec.response(5.0).norm();
        assert!((amp / expected - 1.0).abs() < 0.01, "amp {amp} expected {expected}");
    }

    #[test]
    fn decimate_lengths_and_events() {
        let mut rec = flat_recording(8000, 2, 2000.0);
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 0.125, 0), &[Cell::new(1, 1)]).unwrap();
        rec.events = s.events;
        rec.events[8].onset_s = 1.0;
        let out = decimate(&rec, 25.0).unwrap();
        assert_eq!(out.n_samples(), 100);
        assert_eq!(out.sample_index(out.events[8].onset_s), 25);
        assert!(matches!(decimate(&rec, 30.0), Err(DspError::UnsupportedRate { .. })));
    }

    #[test]
    fn decimate_keeps_every_factor_th_sample() {
        let fs = 100.0;
        let samples = DMatrix::from_fn(10, 1, |t, _| t as f64);
        let rec = Recording::new(fs, samples, vec!["a".into()], Vec::new()).unwrap();
        let out = decimate(&rec, 25.0).unwrap();
        assert_eq!(out.samples.column(0).as_slice(), &[0.0, 4.0, 8.0]);
    }

    #[test]
    fn epochs_window_length_and_layout() {
        let fs = 25.0;
        let samples = DMatrix::from_fn(200, 2, |t, c| (c * 1000 + t) as f64);
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 0.2, 0), &[Cell::new(1, 1)]).unwrap();
        let rec = Recording::new(fs, samples, vec!["a".into(), "b".into()], s.events.clone()).unwrap();
        let set = extract_epochs(&rec, 0.6).unwrap();
        assert_eq!(set.samples_per_window, 15);
        assert_eq!(set.len(), 12);
        assert_eq!(set.epochs.ncols(), 30);
        // event 1 at 0.2 s -> sample 5
        assert_eq!(set.epochs[(1, 0)], 5.0);
        assert_eq!(set.epochs[(1, 14)], 19.0);
        assert_eq!(set.epochs[(1, 15)], 1005.0);
        let labels: Vec<bool> = s.events.iter().map(|e| e.is_target).collect();
        assert_eq!(set.labels, labels);
    }

    #[test]
    fn truncated_epoch_names_event() {
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 0.2, 0), &[Cell::new(1, 1)]).unwrap();
        // event 10 at 2.0 s -> sample 50, window needs 65 of 60
        let rec = Recording::new(25.0, DMatrix::zeros(60, 1), vec!["a".into()], s.events).unwrap();
        match extract_epochs(&rec, 0.6) {
            Err(DspError::TruncatedEpoch { event, .. }) => assert_eq!(event, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn events_outside_recording_rejected() {
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 1.0, 0), &[Cell::new(1, 1)]).unwrap();
        assert!(Recording::new(25.0, DMatrix::zeros(25, 1), vec!["a".into()], s.events).is_err());
    }
}
