//! Synthetic event-tagged EEG.
//!
//! Background activity is a stationary AR(1) process per channel plus an
//! optional alpha-band sinusoid with a random phase per channel. Every target
//! flash adds the ERP templates, each a Gaussian bump with its own latency,
//! width, amplitude and scalp topography. The response to a target that follows
//! the previous target closely is attenuated by the attentional-blink gain.
//!
//! All magnitudes here are simulation defaults, not measured values. Samples
//! are rounded to `f32` precision so sessions can be stored losslessly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{Recording, DEFAULT_CHANNELS};
use crate::scheduler::Schedule;

pub const DEFAULT_FS_HZ: f64 = 2000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error("schedule has no events")]
    EmptySchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    P300,
    N200,
}

/// A Gaussian evoked component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpTemplate {
    pub name: Component,
    pub peak_latency_s: f64,
    /// Full width at half maximum.
    pub width_s: f64,
    pub amplitude_uv: f64,
    /// Gain per channel, in channel order.
    pub topography: Vec<f64>,
}

impl ErpTemplate {
    fn sigma_s(&self) -> f64 {
        self.width_s / (2.0 * (2.0 * 2f64.ln()).sqrt())
    }

    /// Unit-topography waveform at `t_s` after onset.
    pub fn waveform(&self, t_s: f64) -> f64 {
        let z = (t_s - self.peak_latency_s) / self.sigma_s();
        self.amplitude_uv * (-0.5 * z * z).exp()
    }

    fn validate(&self, n_channels: usize) -> Result<(), SynthError> {
        if !(self.width_s > 0.0) {
            return Err(SynthError::InvalidParams(format!("{:?} width must be > 0", self.name)));
        }
        if self.topography.len() != n_channels || self.topography.iter().any(|g| !g.is_finite()) {
            return Err(SynthError::InvalidParams(format!(
                "{:?} topography must have {n_channels} finite gains",
                self.name
            )));
        }
        Ok(())
    }
}

/// Default P300 and N200 templates over O1, O2, P3, P4, P7, P8, Pz, FCz.
///
/// P300: +6 µV at 300 ms, 100 ms FWHM, strongest on FCz and Pz.
/// N200: -4 µV at 200 ms, 60 ms FWHM, strongest on O1 and O2.
pub fn default_templates() -> Vec<ErpTemplate> {
    vec![
        ErpTemplate {
            name: Component::P300,
            peak_latency_s: 0.30,
            width_s: 0.10,
            amplitude_uv: 6.0,
            topography: vec![0.3, 0.3, 0.7, 0.7, 0.5, 0.5, 1.0, 1.0],
        },
        ErpTemplate {
            name: Component::N200,
            peak_latency_s: 0.20,
            width_s: 0.06,
            amplitude_uv: -4.0,
            topography: vec![1.0, 1.0, 0.5, 0.5, 0.7, 0.7, 0.4, 0.2],
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Stationary standard deviation of the AR(1) background.
    pub background_sigma_uv: f64,
    pub ar_coeff: f64,
    pub alpha_amp_uv: f64,
    pub alpha_freq_hz: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { background_sigma_uv: 10.0, ar_coeff: 0.98, alpha_amp_uv: 4.0, alpha_freq_hz: 10.0 }
    }
}

impl NoiseModel {
    pub fn silent() -> Self {
        Self { background_sigma_uv: 0.0, ar_coeff: 0.0, alpha_amp_uv: 0.0, alpha_freq_hz: 10.0 }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.ar_coeff) {
            return Err(SynthError::InvalidParams(format!("ar_coeff {} not in [0, 1)", self.ar_coeff)));
        }
        if !(self.background_sigma_uv >= 0.0 && self.alpha_amp_uv >= 0.0) {
            return Err(SynthError::InvalidParams("noise amplitudes must be >= 0".into()));
        }
        Ok(())
    }
}

/// Attentional-blink attenuation as a function of the target-to-target interval.
///
/// `floor_gain` at or below `tti_floor_s`, 1 at or above `tti_ceiling_s`,
/// linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkModel {
    pub enabled: bool,
    pub tti_floor_s: f64,
    pub tti_ceiling_s: f64,
    pub floor_gain: f64,
}

impl Default for BlinkModel {
    fn default() -> Self {
        Self { enabled: true, tti_floor_s: 0.2, tti_ceiling_s: 0.5, floor_gain: 0.3 }
    }
}

impl BlinkModel {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn gain(&self, tti_s: f64) -> f64 {
        if !self.enabled || tti_s >= self.tti_ceiling_s {
            1.0
        } else if tti_s <= self.tti_floor_s {
            self.floor_gain
        } else {
            let frac = (tti_s - self.tti_floor_s) / (self.tti_ceiling_s - self.tti_floor_s);
            self.floor_gain + (1.0 - self.floor_gain) * frac
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.tti_floor_s <= self.tti_ceiling_s) || !(0.0..=1.0).contains(&self.floor_gain) {
            return Err(SynthError::InvalidParams(
                "blink model needs floor <= ceiling and floor_gain in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Optional response added on every flash, target or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualResponse {
    pub peak_latency_s: f64,
    pub width_s: f64,
    pub amplitude_uv: f64,
    pub topography: Vec<f64>,
}

/// Everything but the schedule and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub fs_hz: f64,
    pub channel_names: Vec<String>,
    pub templates: Vec<ErpTemplate>,
    /// Multiplies every template amplitude.
    pub template_scale: f64,
    pub noise: NoiseModel,
    pub blink: BlinkModel,
    /// Target onsets are shifted by a uniform draw in `[-j, j]`.
    pub onset_jitter_s: f64,
    pub visual_response: Option<VisualResponse>,
    /// Signal recorded after the last slot ends.
    pub tail_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fs_hz: DEFAULT_FS_HZ,
            channel_names: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            templates: default_templates(),
            template_scale: 1.0,
            noise: NoiseModel::default(),
            blink: BlinkModel::default(),
            onset_jitter_s: 0.0,
            visual_response: None,
            tail_s: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(SynthError::InvalidParams(format!("fs_hz {}", self.fs_hz)));
        }
        if self.channel_names.is_empty() {
            return Err(SynthError::InvalidParams("no channels".into()));
        }
        let c = self.channel_names.len();
        for t in &self.templates {
            t.validate(c)?;
        }
        if let Some(v) = &self.visual_response {
            if !(v.width_s > 0.0) || v.topography.len() != c {
                return Err(SynthError::InvalidParams("visual response needs width > 0 and one gain per channel".into()));
            }
        }
        if !(self.onset_jitter_s >= 0.0 && self.tail_s >= 0.0) {
            return Err(SynthError::InvalidParams("jitter and tail must be >= 0".into()));
        }
        self.noise.validate()?;
        self.blink.validate()
    }
}

/// Blink gain of each target flash, in schedule order.
///
/// The first target flash of the session has gain 1; later ones use the
/// interval since the previous target flash onset.
pub fn target_gains(schedule: &Schedule, blink: &BlinkModel) -> Vec<f64> {
    let mut prev: Option<f64> = None;
    schedule
        .flashes()
        .filter(|e| e.is_target)
        .map(|e| {
            let g = prev.map_or(1.0, |p| blink.gain(e.onset_s - p));
            prev = Some(e.onset_s);
            g
        })
        .collect()
}

/// Adds `gain · waveform(t - onset) · topography` around one onset.
fn add_bump(
    samples: &mut DMatrix<f64>,
    fs: f64,
    onset_s: f64,
    latency_s: f64,
    sigma_s: f64,
    amplitude: f64,
    topography: &[f64],
) {
    let t_total = samples.nrows();
    let centre = onset_s + latency_s;
    let first = ((centre - 10.0 * sigma_s) * fs).floor().max(0.0) as usize;
    let last = (((centre + 10.0 * sigma_s) * fs).ceil().max(0.0) as usize).min(t_total.saturating_sub(1));
    for t in first..=last {
        let z = (t as f64 / fs - centre) / sigma_s;
        let v = amplitude * (-0.5 * z * z).exp();
        for (c, g) in topography.iter().enumerate() {
            samples[(t, c)] += g * v;
        }
    }
}

pub fn synthesize_session(schedule: &Schedule, cfg: &SynthConfig, seed: u64) -> Result<Recording, SynthError> {
    cfg.validate()?;
    if schedule.events.is_empty() {
        return Err(SynthError::EmptySchedule);
    }
    let fs = cfg.fs_hz;
    let n_channels = cfg.channel_names.len();
    let n_samples = ((schedule.duration_s() + cfg.tail_s) * fs).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = DMatrix::zeros(n_samples, n_channels);

    let noise = &cfg.noise;
    if noise.background_sigma_uv > 0.0 {
        let a = noise.ar_coeff;
        let innovation = noise.background_sigma_uv * (1.0 - a * a).sqrt();
        for c in 0..n_channels {
            let mut x: f64 = noise.background_sigma_uv * rng.sample::<f64, _>(StandardNormal);
            for t in 0..n_samples {
                samples[(t, c)] = x;
                x = a * x + innovation * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    if noise.alpha_amp_uv > 0.0 {
        for c in 0..n_channels {
            let phase = rng.random_range(0.0..2.0 * PI);
            let w = 2.0 * PI * noise.alpha_freq_hz / fs;
            for t in 0..n_samples {
                samples[(t, c)] += noise.alpha_amp_uv * (w * t as f64 + phase).sin();
            }
        }
    }

    let gains = target_gains(schedule, &cfg.blink);
    let mut gain_iter = gains.iter();
    for e in schedule.flashes() {
        if let Some(v) = &cfg.visual_response {
            let sigma = v.width_s / (2.0 * (2.0 * 2f64.ln()).sqrt());
            add_bump(&mut samples, fs, e.onset_s, v.peak_latency_s, sigma, v.amplitude_uv, &v.topography);
        }
        if !e.is_target {
            continue;
        }
        let gain = *gain_iter.next().expect("one gain per target flash");
        let jitter = if cfg.onset_jitter_s > 0.0 {
            rng.random_range(-cfg.onset_jitter_s..=cfg.onset_jitter_s)
        } else {
            0.0
        };
        for tpl in &cfg.templates {
            let amp = gain * cfg.template_scale * tpl.amplitude_uv;
            add_bump(&mut samples, fs, e.onset_s + jitter, tpl.peak_latency_s, tpl.sigma_s(), amp, &tpl.topography);
        }
    }

    samples.apply(|v| *v = f64::from(*v as f32));
    Ok(Recording {
        fs_hz: fs,
        samples,
        channel_names: cfg.channel_names.clone(),
        events: schedule.events.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::{make_constrained_pattern, make_rc_pattern, Cell};
    use crate::scheduler::{make_cp300_schedule, make_xp300_schedule, ScheduleParams};

    fn quiet_config() -> SynthConfig {
        SynthConfig { noise: NoiseModel::silent(), blink: BlinkModel::disabled(), ..SynthConfig::default() }
    }

    #[test]
    fn template_defaults_follow_topography_ordering() {
        let t = default_templates();
        let p300 = t.iter().find(|t| t.name == Component::P300).unwrap();
        let n200 = t.iter().find(|t| t.name == Component::N200).unwrap();
        assert_eq!(p300.peak_latency_s, 0.30);
        assert_eq!(n200.peak_latency_s, 0.20);
        assert!(p300.amplitude_uv > 0.0 && n200.amplitude_uv < 0.0);
        let g = &p300.topography; // O1 O2 P3 P4 P7 P8 Pz FCz
        assert!(g[7].min(g[6]) > g[2].max(g[3]));
        assert!(g[2].min(g[3]) > g[0].max(g[1]));
        let h = &n200.topography;
        let max = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert_eq!(h[0].abs(), max);
        assert_eq!(h[1].abs(), max);
    }

    #[test]
    fn blink_gain_profile() {
        let b = BlinkModel::default();
        assert_eq!(b.gain(0.1), 0.3);
        assert_eq!(b.gain(0.2), 0.3);
        assert!((b.gain(0.35) - 0.65).abs() < 1e-12);
        assert_eq!(b.gain(0.5), 1.0);
        assert_eq!(b.gain(3.0), 1.0);
        assert_eq!(BlinkModel::disabled().gain(0.0), 1.0);
    }

    #[test]
    fn noise_free_target_epoch_is_template_sum() {
        // one target flash per repetition block, well separated
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 1.0, 4), &[Cell::new(2, 3)]).unwrap();
        let cfg = quiet_config();
        let rec = synthesize_session(&s, &cfg, 1).unwrap();
        let tpl = default_templates();
        for e in s.flashes().filter(|e| e.is_target) {
            let start = rec.sample_index(e.onset_s);
            for l in 0..1200 {
                let t = l as f64 / cfg.fs_hz;
                for c in 0..8 {
                    let expected: f64 = tpl.iter().map(|k| k.topography[c] * k.waveform(t)).sum();
                    let got = rec.samples[(start + l, c)];
                    assert!((got - f64::from(expected as f32)).abs() <= 1e-6 * expected.abs() + 1e-12, "t={t} c={c}");
                }
            }
        }
    }

    #[test]
    fn blink_scales_close_second_target() {
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 0.2, 0), &[Cell::new(1, 1)]).unwrap();
        let gains = target_gains(&s, &BlinkModel::default());
        let onsets: Vec<f64> = s.flashes().filter(|e| e.is_target).map(|e| e.onset_s).collect();
        assert_eq!(gains[0], 1.0);
        if (onsets[1] - onsets[0] - 0.2).abs() < 1e-9 {
            assert_eq!(gains[1], 0.3);
        } else {
            assert_eq!(gains[1], BlinkModel::default().gain(onsets[1] - onsets[0]));
        }
    }

    #[test]
    fn xp300_gains_never_below_two_isi() {
        let id: Vec<usize> = (1..=6).collect();
        let p = make_constrained_pattern(6, &id, &id).unwrap();
        let targets: Vec<Cell> = (1..=6).map(|i| Cell::new(i, 7 - i)).collect();
        let s = make_xp300_schedule(&p, &ScheduleParams::new(10, 0.133, 3), &targets).unwrap();
        let b = BlinkModel::default();
        let floor = b.gain(2.0 * 0.133);
        assert!(target_gains(&s, &b).iter().all(|&g| g >= floor - 1e-12));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(2, 0.133, 0), &[Cell::new(1, 1)]).unwrap();
        let cfg = SynthConfig { onset_jitter_s: 0.004, ..SynthConfig::default() };
        let a = synthesize_session(&s, &cfg, 42).unwrap();
        let b = synthesize_session(&s, &cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize_session(&s, &cfg, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn doubling_amplitude_doubles_noise_free_signal() {
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(2, 0.133, 0), &[Cell::new(4, 2)]).unwrap();
        let cfg = SynthConfig { blink: BlinkModel::default(), ..quiet_config() };
        let double = SynthConfig { template_scale: 2.0, ..cfg.clone() };
        let a = synthesize_session(&s, &cfg, 0).unwrap();
        let b = synthesize_session(&s, &double, 0).unwrap();
        assert_eq!(a.samples * 2.0, b.samples);
    }

    #[test]
    fn background_has_requested_scale() {
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(10, 0.133, 0), &[Cell::new(1, 1)]).unwrap();
        let cfg = SynthConfig {
            template_scale: 0.0,
            noise: NoiseModel { alpha_amp_uv: 0.0, background_sigma_uv: 20.0, ar_coeff: 0.5, ..NoiseModel::default() },
            ..SynthConfig::default()
        };
        let rec = synthesize_session(&s, &cfg, 9).unwrap();
        let col = rec.samples.column(0);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64).sqrt();
        assert!((sd / 20.0 - 1.0).abs() < 0.05, "sd {sd}");
    }

    #[test]
    fn invalid_params_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.noise.ar_coeff = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.templates[0].topography.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.blink.floor_gain = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults_fill_missing_fields() {
        let cfg: SynthConfig = serde_json::from_str(r#"{"template_scale": 0.5, "noise": {"background_sigma_uv": 5.0}}"#).unwrap();
        assert_eq!(cfg.template_scale, 0.5);
        assert_eq!(cfg.noise.background_sigma_uv, 5.0);
        assert_eq!(cfg.noise.ar_coeff, NoiseModel::default().ar_coeff);
        assert_eq!(cfg.fs_hz, 2000.0);
    }
}
