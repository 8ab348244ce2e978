//! On-disk session bundles.
//!
//! A bundle is a directory holding three files:
//!
//! - `manifest.json`: format version, sampling rate, shape, channel names,
//!   paradigm, seed, the schedule header and an echo of the generating config;
//! - `signal.f32`: little-endian IEEE-754 `f32`, sample-major (all channels of
//!   sample 0, then sample 1, ...), so its size is `n_samples · n_channels · 4`;
//! - `events.jsonl`: one stimulus event per line.
//!
//! Every file is written to a temporary name and renamed into place.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::Recording;
use crate::scheduler::{write_events_jsonl, Paradigm, Schedule, ScheduleHeader, StimulusEvent};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SIGNAL_FILE: &str = "signal.f32";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: unsupported format version {found} (expected {expected})", path.display())]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{}: corrupt bundle: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("{}:{line}: parse error: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub fs_hz: f64,
    pub n_samples: usize,
    pub n_channels: usize,
    pub channel_names: Vec<String>,
    pub paradigm: Option<Paradigm>,
    pub seed: Option<u64>,
    pub schedule: Option<ScheduleHeader>,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Metadata stored next to the signal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionMeta {
    pub paradigm: Option<Paradigm>,
    pub seed: Option<u64>,
    pub schedule: Option<ScheduleHeader>,
    pub config: serde_json::Value,
}

impl SessionMeta {
    pub fn for_schedule(schedule: &Schedule, seed: u64, config: serde_json::Value) -> Self {
        Self {
            paradigm: Some(schedule.paradigm),
            seed: Some(seed),
            schedule: Some(schedule.header()),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl SessionBundle {
    /// The schedule the recording was generated from, if the manifest has one.
    pub fn schedule(&self, events: &[StimulusEvent]) -> Option<Schedule> {
        self.manifest.schedule.clone().map(|h| Schedule::from_parts(h, events.to_vec()))
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SessionError> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn encode_signal(samples: &DMatrix<f64>) -> Vec<u8> {
    let (t, c) = samples.shape();
    let mut out = Vec::with_capacity(t * c * 4);
    for i in 0..t {
        for j in 0..c {
            out.extend_from_slice(&(samples[(i, j)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_signal(bytes: &[u8], n_samples: usize, n_channels: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_samples, n_channels, |i, j| {
        let k = (i * n_channels + j) * 4;
        f64::from(f32::from_le_bytes([bytes[k], bytes[k + 1], bytes[k + 2], bytes[k + 3]]))
    })
}

/// Writes a bundle into `dir`, creating it if needed.
///
/// Samples are narrowed to `f32`; recordings whose samples are already
/// `f32`-representable round-trip bit-exactly.
pub fn write_session(rec: &Recording, meta: &SessionMeta, dir: &Path) -> Result<SessionBundle, SessionError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        fs_hz: rec.fs_hz,
        n_samples: rec.n_samples(),
        n_channels: rec.n_channels(),
        channel_names: rec.channel_names.clone(),
        paradigm: meta.paradigm,
        seed: meta.seed,
        schedule: meta.schedule.clone(),
        config: meta.config.clone(),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    let mut events = Vec::new();
    write_events_jsonl(&rec.events, &mut events).map_err(io_err(dir))?;

    write_atomic(&dir.join(SIGNAL_FILE), &encode_signal(&rec.samples))?;
    write_atomic(&dir.join(EVENTS_FILE), &events)?;
    write_atomic(&dir.join(MANIFEST_FILE), &manifest_bytes)?;
    Ok(SessionBundle { dir: dir.to_path_buf(), manifest })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, SessionError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SessionError::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let found = value.get("format_version").and_then(serde_json::Value::as_u64);
    match found {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(SessionError::Version { path, found: v as u32, expected: FORMAT_VERSION });
        }
        None => {
            return Err(SessionError::Corrupt { path, message: "missing format_version".into() });
        }
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| SessionError::Parse {
        path: path.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    if manifest.channel_names.len() != manifest.n_channels {
        return Err(SessionError::Corrupt {
            path,
            message: format!("{} channel names for {} channels", manifest.channel_names.len(), manifest.n_channels),
        });
    }
    Ok(manifest)
}

pub fn read_events(path: &Path) -> Result<Vec<StimulusEvent>, SessionError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|e| SessionError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(e);
    }
    Ok(events)
}

/// Reads a bundle, returning the recording and its manifest.
pub fn read_bundle(dir: &Path) -> Result<(Recording, SessionBundle), SessionError> {
    let manifest = read_manifest(dir)?;
    let signal_path = dir.join(SIGNAL_FILE);
    let bytes = fs::read(&signal_path).map_err(io_err(&signal_path))?;
    let expected = manifest.n_samples * manifest.n_channels * 4;
    if bytes.len() != expected {
        return Err(SessionError::Corrupt {
            path: signal_path,
            message: format!(
                "signal has {} bytes, manifest implies {} ({} samples x {} channels x 4)",
                bytes.len(),
                expected,
                manifest.n_samples,
                manifest.n_channels
            ),
        });
    }
    let samples = decode_signal(&bytes, manifest.n_samples, manifest.n_channels);
    let events = read_events(&dir.join(EVENTS_FILE))?;
    let rec = Recording::new(manifest.fs_hz, samples, manifest.channel_names.clone(), events).map_err(|e| {
        SessionError::Corrupt { path: dir.to_path_buf(), message: e.to_string() }
    })?;
    Ok((rec, SessionBundle { dir: dir.to_path_buf(), manifest }))
}

pub fn read_session(dir: &Path) -> Result<Recording, SessionError> {
    read_bundle(dir).map(|(rec, _)| rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::{make_rc_pattern, Cell};
    use crate::scheduler::{make_cp300_schedule, ScheduleParams};

    fn small_recording() -> Recording {
        let samples = DMatrix::from_fn(100, 8, |t, c| f64::from(((t * 8 + c) as f32) * 0.25 - 3.0));
        let p = make_rc_pattern(6).unwrap();
        let s = make_cp300_schedule(&p, &ScheduleParams::new(1, 0.1, 0), &[Cell::new(1, 1)]).unwrap();
        Recording::new(50.0, samples, Recording::default_channel_names(), s.events).unwrap()
    }

    #[test]
    fn signal_size_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_recording();
        write_session(&rec, &SessionMeta::default(), dir.path()).unwrap();
        assert_eq!(fs::metadata(dir.path().join(SIGNAL_FILE)).unwrap().len(), 3200);
        assert_eq!(read_session(dir.path()).unwrap(), rec);
    }

    #[test]
    fn sample_major_little_endian_layout() {
        let samples = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_signal(&samples);
        let expected: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_session(&small_recording(), &SessionMeta::default(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_session(dir.path()), Err(SessionError::Version { found: 7, .. })));
    }

    #[test]
    fn truncated_signal_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_session(&small_recording(), &SessionMeta::default(), dir.path()).unwrap();
        let path = dir.path().join(SIGNAL_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_session(dir.path()), Err(SessionError::Corrupt { .. })));
    }

    #[test]
    fn malformed_event_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_session(&small_recording(), &SessionMeta::default(), dir.path()).unwrap();
        let path = dir.path().join(EVENTS_FILE);
        let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        lines[2] = "{not json".into();
        fs::write(&path, lines.join("\n")).unwrap();
        match read_session(dir.path()) {
            Err(SessionError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_events_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = small_recording();
        rec.events.clear();
        write_session(&rec, &SessionMeta::default(), dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(EVENTS_FILE)).unwrap().len(), 0);
        let back = read_session(dir.path()).unwrap();
        assert!(back.events.is_empty());
        let set = crate::dsp::extract_epochs(&back, 0.2).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let rec = small_recording();
        let meta = SessionMeta { seed: Some(3), config: serde_json::json!({"x": 1, "a": [1, 2]}), ..SessionMeta::default() };
        write_session(&rec, &meta, a.path()).unwrap();
        write_session(&rec, &meta, b.path()).unwrap();
        for f in [MANIFEST_FILE, SIGNAL_FILE, EVENTS_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn missing_bundle_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_session(&dir.path().join("nope")), Err(SessionError::Io { .. })));
    }
}
