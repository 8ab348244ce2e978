//! xDAWN spatial filters.
//!
//! The recording `X` (`T×C`) is modelled as `X = D·A + N`, where `D` (`T×L`) is
//! the Toeplitz design matrix of target onsets and `A` (`L×C`) the evoked
//! response. With `Â` the least-squares estimate, the filters maximize
//!
//! ```text
//! ρ(u) = uᵀÂᵀDᵀDÂu / uᵀXᵀXu
//! ```
//!
//! Since `DÂ` is the orthogonal projection of `X` on the column space of `D`,
//! thin factorizations `X = Q_x R_x` and `col(D) = span(Q_d)` reduce the problem
//! to the SVD `Q_dᵀQ_x = ΦΛΨᵀ`: the filters are `R_x⁻¹ψ_k` with `ρ_k = λ_k²`.
//! Singular values of a product of orthonormal bases are cosines of principal
//! angles, so every `ρ_k` lies in `[0, 1]`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::Recording;

pub const DEFAULT_N_FILTERS: usize = 4;
/// 0.6 s at 25 Hz.
pub const DEFAULT_ERP_LEN: usize = 15;

/// Relative threshold on triangular-factor diagonals for rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XdawnError {
    #[error("onset {onset} + erp length {erp_len} exceeds {total} samples")]
    OutOfRange { onset: usize, erp_len: usize, total: usize },
    #[error("onsets must be sorted and distinct")]
    UnsortedOnsets,
    #[error("need at least 2 target onsets, found {0}")]
    TooFewTargets(usize),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Sparse `T×L` design matrix with `d(t, l) = 1` iff `t = onset + l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzDesign {
    pub onsets: Vec<usize>,
    pub erp_len: usize,
    pub total_samples: usize,
}

impl ToeplitzDesign {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.total_samples, self.erp_len);
        for &onset in &self.onsets {
            for l in 0..self.erp_len {
                d[(onset + l, l)] += 1.0;
            }
        }
        d
    }

    /// Per-lag count of ones.
    pub fn column_sums(&self) -> Vec<usize> {
        vec![self.onsets.len(); self.erp_len]
    }
}

pub fn build_toeplitz(onsets: &[usize], erp_len: usize, total_samples: usize) -> Result<ToeplitzDesign, XdawnError> {
    if onsets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(XdawnError::UnsortedOnsets);
    }
    if let Some(&onset) = onsets.iter().find(|&&o| o + erp_len > total_samples) {
        return Err(XdawnError::OutOfRange { onset, erp_len, total: total_samples });
    }
    Ok(ToeplitzDesign { onsets: onsets.to_vec(), erp_len, total_samples })
}

/// Fitted spatial filters.
///
/// JSON form: `{"n_f": 4, "erp_len": 15, "u": [[..]], "rho": [..]}` with `u`
/// stored row-major as `C` rows of `n_f` coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct SpatialFilterModel {
    pub n_f: usize,
    pub erp_len: usize,
    /// `C×n_f`, one unit-norm filter per column.
    pub u: DMatrix<f64>,
    /// Rayleigh quotient of each filter, descending.
    pub rho: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    n_f: usize,
    erp_len: usize,
    u: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl From<SpatialFilterModel> for ModelJson {
    fn from(m: SpatialFilterModel) -> Self {
        let u = m.u.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self { n_f: m.n_f, erp_len: m.erp_len, u, rho: m.rho }
    }
}

impl TryFrom<ModelJson> for SpatialFilterModel {
    type Error = String;

    fn try_from(j: ModelJson) -> Result<Self, Self::Error> {
        if j.u.is_empty() || j.u.iter().any(|r| r.len() != j.n_f) {
            return Err(format!("u must be a non-empty matrix with {} columns", j.n_f));
        }
        if j.rho.len() != j.n_f {
            return Err(format!("rho has {} entries, expected {}", j.rho.len(), j.n_f));
        }
        let u = DMatrix::from_fn(j.u.len(), j.n_f, |i, k| j.u[i][k]);
        Ok(Self { n_f: j.n_f, erp_len: j.erp_len, u, rho: j.rho })
    }
}

impl SpatialFilterModel {
    pub fn n_channels(&self) -> usize {
        self.u.nrows()
    }
}

/// Orthonormal basis of the column space of `d`.
///
/// Thin QR when `d` has full column rank, left singular vectors otherwise.
fn column_space_basis(d: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = d.clone().qr();
    let diag = qr.r().diagonal().map(f64::abs);
    let max = diag.max();
    if max > 0.0 && diag.min() > RANK_TOL * max {
        return qr.q();
    }
    let svd = d.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > RANK_TOL * smax)
        .collect();
    u.select_columns(&keep)
}

/// Unit length, largest-magnitude coefficient positive.
fn normalize_filter(mut v: DVector<f64>) -> DVector<f64> {
    v /= v.norm();
    let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v = -v;
    }
    v
}

/// Fits filters to a signal matrix `x` (`T×C`) and design `d` (`T×L`).
pub fn fit_xdawn_matrices(x: &DMatrix<f64>, d: &DMatrix<f64>, erp_len: usize, n_f: usize) -> Result<SpatialFilterModel, XdawnError> {
    let (t, c) = x.shape();
    if d.nrows() != t {
        return Err(XdawnError::Shape(format!("design has {} rows, signal {t}", d.nrows())));
    }
    if t <= c || t <= erp_len {
        return Err(XdawnError::DegenerateSignal(format!(
            "{t} samples is not more than {c} channels and {erp_len} lags"
        )));
    }
    if n_f == 0 {
        return Err(XdawnError::Shape("n_f must be >= 1".into()));
    }

    let qr_x = x.clone().qr();
    let r_x = qr_x.r();
    let diag = r_x.diagonal().map(f64::abs);
    if diag.max() == 0.0 || diag.min() <= RANK_TOL * diag.max() {
        return Err(XdawnError::DegenerateSignal("signal matrix is rank deficient".into()));
    }
    let q_x = qr_x.q();
    let q_d = column_space_basis(d);
    if q_d.ncols() == 0 {
        return Err(XdawnError::DegenerateSignal("design matrix is zero".into()));
    }

    let svd = (q_d.transpose() * &q_x).svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let available = order.len();
    let n_f_eff = if n_f > available {
        warn!("xdawn: only {available} components available, clamping n_f from {n_f}");
        available
    } else {
        n_f
    };

    let mut u = DMatrix::zeros(c, n_f_eff);
    let mut rho = Vec::with_capacity(n_f_eff);
    for (k, &idx) in order.iter().take(n_f_eff).enumerate() {
        let psi = v_t.row(idx).transpose();
        let filter = r_x
            .solve_upper_triangular(&psi)
            .ok_or_else(|| XdawnError::DegenerateSignal("singular triangular factor".into()))?;
        u.set_column(k, &normalize_filter(filter));
        let lambda = svd.singular_values[idx].min(1.0);
        rho.push(lambda * lambda);
    }
    Ok(SpatialFilterModel { n_f: n_f_eff, erp_len, u, rho })
}

/// Target-flash onsets of a recording as sample indices, sorted and distinct.
pub fn target_onsets(rec: &Recording) -> Vec<usize> {
    let mut onsets: Vec<usize> = rec
        .events
        .iter()
        .filter(|e| e.is_flash() && e.is_target)
        .map(|e| rec.sample_index(e.onset_s))
        .collect();
    onsets.sort_unstable();
    onsets.dedup();
    onsets
}

/// Fits filters on a filtered, decimated recording.
pub fn fit_xdawn(rec: &Recording, erp_len: usize, n_f: usize) -> Result<SpatialFilterModel, XdawnError> {
    let onsets = target_onsets(rec);
    if onsets.len() < 2 {
        return Err(XdawnError::TooFewTargets(onsets.len()));
    }
    let design = build_toeplitz(&onsets, erp_len, rec.n_samples())?;
    fit_xdawn_matrices(&rec.samples, &design.to_dense(), erp_len, n_f)
}

/// Projects a recording on the filters: `T×C` → `T×n_f`.
pub fn apply_spatial_filter(m: &SpatialFilterModel, rec: &Recording) -> Result<Recording, XdawnError> {
    if rec.n_channels() != m.n_channels() {
        return Err(XdawnError::Shape(format!(
            "recording has {} channels, filters expect {}",
            rec.n_channels(),
            m.n_channels()
        )));
    }
    Ok(Recording {
        fs_hz: rec.fs_hz,
        samples: &rec.samples * &m.u,
        channel_names: (1..=m.n_f).map(|k| format!("xDAWN-{k}")).collect(),
        events: rec.events.clone(),
    })
}

/// `ρ(u)` evaluated directly through the projection on `col(D)`.
pub fn rayleigh_quotient(x: &DMatrix<f64>, d: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let q_d = column_space_basis(d);
    let xu = x * u;
    let projected = q_d.transpose() * &xu;
    projected.norm_squared() / xu.norm_squared()
}
