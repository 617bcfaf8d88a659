//! SVD of the normalized coefficient matrix, truncation, reduced coordinates
//! and accuracy figures.
//!
//! Three accuracy numbers are reported. `eta_frobenius` is the weighted
//! Frobenius norm of the residual, computed directly. `eta_sqsum` is the
//! root-sum-of-squares of the discarded singular values, which equals it by
//! Eckart–Young. `eta_sum` is the plain sum of the discarded singular values;
//! it is sometimes quoted as the same quantity but only coincides when at most
//! one nonzero value is dropped.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dataset::{build_series, CoefficientSeries, DatasetError, Normalizer, StdConvention, TrajectoryDataset};
use crate::geometry::{axis_aligned_bounds, GeometryError};
use crate::model::{AffineLpvModel, MapSource, ModelError, Provenance, SchedulingMap};
use crate::sysdsl::{reshape_row_major, SystemDescription};
use crate::linalg::checked_svd;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("no active (non-constant) coefficient rows")]
    NoActiveRows,
    #[error("non-finite entry in the normalized data")]
    NonFinite,
    #[error("order {order} out of range 1..={available}")]
    OrderOutOfRange { order: usize, available: usize },
    #[error("empty singular value list")]
    EmptySingularValues,
    #[error("energy threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("SVD did not converge")]
    SvdFailed,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Left singular vectors and singular values, sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    left_vectors: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl Decomposition {
    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.left_vectors
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Count of singular values above `rel_tol * sigma_1`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > rel_tol * s1).count()
    }
}

/// Thin SVD with sorted singular values; `V` is not kept.
pub fn decompose(normalized: &DMatrix<f64>) -> Result<Decomposition, ReductionError> {
    if normalized.nrows() == 0 || normalized.ncols() == 0 {
        return Err(ReductionError::NoActiveRows);
    }
    if normalized.iter().any(|v| !v.is_finite()) {
        return Err(ReductionError::NonFinite);
    }
    let svd = checked_svd(normalized).ok_or(ReductionError::SvdFailed)?;
    let u = svd.u.ok_or(ReductionError::SvdFailed)?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let left = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    Ok(Decomposition {
        left_vectors: left,
        singular_values: order.iter().map(|&k| sv[k].max(0.0)).collect(),
    })
}

/// Flip each column so its largest-magnitude entry is positive (first such
/// entry on ties).
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        for (k, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = k;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    u_rho: DMatrix<f64>,
    singular_values: Vec<f64>,
    n_rho: usize,
}

impl ReducedBasis {
    /// `active rows x n_rho`, orthonormal columns.
    pub fn u_rho(&self) -> &DMatrix<f64> {
        &self.u_rho
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    /// Build directly from an orthonormal basis (signs are fixed here too).
    pub fn from_parts(mut u_rho: DMatrix<f64>, singular_values: Vec<f64>) -> Self {
        fix_column_signs(&mut u_rho);
        let n_rho = u_rho.ncols();
        Self {
            u_rho,
            singular_values,
            n_rho,
        }
    }
}

pub fn truncate(dec: &Decomposition, n_rho: usize) -> Result<ReducedBasis, ReductionError> {
    let available = dec.left_vectors.ncols();
    if n_rho == 0 || n_rho > available {
        return Err(ReductionError::OrderOutOfRange {
            order: n_rho,
            available,
        });
    }
    let mut u = dec.left_vectors.columns(0, n_rho).into_owned();
    fix_column_signs(&mut u);
    Ok(ReducedBasis {
        u_rho: u,
        singular_values: dec.singular_values.clone(),
        n_rho,
    })
}

fn check_compat(basis: &ReducedBasis, nrm: &Normalizer, series: &CoefficientSeries) -> Result<(), ReductionError> {
    if series.data().nrows() != nrm.len() {
        return Err(ReductionError::DimensionMismatch(format!(
            "series has {} rows, normalizer {}",
            series.data().nrows(),
            nrm.len()
        )));
    }
    if basis.u_rho.nrows() != nrm.n_active() {
        return Err(ReductionError::DimensionMismatch(format!(
            "basis has {} rows, normalizer {} active",
            basis.u_rho.nrows(),
            nrm.n_active()
        )));
    }
    Ok(())
}

/// `rho = U_rho^T N(Gamma)` per sample, `n_rho x N`.
pub fn reduced_coordinates(
    basis: &ReducedBasis,
    nrm: &Normalizer,
    series: &CoefficientSeries,
) -> Result<DMatrix<f64>, ReductionError> {
    check_compat(basis, nrm, series)?;
    Ok(basis.u_rho.transpose() * nrm.normalize(series.data())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub n_rho: usize,
    /// Singular values the report refers to; empty when not SVD-based.
    pub singular_values: Vec<f64>,
    pub eta_frobenius: f64,
    pub eta_sum: Option<f64>,
    pub eta_sqsum: Option<f64>,
    pub captured_energy_ratio: Option<f64>,
    /// Unweighted RMS error per coefficient row, in original units.
    pub per_entry_rmse: Vec<f64>,
}

impl AccuracyReport {
    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let mut s = String::new();
        s.push_str(&format!("order = {}\n", self.n_rho));
        s.push_str(&format!("eta_frobenius = {:.6}\n", self.eta_frobenius));
        s.push_str(&format!("eta_sum = {}\n", opt(self.eta_sum)));
        s.push_str(&format!("eta_sqsum = {}\n", opt(self.eta_sqsum)));
        s.push_str(&format!("captured_energy = {}\n", opt(self.captured_energy_ratio)));
        if !self.singular_values.is_empty() {
            let sv: Vec<String> = self.singular_values.iter().map(|v| format!("{v:.6e}")).collect();
            s.push_str(&format!("singular_values = {}\n", sv.join(" ")));
        }
        s
    }
}

/// Weighted Frobenius norm of `data - approx` and per-row RMS error.
pub fn weighted_residual(nrm: &Normalizer, data: &DMatrix<f64>, approx: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let w = nrm.weights();
    let n = data.ncols().max(1) as f64;
    let mut fro = 0.0;
    let mut rmse = vec![0.0; data.nrows()];
    for r in 0..data.nrows() {
        let mut acc = 0.0;
        for k in 0..data.ncols() {
            let d = data[(r, k)] - approx[(r, k)];
            acc += d * d;
        }
        fro += w[r] * w[r] * acc;
        rmse[r] = (acc / n).sqrt();
    }
    (fro.sqrt(), rmse)
}

fn tail_figures(sv: &[f64], n_rho: usize) -> (f64, f64, f64) {
    let tail = &sv[n_rho.min(sv.len())..];
    let sum = tail.iter().fold(0.0, |a, s| a + s);
    let sq = tail.iter().fold(0.0, |a, s| a + s * s);
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let ratio = if total > 0.0 { 1.0 - sq / total } else { 1.0 };
    (sum, sq.sqrt(), ratio.clamp(0.0, 1.0))
}

pub fn accuracy(
    basis: &ReducedBasis,
    nrm: &Normalizer,
    series: &CoefficientSeries,
) -> Result<AccuracyReport, ReductionError> {
    check_compat(basis, nrm, series)?;
    let z = nrm.normalize(series.data())?;
    let proj = &basis.u_rho * (basis.u_rho.transpose() * &z);
    let approx = nrm.denormalize(&proj)?;
    let (eta_frobenius, per_entry_rmse) = weighted_residual(nrm, series.data(), &approx);
    let (sum, sqsum, ratio) = tail_figures(&basis.singular_values, basis.n_rho);
    Ok(AccuracyReport {
        n_rho: basis.n_rho,
        singular_values: basis.singular_values.clone(),
        eta_frobenius,
        eta_sum: Some(sum),
        eta_sqsum: Some(sqsum),
        captured_energy_ratio: Some(ratio),
        per_entry_rmse,
    })
}

/// Smallest order whose captured energy reaches `threshold`.
pub fn suggest_order(singular_values: &[f64], threshold: f64) -> Result<usize, ReductionError> {
    if singular_values.is_empty() {
        return Err(ReductionError::EmptySingularValues);
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ReductionError::BadThreshold(threshold));
    }
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(1);
    }
    let mut cum = 0.0;
    for (k, s) in singular_values.iter().enumerate() {
        cum += s * s;
        if cum / total >= threshold - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(singular_values.len())
}

/// Rows x N projection `U_rho U_rho^T` applied to a normalized matrix.
pub fn project(basis: &ReducedBasis, normalized: &DMatrix<f64>) -> DMatrix<f64> {
    &basis.u_rho * (basis.u_rho.transpose() * normalized)
}

/// `N^{-1}(U_rho rho)` for a single reduced coordinate vector.
pub fn reconstruct(basis: &ReducedBasis, nrm: &Normalizer, rho: &DVector<f64>) -> Result<DVector<f64>, ReductionError> {
    let z = &basis.u_rho * rho;
    let m = nrm.denormalize(&DMatrix::from_column_slice(z.len(), 1, z.as_slice()))?;
    Ok(m.column(0).into_owned())
}

/// Baseline reduction: PCA on the scheduling trajectories themselves.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    /// Model whose scheduling map reads `alpha` directly.
    pub model: AffineLpvModel,
    /// Accuracy under the same weighting as the main path; the singular
    /// values are those of the normalized `alpha` trajectories.
    pub report: AccuracyReport,
    /// The regressor `[1; z]` did not have full row rank; the minimum-norm
    /// least-squares solution was used.
    pub rank_deficient: bool,
}

/// Normalizes and SVD-truncates the `alpha` trajectories to `order`
/// components `z`, then fits `Gamma ~ C0 + sum z_i C_i` by least squares over
/// the dataset. The weighted residual uses the coefficient normalizer fitted
/// with the same `eps_sigma` and `convention` as the main path.
pub fn baseline_scheduling_pca(
    data: &TrajectoryDataset,
    sys: &SystemDescription,
    order: usize,
    eps_sigma: f64,
    convention: StdConvention,
) -> Result<BaselineResult, ReductionError> {
    let series = build_series(sys, data)?;
    let gamma = series.data();
    let alpha = data.samples().transpose();
    let anrm = Normalizer::fit(&alpha, eps_sigma, convention)?;
    let available = anrm.n_active();
    if order == 0 || order > available {
        return Err(ReductionError::OrderOutOfRange { order, available });
    }
    let dec = decompose(&anrm.normalize(&alpha)?)?;
    let basis = truncate(&dec, order)?;
    let z = basis.u_rho.transpose() * anrm.normalize(&alpha)?;

    let n = data.len();
    let phi = DMatrix::from_fn(order + 1, n, |r, k| if r == 0 { 1.0 } else { z[(r - 1, k)] });
    let svd = checked_svd(&phi).ok_or(ReductionError::SvdFailed)?;
    let smax = svd.singular_values.max();
    let tol = smax * (order + 1).max(n) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let rank_deficient = rank < order + 1;
    if rank_deficient {
        log::warn!("baseline regressor has rank {rank} < {}; using the minimum-norm solution", order + 1);
    }
    let pinv = svd.pseudo_inverse(tol).map_err(|_| ReductionError::SvdFailed)?;
    let coef = gamma * pinv;
    let approx = &coef * &phi;

    let nrm = Normalizer::fit(gamma, eps_sigma, convention)?;
    let (eta_frobenius, per_entry_rmse) = weighted_residual(&nrm, gamma, &approx);
    let report = AccuracyReport {
        n_rho: order,
        singular_values: dec.singular_values.clone(),
        eta_frobenius,
        eta_sum: None,
        eta_sqsum: None,
        captured_energy_ratio: None,
        per_entry_rmse,
    };

    // z = U^T S^{-1} (alpha_a - mean_a)
    let dims = sys.dims();
    let (m, ncol) = (dims.rows(), dims.cols());
    let means = anrm.means();
    let stds = anrm.stds();
    let mut k = DMatrix::zeros(order, alpha.nrows());
    for (a, &row) in anrm.active_indices().iter().enumerate() {
        for t in 0..order {
            k[(t, row)] = basis.u_rho[(a, t)] / stds[row];
        }
    }
    let k0 = -(&k * means);
    let region = axis_aligned_bounds(&z)?;
    let m0 = reshape_row_major(coef.column(0).as_slice(), m, ncol);
    let mi = (1..=order)
        .map(|c| reshape_row_major(coef.column(c).as_slice(), m, ncol))
        .collect();
    let model = AffineLpvModel::from_parts(
        dims,
        m0,
        mi,
        SchedulingMap {
            k,
            k0,
            source: MapSource::Alpha,
        },
        region,
        Provenance {
            singular_values: report.singular_values.clone(),
            eta_frobenius: Some(eta_frobenius),
            eta_sum: None,
            source_digest: sys.digest(),
        },
    )?;
    Ok(BaselineResult {
        model,
        report,
        rank_deficient,
    })
}
