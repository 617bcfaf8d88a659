//! The assembled affine model `L(theta) = M0 + sum theta_i M_i`, its
//! scheduling map `theta = K gamma + k0`, and JSON persistence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Normalizer, TrajectoryDataset};
use crate::geometry::{RegionMethod, SchedulingRegion};
use crate::reduction::{AccuracyReport, ReducedBasis};
use crate::sysdsl::{reshape_row_major, vectorize_row_major, Dims, EntryEvalError, SystemDescription};

pub const SCHEMA_VERSION: u32 = 1;

/// Distance from `j omega` below which a frequency is reported as singular.
pub const IMAG_AXIS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("region rotation is not orthogonal (deviation {0:.3e})")]
    SingularRotation(f64),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("malformed model JSON: {0}")]
    Json(#[source] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Evaluation(#[from] EntryEvalError),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("eigenvalue computation did not converge")]
    Eigen,
}

/// What the scheduling map reads: the coefficient vector `Gamma(alpha)` or
/// the raw scheduling vector `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapSource {
    #[default]
    Gamma,
    Alpha,
}

impl MapSource {
    pub fn name(self) -> &'static str {
        match self {
            MapSource::Gamma => "gamma",
            MapSource::Alpha => "alpha",
        }
    }
}

impl FromStr for MapSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(MapSource::Gamma),
            "alpha" => Ok(MapSource::Alpha),
            _ => Err(format!("unknown map source `{s}`")),
        }
    }
}

impl fmt::Display for MapSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingMap {
    pub k: DMatrix<f64>,
    pub k0: DVector<f64>,
    pub source: MapSource,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub singular_values: Vec<f64>,
    pub eta_frobenius: Option<f64>,
    pub eta_sum: Option<f64>,
    pub source_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLpvModel {
    dims: Dims,
    m0: DMatrix<f64>,
    mi: Vec<DMatrix<f64>>,
    map: SchedulingMap,
    region: SchedulingRegion,
    provenance: Provenance,
}

/// Result of [`AffineLpvModel::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matrix: DMatrix<f64>,
    pub outside_region: bool,
}

/// Magnitudes indexed `[output][input][frequency]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub omegas: Vec<f64>,
    pub magnitude: Vec<Vec<Vec<f64>>>,
    /// Frequencies (indices into `omegas`) where `j omega I - A` is singular;
    /// their magnitudes are NaN.
    pub singular_at: Vec<usize>,
    pub outside_region: bool,
}

fn rotation_deviation(r: &DMatrix<f64>) -> f64 {
    let d = r.nrows();
    (r.transpose() * r - DMatrix::identity(d, d)).amax()
}

impl AffineLpvModel {
    /// Validating constructor.
    pub fn from_parts(
        dims: Dims,
        m0: DMatrix<f64>,
        mi: Vec<DMatrix<f64>>,
        map: SchedulingMap,
        region: SchedulingRegion,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        let shape = (dims.rows(), dims.cols());
        let nt = mi.len();
        let mismatch = |what: String| Err(ModelError::DimensionMismatch(what));
        if m0.shape() != shape {
            return mismatch(format!("M0 is {:?}, expected {:?}", m0.shape(), shape));
        }
        if let Some(k) = mi.iter().position(|m| m.shape() != shape) {
            return mismatch(format!("M{} is {:?}, expected {:?}", k + 1, mi[k].shape(), shape));
        }
        if map.k.nrows() != nt || map.k0.len() != nt {
            return mismatch(format!(
                "map has {} rows and {} offsets for {} coefficient matrices",
                map.k.nrows(),
                map.k0.len(),
                nt
            ));
        }
        if map.source == MapSource::Gamma && map.k.ncols() != dims.n_gamma() {
            return mismatch(format!("map reads {} entries, system has {}", map.k.ncols(), dims.n_gamma()));
        }
        if region.dim() != nt || region.upper.len() != nt || region.center.len() != nt || region.rotation.shape() != (nt, nt) {
            return mismatch(format!("region dimension {} for {} scheduling variables", region.dim(), nt));
        }
        Ok(Self {
            dims,
            m0,
            mi,
            map,
            region,
            provenance,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_theta(&self) -> usize {
        self.mi.len()
    }

    pub fn m0(&self) -> &DMatrix<f64> {
        &self.m0
    }

    pub fn coefficients(&self) -> &[DMatrix<f64>] {
        &self.mi
    }

    pub fn map(&self) -> &SchedulingMap {
        &self.map
    }

    pub fn region(&self) -> &SchedulingRegion {
        &self.region
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = provenance;
    }

    /// Copies singular values and accuracy figures from `report`.
    pub fn record_accuracy(&mut self, report: &AccuracyReport) {
        self.provenance.singular_values = report.singular_values.clone();
        self.provenance.eta_frobenius = Some(report.eta_frobenius);
        self.provenance.eta_sum = report.eta_sum;
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<(), ModelError> {
        if theta.len() != self.n_theta() {
            return Err(ModelError::DimensionMismatch(format!(
                "theta has {} entries, model has {}",
                theta.len(),
                self.n_theta()
            )));
        }
        Ok(())
    }

    /// `M0 + sum theta_i M_i` without the region check.
    pub fn matrix_at(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_theta(theta)?;
        let mut out = self.m0.clone();
        for (t, m) in theta.iter().zip(&self.mi) {
            out += m * *t;
        }
        Ok(out)
    }

    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<Evaluation, ModelError> {
        let matrix = self.matrix_at(theta)?;
        let outside_region = !self.region.contains(theta, 1e-9);
        if outside_region {
            log::warn!("theta {:?} lies outside the scheduling region", theta.as_slice());
        }
        Ok(Evaluation { matrix, outside_region })
    }

    /// `K v + k0`, where `v` is whatever the map reads (see [`MapSource`]).
    pub fn schedule(&self, v: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        if v.len() != self.map.k.ncols() {
            return Err(ModelError::DimensionMismatch(format!(
                "map input has {} entries, expected {}",
                v.len(),
                self.map.k.ncols()
            )));
        }
        Ok(&self.map.k * v + &self.map.k0)
    }

    /// Scheduling vector for a raw `alpha`, going through `sys` when the map
    /// reads coefficients.
    pub fn schedule_alpha(&self, sys: &SystemDescription, alpha: &[f64]) -> Result<DVector<f64>, ModelError> {
        match self.map.source {
            MapSource::Gamma => self.schedule(&sys.eval_gamma(alpha)?),
            MapSource::Alpha => self.schedule(&DVector::from_column_slice(alpha)),
        }
    }

    /// Scheduling trajectory over a dataset, `n_theta x N`.
    pub fn schedule_dataset(&self, sys: &SystemDescription, data: &TrajectoryDataset) -> Result<DMatrix<f64>, ModelError> {
        let mut out = DMatrix::zeros(self.n_theta(), data.len());
        for k in 0..data.len() {
            let th = self.schedule_alpha(sys, &data.sample(k))?;
            out.set_column(k, &th);
        }
        Ok(out)
    }

    /// Per-variable `(min, max)` of the scheduling rate over the dataset.
    pub fn rate_bounds(&self, sys: &SystemDescription, data: &TrajectoryDataset) -> Result<Vec<(f64, f64)>, ModelError> {
        if data.len() < 2 {
            return Err(ModelError::TooFewSamples {
                needed: 2,
                got: data.len(),
            });
        }
        let theta = self.schedule_dataset(sys, data)?;
        Ok(derivative_bounds(&theta, data.period()))
    }

    /// `(A, B, C, D)` blocks of the frozen model.
    pub fn frozen_blocks(&self, theta: &DVector<f64>) -> Result<[DMatrix<f64>; 4], ModelError> {
        let l = self.matrix_at(theta)?;
        let Dims { nx, nu, ny } = self.dims;
        Ok([
            l.view((0, 0), (nx, nx)).into_owned(),
            l.view((0, nx), (nx, nu)).into_owned(),
            l.view((nx, 0), (ny, nx)).into_owned(),
            l.view((nx, nx), (ny, nu)).into_owned(),
        ])
    }

    pub fn frozen_frequency_response(&self, theta: &DVector<f64>, omegas: &[f64]) -> Result<FrequencyResponse, ModelError> {
        let outside_region = self.evaluate(theta)?.outside_region;
        let [a, b, c, d] = self.frozen_blocks(theta)?;
        let Dims { nx, nu, ny } = self.dims;
        let eig: Vec<Complex<f64>> = if nx > 0 {
            let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(ModelError::Eigen)?;
            schur.complex_eigenvalues().iter().copied().collect()
        } else {
            Vec::new()
        };
        let cplx = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
        let (ac, bc, cc, dc) = (cplx(&a), cplx(&b), cplx(&c), cplx(&d));
        let mut magnitude = vec![vec![vec![0.0; omegas.len()]; nu]; ny];
        let mut singular_at = Vec::new();
        for (k, &w) in omegas.iter().enumerate() {
            let jw = Complex::new(0.0, w);
            let g = if eig.iter().any(|l| (l - jw).norm() < IMAG_AXIS_TOL) {
                None
            } else if nx == 0 {
                Some(dc.clone())
            } else {
                let m = DMatrix::<Complex<f64>>::identity(nx, nx) * jw - &ac;
                m.lu().solve(&bc).map(|x| &cc * x + &dc)
            };
            match g {
                Some(g) => {
                    for o in 0..ny {
                        for i in 0..nu {
                            magnitude[o][i][k] = g[(o, i)].norm();
                        }
                    }
                }
                None => {
                    singular_at.push(k);
                    for row in magnitude.iter_mut() {
                        for ch in row.iter_mut() {
                            ch[k] = f64::NAN;
                        }
                    }
                }
            }
        }
        if !singular_at.is_empty() {
            log::warn!("{} grid frequencies hit an imaginary-axis eigenvalue", singular_at.len());
        }
        Ok(FrequencyResponse {
            omegas: omegas.to_vec(),
            magnitude,
            singular_at,
            outside_region,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc::from_model(self);
        let mut s = serde_json::to_string_pretty(&doc).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => ModelError::Schema(e.to_string()),
            _ => ModelError::Json(e),
        })?;
        doc.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn save_model(model: &AffineLpvModel) -> String {
    model.to_json()
}

pub fn load_model(json: &str) -> Result<AffineLpvModel, ModelError> {
    AffineLpvModel::from_json(json)
}

/// Builds the model from a reduced basis, the normalizer it was computed
/// with, and the region in reduced coordinates.
///
/// With `z = S^{-1}(gamma_a - mean_a)` on active rows, `rho = U^T z` and
/// `theta = R (rho - c) + c`, the map is `K = R U^T S^{-1}` (zero columns on
/// constant rows) and `k0 = c - R c - K mean`. The reconstruction
/// `gamma = mean + S U (R^T (theta - c) + c)` gives `M0` and the `M_i`.
pub fn assemble(
    basis: &ReducedBasis,
    nrm: &Normalizer,
    region: &SchedulingRegion,
    dims: Dims,
) -> Result<AffineLpvModel, ModelError> {
    let u = basis.u_rho();
    let nt = basis.n_rho();
    let ng = dims.n_gamma();
    let active = nrm.active_indices();
    if nrm.len() != ng || u.nrows() != active.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "basis has {} rows, normalizer {} ({} active), system {}",
            u.nrows(),
            nrm.len(),
            active.len(),
            ng
        )));
    }
    if region.dim() != nt {
        return Err(ModelError::DimensionMismatch(format!(
            "region dimension {} for order {}",
            region.dim(),
            nt
        )));
    }
    let r = &region.rotation;
    let dev = rotation_deviation(r);
    if !(dev <= 1e-8) {
        return Err(ModelError::SingularRotation(dev));
    }
    let c = &region.center;
    let means = nrm.means();
    let stds = nrm.stds();

    let rut = r * u.transpose();
    let mut k = DMatrix::zeros(nt, ng);
    for (a, &row) in active.iter().enumerate() {
        for t in 0..nt {
            k[(t, row)] = rut[(t, a)] / stds[row];
        }
    }
    let k0 = c - r * c - &k * means;

    let su_rt = u * r.transpose();
    let base = u * (c - r.transpose() * c);
    let mut g0 = means.clone();
    let mut gi = vec![DVector::zeros(ng); nt];
    for (a, &row) in active.iter().enumerate() {
        g0[row] += stds[row] * base[a];
        for (t, g) in gi.iter_mut().enumerate() {
            g[row] = stds[row] * su_rt[(a, t)];
        }
    }
    let (m, n) = (dims.rows(), dims.cols());
    let m0 = reshape_row_major(g0.as_slice(), m, n);
    let mi = gi.iter().map(|g| reshape_row_major(g.as_slice(), m, n)).collect();
    AffineLpvModel::from_parts(
        dims,
        m0,
        mi,
        SchedulingMap {
            k,
            k0,
            source: MapSource::Gamma,
        },
        region.clone(),
        Provenance {
            singular_values: basis.singular_values().to_vec(),
            ..Provenance::default()
        },
    )
}

/// Max entrywise `|L(alpha_k) - Lhat(theta(alpha_k))|` over a dataset.
pub fn embedding_error(model: &AffineLpvModel, sys: &SystemDescription, data: &TrajectoryDataset) -> Result<f64, ModelError> {
    let mut worst = 0.0f64;
    for k in 0..data.len() {
        let alpha = data.sample(k);
        let l = sys.eval_matrix(&alpha)?;
        let lh = model.matrix_at(&model.schedule_alpha(sys, &alpha)?)?;
        worst = worst.max((l - lh).amax());
    }
    Ok(worst)
}

/// Model prediction of the coefficient matrix over a dataset, `n_gamma x N`.
pub fn predicted_series(model: &AffineLpvModel, sys: &SystemDescription, data: &TrajectoryDataset) -> Result<DMatrix<f64>, ModelError> {
    let mut out = DMatrix::zeros(model.dims().n_gamma(), data.len());
    for k in 0..data.len() {
        let th = model.schedule_alpha(sys, &data.sample(k))?;
        out.set_column(k, &vectorize_row_major(&model.matrix_at(&th)?));
    }
    Ok(out)
}

/// Per-row `(min, max)` of the time derivative of a uniformly sampled
/// trajectory (`rows x N`, `N >= 2`): central differences inside, one-sided at
/// the ends.
pub fn derivative_bounds(traj: &DMatrix<f64>, period: f64) -> Vec<(f64, f64)> {
    let n = traj.ncols();
    (0..traj.nrows())
        .map(|r| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..n {
                let d = if k == 0 {
                    (traj[(r, 1)] - traj[(r, 0)]) / period
                } else if k == n - 1 {
                    (traj[(r, k)] - traj[(r, k - 1)]) / period
                } else {
                    (traj[(r, k + 1)] - traj[(r, k - 1)]) / (2.0 * period)
                };
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (lo, hi)
        })
        .collect()
}

/// `count` logarithmically spaced frequencies from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

/// 400 points over `1e-2 ..= 1e3` rad/s.
pub fn default_frequency_grid() -> Vec<f64> {
    log_grid(1e-2, 1e3, 400)
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsDoc {
    nx: usize,
    nu: usize,
    ny: usize,
    ntheta: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    #[serde(rename = "K")]
    k: Vec<f64>,
    k0: Vec<f64>,
    #[serde(default = "default_source")]
    source: String,
}

fn default_source() -> String {
    MapSource::Gamma.name().to_string()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionDoc {
    method: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rotation: Vec<f64>,
    center: Vec<f64>,
    volume: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceDoc {
    singular_values: Vec<f64>,
    eta_frobenius: Option<f64>,
    eta_sum: Option<f64>,
    source_digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    dims: DimsDoc,
    #[serde(rename = "M0")]
    m0: Vec<f64>,
    #[serde(rename = "Mi")]
    mi: Vec<Vec<f64>>,
    map: MapDoc,
    region: RegionDoc,
    provenance: ProvenanceDoc,
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    vectorize_row_major(m).as_slice().to_vec()
}

fn sized(name: &str, v: Vec<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>, ModelError> {
    if v.len() != rows * cols {
        return Err(ModelError::DimensionMismatch(format!(
            "{name} has {} values, expected {rows}x{cols}",
            v.len()
        )));
    }
    Ok(reshape_row_major(&v, rows, cols))
}

fn sized_vec(name: &str, v: Vec<f64>, len: usize) -> Result<DVector<f64>, ModelError> {
    if v.len() != len {
        return Err(ModelError::DimensionMismatch(format!("{name} has {} values, expected {len}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

impl ModelDoc {
    fn from_model(m: &AffineLpvModel) -> Self {
        let d = m.dims;
        let r = &m.region;
        let p = &m.provenance;
        ModelDoc {
            version: SCHEMA_VERSION,
            dims: DimsDoc {
                nx: d.nx,
                nu: d.nu,
                ny: d.ny,
                ntheta: m.n_theta(),
            },
            m0: flat(&m.m0),
            mi: m.mi.iter().map(flat).collect(),
            map: MapDoc {
                k: flat(&m.map.k),
                k0: m.map.k0.as_slice().to_vec(),
                source: m.map.source.name().to_string(),
            },
            region: RegionDoc {
                method: r.method.name().to_string(),
                lower: r.lower.as_slice().to_vec(),
                upper: r.upper.as_slice().to_vec(),
                rotation: flat(&r.rotation),
                center: r.center.as_slice().to_vec(),
                volume: r.volume,
            },
            provenance: ProvenanceDoc {
                singular_values: p.singular_values.clone(),
                eta_frobenius: p.eta_frobenius,
                eta_sum: p.eta_sum,
                source_digest: p.source_digest.clone(),
            },
        }
    }

    fn into_model(self) -> Result<AffineLpvModel, ModelError> {
        if self.version != SCHEMA_VERSION {
            return Err(ModelError::Schema(format!(
                "unsupported version {}, expected {SCHEMA_VERSION}",
                self.version
            )));
        }
        let dims = Dims::new(self.dims.nx, self.dims.nu, self.dims.ny);
        let nt = self.dims.ntheta;
        let (m, n) = (dims.rows(), dims.cols());
        if self.mi.len() != nt {
            return Err(ModelError::DimensionMismatch(format!(
                "ntheta = {nt} but {} coefficient matrices",
                self.mi.len()
            )));
        }
        let m0 = sized("M0", self.m0, m, n)?;
        let mi = self
            .mi
            .into_iter()
            .enumerate()
            .map(|(k, v)| sized(&format!("M{}", k + 1), v, m, n))
            .collect::<Result<Vec<_>, _>>()?;
        let source: MapSource = self.map.source.parse().map_err(ModelError::Schema)?;
        if nt == 0 || self.map.k.len() % nt != 0 {
            return Err(ModelError::DimensionMismatch(format!(
                "K has {} values for {nt} scheduling variables",
                self.map.k.len()
            )));
        }
        let kcols = self.map.k.len() / nt;
        let k = sized("K", self.map.k, nt, kcols)?;
        let k0 = sized_vec("k0", self.map.k0, nt)?;
        let method: RegionMethod = self.region.method.parse().map_err(ModelError::Schema)?;
        let region = SchedulingRegion {
            method,
            lower: sized_vec("region.lower", self.region.lower, nt)?,
            upper: sized_vec("region.upper", self.region.upper, nt)?,
            rotation: sized("region.rotation", self.region.rotation, nt, nt)?,
            center: sized_vec("region.center", self.region.center, nt)?,
            volume: self.region.volume,
        };
        AffineLpvModel::from_parts(
            dims,
            m0,
            mi,
            SchedulingMap { k, k0, source },
            region,
            Provenance {
                singular_values: self.provenance.singular_values,
                eta_frobenius: self.provenance.eta_frobenius,
                eta_sum: self.provenance.eta_sum,
                source_digest: self.provenance.source_digest,
            },
        )
    }
}
