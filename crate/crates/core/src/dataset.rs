//! Scheduling trajectories, the coefficient data matrix and its per-row
//! normalization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sysdsl::{eval_constant, parse_expr, Dims, EntryEvalError, Expr, SystemDescription};

/// Default relative threshold under which a row is considered constant.
pub const DEFAULT_EPS_SIGMA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header must start with `t` followed by at least one variable name")]
    Header,
    #[error("line {line}: expected {expected} fields, found {got}")]
    Ragged {
        line: u64,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, field {field}: `{text}` is not a number")]
    NonNumeric { line: u64, field: usize, text: String },
    #[error("line {line}: time column is not uniformly spaced (step {step}, expected {expected})")]
    NonUniform { line: u64, step: f64, expected: f64 },
    #[error("time column must be strictly increasing")]
    NotIncreasing,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("non-finite value at sample {sample}, variable {var}")]
    NonFinite { sample: usize, var: usize },
    #[error("generator: {0}")]
    Generator(String),
    #[error("sample {sample}: {source}")]
    Evaluation {
        sample: usize,
        #[source]
        source: EntryEvalError,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Samples `alpha(kT)` stored as rows of an `N x n_alpha` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    period: f64,
    start: f64,
    names: Vec<String>,
    samples: DMatrix<f64>,
}

impl TrajectoryDataset {
    pub fn new(period: f64, names: Vec<String>, samples: DMatrix<f64>) -> Result<Self, DatasetError> {
        Self::with_start(period, 0.0, names, samples)
    }

    pub fn with_start(
        period: f64,
        start: f64,
        names: Vec<String>,
        samples: DMatrix<f64>,
    ) -> Result<Self, DatasetError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(DatasetError::BadPeriod(period));
        }
        if samples.nrows() == 0 {
            return Err(DatasetError::TooFewSamples { needed: 1, got: 0 });
        }
        if names.len() != samples.ncols() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                samples.ncols()
            )));
        }
        for k in 0..samples.nrows() {
            for j in 0..samples.ncols() {
                if !samples[(k, j)].is_finite() {
                    return Err(DatasetError::NonFinite { sample: k, var: j });
                }
            }
        }
        Ok(Self {
            period,
            start,
            names,
            samples,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `N x n_alpha`.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.samples.ncols()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.period
    }

    pub fn sample(&self, k: usize) -> Vec<f64> {
        self.samples.row(k).iter().copied().collect()
    }

    pub fn from_csv_reader<R: Read>(rdr: R) -> Result<Self, DatasetError> {
        load_trajectories(rdr)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        load_trajectories(std::fs::File::open(path)?)
    }

    /// Write as `t,<names...>`; values use shortest round-trip formatting so a
    /// reload is bit-exact.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.n_vars() + 1);
        for k in 0..self.len() {
            rec.clear();
            rec.push(format!("{}", self.time(k)));
            rec.extend(self.samples.row(k).iter().map(|v| format!("{v}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Parse a trajectory CSV with header `t,<var1>,...`.
pub fn load_trajectories<R: Read>(rdr: R) -> Result<TrajectoryDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(rdr);
    let header = reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(DatasetError::Header);
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = header.len();

    let mut times = Vec::new();
    let mut lines = Vec::new();
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(DatasetError::Ragged {
                line,
                expected: width,
                got: rec.len(),
            });
        }
        for (field, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
                line,
                field: field + 1,
                text: cell.to_string(),
            })?;
            if field == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
        lines.push(line);
    }
    let n = times.len();
    if n < 2 {
        return Err(DatasetError::TooFewSamples { needed: 2, got: n });
    }
    let period = times[1] - times[0];
    if !(period > 0.0) {
        return Err(DatasetError::NotIncreasing);
    }
    for k in 1..n {
        let step = times[k] - times[k - 1];
        if !(step > 0.0) {
            return Err(DatasetError::NotIncreasing);
        }
        // Allow for rounding of large time stamps on top of the 1e-9 budget.
        let tol = 1e-9 * period + 4.0 * f64::EPSILON * times[k].abs().max(times[k - 1].abs());
        if (step - period).abs() > tol {
            return Err(DatasetError::NonUniform {
                line: lines[k],
                step,
                expected: period,
            });
        }
    }
    let samples = DMatrix::from_row_slice(n, names.len(), &values);
    TrajectoryDataset::with_start(period, times[0], names, samples)
}

/// One scheduling signal, evaluated at sample index `k` / time `t = kT`.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalGenerator {
    /// `offset + amplitude * sin(omega * t + phase)`
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
        offset: f64,
    },
    /// Sum of `a * sin(w * t + phi)` terms.
    Multisine { components: Vec<(f64, f64, f64)> },
    /// Sample `k` takes the `k`-th grid value, independent of `t`.
    ///
    /// Left-anchored grids start at `lower`; centered grids are symmetric
    /// about the interval midpoint (`mid + j*step` for `|j| <= J`).
    Grid {
        lower: f64,
        upper: f64,
        step: f64,
        centered: bool,
    },
    /// Arbitrary expression in the variable `t`.
    Expression(Expr),
}

impl SignalGenerator {
    /// Number of samples the generator can supply, if bounded.
    pub fn natural_count(&self) -> Option<usize> {
        match *self {
            SignalGenerator::Grid {
                lower,
                upper,
                step,
                centered,
            } => Some(if centered {
                2 * grid_half_count(lower, upper, step) + 1
            } else {
                ((upper - lower) / step * (1.0 + 1e-12)).floor() as usize + 1
            }),
            _ => None,
        }
    }

    pub fn value(&self, k: usize, t: f64) -> Result<f64, DatasetError> {
        let v = match self {
            SignalGenerator::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => offset + amplitude * (omega * t + phase).sin(),
            SignalGenerator::Multisine { components } => {
                components.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum()
            }
            SignalGenerator::Grid {
                lower,
                upper,
                step,
                centered,
            } => {
                let count = self.natural_count().unwrap_or(0);
                if k >= count {
                    return Err(DatasetError::Generator(format!(
                        "grid has {count} points, sample {k} requested"
                    )));
                }
                if *centered {
                    let mid = 0.5 * (lower + upper);
                    let j = k as i64 - grid_half_count(*lower, *upper, *step) as i64;
                    mid + j as f64 * step
                } else {
                    lower + k as f64 * step
                }
            }
            SignalGenerator::Expression(e) => e
                .eval(&[t])
                .map_err(|err| DatasetError::Generator(format!("at t = {t}: {err}")))?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DatasetError::Generator(format!("non-finite value {v} at t = {t}")))
        }
    }
}

fn grid_half_count(lower: f64, upper: f64, step: f64) -> usize {
    (0.5 * (upper - lower) / step * (1.0 + 1e-12)).floor() as usize
}

/// Named per-variable generators, in variable order.
pub type GeneratorSpec = Vec<(String, SignalGenerator)>;

/// Smallest natural count over the bounded generators of a spec.
pub fn natural_count(spec: &[(String, SignalGenerator)]) -> Option<usize> {
    spec.iter().filter_map(|(_, g)| g.natural_count()).min()
}

/// Parse generator lines (newline- or `;`-separated):
///
/// ```text
/// a1 = 2*sin(10*t)^2
/// a2 = sinusoid(1, 10, 0, 0.5)       # amplitude, omega, phase, offset
/// a3 = multisine(1, 2, 0, 0.5, 7, pi) # (a, w, phi) triples
/// x1 = cgrid(-pi/2, pi/2, 0.01)       # or grid(lo, hi, step)
/// ```
pub fn parse_generator_spec(text: &str) -> Result<GeneratorSpec, DatasetError> {
    let mut out: GeneratorSpec = Vec::new();
    for (ln, raw) in text.split(['\n', ';']).enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, rhs) = line
            .split_once('=')
            .ok_or_else(|| DatasetError::Generator(format!("item {}: expected `name = generator`", ln + 1)))?;
        let name = name.trim().to_string();
        if name.is_empty() || out.iter().any(|(n, _)| *n == name) {
            return Err(DatasetError::Generator(format!("item {}: missing or duplicate name", ln + 1)));
        }
        out.push((name, parse_generator(rhs.trim())?));
    }
    if out.is_empty() {
        return Err(DatasetError::Generator("empty generator spec".into()));
    }
    Ok(out)
}

fn parse_generator(src: &str) -> Result<SignalGenerator, DatasetError> {
    let gen_err = |m: String| DatasetError::Generator(format!("`{src}`: {m}"));
    if let Some(open) = src.find('(') {
        let head = src[..open].trim();
        if matches!(head, "sinusoid" | "multisine" | "grid" | "cgrid") {
            let inner = src[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| gen_err("missing closing `)`".into()))?;
            let args = split_args(inner)
                .iter()
                .map(|a| eval_constant(a).map_err(|e| gen_err(e.to_string())))
                .collect::<Result<Vec<f64>, _>>()?;
            return match head {
                "sinusoid" => {
                    if !(2..=4).contains(&args.len()) {
                        return Err(gen_err("sinusoid takes (amplitude, omega[, phase[, offset]])".into()));
                    }
                    Ok(SignalGenerator::Sinusoid {
                        amplitude: args[0],
                        omega: args[1],
                        phase: args.get(2).copied().unwrap_or(0.0),
                        offset: args.get(3).copied().unwrap_or(0.0),
                    })
                }
                "multisine" => {
                    if args.is_empty() || args.len() % 3 != 0 {
                        return Err(gen_err("multisine takes (a, w, phi) triples".into()));
                    }
                    Ok(SignalGenerator::Multisine {
                        components: args.chunks(3).map(|c| (c[0], c[1], c[2])).collect(),
                    })
                }
                _ => {
                    if args.len() != 3 {
                        return Err(gen_err("grid takes (lower, upper, step)".into()));
                    }
                    let (lower, upper, step) = (args[0], args[1], args[2]);
                    if !(step > 0.0) || !(upper >= lower) {
                        return Err(gen_err("grid needs lower <= upper and step > 0".into()));
                    }
                    Ok(SignalGenerator::Grid {
                        lower,
                        upper,
                        step,
                        centered: head == "cgrid",
                    })
                }
            };
        }
    }
    parse_expr(src, &["t".to_string()])
        .map(SignalGenerator::Expression)
        .map_err(|e| gen_err(e.to_string()))
}

fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (k, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..k].trim());
                start = k + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

/// Sample every generator at `t = kT`, `k = 0..n`.
pub fn generate_trajectories(
    spec: &[(String, SignalGenerator)],
    period: f64,
    n: usize,
) -> Result<TrajectoryDataset, DatasetError> {
    if n < 2 {
        return Err(DatasetError::TooFewSamples { needed: 2, got: n });
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(DatasetError::BadPeriod(period));
    }
    let mut samples = DMatrix::zeros(n, spec.len());
    for k in 0..n {
        let t = k as f64 * period;
        for (j, (_, g)) in spec.iter().enumerate() {
            samples[(k, j)] = g.value(k, t)?;
        }
    }
    TrajectoryDataset::new(period, spec.iter().map(|(n, _)| n.clone()).collect(), samples)
}

/// The coefficient data matrix: column `k` is `Gamma(alpha(kT))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    dims: Dims,
    data: DMatrix<f64>,
    out_of_box: Vec<usize>,
}

impl CoefficientSeries {
    pub fn from_matrix(dims: Dims, data: DMatrix<f64>) -> Result<Self, DatasetError> {
        if data.nrows() != dims.n_gamma() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} rows for n_gamma = {}",
                data.nrows(),
                dims.n_gamma()
            )));
        }
        Ok(Self {
            dims,
            data,
            out_of_box: Vec::new(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `n_gamma x N`.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Row -> `(i, j)` entry of `L` (0-based).
    pub fn index_map(&self) -> Vec<(usize, usize)> {
        (0..self.dims.n_gamma()).map(|r| self.dims.entry_of_row(r)).collect()
    }

    /// Sample indices whose `alpha` left the declared box.
    pub fn out_of_box_samples(&self) -> &[usize] {
        &self.out_of_box
    }
}

/// Evaluate `Gamma` at every dataset sample.
pub fn build_series(sys: &SystemDescription, data: &TrajectoryDataset) -> Result<CoefficientSeries, DatasetError> {
    if data.n_vars() != sys.n_vars() {
        return Err(DatasetError::DimensionMismatch(format!(
            "dataset has {} variables, system declares {}",
            data.n_vars(),
            sys.n_vars()
        )));
    }
    let dims = sys.dims();
    let n = data.len();
    let mut out = DMatrix::zeros(dims.n_gamma(), n);
    let mut out_of_box = Vec::new();
    let mut alpha = vec![0.0; data.n_vars()];
    for k in 0..n {
        for (j, a) in alpha.iter_mut().enumerate() {
            *a = data.samples()[(k, j)];
        }
        if !sys.box_violations(&alpha).is_empty() {
            out_of_box.push(k);
        }
        let g = sys
            .eval_gamma(&alpha)
            .map_err(|source| DatasetError::Evaluation { sample: k, source })?;
        out.set_column(k, &g);
    }
    if !out_of_box.is_empty() {
        log::warn!(
            "{} of {} samples lie outside the declared scheduling box",
            out_of_box.len(),
            n
        );
    }
    Ok(CoefficientSeries {
        dims,
        data: out,
        out_of_box,
    })
}

/// Divisor used for the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdConvention {
    /// Divide by `N`.
    #[default]
    Population,
    /// Divide by `N - 1`.
    Sample,
}

impl StdConvention {
    pub fn name(self) -> &'static str {
        match self {
            StdConvention::Population => "population",
            StdConvention::Sample => "sample",
        }
    }
}

impl std::str::FromStr for StdConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "population" | "pop" | "n" => Ok(StdConvention::Population),
            "sample" | "n-1" => Ok(StdConvention::Sample),
            _ => Err(format!("unknown std convention `{s}` (population | sample)")),
        }
    }
}

/// Per-row affine map to zero mean / unit deviation; rows whose deviation is
/// negligible are inactive and pass through as constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    means: DVector<f64>,
    stds: DVector<f64>,
    active: Vec<bool>,
    convention: StdConvention,
}

/// Sum of a sorted copy with compensation, so the result does not depend on
/// sample order.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values.iter() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl Normalizer {
    pub fn fit(data: &DMatrix<f64>, eps_sigma: f64, convention: StdConvention) -> Result<Self, DatasetError> {
        let n = data.ncols();
        if n < 2 {
            return Err(DatasetError::TooFewSamples { needed: 2, got: n });
        }
        let rows = data.nrows();
        let mut means = DVector::zeros(rows);
        let mut stds = DVector::zeros(rows);
        let mut active = vec![false; rows];
        let denom = match convention {
            StdConvention::Population => n as f64,
            StdConvention::Sample => (n - 1) as f64,
        };
        let mut buf = vec![0.0; n];
        for r in 0..rows {
            for (b, v) in buf.iter_mut().zip(data.row(r).iter()) {
                *b = *v;
            }
            let mean = order_free_sum(&mut buf) / n as f64;
            for (b, v) in buf.iter_mut().zip(data.row(r).iter()) {
                *b = (v - mean) * (v - mean);
            }
            let std = (order_free_sum(&mut buf) / denom).sqrt();
            means[r] = mean;
            stds[r] = std;
            active[r] = std >= eps_sigma * mean.abs().max(1.0);
        }
        Ok(Self {
            means,
            stds,
            active,
            convention,
        })
    }

    /// Rebuild from stored statistics (e.g. when loading a model).
    pub fn from_parts(means: DVector<f64>, stds: DVector<f64>, active: Vec<bool>, convention: StdConvention) -> Self {
        assert_eq!(means.len(), stds.len());
        assert_eq!(means.len(), active.len());
        Self {
            means,
            stds,
            active,
            convention,
        }
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn stds(&self) -> &DVector<f64> {
        &self.stds
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn convention(&self) -> StdConvention {
        self.convention
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.active[r]).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Diagonal of `W`: `1/std` on active rows, 0 on inactive ones.
    pub fn weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|r| if self.active[r] { 1.0 / self.stds[r] } else { 0.0 }),
        )
    }

    /// Active rows of `data`, centered and scaled.
    pub fn normalize(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>, DatasetError> {
        if data.nrows() != self.len() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} rows, normalizer has {}",
                data.nrows(),
                self.len()
            )));
        }
        let idx = self.active_indices();
        let mut out = DMatrix::zeros(idx.len(), data.ncols());
        for (a, &r) in idx.iter().enumerate() {
            let (m, s) = (self.means[r], self.stds[r]);
            for k in 0..data.ncols() {
                out[(a, k)] = (data[(r, k)] - m) / s;
            }
        }
        Ok(out)
    }

    pub fn normalize_series(&self, series: &CoefficientSeries) -> Result<DMatrix<f64>, DatasetError> {
        self.normalize(series.data())
    }

    pub fn normalize_vector(&self, gamma: &DVector<f64>) -> Result<DVector<f64>, DatasetError> {
        let m = self.normalize(&DMatrix::from_column_slice(gamma.len(), 1, gamma.as_slice()))?;
        Ok(m.column(0).into_owned())
    }

    /// Inverse of [`Normalizer::normalize`]; inactive rows come back as their means.
    pub fn denormalize(&self, normalized: &DMatrix<f64>) -> Result<DMatrix<f64>, DatasetError> {
        let idx = self.active_indices();
        if normalized.nrows() != idx.len() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} rows, normalizer has {} active",
                normalized.nrows(),
                idx.len()
            )));
        }
        let n = normalized.ncols();
        let mut out = DMatrix::zeros(self.len(), n);
        for r in 0..self.len() {
            for k in 0..n {
                out[(r, k)] = self.means[r];
            }
        }
        for (a, &r) in idx.iter().enumerate() {
            let (m, s) = (self.means[r], self.stds[r]);
            for k in 0..n {
                out[(r, k)] = m + s * normalized[(a, k)];
            }
        }
        Ok(out)
    }
}

/// Population-convention normalizer over a coefficient series.
pub fn fit_normalizer(series: &CoefficientSeries, eps_sigma: f64) -> Result<Normalizer, DatasetError> {
    Normalizer::fit(series.data(), eps_sigma, StdConvention::Population)
}

pub fn fit_normalizer_with(
    series: &CoefficientSeries,
    eps_sigma: f64,
    convention: StdConvention,
) -> Result<Normalizer, DatasetError> {
    Normalizer::fit(series.data(), eps_sigma, convention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdsl::parse_system;
    use proptest::prelude::*;

    fn series_of(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows[0].len();
        DMatrix::from_fn(rows.len(), n, |r, k| rows[r][k])
    }

    #[test]
    fn period_is_read_off() {
        let ds = load_trajectories("t,a\n0,1\n0.001,2\n0.002,3\n".as_bytes()).unwrap();
        assert_eq!(ds.period(), 0.001);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.sample(2), vec![3.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            load_trajectories("t,a\n0,1\n0.1,2\n0.3,3\n".as_bytes()),
            Err(DatasetError::NonUniform { line: 4, .. })
        ));
        assert!(matches!(
            load_trajectories("t,a\n0,1\n0.1\n".as_bytes()),
            Err(DatasetError::Ragged { line: 3, .. })
        ));
        assert!(matches!(
            load_trajectories("t,a\n0,1\n0.1,x\n".as_bytes()),
            Err(DatasetError::NonNumeric { field: 2, .. })
        ));
        assert!(matches!(
            load_trajectories("time,a\n0,1\n".as_bytes()),
            Err(DatasetError::Header)
        ));
        assert!(matches!(
            load_trajectories("t,a\n0.1,1\n0,2\n".as_bytes()),
            Err(DatasetError::NotIncreasing)
        ));
    }

    #[test]
    fn generated_csv_round_trips_bit_exactly() {
        let spec = parse_generator_spec(
            "a1 = 2*sin(10*t)^2\na2 = 5*cos(20*t + pi/5)^2\na3 = sin(10*t)*cos(20*t)",
        )
        .unwrap();
        let ds = generate_trajectories(&spec, 1e-3, 3000).unwrap();
        let back = load_trajectories(ds.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back.period(), ds.period());
        assert_eq!(back.names(), ds.names());
        for (a, b) in ds.samples().iter().zip(back.samples().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn generator_values() {
        let spec = parse_generator_spec("a1 = 2*sin(10*t)^2; a2 = 5*cos(20*t+pi/5)^2").unwrap();
        let ds = generate_trajectories(&spec, 1e-3, 2).unwrap();
        assert_eq!(ds.samples()[(0, 0)], 0.0);
        let c = (std::f64::consts::PI / 5.0).cos();
        assert!((ds.samples()[(0, 1)] - 5.0 * c * c).abs() < 1e-14);
        assert!((ds.samples()[(0, 1)] - 3.2725).abs() < 1e-4);
    }

    #[test]
    fn grid_generators() {
        let g = parse_generator("grid(-pi/2, pi/2, 0.01)").unwrap();
        let n = g.natural_count().unwrap();
        assert_eq!(n, 315);
        assert_eq!(g.value(0, 0.0).unwrap(), -std::f64::consts::FRAC_PI_2);
        assert!(g.value(n - 1, 0.0).unwrap() <= std::f64::consts::FRAC_PI_2);
        assert!(g.value(n, 0.0).is_err());

        let c = parse_generator("cgrid(-pi/2, pi/2, 0.01)").unwrap();
        assert_eq!(c.natural_count(), Some(315));
        assert!((c.value(0, 0.0).unwrap() + 1.57).abs() < 1e-14);
        assert_eq!(c.value(157, 0.0).unwrap(), 0.0);
        assert!((c.value(314, 0.0).unwrap() - 1.57).abs() < 1e-14);
    }

    #[test]
    fn sinusoid_and_multisine() {
        let s = parse_generator("sinusoid(2, 3, 0.5, 1)").unwrap();
        assert!((s.value(0, 0.2).unwrap() - (1.0 + 2.0 * (0.6f64 + 0.5).sin())).abs() < 1e-15);
        let m = parse_generator("multisine(1, 1, 0, 0.5, 2, pi/2)").unwrap();
        assert!((m.value(0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(parse_generator("multisine(1, 2)").is_err());
        assert!(parse_generator_spec("a = 1/t").is_ok());
        let ds = generate_trajectories(&parse_generator_spec("a = 1/t").unwrap(), 0.1, 3);
        assert!(matches!(ds, Err(DatasetError::Generator(_))));
    }

    #[test]
    fn series_columns_follow_vectorization() {
        let sys = parse_system(
            "dims: 2 1 1\nvars: x1\nL[1,1] = 2*sin(x1)+1\nL[1,2] = 3*x1+5\nL[2,1] = x1\nL[2,3] = 1\nL[3,1] = sin(x1)\nL[3,2] = 2*x1\n",
        )
        .unwrap();
        let ds = TrajectoryDataset::new(0.01, vec!["x1".into()], DMatrix::zeros(1, 1)).unwrap();
        let s = build_series(&sys, &ds).unwrap();
        assert_eq!(s.data().column(0).as_slice(), &[1.0, 5.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.index_map()[5], (1, 2));
    }

    #[test]
    fn affine_entry_row_matches_per_sample_oracle() {
        let sys = parse_system("dims: 1 1 0\nvars: a1 a2\nL[1,1] = 1+2*a1\nL[1,2] = 3+a2\n").unwrap();
        let spec = parse_generator_spec("a1 = 2*sin(10*t)^2; a2 = 5*cos(20*t+pi/5)^2").unwrap();
        let ds = generate_trajectories(&spec, 1e-3, 3000).unwrap();
        let s = build_series(&sys, &ds).unwrap();
        for k in 0..ds.len() {
            let a1 = 2.0 * (10.0 * k as f64 * 1e-3).sin().powi(2);
            assert!((s.data()[(0, k)] - (1.0 + 2.0 * a1)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_system_gives_identical_columns() {
        let sys = parse_system("dims: 1 1 0\nvars: a\nL[1,1] = -2\nL[1,2] = 4\n").unwrap();
        let ds = TrajectoryDataset::new(1.0, vec!["a".into()], DMatrix::from_fn(10, 1, |k, _| k as f64)).unwrap();
        let s = build_series(&sys, &ds).unwrap();
        for k in 1..10 {
            assert_eq!(s.data().column(k), s.data().column(0));
        }
    }

    #[test]
    fn evaluation_errors_name_the_sample() {
        let sys = parse_system("dims: 1 0 0\nvars: a\nL[1,1] = 1/a\n").unwrap();
        let ds = TrajectoryDataset::new(1.0, vec!["a".into()], DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 2.0])).unwrap();
        match build_series(&sys, &ds) {
            Err(DatasetError::Evaluation { sample, source }) => {
                assert_eq!(sample, 1);
                assert_eq!((source.row, source.col), (1, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn normalizer_basic_cases() {
        let data = series_of(&[&[7.0, 7.0, 7.0, 7.0], &[-1.0, 1.0, -1.0, 1.0]]);
        let nrm = Normalizer::fit(&data, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
        assert_eq!(nrm.means()[0], 7.0);
        assert_eq!(nrm.stds()[0], 0.0);
        assert_eq!(nrm.active_mask(), &[false, true]);
        assert_eq!(nrm.means()[1], 0.0);
        assert_eq!(nrm.stds()[1], 1.0);

        let two = series_of(&[&[1.0, 3.0]]);
        let nrm = Normalizer::fit(&two, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
        let z = nrm.normalize(&two).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 1.0]);
        assert_eq!(nrm.denormalize(&z).unwrap(), two);
        assert_eq!(nrm.denormalize(&DMatrix::zeros(1, 3)).unwrap().as_slice(), &[2.0, 2.0, 2.0]);

        let sample = Normalizer::fit(&two, DEFAULT_EPS_SIGMA, StdConvention::Sample).unwrap();
        assert!((sample.stds()[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn all_constant_series_has_no_active_rows() {
        let data = series_of(&[&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]]);
        let nrm = Normalizer::fit(&data, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
        assert_eq!(nrm.normalize(&data).unwrap().nrows(), 0);
        assert_eq!(nrm.denormalize(&DMatrix::zeros(0, 3)).unwrap(), data);
    }

    #[test]
    fn dimension_checks() {
        let data = series_of(&[&[1.0, 2.0]]);
        let nrm = Normalizer::fit(&data, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
        assert!(nrm.normalize(&DMatrix::zeros(2, 2)).is_err());
        assert!(nrm.denormalize(&DMatrix::zeros(2, 2)).is_err());
        assert!(Normalizer::fit(&DMatrix::zeros(1, 1), 1e-12, StdConvention::Population).is_err());
    }

    #[test]
    fn statistics_brute_force_oracle() {
        let spec = parse_generator_spec("a1 = 2*sin(10*t)^2").unwrap();
        let ds = generate_trajectories(&spec, 1e-3, 3000).unwrap();
        let sys = parse_system("dims: 1 0 0\nvars: a1\nL[1,1] = 1+2*a1\n").unwrap();
        let s = build_series(&sys, &ds).unwrap();
        let nrm = fit_normalizer(&s, DEFAULT_EPS_SIGMA).unwrap();
        let vals: Vec<f64> = (0..3000).map(|k| 1.0 + 4.0 * (10.0 * k as f64 * 1e-3).sin().powi(2)).collect();
        let mean = vals.iter().sum::<f64>() / 3000.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3000.0;
        assert!((nrm.means()[0] - mean).abs() < 1e-12);
        assert!((nrm.stds()[0] - var.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_and_moments(
            rows in 1usize..6,
            cols in 2usize..40,
            seed in proptest::collection::vec(-1e3f64..1e3, 240),
        ) {
            let data = DMatrix::from_fn(rows, cols, |r, k| seed[(r * 40 + k) % seed.len()] * (r as f64 + 1.0));
            let nrm = Normalizer::fit(&data, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
            let z = nrm.normalize(&data).unwrap();
            let back = nrm.denormalize(&z).unwrap();
            let scale = data.amax().max(1.0);
            for (a, b) in data.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            for a in 0..z.nrows() {
                let m = z.row(a).sum() / cols as f64;
                let s = (z.row(a).iter().map(|v| (v - m).powi(2)).sum::<f64>() / cols as f64).sqrt();
                prop_assert!(m.abs() <= 1e-10);
                prop_assert!((s - 1.0).abs() <= 1e-10);
            }
        }

        #[test]
        fn statistics_ignore_column_order(
            cols in 2usize..30,
            vals in proptest::collection::vec(-50.0f64..50.0, 60),
            shift in 0usize..29,
        ) {
            let data = DMatrix::from_fn(2, cols, |r, k| vals[r * 30 + k]);
            let perm = DMatrix::from_fn(2, cols, |r, k| data[(r, (k + shift) % cols)]);
            let a = Normalizer::fit(&data, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
            let b = Normalizer::fit(&perm, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn weighting_identity(vals in proptest::collection::vec(-10.0f64..10.0, 40)) {
            let p = DMatrix::from_fn(2, 10, |r, k| vals[r * 10 + k]);
            let q = DMatrix::from_fn(2, 10, |r, k| vals[20 + r * 10 + k]);
            let nrm = Normalizer::fit(&p, DEFAULT_EPS_SIGMA, StdConvention::Population).unwrap();
            let lhs = nrm.normalize(&p).unwrap() - nrm.normalize(&q).unwrap();
            let w = nrm.weights();
            for (a, &r) in nrm.active_indices().iter().enumerate() {
                for k in 0..10 {
                    let rhs = w[r] * (p[(r, k)] - q[(r, k)]);
                    prop_assert!((lhs[(a, k)] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
                }
            }
        }
    }
}
