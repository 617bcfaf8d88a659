//! End-to-end embedding: coefficient series, normalization, SVD, truncation,
//! region, assembly. Errors carry the failing stage and a coarse class used
//! for process exit codes.

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dataset::{build_series, CoefficientSeries, DatasetError, Normalizer, StdConvention, TrajectoryDataset, DEFAULT_EPS_SIGMA};
use crate::fixtures::Fixture;
use crate::geometry::{fit_region, GeometryError, RegionFit, RegionOptions, RegionStrategy};
use crate::model::{assemble, AffineLpvModel, ModelError};
use crate::reduction::{
    accuracy, baseline_scheduling_pca, decompose, reduced_coordinates, suggest_order, truncate, AccuracyReport,
    BaselineResult, Decomposition, ReducedBasis, ReductionError,
};
use crate::simulate::SimError;
use crate::sysdsl::SystemDescription;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad user input or configuration.
    Config,
    /// The data cannot support the requested construction.
    Degenerate,
    /// An iterative or factorization routine failed.
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Degenerate => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub class: ErrorClass,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, class: ErrorClass, message: impl fmt::Display) -> Self {
        Self {
            stage,
            class,
            message: message.to_string(),
        }
    }

    pub fn config(stage: &'static str, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorClass::Config, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }
}

/// Coarse classification of module errors.
pub trait Classify: fmt::Display {
    fn class(&self) -> ErrorClass;

    fn at(&self, stage: &'static str) -> PipelineError {
        PipelineError::new(stage, self.class(), self)
    }
}

impl Classify for DatasetError {
    fn class(&self) -> ErrorClass {
        match self {
            DatasetError::TooFewSamples { .. } => ErrorClass::Degenerate,
            _ => ErrorClass::Config,
        }
    }
}

impl Classify for GeometryError {
    fn class(&self) -> ErrorClass {
        match self {
            GeometryError::Empty | GeometryError::Degenerate { .. } => ErrorClass::Degenerate,
            GeometryError::NonConvergence { .. } => ErrorClass::Numerical,
            GeometryError::Unsupported(_) | GeometryError::DimensionMismatch(_) => ErrorClass::Config,
        }
    }
}

impl Classify for ModelError {
    fn class(&self) -> ErrorClass {
        match self {
            ModelError::SingularRotation(_) | ModelError::Eigen => ErrorClass::Numerical,
            ModelError::TooFewSamples { .. } => ErrorClass::Degenerate,
            _ => ErrorClass::Config,
        }
    }
}

impl Classify for ReductionError {
    fn class(&self) -> ErrorClass {
        match self {
            ReductionError::NoActiveRows => ErrorClass::Degenerate,
            ReductionError::NonFinite | ReductionError::SvdFailed => ErrorClass::Numerical,
            ReductionError::Dataset(e) => e.class(),
            ReductionError::Geometry(e) => e.class(),
            ReductionError::Model(e) => e.class(),
            _ => ErrorClass::Config,
        }
    }
}

impl Classify for SimError {
    fn class(&self) -> ErrorClass {
        match self {
            SimError::Diverged { .. } => ErrorClass::Numerical,
            SimError::Model(e) => e.class(),
            _ => ErrorClass::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderChoice {
    Fixed(usize),
    /// Smallest order capturing this fraction of the squared singular values.
    Energy(f64),
}

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub order: OrderChoice,
    pub region: RegionStrategy,
    pub region_options: RegionOptions,
    pub eps_sigma: f64,
    pub std_convention: StdConvention,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            order: OrderChoice::Energy(0.99),
            region: RegionStrategy::Auto,
            region_options: RegionOptions::default(),
            eps_sigma: DEFAULT_EPS_SIGMA,
            std_convention: StdConvention::Population,
        }
    }
}

impl EmbedOptions {
    /// Settings a fixture's reference figures were produced with.
    pub fn for_fixture(f: &Fixture) -> Self {
        Self {
            order: OrderChoice::Fixed(f.order),
            region: f.region,
            std_convention: f.std_convention,
            ..Self::default()
        }
    }
}

/// Everything computed along the way, for reporting and debugging.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub series: CoefficientSeries,
    pub normalizer: Normalizer,
    pub decomposition: Decomposition,
    pub basis: ReducedBasis,
    /// Reduced coordinates, `n_rho x N`.
    pub rho: DMatrix<f64>,
    pub region_fit: RegionFit,
    pub report: AccuracyReport,
    pub model: AffineLpvModel,
}

/// Series, normalizer and decomposition; shared by the embedding and the
/// order sweep.
fn prepare(
    sys: &SystemDescription,
    data: &TrajectoryDataset,
    opts: &EmbedOptions,
) -> Result<(CoefficientSeries, Normalizer, Decomposition), PipelineError> {
    let series = build_series(sys, data).map_err(|e| e.at("build_series"))?;
    if !series.out_of_box_samples().is_empty() {
        log::warn!(
            "{} samples lie outside the declared scheduling box",
            series.out_of_box_samples().len()
        );
    }
    let nrm = Normalizer::fit(series.data(), opts.eps_sigma, opts.std_convention).map_err(|e| e.at("fit_normalizer"))?;
    if nrm.n_active() == 0 {
        return Err(ReductionError::NoActiveRows.at("fit_normalizer"));
    }
    let z = nrm.normalize(series.data()).map_err(|e| e.at("fit_normalizer"))?;
    let dec = decompose(&z).map_err(|e| e.at("decompose"))?;
    Ok((series, nrm, dec))
}

pub fn embed(sys: &SystemDescription, data: &TrajectoryDataset, opts: &EmbedOptions) -> Result<Embedding, PipelineError> {
    let (series, nrm, dec) = prepare(sys, data, opts)?;
    let n = match opts.order {
        OrderChoice::Fixed(n) => n,
        OrderChoice::Energy(f) => suggest_order(dec.singular_values(), f).map_err(|e| e.at("suggest_order"))?,
    };
    let basis = truncate(&dec, n).map_err(|e| e.at("truncate"))?;
    let rho = reduced_coordinates(&basis, &nrm, &series).map_err(|e| e.at("reduced_coordinates"))?;
    let region_fit = fit_region(&rho, opts.region, &opts.region_options).map_err(|e| e.at("region_from_points"))?;
    let report = accuracy(&basis, &nrm, &series).map_err(|e| e.at("accuracy"))?;
    let mut model = assemble(&basis, &nrm, &region_fit.region, sys.dims()).map_err(|e| e.at("assemble"))?;
    model.record_accuracy(&report);
    let mut prov = model.provenance().clone();
    prov.source_digest = sys.digest();
    model.set_provenance(prov);
    Ok(Embedding {
        series,
        normalizer: nrm,
        decomposition: dec,
        basis,
        rho,
        region_fit,
        report,
        model,
    })
}

/// Accuracy for each order in `orders` from a single decomposition.
pub fn accuracy_sweep(
    sys: &SystemDescription,
    data: &TrajectoryDataset,
    orders: std::ops::RangeInclusive<usize>,
    opts: &EmbedOptions,
) -> Result<Vec<AccuracyReport>, PipelineError> {
    if orders.is_empty() || *orders.start() == 0 {
        return Err(PipelineError::config("accuracy", format!("invalid order range {orders:?}")));
    }
    let (series, nrm, dec) = prepare(sys, data, opts)?;
    orders
        .map(|n| {
            let basis = truncate(&dec, n).map_err(|e| e.at("truncate"))?;
            accuracy(&basis, &nrm, &series).map_err(|e| e.at("accuracy"))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub proposed: Embedding,
    pub baseline: BaselineResult,
}

/// Proposed embedding and the scheduling-PCA baseline at the same order.
pub fn compare(sys: &SystemDescription, data: &TrajectoryDataset, opts: &EmbedOptions) -> Result<Comparison, PipelineError> {
    let proposed = embed(sys, data, opts)?;
    let baseline = baseline_scheduling_pca(data, sys, proposed.basis.n_rho(), opts.eps_sigma, opts.std_convention)
        .map_err(|e| e.at("baseline"))?;
    Ok(Comparison { proposed, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::sysdsl::parse_system;

    #[test]
    fn constant_system_is_degenerate() {
        let sys = parse_system("dims: 1 1 1\nvars: a\nL[1,1] = 2\n").unwrap();
        let data = TrajectoryDataset::new(0.1, vec!["a".into()], DMatrix::from_fn(10, 1, |k, _| k as f64)).unwrap();
        let err = embed(&sys, &data, &EmbedOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(err.stage, "fit_normalizer");
    }

    #[test]
    fn order_zero_is_config_error() {
        let f = fixture("example2").unwrap();
        let mut opts = EmbedOptions::for_fixture(&f);
        opts.order = OrderChoice::Fixed(0);
        let err = embed(&f.system, &f.dataset().unwrap(), &opts).unwrap_err();
        assert_eq!((err.exit_code(), err.stage), (2, "truncate"));
        assert!(accuracy_sweep(&f.system, &f.dataset().unwrap(), 3..=2, &opts).is_err());
    }

    #[test]
    fn energy_choice_on_example2() {
        let f = fixture("example2").unwrap();
        let mut opts = EmbedOptions::for_fixture(&f);
        opts.order = OrderChoice::Energy(0.99);
        let e = embed(&f.system, &f.dataset().unwrap(), &opts).unwrap();
        assert_eq!(e.basis.n_rho(), 1);
        opts.order = OrderChoice::Energy(1.0);
        let e = embed(&f.system, &f.dataset().unwrap(), &opts).unwrap();
        assert_eq!(e.basis.n_rho(), 2);
        assert_eq!(e.model.provenance().source_digest, f.system.digest());
    }

    #[test]
    fn sweep_is_monotone() {
        let f = fixture("example1").unwrap();
        let r = accuracy_sweep(&f.system, &f.dataset().unwrap(), 1..=5, &EmbedOptions::for_fixture(&f)).unwrap();
        for w in r.windows(2) {
            assert!(w[1].eta_frobenius <= w[0].eta_frobenius * (1.0 + 1e-12));
        }
    }
}
