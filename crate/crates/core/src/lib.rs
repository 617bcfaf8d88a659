//! Affine LPV embedding of nonlinear state-space models.
//!
//! The coefficient matrix `L(alpha)` of `[xdot; y] = L(alpha) [x; u]` is
//! sampled along scheduling trajectories, normalized and reduced by a
//! truncated SVD. The reduced coordinates are then enclosed in a minimal box
//! (or ellipsoid) and rotated to an axis-aligned scheduling region. The
//! result is an affine model `M0 + sum theta_i M_i` together with the affine
//! scheduling map `theta = K Gamma(alpha) + k0`.

pub mod dataset;
pub mod fixtures;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod reduction;
pub mod simulate;
pub mod sysdsl;

pub use dataset::{
    build_series, fit_normalizer, fit_normalizer_with, generate_trajectories, load_trajectories,
    parse_generator_spec, CoefficientSeries, DatasetError, GeneratorSpec, Normalizer, SignalGenerator,
    StdConvention, TrajectoryDataset, DEFAULT_EPS_SIGMA,
};
pub use fixtures::{fixture, Fixture, FixtureError, PublishedValue, FIXTURE_NAMES};
pub use geometry::{
    fit_region, region_from_points, GeometryError, OrientedBox, RegionFit, RegionMethod, RegionOptions,
    RegionStrategy, SchedulingRegion,
};
pub use model::{
    assemble, default_frequency_grid, load_model, save_model, AffineLpvModel, FrequencyResponse, MapSource,
    ModelError, Provenance, SchedulingMap,
};
pub use pipeline::{accuracy_sweep, compare, embed, Classify, EmbedOptions, Embedding, ErrorClass, OrderChoice, PipelineError};
pub use reduction::{
    accuracy, baseline_scheduling_pca, decompose, reduced_coordinates, suggest_order, truncate, AccuracyReport,
    BaselineResult, Decomposition, ReducedBasis, ReductionError,
};
pub use simulate::{compare_runs, simulate_lpv, simulate_nl, Feedback, InputSignal, SimError, SimOptions, SimulationRun};
pub use sysdsl::{parse_system, Dims, SysError, SystemDescription};
