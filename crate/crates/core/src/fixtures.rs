//! Built-in benchmark systems with their default trajectories and the
//! reference figures they are expected to reproduce.

use thiserror::Error;

use crate::dataset::{
    generate_trajectories, natural_count, parse_generator_spec, DatasetError, GeneratorSpec, StdConvention,
    TrajectoryDataset,
};
use crate::geometry::RegionStrategy;
use crate::sysdsl::{parse_system, SystemDescription};

pub const FIXTURE_NAMES: [&str; 2] = ["example1", "example2"];

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("unknown fixture `{0}` (known: example1, example2)")]
    Unknown(String),
}

/// A published reference figure.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedValue {
    pub name: &'static str,
    pub value: f64,
    pub citation: &'static str,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub system: SystemDescription,
    pub trajectories: GeneratorSpec,
    pub period: f64,
    pub samples: usize,
    /// Standard-deviation estimator the reference figures were produced with.
    pub std_convention: StdConvention,
    pub region: RegionStrategy,
    pub order: usize,
    pub published_values: Vec<PublishedValue>,
}

impl Fixture {
    pub fn dataset(&self) -> Result<TrajectoryDataset, DatasetError> {
        generate_trajectories(&self.trajectories, self.period, self.samples)
    }

    pub fn published(&self, name: &str) -> Option<f64> {
        self.published_values.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

const EXAMPLE1_SYSTEM: &str = "\
# two states, one input, one output; affine in three scheduling signals
dims: 2 1 1
vars: a1 a2 a3
bounds: a1 0 2
bounds: a2 0 5
bounds: a3 -1 1
L[1,1] = 1 + 2*a1
L[1,2] = 3 + a2
L[1,3] = 3*a3 + 7*a2
L[2,1] = 2 + 3*a3
L[2,2] = 20*a1 + 5*a2
L[2,3] = 1
L[3,1] = a1
";

const EXAMPLE1_TRAJECTORIES: &str = "\
a1 = 2*sin(10*t)^2
a2 = 5*cos(20*t + pi/5)^2
a3 = sin(10*t)*cos(20*t)
";

const EXAMPLE2_SYSTEM: &str = "\
# nonlinear in x1 only
dims: 2 1 1
vars: x1
bounds: x1 -pi/2 pi/2
L[1,1] = 2*sin(x1) + 1
L[1,2] = 3*x1 + 5
L[2,1] = x1
L[2,3] = 1
L[3,1] = sin(x1)
L[3,2] = 2*x1
";

const EXAMPLE2_TRAJECTORIES: &str = "x1 = cgrid(-pi/2, pi/2, 0.01)";

const EX1: &str = "reference results, example 1";
const EX2: &str = "reference results, example 2";

fn pv(name: &'static str, value: f64, citation: &'static str) -> PublishedValue {
    PublishedValue { name, value, citation }
}

fn example1() -> Fixture {
    Fixture {
        name: "example1",
        system: parse_system(EXAMPLE1_SYSTEM).expect("built-in system parses"),
        trajectories: parse_generator_spec(EXAMPLE1_TRAJECTORIES).expect("built-in spec parses"),
        period: 1e-3,
        samples: 3000,
        std_convention: StdConvention::Sample,
        region: RegionStrategy::Box,
        order: 2,
        published_values: vec![
            pv("eta_proposed", 54.4705, EX1),
            pv("eta_baseline", 68.2811, EX1),
            pv("area_rho", 31.2870, EX1),
            pv("area_theta", 23.2186, EX1),
            pv("theta1_lower", -2.2798, EX1),
            pv("theta1_upper", 2.6174, EX1),
            pv("theta2_lower", -2.3341, EX1),
            pv("theta2_upper", 2.4071, EX1),
            pv("centroid1", 0.1688, EX1),
            pv("centroid2", 0.0365, EX1),
        ],
    }
}

fn example2() -> Fixture {
    let trajectories = parse_generator_spec(EXAMPLE2_TRAJECTORIES).expect("built-in spec parses");
    let samples = natural_count(&trajectories).expect("grid is bounded");
    Fixture {
        name: "example2",
        system: parse_system(EXAMPLE2_SYSTEM).expect("built-in system parses"),
        trajectories,
        period: 0.01,
        samples,
        std_convention: StdConvention::Sample,
        region: RegionStrategy::AxisAligned,
        order: 2,
        published_values: vec![
            pv("sigma1", 39.5533, EX2),
            pv("sigma2", 2.3526, EX2),
            // Lhat(theta): rows of (theta1, theta2) coefficients per entry
            pv("lhat11_theta1", 0.6337, EX2),
            pv("lhat11_theta2", 0.7773, EX2),
            pv("lhat12_theta1", 1.2226, EX2),
            pv("lhat12_theta2", -0.9968, EX2),
            pv("lhat21_theta1", 0.4075, EX2),
            pv("lhat21_theta2", -0.3323, EX2),
            pv("lhat31_theta1", 0.3169, EX2),
            pv("lhat31_theta2", 0.3887, EX2),
            pv("lhat32_theta1", 0.8151, EX2),
            pv("lhat32_theta2", -0.6645, EX2),
            pv("lhat11_const", 1.0, EX2),
            pv("lhat12_const", 5.0, EX2),
            // theta = K Gamma + k0 with Gamma = (L11, L12, L21, L31, L32)
            pv("k_theta1_l11", 0.3150, EX2),
            pv("k_theta1_l12", 0.1638, EX2),
            pv("k_theta1_l21", 0.4913, EX2),
            pv("k_theta1_l31", 0.6301, EX2),
            pv("k_theta1_l32", 0.2457, EX2),
            pv("k_theta2_l11", 0.3864, EX2),
            pv("k_theta2_l12", -0.1335, EX2),
            pv("k_theta2_l21", -0.4006, EX2),
            pv("k_theta2_l31", 0.7728, EX2),
            pv("k_theta2_l32", -0.2003, EX2),
            pv("k0_theta1", -1.1339, EX2),
            pv("k0_theta2", 0.2812, EX2),
            // mu(x) = a sin(x1) + b x1
            pv("mu1_sin", 1.2601, EX2),
            pv("mu1_x", 1.4740, EX2),
            pv("mu2_sin", 1.5456, EX2),
            pv("mu2_x", -1.2017, EX2),
        ],
    }
}

pub fn fixture(name: &str) -> Result<Fixture, FixtureError> {
    match name {
        "example1" => Ok(example1()),
        "example2" => Ok(example2()),
        _ => Err(FixtureError::Unknown(name.to_string())),
    }
}
