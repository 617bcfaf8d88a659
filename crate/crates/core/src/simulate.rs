//! Fixed-step RK4 simulation of the original system and of the
//! self-scheduled affine model, with run comparison and CSV export.
//!
//! System variables named `x<k>` / `u<k>` are read from the current state and
//! input (1-based); any other variable must be supplied as an exogenous
//! signal of time. Inputs are held constant over each step.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dataset::{DatasetError, GeneratorSpec, SignalGenerator};
use crate::model::{AffineLpvModel, ModelError};
use crate::sysdsl::{Dims, EntryEvalError, SystemDescription};

pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("variable `{0}` is neither a state, an input, nor a supplied exogenous signal")]
    UnboundVariable(String),
    #[error(transparent)]
    Evaluation(#[from] EntryEvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] DatasetError),
    #[error("state diverged at step {step} (|x| = {norm:e})")]
    Diverged {
        step: usize,
        norm: f64,
        /// The run up to and including the last finite step.
        partial: Box<SimulationRun>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub step: f64,
    pub horizon: usize,
    /// `horizon + 1` states, `x(0)` first.
    pub states: Vec<DVector<f64>>,
    /// Outputs at each state sample; the last uses the last held input.
    pub outputs: Vec<DVector<f64>>,
    /// `horizon` held inputs.
    pub inputs: Vec<DVector<f64>>,
    /// Scheduling vector at each state sample (affine-model runs only).
    pub scheduling_trace: Vec<DVector<f64>>,
    /// Steps at which some stage left the scheduling region.
    pub warnings: Vec<usize>,
}

impl SimulationRun {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let nx = self.states.first().map_or(0, |s| s.len());
        let ny = self.outputs.first().map_or(0, |s| s.len());
        let nu = self.inputs.first().map_or(0, |s| s.len());
        let nt = self.scheduling_trace.first().map_or(0, |s| s.len());
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=nx).map(|i| format!("x{i}")));
        header.extend((1..=ny).map(|i| format!("y{i}")));
        header.extend((1..=nu).map(|i| format!("u{i}")));
        header.extend((1..=nt).map(|i| format!("theta{i}")));
        wtr.write_record(&header)?;
        for k in 0..self.states.len() {
            let mut row = vec![format!("{}", self.time(k))];
            row.extend(self.states[k].iter().map(|v| format!("{v}")));
            if let Some(y) = self.outputs.get(k) {
                row.extend(y.iter().map(|v| format!("{v}")));
            }
            if let Some(u) = self.inputs.get(k.min(self.inputs.len().saturating_sub(1))) {
                row.extend(u.iter().map(|v| format!("{v}")));
            }
            if let Some(th) = self.scheduling_trace.get(k) {
                row.extend(th.iter().map(|v| format!("{v}")));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(DatasetError::Io)?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        self.write_csv(std::fs::File::create(path).map_err(DatasetError::Io)?)
    }
}

/// External input, held over each step.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InputSignal {
    #[default]
    Zero,
    Constant(DVector<f64>),
    /// One row per step (`steps x n_u`).
    Table(DMatrix<f64>),
    /// One generator per input, sampled at `t = k h`.
    Generated(GeneratorSpec),
}

impl InputSignal {
    pub fn value(&self, k: usize, t: f64, nu: usize) -> Result<DVector<f64>, SimError> {
        let v = match self {
            InputSignal::Zero => DVector::zeros(nu),
            InputSignal::Constant(v) => v.clone(),
            InputSignal::Table(m) => {
                if k >= m.nrows() {
                    return Err(SimError::DimensionMismatch(format!(
                        "input table has {} rows, step {k} requested",
                        m.nrows()
                    )));
                }
                m.row(k).transpose()
            }
            InputSignal::Generated(spec) => DVector::from_vec(
                spec.iter()
                    .map(|(_, g)| g.value(k, t))
                    .collect::<Result<Vec<f64>, _>>()?,
            ),
        };
        if v.len() != nu {
            return Err(SimError::DimensionMismatch(format!("input has {} entries, system has {nu}", v.len())));
        }
        Ok(v)
    }
}

/// Linear state feedback `u = u_ext + F x`, evaluated at every stage.
#[derive(Debug, Clone, Default)]
pub enum Feedback {
    #[default]
    None,
    Constant(DMatrix<f64>),
    /// One gain per vertex of the model's scheduling box (ordering of
    /// `SchedulingRegion::vertices`), blended multilinearly in `theta`
    /// (clamped to the box). `theta` comes from the model's map.
    Vertex {
        model: Box<AffineLpvModel>,
        gains: Vec<DMatrix<f64>>,
    },
}

/// Multilinear weights of `theta` over the box vertices.
pub fn vertex_weights(lower: &DVector<f64>, upper: &DVector<f64>, theta: &DVector<f64>) -> Vec<f64> {
    let d = lower.len();
    (0..1usize << d)
        .map(|k| {
            (0..d)
                .map(|i| {
                    let w = upper[i] - lower[i];
                    if !(w > 0.0) {
                        return 0.5;
                    }
                    let s = ((theta[i] - lower[i]) / w).clamp(0.0, 1.0);
                    if k >> i & 1 == 1 {
                        1.0 - s
                    } else {
                        s
                    }
                })
                .product()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub step: f64,
    pub steps: usize,
    pub divergence_cap: f64,
    /// Signals for system variables that are not states or inputs.
    pub exogenous: GeneratorSpec,
    pub feedback: Feedback,
}

impl SimOptions {
    pub fn new(step: f64, steps: usize) -> Self {
        Self {
            step,
            steps,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
            exogenous: Vec::new(),
            feedback: Feedback::None,
        }
    }
}

#[derive(Debug, Clone)]
enum Slot {
    State(usize),
    Input(usize),
    Signal(SignalGenerator),
}

fn bind_variables(sys: &SystemDescription, exo: &GeneratorSpec) -> Result<Vec<Slot>, SimError> {
    let Dims { nx, nu, .. } = sys.dims();
    let index = |name: &str, prefix: char, count: usize| -> Option<usize> {
        let k: usize = name.strip_prefix(prefix)?.parse().ok()?;
        (1..=count).contains(&k).then_some(k - 1)
    };
    sys.variable_names()
        .iter()
        .map(|name| {
            if let Some((_, g)) = exo.iter().find(|(n, _)| n == name) {
                Ok(Slot::Signal(g.clone()))
            } else if let Some(i) = index(name, 'x', nx) {
                Ok(Slot::State(i))
            } else if let Some(i) = index(name, 'u', nu) {
                Ok(Slot::Input(i))
            } else {
                Err(SimError::UnboundVariable(name.clone()))
            }
        })
        .collect()
}

fn alpha_of(slots: &[Slot], x: &DVector<f64>, u: &DVector<f64>, k: usize, t: f64) -> Result<Vec<f64>, SimError> {
    slots
        .iter()
        .map(|s| match s {
            Slot::State(i) => Ok(x[*i]),
            Slot::Input(i) => Ok(u[*i]),
            Slot::Signal(g) => Ok(g.value(k, t)?),
        })
        .collect()
}

/// Where the coefficient matrix comes from at each stage.
enum Vector<'a> {
    Original,
    Affine(&'a AffineLpvModel),
}

struct Stage {
    l: DMatrix<f64>,
    u: DVector<f64>,
    theta: Option<DVector<f64>>,
    outside: bool,
}

struct Runner<'a> {
    sys: &'a SystemDescription,
    slots: Vec<Slot>,
    field: Vector<'a>,
    opts: &'a SimOptions,
}

impl Runner<'_> {
    fn feedback(&self, x: &DVector<f64>, u_ext: &DVector<f64>, k: usize, t: f64) -> Result<DVector<f64>, SimError> {
        match &self.opts.feedback {
            Feedback::None => Ok(u_ext.clone()),
            Feedback::Constant(f) => Ok(u_ext + f * x),
            Feedback::Vertex { model, gains } => {
                let alpha = alpha_of(&self.slots, x, u_ext, k, t)?;
                let th = model.schedule_alpha(self.sys, &alpha)?;
                let r = model.region();
                let w = vertex_weights(&r.lower, &r.upper, &th);
                let mut f = DMatrix::zeros(u_ext.len(), x.len());
                for (wk, g) in w.iter().zip(gains) {
                    f += g * *wk;
                }
                Ok(u_ext + f * x)
            }
        }
    }

    fn stage(&self, x: &DVector<f64>, u_ext: &DVector<f64>, k: usize, t: f64) -> Result<Stage, SimError> {
        let u = self.feedback(x, u_ext, k, t)?;
        let alpha = alpha_of(&self.slots, x, &u, k, t)?;
        Ok(match self.field {
            Vector::Original => Stage {
                l: self.sys.eval_matrix(&alpha)?,
                u,
                theta: None,
                outside: false,
            },
            Vector::Affine(model) => {
                let th = model.schedule_alpha(self.sys, &alpha)?;
                let outside = !model.region().contains(&th, 1e-9);
                Stage {
                    l: model.matrix_at(&th)?,
                    u,
                    theta: Some(th),
                    outside,
                }
            }
        })
    }

    fn derivative(&self, x: &DVector<f64>, u_ext: &DVector<f64>, k: usize, t: f64) -> Result<(DVector<f64>, bool), SimError> {
        let nx = x.len();
        let s = self.stage(x, u_ext, k, t)?;
        let xu = DVector::from_iterator(nx + s.u.len(), x.iter().chain(s.u.iter()).copied());
        Ok(((s.l.rows(0, nx) * xu), s.outside))
    }

    fn sample(&self, x: &DVector<f64>, u_ext: &DVector<f64>, k: usize, t: f64) -> Result<(DVector<f64>, Option<DVector<f64>>), SimError> {
        let nx = x.len();
        let s = self.stage(x, u_ext, k, t)?;
        let xu = DVector::from_iterator(nx + s.u.len(), x.iter().chain(s.u.iter()).copied());
        Ok((s.l.rows(nx, s.l.nrows() - nx) * xu, s.theta))
    }

    fn run(&self, x0: &DVector<f64>, input: &InputSignal) -> Result<SimulationRun, SimError> {
        let h = self.opts.step;
        if !(h > 0.0 && h.is_finite()) {
            return Err(SimError::BadStep(h));
        }
        let Dims { nx, nu, .. } = self.sys.dims();
        if x0.len() != nx {
            return Err(SimError::DimensionMismatch(format!("x0 has {} entries, system has {nx}", x0.len())));
        }
        let steps = self.opts.steps;
        let mut run = SimulationRun {
            step: h,
            horizon: steps,
            states: vec![x0.clone()],
            outputs: Vec::with_capacity(steps + 1),
            inputs: Vec::with_capacity(steps),
            scheduling_trace: Vec::new(),
            warnings: Vec::new(),
        };
        let mut x = x0.clone();
        let mut u_last = DVector::zeros(nu);
        for k in 0..steps {
            let t = k as f64 * h;
            let u = input.value(k, t, nu)?;
            let (y, th) = self.sample(&x, &u, k, t)?;
            run.outputs.push(y);
            run.scheduling_trace.extend(th);

            let (k1, o1) = self.derivative(&x, &u, k, t)?;
            let (k2, o2) = self.derivative(&(&x + &k1 * (0.5 * h)), &u, k, t + 0.5 * h)?;
            let (k3, o3) = self.derivative(&(&x + &k2 * (0.5 * h)), &u, k, t + 0.5 * h)?;
            let (k4, o4) = self.derivative(&(&x + &k3 * h), &u, k, t + h)?;
            if o1 || o2 || o3 || o4 {
                run.warnings.push(k);
            }
            let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            run.inputs.push(u.clone());
            u_last = u;
            let norm = next.amax();
            if !next.iter().all(|v| v.is_finite()) || norm > self.opts.divergence_cap {
                run.horizon = k;
                run.inputs.pop();
                return Err(SimError::Diverged {
                    step: k + 1,
                    norm,
                    partial: Box::new(run),
                });
            }
            x = next;
            run.states.push(x.clone());
        }
        let t = steps as f64 * h;
        let (y, th) = self.sample(&x, &u_last, steps, t)?;
        run.outputs.push(y);
        run.scheduling_trace.extend(th);
        if !run.warnings.is_empty() {
            log::warn!("scheduling left the region at {} of {} steps", run.warnings.len(), steps);
        }
        Ok(run)
    }
}

/// Integrates `[xdot; y] = L(alpha) [x; u]`.
pub fn simulate_nl(
    sys: &SystemDescription,
    x0: &DVector<f64>,
    input: &InputSignal,
    opts: &SimOptions,
) -> Result<SimulationRun, SimError> {
    Runner {
        sys,
        slots: bind_variables(sys, &opts.exogenous)?,
        field: Vector::Original,
        opts,
    }
    .run(x0, input)
}

/// Integrates the affine model with `theta` recomputed from the current
/// state and input at every stage.
pub fn simulate_lpv(
    model: &AffineLpvModel,
    sys: &SystemDescription,
    x0: &DVector<f64>,
    input: &InputSignal,
    opts: &SimOptions,
) -> Result<SimulationRun, SimError> {
    if model.dims() != sys.dims() {
        return Err(SimError::DimensionMismatch(format!(
            "model dims {:?} differ from system dims {:?}",
            model.dims(),
            sys.dims()
        )));
    }
    Runner {
        sys,
        slots: bind_variables(sys, &opts.exogenous)?,
        field: Vector::Affine(model),
        opts,
    }
    .run(x0, input)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunComparison {
    pub state_rmse: Vec<f64>,
    pub output_rmse: Vec<f64>,
}

impl RunComparison {
    pub fn max(&self) -> f64 {
        self.state_rmse.iter().chain(&self.output_rmse).fold(0.0, |a, b| a.max(*b))
    }
}

fn channel_rmse(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<f64> {
    let ch = a.first().map_or(0, |v| v.len());
    let n = a.len().max(1) as f64;
    (0..ch)
        .map(|i| (a.iter().zip(b).map(|(p, q)| (p[i] - q[i]).powi(2)).sum::<f64>() / n).sqrt())
        .collect()
}

pub fn compare_runs(a: &SimulationRun, b: &SimulationRun) -> Result<RunComparison, SimError> {
    let width = |v: &[DVector<f64>]| v.first().map_or(0, |x| x.len());
    if a.step != b.step
        || a.horizon != b.horizon
        || a.states.len() != b.states.len()
        || a.outputs.len() != b.outputs.len()
        || width(&a.states) != width(&b.states)
        || width(&a.outputs) != width(&b.outputs)
    {
        return Err(SimError::DimensionMismatch("runs differ in step, horizon or channel count".into()));
    }
    Ok(RunComparison {
        state_rmse: channel_rmse(&a.states, &b.states),
        output_rmse: channel_rmse(&a.outputs, &b.outputs),
    })
}
