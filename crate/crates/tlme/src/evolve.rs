//! State propagation through the prepare / pulse / decay protocol.

use crate::diagrams::STable;
use crate::generator::{assemble_generator, drive_liouvillian, Generator, Scheme};
use crate::linalg::{
    hermitian_eigenvalues2, solve4, trace_row, unvectorize, vectorize, Mat2, Mat4, Vec4, C64, ONE,
    ZERO,
};
use crate::{bath::BathSpec, Error, Result};

/// Qubit state: 2x2 Hermitian, unit trace, near-positive. Positivity is
/// checked only loosely; the higher-order schemes do not guarantee it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    m: Mat2,
}

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_FLOOR: f64 = -1e-8;

impl DensityMatrix {
    pub fn new(m: Mat2) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITICITY_TOL {
            return Err(Error::StateInvariant(format!("hermiticity defect {herm:.3e}")));
        }
        let tr = (m[(0, 0)] + m[(1, 1)]).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::StateInvariant(format!("trace {tr} != 1")));
        }
        let (_, lo) = hermitian_eigenvalues2(&m);
        if lo < POSITIVITY_FLOOR {
            return Err(Error::StateInvariant(format!("eigenvalue {lo:.3e} below floor")));
        }
        Ok(DensityMatrix { m })
    }

    pub fn ground() -> Self {
        DensityMatrix { m: Mat2::new(ZERO, ZERO, ZERO, ONE) }
    }

    pub fn excited() -> Self {
        DensityMatrix { m: Mat2::new(ONE, ZERO, ZERO, ZERO) }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    pub fn vec(&self) -> Vec4 {
        vectorize(&self.m)
    }

    pub fn p_excited(&self) -> f64 {
        self.m[(0, 0)].re
    }

    pub fn coherence(&self) -> C64 {
        self.m[(0, 1)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues2(&self.m).1
    }
}

/// Rectangular pulse: height `g_d`, length `pi / (2 g_d)`, ending at
/// `t_p`. The generator rotates the Bloch vector by `2 g_d` per unit
/// time, so the pulse inverts the populations.
#[derive(Clone, Copy, Debug)]
pub struct PulseProtocol {
    pub g_d: f64,
    pub t_p: f64,
}

impl PulseProtocol {
    pub fn new(g_d: f64, t_p: f64) -> Result<Self> {
        if !(g_d > 0.0) {
            return Err(Error::InvalidArg(format!("pulse strength must be positive, got {g_d}")));
        }
        Ok(PulseProtocol { g_d, t_p })
    }

    pub fn duration(&self) -> f64 {
        std::f64::consts::PI / (2.0 * self.g_d)
    }
}

/// A propagated time series on a uniform grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub label: String,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Mat2>,
    /// `|tr - 1|` right before any renormalization, per grid point.
    pub trace_drift: Vec<f64>,
    /// Largest drift seen anywhere along the run.
    pub max_trace_drift: f64,
    /// Number of renormalizations applied (drift beyond 1e-12).
    pub renormalizations: usize,
    /// Most negative eigenvalue seen (positivity is logged, not fixed).
    pub min_eigenvalue: f64,
}

impl Trajectory {
    pub fn state(&self, idx: usize) -> DensityMatrix {
        DensityMatrix { m: self.states[idx] }
    }

    pub fn last_state(&self) -> DensityMatrix {
        DensityMatrix { m: *self.states.last().unwrap() }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Shifts the time column so that zero sits at `t_shift`.
    pub fn shift_times(&mut self, t_shift: f64) {
        for t in &mut self.times {
            *t -= t_shift;
        }
    }
}

pub const RENORM_THRESHOLD: f64 = 1e-12;
const ABORT_TRACE_DRIFT: f64 = 1e-6;
const ABORT_HERMITICITY: f64 = 1e-8;

fn rk4_step(g: &Mat4, v: &Vec4, dt: f64) -> Vec4 {
    let k1 = g * v;
    let k2 = g * (v + k1 * C64::new(0.5 * dt, 0.0));
    let k3 = g * (v + k2 * C64::new(0.5 * dt, 0.0));
    let k4 = g * (v + k3 * C64::new(dt, 0.0));
    v + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

/// Fixed-step fourth-order propagation of `d vec(rho)/dt = G vec(rho)`
/// over piecewise-constant segments. Segment durations must be integer
/// multiples of `dt` (grid-aligned edges).
pub fn propagate(
    initial: &DensityMatrix,
    segments: &[(Mat4, f64)],
    dt: f64,
    label: &str,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArg(format!("dt must be positive, got {dt}")));
    }
    let mut steps_per_segment = Vec::with_capacity(segments.len());
    for (idx, (_, duration)) in segments.iter().enumerate() {
        let n = (duration / dt).round();
        if n < 0.0 || (duration - n * dt).abs() > 1e-6 * dt {
            return Err(Error::InvalidArg(format!(
                "segment {idx} duration {duration} is not a multiple of dt={dt}"
            )));
        }
        steps_per_segment.push(n as usize);
    }

    let total_steps: usize = steps_per_segment.iter().sum();
    let mut traj = Trajectory {
        label: label.to_string(),
        dt,
        times: Vec::with_capacity(total_steps + 1),
        states: Vec::with_capacity(total_steps + 1),
        trace_drift: Vec::with_capacity(total_steps + 1),
        max_trace_drift: 0.0,
        renormalizations: 0,
        min_eigenvalue: initial.min_eigenvalue(),
    };
    let mut v = initial.vec();
    let mut t = 0.0;
    traj.times.push(t);
    traj.states.push(unvectorize(&v));
    traj.trace_drift.push(((trace_row() * v)[0].re - 1.0).abs());

    for ((g, _), &n_steps) in segments.iter().zip(&steps_per_segment) {
        for _ in 0..n_steps {
            v = rk4_step(g, &v, dt);
            t += dt;
            let tr = (trace_row() * v)[0];
            let drift = (tr.re - 1.0).hypot(tr.im);
            if !drift.is_finite() || drift > ABORT_TRACE_DRIFT {
                return Err(Error::StateInvariant(format!(
                    "trace drift {drift:.3e} at t={t:.4} (label {label})"
                )));
            }
            traj.max_trace_drift = traj.max_trace_drift.max(drift);
            if drift > RENORM_THRESHOLD {
                v /= tr;
                traj.renormalizations += 1;
            }
            let m = unvectorize(&v);
            let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if herm > ABORT_HERMITICITY {
                return Err(Error::StateInvariant(format!(
                    "hermiticity defect {herm:.3e} at t={t:.4} (label {label})"
                )));
            }
            traj.min_eigenvalue = traj.min_eigenvalue.min(hermitian_eigenvalues2(&m).1);
            traj.times.push(t);
            traj.states.push(m);
            traj.trace_drift.push(drift);
        }
    }
    Ok(traj)
}

/// Trace-one null state of a generator: the steady state of free decay.
pub fn prepare_equilibrium(generator: &Mat4) -> Result<DensityMatrix> {
    // Replace the first row by the trace functional; the remaining rows
    // pin the null direction because the generator annihilates the trace.
    let mut m = *generator;
    for c in 0..4 {
        m[(0, c)] = trace_row()[c];
    }
    let rhs = Vec4::new(ONE, ZERO, ZERO, ZERO);
    let v = solve4(&m, &rhs).ok_or(Error::DegenerateSteadyState)?;
    let residual = (generator * v).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = crate::linalg::max_abs(generator).max(1e-300);
    if residual > 1e-9 * scale {
        return Err(Error::DegenerateSteadyState);
    }
    let mut rho = unvectorize(&v);
    // Exact symmetrization of rounding noise.
    rho = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let tr = rho[(0, 0)] + rho[(1, 1)];
    rho /= tr;
    DensityMatrix::new(rho)
}

/// Configuration of the prepare / pulse / decay experiment.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentConfig {
    pub g_c: f64,
    pub g_d: f64,
    pub bath: BathSpec,
    pub cutoff: usize,
    pub markov_order: usize,
    pub t_max: f64,
    pub dt: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            g_c: 0.2,
            g_d: 0.2,
            bath: BathSpec::default(),
            cutoff: 5,
            markov_order: 2,
            t_max: 50.0,
            dt: 0.005,
        }
    }
}

/// Result of one experiment: the full-scheme trajectory and the two
/// approximate decays started from the shared pulse-end state.
pub struct ExperimentResult {
    pub nbm: Trajectory,
    pub bm: Trajectory,
    pub born: Trajectory,
    /// The shared state at the end of the pulse (time zero of all series).
    pub initial: DensityMatrix,
    pub equilibrium: DensityMatrix,
    pub generators: ExperimentGenerators,
}

pub struct ExperimentGenerators {
    pub nbm_free: Generator,
    pub nbm_driven: Generator,
    pub bm_free: Generator,
    pub born_free: Generator,
}

/// Runs the protocol: relax to equilibrium, invert with the resonant
/// pulse under the full scheme, then decay under all three schemes from
/// the same pulse-end state. All returned time series start at the end
/// of the pulse.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let table = STable::build(config.g_c, config.bath)?;
    let full = Scheme::Full { cutoff: config.cutoff };
    let no_drive = drive_liouvillian(config.g_d, false)?;
    let with_drive = drive_liouvillian(config.g_d, true)?;

    let nbm_free = assemble_generator(&table, full, &no_drive)?;
    let nbm_driven = assemble_generator(&table, full, &with_drive)?;
    let bm_free = assemble_generator(&table, Scheme::BornMarkov, &no_drive)?;
    let born_free = assemble_generator(
        &table,
        Scheme::BornOnly { markov_order: config.markov_order },
        &no_drive,
    )?;

    let equilibrium = prepare_equilibrium(&nbm_free.matrix)?;

    // Pulse length rounded to the grid; the residual rotation error is
    // second order in dt.
    let protocol = PulseProtocol::new(config.g_d, 0.0)?;
    let pulse_steps = (protocol.duration() / config.dt).round().max(1.0);
    let pulse_duration = pulse_steps * config.dt;

    let mut nbm = propagate(
        &equilibrium,
        &[(nbm_driven.matrix, pulse_duration), (nbm_free.matrix, config.t_max)],
        config.dt,
        "nbm",
    )?;
    nbm.shift_times(pulse_duration);
    let pulse_end_idx = pulse_steps as usize;
    let initial = nbm.state(pulse_end_idx);
    // Export only from the pulse end onwards: all series share time zero.
    let decay = Trajectory {
        label: nbm.label.clone(),
        dt: nbm.dt,
        times: nbm.times[pulse_end_idx..].to_vec(),
        states: nbm.states[pulse_end_idx..].to_vec(),
        trace_drift: nbm.trace_drift[pulse_end_idx..].to_vec(),
        max_trace_drift: nbm.max_trace_drift,
        renormalizations: nbm.renormalizations,
        min_eigenvalue: nbm.min_eigenvalue,
    };

    let bm = propagate(&initial, &[(bm_free.matrix, config.t_max)], config.dt, "bm")?;
    let born = propagate(&initial, &[(born_free.matrix, config.t_max)], config.dt, "born")?;

    Ok(ExperimentResult {
        nbm: decay,
        bm,
        born,
        initial,
        equilibrium,
        generators: ExperimentGenerators { nbm_free, nbm_driven, bm_free, born_free },
    })
}
