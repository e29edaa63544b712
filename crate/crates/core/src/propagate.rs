//! Exact propagation of the linear dynamics over piecewise-constant segments
//! via the matrix exponential.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::model::{Generator, StateVector};

/// Time series of states. `times` is strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a sample; panics if `time` does not increase.
    pub fn push(&mut self, time: f64, state: StateVector) {
        if let Some(&last) = self.times.last() {
            assert!(time > last, "trajectory times must increase ({time} after {last})");
        }
        self.times.push(time);
        self.states.push(state);
    }

    pub fn last(&self) -> Option<(f64, StateVector)> {
        Some((*self.times.last()?, *self.states.last()?))
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((*self.times.first()?, *self.times.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &StateVector)> + '_ {
        self.times.iter().copied().zip(self.states.iter())
    }

    /// Appends `other`, dropping its first sample when it coincides with our
    /// last one.
    pub fn extend_continuing(&mut self, other: Trajectory) {
        for (t, s) in other.times.into_iter().zip(other.states) {
            if self.times.last().is_some_and(|&last| t <= last) {
                continue;
            }
            self.push(t, s);
        }
    }
}

/// Transition matrix `exp(A·dt)` for a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOperator {
    pub dt: f64,
    matrix: Matrix6<f64>,
}

impl StepOperator {
    pub fn new(gen: &Generator, dt: f64) -> Result<Self> {
        if !dt.is_finite() || !gen.is_finite() {
            return Err(Error::Numeric(format!("non-finite generator or step {dt}")));
        }
        if dt < 0.0 {
            return Err(Error::Domain(format!("negative propagation time {dt}")));
        }
        let matrix = if dt == 0.0 { Matrix6::identity() } else { (gen.a * dt).exp() };
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("matrix exponential overflowed for dt = {dt}")));
        }
        Ok(StepOperator { dt, matrix })
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        StateVector::from_vector(&(self.matrix * state.to_vector()))
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.matrix
    }
}

fn check_state(state: &StateVector) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite state {state:?}")))
    }
}

/// `exp(A·dt) x`.
pub fn propagate(state: &StateVector, gen: &Generator, dt: f64) -> Result<StateVector> {
    check_state(state)?;
    let out = StepOperator::new(gen, dt)?.apply(state);
    check_state(&out)?;
    Ok(out)
}

/// Samples the solution at `n_samples` equally spaced times on `[0, dt]`,
/// both ends included.
pub fn propagate_sampled(
    state: &StateVector,
    gen: &Generator,
    dt: f64,
    n_samples: usize,
) -> Result<Trajectory> {
    if n_samples < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n_samples}")));
    }
    check_state(state)?;
    let h = dt / (n_samples - 1) as f64;
    if h == 0.0 {
        return Err(Error::Domain("sampled propagation needs a positive duration".into()));
    }
    let step = StepOperator::new(gen, h)?;
    let mut traj = Trajectory::new();
    let mut x: Vector6<f64> = state.to_vector();
    traj.push(0.0, *state);
    for k in 1..n_samples {
        x = step.matrix * x;
        let t = if k == n_samples - 1 { dt } else { k as f64 * h };
        traj.push(t, StateVector::from_vector(&x));
    }
    let (_, last) = traj.last().expect("nonempty");
    check_state(&last)?;
    Ok(traj)
}
