//! Reference integrator: Dormand-Prince 5(4) with adaptive step size.
//!
//! Deliberately independent of [`crate::propagate`]; only the generator
//! matrix is shared. Used to cross-check the matrix-exponential path.

use crate::error::{Error, Result};
use crate::model::{Generator, StateVector};

type State = [f64; 6];

// Autonomous system: the node coefficients c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// 5th-order weights (also row 7 of the tableau, FSAL)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// difference between 5th- and 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: usize = 50_000_000;

fn rhs(gen: &Generator, x: &State) -> State {
    let mut out = [0.0; 6];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += gen.a[(i, j)] * xj;
        }
        *o = acc;
    }
    out
}

fn axpy(x: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *x;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Integrates `dx/dt = A x` over `[0, dt]`.
///
/// The error estimate of each step is held below `tol·(h/dt)` (mixed
/// absolute/relative per component), so the accumulated error over the
/// whole interval stays of order `tol`.
pub fn oracle_integrate(
    state: &StateVector,
    gen: &Generator,
    dt: f64,
    tol: f64,
) -> Result<StateVector> {
    if !(1e-13..=1e-4).contains(&tol) {
        return Err(Error::Domain(format!("tolerance {tol} outside [1e-13, 1e-4]")));
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::Domain(format!("invalid integration time {dt}")));
    }
    if !state.is_finite() || !gen.is_finite() {
        return Err(Error::Numeric("non-finite oracle input".into()));
    }
    let mut x = state.to_array();
    if dt == 0.0 {
        return Ok(*state);
    }
    let scale = gen.max_abs_entry();
    if scale == 0.0 {
        return Ok(*state);
    }

    let mut t = 0.0;
    let mut h = (0.01 / scale).min(dt);
    let mut k1 = rhs(gen, &x);
    let mut steps = 0usize;
    while t < dt {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Divergence(format!("exceeded {MAX_STEPS} steps at t = {t}")));
        }
        let last = t + h >= dt;
        if last {
            h = dt - t;
        }
        let k2 = rhs(gen, &axpy(&x, h, &[(A21, &k1)]));
        let k3 = rhs(gen, &axpy(&x, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(gen, &axpy(&x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(gen, &axpy(&x, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(
            gen,
            &axpy(&x, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let x_new = axpy(&x, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(gen, &x_new);

        let mut err: f64 = 0.0;
        for i in 0..6 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol * (h / dt) * (1.0 + x[i].abs().max(x_new[i].abs()));
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::Divergence(format!("non-finite error estimate at t = {t}")));
        }

        if err <= 1.0 {
            t = if last { dt } else { t + h };
            x = x_new;
            k1 = k7;
        }
        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.25)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        h *= factor;
        if h < dt * 1e-15 || h < f64::MIN_POSITIVE {
            return Err(Error::Divergence(format!("step size underflow at t = {t}")));
        }
    }
    Ok(StateVector::from_array(x))
}
