//! Measured quantities: normalized fluorescence, differential transients and
//! the spin projection derived from readout contrast.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::model::{build_generator, Controls, RateParams, StateVector, E0, E1, POPULATIONS};
use crate::propagate::Trajectory;

/// One point of a fluorescence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySample {
    pub time: f64,
    pub intensity: f64,
}

/// Stationary state of the dynamics under constant `controls`.
pub fn steady_state(params: &RateParams, controls: &Controls) -> Result<StateVector> {
    let gen = build_generator(params, controls)?;
    // Replace the G0 balance row with the normalization constraint.
    let mut m: Matrix6<f64> = gen.a;
    let mut rhs = Vector6::zeros();
    for j in 0..6 {
        m[(0, j)] = if POPULATIONS.contains(&j) { 1.0 } else { 0.0 };
    }
    rhs[0] = 1.0;
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("steady state is not unique".into()))?;
    let state = StateVector::from_vector(&x);
    if !state.is_finite() {
        return Err(Error::Numeric("non-finite steady state".into()));
    }
    Ok(state)
}

/// Photon emission rate `k_rad·(E0 + E1)` in the steady state under full cw
/// illumination. Intensities are normalized to this value.
pub fn steady_state_norm(params: &RateParams) -> Result<f64> {
    let ss = steady_state(params, &Controls::laser(1.0))?;
    let norm = params.k_rad * (ss.e0 + ss.e1);
    if norm > 0.0 && norm.is_finite() {
        Ok(norm)
    } else {
        Err(Error::Domain(format!("no fluorescence in cw steady state (norm = {norm})")))
    }
}

/// `I = (1 - I_bg)·k_rad·(E0 + E1)/norm + I_bg`.
pub fn instantaneous_intensity(state: &StateVector, params: &RateParams, norm: f64) -> Result<f64> {
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Domain(format!("intensity normalization {norm} must be positive")));
    }
    Ok(emission(state, params, norm))
}

fn emission(state: &StateVector, params: &RateParams, norm: f64) -> f64 {
    (1.0 - params.i_bg) * params.k_rad * (state.to_array()[E0] + state.to_array()[E1]) / norm
        + params.i_bg
}

/// Pointwise `bright - dark`. The two traces must share a time grid.
pub fn differential_signal(
    trace_bright: &[IntensitySample],
    trace_dark: &[IntensitySample],
) -> Result<Vec<IntensitySample>> {
    if trace_bright.len() != trace_dark.len() {
        return Err(Error::Domain(format!(
            "trace lengths differ ({} vs {})",
            trace_bright.len(),
            trace_dark.len()
        )));
    }
    trace_bright
        .iter()
        .zip(trace_dark)
        .map(|(b, d)| {
            if b.time != d.time {
                return Err(Error::Domain(format!("time grids differ at {} vs {}", b.time, d.time)));
            }
            Ok(IntensitySample { time: b.time, intensity: b.intensity - d.intensity })
        })
        .collect()
}

/// Fluorescence model bound to one parameter set, with the normalization
/// computed once.
#[derive(Debug, Clone, Copy)]
pub struct Readout {
    params: RateParams,
    norm: f64,
}

impl Readout {
    pub fn new(params: &RateParams) -> Result<Self> {
        params.validate()?;
        Ok(Readout { params: *params, norm: steady_state_norm(params)? })
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn intensity(&self, state: &StateVector) -> f64 {
        emission(state, &self.params, self.norm)
    }

    pub fn trace(&self, traj: &Trajectory) -> Vec<IntensitySample> {
        traj.iter()
            .map(|(time, s)| IntensitySample { time, intensity: self.intensity(s) })
            .collect()
    }

    /// Time-averaged intensity over `[start, start + len]`, trapezoidal on
    /// the trajectory samples with linear interpolation at the edges.
    pub fn window(&self, traj: &Trajectory, start: f64, len: f64) -> Result<f64> {
        let (t_first, t_last) =
            traj.span().ok_or_else(|| Error::Domain("empty trajectory".into()))?;
        let end = start + len;
        let slack = 1e-12 * (t_last - t_first).abs().max(f64::MIN_POSITIVE);
        if len < 0.0 || start < t_first - slack || end > t_last + slack {
            return Err(Error::Domain(format!(
                "window [{start}, {end}] outside trajectory span [{t_first}, {t_last}]"
            )));
        }
        let start = start.clamp(t_first, t_last);
        let end = end.clamp(t_first, t_last);
        let values: Vec<f64> = traj.states.iter().map(|s| self.intensity(s)).collect();
        let at = |t: f64| -> f64 {
            let k = traj.times.partition_point(|&x| x <= t);
            if k == 0 {
                return values[0];
            }
            if k >= traj.times.len() {
                return values[values.len() - 1];
            }
            let (t0, t1) = (traj.times[k - 1], traj.times[k]);
            let w = (t - t0) / (t1 - t0);
            values[k - 1] * (1.0 - w) + values[k] * w
        };
        if end - start <= 0.0 {
            return Ok(at(start));
        }
        let mut pts = vec![(start, at(start))];
        for (t, v) in traj.times.iter().zip(&values) {
            if *t > start && *t < end {
                pts.push((*t, *v));
            }
        }
        pts.push((end, at(end)));
        let area: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
        Ok(area / (end - start))
    }
}

/// Mean normalized intensity over a window of `traj`.
pub fn readout_intensity(
    traj: &Trajectory,
    params: &RateParams,
    window_start: f64,
    window_len: f64,
) -> Result<f64> {
    Readout::new(params)?.window(traj, window_start, window_len)
}

/// `(a - b) / (a + b)`.
pub fn contrast(a: f64, b: f64) -> f64 {
    (a - b) / (a + b)
}

/// Spin projection `<m_s>` from the readout contrast with and without a
/// final π pulse.
///
/// The affine map sends the bright calibration contrast to `1 - η_pol` and
/// its mirror image (the dark calibration) to `η_pol`.
pub fn spin_projection(
    signal_no_pi: f64,
    signal_pi: f64,
    cal_bright_no_pi: f64,
    cal_bright_pi: f64,
    eta_pol: f64,
) -> Result<f64> {
    for v in [signal_no_pi, signal_pi, cal_bright_no_pi, cal_bright_pi] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("intensity {v} must be positive")));
        }
    }
    let c_bright = contrast(cal_bright_no_pi, cal_bright_pi);
    let c_dark = -c_bright;
    let span = c_bright - c_dark;
    if span.abs() < 1e-12 {
        return Err(Error::Calibration(format!(
            "degenerate calibration, bright contrast {c_bright}"
        )));
    }
    let lo = 1.0 - eta_pol;
    let hi = eta_pol;
    Ok(lo + (hi - lo) * (c_bright - contrast(signal_no_pi, signal_pi)) / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_generator;
    use crate::propagate::propagate_sampled;

    #[test]
    fn background_only_without_excitation() {
        let p = RateParams::reference();
        let i = instantaneous_intensity(&StateVector::ground(1.0, 0.0), &p, 1e7).unwrap();
        assert_eq!(i, p.i_bg);
        assert!(instantaneous_intensity(&StateVector::ground(1.0, 0.0), &p, 0.0).is_err());
    }

    #[test]
    fn steady_state_is_normalized() {
        let p = RateParams::reference();
        let ss = steady_state(&p, &Controls::laser(1.0)).unwrap();
        assert!((ss.population_sum() - 1.0).abs() < 1e-14);
        let r = Readout::new(&p).unwrap();
        assert!((r.intensity(&ss) - 1.0).abs() < 1e-12);
        let g = build_generator(&p, &Controls::laser(1.0)).unwrap();
        let drift = g.a * ss.to_vector();
        assert!(drift.amax() < 1e-6 * g.max_abs_entry());
    }

    #[test]
    fn differential_properties() {
        let a: Vec<_> = (0..5).map(|k| IntensitySample { time: k as f64, intensity: k as f64 * 0.3 }).collect();
        let b: Vec<_> = (0..5).map(|k| IntensitySample { time: k as f64, intensity: 1.0 - k as f64 * 0.1 }).collect();
        assert!(differential_signal(&a, &a).unwrap().iter().all(|s| s.intensity == 0.0));
        let ab = differential_signal(&a, &b).unwrap();
        let ba = differential_signal(&b, &a).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert_eq!(x.intensity, -y.intensity);
        }
        assert!(differential_signal(&a, &b[..4]).is_err());
        let shifted: Vec<_> = b.iter().map(|s| IntensitySample { time: s.time + 0.5, ..*s }).collect();
        assert!(differential_signal(&a, &shifted).is_err());
    }

    #[test]
    fn window_average() {
        let p = RateParams::reference();
        let r = Readout::new(&p).unwrap();
        let g = build_generator(&p, &Controls::laser(1.0)).unwrap();
        let traj = propagate_sampled(&StateVector::ground(0.92, 0.08), &g, 1e-6, 1001).unwrap();
        let t = traj.times[200];
        let point = r.window(&traj, t, 0.0).unwrap();
        assert!((point - r.intensity(&traj.states[200])).abs() < 1e-15);
        assert!(r.window(&traj, 0.5e-6, 0.6e-6).is_err());
        assert!(r.window(&traj, -1e-9, 1e-7).is_err());

        let ss = steady_state(&p, &Controls::laser(1.0)).unwrap();
        let flat = propagate_sampled(&ss, &g, 1e-6, 11).unwrap();
        assert!((r.window(&flat, 0.13e-6, 0.5e-6).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn projection_endpoints() {
        let (b0, b1) = (1.3, 0.9);
        let m = spin_projection(b0, b1, b0, b1, 0.92).unwrap();
        assert!((m - 0.08).abs() < 1e-12);
        let m = spin_projection(b1, b0, b0, b1, 0.92).unwrap();
        assert!((m - 0.92).abs() < 1e-12);
        let m = spin_projection(1.1, 1.1, b0, b1, 0.92).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
        assert!(matches!(spin_projection(1.0, 1.0, 1.0, 1.0, 0.92), Err(Error::Calibration(_))));
        assert!(spin_projection(0.0, 1.0, 1.0, 2.0, 0.92).is_err());
    }

    #[test]
    fn projection_decreases_with_contrast() {
        let mut last = f64::INFINITY;
        for k in 1..100 {
            let a = 0.5 + k as f64 * 0.01;
            let m = spin_projection(a, 1.0, 1.3, 0.9, 0.92).unwrap();
            assert!(m < last);
            last = m;
        }
    }
}
