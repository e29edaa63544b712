//! Pulse sequences and the experimental protocols built from them: optical
//! transients, Rabi oscillations and the Zeno-pulse delay sweep.

use nalgebra::SMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_generator, Controls, RateParams, StateVector, G0, G1};
use crate::observables::{spin_projection, Readout};
use crate::propagate::{propagate, propagate_sampled, Trajectory};

/// Constant controls applied for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub controls: Controls,
    pub duration: f64,
}

impl Segment {
    pub fn new(controls: Controls, duration: f64) -> Self {
        Segment { controls, duration }
    }
}

/// Ordered list of segments, optionally with per-segment sample counts for
/// the recorded trajectory (two samples, the endpoints, when absent).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    pub sample_hints: Option<Vec<usize>>,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>) -> Self {
        PulseSequence { segments, sample_hints: None }
    }

    pub fn with_sample_hints(mut self, hints: Vec<usize>) -> Self {
        self.sample_hints = Some(hints);
        self
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    fn samples_for(&self, index: usize) -> usize {
        self.sample_hints
            .as_ref()
            .and_then(|h| h.get(index).copied())
            .unwrap_or(2)
            .max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("pulse sequence has no segments".into()));
        }
        if let Some(h) = &self.sample_hints {
            if h.len() != self.segments.len() {
                return Err(Error::Config(format!(
                    "{} sample hints for {} segments",
                    h.len(),
                    self.segments.len()
                )));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration >= 0.0) || !s.duration.is_finite() {
                return Err(Error::Config(format!("segment {i} has invalid duration {}", s.duration)));
            }
            s.controls.validate()?;
        }
        Ok(())
    }
}

/// Bright preparation: `(η, 1 - η)` in the ground manifold, no coherence.
pub fn prepare_bright(params: &RateParams) -> StateVector {
    StateVector::ground(params.eta_pol, 1.0 - params.eta_pol)
}

/// Dark preparation: `(1 - η, η)` in the ground manifold, no coherence.
pub fn prepare_dark(params: &RateParams) -> StateVector {
    StateVector::ground(1.0 - params.eta_pol, params.eta_pol)
}

/// Instantaneous, lossless π rotation of the ground spin.
pub fn ideal_pi_pulse(state: &StateVector) -> StateVector {
    StateVector { g0: state.g1, g1: state.g0, im_c01: -state.im_c01, ..*state }
}

/// Propagates through every segment, recording samples per the hints.
pub fn run_sequence(
    params: &RateParams,
    seq: &PulseSequence,
    initial: &StateVector,
) -> Result<Trajectory> {
    seq.validate()?;
    let mut traj = Trajectory::new();
    traj.push(0.0, *initial);
    let mut t0 = 0.0;
    let mut x = *initial;
    for (i, seg) in seq.segments.iter().enumerate() {
        if seg.duration == 0.0 {
            continue;
        }
        let gen = build_generator(params, &seg.controls)?;
        let mut part = propagate_sampled(&x, &gen, seg.duration, seq.samples_for(i))?;
        for t in part.times.iter_mut() {
            *t += t0;
        }
        t0 += seg.duration;
        x = part.states[part.states.len() - 1];
        traj.extend_continuing(part);
    }
    Ok(traj)
}

/// Final state of a sequence, without recording intermediate samples.
pub fn final_state(params: &RateParams, seq: &PulseSequence, initial: &StateVector) -> Result<StateVector> {
    seq.validate()?;
    seq.segments.iter().try_fold(*initial, |x, seg| {
        let gen = build_generator(params, &seg.controls)?;
        propagate(&x, &gen, seg.duration)
    })
}

/// Timing of the Zeno experiment. All times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZenoProtocolConfig {
    /// Length of each microwave π pulse.
    pub mw_pi_duration: f64,
    pub zeno_pulse_duration: f64,
    pub zeno_pulse_power_fraction: f64,
    /// Delay of the Zeno-pulse center relative to the center of the central
    /// microwave pulse.
    pub tau: f64,
    pub init_laser_duration: f64,
    pub relax_wait: f64,
    /// Dark interval on either side of the central microwave pulse.
    pub mw_gap: f64,
    pub readout_delay: f64,
    pub readout_window: f64,
    /// Samples recorded across the readout window.
    pub readout_samples: usize,
    /// Apply a preparation π pulse after initialization.
    pub initial_dark: bool,
    /// Apply the central microwave pulse; false gives the calibration run.
    pub central_pulse: bool,
    /// Apply a π pulse before readout.
    pub final_pi: bool,
    pub zeno_enabled: bool,
}

impl Default for ZenoProtocolConfig {
    fn default() -> Self {
        ZenoProtocolConfig {
            mw_pi_duration: 120e-9,
            zeno_pulse_duration: 18e-9,
            zeno_pulse_power_fraction: 1.0,
            tau: 0.0,
            init_laser_duration: 5e-6,
            relax_wait: 1e-6,
            mw_gap: 300e-9,
            readout_delay: 300e-9,
            readout_window: 300e-9,
            readout_samples: 301,
            initial_dark: false,
            central_pulse: true,
            final_pi: false,
            zeno_enabled: true,
        }
    }
}

impl ZenoProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mw_pi_duration", self.mw_pi_duration),
            ("zeno_pulse_duration", self.zeno_pulse_duration),
            ("init_laser_duration", self.init_laser_duration),
            ("relax_wait", self.relax_wait),
            ("mw_gap", self.mw_gap),
            ("readout_delay", self.readout_delay),
            ("readout_window", self.readout_window),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be a finite duration >= 0")));
            }
        }
        if !self.tau.is_finite() {
            return Err(Error::Config(format!("tau = {} is not finite", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.zeno_pulse_power_fraction) {
            return Err(Error::Config(format!(
                "zeno_pulse_power_fraction = {} outside [0, 1]",
                self.zeno_pulse_power_fraction
            )));
        }
        if self.readout_window <= 0.0 {
            return Err(Error::Config("readout_window must be positive".into()));
        }
        if self.readout_samples < 2 {
            return Err(Error::Config("readout_samples must be at least 2".into()));
        }
        Ok(())
    }

    /// Absolute time of the central microwave pulse center.
    pub fn mw_center(&self) -> f64 {
        let prep = if self.initial_dark { self.mw_pi_duration } else { 0.0 };
        self.init_laser_duration + self.relax_wait + prep + self.mw_gap + 0.5 * self.mw_pi_duration
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }
}

/// Zeno sequence with the readout window located.
#[derive(Debug, Clone, PartialEq)]
pub struct ZenoSequence {
    pub sequence: PulseSequence,
    pub readout_start: f64,
    pub readout_len: f64,
}

/// Lays out the Zeno protocol:
///
/// init laser, relax wait, optional preparation π, gap, central π, gap,
/// optional final π, readout delay, readout laser.
///
/// The Zeno laser pulse is overlaid on this timeline so that its center sits
/// `tau` after the central-pulse center; segments it overlaps are split and
/// carry both controls. The pulse must end before the readout window opens.
pub fn build_zeno_sequence(cfg: &ZenoProtocolConfig) -> Result<ZenoSequence> {
    cfg.validate()?;
    let z = cfg.zeno_enabled;
    let idle = Controls::off().with_zeno(z);
    let mw = Controls::microwave().with_zeno(z);
    let laser = Controls::laser(1.0).with_zeno(z);

    let mut base = vec![
        Segment::new(laser, cfg.init_laser_duration),
        Segment::new(idle, cfg.relax_wait),
    ];
    if cfg.initial_dark {
        base.push(Segment::new(mw, cfg.mw_pi_duration));
    }
    base.push(Segment::new(idle, cfg.mw_gap));
    base.push(Segment::new(if cfg.central_pulse { mw } else { idle }, cfg.mw_pi_duration));
    base.push(Segment::new(idle, cfg.mw_gap));
    if cfg.final_pi {
        base.push(Segment::new(mw, cfg.mw_pi_duration));
    }
    base.push(Segment::new(idle, cfg.readout_delay));
    let readout_start: f64 = base.iter().map(|s| s.duration).sum();

    let pulse_start = cfg.mw_center() + cfg.tau - 0.5 * cfg.zeno_pulse_duration;
    let pulse_end = pulse_start + cfg.zeno_pulse_duration;
    let slack = 1e-15;
    if pulse_start < -slack || pulse_end > readout_start + slack {
        return Err(Error::Config(format!(
            "zeno pulse [{pulse_start:e}, {pulse_end:e}] s lies outside the simulated span [0, {readout_start:e}] s"
        )));
    }

    let mut segments = Vec::with_capacity(base.len() + 2);
    let mut t = 0.0;
    for seg in base {
        let (a, b) = (t, t + seg.duration);
        t = b;
        let mut cuts = vec![a];
        for c in [pulse_start, pulse_end] {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        cuts.push(b);
        for w in cuts.windows(2) {
            let (c0, c1) = (w[0], w[1]);
            if c1 <= c0 {
                continue;
            }
            let inside = cfg.zeno_pulse_duration > 0.0 && c0 >= pulse_start && c1 <= pulse_end;
            let mut controls = seg.controls;
            if inside {
                controls.laser_fraction = controls.laser_fraction.max(cfg.zeno_pulse_power_fraction);
            }
            segments.push(Segment::new(controls, c1 - c0));
        }
    }
    segments.push(Segment::new(laser, cfg.readout_window));
    let mut hints = vec![2; segments.len()];
    *hints.last_mut().expect("nonempty") = cfg.readout_samples;

    Ok(ZenoSequence {
        sequence: PulseSequence::new(segments).with_sample_hints(hints),
        readout_start,
        readout_len: cfg.readout_window,
    })
}

/// Mean readout intensity of one run of the Zeno protocol.
pub fn zeno_readout(params: &RateParams, cfg: &ZenoProtocolConfig, readout: &Readout) -> Result<f64> {
    let zs = build_zeno_sequence(cfg)?;
    let traj = run_sequence(params, &zs.sequence, &prepare_bright(params))?;
    readout.window(&traj, zs.readout_start, zs.readout_len)
}

/// Readout intensities `(no final π, final π)` of the calibration run: bright
/// initialization, no central pulse, no Zeno pulse.
pub fn calibration_readouts(
    params: &RateParams,
    cfg: &ZenoProtocolConfig,
    readout: &Readout,
) -> Result<(f64, f64)> {
    let cal = ZenoProtocolConfig {
        initial_dark: false,
        central_pulse: false,
        zeno_pulse_power_fraction: 0.0,
        tau: 0.0,
        ..*cfg
    };
    let a = zeno_readout(params, &ZenoProtocolConfig { final_pi: false, ..cal }, readout)?;
    let b = zeno_readout(params, &ZenoProtocolConfig { final_pi: true, ..cal }, readout)?;
    Ok((a, b))
}

/// `<m_s>` for one protocol configuration, from the readout pair with and
/// without the final π pulse.
pub fn protocol_projection(
    params: &RateParams,
    cfg: &ZenoProtocolConfig,
    readout: &Readout,
    calibration: (f64, f64),
) -> Result<f64> {
    let a = zeno_readout(params, &ZenoProtocolConfig { final_pi: false, ..*cfg }, readout)?;
    let b = zeno_readout(params, &ZenoProtocolConfig { final_pi: true, ..*cfg }, readout)?;
    spin_projection(a, b, calibration.0, calibration.1, params.eta_pol)
}

/// Readout intensities `(no final π, final π)` taken directly after the
/// state `prepared`: readout delay, optional π pulse, readout laser.
pub fn prepared_readouts(
    params: &RateParams,
    cfg: &ZenoProtocolConfig,
    prepared: &StateVector,
    readout: &Readout,
) -> Result<(f64, f64)> {
    let run = |final_pi: bool| -> Result<f64> {
        let mut segments = Vec::new();
        if final_pi {
            segments.push(Segment::new(Controls::microwave(), cfg.mw_pi_duration));
        }
        segments.push(Segment::new(Controls::off(), cfg.readout_delay));
        let start: f64 = segments.iter().map(|s| s.duration).sum();
        segments.push(Segment::new(Controls::laser(1.0), cfg.readout_window));
        let mut hints = vec![2; segments.len()];
        *hints.last_mut().expect("nonempty") = cfg.readout_samples;
        let seq = PulseSequence::new(segments).with_sample_hints(hints);
        let traj = run_sequence(params, &seq, prepared)?;
        readout.window(&traj, start, cfg.readout_window)
    };
    Ok((run(false)?, run(true)?))
}

/// `<m_s>` of the bright or dark preparation, calibrated against the bright
/// preparation.
pub fn preparation_projection(params: &RateParams, cfg: &ZenoProtocolConfig, dark: bool) -> Result<f64> {
    params.validate()?;
    cfg.validate()?;
    let readout = Readout::new(params)?;
    let calibration = prepared_readouts(params, cfg, &prepare_bright(params), &readout)?;
    let state = if dark { prepare_dark(params) } else { prepare_bright(params) };
    let (a, b) = prepared_readouts(params, cfg, &state, &readout)?;
    spin_projection(a, b, calibration.0, calibration.1, params.eta_pol)
}

/// `<m_s>` versus Zeno-pulse delay. Points are evaluated in parallel and
/// returned in input order.
pub fn simulate_zeno_sweep(
    params: &RateParams,
    cfg_base: &ZenoProtocolConfig,
    taus: &[f64],
) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    cfg_base.validate()?;
    let readout = Readout::new(params)?;
    let calibration = calibration_readouts(params, cfg_base, &readout)?;
    taus.par_iter()
        .map(|&tau| {
            let cfg = cfg_base.with_tau(tau);
            Ok((tau, protocol_projection(params, &cfg, &readout, calibration)?))
        })
        .collect()
}

/// Rabi oscillation: bright preparation, microwave pulse of each duration,
/// readout with and without a final π pulse.
pub fn simulate_rabi(params: &RateParams, mw_durations: &[f64]) -> Result<Vec<(f64, f64)>> {
    simulate_rabi_with(params, &ZenoProtocolConfig::default(), mw_durations)
}

/// [`simulate_rabi`] using the π-pulse length and readout timing of `cfg`.
pub fn simulate_rabi_with(
    params: &RateParams,
    cfg: &ZenoProtocolConfig,
    mw_durations: &[f64],
) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    cfg.validate()?;
    if let Some(d) = mw_durations.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::Config(format!("invalid microwave duration {d}")));
    }
    let readout = Readout::new(params)?;
    let bright = prepare_bright(params);
    let calibration = prepared_readouts(params, cfg, &bright, &readout)?;
    mw_durations
        .par_iter()
        .map(|&d| {
            let driven = final_state(
                params,
                &PulseSequence::new(vec![Segment::new(Controls::microwave(), d)]),
                &bright,
            )?;
            let (a, b) = prepared_readouts(params, cfg, &driven, &readout)?;
            Ok((d, spin_projection(a, b, calibration.0, calibration.1, params.eta_pol)?))
        })
        .collect()
}

/// Probability that a laser pulse causes at least one excitation:
/// `1 - exp(-N)`, with `N = ∫ k_exc·(G0 + G1) dt` accumulated while
/// propagating from the ground manifold.
pub fn excitation_probability(params: &RateParams, pulse_duration: f64, power_fraction: f64) -> Result<f64> {
    if !(pulse_duration >= 0.0) || !pulse_duration.is_finite() {
        return Err(Error::Domain(format!("invalid pulse duration {pulse_duration}")));
    }
    let controls = Controls::laser(power_fraction);
    let gen = build_generator(params, &controls)?;
    if pulse_duration == 0.0 {
        return Ok(0.0);
    }
    // Augment the state with the running excitation count.
    let k_exc = power_fraction * params.k_exc_cw;
    let mut aug = SMatrix::<f64, 7, 7>::zeros();
    aug.fixed_view_mut::<6, 6>(0, 0).copy_from(&gen.a);
    aug[(6, G0)] = k_exc;
    aug[(6, G1)] = k_exc;
    let evolved = (aug * pulse_duration).exp();
    let count = evolved[(6, G0)];
    if !count.is_finite() || count < -1e-12 {
        return Err(Error::Numeric(format!("excitation count {count}")));
    }
    Ok(1.0 - (-count.max(0.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn preparations() {
        let p = RateParams::reference();
        assert_eq!(prepare_bright(&p), StateVector::ground(0.92, 1.0 - 0.92));
        assert_eq!(prepare_dark(&p), StateVector::ground(1.0 - 0.92, 0.92));
        assert_eq!(prepare_dark(&p), ideal_pi_pulse(&prepare_bright(&p)));
        let ideal = RateParams { eta_pol: 1.0, ..p };
        assert_eq!(prepare_bright(&ideal).to_array(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(prepare_dark(&ideal).to_array(), [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn idle_segment_only_dephases() {
        let p = RateParams::reference();
        let x = StateVector::new(0.6, 0.4, 0.2, 0.0, 0.0, 0.0);
        let dur = 0.7e-6;
        let seq = PulseSequence::new(vec![Segment::new(Controls::off(), dur)]);
        let out = final_state(&p, &seq, &x).unwrap();
        assert!(approx(out.g0, 0.6, 1e-14) && approx(out.g1, 0.4, 1e-14));
        assert!(approx(out.im_c01, 0.2 * (-dur / p.t2_star).exp(), 1e-12));
    }

    #[test]
    fn trajectory_is_continuous_across_segments() {
        let p = RateParams::reference();
        let seq = PulseSequence::new(vec![
            Segment::new(Controls::laser(1.0), 100e-9),
            Segment::new(Controls::microwave(), 0.0),
            Segment::new(Controls::microwave(), 60e-9),
        ])
        .with_sample_hints(vec![11, 5, 7]);
        let traj = run_sequence(&p, &seq, &prepare_bright(&p)).unwrap();
        assert_eq!(traj.len(), 1 + 10 + 6);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        let end = final_state(&p, &seq, &prepare_bright(&p)).unwrap();
        let (t, last) = traj.last().unwrap();
        assert!(approx(t, 160e-9, 1e-20));
        for (a, b) in last.to_array().iter().zip(end.to_array()) {
            assert!(approx(*a, b, 1e-12));
        }
    }

    #[test]
    fn microwave_pi_swaps_populations() {
        let p = RateParams::reference();
        let seq = PulseSequence::new(vec![Segment::new(Controls::microwave(), PI / p.rabi_omega)]);
        let out = final_state(&p, &seq, &prepare_bright(&p)).unwrap();
        // T2* damping leaves a few percent behind.
        assert!(out.g1 > 0.85 && out.g1 < 0.92, "{out:?}");
        assert!(approx(out.g0 + out.g1, 1.0, 1e-12));
    }

    #[test]
    fn zeno_layout_at_zero_delay() {
        let cfg = ZenoProtocolConfig::default();
        let zs = build_zeno_sequence(&cfg).unwrap();
        let segs = &zs.sequence.segments;
        let central: Vec<_> = segs.iter().filter(|s| s.controls.mw_on).collect();
        assert_eq!(central.len(), 3);
        assert!(approx(central[0].duration, 51e-9, 1e-18));
        assert!(approx(central[1].duration, 18e-9, 1e-18));
        assert!(approx(central[2].duration, 51e-9, 1e-18));
        assert_eq!(central[1].controls.laser_fraction, 1.0);
        assert_eq!(central[0].controls.laser_fraction, 0.0);
        // init laser first, readout laser last
        assert_eq!(segs[0].controls.laser_fraction, 1.0);
        assert!(approx(segs[0].duration, 5e-6, 1e-18));
        let last = segs.last().unwrap();
        assert_eq!(last.controls.laser_fraction, 1.0);
        assert!(approx(zs.readout_start + zs.readout_len, zs.sequence.duration(), 1e-15));
    }

    #[test]
    fn zeno_layout_with_all_pulses() {
        let cfg = ZenoProtocolConfig { initial_dark: true, final_pi: true, tau: 200e-9, ..Default::default() };
        let zs = build_zeno_sequence(&cfg).unwrap();
        let mw_time: f64 = zs.sequence.segments.iter().filter(|s| s.controls.mw_on).map(|s| s.duration).sum();
        assert!(approx(mw_time, 3.0 * 120e-9, 1e-17));
        let pulse: Vec<_> = zs
            .sequence
            .segments
            .iter()
            .scan(0.0, |t, s| {
                let start = *t;
                *t += s.duration;
                Some((start, s))
            })
            .filter(|(start, s)| s.controls.laser_fraction > 0.0 && *start > 1e-6 && s.duration < 1e-7)
            .collect();
        assert_eq!(pulse.len(), 1);
        let center = pulse[0].0 + 0.5 * pulse[0].1.duration;
        assert!(approx(center - cfg.mw_center(), 200e-9, 1e-15));
    }

    #[test]
    fn zeno_pulse_outside_span_is_rejected() {
        let late = ZenoProtocolConfig { tau: 1e-6, ..Default::default() };
        assert!(matches!(build_zeno_sequence(&late), Err(Error::Config(_))));
        let early = ZenoProtocolConfig { tau: -7e-6, ..Default::default() };
        assert!(matches!(build_zeno_sequence(&early), Err(Error::Config(_))));
        let bad = ZenoProtocolConfig { zeno_pulse_power_fraction: 2.0, ..Default::default() };
        assert!(build_zeno_sequence(&bad).is_err());
    }

    #[test]
    fn pulse_inside_init_laser_changes_nothing() {
        let p = RateParams::reference();
        let readout = Readout::new(&p).unwrap();
        let base = ZenoProtocolConfig { zeno_pulse_power_fraction: 0.0, ..Default::default() };
        let far = ZenoProtocolConfig { tau: -2e-6, ..Default::default() };
        for final_pi in [false, true] {
            let a = zeno_readout(&p, &ZenoProtocolConfig { final_pi, ..base }, &readout).unwrap();
            let b = zeno_readout(&p, &ZenoProtocolConfig { final_pi, ..far }, &readout).unwrap();
            assert!(approx(a, b, 1e-10), "{a} vs {b}");
        }
    }

    #[test]
    fn rabi_endpoints_and_envelope() {
        let p = RateParams::reference();
        let durations: Vec<f64> = (0..=40).map(|k| k as f64 * 30e-9).collect();
        let curve = simulate_rabi(&p, &durations).unwrap();
        assert!(approx(curve[0].1, 0.08, 1e-12));
        let pi = curve.iter().find(|(d, _)| approx(*d, 120e-9, 1e-15)).unwrap().1;
        assert!(approx(pi, 0.92, 0.05), "{pi}");
        // peaks at odd multiples of the π time shrink toward 1/2
        let peaks: Vec<f64> = [120e-9, 360e-9, 600e-9, 840e-9, 1080e-9]
            .iter()
            .map(|t| curve.iter().find(|(d, _)| approx(*d, *t, 1e-15)).unwrap().1)
            .collect();
        assert!(peaks.windows(2).all(|w| w[1] < w[0] && w[1] > 0.5), "{peaks:?}");
        // successive peaks shrink by exp(-T/(2·T2*)), T = 2π/Ω
        let expected = (-(2.0 * PI / p.rabi_omega) / (2.0 * p.t2_star)).exp();
        for w in peaks.windows(2) {
            let ratio = (w[1] - 0.5) / (w[0] - 0.5);
            assert!(approx(ratio, expected, 0.01), "{ratio} vs {expected}");
        }
        assert!(simulate_rabi(&p, &[-1e-9]).is_err());
    }

    #[test]
    fn excitation_probability_limits() {
        let p = RateParams::reference();
        assert_eq!(excitation_probability(&p, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(excitation_probability(&p, 18e-9, 0.0).unwrap(), 0.0);
        // Saturated excitation is bounded by the decay cycles that fit in the
        // pulse, so the limit is only reached for pulses long against 1/k_rad.
        let fast = RateParams { k_exc_cw: 1e12, ..p };
        assert!(excitation_probability(&fast, 1e-6, 1.0).unwrap() > 0.999);
        let mut last = 0.0;
        for k in [1e6, 1e7, 1e8, 1e9, 1e10, 1e12] {
            let pr = excitation_probability(&RateParams { k_exc_cw: k, ..p }, 18e-9, 1.0).unwrap();
            assert!(pr > last);
            last = pr;
        }
        let pr = excitation_probability(&p, 18e-9, 1.0).unwrap();
        assert!(pr > 0.15 && pr < 0.45, "{pr}");
        assert!(excitation_probability(&p, -1.0, 1.0).is_err());
    }

    #[test]
    fn excitation_probability_grows_with_duration_and_power() {
        let p = RateParams::reference();
        let mut last = 0.0;
        for k in 1..20 {
            let pr = excitation_probability(&p, k as f64 * 2e-9, 1.0).unwrap();
            assert!(pr > last);
            last = pr;
        }
        let half = excitation_probability(&p, 18e-9, 0.5).unwrap();
        assert!(half < excitation_probability(&p, 18e-9, 1.0).unwrap());
    }
}
