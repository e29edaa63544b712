//! Level model of the NV center: rate parameters, the six-component state
//! and the generator of the linear dynamics for one control setting.
//!
//! State ordering is `(G0, G1, Im C01, E0, E1, S)`. Populations flow between
//! the five levels through optical excitation, radiative decay, intersystem
//! crossing into the singlet and deshelving back into `G0`. Strain mixing of
//! the excited states weights spin-conserving transitions by `alpha = cos²θ`
//! and spin-flipping ones by `beta = sin²θ`. A resonant microwave drive
//! couples the ground populations through the imaginary part of the
//! ground-state coherence.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const G0: usize = 0;
pub const G1: usize = 1;
pub const IM_C01: usize = 2;
pub const E0: usize = 3;
pub const E1: usize = 4;
pub const S: usize = 5;

/// Indices of the five population components.
pub const POPULATIONS: [usize; 5] = [G0, G1, E0, E1, S];

/// Physical parameters of a single center. Rates are in 1/s, times in s,
/// angles in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    /// Rabi angular frequency of the microwave drive.
    pub rabi_omega: f64,
    /// Inhomogeneous dephasing time of the ground-state coherence.
    pub t2_star: f64,
    /// Optical excitation rate at the reference cw laser power.
    #[serde(rename = "k_exc")]
    pub k_exc_cw: f64,
    pub k_rad: f64,
    /// Singlet deshelving rate into `G0`.
    pub k_desh: f64,
    /// Intersystem-crossing reference rate.
    pub k_s: f64,
    /// Strain-induced spin mixing angle of the excited states.
    pub theta: f64,
    /// Fraction of the normalized signal due to background.
    pub i_bg: f64,
    /// Ground-state polarization efficiency after optical pumping.
    pub eta_pol: f64,
}

impl RateParams {
    /// Characterized values for the reference center:
    /// `2π/Ω = 240 ns`, `T2* = 0.5 µs`, `1/k_exc = 30.5 ns`, `1/k_rad = 13 ns`,
    /// `1/k_desh = 220 ns`, `1/k_S = 15.4 ns`, `θ = 12.4°`, `I_bg = 0.2`,
    /// `η_pol = 0.92`.
    pub fn reference() -> Self {
        const NS: f64 = 1e-9;
        RateParams {
            rabi_omega: 2.0 * PI / (240.0 * NS),
            t2_star: 0.5e-6,
            k_exc_cw: 1.0 / (30.5 * NS),
            k_rad: 1.0 / (13.0 * NS),
            k_desh: 1.0 / (220.0 * NS),
            k_s: 1.0 / (15.4 * NS),
            theta: 12.4_f64.to_radians(),
            i_bg: 0.2,
            eta_pol: 0.92,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams { name, reason: format!("non-finite value {v}") })
            }
        };
        for name in ParamName::ALL {
            finite(name.as_str(), self.get(name))?;
        }
        for (name, v) in [
            ("rabi_omega", self.rabi_omega),
            ("k_exc", self.k_exc_cw),
            ("k_rad", self.k_rad),
            ("k_desh", self.k_desh),
            ("k_s", self.k_s),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidParams { name, reason: format!("rate {v} is negative") });
            }
        }
        if self.t2_star <= 0.0 {
            return Err(Error::InvalidParams {
                name: "t2_star",
                reason: format!("{} must be positive", self.t2_star),
            });
        }
        if !(0.0..=FRAC_PI_2).contains(&self.theta) {
            return Err(Error::InvalidParams {
                name: "theta",
                reason: format!("{} outside [0, π/2]", self.theta),
            });
        }
        if !(0.0..1.0).contains(&self.i_bg) {
            return Err(Error::InvalidParams {
                name: "i_bg",
                reason: format!("{} outside [0, 1)", self.i_bg),
            });
        }
        if !(0.0..=1.0).contains(&self.eta_pol) {
            return Err(Error::InvalidParams {
                name: "eta_pol",
                reason: format!("{} outside [0, 1]", self.eta_pol),
            });
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::RabiOmega => self.rabi_omega,
            ParamName::T2Star => self.t2_star,
            ParamName::KExc => self.k_exc_cw,
            ParamName::KRad => self.k_rad,
            ParamName::KDesh => self.k_desh,
            ParamName::KS => self.k_s,
            ParamName::Theta => self.theta,
            ParamName::IBg => self.i_bg,
            ParamName::EtaPol => self.eta_pol,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let slot = match name {
            ParamName::RabiOmega => &mut self.rabi_omega,
            ParamName::T2Star => &mut self.t2_star,
            ParamName::KExc => &mut self.k_exc_cw,
            ParamName::KRad => &mut self.k_rad,
            ParamName::KDesh => &mut self.k_desh,
            ParamName::KS => &mut self.k_s,
            ParamName::Theta => &mut self.theta,
            ParamName::IBg => &mut self.i_bg,
            ParamName::EtaPol => &mut self.eta_pol,
        };
        *slot = value;
    }

    pub fn with(mut self, name: ParamName, value: f64) -> Self {
        self.set(name, value);
        self
    }

    /// Duration of a resonant π rotation, `π/Ω`.
    pub fn pi_pulse_duration(&self) -> f64 {
        PI / self.rabi_omega
    }
}

impl Default for RateParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Names of the individual [`RateParams`] fields, as used in configuration
/// files and fit specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    RabiOmega,
    T2Star,
    KExc,
    KRad,
    KDesh,
    KS,
    Theta,
    IBg,
    EtaPol,
}

impl ParamName {
    pub const ALL: [ParamName; 9] = [
        ParamName::RabiOmega,
        ParamName::T2Star,
        ParamName::KExc,
        ParamName::KRad,
        ParamName::KDesh,
        ParamName::KS,
        ParamName::Theta,
        ParamName::IBg,
        ParamName::EtaPol,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::RabiOmega => "rabi_omega",
            ParamName::T2Star => "t2_star",
            ParamName::KExc => "k_exc",
            ParamName::KRad => "k_rad",
            ParamName::KDesh => "k_desh",
            ParamName::KS => "k_s",
            ParamName::Theta => "theta",
            ParamName::IBg => "i_bg",
            ParamName::EtaPol => "eta_pol",
        }
    }

    /// Whether the parameter is a rate (1/s).
    pub fn is_rate(self) -> bool {
        matches!(
            self,
            ParamName::RabiOmega | ParamName::KExc | ParamName::KRad | ParamName::KDesh | ParamName::KS
        )
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s || (s == "k_exc_cw" && *p == ParamName::KExc))
            .ok_or_else(|| Error::Config(format!("unknown parameter name `{s}`")))
    }
}

/// `(cos²θ, sin²θ)`.
pub fn mixing_coefficients(theta: f64) -> Result<(f64, f64)> {
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::Domain(format!("mixing angle {theta} outside [0, π/2]")));
    }
    let beta = theta.sin().powi(2);
    Ok((1.0 - beta, beta))
}

/// Level populations plus the imaginary part of the ground-state coherence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub g0: f64,
    pub g1: f64,
    pub im_c01: f64,
    pub e0: f64,
    pub e1: f64,
    pub s: f64,
}

impl StateVector {
    pub fn new(g0: f64, g1: f64, im_c01: f64, e0: f64, e1: f64, s: f64) -> Self {
        StateVector { g0, g1, im_c01, e0, e1, s }
    }

    /// Diagonal ground-state mixture.
    pub fn ground(g0: f64, g1: f64) -> Self {
        StateVector { g0, g1, ..Default::default() }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.g0, self.g1, self.im_c01, self.e0, self.e1, self.s]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        StateVector::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::from(self.to_array())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        StateVector::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn population_sum(&self) -> f64 {
        self.g0 + self.g1 + self.e0 + self.e1 + self.s
    }

    pub fn min_population(&self) -> f64 {
        self.g0.min(self.g1).min(self.e0).min(self.e1).min(self.s)
    }

    /// `g0 / (g0 + g1)`, the polarization of the ground manifold.
    pub fn ground_polarization(&self) -> f64 {
        self.g0 / (self.g0 + self.g1)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Checks normalization, population bounds and the coherence bound
    /// `|Im C01| <= (g0 + g1) / 2`, each to within `tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let sum = self.population_sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Numeric(format!("population sum {sum} differs from 1")));
        }
        for (i, p) in [self.g0, self.g1, self.e0, self.e1, self.s].into_iter().enumerate() {
            if p < -tol || p > 1.0 + tol {
                return Err(Error::Numeric(format!("population {i} = {p} outside [0, 1]")));
            }
        }
        if self.im_c01.abs() > 0.5 * (self.g0 + self.g1) + tol {
            return Err(Error::Numeric(format!(
                "coherence {} exceeds ground population bound",
                self.im_c01
            )));
        }
        Ok(())
    }
}

/// Control settings held constant over one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Laser power relative to the reference cw power; scales `k_exc`.
    pub laser_fraction: f64,
    pub mw_on: bool,
    /// When false, optical excitation no longer dephases the ground-state
    /// coherence (counterfactual without measurement back-action).
    pub zeno_enabled: bool,
}

impl Controls {
    pub const fn off() -> Self {
        Controls { laser_fraction: 0.0, mw_on: false, zeno_enabled: true }
    }

    pub const fn laser(fraction: f64) -> Self {
        Controls { laser_fraction: fraction, mw_on: false, zeno_enabled: true }
    }

    pub const fn microwave() -> Self {
        Controls { laser_fraction: 0.0, mw_on: true, zeno_enabled: true }
    }

    pub const fn with_laser(mut self, fraction: f64) -> Self {
        self.laser_fraction = fraction;
        self
    }

    pub const fn with_mw(mut self, on: bool) -> Self {
        self.mw_on = on;
        self
    }

    pub const fn with_zeno(mut self, enabled: bool) -> Self {
        self.zeno_enabled = enabled;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.laser_fraction) {
            return Err(Error::Domain(format!(
                "laser fraction {} outside [0, 1]",
                self.laser_fraction
            )));
        }
        Ok(())
    }
}

impl Default for Controls {
    fn default() -> Self {
        Controls::off()
    }
}

/// The 6×6 real matrix `A` of `dx/dt = A x`, entries in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub a: Matrix6<f64>,
}

impl Generator {
    pub fn zero() -> Self {
        Generator { a: Matrix6::zeros() }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a.amax()
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    /// Sum of the population rows in each population column. Zero for a
    /// conserving generator.
    pub fn population_column_sums(&self) -> [f64; 5] {
        POPULATIONS.map(|j| POPULATIONS.iter().map(|&i| self.a[(i, j)]).sum())
    }
}

/// Builds the trace-conserving generator for `controls`.
///
/// ```text
/// dG0/dt = -k·G0 - Ω·Im + α·kr·E0 + β·kr·E1 + kd·S
/// dG1/dt = -k·G1 + Ω·Im + β·kr·E0 + α·kr·E1
/// dIm/dt = Ω/2·(G0 - G1) - γ·Im
/// dE0/dt = α·k·G0 + β·k·G1 - (kr + β·ks)·E0
/// dE1/dt = β·k·G0 + α·k·G1 - (kr + α·ks)·E1
/// dS/dt  = β·ks·E0 + α·ks·E1 - kd·S
/// ```
///
/// with `k = laser_fraction · k_exc`, `Ω` gated by `mw_on`, and
/// `γ = 1/T2* + k` (or `1/T2*` with the Zeno back-action disabled).
pub fn build_generator(params: &RateParams, controls: &Controls) -> Result<Generator> {
    params.validate()?;
    controls.validate()?;
    let (alpha, beta) = mixing_coefficients(params.theta)?;
    let k_exc = controls.laser_fraction * params.k_exc_cw;
    let omega = if controls.mw_on { params.rabi_omega } else { 0.0 };
    let gamma = if controls.zeno_enabled {
        1.0 / params.t2_star + k_exc
    } else {
        1.0 / params.t2_star
    };
    let (kr, ks, kd) = (params.k_rad, params.k_s, params.k_desh);

    let mut a = Matrix6::zeros();
    a[(G0, G0)] = -k_exc;
    a[(G0, IM_C01)] = -omega;
    a[(G0, E0)] = alpha * kr;
    a[(G0, E1)] = beta * kr;
    a[(G0, S)] = kd;

    a[(G1, G1)] = -k_exc;
    a[(G1, IM_C01)] = omega;
    a[(G1, E0)] = beta * kr;
    a[(G1, E1)] = alpha * kr;

    a[(IM_C01, G0)] = 0.5 * omega;
    a[(IM_C01, G1)] = -0.5 * omega;
    a[(IM_C01, IM_C01)] = -gamma;

    a[(E0, G0)] = alpha * k_exc;
    a[(E0, G1)] = beta * k_exc;
    a[(E0, E0)] = -(kr + beta * ks);

    a[(E1, G0)] = beta * k_exc;
    a[(E1, G1)] = alpha * k_exc;
    a[(E1, E1)] = -(kr + alpha * ks);

    a[(S, E0)] = beta * ks;
    a[(S, E1)] = alpha * ks;
    a[(S, S)] = -kd;

    Ok(Generator { a })
}
