//! Estimation of rate parameters from fluorescence data by damped
//! (Levenberg-Marquardt) nonlinear least squares with box bounds and a
//! finite-difference Jacobian.
//!
//! Reported uncertainties are one-standard-deviation half-widths from the
//! linearized covariance `σ²·(JᵀJ)⁻¹`, with `σ²` estimated from the residual
//! norm.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_generator, Controls, ParamName, RateParams, StateVector};
use crate::observables::Readout;
use crate::propagate::StepOperator;
use crate::sequence::{prepare_bright, prepare_dark, simulate_rabi};

/// Experiment that produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Fluorescence after the cw laser is switched on, starting from the
    /// bright or dark preparation.
    Transient { dark: bool },
    /// Fluorescence decay after the center is placed in `E0` with the laser
    /// off (lifetime measurement).
    ExcitedDecay,
    /// Spin projection versus microwave pulse length; the grid holds pulse
    /// durations.
    Rabi,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Transient { dark: false } => "transient-bright",
            Protocol::Transient { dark: true } => "transient-dark",
            Protocol::ExcitedDecay => "excited-decay",
            Protocol::Rabi => "rabi",
        }
    }
}

/// Simulated observable of `protocol` at each grid point.
pub fn simulate_protocol(params: &RateParams, protocol: Protocol, grid: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    check_grid(grid)?;
    match protocol {
        Protocol::Transient { dark } => {
            let init = if dark { prepare_dark(params) } else { prepare_bright(params) };
            sample_intensity(params, &Controls::laser(1.0), init, grid)
        }
        Protocol::ExcitedDecay => {
            let init = StateVector::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
            sample_intensity(params, &Controls::off(), init, grid)
        }
        Protocol::Rabi => Ok(simulate_rabi(params, grid)?.into_iter().map(|(_, m)| m).collect()),
    }
}

fn sample_intensity(
    params: &RateParams,
    controls: &Controls,
    init: StateVector,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let readout = Readout::new(params)?;
    let gen = build_generator(params, controls)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut x = init;
    let mut t = 0.0;
    let mut cached: Option<StepOperator> = None;
    for &target in grid {
        let dt = target - t;
        if dt > 0.0 {
            let step = match cached {
                Some(op) if (op.dt - dt).abs() <= 1e-12 * dt => op,
                _ => StepOperator::new(&gen, dt)?,
            };
            x = step.apply(&x);
            cached = Some(step);
            t = target;
        }
        if !x.is_finite() {
            return Err(Error::Numeric(format!("non-finite state at t = {target}")));
        }
        out.push(readout.intensity(&x));
    }
    Ok(out)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty time grid".into()));
    }
    if grid[0] < 0.0 || !grid.iter().all(|t| t.is_finite()) {
        return Err(Error::Config("time grid must be finite and start at t >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("time grid is not strictly increasing".into()));
    }
    Ok(())
}

/// Measured (or synthesized) observable with its noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub protocol: Protocol,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Residuals are divided by this value.
    pub noise_scale: f64,
}

/// Simulates `protocol` and applies seeded multiplicative Gaussian noise,
/// `value·(1 + noise_scale·ξ)`. A zero noise scale gives the exact model
/// output and a unit weight for fitting.
pub fn synthesize_dataset(
    params: &RateParams,
    protocol: Protocol,
    grid: &[f64],
    noise_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(Error::Domain(format!("noise scale {noise_scale} must be >= 0")));
    }
    let model = simulate_protocol(params, protocol, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = model
        .iter()
        .map(|m| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            m * (1.0 + noise_scale * xi)
        })
        .collect();
    Ok(Dataset {
        protocol,
        times: grid.to_vec(),
        values,
        noise_scale: if noise_scale > 0.0 { noise_scale } else { 1.0 },
    })
}

/// A fitted parameter. The optimizer works on `scale·value`; reported
/// covariance and confidence refer to that coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub name: ParamName,
    pub scale: f64,
}

impl FreeParam {
    pub fn new(name: ParamName) -> Self {
        FreeParam { name, scale: 1.0 }
    }

    pub fn scaled(name: ParamName, scale: f64) -> Self {
        FreeParam { name, scale }
    }
}

/// Default box for a parameter around `value`.
pub fn default_bounds(name: ParamName, value: f64) -> (f64, f64) {
    match name {
        ParamName::Theta => (0.0, FRAC_PI_2),
        ParamName::IBg => (0.0, 0.95),
        ParamName::EtaPol => (0.0, 1.0),
        _ if value > 0.0 => (value / 20.0, value * 20.0),
        _ => (0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub datasets: Vec<Dataset>,
    pub free: Vec<FreeParam>,
    /// Per free parameter, in natural units.
    pub bounds: Vec<(f64, f64)>,
    pub initial_guess: RateParams,
}

impl FitProblem {
    /// Problem with [`default_bounds`] around the initial guess.
    pub fn new(datasets: Vec<Dataset>, free: Vec<FreeParam>, initial_guess: RateParams) -> Self {
        let bounds = free
            .iter()
            .map(|f| default_bounds(f.name, initial_guess.get(f.name)))
            .collect();
        FitProblem { datasets, free, bounds, initial_guess }
    }

    pub fn n_observations(&self) -> usize {
        self.datasets.iter().map(|d| d.values.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.initial_guess.validate()?;
        if self.datasets.is_empty() {
            return Err(Error::Config("fit problem has no datasets".into()));
        }
        if self.free.is_empty() {
            return Err(Error::Config("fit problem has no free parameters".into()));
        }
        if self.bounds.len() != self.free.len() {
            return Err(Error::Config("one bound pair per free parameter required".into()));
        }
        let mut seen = HashMap::new();
        for (f, &(lo, hi)) in self.free.iter().zip(&self.bounds) {
            if seen.insert(f.name, ()).is_some() {
                return Err(Error::Config(format!("parameter {} listed twice", f.name)));
            }
            if !(f.scale > 0.0) || !f.scale.is_finite() {
                return Err(Error::Config(format!("scale of {} must be positive", f.name)));
            }
            let v = self.initial_guess.get(f.name);
            if !(lo <= v && v <= hi) {
                return Err(Error::Config(format!(
                    "initial {} = {v} outside bounds [{lo}, {hi}]",
                    f.name
                )));
            }
        }
        for (i, d) in self.datasets.iter().enumerate() {
            let wrap = |e: Error| Error::Dataset { index: i, source: Box::new(e) };
            check_grid(&d.times).map_err(wrap)?;
            if d.times.len() != d.values.len() {
                return Err(wrap(Error::Config("times and values differ in length".into())));
            }
            if !(d.noise_scale > 0.0) || !d.noise_scale.is_finite() {
                return Err(wrap(Error::Config("noise scale must be positive".into())));
            }
            if d.values.iter().any(|v| !v.is_finite()) {
                return Err(wrap(Error::Config("non-finite measurement".into())));
            }
        }
        if self.n_observations() <= self.free.len() {
            return Err(Error::Config(format!(
                "{} observations cannot constrain {} parameters",
                self.n_observations(),
                self.free.len()
            )));
        }
        Ok(())
    }

    fn coordinates(&self, params: &RateParams) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|f| f.scale * params.get(f.name)))
    }

    fn params_at(&self, coords: &DVector<f64>) -> RateParams {
        let mut p = self.initial_guess;
        for (f, c) in self.free.iter().zip(coords.iter()) {
            p.set(f.name, c / f.scale);
        }
        p
    }

    fn coordinate_bounds(&self) -> Vec<(f64, f64)> {
        self.free.iter().zip(&self.bounds).map(|(f, &(lo, hi))| (lo * f.scale, hi * f.scale)).collect()
    }
}

/// `(model - data)/noise_scale` for every dataset, concatenated in order.
pub fn residuals(problem: &FitProblem, candidate: &RateParams) -> Result<Vec<f64>> {
    for (f, &(lo, hi)) in problem.free.iter().zip(&problem.bounds) {
        let v = candidate.get(f.name);
        if !(lo <= v && v <= hi) {
            return Err(Error::Domain(format!("{} = {v} outside bounds [{lo}, {hi}]", f.name)));
        }
    }
    let mut out = Vec::with_capacity(problem.n_observations());
    for (i, d) in problem.datasets.iter().enumerate() {
        let model = simulate_protocol(candidate, d.protocol, &d.times)
            .map_err(|e| Error::Dataset { index: i, source: Box::new(e) })?;
        out.extend(model.iter().zip(&d.values).map(|(m, y)| (m - y) / d.noise_scale));
    }
    Ok(out)
}

/// Iteration policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative decrease of the residual norm below which iteration stops.
    pub ftol: f64,
    /// Relative step length below which iteration stops.
    pub xtol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 500, ftol: 1e-10, xtol: 1e-12, fd_step: 1e-6, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimate: RateParams,
    pub free: Vec<FreeParam>,
    pub residual_norm: f64,
    /// Covariance of the fitted coordinates (`scale·value`).
    pub covariance: DMatrix<f64>,
    /// One-standard-deviation half-widths of the fitted coordinates.
    pub confidence: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// Half-width in natural units of the parameter.
    pub fn confidence_of(&self, name: ParamName) -> Option<f64> {
        self.free
            .iter()
            .position(|f| f.name == name)
            .map(|i| self.confidence[i] / self.free[i].scale)
    }

    pub fn value_of(&self, name: ParamName) -> f64 {
        self.estimate.get(name)
    }
}

pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    fit_with(problem, &FitOptions::default())
}

struct Evaluator<'a> {
    problem: &'a FitProblem,
    bounds: Vec<(f64, f64)>,
    /// Working variables are `coords / unit`.
    unit: DVector<f64>,
}

impl Evaluator<'_> {
    fn coords(&self, u: &DVector<f64>) -> DVector<f64> {
        u.component_mul(&self.unit)
    }

    fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter().zip(&self.bounds).zip(self.unit.iter()).map(|((x, &(lo, hi)), s)| x.clamp(lo / s, hi / s)),
        )
    }

    fn residuals(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let params = self.problem.params_at(&self.coords(u));
        Ok(DVector::from_vec(residuals(self.problem, &params)?))
    }

    fn jacobian(&self, u: &DVector<f64>, h_rel: f64) -> Result<DMatrix<f64>> {
        let columns: Vec<Result<DVector<f64>>> = (0..u.len())
            .into_par_iter()
            .map(|j| {
                let (lo, hi) = (self.bounds[j].0 / self.unit[j], self.bounds[j].1 / self.unit[j]);
                let h = h_rel * u[j].abs().max(1.0);
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] = (u[j] + h).min(hi);
                dn[j] = (u[j] - h).max(lo);
                let width = up[j] - dn[j];
                if width <= 0.0 {
                    return Err(Error::Config(format!(
                        "bounds of {} leave no room for differentiation",
                        self.problem.free[j].name
                    )));
                }
                let r_up = self.residuals(&up)?;
                let r_dn = self.residuals(&dn)?;
                Ok((r_up - r_dn) / width)
            })
            .collect();
        let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&columns))
    }
}

/// Names the parameter combination along the weakest eigenvector.
fn describe_direction(free: &[FreeParam], v: &DVector<f64>) -> String {
    let mut terms: Vec<(f64, ParamName)> =
        v.iter().zip(free).filter(|(c, _)| c.abs() > 0.05).map(|(c, f)| (*c, f.name)).collect();
    terms.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    let sign = if terms.first().is_some_and(|t| t.0 < 0.0) { -1.0 } else { 1.0 };
    terms
        .iter()
        .map(|(c, n)| format!("{:+.3}·{}", sign * c, n))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn fit_with(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    let n_obs = problem.n_observations();
    let n_free = problem.free.len();
    let start = problem.coordinates(&problem.initial_guess);
    let bounds = problem.coordinate_bounds();
    let unit = DVector::from_iterator(
        n_free,
        start.iter().zip(&bounds).map(|(c, &(lo, hi))| {
            if c.abs() > 0.0 {
                c.abs()
            } else if hi > lo {
                hi - lo
            } else {
                1.0
            }
        }),
    );
    let eval = Evaluator { problem, bounds, unit };

    let mut u = start.component_div(&eval.unit);
    let mut r = eval.residuals(&u)?;
    let mut cost = r.norm_squared();
    let mut lambda = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let jac = eval.jacobian(&u, options.fd_step)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if cost == 0.0 || grad.amax() == 0.0 {
            converged = true;
            break;
        }
        loop {
            let mut damped = jtj.clone();
            for i in 0..n_free {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let trial = eval.project(&(&u + &step));
            let actual = &trial - &u;
            let small_step = actual.norm() <= options.xtol * (u.norm() + options.xtol);
            let r_trial = eval.residuals(&trial)?;
            let cost_trial = r_trial.norm_squared();
            if cost_trial < cost {
                let rel_decrease = (cost.sqrt() - cost_trial.sqrt()) / cost.sqrt();
                u = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 10.0).max(1e-15);
                if rel_decrease < options.ftol || small_step {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if small_step {
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // No descent direction left at machine precision.
                converged = true;
                break 'outer;
            }
        }
    }

    let jac = eval.jacobian(&u, options.fd_step)?;
    let jtj = jac.transpose() * &jac;
    let eig = jtj.clone().symmetric_eigen();
    let (i_min, &ev_min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one free parameter");
    let ev_max = eig.eigenvalues.amax();
    if !(ev_max > 0.0) || ev_min <= 1e-13 * ev_max {
        let v = eig.eigenvectors.column(i_min).into_owned();
        return Err(Error::RankDeficient(describe_direction(&problem.free, &v)));
    }
    let inv = eig.eigenvectors.clone()
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e))
        * eig.eigenvectors.transpose();
    let sigma2 = cost / (n_obs - n_free) as f64;
    let scale = DMatrix::from_diagonal(&eval.unit);
    let mut covariance = &scale * (inv * sigma2) * &scale;
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let confidence = (0..n_free).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();

    Ok(FitResult {
        estimate: problem.params_at(&eval.coords(&u)),
        free: problem.free.clone(),
        residual_norm: cost.sqrt(),
        covariance,
        confidence,
        iterations,
        converged,
    })
}
