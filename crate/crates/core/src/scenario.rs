//! Candidate scenarios `(k, c)`: extremal trajectories, their nadir, rate,
//! and the renewable path they imply.

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::deterministic::Nadir;
use crate::error::{Error, Result};
use crate::expm::{expm_fixed, guard};
use crate::ld_matrices::{build_a, build_h, van_loan_blocks, Mat7, VanLoanBlocks, Vec7};
use crate::numeric::{refine_grid_min, uniform_grid};
use crate::params::{derive_coeffs, NoiseScaling, SystemParams};

pub const DEFAULT_GRID: usize = 2001;
const NADIR_TOL: f64 = 1e-10;
/// Largest accepted rounding-error bound on the Gaussian part, relative to
/// `max(1, |value|)`.
const ACTION_TOL: f64 = 1e-8;

/// Outage count plus the free initial derivatives `c = (f⁽³⁾, f⁽⁴⁾, f⁽⁵⁾)(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioVars {
    pub k: u32,
    pub c: Vector3<f64>,
}

impl ScenarioVars {
    pub fn new(k: u32, c: [f64; 3]) -> Self {
        ScenarioVars {
            k,
            c: Vector3::from(c),
        }
    }
}

/// `y0 = base(k) + E c`; the last coordinate enforces the Euler–Lagrange
/// equation at `t = 0`.
pub fn affine_initial_map(k: u32, params: &SystemParams) -> (Vec7, SMatrix<f64, 7, 3>) {
    let d = derive_coeffs(params);
    let kd = k as f64 * params.delta;
    let mu = params.mu;
    let mut base = Vec7::zeros();
    base[2] = -kd / mu;
    base[6] = -kd * d.a2 / mu + params.beta * params.rho * params.rho * kd / (mu * mu);
    let mut e = SMatrix::<f64, 7, 3>::zeros();
    e[(3, 0)] = 1.0;
    e[(4, 1)] = 1.0;
    e[(5, 2)] = 1.0;
    e[(6, 1)] = d.a3;
    (base, e)
}

pub fn initial_state(vars: &ScenarioVars, params: &SystemParams) -> Vec7 {
    let (base, e) = affine_initial_map(vars.k, params);
    let mut y0 = base + e * vars.c;
    // Keep y7(0) in the literal summation order.
    let d = derive_coeffs(params);
    let kd = vars.k as f64 * params.delta;
    let mu = params.mu;
    y0[6] = -kd * d.a2 / mu + d.a3 * vars.c[1] + params.beta * params.rho * params.rho * kd / (mu * mu);
    y0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalTrajectory {
    pub k: u32,
    pub y0: Vec7,
    pub times: Vec<f64>,
    pub samples: Vec<Vec7>,
    a: Mat7,
}

impl ExtremalTrajectory {
    pub fn grid_size(&self) -> usize {
        self.times.len()
    }

    pub fn system_matrix(&self) -> &Mat7 {
        &self.a
    }

    /// `e^{At} y0` evaluated from the nearest earlier grid sample.
    pub fn state_at(&self, t: f64) -> Result<Vec7> {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        let dt = t - self.times[i];
        if dt == 0.0 {
            return Ok(self.samples[i]);
        }
        Ok(expm_fixed(&(self.a * dt))? * self.samples[i])
    }

    pub fn frequency(&self) -> Vec<f64> {
        self.samples.iter().map(|y| y[1]).collect()
    }
}

pub fn eval_trajectory(vars: &ScenarioVars, params: &SystemParams, grid_size: usize) -> Result<ExtremalTrajectory> {
    if grid_size < 2 {
        return Err(Error::domain("grid_size", "need at least 2 points"));
    }
    if vars.c.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("c", "must be finite"));
    }
    let a = build_a(params).0;
    let times = uniform_grid(params.horizon, grid_size);
    let step = expm_fixed(&(a * (times[1] - times[0])))?;
    let y0 = initial_state(vars, params);
    let mut samples = Vec::with_capacity(grid_size);
    let mut y = y0;
    samples.push(y);
    for _ in 1..grid_size {
        y = step * y;
        samples.push(y);
    }
    guard(samples.last().unwrap().iter(), "trajectory")?;
    Ok(ExtremalTrajectory {
        k: vars.k,
        y0,
        times,
        samples,
        a,
    })
}

/// The `c` that makes the extremal trajectory reproduce the noise-free
/// `k`-outage response (zero renewable action).
pub fn zero_action_c(k: u32, params: &SystemParams) -> Vector3<f64> {
    let d = derive_coeffs(params);
    let [h1, h2, h3, mu] = d.h();
    let h8 = params.rho * params.delta * k as f64;
    // μf⁽³⁾ + h3 f̈ + h2 ḟ + h1 f + h8 = 0 with f = ḟ = 0, f̈ = −kδ/μ at t = 0.
    let f2 = -(k as f64) * params.delta / mu;
    let f3 = -(h3 * f2 + h8) / mu;
    let f4 = -(h3 * f3 + h2 * f2) / mu;
    let f5 = -(h3 * f4 + h2 * f3 + h1 * f2) / mu;
    Vector3::new(f3, f4, f5)
}

/// Minimum of `y2` over the horizon, refined between grid nodes.
pub fn nadir_of(traj: &ExtremalTrajectory) -> Nadir {
    let values = traj.frequency();
    if values.iter().all(|&v| v == 0.0) {
        return Nadir { value: 0.0, time: 0.0 };
    }
    let f = |t: f64| traj.state_at(t).map(|y| y[1]).unwrap_or(f64::INFINITY);
    let (time, value) = refine_grid_min(&traj.times, &values, f, NADIR_TOL);
    Nadir { value, time }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateValue {
    pub total: f64,
    pub jump_part: f64,
    pub gaussian_part: f64,
}

/// Rate `J(c, k) = kλ̃ + ½σ̃⁻² ∫₀ᵀ (hᵀy + ϱδk)² dt` in closed form.
pub fn rate_j(vars: &ScenarioVars, params: &SystemParams, noise: &NoiseScaling) -> Result<RateValue> {
    let blocks = van_loan_blocks(params, vars.k, params.horizon)?;
    rate_j_with(vars, params, noise, &blocks)
}

/// Same as [`rate_j`] with precomputed blocks for `vars.k`.
pub fn rate_j_with(
    vars: &ScenarioVars,
    params: &SystemParams,
    noise: &NoiseScaling,
    blocks: &VanLoanBlocks,
) -> Result<RateValue> {
    let y0 = initial_state(vars, params);
    let h8sq = build_h(params, vars.k).h8sq;
    let action = blocks.action_integral(&y0, h8sq, params.horizon);
    let scale = 0.5 / (noise.sigma_tilde * noise.sigma_tilde);
    let gaussian_part = scale * action;
    let bound = scale * blocks.action_error_bound(&y0, h8sq, params.horizon);
    if bound > ACTION_TOL * gaussian_part.abs().max(1.0) {
        return Err(Error::IllConditioned {
            quantity: "action quadratic form",
            bound,
        });
    }
    let jump_part = vars.k as f64 * noise.lambda_tilde;
    Ok(RateValue {
        total: jump_part + gaussian_part,
        jump_part,
        gaussian_part,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewablePath {
    /// `μy3 + αy2 + βy1`.
    pub p_star: Vec<f64>,
    /// `p_star + δk`, the renewable injection itself (zero at `t = 0`).
    pub renewable_component: Vec<f64>,
}

pub fn p_star(traj: &ExtremalTrajectory, params: &SystemParams) -> RenewablePath {
    let shift = params.delta * traj.k as f64;
    let p_star: Vec<f64> = traj
        .samples
        .iter()
        .map(|y| params.mu * y[2] + params.alpha * y[1] + params.beta * y[0])
        .collect();
    let renewable_component = p_star.iter().map(|p| p + shift).collect();
    RenewablePath {
        p_star,
        renewable_component,
    }
}

/// Sup-norm of the sixth-order Euler–Lagrange residual along the trajectory,
/// relative to the largest individual term.
pub fn el_residual(traj: &ExtremalTrajectory, params: &SystemParams, k: u32) -> f64 {
    let d = derive_coeffs(params);
    let mu2 = params.mu * params.mu;
    let forcing = params.beta * params.rho * params.rho * params.delta * k as f64;
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for y in &traj.samples {
        let terms = [
            forcing,
            -mu2 * y[6],
            mu2 * d.a3 * y[4],
            mu2 * d.a2 * y[2],
            mu2 * d.a1 * y[0],
        ];
        worst = worst.max(terms.iter().sum::<f64>().abs());
        scale = terms.iter().fold(scale, |s, t| s.max(t.abs()));
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}
