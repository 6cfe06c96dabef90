//! Per-outage-count rate through the Gaussian response of frequency.
//!
//! With `k` outages at time zero the frequency is Gaussian with mean
//! `k·m1(t)` and variance `εσ̃²·W(t)`, where `W` is the controllability
//! Gramian of the state `(θ, θ̇, P)` driven through `P`. Hitting `−γ` at `t`
//! costs `(γ + k·m1(t))₊² / (2σ̃² W(t))`, so the rate is `kλ̃` plus the minimum
//! of that over `t`. The minimum-energy forcing is `ν·K(t* − u)` with `K` the
//! response kernel from the renewable input to frequency.
//!
//! This route never forms the 7-dimensional trajectory system, whose Gram
//! matrix in `c` becomes nearly singular at small inertia, so the optimizer
//! uses it as an independent cross-check.

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::deterministic::deterministic_frequency;
use crate::error::{Error, Result};
use crate::expm::expm_fixed;
use crate::numeric::{golden_min, local_minima, uniform_grid};
use crate::params::{derive_coeffs, NoiseScaling, SystemParams};

const REFINE_TOL: f64 = 1e-10;

/// Exact optimum for one outage count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactRate {
    pub k: u32,
    pub total: f64,
    pub jump_part: f64,
    pub gaussian_part: f64,
    /// Time at which the extremal path first touches `−γ`.
    pub t_hit: f64,
    /// Renewable injection `P(T)` on the extremal path.
    pub renewable_t: f64,
    /// Equivalent trajectory parameters, available when the hit is at the horizon.
    pub c: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct ResponseModel {
    params: SystemParams,
    m: Matrix3<f64>,
    times: Vec<f64>,
    gram: Vec<Matrix3<f64>>,
    unit_mean: Vec<f64>,
}

fn state_matrix(p: &SystemParams) -> Matrix3<f64> {
    Matrix3::new(
        0.0, 1.0, 0.0,
        -p.beta / p.mu, -p.alpha / p.mu, 1.0 / p.mu,
        0.0, 0.0, -p.rho,
    )
}

/// `∫₀^τ e^{Ms} e3 e3ᵀ e^{Mᵀs} ds` by a single Van Loan exponential; only
/// used for short intervals where it is well conditioned.
fn short_gram(m: &Matrix3<f64>, tau: f64) -> Result<Matrix3<f64>> {
    let mut c = Matrix6::zeros();
    c.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-m));
    c[(2, 5)] = 1.0;
    c.fixed_view_mut::<3, 3>(3, 3).copy_from(&m.transpose());
    let e = expm_fixed(&(c * tau))?;
    let f12: Matrix3<f64> = e.fixed_view::<3, 3>(0, 3).into_owned();
    let f22: Matrix3<f64> = e.fixed_view::<3, 3>(3, 3).into_owned();
    let w = f22.transpose() * f12;
    Ok((w + w.transpose()) * 0.5)
}

impl ResponseModel {
    pub fn new(params: &SystemParams, grid_size: usize) -> Result<Self> {
        if grid_size < 3 {
            return Err(Error::domain("grid_size", "need at least 3 points"));
        }
        let m = state_matrix(params);
        let times = uniform_grid(params.horizon, grid_size);
        let dt = times[1] - times[0];
        let step = expm_fixed(&(m * dt))?;
        let w_step = short_gram(&m, dt)?;
        let mut gram = Vec::with_capacity(grid_size);
        let mut w = Matrix3::zeros();
        gram.push(w);
        for _ in 1..grid_size {
            // Splitting [0, t+Δ] at Δ keeps every term positive semidefinite.
            w = w_step + step * w * step.transpose();
            gram.push(w);
        }
        let unit_mean = times
            .iter()
            .map(|&t| deterministic_frequency(1, t, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResponseModel {
            params: *params,
            m,
            times,
            gram,
            unit_mean,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Gramian at an arbitrary time in `[0, T]`.
    pub fn gram_at(&self, t: f64) -> Result<Matrix3<f64>> {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        let tau = t - self.times[i];
        if tau == 0.0 {
            return Ok(self.gram[i]);
        }
        let phi = expm_fixed(&(self.m * tau))?;
        Ok(short_gram(&self.m, tau)? + phi * self.gram[i] * phi.transpose())
    }

    /// Frequency variance per unit `σ̃²` on the grid.
    pub fn frequency_variance(&self) -> Vec<f64> {
        self.gram.iter().map(|w| w[(1, 1)]).collect()
    }

    /// Variance of `P(t)` per unit `σ̃²`.
    pub fn renewable_variance(&self, t: f64) -> Result<f64> {
        Ok(self.gram_at(t)?[(2, 2)])
    }

    /// `(γ + k·m1(t))₊² / W(t)`: twice the Gaussian action per unit `σ̃⁻²`.
    fn hitting_cost(k: u32, gamma: f64, w11: f64, mean: f64) -> f64 {
        let gap = (gamma + k as f64 * mean).max(0.0);
        if gap == 0.0 {
            0.0
        } else if w11 <= 0.0 {
            f64::INFINITY
        } else {
            gap * gap / w11
        }
    }

    fn cost_at(&self, k: u32, gamma: f64, t: f64) -> f64 {
        let w11 = match self.gram_at(t) {
            Ok(w) => w[(1, 1)],
            Err(_) => return f64::INFINITY,
        };
        let mean = deterministic_frequency(1, t, &self.params).unwrap_or(f64::NAN);
        Self::hitting_cost(k, gamma, w11, mean)
    }

    /// Minimal-action way to reach `−γ` with `k` outages at time zero.
    pub fn exact_rate(&self, k: u32, gamma: f64, noise: &NoiseScaling) -> Result<ExactRate> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::domain("gamma", format!("must be > 0, got {gamma}")));
        }
        let costs: Vec<f64> = self
            .gram
            .iter()
            .zip(&self.unit_mean)
            .map(|(w, &m)| Self::hitting_cost(k, gamma, w[(1, 1)], m))
            .collect();

        let (t_hit, cost) = if let Some(i) = costs.iter().position(|&c| c == 0.0) {
            // Deterministic response already crosses: earliest crossing time.
            let t = if i == 0 {
                0.0
            } else {
                let (lo, hi) = (self.times[i - 1], self.times[i]);
                bisect_crossing(|t| gamma + k as f64 * deterministic_frequency(1, t, &self.params).unwrap_or(0.0), lo, hi)
            };
            (t, 0.0)
        } else {
            let mut best = (f64::NAN, f64::INFINITY);
            for i in local_minima(&costs) {
                let lo = self.times[i.saturating_sub(1)];
                let hi = self.times[(i + 1).min(self.times.len() - 1)];
                let cand = golden_min(|t| self.cost_at(k, gamma, t), lo, hi, REFINE_TOL);
                let cand = if cand.1 <= costs[i] { cand } else { (self.times[i], costs[i]) };
                if cand.1 < best.1 {
                    best = cand;
                }
            }
            best
        };

        let s2 = noise.sigma_tilde * noise.sigma_tilde;
        let gaussian_part = 0.5 * cost / s2;
        let jump_part = k as f64 * noise.lambda_tilde;

        let (renewable_t, c) = if cost == 0.0 || !cost.is_finite() {
            let c = (cost == 0.0).then(|| deterministic_c(k, &self.params));
            (0.0, c)
        } else {
            let w = self.gram_at(t_hit)?;
            let mean = k as f64 * deterministic_frequency(1, t_hit, &self.params)?;
            let nu = (-gamma - mean) / w[(1, 1)];
            let decay = (-self.params.rho * (self.params.horizon - t_hit)).exp();
            let p_t = nu * w[(2, 1)] * decay;
            let at_horizon = (self.params.horizon - t_hit).abs() <= 1e-8 * self.params.horizon;
            let c = if at_horizon {
                Some(self.recover_c(k, nu)?)
            } else {
                None
            };
            (p_t, c)
        };

        Ok(ExactRate {
            k,
            total: jump_part + gaussian_part,
            jump_part,
            gaussian_part,
            t_hit,
            renewable_t,
            c,
        })
    }

    /// Trajectory parameters of the extremal path whose forcing is
    /// `ν·K(T − u)`, obtained by matching the forcing and its first two
    /// derivatives at `u = 0`.
    fn recover_c(&self, k: u32, nu: f64) -> Result<[f64; 3]> {
        let p = &self.params;
        let e = expm_fixed(&(self.m * p.horizon))?;
        let k0 = e[(1, 2)];
        let k1 = (self.m * e)[(1, 2)];
        let k2 = (self.m * self.m * e)[(1, 2)];
        let (w0, w1, w2) = (nu * k0, -nu * k1, nu * k2);
        let [h1, h2, h3, mu] = derive_coeffs(p).h();
        let h8 = p.rho * p.delta * k as f64;
        let f2 = -(k as f64) * p.delta / mu;
        let c1 = (w0 - h3 * f2 - h8) / mu;
        let c2 = (w1 - h3 * c1 - h2 * f2) / mu;
        let c3 = (w2 - h3 * c2 - h2 * c1 - h1 * f2) / mu;
        Ok([c1, c2, c3])
    }
}

fn deterministic_c(k: u32, p: &SystemParams) -> [f64; 3] {
    let c = crate::scenario::zero_action_c(k, p);
    [c[0], c[1], c[2]]
}

/// Root of an increasing-to-negative function on `[lo, hi]` with `f(lo) > 0 ≥ f(hi)`.
fn bisect_crossing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    hi
}

/// Convenience: exact rates for `k = 0..=k_max`.
pub fn exact_rates(
    params: &SystemParams,
    gamma: f64,
    noise: &NoiseScaling,
    k_max: u32,
    grid_size: usize,
) -> Result<Vec<ExactRate>> {
    let model = ResponseModel::new(params, grid_size)?;
    (0..=k_max).map(|k| model.exact_rate(k, gamma, noise)).collect()
}

/// Vector form used by callers that work with `nalgebra` types.
pub fn c_vector(rate: &ExactRate) -> Option<Vector3<f64>> {
    rate.c.map(Vector3::from)
}
