//! Crude Monte Carlo of the original jump-diffusion.
//!
//! Renewable power follows Euler–Maruyama for `dP = −ϱP dt + σ dW`; the
//! swing equation takes one RK4 step with `P` frozen at the start of the
//! step. Steps are split at outage instants. Each path owns a ChaCha stream
//! keyed by `(seed, path index)`, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deterministic::{rk4_step, OutageSchedule};
use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Scaling the physical `(σ, λ)` correspond to; only used in reports.
    pub epsilon: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            n_paths: 100_000,
            seed: 0,
            epsilon: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::domain("dt", "must be > 0"));
        }
        if self.n_paths == 0 {
            return Err(Error::domain("n_paths", "must be >= 1"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::domain("epsilon", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    /// `Z = min θ̇` over the step grid.
    pub nadir: f64,
    pub p_final: f64,
    pub outages: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub renewable: Vec<f64>,
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One path for a given outage schedule; `record` keeps the sampled series.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &SystemParams,
    sigma: f64,
    schedule: &OutageSchedule,
    dt: f64,
    rng: &mut R,
    record: bool,
) -> (PathOutcome, Option<SampledPath>) {
    let horizon = params.horizon;
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;
    let jumps = schedule.times();
    let mut next = jumps.partition_point(|&s| s <= 0.0);
    let mut state = (0.0, 0.0);
    let mut p = 0.0;
    let mut nadir = 0.0_f64;
    let mut rec = record.then(|| SampledPath {
        times: vec![0.0],
        theta_dot: vec![0.0],
        renewable: vec![0.0],
    });

    for i in 0..steps {
        let t1 = if i + 1 == steps { horizon } else { (i + 1) as f64 * h };
        let mut t = i as f64 * h;
        while t < t1 {
            let seg_end = match jumps.get(next) {
                Some(&tj) if tj < t1 => tj.max(t),
                _ => t1,
            };
            let tau = seg_end - t;
            if tau > 0.0 {
                let n_out = next as f64;
                state = rk4_step(state, p - params.delta * n_out, tau, params);
                let xi: f64 = StandardNormal.sample(rng);
                p += -params.rho * p * tau + sigma * tau.sqrt() * xi;
                t = seg_end;
                nadir = nadir.min(state.1);
            }
            while jumps.get(next).is_some_and(|&tj| tj <= t) {
                next += 1;
            }
            if seg_end >= t1 {
                break;
            }
        }
        if let Some(r) = rec.as_mut() {
            r.times.push(t1);
            r.theta_dot.push(state.1);
            r.renewable.push(p);
        }
    }
    (
        PathOutcome {
            nadir,
            p_final: p,
            outages: jumps.len() as u32,
        },
        rec,
    )
}

/// Outage instants of a homogeneous Poisson process on `[0, T]`.
pub fn draw_outages<R: Rng + ?Sized>(lambda: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    if lambda <= 0.0 {
        return times;
    }
    let exp = Exp::new(lambda).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            break;
        }
        times.push(t);
    }
    times
}

/// One `Z` draw for path number `index`.
pub fn simulate_nadir(params: &SystemParams, sigma: f64, lambda: f64, cfg: &SimConfig, index: u64) -> PathOutcome {
    let mut rng = path_rng(cfg.seed, index);
    let times = draw_outages(lambda, params.horizon, &mut rng);
    let schedule = OutageSchedule::new(times, params.horizon).expect("sorted draws inside the horizon");
    simulate_path(params, sigma, &schedule, cfg.dt, &mut rng, false).0
}

/// All `cfg.n_paths` outcomes, in path order.
pub fn sample_outcomes(params: &SystemParams, sigma: f64, lambda: f64, cfg: &SimConfig) -> Result<Vec<PathOutcome>> {
    cfg.validate()?;
    if !(sigma >= 0.0 && lambda >= 0.0) {
        return Err(Error::domain("sigma/lambda", "must be >= 0"));
    }
    Ok((0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_nadir(params, sigma, lambda, cfg, i))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McWarning {
    /// No path reached the threshold; `ci95` is the rule-of-three bound.
    ZeroHits,
    /// Fewer than 30 hits; the normal approximation is unreliable.
    FewHits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub q_hat: f64,
    pub ci95: f64,
    pub n_hits: usize,
    pub n_paths: usize,
    pub warnings: Vec<McWarning>,
    pub nadir_samples: Vec<f64>,
}

impl McEstimate {
    pub fn from_outcomes(gamma: f64, outcomes: &[PathOutcome]) -> Self {
        let n = outcomes.len();
        let n_hits = outcomes.iter().filter(|o| o.nadir <= -gamma).count();
        let q_hat = n_hits as f64 / n as f64;
        let mut warnings = Vec::new();
        let ci95 = if n_hits == 0 {
            warnings.push(McWarning::ZeroHits);
            3.0 / n as f64
        } else {
            if n_hits < 30 {
                warnings.push(McWarning::FewHits);
            }
            1.96 * (q_hat * (1.0 - q_hat) / n as f64).sqrt()
        };
        McEstimate {
            q_hat,
            ci95,
            n_hits,
            n_paths: n,
            warnings,
            nadir_samples: outcomes.iter().map(|o| o.nadir).collect(),
        }
    }

    /// `−ε ln q̂`, the empirical counterpart of the decay rate.
    pub fn empirical_rate(&self, epsilon: f64) -> f64 {
        -epsilon * self.q_hat.ln()
    }
}

/// Fraction of paths with `Z ≤ −γ`.
pub fn estimate_q(gamma: f64, params: &SystemParams, sigma: f64, lambda: f64, cfg: &SimConfig) -> Result<McEstimate> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::domain("gamma", "must be >= 0"));
    }
    let outcomes = sample_outcomes(params, sigma, lambda, cfg)?;
    Ok(McEstimate::from_outcomes(gamma, &outcomes))
}

/// Sample mean and variance (unbiased) with the standard error of the variance
/// under a Gaussian population.
pub fn variance_with_se(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var, var * (2.0 / (n - 1.0)).sqrt())
}
