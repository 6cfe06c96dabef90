//! Most likely scenario: minimise `J(c, k)` subject to the extremal
//! trajectory reaching `−γ`, then pick the best outage count.
//!
//! For fixed `k` the Gaussian action is a quadratic form in `d = c − c_det(k)`
//! (the deterministic continuation has zero action and is the unconstrained
//! minimiser), and for a fixed hitting time the constraint is linear in `c`.
//! Each SQP iterate therefore solves its subproblem in closed form; the
//! active time is re-located on the updated trajectory and the step is
//! safeguarded by an ℓ1 merit line search.

use nalgebra::{Cholesky, Matrix3, RowSVector, SMatrix, Vector3, U3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deterministic::{k_bar, Nadir};
use crate::error::{Error, Result};
use crate::expm::expm_fixed;
use crate::ld_matrices::{build_a, van_loan_blocks, Mat7, Vec7};
use crate::numeric::{golden_min, local_minima, uniform_grid};
use crate::params::{NoiseScaling, SystemParams};
use crate::scenario::{affine_initial_map, eval_trajectory, p_star, zero_action_c, RateValue, ScenarioVars};
use crate::variance_rate::{ExactRate, ResponseModel};

const MAX_ITER: usize = 200;
const REFINE_TOL: f64 = 1e-10;
/// Relative disagreement with the variance route that marks a solve as untrustworthy.
const CROSS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub k_max_extra: u32,
    pub multistarts: usize,
    pub constraint_tol: f64,
    pub opt_tol: f64,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            k_max_extra: 2,
            multistarts: 8,
            constraint_tol: 1e-7,
            opt_tol: 1e-9,
            grid_size: 2001,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multistarts == 0 {
            return Err(Error::domain("multistarts", "must be positive"));
        }
        if self.constraint_tol.is_nan() || self.constraint_tol <= 0.0 {
            return Err(Error::domain("constraint_tol", "must be positive"));
        }
        if self.opt_tol.is_nan() || self.opt_tol <= 0.0 {
            return Err(Error::domain("opt_tol", "must be positive"));
        }
        if self.grid_size < 3 {
            return Err(Error::domain("grid_size", "must be at least 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleK,
    /// The trajectory-space solve disagreed with the variance route; the
    /// reported values come from the latter.
    IllConditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub k: u32,
    pub c: [f64; 3],
    pub rate: RateValue,
    pub nadir: Nadir,
    /// Renewable injection `P(T)` on the extremal path.
    pub renewable_t: f64,
    pub feasible: bool,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Rate from the variance route, kept for auditing.
    pub exact_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerK {
    pub k: u32,
    pub j: f64,
    pub feasible: bool,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MostLikelyScenario {
    pub k_star: u32,
    pub c_star: [f64; 3],
    pub j_star: RateValue,
    pub nadir: Nadir,
    /// Renewable injection at the horizon, `μθ̈ + αθ̇ + βθ + δk` at `T`.
    pub p_star_t: f64,
    /// `μy3 + αy2 + βy1` at `T`, i.e. the above without the `δk` shift.
    pub p_formula_t: f64,
    pub per_k: Vec<PerK>,
    pub status: SolveStatus,
    pub seed: u64,
    pub inner: Vec<InnerSolution>,
}

/// Everything that depends only on the system parameters and grid.
#[derive(Debug, Clone)]
pub struct Solver {
    params: SystemParams,
    cfg: SolveConfig,
    a: Mat7,
    times: Vec<f64>,
    /// Second row of `e^{A t_i}`, so that `y2(t_i) = rows[i]·y0`.
    rows: Vec<RowSVector<f64, 7>>,
    e: SMatrix<f64, 7, 3>,
    base_unit: Vec7,
    gram: Matrix3<f64>,
    chol: Option<Cholesky<f64, U3>>,
    /// Set when the Van Loan blocks tripped the overflow guard.
    overflow: Option<Error>,
    model: ResponseModel,
    seed_from_exact: bool,
}

struct Candidate {
    c: Vector3<f64>,
    gauss: f64,
    nadir: Nadir,
    iterations: usize,
    converged: bool,
}

impl Solver {
    pub fn new(params: &SystemParams, cfg: &SolveConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let a = build_a(params).0;
        let times = uniform_grid(params.horizon, cfg.grid_size);
        let step = expm_fixed(&(a * (times[1] - times[0])))?;
        let mut row = RowSVector::<f64, 7>::zeros();
        row[1] = 1.0;
        let mut rows = Vec::with_capacity(times.len());
        for _ in 0..times.len() {
            rows.push(row);
            row *= step;
        }
        let (base_unit, e) = affine_initial_map(1, params);
        // An overflowing Gram matrix leaves only the variance route; every
        // per-k result is then flagged rather than silently degraded.
        let (gram, overflow) = match van_loan_blocks(params, 0, params.horizon) {
            Ok(blocks) => {
                let g = e.transpose() * blocks.b1 * e;
                ((g + g.transpose()) * 0.5, None)
            }
            Err(err @ Error::Overflow { .. }) => (Matrix3::from_element(f64::NAN), Some(err)),
            Err(err) => return Err(err),
        };
        let chol = overflow.is_none().then(|| Cholesky::new(gram)).flatten();
        let model = ResponseModel::new(params, cfg.grid_size)?;
        Ok(Solver {
            params: *params,
            cfg: *cfg,
            a,
            times,
            rows,
            e,
            base_unit,
            gram,
            chol,
            overflow,
            model,
            seed_from_exact: true,
        })
    }

    /// The overflow error that forced the variance-route fallback, if any.
    pub fn overflow(&self) -> Option<&Error> {
        self.overflow.as_ref()
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    fn row_at(&self, t: f64) -> RowSVector<f64, 7> {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        let tau = t - self.times[i];
        if tau == 0.0 {
            return self.rows[i];
        }
        match expm_fixed(&(self.a * tau)) {
            Ok(e) => self.rows[i] * e,
            Err(_) => RowSVector::from_element(f64::NAN),
        }
    }

    fn y0(&self, k: u32, c: &Vector3<f64>) -> Vec7 {
        self.base_unit * k as f64 + self.e * c
    }

    fn freq_at(&self, y0: &Vec7, t: f64) -> f64 {
        let v = (self.row_at(t) * y0)[(0, 0)];
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Grid values of `y2` for the given initial state.
    fn freq_grid(&self, y0: &Vec7) -> Vec<f64> {
        self.rows.iter().map(|r| (r * y0)[(0, 0)]).collect()
    }

    /// Refined local minima of `y2` whose values are within `opt_tol` of the
    /// global minimum; the first entry is the global one.
    fn active_times(&self, y0: &Vec7) -> Vec<Nadir> {
        let values = self.freq_grid(y0);
        let mut found: Vec<Nadir> = local_minima(&values)
            .into_iter()
            .map(|i| {
                let lo = self.times[i.saturating_sub(1)];
                let hi = self.times[(i + 1).min(self.times.len() - 1)];
                let (t, v) = golden_min(|t| self.freq_at(y0, t), lo, hi, REFINE_TOL);
                if v < values[i] {
                    Nadir { value: v, time: t }
                } else {
                    Nadir {
                        value: values[i],
                        time: self.times[i],
                    }
                }
            })
            .collect();
        found.sort_by(|a, b| a.value.total_cmp(&b.value));
        let best = found[0].value;
        found.retain(|n| n.value <= best + self.cfg.opt_tol);
        found
    }

    fn nadir(&self, k: u32, c: &Vector3<f64>) -> Nadir {
        let y0 = self.y0(k, c);
        if y0.iter().all(|&v| v == 0.0) {
            return Nadir { value: 0.0, time: 0.0 };
        }
        self.active_times(&y0)[0]
    }

    /// Gaussian action of `c` per unit `σ̃⁻²`, i.e. `½ dᵀGd`.
    fn action(&self, k: u32, c: &Vector3<f64>) -> f64 {
        let d = c - zero_action_c(k, &self.params);
        0.5 * (d.transpose() * self.gram * d)[(0, 0)]
    }

    /// Closed-form minimiser of the action over the half-space
    /// `y2(t; c) ≤ −γ` for a fixed time `t`.
    fn project(&self, k: u32, gamma: f64, t: f64) -> Option<(Vector3<f64>, f64)> {
        let chol = self.chol.as_ref()?;
        let row = self.row_at(t);
        let ell: Vector3<f64> = (row * self.e).transpose();
        let ell0 = (row * self.base_unit)[(0, 0)] * k as f64;
        let c_det = zero_action_c(k, &self.params);
        let slack = ell.dot(&c_det) + ell0 + gamma;
        if slack <= 0.0 {
            return Some((c_det, 0.0));
        }
        let g_inv_ell = chol.solve(&ell);
        let denom = ell.dot(&g_inv_ell);
        if !(denom > 0.0 && denom.is_finite()) {
            return None;
        }
        let c = c_det - g_inv_ell * (slack / denom);
        Some((c, 0.5 * slack * slack / denom))
    }

    fn local_solve(&self, k: u32, gamma: f64, start: Vector3<f64>) -> Option<Candidate> {
        let mut c = start;
        let mut penalty = 1.0_f64;
        let merit = |c: &Vector3<f64>, pen: f64| {
            let n = self.nadir(k, c);
            self.action(k, c) + pen * (n.value + gamma).max(0.0)
        };
        for it in 0..MAX_ITER {
            let y0 = self.y0(k, &c);
            let actives = if y0.iter().all(|&v| v == 0.0) {
                vec![Nadir { value: 0.0, time: self.params.horizon }]
            } else {
                self.active_times(&y0)
            };
            // Among near-tied minima take the subproblem with the smallest action.
            let (target, obj) = actives
                .iter()
                .filter_map(|n| self.project(k, gamma, n.time))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            let nadir = actives[0];
            let feasible = nadir.value <= -gamma + self.cfg.constraint_tol;
            let dir = target - c;
            if dir.norm() <= self.cfg.opt_tol * (1.0 + c.norm()) && feasible {
                return Some(Candidate {
                    c,
                    gauss: self.action(k, &c),
                    nadir,
                    iterations: it,
                    converged: true,
                });
            }
            // Multiplier of the linearised constraint bounds the exact penalty weight.
            if let Some(chol) = self.chol.as_ref() {
                let ell: Vector3<f64> = (self.row_at(nadir.time) * self.e).transpose();
                let denom = ell.dot(&chol.solve(&ell));
                if denom > 0.0 && obj > 0.0 {
                    penalty = penalty.max(2.0 * (2.0 * obj / denom).sqrt());
                }
            }
            let current = merit(&c, penalty);
            let mut step = 1.0;
            loop {
                let trial = c + dir * step;
                if merit(&trial, penalty) <= current || step < 1e-10 {
                    c = trial;
                    break;
                }
                step *= 0.5;
            }
        }
        let nadir = self.nadir(k, &c);
        Some(Candidate {
            c,
            gauss: self.action(k, &c),
            nadir,
            iterations: MAX_ITER,
            converged: false,
        })
    }

    /// Scale `m` such that `m·c_ref` just reaches `−γ`.
    fn touching_scale(&self, k: u32, gamma: f64, c_ref: &Vector3<f64>) -> Option<f64> {
        let reach = |m: f64| self.nadir(k, &(c_ref * m)).value + gamma;
        if reach(1.0) <= 0.0 {
            let mut lo = 0.0;
            if reach(lo) <= 0.0 {
                return Some(0.0);
            }
            let mut hi = 1.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if reach(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        for sign in [1.0, -1.0] {
            let mut lo = if sign > 0.0 { 1.0 } else { 0.0 };
            let mut hi = sign * 2.0;
            for _ in 0..60 {
                if reach(hi) <= 0.0 {
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if reach(mid) <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return Some(hi);
                }
                lo = hi;
                hi *= 2.0;
            }
        }
        None
    }

    fn seeds(&self, k: u32, gamma: f64, k_bar: u32, exact: &ExactRate) -> Vec<Vector3<f64>> {
        let mut seeds = Vec::new();
        let reference = zero_action_c(k.max(1), &self.params);
        let touching = self.touching_scale(k, gamma, &reference).map(|m| reference * m);
        if let Some(s) = touching {
            seeds.push(s);
        }
        if k < k_bar {
            seeds.push(zero_action_c(k_bar, &self.params));
        }
        seeds.push(zero_action_c(k, &self.params));
        if let Some(c) = exact.c.filter(|_| self.seed_from_exact) {
            seeds.push(Vector3::from(c));
        }
        let anchor = touching.unwrap_or(reference);
        let scale = anchor.norm().max(1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(k as u64);
        let magnitudes = [1e-2, 1e-1, 1.0];
        let target = self.cfg.multistarts.max(seeds.len() + magnitudes.len());
        let mut i = 0;
        while seeds.len() < target {
            let mag = magnitudes[i % magnitudes.len()];
            let noise: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            seeds.push(anchor + noise * (mag * scale));
            i += 1;
        }
        seeds
    }

    /// Best local optimum of `J(·, k)` over all starts.
    pub fn solve_inner(&self, k: u32, gamma: f64, noise: &NoiseScaling) -> Result<InnerSolution> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::domain("gamma", format!("must be > 0, got {gamma}")));
        }
        let kb = k_bar(gamma, &self.params)?;
        let exact = self.model.exact_rate(k, gamma, noise)?;
        let s2 = noise.sigma_tilde * noise.sigma_tilde;
        let jump_part = k as f64 * noise.lambda_tilde;

        let mut best: Option<Candidate> = None;
        let starts = if self.chol.is_some() { self.seeds(k, gamma, kb, &exact) } else { Vec::new() };
        for start in starts {
            let Some(cand) = self.local_solve(k, gamma, start) else { continue };
            let feasible = cand.nadir.value <= -gamma + self.cfg.constraint_tol;
            if !feasible || !cand.gauss.is_finite() {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => cand.gauss < b.gauss - self.cfg.opt_tol * s2,
            };
            if better {
                best = Some(cand);
            }
        }

        let exact_total = exact.total;
        let trusted = best.as_ref().map(|b| {
            let j = jump_part + b.gauss / s2;
            let tol = CROSS_CHECK_TOL * j.abs().max(1.0);
            let hits_horizon = (exact.t_hit - self.params.horizon).abs() <= 1e-8 * self.params.horizon;
            // The family contains the exact optimum when it hits at T, so the
            // two must agree; it can never beat the exact route.
            let below = j < exact_total - tol;
            let above = hits_horizon && j > exact_total + tol;
            !(below || above) && self.chol.is_some()
        });

        match (best, trusted) {
            (Some(b), Some(true)) => {
                let gaussian_part = b.gauss / s2;
                let vars = ScenarioVars { k, c: b.c };
                let traj = eval_trajectory(&vars, &self.params, self.cfg.grid_size)?;
                let renewable_t = *p_star(&traj, &self.params).renewable_component.last().unwrap();
                Ok(InnerSolution {
                    k,
                    c: [b.c[0], b.c[1], b.c[2]],
                    rate: RateValue {
                        total: jump_part + gaussian_part,
                        jump_part,
                        gaussian_part,
                    },
                    nadir: b.nadir,
                    renewable_t,
                    feasible: true,
                    status: if b.converged { SolveStatus::Converged } else { SolveStatus::MaxIter },
                    iterations: b.iterations,
                    exact_rate: exact_total,
                })
            }
            (best, _) if exact_total.is_finite() => {
                let c = exact
                    .c
                    .or_else(|| best.as_ref().map(|b| [b.c[0], b.c[1], b.c[2]]))
                    .unwrap_or([f64::NAN; 3]);
                Ok(InnerSolution {
                    k,
                    c,
                    rate: RateValue {
                        total: exact_total,
                        jump_part: exact.jump_part,
                        gaussian_part: exact.gaussian_part,
                    },
                    nadir: Nadir {
                        value: -gamma,
                        time: exact.t_hit,
                    },
                    renewable_t: exact.renewable_t,
                    feasible: true,
                    status: SolveStatus::IllConditioned,
                    iterations: best.map_or(0, |b| b.iterations),
                    exact_rate: exact_total,
                })
            }
            _ => Ok(InnerSolution {
                k,
                c: [f64::NAN; 3],
                rate: RateValue {
                    total: f64::INFINITY,
                    jump_part,
                    gaussian_part: f64::INFINITY,
                },
                nadir: Nadir {
                    value: f64::NAN,
                    time: f64::NAN,
                },
                renewable_t: f64::NAN,
                feasible: false,
                status: SolveStatus::InfeasibleK,
                iterations: 0,
                exact_rate: exact_total,
            }),
        }
    }

    /// Scan `k = 0..=k̄+extra` and return the most likely scenario.
    pub fn solve(&self, gamma: f64, noise: &NoiseScaling) -> Result<MostLikelyScenario> {
        let kb = k_bar(gamma, &self.params)?;
        let k_max = kb + self.cfg.k_max_extra;
        let inner = (0..=k_max)
            .into_par_iter()
            .map(|k| self.solve_inner(k, gamma, noise))
            .collect::<Result<Vec<_>>>()?;

        let per_k: Vec<PerK> = inner
            .iter()
            .map(|s| PerK {
                k: s.k,
                j: s.rate.total,
                feasible: s.feasible,
                status: s.status,
            })
            .collect();

        // Ties within opt_tol go to the smaller k because the scan is ascending.
        let mut chosen: Option<&InnerSolution> = None;
        for s in inner.iter().filter(|s| s.feasible) {
            if chosen.is_none_or(|b| s.rate.total < b.rate.total - self.cfg.opt_tol) {
                chosen = Some(s);
            }
        }
        let result = match chosen {
            Some(s) => MostLikelyScenario {
                k_star: s.k,
                c_star: s.c,
                j_star: s.rate,
                nadir: s.nadir,
                p_star_t: s.renewable_t,
                p_formula_t: s.renewable_t - self.params.delta * s.k as f64,
                per_k,
                status: s.status,
                seed: self.cfg.seed,
                inner: inner.clone(),
            },
            None => MostLikelyScenario {
                k_star: 0,
                c_star: [f64::NAN; 3],
                j_star: RateValue {
                    total: f64::INFINITY,
                    jump_part: f64::NAN,
                    gaussian_part: f64::NAN,
                },
                nadir: Nadir {
                    value: f64::NAN,
                    time: f64::NAN,
                },
                p_star_t: f64::NAN,
                p_formula_t: f64::NAN,
                per_k,
                status: SolveStatus::InfeasibleK,
                seed: self.cfg.seed,
                inner: inner.clone(),
            },
        };
        Ok(result)
    }
}

pub fn solve_inner(
    k: u32,
    gamma: f64,
    params: &SystemParams,
    noise: &NoiseScaling,
    cfg: &SolveConfig,
) -> Result<InnerSolution> {
    Solver::new(params, cfg)?.solve_inner(k, gamma, noise)
}

pub fn solve(gamma: f64, params: &SystemParams, noise: &NoiseScaling, cfg: &SolveConfig) -> Result<MostLikelyScenario> {
    Solver::new(params, cfg)?.solve(gamma, noise)
}
