//! Parameter sweeps over the most-likely-scenario solve.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{MostLikelyScenario, SolveConfig, SolveStatus, Solver};
use crate::params::{scale_noise, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Sigma,
    Lambda,
    Mu,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub name: Axis,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl AxisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::domain("sweep.points", "must be >= 1"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::domain("sweep.range", format!("need finite min <= max, got [{}, {}]", self.min, self.max)));
        }
        if self.spacing == Spacing::Log && self.min <= 0.0 {
            return Err(Error::domain("sweep.range", "log spacing needs min > 0"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let u = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.min + u * (self.max - self.min),
                    Spacing::Log => (self.min.ln() + u * (self.max.ln() - self.min.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

impl Default for GridSpec {
    /// 50 × 50 over `σ ∈ [0.03, 0.5]` (linear) and `λ ∈ [1e-10, 1e-1]` (log).
    fn default() -> Self {
        GridSpec {
            axes: vec![
                AxisSpec {
                    name: Axis::Sigma,
                    min: 0.03,
                    max: 0.5,
                    points: 50,
                    spacing: Spacing::Linear,
                },
                AxisSpec {
                    name: Axis::Lambda,
                    min: 1e-10,
                    max: 1e-1,
                    points: 50,
                    spacing: Spacing::Log,
                },
            ],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::domain("sweep.axes", "at least one axis required"));
        }
        for (i, a) in self.axes.iter().enumerate() {
            a.validate()?;
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::domain("sweep.axes", format!("axis {:?} repeated", a.name)));
            }
        }
        Ok(())
    }

    /// Cartesian product in row-major order (first axis slowest).
    pub fn points(&self, base: &SweepPoint) -> Vec<SweepPoint> {
        let mut out = vec![*base];
        for axis in &self.axes {
            let values = axis.values();
            out = out
                .iter()
                .flat_map(|p| values.iter().map(move |&v| p.with(axis.name, v)))
                .collect();
        }
        out
    }
}

/// Physical coordinates of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl SweepPoint {
    pub fn with(mut self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::Sigma => self.sigma = value,
            Axis::Lambda => self.lambda = value,
            Axis::Mu => self.mu = value,
            Axis::Gamma => self.gamma = value,
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioClass {
    Conventional,
    Renewable,
    Mixed,
    Infeasible,
}

impl ScenarioClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioClass::Conventional => "conventional",
            ScenarioClass::Renewable => "renewable",
            ScenarioClass::Mixed => "mixed",
            ScenarioClass::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Largest Gaussian share of `J*` still called conventional.
    pub gaussian_share: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { gaussian_share: 0.01 }
    }
}

pub fn classify(s: &MostLikelyScenario, cfg: &ClassifyConfig) -> ScenarioClass {
    if s.status == SolveStatus::InfeasibleK || !s.j_star.total.is_finite() {
        ScenarioClass::Infeasible
    } else if s.k_star == 0 {
        ScenarioClass::Renewable
    } else if s.j_star.gaussian_part <= cfg.gaussian_share * s.j_star.total {
        ScenarioClass::Conventional
    } else {
        ScenarioClass::Mixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    pub j_star: f64,
    pub k_star: Option<u32>,
    pub p_star_t: f64,
    pub gaussian_part: f64,
    pub jump_part: f64,
    pub class: ScenarioClass,
    /// Solver status, or the error text when the point failed.
    pub status: String,
}

impl SweepRow {
    fn failed(p: &SweepPoint, err: &Error) -> Self {
        SweepRow {
            sigma: p.sigma,
            lambda: p.lambda,
            mu: p.mu,
            gamma: p.gamma,
            j_star: f64::NAN,
            k_star: None,
            p_star_t: f64::NAN,
            gaussian_part: f64::NAN,
            jump_part: f64::NAN,
            class: ScenarioClass::Infeasible,
            status: format!("error: {err}"),
        }
    }
}

pub fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max-iter",
        SolveStatus::InfeasibleK => "infeasible-k",
        SolveStatus::IllConditioned => "ill-conditioned",
    }
}

/// Fixed inputs shared by every point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepBase {
    pub params: SystemParams,
    pub point: SweepPoint,
    pub epsilon: f64,
    pub solver: SolveConfig,
    pub classify: ClassifyConfig,
}

impl SweepBase {
    pub fn new(params: SystemParams, gamma: f64, sigma: f64, lambda: f64, epsilon: f64) -> Self {
        SweepBase {
            params,
            point: SweepPoint {
                sigma,
                lambda,
                mu: params.mu,
                gamma,
            },
            epsilon,
            solver: SolveConfig::default(),
            classify: ClassifyConfig::default(),
        }
    }

    fn solve_with(&self, solver: &Solver, p: &SweepPoint) -> Result<MostLikelyScenario> {
        let noise = scale_noise(p.sigma, p.lambda, self.epsilon)?;
        solver.solve(p.gamma, &noise)
    }

    /// The scenario at one point, building a fresh solver.
    pub fn solve_at(&self, p: &SweepPoint) -> Result<MostLikelyScenario> {
        let solver = Solver::new(&self.params.with_mu(p.mu), &self.solver)?;
        self.solve_with(&solver, p)
    }

    fn row(&self, solver: &Result<Solver>, p: &SweepPoint) -> SweepRow {
        let outcome = solver
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|s| self.solve_with(s, p));
        match outcome {
            Ok(s) => SweepRow {
                sigma: p.sigma,
                lambda: p.lambda,
                mu: p.mu,
                gamma: p.gamma,
                j_star: s.j_star.total,
                k_star: Some(s.k_star),
                p_star_t: s.p_star_t,
                gaussian_part: s.j_star.gaussian_part,
                jump_part: s.j_star.jump_part,
                class: classify(&s, &self.classify),
                status: status_label(s.status).to_owned(),
            },
            Err(e) => SweepRow::failed(p, &e),
        }
    }
}

/// Solves every grid point in parallel; rows come back in grid order.
pub fn run_sweep(base: &SweepBase, grid: &GridSpec) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    base.solver.validate()?;
    let points = grid.points(&base.point);

    // One solver per distinct inertia, keyed by bit pattern for a total order.
    let mus: Vec<u64> = {
        let mut m: Vec<u64> = points.iter().map(|p| p.mu.to_bits()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let solvers: BTreeMap<u64, Result<Solver>> = mus
        .par_iter()
        .map(|&bits| {
            let params = base.params.with_mu(f64::from_bits(bits));
            (bits, params.validate().and_then(|_| Solver::new(&params, &base.solver)))
        })
        .collect();

    Ok(points
        .par_iter()
        .map(|p| base.row(&solvers[&p.mu.to_bits()], p))
        .collect())
}

/// Inertia sweep: a single `μ` axis over `[min, max]`.
pub fn inertia_sweep(base: &SweepBase, min: f64, max: f64, points: usize) -> Result<Vec<SweepRow>> {
    let grid = GridSpec {
        axes: vec![AxisSpec {
            name: Axis::Mu,
            min,
            max,
            points,
            spacing: Spacing::Linear,
        }],
    };
    run_sweep(base, &grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundary {
    /// Midpoint of the final bracket.
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub k_below: u32,
    pub k_above: u32,
    pub evaluations: usize,
}

/// Bisects in `σ` for the point where `k*` drops below its value at `lo`.
pub fn phase_boundary(base: &SweepBase, lo: f64, hi: f64, tol: f64) -> Result<PhaseBoundary> {
    if !(lo > 0.0 && lo < hi && tol > 0.0) {
        return Err(Error::domain("bracket", format!("need 0 < lo < hi and tol > 0, got [{lo}, {hi}], {tol}")));
    }
    let solver = Solver::new(&base.params.with_mu(base.point.mu), &base.solver)?;
    let k_at = |sigma: f64| -> Result<u32> {
        let p = SweepPoint { sigma, ..base.point };
        Ok(base.solve_with(&solver, &p)?.k_star)
    };
    let k_below = k_at(lo)?;
    let k_above = k_at(hi)?;
    if k_above >= k_below {
        return Err(Error::domain("bracket", format!("k* does not drop across [{lo}, {hi}] ({k_below} -> {k_above})")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut evaluations = 2;
    let mut k_hi = k_above;
    while b - a > tol {
        let m = 0.5 * (a + b);
        let k = k_at(m)?;
        evaluations += 1;
        if k >= k_below {
            a = m;
        } else {
            b = m;
            k_hi = k;
        }
    }
    Ok(PhaseBoundary {
        sigma: 0.5 * (a + b),
        lower: a,
        upper: b,
        k_below,
        k_above: k_hi,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> SweepBase {
        SweepBase::new(SystemParams::default(), 0.1397, 0.2916, 1e-3, 0.1)
    }

    #[test]
    fn axis_spacing() {
        let lin = AxisSpec {
            name: Axis::Sigma,
            min: 0.0,
            max: 1.0,
            points: 5,
            spacing: Spacing::Linear,
        };
        assert_eq!(lin.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let log = AxisSpec {
            name: Axis::Lambda,
            min: 1e-10,
            max: 1e-1,
            points: 10,
            spacing: Spacing::Log,
        };
        let v = log.values();
        assert!((v[1] / 1e-9 - 1.0).abs() < 1e-12);
        assert!((v[9] / 1e-1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::default().validate().is_ok());
        assert!(GridSpec { axes: vec![] }.validate().is_err());
        let mut g = GridSpec::default();
        g.axes[1].name = Axis::Sigma;
        assert!(g.validate().is_err());
        g = GridSpec::default();
        g.axes[1].min = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn grid_order_is_row_major() {
        let g = GridSpec {
            axes: vec![
                AxisSpec { name: Axis::Sigma, min: 0.1, max: 0.2, points: 2, spacing: Spacing::Linear },
                AxisSpec { name: Axis::Gamma, min: 0.1, max: 0.3, points: 3, spacing: Spacing::Linear },
            ],
        };
        let pts = g.points(&baseline().point);
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[0].sigma, pts[0].gamma), (0.1, 0.1));
        assert_eq!((pts[2].sigma, pts[2].gamma), (0.1, 0.3));
        assert_eq!((pts[3].sigma, pts[3].gamma), (0.2, 0.1));
        assert!(pts.iter().all(|p| p.lambda == 1e-3 && p.mu == 12.0));
    }

    #[test]
    fn pure_jump_corner_is_conventional() {
        let mut base = baseline();
        base.point.sigma = 0.03;
        base.point.lambda = 1e-10;
        let rows = run_sweep(&base, &GridSpec { axes: vec![AxisSpec { name: Axis::Sigma, min: 0.03, max: 0.03, points: 1, spacing: Spacing::Linear }] }).unwrap();
        let r = &rows[0];
        assert_eq!(r.k_star, Some(2));
        assert_eq!(r.class, ScenarioClass::Conventional);
        assert!((r.j_star - 2.0 * 0.1 * 1e10_f64.ln()).abs() < 0.02);
    }

    #[test]
    fn classification_knob() {
        let base = baseline();
        let s = base.solve_at(&base.point).unwrap();
        assert_eq!(classify(&s, &ClassifyConfig::default()), ScenarioClass::Mixed);
        assert_eq!(classify(&s, &ClassifyConfig { gaussian_share: 0.9 }), ScenarioClass::Conventional);
    }

    #[test]
    fn sweep_rows_independent_of_thread_count() {
        let base = baseline();
        let grid = GridSpec {
            axes: vec![
                AxisSpec { name: Axis::Sigma, min: 0.1, max: 0.5, points: 3, spacing: Spacing::Linear },
                AxisSpec { name: Axis::Mu, min: 6.0, max: 18.0, points: 2, spacing: Spacing::Linear },
            ],
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_sweep(&base, &grid)).unwrap();
        let b = four.install(|| run_sweep(&base, &grid)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn boundary_bracket_is_checked() {
        let base = baseline();
        assert!(phase_boundary(&base, 0.3, 0.2, 1e-3).is_err());
        assert!(phase_boundary(&base, 0.4, 0.45, 1e-3).is_err());
    }
}
