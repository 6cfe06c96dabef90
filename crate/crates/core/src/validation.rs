//! Bundled self-checks with optional injected defects.
//!
//! Each check compares one pipeline stage against an independent route and
//! records the worst discrepancy next to its tolerance. The mutation hooks
//! swap in a known-wrong implementation so the suite can demonstrate that
//! it notices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deterministic::{deterministic_nadir_with, kernel_a_matrix, kernel_a_with, KernelScale, OutageSchedule};
use crate::error::Result;
use crate::expm::expm_fixed;
use crate::ld_matrices::{build_a, build_h, van_loan_from, B1Assembly, Mat7, VanLoanBlocks};
use crate::optimizer::{SolveConfig, Solver};
use crate::oracles::discrete::discrete_action_min;
use crate::oracles::montecarlo::{sample_outcomes, simulate_path, variance_with_se, SimConfig};
use crate::oracles::poisson::outage_count_log_prob;
use crate::oracles::quadrature::adaptive_simpson;
use crate::params::{NoiseScaling, SystemParams};
use crate::scenario::{el_residual, eval_trajectory, rate_j_with, zero_action_c, ScenarioVars};

/// Reference nadirs for one and two simultaneous outages at default parameters.
pub const REFERENCE_NADIRS: [(u32, f64, f64); 2] = [(1, -0.0699, 5e-4), (2, -0.1397, 1e-3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Assemble `B1` as `B12 B11` instead of `B12ᵀ B11`.
    VanLoanNoTranspose,
    /// Use the kernel constant without the `1/μ` factor.
    UnnormalisedKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub mutation: Mutation,
    pub random_cases: usize,
    pub discrete_grid: usize,
    pub mc_paths: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            mutation: Mutation::None,
            random_cases: 100,
            discrete_grid: 2000,
            mc_paths: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        CheckResult {
            name: name.to_owned(),
            passed: value.is_finite() && value <= tolerance,
            value,
            tolerance,
            detail,
        }
    }

    fn failed(name: &str, detail: String) -> Self {
        CheckResult {
            name: name.to_owned(),
            passed: false,
            value: f64::NAN,
            tolerance: f64::NAN,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mutation: Mutation,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn to_dynamic(m: &Mat7) -> DMatrix<f64> {
    DMatrix::from_column_slice(7, 7, m.as_slice())
}

/// `B1`, `B2`, `B3` by adaptive Simpson on the defining integrals.
pub fn quadrature_blocks(params: &SystemParams, k: u32) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let a = build_a(params).0;
    let w = build_h(params, k);
    // Fail early if the exponential is unusable anywhere on the horizon.
    expm_fixed(&(a * params.horizon))?;
    let e = |t: f64| expm_fixed(&(a * t)).unwrap_or_else(|_| Mat7::from_element(f64::NAN));
    let tol = 1e-14 * (w.h1.amax() * 100.0).max(1e-300);
    let b1 = adaptive_simpson(|t| to_dynamic(&(e(t).transpose() * w.h1 * e(t))), 0.0, params.horizon, tol);
    let b2 = adaptive_simpson(
        |t| DMatrix::from_row_slice(1, 7, (w.h2.transpose() * e(t)).as_slice()),
        0.0,
        params.horizon,
        tol,
    );
    let b3 = adaptive_simpson(
        |t| DMatrix::from_column_slice(7, 1, (e(t).transpose() * w.h2).as_slice()),
        0.0,
        params.horizon,
        tol,
    );
    Ok((b1, b2, b3))
}

/// Largest entry-wise error relative to the largest reference entry.
fn relative_error(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (x - reference).amax() / reference.amax().max(f64::MIN_POSITIVE)
}

fn blocks_for(params: &SystemParams, k: u32, mutation: Mutation) -> Result<VanLoanBlocks> {
    let assembly = match mutation {
        Mutation::VanLoanNoTranspose => B1Assembly::Untransposed,
        _ => B1Assembly::Transposed,
    };
    van_loan_from(&build_a(params).0, &build_h(params, k), params.horizon, assembly)
}

fn kernel_scale(mutation: Mutation) -> KernelScale {
    match mutation {
        Mutation::UnnormalisedKernel => KernelScale::Unnormalised,
        _ => KernelScale::Corrected,
    }
}

fn guarded(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult::failed(name, e.to_string()))
}

fn kernel_branches(params: &SystemParams, mutation: Mutation) -> Result<CheckResult> {
    let scale = kernel_scale(mutation);
    let mut worst = 0.0_f64;
    let mut peak = 0.0_f64;
    for i in 0..=200 {
        let s = params.horizon * i as f64 / 200.0;
        let reference = kernel_a_matrix(s, params)?;
        worst = worst.max((kernel_a_with(s, params, scale)? - reference).abs());
        peak = peak.max(reference.abs());
    }
    Ok(CheckResult::at_most(
        "kernel-branch-agreement",
        worst / peak.max(f64::MIN_POSITIVE),
        1e-10,
        "closed-form kernel vs matrix-exponential kernel, relative sup-norm".into(),
    ))
}

fn nadirs(params: &SystemParams, mutation: Mutation) -> Result<CheckResult> {
    let scale = kernel_scale(mutation);
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for (k, reference, tol) in REFERENCE_NADIRS {
        let n = deterministic_nadir_with(k, params, scale)?;
        worst = worst.max((n.value - reference).abs() / tol);
        detail.push(format!("k={k}: {:.6} (ratio {:.3})", n.value, n.value / reference));
    }
    Ok(CheckResult::at_most(
        "deterministic-nadir",
        worst,
        1.0,
        format!("error in units of the tolerance; {}", detail.join(", ")),
    ))
}

fn van_loan_quadrature(params: &SystemParams, mutation: Mutation) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in [0, 1, 3] {
        let blocks = blocks_for(params, k, mutation)?;
        let (q1, q2, q3) = quadrature_blocks(params, k)?;
        let b2 = DMatrix::from_row_slice(1, 7, blocks.b2.as_slice());
        let b3 = DMatrix::from_column_slice(7, 1, blocks.b3.as_slice());
        worst = worst
            .max(relative_error(&to_dynamic(&blocks.b1), &q1))
            .max(relative_error(&b2, &q2))
            .max(relative_error(&b3, &q3));
    }
    Ok(CheckResult::at_most(
        "van-loan-quadrature",
        worst,
        1e-8,
        "B1, B2, B3 vs adaptive Simpson, max relative error over k in {0,1,3}".into(),
    ))
}

fn block_structure(params: &SystemParams, mutation: Mutation) -> Result<Vec<CheckResult>> {
    let blocks = blocks_for(params, 1, mutation)?;
    let transpose_gap = (blocks.b3 - blocks.b2).amax() / blocks.b2.amax().max(f64::MIN_POSITIVE);
    let scale = blocks.b1.amax().max(f64::MIN_POSITIVE);
    let asym = (blocks.b1 - blocks.b1.transpose()).amax() / scale;
    let min_eig = blocks.b1.symmetric_eigen().eigenvalues.min();
    Ok(vec![
        CheckResult::at_most(
            "b3-equals-b2-transpose",
            transpose_gap,
            1e-8,
            "relative max-entry gap".into(),
        ),
        CheckResult::at_most(
            "b1-symmetric-psd",
            asym.max(-min_eig / scale),
            1e-8,
            format!("asymmetry {asym:.3e}, smallest eigenvalue {min_eig:.3e}"),
        ),
    ])
}

fn zero_action(params: &SystemParams, noise: &NoiseScaling, mutation: Mutation) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for k in 0..=5 {
        let blocks = blocks_for(params, k, mutation)?;
        let c = zero_action_c(k, params);
        let vars = ScenarioVars::new(k, [c[0], c[1], c[2]]);
        let rate = rate_j_with(&vars, params, noise, &blocks)?;
        worst = worst.max((rate.total - k as f64 * noise.lambda_tilde).abs());
    }
    Ok(CheckResult::at_most(
        "zero-action-identity",
        worst,
        1e-6,
        "|J(c_det(k), k) - k lambda_tilde| over k = 0..5".into(),
    ))
}

fn euler_lagrange(params: &SystemParams, cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..cases {
        let k = rng.random_range(0..6);
        let c = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let traj = eval_trajectory(&ScenarioVars::new(k, c), params, 201)?;
        worst = worst.max(el_residual(&traj, params, k));
    }
    Ok(CheckResult::at_most(
        "euler-lagrange-residual",
        worst,
        1e-8,
        format!("normalised residual, worst of {cases} random (c, k)"),
    ))
}

fn discrete_comparison(
    params: &SystemParams,
    gamma: f64,
    noise: &NoiseScaling,
    cfg: &ValidationConfig,
) -> Result<CheckResult> {
    let solver = Solver::new(
        params,
        &SolveConfig {
            seed: cfg.seed,
            ..SolveConfig::default()
        },
    )?;
    let best = solver.solve(gamma, noise)?;
    let disc = discrete_action_min(best.k_star, gamma, params, noise, cfg.discrete_grid)?;
    let closed = best.j_star.total;
    Ok(CheckResult::at_most(
        "discrete-action-comparison",
        (disc.total - closed).abs() / closed.abs().max(f64::MIN_POSITIVE),
        0.02,
        format!("k*={}, closed form {closed:.8}, discrete {:.8}", best.k_star, disc.total),
    ))
}

fn jump_only_simulation(params: &SystemParams, mutation: Mutation) -> Result<CheckResult> {
    let schedule = OutageSchedule::simultaneous(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (outcome, _) = simulate_path(params, 0.0, &schedule, 1e-3, &mut rng, false);
    let closed = deterministic_nadir_with(1, params, kernel_scale(mutation))?;
    Ok(CheckResult::at_most(
        "jump-only-simulation",
        (outcome.nadir - closed.value).abs(),
        1e-5,
        format!("simulated {:.8}, closed form {:.8}", outcome.nadir, closed.value),
    ))
}

fn ou_marginal(params: &SystemParams, noise: &NoiseScaling, cfg: &ValidationConfig) -> Result<CheckResult> {
    let sim = SimConfig {
        n_paths: cfg.mc_paths,
        seed: cfg.seed,
        epsilon: noise.epsilon,
        ..SimConfig::default()
    };
    let sigma = noise.sigma();
    let outcomes = sample_outcomes(params, sigma, 0.0, &sim)?;
    let finals: Vec<f64> = outcomes.iter().map(|o| o.p_final).collect();
    let (_, var, se) = variance_with_se(&finals);
    let rho = params.rho;
    let exact = sigma * sigma * (1.0 - (-2.0 * rho * params.horizon).exp()) / (2.0 * rho);
    Ok(CheckResult::at_most(
        "ou-marginal-variance",
        (var - exact).abs() / se,
        3.0,
        format!("sample {var:.6e} vs exact {exact:.6e} over {} paths, in standard errors", cfg.mc_paths),
    ))
}

fn poisson_limit(params: &SystemParams, noise: &NoiseScaling) -> CheckResult {
    let k = 2;
    let target = -(k as f64) * noise.lambda_tilde;
    let gaps: Vec<f64> = [0.5, 0.2, 0.1, 0.05, 0.02]
        .iter()
        .map(|&eps| (eps * outage_count_log_prob(k, noise.lambda_tilde, eps, params.horizon) - target).abs())
        .collect();
    // The O(ε) correction changes sign near ε = 0.5; only the tail is monotone.
    let monotone = gaps[1..].windows(2).all(|w| w[1] <= w[0]);
    CheckResult {
        name: "outage-count-limit".into(),
        passed: monotone,
        value: gaps[gaps.len() - 1],
        tolerance: f64::NAN,
        detail: format!("|eps log xi_2 + 2 lambda_tilde| along eps ladder: {gaps:?}"),
    }
}

/// Runs every check; individual failures are recorded rather than returned.
pub fn run_validation(
    params: &SystemParams,
    gamma: f64,
    noise: &NoiseScaling,
    cfg: &ValidationConfig,
) -> ValidationReport {
    let m = cfg.mutation;
    let mut checks = vec![
        guarded("kernel-branch-agreement", || kernel_branches(params, m)),
        guarded("deterministic-nadir", || nadirs(params, m)),
        guarded("van-loan-quadrature", || van_loan_quadrature(params, m)),
    ];
    match block_structure(params, m) {
        Ok(v) => checks.extend(v),
        Err(e) => checks.push(CheckResult::failed("block-structure", e.to_string())),
    }
    checks.push(guarded("zero-action-identity", || zero_action(params, noise, m)));
    checks.push(guarded("euler-lagrange-residual", || {
        euler_lagrange(params, cfg.random_cases, cfg.seed)
    }));
    checks.push(guarded("discrete-action-comparison", || {
        discrete_comparison(params, gamma, noise, cfg)
    }));
    checks.push(guarded("jump-only-simulation", || jump_only_simulation(params, m)));
    checks.push(guarded("ou-marginal-variance", || ou_marginal(params, noise, cfg)));
    checks.push(poisson_limit(params, noise));
    ValidationReport {
        mutation: m,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::scale_noise;

    fn fast(mutation: Mutation) -> ValidationReport {
        let cfg = ValidationConfig {
            mutation,
            random_cases: 10,
            discrete_grid: 1000,
            mc_paths: 4000,
            seed: 3,
        };
        let noise = scale_noise(0.2916, 1e-3, 0.1).unwrap();
        run_validation(&SystemParams::default(), 0.1397, &noise, &cfg)
    }

    fn check<'a>(r: &'a ValidationReport, name: &str) -> &'a CheckResult {
        r.checks.iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn defaults_pass() {
        let r = fast(Mutation::None);
        let failed: Vec<_> = r.failures().collect();
        assert!(r.passed, "{failed:#?}");
    }

    #[test]
    fn transpose_defect_breaks_zero_action() {
        let r = fast(Mutation::VanLoanNoTranspose);
        assert!(!r.passed);
        assert!(!check(&r, "zero-action-identity").passed);
        assert!(!check(&r, "van-loan-quadrature").passed);
    }

    #[test]
    fn unnormalised_kernel_breaks_nadir_by_inertia_factor() {
        let r = fast(Mutation::UnnormalisedKernel);
        let c = check(&r, "deterministic-nadir");
        assert!(!c.passed);
        let p = SystemParams::default();
        for k in [1, 2] {
            let ratio = deterministic_nadir_with(k, &p, KernelScale::Unnormalised).unwrap().value
                / deterministic_nadir_with(k, &p, KernelScale::Corrected).unwrap().value;
            assert!((ratio - p.mu).abs() < 0.02 * p.mu, "{ratio}");
        }
        assert!(check(&r, "zero-action-identity").passed);
    }
}
