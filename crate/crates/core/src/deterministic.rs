//! Noise-free frequency response to conventional outages.
//!
//! Frequency obeys `θ̇(t) = ∫₀ᵗ a(t−s) [P(s) − δN(s)] ds` with the kernel
//! `a(s) = (e^{Ms})₂₂ / μ`, `M = [[0, 1], [−β/μ, −α/μ]]`. In the overdamped
//! case `a(s) = (x1 e^{x1 s} − x2 e^{x2 s}) / ζ`.
//!
//! A prefactor of `μ/ζ` instead of `1/ζ` drops the `1/μ` that the forcing
//! picks up when the swing equation is divided by the inertia. A single
//! outage would then reach about `−0.84` instead of `−0.0699`.
//! [`KernelScale::Unnormalised`] keeps that variant around for the
//! validation suite.

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm_fixed;
use crate::numeric::{refine_grid_min, uniform_grid};
use crate::params::{derive_coeffs, SystemParams};

/// Grid used for every deterministic nadir scan.
pub const NADIR_GRID: usize = 2001;
const NADIR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KernelScale {
    /// `1/ζ`, consistent with the swing equation.
    #[default]
    Corrected,
    /// `μ/ζ`, missing the inertia normalisation; only for mutation testing.
    Unnormalised,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCoeffs {
    pub x1: f64,
    pub x2: f64,
    pub scale: f64,
    /// `α² − 4βμ > 0`; when false only the matrix branch is meaningful and
    /// `x1`, `x2` hold the common real part of the complex pair.
    pub real_case: bool,
}

impl KernelCoeffs {
    pub fn new(params: &SystemParams) -> Self {
        let c = derive_coeffs(params);
        match c.zeta() {
            Some(zeta) => KernelCoeffs {
                x1: (-params.alpha + zeta) / (2.0 * params.mu),
                x2: -(params.alpha + zeta) / (2.0 * params.mu),
                scale: 1.0 / zeta,
                real_case: true,
            },
            None => {
                let re = -params.alpha / (2.0 * params.mu);
                KernelCoeffs {
                    x1: re,
                    x2: re,
                    scale: f64::NAN,
                    real_case: false,
                }
            }
        }
    }
}

fn swing_matrix(p: &SystemParams) -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -p.beta / p.mu, -p.alpha / p.mu)
}

fn scale_factor(p: &SystemParams, scale: KernelScale) -> f64 {
    match scale {
        KernelScale::Corrected => 1.0,
        KernelScale::Unnormalised => p.mu,
    }
}

/// Kernel from the 2×2 matrix exponential; valid for every parameter set.
pub fn kernel_a_matrix(s: f64, params: &SystemParams) -> Result<f64> {
    check_time_nonneg(s)?;
    let e = expm_fixed(&(swing_matrix(params) * s))?;
    Ok(e[(1, 1)] / params.mu)
}

/// The frequency kernel `a(s)`.
pub fn kernel_a(s: f64, params: &SystemParams) -> Result<f64> {
    kernel_a_with(s, params, KernelScale::Corrected)
}

pub fn kernel_a_with(s: f64, params: &SystemParams, scale: KernelScale) -> Result<f64> {
    check_time_nonneg(s)?;
    let k = KernelCoeffs::new(params);
    let base = if k.real_case {
        k.scale * (k.x1 * (k.x1 * s).exp() - k.x2 * (k.x2 * s).exp())
    } else {
        kernel_a_matrix(s, params)?
    };
    Ok(base * scale_factor(params, scale))
}

fn check_time_nonneg(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain("s", format!("kernel argument must be >= 0, got {s}")))
    }
}

/// `∫₀ᵗ a(u) du`, the frequency deviation per unit of sustained power loss.
fn kernel_integral(t: f64, params: &SystemParams, scale: KernelScale) -> Result<f64> {
    let k = KernelCoeffs::new(params);
    let base = if k.real_case {
        k.scale * ((k.x1 * t).exp() - (k.x2 * t).exp())
    } else {
        // [[M, e2/μ], [0, 0]] exponentiates to the step response in its last column.
        let m = swing_matrix(params);
        let aug = Matrix3::new(
            m[(0, 0)], m[(0, 1)], 0.0,
            m[(1, 0)], m[(1, 1)], 1.0 / params.mu,
            0.0, 0.0, 0.0,
        );
        expm_fixed(&(aug * t))?[(1, 2)]
    };
    Ok(base * scale_factor(params, scale))
}

/// Frequency deviation at `t` after `k` simultaneous outages at time zero.
pub fn deterministic_frequency(k: u32, t: f64, params: &SystemParams) -> Result<f64> {
    deterministic_frequency_with(k, t, params, KernelScale::Corrected)
}

pub fn deterministic_frequency_with(
    k: u32,
    t: f64,
    params: &SystemParams,
    scale: KernelScale,
) -> Result<f64> {
    if !(t >= 0.0 && t <= params.horizon) {
        return Err(Error::domain(
            "t",
            format!("must lie in [0, {}], got {t}", params.horizon),
        ));
    }
    let unit = -params.delta * kernel_integral(t, params, scale)?;
    Ok(k as f64 * unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nadir {
    pub value: f64,
    pub time: f64,
}

/// Minimum of the deterministic `k`-outage response over `[0, T]`, by grid
/// scan plus golden-section refinement.
pub fn deterministic_nadir(k: u32, params: &SystemParams) -> Result<Nadir> {
    nadir_over(k, params.horizon, params, KernelScale::Corrected)
}

pub fn deterministic_nadir_with(k: u32, params: &SystemParams, scale: KernelScale) -> Result<Nadir> {
    nadir_over(k, params.horizon, params, scale)
}

fn nadir_over(k: u32, horizon: f64, params: &SystemParams, scale: KernelScale) -> Result<Nadir> {
    if k == 0 || horizon <= 0.0 {
        return Ok(Nadir { value: 0.0, time: 0.0 });
    }
    let times = uniform_grid(horizon, NADIR_GRID);
    let values = times
        .iter()
        .map(|&t| deterministic_frequency_with(k, t, params, scale))
        .collect::<Result<Vec<_>>>()?;
    let f = |t: f64| deterministic_frequency_with(k, t, params, scale).unwrap_or(f64::INFINITY);
    let (time, value) = refine_grid_min(&times, &values, f, NADIR_TOL);
    Ok(Nadir { value, time })
}

/// Worst frequency decrease on `[ν, T]` caused by `k` outages present from `ν`.
pub fn freq_drop(nu: f64, k: u32, params: &SystemParams) -> Result<f64> {
    if !(nu >= 0.0 && nu <= params.horizon) {
        return Err(Error::domain(
            "nu",
            format!("must lie in [0, {}], got {nu}", params.horizon),
        ));
    }
    let n = nadir_over(k, params.horizon - nu, params, KernelScale::Corrected)?;
    Ok(-n.value)
}

/// Smallest outage count whose deterministic drop reaches `γ`.
pub fn k_bar(gamma: f64, params: &SystemParams) -> Result<u32> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain("gamma", format!("must be > 0, got {gamma}")));
    }
    let unit = freq_drop(0.0, 1, params)?;
    if unit <= 0.0 {
        return Err(Error::domain("params", "a single outage produces no frequency drop"));
    }
    // f(0, k) = k · f(0, 1); the ceil guess is corrected for rounding either way.
    let mut k = (gamma / unit).ceil().max(1.0) as u32;
    while k > 1 && (k - 1) as f64 * unit >= gamma {
        k -= 1;
    }
    while (k as f64) * unit < gamma {
        k += 1;
    }
    Ok(k)
}

/// Sorted outage instants in `[0, T]`; each removes `δ` power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutageSchedule {
    times: Vec<f64>,
}

impl OutageSchedule {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("schedule", "outage times must be non-decreasing"));
        }
        if times.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::domain(
                "schedule",
                format!("outage times must lie in [0, {horizon}]"),
            ));
        }
        Ok(OutageSchedule { times })
    }

    pub fn simultaneous(k: u32) -> Self {
        OutageSchedule {
            times: vec![0.0; k as usize],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `N(t)`, right-continuous.
    pub fn count_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }
}

/// One classical RK4 step of `μθ̈ + αθ̇ + βθ = forcing` with constant forcing.
pub(crate) fn rk4_step(state: (f64, f64), forcing: f64, tau: f64, p: &SystemParams) -> (f64, f64) {
    let rhs = |th: f64, thd: f64| (thd, (forcing - p.beta * th - p.alpha * thd) / p.mu);
    let (th, thd) = state;
    let k1 = rhs(th, thd);
    let k2 = rhs(th + 0.5 * tau * k1.0, thd + 0.5 * tau * k1.1);
    let k3 = rhs(th + 0.5 * tau * k2.0, thd + 0.5 * tau * k2.1);
    let k4 = rhs(th + tau * k3.0, thd + tau * k3.1);
    (
        th + tau / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        thd + tau / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPath {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
}

/// Integrates the noise-free swing equation for an outage schedule.
///
/// Samples sit on the uniform grid `i·dt`; a step that contains outage
/// instants is split at those instants so the piecewise-constant forcing is
/// integrated exactly between jumps.
pub fn ode_response(schedule: &OutageSchedule, params: &SystemParams, dt: f64) -> Result<FrequencyPath> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain("dt", format!("must be > 0, got {dt}")));
    }
    let horizon = params.horizon;
    if schedule.times().iter().any(|&t| t > horizon) {
        return Err(Error::domain("schedule", "outage after the horizon"));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;

    let mut times = Vec::with_capacity(steps + 1);
    let mut theta = Vec::with_capacity(steps + 1);
    let mut theta_dot = Vec::with_capacity(steps + 1);
    let mut state = (0.0, 0.0);
    times.push(0.0);
    theta.push(0.0);
    theta_dot.push(0.0);

    let jumps = schedule.times();
    let mut next_jump = jumps.partition_point(|&s| s <= 0.0);
    for i in 0..steps {
        let t0 = i as f64 * h;
        let t1 = if i + 1 == steps { horizon } else { (i + 1) as f64 * h };
        let mut t = t0;
        while t < t1 {
            let seg_end = match jumps.get(next_jump) {
                Some(&tj) if tj < t1 => tj,
                _ => t1,
            };
            if seg_end > t {
                let n = schedule.count_at(t) as f64;
                state = rk4_step(state, -params.delta * n, seg_end - t, params);
                t = seg_end;
            }
            while jumps.get(next_jump).is_some_and(|&tj| tj <= t) {
                next_jump += 1;
            }
            if seg_end >= t1 {
                break;
            }
        }
        times.push(t1);
        theta.push(state.0);
        theta_dot.push(state.1);
    }
    Ok(FrequencyPath {
        times,
        theta,
        theta_dot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Closed-form single-outage drop at T = 2, evaluated in 30-digit arithmetic.
    const ONE_OUTAGE_NADIR: f64 = -0.069_857_198_285_318;

    fn defaults() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn kernel_at_zero_is_inverse_inertia() {
        let a0 = kernel_a(0.0, &defaults()).unwrap();
        assert!((a0 - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_branches_agree() {
        let p = defaults();
        for i in 0..=200 {
            let s = 2.0 * i as f64 / 200.0;
            let closed = kernel_a(s, &p).unwrap();
            let matrix = kernel_a_matrix(s, &p).unwrap();
            assert!((closed - matrix).abs() <= 1e-10 * closed.abs(), "s={s}");
        }
    }

    #[test]
    fn kernel_positive_on_horizon() {
        let p = defaults();
        for i in 0..=10_000 {
            let s = p.horizon * i as f64 / 10_000.0;
            assert!(kernel_a(s, &p).unwrap() > 0.0);
        }
    }

    #[test]
    fn kernel_rejects_negative_argument() {
        assert!(kernel_a(-1e-3, &defaults()).is_err());
    }

    #[test]
    fn underdamped_kernel_uses_matrix_branch() {
        let p = SystemParams {
            alpha: 1.0,
            ..defaults()
        };
        let k = KernelCoeffs::new(&p);
        assert!(!k.real_case);
        let a = kernel_a(0.5, &p).unwrap();
        assert_eq!(a, kernel_a_matrix(0.5, &p).unwrap());
        let f = deterministic_frequency(1, 2.0, &p).unwrap();
        let path = ode_response(&OutageSchedule::simultaneous(1), &p, 1e-4).unwrap();
        assert!((f - path.theta_dot.last().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn single_and_double_outage_response() {
        let p = defaults();
        let f1 = deterministic_frequency(1, 2.0, &p).unwrap();
        let f2 = deterministic_frequency(2, 2.0, &p).unwrap();
        assert!((f1 - ONE_OUTAGE_NADIR).abs() < 1e-12);
        assert_eq!(f2, 2.0 * f1);
        assert_eq!(deterministic_frequency(0, 1.3, &p).unwrap(), 0.0);
        assert!(deterministic_frequency(1, 2.5, &p).is_err());
    }

    #[test]
    fn linearity_in_outage_count() {
        let p = defaults();
        for k in 0..6 {
            for i in 0..=20 {
                let t = 0.1 * i as f64;
                let fk = deterministic_frequency(k, t, &p).unwrap();
                let f1 = deterministic_frequency(1, t, &p).unwrap();
                assert_eq!(fk, k as f64 * f1);
            }
        }
    }

    #[test]
    fn nadir_examples() {
        let p = defaults();
        let n1 = deterministic_nadir(1, &p).unwrap();
        assert!((n1.value - ONE_OUTAGE_NADIR).abs() < 1e-12);
        assert_eq!(n1.time, 2.0);
        let n2 = deterministic_nadir(2, &p).unwrap();
        assert!((n2.value - 2.0 * ONE_OUTAGE_NADIR).abs() < 1e-12);
        assert_eq!(deterministic_nadir(0, &p).unwrap(), Nadir { value: 0.0, time: 0.0 });
    }

    #[test]
    fn nadir_found_in_interior_for_light_damping() {
        // Weak droop and strong integral action give an overshoot before T.
        let p = SystemParams {
            alpha: 2.0,
            beta: 60.0,
            ..defaults()
        };
        let n = deterministic_nadir(1, &p).unwrap();
        assert!(n.time > 0.0 && n.time < p.horizon);
        let dense = (0..=20_000)
            .map(|i| deterministic_frequency(1, p.horizon * i as f64 / 20_000.0, &p).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(n.value <= dense + 1e-12);
    }

    #[test]
    fn unnormalised_kernel_is_mu_times_larger() {
        let p = defaults();
        let scaled = deterministic_nadir_with(1, &p, KernelScale::Unnormalised).unwrap();
        assert!((scaled.value / ONE_OUTAGE_NADIR - 12.0).abs() < 1e-9);
    }

    #[test]
    fn freq_drop_examples() {
        let p = defaults();
        assert!((freq_drop(0.0, 2, &p).unwrap() + 2.0 * ONE_OUTAGE_NADIR).abs() < 1e-12);
        assert!((freq_drop(0.0, 1, &p).unwrap() + ONE_OUTAGE_NADIR).abs() < 1e-12);
        assert_eq!(freq_drop(2.0, 3, &p).unwrap(), 0.0);
        assert!(freq_drop(2.1, 1, &p).is_err());
        assert!(freq_drop(1.0, 1, &p).unwrap() < freq_drop(0.0, 1, &p).unwrap());
    }

    #[test]
    fn k_bar_examples() {
        let p = defaults();
        assert_eq!(k_bar(0.1397, &p).unwrap(), 2);
        assert_eq!(k_bar(0.05, &p).unwrap(), 1);
        assert_eq!(k_bar(1e-12, &p).unwrap(), 1);
        assert_eq!(k_bar(-ONE_OUTAGE_NADIR, &p).unwrap(), 1);
        assert!(k_bar(0.0, &p).is_err());
    }

    #[test]
    fn ode_matches_closed_form() {
        let p = defaults();
        let path = ode_response(&OutageSchedule::simultaneous(1), &p, 1e-4).unwrap();
        assert!((path.theta_dot.last().unwrap() - ONE_OUTAGE_NADIR).abs() < 1e-7);
        for (t, v) in path.times.iter().zip(&path.theta_dot).step_by(997) {
            let exact = deterministic_frequency(1, *t, &p).unwrap();
            assert!((v - exact).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn empty_schedule_is_flat() {
        let path = ode_response(&OutageSchedule::default(), &defaults(), 1e-3).unwrap();
        assert!(path.theta_dot.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn late_outage_stays_above_early_outage() {
        let p = defaults();
        let late = OutageSchedule::new(vec![1.0], p.horizon).unwrap();
        let a = ode_response(&late, &p, 1e-3).unwrap();
        let b = ode_response(&OutageSchedule::simultaneous(1), &p, 1e-3).unwrap();
        assert_eq!(a.times, b.times);
        assert!(a.theta_dot.iter().zip(&b.theta_dot).all(|(x, y)| x >= y));
    }

    #[test]
    fn off_grid_jump_is_split_exactly() {
        let p = defaults();
        let tj = 0.123_456_7;
        let sched = OutageSchedule::new(vec![tj], p.horizon).unwrap();
        let path = ode_response(&sched, &p, 1e-2).unwrap();
        let expect = deterministic_frequency(1, p.horizon - tj, &p).unwrap();
        assert!((path.theta_dot.last().unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn schedule_validation() {
        assert!(OutageSchedule::new(vec![0.5, 0.2], 2.0).is_err());
        assert!(OutageSchedule::new(vec![2.5], 2.0).is_err());
        let s = OutageSchedule::new(vec![0.0, 0.5, 0.5], 2.0).unwrap();
        assert_eq!(s.count_at(0.0), 1);
        assert_eq!(s.count_at(0.5), 3);
        assert!(ode_response(&s, &defaults(), 0.0).is_err());
    }

    #[test]
    fn more_outages_pointwise_lower() {
        let p = defaults();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(0..4);
            let mut base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..p.horizon)).collect();
            base.sort_by(f64::total_cmp);
            // Dominating schedule: every outage is moved earlier, plus extras.
            let mut dom: Vec<f64> = base.iter().map(|&t| t * rng.random_range(0.0..1.0)).collect();
            for _ in 0..rng.random_range(0..3) {
                dom.push(rng.random_range(0.0..p.horizon));
            }
            dom.sort_by(f64::total_cmp);
            let a = ode_response(&OutageSchedule::new(base, p.horizon).unwrap(), &p, 2e-3).unwrap();
            let b = ode_response(&OutageSchedule::new(dom, p.horizon).unwrap(), &p, 2e-3).unwrap();
            for (x, y) in a.theta_dot.iter().zip(&b.theta_dot) {
                assert!(*y <= x + 1e-9);
            }
        }
    }
}
