//! Direct minimisation of the discretised action, independent of the
//! matrix-exponential pipeline.
//!
//! The phase angle `f` is sampled on a uniform grid; derivatives come from
//! 7-point finite-difference stencils (centred in the interior, one-sided
//! near the ends). The initial conditions `f(0) = ḟ(0) = 0`,
//! `f̈(0) = −kδ/μ` eliminate the first three nodes, leaving a banded linear
//! least-squares problem for the trapezoid-weighted action. The nadir
//! constraint enters as a quadratic penalty on `ḟ` at the current
//! minimising node, with the weight raised geometrically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{derive_coeffs, NoiseScaling, SystemParams};

const STENCIL: usize = 7;
const BAND: usize = 8;
const MIN_GRID: usize = 500;
/// Penalty weights `10⁰ … 10¹⁴`, in units of `σ̃⁻²`.
const PENALTY_DECADES: i32 = 14;
const MAX_ACTIVE_UPDATES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteStatus {
    Converged,
    /// The active node kept moving or the final violation stayed above tolerance.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteResult {
    pub k: u32,
    pub n_grid: usize,
    pub total: f64,
    pub jump_part: f64,
    pub gaussian_part: f64,
    pub nadir: f64,
    pub nadir_time: f64,
    pub status: DiscreteStatus,
}

/// Finite-difference weights for derivatives `0..=max_order` at `x0`
/// (Fornberg's recursion); `w[j][m]` multiplies `f(nodes[j])` for order `m`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; max_order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// An affine function of the unknowns `x_j = f_{j+3}`, stored densely over
/// columns `start..start+BAND`.
#[derive(Debug, Clone, Copy)]
struct Affine {
    start: usize,
    coef: [f64; BAND],
    constant: f64,
}

impl Affine {
    fn zero(start: usize) -> Self {
        Affine {
            start,
            coef: [0.0; BAND],
            constant: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &Affine, scale: f64) {
        for (m, v) in other.coef.iter().enumerate() {
            if *v != 0.0 {
                let col = other.start + m;
                self.coef[col - self.start] += scale * v;
            }
        }
        self.constant += scale * other.constant;
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut s = self.constant;
        for (m, v) in self.coef.iter().enumerate() {
            if let Some(xv) = x.get(self.start + m) {
                s += v * xv;
            }
        }
        s
    }
}

/// Upper-triangular factor of a banded least-squares problem, built by
/// Givens rotations one row at a time.
#[derive(Debug, Clone)]
struct BandedQr {
    r: Vec<[f64; BAND]>,
    filled: Vec<bool>,
    qtb: Vec<f64>,
}

impl BandedQr {
    fn new(n: usize) -> Self {
        BandedQr {
            r: vec![[0.0; BAND]; n],
            filled: vec![false; n],
            qtb: vec![0.0; n],
        }
    }

    /// Adds the equation `coef · x[start..] ≈ rhs`.
    fn add_row(&mut self, start: usize, mut row: [f64; BAND], mut rhs: f64) {
        let n = self.r.len();
        let mut col = start;
        while col < n {
            if row[0] != 0.0 {
                if !self.filled[col] {
                    self.r[col] = row;
                    self.qtb[col] = rhs;
                    self.filled[col] = true;
                    return;
                }
                let a = self.r[col][0];
                let b = row[0];
                let rad = a.hypot(b);
                let (c, s) = (a / rad, b / rad);
                for (rm, xm) in self.r[col].iter_mut().zip(row.iter_mut()) {
                    let (p, q) = (*rm, *xm);
                    *rm = c * p + s * q;
                    *xm = -s * p + c * q;
                }
                let (p, q) = (self.qtb[col], rhs);
                self.qtb[col] = c * p + s * q;
                rhs = -s * p + c * q;
            }
            row.rotate_left(1);
            row[BAND - 1] = 0.0;
            col += 1;
        }
    }

    fn solve(&self) -> Result<Vec<f64>> {
        let n = self.r.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let d = self.r[i][0];
            if !self.filled[i] || d == 0.0 || !d.is_finite() {
                return Err(Error::NonFinite("discrete least-squares factor"));
            }
            let mut s = self.qtb[i];
            for m in 1..BAND {
                if i + m < n {
                    s -= self.r[i][m] * x[i + m];
                }
            }
            x[i] = s / d;
        }
        Ok(x)
    }
}

struct Discretisation {
    n: usize,
    h: f64,
    /// `ḟ` at each node.
    velocity: Vec<Affine>,
    /// Weighted action residual `√(w_i h)/σ̃ · (Lf + h8)` at each node.
    residual: Vec<Affine>,
    jump_part: f64,
}

impl Discretisation {
    fn new(k: u32, params: &SystemParams, noise: &NoiseScaling, n: usize) -> Result<Self> {
        if n < MIN_GRID {
            return Err(Error::domain("n_grid", format!("must be >= {MIN_GRID}, got {n}")));
        }
        let h = params.horizon / n as f64;
        let offsets: Vec<f64> = (0..STENCIL).map(|j| j as f64).collect();
        // Weights for each position of the evaluation node inside the stencil.
        let patterns: Vec<Vec<Vec<f64>>> = (0..STENCIL).map(|p| fornberg_weights(p as f64, &offsets, 3)).collect();

        // Node values as affine functions of x = (f3, …, fn).
        let f2dd = -(k as f64) * params.delta / params.mu;
        let w0 = &patterns[0];
        let m11 = w0[1][1];
        let m12 = w0[2][1];
        let m21 = w0[1][2];
        let m22 = w0[2][2];
        let det = m11 * m22 - m12 * m21;
        let mut node: Vec<Affine> = Vec::with_capacity(n + 1);
        node.push(Affine::zero(0));
        let mut rhs1 = Affine::zero(0);
        let mut rhs2 = Affine::zero(0);
        for (j, w) in w0.iter().enumerate().skip(3) {
            rhs1.coef[j - 3] = -w[1];
            rhs2.coef[j - 3] = -w[2];
        }
        rhs2.constant = h * h * f2dd;
        let mut f1 = Affine::zero(0);
        f1.add_scaled(&rhs1, m22 / det);
        f1.add_scaled(&rhs2, -m12 / det);
        let mut f2 = Affine::zero(0);
        f2.add_scaled(&rhs1, -m21 / det);
        f2.add_scaled(&rhs2, m11 / det);
        node.push(f1);
        node.push(f2);
        for m in 3..=n {
            let mut a = Affine::zero(m - 3);
            a.coef[0] = 1.0;
            node.push(a);
        }

        let d = derive_coeffs(params);
        let [c1, c2, c3, c4] = d.h();
        let h8 = params.rho * params.delta * k as f64;
        let mut velocity = Vec::with_capacity(n + 1);
        let mut residual = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = i.saturating_sub(STENCIL / 2).min(n + 1 - STENCIL);
            let w = &patterns[i - s];
            let lo = s.saturating_sub(3);
            let mut vel = Affine::zero(lo);
            let mut res = Affine::zero(lo);
            for j in 0..STENCIL {
                let f = &node[s + j];
                vel.add_scaled(f, w[j][1] / h);
                let lf = c4 * w[j][3] / (h * h * h) + c3 * w[j][2] / (h * h) + c2 * w[j][1] / h;
                res.add_scaled(f, lf);
            }
            res.add_scaled(&node[i], c1);
            res.constant += h8;
            let trap = if i == 0 || i == n { 0.5 } else { 1.0 };
            let weight = (trap * h).sqrt() / noise.sigma_tilde;
            let mut weighted = Affine::zero(lo);
            weighted.add_scaled(&res, weight);
            velocity.push(vel);
            residual.push(weighted);
        }
        Ok(Discretisation {
            n,
            h,
            velocity,
            residual,
            jump_part: k as f64 * noise.lambda_tilde,
        })
    }

    fn base_factor(&self) -> BandedQr {
        let mut qr = BandedQr::new(self.n - 2);
        for r in &self.residual {
            qr.add_row(r.start, r.coef, -r.constant);
        }
        qr
    }

    fn gaussian(&self, x: &[f64]) -> f64 {
        0.5 * self.residual.iter().map(|r| r.eval(x).powi(2)).sum::<f64>()
    }

    fn nadir(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, 0.0);
        for (i, v) in self.velocity.iter().enumerate() {
            let val = v.eval(x);
            if val < best.1 {
                best = (i, val);
            }
        }
        best
    }

    fn result(&self, k: u32, x: &[f64], status: DiscreteStatus) -> DiscreteResult {
        let gaussian_part = self.gaussian(x);
        let (i, nadir) = self.nadir(x);
        DiscreteResult {
            k,
            n_grid: self.n,
            total: self.jump_part + gaussian_part,
            jump_part: self.jump_part,
            gaussian_part,
            nadir,
            nadir_time: i as f64 * self.h,
            status,
        }
    }
}

/// Minimum of the discretised rate with the nadir constraint removed.
pub fn discrete_action_unconstrained(
    k: u32,
    params: &SystemParams,
    noise: &NoiseScaling,
    n_grid: usize,
) -> Result<DiscreteResult> {
    let disc = Discretisation::new(k, params, noise, n_grid)?;
    let x = disc.base_factor().solve()?;
    Ok(disc.result(k, &x, DiscreteStatus::Converged))
}

/// Minimum of the discretised rate subject to `min_i ḟ(t_i) ≤ −γ`.
pub fn discrete_action_min(
    k: u32,
    gamma: f64,
    params: &SystemParams,
    noise: &NoiseScaling,
    n_grid: usize,
) -> Result<DiscreteResult> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain("gamma", format!("must be > 0, got {gamma}")));
    }
    let disc = Discretisation::new(k, params, noise, n_grid)?;
    let base = disc.base_factor();
    let mut x = base.solve()?;
    let (mut active, value) = disc.nadir(&x);
    if value <= -gamma {
        return Ok(disc.result(k, &x, DiscreteStatus::Converged));
    }
    if active == 0 {
        active = disc.n;
    }

    let inv_var = 1.0 / (noise.sigma_tilde * noise.sigma_tilde);
    let mut settled = false;
    for decade in 0..=PENALTY_DECADES {
        let weight = (10f64.powi(decade) * inv_var).sqrt();
        settled = false;
        for _ in 0..MAX_ACTIVE_UPDATES {
            let v = &disc.velocity[active];
            let mut qr = base.clone();
            let mut row = v.coef;
            row.iter_mut().for_each(|c| *c *= weight);
            qr.add_row(v.start, row, -weight * (v.constant + gamma));
            x = qr.solve()?;
            let (next, _) = disc.nadir(&x);
            if next == active || next == 0 {
                settled = true;
                break;
            }
            active = next;
        }
    }
    let (_, value) = disc.nadir(&x);
    let tol = 1e-8 * gamma.max(1.0);
    let status = if settled && value <= -gamma + tol {
        DiscreteStatus::Converged
    } else {
        DiscreteStatus::NotConverged
    };
    Ok(disc.result(k, &x, status))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::{deterministic_nadir, k_bar};
    use crate::params::scale_noise;

    fn baseline() -> (SystemParams, NoiseScaling) {
        (SystemParams::default(), scale_noise(0.2916, 1e-3, 0.1).unwrap())
    }

    #[test]
    fn fornberg_central_weights() {
        let nodes = [-1.0, 0.0, 1.0];
        let w = fornberg_weights(0.0, &nodes, 2);
        assert_eq!([w[0][1], w[1][1], w[2][1]], [-0.5, 0.0, 0.5]);
        assert_eq!([w[0][2], w[1][2], w[2][2]], [1.0, -2.0, 1.0]);
    }

    #[test]
    fn stencils_exact_on_polynomials() {
        let nodes: Vec<f64> = (0..7).map(f64::from).collect();
        for p in 0..7 {
            let w = fornberg_weights(p as f64, &nodes, 3);
            // f = x⁶ has f''' = 120 x³; seven points reproduce it exactly.
            let d3: f64 = (0..7).map(|j| w[j][3] * nodes[j].powi(6)).sum();
            let expect = 120.0 * (p as f64).powi(3);
            assert!((d3 - expect).abs() < 1e-8 * expect.max(1.0), "p={p}");
        }
    }

    #[test]
    fn banded_qr_solves_small_system() {
        let mut qr = BandedQr::new(3);
        let rows = [
            (0, [2.0, 1.0, 0.0], 3.0),
            (0, [1.0, 3.0, 1.0], 5.0),
            (1, [1.0, 4.0, 0.0], 5.0),
            (0, [0.0, 0.0, 1.0], 1.0),
        ];
        for (s, c, b) in rows {
            let mut row = [0.0; BAND];
            row[..3].copy_from_slice(&c);
            qr.add_row(s, row, b);
        }
        let x = qr.solve().unwrap();
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-12);
        }
    }

    #[test]
    fn unconstrained_is_deterministic_continuation() {
        let (p, noise) = baseline();
        for k in 0..=3 {
            let r = discrete_action_unconstrained(k, &p, &noise, 1000).unwrap();
            let target = k as f64 * noise.lambda_tilde;
            assert!((r.total - target).abs() <= 0.01 * target.max(1e-9) + 1e-12, "k={k}: {r:?}");
        }
    }

    #[test]
    fn deterministic_nadir_threshold_is_free() {
        let (p, noise) = baseline();
        let gamma = -deterministic_nadir(1, &p).unwrap().value * (1.0 - 1e-9);
        let kb = k_bar(gamma, &p).unwrap();
        let r = discrete_action_min(kb, gamma, &p, &noise, 1000).unwrap();
        assert!((r.total - kb as f64 * noise.lambda_tilde).abs() < 0.01 * kb as f64 * noise.lambda_tilde);
    }

    #[test]
    fn baseline_matches_closed_form() {
        let (p, noise) = baseline();
        let r = discrete_action_min(1, 0.1397, &p, &noise, 1000).unwrap();
        assert_eq!(r.status, DiscreteStatus::Converged);
        assert!((r.total - 1.291_323_186_655_502).abs() < 0.02 * 1.2913, "{r:?}");
    }

    #[test]
    fn vanishing_threshold_costs_nothing() {
        let (p, noise) = baseline();
        let r = discrete_action_min(0, 1e-9, &p, &noise, 500).unwrap();
        assert!(r.total < 1e-9, "{r:?}");
    }

    #[test]
    fn refinement_converges() {
        let (p, noise) = baseline();
        let exact = 1.291_323_186_655_502;
        let errs: Vec<f64> = [500, 1000, 2000, 4000]
            .iter()
            .map(|&n| (discrete_action_min(1, 0.1397, &p, &noise, n).unwrap().total - exact).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 1e-4 * exact, "{errs:?}");
    }

    #[test]
    fn rejects_coarse_grid() {
        let (p, noise) = baseline();
        assert!(discrete_action_min(1, 0.1, &p, &noise, 100).is_err());
    }
}
