//! Model constants, derived coefficients and the noise scaling.
//!
//! The frequency model is `μθ̈ + αθ̇ = P − δN − βθ` with an Ornstein–Uhlenbeck
//! renewable term `dP = −ϱP dt + σ dW` and a Poisson outage count `N`.
//! Time is measured in abstract model units (horizon `T = 2` by default) and
//! `δ = 1` is one per-unit outage on a 1000 MW base.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Inertia.
    pub mu: f64,
    /// Inverse droop coefficient.
    pub alpha: f64,
    /// Integral-controller gain.
    pub beta: f64,
    /// OU mean-reversion rate.
    pub rho: f64,
    /// Power removed per outage (per unit).
    pub delta: f64,
    /// Operational horizon `T`.
    #[serde(alias = "T")]
    pub horizon: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            mu: 12.0,
            alpha: 12.5,
            beta: 0.05,
            rho: 1.0 / 30.0,
            delta: 1.0,
            horizon: 2.0,
        }
    }
}

impl SystemParams {
    pub fn new(mu: f64, alpha: f64, beta: f64, rho: f64, delta: f64, horizon: f64) -> Result<Self> {
        let p = SystemParams {
            mu,
            alpha,
            beta,
            rho,
            delta,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("mu", self.mu)?;
        positive("alpha", self.alpha)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::domain("beta", format!("must be >= 0, got {}", self.beta)));
        }
        positive("rho", self.rho)?;
        positive("delta", self.delta)?;
        positive("horizon", self.horizon)
    }

    pub fn with_mu(self, mu: f64) -> Self {
        SystemParams { mu, ..self }
    }

    pub fn with_horizon(self, horizon: f64) -> Self {
        SystemParams { horizon, ..self }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(field, format!("must be > 0, got {v}")))
    }
}

/// Scaled noise description: `P` is driven by `√ε σ̃ dW` and outages arrive at
/// rate `exp(−λ̃/ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScaling {
    pub epsilon: f64,
    pub sigma_tilde: f64,
    pub lambda_tilde: f64,
}

impl NoiseScaling {
    pub fn new(epsilon: f64, sigma_tilde: f64, lambda_tilde: f64) -> Result<Self> {
        positive("epsilon", epsilon)?;
        positive("sigma_tilde", sigma_tilde)?;
        if !(lambda_tilde.is_finite() && lambda_tilde >= 0.0) {
            return Err(Error::domain(
                "lambda_tilde",
                format!("must be >= 0, got {lambda_tilde}"),
            ));
        }
        Ok(NoiseScaling {
            epsilon,
            sigma_tilde,
            lambda_tilde,
        })
    }

    /// Physical diffusion coefficient `√ε σ̃`.
    pub fn sigma(&self) -> f64 {
        self.epsilon.sqrt() * self.sigma_tilde
    }

    /// Physical outage rate `exp(−λ̃/ε)`.
    pub fn lambda(&self) -> f64 {
        (-self.lambda_tilde / self.epsilon).exp()
    }
}

/// Converts a physical `(σ, λ)` pair into the scaled description at `ε`.
pub fn scale_noise(sigma: f64, lambda: f64, epsilon: f64) -> Result<NoiseScaling> {
    positive("sigma", sigma)?;
    positive("epsilon", epsilon)?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain("lambda", format!("must lie in (0, 1], got {lambda}")));
    }
    NoiseScaling::new(epsilon, sigma / epsilon.sqrt(), -epsilon * lambda.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSpec {
    /// Nadir threshold magnitude; the event is `Z ≤ −γ`.
    pub gamma: f64,
}

impl EventSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        Ok(EventSpec { gamma })
    }
}

impl Default for EventSpec {
    fn default() -> Self {
        EventSpec { gamma: 0.1397 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
    /// `α² − 4βμ`; `ζ` is its square root when non-negative.
    pub discriminant: f64,
    pub zeta_real: bool,
}

impl DerivedCoeffs {
    pub fn zeta(&self) -> Option<f64> {
        self.zeta_real.then(|| self.discriminant.sqrt())
    }

    /// Weight vector `(h1, h2, h3, h4)` of the action integrand.
    pub fn h(&self) -> [f64; 4] {
        [self.h1, self.h2, self.h3, self.h4]
    }
}

pub fn derive_coeffs(p: &SystemParams) -> DerivedCoeffs {
    let SystemParams {
        mu,
        alpha,
        beta,
        rho,
        ..
    } = *p;
    let mu2 = mu * mu;
    let discriminant = alpha * alpha - 4.0 * beta * mu;
    DerivedCoeffs {
        a1: beta * beta * rho * rho / mu2,
        a2: (2.0 * beta * rho * rho * mu - beta * beta - alpha * alpha * rho * rho) / mu2,
        a3: (alpha * alpha + rho * rho * mu2 - 2.0 * mu * beta) / mu2,
        h1: beta * rho,
        h2: beta + rho * alpha,
        h3: alpha + rho * mu,
        h4: mu,
        discriminant,
        zeta_real: discriminant > 0.0,
    }
}
