//! Outage-count probabilities at the scaled rate `λ = e^{−λ̃/ε}`.

/// `log P(N(T) = k)` for a Poisson process of rate `e^{−λ̃/ε}`.
pub fn outage_count_log_prob(k: u32, lambda_tilde: f64, epsilon: f64, horizon: f64) -> f64 {
    let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    let rate = (-lambda_tilde / epsilon).exp();
    let k = k as f64;
    let count_term = if k == 0.0 { 0.0 } else { k * horizon.ln() };
    -k * lambda_tilde / epsilon + count_term - ln_fact - rate * horizon
}
