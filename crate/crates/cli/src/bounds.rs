//! Closed-form bounds printed by `mneme bounds`.

use mneme::adversary::{p_credit_stealing_bound, p_double_spend_bound};
use mneme::netsim::expected_neighbors;
use mneme::poe::{poe_termination_probability, printed_termination_formula, Theta};

use crate::CliError;

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Probability of a double spend across disconnected components.
pub fn double_spend(n: u64) -> Result<String, CliError> {
    let p = p_double_spend_bound(n).map_err(domain)?;
    Ok(format!("p_double_spend <= {p:.6e} (N_a={n})"))
}

/// Committee capture: the printed bound next to the exact tail.
pub fn collusion(n: u64, k: u64, m: u64) -> Result<String, CliError> {
    let b = p_credit_stealing_bound(n, k, m).map_err(domain)?;
    Ok(format!(
        "p_credit_stealing printed < 2^{:.2} (approx 2^{:.2}); exact majority tail 2^{:.2} = {:.6e} (N_a={n}, K={k}, M={m})",
        b.printed_log2, b.printed_approx_log2, b.exact_log2, b.exact
    ))
}

pub fn poe_termination(theta: f64, k: usize, k_m: usize) -> Result<String, CliError> {
    let exact = poe_termination_probability(&Theta::Homogeneous(theta), k, k_m).map_err(domain)?;
    let printed = printed_termination_formula(theta, k, k_m);
    Ok(format!(
        "p_terminate = {exact:.6} (printed formula {printed:.6}; theta={theta}, K={k}, K_m={k_m})"
    ))
}

pub fn neighbors(n: f64, r: f64) -> Result<String, CliError> {
    let d = expected_neighbors(n, r).map_err(domain)?;
    Ok(format!("expected neighbors = {d:.4} (N_a={n}, R={r})"))
}
