//! Black–Scholes closed forms with zero rates, used as oracles.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// `d₁ = (ln(x/K) + ½σ²τ) / (σ√τ)`.
pub fn d1(spot: f64, strike: f64, vol: f64, tau: f64) -> f64 {
    ((spot / strike).ln() + 0.5 * vol * vol * tau) / (vol * tau.sqrt())
}

pub fn call_price(spot: f64, strike: f64, vol: f64, tau: f64) -> f64 {
    let d1 = d1(spot, strike, vol, tau);
    let d2 = d1 - vol * tau.sqrt();
    spot * norm_cdf(d1) - strike * norm_cdf(d2)
}

pub fn call_delta(spot: f64, strike: f64, vol: f64, tau: f64) -> f64 {
    norm_cdf(d1(spot, strike, vol, tau))
}

pub fn call_gamma(spot: f64, strike: f64, vol: f64, tau: f64) -> f64 {
    norm_pdf(d1(spot, strike, vol, tau)) / (spot * vol * tau.sqrt())
}

/// Sensitivity to the lognormal variance `σ²`: `x φ(d₁) √τ / (2σ)`.
pub fn call_variance_vega(spot: f64, strike: f64, vol: f64, tau: f64) -> f64 {
    spot * norm_pdf(d1(spot, strike, vol, tau)) * tau.sqrt() / (2.0 * vol)
}
