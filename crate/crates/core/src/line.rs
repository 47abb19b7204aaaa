//! The positive soliton on ℝ and the reference constant `C_p(ℝ)`.
//!
//! `v̄(s) = (p/2)^{1/(p-2)} cosh((p-2)s/2)^{-2/(p-2)}` is the unique positive
//! `H¹` solution of `-v'' + v = v^{p-1}` on the line. Its quotient
//! `I_{p,0} = (∫ v̄^p)^{(p-2)/p}` equals `1/C_p(ℝ)`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_exponent, Error, Result};

/// `(p/2)^{1/(p-2)}`, the maximum of the soliton.
pub fn apex_value(p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok((p / 2.0).powf(1.0 / (p - 2.0)))
}

pub fn vbar(s: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(vbar_unchecked(s, p))
}

pub(crate) fn vbar_unchecked(s: f64, p: f64) -> f64 {
    let t = 0.5 * (p - 2.0) * s;
    // cosh^{-k} = (2 e^{-|t|} / (1 + e^{-2|t|}))^k without overflow
    let e = (-t.abs()).exp();
    let sech = 2.0 * e / (1.0 + e * e);
    (p / 2.0).powf(1.0 / (p - 2.0)) * sech.powf(2.0 / (p - 2.0))
}

/// Exact derivative `v̄'(s) = -v̄(s) tanh((p-2)s/2)`.
pub fn vbar_slope(s: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(vbar_slope_unchecked(s, p))
}

pub(crate) fn vbar_slope_unchecked(s: f64, p: f64) -> f64 {
    -vbar_unchecked(s, p) * (0.5 * (p - 2.0) * s).tanh()
}

/// `I_{p,0}` from the Gamma-function closed form.
pub fn best_quotient_line(p: f64) -> Result<f64> {
    check_exponent(p)?;
    let q = p - 2.0;
    let log_ratio = 0.5 * std::f64::consts::PI.ln() + ln_gamma(2.0 + 2.0 / q)
        - ln_gamma(0.5 + p / q);
    Ok((2.0 / p * (p / 2.0).ln() + q / p * log_ratio).exp())
}

/// `∫_ℝ v̄^p`, recovered from `I_{p,0}` via the identity `I = (∫ v̄^p)^{(p-2)/p}`.
pub fn soliton_mass(p: f64) -> Result<f64> {
    Ok(best_quotient_line(p)?.powf(p / (p - 2.0)))
}

/// Magnitude of `v̄'` where `v̄ = a`: `d(a) = √(a² - (2/p) a^p)`.
pub fn heteroclinic_slope(a: f64, p: f64) -> Result<f64> {
    let apex = apex_value(p)?;
    if !(a > 0.0 && a <= apex) {
        return Err(Error::OutOfRange(format!(
            "heteroclinic value {a} outside (0, {apex}]"
        )));
    }
    Ok(heteroclinic_slope_unchecked(a, p))
}

pub(crate) fn heteroclinic_slope_unchecked(a: f64, p: f64) -> f64 {
    (a * a - 2.0 / p * a.powf(p)).max(0.0).sqrt()
}

/// Arclength `s₀ ≥ 0` with `v̄(s₀) = a`, for `0 < a ≤ apex`.
pub(crate) fn soliton_position(a: f64, p: f64) -> f64 {
    let apex = (p / 2.0).powf(1.0 / (p - 2.0));
    let ratio = (apex / a).powf(0.5 * (p - 2.0));
    if ratio <= 1.0 {
        0.0
    } else {
        2.0 / (p - 2.0) * ratio.acosh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineReference {
    pub p: f64,
    pub apex_value: f64,
    pub best_quotient: f64,
    pub cp_line: f64,
}

impl LineReference {
    pub fn new(p: f64) -> Result<Self> {
        let best_quotient = best_quotient_line(p)?;
        Ok(LineReference {
            p,
            apex_value: apex_value(p)?,
            best_quotient,
            cp_line: 1.0 / best_quotient,
        })
    }
}
