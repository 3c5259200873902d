// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Closed-form security parameters: the Validators Threshold lower bound,
//! the integrity and replica lower bounds on the Signatures Threshold, and
//! the service-availability upper bound.
//!
//! `z` below is the standard normal quantile at `1 - epsilon`.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Slack applied before rounding to absorb floating-point representation error.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// Scan cap used by the integrity sweeps when none is given.
pub const DEFAULT_ALPHA_CAP: u64 = 10_000;

fn ceil_slack(x: f64) -> f64 {
    (x - ROUNDING_SLACK).ceil()
}

fn floor_slack(x: f64) -> f64 {
    (x + ROUNDING_SLACK).floor()
}

/// Standard normal CDF, via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation polished by
/// one Halley step against [`normal_cdf`].
pub fn probit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probit needs 0 < p < 1, got {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement. In the upper tail work with the survival function
    // to keep precision.
    let e = if x > 0.0 {
        -(0.5 * erfc(x / std::f64::consts::SQRT_2) - (1.0 - p))
    } else {
        normal_cdf(x) - p
    };
    let u = e / normal_pdf(x);
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// `z = probit(1 - epsilon)`.
pub fn quantile_for(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    // probit(1 - e) = -probit(e), which avoids cancellation for tiny e.
    Ok(-probit(epsilon)?)
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::Domain(format!("{name} must be in [0, 1), got {v}")));
    }
    Ok(())
}

pub fn min_alpha(f: f64, epsilon: f64) -> Result<u64> {
    check_fraction("f", f)?;
    let z = quantile_for(epsilon)?;
    let root = f.sqrt() + (f * z * z + 4.0).sqrt();
    let v = root * root / (4.0 * (1.0 - f));
    Ok((ceil_slack(v) as u64).max(1))
}

pub fn min_t_integrity(alpha: u64, f: f64, epsilon: f64) -> Result<u64> {
    check_fraction("f", f)?;
    if alpha == 0 {
        return Err(Error::Domain("alpha must be at least 1".into()));
    }
    let z = quantile_for(epsilon)?;
    let a = alpha as f64;
    let v = (a * f * (1.0 - f)).sqrt() * z + a * f + 1.0;
    Ok((ceil_slack(v) as u64).max(1))
}

pub fn max_t_service(alpha: u64, f: f64, q: f64) -> Result<i64> {
    check_fraction("f", f)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("q must be in [0, 1], got {q}")));
    }
    if alpha == 0 {
        return Err(Error::Domain("alpha must be at least 1".into()));
    }
    let honest_up = (1.0 - f) * (1.0 - q);
    let denom = f + honest_up;
    if denom <= 0.0 {
        return Err(Error::Domain(
            "degenerate service bound (f = 0, q = 1)".into(),
        ));
    }
    Ok(floor_slack(alpha as f64 * honest_up / denom) as i64)
}

pub fn min_t_replica(q: f64) -> Result<u64> {
    check_fraction("q", q)?;
    Ok((ceil_slack(1.0 / (1.0 - q) - 1.0).max(1.0)) as u64)
}

/// Security-parameter report for one `(f, q, epsilon)` setting.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdReport {
    pub f: f64,
    pub q: f64,
    pub epsilon: f64,
    pub alpha_cap: u64,
    pub alpha_min: u64,
    /// Integrity bound at `alpha_min`.
    pub t_min_integrity: u64,
    /// Service bound at `alpha_min`.
    pub t_max_service: i64,
    pub t_min_replica: u64,
    pub feasible: bool,
    pub chosen: Option<(u64, u64)>,
}

impl ThresholdReport {
    /// `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let chosen = match self.chosen {
            Some((a, t)) => format!("chosen_alpha={a}\nchosen_t={t}\n"),
            None => "chosen_alpha=none\nchosen_t=none\n".to_string(),
        };
        format!(
            "f={}\nq={}\nepsilon={:e}\nalpha_cap={}\nalpha_min={}\nt_min_integrity={}\nt_max_service={}\nt_min_replica={}\nfeasible={}\n{}",
            self.f,
            self.q,
            self.epsilon,
            self.alpha_cap,
            self.alpha_min,
            self.t_min_integrity,
            self.t_max_service,
            self.t_min_replica,
            self.feasible,
            chosen
        )
    }
}

/// Smallest `alpha` in `[alpha_min, alpha_cap]` admitting an integer `t`
/// with `max(t_integrity, t_replica) <= t <= t_service`; `t` is the lowest
/// such value.
pub fn solve(f: f64, q: f64, epsilon: f64, alpha_cap: u64) -> Result<ThresholdReport> {
    check_fraction("f", f)?;
    check_fraction("q", q)?;
    let alpha_min = min_alpha(f, epsilon)?;
    let t_rep = min_t_replica(q)?;
    let t_int0 = min_t_integrity(alpha_min, f, epsilon)?;
    let t_serv0 = max_t_service(alpha_min, f, q)?;
    let mut chosen = None;
    let mut alpha = alpha_min;
    // The integrity bound exceeds alpha * f + 1 and the service bound is at
    // most alpha * r, so f >= r rules out every alpha.
    let honest_up = (1.0 - f) * (1.0 - q);
    if f > 0.0 && f >= honest_up / (f + honest_up) {
        alpha = alpha_cap.saturating_add(1);
    }
    while alpha <= alpha_cap {
        let t = min_t_integrity(alpha, f, epsilon)?.max(t_rep);
        if (t as i64) <= max_t_service(alpha, f, q)? {
            chosen = Some((alpha, t));
            break;
        }
        alpha += 1;
    }
    Ok(ThresholdReport {
        f,
        q,
        epsilon,
        alpha_cap,
        alpha_min,
        t_min_integrity: t_int0,
        t_max_service: t_serv0,
        t_min_replica: t_rep,
        feasible: chosen.is_some(),
        chosen,
    })
}
