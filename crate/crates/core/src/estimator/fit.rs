//! Censoring-aware log-log fit of a quantile vector.
//!
//! The model is `log10(AS) = B - A * log10(N + 1)`; the cutpoint is where the
//! fitted line reaches an audience of one, `N = 10^(B / A) - 1`.

use serde::{Deserialize, Serialize};

use super::QuantileVector;
use crate::index::CensorPolicy;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("quantile {0} is outside (0, 100)")]
    InvalidQuantile(f64),
    #[error("no audience samples at Q={q}, N={n}")]
    NoSamples { q: f64, n: usize },
    #[error("only {points} fitting point(s) at Q={q}: the reporting floor is reached at N={floor_at}")]
    TooFewPoints { q: f64, points: usize, floor_at: usize },
    #[error("audience size at N={n} is not positive; the log-log fit needs positive sizes")]
    NonPositiveAudience { n: u32 },
    #[error("all fitting points share the same N")]
    DegenerateX,
    #[error("fitted curve does not decrease (slope {slope})")]
    NotDecreasing { slope: f64 },
}

/// One `(N, AS(Q, N))` point used by the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub n: u32,
    pub audience: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Decay rate `A` (positive for a decreasing curve).
    #[serde(rename = "A")]
    pub decay: f64,
    /// Intercept `B` of the fitted line on log10 audience.
    #[serde(rename = "B")]
    pub intercept: f64,
    pub r_squared: f64,
    pub cutpoint: f64,
    pub n_points_used: usize,
}

/// Keeps N = 1..=n*, where n* is the first N whose value sits at the
/// reporting floor (or the last N when the floor is never reached).
///
/// The first floored value is kept; everything after it carries no
/// information and is dropped.
pub fn truncate_at_floor(vector: &QuantileVector, policy: CensorPolicy) -> Result<Vec<FitPoint>, FitError> {
    let floor = policy.floor();
    let end = vector
        .values
        .iter()
        .position(|&v| v <= floor)
        .map_or(vector.values.len(), |i| i + 1);
    if end < 2 {
        return Err(FitError::TooFewPoints {
            q: vector.q,
            points: end,
            floor_at: end.max(1),
        });
    }
    Ok(vector.values[..end]
        .iter()
        .enumerate()
        .map(|(i, &audience)| FitPoint {
            n: i as u32 + 1,
            audience: audience as f64,
        })
        .collect())
}

/// `10^(B / A) - 1`.
pub fn cutpoint(decay: f64, intercept: f64) -> Result<f64, FitError> {
    if decay.is_nan() || decay <= 0.0 {
        return Err(FitError::NotDecreasing { slope: -decay });
    }
    Ok(10f64.powf(intercept / decay) - 1.0)
}

/// Ordinary least squares of `log10(AS)` on `log10(N + 1)`.
pub fn fit_loglog(points: &[FitPoint]) -> Result<FitResult, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints {
            q: f64::NAN,
            points: points.len(),
            floor_at: points.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| !(p.audience > 0.0 && p.audience.is_finite())) {
        return Err(FitError::NonPositiveAudience { n: p.n });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64 + 1.0).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.audience.log10()).collect();
    let m = points.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(FitError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    let decay = -slope;
    let cut = cutpoint(decay, intercept)?;
    Ok(FitResult {
        decay,
        intercept,
        r_squared,
        cutpoint: cut,
        n_points_used: points.len(),
    })
}
