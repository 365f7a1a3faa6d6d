//! Wave-particle duality quantities of a single surviving kaon.
//!
//! The mass eigenstates play the role of two slit paths. Interference
//! contrast (visibility) and which-width knowledge (predictability) of the
//! survivor obey P^2 + V^2 = 1 exactly; CP violation is neglected here.

use serde::{Deserialize, Serialize};

use crate::error::{KaonError, Result};
use crate::states::PhysParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityPoint {
    pub t: f64,
    pub visibility: f64,
    pub predictability: f64,
    /// Oscillation phase dm * t.
    pub phase: f64,
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(KaonError::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

/// V0(t) = 1 / cosh((dG/2) t).
pub fn visibility(params: &PhysParams, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(1.0 / (0.5 * params.delta_gamma() * t).cosh())
}

/// P(t) = |tanh((dG/2) t)| = |P(K_S, t) - P(K_L, t)| for the survivor.
pub fn predictability(params: &PhysParams, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((0.5 * params.delta_gamma() * t).tanh().abs())
}

pub fn duality_check(params: &PhysParams, t_grid: &[f64]) -> Result<Vec<DualityPoint>> {
    t_grid
        .iter()
        .map(|&t| {
            Ok(DualityPoint {
                t,
                visibility: visibility(params, t)?,
                predictability: predictability(params, t)?,
                phase: params.delta_m * t,
            })
        })
        .collect()
}

/// Mixed-state variant: the pure-state quantities scale with a purity
/// factor 0 < mu <= 1, turning the identity into P^2 + V^2 = mu^2.
pub fn duality_check_mixed(params: &PhysParams, t_grid: &[f64], mu: f64) -> Result<Vec<DualityPoint>> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(KaonError::InvalidArgument(format!(
            "mixedness mu must be in (0, 1], got {mu}"
        )));
    }
    Ok(duality_check(params, t_grid)?
        .into_iter()
        .map(|p| DualityPoint {
            visibility: mu * p.visibility,
            predictability: mu * p.predictability,
            ..p
        })
        .collect())
}

/// Survival-conditioned strangeness probabilities of an initial |K0>:
/// P(K0, t) = (1/2) [1 + cos(dm t)/cosh((dG/2) t)], P(K0bar, t) mirrored.
pub fn oscillation_pattern(params: &PhysParams, t: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    let fringe = (params.delta_m * t).cos() / (0.5 * params.delta_gamma() * t).cosh();
    Ok((0.5 * (1.0 + fringe), 0.5 * (1.0 - fringe)))
}
