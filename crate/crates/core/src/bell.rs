//! Wigner-type Bell test on the antisymmetric kaon pair at production time
//! and its link to the leptonic charge asymmetry.
//!
//! The tested inequality is
//!   P(K_S, K0bar) <= P(K_S, K1) + P(K1, K0bar),
//! which a quantum pair violates exactly when CP violation tilts |p| above
//! |q|. Swapping K0bar for K0 mirrors the bound to the opposite sign of the
//! asymmetry; both directions are reported.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KaonError, Result};
use crate::pair::{joint_probability, make_entangled_pair};
use crate::states::{cp_eigenstates, mass_eigenstates, CPWeights, KaonState, PhysParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    /// P(K_S, K0bar).
    pub p_s_b: f64,
    /// P(K_S, K1).
    pub p_s_1: f64,
    /// P(K1, K0bar).
    pub p_1_b: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs > rhs beyond tolerance.
    pub violated: bool,
    /// |p| > |q| beyond tolerance (the reduced bound).
    pub reduced_violated: bool,
    /// The K0-swapped inequality sides and verdict.
    pub mirrored_lhs: f64,
    pub mirrored_rhs: f64,
    pub mirrored_violated: bool,
    /// |q| > |p| beyond tolerance (reduced bound of the swapped inequality).
    pub mirrored_reduced_violated: bool,
    /// Leptonic charge asymmetry (|p|^2 - |q|^2)/N^2.
    pub delta: f64,
    pub abs_p: f64,
    pub abs_q: f64,
    pub tol: f64,
}

/// (P(K_S, K0bar), P(K_S, K1), P(K1, K0bar)) on the production-time pair.
pub fn wigner_probabilities(w: &CPWeights) -> Result<(f64, f64, f64)> {
    let ps = make_entangled_pair(w)?;
    // zero-width parameter set: probabilities are evaluated at t = 0, decay
    // never enters
    let params = PhysParams::stable(0.0).with_epsilon(Complex64::new(0.0, 0.0));
    let (ks, _) = mass_eigenstates(w);
    let (k1, _) = cp_eigenstates();
    let k0b = KaonState::k0bar();
    let p_s_b = joint_probability(&ps, &ks, &k0b, &params, 0.0, 0.0)?;
    let p_s_1 = joint_probability(&ps, &ks, &k1, &params, 0.0, 0.0)?;
    let p_1_b = joint_probability(&ps, &k1, &k0b, &params, 0.0, 0.0)?;
    Ok((p_s_b, p_s_1, p_1_b))
}

pub fn bell_check(w: &CPWeights, tol: f64) -> Result<BellReport> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(KaonError::InvalidArgument(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let (p_s_b, p_s_1, p_1_b) = wigner_probabilities(w)?;

    // mirrored version: every K0bar outcome replaced by K0
    let ps = make_entangled_pair(w)?;
    let params = PhysParams::stable(0.0);
    let (ks, _) = mass_eigenstates(w);
    let (k1, _) = cp_eigenstates();
    let k0 = KaonState::k0();
    let m_s_0 = joint_probability(&ps, &ks, &k0, &params, 0.0, 0.0)?;
    let m_1_0 = joint_probability(&ps, &k1, &k0, &params, 0.0, 0.0)?;

    let lhs = p_s_b;
    let rhs = p_s_1 + p_1_b;
    let mirrored_lhs = m_s_0;
    let mirrored_rhs = p_s_1 + m_1_0;
    Ok(BellReport {
        p_s_b,
        p_s_1,
        p_1_b,
        lhs,
        rhs,
        violated: lhs > rhs + tol,
        reduced_violated: w.p.norm() > w.q.norm() + tol,
        mirrored_lhs,
        mirrored_rhs,
        mirrored_violated: mirrored_lhs > mirrored_rhs + tol,
        mirrored_reduced_violated: w.q.norm() > w.p.norm() + tol,
        delta: leptonic_asymmetry(w),
        abs_p: w.p.norm(),
        abs_q: w.q.norm(),
        tol,
    })
}

/// delta = (|p|^2 - |q|^2) / (|p|^2 + |q|^2).
pub fn leptonic_asymmetry(w: &CPWeights) -> f64 {
    (w.p.norm_sqr() - w.q.norm_sqr()) / w.norm_sqr()
}

/// Real epsilon reproducing a measured asymmetry: solves
/// 2 eps / (1 + eps^2) = delta with |eps| < 1. Written as
/// delta / (1 + sqrt(1 - delta^2)) to stay accurate for small delta.
pub fn epsilon_from_delta(delta: f64) -> Result<Complex64> {
    if !delta.is_finite() || delta.abs() >= 1.0 {
        return Err(KaonError::InvalidArgument(format!(
            "delta must satisfy |delta| < 1, got {delta}"
        )));
    }
    Ok(Complex64::new(
        delta / (1.0 + (1.0 - delta * delta).sqrt()),
        0.0,
    ))
}
