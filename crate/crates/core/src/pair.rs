//! Entangled kaon pairs: two-sided evolution, joint detection
//! probabilities, one-sided collapse, and the closed form for pairs
//! conditioned on both members surviving.
//!
//! Tensor basis order is (K0 K0, K0 K0bar, K0bar K0, K0bar K0bar), left
//! factor first. This fixes every sign below.

use num_complex::Complex64;

use crate::error::{KaonError, Result};
use crate::evolution::evolution_matrix;
use crate::linalg::ONE;
use crate::states::{CPWeights, KaonState, PhysParams};

const MEAS_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    amps: [Complex64; 4],
    t_left: f64,
    t_right: f64,
    normalized: bool,
}

impl PairState {
    fn new(amps: [Complex64; 4], t_left: f64, t_right: f64) -> Self {
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        PairState { amps, t_left, t_right, normalized: (n2 - 1.0).abs() <= 1e-12 }
    }

    pub fn amps(&self) -> [Complex64; 4] {
        self.amps
    }

    /// Amplitude of (left strangeness index, right strangeness index),
    /// 0 = K0, 1 = K0bar.
    pub fn amp(&self, left: usize, right: usize) -> Complex64 {
        self.amps[2 * left + right]
    }

    pub fn t_left(&self) -> f64 {
        self.t_left
    }

    pub fn t_right(&self) -> f64 {
        self.t_right
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// <self|other>.
    pub fn overlap(&self, other: &PairState) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn normalize(&self) -> Result<PairState> {
        let n2 = self.norm_sqr();
        if n2 < 1e-300 {
            return Err(KaonError::Underflow(
                "cannot normalize a pair state with norm^2 < 1e-300".into(),
            ));
        }
        let s = 1.0 / n2.sqrt();
        let mut amps = self.amps;
        for a in amps.iter_mut() {
            *a *= s;
        }
        Ok(PairState::new(amps, self.t_left, self.t_right))
    }

    pub fn swap_sides(&self) -> PairState {
        let a = self.amps;
        PairState::new([a[0], a[2], a[1], a[3]], self.t_right, self.t_left)
    }
}

/// The antisymmetric production state
/// (|K0>|K0bar> - |K0bar>|K0>)/sqrt(2) at t_left = t_right = 0.
///
/// Construction cross-checks the mass-basis form
/// N_SL/sqrt(2) (K_S K_L - K_L K_S) with N_SL = N^2/(2pq).
pub fn make_entangled_pair(w: &CPWeights) -> Result<PairState> {
    w.require_nondegenerate()?;
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let ps = PairState::new([zero, r, -r, zero], 0.0, 0.0);

    let coeffs = mass_basis_coefficients(&ps, w)?;
    let n_sl = Complex64::new(w.norm_sqr(), 0.0) / (2.0 * w.p * w.q);
    let expect_sl = n_sl * std::f64::consts::FRAC_1_SQRT_2;
    let tol = 1e-12 * expect_sl.norm().max(1.0);
    if coeffs[0].norm() > tol
        || coeffs[3].norm() > tol
        || (coeffs[1] - expect_sl).norm() > tol
        || (coeffs[2] + expect_sl).norm() > tol
    {
        return Err(KaonError::DegenerateParameter(
            "mass-basis re-expansion of the entangled pair failed its self-check".into(),
        ));
    }
    Ok(ps)
}

/// Coefficients on (K_S K_S, K_S K_L, K_L K_S, K_L K_L). The mass basis is
/// not orthogonal for epsilon != 0, so these come from the dual (inverse)
/// basis transform, not from projections.
pub fn mass_basis_coefficients(ps: &PairState, w: &CPWeights) -> Result<[Complex64; 4]> {
    w.require_nondegenerate()?;
    // Strangeness components of K_S, K_L form columns of B; the inverse is
    // B^{-1} = [[N/(2p), -N/(2q)], [N/(2p), N/(2q)]].
    let n = Complex64::new(w.n, 0.0);
    let b_inv = [
        [n / (2.0 * w.p), -n / (2.0 * w.q)],
        [n / (2.0 * w.p), n / (2.0 * w.q)],
    ];
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for k in 0..2 {
        for l in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    acc += b_inv[k][i] * b_inv[l][j] * ps.amp(i, j);
                }
            }
            out[2 * k + l] = acc;
        }
    }
    Ok(out)
}

/// Advances each side independently to the absolute times (t_l, t_r).
/// Unnormalized output; the lost norm is the decay probability.
pub fn evolve_pair(ps: &PairState, params: &PhysParams, t_l: f64, t_r: f64) -> Result<PairState> {
    if t_l < ps.t_left || t_r < ps.t_right {
        return Err(KaonError::InvalidArgument(format!(
            "target times ({t_l}, {t_r}) must not precede the state's times ({}, {})",
            ps.t_left, ps.t_right
        )));
    }
    let ul = evolution_matrix(params, t_l - ps.t_left)?;
    let ur = evolution_matrix(params, t_r - ps.t_right)?;
    // amps as matrix A[i][j]; (U_l (x) U_r) A = U_l A U_r^T
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    acc += ul.m[i][k] * ur.m[j][l] * ps.amp(k, l);
                }
            }
            out[2 * i + j] = acc;
        }
    }
    Ok(PairState::new(out, t_l, t_r))
}

fn require_measurement_state(s: &KaonState, side: &str) -> Result<()> {
    if (s.norm_sqr() - 1.0).abs() > MEAS_NORM_TOL {
        return Err(KaonError::InvalidArgument(format!(
            "{side} measurement state must be unit norm (norm^2 = {})",
            s.norm_sqr()
        )));
    }
    Ok(())
}

/// Born probability of finding (left, right) when measuring at absolute
/// times (t_l, t_r). Decay loss is included: summing over a basis on both
/// sides gives the both-survive probability, not 1.
pub fn joint_probability(
    ps: &PairState,
    left: &KaonState,
    right: &KaonState,
    params: &PhysParams,
    t_l: f64,
    t_r: f64,
) -> Result<f64> {
    require_measurement_state(left, "left")?;
    require_measurement_state(right, "right")?;
    let evolved = evolve_pair(ps, params, t_l, t_r)?;
    let mut amp = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            amp += left.amps()[i].conj() * right.amps()[j].conj() * evolved.amp(i, j);
        }
    }
    Ok(amp.norm_sqr())
}

/// Collapse after a left-side outcome: returns the outcome weight
/// (Born probability when `ps` is normalized) and the partner's
/// conditional state, `None` when the weight underflows.
pub fn project_left(ps: &PairState, outcome: &KaonState) -> Result<(f64, Option<KaonState>)> {
    require_measurement_state(outcome, "left")?;
    let o = outcome.amps();
    let v = [
        o[0].conj() * ps.amp(0, 0) + o[1].conj() * ps.amp(1, 0),
        o[0].conj() * ps.amp(0, 1) + o[1].conj() * ps.amp(1, 1),
    ];
    finish_projection(v)
}

/// Mirror image of `project_left`.
pub fn project_right(ps: &PairState, outcome: &KaonState) -> Result<(f64, Option<KaonState>)> {
    require_measurement_state(outcome, "right")?;
    let o = outcome.amps();
    let v = [
        o[0].conj() * ps.amp(0, 0) + o[1].conj() * ps.amp(0, 1),
        o[0].conj() * ps.amp(1, 0) + o[1].conj() * ps.amp(1, 1),
    ];
    finish_projection(v)
}

fn finish_projection(v: [Complex64; 2]) -> Result<(f64, Option<KaonState>)> {
    let w = v[0].norm_sqr() + v[1].norm_sqr();
    if w < 1e-300 {
        return Ok((w, None));
    }
    let s = 1.0 / w.sqrt();
    Ok((w, Some(KaonState::from_amplitudes(v[0] * s, v[1] * s))))
}

/// Pair state conditioned on both members surviving with time separation
/// delta_t = t_left - t_right (either sign), CP violation neglected:
///
///   phi(dt) = (K_L K_S - z K_S K_L)/sqrt(1 + e^{dG dt}),
///   z = e^{i dm dt} e^{(dG/2) dt}
///
/// whose strangeness expansion is
///   [ (1-z)(K0 K0 - K0b K0b) - (1+z)(K0 K0b - K0b K0) ] / (2 sqrt(1+e^{dG dt})).
pub fn surviving_pair_state(params: &PhysParams, delta_t: f64) -> PairState {
    let dg_dt = params.delta_gamma() * delta_t;
    let (t_l, t_r) = (delta_t.max(0.0), (-delta_t).max(0.0));

    // |z| -> infinity limit: the K_S K_L term dominates. Keeps amplitudes
    // finite when e^{dG dt} would overflow.
    if dg_dt > 500.0 {
        let phase = -(Complex64::new(0.0, params.delta_m * delta_t)).exp();
        let h = 0.5 * phase;
        return PairState::new([h, h, -h, -h], t_l, t_r);
    }

    let z = Complex64::new(0.5 * dg_dt, params.delta_m * delta_t).exp();
    let denom = Complex64::new(2.0 * (1.0 + dg_dt.exp()).sqrt(), 0.0);
    let a = (ONE - z) / denom;
    let b = (ONE + z) / denom;
    PairState::new([a, -b, b, -a], t_l, t_r)
}

/// |amplitude|^2 of the four strangeness outcomes of `surviving_pair_state`,
/// in basis order. Sums to 1 for every delta_t.
pub fn strangeness_cells(params: &PhysParams, delta_t: f64) -> [f64; 4] {
    let s = surviving_pair_state(params, delta_t);
    let a = s.amps();
    [a[0].norm_sqr(), a[1].norm_sqr(), a[2].norm_sqr(), a[3].norm_sqr()]
}
