//! Single-kaon time evolution.
//!
//! Each mass eigenstate propagates as e^{-i lambda t} with
//! lambda = m - (i/2)Gamma; in the strangeness basis that is the matrix
//! [[g+, (p/q) g-], [(q/p) g-, g+]] built from the propagator pair below.
//! The closed form is the production path; `matexp_oracle` recomputes the
//! same dynamics from the Hamiltonian by series summation so the two
//! routes can be checked against each other.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KaonError, Result};
use crate::linalg::Mat2;
use crate::states::{EffectiveHamiltonian, KaonState, PhysParams};

/// g+(t) and g-(t): g+-(t) = (1/2)[+- e^{-i lambda_S t} + e^{-i lambda_L t}].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorPair {
    pub g_plus: Complex64,
    pub g_minus: Complex64,
    pub t: f64,
}

fn require_nonnegative_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(KaonError::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

pub fn propagators(params: &PhysParams, t: f64) -> Result<PropagatorPair> {
    require_nonnegative_time(t)?;
    let i = Complex64::new(0.0, 1.0);
    let es = (-i * params.lambda_s() * t).exp();
    let el = (-i * params.lambda_l() * t).exp();
    Ok(PropagatorPair {
        g_plus: 0.5 * (es + el),
        g_minus: 0.5 * (-es + el),
        t,
    })
}

/// One-sided evolution matrix in the strangeness basis.
pub fn evolution_matrix(params: &PhysParams, t: f64) -> Result<Mat2> {
    let w = params.weights();
    w.require_nondegenerate()?;
    let g = propagators(params, t)?;
    Ok(Mat2::new(
        g.g_plus,
        w.p / w.q * g.g_minus,
        w.q / w.p * g.g_minus,
        g.g_plus,
    ))
}

/// Evolves by t. The result is left unnormalized; its norm^2 is the
/// survival probability.
pub fn evolve(state: &KaonState, params: &PhysParams, t: f64) -> Result<KaonState> {
    let u = evolution_matrix(params, t)?;
    let out = u.apply(state.amps());
    Ok(KaonState::from_amplitudes(out[0], out[1]))
}

/// Strangeness outcome probabilities for a kaon born as |K0>:
/// p_k0    = (1/4) [e^{-G_S t} + e^{-G_L t} + 2 e^{-G t} cos(dm t)]
/// p_k0bar = (1/4) |q/p|^2 [e^{-G_S t} + e^{-G_L t} - 2 e^{-G t} cos(dm t)]
/// with G = (G_S + G_L)/2.
pub fn strangeness_probabilities(params: &PhysParams, t: f64) -> Result<(f64, f64)> {
    require_nonnegative_time(t)?;
    let w = params.weights();
    w.require_nondegenerate()?;
    let es = (-params.gamma_s * t).exp();
    let el = (-params.gamma_l * t).exp();
    let interference = 2.0 * (-params.gamma_mean() * t).exp() * (params.delta_m * t).cos();
    let p_k0 = 0.25 * (es + el + interference);
    let p_k0bar = 0.25 * (w.q.norm_sqr() / w.p.norm_sqr()) * (es + el - interference);
    Ok((p_k0, p_k0bar))
}

/// Evolves and renormalizes, conditioning on survival.
pub fn normalized_survivor(state: &KaonState, params: &PhysParams, t: f64) -> Result<KaonState> {
    let evolved = evolve(state, params, t)?;
    let survival = evolved.norm_sqr();
    if survival < 1e-300 {
        return Err(KaonError::Underflow(format!(
            "survival probability {survival:.3e} at t = {t} is below 1e-300; use a smaller t"
        )));
    }
    evolved.normalize()
}

/// e^{-i H t} applied to `state`, summed as a truncated Taylor series with
/// scaling and squaring. Independent of the closed-form path: uses only the
/// Hamiltonian matrix.
///
/// The argument is scaled so ||(-iHt)/2^s||_1 <= 1; at that norm the order-20
/// Taylor tail is below 3e-20, so squaring error stays far under 1e-12 for
/// every t this crate deals in.
pub fn matexp_oracle(h: &EffectiveHamiltonian, state: &KaonState, t: f64) -> KaonState {
    let m = h.matrix.scale(Complex64::new(0.0, -t));
    let e = expm2(&m);
    let out = e.apply(state.amps());
    KaonState::from_amplitudes(out[0], out[1])
}

const TAYLOR_ORDER: usize = 20;

fn expm2(m: &Mat2) -> Mat2 {
    let norm = m.one_norm();
    let s = if norm > 1.0 { norm.log2().ceil() as u32 } else { 0 };
    let scaled = m.scale(Complex64::new(1.0 / (1u64 << s) as f64, 0.0));

    // Horner evaluation of sum_{k=0..20} A^k / k!
    let mut acc = Mat2::identity();
    for k in (1..=TAYLOR_ORDER).rev() {
        acc = acc
            .scale(Complex64::new(1.0 / k as f64, 0.0))
            .mul(&scaled)
            .add(&Mat2::identity());
    }
    for _ in 0..s {
        acc = acc.mul(&acc);
    }
    acc
}

#[cfg(test)]
// oracle constants below keep every digit their reference computation printed
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::states::{effective_hamiltonian, mass_eigenstates};
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn propagators_at_zero_and_negative_time() {
        let params = PhysParams::default();
        let g = propagators(&params, 0.0).unwrap();
        assert!((g.g_plus - c(1.0, 0.0)).norm() < 1e-15);
        assert!(g.g_minus.norm() < 1e-15);
        assert!(matches!(
            propagators(&params, -0.1),
            Err(KaonError::InvalidArgument(_))
        ));
    }

    #[test]
    fn propagators_frozen_values_at_t1() {
        // high-precision reference for default params
        let g = propagators(&PhysParams::default(), 1.0).unwrap();
        assert!(close(g.g_plus.re, 0.78076869468379921, 1e-14));
        assert!(close(g.g_plus.im, -0.045708123009281983, 1e-14));
        assert!(close(g.g_minus.re, 0.19090892965531408, 1e-14));
        assert!(close(g.g_minus.im, -0.18693453262158728, 1e-14));
    }

    #[test]
    fn propagators_decay_to_zero() {
        let g = propagators(&PhysParams::default(), 5e4).unwrap();
        assert!(g.g_plus.norm() < 1e-15);
        assert!(g.g_minus.norm() < 1e-15);
        let n = g.g_plus.norm_sqr() + g.g_minus.norm_sqr();
        assert!(n <= 1.0);
    }

    #[test]
    fn evolve_identity_at_t0() {
        let params = PhysParams::default().with_epsilon(c(0.1, 0.05));
        let s = crate::states::quasi_spin_state(c(0.6, 0.1), c(0.0, -0.79)).unwrap();
        let e = evolve(&s, &params, 0.0).unwrap();
        assert!((e.amp_k0() - s.amp_k0()).norm() < 1e-15);
        assert!((e.amp_k0bar() - s.amp_k0bar()).norm() < 1e-15);
    }

    #[test]
    fn k0bar_amplitude_is_g_minus_at_zero_epsilon() {
        let params = PhysParams::default();
        let t = 2.3;
        let e = evolve(&KaonState::k0(), &params, t).unwrap();
        let g = propagators(&params, t).unwrap();
        assert!((e.amp_k0bar() - g.g_minus).norm() < 1e-15);
        assert!((e.amp_k0() - g.g_plus).norm() < 1e-15);
    }

    #[test]
    fn mass_eigenstates_decay_exponentially() {
        for eps in [c(0.0, 0.0), c(0.1, 0.05)] {
            let params = PhysParams::default().with_epsilon(eps);
            let (ks, kl) = mass_eigenstates(&params.weights());
            let t = 1.7;
            let i = c(0.0, 1.0);

            let es = evolve(&ks, &params, t).unwrap();
            let phase_s = (-i * params.lambda_s() * t).exp();
            assert!((es.amp_k0() - phase_s * ks.amp_k0()).norm() < 1e-12);
            assert!((es.amp_k0bar() - phase_s * ks.amp_k0bar()).norm() < 1e-12);

            let el = evolve(&kl, &params, t).unwrap();
            let phase_l = (-i * params.lambda_l() * t).exp();
            assert!((el.amp_k0() - phase_l * kl.amp_k0()).norm() < 1e-12);
            assert!((el.amp_k0bar() - phase_l * kl.amp_k0bar()).norm() < 1e-12);
        }
    }

    #[test]
    fn kl_survival_after_unit_time() {
        let params = PhysParams::default();
        let (_, kl) = mass_eigenstates(&params.weights());
        let e = evolve(&kl, &params, 1.0).unwrap();
        assert!(close(e.norm_sqr(), (-params.gamma_l).exp(), 1e-10));
        assert!(!e.is_normalized());
    }

    #[test]
    fn strangeness_probabilities_frozen_values() {
        let params = PhysParams::default();
        let (p0, p0b) = strangeness_probabilities(&params, 0.0).unwrap();
        assert_eq!((p0, p0b), (1.0, 0.0));

        let (p0, p0b) = strangeness_probabilities(&params, 1.0).unwrap();
        assert!(close(p0, 0.61168898710727532, 1e-14));
        assert!(close(p0b, 0.071390738908588941, 1e-14));

        let (p0, p0b) = strangeness_probabilities(&params, 5.0).unwrap();
        assert!(close(p0, 0.22082463856922957, 1e-14));
        assert!(close(p0b, 0.27825912847434652, 1e-14));
    }

    #[test]
    fn stable_limit_full_flip_at_half_period() {
        let params = PhysParams::stable(0.47);
        let t = std::f64::consts::PI / 0.47;
        let (p0, p0b) = strangeness_probabilities(&params, t).unwrap();
        assert!(p0.abs() < 1e-12);
        assert!(close(p0b, 1.0, 1e-12));
    }

    #[test]
    fn closed_form_matches_amplitudes_for_any_epsilon() {
        for eps in [c(0.0, 0.0), c(1.635e-3, 0.0), c(0.1, 0.05), c(-0.2, 0.3)] {
            let params = PhysParams::default().with_epsilon(eps);
            for t in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
                let (p0, p0b) = strangeness_probabilities(&params, t).unwrap();
                let e = evolve(&KaonState::k0(), &params, t).unwrap();
                assert!(
                    close(p0, e.amp_k0().norm_sqr(), 1e-12),
                    "eps={eps} t={t}"
                );
                assert!(
                    close(p0b, e.amp_k0bar().norm_sqr(), 1e-12),
                    "eps={eps} t={t}"
                );
            }
        }
    }

    #[test]
    fn interference_term_changes_sign_at_quarter_period() {
        // cos(dm t) crosses zero at t = pi/(2 dm) ~ 3.342 for dm = 0.47
        let params = PhysParams::default();
        let t_zero = std::f64::consts::FRAC_PI_2 / params.delta_m;
        assert!(close(t_zero, 3.3422, 2e-4));
        let interf = |t: f64| {
            let (p0, _) = strangeness_probabilities(&params, t).unwrap();
            p0 - 0.25 * ((-params.gamma_s * t).exp() + (-params.gamma_l * t).exp())
        };
        assert!(interf(t_zero - 0.05) > 0.0);
        assert!(interf(t_zero + 0.05) < 0.0);
        assert!(interf(t_zero).abs() < 1e-3);
    }

    #[test]
    fn normalized_survivor_matches_closed_form_ratio() {
        // K_S : K_L amplitude ratio of the survivor is
        // e^{i dm t + (dG/2) t} : 1 at eps = 0.
        let params = PhysParams::default();
        let t = 2.0;
        let s = normalized_survivor(&KaonState::k0(), &params, t).unwrap();
        assert!(s.is_normalized());

        let (ks, kl) = mass_eigenstates(&params.weights());
        // orthogonal at eps = 0, so coefficients are plain projections
        let cs = ks.overlap(&s);
        let cl = kl.overlap(&s);
        let ratio = cs / cl;
        let dg = params.delta_gamma();
        let expected = (c(0.5 * dg * t, params.delta_m * t)).exp();
        assert!((ratio - expected).norm() < 1e-12);
    }

    #[test]
    fn survivor_tends_to_kl() {
        let params = PhysParams::default();
        let s = normalized_survivor(&KaonState::k0(), &params, 40.0).unwrap();
        let (_, kl) = mass_eigenstates(&params.weights());
        assert!(1.0 - kl.overlap(&s).norm() < 1e-6);
    }

    #[test]
    fn survivor_underflows_at_huge_time() {
        let params = PhysParams::default();
        // gamma_l * t > 700 guarantees even the K_L part underflows
        let r = normalized_survivor(&KaonState::k0(), &params, 4.2e5);
        assert!(matches!(r, Err(KaonError::Underflow(_))));
    }

    #[test]
    fn matexp_matches_closed_form_on_grid() {
        for eps in [c(0.0, 0.0), c(1.635e-3, 0.0), c(0.1, 0.05)] {
            let params = PhysParams::default().with_epsilon(eps);
            let h = effective_hamiltonian(&params, params.mass_s(), params.mass_l()).unwrap();
            for t in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
                let a = evolve(&KaonState::k0(), &params, t).unwrap();
                let b = matexp_oracle(&h, &KaonState::k0(), t);
                assert!((a.amp_k0() - b.amp_k0()).norm() < 1e-10, "eps={eps} t={t}");
                assert!(
                    (a.amp_k0bar() - b.amp_k0bar()).norm() < 1e-10,
                    "eps={eps} t={t}"
                );
            }
        }
    }

    #[test]
    fn matexp_identity_at_t0() {
        let params = PhysParams::default();
        let h = effective_hamiltonian(&params, params.mass_s(), params.mass_l()).unwrap();
        let s = crate::states::quasi_spin_state(c(0.3, -0.4), c(0.5, 0.7)).unwrap();
        let e = matexp_oracle(&h, &s, 0.0);
        assert!((e.amp_k0() - s.amp_k0()).norm() < 1e-15);
        assert!((e.amp_k0bar() - s.amp_k0bar()).norm() < 1e-15);
    }

    #[test]
    fn expm_reproduces_scalar_exponential() {
        // diagonal matrix: e^{diag(x, y)} = diag(e^x, e^y)
        let x = c(0.3, -1.2);
        let y = c(-2.0, 0.7);
        let m = Mat2::new(x, c(0.0, 0.0), c(0.0, 0.0), y);
        let e = expm2(&m);
        assert!((e.m[0][0] - x.exp()).norm() < 1e-14);
        assert!((e.m[1][1] - y.exp()).norm() < 1e-14);
        assert!(e.m[0][1].norm() < 1e-20);
    }

    #[test]
    fn evolve_rejects_degenerate_epsilon() {
        let params = PhysParams::default().with_epsilon(c(1.0, 0.0));
        assert!(matches!(
            evolve(&KaonState::k0(), &params, 1.0),
            Err(KaonError::DegenerateParameter(_))
        ));
        assert!(matches!(
            strangeness_probabilities(&params, 1.0),
            Err(KaonError::DegenerateParameter(_))
        ));
    }
}
