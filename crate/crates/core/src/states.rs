//! Basis states, physical constants and the effective Hamiltonian of the
//! neutral-kaon two-level system.
//!
//! Conventions used throughout the crate:
//! - strangeness basis {|K0>, |K0bar>} with sigma_3 |K0> = +|K0>;
//! - CP operator is -sigma_1, so CP|K0> = -|K0bar>;
//! - time in units of tau_S, widths in units of Gamma_S (Gamma_S = 1);
//! - the common mass is 0, only the splitting delta_m is physical:
//!   m_S = -delta_m/2, m_L = +delta_m/2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KaonError, Result};
use crate::linalg::{inner, norm2, Mat2, I, ONE, ZERO};

/// tau_S in seconds; defines the time unit.
pub const TAU_S_SECONDS: f64 = 0.89e-10;
/// tau_L in seconds.
pub const TAU_L_SECONDS: f64 = 5.17e-8;
/// Mass splitting m_L - m_S in eV.
pub const DELTA_M_EV: f64 = 3.49e-6;
/// hbar in eV s, used only to document unit conversions.
pub const HBAR_EV_S: f64 = 6.582119569e-16;

/// delta_m in Gamma_S units. Equals DELTA_M_EV * TAU_S_SECONDS / HBAR_EV_S
/// up to the rounding of the published inputs.
pub const DEFAULT_DELTA_M: f64 = 0.47;
/// Gamma_L in Gamma_S units: tau_S / tau_L.
pub const DEFAULT_GAMMA_L: f64 = TAU_S_SECONDS / TAU_L_SECONDS;

/// Dimensionless physical constants plus the CP-violation parameter.
///
/// Fields are public; call `validate` after hand-constructing values.
/// `gamma_s == gamma_l` is allowed so the stable limit
/// (`gamma_s = gamma_l = 0`) stays expressible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub delta_m: f64,
    pub gamma_s: f64,
    pub gamma_l: f64,
    pub epsilon: Complex64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            delta_m: DEFAULT_DELTA_M,
            gamma_s: 1.0,
            gamma_l: DEFAULT_GAMMA_L,
            epsilon: ZERO,
        }
    }
}

impl PhysParams {
    pub fn new(delta_m: f64, gamma_s: f64, gamma_l: f64, epsilon: Complex64) -> Result<Self> {
        let p = PhysParams { delta_m, gamma_s, gamma_l, epsilon };
        p.validate()?;
        Ok(p)
    }

    /// Stable limit: no decay, oscillation only.
    pub fn stable(delta_m: f64) -> Self {
        PhysParams { delta_m, gamma_s: 0.0, gamma_l: 0.0, epsilon: ZERO }
    }

    pub fn with_epsilon(mut self, epsilon: Complex64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_m", self.delta_m),
            ("gamma_s", self.gamma_s),
            ("gamma_l", self.gamma_l),
            ("epsilon.re", self.epsilon.re),
            ("epsilon.im", self.epsilon.im),
        ] {
            if !v.is_finite() {
                return Err(KaonError::InvalidArgument(format!("{name} must be finite")));
            }
        }
        if self.gamma_l < 0.0 {
            return Err(KaonError::InvalidArgument(format!(
                "gamma_l must be >= 0, got {}",
                self.gamma_l
            )));
        }
        if self.gamma_s < self.gamma_l {
            return Err(KaonError::InvalidArgument(format!(
                "gamma_s ({}) must be >= gamma_l ({})",
                self.gamma_s, self.gamma_l
            )));
        }
        Ok(())
    }

    /// Gamma_L - Gamma_S, non-positive.
    pub fn delta_gamma(&self) -> f64 {
        self.gamma_l - self.gamma_s
    }

    /// Mean width (Gamma_S + Gamma_L)/2.
    pub fn gamma_mean(&self) -> f64 {
        0.5 * (self.gamma_s + self.gamma_l)
    }

    pub fn mass_s(&self) -> f64 {
        -0.5 * self.delta_m
    }

    pub fn mass_l(&self) -> f64 {
        0.5 * self.delta_m
    }

    /// lambda_S = m_S - (i/2) Gamma_S.
    pub fn lambda_s(&self) -> Complex64 {
        Complex64::new(self.mass_s(), -0.5 * self.gamma_s)
    }

    /// lambda_L = m_L - (i/2) Gamma_L.
    pub fn lambda_l(&self) -> Complex64 {
        Complex64::new(self.mass_l(), -0.5 * self.gamma_l)
    }

    pub fn weights(&self) -> CPWeights {
        CPWeights::from_epsilon(self.epsilon)
    }
}

/// p = 1 + eps, q = 1 - eps and the normalization N, N^2 = |p|^2 + |q|^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CPWeights {
    pub p: Complex64,
    pub q: Complex64,
    pub n: f64,
}

impl CPWeights {
    pub fn from_epsilon(epsilon: Complex64) -> Self {
        let p = ONE + epsilon;
        let q = ONE - epsilon;
        let n = (p.norm_sqr() + q.norm_sqr()).sqrt();
        CPWeights { p, q, n }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.n * self.n
    }

    /// Errors when p*q = 0: the mass eigenstates then coincide and every
    /// formula containing p/q or q/p loses meaning.
    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.p.norm() == 0.0 || self.q.norm() == 0.0 {
            return Err(KaonError::DegenerateParameter(format!(
                "|p| = {}, |q| = {}; need both nonzero",
                self.p.norm(),
                self.q.norm()
            )));
        }
        Ok(())
    }
}

/// Two-component state in the strangeness basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaonState {
    amp_k0: Complex64,
    amp_k0bar: Complex64,
    normalized: bool,
}

const NORM_TOL: f64 = 1e-12;

impl KaonState {
    /// Stores amplitudes as given; the `normalized` flag is derived.
    pub fn from_amplitudes(amp_k0: Complex64, amp_k0bar: Complex64) -> Self {
        let n2 = amp_k0.norm_sqr() + amp_k0bar.norm_sqr();
        KaonState { amp_k0, amp_k0bar, normalized: (n2 - 1.0).abs() <= NORM_TOL }
    }

    pub fn k0() -> Self {
        KaonState { amp_k0: ONE, amp_k0bar: ZERO, normalized: true }
    }

    pub fn k0bar() -> Self {
        KaonState { amp_k0: ZERO, amp_k0bar: ONE, normalized: true }
    }

    pub fn amp_k0(&self) -> Complex64 {
        self.amp_k0
    }

    pub fn amp_k0bar(&self) -> Complex64 {
        self.amp_k0bar
    }

    pub fn amps(&self) -> [Complex64; 2] {
        [self.amp_k0, self.amp_k0bar]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        norm2(self.amps())
    }

    /// <self|other>.
    pub fn overlap(&self, other: &KaonState) -> Complex64 {
        inner(self.amps(), other.amps())
    }

    pub fn normalize(&self) -> Result<KaonState> {
        let n2 = self.norm_sqr();
        if n2 < 1e-300 {
            return Err(KaonError::Underflow(
                "cannot normalize a state with norm^2 < 1e-300".into(),
            ));
        }
        let s = 1.0 / n2.sqrt();
        Ok(KaonState {
            amp_k0: self.amp_k0 * s,
            amp_k0bar: self.amp_k0bar * s,
            normalized: true,
        })
    }

    /// <sigma_3>; +1 on |K0>, -1 on |K0bar> for unit-norm states.
    pub fn strangeness_expectation(&self) -> f64 {
        self.amp_k0.norm_sqr() - self.amp_k0bar.norm_sqr()
    }
}

/// (|K1>, |K2>) = ((|K0> - |K0bar>)/sqrt2, (|K0> + |K0bar>)/sqrt2).
/// K1 is CP-even, K2 CP-odd under CP = -sigma_1.
pub fn cp_eigenstates() -> (KaonState, KaonState) {
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    (
        KaonState::from_amplitudes(r, -r),
        KaonState::from_amplitudes(r, r),
    )
}

/// (|K_S>, |K_L>) = ((p|K0> - q|K0bar>)/N, (p|K0> + q|K0bar>)/N).
///
/// Not orthogonal when CP is violated: <K_S|K_L> = (|p|^2 - |q|^2)/N^2.
pub fn mass_eigenstates(w: &CPWeights) -> (KaonState, KaonState) {
    let s = 1.0 / w.n;
    (
        KaonState::from_amplitudes(w.p * s, -w.q * s),
        KaonState::from_amplitudes(w.p * s, w.q * s),
    )
}

/// Normalized a|K0> + b|K0bar>.
pub fn quasi_spin_state(a: Complex64, b: Complex64) -> Result<KaonState> {
    let n2 = a.norm_sqr() + b.norm_sqr();
    if n2 == 0.0 {
        return Err(KaonError::InvalidArgument(
            "quasi_spin_state requires (a, b) != (0, 0)".into(),
        ));
    }
    let s = 1.0 / n2.sqrt();
    Ok(KaonState::from_amplitudes(a * s, b * s))
}

/// sigma_3; strangeness observable.
pub fn strangeness_operator() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// -sigma_1; CP observable in this basis convention.
pub fn cp_operator() -> Mat2 {
    Mat2::new(ZERO, -ONE, -ONE, ZERO)
}

/// Effective mass Hamiltonian in the strangeness basis, decomposed as
/// H = a*1 + b*(cos(alpha) sigma_1 + sin(alpha) sigma_2) with b_3 = 0
/// and e^{i alpha} = q/p (alpha is complex when |p| != |q|).
#[derive(Debug, Clone, Copy)]
pub struct EffectiveHamiltonian {
    pub matrix: Mat2,
    pub a_coef: Complex64,
    pub b_coef: Complex64,
    pub alpha: Complex64,
}

/// Builds H from the widths/masses and epsilon. m_s and m_l are free so
/// callers can pick a mass offset; every observable depends only on
/// m_l - m_s. Eigenvalues are lambda_{S,L} = m_{S,L} - (i/2)Gamma_{S,L},
/// eigenvectors are the mass eigenstates.
pub fn effective_hamiltonian(params: &PhysParams, m_s: f64, m_l: f64) -> Result<EffectiveHamiltonian> {
    params.validate()?;
    let w = params.weights();
    w.require_nondegenerate()?;

    let lambda_s = Complex64::new(m_s, -0.5 * params.gamma_s);
    let lambda_l = Complex64::new(m_l, -0.5 * params.gamma_l);
    let a = 0.5 * (lambda_l + lambda_s);
    let b = 0.5 * (lambda_l - lambda_s);
    // e^{i alpha} = q/p  =>  alpha = -i Log(q/p), principal branch.
    let ratio = w.q / w.p;
    let alpha = -I * ratio.ln();

    // Off-diagonals: b e^{-i alpha} = b p/q, b e^{i alpha} = b q/p.
    let matrix = Mat2::new(a, b * w.p / w.q, b * w.q / w.p, a);
    Ok(EffectiveHamiltonian { matrix, a_coef: a, b_coef: b, alpha })
}

impl EffectiveHamiltonian {
    /// Reassembles the matrix from (a, b, alpha); used to pin b_3 = 0.
    pub fn from_decomposition_check(&self) -> Mat2 {
        let (c, s) = (self.alpha.cos(), self.alpha.sin());
        let sigma1 = Mat2::new(ZERO, ONE, ONE, ZERO);
        let sigma2 = Mat2::new(ZERO, -I, I, ZERO);
        Mat2::identity()
            .scale(self.a_coef)
            .add(&sigma1.scale(self.b_coef * c).add(&sigma2.scale(self.b_coef * s)))
    }
}
