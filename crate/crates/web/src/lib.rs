//! Browser bindings for the static demo page.
//!
//! Every export takes plain numbers and returns one JSON string, so the
//! page needs no custom marshalling: parse the string, and if it carries an
//! `error` key the inputs were rejected. The functions are ordinary Rust on
//! non-wasm targets, which keeps them testable on the host.

use num_complex::Complex64;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use kaonsim::states::{CPWeights, KaonState, PhysParams};
use kaonsim::{bell_check, duality_check, epsilon_from_delta, evolve, strangeness_probabilities};

fn err(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn grid(tmax: f64, steps: usize) -> Result<Vec<f64>, String> {
    if !tmax.is_finite() || tmax <= 0.0 {
        return Err(format!("tmax must be positive and finite, got {tmax}"));
    }
    if !(2..=100_000).contains(&steps) {
        return Err(format!("steps must lie in 2..=100000, got {steps}"));
    }
    Ok((0..steps)
        .map(|i| tmax * i as f64 / (steps - 1) as f64)
        .collect())
}

fn params(delta_m: f64, gamma_l: f64, epsilon: Complex64) -> Result<PhysParams, String> {
    let p = PhysParams { delta_m, gamma_s: 1.0, gamma_l, epsilon };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

/// Strangeness oscillation of an initially pure K0: probabilities of
/// finding K0 or K0bar, and the survival probability, on a uniform grid.
#[wasm_bindgen]
pub fn oscillation_curve(
    delta_m: f64,
    gamma_l: f64,
    epsilon_re: f64,
    epsilon_im: f64,
    tmax: f64,
    steps: usize,
) -> String {
    let run = || -> Result<String, String> {
        let params = params(delta_m, gamma_l, Complex64::new(epsilon_re, epsilon_im))?;
        let mut points = Vec::with_capacity(steps);
        for t in grid(tmax, steps)? {
            let (p_k0, p_k0bar) =
                strangeness_probabilities(&params, t).map_err(|e| e.to_string())?;
            let survival = evolve(&KaonState::k0(), &params, t)
                .map_err(|e| e.to_string())?
                .norm_sqr();
            points.push(json!({
                "t": t,
                "p_k0": p_k0,
                "p_k0bar": p_k0bar,
                "survival": survival,
            }));
        }
        Ok(json!({ "points": points }).to_string())
    };
    run().unwrap_or_else(err)
}

/// Which-width predictability against fringe visibility. The residual
/// column reports V^2 + P^2 - 1, which vanishes for a pure state.
#[wasm_bindgen]
pub fn duality_curve(delta_m: f64, gamma_l: f64, tmax: f64, steps: usize) -> String {
    let run = || -> Result<String, String> {
        let params = params(delta_m, gamma_l, Complex64::new(0.0, 0.0))?;
        let points = duality_check(&params, &grid(tmax, steps)?).map_err(|e| e.to_string())?;
        let rows: Vec<_> = points
            .iter()
            .map(|p| {
                json!({
                    "t": p.t,
                    "visibility": p.visibility,
                    "predictability": p.predictability,
                    "residual": p.visibility * p.visibility
                        + p.predictability * p.predictability
                        - 1.0,
                })
            })
            .collect();
        Ok(json!({ "points": rows }).to_string())
    };
    run().unwrap_or_else(err)
}

/// Inequality test at a given leptonic charge asymmetry.
#[wasm_bindgen]
pub fn bell_verdict(delta: f64) -> String {
    let run = || -> Result<String, String> {
        let epsilon = epsilon_from_delta(delta).map_err(|e| e.to_string())?;
        let report =
            bell_check(&CPWeights::from_epsilon(epsilon), 1e-12).map_err(|e| e.to_string())?;
        serde_json::to_string(&report).map_err(|e| e.to_string())
    };
    run().unwrap_or_else(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(doc: String) -> Value {
        serde_json::from_str(&doc).expect("valid json")
    }

    #[test]
    fn oscillation_curve_starts_pure() {
        let doc = parse(oscillation_curve(0.47, 1.7e-3, 0.0, 0.0, 10.0, 5));
        let points = doc["points"].as_array().unwrap();
        assert_eq!(points.len(), 5);
        assert_eq!(points[0]["t"], 0.0);
        assert_eq!(points[0]["p_k0"], 1.0);
        assert_eq!(points[0]["p_k0bar"], 0.0);
        assert_eq!(points[0]["survival"], 1.0);
    }

    #[test]
    fn oscillation_curve_rejects_bad_grid() {
        let doc = parse(oscillation_curve(0.47, 1.7e-3, 0.0, 0.0, -1.0, 5));
        assert!(doc["error"].as_str().unwrap().contains("tmax"));
        let doc = parse(oscillation_curve(0.47, 1.7e-3, 0.0, 0.0, 1.0, 1));
        assert!(doc["error"].as_str().unwrap().contains("steps"));
    }

    #[test]
    fn duality_residual_vanishes() {
        let doc = parse(duality_curve(0.47, 1.7e-3, 20.0, 50));
        for point in doc["points"].as_array().unwrap() {
            assert!(point["residual"].as_f64().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn bell_verdict_flags_the_measured_asymmetry() {
        let doc = parse(bell_verdict(3.27e-3));
        assert_eq!(doc["violated"], true);
        let doc = parse(bell_verdict(0.0));
        assert_eq!(doc["violated"], false);
        let doc = parse(bell_verdict(1.5));
        assert!(doc["error"].is_string());
    }
}
