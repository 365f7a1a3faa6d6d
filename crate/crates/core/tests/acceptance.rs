//! End-to-end checks of the headline claims, one test per criterion. Each
//! prints a `[acceptance]` verdict line (visible under `--nocapture`) and
//! enforces the runtime budget it was designed against.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kaonsim::eraser::{
    analytic_reference, compare_with_reference, delayed_choice_check, measure_active_lifetime,
    run_setup, run_setup_sharded, setup_equivalence, EraserConfig, OutcomeLabel, Setup,
};
use kaonsim::states::{
    effective_hamiltonian, mass_eigenstates, CPWeights, KaonState, PhysParams, DEFAULT_DELTA_M,
};
use kaonsim::stats::binomial_z;
use kaonsim::{
    bell_check, duality_check, epsilon_from_delta, evolve, evolve_pair, joint_probability,
    make_entangled_pair, matexp_oracle, strangeness_probabilities, surviving_pair_state,
};

fn pass(n: usize, label: &str, elapsed: Duration, budget: Duration) {
    assert!(
        elapsed <= budget,
        "criterion {n} took {elapsed:?}, budget {budget:?}"
    );
    println!("[acceptance] criterion {n} ({label}): PASS ({elapsed:?})");
}

/// 1. Which-width predictability and fringe visibility square-sum to one on
///    a dense time grid.
#[test]
fn criterion_01_duality_identity_on_a_dense_grid() {
    let start = Instant::now();
    let params = PhysParams::default();
    let times: Vec<f64> = (0..10_000).map(|i| 50.0 * i as f64 / 9_999.0).collect();
    let points = duality_check(&params, &times).unwrap();
    assert_eq!(points.len(), 10_000);

    let mut worst = 0.0f64;
    for pt in &points {
        let residual = (pt.predictability * pt.predictability
            + pt.visibility * pt.visibility
            - 1.0)
            .abs();
        worst = worst.max(residual);
    }
    assert!(worst < 1e-12, "max |P^2 + V^2 - 1| = {worst:.3e}");
    pass(1, "duality identity over t in [0, 50]", start.elapsed(), Duration::from_secs(1));
}

/// 2. Closed-form oscillation probabilities, the evolution matrix, and the
///    series-summed matrix exponential agree pairwise.
#[test]
fn criterion_02_three_evolution_routes_agree() {
    let start = Instant::now();
    let presets = [
        Complex64::new(0.0, 0.0),
        epsilon_from_delta(3.27e-3).unwrap(),
        Complex64::new(0.1, 0.05),
    ];
    for eps in presets {
        let params = PhysParams::default().with_epsilon(eps);
        let h = effective_hamiltonian(&params, params.mass_s(), params.mass_l()).unwrap();
        for t in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let (p0, p0bar) = strangeness_probabilities(&params, t).unwrap();
            let ev = evolve(&KaonState::k0(), &params, t).unwrap();
            let mx = matexp_oracle(&h, &KaonState::k0(), t);
            for (closed, matrix, series) in [
                (p0, ev.amp_k0().norm_sqr(), mx.amp_k0().norm_sqr()),
                (p0bar, ev.amp_k0bar().norm_sqr(), mx.amp_k0bar().norm_sqr()),
            ] {
                assert!((closed - matrix).abs() < 1e-10, "eps={eps} t={t}");
                assert!((closed - series).abs() < 1e-10, "eps={eps} t={t}");
                assert!((matrix - series).abs() < 1e-10, "eps={eps} t={t}");
            }
        }
    }
    pass(2, "closed form vs matrix vs series exponential", start.elapsed(), Duration::from_secs(1));
}

/// 3. In the stable limit an entangled pair never yields equal strangeness
///    at equal times.
#[test]
fn criterion_03_equal_time_anticorrelation() {
    let start = Instant::now();
    let params = PhysParams::stable(DEFAULT_DELTA_M);
    let pair = make_entangled_pair(&params.weights()).unwrap();
    let k0 = KaonState::k0();
    for t in [0.0, 1.0, 5.0] {
        let p = joint_probability(&pair, &k0, &k0, &params, t, t).unwrap();
        assert!(p.abs() < 1e-12, "t = {t}: P(K0, t; K0, t) = {p:.3e}");
    }
    pass(3, "equal-time strangeness anticorrelation", start.elapsed(), Duration::from_secs(1));
}

/// 4. The inequality verdict tracks the charge asymmetry: the measured
///    asymmetry preset violates the delta <= 0 bound, the symmetric point
///    saturates the inequality at 1/4 = 1/4.
#[test]
fn criterion_04_inequality_violation_at_measured_asymmetry() {
    let start = Instant::now();
    let eps = epsilon_from_delta(3.27e-3).unwrap();
    let r = bell_check(&CPWeights::from_epsilon(eps), 1e-12).unwrap();
    assert!(r.abs_p > r.abs_q);
    assert!((r.delta - 3.27e-3).abs() < 1e-10, "delta = {}", r.delta);
    assert!(r.reduced_violated, "delta <= 0 bound should be violated");
    assert!(r.violated, "full inequality should be violated");

    let r0 = bell_check(&CPWeights::from_epsilon(Complex64::new(0.0, 0.0)), 1e-12).unwrap();
    assert!((r0.lhs - 0.25).abs() < 1e-12);
    assert!((r0.rhs - 0.25).abs() < 1e-12);
    assert!(!r0.violated);
    pass(4, "violation at the measured asymmetry", start.elapsed(), Duration::from_secs(1));
}

/// 5. The closed-form both-survive state equals the renormalized evolved
///    pair, up to a global phase.
#[test]
fn criterion_05_survivor_state_closed_form() {
    let start = Instant::now();
    let params = PhysParams::default();
    let pair = make_entangled_pair(&params.weights()).unwrap();
    for dt in [0.0, 1.0, -1.0, 3.0, -3.0] {
        let closed = surviving_pair_state(&params, dt);
        let evolved = evolve_pair(&pair, &params, dt.max(0.0), (-dt).max(0.0))
            .unwrap()
            .normalize()
            .unwrap();
        // align the free global phase before comparing amplitudes
        let overlap: Complex64 = closed
            .amps()
            .iter()
            .zip(evolved.amps())
            .map(|(c, e)| c.conj() * e)
            .sum();
        let phase = overlap / overlap.norm();
        for (c, e) in closed.amps().iter().zip(evolved.amps()) {
            assert!((phase * c - e).norm() < 1e-10, "dt = {dt}");
        }
    }
    pass(5, "both-survive state closed form", start.elapsed(), Duration::from_secs(1));
}

/// 6. Monte Carlo frequencies at zero separation: equal strangeness never
///    appears, opposite strangeness lands on the analytic split.
#[test]
fn criterion_06_sampler_matches_analytic_law_at_zero_separation() {
    let start = Instant::now();
    let params = PhysParams::default();
    let mut cfg = EraserConfig::new(Setup::A);
    cfg.t_l = 1.0;
    cfg.t_r0 = 1.0;
    cfg.mark_fraction = 0.0;
    cfg.n_events = 1_000_000;
    cfg.seed = 101;

    let run = run_setup(&cfg, &params).unwrap();
    assert_eq!(run.ss.total(), cfg.n_events);
    assert_eq!(run.ss.counts[0], 0, "same-strangeness cell K0K0 must stay empty");
    assert_eq!(run.ss.counts[3], 0, "same-strangeness cell K0barK0bar must stay empty");

    let reference = analytic_reference(&cfg, &params).unwrap();
    let expected = reference.ss.unwrap();
    assert_eq!(expected[0], 0.0);
    assert_eq!(expected[3], 0.0);
    assert!((expected[1] - 0.5).abs() < 1e-15 && (expected[2] - 0.5).abs() < 1e-15);
    for cell in [1, 2] {
        let z = binomial_z(run.ss.counts[cell], run.ss.total(), expected[cell]);
        assert!(z.abs() < 4.0, "cell {cell}: z = {z:.2}");
    }
    for cmp in compare_with_reference(&run, &reference) {
        assert!(cmp.z.abs() < 4.0, "{}[{}]: z = {:.2}", cmp.class, cmp.cell, cmp.z);
    }
    pass(6, "sampler vs analytic law at zero separation", start.elapsed(), Duration::from_secs(30));
}

/// 7. All four experimental arrangements produce the same matched joint
///    strangeness distribution: homogeneity holds at 10^6 events per setup.
#[test]
fn criterion_07_four_setups_are_equivalent() {
    let start = Instant::now();
    let params = PhysParams::default();
    let mut base = EraserConfig::new(Setup::A);
    base.t_l = 2.0;
    base.t_r0 = 1.0;
    base.n_events = 1_000_000;
    base.seed = 7;

    let report = setup_equivalence(&base, &params, 8).unwrap();
    assert_eq!(report.runs.len(), 4);
    for run in &report.runs {
        assert_eq!(run.n_events, base.n_events);
        assert!(run.ss_matched.total() > 0, "{:?} collected no matched events", run.setup);
    }
    assert!(
        report.homogeneous && report.chi_square.p_value > 1e-3,
        "chi2 = {:.2}, df = {}, p = {:.5}",
        report.chi_square.statistic,
        report.chi_square.degrees_of_freedom,
        report.chi_square.p_value
    );
    pass(7, "setup equivalence by homogeneity test", start.elapsed(), Duration::from_secs(120));
}

/// 8. Collapse ordering is invisible: identical tallies from both orderings
///    and identical analytic factorizations.
#[test]
fn criterion_08_collapse_ordering_is_irrelevant() {
    let start = Instant::now();
    let params = PhysParams::default();
    for setup in Setup::ALL {
        let mut cfg = EraserConfig::new(setup);
        cfg.t_l = 2.0;
        cfg.t_r0 = 1.0;
        cfg.n_events = 250_000;
        cfg.seed = 29;
        let report = delayed_choice_check(&cfg, &params).unwrap();
        assert!(report.consistent, "{setup}: {report:?}");
        assert_eq!(report.max_count_diff, 0, "{setup}");
        assert!(report.factorization_gap <= 1e-12, "{setup}: gap = {:.3e}", report.factorization_gap);
    }
    pass(8, "both collapse orderings tally identically", start.elapsed(), Duration::from_secs(60));
}

/// 9. A lifetime cut at 4.8 misidentifies each width population at a few
///    parts in a thousand.
#[test]
fn criterion_09_lifetime_cut_misidentification_band() {
    let start = Instant::now();
    let params = PhysParams::default();
    let (ks, kl) = mass_eigenstates(&params.weights());
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let n = 1_000_000u64;

    let mut short_as_long = 0u64;
    let mut long_as_short = 0u64;
    for _ in 0..n {
        if measure_active_lifetime(&ks, &params, 4.8, &mut rng).unwrap() == OutcomeLabel::KLong {
            short_as_long += 1;
        }
    }
    for _ in 0..n {
        if measure_active_lifetime(&kl, &params, 4.8, &mut rng).unwrap() == OutcomeLabel::KShort {
            long_as_short += 1;
        }
    }
    for (label, count) in [("short tail", short_as_long), ("long head", long_as_short)] {
        let rate = count as f64 / n as f64;
        assert!(
            (5e-3..=1.2e-2).contains(&rate),
            "{label}: misidentification rate {rate:.4e} outside [5e-3, 1.2e-2]"
        );
    }
    pass(9, "lifetime-cut misidentification band", start.elapsed(), Duration::from_secs(10));
}

/// 10. Frequency payloads are byte-identical across shard counts.
#[test]
fn criterion_10_shard_count_never_changes_the_bytes() {
    let start = Instant::now();
    let params = PhysParams::default();
    for setup in Setup::ALL {
        let mut cfg = EraserConfig::new(setup);
        cfg.t_l = 2.0;
        cfg.t_r0 = 1.0;
        cfg.n_events = 1_000_000;
        cfg.seed = 11;
        let payloads: Vec<Vec<u8>> = [1usize, 4, 16]
            .iter()
            .map(|&shards| {
                serde_json::to_vec(&run_setup_sharded(&cfg, &params, shards).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(payloads[0], payloads[1], "{setup}: 1 vs 4 shards");
        assert_eq!(payloads[0], payloads[2], "{setup}: 1 vs 16 shards");
    }
    pass(10, "byte-identical payloads across shard counts", start.elapsed(), Duration::from_secs(60));
}
