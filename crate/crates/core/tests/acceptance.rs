//! Acceptance suite: one end-to-end test per numbered criterion of the
//! project checklist. Every tolerance, size, and significance level is pinned
//! here. Each test prints exactly one `[PASS]`/`[FAIL]` line (visible with
//! `--nocapture`; cargo also shows it when the assertion fails), then asserts,
//! so a red criterion still reports its measured statistic.

use std::time::Instant;

use mcips_core::dual::reverse_check;
use mcips_core::dynamics::{
    evolve, evolve_augmented, generate_poisson, recover_points, AugmentedState, DynamicsKind,
};
use mcips_core::lattice::{sample_fixed_count, Density, Topology};
use mcips_core::verify::{
    birth_death_stationary, burke_exact, confirm_violation, drift_detection_test, invariance_test,
    multiline_product_test, occupation_tv, poisson_dual_test, sweep_ordering_violation,
    t_image_trajectory_check, truncation_law_test, DualPoissonConfig, InvarianceConfig,
    MultilineConfig, OrderingViolation, TestReport, TruncationConfig,
};

fn d(v: f64) -> Density {
    Density::new(v).unwrap()
}

fn report(number: u32, name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {number:02} {name}: {detail}");
}

fn joined(reports: &[TestReport]) -> String {
    reports
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn worst(reports: &[TestReport]) -> &TestReport {
    reports
        .iter()
        .max_by(|a, b| a.statistic.total_cmp(&b.statistic))
        .expect("at least one report")
}

#[test]
fn criterion_01_exact_burke_departure_law() {
    let t0 = Instant::now();
    let tv = burke_exact(d(1.0 / 3.0), d(2.0 / 3.0), 6).unwrap();
    let elapsed = t0.elapsed();
    let passed = tv <= 1e-10 && elapsed.as_secs_f64() < 10.0;
    report(
        1,
        "exact-burke-departures",
        passed,
        &format!(
            "densities (1/3, 2/3), window 6: TV(exact departure law, Bernoulli(1/3) product) \
             = {tv:.3e} vs 1e-10 ({elapsed:.2?})"
        ),
    );
    assert!(passed, "departure-law TV {tv:.3e} exceeds 1e-10");
}

#[test]
fn criterion_02_geometric_queue_ratio() {
    let t0 = Instant::now();
    let states = 200usize;
    let pi = birth_death_stationary(d(1.0 / 3.0), d(2.0 / 3.0), states).unwrap();
    // Pinned claim: queue length geometric with ratio rho1/rho2 = 1/2,
    // normalized over the same truncated state space.
    let claimed = 0.5f64;
    let norm = (1.0 - claimed) / (1.0 - claimed.powi(states as i32));
    let (mut max_diff, mut at) = (0.0f64, 0usize);
    for (k, &p) in pi.iter().enumerate() {
        let diff = (p - norm * claimed.powi(k as i32)).abs();
        if diff > max_diff {
            max_diff = diff;
            at = k;
        }
    }
    let solved_ratio = pi[1] / pi[0];
    let elapsed = t0.elapsed();
    let passed = max_diff <= 1e-12 && elapsed.as_secs_f64() < 1.0;
    report(
        2,
        "geometric-queue-ratio",
        passed,
        &format!(
            "densities (1/3, 2/3): max per-state diff from ratio-1/2 geometric is {max_diff:.3e} \
             vs 1e-12 (worst at queue length {at}); exact solve has ratio pi(1)/pi(0) \
             = {solved_ratio:.12} ({elapsed:.2?})"
        ),
    );
    assert!(
        passed,
        "exact stationary queue law has ratio {solved_ratio:.12}, not 1/2; \
         max per-state difference {max_diff:.3e} at queue length {at}"
    );
}

#[test]
fn criterion_03_pathwise_collapse_identity() {
    let t0 = Instant::now();
    let topology = Topology::ring(32);
    let counts = [6usize, 14, 24];
    // mark rate 32 per unit time, so horizon 31.25 gives 1e3 events on average
    let horizon = 31.25;
    let mut mismatches = 0usize;
    let mut events = 0usize;
    for (ki, kind) in [DynamicsKind::Had, DynamicsKind::Tasep]
        .into_iter()
        .enumerate()
    {
        for s in 0..100u64 {
            let base = 3_000 + 1_000_000 * ki as u64 + 37 * s;
            let lines: Vec<_> = counts
                .iter()
                .enumerate()
                .map(|(k, &c)| sample_fixed_count(topology, c, base + k as u64).unwrap())
                .collect();
            let points = generate_poisson(topology, kind, horizon, base + 11).unwrap();
            events += points.len();
            mismatches += t_image_trajectory_check(&lines, kind, &points).unwrap();
        }
    }
    let elapsed = t0.elapsed();
    let passed = mismatches == 0 && events >= 190_000 && elapsed.as_secs_f64() < 60.0;
    report(
        3,
        "pathwise-collapse-identity",
        passed,
        &format!(
            "Ring(32), line counts (6, 14, 24), 100 seeds x 2 kinds: collapsed multi-line state \
             equals directly evolved word at every one of {events} events, {mismatches} mismatches \
             ({elapsed:.2?})"
        ),
    );
    assert!(passed, "{mismatches} mismatches over {events} events");
}

#[test]
fn criterion_04_dual_reversal() {
    let t0 = Instant::now();
    let topology = Topology::ring(16);
    let mut failures = 0usize;
    for (ki, kind) in [DynamicsKind::Had, DynamicsKind::Tasep]
        .into_iter()
        .enumerate()
    {
        for s in 0..1000u64 {
            let base = 4_000 + 1_000_000 * ki as u64 + 3 * s;
            let count = 1 + (s as usize) % 15;
            let initial = sample_fixed_count(topology, count, base).unwrap();
            let points = generate_poisson(topology, kind, 8.0, base + 1).unwrap();
            let traj = evolve(&initial, kind, &points).unwrap();
            if !reverse_check(&traj).unwrap() {
                failures += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    let passed = failures == 0 && elapsed.as_secs_f64() < 60.0;
    report(
        4,
        "dual-reversal",
        passed,
        &format!(
            "Ring(16), particle counts 1..=15, horizon 8: reflected replay from the dual points \
             reproduces the reversed trajectory on 1000 trajectories x 2 kinds, {failures} \
             failures ({elapsed:.2?})"
        ),
    );
    assert!(passed, "{failures} reversal failures");
}

#[test]
fn criterion_05_point_recovery() {
    let t0 = Instant::now();
    let topology = Topology::ring(16);
    let mut failures = 0usize;
    for (ki, kind) in [DynamicsKind::Had, DynamicsKind::Tasep]
        .into_iter()
        .enumerate()
    {
        for s in 0..1000u64 {
            let base = 5_000 + 1_000_000 * ki as u64 + 5 * s;
            let count = 1 + (s as usize) % 15;
            let eta = sample_fixed_count(topology, count, base).unwrap();
            let aug = AugmentedState::with_random_spins(eta, base + 1);
            let points = generate_poisson(topology, kind, 8.0, base + 2).unwrap();
            let traj = evolve_augmented(&aug, kind, &points).unwrap();
            if recover_points(&traj).unwrap() != points {
                failures += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    let passed = failures == 0 && elapsed.as_secs_f64() < 60.0;
    report(
        5,
        "point-recovery",
        passed,
        &format!(
            "Ring(16), particle counts 1..=15, horizon 8: driving marks recovered exactly from \
             the spin-augmented trajectory on 1000 instances x 2 kinds, {failures} failures \
             ({elapsed:.2?})"
        ),
    );
    assert!(passed, "{failures} recovery failures");
}

#[test]
fn criterion_06_dual_poisson_independence() {
    let t0 = Instant::now();
    let mut reports = Vec::new();
    for kind in [DynamicsKind::Had, DynamicsKind::Tasep] {
        let cfg = DualPoissonConfig {
            sites: 512,
            density: d(0.5),
            horizon: 64.0,
            replicas: 10_000,
            kind,
            seed: 31,
        };
        reports.push(poisson_dual_test(&cfg, 0.01).unwrap());
    }
    let elapsed = t0.elapsed();
    let passed = reports.iter().all(|r| r.passed) && elapsed.as_secs_f64() < 600.0;
    report(
        6,
        "dual-poisson-independence",
        passed,
        &format!(
            "Ring(512), horizon 64, 10000 replicas per kind, KS + dispersion Bonferroni at 0.01: \
             dual field Poisson and independent of the final word for had and tasep; worst \
             final-occupancy correlation {:.2} sigma vs 3 ({elapsed:.2?})",
            worst(&reports).statistic
        ),
    );
    assert!(passed, "{}", joined(&reports));
}

#[test]
fn criterion_07_multiline_product_invariance() {
    let t0 = Instant::now();
    let runs: [(&[f64], usize); 2] = [
        // non-monotone line densities on purpose
        (&[0.7, 0.3], 1_067),
        (&[0.2, 0.5, 0.8], 1_600),
    ];
    let mut reports = Vec::new();
    for kind in [DynamicsKind::Had, DynamicsKind::Tasep] {
        for (densities, buffer) in runs {
            let cfg = MultilineConfig {
                window: 128,
                buffer,
                densities: densities.iter().map(|&v| d(v)).collect(),
                kind,
                horizon: 32.0,
                replicas: 200,
                seed: 31,
            };
            reports.push(multiline_product_test(&cfg).unwrap());
        }
    }
    let elapsed = t0.elapsed();
    let passed = reports.iter().all(|r| r.passed) && elapsed.as_secs_f64() < 600.0;
    report(
        7,
        "multiline-product-invariance",
        passed,
        &format!(
            "window 128, horizon 32, 200 replicas, vectors (0.7, 0.3) and (0.2, 0.5, 0.8), \
             2 kinds: per-line densities and cross-line correlations all within 3 sigma; \
             worst |z| = {:.2} ({elapsed:.2?})",
            worst(&reports).statistic
        ),
    );
    assert!(passed, "{}", joined(&reports));
}

#[test]
fn criterion_08_multiclass_invariance() {
    let t0 = Instant::now();
    let kinds = [
        DynamicsKind::Had,
        DynamicsKind::Tasep,
        DynamicsKind::SeqTasepLr {
            mark_probability: 0.5,
        },
        DynamicsKind::SeqTasepRl {
            mark_probability: 0.5,
        },
    ];
    let mut reports = Vec::new();
    for kind in kinds {
        let cfg = InvarianceConfig {
            topology: Topology::segment(1000, 500),
            densities: vec![d(0.2), d(0.5), d(0.8)],
            kind,
            horizon: 2.0,
            replicas: 10_000,
            seed: 31,
        };
        reports.push(invariance_test(&cfg, 0.01).unwrap());
    }
    let elapsed = t0.elapsed();
    let passed = reports.iter().all(|r| r.passed) && elapsed.as_secs_f64() < 1800.0;
    let w = worst(&reports);
    report(
        8,
        "multiclass-invariance",
        passed,
        &format!(
            "densities (0.2, 0.5, 0.8), window 1000, t = 2, 10000 replicas, Bonferroni 0.01 \
             per kind over 28 statistics: no rejection for had, tasep, seq-tasep-lr, \
             seq-tasep-rl; worst |z| = {:.2} ({}) ({elapsed:.2?})",
            w.statistic, w.name
        ),
    );
    assert!(passed, "{}", joined(&reports));
}

#[test]
fn criterion_09_truncation_law() {
    let t0 = Instant::now();
    let mut reports = Vec::new();
    for m in [1usize, 2] {
        let cfg = TruncationConfig {
            topology: Topology::segment(1000, 100),
            densities: vec![d(0.2), d(0.5), d(0.8)],
            m,
            replicas: 4_000,
            seed: 31,
        };
        reports.push(truncation_law_test(&cfg, 0.005).unwrap());
    }
    let elapsed = t0.elapsed();
    let passed = reports.iter().all(|r| r.passed) && elapsed.as_secs_f64() < 600.0;
    report(
        9,
        "truncation-law",
        passed,
        &format!(
            "3-class word truncated to m in {{1, 2}} vs fresh m-class construction, window 1000, \
             4000 replicas, level 0.005 each; the m = 1 case also matches the exact single-class \
             product-law constants; worst |z| = {:.2} ({elapsed:.2?})",
            worst(&reports).statistic
        ),
    );
    assert!(passed, "{}", joined(&reports));
}

#[test]
fn criterion_10_negative_controls() {
    let t0 = Instant::now();
    let drift_cfg = InvarianceConfig {
        topology: Topology::segment(500, 200),
        densities: vec![d(0.2), d(0.8)],
        kind: DynamicsKind::Asep {
            left_probability: 0.7,
        },
        horizon: 4.0,
        replicas: 1_000,
        seed: 31,
    };
    let drift = drift_detection_test(&drift_cfg, 5.0).unwrap();

    let fixture: OrderingViolation =
        serde_json::from_str(include_str!("fixtures/parallel_ordering_violation.json")).unwrap();
    let par = DynamicsKind::ParTasep {
        mark_probability: 0.5,
    };
    let found = sweep_ordering_violation(par, 4).unwrap();
    let fixture_ok = found.as_ref() == Some(&fixture) && confirm_violation(&fixture, par).unwrap();
    let seq_ok = sweep_ordering_violation(
        DynamicsKind::SeqTasepLr {
            mark_probability: 0.5,
        },
        4,
    )
    .unwrap()
    .is_none()
        && sweep_ordering_violation(
            DynamicsKind::SeqTasepRl {
                mark_probability: 0.5,
            },
            4,
        )
        .unwrap()
        .is_none();

    let elapsed = t0.elapsed();
    let passed = drift.passed && fixture_ok && seq_ok && elapsed.as_secs_f64() < 300.0;
    report(
        10,
        "negative-controls",
        passed,
        &format!(
            "asep(0.7) two-class drift detected at {:.1} sigma (required > 5); exhaustive search \
             on <= 4 sites finds the parallel-sweep ordering violation, equal to the shipped \
             fixture and confirmed by replay; both sequential sweeps preserve ordering on the \
             same search space ({elapsed:.2?})",
            drift.statistic
        ),
    );
    assert!(
        passed,
        "drift: {drift}; fixture_ok: {fixture_ok}; sequential clean: {seq_ok}"
    );
}

#[test]
fn criterion_11_exact_chain_oracle() {
    let t0 = Instant::now();
    let mut uniform_err = 0.0f64;
    let mut worst_tv = 0.0f64;
    let mut states_ok = true;
    for (ki, kind) in [DynamicsKind::Tasep, DynamicsKind::Had, DynamicsKind::Lrep]
        .into_iter()
        .enumerate()
    {
        let (solved, tv) =
            occupation_tv(kind, Topology::ring(5), 2, 2e5, 1_100 + ki as u64).unwrap();
        states_ok &= solved.states.len() == 10;
        for &p in &solved.pi {
            uniform_err = uniform_err.max((p - 0.1).abs());
        }
        worst_tv = worst_tv.max(tv);
    }
    let elapsed = t0.elapsed();
    let passed =
        states_ok && uniform_err <= 1e-12 && worst_tv < 0.01 && elapsed.as_secs_f64() < 120.0;
    report(
        11,
        "exact-chain-oracle",
        passed,
        &format!(
            "Ring(5) with 2 particles, kinds tasep/had/lrep: stationary solve is uniform over \
             all 10 states to {uniform_err:.2e} (<= 1e-12); long-run occupation over horizon 2e5 \
             within TV {worst_tv:.4} of it (< 0.01) ({elapsed:.2?})"
        ),
    );
    assert!(
        passed,
        "states_ok {states_ok}, uniform error {uniform_err:.2e}, occupation TV {worst_tv:.4}"
    );
}
