//! Verification suites: exact enumerations, pathwise identity checks, and
//! statistical tests that compare simulated laws against their targets.
//!
//! Every suite returns a [`TestReport`] (or raw per-component statistics so a
//! caller can combine several suites into one family). Randomized suites take
//! a base seed and derive one deterministic stream per replica, so a rerun
//! with the same configuration is bit-identical.

use crate::ctmc::{stationary, SolvedChain};
use crate::dual::{multiline_evolve, multiline_local_step, evolve_with_duals, MultiLineState};
use crate::dynamics::{
    apply_sweep, evolve_multiclass, evolve_streaming, generate_bernoulli_field, generate_poisson,
    DynamicsKind, Location, PointProcess,
};
use crate::error::{Error, Result};
use crate::lattice::{
    sample_bernoulli, sample_lines, truncate, Configuration, Density, MulticlassConfig, Topology,
};
use crate::queue::{construct_measure, geometric_stationary, m_map, queue_recursion, splitmix64, Boundary};
use crate::stats::{
    bonferroni_z_threshold, correlation, dispersion_test, kolmogorov_sf, one_sample_z, paired_z,
    two_sample_z,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Deterministic sub-seed for one replica-and-role pair.
fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Outcome of one verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub details: String,
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: statistic {:.6e} vs threshold {:.6e}{}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.threshold,
            if self.details.is_empty() { "" } else { " -- " },
            self.details
        )
    }
}

/// Number of occupancy lags tracked by the summary statistics.
pub const STAT_LAGS: usize = 8;

/// Component names of [`statistics_vector`] for an `n`-class word.
pub fn statistics_names(classes: usize) -> Vec<String> {
    let holes = classes + 1;
    let mut names = Vec::new();
    for c in 1..=holes {
        names.push(format!("density[{c}]"));
    }
    for a in 1..=holes {
        for b in 1..=holes {
            names.push(format!("pair[{a},{b}]"));
        }
    }
    for lag in 1..=STAT_LAGS {
        names.push(format!("lagcov[{lag}]"));
    }
    names
}

/// Summary statistics of a multiclass word over its observation window:
/// per-class site frequencies, adjacent-pair frequencies, and occupancy
/// autocovariances at lags `1..=STAT_LAGS` (computed against the empirical
/// window mean). On a ring the pairs and lags wrap; on a segment only pairs
/// falling inside the window count.
pub fn statistics_vector(cfg: &MulticlassConfig) -> Vec<f64> {
    let t = cfg.topology();
    let holes = cfg.classes() as u32 + 1;
    let window: Vec<i64> = t.window_sites().collect();
    let w = window.len();
    let mut out = Vec::with_capacity(statistics_names(cfg.classes()).len());

    let mut class_counts = vec![0usize; holes as usize + 1];
    for &x in &window {
        class_counts[cfg.get(x) as usize] += 1;
    }
    for c in 1..=holes {
        out.push(class_counts[c as usize] as f64 / w as f64);
    }

    let mut pair_counts = vec![0usize; (holes as usize + 1) * (holes as usize + 1)];
    let mut pairs = 0usize;
    for i in 0..w {
        let x = window[i];
        let y = if t.is_ring() {
            window[(i + 1) % w]
        } else if i + 1 < w {
            window[i + 1]
        } else {
            break;
        };
        pair_counts[cfg.get(x) as usize * (holes as usize + 1) + cfg.get(y) as usize] += 1;
        pairs += 1;
    }
    for a in 1..=holes as usize {
        for b in 1..=holes as usize {
            out.push(pair_counts[a * (holes as usize + 1) + b] as f64 / pairs as f64);
        }
    }

    let occ: Vec<f64> = window
        .iter()
        .map(|&x| (cfg.get(x) <= cfg.classes() as u32) as u8 as f64)
        .collect();
    let mean = occ.iter().sum::<f64>() / w as f64;
    for lag in 1..=STAT_LAGS {
        let mut acc = 0.0;
        let mut cnt = 0usize;
        if t.is_ring() {
            for i in 0..w {
                acc += (occ[i] - mean) * (occ[(i + lag) % w] - mean);
                cnt += 1;
            }
        } else {
            for i in 0..w.saturating_sub(lag) {
                acc += (occ[i] - mean) * (occ[i + lag] - mean);
                cnt += 1;
            }
        }
        out.push(if cnt > 0 { acc / cnt as f64 } else { 0.0 });
    }
    out
}

/// Exact total-variation distance between the departure word of a stationary
/// discrete queue over a window of `window` steps and the i.i.d. law of its
/// arrivals.
///
/// The enumeration is exact: the departure word depends on the initial queue
/// length `z` only through `min(z, window)` (a queue that starts at `window`
/// or more cannot empty inside the window, so every potential service
/// departs), which lumps the geometric boundary into `window + 1` atoms whose
/// masses are summed in closed form.
pub fn burke_exact(rho1: Density, rho2: Density, window: usize) -> Result<f64> {
    assert!(window <= 12, "departure alphabet grows as 4^window");
    let law = geometric_stationary(rho1, rho2)?;
    let u = law.ratio;
    let (r1, r2) = (rho1.value(), rho2.value());
    let size = 1usize << window;
    let mut departure_law = vec![0.0f64; size];
    let word_of = |bits: usize| -> Vec<u8> { (0..window).map(|i| (bits >> i & 1) as u8).collect() };
    let word_prob = |bits: usize, p: f64| -> f64 {
        let ones = (bits as u32).count_ones() as i32;
        p.powi(ones) * (1.0 - p).powi(window as i32 - ones)
    };
    for z in 0..=window {
        let pz = if z < window {
            (1.0 - u) * u.powi(z as i32)
        } else {
            u.powi(window as i32)
        };
        for arrivals in 0..size {
            let a1 = word_of(arrivals);
            let pa = word_prob(arrivals, r1);
            for services in 0..size {
                let a2 = word_of(services);
                let ps = word_prob(services, r2);
                let (departs, _) = queue_recursion(z as u64, &a1, &a2);
                let key = departs
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i));
                departure_law[key] += pz * pa * ps;
            }
        }
    }
    let tv = (0..size)
        .map(|bits| (departure_law[bits] - word_prob(bits, r1)).abs())
        .sum::<f64>()
        / 2.0;
    Ok(tv)
}

/// Stationary law of the queue-length chain, solved numerically as a
/// birth–death chain truncated at `states` levels (the top level keeps its
/// upward mass in place). Independent of the closed-form law, so the two can
/// be compared.
pub fn birth_death_stationary(rho1: Density, rho2: Density, states: usize) -> Result<Vec<f64>> {
    let (r1, r2) = (rho1.value(), rho2.value());
    if r1 >= r2 {
        return Err(Error::DensitiesNotIncreasing(vec![r1, r2]));
    }
    let up = r1 * (1.0 - r2);
    let down = (1.0 - r1) * r2;
    let n = states;
    let mut p = DMatrix::<f64>::zeros(n, n);
    for z in 0..n {
        let up_z = if z + 1 < n { up } else { 0.0 };
        let down_z = if z > 0 { down } else { 0.0 };
        if z + 1 < n {
            p[(z, z + 1)] = up_z;
        }
        if z > 0 {
            p[(z, z - 1)] = down_z;
        }
        p[(z, z)] = 1.0 - up_z - down_z;
    }
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).expect("birth-death chain is irreducible");
    Ok(pi.iter().map(|&x| x.max(0.0)).collect())
}

/// Pathwise identity between the collapsed multi-line process and the direct
/// multiclass evolution, checked after every single event. Returns the number
/// of event times at which the two words disagree (zero when the identity
/// holds).
pub fn t_image_trajectory_check(
    lines: &[Configuration],
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<usize> {
    let boundary = if lines[0].topology().is_ring() {
        Boundary::Loynes
    } else {
        Boundary::Empty
    };
    let image = m_map(lines, boundary)?;
    let traj = evolve_multiclass(&image, kind, points)?;
    let direct_states = traj.replay();
    let mut state = MultiLineState::new(lines.to_vec())?;
    let mut mismatches = 0usize;
    for (mark, direct) in points.marks().iter().zip(&direct_states) {
        multiline_local_step(&mut state, kind, mark.location)?;
        if m_map(state.lines(), boundary)? != *direct {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// One summary-statistic component with its paired z-score and p-value.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentZ {
    pub name: String,
    pub z: f64,
    pub p: f64,
}

fn worst_component(comps: &[ComponentZ]) -> &ComponentZ {
    comps
        .iter()
        .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
        .expect("at least one component")
}

/// Configuration of an invariance scan: sample the constructed measure,
/// evolve it for `horizon` under `kind`, and compare window statistics before
/// and after, paired per replica. For the discrete sweep kinds `horizon` is
/// rounded to a whole number of sweeps.
#[derive(Debug, Clone)]
pub struct InvarianceConfig {
    pub topology: Topology,
    pub densities: Vec<Density>,
    pub kind: DynamicsKind,
    pub horizon: f64,
    pub replicas: u64,
    pub seed: u64,
}

/// Per-component paired z-scores of the before/after statistics difference.
pub fn invariance_scan(cfg: &InvarianceConfig) -> Result<Vec<ComponentZ>> {
    let names = statistics_names(cfg.densities.len());
    let mut diffs: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.replicas as usize); names.len()];
    for r in 0..cfg.replicas {
        let (before_state, _) =
            construct_measure(cfg.topology, &cfg.densities, Boundary::Empty, mix(cfg.seed, 2 * r))?;
        let noise_seed = mix(cfg.seed, 2 * r + 1);
        let points = if cfg.kind.is_discrete() {
            generate_bernoulli_field(
                cfg.topology,
                cfg.kind,
                cfg.horizon.round() as usize,
                noise_seed,
            )?
        } else {
            generate_poisson(cfg.topology, cfg.kind, cfg.horizon, noise_seed)?
        };
        let before = statistics_vector(&before_state);
        let after_state = evolve_streaming(&before_state, cfg.kind, &points, |_, _| {})?;
        let after = statistics_vector(&after_state);
        for (d, (a, b)) in diffs.iter_mut().zip(after.iter().zip(&before)) {
            d.push(a - b);
        }
    }
    Ok(names
        .into_iter()
        .zip(&diffs)
        .map(|(name, d)| {
            let (z, p) = paired_z(d);
            ComponentZ { name, z, p }
        })
        .collect())
}

/// Invariance test: no component of the summary statistics may move, at a
/// Bonferroni-corrected level `alpha` over the scan's own components.
pub fn invariance_test(cfg: &InvarianceConfig, alpha: f64) -> Result<TestReport> {
    let comps = invariance_scan(cfg)?;
    let threshold = bonferroni_z_threshold(alpha, comps.len());
    let worst = worst_component(&comps);
    Ok(TestReport {
        name: format!("invariance-{}", cfg.kind.name()),
        passed: worst.z.abs() <= threshold,
        statistic: worst.z.abs(),
        threshold,
        details: format!(
            "worst component {} (z = {:+.3}) of {}, {} replicas",
            worst.name,
            worst.z,
            comps.len(),
            cfg.replicas
        ),
    })
}

/// Negative control: the scan must *detect* drift, i.e. some component must
/// move by more than `sigma` standard errors.
pub fn drift_detection_test(cfg: &InvarianceConfig, sigma: f64) -> Result<TestReport> {
    let comps = invariance_scan(cfg)?;
    let worst = worst_component(&comps);
    Ok(TestReport {
        name: format!("drift-{}", cfg.kind.name()),
        passed: worst.z.abs() > sigma,
        statistic: worst.z.abs(),
        threshold: sigma,
        details: format!(
            "largest drift on {} (z = {:+.3}), {} replicas",
            worst.name, worst.z, cfg.replicas
        ),
    })
}

/// Configuration of the multi-line product test. The lines start as
/// independent Bernoulli fields at `densities` (in cascade order: the last
/// line receives the raw marks) on a buffered segment.
#[derive(Debug, Clone)]
pub struct MultilineConfig {
    pub window: usize,
    pub buffer: usize,
    pub densities: Vec<Density>,
    pub kind: DynamicsKind,
    pub horizon: f64,
    pub replicas: u64,
    pub seed: u64,
}

/// Product-measure invariance of the multi-line cascade: after evolving, each
/// line's window density must sit within 3 standard errors of its target and
/// every cross-line same-site covariance within 3 standard errors of zero.
pub fn multiline_product_test(cfg: &MultilineConfig) -> Result<TestReport> {
    let topology = Topology::segment(cfg.window, cfg.buffer);
    let n = cfg.densities.len();
    let window: Vec<i64> = topology.window_sites().collect();
    let w = window.len() as f64;
    let line_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .collect();
    let mut density_samples: Vec<Vec<f64>> =
        vec![Vec::with_capacity(cfg.replicas as usize); n];
    let mut cov_samples: Vec<Vec<f64>> =
        vec![Vec::with_capacity(cfg.replicas as usize); line_pairs.len()];
    for r in 0..cfg.replicas {
        let lines = sample_lines(topology, &cfg.densities, mix(cfg.seed, 2 * r));
        let points = generate_poisson(topology, cfg.kind, cfg.horizon, mix(cfg.seed, 2 * r + 1))?;
        let mut state = MultiLineState::new(lines)?;
        multiline_evolve(&mut state, cfg.kind, &points)?;
        let occ: Vec<Vec<f64>> = state
            .lines()
            .iter()
            .map(|l| window.iter().map(|&x| l.get(x) as f64).collect())
            .collect();
        for k in 0..n {
            density_samples[k].push(occ[k].iter().sum::<f64>() / w);
        }
        for (i, &(j, k)) in line_pairs.iter().enumerate() {
            let (rj, rk) = (cfg.densities[j].value(), cfg.densities[k].value());
            let c = occ[j]
                .iter()
                .zip(&occ[k])
                .map(|(a, b)| (a - rj) * (b - rk))
                .sum::<f64>()
                / w;
            cov_samples[i].push(c);
        }
    }
    let mut max_abs_z = 0.0f64;
    let mut worst = String::new();
    for (k, (samples, target)) in density_samples.iter().zip(&cfg.densities).enumerate() {
        let (z, _) = one_sample_z(samples, target.value());
        if z.abs() > max_abs_z {
            max_abs_z = z.abs();
            worst = format!("line {} density (z = {:+.3})", k + 1, z);
        }
    }
    for (i, &(j, k)) in line_pairs.iter().enumerate() {
        let (z, _) = one_sample_z(&cov_samples[i], 0.0);
        if z.abs() > max_abs_z {
            max_abs_z = z.abs();
            worst = format!("lines {}x{} covariance (z = {:+.3})", j + 1, k + 1, z);
        }
    }
    Ok(TestReport {
        name: format!("multiline-product-{}", cfg.kind.name()),
        passed: max_abs_z <= 3.0,
        statistic: max_abs_z,
        threshold: 3.0,
        details: format!(
            "densities {:?}, worst {}, {} replicas",
            cfg.densities.iter().map(|d| d.value()).collect::<Vec<_>>(),
            worst,
            cfg.replicas
        ),
    })
}

/// Configuration for the truncation-law test.
#[derive(Debug, Clone)]
pub struct TruncationConfig {
    pub topology: Topology,
    pub densities: Vec<Density>,
    pub m: usize,
    pub replicas: u64,
    pub seed: u64,
}

/// Truncating the `n`-class construction to its first `m` classes must give
/// the same law as the fresh `m`-class construction: two-sample z per
/// statistics component, Bonferroni at `alpha`. For `m = 1` the truncated
/// word must moreover match the exact product-measure constants (densities
/// `rho` and `1 - rho`, pair frequencies their products, and every lag
/// autocovariance `-rho(1-rho)/W`, the exact small-window value of the
/// empirically centered estimator).
pub fn truncation_law_test(cfg: &TruncationConfig, alpha: f64) -> Result<TestReport> {
    let names = statistics_names(cfg.m);
    let comps = names.len();
    let mut truncated: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.replicas as usize); comps];
    let mut fresh: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.replicas as usize); comps];
    for r in 0..cfg.replicas {
        let (full, _) =
            construct_measure(cfg.topology, &cfg.densities, Boundary::Empty, mix(cfg.seed, 2 * r))?;
        let cut = truncate(&full, cfg.m)?;
        let (small, _) = construct_measure(
            cfg.topology,
            &cfg.densities[..cfg.m],
            Boundary::Empty,
            mix(cfg.seed, 2 * r + 1),
        )?;
        for (acc, v) in truncated.iter_mut().zip(statistics_vector(&cut)) {
            acc.push(v);
        }
        for (acc, v) in fresh.iter_mut().zip(statistics_vector(&small)) {
            acc.push(v);
        }
    }
    let mut zs: Vec<(String, f64)> = Vec::new();
    for i in 0..comps {
        let (z, _) = two_sample_z(&truncated[i], &fresh[i]);
        zs.push((names[i].clone(), z));
    }
    if cfg.m == 1 {
        let rho = cfg.densities[0].value();
        let w = cfg.topology.window_sites().count() as f64;
        let probs = [rho, 1.0 - rho];
        let mut targets = vec![probs[0], probs[1]];
        for a in 0..2 {
            for b in 0..2 {
                targets.push(probs[a] * probs[b]);
            }
        }
        for _ in 1..=STAT_LAGS {
            targets.push(-rho * (1.0 - rho) / w);
        }
        for i in 0..comps {
            let (z, _) = one_sample_z(&truncated[i], targets[i]);
            zs.push((format!("exact:{}", names[i]), z));
        }
    }
    let threshold = bonferroni_z_threshold(alpha, zs.len());
    let (worst_name, worst_z) = zs
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .cloned()
        .expect("at least one component");
    Ok(TestReport {
        name: format!("truncation-m{}", cfg.m),
        passed: worst_z.abs() <= threshold,
        statistic: worst_z.abs(),
        threshold,
        details: format!(
            "worst {} (z = {:+.3}) of {} tests, {} replicas",
            worst_name,
            worst_z,
            zs.len(),
            cfg.replicas
        ),
    })
}

/// A concrete witness that a synchronous sweep broke the sitewise ordering of
/// a coupled pair of configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub topology: Topology,
    pub lower: Vec<u8>,
    pub upper: Vec<u8>,
    pub bonds: Vec<i64>,
    pub site: i64,
}

fn first_order_break(lower: &Configuration, upper: &Configuration) -> Option<i64> {
    lower
        .topology()
        .all_sites()
        .find(|&x| lower.get(x) > upper.get(x))
}

/// Exhaustive search for an ordering violation of the given sweep kind on
/// rings of up to `max_sites` sites: every dominated pair of words against
/// every nonempty set of marked bonds, in deterministic order. Returns the
/// first violation found, or `None` if the sweep preserves ordering on the
/// whole search space.
pub fn sweep_ordering_violation(
    kind: DynamicsKind,
    max_sites: usize,
) -> Result<Option<OrderingViolation>> {
    for l in 2..=max_sites {
        let topology = Topology::ring(l);
        for lower_bits in 0u32..1 << l {
            for upper_bits in 0u32..1 << l {
                if lower_bits & upper_bits != lower_bits {
                    continue;
                }
                for subset in 1u32..1 << l {
                    let bonds: Vec<i64> =
                        (0..l as i64).filter(|&b| subset >> b & 1 == 1).collect();
                    let to_conf = |bits: u32| {
                        Configuration::from_bits(
                            topology,
                            (0..l).map(|i| (bits >> i & 1) as u8).collect(),
                        )
                        .expect("word length fixed")
                    };
                    let mut lines = vec![to_conf(lower_bits), to_conf(upper_bits)];
                    apply_sweep(&mut lines, kind, &bonds)?;
                    if let Some(site) = first_order_break(&lines[0], &lines[1]) {
                        return Ok(Some(OrderingViolation {
                            topology,
                            lower: to_conf(lower_bits).bits().to_vec(),
                            upper: to_conf(upper_bits).bits().to_vec(),
                            bonds,
                            site,
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Replay a recorded violation and confirm it is genuine: the pair starts
/// ordered and ends broken at the recorded site.
pub fn confirm_violation(violation: &OrderingViolation, kind: DynamicsKind) -> Result<bool> {
    let lower = Configuration::from_bits(violation.topology, violation.lower.clone())?;
    let upper = Configuration::from_bits(violation.topology, violation.upper.clone())?;
    if first_order_break(&lower, &upper).is_some() {
        return Ok(false);
    }
    let mut lines = vec![lower, upper];
    apply_sweep(&mut lines, kind, &violation.bonds)?;
    Ok(first_order_break(&lines[0], &lines[1]) == Some(violation.site))
}

/// Run one long single-class trajectory from the first enumerated state and
/// return the exact stationary solve together with the total-variation
/// distance between the time-weighted empirical occupation law and the solved
/// one.
pub fn occupation_tv(
    kind: DynamicsKind,
    topology: Topology,
    count: usize,
    horizon: f64,
    seed: u64,
) -> Result<(SolvedChain, f64)> {
    let solved = stationary(kind, topology, count)?;
    let index: HashMap<&[u8], usize> = solved
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.bits(), i))
        .collect();
    let initial = &solved.states[0];
    let points = generate_poisson(topology, kind, horizon, seed)?;
    let word: Vec<u32> = initial.bits().iter().map(|&b| 2 - b as u32).collect();
    let start = MulticlassConfig::new(topology, 1, word)?;
    let mut weights = vec![0.0f64; solved.states.len()];
    let mut prev_time = 0.0f64;
    let final_state = evolve_streaming(&start, kind, &points, |ev, pre| {
        let idx = *index.get(pre[0].bits()).expect("state enumerated");
        weights[idx] += ev.time - prev_time;
        prev_time = ev.time;
    })?;
    let final_bits: Vec<u8> = final_state.word().iter().map(|&c| (c == 1) as u8).collect();
    let idx = *index.get(final_bits.as_slice()).expect("state enumerated");
    weights[idx] += horizon - prev_time;
    let total: f64 = weights.iter().sum();
    let tv = weights
        .iter()
        .zip(&solved.pi)
        .map(|(w, p)| (w / total - p).abs())
        .sum::<f64>()
        / 2.0;
    Ok((solved, tv))
}

/// Configuration for the dual-Poissonianity suite.
#[derive(Debug, Clone)]
pub struct DualPoissonConfig {
    pub sites: usize,
    pub density: Density,
    pub horizon: f64,
    pub replicas: u64,
    pub kind: DynamicsKind,
    pub seed: u64,
}

/// Dual points of the stationary single-class process on a ring must form a
/// rate-one Poisson field independent of the final configuration. The battery
/// runs, Bonferroni-corrected at `alpha` over all of its p-values:
///
/// * per replica, a Kolmogorov–Smirnov test that the dual times are uniform
///   on the horizon (conditional on their count);
/// * per replica, a dispersion test of the counts over unit space-time cells;
/// * two aggregate dispersion tests over all replicas combined — per-location
///   totals and per-cell totals — which are sensitive to any persistent
///   spatial or space-time structure in the dual field;
///
/// plus correlations between final occupancies at four probe locations and
/// dual counts in the four space quarters, each within three standard errors
/// of zero.
pub fn poisson_dual_test(cfg: &DualPoissonConfig, alpha: f64) -> Result<TestReport> {
    let topology = Topology::ring(cfg.sites);
    let l = cfg.sites;
    let h = cfg.horizon.ceil() as usize;
    let quarter = (l / 4).max(1);
    let replicas = cfg.replicas as usize;
    let family = 2 * replicas + 2;
    let p_cut = alpha / family as f64;

    let mut times: Vec<f64> = Vec::new();
    let mut cells: Vec<u64> = vec![0; l * h];
    let mut site_totals: Vec<u64> = vec![0; l];
    let mut cell_totals: Vec<u64> = vec![0; l * h];
    let mut occ_series: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(replicas)).collect();
    let mut quad_series: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(replicas)).collect();
    let probes: Vec<i64> = (0..4).map(|q| (q * quarter) as i64).collect();
    let (mut ks_rejects, mut disp_rejects) = (0usize, 0usize);
    let (mut min_ks_p, mut min_disp_p) = (f64::INFINITY, f64::INFINITY);

    for r in 0..cfg.replicas {
        let initial = sample_bernoulli(topology, cfg.density, mix(cfg.seed, 2 * r));
        let points = generate_poisson(topology, cfg.kind, cfg.horizon, mix(cfg.seed, 2 * r + 1))?;
        times.clear();
        cells.iter_mut().for_each(|c| *c = 0);
        let mut quads = [0.0f64; 4];
        let final_line = evolve_with_duals(&initial, cfg.kind, &points, |d| {
            let loc = match d.location {
                Some(Location::Site(x)) => x as usize,
                Some(Location::Bond(b)) => b as usize,
                None => return,
            };
            times.push(d.time);
            let cell_t = (d.time.floor() as usize).min(h - 1);
            cells[loc * h + cell_t] += 1;
            site_totals[loc] += 1;
            quads[(loc / quarter).min(3)] += 1.0;
        })?;
        for (total, &c) in cell_totals.iter_mut().zip(&cells) {
            *total += c;
        }
        times.sort_by(|a, b| a.total_cmp(b));
        let n = times.len();
        if n > 0 {
            let nf = n as f64;
            let mut d_stat = 0.0f64;
            for (i, &t) in times.iter().enumerate() {
                let f = t / cfg.horizon;
                d_stat = d_stat.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
            }
            let p = kolmogorov_sf((nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d_stat);
            min_ks_p = min_ks_p.min(p);
            if p < p_cut {
                ks_rejects += 1;
            }
        }
        let (_, p_disp) = dispersion_test(&cells);
        min_disp_p = min_disp_p.min(p_disp);
        if p_disp < p_cut {
            disp_rejects += 1;
        }
        for (series, &x) in occ_series.iter_mut().zip(&probes) {
            series.push((final_line.get(x) == 1) as u8 as f64);
        }
        for (series, &q) in quad_series.iter_mut().zip(&quads) {
            series.push(q);
        }
    }

    let (_, p_sites) = dispersion_test(&site_totals);
    let (_, p_cells) = dispersion_test(&cell_totals);
    let aggregates_ok = p_sites >= p_cut && p_cells >= p_cut;

    let sqrt_r = (replicas as f64).sqrt();
    let mut max_sigma = 0.0f64;
    let mut worst = String::new();
    for (i, occ) in occ_series.iter().enumerate() {
        for (q, quad) in quad_series.iter().enumerate() {
            let sigma = (correlation(occ, quad) * sqrt_r).abs();
            if sigma > max_sigma {
                max_sigma = sigma;
                worst = format!("occupancy[{}] x dual-quarter[{}]", probes[i], q);
            }
        }
    }
    let passed = ks_rejects == 0 && disp_rejects == 0 && aggregates_ok && max_sigma <= 3.0;
    Ok(TestReport {
        name: format!("dual-poisson-{}", cfg.kind.name()),
        passed,
        statistic: max_sigma,
        threshold: 3.0,
        details: format!(
            "KS rejects {} (min p {:.2e}), dispersion rejects {} (min p {:.2e}), \
             aggregate location/cell dispersion p {:.2e}/{:.2e}, cut {:.2e} over {} tests; \
             worst correlation {} at {:.2} sigma; {} replicas",
            ks_rejects,
            min_ks_p,
            disp_rejects,
            min_disp_p,
            p_sites,
            p_cells,
            p_cut,
            family,
            worst,
            max_sigma,
            cfg.replicas
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::sample_fixed_count;

    fn d(v: f64) -> Density {
        Density::new(v).unwrap()
    }

    #[test]
    fn statistics_vector_matches_hand_computation() {
        let t = Topology::ring(4);
        let cfg = MulticlassConfig::new(t, 1, vec![1, 2, 1, 2]).unwrap();
        let names = statistics_names(1);
        let v = statistics_vector(&cfg);
        assert_eq!(v.len(), names.len());
        assert_eq!(v.len(), 2 + 4 + STAT_LAGS);
        assert_eq!(&v[..2], &[0.5, 0.5]); // densities
        assert_eq!(&v[2..6], &[0.0, 0.5, 0.5, 0.0]); // pairs 11,12,21,22
        assert_eq!(v[6], -0.25); // lag 1 of occupancy 1,0,1,0
        assert_eq!(v[7], 0.25); // lag 2
    }

    #[test]
    fn statistics_vector_segment_ignores_buffer() {
        let t = Topology::segment(4, 3);
        let mut word = vec![2u32; t.total_sites()];
        // particles only in the buffer: window statistics must not see them
        word[0] = 1;
        word[1] = 1;
        let cfg = MulticlassConfig::new(t, 1, word).unwrap();
        let v = statistics_vector(&cfg);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn burke_departure_law_is_the_arrival_law() {
        let tv = burke_exact(d(1.0 / 3.0), d(2.0 / 3.0), 4).unwrap();
        assert!(tv < 1e-12, "tv = {tv:.3e}");
        // an off-equilibrium boundary would not pass at this tolerance:
        // replacing the stationary ratio by the density ratio breaks it,
        // which the acceptance suite demonstrates separately.
    }

    #[test]
    fn birth_death_solve_agrees_with_closed_form() {
        let law = geometric_stationary(d(1.0 / 3.0), d(2.0 / 3.0)).unwrap();
        assert!((law.ratio - 0.25).abs() < 1e-15);
        let pi = birth_death_stationary(d(1.0 / 3.0), d(2.0 / 3.0), 120).unwrap();
        for (k, &p) in pi.iter().take(40).enumerate() {
            let target = (1.0 - law.ratio) * law.ratio.powi(k as i32);
            assert!((p - target).abs() < 1e-13, "state {k}: {p} vs {target}");
        }
    }

    #[test]
    fn t_image_holds_at_every_event() {
        for seed in 0..8u64 {
            let t = Topology::ring(8);
            let lines = vec![
                sample_fixed_count(t, 2, mix(seed, 0)).unwrap(),
                sample_fixed_count(t, 5, mix(seed, 1)).unwrap(),
            ];
            for kind in [DynamicsKind::Had, DynamicsKind::Tasep] {
                let points = generate_poisson(t, kind, 4.0, mix(seed, 2)).unwrap();
                assert_eq!(
                    t_image_trajectory_check(&lines, kind, &points).unwrap(),
                    0,
                    "kind {} seed {seed}",
                    kind.name()
                );
            }
        }
    }

    #[test]
    fn parallel_sweep_breaks_ordering_and_sequential_sweeps_do_not() {
        let par = DynamicsKind::ParTasep {
            mark_probability: 0.5,
        };
        let violation = sweep_ordering_violation(par, 4).unwrap();
        let violation = violation.expect("parallel sweep must break ordering somewhere");
        assert!(confirm_violation(&violation, par).unwrap());
        for kind in [
            DynamicsKind::SeqTasepLr {
                mark_probability: 0.5,
            },
            DynamicsKind::SeqTasepRl {
                mark_probability: 0.5,
            },
        ] {
            assert!(sweep_ordering_violation(kind, 4).unwrap().is_none());
        }
    }

    #[test]
    fn occupation_matches_exact_solve_on_a_small_ring() {
        let (solved, tv) =
            occupation_tv(DynamicsKind::Tasep, Topology::ring(4), 2, 4000.0, 7).unwrap();
        assert_eq!(solved.states.len(), 6);
        assert!(tv < 0.05, "tv = {tv:.3}");
    }

    #[test]
    fn invariance_scan_smoke() {
        let cfg = InvarianceConfig {
            topology: Topology::segment(40, 70),
            densities: vec![d(0.3), d(0.7)],
            kind: DynamicsKind::Tasep,
            horizon: 0.5,
            replicas: 50,
            seed: 11,
        };
        let report = invariance_test(&cfg, 1e-6).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn multiline_product_smoke() {
        let cfg = MultilineConfig {
            window: 32,
            buffer: 64,
            densities: vec![d(0.6), d(0.4)],
            kind: DynamicsKind::Had,
            horizon: 2.0,
            replicas: 60,
            seed: 5,
        };
        let report = multiline_product_test(&cfg).unwrap();
        assert!(report.statistic.is_finite());
        assert!(report.statistic < 6.0, "{report}");
    }

    #[test]
    fn truncation_smoke() {
        let cfg = TruncationConfig {
            topology: Topology::segment(60, 70),
            densities: vec![d(0.3), d(0.6), d(0.9)],
            m: 1,
            replicas: 80,
            seed: 3,
        };
        let report = truncation_law_test(&cfg, 1e-6).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn poisson_dual_smoke() {
        let cfg = DualPoissonConfig {
            sites: 32,
            density: d(0.5),
            horizon: 8.0,
            replicas: 40,
            kind: DynamicsKind::Had,
            seed: 9,
        };
        let report = poisson_dual_test(&cfg, 1e-6).unwrap();
        assert!(report.passed, "{report}");
    }
}
