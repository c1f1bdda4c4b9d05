//! Discrete-time single-server queues and the tandem constructions that build
//! multiclass invariant measures.
//!
//! A queue is driven by two {0,1} words on the same topology: arrivals `a1`
//! and potential services `a2`. The queue length obeys
//! `Z(j) = (Z(j-1) + a1(j) - a2(j))^+` and a departure occurs at `j` when
//! `a2(j) = 1` and `Z(j-1) + a1(j) > 0` (a customer may arrive and depart in
//! the same slot). Stacking queues in tandem over lines of increasing density
//! yields sitewise-ordered departure words, and tracking which original line
//! each departure came from yields a multiclass word.

use crate::error::{Error, Result};
use crate::lattice::{
    check_increasing, Configuration, Density, MulticlassConfig, OrderedStack, Topology,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Left-boundary policy for queues on a segment; rings always use the unique
/// periodic (Loynes) solution.
///
/// `Geometric` draws the boundary queue length from the exact stationary law
/// of a queue with the words' empirical densities. Note that multi-queue
/// constructions (`tandem`, `t_map`, `m_map`) cannot couple independent
/// geometric draws exactly, so their pathwise identities are only guaranteed
/// under `Empty` and `Loynes`; statistical pipelines use `Empty` plus a
/// burn-in margin instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Queue empty just left of the segment.
    Empty,
    /// Boundary length drawn from the stationary law (seeded).
    Geometric { seed: u64 },
    /// Stationary solution: on a segment this coincides with `Empty` (the
    /// supremum runs over in-segment start points only); on a ring it is the
    /// unique periodic solution, which requires strictly fewer arrivals than
    /// services.
    Loynes,
}

impl Boundary {
    fn sub(self, tag: u64) -> Boundary {
        match self {
            Boundary::Geometric { seed } => Boundary::Geometric {
                seed: splitmix64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            },
            other => other,
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Queue-length word `Z` plus the boundary value it started from (for rings,
/// the value at the last site, which by periodicity precedes the first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueLengths {
    topology: Topology,
    values: Vec<u64>,
    boundary_value: u64,
}

impl QueueLengths {
    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn get(&self, x: i64) -> u64 {
        self.values[self.topology.index_of(x)]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Queue length just before the first site of a segment.
    pub fn boundary_value(&self) -> u64 {
        self.boundary_value
    }
}

fn check_pair(a1: &Configuration, a2: &Configuration) -> Result<()> {
    if a1.topology() != a2.topology() {
        return Err(Error::TopologyMismatch(
            "arrival and service words on different topologies".into(),
        ));
    }
    Ok(())
}

/// Run the queue recursion from an explicit boundary value over raw words.
/// Returns the departure word and the queue-length word.
pub fn queue_recursion(z0: u64, a1: &[u8], a2: &[u8]) -> (Vec<u8>, Vec<u64>) {
    let mut z = z0;
    let mut departs = Vec::with_capacity(a1.len());
    let mut lengths = Vec::with_capacity(a1.len());
    for j in 0..a1.len() {
        let d = a2[j] == 1 && z + a1[j] as u64 > 0;
        departs.push(d as u8);
        z = (z + a1[j] as u64).saturating_sub(a2[j] as u64);
        lengths.push(z);
    }
    (departs, lengths)
}

fn geometric_boundary_value(a1: &Configuration, a2: &Configuration, seed: u64) -> Result<u64> {
    let n = a1.topology().total_sites() as f64;
    let c1 = a1.particle_count();
    let c2 = a2.particle_count();
    if c1 >= c2 {
        return Err(Error::UnstableQueue {
            arrivals: c1,
            services: c2,
        });
    }
    let (r1, r2) = (c1 as f64 / n, c2 as f64 / n);
    let u = (r1 * (1.0 - r2)) / ((1.0 - r1) * r2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_geometric(u, &mut rng))
}

fn sample_geometric(u: f64, rng: &mut ChaCha8Rng) -> u64 {
    if u <= 0.0 {
        return 0;
    }
    // P(Z >= k) = u^k, so inversion gives floor(ln U / ln u) for U in (0,1].
    let v: f64 = 1.0 - rng.gen::<f64>();
    let z = (v.ln() / u.ln()).floor();
    if z.is_finite() && z >= 0.0 {
        z.min(u64::MAX as f64 / 2.0) as u64
    } else {
        0
    }
}

fn ring_loynes(a1: &Configuration, a2: &Configuration) -> Result<QueueLengths> {
    let topology = a1.topology();
    let l = topology.total_sites();
    let c1 = a1.particle_count();
    let c2 = a2.particle_count();
    if c1 >= c2 {
        return Err(Error::UnstableQueue {
            arrivals: c1,
            services: c2,
        });
    }
    // The unique periodic solution is empty at an argmin of the cumulative
    // increment sum; unroll the recursion once around the ring from there.
    let b1 = a1.bits();
    let b2 = a2.bits();
    let mut s: i64 = 0;
    let mut smin = i64::MAX;
    let mut jstar = 0usize;
    for j in 0..l {
        s += b1[j] as i64 - b2[j] as i64;
        if s < smin {
            smin = s;
            jstar = j;
        }
    }
    let mut values = vec![0u64; l];
    let mut z: u64 = 0;
    for step in 1..=l {
        let j = (jstar + step) % l;
        z = (z + b1[j] as u64).saturating_sub(b2[j] as u64);
        values[j] = z;
    }
    debug_assert_eq!(
        values[jstar],
        (values[(jstar + l - 1) % l] + b1[jstar] as u64).saturating_sub(b2[jstar] as u64),
        "periodic solution consistent at the wrap"
    );
    let boundary_value = values[l - 1];
    Ok(QueueLengths {
        topology,
        values,
        boundary_value,
    })
}

/// Queue-length word for arrivals `a1`, services `a2` under `boundary`.
pub fn queue_lengths(
    a1: &Configuration,
    a2: &Configuration,
    boundary: Boundary,
) -> Result<QueueLengths> {
    check_pair(a1, a2)?;
    let topology = a1.topology();
    if topology.is_ring() {
        return match boundary {
            Boundary::Loynes => ring_loynes(a1, a2),
            _ => Err(Error::TopologyMismatch(
                "ring queues use the Loynes boundary".into(),
            )),
        };
    }
    let z0 = match boundary {
        Boundary::Empty | Boundary::Loynes => 0,
        Boundary::Geometric { seed } => geometric_boundary_value(a1, a2, seed)?,
    };
    let (_, lengths) = queue_recursion(z0, a1.bits(), a2.bits());
    Ok(QueueLengths {
        topology,
        values: lengths,
        boundary_value: z0,
    })
}

/// Departure word of the queue: `D(j) = 1` iff `a2(j) = 1` and the queue
/// (including a same-slot arrival) is nonempty.
pub fn departures(
    a1: &Configuration,
    a2: &Configuration,
    boundary: Boundary,
) -> Result<Configuration> {
    let z = queue_lengths(a1, a2, boundary)?;
    let topology = a1.topology();
    let b1 = a1.bits();
    let b2 = a2.bits();
    let mut out = Vec::with_capacity(b1.len());
    let mut zprev = z.boundary_value();
    for j in 0..b1.len() {
        out.push((b2[j] == 1 && zprev + b1[j] as u64 > 0) as u8);
        zprev = z.values()[j];
    }
    Configuration::from_bits(topology, out)
}

/// Iterated departures `D^(n)`: the first line passes through queues served by
/// each subsequent line in turn. `D^(1)` is the identity.
pub fn tandem(lines: &[Configuration], boundary: Boundary) -> Result<Configuration> {
    assert!(!lines.is_empty(), "tandem needs at least one line");
    let mut cur = lines[0].clone();
    for (stage, service) in lines.iter().enumerate().skip(1) {
        cur = departures(&cur, service, boundary.sub(stage as u64))?;
    }
    Ok(cur)
}

/// The tandem map: line `k` of the output is `D^(n-k)` of lines `k..n`
/// (0-based), so the output lines have the input lines' densities and are
/// sitewise ordered. Under `Empty` and `Loynes` boundaries the ordering is
/// exact; a `Geometric` boundary can break it near a segment's left edge, in
/// which case this returns the ordering error.
pub fn t_map(lines: &[Configuration], boundary: Boundary) -> Result<OrderedStack> {
    assert!(!lines.is_empty(), "t_map needs at least one line");
    let out: Result<Vec<Configuration>> = (0..lines.len())
        .map(|k| tandem(&lines[k..], boundary.sub((k as u64) << 32)))
        .collect();
    OrderedStack::new(out?)
}

fn word_sub(a: &Configuration, b: &Configuration) -> Configuration {
    let bits = a
        .bits()
        .iter()
        .zip(b.bits())
        .map(|(&x, &y)| {
            debug_assert!(y <= x, "subtrahend must be dominated");
            x - y
        })
        .collect();
    Configuration::from_bits(a.topology(), bits).expect("lengths match")
}

fn word_or(words: &[Configuration]) -> Configuration {
    let mut bits = vec![0u8; words[0].topology().total_sites()];
    for w in words {
        for (b, &x) in bits.iter_mut().zip(w.bits()) {
            *b |= x;
        }
    }
    Configuration::from_bits(words[0].topology(), bits).expect("lengths match")
}

/// Departure word split by the class of the departing customer. `parts[r]`
/// marks the departures of class `r + 1`; together the parts partition the
/// service word of the level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    level: usize,
    parts: Vec<Configuration>,
}

impl ClassSplit {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn parts(&self) -> &[Configuration] {
        &self.parts
    }
}

/// Level 1 of the split: the first line itself.
pub fn class_split_start(alpha1: &Configuration) -> ClassSplit {
    ClassSplit {
        level: 1,
        parts: vec![alpha1.clone()],
    }
}

/// One level of the class-split recursion. Class `r` departures at level `k`
/// are the departures of the level-`k-1` class-`r` word through the services
/// of `alpha_k` not used by classes below `r`; the leftover services are the
/// new class `k`, which must coincide with
/// `alpha_k - departures(alpha_{k-1}, alpha_k)`.
pub fn class_split_step(
    prev: &ClassSplit,
    alpha_k: &Configuration,
    boundary: Boundary,
) -> Result<ClassSplit> {
    let k = prev.level + 1;
    let mut remaining = alpha_k.clone();
    let mut parts = Vec::with_capacity(k);
    for (r, prev_part) in prev.parts.iter().enumerate() {
        let tag = (k as u64) << 16 | r as u64;
        let part = departures(prev_part, &remaining, boundary.sub(tag))?;
        remaining = word_sub(&remaining, &part);
        parts.push(part);
    }
    // Cross-check against the defining formula for the last part.
    let aggregate = word_or(&prev.parts);
    let served = departures(&aggregate, alpha_k, boundary.sub((k as u64) << 16 | 0xFFFF))?;
    let last = word_sub(alpha_k, &served);
    if last != remaining {
        return Err(Error::InconsistentSplit { stage: k });
    }
    parts.push(last);
    Ok(ClassSplit { level: k, parts })
}

/// The multiclass measure map: run the class split through all lines and read
/// off, at each site, which class (if any) departs there at the last level.
pub fn m_map(lines: &[Configuration], boundary: Boundary) -> Result<MulticlassConfig> {
    assert!(!lines.is_empty(), "m_map needs at least one line");
    let mut split = class_split_start(&lines[0]);
    for alpha_k in &lines[1..] {
        split = class_split_step(&split, alpha_k, boundary)?;
    }
    let topology = lines[0].topology();
    let n = lines.len();
    let mut word = vec![n as u32 + 1; topology.total_sites()];
    for (r, part) in split.parts.iter().enumerate() {
        for (idx, &b) in part.bits().iter().enumerate() {
            if b == 1 {
                debug_assert_eq!(word[idx], n as u32 + 1, "classes collide");
                word[idx] = r as u32 + 1;
            }
        }
    }
    MulticlassConfig::new(topology, n, word)
}

/// Exact stationary law of the queue-length chain with i.i.d. Bernoulli
/// arrivals (density `rho1`) and services (density `rho2`). The chain moves up
/// with probability `rho1 (1 - rho2)` and down with probability
/// `(1 - rho1) rho2`, so the law is geometric with ratio
/// `rho1 (1 - rho2) / ((1 - rho1) rho2)`. (The commonly quoted `rho1 / rho2`
/// is the continuous-time formula; the Bernoulli-slot chain differs because a
/// simultaneous arrival and service cancel.) The normalization is computed by
/// summation, not assumed.
#[derive(Debug, Clone)]
pub struct GeometricLaw {
    pub ratio: f64,
    /// `probs[k] = P(Z = k)` for `k = 0..probs.len()`, covering all but a
    /// tail of mass below 1e-15.
    pub probs: Vec<f64>,
}

impl GeometricLaw {
    pub fn mean(&self) -> f64 {
        self.ratio / (1.0 - self.ratio)
    }

    /// Exact inversion sample from the (untruncated) law.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        sample_geometric(self.ratio, rng)
    }
}

pub fn geometric_stationary(rho1: Density, rho2: Density) -> Result<GeometricLaw> {
    let (r1, r2) = (rho1.value(), rho2.value());
    if r1 >= r2 {
        return Err(Error::DensitiesNotIncreasing(vec![r1, r2]));
    }
    let u = (r1 * (1.0 - r2)) / ((1.0 - r1) * r2);
    let mut weights = vec![1.0f64];
    while *weights.last().unwrap() > 1e-16 && weights.len() < 4096 {
        weights.push(weights.last().unwrap() * u);
    }
    let total: f64 = weights.iter().sum::<f64>() + weights.last().unwrap() * u / (1.0 - u);
    for w in &mut weights {
        *w /= total;
    }
    Ok(GeometricLaw {
        ratio: u,
        probs: weights,
    })
}

/// Burn-in margin for measure construction on a segment: queues forget their
/// boundary at rate set by the smallest density gap.
pub fn burn_in_sites(densities: &[Density]) -> usize {
    let min_gap = densities
        .windows(2)
        .map(|w| w[1].value() - w[0].value())
        .fold(f64::INFINITY, f64::min);
    if min_gap.is_finite() && min_gap > 0.0 {
        (20.0 / min_gap).ceil() as usize
    } else {
        20
    }
}

/// Metadata describing how a multiclass sample was constructed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructionMeta {
    pub densities: Vec<f64>,
    pub boundary: Boundary,
    pub burn_in: usize,
    pub seed: u64,
}

/// Sample a multiclass configuration from the invariant measure at the given
/// densities: independent lines (Bernoulli on segments, uniform fixed-count on
/// rings) pushed through `m_map`. Segment buffers must cover the burn-in
/// margin so the window is unaffected by the left boundary.
pub fn construct_measure(
    topology: Topology,
    densities: &[Density],
    boundary: Boundary,
    seed: u64,
) -> Result<(MulticlassConfig, ConstructionMeta)> {
    check_increasing(densities)?;
    let burn_in = burn_in_sites(densities);
    let lines: Vec<Configuration> = match topology {
        Topology::Ring { sites } => {
            let counts: Vec<usize> = densities
                .iter()
                .map(|d| (d.value() * sites as f64).round() as usize)
                .collect();
            if counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] == 0 {
                return Err(Error::DensitiesNotIncreasing(
                    densities.iter().map(|d| d.value()).collect(),
                ));
            }
            counts
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    crate::lattice::sample_fixed_count(
                        topology,
                        c,
                        splitmix64(seed ^ (k as u64 + 1)),
                    )
                })
                .collect::<Result<_>>()?
        }
        Topology::Segment { buffer, .. } => {
            if buffer < burn_in {
                return Err(Error::TopologyMismatch(format!(
                    "segment buffer {buffer} below the burn-in margin {burn_in}"
                )));
            }
            crate::lattice::sample_lines(topology, densities, seed)
        }
    };
    let effective = if topology.is_ring() {
        Boundary::Loynes
    } else {
        boundary
    };
    let xi = m_map(&lines, effective)?;
    Ok((
        xi,
        ConstructionMeta {
            densities: densities.iter().map(|d| d.value()).collect(),
            boundary: effective,
            burn_in,
            seed,
        },
    ))
}

/// Sanity restatement used by tests: the T-map image computed from the split
/// partial sums. Partial sums of the split parts at the last level reproduce
/// the suffix tandems.
pub fn split_partial_sums(split: &ClassSplit) -> Vec<Configuration> {
    let topology = split.parts[0].topology();
    let mut acc = vec![0u8; topology.total_sites()];
    split
        .parts
        .iter()
        .map(|p| {
            for (a, &b) in acc.iter_mut().zip(p.bits()) {
                *a += b;
            }
            Configuration::from_bits(topology, acc.clone()).expect("partition stays binary")
        })
        .collect()
}
