//! Finite lattices, particle configurations, ordered stacks and multiclass words.
//!
//! Everything downstream works on one of two finitizations of the integer line:
//! a periodic ring of `L` sites, or a segment consisting of an observation
//! window `0..L` padded by `buffer` extra sites on each side. Site coordinates
//! are `i64`: ring coordinates live in `0..L`, segment coordinates in
//! `-buffer .. L + buffer`. Bonds are labelled by the coordinate of their left
//! site, so bond `b` joins sites `b` and `b + 1` (mod `L` on a ring).

use crate::error::{Error, Result};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Finite realization of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Periodic ring with `sites` sites.
    Ring { sites: usize },
    /// Window of `window` sites with `buffer` padding sites on each side.
    Segment { window: usize, buffer: usize },
}

impl Topology {
    pub fn ring(sites: usize) -> Self {
        Topology::Ring { sites }
    }

    pub fn segment(window: usize, buffer: usize) -> Self {
        Topology::Segment { window, buffer }
    }

    /// Total number of sites held in memory.
    pub fn total_sites(&self) -> usize {
        match *self {
            Topology::Ring { sites } => sites,
            Topology::Segment { window, buffer } => window + 2 * buffer,
        }
    }

    pub fn is_ring(&self) -> bool {
        matches!(self, Topology::Ring { .. })
    }

    /// Coordinate of the leftmost site.
    pub fn min_site(&self) -> i64 {
        match *self {
            Topology::Ring { .. } => 0,
            Topology::Segment { buffer, .. } => -(buffer as i64),
        }
    }

    /// Coordinate of the rightmost site.
    pub fn max_site(&self) -> i64 {
        self.min_site() + self.total_sites() as i64 - 1
    }

    pub fn contains_site(&self, x: i64) -> bool {
        x >= self.min_site() && x <= self.max_site()
    }

    /// Bond coordinates: bond `b` joins sites `b` and `b + 1` (cyclically on a
    /// ring, where every site has a bond on its right).
    pub fn contains_bond(&self, b: i64) -> bool {
        match *self {
            Topology::Ring { sites } => b >= 0 && (b as usize) < sites,
            Topology::Segment { .. } => b >= self.min_site() && b < self.max_site(),
        }
    }

    pub(crate) fn index_of(&self, x: i64) -> usize {
        debug_assert!(self.contains_site(x));
        (x - self.min_site()) as usize
    }

    pub(crate) fn site_at(&self, idx: usize) -> i64 {
        self.min_site() + idx as i64
    }

    /// Site one step to the left, wrapping on a ring, `None` off a segment edge.
    pub fn left_of(&self, x: i64) -> Option<i64> {
        match *self {
            Topology::Ring { sites } => Some((x - 1).rem_euclid(sites as i64)),
            Topology::Segment { .. } => (x > self.min_site()).then(|| x - 1),
        }
    }

    /// Right site of bond `b`.
    pub fn bond_right(&self, b: i64) -> i64 {
        match *self {
            Topology::Ring { sites } => (b + 1).rem_euclid(sites as i64),
            Topology::Segment { .. } => b + 1,
        }
    }

    /// The next bond to the right of bond `b`, if it exists.
    pub fn bond_successor(&self, b: i64) -> Option<i64> {
        match *self {
            Topology::Ring { sites } => Some((b + 1).rem_euclid(sites as i64)),
            Topology::Segment { .. } => self.contains_bond(b + 1).then(|| b + 1),
        }
    }

    /// Coordinates of the observation window (the whole ring, or `0..window`).
    pub fn window_sites(&self) -> std::ops::Range<i64> {
        match *self {
            Topology::Ring { sites } => 0..sites as i64,
            Topology::Segment { window, .. } => 0..window as i64,
        }
    }

    /// All site coordinates, left to right.
    pub fn all_sites(&self) -> impl Iterator<Item = i64> {
        self.min_site()..=self.max_site()
    }

    /// All bond coordinates, left to right.
    pub fn all_bonds(&self) -> impl Iterator<Item = i64> {
        match *self {
            Topology::Ring { sites } => 0..sites as i64,
            Topology::Segment { .. } => self.min_site()..self.max_site(),
        }
    }

    /// Mirror image of a site: `x -> L-1-x` maps the lattice onto itself.
    pub fn reflect_site(&self, x: i64) -> i64 {
        match *self {
            Topology::Ring { sites } => (sites as i64 - 1 - x).rem_euclid(sites as i64),
            Topology::Segment { .. } => self.min_site() + self.max_site() - x,
        }
    }

    /// Mirror image of a bond under the site reflection.
    pub fn reflect_bond(&self, b: i64) -> i64 {
        match *self {
            Topology::Ring { sites } => (sites as i64 - 2 - b).rem_euclid(sites as i64),
            Topology::Segment { .. } => self.min_site() + self.max_site() - 1 - b,
        }
    }
}

/// Particle density, validated to lie strictly between 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Density(f64);

impl Density {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Density(value))
        } else {
            Err(Error::InvalidDensity(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Validate that a density vector is strictly increasing.
pub fn check_increasing(densities: &[Density]) -> Result<()> {
    if densities.windows(2).any(|w| w[0].value() >= w[1].value()) {
        return Err(Error::DensitiesNotIncreasing(
            densities.iter().map(|d| d.value()).collect(),
        ));
    }
    Ok(())
}

/// A {0,1} word over the sites of a topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    topology: Topology,
    bits: Vec<u8>,
}

impl Configuration {
    pub fn empty(topology: Topology) -> Self {
        Configuration {
            bits: vec![0; topology.total_sites()],
            topology,
        }
    }

    pub fn from_bits(topology: Topology, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != topology.total_sites() {
            return Err(Error::WordLength {
                got: bits.len(),
                want: topology.total_sites(),
            });
        }
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::ClassOutOfRange {
                value: b as u32,
                max: 1,
            });
        }
        Ok(Configuration { topology, bits })
    }

    /// Build from site coordinates of the particles.
    pub fn from_sites(topology: Topology, occupied: &[i64]) -> Result<Self> {
        let mut cfg = Configuration::empty(topology);
        for &x in occupied {
            if !topology.contains_site(x) {
                return Err(Error::InvalidLocation(x));
            }
            cfg.set(x, 1);
        }
        Ok(cfg)
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn get(&self, x: i64) -> u8 {
        self.bits[self.topology.index_of(x)]
    }

    pub fn set(&mut self, x: i64, v: u8) {
        debug_assert!(v <= 1);
        let idx = self.topology.index_of(x);
        self.bits[idx] = v;
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn particle_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Sitewise complement (particles and holes exchanged).
    pub fn complement(&self) -> Configuration {
        Configuration {
            topology: self.topology,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    /// Mirror image under the topology's site reflection.
    pub fn reflect(&self) -> Configuration {
        let mut out = Configuration::empty(self.topology);
        for x in self.topology.all_sites() {
            out.set(self.topology.reflect_site(x), self.get(x));
        }
        out
    }

    /// Nearest site with a particle at or to the left of `x` (cyclically on a
    /// ring). `None` when no particle is found within the lattice.
    pub fn nearest_particle_at_or_left(&self, x: i64) -> Option<i64> {
        match self.topology {
            Topology::Ring { sites } => {
                let l = sites as i64;
                (0..l).map(|k| (x - k).rem_euclid(l)).find(|&i| self.get(i) == 1)
            }
            Topology::Segment { .. } => {
                (self.topology.min_site()..=x).rev().find(|&i| self.get(i) == 1)
            }
        }
    }

    /// Nearest empty site at or to the left of `x`, same conventions.
    pub fn nearest_hole_at_or_left(&self, x: i64) -> Option<i64> {
        match self.topology {
            Topology::Ring { sites } => {
                let l = sites as i64;
                (0..l).map(|k| (x - k).rem_euclid(l)).find(|&i| self.get(i) == 0)
            }
            Topology::Segment { .. } => {
                (self.topology.min_site()..=x).rev().find(|&i| self.get(i) == 0)
            }
        }
    }
}

/// Stack of configurations ordered sitewise: `lines[k] <= lines[k+1]` at every
/// site, so line `k+1` has a particle wherever line `k` does. Line 0 is the
/// sparsest line; densities grow with the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedStack {
    lines: Vec<Configuration>,
}

impl OrderedStack {
    pub fn new(lines: Vec<Configuration>) -> Result<Self> {
        assert!(!lines.is_empty(), "a stack needs at least one line");
        let topology = lines[0].topology();
        for line in &lines {
            if line.topology() != topology {
                return Err(Error::TopologyMismatch(
                    "stack lines on different topologies".into(),
                ));
            }
        }
        for k in 0..lines.len() - 1 {
            for x in topology.all_sites() {
                if lines[k].get(x) > lines[k + 1].get(x) {
                    return Err(Error::UnorderedStack { site: x, line: k });
                }
            }
        }
        Ok(OrderedStack { lines })
    }

    pub fn single(line: Configuration) -> Self {
        OrderedStack { lines: vec![line] }
    }

    pub fn classes(&self) -> usize {
        self.lines.len()
    }

    pub fn topology(&self) -> Topology {
        self.lines[0].topology()
    }

    pub fn lines(&self) -> &[Configuration] {
        &self.lines
    }

    pub fn line(&self, k: usize) -> &Configuration {
        &self.lines[k]
    }

    pub fn into_lines(self) -> Vec<Configuration> {
        self.lines
    }

    pub fn is_ordered(&self) -> bool {
        let topology = self.topology();
        self.lines.windows(2).all(|w| {
            topology.all_sites().all(|x| w[0].get(x) <= w[1].get(x))
        })
    }
}

/// A word over classes `1..=n+1`, where `n+1` encodes a hole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticlassConfig {
    topology: Topology,
    classes: usize,
    word: Vec<u32>,
}

impl MulticlassConfig {
    pub fn new(topology: Topology, classes: usize, word: Vec<u32>) -> Result<Self> {
        if word.len() != topology.total_sites() {
            return Err(Error::WordLength {
                got: word.len(),
                want: topology.total_sites(),
            });
        }
        let max = classes as u32 + 1;
        if let Some(&c) = word.iter().find(|&&c| c < 1 || c > max) {
            return Err(Error::ClassOutOfRange { value: c, max });
        }
        Ok(MulticlassConfig {
            topology,
            classes,
            word,
        })
    }

    pub fn holes(topology: Topology, classes: usize) -> Self {
        MulticlassConfig {
            classes,
            word: vec![classes as u32 + 1; topology.total_sites()],
            topology,
        }
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Number of particle classes `n`; holes are class `n + 1`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn hole_class(&self) -> u32 {
        self.classes as u32 + 1
    }

    pub fn get(&self, x: i64) -> u32 {
        self.word[self.topology.index_of(x)]
    }

    pub fn set(&mut self, x: i64, c: u32) {
        debug_assert!(c >= 1 && c <= self.hole_class());
        let idx = self.topology.index_of(x);
        self.word[idx] = c;
    }

    pub fn word(&self) -> &[u32] {
        &self.word
    }

    /// Number of sites with class exactly `c`.
    pub fn class_count(&self, c: u32) -> usize {
        self.word.iter().filter(|&&w| w == c).count()
    }

    /// Nearest site at or left of `x` holding class `<= k`, cyclic on rings.
    pub fn nearest_class_at_or_left(&self, x: i64, k: u32) -> Option<i64> {
        match self.topology {
            Topology::Ring { sites } => {
                let l = sites as i64;
                (0..l).map(|d| (x - d).rem_euclid(l)).find(|&i| self.get(i) <= k)
            }
            Topology::Segment { .. } => {
                (self.topology.min_site()..=x).rev().find(|&i| self.get(i) <= k)
            }
        }
    }
}

/// Collapse an ordered stack of `n` lines to a multiclass word:
/// `xi(x) = n + 1 - (number of lines occupied at x)`.
pub fn r_map(stack: &OrderedStack) -> MulticlassConfig {
    let topology = stack.topology();
    let n = stack.classes();
    let word = (0..topology.total_sites())
        .map(|idx| {
            let occupied: u32 = stack.lines().iter().map(|l| l.bits()[idx] as u32).sum();
            n as u32 + 1 - occupied
        })
        .collect();
    MulticlassConfig {
        topology,
        classes: n,
        word,
    }
}

/// Inverse of [`r_map`]: the unique ordered stack with
/// `lines[k](x) = 1` iff `xi(x) <= k + 1` (0-based `k`).
pub fn r_inverse(xi: &MulticlassConfig) -> OrderedStack {
    let topology = xi.topology();
    let n = xi.classes();
    let lines = (1..=n as u32)
        .map(|k| {
            let bits = xi.word().iter().map(|&c| (c <= k) as u8).collect();
            Configuration::from_bits(topology, bits).expect("word length fixed")
        })
        .collect();
    OrderedStack { lines }
}

/// Lump classes above `m` into the hole class: `xi^m(x) = min(xi(x), m + 1)`.
pub fn truncate(xi: &MulticlassConfig, m: usize) -> Result<MulticlassConfig> {
    if m < 1 || m > xi.classes() {
        return Err(Error::TruncationOutOfRange {
            m,
            n: xi.classes(),
        });
    }
    let cap = m as u32 + 1;
    Ok(MulticlassConfig {
        topology: xi.topology(),
        classes: m,
        word: xi.word().iter().map(|&c| c.min(cap)).collect(),
    })
}

/// Bernoulli(`rho`) product sample over all sites.
pub fn sample_bernoulli(topology: Topology, rho: Density, seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = (0..topology.total_sites())
        .map(|_| (rng.gen::<f64>() < rho.value()) as u8)
        .collect();
    Configuration {
        topology,
        bits,
    }
}

/// Uniform sample among configurations with exactly `count` particles.
pub fn sample_fixed_count(topology: Topology, count: usize, seed: u64) -> Result<Configuration> {
    let total = topology.total_sites();
    if count > total {
        return Err(Error::WordLength {
            got: count,
            want: total,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = Configuration::empty(topology);
    for idx in index_sample(&mut rng, total, count) {
        cfg.bits[idx] = 1;
    }
    Ok(cfg)
}

/// Independent Bernoulli lines at the given densities, one sub-seed per line.
/// The result is generally NOT ordered; order it through a queue construction.
pub fn sample_lines(topology: Topology, densities: &[Density], seed: u64) -> Vec<Configuration> {
    densities
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let bits = (0..topology.total_sites())
                .map(|_| (rng.gen::<f64>() < rho.value()) as u8)
                .collect();
            Configuration {
                topology,
                bits,
            }
        })
        .collect()
}
