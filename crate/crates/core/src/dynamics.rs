//! Event-driven dynamics: mark processes, local jump rules, trajectories.
//!
//! Continuous-time kinds (pull and exclusion processes) are driven by rate-1
//! Poisson marks at sites or bonds; discrete-time kinds are driven by
//! Bernoulli bond fields applied in synchronous sweeps. Every mark is applied
//! to each line of a stack simultaneously (the basic coupling), which is also
//! how multiclass words evolve: decompose into the ordered lines, move each
//! line, and collapse back.

use crate::error::{Error, Result};
use crate::lattice::{r_inverse, r_map, Configuration, MulticlassConfig, Topology};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Where a mark lives: a site, or the bond joining a site to its right
/// neighbour (bond `b` joins `b` and `b + 1`, cyclically on a ring).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Site(i64),
    Bond(i64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Site(x) => write!(f, "{x}"),
            Location::Bond(b) => write!(f, "{}.5", b),
        }
    }
}

/// The dynamics families. Probabilities parameterize the kind: `Asep` jumps
/// left with probability `left_probability` per mark, the discrete kinds mark
/// each bond independently with `mark_probability` per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DynamicsKind {
    /// Pull process: a bell at an empty site attracts the nearest particle
    /// at or to its left.
    Had,
    /// Totally asymmetric exclusion, jumps to the left.
    Tasep,
    /// The hole-particle mirror of the pull process.
    Lrep,
    /// Partially asymmetric exclusion.
    Asep { left_probability: f64 },
    /// Synchronous sweep, bonds scanned left to right.
    SeqTasepLr { mark_probability: f64 },
    /// Synchronous sweep, bonds scanned right to left.
    SeqTasepRl { mark_probability: f64 },
    /// Fully parallel sweep against the pre-sweep state.
    ParTasep { mark_probability: f64 },
}

impl DynamicsKind {
    pub fn marks_on_bonds(self) -> bool {
        !matches!(self, DynamicsKind::Had | DynamicsKind::Lrep)
    }

    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            DynamicsKind::SeqTasepLr { .. }
                | DynamicsKind::SeqTasepRl { .. }
                | DynamicsKind::ParTasep { .. }
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            DynamicsKind::Had => "had",
            DynamicsKind::Tasep => "tasep",
            DynamicsKind::Lrep => "lrep",
            DynamicsKind::Asep { .. } => "asep",
            DynamicsKind::SeqTasepLr { .. } => "seq-tasep-lr",
            DynamicsKind::SeqTasepRl { .. } => "seq-tasep-rl",
            DynamicsKind::ParTasep { .. } => "par-tasep",
        }
    }
}

/// A single mark of the driving noise. `dir_left` is present exactly for
/// partially asymmetric marks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub location: Location,
    pub time: f64,
    pub dir_left: Option<bool>,
}

/// A finite space-time mark collection on a topology, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProcess {
    topology: Topology,
    horizon: f64,
    marks: Vec<Mark>,
}

impl PointProcess {
    pub fn new(topology: Topology, horizon: f64, mut marks: Vec<Mark>) -> Result<Self> {
        for m in &marks {
            let ok = match m.location {
                Location::Site(x) => topology.contains_site(x),
                Location::Bond(b) => topology.contains_bond(b),
            };
            if !ok {
                let raw = match m.location {
                    Location::Site(x) => x,
                    Location::Bond(b) => b,
                };
                return Err(Error::InvalidLocation(raw));
            }
            if !(0.0..=horizon).contains(&m.time) {
                return Err(Error::MarkOutsideHorizon(m.time));
            }
        }
        marks.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(PointProcess {
            topology,
            horizon,
            marks,
        })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Rate-1 Poisson marks at every site (pull kinds) or bond (exclusion kinds)
/// up to `horizon`, one independent stream per location so the process is
/// stable under changes of the lattice size. Exact time ties across distinct
/// locations (probability zero, but floats are finite) trigger a full
/// regeneration with a perturbed seed.
pub fn generate_poisson(
    topology: Topology,
    kind: DynamicsKind,
    horizon: f64,
    seed: u64,
) -> Result<PointProcess> {
    if kind.is_discrete() {
        return Err(Error::UnsupportedKind(format!(
            "{} is driven by a Bernoulli field, not Poisson marks",
            kind.name()
        )));
    }
    let locations: Vec<Location> = if kind.marks_on_bonds() {
        topology.all_bonds().map(Location::Bond).collect()
    } else {
        topology.all_sites().map(Location::Site).collect()
    };
    let left_probability = match kind {
        DynamicsKind::Asep { left_probability } => Some(left_probability),
        _ => None,
    };
    for attempt in 0..16u64 {
        let base = if attempt == 0 {
            seed
        } else {
            splitmix64(seed ^ (attempt << 48))
        };
        let mut marks = Vec::new();
        for (i, &loc) in locations.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(i as u64 + 1);
            let mut t = 0.0f64;
            loop {
                t -= (1.0 - rng.gen::<f64>()).ln();
                if t >= horizon {
                    break;
                }
                let dir_left = left_probability.map(|p| rng.gen::<f64>() < p);
                marks.push(Mark {
                    location: loc,
                    time: t,
                    dir_left,
                });
            }
        }
        marks.sort_by(|a, b| a.time.total_cmp(&b.time));
        let tied = marks.windows(2).any(|w| w[0].time == w[1].time);
        if !tied {
            return PointProcess::new(topology, horizon, marks);
        }
    }
    unreachable!("sixteen consecutive mark collections with exact float ties")
}

/// Discrete driving noise: at each integer time `1..=steps`, every bond is
/// marked independently with the kind's mark probability.
pub fn generate_bernoulli_field(
    topology: Topology,
    kind: DynamicsKind,
    steps: usize,
    seed: u64,
) -> Result<PointProcess> {
    let p = match kind {
        DynamicsKind::SeqTasepLr { mark_probability }
        | DynamicsKind::SeqTasepRl { mark_probability }
        | DynamicsKind::ParTasep { mark_probability } => mark_probability,
        _ => {
            return Err(Error::UnsupportedKind(format!(
                "{} is driven by Poisson marks, not a Bernoulli field",
                kind.name()
            )))
        }
    };
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidDensity(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bonds: Vec<i64> = topology.all_bonds().collect();
    let mut marks = Vec::new();
    for t in 1..=steps {
        for &b in &bonds {
            if rng.gen::<f64>() < p {
                marks.push(Mark {
                    location: Location::Bond(b),
                    time: t as f64,
                    dir_left: None,
                });
            }
        }
    }
    PointProcess::new(topology, steps as f64, marks)
}

fn move_particle(line: &mut Configuration, from: i64, to: i64) {
    debug_assert_eq!(line.get(from), 1);
    debug_assert_eq!(line.get(to), 0);
    line.set(from, 0);
    line.set(to, 1);
}

/// Apply one mark to one line. Returns the move as `(from, to)`, or `None`
/// when the mark does not act on this line.
pub fn apply_at(
    line: &mut Configuration,
    kind: DynamicsKind,
    location: Location,
    dir_left: Option<bool>,
) -> Result<Option<(i64, i64)>> {
    match (kind, location) {
        (DynamicsKind::Had, Location::Site(j)) => {
            if line.get(j) == 1 {
                return Ok(None);
            }
            Ok(line.nearest_particle_at_or_left(j).map(|i| {
                move_particle(line, i, j);
                (i, j)
            }))
        }
        (DynamicsKind::Lrep, Location::Site(j)) => {
            if line.get(j) == 0 {
                return Ok(None);
            }
            match line.nearest_hole_at_or_left(j) {
                Some(i) if i != j => {
                    move_particle(line, j, i);
                    Ok(Some((j, i)))
                }
                _ => Ok(None),
            }
        }
        (
            DynamicsKind::Tasep
            | DynamicsKind::SeqTasepLr { .. }
            | DynamicsKind::SeqTasepRl { .. }
            | DynamicsKind::ParTasep { .. },
            Location::Bond(b),
        ) => Ok(swap_left(line, b)),
        (DynamicsKind::Asep { .. }, Location::Bond(b)) => {
            let left = dir_left.ok_or(Error::MissingDirections)?;
            if left {
                Ok(swap_left(line, b))
            } else {
                Ok(swap_right(line, b))
            }
        }
        _ => {
            let raw = match location {
                Location::Site(x) => x,
                Location::Bond(b) => b,
            };
            Err(Error::InvalidLocation(raw))
        }
    }
}

/// Exclusion jump to the left across bond `b`: `(0, 1) -> (1, 0)`.
fn swap_left(line: &mut Configuration, b: i64) -> Option<(i64, i64)> {
    let x = b;
    let y = line.topology().bond_right(b);
    if line.get(x) == 0 && line.get(y) == 1 {
        move_particle(line, y, x);
        Some((y, x))
    } else {
        None
    }
}

/// Exclusion jump to the right across bond `b`: `(1, 0) -> (0, 1)`.
fn swap_right(line: &mut Configuration, b: i64) -> Option<(i64, i64)> {
    let x = b;
    let y = line.topology().bond_right(b);
    if line.get(x) == 1 && line.get(y) == 0 {
        move_particle(line, x, y);
        Some((x, y))
    } else {
        None
    }
}

/// Per-line moves of one synchronous sweep at one marked bond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMove {
    pub bond: i64,
    pub line_jumps: Vec<Option<(i64, i64)>>,
}

/// One synchronous sweep of a discrete kind over the marked bonds, applied to
/// every line under the same marks. Scan order is ascending for `SeqTasepLr`,
/// descending for `SeqTasepRl`; `ParTasep` evaluates every marked bond
/// against the pre-sweep state and applies the enabled jumps at once (for a
/// single line these never conflict, since a jump needs an empty left site
/// and an occupied right site).
pub fn apply_sweep(
    lines: &mut [Configuration],
    kind: DynamicsKind,
    marked_bonds: &[i64],
) -> Result<Vec<SweepMove>> {
    let mut bonds = marked_bonds.to_vec();
    match kind {
        DynamicsKind::SeqTasepLr { .. } => bonds.sort_unstable(),
        DynamicsKind::SeqTasepRl { .. } => bonds.sort_unstable_by(|a, b| b.cmp(a)),
        DynamicsKind::ParTasep { .. } => bonds.sort_unstable(),
        other => {
            return Err(Error::UnsupportedKind(format!(
                "{} has no synchronous sweeps",
                other.name()
            )))
        }
    }
    let mut moves: Vec<SweepMove> = bonds
        .iter()
        .map(|&b| SweepMove {
            bond: b,
            line_jumps: vec![None; lines.len()],
        })
        .collect();
    if matches!(kind, DynamicsKind::ParTasep { .. }) {
        for (k, line) in lines.iter_mut().enumerate() {
            let enabled: Vec<(usize, i64, i64)> = moves
                .iter()
                .enumerate()
                .filter_map(|(mi, mv)| {
                    let x = mv.bond;
                    let y = line.topology().bond_right(mv.bond);
                    (line.get(x) == 0 && line.get(y) == 1).then_some((mi, y, x))
                })
                .collect();
            for (mi, from, to) in enabled {
                move_particle(line, from, to);
                moves[mi].line_jumps[k] = Some((from, to));
            }
        }
    } else {
        for (mi, mv) in moves.iter_mut().enumerate() {
            let _ = mi;
            for (k, line) in lines.iter_mut().enumerate() {
                mv.line_jumps[k] = swap_left(line, mv.bond);
            }
        }
    }
    Ok(moves)
}

/// One recorded event: the mark that fired and what it did to each line. A
/// mark that moved nothing is still recorded, so the event log and the mark
/// collection always have the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub location: Location,
    /// per line of the (decomposed) state: the move `(from, to)`, if any
    pub line_jumps: Vec<Option<(i64, i64)>>,
    /// for exclusion kinds on multiclass words: the pair of classes that
    /// exchanged places across the bond, as `(lower, higher)`
    pub class_swap: Option<(u32, u32)>,
}

/// A full evolution record: initial word, one event per mark, final word.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: DynamicsKind,
    pub initial: MulticlassConfig,
    pub events: Vec<Event>,
    pub final_state: MulticlassConfig,
}

impl Trajectory {
    pub fn topology(&self) -> Topology {
        self.initial.topology()
    }

    /// States after each event, reconstructed purely from the recorded moves.
    pub fn replay(&self) -> Vec<MulticlassConfig> {
        let mut lines = r_inverse(&self.initial).into_lines();
        let mut out = Vec::with_capacity(self.events.len());
        for ev in &self.events {
            for (k, jump) in ev.line_jumps.iter().enumerate() {
                if let Some((from, to)) = *jump {
                    move_particle(&mut lines[k], from, to);
                }
            }
            let stack = crate::lattice::OrderedStack::new(lines.clone())
                .expect("replayed lines stay ordered");
            out.push(r_map(&stack));
        }
        out
    }
}

/// Drive lines through the marks, reporting each event together with the
/// pre-event lines to the sink.
fn drive(
    lines: &mut [Configuration],
    kind: DynamicsKind,
    points: &PointProcess,
    mut sink: impl FnMut(Event, &[Configuration]),
) -> Result<()> {
    if lines[0].topology() != points.topology() {
        return Err(Error::TopologyMismatch(
            "marks and state on different topologies".into(),
        ));
    }
    if kind.is_discrete() {
        let mut i = 0;
        let marks = points.marks();
        while i < marks.len() {
            let t = marks[i].time;
            let mut j = i;
            let mut bonds = Vec::new();
            while j < marks.len() && marks[j].time == t {
                match marks[j].location {
                    Location::Bond(b) => bonds.push(b),
                    Location::Site(x) => return Err(Error::InvalidLocation(x)),
                }
                j += 1;
            }
            // evaluate enabledness against the pre-sweep state for the
            // parallel kind by snapshotting before any move
            let pre = lines.to_vec();
            let moves = apply_sweep(lines, kind, &bonds)?;
            let mut pre_cursor = pre;
            for mv in moves {
                let ev = Event {
                    time: t,
                    location: Location::Bond(mv.bond),
                    line_jumps: mv.line_jumps.clone(),
                    class_swap: None,
                };
                sink(ev, &pre_cursor);
                for (k, jump) in mv.line_jumps.iter().enumerate() {
                    if let Some((from, to)) = *jump {
                        move_particle(&mut pre_cursor[k], from, to);
                    }
                }
            }
            i = j;
        }
        return Ok(());
    }
    for mark in points.marks() {
        let pre = lines.to_vec();
        let mut line_jumps = Vec::with_capacity(lines.len());
        for line in lines.iter_mut() {
            line_jumps.push(apply_at(line, kind, mark.location, mark.dir_left)?);
        }
        sink(
            Event {
                time: mark.time,
                location: mark.location,
                line_jumps,
                class_swap: None,
            },
            &pre,
        );
    }
    Ok(())
}

/// Evolve a multiclass word under the kind's dynamics: decompose into lines,
/// move every line under each mark, collapse back. The parallel kind is
/// rejected, because simultaneous overtakes can contend for a site once
/// classes are distinguishable.
pub fn evolve_multiclass(
    initial: &MulticlassConfig,
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<Trajectory> {
    if matches!(kind, DynamicsKind::ParTasep { .. }) && initial.classes() > 1 {
        return Err(Error::UnsupportedKind(
            "parallel sweeps do not preserve class ordering".into(),
        ));
    }
    let mut lines = r_inverse(initial).into_lines();
    let mut events = Vec::with_capacity(points.len());
    drive(&mut lines, kind, points, |mut ev, pre| {
        if kind.marks_on_bonds() {
            if let Location::Bond(b) = ev.location {
                ev.class_swap = class_swap_at(pre, &ev, b);
            }
        }
        events.push(ev);
    })?;
    let stack = crate::lattice::OrderedStack::new(lines)?;
    Ok(Trajectory {
        kind,
        initial: initial.clone(),
        events,
        final_state: r_map(&stack),
    })
}

fn class_at(lines: &[Configuration], x: i64) -> u32 {
    for (k, line) in lines.iter().enumerate() {
        if line.get(x) == 1 {
            return k as u32 + 1;
        }
    }
    lines.len() as u32 + 1
}

fn class_swap_at(pre: &[Configuration], ev: &Event, b: i64) -> Option<(u32, u32)> {
    if ev.line_jumps.iter().all(Option::is_none) {
        return None;
    }
    let y = pre[0].topology().bond_right(b);
    let (cx, cy) = (class_at(pre, b), class_at(pre, y));
    (cx != cy).then_some((cx.min(cy), cx.max(cy)))
}

/// Evolve a single {0,1} configuration (one-class word).
pub fn evolve(
    initial: &Configuration,
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<Trajectory> {
    let word: Vec<u32> = initial.bits().iter().map(|&b| 2 - b as u32).collect();
    let mc = MulticlassConfig::new(initial.topology(), 1, word)?;
    evolve_multiclass(&mc, kind, points)
}

/// Evolve the lines of a stack jointly under one mark collection, returning
/// the final lines (the basic coupling; ordering is preserved by every kind
/// except the parallel sweep).
pub fn evolve_coupled(
    lines: &[Configuration],
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<Vec<Configuration>> {
    let mut lines = lines.to_vec();
    drive(&mut lines, kind, points, |_, _| {})?;
    Ok(lines)
}

/// Evolve with a streaming sink instead of an event log: the sink sees each
/// event and the pre-event lines. Used by the statistical pipelines to avoid
/// storing long trajectories.
pub fn evolve_streaming(
    initial: &MulticlassConfig,
    kind: DynamicsKind,
    points: &PointProcess,
    sink: impl FnMut(Event, &[Configuration]),
) -> Result<MulticlassConfig> {
    if matches!(kind, DynamicsKind::ParTasep { .. }) && initial.classes() > 1 {
        return Err(Error::UnsupportedKind(
            "parallel sweeps do not preserve class ordering".into(),
        ));
    }
    let mut lines = r_inverse(initial).into_lines();
    drive(&mut lines, kind, points, sink)?;
    let stack = crate::lattice::OrderedStack::new(lines)?;
    Ok(r_map(&stack))
}

/// State of the spin-augmented dynamics used to make the evolution
/// information-lossless: every mark either moves a particle or flips a spin.
///
/// Pull kind: a bell at an occupied site flips that site's spin. Exclusion
/// kind: a mark at a bond whose right site is empty flips the bond spin; a
/// mark at a doubly occupied bond flips the left site's spin; otherwise the
/// jump happens. Supported on rings with at least one particle, so a bell
/// always finds someone to pull.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedState {
    eta: Configuration,
    site_spins: Vec<u8>,
    bond_spins: Vec<u8>,
}

impl AugmentedState {
    pub fn new(eta: Configuration) -> Self {
        let sites = eta.topology().total_sites();
        let bonds = eta.topology().all_bonds().count();
        AugmentedState {
            eta,
            site_spins: vec![0; sites],
            bond_spins: vec![0; bonds],
        }
    }

    pub fn with_random_spins(eta: Configuration, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = AugmentedState::new(eta);
        for v in s.site_spins.iter_mut().chain(s.bond_spins.iter_mut()) {
            *v = rng.gen_range(0..2);
        }
        s
    }

    pub fn eta(&self) -> &Configuration {
        &self.eta
    }

    pub fn site_spins(&self) -> &[u8] {
        &self.site_spins
    }

    pub fn bond_spins(&self) -> &[u8] {
        &self.bond_spins
    }
}

/// Augmented trajectory: the observation times and the state after each mark.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTrajectory {
    pub kind: DynamicsKind,
    pub horizon: f64,
    pub initial: AugmentedState,
    pub times: Vec<f64>,
    pub states: Vec<AugmentedState>,
}

/// Run the spin-augmented dynamics (pull or leftward exclusion on a ring).
pub fn evolve_augmented(
    initial: &AugmentedState,
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<AugmentedTrajectory> {
    if !matches!(kind, DynamicsKind::Had | DynamicsKind::Tasep) {
        return Err(Error::UnsupportedKind(format!(
            "no spin augmentation for {}",
            kind.name()
        )));
    }
    let topology = initial.eta.topology();
    if !topology.is_ring() {
        return Err(Error::TopologyMismatch(
            "spin augmentation needs a ring".into(),
        ));
    }
    if matches!(kind, DynamicsKind::Had) && initial.eta.particle_count() == 0 {
        return Err(Error::EmptyConfiguration);
    }
    if points.topology() != topology {
        return Err(Error::TopologyMismatch(
            "marks and state on different topologies".into(),
        ));
    }
    let mut state = initial.clone();
    let mut times = Vec::with_capacity(points.len());
    let mut states = Vec::with_capacity(points.len());
    for mark in points.marks() {
        match (kind, mark.location) {
            (DynamicsKind::Had, Location::Site(j)) => {
                if state.eta.get(j) == 1 {
                    let idx = topology.index_of(j);
                    state.site_spins[idx] ^= 1;
                } else {
                    let i = state
                        .eta
                        .nearest_particle_at_or_left(j)
                        .expect("nonempty ring");
                    move_particle(&mut state.eta, i, j);
                }
            }
            (DynamicsKind::Tasep, Location::Bond(b)) => {
                let x = b;
                let y = topology.bond_right(b);
                if state.eta.get(y) == 0 {
                    let idx = topology.index_of(b);
                    state.bond_spins[idx] ^= 1;
                } else if state.eta.get(x) == 1 {
                    let idx = topology.index_of(x);
                    state.site_spins[idx] ^= 1;
                } else {
                    move_particle(&mut state.eta, y, x);
                }
            }
            (_, loc) => {
                let raw = match loc {
                    Location::Site(x) => x,
                    Location::Bond(b) => b,
                };
                return Err(Error::InvalidLocation(raw));
            }
        }
        times.push(mark.time);
        states.push(state.clone());
    }
    Ok(AugmentedTrajectory {
        kind,
        horizon: points.horizon(),
        initial: initial.clone(),
        times,
        states,
    })
}

/// Reconstruct the driving marks from an augmented trajectory using only the
/// state differences between consecutive observations.
pub fn recover_points(traj: &AugmentedTrajectory) -> Result<PointProcess> {
    let topology = traj.initial.eta.topology();
    let mut marks = Vec::with_capacity(traj.states.len());
    let mut prev = &traj.initial;
    for (i, (state, &time)) in traj.states.iter().zip(&traj.times).enumerate() {
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.into(),
        };
        let eta_gain: Vec<i64> = topology
            .all_sites()
            .filter(|&x| prev.eta.get(x) == 0 && state.eta.get(x) == 1)
            .collect();
        let location = if !eta_gain.is_empty() {
            if eta_gain.len() != 1 {
                return Err(bad("more than one particle moved in a single event"));
            }
            match traj.kind {
                // the pull lands on the marked site
                DynamicsKind::Had => Location::Site(eta_gain[0]),
                // a leftward jump lands on the bond's left site
                _ => Location::Bond(eta_gain[0]),
            }
        } else if let Some(idx) = diff_index(&prev.site_spins, &state.site_spins) {
            match traj.kind {
                DynamicsKind::Had => Location::Site(topology.site_at(idx)),
                // the left site of a doubly occupied bond names the bond
                _ => Location::Bond(topology.site_at(idx)),
            }
        } else if let Some(idx) = diff_index(&prev.bond_spins, &state.bond_spins) {
            Location::Bond(topology.site_at(idx))
        } else {
            return Err(bad("event changed nothing"));
        };
        marks.push(Mark {
            location,
            time,
            dir_left: None,
        });
        prev = state;
    }
    PointProcess::new(topology, traj.horizon, marks)
}

fn diff_index(a: &[u8], b: &[u8]) -> Option<usize> {
    let mut found = None;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x != y {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        }
    }
    found
}
