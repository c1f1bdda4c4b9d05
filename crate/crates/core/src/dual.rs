//! Dual points, time reversal, and the multi-line process.
//!
//! Every mark of a trajectory has a dual point: for the pull process the site
//! the moved particle came from (the marked site itself for a silent mark),
//! for leftward exclusion the marked bond when its right site is occupied and
//! otherwise the next bond to the right. Reversing time and reflecting space
//! turns the trajectory into a trajectory of the same dynamics driven by the
//! reflected dual points — `reverse_check` verifies this identity pathwise.
//!
//! The multi-line process couples a stack of independent lines: a mark is
//! handed to the densest (last) line, and each line's dual point becomes the
//! mark for the sparser line above it. The collapse of the stack through the
//! tandem map then evolves exactly as the multiclass dynamics driven by the
//! original marks — `t_image_check` verifies this commutation pathwise.

use crate::dynamics::{
    apply_at, evolve_multiclass, evolve_streaming, DynamicsKind, Event, Location, PointProcess,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::lattice::{r_inverse, Configuration, MulticlassConfig, Topology};
use crate::queue::{m_map, Boundary};

/// The dual of one mark. `location` is `None` only when a dual bond would
/// fall off the right edge of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPoint {
    pub time: f64,
    pub location: Option<Location>,
}

fn unsupported(kind: DynamicsKind) -> Error {
    Error::UnsupportedKind(format!("no dual points for {}", kind.name()))
}

/// Dual location of a single event, given the line as it was just before the
/// event and the move the event performed.
pub fn dual_of_jump(
    line_pre: &Configuration,
    kind: DynamicsKind,
    location: Location,
    jump: Option<(i64, i64)>,
) -> Result<Option<Location>> {
    match (kind, location) {
        (DynamicsKind::Had, Location::Site(j)) => {
            Ok(Some(Location::Site(jump.map_or(j, |(from, _)| from))))
        }
        // the mirror kind moves a hole from the particle's destination
        (DynamicsKind::Lrep, Location::Site(j)) => {
            Ok(Some(Location::Site(jump.map_or(j, |(_, to)| to))))
        }
        (DynamicsKind::Tasep, Location::Bond(b)) => {
            let t = line_pre.topology();
            if line_pre.get(t.bond_right(b)) == 1 {
                Ok(Some(Location::Bond(b)))
            } else {
                Ok(t.bond_successor(b).map(Location::Bond))
            }
        }
        _ => Err(unsupported(kind)),
    }
}

/// Apply one mark to one line and report the dual point location alongside
/// the move, without copying the line.
/// The move `(from, to)` a mark performed, if any, and the dual location it
/// left behind.
pub type JumpOutcome = (Option<(i64, i64)>, Option<Location>);

pub fn jump_and_dual(
    line: &mut Configuration,
    kind: DynamicsKind,
    location: Location,
) -> Result<JumpOutcome> {
    let right_occupied = match (kind, location) {
        (DynamicsKind::Tasep, Location::Bond(b)) => {
            line.get(line.topology().bond_right(b)) == 1
        }
        (DynamicsKind::Had | DynamicsKind::Lrep, Location::Site(_)) => false,
        _ => return Err(unsupported(kind)),
    };
    let jump = apply_at(line, kind, location, None)?;
    let dual = match (kind, location) {
        (DynamicsKind::Had, Location::Site(j)) => {
            Some(Location::Site(jump.map_or(j, |(from, _)| from)))
        }
        (DynamicsKind::Lrep, Location::Site(j)) => {
            Some(Location::Site(jump.map_or(j, |(_, to)| to)))
        }
        (DynamicsKind::Tasep, Location::Bond(b)) => {
            let t = line.topology();
            if right_occupied {
                Some(Location::Bond(b))
            } else {
                t.bond_successor(b).map(Location::Bond)
            }
        }
        _ => unreachable!(),
    };
    Ok((jump, dual))
}

fn single_line(traj: &Trajectory) -> Result<Configuration> {
    if traj.initial.classes() != 1 {
        return Err(Error::UnsupportedKind(
            "dual points are defined for single-class trajectories".into(),
        ));
    }
    Ok(r_inverse(&traj.initial).into_lines().remove(0))
}

/// Dual points of a single-class trajectory, one per event, in time order.
pub fn dual_points(traj: &Trajectory) -> Result<Vec<DualPoint>> {
    let mut line = single_line(traj)?;
    let mut out = Vec::with_capacity(traj.events.len());
    for ev in &traj.events {
        let dual = dual_of_jump(&line, traj.kind, ev.location, ev.line_jumps[0])?;
        out.push(DualPoint {
            time: ev.time,
            location: dual,
        });
        if let Some((from, to)) = ev.line_jumps[0] {
            line.set(from, 0);
            line.set(to, 1);
        }
    }
    Ok(out)
}

fn reflect_location(t: Topology, loc: Location) -> Location {
    match loc {
        Location::Site(x) => Location::Site(t.reflect_site(x)),
        Location::Bond(b) => Location::Bond(t.reflect_bond(b)),
    }
}

/// Pathwise time-reversal identity: running the events backwards, the
/// space-reflected state must evolve under the same dynamics driven by the
/// space-reflected dual points. Returns whether every step matches.
pub fn reverse_check(traj: &Trajectory) -> Result<bool> {
    if !matches!(
        traj.kind,
        DynamicsKind::Had | DynamicsKind::Tasep | DynamicsKind::Lrep
    ) {
        return Err(unsupported(traj.kind));
    }
    let t = traj.topology();
    let initial = single_line(traj)?;
    let duals = dual_points(traj)?;
    // states[i] is the line after i events
    let mut states = Vec::with_capacity(traj.events.len() + 1);
    states.push(initial);
    for ev in &traj.events {
        let mut next = states.last().unwrap().clone();
        if let Some((from, to)) = ev.line_jumps[0] {
            next.set(from, 0);
            next.set(to, 1);
        }
        states.push(next);
    }
    for i in (1..states.len()).rev() {
        let mut reversed = states[i].reflect();
        // a dual with no location comes from a silent mark: nothing to undo
        if let Some(loc) = duals[i - 1].location {
            apply_at(&mut reversed, traj.kind, reflect_location(t, loc), None)?;
        }
        if reversed != states[i - 1].reflect() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A stack of lines for the multi-line process. The lines share a topology
/// but need not be sitewise ordered — their joint law, not any pathwise
/// ordering, is what the process preserves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiLineState {
    lines: Vec<Configuration>,
}

impl MultiLineState {
    pub fn new(lines: Vec<Configuration>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::EmptyConfiguration);
        }
        if lines.windows(2).any(|w| w[0].topology() != w[1].topology()) {
            return Err(Error::TopologyMismatch(
                "multi-line state needs a common topology".into(),
            ));
        }
        Ok(MultiLineState { lines })
    }

    pub fn topology(&self) -> Topology {
        self.lines[0].topology()
    }

    pub fn lines(&self) -> &[Configuration] {
        &self.lines
    }

    pub fn into_lines(self) -> Vec<Configuration> {
        self.lines
    }
}

/// One cascade step: which mark each line received and what it did. Index 0
/// is the sparsest (top) line.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeStep {
    pub received: Vec<Option<Location>>,
    pub jumps: Vec<Option<(i64, i64)>>,
}

/// Apply one mark to the multi-line state: the densest line jumps at the
/// mark, and each line's dual point is handed to the line above it.
pub fn multiline_local_step(
    state: &mut MultiLineState,
    kind: DynamicsKind,
    location: Location,
) -> Result<CascadeStep> {
    let n = state.lines.len();
    let mut received = vec![None; n];
    let mut jumps = vec![None; n];
    let mut mark = Some(location);
    for k in (0..n).rev() {
        let Some(loc) = mark else { break };
        received[k] = Some(loc);
        let (jump, dual) = jump_and_dual(&mut state.lines[k], kind, loc)?;
        jumps[k] = jump;
        mark = dual;
    }
    Ok(CascadeStep { received, jumps })
}

/// Drive the multi-line state through a whole mark collection.
pub fn multiline_evolve(
    state: &mut MultiLineState,
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<()> {
    if points.topology() != state.topology() {
        return Err(Error::TopologyMismatch(
            "marks and state on different topologies".into(),
        ));
    }
    for mark in points.marks() {
        multiline_local_step(state, kind, mark.location)?;
    }
    Ok(())
}

fn image_boundary(t: Topology) -> Boundary {
    if t.is_ring() {
        Boundary::Loynes
    } else {
        Boundary::Empty
    }
}

/// Pathwise commutation of the multi-line coupling with the collapse map:
/// evolving the lines by the cascade and then collapsing equals collapsing
/// first and evolving the multiclass word directly under the same marks.
pub fn t_image_check(
    lines: &[Configuration],
    kind: DynamicsKind,
    points: &PointProcess,
) -> Result<bool> {
    let boundary = image_boundary(lines[0].topology());
    let image_before = m_map(lines, boundary)?;
    let direct = evolve_multiclass(&image_before, kind, points)?.final_state;
    let mut state = MultiLineState::new(lines.to_vec())?;
    multiline_evolve(&mut state, kind, points)?;
    let image_after = m_map(state.lines(), boundary)?;
    Ok(image_after == direct)
}

/// Evolve a single-class word while streaming each event's dual point,
/// without storing the trajectory. Returns the final word.
pub fn evolve_with_duals(
    initial: &Configuration,
    kind: DynamicsKind,
    points: &PointProcess,
    mut sink: impl FnMut(DualPoint),
) -> Result<Configuration> {
    let word: Vec<u32> = initial.bits().iter().map(|&b| 2 - b as u32).collect();
    let mc = MulticlassConfig::new(initial.topology(), 1, word)?;
    let mut err = None;
    let final_mc = evolve_streaming(&mc, kind, points, |ev: Event, pre: &[Configuration]| {
        if err.is_some() {
            return;
        }
        match dual_of_jump(&pre[0], kind, ev.location, ev.line_jumps[0]) {
            Ok(location) => sink(DualPoint {
                time: ev.time,
                location,
            }),
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let bits: Vec<u8> = final_mc.word().iter().map(|&c| (c == 1) as u8).collect();
    Configuration::from_bits(initial.topology(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{generate_poisson, Mark};
    use crate::lattice::{r_map, sample_bernoulli, sample_fixed_count, Density};
    use crate::queue::t_map;

    fn ring_cfg(bits: &[u8]) -> Configuration {
        Configuration::from_bits(Topology::ring(bits.len()), bits.to_vec()).unwrap()
    }

    fn marks_at(t: Topology, locs: &[Location]) -> PointProcess {
        let marks = locs
            .iter()
            .enumerate()
            .map(|(i, &location)| Mark {
                location,
                time: (i + 1) as f64 * 0.25,
                dir_left: None,
            })
            .collect();
        PointProcess::new(t, locs.len() as f64, marks).unwrap()
    }

    #[test]
    fn pull_duals_report_origin_or_marked_site() {
        let initial = ring_cfg(&[0, 1, 0]);
        let t = initial.topology();
        let points = marks_at(t, &[Location::Site(0), Location::Site(0)]);
        let traj = crate::dynamics::evolve(&initial, DynamicsKind::Had, &points).unwrap();
        let duals = dual_points(&traj).unwrap();
        assert_eq!(duals.len(), 2);
        // first mark pulls the particle from site 1; second finds 0 occupied
        assert_eq!(duals[0].location, Some(Location::Site(1)));
        assert_eq!(duals[1].location, Some(Location::Site(0)));
    }

    #[test]
    fn exclusion_duals_follow_the_right_site() {
        let initial = ring_cfg(&[0, 1, 0, 0]);
        let t = initial.topology();
        let points = marks_at(t, &[Location::Bond(0), Location::Bond(1), Location::Bond(3)]);
        let traj = crate::dynamics::evolve(&initial, DynamicsKind::Tasep, &points).unwrap();
        let duals = dual_points(&traj).unwrap();
        // bond 0: right site 1 occupied, jump fires, dual stays at 0
        assert_eq!(duals[0].location, Some(Location::Bond(0)));
        // bond 1: right site 2 empty, dual moves to bond 2
        assert_eq!(duals[1].location, Some(Location::Bond(2)));
        // bond 3 wraps: right site 0 now occupied, dual stays
        assert_eq!(duals[2].location, Some(Location::Bond(3)));

        // on a segment the dual can fall off the right edge
        let s = Topology::segment(3, 0);
        let line = Configuration::from_bits(s, vec![1, 0, 0]).unwrap();
        let points = marks_at(s, &[Location::Bond(1)]);
        let traj = crate::dynamics::evolve(&line, DynamicsKind::Tasep, &points).unwrap();
        let duals = dual_points(&traj).unwrap();
        assert_eq!(duals[0].location, None);
    }

    #[test]
    fn duals_align_with_marks_one_to_one() {
        let t = Topology::ring(30);
        let initial = sample_fixed_count(t, 11, 4).unwrap();
        for kind in [DynamicsKind::Had, DynamicsKind::Tasep, DynamicsKind::Lrep] {
            let points = generate_poisson(t, kind, 10.0, 8).unwrap();
            let traj = crate::dynamics::evolve(&initial, kind, &points).unwrap();
            let duals = dual_points(&traj).unwrap();
            assert_eq!(duals.len(), points.len(), "{}", kind.name());
            assert!(duals.iter().all(|d| d.location.is_some()));
        }
    }

    #[test]
    fn reversal_identity_holds_on_random_ring_trajectories() {
        for kind in [DynamicsKind::Had, DynamicsKind::Tasep, DynamicsKind::Lrep] {
            for seed in 0..40u64 {
                let t = Topology::ring(20);
                let initial = sample_bernoulli(t, Density::new(0.45).unwrap(), 100 + seed);
                let points = generate_poisson(t, kind, 5.0, 500 + seed).unwrap();
                let traj = crate::dynamics::evolve(&initial, kind, &points).unwrap();
                assert!(
                    reverse_check(&traj).unwrap(),
                    "{} seed {seed}",
                    kind.name()
                );
            }
        }
    }

    #[test]
    fn reversal_identity_holds_on_segments_with_edge_duals() {
        for seed in 0..25u64 {
            let t = Topology::segment(12, 3);
            let initial = sample_bernoulli(t, Density::new(0.4).unwrap(), seed);
            let points = generate_poisson(t, DynamicsKind::Tasep, 4.0, 900 + seed).unwrap();
            let traj = crate::dynamics::evolve(&initial, DynamicsKind::Tasep, &points).unwrap();
            assert!(reverse_check(&traj).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn tampered_trajectory_fails_the_reversal_identity() {
        let t = Topology::ring(12);
        let initial = sample_fixed_count(t, 5, 3).unwrap();
        let points = generate_poisson(t, DynamicsKind::Had, 4.0, 13).unwrap();
        let mut traj = crate::dynamics::evolve(&initial, DynamicsKind::Had, &points).unwrap();
        let idx = traj
            .events
            .iter()
            .position(|e| e.line_jumps[0].is_some())
            .expect("some mark moves a particle");
        traj.events[idx].line_jumps[0] = None;
        assert!(!reverse_check(&traj).unwrap());
    }

    #[test]
    fn cascade_base_identity_exhaustive_two_lines() {
        // collapse-then-jump equals cascade-then-collapse at every mark, for
        // every stable pair of words on small rings
        for kind in [DynamicsKind::Had, DynamicsKind::Tasep] {
            let mut checked = 0usize;
            for l in 2..=5usize {
                let t = Topology::ring(l);
                for w1 in 0..(1u32 << l) {
                    for w2 in 0..(1u32 << l) {
                        let bits =
                            |w: u32| (0..l).map(|i| ((w >> i) & 1) as u8).collect::<Vec<_>>();
                        let a1 = Configuration::from_bits(t, bits(w1)).unwrap();
                        let a2 = Configuration::from_bits(t, bits(w2)).unwrap();
                        if a1.particle_count() >= a2.particle_count() {
                            continue;
                        }
                        let locs: Vec<Location> = if kind.marks_on_bonds() {
                            (0..l as i64).map(Location::Bond).collect()
                        } else {
                            (0..l as i64).map(Location::Site).collect()
                        };
                        for loc in locs {
                            let lines = vec![a1.clone(), a2.clone()];
                            let points = marks_at(t, &[loc]);
                            assert!(
                                t_image_check(&lines, kind, &points).unwrap(),
                                "{} {w1:b} {w2:b} at {loc}",
                                kind.name()
                            );
                            checked += 1;
                        }
                    }
                }
            }
            assert!(checked > 2000, "{checked}");
        }
    }

    #[test]
    fn cascade_matches_direct_multiclass_evolution_three_lines() {
        for kind in [DynamicsKind::Had, DynamicsKind::Tasep] {
            for seed in 0..30u64 {
                let t = Topology::ring(24);
                let lines = vec![
                    sample_fixed_count(t, 4, 50 + seed).unwrap(),
                    sample_fixed_count(t, 11, 150 + seed).unwrap(),
                    sample_fixed_count(t, 18, 250 + seed).unwrap(),
                ];
                let points = generate_poisson(t, kind, 6.0, 350 + seed).unwrap();
                assert!(
                    t_image_check(&lines, kind, &points).unwrap(),
                    "{} seed {seed}",
                    kind.name()
                );
            }
        }
    }

    #[test]
    fn cascade_hands_marks_downward_and_conserves_lines() {
        let t = Topology::ring(16);
        let lines = vec![
            sample_fixed_count(t, 3, 1).unwrap(),
            sample_fixed_count(t, 7, 2).unwrap(),
            sample_fixed_count(t, 12, 3).unwrap(),
        ];
        let counts: Vec<usize> = lines.iter().map(|l| l.particle_count()).collect();
        let mut state = MultiLineState::new(lines).unwrap();
        let step =
            multiline_local_step(&mut state, DynamicsKind::Had, Location::Site(5)).unwrap();
        // the densest line receives the physical mark; every line upward
        // receives its lower neighbour's dual
        assert_eq!(step.received[2], Some(Location::Site(5)));
        assert!(step.received.iter().all(Option::is_some));
        let after: Vec<usize> = state.lines().iter().map(|l| l.particle_count()).collect();
        assert_eq!(after, counts);
    }

    #[test]
    fn streamed_duals_match_trajectory_duals() {
        let t = Topology::ring(40);
        let initial = sample_bernoulli(t, Density::new(0.5).unwrap(), 17);
        let points = generate_poisson(t, DynamicsKind::Had, 6.0, 18).unwrap();
        let traj = crate::dynamics::evolve(&initial, DynamicsKind::Had, &points).unwrap();
        let expect = dual_points(&traj).unwrap();
        let mut got = Vec::new();
        let final_line =
            evolve_with_duals(&initial, DynamicsKind::Had, &points, |d| got.push(d)).unwrap();
        assert_eq!(got, expect);
        let word: Vec<u32> = final_line.bits().iter().map(|&b| 2 - b as u32).collect();
        assert_eq!(word.as_slice(), traj.final_state.word());
    }

    #[test]
    fn collapse_image_respects_class_budgets_after_cascade() {
        let t = Topology::ring(24);
        let lines = vec![
            sample_fixed_count(t, 5, 31).unwrap(),
            sample_fixed_count(t, 12, 32).unwrap(),
        ];
        let mut state = MultiLineState::new(lines.clone()).unwrap();
        let points = generate_poisson(t, DynamicsKind::Tasep, 8.0, 33).unwrap();
        multiline_evolve(&mut state, DynamicsKind::Tasep, &points).unwrap();
        let image = r_map(&t_map(state.lines(), Boundary::Loynes).unwrap());
        let count = |c: u32| image.word().iter().filter(|&&x| x == c).count();
        assert_eq!(count(1), 5);
        assert_eq!(count(2), 7);
        assert_eq!(count(3), 12);
    }
}
