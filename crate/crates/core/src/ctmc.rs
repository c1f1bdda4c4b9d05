//! Exact stationary distributions for small instances, solved as explicit
//! continuous-time Markov chains.
//!
//! States are the fixed-count {0,1} words on a small ring (particle counts
//! are conserved, so each count sector is its own chain). The generator puts
//! rate 1 on every mark location (split `p` / `1 - p` for the partially
//! asymmetric kind), silent marks contributing nothing. The stationary vector
//! comes from a dense LU solve of `pi Q = 0` with the normalization row, with
//! the residual reported so callers can see the solve quality instead of
//! trusting it.

use crate::dynamics::{apply_at, DynamicsKind, Location};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Topology};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

/// Largest state space the dense solver accepts.
pub const STATE_CAP: usize = 4000;

/// All configurations with exactly `count` particles, in lexicographic order
/// of their bit words.
pub fn enumerate_fixed_count(topology: Topology, count: usize) -> Result<Vec<Configuration>> {
    let l = topology.total_sites();
    if count > l {
        return Err(Error::FullConfiguration);
    }
    let size = binomial(l, count);
    if size > STATE_CAP {
        return Err(Error::StateSpaceTooLarge {
            size,
            cap: STATE_CAP,
        });
    }
    let mut states = Vec::with_capacity(size);
    let mut bits = vec![0u8; l];
    fill(&mut states, &mut bits, 0, count, topology);
    Ok(states)
}

fn fill(
    states: &mut Vec<Configuration>,
    bits: &mut Vec<u8>,
    pos: usize,
    left: usize,
    topology: Topology,
) {
    if left > bits.len() - pos {
        return;
    }
    if pos == bits.len() {
        states.push(Configuration::from_bits(topology, bits.clone()).expect("length matches"));
        return;
    }
    bits[pos] = 0;
    fill(states, bits, pos + 1, left, topology);
    if left > 0 {
        bits[pos] = 1;
        fill(states, bits, pos + 1, left - 1, topology);
        bits[pos] = 0;
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// A mark location together with the rate and direction it fires at.
fn rate_moves(kind: DynamicsKind, topology: Topology) -> Result<Vec<(Location, f64, Option<bool>)>> {
    match kind {
        DynamicsKind::Had | DynamicsKind::Lrep => Ok(topology
            .all_sites()
            .map(|x| (Location::Site(x), 1.0, None))
            .collect()),
        DynamicsKind::Tasep => Ok(topology
            .all_bonds()
            .map(|b| (Location::Bond(b), 1.0, None))
            .collect()),
        DynamicsKind::Asep { left_probability } => {
            let mut out = Vec::new();
            for b in topology.all_bonds() {
                if left_probability > 0.0 {
                    out.push((Location::Bond(b), left_probability, Some(true)));
                }
                if left_probability < 1.0 {
                    out.push((Location::Bond(b), 1.0 - left_probability, Some(false)));
                }
            }
            Ok(out)
        }
        other => Err(Error::UnsupportedKind(format!(
            "{} is not a continuous-time chain",
            other.name()
        ))),
    }
}

/// Dense generator of the kind's dynamics on the given state list.
pub fn generator(kind: DynamicsKind, states: &[Configuration]) -> Result<DMatrix<f64>> {
    let topology = states[0].topology();
    let index: HashMap<&[u8], usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.bits(), i))
        .collect();
    let moves = rate_moves(kind, topology)?;
    let n = states.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (s, state) in states.iter().enumerate() {
        for &(loc, rate, dir) in &moves {
            let mut next = state.clone();
            if apply_at(&mut next, kind, loc, dir)?.is_some() {
                let t = *index
                    .get(next.bits())
                    .expect("dynamics conserve the particle count");
                q[(s, t)] += rate;
                q[(s, s)] -= rate;
            }
        }
    }
    Ok(q)
}

/// A solved chain: states, stationary probabilities, and the solve residual
/// `max_j |(pi Q)_j|`.
#[derive(Debug, Clone)]
pub struct SolvedChain {
    pub states: Vec<Configuration>,
    pub pi: Vec<f64>,
    pub residual: f64,
}

impl SolvedChain {
    pub fn probability_of(&self, state: &Configuration) -> Option<f64> {
        self.states
            .iter()
            .position(|s| s == state)
            .map(|i| self.pi[i])
    }
}

fn check_irreducible(q: &DMatrix<f64>) -> Result<()> {
    let n = q.nrows();
    for transpose in [false, true] {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..n {
                let rate = if transpose { q[(t, s)] } else { q[(s, t)] };
                if s != t && rate > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        let unreached = seen.iter().filter(|&&b| !b).count();
        if unreached > 0 {
            return Err(Error::ReducibleChain {
                unreached,
                total: n,
            });
        }
    }
    Ok(())
}

/// Exact stationary distribution of the kind's dynamics on the fixed-count
/// sector of a ring. Fails honestly when the chain is reducible (as leftward
/// exclusion on a segment is) or the sector exceeds the dense-solver cap.
pub fn stationary(kind: DynamicsKind, topology: Topology, count: usize) -> Result<SolvedChain> {
    let states = enumerate_fixed_count(topology, count)?;
    let q = generator(kind, &states)?;
    check_irreducible(&q)?;
    let n = states.len();
    // pi Q = 0 with sum(pi) = 1: transpose, replace the last equation by the
    // normalization
    let mut a = q.transpose();
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::TopologyMismatch("singular generator system".into()))?;
    let residual = (pi.transpose() * &q).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let pi: Vec<f64> = pi.iter().map(|&p| p.max(0.0)).collect();
    Ok(SolvedChain {
        states,
        pi,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts_and_cap() {
        let t = Topology::ring(5);
        let states = enumerate_fixed_count(t, 2).unwrap();
        assert_eq!(states.len(), 10);
        assert!(states.iter().all(|s| s.particle_count() == 2));
        // choose(20, 10) far exceeds the dense cap
        assert!(matches!(
            enumerate_fixed_count(Topology::ring(20), 10),
            Err(Error::StateSpaceTooLarge { .. })
        ));
        assert!(enumerate_fixed_count(t, 6).is_err());
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let t = Topology::ring(5);
        let states = enumerate_fixed_count(t, 2).unwrap();
        for kind in [
            DynamicsKind::Had,
            DynamicsKind::Tasep,
            DynamicsKind::Lrep,
            DynamicsKind::Asep {
                left_probability: 0.7,
            },
        ] {
            let q = generator(kind, &states).unwrap();
            for s in 0..q.nrows() {
                let sum: f64 = q.row(s).iter().sum();
                assert!(sum.abs() < 1e-14, "{} row {s}: {sum}", kind.name());
            }
        }
    }

    #[test]
    fn ring_sectors_are_uniform_for_all_continuous_kinds() {
        // in-rate equals out-rate state by state on a ring, so each count
        // sector's stationary law is uniform; the solver must find exactly
        // that, with a tiny residual
        let t = Topology::ring(6);
        for kind in [
            DynamicsKind::Had,
            DynamicsKind::Tasep,
            DynamicsKind::Lrep,
            DynamicsKind::Asep {
                left_probability: 0.7,
            },
        ] {
            let solved = stationary(kind, t, 3).unwrap();
            let n = solved.states.len() as f64;
            assert!(solved.residual < 1e-12, "{}", kind.name());
            for &p in &solved.pi {
                assert!((p - 1.0 / n).abs() < 1e-12, "{}: {p}", kind.name());
            }
        }
    }

    #[test]
    fn leftward_exclusion_on_a_segment_is_reducible() {
        let t = Topology::segment(5, 0);
        assert!(matches!(
            stationary(DynamicsKind::Tasep, t, 2),
            Err(Error::ReducibleChain { .. })
        ));
    }

    #[test]
    fn discrete_kinds_are_rejected() {
        let t = Topology::ring(4);
        assert!(stationary(
            DynamicsKind::ParTasep {
                mark_probability: 0.5
            },
            t,
            2
        )
        .is_err());
    }
}
