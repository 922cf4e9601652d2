//! Optimal synthesis over `{±X, ±Y, ±Z}` π/2 rotations on each qubit and G.
//!
//! One Dijkstra pass over the Cayley graph from the identity. Paths compare
//! by (entangling gates, physical pulses, length) and then by their label
//! sequence, which is a valid path order because all three counts are
//! additive and equal-cost paths have equal length.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{enumerate_group, TwoQubitClifford, GROUP_ORDER};
use crate::harness::circuit::{Circuit, GateKind, GateLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Time-ordered labels.
    pub circuit: Circuit,
    pub entangling: u32,
    pub physical: u32,
    pub software_z: u32,
}

/// The 13 generators in label order.
pub fn generators() -> &'static [GateLabel] {
    static CELL: OnceLock<Vec<GateLabel>> = OnceLock::new();
    CELL.get_or_init(|| {
        use GateLabel::*;
        let mut g: Vec<GateLabel> = [Xp, Xm, Yp, Ym, Zp, Zm].iter().flat_map(|f| [f(1), f(2)]).collect();
        g.push(Gzz);
        g.sort();
        g
    })
}

fn cost(g: &GateLabel) -> (u32, u32) {
    match g.kind() {
        GateKind::Entangling => (1, 0),
        GateKind::Physical | GateKind::PiPulse => (0, 1),
        GateKind::SoftwareZ => (0, 0),
    }
}

fn all_decompositions() -> &'static Vec<Decomposition> {
    static CELL: OnceLock<Vec<Decomposition>> = OnceLock::new();
    CELL.get_or_init(|| {
        let gens = generators();
        let tabs: Vec<TwoQubitClifford> =
            gens.iter().map(|g| TwoQubitClifford::from_label(g).expect("generator is Clifford")).collect();
        let group = enumerate_group();
        let mut best: Vec<Option<Vec<u8>>> = vec![None; GROUP_ORDER];
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u32, 0u32, 0u32, Vec::<u8>::new(), TwoQubitClifford::identity().index())));
        while let Some(Reverse((ent, phys, len, seq, idx))) = heap.pop() {
            if best[idx].is_some() {
                continue;
            }
            best[idx] = Some(seq.clone());
            let here = group[idx];
            for (k, t) in tabs.iter().enumerate() {
                let next = t.compose(&here).index();
                if best[next].is_none() {
                    let (de, dp) = cost(&gens[k]);
                    let mut s = seq.clone();
                    s.push(k as u8);
                    heap.push(Reverse((ent + de, phys + dp, len + 1, s, next)));
                }
            }
        }
        best.into_iter()
            .map(|seq| {
                let labels: Vec<GateLabel> = seq.expect("group is connected").iter().map(|&k| gens[k as usize]).collect();
                let mut d = Decomposition { circuit: Circuit::new(Vec::new()), entangling: 0, physical: 0, software_z: 0 };
                for g in &labels {
                    match g.kind() {
                        GateKind::Entangling => d.entangling += 1,
                        GateKind::SoftwareZ => d.software_z += 1,
                        _ => d.physical += 1,
                    }
                }
                d.circuit = Circuit::new(labels);
                d
            })
            .collect()
    })
}

pub fn decompose(c: &TwoQubitClifford) -> &'static Decomposition {
    &all_decompositions()[c.index()]
}

/// Group averages of (entangling, physical π/2) counts.
pub fn average_counts() -> (f64, f64) {
    let all = all_decompositions();
    let n = all.len() as f64;
    let ent = all.iter().map(|d| d.entangling as f64).sum::<f64>() / n;
    let phys = all.iter().map(|d| d.physical as f64).sum::<f64>() / n;
    (ent, phys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_exact_on_the_whole_group() {
        assert!(decompose(&TwoQubitClifford::identity()).circuit.is_empty());
        for c in enumerate_group() {
            let d = decompose(c);
            assert!(d.entangling <= 3);
            assert_eq!(TwoQubitClifford::from_circuit(&d.circuit).as_ref(), Some(c));
        }
    }

    #[test]
    fn entangling_class_sizes() {
        let mut sizes = [0usize; 4];
        for c in enumerate_group() {
            sizes[decompose(c).entangling as usize] += 1;
        }
        // Exhaustive counting by double cosets of the local group.
        assert_eq!(sizes, [576, 5184, 5184, 576]);
        let (ent, phys) = average_counts();
        assert_eq!(ent, 1.5);
        println!("average physical single-qubit pulses: {phys:.4}");
    }

    #[test]
    fn class_sizes_invariant_under_local_multiplication() {
        let locals: Vec<TwoQubitClifford> =
            enumerate_group().iter().filter(|c| decompose(c).entangling == 0).copied().collect();
        assert_eq!(locals.len(), 576);
        for s in locals.iter().step_by(37) {
            for c in enumerate_group() {
                let e = decompose(c).entangling;
                assert_eq!(decompose(&s.compose(c)).entangling, e);
                assert_eq!(decompose(&c.compose(s)).entangling, e);
            }
        }
    }
}
