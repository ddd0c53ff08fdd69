// SPDX-License-Identifier: Apache-2.0

use featherloop_core::birrd::{exhaustive, reverse_bits, route};
use featherloop_core::{BirrdTopology, ReductionSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

// Straight transcription of the inter-stage connectivity pseudocode, kept
// apart from the library version on purpose.
fn oracle_wiring(aw: usize) -> Vec<Vec<usize>> {
    let log = (aw as f64).log2().round() as usize;
    let stages = if aw == 4 { 3 } else { 2 * log };
    let mut out = Vec::new();
    for i in 0..stages {
        let range = *[log, 2 + i, 2 * log - i].iter().min().unwrap();
        let mut row = Vec::new();
        for j in 0..aw {
            let mut rev = 0;
            for b in 0..range {
                if j & (1 << b) != 0 {
                    rev |= 1 << (range - 1 - b);
                }
            }
            row.push((j & !((1 << range) - 1)) | rev);
        }
        out.push(row);
    }
    out
}

fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![vec![]];
    };
    let mut out = Vec::new();
    for p in set_partitions(rest) {
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k].insert(0, first);
            out.push(q);
        }
        let mut q = p.clone();
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

fn injections(k: usize, n: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for mut tail in injections(k - 1, n) {
        for o in 0..n {
            if !tail.contains(&o) {
                let mut t = tail.clone();
                t.push(o);
                out.push(t);
            }
        }
        tail.clear();
    }
    out
}

fn sound(spec: &ReductionSpec, topo: &BirrdTopology, rng: &mut ChaCha8Rng, trials: usize) {
    let prog = route(spec, topo).unwrap_or_else(|e| panic!("{e}"));
    for _ in 0..trials {
        let inputs: Vec<i64> = (0..topo.aw).map(|_| rng.gen_range(-1000..1000)).collect();
        let out = topo.simulate(&prog, &inputs);
        assert!(spec.check(&inputs, &out), "{spec:?}\n{prog}");
    }
}

#[test]
fn wiring_matches_oracle_and_permutes() {
    for aw in [4, 8, 16, 32] {
        let topo = BirrdTopology::new(aw).unwrap();
        assert_eq!(topo.wiring, oracle_wiring(aw), "AW={aw}");
        assert_eq!(topo.switches_per_stage(), aw / 2);
        for row in &topo.wiring {
            let mut sorted = row.clone();
            sorted.sort();
            assert_eq!(sorted, (0..aw).collect::<Vec<_>>());
        }
    }
    assert_eq!(reverse_bits(6, 3), 3);
}

#[test]
fn aw4_every_partition_and_placement_routes() {
    let topo = BirrdTopology::new(4).unwrap();
    let parts = set_partitions(&[0, 1, 2, 3]);
    assert_eq!(parts.len(), 15);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut specs = 0;
    for groups in parts {
        for placement in injections(groups.len(), 4) {
            let spec = ReductionSpec::new(4, groups.clone(), placement).unwrap();
            assert!(exhaustive(&spec, &topo).is_some(), "no program at all for {spec:?}");
            sound(&spec, &topo, &mut rng, 20);
            specs += 1;
        }
    }
    assert_eq!(specs, 4 + 7 * 12 + 6 * 24 + 24);
}

#[test]
fn identity_passthrough_is_all_pass_or_equivalent() {
    let topo = BirrdTopology::new(4).unwrap();
    let pairs: Vec<(usize, usize)> = (0..4).map(|i| (i, i)).collect();
    let spec = ReductionSpec::new(4, vec![], vec![]).unwrap().with_passthrough(&pairs).unwrap();
    let prog = route(&spec, &topo).unwrap();
    assert_eq!(topo.simulate(&prog, &[5, 6, 7, 8]), vec![5, 6, 7, 8]);
    assert_eq!(prog.adds(), 0);
}

#[test]
fn unicast_pairs_route_at_aw4_and_aw8() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for aw in [4, 8] {
        let topo = BirrdTopology::new(aw).unwrap();
        for i in 0..aw {
            for o in 0..aw {
                let spec = ReductionSpec::new(aw, vec![vec![i]], vec![o]).unwrap();
                sound(&spec, &topo, &mut rng, 3);
            }
        }
    }
}

fn random_spec(aw: usize, rng: &mut ChaCha8Rng) -> ReductionSpec {
    let mut inputs: Vec<usize> = (0..aw).collect();
    inputs.shuffle(rng);
    let used = rng.gen_range(1..=aw);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &inputs[..used] {
        if groups.is_empty() || rng.gen_bool(0.4) {
            groups.push(vec![i]);
        } else {
            let k = rng.gen_range(0..groups.len());
            groups[k].push(i);
        }
    }
    let mut outs: Vec<usize> = (0..aw).collect();
    outs.shuffle(rng);
    let placement = outs[..groups.len()].to_vec();
    ReductionSpec::new(aw, groups, placement).unwrap()
}

// Exact reachability over symbolic port contents (group, accumulated
// inputs). Exponential, fine at AW = 8.
fn exact_routable(topo: &BirrdTopology, spec: &ReductionSpec) -> bool {
    const NONE: (usize, u64) = (usize::MAX, 0);
    let aw = topo.aw;
    let mut init = vec![NONE; aw];
    for (g, m) in spec.groups.iter().enumerate() {
        for &i in m {
            init[i] = (g, 1 << i);
        }
    }
    let add = |a: (usize, u64), b: (usize, u64)| {
        (a.0 == b.0 && a.0 != usize::MAX && a.1 & b.1 == 0).then_some((a.0, a.1 | b.1))
    };
    let mut states: HashSet<Vec<(usize, u64)>> = HashSet::from([init]);
    for i in 0..topo.stages {
        let mut next = HashSet::new();
        for s in &states {
            'word: for w in 0..4u64.pow((aw / 2) as u32) {
                let mut out = vec![NONE; aw];
                for k in 0..aw / 2 {
                    let (l, r) = (s[2 * k], s[2 * k + 1]);
                    let (a, b) = match (w >> (2 * k)) & 3 {
                        0 => (l, r),
                        1 => (r, l),
                        2 => match add(l, r) {
                            Some(sum) => (sum, r),
                            None => continue 'word,
                        },
                        _ => match add(l, r) {
                            Some(sum) => (l, sum),
                            None => continue 'word,
                        },
                    };
                    out[topo.wiring[i][2 * k]] = a;
                    out[topo.wiring[i][2 * k + 1]] = b;
                }
                next.insert(out);
            }
        }
        states = next;
    }
    let full: Vec<u64> = spec.groups.iter().map(|m| m.iter().fold(0, |a, &i| a | 1 << i)).collect();
    states.iter().any(|s| spec.placement.iter().enumerate().all(|(g, &p)| s[p] == (g, full[g])))
}

#[test]
fn aw8_router_is_complete_on_random_specs() {
    // A handful of random specs have no configuration at all under this
    // wiring; the router must find every other one.
    let topo = BirrdTopology::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1);
    let mut unroutable = 0;
    for _ in 0..1000 {
        let spec = random_spec(8, &mut rng);
        match route(&spec, &topo) {
            Ok(_) => sound(&spec, &topo, &mut rng, 2),
            Err(_) => {
                assert!(!exact_routable(&topo, &spec), "router missed {spec:?}");
                unroutable += 1;
            }
        }
    }
    assert!(unroutable <= 10, "{unroutable} unroutable specs");
}

#[test]
fn pure_reorder_moves_without_adding() {
    let topo = BirrdTopology::new(8).unwrap();
    let pairs: Vec<(usize, usize)> = (0..8).map(|i| (i, (i * 3 + 1) % 8)).collect();
    let spec = ReductionSpec::new(8, vec![], vec![]).unwrap().with_passthrough(&pairs).unwrap();
    let prog = route(&spec, &topo).unwrap();
    let out = topo.simulate(&prog, &[10, 11, 12, 13, 14, 15, 16, 17]);
    for (i, o) in pairs {
        assert_eq!(out[o], 10 + i as i64);
    }
}

#[test]
fn soundness_on_many_vectors() {
    let topo = BirrdTopology::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let spec = ReductionSpec::new(8, vec![vec![0, 1, 2], vec![3, 7], vec![4, 5, 6]], vec![6, 1, 2]).unwrap();
    sound(&spec, &topo, &mut rng, 1000);
}

#[test]
fn aw16_contiguous_groups_route() {
    // The shape the PE array produces: contiguous column groups reduced and
    // scattered to arbitrary banks.
    let topo = BirrdTopology::new(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for size in [1, 2, 4, 8, 16] {
        for _ in 0..20 {
            let groups: Vec<Vec<usize>> = (0..16 / size).map(|g| (g * size..(g + 1) * size).collect()).collect();
            let mut outs: Vec<usize> = (0..16).collect();
            outs.shuffle(&mut rng);
            let spec = ReductionSpec::new(16, groups.clone(), outs[..groups.len()].to_vec()).unwrap();
            sound(&spec, &topo, &mut rng, 3);
        }
    }
}
