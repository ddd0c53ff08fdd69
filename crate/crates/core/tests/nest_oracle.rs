// SPDX-License-Identifier: Apache-2.0

use featherloop_core::mapping::enumerate_mapspace;
use featherloop_core::nest::{functional_check, simulate_layer, TraceEvent};
use featherloop_core::workload::derive_output_extents;
use featherloop_core::{
    ArchSpec, Dim, Error, Flexibility, LayerKind, LayerShape, LayoutDescriptor, Mapping, MapspaceConstraint,
    ReorderRegime,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conv(t: &str) -> LayoutDescriptor {
    LayoutDescriptor::parse(t, LayerKind::Conv).unwrap()
}

// Output-stationary oracle written from the window's point of view:
// walk every output pixel and gather its receptive field explicitly.
fn oracle(s: &LayerShape, x: &[i64], w: &[i64]) -> Vec<i64> {
    let cg = s.c / s.groups;
    let mg = s.m / s.groups;
    let cin = s.c;
    let mut out = Vec::new();
    for n in 0..s.n {
        for m in 0..s.m {
            let g = m / mg;
            for p in 0..s.p {
                for q in 0..s.q {
                    let mut acc = 0;
                    for c in 0..cg {
                        for r in 0..s.r {
                            for t in 0..s.s {
                                let h = (p * s.stride + r) as i64 - s.padding as i64;
                                let v = (q * s.stride + t) as i64 - s.padding as i64;
                                if h < 0 || v < 0 || h >= s.h as i64 || v >= s.w as i64 {
                                    continue;
                                }
                                let ch = g * cg + c;
                                let xi = ((n * cin + ch) * s.h + h as u64) * s.w + v as u64;
                                let wi = ((m * cg + c) * s.r + r) * s.s + t;
                                acc += x[xi as usize] * w[wi as usize];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn random_tensors(s: &LayerShape, rng: &mut ChaCha8Rng) -> (Vec<i64>, Vec<i64>) {
    let x = (0..s.input_elements()).map(|_| rng.gen_range(-128..128)).collect();
    let w = (0..s.m * (s.c / s.groups) * s.r * s.s).map(|_| rng.gen_range(-128..128)).collect();
    (x, w)
}

#[test]
fn rows_take_turns_on_the_bus() {
    let s = derive_output_extents(&LayerShape::conv(1, 2, 2, 5, 5, 2, 2)).unwrap();
    let arch = ArchSpec::compact(4, 4);
    let m = Mapping::new(&s, &[Dim::P], vec![(Dim::M, 2), (Dim::C, 2)], vec![(Dim::Q, 4)], vec![(Dim::R, 2), (Dim::S, 2)]);
    assert_eq!(featherloop_core::mapping::spatial_footprint(&m), (4, 4, 2));
    let t = simulate_layer(&s, &m, &conv("HWC_C2W2"), &conv("HWC_C2W2"), &arch).unwrap();
    assert!(t.bus_exclusive());
    assert_eq!(t.steady_utilization, 1.0);
    let injects: Vec<(i64, u64)> = t
        .events
        .iter()
        .filter_map(|e| match *e {
            TraceEvent::Inject { cycle, row, step: 0 } => Some((cycle, row)),
            _ => None,
        })
        .collect();
    assert_eq!(injects, vec![(3, 0), (4, 1), (5, 2), (6, 3)]);
    // In steady state every cycle has exactly one row on the bus.
    let mut cycles: Vec<i64> =
        t.events.iter().filter(|e| matches!(e, TraceEvent::Inject { .. })).map(|e| e.cycle()).collect();
    cycles.sort_unstable();
    assert!(cycles.windows(2).all(|w| w[1] == w[0] + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (x, w) = random_tensors(&s, &mut rng);
    let got = functional_check(&s, &m, &conv("HWC_C2W2"), &conv("HWC_C2W2"), &arch, &x, &w).unwrap();
    assert_eq!(got, oracle(&s, &x, &w));
}

#[test]
fn preload_is_array_height_squared() {
    for ah in [2usize, 4, 8] {
        let arch = ArchSpec::compact(4, ah);
        let s = derive_output_extents(&LayerShape::conv(1, ah as u64, 4, 3, 3, 1, 1)).unwrap();
        let m = Mapping::new(&s, &[Dim::P, Dim::Q], vec![(Dim::C, 4)], vec![(Dim::M, ah as u64)], vec![]);
        let t = simulate_layer(&s, &m, &conv("HWC_C4"), &conv("HWC_C4"), &arch).unwrap();
        assert_eq!(t.schedule.preload, (ah * ah) as u64);
        let first = t.events.iter().find(|e| matches!(e, TraceEvent::StrbRead { .. })).unwrap();
        assert_eq!(first.cycle(), -((ah * ah) as i64));
        assert_eq!(t.total_cycles, t.schedule.preload + t.compute_cycles);
    }
}

#[test]
fn random_layers_match_oracle() {
    let arch = ArchSpec::compact(4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let layouts = ["HWC_C4", "HWC_W4", "CHW_W2H2", "HWC_C2W2"];
    let mut checked = 0;
    for i in 0..100 {
        let mut s = LayerShape::conv(1, rng.gen_range(1..7), rng.gen_range(1..6), rng.gen_range(3..8), rng.gen_range(3..8), 1, 1);
        let k = rng.gen_range(1..4u64);
        s.r = k.min(s.h);
        s.s = k.min(s.w);
        if rng.gen_bool(0.3) {
            s = s.with_stride(2, rng.gen_range(0..2));
        } else if rng.gen_bool(0.3) {
            s = s.with_stride(1, 1);
        }
        if i % 10 == 0 {
            s.m = 4;
            s.c = 4;
            s = s.with_groups(4);
        }
        let s = derive_output_extents(&s).unwrap();
        assert!(s.macs() <= 100_000);
        let maps = enumerate_mapspace(&s, &arch, &MapspaceConstraint::new(Flexibility::ALL), 6, i).unwrap();
        let (x, w) = random_tensors(&s, &mut rng);
        let want = oracle(&s, &x, &w);
        let in_l = conv(layouts[rng.gen_range(0..layouts.len())]);
        let out_l = conv(layouts[rng.gen_range(0..layouts.len())]);
        for m in &maps {
            match functional_check(&s, m, &in_l, &out_l, &arch, &x, &w) {
                Ok(got) => {
                    assert_eq!(got, want, "{m} on {s:?}");
                    checked += 1;
                }
                Err(Error::WritePortOverflow { .. }) => {}
                Err(e) => panic!("{m} on {s:?}: {e}"),
            }
        }
    }
    assert!(checked >= 200, "only {checked} mappings checked");
}

#[test]
fn fixed_layout_rejects_relayout() {
    let s = derive_output_extents(&LayerShape::conv(1, 4, 4, 4, 4, 2, 2)).unwrap();
    let arch = ArchSpec::compact(4, 4);
    let m = Mapping::new(&s, &[Dim::P, Dim::Q], vec![(Dim::C, 4)], vec![(Dim::M, 4)], vec![(Dim::R, 2), (Dim::S, 2)]);
    let x = vec![1; s.input_elements() as usize];
    let w = vec![1; 64];
    let mut fixed = arch.clone();
    fixed.reorder_regime = ReorderRegime::FixedLayout;
    let err = functional_check(&s, &m, &conv("HWC_C4"), &conv("HWC_W4"), &fixed, &x, &w).unwrap_err();
    assert!(matches!(err, Error::RegimeViolation { .. }));
    assert!(functional_check(&s, &m, &conv("HWC_C4"), &conv("HWC_C4"), &fixed, &x, &w).is_ok());
}

#[test]
fn chained_layers_hand_over_the_same_lines() {
    let arch = ArchSpec::compact(4, 4);
    let a = derive_output_extents(&LayerShape::conv(1, 4, 4, 4, 4, 1, 1)).unwrap();
    let b = derive_output_extents(&LayerShape::conv(1, 4, 4, 4, 4, 1, 1)).unwrap();
    let l = conv("HWC_C4");
    let ma = Mapping::new(&a, &[Dim::P, Dim::Q], vec![(Dim::M, 4)], vec![(Dim::C, 4)], vec![]);
    let mb = Mapping::new(&b, &[Dim::P, Dim::Q], vec![(Dim::C, 4)], vec![(Dim::M, 4)], vec![]);
    let ta = simulate_layer(&a, &ma, &l, &l, &arch).unwrap();
    let tb = simulate_layer(&b, &mb, &l, &l, &arch).unwrap();
    let mut written: Vec<(u64, u64)> = ta
        .writes()
        .filter_map(|e| match *e {
            TraceEvent::StabWrite { line, bank, .. } => Some((line, bank)),
            _ => None,
        })
        .collect();
    let mut read: Vec<(u64, u64)> = tb
        .events
        .iter()
        .filter_map(|e| match *e {
            TraceEvent::StabRead { line, bank, .. } => Some((line, bank)),
            _ => None,
        })
        .collect();
    written.sort_unstable();
    written.dedup();
    read.sort_unstable();
    read.dedup();
    assert_eq!(written, read);
}
