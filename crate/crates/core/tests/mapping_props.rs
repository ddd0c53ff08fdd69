// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use featherloop_core::mapping::{enumerate_mapspace, Mapspace};
use featherloop_core::workload::derive_output_extents;
use featherloop_core::{ArchSpec, Dim, Flexibility, LayerShape, Mapping, MapspaceConstraint};
use proptest::prelude::*;

fn shape(m: u64, c: u64, hw: u64, rs: u64) -> LayerShape {
    derive_output_extents(&LayerShape::conv(1, m, c, hw, hw, rs, rs)).unwrap()
}

// Walk the mapped nest the slow way and count how often each MAC is hit.
fn unrolled_counts(s: &LayerShape, m: &Mapping) -> Vec<u32> {
    let ext = s.extents();
    let total: u64 = ext.iter().product();
    let mut hits = vec![0u32; total as usize];
    let f = m.factors();
    for step in 0..m.steps() {
        let o = m.outer_digits(step);
        for col in 0..m.cols_used() {
            let c = m.col_digits(col);
            for row in 0..m.rows_used() {
                let r = m.row_digits(row);
                for l in 0..m.local_len() {
                    let idx = Mapping::index(&f, &o, &c, &r, &m.local_digits(l));
                    if idx.iter().zip(&ext).all(|(i, e)| i < e) {
                        let flat = idx.iter().zip(&ext).fold(0u64, |acc, (i, e)| acc * e + i);
                        hits[flat as usize] += 1;
                    }
                }
            }
        }
    }
    hits
}

#[test]
fn every_sampled_mapping_covers_each_mac_once() {
    let arch = ArchSpec::feather(4, 4);
    for s in [shape(6, 3, 5, 3), shape(4, 8, 4, 1), shape(3, 5, 3, 2)] {
        let maps = enumerate_mapspace(&s, &arch, &MapspaceConstraint::new(Flexibility::ALL), 300, 7).unwrap();
        assert!(maps.len() > 50);
        for m in maps {
            assert!(unrolled_counts(&s, &m).iter().all(|&h| h == 1), "{m}");
        }
    }
}

#[test]
fn sampling_is_deterministic_and_exhaustive_when_budget_allows() {
    let arch = ArchSpec::feather(4, 4);
    let s = shape(4, 4, 3, 2);
    let c = MapspaceConstraint::new(Flexibility::ALL);
    let a = enumerate_mapspace(&s, &arch, &c, 1_000_000, 3).unwrap();
    let b = enumerate_mapspace(&s, &arch, &c, 1_000_000, 3).unwrap();
    assert_eq!(a, b);
    let other = enumerate_mapspace(&s, &arch, &c, 1_000_000, 4).unwrap();
    assert_ne!(a, other);
    let set_a: HashSet<_> = a.iter().collect();
    let set_o: HashSet<_> = other.iter().collect();
    assert_eq!(set_a, set_o);
    assert_eq!(set_a.len(), a.len());
    let space = Mapspace::new(&s, &arch, &c).unwrap();
    assert!(a.len() as u64 <= space.len());
}

fn flex_from_bits(b: u8) -> Flexibility {
    Flexibility { t: b & 1 != 0, o: b & 2 != 0, p: b & 4 != 0, s: b & 8 != 0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mapspace_grows_with_flexibility(
        m in 1u64..6, c in 1u64..6, hw in 2u64..5, rs in 1u64..3,
        small in 0u8..16, extra in 0u8..16,
    ) {
        prop_assume!(rs <= hw);
        let s = shape(m, c, hw, rs);
        let arch = ArchSpec::feather(4, 4);
        let a = flex_from_bits(small);
        let b = flex_from_bits(small | extra);
        let mk = |f| MapspaceConstraint::new(f).with_spatial(&[Dim::C], &[Dim::M]);
        let sa = enumerate_mapspace(&s, &arch, &mk(a), usize::MAX, 1);
        let sb = enumerate_mapspace(&s, &arch, &mk(b), usize::MAX, 1);
        if let Ok(sa) = sa {
            let sb: HashSet<Mapping> = sb.expect("superset space is non-empty").into_iter().collect();
            for m in sa {
                prop_assert!(sb.contains(&m), "{} under {} missing from {}", m, a, b);
            }
        }
    }
}
