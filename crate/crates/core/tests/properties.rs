use std::collections::BTreeSet;

use proptest::prelude::*;

use vdbedt::oracle::{brute_force_edt, compare, Region};
use vdbedt::planner::path_cost;
use vdbedt::scenario::{generate_scenario, GeneratorSpec, Layout};
use vdbedt::{plan_path, Coord, EdtField, Mode, PathQuery64};

const BOX: Region = Region {
    origin: Coord { x: -6, y: -6, z: -6 },
    dims: [13, 13, 13],
};

fn coord() -> impl Strategy<Value = Coord> {
    (-4i32..5, -4i32..5, -4i32..5).prop_map(|(x, y, z)| Coord::new(x, y, z))
}

/// (coordinate, add?) batches, each followed by a transform.
fn batches() -> impl Strategy<Value = Vec<Vec<(Coord, bool)>>> {
    proptest::collection::vec(proptest::collection::vec((coord(), any::<bool>()), 1..12), 1..6)
}

fn replay(batches: &[Vec<(Coord, bool)>], dmax_sq: u32, mode: Mode) -> (EdtField, BTreeSet<Coord>) {
    let mut f = EdtField::new(dmax_sq, mode).unwrap();
    let mut live = BTreeSet::new();
    for batch in batches {
        for &(c, add) in batch {
            if add && !live.contains(&c) && f.set_obstacle(c).unwrap() {
                live.insert(c);
            } else if !add && live.contains(&c) && f.remove_obstacle(c).unwrap() {
                live.remove(&c);
            }
        }
        f.distance_transform();
    }
    (f, live)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn incremental_matches_oracle(b in batches(), dmax in 1u32..5, baseline in any::<bool>()) {
        let mode = if baseline { Mode::Baseline } else { Mode::Optimized };
        let (mut f, live) = replay(&b, dmax * dmax, mode);
        prop_assert!(f.is_quiescent());
        let dense = brute_force_edt(live.iter().copied(), BOX, dmax * dmax).unwrap();
        let report = compare(&mut f, &dense);
        prop_assert!(report.is_clean(), "{:?}", report.mismatches);
    }

    #[test]
    fn modes_agree_on_distances(b in batches(), dmax in 1u32..5) {
        let (mut o, _) = replay(&b, dmax * dmax, Mode::Optimized);
        let (mut s, _) = replay(&b, dmax * dmax, Mode::Baseline);
        for c in BOX.cells() {
            prop_assert_eq!(o.record(c).unwrap().dist, s.record(c).unwrap().dist);
        }
    }

    #[test]
    fn insertion_order_is_irrelevant(set in proptest::collection::btree_set(coord(), 1..20), dmax in 1u32..5) {
        let forward: Vec<_> = set.iter().map(|&c| (c, true)).collect();
        let backward: Vec<_> = forward.iter().rev().copied().collect();
        let (mut a, _) = replay(&[forward], dmax * dmax, Mode::Optimized);
        let (mut b, _) = replay(&[backward], dmax * dmax, Mode::Optimized);
        for c in BOX.cells() {
            prop_assert_eq!(a.record(c).unwrap().dist, b.record(c).unwrap().dist);
        }
    }

    #[test]
    fn global_equals_incremental(b in batches(), dmax in 1u32..5) {
        let (mut inc, live) = replay(&b, dmax * dmax, Mode::Optimized);
        let mut glob = EdtField::new(dmax * dmax, Mode::Optimized).unwrap();
        glob.global_transform(live.iter().copied()).unwrap();
        for c in BOX.cells() {
            prop_assert_eq!(inc.record(c).unwrap().dist, glob.record(c).unwrap().dist);
        }
    }

    #[test]
    fn stored_distances_are_truncated(b in batches(), dmax in 1u32..5) {
        let (mut f, live) = replay(&b, dmax * dmax, Mode::Optimized);
        for c in BOX.cells() {
            let r = f.record(c).unwrap();
            prop_assert!(r.dist <= dmax * dmax);
            prop_assert_eq!(r.dist == 0, live.contains(&c));
        }
    }

    #[test]
    fn oracle_is_pure(set in proptest::collection::btree_set(coord(), 0..20), dmax_sq in 1u32..30) {
        let a = brute_force_edt(set.iter().copied(), BOX, dmax_sq).unwrap();
        let b = brute_force_edt(set.iter().rev().copied(), BOX, dmax_sq).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        prop_assert!(a.values.iter().all(|&v| v <= dmax_sq));
    }

    /// A far obstacle pushes the oracle onto its wide-integer path without
    /// changing any truncated value.
    #[test]
    fn oracle_paths_agree(set in proptest::collection::btree_set(coord(), 1..20), dmax_sq in 1u32..30) {
        let narrow = brute_force_edt(set.iter().copied(), BOX, dmax_sq).unwrap();
        let far = set.iter().copied().chain([Coord::new(1 << 20, -(1 << 20), 1 << 20)]);
        let wide = brute_force_edt(far, BOX, dmax_sq).unwrap();
        prop_assert_eq!(narrow.values, wide.values);
    }

    /// Lowering alpha never buys a shorter path at the price of clearance.
    #[test]
    fn alpha_trades_length_for_clearance(
        pillars in proptest::collection::btree_set((2i32..14, 1i32..6), 0..10),
        a in 0.05f64..1.0,
        b in 0.05f64..1.0,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let region = Region::new(Coord::new(0, 0, 0), [16, 7, 1]);
        let mut f = EdtField::new(9, Mode::Optimized).unwrap();
        for x in 0..16 {
            f.set_obstacle(Coord::new(x, 0, 0)).unwrap();
            f.set_obstacle(Coord::new(x, 6, 0)).unwrap();
        }
        for &(x, y) in &pillars {
            f.set_obstacle(Coord::new(x, y, 0)).unwrap();
        }
        f.distance_transform();
        let (s, g) = (Coord::new(0, 3, 0), Coord::new(15, 3, 0));
        prop_assume!(!f.is_obstacle(s) && !f.is_obstacle(g));
        let p_lo = plan_path(&f, &PathQuery64::new(s, g, lo, region));
        let p_hi = plan_path(&f, &PathQuery64::new(s, g, hi, region));
        match (p_lo, p_hi) {
            (Ok(p_lo), Ok(p_hi)) => {
                prop_assert!(p_lo.clearance_cost <= p_hi.clearance_cost + 1e-9);
                prop_assert!(p_lo.length_cost + 1e-9 >= p_hi.length_cost);
                // the returned costs are those of the returned cells
                let again = path_cost(&f, &p_lo.cells, lo);
                prop_assert!((again.total_cost - p_lo.total_cost).abs() < 1e-9);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "reachability must not depend on alpha"),
        }
    }
}

fn mean_nearest_gap(obstacles: &[Coord]) -> f64 {
    let total: f64 = obstacles
        .iter()
        .map(|a| {
            obstacles
                .iter()
                .filter(|b| *b != a)
                .map(|b| (((a.x - b.x).pow(2) + (a.y - b.y).pow(2) + (a.z - b.z).pow(2)) as f64).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / obstacles.len() as f64
}

#[test]
fn clustered_layout_is_tighter_than_uniform() {
    let adds = |layout| {
        let spec = GeneratorSpec::new(64, 120, 0.5, 1, 3).layout(layout);
        let s = generate_scenario(&spec).unwrap();
        s.events.iter().filter_map(|e| match e {
            vdbedt::scenario::Event::Add(c) => Some(*c),
            _ => None,
        }).collect::<Vec<_>>()
    };
    let uniform = mean_nearest_gap(&adds(Layout::Uniform));
    let clustered = mean_nearest_gap(&adds(Layout::Clustered { clusters: 3, radius: 5 }));
    assert!(clustered * 2.0 < uniform, "clustered {clustered} uniform {uniform}");
}
