//! Acceptance suite. Every criterion prints one `criterion N: PASS|FAIL`
//! line to stdout (bypassing the test harness capture), then asserts.
//!
//! The criteria share one lock so the timing measurements of criterion 5
//! never compete with other criteria for the CPU.

use std::collections::{BTreeSet, HashMap};
use std::io::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use vdbedt::bench::{self, AblationAxis, AblationSettings};
use vdbedt::oracle::{brute_force_edt, DenseField, Region};
use vdbedt::planner::{step_length, turn_angle};
use vdbedt::scenario::{self, Event, GeneratorSpec, Layout, Scenario, ScenarioHeader, SliceFormat, SplitMix64};
use vdbedt::{plan_path, Coord, EdtField, Mode, PathQuery64};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict} ({detail})");
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Draws the parameters of random scenario `i` for criteria 1 and 2.
/// Every tenth scenario uses the largest region and obstacle count.
fn random_spec(i: u64) -> GeneratorSpec {
    let mut rng = SplitMix64::new(0xACCE_97A9_CE00 + i);
    let dmax = 1 + rng.below(8) as u32;
    let max_range = 48 - 2 * dmax;
    let (range, n) = if i.is_multiple_of(10) {
        (max_range, 500.min(max_range.pow(3) / 3))
    } else {
        let range = 4 + rng.below((max_range - 3) as u64) as u32;
        let cap = 500.min(range.pow(3) / 3);
        (range, 1 + rng.below(cap as u64) as u32)
    };
    GeneratorSpec::new(range, n, 0.5, 5, i).dmax_cells(dmax).with_checks()
}

#[test]
fn criterion_1_and_2_oracle_and_mode_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (mut checks, mut distance, mut index, mut disagree) = (0, 0, 0, 0);
    let mut index_differences = 0usize;
    let mut largest = (0u64, 0u32);
    for i in 0..200 {
        let spec = random_spec(i);
        let s = scenario::generate_scenario(&spec).unwrap();
        largest = largest.max((s.header.region.volume(), spec.n_obstacles));
        let r = bench::verify_scenario(&s, |_| {}).unwrap();
        checks += r.checks;
        for list in [&r.optimized_mismatches, &r.baseline_mismatches] {
            for m in list {
                match m.kind {
                    vdbedt::oracle::MismatchKind::Distance { .. } => distance += 1,
                    vdbedt::oracle::MismatchKind::Index { .. } => index += 1,
                }
            }
        }
        disagree += r.mode_disagreements.len();
        index_differences += r.index_differences;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass1 = distance == 0 && index == 0 && secs <= 300.0;
    report(
        1,
        pass1,
        &format!(
            "200 scenarios, largest region {} cells with {} obstacles, {checks} checks, \
             {distance} distance mismatches, {index} index violations, {secs:.1} s",
            largest.0, largest.1
        ),
    );
    let pass2 = disagree == 0;
    report(
        2,
        pass2,
        &format!(
            "{disagree} cells with differing distances between modes; \
             {index_differences} checked cells index different but equidistant obstacles"
        ),
    );
    assert!(pass1 && pass2);
}

#[test]
fn criterion_3_scheduling_benefit() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut worse = Vec::new();
    let mut reductions = Vec::new();
    let (mut ms_opt, mut ms_base) = (0.0, 0.0);
    let (mut nq_opt, mut nq_base) = (0, 0);
    for seed in 0..50 {
        let spec = GeneratorSpec::new(64, 60, 0.5, 5, seed)
            .dmax_cells(6)
            .layout(Layout::Clustered { clusters: 3, radius: 5 });
        let s = scenario::generate_scenario(&spec).unwrap();
        let o = bench::run_scenario(&s, Mode::Optimized).unwrap();
        let b = bench::run_scenario(&s, Mode::Baseline).unwrap();
        let (po, pb) = (o.totals().processed(), b.totals().processed());
        if po > pb {
            worse.push(seed);
        }
        reductions.push(1.0 - po as f64 / pb as f64);
        ms_opt += o.total_ms();
        ms_base += b.total_ms();
        nq_opt += o.totals().neighbor_queries;
        nq_base += b.totals().neighbor_queries;
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len() as f64;
    let moving = scenario::load_scenario(data("moving_obstacle.scn")).unwrap();
    let v = bench::verify_scenario(&moving, |_| {}).unwrap();
    let (fo, fb) = (v.optimized.neighbor_queries, v.baseline.neighbor_queries);
    let pass = worse.is_empty() && mean >= 0.10 && v.passed() && fo < fb;
    report(
        3,
        pass,
        &format!(
            "optimized above baseline on {} of 50 clustered scenarios, mean processed reduction {:.1}%, \
             neighbor queries {nq_opt} vs {nq_base}, wall time ratio baseline/optimized {:.2} (reported only); \
             moving-obstacle scenario neighbor queries {fo} vs {fb}",
            worse.len(),
            100.0 * mean,
            ms_base / ms_opt
        ),
    );
    assert!(pass, "worse on seeds {worse:?}");
}

#[test]
fn criterion_4_memory_sparsity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    // range 108 plus a 10-cell margin on each side gives a 128³ region
    let spec = GeneratorSpec::new(108, 500, 0.5, 2, 4).dmax_cells(10).layout(Layout::Plane);
    let s = scenario::generate_scenario(&spec).unwrap();
    assert_eq!(s.header.region.dims, [128, 128, 128]);
    let run = bench::run_scenario(&s, Mode::Optimized).unwrap();
    let stats = run.field.stats();
    let dense = bench::dense_equivalent_bytes(&s.header.region);
    let ratio = stats.estimated_bytes as f64 / dense as f64;
    let pass = ratio <= 0.5;
    report(
        4,
        pass,
        &format!(
            "plane scenario uses {} of {dense} dense-equivalent bytes ({:.1}%), {} leaves",
            stats.estimated_bytes,
            100.0 * ratio,
            stats.leaf_count()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_ablation_trends() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let settings = AblationSettings::default();
    assert!(settings.repeats >= 10);
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for axis in [AblationAxis::Range, AblationAxis::Threshold] {
        let rows = bench::run_ablation(axis, &settings).unwrap();
        for series in ["optimized", "baseline"] {
            let means: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.series == series)
                .map(|r| (r.value, r.mean_ms))
                .collect();
            if !means.windows(2).all(|w| w[1].1 > w[0].1) {
                failures.push(format!("{axis}/{series}"));
            }
            let shown: Vec<String> = means.iter().map(|(v, m)| format!("{v}:{m:.0}ms")).collect();
            detail.push(format!("{axis} {series} [{}]", shown.join(" ")));
        }
        let speedups: Vec<String> = bench::speedups(&rows, "optimized", "baseline")
            .iter()
            .map(|(v, s)| format!("{v}:{s:.2}x"))
            .collect();
        detail.push(format!("{axis} acceleration [{}]", speedups.join(" ")));
        let memory: Vec<String> = rows
            .iter()
            .filter(|r| r.series == "optimized")
            .map(|r| format!("{}:{:.0}%", r.value, 100.0 * r.mean_bytes / r.dense_bytes as f64))
            .collect();
        detail.push(format!("{axis} memory vs dense [{}]", memory.join(" ")));
    }
    let pass = failures.is_empty();
    report(5, pass, &format!("{} repeats; {}", settings.repeats, detail.join("; ")));
    assert!(pass, "not strictly increasing: {failures:?}");
}

#[test]
fn criterion_6_global_vs_incremental() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gvi.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_vdbedt"))
        .args(["ablate", "--axis", "global-vs-incremental", "--repeats", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (c_value, c_series, c_ms, c_raised) = (col("value"), col("series"), col("mean_ms"), col("mean_raised"));
    let mut curves: HashMap<String, Vec<(f64, f64, f64)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        curves.entry(rec[c_series].to_string()).or_default().push((
            rec[c_value].parse().unwrap(),
            rec[c_ms].parse().unwrap(),
            rec[c_raised].parse().unwrap(),
        ));
    }
    let ratios = [0.1, 0.25, 0.5];
    let has = |s: &str| curves.get(s).is_some_and(|c| ratios.iter().all(|r| c.iter().any(|p| p.0 == *r)));
    let global_raised_zero = curves.get("global").is_some_and(|c| c.iter().all(|p| p.2 == 0.0));
    let crossover = ratios
        .iter()
        .find(|&&r| {
            let at = |s: &str| curves[s].iter().find(|p| p.0 == r).unwrap().1;
            has("global") && has("incremental") && at("global") < at("incremental")
        })
        .map_or("none up to 0.5".to_string(), |r| format!("global faster from ratio {r}"));
    let pass = status.success() && has("incremental") && has("global") && global_raised_zero;
    report(
        6,
        pass,
        &format!("both curves emitted: {}, global raised all zero: {global_raised_zero}, crossover (reported): {crossover}", has("incremental") && has("global")),
    );
    assert!(pass);
}

/// Independent optimum of the path objective by dynamic programming over
/// walks: `best[k]` holds the cheapest walk of at most `k` steps ending in
/// each state, iterated until no state improves. Clearances come from the
/// brute-force oracle.
fn exhaustive_optimum(dense: &DenseField, start: Coord, goal: Coord, alpha: f64, theta: Option<f64>) -> Option<f64> {
    let free: Vec<Coord> = dense.region.cells().filter(|&c| dense.value(c) != Some(0)).collect();
    let dmax = (dense.dmax_sq as f64).sqrt();
    let pen = |c: Coord| (1.0 - alpha) * (dmax - (dense.value(c).unwrap() as f64).sqrt()).max(0.0);
    let dirs: Vec<(i32, i32, i32)> = (-1..=1)
        .flat_map(|z| (-1..=1).flat_map(move |y| (-1..=1).map(move |x| (x, y, z))))
        .filter(|&d| d != (0, 0, 0))
        .collect();
    // state: (cell, index of incoming direction or 26 for none)
    let mut best: HashMap<(Coord, usize), f64> = HashMap::new();
    best.insert((start, 26), pen(start));
    let bound = free.len() * 27 + 1;
    for _ in 0..bound {
        let mut changed = false;
        let snapshot: Vec<_> = best.iter().map(|(k, v)| (*k, *v)).collect();
        for ((c, din), cost) in snapshot {
            for (i, &d) in dirs.iter().enumerate() {
                if let (Some(t), true) = (theta, din != 26) {
                    if turn_angle::<f64>(dirs[din], d) >= t {
                        continue;
                    }
                }
                let n = c.offset(d.0, d.1, d.2);
                if !dense.region.contains(n) || dense.value(n) == Some(0) {
                    continue;
                }
                let key = (n, if theta.is_some() { i } else { 26 });
                let nc = cost + alpha * step_length::<f64>(d) + pen(n);
                if best.get(&key).is_none_or(|&b| nc < b - 1e-12) {
                    best.insert(key, nc);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    best.iter().filter(|((c, _), _)| *c == goal).map(|(_, v)| *v).reduce(f64::min)
}

fn build_field(obstacles: &BTreeSet<Coord>, dmax_sq: u32) -> EdtField {
    let mut f = EdtField::new(dmax_sq, Mode::Optimized).unwrap();
    for &o in obstacles {
        f.set_obstacle(o).unwrap();
    }
    f.distance_transform();
    f
}

#[test]
fn criterion_7_planner() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    // corridor: α = 1 hugs the pillar, α = 0.5 keeps away from it
    let (header, obstacles): (ScenarioHeader, Vec<Coord>) = scenario::load_obstacle_map(data("corridor.map")).unwrap();
    let field = build_field(&obstacles.iter().copied().collect(), header.dmax_sq());
    let (s, g) = (Coord::new(1, 4, 0), Coord::new(30, 4, 0));
    let short = plan_path(&field, &PathQuery64::new(s, g, 1.0, header.region)).unwrap();
    let safe = plan_path(&field, &PathQuery64::new(s, g, 0.5, header.region)).unwrap();
    let (c_short, c_safe) = (short.min_clearance(&field), safe.min_clearance(&field));
    let corridor_ok = c_safe > c_short;

    // fixtures up to 8³ against the exhaustive optimum
    let mut fixtures = Vec::new();
    for (i, dims) in [[8, 8, 8], [8, 8, 1], [6, 5, 2], [4, 4, 4], [3, 3, 3], [7, 3, 1]].into_iter().enumerate() {
        let region = Region::new(Coord::new(0, 0, 0), dims);
        let mut rng = SplitMix64::new(700 + i as u64);
        let cells: Vec<Coord> = region.cells().collect();
        let (start, goal) = (cells[0], *cells.last().unwrap());
        let obstacles: BTreeSet<Coord> = cells
            .iter()
            .copied()
            .filter(|&c| c != start && c != goal && rng.below(100) < 22)
            .collect();
        for (alpha, theta) in [(1.0, None), (0.5, None), (0.2, None), (0.5, Some(2.0)), (0.8, Some(1.6))] {
            // the turn-bounded search enlarges the state space; keep it to the small maps
            if theta.is_some() && region.volume() > 64 {
                continue;
            }
            fixtures.push((region, obstacles.clone(), start, goal, alpha, theta));
        }
    }
    let mut optimum_failures = Vec::new();
    for (k, (region, obstacles, start, goal, alpha, theta)) in fixtures.iter().enumerate() {
        let dmax_sq = 9;
        let field = build_field(obstacles, dmax_sq);
        let dense = brute_force_edt(obstacles.iter().copied(), *region, dmax_sq).unwrap();
        let mut q = PathQuery64::new(*start, *goal, *alpha, *region);
        q.theta = *theta;
        let got = plan_path(&field, &q).ok().map(|p| p.total_cost);
        let want = exhaustive_optimum(&dense, *start, *goal, *alpha, *theta);
        let same = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            (None, None) => true,
            _ => false,
        };
        if !same {
            optimum_failures.push((k, got, want));
        }
    }
    let pass = corridor_ok && optimum_failures.is_empty();
    report(
        7,
        pass,
        &format!(
            "corridor min clearance alpha=0.5 {c_safe:.3} vs alpha=1 {c_short:.3}; \
             {} of {} fixture queries match the exhaustive optimum",
            fixtures.len() - optimum_failures.len(),
            fixtures.len()
        ),
    );
    assert!(pass, "{optimum_failures:?}");
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    (
        -50i32..50,
        -50i32..50,
        -50i32..50,
        1u32..40,
        1u32..40,
        1u32..40,
        1u32..200,
        any::<u64>(),
        prop_oneof![Just(0.05), Just(0.2), Just(0.25), Just(1.0), Just(0.1 + 0.2)],
    )
        .prop_flat_map(|(ox, oy, oz, dx, dy, dz, dmax, seed, res)| {
            let region = Region::new(Coord::new(ox, oy, oz), [dx, dy, dz]);
            let coord = (ox..ox + dx as i32, oy..oy + dy as i32, oz..oz + dz as i32)
                .prop_map(|(x, y, z)| Coord::new(x, y, z));
            let event = prop_oneof![
                coord.clone().prop_map(Event::Add),
                coord.prop_map(Event::Remove),
                Just(Event::Transform),
                Just(Event::GlobalTransform),
                Just(Event::Check),
            ];
            proptest::collection::vec(event, 0..60).prop_map(move |events| Scenario {
                header: ScenarioHeader {
                    resolution: res,
                    dmax_cells: dmax,
                    seed,
                    region,
                },
                events,
            })
        })
}

#[test]
fn criterion_8_format_stability() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.scn");
    let mut runner = TestRunner::new(Config::with_cases(1000));
    let scenarios = runner.run(&arb_scenario(), |s| {
        scenario::save_scenario(&s, &path).unwrap();
        let back = scenario::load_scenario(&path).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_text(), s.to_text());
        Ok(())
    });

    // slices: CSV parses back to the stored values and PGM bytes follow the
    // documented header and rounding
    let mut runner = TestRunner::new(Config::with_cases(1000));
    let slices = runner.run(
        &(
            proptest::collection::btree_set((0i32..12, 0i32..10, 0i32..3).prop_map(|(x, y, z)| Coord::new(x, y, z)), 0..8),
            1u32..30,
            0i32..3,
        ),
        |(obstacles, dmax_sq, z)| {
            let mut field = build_field(&obstacles, dmax_sq);
            let region = Region::new(Coord::new(0, 0, 0), [12, 10, 3]);
            let rows = scenario::slice_values(&mut field, &region, z).unwrap();
            let csv = String::from_utf8(scenario::encode_slice(&rows, dmax_sq, SliceFormat::Csv)).unwrap();
            let parsed: Vec<Vec<u32>> = csv
                .lines()
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect();
            prop_assert_eq!(&parsed, &rows);
            for (y, row) in rows.iter().enumerate() {
                for (x, &v) in row.iter().enumerate() {
                    prop_assert_eq!(v, field.query_distance(Coord::new(x as i32, y as i32, z)).unwrap().dist_sq);
                }
            }
            let pgm = scenario::encode_slice(&rows, dmax_sq, SliceFormat::Pgm);
            let mut want = b"P5\n12 10\n255\n".to_vec();
            want.extend(rows.iter().flatten().map(|&v| (255.0 * v as f64 / dmax_sq as f64).round() as u8));
            prop_assert_eq!(pgm, want);
            Ok(())
        },
    );
    let pass = scenarios.is_ok() && slices.is_ok();
    report(
        8,
        pass,
        &format!(
            "1000 scenario round-trips: {}, 1000 slice encodings: {}",
            if scenarios.is_ok() { "ok" } else { "failed" },
            if slices.is_ok() { "ok" } else { "failed" }
        ),
    );
    assert!(pass, "{scenarios:?} {slices:?}");
}
