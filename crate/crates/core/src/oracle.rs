//! Brute-force truncated distance transform used as ground truth.
//!
//! Every cell of an explicit box is minimised over every obstacle. Nothing
//! here is shared with the incremental engine except the coordinate type;
//! squared distances are recomputed locally and cross-checked against
//! [`crate::coord::sqdist`].

use std::collections::BTreeSet;

use crate::coord::{self, Coord};
use crate::edt::EdtField;
use crate::error::OracleError;

/// Largest region the oracle accepts, in cells.
pub const MAX_ORACLE_CELLS: u64 = 1 << 24;

/// Axis-aligned box of cells: `origin` inclusive, `dims` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub origin: Coord,
    pub dims: [u32; 3],
}

impl Region {
    pub fn new(origin: Coord, dims: [u32; 3]) -> Self {
        Region { origin, dims }
    }

    pub fn volume(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn contains(&self, c: Coord) -> bool {
        let inside = |v: i32, o: i32, d: u32| {
            let off = v as i64 - o as i64;
            off >= 0 && off < d as i64
        };
        inside(c.x, self.origin.x, self.dims[0])
            && inside(c.y, self.origin.y, self.dims[1])
            && inside(c.z, self.origin.z, self.dims[2])
    }

    /// Row-major index with `x` fastest, then `y`, then `z`.
    pub fn index(&self, c: Coord) -> Option<usize> {
        if !self.contains(c) {
            return None;
        }
        let x = (c.x - self.origin.x) as usize;
        let y = (c.y - self.origin.y) as usize;
        let z = (c.z - self.origin.z) as usize;
        Some(x + self.dims[0] as usize * (y + self.dims[1] as usize * z))
    }

    /// Cells in index order.
    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        let [dx, dy, dz] = self.dims;
        let o = self.origin;
        (0..dz as i32).flat_map(move |z| {
            (0..dy as i32)
                .flat_map(move |y| (0..dx as i32).map(move |x| o.offset(x, y, z)))
        })
    }
}

/// Dense truncated distance values over a region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseField {
    pub region: Region,
    pub dmax_sq: u32,
    pub values: Vec<u32>,
    pub obstacles: BTreeSet<Coord>,
}

impl DenseField {
    pub fn value(&self, c: Coord) -> Option<u32> {
        self.region.index(c).map(|i| self.values[i])
    }
}

fn oracle_sqdist(a: Coord, b: Coord) -> u64 {
    let d = |p: i32, q: i32| {
        let v = (p as i64 - q as i64).unsigned_abs();
        v * v
    };
    let s = d(a.x, b.x) + d(a.y, b.y) + d(a.z, b.z);
    debug_assert_eq!(s, coord::sqdist(a, b));
    s
}

/// True when every squared distance between a region cell and an obstacle
/// fits an `i32`, which lets the inner loop run on narrow lanes.
fn fits_i32(region: &Region, obstacles: &BTreeSet<Coord>) -> bool {
    let mut lo = [region.origin.x as i64, region.origin.y as i64, region.origin.z as i64];
    let mut hi = [
        lo[0] + region.dims[0] as i64 - 1,
        lo[1] + region.dims[1] as i64 - 1,
        lo[2] + region.dims[2] as i64 - 1,
    ];
    for o in obstacles {
        for (a, v) in [o.x, o.y, o.z].into_iter().enumerate() {
            lo[a] = lo[a].min(v as i64);
            hi[a] = hi[a].max(v as i64);
        }
    }
    let sq: i64 = (0..3).map(|a| (hi[a] - lo[a]).pow(2)).sum();
    sq <= i32::MAX as i64
}

/// Same minimisation as the general path with obstacles held column-wise.
fn min_sqdist_i32(obstacles: &BTreeSet<Coord>, region: &Region, dmax_sq: u32) -> Vec<u32> {
    let xs: Vec<i32> = obstacles.iter().map(|o| o.x).collect();
    let ys: Vec<i32> = obstacles.iter().map(|o| o.y).collect();
    let zs: Vec<i32> = obstacles.iter().map(|o| o.z).collect();
    let cap = dmax_sq.min(i32::MAX as u32) as i32;
    region
        .cells()
        .map(|c| {
            if let Some(o) = obstacles.first() {
                // spot-check the narrow formula against the shared helper
                debug_assert_eq!(
                    oracle_sqdist(c, *o),
                    ((c.x - o.x).pow(2) + (c.y - o.y).pow(2) + (c.z - o.z).pow(2)) as u64
                );
            }
            let mut best = cap;
            // `fits_i32` bounds every sum, so wrapping never wraps; it keeps
            // the loop vectorizable when overflow checks are compiled in
            for ((&x, &y), &z) in xs.iter().zip(&ys).zip(&zs) {
                let (dx, dy, dz) = (c.x.wrapping_sub(x), c.y.wrapping_sub(y), c.z.wrapping_sub(z));
                best = best.min(dx.wrapping_mul(dx).wrapping_add(dy.wrapping_mul(dy)).wrapping_add(dz.wrapping_mul(dz)));
            }
            (best as u32).min(dmax_sq)
        })
        .collect()
}

/// Exhaustive truncated EDT: every cell of `region` is minimised over every
/// obstacle, `O(cells × obstacles)`.
pub fn brute_force_edt<I>(obstacles: I, region: Region, dmax_sq: u32) -> Result<DenseField, OracleError>
where
    I: IntoIterator<Item = Coord>,
{
    if region.dims.contains(&0) {
        return Err(OracleError::EmptyRegion(region.dims));
    }
    let cells = region.volume();
    if cells > MAX_ORACLE_CELLS {
        return Err(OracleError::RegionTooLarge {
            cells,
            limit: MAX_ORACLE_CELLS,
        });
    }
    let obstacles: BTreeSet<Coord> = obstacles.into_iter().collect();
    let values = if fits_i32(&region, &obstacles) {
        min_sqdist_i32(&obstacles, &region, dmax_sq)
    } else {
        region
            .cells()
            .map(|c| {
                let mut best = dmax_sq as u64;
                for &o in &obstacles {
                    best = best.min(oracle_sqdist(c, o));
                }
                best as u32
            })
            .collect()
    };
    Ok(DenseField {
        region,
        dmax_sq,
        values,
        obstacles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MismatchKind {
    /// The stored distance differs from the oracle value.
    Distance { expected: u32, actual: u32 },
    /// The distance is right but the indexed obstacle is not a current
    /// obstacle or does not sit at that distance.
    Index { obst: Coord, dist: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub coord: Coord,
    pub kind: MismatchKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompareReport {
    pub mismatches: Vec<Mismatch>,
    pub max_abs_error: u32,
    pub cells_checked: u64,
}

impl CompareReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn distance_mismatches(&self) -> usize {
        self.mismatches
            .iter()
            .filter(|m| matches!(m.kind, MismatchKind::Distance { .. }))
            .count()
    }

    pub fn index_violations(&self) -> usize {
        self.mismatches.len() - self.distance_mismatches()
    }
}

/// Compares a field against the oracle over the oracle's region.
pub fn compare(field: &mut EdtField, dense: &DenseField) -> CompareReport {
    let mut report = CompareReport::default();
    let cap = field.dmax_sq();
    for (c, &expected) in dense.region.cells().zip(&dense.values) {
        report.cells_checked += 1;
        let r = field.record(c).expect("region cells lie in domain");
        if r.dist != expected {
            report.max_abs_error = report.max_abs_error.max(r.dist.abs_diff(expected));
            report.mismatches.push(Mismatch {
                coord: c,
                kind: MismatchKind::Distance {
                    expected,
                    actual: r.dist,
                },
            });
        } else if r.dist < cap
            && !(dense.obstacles.contains(&r.obst) && oracle_sqdist(c, r.obst) == r.dist as u64)
        {
            report.mismatches.push(Mismatch {
                coord: c,
                kind: MismatchKind::Index {
                    obst: r.obst,
                    dist: r.dist,
                },
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edt::{CellRecord, Mode};

    #[test]
    fn no_obstacles_is_all_cap() {
        let r = Region::new(Coord::new(-2, -2, -2), [5, 5, 5]);
        let d = brute_force_edt([], r, 7).unwrap();
        assert!(d.values.iter().all(|&v| v == 7));
    }

    #[test]
    fn centred_obstacle_gives_shells() {
        let r = Region::new(Coord::new(-3, -3, -3), [7, 7, 7]);
        let d = brute_force_edt([Coord::new(0, 0, 0)], r, 1000).unwrap();
        for c in r.cells() {
            let want = (c.x * c.x + c.y * c.y + c.z * c.z) as u32;
            assert_eq!(d.value(c), Some(want));
        }
    }

    #[test]
    fn hand_enumerated_3x3x1() {
        // obstacles at (0,0,0) and (2,2,0), cap 100:
        //   y=0: 0 1 4
        //   y=1: 1 2 1
        //   y=2: 4 1 0
        let r = Region::new(Coord::new(0, 0, 0), [3, 3, 1]);
        let d = brute_force_edt([Coord::new(0, 0, 0), Coord::new(2, 2, 0)], r, 100).unwrap();
        assert_eq!(d.values, vec![0, 1, 4, 1, 2, 1, 4, 1, 0]);
        let capped = brute_force_edt([Coord::new(0, 0, 0), Coord::new(2, 2, 0)], r, 2).unwrap();
        assert_eq!(capped.values, vec![0, 1, 2, 1, 2, 1, 2, 1, 0]);
    }

    #[test]
    fn oversized_region_rejected() {
        let r = Region::new(Coord::new(0, 0, 0), [512, 512, 128]);
        assert!(matches!(
            brute_force_edt([], r, 1),
            Err(OracleError::RegionTooLarge { .. })
        ));
        assert!(matches!(
            brute_force_edt([], Region::new(Coord::new(0, 0, 0), [0, 1, 1]), 1),
            Err(OracleError::EmptyRegion(_))
        ));
    }

    #[test]
    fn deterministic_and_truncated() {
        let r = Region::new(Coord::new(-4, -4, -4), [9, 9, 9]);
        let obs = [Coord::new(1, 2, 3), Coord::new(-4, 0, 4), Coord::new(0, 0, 0)];
        let a = brute_force_edt(obs, r, 12).unwrap();
        let b = brute_force_edt(obs.iter().rev().copied(), r, 12).unwrap();
        assert_eq!(a, b);
        for (c, &v) in r.cells().zip(&a.values) {
            assert!(v <= 12);
            assert_eq!(v == 0, obs.contains(&c));
        }
    }

    #[test]
    fn compare_reports_injected_fault() {
        let r = Region::new(Coord::new(-6, -6, -6), [13, 13, 13]);
        let mut f = EdtField::new(16, Mode::Optimized).unwrap();
        f.set_obstacle(Coord::new(0, 0, 0)).unwrap();
        f.distance_transform();
        let d = brute_force_edt([Coord::new(0, 0, 0)], r, 16).unwrap();
        assert!(compare(&mut f, &d).is_clean());
        let bad = Coord::new(1, 2, 0);
        let rec = f.record(bad).unwrap();
        f.corrupt_record(bad, CellRecord { dist: 2, ..rec }).unwrap();
        let rep = compare(&mut f, &d);
        assert_eq!(rep.mismatches.len(), 1);
        assert_eq!(rep.mismatches[0].coord, bad);
        assert_eq!(rep.max_abs_error, 3);
    }

    #[test]
    fn compare_reports_bad_index() {
        let r = Region::new(Coord::new(-4, -4, -4), [9, 9, 9]);
        let mut f = EdtField::new(9, Mode::Optimized).unwrap();
        f.set_obstacle(Coord::new(0, 0, 0)).unwrap();
        f.distance_transform();
        let d = brute_force_edt([Coord::new(0, 0, 0)], r, 9).unwrap();
        let c = Coord::new(1, 0, 0);
        let mut rec = f.record(c).unwrap();
        rec.obst = Coord::new(2, 0, 0);
        f.corrupt_record(c, rec).unwrap();
        let rep = compare(&mut f, &d);
        assert_eq!(rep.index_violations(), 1);
        assert_eq!(rep.distance_mismatches(), 0);
    }
}
