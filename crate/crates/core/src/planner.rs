//! Shortest paths that trade length against clearance.
//!
//! A path `x_0 .. x_N` over 26-connected free cells costs
//!
//! ```text
//! α · Σ_{i<N} |x_{i+1} − x_i|  +  (1 − α) · Σ_{i≤N} max(0, dmax − d(x_i))
//! ```
//!
//! with `dmax` and `d` in cells (square roots of the stored squared
//! values). The minimum is found by uniform-cost search over the cells of a
//! bounded region. An optional turn bound `θ` prunes every step whose
//! direction differs from the previous step's by an angle of `θ` or more;
//! search states are then (cell, incoming direction).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use num_traits::Float;

use crate::coord::Coord;
use crate::edt::EdtField;
use crate::error::PlanError;
use crate::grid::{Accessor, SparseGrid};
use crate::edt::CellRecord;
use crate::oracle::Region;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathQuery<F> {
    pub start: Coord,
    pub goal: Coord,
    /// Weight of path length against clearance, in `[0, 1]`.
    pub alpha: F,
    /// Maximum turning angle in radians; `None` disables the bound.
    pub theta: Option<F>,
    /// Cells the path may visit.
    pub region: Region,
}

impl<F: Float> PathQuery<F> {
    pub fn new(start: Coord, goal: Coord, alpha: F, region: Region) -> Self {
        PathQuery {
            start,
            goal,
            alpha,
            theta: None,
            region,
        }
    }

    pub fn with_theta(mut self, theta: F) -> Self {
        self.theta = Some(theta);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPath<F> {
    pub cells: Vec<Coord>,
    /// `Σ |x_{i+1} − x_i|`, unweighted.
    pub length_cost: F,
    /// `Σ max(0, dmax − d(x_i))`, unweighted.
    pub clearance_cost: F,
    /// `α · length_cost + (1 − α) · clearance_cost`.
    pub total_cost: F,
}

impl<F: Float> PlannedPath<F> {
    /// Smallest distance, in cells, from a path cell to an obstacle.
    pub fn min_clearance(&self, field: &EdtField) -> F {
        let mut acc = field.grid().accessor();
        self.cells
            .iter()
            .map(|&c| sqrt_cells::<F>(read(field.grid(), &mut acc, c).dist))
            .fold(F::infinity(), F::min)
    }
}

fn read(grid: &SparseGrid<CellRecord>, acc: &mut Accessor, c: Coord) -> CellRecord {
    grid.get(acc, c).expect("region cells lie in domain")
}

fn sqrt_cells<F: Float>(d: u32) -> F {
    F::from(d).expect("u32 fits any float").sqrt()
}

/// Euclidean length of a unit step.
pub fn step_length<F: Float>(d: (i32, i32, i32)) -> F {
    let n = d.0 * d.0 + d.1 * d.1 + d.2 * d.2;
    sqrt_cells(n as u32)
}

/// Angle between two step directions, in radians. This is the segment
/// angle the turn bound is applied to.
pub fn turn_angle<F: Float>(a: (i32, i32, i32), b: (i32, i32, i32)) -> F {
    let dot = F::from(a.0 * b.0 + a.1 * b.1 + a.2 * b.2).unwrap();
    let cos = dot / (step_length::<F>(a) * step_length::<F>(b));
    cos.max(-F::one()).min(F::one()).acos()
}

/// Per-cell clearance penalty `max(0, dmax − d)` in cells.
pub fn clearance_penalty<F: Float>(dist_sq: u32, dmax_sq: u32) -> F {
    (sqrt_cells::<F>(dmax_sq) - sqrt_cells::<F>(dist_sq)).max(F::zero())
}

/// Evaluates the objective on an explicit cell sequence.
pub fn path_cost<F: Float>(field: &EdtField, cells: &[Coord], alpha: F) -> PlannedPath<F> {
    let grid = field.grid();
    let mut acc = grid.accessor();
    let mut length = F::zero();
    let mut clearance = F::zero();
    for (i, &c) in cells.iter().enumerate() {
        clearance = clearance + clearance_penalty::<F>(read(grid, &mut acc, c).dist, field.dmax_sq());
        if i > 0 {
            let p = cells[i - 1];
            length = length + step_length::<F>((c.x - p.x, c.y - p.y, c.z - p.z));
        }
    }
    PlannedPath {
        cells: cells.to_vec(),
        length_cost: length,
        clearance_cost: clearance,
        total_cost: alpha * length + (F::one() - alpha) * clearance,
    }
}

/// The 26 unit steps, in `NEIGHBOR_OFFSETS` order.
fn directions() -> Vec<(i32, i32, i32)> {
    let mut v = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    v.push((dx, dy, dz));
                }
            }
        }
    }
    v
}

/// Marker for "no incoming direction" at the start cell.
const NO_DIR: u8 = 26;

#[derive(Clone, Copy, PartialEq)]
struct Entry<F> {
    cost: F,
    seq: u64,
    cell: Coord,
    dir: u8,
}

impl<F: Float> Eq for Entry<F> {}

impl<F: Float> Ord for Entry<F> {
    // min-heap on (cost, seq)
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| o.seq.cmp(&self.seq))
    }
}

impl<F: Float> PartialOrd for Entry<F> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Cost-minimal path for `query`.
///
/// Ties between equal-cost states are broken by insertion order, and
/// neighbours are expanded in a fixed order, so results are deterministic.
pub fn plan_path<F: Float>(field: &EdtField, query: &PathQuery<F>) -> Result<PlannedPath<F>, PlanError> {
    let alpha = query.alpha;
    if !(alpha >= F::zero() && alpha <= F::one()) {
        return Err(PlanError::Alpha(format!("{:?}", alpha.to_f64())));
    }
    if let Some(t) = query.theta {
        if t.is_nan() || t <= F::zero() {
            return Err(PlanError::Theta(format!("{:?}", t.to_f64())));
        }
    }
    if !field.is_quiescent() {
        return Err(PlanError::NotQuiescent);
    }
    let grid = field.grid();
    let mut acc = grid.accessor();
    let dmax_sq = field.dmax_sq();
    for c in [query.start, query.goal] {
        if !query.region.contains(c) || grid.get(&mut acc, c)?.dist == 0 {
            return Err(PlanError::BlockedEndpoint(c));
        }
    }
    let dirs = directions();
    // allowed[a][b]: stepping along b after a satisfies the turn bound
    let allowed: Option<Vec<Vec<bool>>> = query.theta.map(|t| {
        dirs.iter()
            .map(|&a| dirs.iter().map(|&b| turn_angle::<F>(a, b) < t).collect())
            .collect()
    });
    let one_minus = F::one() - alpha;
    let lengths: Vec<F> = dirs.iter().map(|&d| alpha * step_length::<F>(d)).collect();
    let mut penalty_cache: HashMap<Coord, Option<F>> = HashMap::new();
    let mut penalty = |c: Coord| -> Option<F> {
        *penalty_cache.entry(c).or_insert_with(|| {
            if !query.region.contains(c) {
                return None;
            }
            let d = read(grid, &mut acc, c).dist;
            (d > 0).then(|| one_minus * clearance_penalty::<F>(d, dmax_sq))
        })
    };

    type State = (Coord, u8);
    let mut best: HashMap<State, F> = HashMap::new();
    let mut parent: HashMap<State, State> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let start_cost = penalty(query.start).expect("start checked free");
    let start: State = (query.start, NO_DIR);
    best.insert(start, start_cost);
    heap.push(Entry {
        cost: start_cost,
        seq,
        cell: query.start,
        dir: NO_DIR,
    });

    let mut reached = None;
    while let Some(e) = heap.pop() {
        let state = (e.cell, e.dir);
        if best.get(&state).is_some_and(|&b| e.cost > b) {
            continue;
        }
        if e.cell == query.goal {
            reached = Some(state);
            break;
        }
        for (i, &(dx, dy, dz)) in dirs.iter().enumerate() {
            if let (Some(table), true) = (&allowed, e.dir != NO_DIR) {
                if !table[e.dir as usize][i] {
                    continue;
                }
            }
            let n = e.cell.offset(dx, dy, dz);
            let Some(p) = penalty(n) else { continue };
            let dir = if allowed.is_some() { i as u8 } else { NO_DIR };
            let next = (n, dir);
            let cost = e.cost + lengths[i] + p;
            if best.get(&next).is_none_or(|&b| cost < b) {
                best.insert(next, cost);
                parent.insert(next, state);
                seq += 1;
                heap.push(Entry {
                    cost,
                    seq,
                    cell: n,
                    dir,
                });
            }
        }
    }
    let mut state = reached.ok_or(PlanError::NoPath)?;
    let mut cells = vec![state.0];
    while let Some(&p) = parent.get(&state) {
        cells.push(p.0);
        state = p;
    }
    cells.reverse();
    Ok(path_cost(field, &cells, alpha))
}
