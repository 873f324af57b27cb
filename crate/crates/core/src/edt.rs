//! Incremental truncated Euclidean distance transform.
//!
//! Every cell stores the coordinate of its indexed closest obstacle, the
//! truncated squared distance to it, a raise status and a queued flag.
//! Obstacle insertions seed lowering waves and removals seed raising waves;
//! both are scheduled through one [`WaveQueue`] ordered by squared distance.
//!
//! In [`Mode::Optimized`] a raising front remembers the squared radius at
//! which it was cleared. A lowering wave that reaches such a front with an
//! equal or smaller distance takes it over immediately instead of waiting
//! for the raise to run. [`Mode::Baseline`] stores only a flag and never
//! takes over raising fronts, which is the conventional scheduling.

use std::fmt;

use crate::coord::{sqdist, Coord};
use crate::error::EdtError;
use crate::grid::{Accessor, GridStats, SparseGrid, TreeConfig, DEFAULT_LOG2_DIMS};
use crate::queue::WaveQueue;

/// Raise status of a cell that is not part of a raising wave.
pub const NOT_RAISE: i32 = -1;

/// Per-cell transform state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(C)]
pub struct CellRecord {
    /// Indexed closest obstacle, or [`Coord::EMPTY`].
    pub obst: Coord,
    /// Truncated squared distance to `obst`.
    pub dist: u32,
    /// [`NOT_RAISE`] or the squared radius at which the cell joined a raising wave.
    pub raise: i32,
    pub queued: bool,
}

impl CellRecord {
    /// The record every cell starts with: no obstacle, distance at the cap.
    pub const fn background(dmax_sq: u32) -> Self {
        CellRecord {
            obst: Coord::EMPTY,
            dist: dmax_sq,
            raise: NOT_RAISE,
            queued: false,
        }
    }

    pub fn obstacle(&self) -> Option<Coord> {
        (self.obst != Coord::EMPTY).then_some(self.obst)
    }

    pub fn is_raising(&self) -> bool {
        self.raise >= 0
    }
}

/// Wave scheduling strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Raising fronts carry their radius and may be taken over by lowering waves.
    #[default]
    Optimized,
    /// Raising fronts carry a bare flag and are never interrupted.
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Optimized => "optimized",
            Mode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimized" => Ok(Mode::Optimized),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Work counters. Accumulated over the life of a field; the transform calls
/// return the difference for their own run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct TransformMetrics {
    /// Accepted `set_obstacle` / `remove_obstacle` calls.
    pub changed: u64,
    /// Lower invocations.
    pub lowered: u64,
    /// Raise invocations.
    pub raised: u64,
    /// Neighbour records read by Raise and Lower.
    pub neighbor_queries: u64,
    pub pops: u64,
    pub stale_pops: u64,
}

impl TransformMetrics {
    /// `lowered + raised + neighbor_queries`, the processed-work measure used
    /// when comparing scheduling modes.
    pub fn processed(&self) -> u64 {
        self.lowered + self.raised + self.neighbor_queries
    }

    fn since(&self, earlier: &TransformMetrics) -> TransformMetrics {
        TransformMetrics {
            changed: self.changed - earlier.changed,
            lowered: self.lowered - earlier.lowered,
            raised: self.raised - earlier.raised,
            neighbor_queries: self.neighbor_queries - earlier.neighbor_queries,
            pops: self.pops - earlier.pops,
            stale_pops: self.stale_pops - earlier.stale_pops,
        }
    }
}

impl std::ops::AddAssign for TransformMetrics {
    fn add_assign(&mut self, o: Self) {
        self.changed += o.changed;
        self.lowered += o.lowered;
        self.raised += o.raised;
        self.neighbor_queries += o.neighbor_queries;
        self.pops += o.pops;
        self.stale_pops += o.stale_pops;
    }
}

/// Who inserted a queue entry; recorded only when tracing is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushSource {
    SetObstacle,
    RemoveObstacle,
    /// Raise clearing a cell whose obstacle vanished.
    RaiseFront,
    /// Raise reaching a cell that still indexes a valid obstacle.
    RaiseBoundary,
    /// Lower taking over a raising front.
    LowerTakeover,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PushTrace {
    pub coord: Coord,
    pub priority: u32,
    pub source: PushSource,
}

/// Result of [`EdtField::query_distance`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistanceQuery {
    pub dist_sq: u32,
    /// The queue was not empty, so the value may not reflect pending changes.
    pub stale: bool,
}

/// A truncated distance field over a sparse grid.
#[derive(Clone, Debug)]
pub struct EdtField {
    grid: SparseGrid<CellRecord>,
    acc: Accessor,
    queue: WaveQueue,
    dmax_sq: u32,
    mode: Mode,
    metrics: TransformMetrics,
    trace: Option<Vec<PushTrace>>,
}

impl EdtField {
    /// Empty field with the default tree shape.
    pub fn new(dmax_sq: u32, mode: Mode) -> Result<Self, EdtError> {
        Self::initialize(dmax_sq, &DEFAULT_LOG2_DIMS, mode)
    }

    pub fn initialize(dmax_sq: u32, log2_dims: &[u32], mode: Mode) -> Result<Self, EdtError> {
        if dmax_sq == 0 {
            return Err(EdtError::Config("dmax_sq must be at least 1".into()));
        }
        if dmax_sq > i32::MAX as u32 {
            return Err(EdtError::Config(format!(
                "dmax_sq {dmax_sq} does not fit the raise status"
            )));
        }
        let grid = SparseGrid::new(TreeConfig::new(
            log2_dims.to_vec(),
            CellRecord::background(dmax_sq),
        ))?;
        let acc = grid.accessor();
        Ok(EdtField {
            grid,
            acc,
            queue: WaveQueue::with_max_priority(dmax_sq.min(1 << 16)),
            dmax_sq,
            mode,
            metrics: TransformMetrics::default(),
            trace: None,
        })
    }

    pub fn dmax_sq(&self) -> u32 {
        self.dmax_sq
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Switches the scheduling mode of a quiescent field.
    pub fn set_mode(&mut self, mode: Mode) -> Result<(), EdtError> {
        if !self.is_quiescent() {
            return Err(EdtError::Config("mode can only change between transforms".into()));
        }
        self.mode = mode;
        Ok(())
    }

    pub fn grid(&self) -> &SparseGrid<CellRecord> {
        &self.grid
    }

    pub fn stats(&self) -> GridStats {
        self.grid.stats()
    }

    /// Counters accumulated since the field was created.
    pub fn metrics(&self) -> TransformMetrics {
        self.metrics
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Starts recording every queue insertion.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<PushTrace> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    #[inline]
    fn read(&mut self, c: Coord) -> CellRecord {
        self.grid
            .get(&mut self.acc, c)
            .expect("coordinates reached by propagation are in domain")
    }

    #[inline]
    fn write(&mut self, c: Coord, r: CellRecord) {
        debug_assert!(r.dist <= self.dmax_sq, "dist above cap at {c}");
        debug_assert!(r.obst != Coord::EMPTY || r.dist == self.dmax_sq);
        debug_assert!((r.dist == 0) == (r.obst == c), "obstacle invariant broken at {c}");
        self.grid
            .set(&mut self.acc, c, r)
            .expect("coordinates reached by propagation are in domain");
    }

    #[inline]
    fn push(&mut self, priority: u32, c: Coord, source: PushSource) {
        self.queue.push(priority, c);
        if let Some(t) = &mut self.trace {
            t.push(PushTrace {
                coord: c,
                priority,
                source,
            });
        }
    }

    /// The stored record at `c`.
    pub fn record(&mut self, c: Coord) -> Result<CellRecord, EdtError> {
        Ok(self.grid.get(&mut self.acc, c)?)
    }

    /// A cell is an obstacle when it indexes itself at distance zero.
    pub fn is_obstacle(&mut self, c: Coord) -> bool {
        if c == Coord::EMPTY || !c.in_domain() {
            return false;
        }
        let r = self.read(c);
        r.dist == 0 && r.obst == c
    }

    /// Marks `s` occupied and seeds a lowering wave. Returns `false` if `s`
    /// is already an obstacle or is still queued.
    pub fn set_obstacle(&mut self, s: Coord) -> Result<bool, EdtError> {
        let mut r = self.record(s)?;
        let occ = r.dist == 0 && r.obst == s;
        if occ || r.queued {
            return Ok(false);
        }
        r.obst = s;
        r.dist = 0;
        r.raise = NOT_RAISE;
        r.queued = true;
        self.push(0, s, PushSource::SetObstacle);
        self.write(s, r);
        self.metrics.changed += 1;
        Ok(true)
    }

    /// Frees `s` and seeds a raising wave. Returns `false` unless `s` is an
    /// obstacle that is not queued.
    ///
    /// The cell itself reads back the cap immediately; neighbours keep their
    /// old values until the next [`distance_transform`](Self::distance_transform).
    pub fn remove_obstacle(&mut self, s: Coord) -> Result<bool, EdtError> {
        let mut r = self.record(s)?;
        let occ = r.dist == 0 && r.obst == s;
        if !occ || r.queued {
            return Ok(false);
        }
        r.obst = Coord::EMPTY;
        r.dist = self.dmax_sq;
        r.raise = 0;
        r.queued = true;
        self.push(0, s, PushSource::RemoveObstacle);
        self.write(s, r);
        self.metrics.changed += 1;
        Ok(true)
    }

    /// Drains the queue, propagating every pending wave.
    pub fn distance_transform(&mut self) -> TransformMetrics {
        let before = self.metrics;
        while let Some(entry) = self.queue.pop() {
            self.metrics.pops += 1;
            let s = entry.coord;
            let r = self.read(s);
            if !r.queued {
                self.metrics.stale_pops += 1;
                continue;
            }
            if r.raise >= 0 {
                self.raise(s, r);
            } else {
                self.lower(s, r);
            }
        }
        self.metrics.since(&before)
    }

    /// [`is_obstacle`](Self::is_obstacle) remembering the last answer.
    /// Raise and Lower never change an obstacle record, and neighbours
    /// mostly index the same obstacle, so the memo stays valid for one call.
    #[inline]
    fn is_obstacle_memo(&mut self, c: Coord, memo: &mut Option<(Coord, bool)>) -> bool {
        match *memo {
            Some((m, v)) if m == c => v,
            _ => {
                let v = self.is_obstacle(c);
                *memo = Some((c, v));
                v
            }
        }
    }

    fn raise(&mut self, s: Coord, mut sr: CellRecord) {
        self.metrics.raised += 1;
        let mut memo = None;
        for n in s.adj26() {
            self.metrics.neighbor_queries += 1;
            let mut nr = self.read(n);
            if nr.obst == Coord::EMPTY {
                continue;
            }
            if !self.is_obstacle_memo(nr.obst, &mut memo) {
                nr.raise = match self.mode {
                    Mode::Optimized => nr.dist as i32,
                    Mode::Baseline => 0,
                };
                nr.queued = true;
                self.push(nr.dist, n, PushSource::RaiseFront);
                nr.obst = Coord::EMPTY;
                nr.dist = self.dmax_sq;
                self.write(n, nr);
            } else if !nr.queued {
                nr.queued = true;
                self.push(nr.dist, n, PushSource::RaiseBoundary);
                self.write(n, nr);
            }
        }
        sr.raise = NOT_RAISE;
        sr.queued = false;
        self.write(s, sr);
    }

    fn lower(&mut self, s: Coord, mut sr: CellRecord) {
        self.metrics.lowered += 1;
        let o = sr.obst;
        debug_assert!(o != Coord::EMPTY, "lowering front {s} indexes no obstacle");
        if o != Coord::EMPTY {
            let mut memo = None;
            for n in s.adj26() {
                self.metrics.neighbor_queries += 1;
                let mut nr = self.read(n);
                let d_new = sqdist(o, n).min(self.dmax_sq as u64) as u32;
                if self.mode == Mode::Optimized && nr.raise >= 0 && nr.raise as u32 >= d_new {
                    nr.obst = o;
                    nr.dist = d_new;
                    nr.raise = NOT_RAISE;
                    nr.queued = true;
                    self.push(d_new, n, PushSource::LowerTakeover);
                    self.write(n, nr);
                } else if nr.raise < 0 {
                    let less = d_new < nr.dist;
                    let improve = less || (d_new == nr.dist && !self.is_obstacle_memo(nr.obst, &mut memo));
                    if improve {
                        nr.obst = o;
                        nr.dist = d_new;
                        nr.raise = NOT_RAISE;
                        if d_new < self.dmax_sq {
                            nr.queued = true;
                            self.push(d_new, n, PushSource::Lower);
                        }
                        self.write(n, nr);
                    }
                }
            }
        }
        sr.raise = NOT_RAISE;
        sr.queued = false;
        self.write(s, sr);
    }

    /// Rebuilds the whole field from `obstacles` with lowering waves only.
    pub fn global_transform<I>(&mut self, obstacles: I) -> Result<TransformMetrics, EdtError>
    where
        I: IntoIterator<Item = Coord>,
    {
        let before = self.metrics;
        self.grid.fill_active(CellRecord::background(self.dmax_sq));
        self.queue.clear();
        for o in obstacles {
            self.set_obstacle(o)?;
        }
        self.distance_transform();
        Ok(self.metrics.since(&before))
    }

    /// All cells that currently are obstacles, in grid iteration order.
    pub fn obstacles(&self) -> Vec<Coord> {
        self.grid
            .iter_active()
            .filter(|(c, r)| r.dist == 0 && r.obst == *c)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn query_distance(&mut self, c: Coord) -> Result<DistanceQuery, EdtError> {
        let r = self.record(c)?;
        Ok(DistanceQuery {
            dist_sq: r.dist,
            stale: !self.queue.is_empty(),
        })
    }

    /// Overwrites a record without any bookkeeping. Only for exercising the
    /// verification path with a deliberately corrupted field.
    #[doc(hidden)]
    pub fn corrupt_record(&mut self, c: Coord, r: CellRecord) -> Result<(), EdtError> {
        Ok(self.grid.set(&mut self.acc, c, r)?)
    }
}
