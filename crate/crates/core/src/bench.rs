//! Scenario runner and ablation sweeps.
//!
//! # Per-frame CSV (`transform`)
//!
//! One row per `T`/`G` event, columns in this order:
//!
//! | column | meaning |
//! |---|---|
//! | `frame` | frame index from 0 |
//! | `kind` | `incremental` or `global` |
//! | `mode` | `optimized` or `baseline` |
//! | `adds`, `removes` | accepted obstacle changes in the frame |
//! | `time_ms` | wall time of event application plus transform |
//! | `changed` .. `stale_pops` | [`TransformMetrics`] of the frame |
//! | `processed` | `lowered + raised + neighbor_queries` |
//! | `leaves`, `active_voxels`, `estimated_bytes` | [`GridStats`] after the frame |
//! | `dense_bytes` | region volume × `size_of::<CellRecord>()` |
//! | `checked` | a `C` event followed the frame |
//! | `mismatches` | oracle mismatches found by that check |
//!
//! # Ablation CSV (`ablate`)
//!
//! `axis, value, series, repeats, mean_ms, var_ms, mean_processed,
//! mean_raised, mean_bytes, dense_bytes`. Means and (population) variances
//! are over repeats; `series` is the scheduling mode, or `incremental` /
//! `global` on the global-versus-incremental axis.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::coord::Coord;
use crate::edt::{CellRecord, EdtField, Mode, TransformMetrics};
use crate::error::ScenarioError;
use crate::grid::GridStats;
use crate::oracle::{brute_force_edt, compare, DenseField, Mismatch, Region};
use crate::scenario::{generate_scenario, Event, GeneratorSpec, Scenario, ScenarioHeader, SplitMix64};

/// Bytes a dense array of records over `region` would take.
pub fn dense_equivalent_bytes(region: &Region) -> u64 {
    region.volume() * std::mem::size_of::<CellRecord>() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Incremental,
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameRow {
    pub frame: usize,
    pub kind: FrameKind,
    pub mode: Mode,
    pub adds: u64,
    pub removes: u64,
    pub time_ms: f64,
    pub changed: u64,
    pub lowered: u64,
    pub raised: u64,
    pub neighbor_queries: u64,
    pub pops: u64,
    pub stale_pops: u64,
    pub processed: u64,
    pub leaves: usize,
    pub active_voxels: usize,
    pub estimated_bytes: usize,
    pub dense_bytes: u64,
    pub checked: bool,
    pub mismatches: usize,
}

/// Outcome of one `C` event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOutcome {
    /// Frames completed before the check.
    pub after_frame: usize,
    pub mismatches: Vec<Mismatch>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub header: ScenarioHeader,
    pub mode: Mode,
    pub rows: Vec<FrameRow>,
    pub checks: Vec<CheckOutcome>,
    pub field: EdtField,
    /// Obstacles after the last event.
    pub obstacles: BTreeSet<Coord>,
}

impl RunResult {
    pub fn totals(&self) -> TransformMetrics {
        let mut t = TransformMetrics::default();
        for r in &self.rows {
            t += TransformMetrics {
                changed: r.changed,
                lowered: r.lowered,
                raised: r.raised,
                neighbor_queries: r.neighbor_queries,
                pops: r.pops,
                stale_pops: r.stale_pops,
            };
        }
        t
    }

    pub fn total_ms(&self) -> f64 {
        self.rows.iter().map(|r| r.time_ms).sum()
    }

    pub fn mismatch_count(&self) -> usize {
        self.checks.iter().map(|c| c.mismatches.len()).sum()
    }

    pub fn passed(&self) -> bool {
        self.mismatch_count() == 0
    }
}

/// Runs every event of `scenario` on a fresh field.
///
/// Adds and removes are buffered until the frame's `T` or `G`; the timed
/// span covers applying them and the transform. A `C` compares the field
/// with the brute-force oracle over the header region and is not timed.
/// Changes pending at the end of the event list are applied untimed and
/// drained so the returned field is quiescent.
pub fn run_scenario(scenario: &Scenario, mode: Mode) -> Result<RunResult, ScenarioError> {
    run_scenario_with(scenario, mode, |_| {})
}

/// [`run_scenario`] with a hook called on the field just before every `C`
/// event, which lets tests corrupt a field on purpose.
pub fn run_scenario_with<F>(scenario: &Scenario, mode: Mode, mut before_check: F) -> Result<RunResult, ScenarioError>
where
    F: FnMut(&mut EdtField),
{
    let mut runner = Runner::new(scenario.header, mode)?;
    for event in &scenario.events {
        if *event == Event::Check {
            runner.settle()?;
            before_check(&mut runner.field);
        }
        runner.step(*event)?;
    }
    runner.finish()
}

/// Event-at-a-time scenario execution; see [`run_scenario`].
#[derive(Clone, Debug)]
pub struct Runner {
    header: ScenarioHeader,
    mode: Mode,
    field: EdtField,
    obstacles: BTreeSet<Coord>,
    pending: Vec<Event>,
    rows: Vec<FrameRow>,
    checks: Vec<CheckOutcome>,
    dense_bytes: u64,
}

impl Runner {
    pub fn new(header: ScenarioHeader, mode: Mode) -> Result<Self, ScenarioError> {
        Ok(Runner {
            header,
            mode,
            field: EdtField::new(header.dmax_sq(), mode)?,
            obstacles: BTreeSet::new(),
            pending: Vec::new(),
            rows: Vec::new(),
            checks: Vec::new(),
            dense_bytes: dense_equivalent_bytes(&header.region),
        })
    }

    pub fn field(&self) -> &EdtField {
        &self.field
    }

    /// Switches the scheduling mode; pending changes are applied first.
    pub fn set_mode(&mut self, mode: Mode) -> Result<(), ScenarioError> {
        self.settle()?;
        self.mode = mode;
        Ok(self.field.set_mode(mode)?)
    }

    pub fn field_mut(&mut self) -> &mut EdtField {
        &mut self.field
    }

    pub fn obstacles(&self) -> &BTreeSet<Coord> {
        &self.obstacles
    }

    pub fn rows(&self) -> &[FrameRow] {
        &self.rows
    }

    pub fn checks(&self) -> &[CheckOutcome] {
        &self.checks
    }

    /// Applies buffered changes untimed and drains the queue.
    pub fn settle(&mut self) -> Result<(), ScenarioError> {
        if !self.pending.is_empty() {
            apply_to_field(&mut self.field, &mut self.obstacles, &self.pending)?;
            self.pending.clear();
            self.field.distance_transform();
        }
        Ok(())
    }

    pub fn step(&mut self, event: Event) -> Result<(), ScenarioError> {
        match event {
            Event::Add(_) | Event::Remove(_) => self.pending.push(event),
            Event::Transform | Event::GlobalTransform => {
                let global = event == Event::GlobalTransform;
                let start = Instant::now();
                let ((adds, removes), m) = if global {
                    let counts = apply_to_set(&mut self.obstacles, &self.pending);
                    (counts, self.field.global_transform(self.obstacles.iter().copied())?)
                } else {
                    let counts = apply_to_field(&mut self.field, &mut self.obstacles, &self.pending)?;
                    (counts, self.field.distance_transform())
                };
                let time_ms = start.elapsed().as_secs_f64() * 1e3;
                self.pending.clear();
                let stats = self.field.stats();
                let row = frame_row(self.rows.len(), global, self.mode, adds, removes, time_ms, m, &stats, self.dense_bytes);
                self.rows.push(row);
            }
            Event::Check => {
                let dense = self.oracle()?;
                self.check_against(&dense);
            }
        }
        Ok(())
    }

    /// Settles the field and computes the oracle for the current obstacles.
    fn oracle(&mut self) -> Result<DenseField, ScenarioError> {
        self.settle()?;
        let h = &self.header;
        Ok(brute_force_edt(self.obstacles.iter().copied(), h.region, h.dmax_sq())?)
    }

    /// Records a check of the (settled) field against `dense`.
    fn check_against(&mut self, dense: &DenseField) {
        let report = compare(&mut self.field, dense);
        if let Some(last) = self.rows.last_mut() {
            last.checked = true;
            last.mismatches += report.mismatches.len();
        }
        self.checks.push(CheckOutcome {
            after_frame: self.rows.len(),
            mismatches: report.mismatches,
        });
    }

    pub fn finish(mut self) -> Result<RunResult, ScenarioError> {
        self.settle()?;
        Ok(RunResult {
            header: self.header,
            mode: self.mode,
            rows: self.rows,
            checks: self.checks,
            field: self.field,
            obstacles: self.obstacles,
        })
    }
}

/// Outcome of [`verify_scenario`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    /// Checks performed, counting the implicit one at the end.
    pub checks: usize,
    pub optimized_mismatches: Vec<Mismatch>,
    pub baseline_mismatches: Vec<Mismatch>,
    /// Region cells whose distance differs between the two modes.
    pub mode_disagreements: Vec<Coord>,
    /// Cells, summed over checks, with equal distances but different
    /// (equidistant) indexed obstacles.
    pub index_differences: usize,
    pub optimized: TransformMetrics,
    pub baseline: TransformMetrics,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.optimized_mismatches.is_empty() && self.baseline_mismatches.is_empty() && self.mode_disagreements.is_empty()
    }
}

/// Runs `scenario` in both modes in lockstep. At every `C`, and once more
/// after the last event, both fields are checked against the oracle and
/// against each other. `fault` may corrupt the optimized field before each
/// check.
pub fn verify_scenario<F>(scenario: &Scenario, mut fault: F) -> Result<VerifyReport, ScenarioError>
where
    F: FnMut(&mut EdtField),
{
    let mut opt = Runner::new(scenario.header, Mode::Optimized)?;
    let mut base = Runner::new(scenario.header, Mode::Baseline)?;
    let mut report = VerifyReport::default();
    let mut check = |opt: &mut Runner, base: &mut Runner, report: &mut VerifyReport| -> Result<(), ScenarioError> {
        // both runners saw the same events, so one oracle serves both
        let dense = opt.oracle()?;
        base.settle()?;
        fault(&mut opt.field);
        opt.check_against(&dense);
        base.check_against(&dense);
        report.checks += 1;
        report.optimized_mismatches.extend(opt.checks.last().into_iter().flat_map(|c| c.mismatches.iter().copied()));
        report.baseline_mismatches.extend(base.checks.last().into_iter().flat_map(|c| c.mismatches.iter().copied()));
        for c in scenario.header.region.cells() {
            let (a, b) = (opt.field.record(c)?, base.field.record(c)?);
            if a.dist != b.dist {
                report.mode_disagreements.push(c);
            } else if a != b {
                report.index_differences += 1;
            }
        }
        Ok(())
    };
    for &event in &scenario.events {
        if event == Event::Check {
            check(&mut opt, &mut base, &mut report)?;
        } else {
            opt.step(event)?;
            base.step(event)?;
        }
    }
    check(&mut opt, &mut base, &mut report)?;
    report.optimized = opt.field.metrics();
    report.baseline = base.field.metrics();
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn frame_row(
    frame: usize,
    global: bool,
    mode: Mode,
    adds: u64,
    removes: u64,
    time_ms: f64,
    m: TransformMetrics,
    stats: &GridStats,
    dense_bytes: u64,
) -> FrameRow {
    FrameRow {
        frame,
        kind: if global { FrameKind::Global } else { FrameKind::Incremental },
        mode,
        adds,
        removes,
        time_ms,
        changed: m.changed,
        lowered: m.lowered,
        raised: m.raised,
        neighbor_queries: m.neighbor_queries,
        pops: m.pops,
        stale_pops: m.stale_pops,
        processed: m.processed(),
        leaves: stats.leaf_count(),
        active_voxels: stats.active_voxels,
        estimated_bytes: stats.estimated_bytes,
        dense_bytes,
        checked: false,
        mismatches: 0,
    }
}

/// Applies changes through the field; the tracked set follows only the
/// changes the field accepted.
fn apply_to_field(
    field: &mut EdtField,
    obstacles: &mut BTreeSet<Coord>,
    events: &[Event],
) -> Result<(u64, u64), ScenarioError> {
    let (mut adds, mut removes) = (0, 0);
    for e in events {
        match *e {
            Event::Add(c) if field.set_obstacle(c)? => {
                obstacles.insert(c);
                adds += 1;
            }
            Event::Remove(c) if field.remove_obstacle(c)? => {
                obstacles.remove(&c);
                removes += 1;
            }
            _ => {}
        }
    }
    Ok((adds, removes))
}

fn apply_to_set(obstacles: &mut BTreeSet<Coord>, events: &[Event]) -> (u64, u64) {
    let (mut adds, mut removes) = (0, 0);
    for e in events {
        match *e {
            Event::Add(c) => adds += obstacles.insert(c) as u64,
            Event::Remove(c) => removes += obstacles.remove(&c) as u64,
            _ => {}
        }
    }
    (adds, removes)
}

pub fn write_frame_csv<W: Write>(rows: &[FrameRow], out: W) -> Result<(), ScenarioError> {
    write_csv(rows, out)
}

fn write_csv<W: Write, R: Serialize>(rows: &[R], out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| ScenarioError::Csv(e.into()))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    Range,
    Threshold,
    Changes,
    GlobalVsIncremental,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 4] = [
        AblationAxis::Range,
        AblationAxis::Threshold,
        AblationAxis::Changes,
        AblationAxis::GlobalVsIncremental,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Range => "range",
            AblationAxis::Threshold => "threshold",
            AblationAxis::Changes => "changes",
            AblationAxis::GlobalVsIncremental => "global-vs-incremental",
        }
    }

    /// Default sweep values: cells for range and threshold, obstacle count
    /// for changes, removed/added ratio for global-vs-incremental.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            AblationAxis::Range => vec![25.0, 50.0, 75.0, 100.0],
            AblationAxis::Threshold => vec![3.0, 5.0, 10.0, 15.0],
            AblationAxis::Changes => vec![100.0, 250.0, 500.0, 750.0, 1000.0],
            AblationAxis::GlobalVsIncremental => vec![0.1, 0.25, 0.5],
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation axis `{s}`"))
    }
}

/// Fixed parameters of a sweep. Defaults follow the desk-scale protocol:
/// range 100 cells, threshold 10 cells, 500 obstacles, half replaced.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSettings {
    pub repeats: u32,
    pub seed: u64,
    pub range_cells: u32,
    pub dmax_cells: u32,
    pub n_obstacles: u32,
    pub churn_fraction: f64,
    /// Overrides [`AblationAxis::default_values`].
    pub values: Option<Vec<f64>>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            repeats: 10,
            seed: 0,
            range_cells: 100,
            dmax_cells: 10,
            n_obstacles: 500,
            churn_fraction: 0.5,
            values: None,
        }
    }
}

/// Global-versus-incremental base map and added obstacles.
pub const GVI_BASE_OBSTACLES: u32 = 800;
pub const GVI_ADDED: u32 = 400;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub value: f64,
    pub series: String,
    pub repeats: u32,
    pub mean_ms: f64,
    pub var_ms: f64,
    pub mean_processed: f64,
    pub mean_raised: f64,
    pub mean_bytes: f64,
    pub dense_bytes: u64,
}

/// Population mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Default)]
struct Samples {
    ms: Vec<f64>,
    processed: Vec<f64>,
    raised: Vec<f64>,
    bytes: Vec<f64>,
}

impl Samples {
    fn push(&mut self, row: &FrameRow) {
        self.ms.push(row.time_ms);
        self.processed.push(row.processed as f64);
        self.raised.push(row.raised as f64);
        self.bytes.push(row.estimated_bytes as f64);
    }

    fn row(&self, axis: AblationAxis, value: f64, series: &str, dense_bytes: u64) -> AblationRow {
        let (mean_ms, var_ms) = mean_var(&self.ms);
        AblationRow {
            axis,
            value,
            series: series.to_string(),
            repeats: self.ms.len() as u32,
            mean_ms,
            var_ms,
            mean_processed: mean_var(&self.processed).0,
            mean_raised: mean_var(&self.raised).0,
            mean_bytes: mean_var(&self.bytes).0,
            dense_bytes,
        }
    }
}

/// Runs one sweep. Every repeat draws a fresh scenario (seed `seed + r`)
/// that builds a map in frame 0 and changes it in frame 1; only frame 1 is
/// measured. Each scenario is run in both scheduling modes, or with an
/// incremental and a global update on the global-versus-incremental axis.
pub fn run_ablation(axis: AblationAxis, settings: &AblationSettings) -> Result<Vec<AblationRow>, ScenarioError> {
    if settings.repeats == 0 {
        return Err(ScenarioError::Spec("repeats must be positive".into()));
    }
    let values = settings.values.clone().unwrap_or_else(|| axis.default_values());
    let mut rows = Vec::new();
    for &value in &values {
        let series: [(&str, Mode, bool); 2] = match axis {
            AblationAxis::GlobalVsIncremental => [("incremental", Mode::Optimized, false), ("global", Mode::Optimized, true)],
            _ => [("optimized", Mode::Optimized, false), ("baseline", Mode::Baseline, false)],
        };
        let mut samples: [Samples; 2] = Default::default();
        let mut dense_bytes = 0;
        for r in 0..settings.repeats {
            let seed = settings.seed.wrapping_add(r as u64);
            let scenario = ablation_scenario(axis, value, settings, seed)?;
            dense_bytes = dense_equivalent_bytes(&scenario.header.region);
            // frame 0 is identical for every series, so build it once
            let split = scenario
                .events
                .iter()
                .position(|e| *e == Event::Transform)
                .expect("ablation scenarios have two frames")
                + 1;
            let mut built = Runner::new(scenario.header, Mode::Optimized)?;
            for &e in &scenario.events[..split] {
                built.step(e)?;
            }
            for (i, &(_, mode, global)) in series.iter().enumerate() {
                let mut run = built.clone();
                run.set_mode(mode)?;
                for &e in &scenario.events[split..] {
                    let e = if global && e == Event::Transform { Event::GlobalTransform } else { e };
                    run.step(e)?;
                }
                samples[i].push(run.rows.last().expect("measured frame"));
            }
        }
        for (i, &(name, _, _)) in series.iter().enumerate() {
            rows.push(samples[i].row(axis, value, name, dense_bytes));
        }
    }
    Ok(rows)
}

/// The two-frame scenario measured for one sweep point.
pub fn ablation_scenario(
    axis: AblationAxis,
    value: f64,
    settings: &AblationSettings,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    let cells = |v: f64| -> Result<u32, ScenarioError> {
        if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
            Ok(v as u32)
        } else {
            Err(ScenarioError::Spec(format!("{axis} sweep value {v} must be a positive integer")))
        }
    };
    let base = GeneratorSpec::new(settings.range_cells, settings.n_obstacles, settings.churn_fraction, 2, seed)
        .dmax_cells(settings.dmax_cells);
    let spec = match axis {
        AblationAxis::Range => GeneratorSpec { range: cells(value)?, ..base },
        AblationAxis::Threshold => GeneratorSpec { dmax_cells: cells(value)?, ..base },
        AblationAxis::Changes => GeneratorSpec { n_obstacles: cells(value)?, ..base },
        AblationAxis::GlobalVsIncremental => {
            if !(0.0..=GVI_BASE_OBSTACLES as f64 / GVI_ADDED as f64).contains(&value) {
                return Err(ScenarioError::Spec(format!("removal ratio {value} out of range")));
            }
            let removed = (value * GVI_ADDED as f64).round() as u32;
            return replace_scenario(&base, GVI_BASE_OBSTACLES, removed, GVI_ADDED);
        }
    };
    generate_scenario(&spec)
}

/// Frame 0 places `n` uniform obstacles; frame 1 removes `removed` of them
/// and adds `added` fresh ones.
pub fn replace_scenario(base: &GeneratorSpec, n: u32, removed: u32, added: u32) -> Result<Scenario, ScenarioError> {
    if removed > n {
        return Err(ScenarioError::Spec(format!("cannot remove {removed} of {n} obstacles")));
    }
    // the generator draws frame 0 exactly as a one-frame spec with n obstacles
    let first = generate_scenario(&GeneratorSpec {
        n_obstacles: n + added,
        frames: 1,
        ..*base
    })?;
    let mut rng = SplitMix64::new(base.seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let all: Vec<Coord> = first.events.iter().filter_map(Event::coord).collect();
    let (initial, fresh) = all.split_at(n as usize);
    let mut events: Vec<Event> = initial.iter().map(|&c| Event::Add(c)).collect();
    events.push(Event::Transform);
    let mut pool = initial.to_vec();
    for _ in 0..removed {
        let i = rng.below(pool.len() as u64) as usize;
        events.push(Event::Remove(pool.swap_remove(i)));
    }
    events.extend(fresh.iter().map(|&c| Event::Add(c)));
    events.push(Event::Transform);
    let s = Scenario {
        header: first.header,
        events,
    };
    s.validate()?;
    Ok(s)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<(), ScenarioError> {
    write_csv(rows, out)
}

/// Mean of `series_b` time divided by mean of `series_a` time at each value.
pub fn speedups(rows: &[AblationRow], series_a: &str, series_b: &str) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.series == series_a)
        .filter_map(|a| {
            rows.iter()
                .find(|b| b.series == series_b && b.value == a.value && b.axis == a.axis)
                .map(|b| (a.value, b.mean_ms / a.mean_ms))
        })
        .collect()
}
