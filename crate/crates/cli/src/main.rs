//! `vdbedt`: run scenarios, sweeps, verification, slices and paths.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 verification mismatch.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vdbedt::bench::{self, AblationAxis, AblationSettings};
use vdbedt::scenario::{self, GeneratorSpec, Layout, SliceFormat};
use vdbedt::{Coord, EdtField, Mode, PathQuery64, Scenario};

#[derive(Parser)]
#[command(name = "vdbedt", version, about = "Incremental truncated distance transform on a sparse voxel tree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write one CSV row per frame.
    Transform {
        scenario: PathBuf,
        #[arg(long, default_value = "optimized")]
        mode: Mode,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and report mean and variance over repeats.
    Ablate {
        #[arg(long, value_parser = parse_axis)]
        axis: AblationAxis,
        /// Comma-separated sweep values; the axis defaults otherwise.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        repeats: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        range_cells: u32,
        #[arg(long, default_value_t = 10)]
        dmax_cells: u32,
        #[arg(long, default_value_t = 500)]
        obstacles: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario in both modes and check both against the oracle.
    Verify {
        scenario: PathBuf,
        /// Corrupt one record before each check (exercises the failure path).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run a scenario and export the z slice of the final field.
    Slice {
        scenario: PathBuf,
        #[arg(long)]
        z: i32,
        #[arg(long, value_enum, default_value_t = SliceArg::Csv)]
        format: SliceArg,
        #[arg(long, default_value = "optimized")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a path over an obstacle map.
    Plan {
        map: PathBuf,
        #[arg(long, value_parser = parse_coord)]
        start: Coord,
        #[arg(long, value_parser = parse_coord)]
        goal: Coord,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Maximum turning angle in radians.
        #[arg(long)]
        theta: Option<f64>,
        /// Overrides the map's threshold.
        #[arg(long)]
        dmax_cells: Option<u32>,
        /// Also write a PGM slice through the start cell with the path drawn black.
        #[arg(long)]
        slice_out: Option<PathBuf>,
    },
    /// Write a seeded random scenario.
    Generate {
        #[arg(long, default_value_t = 100)]
        range_cells: u32,
        #[arg(long, default_value_t = 500)]
        obstacles: u32,
        #[arg(long, default_value_t = 0.5)]
        churn: f64,
        #[arg(long, default_value_t = 5)]
        frames: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        dmax_cells: u32,
        #[arg(long, value_enum, default_value_t = LayoutArg::Uniform)]
        layout: LayoutArg,
        /// Append an oracle check after every frame.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SliceArg {
    Csv,
    Pgm,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Uniform,
    Clustered,
    Plane,
}

fn parse_axis(s: &str) -> Result<AblationAxis, String> {
    s.parse()
}

fn parse_coord(s: &str) -> Result<Coord, String> {
    let v: Vec<i32> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("invalid coordinate `{s}`, expected x,y,z")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Coord::new(x, y, z)),
        _ => Err(format!("invalid coordinate `{s}`, expected x,y,z")),
    }
}

/// Verification failed; distinct from ordinary errors.
#[derive(Debug)]
struct Mismatch(String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Mismatch>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path) -> Result<Scenario> {
    Ok(scenario::load_scenario(path)?)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Transform { scenario, mode, out } => {
            let s = load(&scenario)?;
            let run = bench::run_scenario(&s, mode)?;
            bench::write_frame_csv(&run.rows, output(out.as_deref())?)?;
            let t = run.totals();
            eprintln!(
                "{} frames, {:.3} ms, lowered {} raised {} neighbor_queries {} processed {}",
                run.rows.len(),
                run.total_ms(),
                t.lowered,
                t.raised,
                t.neighbor_queries,
                t.processed()
            );
            if !run.passed() {
                for c in &run.checks {
                    for m in &c.mismatches {
                        eprintln!("  after frame {}: {} {:?}", c.after_frame, m.coord, m.kind);
                    }
                }
                return Err(Mismatch(format!("{} cells disagree with the oracle", run.mismatch_count())).into());
            }
        }
        Command::Ablate {
            axis,
            values,
            repeats,
            seed,
            range_cells,
            dmax_cells,
            obstacles,
            out,
        } => {
            let settings = AblationSettings {
                repeats,
                seed,
                range_cells,
                dmax_cells,
                n_obstacles: obstacles,
                values,
                ..Default::default()
            };
            let rows = bench::run_ablation(axis, &settings)?;
            bench::write_ablation_csv(&rows, output(out.as_deref())?)?;
            let (a, b) = match axis {
                AblationAxis::GlobalVsIncremental => ("incremental", "global"),
                _ => ("optimized", "baseline"),
            };
            for (value, ratio) in bench::speedups(&rows, a, b) {
                eprintln!("{axis} {value}: {b}/{a} time ratio {ratio:.3}");
            }
            for r in rows.iter().filter(|r| r.series == a) {
                eprintln!(
                    "{axis} {}: memory {:.1}% of dense",
                    r.value,
                    100.0 * r.mean_bytes / r.dense_bytes as f64
                );
            }
        }
        Command::Verify { scenario, inject_fault } => {
            let s = load(&scenario)?;
            let target = s.header.region.origin;
            let report = bench::verify_scenario(&s, |f| {
                if inject_fault {
                    inject(f, target);
                }
            })?;
            println!(
                "checks {}  optimized neighbor_queries {}  baseline neighbor_queries {}",
                report.checks, report.optimized.neighbor_queries, report.baseline.neighbor_queries
            );
            if report.passed() {
                println!("PASS");
            } else {
                for (label, list) in [("optimized", &report.optimized_mismatches), ("baseline", &report.baseline_mismatches)] {
                    for m in list {
                        println!("{label} mismatch at {}: {:?}", m.coord, m.kind);
                    }
                }
                for c in &report.mode_disagreements {
                    println!("modes disagree at {c}");
                }
                return Err(Mismatch("verification failed".into()).into());
            }
        }
        Command::Slice {
            scenario,
            z,
            format,
            mode,
            out,
        } => {
            let s = load(&scenario)?;
            let mut run = bench::run_scenario(&s, mode)?;
            let format = match format {
                SliceArg::Csv => SliceFormat::Csv,
                SliceArg::Pgm => SliceFormat::Pgm,
            };
            scenario::export_slice(&mut run.field, &s.header.region, z, &out, format)?;
        }
        Command::Plan {
            map,
            start,
            goal,
            alpha,
            theta,
            dmax_cells,
            slice_out,
        } => {
            let (header, obstacles) = scenario::load_obstacle_map(&map)?;
            let d = dmax_cells.unwrap_or(header.dmax_cells);
            let mut field = EdtField::new(d * d, Mode::Optimized)?;
            for o in obstacles {
                field.set_obstacle(o)?;
            }
            field.distance_transform();
            let mut q = PathQuery64::new(start, goal, alpha, header.region);
            q.theta = theta;
            let path = vdbedt::plan_path(&field, &q)?;
            for c in &path.cells {
                println!("{} {} {}", c.x, c.y, c.z);
            }
            eprintln!(
                "cells {}  length {:.4}  clearance {:.4}  total {:.4}  min clearance {:.4}",
                path.cells.len(),
                path.length_cost,
                path.clearance_cost,
                path.total_cost,
                path.min_clearance(&field)
            );
            if let Some(p) = slice_out {
                let mut rows = scenario::slice_values(&mut field, &header.region, start.z)?;
                for c in path.cells.iter().filter(|c| c.z == start.z) {
                    let (x, y) = ((c.x - header.region.origin.x) as usize, (c.y - header.region.origin.y) as usize);
                    rows[y][x] = 0;
                }
                std::fs::write(&p, scenario::encode_slice(&rows, field.dmax_sq(), SliceFormat::Pgm))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Generate {
            range_cells,
            obstacles,
            churn,
            frames,
            seed,
            dmax_cells,
            layout,
            check,
            out,
        } => {
            let mut spec = GeneratorSpec::new(range_cells, obstacles, churn, frames, seed).dmax_cells(dmax_cells);
            spec.layout = match layout {
                LayoutArg::Uniform => Layout::Uniform,
                LayoutArg::Clustered => Layout::Clustered { clusters: 3, radius: 5 },
                LayoutArg::Plane => Layout::Plane,
            };
            spec.check = check;
            let s = scenario::generate_scenario(&spec)?;
            scenario::save_scenario(&s, &out)?;
        }
    }
    Ok(())
}

/// Claims the region origin is an obstacle, which no valid field does
/// unless it really is one.
fn inject(field: &mut EdtField, c: Coord) {
    if let Ok(mut r) = field.record(c) {
        if r.dist == 0 {
            r.dist = 1;
        } else {
            r.dist = 0;
            r.obst = c;
        }
        if let Err(e) = field.corrupt_record(c, r) {
            eprintln!("fault injection failed: {e}");
        }
    }
}
