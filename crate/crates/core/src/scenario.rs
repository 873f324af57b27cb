//! Scenario files, obstacle maps, the seeded scenario generator and
//! distance-field slice exports.
//!
//! # Scenario format (`vdbedt/1`)
//!
//! Line oriented ASCII. The first line is the literal `vdbedt/1`; header
//! lines follow in this order, then one event per line:
//!
//! ```text
//! vdbedt/1
//! res 0.2
//! dmax 10
//! seed 42
//! region -10 -10 -10 120 120 120
//! A 3 4 5
//! R 3 4 5
//! T
//! G
//! C
//! ```
//!
//! `A`/`R` add and remove an obstacle, `T` runs an incremental transform,
//! `G` a global transform and `C` checks the field against the brute-force
//! oracle. Blank lines and lines starting with `#` are ignored. An obstacle
//! map uses the same syntax but may contain only `A` events.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::coord::{sqdist, Coord};
use crate::edt::EdtField;
use crate::error::ScenarioError;
use crate::oracle::Region;

pub const FORMAT_TAG: &str = "vdbedt/1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioHeader {
    /// Metres per cell.
    pub resolution: f64,
    /// Truncation distance in cells.
    pub dmax_cells: u32,
    pub seed: u64,
    pub region: Region,
}

impl ScenarioHeader {
    pub fn dmax_sq(&self) -> u32 {
        self.dmax_cells * self.dmax_cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Add(Coord),
    Remove(Coord),
    Transform,
    GlobalTransform,
    Check,
}

impl Event {
    pub fn coord(&self) -> Option<Coord> {
        match *self {
            Event::Add(c) | Event::Remove(c) => Some(c),
            _ => None,
        }
    }

    fn ends_frame(&self) -> bool {
        matches!(self, Event::Transform | Event::GlobalTransform)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub header: ScenarioHeader,
    pub events: Vec<Event>,
}

/// Converts a metric threshold to whole cells, rounding up.
pub fn dmax_cells_from_metres(dmax_m: f64, resolution: f64) -> u32 {
    (dmax_m / resolution).ceil() as u32
}

impl Scenario {
    /// Number of frames, i.e. transform events.
    pub fn frames(&self) -> usize {
        self.events.iter().filter(|e| e.ends_frame()).count()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (index, e) in self.events.iter().enumerate() {
            if let Some(coord) = e.coord() {
                if !self.header.region.contains(coord) {
                    return Err(ScenarioError::OutOfRegion { index, coord });
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let r = &h.region;
        let mut out = String::with_capacity(16 * self.events.len() + 96);
        out.push_str(FORMAT_TAG);
        out.push('\n');
        let _ = writeln!(out, "res {}", h.resolution);
        let _ = writeln!(out, "dmax {}", h.dmax_cells);
        let _ = writeln!(out, "seed {}", h.seed);
        let _ = writeln!(
            out,
            "region {} {} {} {} {} {}",
            r.origin.x, r.origin.y, r.origin.z, r.dims[0], r.dims[1], r.dims[2]
        );
        for e in &self.events {
            let _ = match e {
                Event::Add(c) => writeln!(out, "A {} {} {}", c.x, c.y, c.z),
                Event::Remove(c) => writeln!(out, "R {} {} {}", c.x, c.y, c.z),
                Event::Transform => writeln!(out, "T"),
                Event::GlobalTransform => writeln!(out, "G"),
                Event::Check => writeln!(out, "C"),
            };
        }
        out
    }

    /// Parses scenario text; `source` names the input in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Scenario, ScenarioError> {
        let err = |line: usize, msg: String| ScenarioError::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        match lines.next() {
            Some((_, FORMAT_TAG)) => {}
            Some((n, other)) => {
                return Err(err(n, format!("expected `{FORMAT_TAG}`, found `{other}`")))
            }
            None => return Err(err(0, "empty input".into())),
        }

        let mut header_field = |key: &str| -> Result<(usize, Vec<&str>), ScenarioError> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing `{key}` header")))?;
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some(k) if k == key => Ok((n, toks.collect())),
                _ => Err(err(n, format!("expected `{key}` header, found `{line}`"))),
            }
        };

        fn one<T: std::str::FromStr>(n: usize, toks: &[&str], what: &str) -> Result<T, (usize, String)> {
            match toks {
                [v] => v
                    .parse()
                    .map_err(|_| (n, format!("invalid {what} `{v}`"))),
                _ => Err((n, format!("`{what}` takes exactly one value"))),
            }
        }

        let (n, toks) = header_field("res")?;
        let resolution: f64 = one::<f64>(n, &toks, "res").map_err(|(n, m)| err(n, m))?;
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(err(n, format!("resolution must be positive, got {resolution}")));
        }
        let (n, toks) = header_field("dmax")?;
        let dmax_cells: u32 = one::<u32>(n, &toks, "dmax").map_err(|(n, m)| err(n, m))?;
        if dmax_cells == 0 || dmax_cells > 46_340 {
            return Err(err(n, format!("dmax {dmax_cells} out of range")));
        }
        let (n, toks) = header_field("seed")?;
        let seed: u64 = one::<u64>(n, &toks, "seed").map_err(|(n, m)| err(n, m))?;
        let (n, toks) = header_field("region")?;
        if toks.len() != 6 {
            return Err(err(n, "`region` takes 6 integers".into()));
        }
        let ints: Vec<i64> = toks
            .iter()
            .map(|t| t.parse::<i64>().map_err(|_| err(n, format!("invalid integer `{t}`"))))
            .collect::<Result<_, _>>()?;
        let to_i32 = |v: i64| i32::try_from(v).map_err(|_| err(n, format!("{v} out of range")));
        let to_dim = |v: i64| match u32::try_from(v) {
            Ok(d) if d > 0 => Ok(d),
            _ => Err(err(n, format!("region dimension {v} must be positive"))),
        };
        let region = Region::new(
            Coord::new(to_i32(ints[0])?, to_i32(ints[1])?, to_i32(ints[2])?),
            [to_dim(ints[3])?, to_dim(ints[4])?, to_dim(ints[5])?],
        );

        let mut events = Vec::new();
        for (n, line) in lines {
            let mut toks = line.split_whitespace();
            let op = toks.next().unwrap_or_default();
            let rest: Vec<&str> = toks.collect();
            let event = match op {
                "A" | "R" => {
                    if rest.len() != 3 {
                        return Err(err(n, format!("`{op}` takes 3 coordinates")));
                    }
                    let v: Vec<i32> = rest
                        .iter()
                        .map(|t| t.parse().map_err(|_| err(n, format!("invalid coordinate `{t}`"))))
                        .collect::<Result<_, _>>()?;
                    let c = Coord::new(v[0], v[1], v[2]);
                    if op == "A" {
                        Event::Add(c)
                    } else {
                        Event::Remove(c)
                    }
                }
                "T" | "G" | "C" => {
                    if !rest.is_empty() {
                        return Err(err(n, format!("`{op}` takes no arguments")));
                    }
                    match op {
                        "T" => Event::Transform,
                        "G" => Event::GlobalTransform,
                        _ => Event::Check,
                    }
                }
                other => return Err(err(n, format!("unknown event `{other}`"))),
            };
            events.push(event);
        }
        let s = Scenario {
            header: ScenarioHeader {
                resolution,
                dmax_cells,
                seed,
                region,
            },
            events,
        };
        s.validate()?;
        Ok(s)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::parse(&text, &path.display().to_string())
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, scenario.to_text()).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an obstacle map: a scenario file whose events are all adds.
pub fn load_obstacle_map(path: impl AsRef<Path>) -> Result<(ScenarioHeader, Vec<Coord>), ScenarioError> {
    let path = path.as_ref();
    let s = load_scenario(path)?;
    obstacle_map_from(s, &path.display().to_string())
}

pub fn obstacle_map_from(s: Scenario, source: &str) -> Result<(ScenarioHeader, Vec<Coord>), ScenarioError> {
    let mut out = Vec::with_capacity(s.events.len());
    for (i, e) in s.events.iter().enumerate() {
        match e {
            Event::Add(c) => out.push(*c),
            other => {
                return Err(ScenarioError::Parse {
                    path: source.to_string(),
                    line: 0,
                    msg: format!("obstacle maps may only contain adds; event {i} is {other:?}"),
                })
            }
        }
    }
    Ok((s.header, out))
}

pub fn save_obstacle_map(
    header: ScenarioHeader,
    obstacles: &[Coord],
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    let s = Scenario {
        header,
        events: obstacles.iter().map(|&c| Event::Add(c)).collect(),
    };
    s.validate()?;
    save_scenario(&s, path)
}

/// SplitMix64 (Steele, Lea & Flood): state advances by
/// `0x9E3779B97F4A7C15`; output is the state mixed with
/// `z = (z ^ z>>30)·0xBF58476D1CE4E5B9; z = (z ^ z>>27)·0x94D049BB133111EB; z ^ z>>31`.
///
/// `below(n)` maps a draw to `[0, n)` as `(draw · n) >> 64`.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform integer in `lo..hi`.
    pub fn range_i32(&mut self, lo: i32, hi: i32) -> i32 {
        debug_assert!(lo < hi);
        lo + self.below((hi - lo) as u64) as i32
    }
}

/// Where generated obstacles and changes are placed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layout {
    /// Uniform in the cube `[0, range)³`.
    Uniform,
    /// `clusters` blobs of radius `radius`; every frame each blob centre
    /// moves by up to two cells per axis and its changes are drawn inside the
    /// ball around the moved centre.
    Clustered { clusters: u32, radius: u32 },
    /// Uniform on the plane `z = range / 2`.
    Plane,
}

/// Parameters of [`generate_scenario`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorSpec {
    /// Side of the obstacle cube, in cells.
    pub range: u32,
    pub n_obstacles: u32,
    /// Fraction of obstacles replaced per frame after the first.
    pub churn_fraction: f64,
    /// Frames including the initial build.
    pub frames: u32,
    pub seed: u64,
    pub dmax_cells: u32,
    pub resolution: f64,
    pub layout: Layout,
    /// Append a `C` after every transform.
    pub check: bool,
}

impl GeneratorSpec {
    pub fn new(range: u32, n_obstacles: u32, churn_fraction: f64, frames: u32, seed: u64) -> Self {
        GeneratorSpec {
            range,
            n_obstacles,
            churn_fraction,
            frames,
            seed,
            dmax_cells: 10,
            resolution: 0.2,
            layout: Layout::Uniform,
            check: false,
        }
    }

    pub fn dmax_cells(mut self, d: u32) -> Self {
        self.dmax_cells = d;
        self
    }

    pub fn layout(mut self, layout: Layout) -> Self {
        self.layout = layout;
        self
    }

    pub fn with_checks(mut self) -> Self {
        self.check = true;
        self
    }

    /// Cells replaced in every frame after the first.
    pub fn changes_per_frame(&self) -> u32 {
        (self.churn_fraction * self.n_obstacles as f64).round() as u32
    }

    /// Bounding box of all obstacles plus a margin of `dmax_cells`.
    pub fn region(&self) -> Region {
        let m = self.dmax_cells as i32;
        let side = self.range + 2 * self.dmax_cells;
        let z_side = match self.layout {
            Layout::Plane => self.range + 2 * self.dmax_cells,
            _ => side,
        };
        Region::new(Coord::new(-m, -m, -m), [side, side, z_side])
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Spec(m));
        if !(0.0..=1.0).contains(&self.churn_fraction) {
            return bad(format!("churn fraction {} not in [0, 1]", self.churn_fraction));
        }
        if self.range == 0 || self.range > 1 << 20 {
            return bad(format!("range {} out of bounds", self.range));
        }
        if self.dmax_cells == 0 || self.dmax_cells > 46_340 {
            return bad(format!("dmax {} out of bounds", self.dmax_cells));
        }
        if self.frames == 0 {
            return bad("need at least one frame".into());
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return bad(format!("resolution {} must be positive", self.resolution));
        }
        let capacity: u64 = match self.layout {
            Layout::Uniform => (self.range as u64).pow(3),
            Layout::Plane => (self.range as u64).pow(2),
            Layout::Clustered { clusters, radius } => {
                if clusters == 0 {
                    return bad("need at least one cluster".into());
                }
                if 2 * radius + 1 > self.range {
                    return bad(format!("cluster radius {radius} does not fit range {}", self.range));
                }
                clusters as u64 * ball_offsets(radius).len() as u64
            }
        };
        // adds must find free cells that were not just removed
        if 3 * self.n_obstacles as u64 > capacity {
            return bad(format!(
                "{} obstacles is too dense for {capacity} candidate cells",
                self.n_obstacles
            ));
        }
        Ok(())
    }
}

fn ball_offsets(radius: u32) -> Vec<Coord> {
    let r = radius as i32;
    let mut v = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            for z in -r..=r {
                let c = Coord::new(x, y, z);
                if sqdist(c, Coord::new(0, 0, 0)) <= (r * r) as u64 {
                    v.push(c);
                }
            }
        }
    }
    v
}

/// Obstacle set with insertion order, so random removal is reproducible.
#[derive(Default)]
struct OrderedSet {
    items: Vec<Coord>,
    index: std::collections::HashMap<Coord, usize>,
}

impl OrderedSet {
    fn insert(&mut self, c: Coord) -> bool {
        if self.index.contains_key(&c) {
            return false;
        }
        self.index.insert(c, self.items.len());
        self.items.push(c);
        true
    }

    fn swap_remove_at(&mut self, i: usize) -> Coord {
        let c = self.items.swap_remove(i);
        self.index.remove(&c);
        if let Some(&moved) = self.items.get(i) {
            self.index.insert(moved, i);
        }
        c
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

/// Produces a reproducible scenario: frame 0 places `n_obstacles`, each
/// later frame removes `changes_per_frame` of them and adds as many new
/// ones, and every frame ends with `T` (plus `C` when checks are on).
pub fn generate_scenario(spec: &GeneratorSpec) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let range = spec.range as i32;
    let mut events = Vec::new();
    let close_frame = |events: &mut Vec<Event>| {
        events.push(Event::Transform);
        if spec.check {
            events.push(Event::Check);
        }
    };
    let k = spec.changes_per_frame() as usize;

    match spec.layout {
        Layout::Uniform | Layout::Plane => {
            let plane = matches!(spec.layout, Layout::Plane);
            let draw = |rng: &mut SplitMix64| {
                let x = rng.range_i32(0, range);
                let y = rng.range_i32(0, range);
                let z = if plane { range / 2 } else { rng.range_i32(0, range) };
                Coord::new(x, y, z)
            };
            let mut live = OrderedSet::default();
            while live.len() < spec.n_obstacles as usize {
                let c = draw(&mut rng);
                if live.insert(c) {
                    events.push(Event::Add(c));
                }
            }
            close_frame(&mut events);
            for _ in 1..spec.frames {
                let mut removed = HashSet::with_capacity(k);
                for _ in 0..k.min(live.len()) {
                    let i = rng.below(live.len() as u64) as usize;
                    let c = live.swap_remove_at(i);
                    removed.insert(c);
                    events.push(Event::Remove(c));
                }
                let mut added = 0;
                while added < removed.len() {
                    let c = draw(&mut rng);
                    if !removed.contains(&c) && live.insert(c) {
                        events.push(Event::Add(c));
                        added += 1;
                    }
                }
                close_frame(&mut events);
            }
        }
        Layout::Clustered { clusters, radius } => {
            let ball = ball_offsets(radius);
            let r = radius as i32;
            let mut live = OrderedSet::default();
            let mut centres = Vec::with_capacity(clusters as usize);
            let mut members: Vec<OrderedSet> = Vec::new();
            let per = (spec.n_obstacles / clusters) as usize;
            let extra = (spec.n_obstacles % clusters) as usize;
            for i in 0..clusters as usize {
                let centre = Coord::new(
                    rng.range_i32(r, range - r),
                    rng.range_i32(r, range - r),
                    rng.range_i32(r, range - r),
                );
                centres.push(centre);
                let mut set = OrderedSet::default();
                let want = per + usize::from(i < extra);
                let mut attempts = 0;
                while set.len() < want && attempts < 64 * ball.len() {
                    attempts += 1;
                    let o = ball[rng.below(ball.len() as u64) as usize];
                    let c = centre.offset(o.x, o.y, o.z);
                    if live.insert(c) {
                        set.insert(c);
                        events.push(Event::Add(c));
                    }
                }
                members.push(set);
            }
            close_frame(&mut events);
            for _ in 1..spec.frames {
                let mut removed = HashSet::new();
                for (ci, set) in members.iter_mut().enumerate() {
                    let kc = (spec.churn_fraction * set.len() as f64).round() as usize;
                    let mut this_removed = Vec::with_capacity(kc);
                    for _ in 0..kc {
                        let c = set.swap_remove_at(rng.below(set.len() as u64) as usize);
                        live.swap_remove_at(live.index[&c]);
                        removed.insert(c);
                        this_removed.push(c);
                        events.push(Event::Remove(c));
                    }
                    let step = |rng: &mut SplitMix64, v: i32| (v + rng.range_i32(-2, 3)).clamp(r, range - r - 1);
                    let old = centres[ci];
                    let centre = Coord::new(step(&mut rng, old.x), step(&mut rng, old.y), step(&mut rng, old.z));
                    centres[ci] = centre;
                    let mut added = 0;
                    let mut attempts = 0;
                    while added < this_removed.len() && attempts < 64 * ball.len() {
                        attempts += 1;
                        let o = ball[rng.below(ball.len() as u64) as usize];
                        let c = centre.offset(o.x, o.y, o.z);
                        if !removed.contains(&c) && live.insert(c) {
                            set.insert(c);
                            events.push(Event::Add(c));
                            added += 1;
                        }
                    }
                }
                close_frame(&mut events);
            }
        }
    }
    let s = Scenario {
        header: ScenarioHeader {
            resolution: spec.resolution,
            dmax_cells: spec.dmax_cells,
            seed: spec.seed,
            region: spec.region(),
        },
        events,
    };
    s.validate()?;
    Ok(s)
}

/// Output encoding for [`export_slice`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceFormat {
    /// One row per `y`, comma-separated squared distances along `x`.
    Csv,
    /// Binary 8-bit greyscale (`P5`), `round(255 · dist / dmax_sq)` per pixel.
    Pgm,
}

impl std::str::FromStr for SliceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(SliceFormat::Csv),
            "pgm" => Ok(SliceFormat::Pgm),
            other => Err(format!("unknown slice format `{other}`")),
        }
    }
}

/// Squared distances on the plane `z` over the x/y extent of `region`,
/// row-major with `y` outer.
pub fn slice_values(field: &mut EdtField, region: &Region, z: i32) -> Result<Vec<Vec<u32>>, ScenarioError> {
    let mut rows = Vec::with_capacity(region.dims[1] as usize);
    for y in 0..region.dims[1] as i32 {
        let mut row = Vec::with_capacity(region.dims[0] as usize);
        for x in 0..region.dims[0] as i32 {
            let c = Coord::new(region.origin.x + x, region.origin.y + y, z);
            row.push(field.record(c)?.dist);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Encodes a slice. CSV rows end in `\n`; the PGM header is
/// `P5\n<width> <height>\n255\n` followed by one byte per pixel.
pub fn encode_slice(rows: &[Vec<u32>], dmax_sq: u32, format: SliceFormat) -> Vec<u8> {
    match format {
        SliceFormat::Csv => {
            let mut s = String::new();
            for row in rows {
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{v}");
                }
                s.push('\n');
            }
            s.into_bytes()
        }
        SliceFormat::Pgm => {
            let w = rows.first().map_or(0, Vec::len);
            let mut out = format!("P5\n{w} {}\n255\n", rows.len()).into_bytes();
            for row in rows {
                for &v in row {
                    out.push(grey_level(v, dmax_sq));
                }
            }
            out
        }
    }
}

/// `round(255 · dist / dmax_sq)` with halves rounded up, in exact integer arithmetic.
pub fn grey_level(dist: u32, dmax_sq: u32) -> u8 {
    let v = (510 * dist.min(dmax_sq) as u64 + dmax_sq as u64) / (2 * dmax_sq as u64);
    v as u8
}

/// Writes the `z` slice of a quiescent field over `region`'s x/y extent.
pub fn export_slice(
    field: &mut EdtField,
    region: &Region,
    z: i32,
    path: impl AsRef<Path>,
    format: SliceFormat,
) -> Result<(), ScenarioError> {
    let rows = slice_values(field, region, z)?;
    let bytes = encode_slice(&rows, field.dmax_sq(), format);
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}
