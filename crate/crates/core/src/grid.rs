//! Sparse hierarchical voxel grid in the style of a VDB tree.
//!
//! The tree is a hash-table root over a fixed number of internal levels whose
//! branching factors are powers of two, ending in dense leaf bricks. Internal
//! slots hold either a child node or a tile value covering the whole slot
//! region. Unallocated space reads back the background value.
//!
//! Nodes live in per-level arenas and are referenced by index, so an
//! [`Accessor`] can cache one node per level without borrowing the grid.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hash, Hasher};
use std::mem::size_of;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::coord::{Coord, DOMAIN_HALF_EXTENT};
use crate::error::GridError;

/// Default branching exponents, leaf first: 8³ leaves, 16³ and 32³ internal nodes.
pub const DEFAULT_LOG2_DIMS: [u32; 3] = [3, 4, 5];

/// Shape of the tree plus the value returned for unallocated space.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeConfig<T> {
    /// Per-level log2 branching exponents, ordered leaf first.
    pub log2_dims: Vec<u32>,
    pub background: T,
}

impl<T> TreeConfig<T> {
    pub fn new(log2_dims: impl Into<Vec<u32>>, background: T) -> Self {
        TreeConfig {
            log2_dims: log2_dims.into(),
            background,
        }
    }

    pub fn with_default_dims(background: T) -> Self {
        Self::new(DEFAULT_LOG2_DIMS.to_vec(), background)
    }

    fn validate(&self) -> Result<(), GridError> {
        if self.log2_dims.len() < 2 {
            return Err(GridError::Config(format!(
                "need at least 2 levels, got {}",
                self.log2_dims.len()
            )));
        }
        if let Some(pos) = self.log2_dims.iter().position(|&d| d == 0) {
            return Err(GridError::Config(format!("level {pos} has a zero exponent")));
        }
        let total: u32 = self.log2_dims.iter().sum();
        if total > 31 {
            return Err(GridError::Config(format!(
                "exponents sum to {total}, at most 31 fit the packed coordinate"
            )));
        }
        Ok(())
    }
}

/// Node counts and a memory estimate for a grid.
///
/// `estimated_bytes` follows a fixed formula, with `V = 2^(3·log2)` slots
/// per node, `s = size_of::<T>()` and `m = 8·ceil(V / 64)` bytes per bit mask:
///
/// * leaf: `V·s + m + 12`
/// * internal: `V·max(s, 4) + 2·m + 12`
/// * root entry: `12 + max(s, 4) + 1`
///
/// The `12` is the node origin (or root key) and `max(s, 4)` is a slot that
/// holds either a tile value or a 32-bit child index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridStats {
    /// Allocated nodes per level, leaf first.
    pub node_count: Vec<usize>,
    pub root_entries: usize,
    pub active_voxels: usize,
    pub estimated_bytes: usize,
}

impl GridStats {
    pub fn leaf_count(&self) -> usize {
        self.node_count[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct RootKey {
    x: u32,
    y: u32,
    z: u32,
}

impl Hash for RootKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(root_mix(*self));
    }
}

/// Root hash: `(x·73856093) ⊕ (y·19349663) ⊕ (z·83492791)` in wrapping
/// 64-bit arithmetic, then multiplied by `0x9E3779B97F4A7C15` to spread the
/// entropy into the high bits.
#[inline]
fn root_mix(k: RootKey) -> u64 {
    let h = (k.x as u64).wrapping_mul(73_856_093)
        ^ (k.y as u64).wrapping_mul(19_349_663)
        ^ (k.z as u64).wrapping_mul(83_492_791);
    h.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Passes through the single `u64` written by [`RootKey::hash`].
#[derive(Default)]
struct RootHasher(u64);

impl Hasher for RootHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8 | b as u64).wrapping_mul(0x100_0000_01B3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

type RootMap<T> = HashMap<RootKey, Slot<T>, BuildHasherDefault<RootHasher>>;

/// Slot payload: the tile value and child index share one slot.
#[derive(Clone, Copy, Debug)]
enum Slot<T> {
    Tile(T),
    Child(u32),
}

#[derive(Clone, Debug)]
struct BitMask(Box<[u64]>);

impl BitMask {
    fn new(bits: usize) -> Self {
        BitMask(vec![0u64; bits.div_ceil(64)].into_boxed_slice())
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.0[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.0[i >> 6] |= 1 << (i & 63);
    }

    fn count_ones(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[derive(Clone, Debug)]
struct LeafNode<T> {
    origin: Coord,
    values: Box<[T]>,
    value_mask: BitMask,
}

#[derive(Clone, Debug)]
struct InternalNode<T> {
    slots: Box<[Slot<T>]>,
    child_mask: BitMask,
    value_mask: BitMask,
}

#[derive(Clone, Copy, Debug)]
struct LevelInfo {
    log2: u32,
    /// Bits of the packed coordinate resolved below this node's slots.
    child_bits: u32,
    /// `child_bits + log2`: bits covered by one node at this level.
    node_bits: u32,
}

impl LevelInfo {
    #[inline]
    fn slot_index(&self, u: [u32; 3]) -> usize {
        let mask = (1u32 << self.log2) - 1;
        let x = (u[0] >> self.child_bits) & mask;
        let y = (u[1] >> self.child_bits) & mask;
        let z = (u[2] >> self.child_bits) & mask;
        ((x << (2 * self.log2)) | (y << self.log2) | z) as usize
    }

    #[inline]
    fn tag(&self, u: [u32; 3]) -> [u32; 3] {
        [
            u[0] >> self.node_bits,
            u[1] >> self.node_bits,
            u[2] >> self.node_bits,
        ]
    }

    fn slot_count(&self) -> usize {
        1usize << (3 * self.log2)
    }

    /// Signed offset of slot `i` from its node's origin, in cells.
    fn slot_offset(&self, i: usize) -> Coord {
        let mask = (1usize << self.log2) - 1;
        let scale = 1i32 << self.child_bits;
        let x = (i >> (2 * self.log2)) & mask;
        let y = (i >> self.log2) & mask;
        let z = i & mask;
        Coord::new(x as i32 * scale, y as i32 * scale, z as i32 * scale)
    }
}

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct CacheEntry {
    tag: [u32; 3],
    node: u32,
}

/// Per-context cache of recently visited nodes.
///
/// Internal levels keep their most recent node. Leaves keep eight ways
/// selected by the parity of the leaf's grid position, so the up to eight
/// leaves touched by a 3×3×3 neighbourhood never evict each other.
///
/// An accessor is bound to the grid it was created for; handing it to a
/// different grid silently resets it.
#[derive(Clone, Debug)]
pub struct Accessor {
    grid_id: u64,
    enabled: bool,
    entries: Vec<Option<CacheEntry>>,
    leaf_ways: [Option<CacheEntry>; 8],
    hits: Vec<u64>,
    root_lookups: u64,
}

impl Accessor {
    fn new(grid_id: u64, levels: usize, enabled: bool) -> Self {
        Accessor {
            grid_id,
            enabled,
            entries: vec![None; levels],
            leaf_ways: [None; 8],
            hits: vec![0; levels],
            root_lookups: 0,
        }
    }

    /// Number of lookups that started from the cached node at `level` (0 = leaf).
    pub fn hits(&self, level: usize) -> u64 {
        self.hits[level]
    }

    /// Number of lookups that had to start at the root table.
    pub fn root_lookups(&self) -> u64 {
        self.root_lookups
    }

    pub fn clear(&mut self) {
        self.entries.iter_mut().for_each(|e| *e = None);
        self.leaf_ways = [None; 8];
    }

    #[inline(always)]
    fn way(tag: [u32; 3]) -> usize {
        ((tag[0] & 1) | (tag[1] & 1) << 1 | (tag[2] & 1) << 2) as usize
    }

    #[inline(always)]
    fn lookup(&self, level: usize, tag: [u32; 3]) -> Option<u32> {
        let e = if level == 0 {
            self.leaf_ways[Self::way(tag)]
        } else {
            self.entries[level]
        };
        match e {
            Some(e) if e.tag == tag => Some(e.node),
            _ => None,
        }
    }

    #[inline]
    fn bind(&mut self, grid_id: u64) {
        if self.grid_id != grid_id {
            self.grid_id = grid_id;
            self.clear();
        }
    }

    #[inline]
    fn remember(&mut self, level: usize, tag: [u32; 3], node: u32) {
        if self.enabled {
            let e = Some(CacheEntry { tag, node });
            if level == 0 {
                self.leaf_ways[Self::way(tag)] = e;
            } else {
                self.entries[level] = e;
            }
        }
    }
}

/// Sparse voxel tree mapping [`Coord`] to values of type `T`.
#[derive(Debug)]
pub struct SparseGrid<T> {
    id: u64,
    levels: Vec<LevelInfo>,
    background: T,
    root: RootMap<T>,
    leaves: Vec<LeafNode<T>>,
    /// `internals[i]` holds the nodes of tree level `i + 1`.
    internals: Vec<Vec<InternalNode<T>>>,
}

impl<T: Clone> Clone for SparseGrid<T> {
    /// A clone gets a fresh identity so accessors of the original do not
    /// carry node indices over to it.
    fn clone(&self) -> Self {
        SparseGrid {
            id: NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed),
            levels: self.levels.clone(),
            background: self.background.clone(),
            root: self.root.clone(),
            leaves: self.leaves.clone(),
            internals: self.internals.clone(),
        }
    }
}

#[inline]
fn pack(c: Coord) -> Result<[u32; 3], GridError> {
    if !c.in_domain() {
        return Err(GridError::Domain(c));
    }
    let shift = |v: i32| (v as i64 + DOMAIN_HALF_EXTENT as i64) as u32;
    Ok([shift(c.x), shift(c.y), shift(c.z)])
}

/// Signed origin of the node at a level that contains packed coordinate `u`.
fn node_origin(u: [u32; 3], node_bits: u32) -> Coord {
    let floor = |v: u32| ((v >> node_bits) << node_bits) as i64 - DOMAIN_HALF_EXTENT as i64;
    Coord::new(floor(u[0]) as i32, floor(u[1]) as i32, floor(u[2]) as i32)
}

impl<T: Copy + PartialEq> SparseGrid<T> {
    pub fn new(config: TreeConfig<T>) -> Result<Self, GridError> {
        config.validate()?;
        let mut levels = Vec::with_capacity(config.log2_dims.len());
        let mut bits = 0;
        for &log2 in &config.log2_dims {
            levels.push(LevelInfo {
                log2,
                child_bits: bits,
                node_bits: bits + log2,
            });
            bits += log2;
        }
        let internal_levels = levels.len() - 1;
        Ok(SparseGrid {
            id: NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed),
            levels,
            background: config.background,
            root: RootMap::default(),
            leaves: Vec::new(),
            internals: (0..internal_levels).map(|_| Vec::new()).collect(),
        })
    }

    pub fn background(&self) -> T {
        self.background
    }

    pub fn log2_dims(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.log2).collect()
    }

    /// Number of tree levels below the root, leaves included.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Cell edge length of one leaf node.
    pub fn leaf_dim(&self) -> i32 {
        1 << self.levels[0].log2
    }

    /// True when nothing has been allocated under the root.
    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    pub fn accessor(&self) -> Accessor {
        Accessor::new(self.id, self.levels.len(), true)
    }

    /// An accessor that never caches; every lookup starts at the root.
    pub fn uncached_accessor(&self) -> Accessor {
        Accessor::new(self.id, self.levels.len(), false)
    }

    /// Replaces the background value. Only legal before any node is allocated.
    pub fn set_background(&mut self, value: T) -> Result<(), GridError> {
        if !self.is_empty() {
            return Err(GridError::State(
                "background can only be changed on an empty grid",
            ));
        }
        self.background = value;
        Ok(())
    }

    /// Reads the value at `c` without allocating.
    #[inline]
    pub fn get(&self, acc: &mut Accessor, c: Coord) -> Result<T, GridError> {
        let u = pack(c)?;
        if let Some(node) = self.cached_leaf(acc, u) {
            return Ok(self.leaves[node as usize].values[self.levels[0].slot_index(u)]);
        }
        Ok(self.get_packed(acc, u))
    }

    /// The accessor's leaf, when it contains `u`.
    #[inline(always)]
    fn cached_leaf(&self, acc: &mut Accessor, u: [u32; 3]) -> Option<u32> {
        if acc.grid_id != self.id {
            return None;
        }
        let node = acc.lookup(0, self.levels[0].tag(u))?;
        acc.hits[0] += 1;
        Some(node)
    }

    #[inline(never)]
    fn get_packed(&self, acc: &mut Accessor, u: [u32; 3]) -> T {
        acc.bind(self.id);
        let top = self.levels.len() - 1;
        let mut start = None;
        if acc.enabled {
            for (level, info) in self.levels.iter().enumerate() {
                if let Some(node) = acc.lookup(level, info.tag(u)) {
                    start = Some((level, node));
                    break;
                }
            }
        }
        let (mut level, mut node) = match start {
            Some((level, node)) => {
                acc.hits[level] += 1;
                (level, node)
            }
            None => {
                acc.root_lookups += 1;
                let t = self.levels[top].tag(u);
                match self.root.get(&RootKey {
                    x: t[0],
                    y: t[1],
                    z: t[2],
                }) {
                    None => return self.background,
                    Some(Slot::Tile(v)) => return *v,
                    Some(Slot::Child(n)) => {
                        acc.remember(top, t, *n);
                        (top, *n)
                    }
                }
            }
        };
        loop {
            let info = &self.levels[level];
            if level == 0 {
                return self.leaves[node as usize].values[info.slot_index(u)];
            }
            let internal = &self.internals[level - 1][node as usize];
            match internal.slots[info.slot_index(u)] {
                Slot::Tile(v) => return v,
                Slot::Child(child) => {
                    level -= 1;
                    node = child;
                    acc.remember(level, self.levels[level].tag(u), node);
                }
            }
        }
    }

    /// Writes `value` at `c`, allocating nodes along the path and marking the
    /// voxel active.
    #[inline]
    pub fn set(&mut self, acc: &mut Accessor, c: Coord, value: T) -> Result<(), GridError> {
        let u = pack(c)?;
        self.set_packed(acc, u, value);
        Ok(())
    }

    #[inline]
    fn set_packed(&mut self, acc: &mut Accessor, u: [u32; 3], value: T) {
        let leaf = match self.cached_leaf(acc, u) {
            Some(n) => n,
            None => self.touch_leaf(acc, u),
        };
        let i = self.levels[0].slot_index(u);
        let node = &mut self.leaves[leaf as usize];
        node.values[i] = value;
        node.value_mask.set(i);
    }

    /// Finds or allocates the leaf containing `u`, densifying tiles on the way.
    #[inline(never)]
    fn touch_leaf(&mut self, acc: &mut Accessor, u: [u32; 3]) -> u32 {
        acc.bind(self.id);
        let top = self.levels.len() - 1;
        let mut start = None;
        if acc.enabled {
            for (level, info) in self.levels.iter().enumerate() {
                if let Some(node) = acc.lookup(level, info.tag(u)) {
                    start = Some((level, node));
                    break;
                }
            }
        }
        let (mut level, mut node) = match start {
            Some((level, node)) => {
                acc.hits[level] += 1;
                (level, node)
            }
            None => {
                acc.root_lookups += 1;
                let t = self.levels[top].tag(u);
                let key = RootKey {
                    x: t[0],
                    y: t[1],
                    z: t[2],
                };
                let node = match self.root.get(&key).copied() {
                    Some(Slot::Child(n)) => n,
                    other => {
                        let fill = match other {
                            Some(Slot::Tile(v)) => v,
                            _ => self.background,
                        };
                        let n = self.alloc_node(top, u, fill);
                        self.root.insert(key, Slot::Child(n));
                        n
                    }
                };
                acc.remember(top, t, node);
                (top, node)
            }
        };
        while level > 0 {
            let info = self.levels[level];
            let i = info.slot_index(u);
            let slot = self.internals[level - 1][node as usize].slots[i];
            let child = match slot {
                Slot::Child(c) => c,
                Slot::Tile(fill) => {
                    let c = self.alloc_node(level - 1, u, fill);
                    let parent = &mut self.internals[level - 1][node as usize];
                    parent.slots[i] = Slot::Child(c);
                    parent.child_mask.set(i);
                    c
                }
            };
            level -= 1;
            node = child;
            acc.remember(level, self.levels[level].tag(u), node);
        }
        node
    }

    fn alloc_node(&mut self, level: usize, u: [u32; 3], fill: T) -> u32 {
        let n = self.levels[level].slot_count();
        if level == 0 {
            self.leaves.push(LeafNode {
                origin: node_origin(u, self.levels[0].node_bits),
                values: vec![fill; n].into_boxed_slice(),
                value_mask: BitMask::new(n),
            });
            (self.leaves.len() - 1) as u32
        } else {

            let arena = &mut self.internals[level - 1];
            arena.push(InternalNode {
                slots: vec![Slot::Tile(fill); n].into_boxed_slice(),
                child_mask: BitMask::new(n),
                value_mask: BitMask::new(n),
            });
            (arena.len() - 1) as u32
        }
    }

    /// Overwrites every active voxel with `value`, keeping the active set.
    pub fn fill_active(&mut self, value: T) {
        for leaf in &mut self.leaves {
            for (i, v) in leaf.values.iter_mut().enumerate() {
                if leaf.value_mask.get(i) {
                    *v = value;
                }
            }
        }
    }

    pub fn stats(&self) -> GridStats {
        let s = size_of::<T>();
        let slot = s.max(4);
        let mask_bytes = |v: usize| v.div_ceil(64) * 8;
        let mut node_count = Vec::with_capacity(self.levels.len());
        let mut bytes = 0usize;
        for (level, info) in self.levels.iter().enumerate() {
            let v = info.slot_count();
            let count = if level == 0 {
                self.leaves.len()
            } else {
                self.internals[level - 1].len()
            };
            let per_node = if level == 0 {
                v * s + mask_bytes(v) + 12
            } else {
                v * slot + 2 * mask_bytes(v) + 12
            };
            node_count.push(count);
            bytes += count * per_node;
        }
        bytes += self.root.len() * (12 + slot + 1);
        GridStats {
            node_count,
            root_entries: self.root.len(),
            active_voxels: self.leaves.iter().map(|l| l.value_mask.count_ones()).sum(),
            estimated_bytes: bytes,
        }
    }

    /// Active voxels in a deterministic order: root entries by ascending key
    /// `(x, y, z)`, then depth first through child slots in slot-index order,
    /// and within a leaf by slot index (`z` fastest).
    pub fn iter_active(&self) -> ActiveIter<'_, T> {
        let mut roots: Vec<_> = self
            .root
            .iter()
            .filter_map(|(k, s)| match s {
                Slot::Child(n) => Some(((k.x, k.y, k.z), *n)),
                Slot::Tile(_) => None,
            })
            .collect();
        roots.sort_unstable_by_key(|&(k, _)| k);
        let top = self.levels.len() - 1;
        ActiveIter {
            grid: self,
            roots: roots.into_iter().map(|(_, n)| n).rev().collect(),
            stack: Vec::new(),
            top,
        }
    }

    /// Checks that child masks agree with slot payloads and returns the
    /// number of mismatching slots (zero on a consistent tree).
    pub fn mask_violations(&self) -> usize {
        let mut bad = 0;
        for arena in &self.internals {
            for node in arena {
                for (i, slot) in node.slots.iter().enumerate() {
                    let is_child = matches!(slot, Slot::Child(_));
                    if is_child != node.child_mask.get(i) {
                        bad += 1;
                    }
                    if is_child && node.value_mask.get(i) {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }

    /// Replaces the slot of the internal node at `level` covering `c` with an
    /// inactive tile of `value`, allocating the path above it.
    #[cfg(test)]
    pub(crate) fn set_tile_for_test(&mut self, level: usize, c: Coord, value: T) {
        assert!(level >= 1 && level < self.levels.len());
        let u = pack(c).unwrap();
        let mut acc = self.uncached_accessor();
        let leaf = self.touch_leaf(&mut acc, u);
        let _ = leaf;
        // walk down from the root to the node at `level`
        let top = self.levels.len() - 1;
        let t = self.levels[top].tag(u);
        let Some(Slot::Child(mut node)) = self.root.get(&RootKey {
            x: t[0],
            y: t[1],
            z: t[2],
        })
        .copied() else {
            unreachable!()
        };
        let mut l = top;
        while l > level {
            let i = self.levels[l].slot_index(u);
            let Slot::Child(c) = self.internals[l - 1][node as usize].slots[i] else {
                unreachable!()
            };
            node = c;
            l -= 1;
        }
        let i = self.levels[level].slot_index(u);
        let n = &mut self.internals[level - 1][node as usize];
        n.slots[i] = Slot::Tile(value);
        n.child_mask.0[i >> 6] &= !(1 << (i & 63));
    }
}

enum Frame {
    Internal { level: usize, node: u32, next: usize },
    Leaf { node: u32, next: usize },
}

/// Iterator returned by [`SparseGrid::iter_active`].
pub struct ActiveIter<'a, T> {
    grid: &'a SparseGrid<T>,
    roots: Vec<u32>,
    stack: Vec<Frame>,
    top: usize,
}

impl<T: Copy> Iterator for ActiveIter<'_, T> {
    type Item = (Coord, T);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let Some(frame) = self.stack.last_mut() else {
                let node = self.roots.pop()?;
                self.stack.push(if self.top == 0 {
                    Frame::Leaf { node, next: 0 }
                } else {
                    Frame::Internal {
                        level: self.top,
                        node,
                        next: 0,
                    }
                });
                continue;
            };
            match frame {
                Frame::Leaf { node, next } => {
                    let leaf = &self.grid.leaves[*node as usize];
                    let info = &self.grid.levels[0];
                    while *next < leaf.values.len() {
                        let i = *next;
                        *next += 1;
                        if leaf.value_mask.get(i) {
                            let o = info.slot_offset(i);
                            let c = leaf.origin.offset(o.x, o.y, o.z);
                            return Some((c, leaf.values[i]));
                        }
                    }
                    self.stack.pop();
                }
                Frame::Internal { level, node, next } => {
                    let level = *level;
                    let internal = &self.grid.internals[level - 1][*node as usize];
                    let mut child = None;
                    while *next < internal.slots.len() {
                        let i = *next;
                        *next += 1;
                        if let Slot::Child(c) = internal.slots[i] {
                            child = Some(c);
                            break;
                        }
                    }
                    match child {
                        Some(c) if level == 1 => self.stack.push(Frame::Leaf { node: c, next: 0 }),
                        Some(c) => self.stack.push(Frame::Internal {
                            level: level - 1,
                            node: c,
                            next: 0,
                        }),
                        None => {
                            self.stack.pop();
                        }
                    }
                }
            }
        }
    }
}
