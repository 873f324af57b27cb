//! Integer grid coordinates and the 26-neighbourhood.

use std::fmt;

/// Largest magnitude accepted on any axis: coordinates live in `[-2^30, 2^30)`.
pub const DOMAIN_HALF_EXTENT: i32 = 1 << 30;

/// Signed 3-D cell coordinate, the key for every cell in the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(C)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    /// Reserved out-of-domain value used as the "no obstacle" marker in packed records.
    pub const EMPTY: Coord = Coord {
        x: i32::MIN,
        y: i32::MIN,
        z: i32::MIN,
    };

    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Coord { x, y, z }
    }

    #[inline]
    pub fn in_domain(self) -> bool {
        let ok = |v: i32| (-DOMAIN_HALF_EXTENT..DOMAIN_HALF_EXTENT).contains(&v);
        ok(self.x) && ok(self.y) && ok(self.z)
    }

    #[inline]
    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Coord {
        Coord::new(self.x + dx, self.y + dy, self.z + dz)
    }

    /// Squared Euclidean distance in cell units, exact for the whole domain.
    #[inline]
    pub fn sqdist(self, other: Coord) -> u64 {
        sqdist(self, other)
    }

    /// The in-domain 26-connected neighbours in [`NEIGHBOR_OFFSETS`] order.
    pub fn adj26(self) -> impl Iterator<Item = Coord> {
        NEIGHBOR_OFFSETS
            .iter()
            .map(move |&[dx, dy, dz]| {
                Coord::new(
                    self.x.wrapping_add(dx),
                    self.y.wrapping_add(dy),
                    self.z.wrapping_add(dz),
                )
            })
            .filter(|n| n.in_domain())
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl From<[i32; 3]> for Coord {
    fn from([x, y, z]: [i32; 3]) -> Self {
        Coord::new(x, y, z)
    }
}

impl From<(i32, i32, i32)> for Coord {
    fn from((x, y, z): (i32, i32, i32)) -> Self {
        Coord::new(x, y, z)
    }
}

/// Squared Euclidean distance between two cells.
///
/// Differences are taken in `i64` so that any pair inside the `±2^30` domain
/// yields at most `3 · 2^62`, which still fits in a `u64`.
#[inline]
pub fn sqdist(a: Coord, b: Coord) -> u64 {
    let dx = (a.x as i64 - b.x as i64).unsigned_abs();
    let dy = (a.y as i64 - b.y as i64).unsigned_abs();
    let dz = (a.z as i64 - b.z as i64).unsigned_abs();
    dx * dx + dy * dy + dz * dz
}

/// Offsets of the 26-neighbourhood: `dz` outermost, then `dy`, then `dx`,
/// each ascending over `-1, 0, 1`, with the centre skipped.
pub const NEIGHBOR_OFFSETS: [[i32; 3]; 26] = {
    let mut out = [[0i32; 3]; 26];
    let mut i = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[i] = [dx, dy, dz];
                    i += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// Free-function form of [`Coord::adj26`].
pub fn adj26(c: Coord) -> impl Iterator<Item = Coord> {
    c.adj26()
}
