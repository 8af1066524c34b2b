use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{SkyCoord, SphereError, UnitVec3};

/// Deepest level an id can encode (`4 + 2 * depth` bits must fit in 64).
pub const ABSOLUTE_MAX_DEPTH: u8 = 30;
pub const DEFAULT_MAX_DEPTH: u8 = 20;
pub const DEFAULT_INDEX_DEPTH: u8 = 12;

// Tolerance for edge tests, in radians of angular distance from the edge.
const EDGE_EPS: f64 = 1e-13;

/// Address of a mesh cell.
///
/// Layout, most significant first: a marker bit, three octant bits, then two
/// bits per level selecting a child. A child is `parent * 4 + k`, so every
/// descendant shares its ancestors' bit prefix and sorting by raw id groups
/// each subtree contiguously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct TrixelId(u64);

impl TryFrom<u64> for TrixelId {
    type Error = SphereError;
    fn try_from(raw: u64) -> Result<Self, SphereError> {
        TrixelId::from_raw(raw)
    }
}

impl From<TrixelId> for u64 {
    fn from(t: TrixelId) -> u64 {
        t.0
    }
}

impl TrixelId {
    pub fn root(octant: u8) -> TrixelId {
        assert!(octant < 8, "octant {octant} out of range");
        TrixelId(8 | octant as u64)
    }

    pub fn from_raw(raw: u64) -> Result<TrixelId, SphereError> {
        let bits = 64 - raw.leading_zeros();
        if bits < 4 || !(bits - 4).is_multiple_of(2) || (bits - 4) / 2 > ABSOLUTE_MAX_DEPTH as u32 {
            return Err(SphereError::MalformedTrixel(raw));
        }
        Ok(TrixelId(raw))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn depth(self) -> u8 {
        ((64 - self.0.leading_zeros() - 4) / 2) as u8
    }

    pub fn octant(self) -> u8 {
        ((self.0 >> (2 * self.depth() as u32)) & 7) as u8
    }

    /// Child selectors from the root down.
    pub fn path(self) -> Vec<u8> {
        let d = self.depth() as u32;
        (0..d).rev().map(|i| ((self.0 >> (2 * i)) & 3) as u8).collect()
    }

    pub fn child(self, k: u8) -> TrixelId {
        debug_assert!(k < 4 && self.depth() < ABSOLUTE_MAX_DEPTH);
        TrixelId(self.0 << 2 | k as u64)
    }

    pub fn children(self) -> [TrixelId; 4] {
        [self.child(0), self.child(1), self.child(2), self.child(3)]
    }

    pub fn parent(self) -> Option<TrixelId> {
        (self.depth() > 0).then_some(TrixelId(self.0 >> 2))
    }

    /// Ancestor at `depth`, or `self` when already at or above it.
    pub fn ancestor_at(self, depth: u8) -> TrixelId {
        let d = self.depth();
        if depth >= d {
            self
        } else {
            TrixelId(self.0 >> (2 * (d - depth) as u32))
        }
    }

    /// True if `self` is `other` or one of its ancestors.
    pub fn contains_id(self, other: TrixelId) -> bool {
        other.depth() >= self.depth() && other.ancestor_at(self.depth()) == self
    }

    /// Raw ids of all descendants at `depth` (which must be >= own depth).
    pub fn range_at(self, depth: u8) -> Range<u64> {
        let d = self.depth();
        assert!(depth >= d, "range_at depth {depth} above trixel depth {d}");
        let shift = 2 * (depth - d) as u32;
        (self.0 << shift)..((self.0 + 1) << shift)
    }
}

impl std::fmt::Display for TrixelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", if self.0 & 4 == 0 { 'N' } else { 'S' })?;
        write!(f, "{}", self.octant() & 3)?;
        for k in self.path() {
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

/// Spherical triangle given by counter-clockwise vertices.
pub(crate) type Triangle = [UnitVec3; 3];

pub(crate) fn root_triangle(octant: u8) -> Triangle {
    let sx = if octant & 1 == 0 { 1.0 } else { -1.0 };
    let sy = if octant & 2 == 0 { 1.0 } else { -1.0 };
    let sz = if octant & 4 == 0 { 1.0 } else { -1.0 };
    let v0 = UnitVec3 { x: sx, y: 0.0, z: 0.0 };
    let v1 = UnitVec3 { x: 0.0, y: sy, z: 0.0 };
    let v2 = UnitVec3 { x: 0.0, y: 0.0, z: sz };
    if sx * sy * sz > 0.0 {
        [v0, v1, v2]
    } else {
        [v0, v2, v1]
    }
}

/// Child `k` of triangle `t`; children 0..2 sit at vertices 0..2, child 3 is
/// the central triangle of the edge midpoints.
pub(crate) fn child_triangle(t: &Triangle, k: u8) -> Triangle {
    let [v0, v1, v2] = *t;
    let w0 = v1.midpoint(&v2);
    let w1 = v0.midpoint(&v2);
    let w2 = v0.midpoint(&v1);
    match k {
        0 => [v0, w2, w1],
        1 => [v1, w0, w2],
        2 => [v2, w1, w0],
        _ => [w0, w1, w2],
    }
}

pub(crate) fn triangle_of(id: TrixelId) -> Triangle {
    let mut t = root_triangle(id.octant());
    for k in id.path() {
        t = child_triangle(&t, k);
    }
    t
}

/// Signed angular offset of `p` from the great circle through `a -> b`
/// (positive on the left, i.e. inside a counter-clockwise triangle).
pub(crate) fn edge_side(a: &UnitVec3, b: &UnitVec3, p: &UnitVec3) -> f64 {
    let n = a.cross(b);
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    (n[0] * p.x + n[1] * p.y + n[2] * p.z) / len
}

pub(crate) fn triangle_contains(t: &Triangle, p: &UnitVec3, eps: f64) -> bool {
    edge_side(&t[0], &t[1], p) >= -eps
        && edge_side(&t[1], &t[2], p) >= -eps
        && edge_side(&t[2], &t[0], p) >= -eps
}

fn root_octant_of(p: &UnitVec3) -> u8 {
    (p.x < 0.0) as u8 | ((p.y < 0.0) as u8) << 1 | ((p.z < 0.0) as u8) << 2
}

/// Mesh parameters. Only the depth limit is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    pub max_depth: u8,
}

impl Default for Mesh {
    fn default() -> Self {
        Mesh { max_depth: DEFAULT_MAX_DEPTH }
    }
}

impl Mesh {
    pub fn new(max_depth: u8) -> Result<Mesh, SphereError> {
        if max_depth > ABSOLUTE_MAX_DEPTH {
            return Err(SphereError::DepthOutOfRange { depth: max_depth, max: ABSOLUTE_MAX_DEPTH });
        }
        Ok(Mesh { max_depth })
    }

    pub(crate) fn check_depth(&self, depth: u8) -> Result<(), SphereError> {
        if depth > self.max_depth {
            Err(SphereError::DepthOutOfRange { depth, max: self.max_depth })
        } else {
            Ok(())
        }
    }

    /// Cell at `depth` containing `c`. A point on a shared edge or vertex
    /// goes to the candidate with the lowest path.
    pub fn trixel_of(&self, c: SkyCoord, depth: u8) -> Result<TrixelId, SphereError> {
        self.check_depth(depth)?;
        Ok(locate(&c.to_cartesian(), depth))
    }

    pub fn trixel_bounds(&self, t: TrixelId) -> Result<[UnitVec3; 3], SphereError> {
        self.check_depth(t.depth())?;
        Ok(triangle_of(t))
    }
}

pub(crate) fn locate(p: &UnitVec3, depth: u8) -> TrixelId {
    let octant = root_octant_of(p);
    let mut id = TrixelId::root(octant);
    let mut t = root_triangle(octant);
    for _ in 0..depth {
        let [v0, v1, v2] = t;
        let w0 = v1.midpoint(&v2);
        let w1 = v0.midpoint(&v2);
        let w2 = v0.midpoint(&v1);
        // Children 0..2 are cut off from the centre by one inner edge each.
        let k = if edge_side(&w2, &w1, p) >= -EDGE_EPS {
            0
        } else if edge_side(&w0, &w2, p) >= -EDGE_EPS {
            1
        } else if edge_side(&w1, &w0, p) >= -EDGE_EPS {
            2
        } else {
            3
        };
        t = match k {
            0 => [v0, w2, w1],
            1 => [v1, w0, w2],
            2 => [v2, w1, w0],
            _ => [w0, w1, w2],
        };
        id = id.child(k);
    }
    id
}

/// [`Mesh::trixel_of`] with the default depth limit.
pub fn trixel_of(c: SkyCoord, depth: u8) -> Result<TrixelId, SphereError> {
    Mesh::default().trixel_of(c, depth)
}

/// Vertices of a cell, counter-clockwise seen from outside the sphere.
pub fn trixel_bounds(t: TrixelId) -> Result<[UnitVec3; 3], SphereError> {
    Mesh::new(ABSOLUTE_MAX_DEPTH)?.trixel_bounds(t)
}
