use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mesh::{child_triangle, locate, root_triangle, triangle_contains, Triangle};
use super::{Mesh, SkyCoord, SphereError, TrixelId, UnitVec3};

// Slack added to every intersection test, in radians. Larger than the point
// location tolerance so that a point assigned to a cell is never dropped.
const COVER_MARGIN: f64 = 1e-11;

/// All points within `radius` degrees of `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCone", into = "RawCone")]
pub struct Cone {
    center: SkyCoord,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCone {
    ra: f64,
    dec: f64,
    radius: f64,
}

impl TryFrom<RawCone> for Cone {
    type Error = SphereError;
    fn try_from(r: RawCone) -> Result<Cone, SphereError> {
        Cone::new(SkyCoord::new(r.ra, r.dec)?, r.radius)
    }
}

impl From<Cone> for RawCone {
    fn from(c: Cone) -> RawCone {
        RawCone { ra: c.center.ra(), dec: c.center.dec(), radius: c.radius }
    }
}

impl Cone {
    pub fn new(center: SkyCoord, radius: f64) -> Result<Cone, SphereError> {
        if !(0.0..=180.0).contains(&radius) {
            return Err(SphereError::InvalidRadius(radius));
        }
        Ok(Cone { center, radius })
    }

    pub fn center(&self) -> SkyCoord {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, p: SkyCoord) -> bool {
        super::angular_distance(self.center, p) <= self.radius
    }

    /// The same cone widened by `extra` degrees, capped at the whole sky.
    pub fn widened(&self, extra: f64) -> Cone {
        Cone { center: self.center, radius: (self.radius + extra).min(180.0) }
    }
}

/// Cells covering a cone: `full` cells lie entirely inside it, `partial`
/// cells straddle its boundary. Both lists are sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrixelCover {
    pub full: Vec<TrixelId>,
    pub partial: Vec<TrixelId>,
}

impl TrixelCover {
    pub fn len(&self) -> usize {
        self.full.len() + self.partial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True if `t` is listed or descends from a listed cell.
    pub fn covers(&self, t: TrixelId) -> bool {
        self.full.iter().chain(&self.partial).any(|c| c.contains_id(t))
    }
}

/// Distance in radians from `p` to the minor great-circle arc `a -> b`.
pub fn arc_distance(p: &UnitVec3, a: &UnitVec3, b: &UnitVec3) -> f64 {
    let n = a.cross(b);
    let nl = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let n = [n[0] / nl, n[1] / nl, n[2] / nl];
    let off = n[0] * p.x() + n[1] * p.y() + n[2] * p.z();
    let proj = [p.x() - off * n[0], p.y() - off * n[1], p.z() - off * n[2]];
    let pl = (proj[0] * proj[0] + proj[1] * proj[1] + proj[2] * proj[2]).sqrt();
    if pl > 1e-15 {
        let q = UnitVec3::normalized(proj[0], proj[1], proj[2]).unwrap();
        let left = a.cross(&q);
        let right = q.cross(b);
        let dl = left[0] * n[0] + left[1] * n[1] + left[2] * n[2];
        let dr = right[0] * n[0] + right[1] * n[1] + right[2] * n[2];
        if dl >= 0.0 && dr >= 0.0 {
            return off.abs().atan2(pl);
        }
    }
    p.angle_to(a).min(p.angle_to(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Overlap {
    Outside,
    Partial,
    Full,
}

fn classify(t: &Triangle, center: &UnitVec3, radius: f64) -> Overlap {
    if radius >= PI {
        return Overlap::Full;
    }
    // Circumscribed-cap rejection.
    let sum = [t[0].x() + t[1].x() + t[2].x(), t[0].y() + t[1].y() + t[2].y(), t[0].z() + t[1].z() + t[2].z()];
    let mid = UnitVec3::normalized(sum[0], sum[1], sum[2]).unwrap();
    let cap = t.iter().map(|v| mid.angle_to(v)).fold(0.0, f64::max);
    if center.angle_to(&mid) > radius + cap + COVER_MARGIN {
        return Overlap::Outside;
    }

    let dist = [center.angle_to(&t[0]), center.angle_to(&t[1]), center.angle_to(&t[2])];
    if dist.iter().all(|d| *d <= radius - COVER_MARGIN) {
        if radius <= PI / 2.0 {
            return Overlap::Full;
        }
        // A cap wider than a hemisphere is not convex: the triangle is inside
        // only if it also stays clear of the complementary cap.
        let anti = center.neg();
        let hole = PI - radius;
        let clear = !triangle_contains(t, &anti, 0.0)
            && (0..3).all(|i| arc_distance(&anti, &t[i], &t[(i + 1) % 3]) > hole + COVER_MARGIN);
        return if clear { Overlap::Full } else { Overlap::Partial };
    }
    if dist.iter().any(|d| *d <= radius + COVER_MARGIN)
        || triangle_contains(t, center, COVER_MARGIN)
        || (0..3).any(|i| arc_distance(center, &t[i], &t[(i + 1) % 3]) <= radius + COVER_MARGIN)
    {
        Overlap::Partial
    } else {
        Overlap::Outside
    }
}

fn descend(
    id: TrixelId,
    t: &Triangle,
    center: &UnitVec3,
    radius: f64,
    depth: u8,
    out: &mut TrixelCover,
) {
    match classify(t, center, radius) {
        Overlap::Outside => {}
        Overlap::Full => out.full.push(id),
        Overlap::Partial if id.depth() == depth => out.partial.push(id),
        Overlap::Partial => {
            for k in 0..4 {
                descend(id.child(k), &child_triangle(t, k), center, radius, depth, out);
            }
        }
    }
}

/// Sound cover of `cone` with cells no deeper than `depth`.
pub fn cover_with(mesh: &Mesh, cone: &Cone, depth: u8) -> Result<TrixelCover, SphereError> {
    mesh.check_depth(depth)?;
    let center = cone.center.to_cartesian();
    let mut out = TrixelCover::default();
    if cone.radius >= 180.0 {
        out.full = (0..8).map(TrixelId::root).collect();
        return Ok(out);
    }
    if cone.radius == 0.0 {
        out.partial.push(locate(&center, depth));
        return Ok(out);
    }
    let radius = cone.radius.to_radians();
    for o in 0..8 {
        descend(TrixelId::root(o), &root_triangle(o), &center, radius, depth, &mut out);
    }
    out.full.sort_unstable();
    out.partial.sort_unstable();
    Ok(out)
}

/// [`cover_with`] using the default mesh limits.
pub fn cover(cone: &Cone, depth: u8) -> Result<TrixelCover, SphereError> {
    cover_with(&Mesh::default(), cone, depth)
}
