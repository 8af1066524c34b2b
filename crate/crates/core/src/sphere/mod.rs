//! Spherical geometry and a hierarchical triangular mesh over the celestial
//! sphere.
//!
//! Positions are [`SkyCoord`]s in degrees. The mesh starts from the eight
//! octahedron faces and refines every spherical triangle into four children
//! by edge midpoints; [`TrixelId`] packs a cell's address into one integer so
//! that all descendants of a cell occupy a contiguous id range at any deeper
//! level. [`cover`] turns a [`Cone`] into lists of cells, which is what the
//! catalog's range scans are built on.

mod cover;
mod mesh;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cover::{arc_distance, cover, cover_with, Cone, TrixelCover};
pub use mesh::{
    trixel_bounds, trixel_of, Mesh, TrixelId, ABSOLUTE_MAX_DEPTH, DEFAULT_INDEX_DEPTH,
    DEFAULT_MAX_DEPTH,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphereError {
    #[error("invalid coordinate (ra={ra}, dec={dec})")]
    InvalidCoordinate { ra: f64, dec: f64 },
    #[error("cone radius {0} outside [0, 180] degrees")]
    InvalidRadius(f64),
    #[error("depth {depth} out of range (max {max})")]
    DepthOutOfRange { depth: u8, max: u8 },
    #[error("malformed trixel id {0:#x}")]
    MalformedTrixel(u64),
}

/// Sine and cosine of an angle in degrees, exact at multiples of 90.
pub(crate) fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    let quadrant = (r / 90.0).round();
    let rem = (r - quadrant * 90.0).to_radians();
    let (s, c) = rem.sin_cos();
    match quadrant as i64 % 4 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// A position on the sky: right ascension in [0, 360), declination in
/// [-90, 90], both in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoord", into = "RawCoord")]
pub struct SkyCoord {
    ra: f64,
    dec: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCoord {
    ra: f64,
    dec: f64,
}

impl TryFrom<RawCoord> for SkyCoord {
    type Error = SphereError;
    fn try_from(raw: RawCoord) -> Result<Self, SphereError> {
        SkyCoord::new(raw.ra, raw.dec)
    }
}

impl From<SkyCoord> for RawCoord {
    fn from(c: SkyCoord) -> Self {
        RawCoord { ra: c.ra, dec: c.dec }
    }
}

impl SkyCoord {
    /// Builds a coordinate, wrapping `ra` into [0, 360). Declinations outside
    /// [-90, 90] and non-finite input are rejected.
    pub fn new(ra: f64, dec: f64) -> Result<Self, SphereError> {
        if !ra.is_finite() || !dec.is_finite() || !(-90.0..=90.0).contains(&dec) {
            return Err(SphereError::InvalidCoordinate { ra, dec });
        }
        let mut ra = ra.rem_euclid(360.0);
        if ra >= 360.0 {
            ra = 0.0;
        }
        Ok(SkyCoord { ra, dec })
    }

    pub fn ra(&self) -> f64 {
        self.ra
    }

    pub fn dec(&self) -> f64 {
        self.dec
    }

    pub fn to_cartesian(&self) -> UnitVec3 {
        to_cartesian(*self)
    }

    pub fn from_cartesian(v: UnitVec3) -> SkyCoord {
        from_cartesian(v)
    }

    /// The point `sep` degrees away along position angle `pa` (degrees,
    /// measured from north through east).
    pub fn offset(&self, sep: f64, pa: f64) -> SkyCoord {
        let c = self.to_cartesian();
        let (east, north) = tangent_basis(&c);
        let (s, co) = sin_cos_deg(sep);
        let (sp, cp) = sin_cos_deg(pa);
        let v = UnitVec3::normalized(
            co * c.x + s * (cp * north[0] + sp * east[0]),
            co * c.y + s * (cp * north[1] + sp * east[1]),
            co * c.z + s * (cp * north[2] + sp * east[2]),
        )
        .expect("non-degenerate offset");
        from_cartesian(v)
    }
}

/// Unit east and north vectors of the tangent plane at `c`.
pub(crate) fn tangent_basis(c: &UnitVec3) -> ([f64; 3], [f64; 3]) {
    let rho = (c.x * c.x + c.y * c.y).sqrt();
    let east = if rho > 1e-15 { [-c.y / rho, c.x / rho, 0.0] } else { [0.0, 1.0, 0.0] };
    let north = [
        c.y * east[2] - c.z * east[1],
        c.z * east[0] - c.x * east[2],
        c.x * east[1] - c.y * east[0],
    ];
    (east, north)
}

impl std::fmt::Display for SkyCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.ra, self.dec)
    }
}

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVec3 {
    pub const X: UnitVec3 = UnitVec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: UnitVec3 = UnitVec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: UnitVec3 = UnitVec3 { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalizes `(x, y, z)`; `None` for the zero or a non-finite vector.
    pub fn normalized(x: f64, y: f64, z: f64) -> Option<UnitVec3> {
        let n = (x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(UnitVec3 { x: x / n, y: y / n, z: z / n })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, o: &UnitVec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Unnormalized cross product.
    pub fn cross(&self, o: &UnitVec3) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    pub fn neg(&self) -> UnitVec3 {
        UnitVec3 { x: -self.x, y: -self.y, z: -self.z }
    }

    /// Great-circle midpoint of two non-antipodal points.
    pub fn midpoint(&self, o: &UnitVec3) -> UnitVec3 {
        UnitVec3::normalized(self.x + o.x, self.y + o.y, self.z + o.z)
            .expect("midpoint of antipodal points")
    }

    /// Angle to `o` in radians, stable near 0 and pi.
    pub fn angle_to(&self, o: &UnitVec3) -> f64 {
        let c = self.cross(o);
        let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        s.atan2(self.dot(o))
    }
}

pub fn to_cartesian(c: SkyCoord) -> UnitVec3 {
    let (sra, cra) = sin_cos_deg(c.ra);
    let (sdec, cdec) = sin_cos_deg(c.dec);
    UnitVec3 { x: cdec * cra, y: cdec * sra, z: sdec }
}

pub fn from_cartesian(v: UnitVec3) -> SkyCoord {
    let dec = v.z.atan2((v.x * v.x + v.y * v.y).sqrt()).to_degrees();
    let ra = if v.x == 0.0 && v.y == 0.0 { 0.0 } else { v.y.atan2(v.x).to_degrees() };
    SkyCoord::new(ra, dec.clamp(-90.0, 90.0)).expect("finite unit vector")
}

/// Great-circle separation in degrees, in [0, 180].
pub fn angular_distance(a: SkyCoord, b: SkyCoord) -> f64 {
    a.to_cartesian().angle_to(&b.to_cartesian()).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(ra: f64, dec: f64) -> SkyCoord {
        SkyCoord::new(ra, dec).unwrap()
    }

    #[test]
    fn axis_cases_are_exact() {
        assert_eq!(c(0.0, 0.0).to_cartesian().to_array(), [1.0, 0.0, 0.0]);
        assert_eq!(c(90.0, 0.0).to_cartesian().to_array(), [0.0, 1.0, 0.0]);
        assert_eq!(c(0.0, 90.0).to_cartesian().to_array(), [0.0, 0.0, 1.0]);
        assert_eq!(c(123.0, -90.0).to_cartesian().to_array(), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn ra_wraps_and_dec_is_checked() {
        assert_eq!(c(-10.0, 0.0).ra(), 350.0);
        assert_eq!(c(720.0, 0.0).ra(), 0.0);
        assert_eq!(c(-1e-18, 0.0).ra(), 0.0);
        assert!(SkyCoord::new(0.0, 90.5).is_err());
        assert!(SkyCoord::new(f64::NAN, 0.0).is_err());
        assert!(SkyCoord::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn distance_identity_and_antipodes() {
        let a = c(12.5, -33.0);
        assert_eq!(angular_distance(a, a), 0.0);
        assert!((angular_distance(c(0.0, 0.0), c(180.0, 0.0)) - 180.0).abs() < 1e-12);
        assert!((angular_distance(c(0.0, 90.0), c(0.0, -90.0)) - 180.0).abs() < 1e-12);
        assert!((angular_distance(c(10.0, 0.0), c(10.0, 1e-9)) - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn cartesian_round_trip() {
        for &(ra, dec) in &[(0.0, 0.0), (359.999, 89.9), (180.0, -45.0), (42.0, 90.0)] {
            let back = from_cartesian(c(ra, dec).to_cartesian());
            assert!(angular_distance(back, c(ra, dec)) < 1e-9);
        }
    }

    #[test]
    fn offsets_have_requested_separation() {
        let base = c(10.0, 20.0);
        for pa in [0.0, 45.0, 90.0, 200.0] {
            let p = base.offset(0.5, pa);
            assert!((angular_distance(base, p) - 0.5).abs() < 1e-10);
        }
        assert!(base.offset(1.0, 0.0).dec() > base.dec());
        assert!((c(0.0, 90.0).offset(2.0, 0.0).dec() - 88.0).abs() < 1e-10);
    }

    #[test]
    fn serde_validates() {
        let ok: SkyCoord = serde_json::from_str(r#"{"ra":370.0,"dec":1.0}"#).unwrap();
        assert_eq!(ok.ra(), 10.0);
        assert!(serde_json::from_str::<SkyCoord>(r#"{"ra":0.0,"dec":91.0}"#).is_err());
    }
}
