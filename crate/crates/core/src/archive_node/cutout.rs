//! Synthetic image cutouts rendered from catalog positions and magnitudes.

use crate::catalog::{Edition, TableData};
use crate::sphere::{tangent_basis, Cone, SkyCoord};

pub const MAX_CUTOUT_SIDE: u32 = 4096;
/// Gaussian point-spread width, in pixels.
pub const PSF_SIGMA_PX: f64 = 1.5;
/// Objects farther than this many sigmas from a pixel do not touch it.
const PSF_EXTENT_SIGMAS: f64 = 5.0;
pub const PEAK: f64 = 65535.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CutoutRequest {
    pub center: SkyCoord,
    pub width: u32,
    pub height: u32,
    /// Degrees per pixel.
    pub scale: f64,
    /// Table to draw; the first spatial table when absent.
    pub table: Option<String>,
    /// Magnitude column; the first `phot.mag` column when absent.
    pub band: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CutoutError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
}

/// 16-bit greyscale, row 0 at the top (north up, east left).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub center: SkyCoord,
    /// Degrees per pixel.
    pub scale: f64,
    pub pixels: Vec<u16>,
}

impl Image {
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[(y * self.width + x) as usize]
    }

    /// Binary PGM with a 65535 maximum, samples big-endian. A comment line
    /// records the center and scale.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!(
            "P5\n# center {:?} {:?} scale {:?}\n{} {}\n65535\n",
            self.center.ra(),
            self.center.dec(),
            self.scale,
            self.width,
            self.height
        )
        .into_bytes();
        out.reserve(self.pixels.len() * 2);
        for p in &self.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Option<Image> {
        let mut fields = Vec::new();
        let mut comments = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if bytes.get(pos) == Some(&b'#') {
                let start = pos;
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                comments.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "65535" {
            return None;
        }
        let width: u32 = fields[1].parse().ok()?;
        let height: u32 = fields[2].parse().ok()?;
        let data = bytes.get(pos..)?;
        if data.len() != (width * height * 2) as usize {
            return None;
        }
        let pixels = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        let (mut center, mut scale) = (SkyCoord::new(0.0, 0.0).expect("origin"), 0.0);
        for c in comments {
            let w: Vec<&str> = c.split_whitespace().collect();
            if let ["#", "center", ra, dec, "scale", s] = w.as_slice() {
                center = SkyCoord::new(ra.parse().ok()?, dec.parse().ok()?).ok()?;
                scale = s.parse().ok()?;
            }
        }
        Some(Image { width, height, center, scale, pixels })
    }
}

/// Gnomonic projection about `center`, in radians (east, north). `None`
/// for points on the far hemisphere.
pub fn gnomonic(center: SkyCoord, p: SkyCoord) -> Option<(f64, f64)> {
    let c = center.to_cartesian();
    let v = p.to_cartesian();
    let (east, north) = tangent_basis(&c);
    let cos_c = c.dot(&v);
    if cos_c <= 1e-12 {
        return None;
    }
    let dot = |a: [f64; 3]| a[0] * v.x() + a[1] * v.y() + a[2] * v.z();
    Some((dot(east) / cos_c, dot(north) / cos_c))
}

fn validate(req: &CutoutRequest) -> Result<(), CutoutError> {
    for (name, v) in [("width", req.width), ("height", req.height)] {
        if v == 0 || v > MAX_CUTOUT_SIDE {
            return Err(CutoutError::BadRequest(format!("{name} must be in 1..={MAX_CUTOUT_SIDE}, got {v}")));
        }
    }
    if !(req.scale.is_finite() && req.scale > 0.0) {
        return Err(CutoutError::BadRequest(format!("scale must be positive, got {}", req.scale)));
    }
    if field_radius_deg(req) > 60.0 {
        return Err(CutoutError::BadRequest("field of view too large for a tangent-plane image".into()));
    }
    Ok(())
}

fn field_radius_deg(req: &CutoutRequest) -> f64 {
    let half_diag_px = (req.width as f64).hypot(req.height as f64) / 2.0 + PSF_EXTENT_SIGMAS * PSF_SIGMA_PX + 1.0;
    half_diag_px * req.scale
}

fn pick_table<'a>(edition: &'a Edition, req: &CutoutRequest) -> Result<&'a TableData, CutoutError> {
    match &req.table {
        Some(name) => {
            let t = edition.table(name).map_err(|_| CutoutError::UnknownTable(name.clone()))?;
            if !t.is_spatial() {
                return Err(CutoutError::BadRequest(format!("table {name} has no sky position")));
            }
            Ok(t)
        }
        None => edition
            .tables()
            .find(|t| t.is_spatial())
            .ok_or_else(|| CutoutError::BadRequest("archive has no spatial table".into())),
    }
}

/// Column index of the magnitude drawn for `t`.
pub fn band_column(t: &TableData, band: Option<&str>) -> Result<usize, CutoutError> {
    let def = t.def();
    match band {
        Some(b) => def.column_index(b).ok_or_else(|| CutoutError::BadRequest(format!("unknown band column {b}"))),
        None => def
            .columns
            .iter()
            .position(|c| c.ucd.split(';').next().is_some_and(|a| a.starts_with("phot.mag")))
            .ok_or_else(|| CutoutError::BadRequest(format!("table {} has no magnitude column", def.name))),
    }
}

/// One source placed on the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placed {
    pub x: f64,
    pub y: f64,
    pub mag: f64,
}

/// Pixel position of the field center: column `width/2`, row `height/2`.
pub fn pixel_position(req: &CutoutRequest, p: SkyCoord) -> Option<(f64, f64)> {
    let (xi, eta) = gnomonic(req.center, p)?;
    let per_px = req.scale.to_radians();
    let cx = (req.width / 2) as f64;
    let cy = (req.height / 2) as f64;
    Some((cx - xi / per_px, cy - eta / per_px))
}

/// Sources whose point-spread function reaches the image.
pub fn placed_sources(edition: &Edition, req: &CutoutRequest) -> Result<Vec<Placed>, CutoutError> {
    validate(req)?;
    let t = pick_table(edition, req)?;
    let band = band_column(t, req.band.as_deref())?;
    let cone = Cone::new(req.center, field_radius_deg(req)).map_err(|e| CutoutError::BadRequest(e.to_string()))?;
    let reach = PSF_EXTENT_SIGMAS * PSF_SIGMA_PX;
    let mut out = Vec::new();
    t.for_each_cone_row(&cone, |row| {
        let (Some(p), Some(mag)) = (t.coord(row), t.value(row, band).as_f64()) else {
            return;
        };
        let Some((x, y)) = pixel_position(req, p) else {
            return;
        };
        if x > -reach && x < req.width as f64 + reach && y > -reach && y < req.height as f64 + reach {
            out.push(Placed { x, y, mag });
        }
    })
    .map_err(|e| CutoutError::BadRequest(e.to_string()))?;
    out.sort_by(|a, b| (a.x, a.y, a.mag).partial_cmp(&(b.x, b.y, b.mag)).unwrap());
    Ok(out)
}

/// Sums a Gaussian per source, the brightest scaled to full range, and
/// clamps to 16 bits.
pub fn render(req: &CutoutRequest, sources: &[Placed]) -> Image {
    let (width, height) = (req.width, req.height);
    let mut acc = vec![0f64; (width * height) as usize];
    let mag_ref = sources.iter().map(|s| s.mag).fold(f64::INFINITY, f64::min);
    let reach = PSF_EXTENT_SIGMAS * PSF_SIGMA_PX;
    let two_s2 = 2.0 * PSF_SIGMA_PX * PSF_SIGMA_PX;
    for s in sources {
        let amp = PEAK * 10f64.powf(-0.4 * (s.mag - mag_ref));
        let x0 = (s.x - reach).ceil().max(0.0) as u32;
        let x1 = ((s.x + reach).floor().min(width as f64 - 1.0)).max(-1.0);
        let y0 = (s.y - reach).ceil().max(0.0) as u32;
        let y1 = ((s.y + reach).floor().min(height as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for py in y0..=y1 as u32 {
            for px in x0..=x1 as u32 {
                let d2 = (px as f64 - s.x).powi(2) + (py as f64 - s.y).powi(2);
                acc[(py * width + px) as usize] += amp * (-d2 / two_s2).exp();
            }
        }
    }
    Image { width, height, center: req.center, scale: req.scale, pixels: acc.into_iter().map(|v| v.round().clamp(0.0, PEAK) as u16).collect() }
}

pub fn cutout(edition: &Edition, req: &CutoutRequest) -> Result<Image, CutoutError> {
    let sources = placed_sources(edition, req)?;
    Ok(render(req, &sources))
}
