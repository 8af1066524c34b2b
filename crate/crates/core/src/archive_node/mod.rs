//! One archive's network face: cone search, image cutouts, queries and a
//! self-description, all answering in the tabular wire format.

mod cutout;
mod error;
mod node;
pub mod wire;

pub use cutout::{
    band_column, cutout, gnomonic, pixel_position, placed_sources, render, CutoutError, CutoutRequest, Image, Placed,
    MAX_CUTOUT_SIDE, PEAK, PSF_SIGMA_PX,
};
pub use error::*;
pub use node::{ArchiveNode, ServiceDescription, Tier, CAPABILITIES};
pub use wire::{Document, ErrorDocument, WireError, WireFormat};
