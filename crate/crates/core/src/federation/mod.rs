//! Archive registry and positional cross-match across archives.

mod registry;
mod xmatch;

pub use registry::{validate_endpoint, Registry, RegistryError, ServiceRecord};
pub use xmatch::{anchor_tuples, extend_matches, tuples_table, xmatch, MatchMember, MatchSide, MatchedTuple, XMatchError, XMatchSpec};
