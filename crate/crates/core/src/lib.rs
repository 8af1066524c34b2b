pub mod archive_node;
pub mod bench;
pub mod capacity;
pub mod catalog;
pub mod clock;
pub mod durable;
pub mod federation;
pub mod query;
pub mod sphere;
pub mod workspace;
