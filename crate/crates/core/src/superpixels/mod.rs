//! Superpixel / supervoxel generators: SLIC clustering in joint
//! spatial+feature space and a regular block partitioner (the
//! infinite-compactness baseline), plus connectivity enforcement.

mod block;
mod connectivity;
mod slic;

pub use block::block_segment;
pub use connectivity::enforce_connectivity;
pub use slic::{slic_segment, ClusterCenter, SlicParams};
