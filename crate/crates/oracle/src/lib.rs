//! Independent reference machinery for checking the main crate: exhaustive
//! double-precision evaluators for pooling and the head topologies, a
//! central-difference driver, deterministic instance generators and a
//! least-squares fit helper.
//!
//! Everything here is written directly against the definitions, not against
//! the production kernels, so it can serve as an oracle for them.

pub mod fd;
pub mod fit;
pub mod gen;
pub mod gradcheck;
pub mod refimpl;

pub use fd::central_diff;
pub use fit::linear_fit;
pub use gradcheck::{head_gradcheck, head_instance, GradcheckReport, HeadInstance};
pub use refimpl::{ref_head_forward, ref_pool, RefHeadParams};
