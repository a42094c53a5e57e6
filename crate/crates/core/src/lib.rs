pub mod kg;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod embed;
pub mod align;
pub mod graph;
pub mod infer;
pub mod select;
pub mod harness;
pub mod config;
pub mod session;
pub mod checkpoint;
