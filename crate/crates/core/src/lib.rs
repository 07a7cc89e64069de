//! All-around depth estimation from multiple fisheye cameras on icosahedral grids.
//!
//! The pipeline projects fisheye images onto a subdivided icosahedron (gravity-aligned,
//! so ceilings land on the north pole regardless of camera mounting), extracts features
//! with crown convolutions on the unfolded 10-rectangle representation, sweeps virtual
//! spheres around the rig center to build a cost volume, regularizes it with 3D crown
//! convolutions, and regresses a per-vertex inverse-depth index by soft argmax.
//!
//! A synthetic indoor-scene renderer ([`scenegen`]) provides images and exact ground
//! truth so the whole stack is trainable and verifiable without external datasets.

pub mod autodiff;
pub mod camera;
pub mod chart;
pub mod config;
pub mod crown;
pub mod erp;
pub mod error;
pub mod icosphere;
pub mod network;
pub mod pfm;
pub mod pipeline;
pub mod regress;
pub mod scenegen;
pub mod sweep;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::Error;
