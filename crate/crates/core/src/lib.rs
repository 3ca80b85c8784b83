//! Synthesis, grounding and evaluation toolkit for embodied-reference 3D
//! visual grounding: scenes augmented with posed pointing agents, a
//! virtual-touch-line baseline, a small multi-modal fusion network, and the
//! Acc@kIoU evaluation protocol.

pub mod body;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geom;
pub mod ground;
pub mod place;
pub mod scene;
pub mod seed;
pub mod selftest;
pub mod synth;
pub mod vtl;

pub use config::Config;
pub use error::{Error, Result};
