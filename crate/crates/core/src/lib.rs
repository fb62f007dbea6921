//! Multi-view video 3D hand pose estimation at desk scale.
//!
//! Frames from `V` synchronized views over `T` time steps are embedded by a
//! small convolutional [`encoder`], mixed along time and view axes by the
//! [`recurrent`] learners, decoded to 2D joints by a fully connected head,
//! and lifted to 3D camera coordinates by a graph U-Net ([`graph`]).
//! [`handgen`] synthesizes matching multi-view hand video; [`trainer`]
//! implements two-stage training, losses, metrics and the ablation harness.

pub mod config;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod hand;
pub mod handgen;
pub mod pipeline;
pub mod recurrent;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
