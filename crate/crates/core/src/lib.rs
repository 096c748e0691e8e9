//! Physically based simulation of rotating FMCW radar sensors.
//!
//! Sampled radar beams are traced through triangle-mesh scenes. At every
//! surface the incident energy is split by the Fresnel equations, part of it
//! is scattered back to the receiver through a parametric reflection lobe,
//! and reflected and refracted children continue through the scene. The
//! returns of each azimuth are binned into one column of a polar intensity
//! image, which is then blurred along range and overlaid with system and
//! ambient noise.
//!
//! The crate also carries the evaluation side: structural similarity and
//! mutual information between polar images, and a bounded Nelder–Mead loop
//! that fits simulation parameters to reference frames.

pub mod calibration;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod rng;
pub mod sampling;
pub mod tracer;
pub mod wave;

pub use geometry::{AccelIndex, Pose, Quat, RayHit, Triangle, TriangleMesh, Vec3};
pub use imaging::{NoiseConfig, NoiseModel, PolarImage};
pub use sampling::{BeamKind, BeamModel};
pub use tracer::{ReturnSignal, Scene, SensorModel, Simulation, TraceConfig};
pub use wave::{Material, MaterialTable};

/// Speed of light in vacuum, m/ns.
pub const SPEED_OF_LIGHT: f64 = 0.299_792_458;
