//! Hand-pose embedding interaction system.
//!
//! Hand landmarks are reduced to eight joint angles ([`pose`]), embedded into
//! a normalized 2-D plane by a VAE ([`vae`]) that can be retrained against
//! landmark jitter ([`augment`]), and post-processed by a jump stabilizer and
//! a two-regime One Euro filter ([`filters`], [`pipeline`]). [`guidance`]
//! decodes neighbouring poses for display, [`sim`] generates synthetic users
//! and runs the ablation benchmark, and [`service`] exposes sessions over a
//! line-delimited JSON protocol.

pub mod augment;
pub mod error;
pub mod filters;
pub mod guidance;
pub mod io;
pub mod media;
pub mod pipeline;
pub mod pose;
pub mod service;
pub mod sim;
pub mod vae;

pub use error::{Error, Result};
