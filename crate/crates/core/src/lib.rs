//! Contact-surface sensing core.
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (an allocator is required). File formats, directory
//! ingestion, wall-clock instrumentation and the command-line runner live in
//! the companion `microcam` crate.
//!
//! Pipeline stages:
//!
//! 1. **imu** – placement trigger state machine (stationary / moving, capture,
//!    backgrounding).
//! 2. **imaging** – LoG sharpness gate, crop/resize to the network input,
//!    training-time augmentation.
//! 3. **corpus** – label taxonomy, samples, frame sampling, split plans and
//!    the procedural texture generator.
//! 4. **nn** – dual-head depthwise-separable CNN with analytic gradients and
//!    Adam training.
//! 5. **replay** – experience-replay buffer, sampling disciplines, bias
//!    correction and the task-stream loop.
//! 6. **semantics** – object/material mapping validation and scene hints.
//! 7. **harness** – accuracy, confusion matrices, cross-validation protocols
//!    and continual-learning evaluation.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod imu;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod semantics;
pub mod taxonomy;

pub use error::{Error, Result};
pub use imaging::Image;
pub use taxonomy::{MaterialClass, ObjectClass};
