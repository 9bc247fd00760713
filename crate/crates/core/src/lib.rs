//! Sensorless state estimation for brushed DC machines.
//!
//! The crate couples a lumped electro-thermo-mechanical model of a brushed
//! DC motor with a cascade-forward neural network trained by resilient
//! backpropagation, so that armature speed, temperature and resistance can
//! be recovered from terminal voltage and current alone.
//!
//! The pieces compose into a reproducible pipeline:
//!
//! 1. [`motor`] — machine physics, RK4 integration, steady-state solving,
//!    and calibration of the mechanical constants.
//! 2. [`dataset`] — noisy, normalized training patterns from trajectories.
//! 3. [`cfnn`] — the cascade-forward network and its exact batch gradient.
//! 4. [`rprop`] — the four-variant resilient backpropagation stepper.
//! 5. [`pipeline`] — training loop, cross-validation, steady-state error
//!    evaluation and figure-data emission.
//!
//! Every random choice (noise, weight init, fold shuffling) derives from a
//! single 64-bit seed via [`rng`], so a run is fully determined by its
//! configuration.

pub mod cfnn;
pub mod dataset;
pub mod motor;
pub mod pipeline;
pub mod rng;
pub mod rprop;
