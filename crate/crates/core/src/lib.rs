//! Core algorithms for mmWave codebook beam management.
//!
//! This crate simulates V2I/V2V codebook beamforming over a geometric
//! multipath channel, produces labeled synthetic sensing scenarios, trains a
//! multimodal (position + point cloud + visual) top-M beam predictor with a
//! small built-in neural network engine, and models the beam-sweep latency of
//! the 5G-NR synchronization-signal burst so the predictor's savings can be
//! quantified against an exhaustive sweep.
//!
//! The crate is `no_std`-compatible (it requires `alloc`); file formats and
//! the command-line front end live in the companion `mmbeam-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod channel;
pub mod eval;
pub mod exec;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod scenario;

pub use channel::{ArrayConfig, BeamIndex, ChannelRealization, Codebook, NoiseConfig, PathSet};
pub use exec::{SequentialPool, TaskPool};
