//! Simulation and evaluation of semantic-map aggregation strategies for
//! object-goal navigation.

pub mod aggregation;
pub mod bench;
pub mod calibration;
pub mod config;
pub mod episode;
pub mod error;
pub mod hyperopt;
pub mod logit_file;
pub mod map;
pub mod metrics;
pub mod morphology;
pub mod noise;
pub mod policy;
pub mod pgm;
pub mod report;
pub mod scene;
pub mod sensor;
pub mod stats;

pub use error::{Error, Result};
