//! Task-space control of underactuated soft robots: CLF-QP and Soft
//! ID-CLF-QP controllers, impedance baselines, a rigid-segment multibody
//! simulator and the benchmark protocol.

pub mod clf;
pub mod controllers;
pub mod error;
pub mod experiments;
pub mod kinematics;
pub mod linalg;
pub mod multibody;
pub mod robots;
pub mod sim;

pub use error::{Error, Result};
