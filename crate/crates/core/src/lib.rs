//! Multi-UAV mobile edge computing simulator with graph-attention
//! multi-agent reinforcement learning and decentralized federated learning.

pub mod config;
pub mod energy;
pub mod features;
pub mod experiment;
pub mod fedlearn;
pub mod gradcheck;
pub mod marl;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod radio;
pub mod scenario;
pub mod sim;
pub mod tasking;

pub use config::SimConfig;
pub use error::{Error, Result};
