//! Real-time data collection scheduling for multi-hop wireless sensor
//! networks: interference models, routing structures, schedulability
//! checks, query selection and a discrete-event simulator.

pub mod cli;
pub mod error;
pub mod io;
pub mod netmodel;
pub mod queries;
pub mod routing;
pub mod scheduler;
pub mod selection;
pub mod sim;

pub use error::{Error, Result};
pub use netmodel::{InterferenceModel, Network, Node, NodeId, PhimParams, Point, RegionIndex};
pub use queries::Query;
