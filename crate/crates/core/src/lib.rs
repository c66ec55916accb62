//! A trainable puppeteer for multi-agent reasoning.
//!
//! A central softmax policy picks which agent of a heterogeneous pool acts
//! next, REINFORCE trains it against answer quality minus a growing step
//! cost, and the topology module folds the resulting activation sequences
//! back into interaction graphs.
//!
//! Start with [`env::presets`] for a pool plus a simulated environment,
//! [`trainer::Trainer`] to train, and [`topology::fold`] to inspect episodes.

pub mod agent;
pub mod backend;
pub mod cli;
pub mod config;
pub mod digest;
pub mod env;
pub mod gateway;
pub mod orchestrator;
pub mod policy;
pub mod scoring;
pub mod task;
pub mod topology;
pub mod trainer;
pub mod trajectory;
