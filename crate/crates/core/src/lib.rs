pub mod config;
pub mod domain;
pub mod engine;
pub mod impact;
pub mod persistence;
pub mod replication;
pub mod workflow;
