pub mod agent;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod env;
pub mod eval;
pub mod gateway;
pub mod harness;
pub mod retrieval;
pub mod supervisor;
pub mod workflow;
