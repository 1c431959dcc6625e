//! Building blocks for runtime adaptation of microservices (collectors,
//! actions, conditional events, subscriptions, observation scheduling) plus
//! a simulated five-service TeaStore mesh, a load generator and a scenario
//! runner.

pub mod actions;
pub mod events;
pub mod loadgen;
pub mod mesh;
pub mod metrics;
pub mod scenarios;
pub mod scheduler;
pub mod sim;
