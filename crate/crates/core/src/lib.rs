//! A deterministic multi-agent crafting gridworld and the agent stack that
//! plays it.
//!
//! * [`world`]: terrain generation, observation, the step function and the navigator.
//! * [`techtree`]: the crafting table and achievement depths.
//! * [`memory`]: per-agent experience pool and goal-oriented knowledge graph.
//! * [`schema`]: the structured planner response and its JSON codec.
//! * [`comms`]: structured messages and the help hierarchy.
//! * [`policy`]: prompt assembly and planner backends (scripted and remote).
//! * [`harness`]: episode loop, records, milestones, metrics and replay.
//! * [`env`]: a reset/step surface with flat observation encodings and per-agent rewards.

pub mod comms;
pub mod env;
pub mod harness;
pub mod memory;
pub mod policy;
pub mod rng;
pub mod schema;
pub mod techtree;
pub mod world;
