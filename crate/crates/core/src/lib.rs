//! Deterministic simulation of distributed Nash-equilibrium seeking in
//! networked aggregate games, with an honest-but-curious cost-inference
//! attack and a constructive privacy certifier for the obfuscated protocol.

pub mod adversary;
pub mod game;
pub mod graph;
pub mod numerics;
pub mod privacy;
pub mod protocol;
