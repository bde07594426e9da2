//! Adaptive tracking control with a deep tanh network whose weights are
//! trained online by a projected gradient law, optionally with randomized
//! dropout of hidden units.

pub mod adaptation;
pub mod checks;
pub mod controller;
pub mod experiment;
pub mod linalg;
pub mod network;
pub mod oracles;
pub mod scenario;
pub mod sim;
