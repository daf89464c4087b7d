pub mod env;
pub mod nn;
pub mod robot;
pub mod oracle;
pub mod heuristics;
pub mod mcts;
pub mod bench;
