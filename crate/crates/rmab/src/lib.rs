//! Command-line tools and HTTP game service for the restless bandit game.

pub mod api;
pub mod commands;
