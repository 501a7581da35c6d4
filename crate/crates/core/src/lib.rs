//! Restless multi-armed bandit social-learning game.
//!
//! Entrants repeatedly choose between asocial learning (Innovate), social
//! learning (Observe) and exploitation on a board of bandits whose payoffs
//! churn over time. The crate simulates the 120 threshold agents, the four
//! complete-knowledge optimal players, replayed game windows for interactive
//! sessions, and the regression analysis of session logs.

pub mod analysis;
pub mod entrants;
pub mod env;
pub mod harness;
pub mod history;
pub mod play;
pub mod rng;
pub mod session;
pub mod strategy;

pub use entrants::{Action, ActionKind, AgentSpec, BanditInfo, Repertoire};
pub use env::{BanditBoard, BanditId, EnvConfig, Payoff, PayoffDistribution, Round};
pub use history::{HistoryDB, RoundRecord, Window};
pub use strategy::{Knowledge, StrategyKind};
