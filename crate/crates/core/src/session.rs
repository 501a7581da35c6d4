//! Interactive games: one human player against a replayed history window.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SessionLog;
use crate::entrants::{Action, BanditInfo, EntrantError};
use crate::env::{BanditId, EnvConfig, Payoff, Round};
use crate::history::{generate_history, HistoryDB, HistoryError};
use crate::play::{agent_round_payoffs, game_window, rank, PlayError, PlayerState};
use crate::rng::derive_seed;

/// The four game environments offered to players.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Environment {
    A,
    B,
    C,
    D,
}

impl Environment {
    pub const ALL: [Environment; 4] = [Environment::A, Environment::B, Environment::C, Environment::D];

    /// `(n_I, p_c)`.
    pub fn params(self) -> (usize, f64) {
        match self {
            Environment::A => (1, 0.1),
            Environment::B => (10, 0.1),
            Environment::C => (1, 0.2),
            Environment::D => (10, 0.2),
        }
    }

    pub fn config(self) -> EnvConfig {
        let (n, p) = self.params();
        EnvConfig::new(n, p).expect("built-in environments are valid")
    }

    pub fn label(self) -> &'static str {
        match self {
            Environment::A => "A",
            Environment::B => "B",
            Environment::C => "C",
            Environment::D => "D",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Environment::ALL.into_iter().find(|e| e.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvironmentChoice {
    Fixed(Environment),
    Random,
}

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("the game is finished")]
    Finished,
    #[error("the game is not finished yet")]
    NotFinished,
    #[error("round {0} is a learning round: only Innovate or Observe are allowed")]
    ExploitWhileLearning(Round),
    #[error("bandit {0} is not in the repertoire")]
    NotInRepertoire(BanditId),
    #[error("move submitted for round {got}, current round is {expected}")]
    RoundMismatch { expected: Round, got: Round },
    #[error("no history loaded for environment {0:?}")]
    NoHistory(Environment),
    #[error("history: {0}")]
    History(String),
}

impl From<PlayError> for SessionError {
    fn from(e: PlayError) -> Self {
        match e {
            PlayError::Finished => SessionError::Finished,
            PlayError::ExploitWhileLearning(t) => SessionError::ExploitWhileLearning(t),
            PlayError::Entrant(EntrantError::NotInRepertoire(b)) => SessionError::NotInRepertoire(b),
        }
    }
}

impl From<HistoryError> for SessionError {
    fn from(e: HistoryError) -> Self {
        SessionError::History(e.to_string())
    }
}

/// Histories shared by all sessions, one per environment.
#[derive(Clone, Debug, Default)]
pub struct HistoryStore {
    dbs: HashMap<Environment, Arc<HistoryDB>>,
}

impl HistoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Generate a history for every environment from `seed`.
    pub fn generate(seed: u64) -> Self {
        let mut store = Self::new();
        for (i, env) in Environment::ALL.into_iter().enumerate() {
            store.insert(env, generate_history(&env.config(), derive_seed(seed, i as u64)));
        }
        store
    }

    pub fn insert(&mut self, env: Environment, db: HistoryDB) {
        self.dbs.insert(env, Arc::new(db));
    }

    pub fn get(&self, env: Environment) -> Option<Arc<HistoryDB>> {
        self.dbs.get(&env).cloned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Learning,
    Playing,
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: Round,
    pub action: Action,
    pub payoff: Option<Payoff>,
    /// `None` for Exploit and for an Observe with nobody to copy.
    pub learned: Option<BanditInfo>,
    /// Newest first.
    pub repertoire: Vec<BanditInfo>,
    pub score: u64,
    pub rank: usize,
    pub phase: Phase,
    pub next_round: Option<Round>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub round: Option<Round>,
    pub phase: Phase,
    pub repertoire: Vec<BanditInfo>,
    pub score: u64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub environment: Environment,
    pub score: u64,
    /// Per scored round.
    pub mean_payoff: f64,
    pub rank: usize,
    pub entrants: usize,
    pub log: SessionLog,
}

pub struct Session {
    pub environment: Environment,
    pub seed: u64,
    db: Arc<HistoryDB>,
    player: PlayerState,
    agent_scores: Vec<u64>,
}

impl Session {
    pub fn new(environment: Environment, db: Arc<HistoryDB>, seed: u64) -> Result<Self, SessionError> {
        let window = game_window(&db, seed)?;
        let agent_scores = vec![0; db.records(1).len()];
        Ok(Session { environment, seed, player: PlayerState::new(window, seed), db, agent_scores })
    }

    pub fn phase(&self) -> Phase {
        if self.player.is_finished() {
            Phase::Finished
        } else if self.player.is_learning() {
            Phase::Learning
        } else {
            Phase::Playing
        }
    }

    pub fn current_round(&self) -> Option<Round> {
        (!self.player.is_finished()).then(|| self.player.current_round())
    }

    pub fn rank(&self) -> usize {
        rank(self.player.score(), &self.agent_scores)
    }

    pub fn window_start(&self) -> usize {
        self.player.window().start
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            round: self.current_round(),
            phase: self.phase(),
            repertoire: self.player.repertoire().newest_first(),
            score: self.player.score(),
            rank: self.rank(),
        }
    }

    /// Play `action` in the current round. `round`, when given, must match it.
    pub fn submit(&mut self, action: Action, round: Option<Round>) -> Result<RoundOutcome, SessionError> {
        if self.player.is_finished() {
            return Err(SessionError::Finished);
        }
        let expected = self.player.current_round();
        if let Some(got) = round {
            if got != expected {
                return Err(SessionError::RoundMismatch { expected, got });
            }
        }
        let out = self.player.play(&self.db, action)?;
        if out.round >= 1 {
            let window = *self.player.window();
            for (s, p) in self.agent_scores.iter_mut().zip(agent_round_payoffs(&self.db, &window, out.round)) {
                *s += p as u64;
            }
        }
        Ok(RoundOutcome {
            round: out.round,
            action: out.action,
            payoff: out.payoff,
            learned: out.learned,
            repertoire: self.player.repertoire().newest_first(),
            score: self.player.score(),
            rank: self.rank(),
            phase: self.phase(),
            next_round: self.current_round(),
        })
    }

    pub fn log(&self) -> Result<SessionLog, SessionError> {
        SessionLog::new(self.player.log().to_vec()).map_err(|_| SessionError::NotFinished)
    }

    pub fn summary(&self) -> Result<SessionSummary, SessionError> {
        if !self.player.is_finished() {
            return Err(SessionError::NotFinished);
        }
        let log = self.log()?;
        Ok(SessionSummary {
            environment: self.environment,
            score: self.player.score(),
            mean_payoff: self.player.score() as f64 / log.horizon() as f64,
            rank: self.rank(),
            entrants: self.agent_scores.len() + 1,
            log,
        })
    }
}

/// New session in a fixed or uniformly drawn environment with a fresh game seed.
pub fn create_session<R: Rng + ?Sized>(
    choice: EnvironmentChoice,
    store: &HistoryStore,
    rng: &mut R,
) -> Result<Session, SessionError> {
    let env = match choice {
        EnvironmentChoice::Fixed(e) => e,
        EnvironmentChoice::Random => Environment::ALL[rng.gen_range(0..4)],
    };
    let db = store.get(env).ok_or(SessionError::NoHistory(env))?;
    Session::new(env, db, rng.gen())
}
