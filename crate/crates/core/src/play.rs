//! A single player moving through a replayed history window.
//!
//! The Monte Carlo harness and the interactive sessions both drive players
//! through [`PlayerState::play`], so a scripted policy produces the same
//! payoffs in either place given the same game seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entrants::{exploit, innovate, observe_draw, Action, BanditInfo, EntrantError, Repertoire, AGENT_COUNT};
use crate::env::{Payoff, Round};
use crate::history::{sample_window, Entrant, HistoryDB, HistoryError, RoundRecord, Window};
use crate::rng::{stream_rng, SimRng};

const WINDOW_STREAM: u64 = 0;
const PLAYER_STREAM: u64 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlayError {
    #[error("the game is finished")]
    Finished,
    #[error("round {0} is a learning round: only Innovate or Observe are allowed")]
    ExploitWhileLearning(Round),
    #[error(transparent)]
    Entrant(#[from] EntrantError),
}

/// Window used by the game with this seed.
pub fn game_window(db: &HistoryDB, seed: u64) -> Result<Window, HistoryError> {
    sample_window(db, &mut stream_rng(seed, WINDOW_STREAM))
}

/// Result of one accepted move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveOutcome {
    pub round: Round,
    pub action: Action,
    /// Payoff received (Exploit only).
    pub payoff: Option<Payoff>,
    /// Information acquired by a learning move; `None` for a failed Observe.
    pub learned: Option<BanditInfo>,
}

#[derive(Clone, Debug)]
pub struct PlayerState {
    window: Window,
    rng: SimRng,
    repertoire: Repertoire,
    score: u64,
    next: Round,
    log: Vec<RoundRecord>,
}

impl PlayerState {
    pub fn new(window: Window, seed: u64) -> Self {
        PlayerState {
            window,
            rng: stream_rng(seed, PLAYER_STREAM),
            repertoire: Repertoire::new(),
            score: 0,
            next: window.first_round,
            log: Vec::with_capacity(window.len()),
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn repertoire(&self) -> &Repertoire {
        &self.repertoire
    }

    /// Sum of Exploit payoffs over the scored rounds so far.
    pub fn score(&self) -> u64 {
        self.score
    }

    /// Round the next move will be played in.
    pub fn current_round(&self) -> Round {
        self.next
    }

    pub fn is_finished(&self) -> bool {
        self.next > self.window.last_round
    }

    pub fn is_learning(&self) -> bool {
        self.next < 1
    }

    pub fn log(&self) -> &[RoundRecord] {
        &self.log
    }

    /// Resolve `action` in the current round. A rejected move leaves the state untouched.
    pub fn play(&mut self, db: &HistoryDB, action: Action) -> Result<MoveOutcome, PlayError> {
        if self.is_finished() {
            return Err(PlayError::Finished);
        }
        let t = self.next;
        let round = self.window.history_round(t);
        let board = db.board(round);
        let (payoff, learned) = match action {
            Action::Exploit(_) if self.is_learning() => return Err(PlayError::ExploitWhileLearning(t)),
            Action::Exploit(target) => {
                let p = exploit(board, &mut self.repertoire, target, t)?;
                self.score += p as u64;
                (Some(p), None)
            }
            Action::Innovate => {
                let info = innovate(board, &db.config, t, &mut self.rng);
                self.repertoire.update(info);
                (None, Some(info))
            }
            Action::Observe => {
                let info = observe_draw(&db.exploitations(round - 1), t - 1, &mut self.rng);
                if let Some(info) = info {
                    self.repertoire.update(info);
                }
                (None, info)
            }
        };
        self.log.push(RoundRecord {
            round: t,
            entrant: Entrant::Player,
            kind: action.kind(),
            bandit: match action {
                Action::Exploit(b) => Some(b),
                _ => learned.map(|i| i.bandit),
            },
            payoff,
            repertoire: self.repertoire.clone(),
        });
        self.next += 1;
        Ok(MoveOutcome { round: t, action, payoff, learned })
    }
}

/// Mean payoff of the agents' exploitations in the round before window round `t`.
pub fn observe_mean(db: &HistoryDB, window: &Window, t: Round) -> Option<f64> {
    let prev = db.exploitations(window.history_round(t) - 1);
    if prev.is_empty() {
        None
    } else {
        Some(prev.iter().map(|e| e.payoff as f64).sum::<f64>() / prev.len() as f64)
    }
}

/// Agents' payoffs collected in window round `t` (zero for learning rounds).
pub fn agent_round_payoffs(db: &HistoryDB, window: &Window, t: Round) -> [Payoff; AGENT_COUNT] {
    let mut out = [0; AGENT_COUNT];
    if t >= 1 {
        for (slot, rec) in out.iter_mut().zip(db.records(window.history_round(t))) {
            *slot = rec.payoff.unwrap_or(0);
        }
    }
    out
}

/// Agents' window scores over the scored rounds `1..=upto`.
pub fn agent_window_scores(db: &HistoryDB, window: &Window, upto: Round) -> Vec<u64> {
    let mut scores = vec![0u64; AGENT_COUNT];
    for t in 1..=upto.min(window.last_round) {
        for (s, p) in scores.iter_mut().zip(agent_round_payoffs(db, window, t)) {
            *s += p as u64;
        }
    }
    scores
}

/// Competition rank among the player and the agents: 1 + number of agents strictly ahead.
pub fn rank(player_score: u64, agent_scores: &[u64]) -> usize {
    1 + agent_scores.iter().filter(|&&s| s > player_score).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::history::generate_history_rounds;

    fn setup() -> (HistoryDB, Window) {
        let db = generate_history_rounds(&EnvConfig::new(1, 0.1).unwrap(), 21, 200);
        let w = game_window(&db, 5).unwrap();
        (db, w)
    }

    #[test]
    fn learning_rounds_reject_exploit() {
        let (db, w) = setup();
        let mut p = PlayerState::new(w, 5);
        assert_eq!(p.play(&db, Action::Exploit(1)), Err(PlayError::ExploitWhileLearning(-2)));
        assert_eq!(p.current_round(), -2);
        let out = p.play(&db, Action::Innovate).unwrap();
        assert_eq!(out.round, -2);
        assert_eq!(out.learned.unwrap().stamp, -2);
        assert_eq!(p.current_round(), -1);
    }

    #[test]
    fn observe_is_stamped_one_round_back() {
        let (db, w) = setup();
        let mut p = PlayerState::new(w, 5);
        let out = p.play(&db, Action::Observe).unwrap();
        let prev = db.exploitations(w.start - 1);
        match out.learned {
            Some(info) => {
                assert_eq!(info.stamp, -3);
                assert!(prev.iter().any(|e| e.bandit == info.bandit && e.payoff == info.payoff));
            }
            None => assert!(prev.is_empty()),
        }
    }

    #[test]
    fn full_game_lifecycle() {
        let (db, w) = setup();
        let mut p = PlayerState::new(w, 9);
        for _ in 0..3 {
            p.play(&db, Action::Innovate).unwrap();
        }
        let mut total = 0u64;
        while !p.is_finished() {
            let best = p.repertoire().best().unwrap().bandit;
            let out = p.play(&db, Action::Exploit(best)).unwrap();
            assert_eq!(out.payoff, Some(db.board(w.history_round(out.round)).payoff(best)));
            total += out.payoff.unwrap() as u64;
        }
        assert_eq!(p.score(), total);
        assert_eq!(p.log().len(), 103);
        assert_eq!(p.play(&db, Action::Innovate), Err(PlayError::Finished));
    }

    #[test]
    fn ranking() {
        assert_eq!(rank(10, &[1, 2, 3]), 1);
        assert_eq!(rank(10, &[10, 11, 12]), 3);
        assert_eq!(rank(0, &vec![5; 120]), 121);
    }

    #[test]
    fn agent_scores_match_records() {
        let (db, w) = setup();
        let scores = agent_window_scores(&db, &w, 100);
        for (i, s) in scores.iter().enumerate() {
            let direct: u64 = (w.history_round(1)..=w.end())
                .map(|r| db.records(r)[i].payoff.unwrap_or(0) as u64)
                .sum();
            assert_eq!(*s, direct);
        }
    }
}
