//! Expected per-round payoffs of Exploit, Innovate and Observe for a player
//! with complete knowledge of the environment, and the four restricted
//! optimal players built on them.
//!
//! All three values average over the remaining rounds `t..=T`. A piece of
//! information of age `a` is still accurate with probability `(1-p_c)^a`;
//! once the bandit has changed, its expected payoff is the unconditional mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entrants::{Action, BanditInfo, Repertoire};
use crate::env::Round;

/// What an optimal player is assumed to know at round `current`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knowledge {
    pub p_change: f64,
    /// E(s)
    pub mean_payoff: f64,
    /// E(s_I)
    pub innovate_mean: f64,
    /// Mean payoff of the agents' exploitations in the previous round.
    pub observe_mean: f64,
    pub horizon: Round,
    pub current: Round,
}

impl Knowledge {
    /// `observe_mean` of `None` (nobody exploited last round) falls back to E(s).
    pub fn new(
        p_change: f64,
        mean_payoff: f64,
        innovate_mean: f64,
        observe_mean: Option<f64>,
        horizon: Round,
        current: Round,
    ) -> Self {
        Knowledge {
            p_change,
            mean_payoff,
            innovate_mean,
            observe_mean: observe_mean.unwrap_or(mean_payoff),
            horizon,
            current,
        }
    }

    fn remaining(&self) -> i32 {
        self.horizon - self.current + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    InnovateAndObserve,
    InnovateOnly,
    ObserveOnly,
    ExploitOnly,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::InnovateAndObserve,
        StrategyKind::InnovateOnly,
        StrategyKind::ObserveOnly,
        StrategyKind::ExploitOnly,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::InnovateAndObserve => "I+O",
            StrategyKind::InnovateOnly => "I",
            StrategyKind::ObserveOnly => "O",
            StrategyKind::ExploitOnly => "EO",
        }
    }

    fn may_innovate(self) -> bool {
        matches!(self, StrategyKind::InnovateAndObserve | StrategyKind::InnovateOnly)
    }

    fn may_observe(self) -> bool {
        matches!(self, StrategyKind::InnovateAndObserve | StrategyKind::ObserveOnly)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("exploit-only player has an empty repertoire at round {0}")]
    EmptyRepertoire(Round),
}

/// (1 - (1-p)^n) / p, with its limit n at p = 0. Computed through
/// expm1/ln1p so it stays accurate for tiny p.
fn survival_sum(p: f64, n: i32) -> f64 {
    if p == 0.0 {
        return n as f64;
    }
    if p == 1.0 {
        return if n > 0 { 1.0 } else { 0.0 };
    }
    -(n as f64 * (-p).ln_1p()).exp_m1() / p
}

fn persist(p: f64, age: i32) -> f64 {
    (1.0 - p).powi(age)
}

/// Expected payoff per round of exploiting `info` every round from `current` to the horizon.
pub fn exploit_value(info: &BanditInfo, k: &Knowledge) -> f64 {
    let h = k.remaining();
    let age = k.current - info.stamp;
    let gap = info.payoff as f64 - k.mean_payoff;
    k.mean_payoff + survival_sum(k.p_change, h) * gap * persist(k.p_change, age) / h as f64
}

/// Expected payoff per round of innovating now and exploiting the find afterwards.
pub fn innovate_value(k: &Knowledge) -> f64 {
    learn_value(k, k.innovate_mean, 1)
}

/// As [`innovate_value`], with the observed mean and information one round older.
pub fn observe_value(k: &Knowledge) -> f64 {
    learn_value(k, k.observe_mean, 2)
}

fn learn_value(k: &Knowledge, found_mean: f64, staleness: i32) -> f64 {
    let h = k.remaining();
    let rest = h - 1;
    let base = rest as f64 / h as f64 * k.mean_payoff;
    base + survival_sum(k.p_change, rest) * (found_mean - k.mean_payoff) * persist(k.p_change, staleness)
        / h as f64
}

/// Best entry to exploit and its value; `None` for an empty repertoire.
pub fn best_exploit(rep: &Repertoire, k: &Knowledge) -> Option<(BanditInfo, f64)> {
    let mut best: Option<(BanditInfo, f64)> = None;
    for e in rep.entries() {
        let v = exploit_value(e, k);
        let better = match best {
            None => true,
            Some((b, bv)) => v > bv || (v == bv && e.bandit < b.bandit),
        };
        if better {
            best = Some((*e, v));
        }
    }
    best
}

/// The move a complete-knowledge player of `kind` makes at round `k.current`.
/// Rounds before 1 are learning rounds and always Innovate.
pub fn choose_action(kind: StrategyKind, rep: &Repertoire, k: &Knowledge) -> Result<Action, StrategyError> {
    if k.current < 1 {
        return Ok(Action::Innovate);
    }
    let best = best_exploit(rep, k);
    if kind == StrategyKind::ExploitOnly {
        return best
            .map(|(info, _)| Action::Exploit(info.bandit))
            .ok_or(StrategyError::EmptyRepertoire(k.current));
    }
    let exploit_v = best.map_or(f64::NEG_INFINITY, |(_, v)| v);
    let innovate_v = if kind.may_innovate() { innovate_value(k) } else { f64::NEG_INFINITY };
    let observe_v = if kind.may_observe() { observe_value(k) } else { f64::NEG_INFINITY };
    Ok(match best {
        Some((info, _)) if exploit_v >= innovate_v && exploit_v >= observe_v => Action::Exploit(info.bandit),
        _ if innovate_v >= observe_v && innovate_v > f64::NEG_INFINITY => Action::Innovate,
        _ if observe_v > f64::NEG_INFINITY => Action::Observe,
        // empty repertoire and no learning allowed cannot reach here: EO is handled above
        _ => Action::Innovate,
    })
}
