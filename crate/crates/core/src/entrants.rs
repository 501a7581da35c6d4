//! Repertoires, moves, and the threshold agents.

use arrayvec::ArrayVec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{innovate_draw, BanditBoard, BanditId, EnvConfig, Payoff, Round};

pub const REPERTOIRE_CAPACITY: usize = 3;
pub const AGENT_COUNT: usize = 120;

/// What an entrant knows about one bandit, and when it learned it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BanditInfo {
    pub bandit: BanditId,
    pub payoff: Payoff,
    pub stamp: Round,
}

impl BanditInfo {
    pub fn new(bandit: BanditId, payoff: Payoff, stamp: Round) -> Self {
        BanditInfo { bandit, payoff, stamp }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntrantError {
    #[error("bandit {0} is not in the repertoire")]
    NotInRepertoire(BanditId),
}

/// At most three pieces of bandit information, distinct by bandit, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repertoire {
    entries: ArrayVec<BanditInfo, REPERTOIRE_CAPACITY>,
}

impl Repertoire {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BanditInfo] {
        &self.entries
    }

    pub fn get(&self, bandit: BanditId) -> Option<&BanditInfo> {
        self.entries.iter().find(|e| e.bandit == bandit)
    }

    pub fn contains(&self, bandit: BanditId) -> bool {
        self.get(bandit).is_some()
    }

    /// Entries ordered newest stamp first; among equal stamps the later insertion comes first.
    pub fn newest_first(&self) -> Vec<BanditInfo> {
        let mut v: Vec<BanditInfo> = self.entries.iter().rev().copied().collect();
        v.sort_by_key(|e| std::cmp::Reverse(e.stamp));
        v
    }

    /// Record `info`. A known bandit is refreshed in place; otherwise the
    /// entry is added, evicting the oldest stamp (smallest id on ties) when full.
    pub fn update(&mut self, info: BanditInfo) {
        if let Some(existing) = self.entries.iter_mut().find(|e| e.bandit == info.bandit) {
            existing.payoff = info.payoff;
            existing.stamp = info.stamp;
            return;
        }
        if self.entries.is_full() {
            let oldest = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| (e.stamp, e.bandit))
                .map(|(i, _)| i)
                .expect("full repertoire");
            self.entries.remove(oldest);
        }
        self.entries.push(info);
    }

    /// Entry with the highest stored payoff; ties go to the newest stamp, then the smallest id.
    pub fn best(&self) -> Option<&BanditInfo> {
        self.entries.iter().min_by(|a, b| {
            b.payoff
                .cmp(&a.payoff)
                .then(b.stamp.cmp(&a.stamp))
                .then(a.bandit.cmp(&b.bandit))
        })
    }
}

pub fn update_repertoire(mut rep: Repertoire, info: BanditInfo) -> Repertoire {
    rep.update(info);
    rep
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Innovate,
    Observe,
    Exploit,
}

impl ActionKind {
    pub fn code(self) -> char {
        match self {
            ActionKind::Innovate => 'I',
            ActionKind::Observe => 'O',
            ActionKind::Exploit => 'X',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "I" => Some(ActionKind::Innovate),
            "O" => Some(ActionKind::Observe),
            "X" => Some(ActionKind::Exploit),
            _ => None,
        }
    }

    pub fn is_learning(self) -> bool {
        !matches!(self, ActionKind::Exploit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Innovate,
    Observe,
    Exploit(BanditId),
}

impl Action {
    pub fn kind(self) -> ActionKind {
        match self {
            Action::Innovate => ActionKind::Innovate,
            Action::Observe => ActionKind::Observe,
            Action::Exploit(_) => ActionKind::Exploit,
        }
    }
}

/// Threshold agent: exploits while it knows a bandit paying more than
/// `threshold`, otherwise learns, observing with probability `observe_prob`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub index: u16,
    pub threshold: u32,
    pub observe_prob: f64,
}

impl AgentSpec {
    /// Agent `index` in 1..=120: threshold = (i-1)/10 + 1, observe_prob = 0.1 * ((i-1) % 10).
    pub fn from_index(index: u16) -> Self {
        assert!((1..=AGENT_COUNT as u16).contains(&index), "agent index {index}");
        let k = (index - 1) as u32;
        AgentSpec {
            index,
            threshold: k / 10 + 1,
            observe_prob: (k % 10) as f64 / 10.0,
        }
    }

    /// Position of the observe probability on the 0.0..0.9 grid.
    pub fn observe_level(&self) -> u32 {
        (self.index as u32 - 1) % 10
    }
}

pub fn agent_grid() -> Vec<AgentSpec> {
    (1..=AGENT_COUNT as u16).map(AgentSpec::from_index).collect()
}

pub fn agent_decide<R: Rng + ?Sized>(spec: &AgentSpec, rep: &Repertoire, rng: &mut R) -> Action {
    if let Some(best) = rep.best() {
        if best.payoff > spec.threshold {
            return Action::Exploit(best.bandit);
        }
    }
    if rng.gen_bool(spec.observe_prob) {
        Action::Observe
    } else {
        Action::Innovate
    }
}

/// Innovate at round `t`.
pub fn innovate<R: Rng + ?Sized>(board: &BanditBoard, cfg: &EnvConfig, t: Round, rng: &mut R) -> BanditInfo {
    let (bandit, payoff) = innovate_draw(board, cfg.n_innovate, rng);
    BanditInfo::new(bandit, payoff, t)
}

/// One realized exploitation from the previous round, as seen by an observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exploitation {
    pub bandit: BanditId,
    pub payoff: Payoff,
}

/// Pick one exploiting agent of the previous round uniformly at random.
/// `stamp` is the round those exploitations happened in.
pub fn observe_draw<R: Rng + ?Sized>(
    previous: &[Exploitation],
    stamp: Round,
    rng: &mut R,
) -> Option<BanditInfo> {
    if previous.is_empty() {
        return None;
    }
    let pick = previous[rng.gen_range(0..previous.len())];
    Some(BanditInfo::new(pick.bandit, pick.payoff, stamp))
}

/// Exploit `target` at round `t`: collect its current payoff and refresh the entry.
pub fn exploit(board: &BanditBoard, rep: &mut Repertoire, target: BanditId, t: Round) -> Result<Payoff, EntrantError> {
    if !rep.contains(target) {
        return Err(EntrantError::NotInRepertoire(target));
    }
    let payoff = board.payoff(target);
    rep.update(BanditInfo::new(target, payoff, t));
    Ok(payoff)
}
