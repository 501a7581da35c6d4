//! The restless bandit board and its payoff distribution.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based bandit identifier.
pub type BanditId = u16;
pub type Payoff = u32;
/// Round index. Window-relative rounds start at -2, so this is signed.
pub type Round = i32;

/// Tail mass at which the analytic pmf is cut off.
const PMF_TAIL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("n_bandits must be at least 1")]
    NoBandits,
    #[error("n_bandits {0} exceeds the supported maximum of {max}", max = BanditId::MAX)]
    TooManyBandits(usize),
    #[error("p_change {0} is outside [0, 1]")]
    ChangeProbability(f64),
    #[error("n_innovate {n_innovate} must lie in 1..={n_bandits}")]
    InnovateRange { n_innovate: usize, n_bandits: usize },
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("exponential rate {0} must be positive and finite")]
    Rate(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_bandits: usize,
    pub p_change: f64,
    pub n_innovate: usize,
    /// Number of scored rounds.
    pub horizon: u32,
    /// Learning-only rounds before scoring starts.
    pub learning_rounds: u32,
    pub rate: f64,
}

impl EnvConfig {
    /// 100 bandits, 100 scored rounds, 3 learning rounds, unit rate.
    pub fn new(n_innovate: usize, p_change: f64) -> Result<Self, EnvError> {
        let cfg = EnvConfig {
            n_bandits: 100,
            p_change,
            n_innovate,
            horizon: 100,
            learning_rounds: 3,
            rate: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_bandits == 0 {
            return Err(EnvError::NoBandits);
        }
        if self.n_bandits > BanditId::MAX as usize {
            return Err(EnvError::TooManyBandits(self.n_bandits));
        }
        if !(0.0..=1.0).contains(&self.p_change) {
            return Err(EnvError::ChangeProbability(self.p_change));
        }
        if self.n_innovate == 0 || self.n_innovate > self.n_bandits {
            return Err(EnvError::InnovateRange {
                n_innovate: self.n_innovate,
                n_bandits: self.n_bandits,
            });
        }
        if self.horizon == 0 {
            return Err(EnvError::Horizon);
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(EnvError::Rate(self.rate));
        }
        Ok(())
    }

    /// Total rounds a player takes part in (learning plus scored).
    pub fn game_length(&self) -> u32 {
        self.learning_rounds + self.horizon
    }

    /// First window-relative round (e.g. -2 for three learning rounds).
    pub fn first_round(&self) -> Round {
        1 - self.learning_rounds as Round
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BanditBoard {
    payoffs: Vec<Payoff>,
}

impl BanditBoard {
    pub fn from_payoffs(payoffs: Vec<Payoff>) -> Self {
        BanditBoard { payoffs }
    }

    /// Fresh board with every payoff drawn independently.
    pub fn random<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Self {
        let payoffs = (0..cfg.n_bandits)
            .map(|_| sample_payoff(rng, cfg.rate))
            .collect();
        BanditBoard { payoffs }
    }

    pub fn len(&self) -> usize {
        self.payoffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payoffs.is_empty()
    }

    /// Payoff of bandit `id` (1-based). Panics on an out-of-range id.
    pub fn payoff(&self, id: BanditId) -> Payoff {
        self.payoffs[id as usize - 1]
    }

    pub fn get(&self, id: BanditId) -> Option<Payoff> {
        (id as usize).checked_sub(1).and_then(|i| self.payoffs.get(i).copied())
    }

    pub fn payoffs(&self) -> &[Payoff] {
        &self.payoffs
    }

    pub fn max_payoff(&self) -> Payoff {
        self.payoffs.iter().copied().max().unwrap_or(0)
    }
}

/// Draw one payoff: an exponential variate, squared, truncated to an integer.
pub fn sample_payoff<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Payoff {
    let u: f64 = rng.gen();
    let x = -(1.0 - u).ln() / rate;
    (x * x).floor() as Payoff
}

/// Redraw each bandit with probability `p_change`, in ascending id order.
/// Returns the number of change events (a redraw may land on the old value).
pub fn step_board<R: Rng + ?Sized>(board: &mut BanditBoard, cfg: &EnvConfig, rng: &mut R) -> usize {
    debug_assert_eq!(board.len(), cfg.n_bandits);
    let mut changed = 0;
    for slot in board.payoffs.iter_mut() {
        if rng.gen_bool(cfg.p_change) {
            *slot = sample_payoff(rng, cfg.rate);
            changed += 1;
        }
    }
    changed
}

/// Sample `n_innovate` distinct bandits and return the best one.
/// Ties on the maximum payoff are broken uniformly at random.
pub fn innovate_draw<R: Rng + ?Sized>(
    board: &BanditBoard,
    n_innovate: usize,
    rng: &mut R,
) -> (BanditId, Payoff) {
    let picks = index::sample(rng, board.len(), n_innovate);
    let best = picks
        .iter()
        .map(|i| board.payoffs[i])
        .max()
        .expect("n_innovate >= 1");
    let tied: Vec<usize> = picks.iter().filter(|&i| board.payoffs[i] == best).collect();
    let chosen = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.gen_range(0..tied.len())]
    };
    ((chosen + 1) as BanditId, best)
}

/// Analytic payoff distribution and the distribution of the Innovate maximum.
#[derive(Clone, Debug)]
pub struct PayoffDistribution {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
}

impl PayoffDistribution {
    /// P(s) = Pr(s <= x^2 < s+1) = exp(-rate*sqrt(s)) - exp(-rate*sqrt(s+1)).
    pub fn new(rate: f64) -> Self {
        let survival = |s: f64| (-rate * s.sqrt()).exp();
        let mut pmf = Vec::new();
        let mut s = 0u32;
        loop {
            pmf.push(survival(s as f64) - survival(s as f64 + 1.0));
            s += 1;
            if survival(s as f64) < PMF_TAIL {
                break;
            }
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // E(s) = sum_{s>=1} Pr(payoff >= s)
        let mean = (1..=pmf.len()).map(|s| survival(s as f64)).sum();
        PayoffDistribution { pmf, cdf, mean }
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest payoff covered by the truncated table.
    pub fn support_max(&self) -> Payoff {
        (self.pmf.len() - 1) as Payoff
    }

    /// P_I(s) = F(s)^n - F(s-1)^n.
    pub fn innovate_pmf(&self, n_innovate: usize) -> Vec<f64> {
        if n_innovate == 1 {
            return self.pmf.clone();
        }
        let n = n_innovate as i32;
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&f| {
                let cur = f.powi(n);
                let p = cur - prev;
                prev = cur;
                p
            })
            .collect()
    }

    /// E(s_I) = sum_{s>=0} (1 - F(s)^n).
    pub fn innovate_mean(&self, n_innovate: usize) -> f64 {
        if n_innovate == 1 {
            return self.mean;
        }
        let n = n_innovate as i32;
        self.cdf.iter().map(|&f| 1.0 - f.powi(n)).sum()
    }
}

pub fn payoff_pmf(rate: f64) -> PayoffDistribution {
    PayoffDistribution::new(rate)
}
