//! Monte Carlo evaluation of the optimal players and the agents, the
//! (n_I, p_c) phase diagram, and the swarm intelligence effect.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entrants::{agent_grid, AGENT_COUNT};
use crate::env::{payoff_pmf, EnvConfig, EnvError, Round};
use crate::history::{generate_history, HistoryDB, HistoryError, Window};
use crate::play::{agent_window_scores, game_window, observe_mean, PlayError, PlayerState};
use crate::rng::derive_seed;
use crate::strategy::{choose_action, Knowledge, StrategyError, StrategyKind};

/// Relative gap below which I+O is considered no better than EO.
pub const NOISE_EPSILON: f64 = 0.02;
/// Standard errors within which O and I are considered indistinguishable.
pub const BOUNDARY_SE: f64 = 3.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("history was generated with {db:?}, game asked for {cfg:?}")]
    ConfigMismatch { cfg: Box<EnvConfig>, db: Box<EnvConfig> },
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Play(#[from] PlayError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("payoff means must be non-negative, got {0}")]
    NegativePayoff(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub seed: u64,
    pub window_start: usize,
    /// Mean payoff per scored round, indexed like [`StrategyKind::ALL`].
    pub strategies: [f64; 4],
    /// Mean payoff per scored round of agents 1..=120 over the same window.
    pub agents: Vec<f64>,
}

impl GameResult {
    pub fn strategy(&self, kind: StrategyKind) -> f64 {
        self.strategies[kind_index(kind)]
    }
}

fn kind_index(kind: StrategyKind) -> usize {
    StrategyKind::ALL.iter().position(|&k| k == kind).unwrap()
}

fn check_config(cfg: &EnvConfig, db: &HistoryDB) -> Result<(), HarnessError> {
    if &db.config != cfg {
        return Err(HarnessError::ConfigMismatch { cfg: Box::new(cfg.clone()), db: Box::new(db.config.clone()) });
    }
    Ok(())
}

/// Play one complete-knowledge player of `kind` through `window`.
pub fn play_strategy(
    cfg: &EnvConfig,
    db: &HistoryDB,
    window: Window,
    seed: u64,
    kind: StrategyKind,
) -> Result<PlayerState, HarnessError> {
    let dist = payoff_pmf(cfg.rate);
    let (mean, innovate_mean) = (dist.mean(), dist.innovate_mean(cfg.n_innovate));
    let mut player = PlayerState::new(window, seed);
    for t in window.first_round..=window.last_round {
        let k = Knowledge::new(
            cfg.p_change,
            mean,
            innovate_mean,
            observe_mean(db, &window, t),
            cfg.horizon as Round,
            t,
        );
        let action = choose_action(kind, player.repertoire(), &k)?;
        player.play(db, action)?;
    }
    Ok(player)
}

/// One game: a sampled window of `db` with the four optimal players, each on
/// its own copy of the game's player stream.
pub fn run_game(cfg: &EnvConfig, db: &HistoryDB, seed: u64) -> Result<GameResult, HarnessError> {
    check_config(cfg, db)?;
    let window = game_window(db, seed)?;
    let horizon = cfg.horizon as f64;
    let mut strategies = [0.0; 4];
    for (slot, kind) in strategies.iter_mut().zip(StrategyKind::ALL) {
        *slot = play_strategy(cfg, db, window, seed, kind)?.score() as f64 / horizon;
    }
    let agents = agent_window_scores(db, &window, window.last_round)
        .into_iter()
        .map(|s| s as f64 / horizon)
        .collect();
    Ok(GameResult { seed, window_start: window.start, strategies, agents })
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Zero when fewer than two runs.
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count();
        if n == 0 {
            return Estimate::default();
        }
        let mean = xs.clone().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate { mean, se: 0.0 };
        }
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate { mean, se: (var / n as f64).sqrt() }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn pooled_se(&self, other: &Estimate) -> f64 {
        (self.se * self.se + other.se * other.se).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub seed: u64,
    pub strategies: [Estimate; 4],
    pub agents: Vec<Estimate>,
}

impl MonteCarloSummary {
    pub fn strategy(&self, kind: StrategyKind) -> Estimate {
        self.strategies[kind_index(kind)]
    }

    fn from_games(games: &[GameResult], seed: u64) -> Self {
        let mut strategies = [Estimate::default(); 4];
        for (i, s) in strategies.iter_mut().enumerate() {
            *s = Estimate::from_samples(games.iter().map(|g| g.strategies[i]));
        }
        let agents = (0..AGENT_COUNT)
            .map(|a| Estimate::from_samples(games.iter().map(|g| g.agents[a])))
            .collect();
        MonteCarloSummary { runs: games.len(), seed, strategies, agents }
    }
}

/// Seeds of run `index`: (game seed, history seed).
pub fn run_seeds(seed: u64, index: u64) -> (u64, u64) {
    let game = derive_seed(seed, index);
    (game, derive_seed(game, 1))
}

/// Independent games, each on a freshly generated history.
pub fn monte_carlo(cfg: &EnvConfig, runs: usize, seed: u64) -> Result<MonteCarloSummary, HarnessError> {
    if runs == 0 {
        return Err(HarnessError::NoRuns);
    }
    cfg.validate()?;
    let games = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let (game_seed, history_seed) = run_seeds(seed, i);
            let db = generate_history(cfg, history_seed);
            run_game(cfg, &db, game_seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloSummary::from_games(&games, seed))
}

/// Games that all replay windows of one fixed history.
pub fn monte_carlo_on(cfg: &EnvConfig, db: &HistoryDB, runs: usize, seed: u64) -> Result<MonteCarloSummary, HarnessError> {
    if runs == 0 {
        return Err(HarnessError::NoRuns);
    }
    check_config(cfg, db)?;
    let games = (0..runs as u64)
        .into_par_iter()
        .map(|i| run_game(cfg, db, derive_seed(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloSummary::from_games(&games, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    ObserveOptimal,
    InnovateOptimal,
    NoiseDominant,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::ObserveOptimal => "observe-optimal",
            Classification::InnovateOptimal => "innovate-optimal",
            Classification::NoiseDominant => "noise-dominant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub n_innovate: usize,
    pub p_change: f64,
    pub summary: MonteCarloSummary,
    pub classification: Classification,
    /// |O - I| within [`BOUNDARY_SE`] pooled standard errors.
    pub near_boundary: bool,
}

impl PhaseCell {
    pub fn from_summary(n_innovate: usize, p_change: f64, summary: MonteCarloSummary) -> Self {
        let io = summary.strategy(StrategyKind::InnovateAndObserve).mean;
        let eo = summary.strategy(StrategyKind::ExploitOnly).mean;
        let i = summary.strategy(StrategyKind::InnovateOnly);
        let o = summary.strategy(StrategyKind::ObserveOnly);
        let classification = if io - eo < NOISE_EPSILON * eo {
            Classification::NoiseDominant
        } else if o.mean > i.mean {
            Classification::ObserveOptimal
        } else {
            Classification::InnovateOptimal
        };
        let near_boundary = (o.mean - i.mean).abs() < BOUNDARY_SE * o.pooled_se(&i);
        PhaseCell { n_innovate, p_change, summary, classification, near_boundary }
    }

    pub fn observe_minus_innovate(&self) -> (f64, f64) {
        let i = self.summary.strategy(StrategyKind::InnovateOnly);
        let o = self.summary.strategy(StrategyKind::ObserveOnly);
        (o.mean - i.mean, o.pooled_se(&i))
    }
}

/// Monte Carlo every (n_I, p_c) cell with the same base seed and classify it.
pub fn phase_diagram(cells: &[(usize, f64)], runs: usize, seed: u64) -> Result<Vec<PhaseCell>, HarnessError> {
    cells
        .iter()
        .map(|&(n_innovate, p_change)| {
            let cfg = EnvConfig::new(n_innovate, p_change)?;
            let summary = monte_carlo(&cfg, runs, seed)?;
            Ok(PhaseCell::from_summary(n_innovate, p_change, summary))
        })
        .collect()
}

/// Performance surplus over the Innovate-only optimum; positive means the effect is present.
pub fn swarm_effect(mean: f64, innovate_only_mean: f64) -> Result<f64, HarnessError> {
    for v in [mean, innovate_only_mean] {
        if v < 0.0 || v.is_nan() {
            return Err(HarnessError::NegativePayoff(v));
        }
    }
    Ok(mean - innovate_only_mean)
}

/// `entrant,threshold,observe_prob,mean,se` rows for the four strategies and all agents.
pub fn summary_csv(cfg: &EnvConfig, summary: &MonteCarloSummary) -> String {
    let mut out = String::new();
    writeln!(out, "n_innovate,p_change,runs,seed,entrant,threshold,observe_prob,mean,se").unwrap();
    let prefix = format!("{},{},{},{}", cfg.n_innovate, cfg.p_change, summary.runs, summary.seed);
    for kind in StrategyKind::ALL {
        let e = summary.strategy(kind);
        writeln!(out, "{prefix},{},,,{:.6},{:.6}", kind.label(), e.mean, e.se).unwrap();
    }
    for (spec, e) in agent_grid().iter().zip(&summary.agents) {
        writeln!(
            out,
            "{prefix},P({}),{},{:.1},{:.6},{:.6}",
            spec.index, spec.threshold, spec.observe_prob, e.mean, e.se
        )
        .unwrap();
    }
    out
}

pub fn phase_csv(cells: &[PhaseCell]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "n_innovate,p_change,runs,io_mean,io_se,i_mean,i_se,o_mean,o_se,eo_mean,eo_se,o_minus_i,o_minus_i_se,classification,near_boundary"
    )
    .unwrap();
    for c in cells {
        let s = &c.summary;
        write!(out, "{},{},{}", c.n_innovate, c.p_change, s.runs).unwrap();
        for kind in StrategyKind::ALL {
            let e = s.strategy(kind);
            write!(out, ",{:.6},{:.6}", e.mean, e.se).unwrap();
        }
        let (d, se) = c.observe_minus_innovate();
        writeln!(out, ",{d:.6},{se:.6},{},{}", c.classification.label(), c.near_boundary).unwrap();
    }
    out
}
