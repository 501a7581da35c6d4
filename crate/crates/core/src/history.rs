//! Pre-computed agent history that player games replay against.
//!
//! Round `r` of a history uses two random streams of the history seed:
//! `2r` drives the board churn and `2r + 1` drives the agents. Any round can
//! therefore be re-simulated from the stored state of the round before it.
//!
//! On disk a history is a line-oriented text file:
//!
//! ```text
//! RMAB1 <N> <p_c> <n_I> <seed>
//! B <round> <N payoffs>
//! R <round> <agent> <I|O|X> <bandit|-> <payoff|-> <repertoire>
//! ...
//! END <rounds> <sha256 of everything above>
//! ```
//!
//! A repertoire is `-` when empty, otherwise comma-separated
//! `bandit:payoff:stamp` triples in storage order.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::entrants::{
    agent_decide, agent_grid, exploit, innovate, observe_draw, Action, ActionKind, AgentSpec, BanditInfo,
    Exploitation, Repertoire, AGENT_COUNT,
};
use crate::env::{step_board, BanditBoard, BanditId, EnvConfig, EnvError, Payoff, Round};
use crate::rng::{stream_rng, SimRng};

pub const DEFAULT_ROUNDS: usize = 1000;
const MAGIC: &str = "RMAB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entrant {
    Agent(u16),
    Player,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    pub entrant: Entrant,
    pub kind: ActionKind,
    /// Exploited bandit, or the bandit learned about (absent for a failed Observe).
    pub bandit: Option<BanditId>,
    /// Payoff received; only for Exploit.
    pub payoff: Option<Payoff>,
    pub repertoire: Repertoire,
}

impl RoundRecord {
    pub fn exploitation(&self) -> Option<Exploitation> {
        match (self.kind, self.bandit, self.payoff) {
            (ActionKind::Exploit, Some(bandit), Some(payoff)) => Some(Exploitation { bandit, payoff }),
            _ => None,
        }
    }

    /// One `R` line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut s = String::with_capacity(48);
        let who = match self.entrant {
            Entrant::Agent(i) => i.to_string(),
            Entrant::Player => "P".to_string(),
        };
        write!(s, "R {} {} {} ", self.round, who, self.kind.code()).unwrap();
        push_opt(&mut s, self.bandit);
        s.push(' ');
        push_opt(&mut s, self.payoff);
        s.push(' ');
        if self.repertoire.is_empty() {
            s.push('-');
        } else {
            for (i, e) in self.repertoire.entries().iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                write!(s, "{}:{}:{}", e.bandit, e.payoff, e.stamp).unwrap();
            }
        }
        s
    }

    /// Parse an `R` line.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 || f[0] != "R" {
            return Err(format!("expected 7 fields starting with R, got {:?}", line));
        }
        let round: Round = f[1].parse().map_err(|_| format!("bad round {:?}", f[1]))?;
        let entrant = if f[2] == "P" {
            Entrant::Player
        } else {
            Entrant::Agent(f[2].parse().map_err(|_| format!("bad entrant {:?}", f[2]))?)
        };
        let kind = ActionKind::from_code(f[3]).ok_or_else(|| format!("bad action code {:?}", f[3]))?;
        let bandit = parse_opt(f[4])?;
        let payoff = parse_opt(f[5])?;
        let mut repertoire = Repertoire::new();
        if f[6] != "-" {
            for triple in f[6].split(',') {
                let p: Vec<&str> = triple.split(':').collect();
                if p.len() != 3 {
                    return Err(format!("bad repertoire entry {:?}", triple));
                }
                let parse = |x: &str| x.parse::<i64>().map_err(|_| format!("bad repertoire entry {:?}", triple));
                let (b, s, t) = (parse(p[0])?, parse(p[1])?, parse(p[2])?);
                if b < 1 || b > BanditId::MAX as i64 || s < 0 || s > Payoff::MAX as i64 {
                    return Err(format!("bad repertoire entry {:?}", triple));
                }
                if repertoire.contains(b as BanditId) || repertoire.len() == 3 {
                    return Err(format!("invalid repertoire {:?}", f[6]));
                }
                repertoire.update(BanditInfo::new(b as BanditId, s as Payoff, t as Round));
            }
        }
        if (kind == ActionKind::Exploit) != payoff.is_some() {
            return Err("payoff must be present exactly for Exploit".into());
        }
        if kind == ActionKind::Exploit && bandit.is_none() {
            return Err("Exploit without a bandit".into());
        }
        Ok(RoundRecord { round, entrant, kind, bandit, payoff, repertoire })
    }
}

fn push_opt<T: std::fmt::Display>(s: &mut String, v: Option<T>) {
    match v {
        Some(x) => write!(s, "{x}").unwrap(),
        None => s.push('-'),
    }
}

fn parse_opt<T: std::str::FromStr>(x: &str) -> Result<Option<T>, String> {
    if x == "-" {
        Ok(None)
    } else {
        x.parse().map(Some).map_err(|_| format!("bad field {:?}", x))
    }
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("invalid configuration in header: {0}")]
    Config(#[from] EnvError),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("round {round}: expected {expected} agent records, found {found}")]
    RecordCount { round: usize, expected: usize, found: usize },
    #[error("file is truncated: missing END trailer")]
    Truncated,
    #[error("checksum mismatch: trailer says {expected}, content hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("history has {rounds} rounds, fewer than the {needed} a game window needs")]
    TooShort { rounds: usize, needed: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryDB {
    pub config: EnvConfig,
    pub seed: u64,
    boards: Vec<BanditBoard>,
    records: Vec<Vec<RoundRecord>>,
}

fn board_rng(seed: u64, round: usize) -> SimRng {
    stream_rng(seed, 2 * round as u64)
}

fn agent_rng(seed: u64, round: usize) -> SimRng {
    stream_rng(seed, 2 * round as u64 + 1)
}

/// Every agent (ascending index) takes one move at `round` against `board`.
fn play_agents<R: Rng>(
    cfg: &EnvConfig,
    agents: &[AgentSpec],
    board: &BanditBoard,
    previous: &[Exploitation],
    reps: &mut [Repertoire],
    round: Round,
    rng: &mut R,
) -> Vec<RoundRecord> {
    agents
        .iter()
        .zip(reps.iter_mut())
        .map(|(spec, rep)| {
            let action = agent_decide(spec, rep, rng);
            let (bandit, payoff) = match action {
                Action::Innovate => {
                    let info = innovate(board, cfg, round, rng);
                    rep.update(info);
                    (Some(info.bandit), None)
                }
                Action::Observe => match observe_draw(previous, round - 1, rng) {
                    Some(info) => {
                        rep.update(info);
                        (Some(info.bandit), None)
                    }
                    None => (None, None),
                },
                Action::Exploit(target) => {
                    let p = exploit(board, rep, target, round).expect("agents exploit their own repertoire");
                    (Some(target), Some(p))
                }
            };
            RoundRecord {
                round,
                entrant: Entrant::Agent(spec.index),
                kind: action.kind(),
                bandit,
                payoff,
                repertoire: rep.clone(),
            }
        })
        .collect()
}

pub fn generate_history(cfg: &EnvConfig, seed: u64) -> HistoryDB {
    generate_history_rounds(cfg, seed, DEFAULT_ROUNDS)
}

/// Run the 120 agents from empty repertoires for `rounds` rounds.
pub fn generate_history_rounds(cfg: &EnvConfig, seed: u64, rounds: usize) -> HistoryDB {
    let agents = agent_grid();
    let mut board = BanditBoard::random(cfg, &mut board_rng(seed, 0));
    let mut reps = vec![Repertoire::new(); AGENT_COUNT];
    let mut boards = Vec::with_capacity(rounds);
    let mut records: Vec<Vec<RoundRecord>> = Vec::with_capacity(rounds);
    let mut previous: Vec<Exploitation> = Vec::new();
    for r in 1..=rounds {
        step_board(&mut board, cfg, &mut board_rng(seed, r));
        let recs = play_agents(cfg, &agents, &board, &previous, &mut reps, r as Round, &mut agent_rng(seed, r));
        previous = recs.iter().filter_map(RoundRecord::exploitation).collect();
        boards.push(board.clone());
        records.push(recs);
    }
    HistoryDB { config: cfg.clone(), seed, boards, records }
}

impl HistoryDB {
    pub fn rounds(&self) -> usize {
        self.boards.len()
    }

    /// Board in effect during `round` (1-based).
    pub fn board(&self, round: usize) -> &BanditBoard {
        &self.boards[round - 1]
    }

    pub fn records(&self, round: usize) -> &[RoundRecord] {
        &self.records[round - 1]
    }

    /// Agents' realized exploitations in `round`; empty for round 0.
    pub fn exploitations(&self, round: usize) -> Vec<Exploitation> {
        if round == 0 {
            return Vec::new();
        }
        self.records(round).iter().filter_map(RoundRecord::exploitation).collect()
    }

    /// Re-simulate the agents of `round` from the stored state of the round before.
    pub fn replay_round(&self, round: usize) -> (BanditBoard, Vec<RoundRecord>) {
        let mut board = if round == 1 {
            BanditBoard::random(&self.config, &mut board_rng(self.seed, 0))
        } else {
            self.board(round - 1).clone()
        };
        step_board(&mut board, &self.config, &mut board_rng(self.seed, round));
        let mut reps: Vec<Repertoire> = if round == 1 {
            vec![Repertoire::new(); AGENT_COUNT]
        } else {
            self.records(round - 1).iter().map(|r| r.repertoire.clone()).collect()
        };
        let recs = play_agents(
            &self.config,
            &agent_grid(),
            self.board(round),
            &self.exploitations(round - 1),
            &mut reps,
            round as Round,
            &mut agent_rng(self.seed, round),
        );
        (board, recs)
    }

    /// Canonical text encoding; identical databases encode to identical bytes.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rounds() * (AGENT_COUNT * 40 + 300));
        writeln!(
            out,
            "{MAGIC} {} {} {} {}",
            self.config.n_bandits, self.config.p_change, self.config.n_innovate, self.seed
        )
        .unwrap();
        for (i, (board, recs)) in self.boards.iter().zip(&self.records).enumerate() {
            write!(out, "B {}", i + 1).unwrap();
            for p in board.payoffs() {
                write!(out, " {p}").unwrap();
            }
            out.push('\n');
            for rec in recs {
                out.push_str(&rec.to_line());
                out.push('\n');
            }
        }
        let digest = sha256_hex(out.as_bytes());
        writeln!(out, "END {} {}", self.rounds(), digest).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HistoryError> {
        let body_end = text.trim_end_matches('\n').rfind('\n').map_or(0, |i| i + 1);
        let trailer = text[body_end..].trim_end();
        let t: Vec<&str> = trailer.split_whitespace().collect();
        if t.len() != 3 || t[0] != "END" {
            return Err(HistoryError::Truncated);
        }
        let body = &text[..body_end];
        let actual = sha256_hex(body.as_bytes());
        if actual != t[2] {
            return Err(HistoryError::Checksum { expected: t[2].to_string(), actual });
        }
        let declared_rounds: usize = t[1].parse().map_err(|_| HistoryError::Truncated)?;

        let mut lines = body.lines().enumerate().peekable();
        let header = lines.next().map(|(_, l)| l).ok_or_else(|| HistoryError::Header("empty file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != MAGIC {
            return Err(HistoryError::Header(format!("expected `{MAGIC} <N> <p_c> <n_I> <seed>`, got {header:?}")));
        }
        let field = |i: usize, name: &str| HistoryError::Header(format!("bad {name} {:?}", h[i]));
        let n_bandits: usize = h[1].parse().map_err(|_| field(1, "N"))?;
        let p_change: f64 = h[2].parse().map_err(|_| field(2, "p_c"))?;
        let n_innovate: usize = h[3].parse().map_err(|_| field(3, "n_I"))?;
        let seed: u64 = h[4].parse().map_err(|_| field(4, "seed"))?;
        let mut config = EnvConfig::new(1, 0.0).expect("defaults are valid");
        config.n_bandits = n_bandits;
        config.p_change = p_change;
        config.n_innovate = n_innovate;
        config.validate()?;

        let mut boards = Vec::new();
        let mut records: Vec<Vec<RoundRecord>> = Vec::new();
        while let Some((ln, line)) = lines.next() {
            let line_no = ln + 1;
            let err = |msg: String| HistoryError::Line { line: line_no, msg };
            let mut f = line.split_whitespace();
            if f.next() != Some("B") {
                return Err(err(format!("expected a B line, got {line:?}")));
            }
            let round: usize = f.next().and_then(|x| x.parse().ok()).ok_or_else(|| err("bad round".into()))?;
            if round != boards.len() + 1 {
                return Err(err(format!("expected round {}, got {round}", boards.len() + 1)));
            }
            let payoffs: Vec<Payoff> = f
                .map(|x| x.parse().map_err(|_| err(format!("bad payoff {x:?}"))))
                .collect::<Result<_, _>>()?;
            if payoffs.len() != n_bandits {
                return Err(err(format!("round {round}: expected {n_bandits} payoffs, got {}", payoffs.len())));
            }
            boards.push(BanditBoard::from_payoffs(payoffs));
            let mut recs = Vec::with_capacity(AGENT_COUNT);
            while let Some(&(ln, line)) = lines.peek() {
                if !line.starts_with("R ") {
                    break;
                }
                lines.next();
                let rec = RoundRecord::parse_line(line).map_err(|msg| HistoryError::Line { line: ln + 1, msg })?;
                let expected_agent = recs.len() + 1;
                if rec.round != round as Round {
                    return Err(HistoryError::Line { line: ln + 1, msg: format!("record for round {} inside round {round}", rec.round) });
                }
                if rec.entrant != Entrant::Agent(expected_agent as u16) {
                    return Err(HistoryError::Line {
                        line: ln + 1,
                        msg: format!("round {round}: expected agent {expected_agent}, got {:?}", rec.entrant),
                    });
                }
                if rec.bandit.is_some_and(|b| b == 0 || b as usize > n_bandits) {
                    return Err(HistoryError::Line { line: ln + 1, msg: "bandit id out of range".into() });
                }
                recs.push(rec);
                if recs.len() > AGENT_COUNT {
                    break;
                }
            }
            if recs.len() != AGENT_COUNT {
                return Err(HistoryError::RecordCount { round, expected: AGENT_COUNT, found: recs.len() });
            }
            records.push(recs);
        }
        if boards.len() != declared_rounds {
            return Err(HistoryError::Truncated);
        }
        Ok(HistoryDB { config, seed, boards, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HistoryError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HistoryError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A run of consecutive history rounds replayed as one game.
/// Window-relative round `t` runs from `cfg.first_round()` (e.g. -2) to the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub first_round: Round,
    pub last_round: Round,
}

impl Window {
    pub fn new(cfg: &EnvConfig, start: usize) -> Self {
        Window { start, first_round: cfg.first_round(), last_round: cfg.horizon as Round }
    }

    pub fn len(&self) -> usize {
        (self.last_round - self.first_round + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// History round for window round `t`.
    pub fn history_round(&self, t: Round) -> usize {
        debug_assert!((self.first_round..=self.last_round).contains(&t));
        (self.start as i64 + (t - self.first_round) as i64) as usize
    }

    /// Window round for a history round (may fall outside the window).
    pub fn relative(&self, round: usize) -> Round {
        (round as i64 - self.start as i64) as Round + self.first_round
    }

    pub fn end(&self) -> usize {
        self.start + self.len() - 1
    }
}

/// Uniform window start in `2..=rounds - len + 1`, so the round before the window exists.
pub fn sample_window<R: Rng + ?Sized>(db: &HistoryDB, rng: &mut R) -> Result<Window, HistoryError> {
    let len = db.config.game_length() as usize;
    if db.rounds() < len + 1 {
        return Err(HistoryError::TooShort { rounds: db.rounds(), needed: len + 1 });
    }
    let start = rng.gen_range(2..=db.rounds() - len + 1);
    Ok(Window::new(&db.config, start))
}
