//! The work behind each CLI subcommand, returning what would be written to disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rmab_core::analysis::{compute_predictors, model_select, table_csv, PredictorRow, SessionLog};
use rmab_core::harness::{monte_carlo, monte_carlo_on, phase_csv, phase_diagram, summary_csv};
use rmab_core::history::{generate_history_rounds, HistoryDB};
use rmab_core::session::{Environment, HistoryStore};
use rmab_core::EnvConfig;

pub fn gen_history(n_innovate: usize, p_change: f64, seed: u64, rounds: usize) -> Result<HistoryDB> {
    let cfg = EnvConfig::new(n_innovate, p_change)?;
    Ok(generate_history_rounds(&cfg, seed, rounds))
}

pub fn simulate(n_innovate: usize, p_change: f64, runs: usize, seed: u64, history: Option<&Path>) -> Result<String> {
    let cfg = EnvConfig::new(n_innovate, p_change)?;
    let summary = match history {
        Some(path) => {
            let db = HistoryDB::load(path).with_context(|| format!("loading {}", path.display()))?;
            monte_carlo_on(&cfg, &db, runs, seed)?
        }
        None => monte_carlo(&cfg, runs, seed)?,
    };
    Ok(summary_csv(&cfg, &summary))
}

/// Every (n_I, p_c) combination of the two lists.
pub fn phase(ni_list: &[usize], pc_list: &[f64], runs: usize, seed: u64) -> Result<String> {
    let cells: Vec<(usize, f64)> = ni_list.iter().flat_map(|&n| pc_list.iter().map(move |&p| (n, p))).collect();
    Ok(phase_csv(&phase_diagram(&cells, runs, seed)?))
}

/// Regression table over the `*.log` files in `dir`: one row per environment
/// (from an `# environment X` comment) and one for all logs together.
pub fn analyze(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "log"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .log files in {}", dir.display());
    }
    let mut groups: BTreeMap<String, Vec<PredictorRow>> = BTreeMap::new();
    for f in &files {
        let text = std::fs::read_to_string(f)?;
        let (log, comments) = SessionLog::from_text(&text).with_context(|| format!("parsing {}", f.display()))?;
        let row = compute_predictors(&log);
        let env = comments.iter().find_map(|c| c.strip_prefix("environment ")).map(|e| e.trim().to_string());
        if let Some(env) = env {
            groups.entry(env).or_default().push(row);
        }
        groups.entry("ALL".into()).or_default().push(row);
    }
    let mut fits = Vec::new();
    for (case, rows) in &groups {
        match model_select(rows) {
            Ok(fit) => fits.push((case.clone(), fit, rows.iter().filter(|r| r.dt_defaulted).count())),
            Err(e) => eprintln!("skipping {case}: {e}"),
        }
    }
    if fits.is_empty() {
        bail!("no group had enough logs to fit");
    }
    let table: Vec<_> = fits.iter().map(|(c, f, d)| (c.clone(), f, *d)).collect();
    Ok(table_csv(&table))
}

fn history_file(dir: &Path, env: Environment) -> PathBuf {
    dir.join(format!("{}.rmab", env.label()))
}

/// Histories for the four environments. Files `A.rmab`..`D.rmab` in `dir` are
/// loaded; missing ones are generated from `seed` and saved there.
pub fn load_store(dir: Option<&Path>, seed: u64, rounds: usize) -> Result<HistoryStore> {
    let mut store = HistoryStore::new();
    for (i, env) in Environment::ALL.into_iter().enumerate() {
        let path = dir.map(|d| history_file(d, env));
        let db = match &path {
            Some(p) if p.exists() => {
                let db = HistoryDB::load(p).with_context(|| format!("loading {}", p.display()))?;
                if db.config != env.config() {
                    bail!("{} does not hold environment {} parameters", p.display(), env.label());
                }
                db
            }
            _ => {
                let db = generate_history_rounds(&env.config(), rmab_core::rng::derive_seed(seed, i as u64), rounds);
                if let Some(p) = &path {
                    db.save(p).with_context(|| format!("saving {}", p.display()))?;
                }
                db
            }
        };
        store.insert(env, db);
    }
    Ok(store)
}
