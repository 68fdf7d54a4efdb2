//! Comparison artifacts built from logged evaluation and training data.
//!
//! Nothing here runs a policy; every number comes from the CSV files that
//! training wrote into the run directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use statrs::statistics::{Data, OrderStatistics, Statistics};
use thiserror::Error;

use tactile_door::fmt_f64;
use tactile_door::rng::{stream, Purpose};
use tactile_door::tactile::UNITS;

use crate::config::Condition;
use crate::runs::{eval_path, read_eval_csv, read_run_manifest, Domain, EpisodeStats, RunError, DOMAINS};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const BOOTSTRAP_LEVEL: f64 = 0.90;
const BOOTSTRAP_SEED: u64 = 0x5EED;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("runs come from different configurations:\n{0}")]
    MixedConfigs(String),
    #[error("no completed run for condition {0}")]
    MissingCondition(Condition),
}

/// One run directory and the condition it is reported under.
#[derive(Debug, Clone)]
pub struct RunInput {
    pub dir: PathBuf,
    /// Overrides the condition stored in the run manifest.
    pub condition: Option<Condition>,
}

struct LoadedRun {
    dir: PathBuf,
    condition: Condition,
    seed: u64,
    eval: BTreeMap<Domain, Vec<EpisodeStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let mean = if xs.is_empty() { f64::NAN } else { xs.iter().mean() };
        let std = if xs.len() < 2 { 0.0 } else { xs.iter().std_dev() };
        Self { mean, std }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub domain: Domain,
    pub condition: Condition,
    pub episodes: usize,
    pub angle: MeanStd,
    pub angle_min: f64,
    pub angle_max: f64,
    pub steps: MeanStd,
    pub reward: MeanStd,
}

pub fn summarize(domain: Domain, condition: Condition, eps: &[EpisodeStats]) -> SummaryRow {
    let angles: Vec<f64> = eps.iter().map(|e| e.final_alpha_deg).collect();
    let steps: Vec<f64> = eps.iter().map(|e| e.steps_to_open as f64).collect();
    let rewards: Vec<f64> = eps.iter().map(|e| e.episode_return).collect();
    SummaryRow {
        domain,
        condition,
        episodes: eps.len(),
        angle: MeanStd::of(&angles),
        angle_min: angles.iter().copied().fold(f64::INFINITY, f64::min),
        angle_max: angles.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        steps: MeanStd::of(&steps),
        reward: MeanStd::of(&rewards),
    }
}

/// Relative improvement of the tactile mean over the plain mean.
pub fn improvement(mean_tactile: f64, mean_plain: f64) -> Option<f64> {
    (mean_plain != 0.0).then(|| (mean_tactile - mean_plain) / mean_plain)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Improvement {
    pub domain: Domain,
    pub mean_tactile: f64,
    pub mean_plain: f64,
    /// None when the plain mean is zero.
    pub improvement: Option<f64>,
    /// Percentile interval over episode resamples, when defined.
    pub interval: Option<(f64, f64)>,
    pub resamples: usize,
    /// Resamples whose plain mean was zero and were dropped.
    pub undefined_resamples: usize,
}

/// Percentile bootstrap of the improvement: each condition's episodes are
/// resampled with replacement, independently.
pub fn bootstrap_improvement(
    tactile: &[f64],
    plain: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> (Option<(f64, f64)>, usize) {
    if tactile.is_empty() || plain.is_empty() {
        return (None, resamples);
    }
    let mut rng = stream(seed, 0, Purpose::Bootstrap);
    let draw = |xs: &[f64], rng: &mut tactile_door::rng::StreamRng| {
        let mut s = 0.0;
        for _ in 0..xs.len() {
            s += xs[rng.random_range(0..xs.len())];
        }
        s / xs.len() as f64
    };
    let mut values = Vec::with_capacity(resamples);
    let mut undefined = 0;
    for _ in 0..resamples {
        let t = draw(tactile, &mut rng);
        let p = draw(plain, &mut rng);
        match improvement(t, p) {
            Some(v) => values.push(v),
            None => undefined += 1,
        }
    }
    if values.is_empty() {
        return (None, undefined);
    }
    let tail = (1.0 - level) / 2.0;
    let mut data = Data::new(values);
    (Some((data.quantile(tail), data.quantile(1.0 - tail))), undefined)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedPairing {
    pub seed: u64,
    pub mean_tactile: f64,
    pub mean_plain: f64,
    pub tactile_at_least_plain: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config_hash: String,
    pub open_threshold_deg: f64,
    pub rows: Vec<SummaryRow>,
    pub improvements: Vec<Improvement>,
    /// Per-seed comparison on the transfer domain.
    pub transfer_pairings: Vec<SeedPairing>,
}

impl Report {
    pub fn row(&self, domain: Domain, condition: Condition) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.domain == domain && r.condition == condition)
    }

    pub fn improvement(&self, domain: Domain) -> Option<&Improvement> {
        self.improvements.iter().find(|i| i.domain == domain)
    }
}

/// Published comparison values shown as a reference row (1000-step
/// episodes; real-robot rows have no reward).
pub const REFERENCE_ROWS: [(&str, &str, &str, &str, &str, &str); 4] = [
    ("Reference sim", "w/ tactile", "41.8±15.7", "0.6 / 90.0", "720.5±234.4", "2435.6±1024.6"),
    ("Reference sim", "w/o tactile", "34.6±20.3", "1.3 / 90.0", "584.4±273.4", "1881.8±1363.3"),
    ("Reference real", "w/ tactile", "31.2±14.0", "14.2 / 70.8", "176.3±25.8", "-"),
    ("Reference real", "w/o tactile", "21.5±18.9", "3.3 / 68.2", "275.6±167.2", "-"),
];

fn load(inputs: &[RunInput]) -> Result<(Vec<LoadedRun>, String, f64), ReportError> {
    let mut by_hash: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut runs = Vec::new();
    let mut threshold = None;
    for input in inputs {
        let manifest = read_run_manifest(&input.dir)?;
        by_hash.entry(manifest.config_hash.clone()).or_default().push(input.dir.clone());
        let cfg: crate::config::RunConfig = serde_json::from_str(&fs::read_to_string(input.dir.join("config.json"))?)?;
        threshold.get_or_insert(cfg.eval.open_threshold_deg);
        let mut eval = BTreeMap::new();
        for d in DOMAINS {
            eval.insert(d, read_eval_csv(&eval_path(&input.dir, d))?);
        }
        runs.push(LoadedRun {
            dir: input.dir.clone(),
            condition: input.condition.unwrap_or(manifest.condition),
            seed: manifest.seed,
            eval,
        });
    }
    if by_hash.len() > 1 {
        let diff = by_hash
            .iter()
            .map(|(h, dirs)| {
                let dirs: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
                format!("  {h}: {}", dirs.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n");
        return Err(ReportError::MixedConfigs(diff));
    }
    let hash = by_hash.into_keys().next().unwrap_or_default();
    Ok((runs, hash, threshold.unwrap_or(10.0)))
}

fn pooled(runs: &[LoadedRun], condition: Condition, domain: Domain) -> Vec<EpisodeStats> {
    runs.iter()
        .filter(|r| r.condition == condition)
        .flat_map(|r| r.eval[&domain].iter().cloned())
        .collect()
}

/// Builds the comparison from run directories.
pub fn build_report(inputs: &[RunInput]) -> Result<Report, ReportError> {
    let (runs, config_hash, open_threshold_deg) = load(inputs)?;
    for c in [Condition::Tactile, Condition::Plain] {
        if !runs.iter().any(|r| r.condition == c) {
            return Err(ReportError::MissingCondition(c));
        }
    }
    let mut rows = Vec::new();
    let mut improvements = Vec::new();
    for domain in DOMAINS {
        let t = pooled(&runs, Condition::Tactile, domain);
        let p = pooled(&runs, Condition::Plain, domain);
        rows.push(summarize(domain, Condition::Tactile, &t));
        rows.push(summarize(domain, Condition::Plain, &p));
        let ta: Vec<f64> = t.iter().map(|e| e.final_alpha_deg).collect();
        let pa: Vec<f64> = p.iter().map(|e| e.final_alpha_deg).collect();
        let (mt, mp) = (MeanStd::of(&ta).mean, MeanStd::of(&pa).mean);
        let (interval, undefined) =
            bootstrap_improvement(&ta, &pa, BOOTSTRAP_RESAMPLES, BOOTSTRAP_LEVEL, BOOTSTRAP_SEED);
        improvements.push(Improvement {
            domain,
            mean_tactile: mt,
            mean_plain: mp,
            improvement: improvement(mt, mp),
            interval,
            resamples: BOOTSTRAP_RESAMPLES,
            undefined_resamples: undefined,
        });
    }
    let seeds_of = |c: Condition| -> BTreeSet<u64> {
        runs.iter().filter(|r| r.condition == c).map(|r| r.seed).collect()
    };
    let mean_of = |c: Condition, seed: u64| {
        let xs: Vec<f64> = runs
            .iter()
            .filter(|r| r.condition == c && r.seed == seed)
            .flat_map(|r| r.eval[&Domain::Transfer].iter().map(|e| e.final_alpha_deg))
            .collect();
        MeanStd::of(&xs).mean
    };
    let transfer_pairings = seeds_of(Condition::Tactile)
        .intersection(&seeds_of(Condition::Plain))
        .map(|&seed| {
            let (mt, mp) = (mean_of(Condition::Tactile, seed), mean_of(Condition::Plain, seed));
            SeedPairing {
                seed,
                mean_tactile: mt,
                mean_plain: mp,
                tactile_at_least_plain: mt >= mp,
            }
        })
        .collect();
    Ok(Report {
        config_hash,
        open_threshold_deg,
        rows,
        improvements,
        transfer_pairings,
    })
}

fn pm(m: &MeanStd, digits: usize) -> String {
    format!("{:.digits$}±{:.digits$}", m.mean, m.std)
}

pub const TABLE_COLUMNS: [&str; 6] = ["Domain", "Policy", "Door Angle (°)", "Angle Min/Max (°)", "Steps", "Reward"];

/// Markdown comparison table with the reference rows at the bottom.
pub fn render_table(report: &Report) -> String {
    let mut s = String::new();
    s.push_str("## Comparison of policy performance\n\n");
    s.push_str(&format!(
        "Steps: first step with the door at or past {}°, else the episode length.\n\n",
        report.open_threshold_deg
    ));
    s.push_str(&format!("| {} |\n", TABLE_COLUMNS.join(" | ")));
    s.push_str(&format!("|{}\n", "---|".repeat(TABLE_COLUMNS.len())));
    for r in &report.rows {
        s.push_str(&format!(
            "| {} | {} | {} | {:.1} / {:.1} | {} | {} |\n",
            r.domain.label(),
            r.condition.label(),
            pm(&r.angle, 1),
            r.angle_min,
            r.angle_max,
            pm(&r.steps, 1),
            pm(&r.reward, 1)
        ));
    }
    for (d, c, a, mm, st, rw) in REFERENCE_ROWS {
        s.push_str(&format!("| {d} | {c} | {a} | {mm} | {st} | {rw} |\n"));
    }
    s.push_str("\n## Improvement of mean final door angle (tactile vs plain)\n\n");
    s.push_str(&format!(
        "| Domain | w/ tactile | w/o tactile | Improvement | {:.0}% bootstrap interval |\n|---|---|---|---|---|\n",
        BOOTSTRAP_LEVEL * 100.0
    ));
    for i in &report.improvements {
        let imp = i.improvement.map_or("n/a".into(), |v| format!("{:+.1}%", v * 100.0));
        let ci = i
            .interval
            .map_or("n/a".into(), |(lo, hi)| format!("[{:+.1}%, {:+.1}%]", lo * 100.0, hi * 100.0));
        s.push_str(&format!(
            "| {} | {:.2} | {:.2} | {imp} | {ci} |\n",
            i.domain.label(),
            i.mean_tactile,
            i.mean_plain
        ));
    }
    if !report.transfer_pairings.is_empty() {
        s.push_str("\n## Transfer domain, per seed\n\n| Seed | w/ tactile | w/o tactile | tactile ≥ plain |\n|---|---|---|---|\n");
        for p in &report.transfer_pairings {
            s.push_str(&format!(
                "| {} | {:.2} | {:.2} | {} |\n",
                p.seed,
                p.mean_tactile,
                p.mean_plain,
                if p.tactile_at_least_plain { "yes" } else { "no" }
            ));
        }
    }
    s
}

fn csv_table<W: Write>(w: &mut W, report: &Report) -> io::Result<()> {
    writeln!(
        w,
        "domain,condition,episodes,angle_mean,angle_std,angle_min,angle_max,steps_mean,steps_std,reward_mean,reward_std"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.domain,
            r.condition,
            r.episodes,
            fmt_f64(r.angle.mean),
            fmt_f64(r.angle.std),
            fmt_f64(r.angle_min),
            fmt_f64(r.angle_max),
            fmt_f64(r.steps.mean),
            fmt_f64(r.steps.std),
            fmt_f64(r.reward.mean),
            fmt_f64(r.reward.std)
        )?;
    }
    Ok(())
}

/// Writes table, distributions, learning curves, heat-map counts and the
/// JSON summary into `out`.
pub fn cmd_report(inputs: &[RunInput], out: &Path) -> Result<Report, ReportError> {
    let report = build_report(inputs)?;
    let (runs, _, _) = load(inputs)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("table.md"), render_table(&report))?;
    let mut w = io::BufWriter::new(fs::File::create(out.join("table.csv"))?);
    csv_table(&mut w, &report)?;
    w.flush()?;

    let mut w = io::BufWriter::new(fs::File::create(out.join("angles.csv"))?);
    writeln!(w, "condition,domain,seed,episode,final_alpha_deg")?;
    for r in &runs {
        for (d, eps) in &r.eval {
            for e in eps {
                writeln!(w, "{},{},{},{},{}", r.condition, d, r.seed, e.episode, fmt_f64(e.final_alpha_deg))?;
            }
        }
    }
    w.flush()?;

    let mut w = io::BufWriter::new(fs::File::create(out.join("learning_curves.csv"))?);
    writeln!(w, "condition,seed,episode,return,final_alpha_deg")?;
    for r in &runs {
        let text = fs::read_to_string(r.dir.join("train_log.csv"))?;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() >= 5 {
                writeln!(w, "{},{},{},{},{}", r.condition, r.seed, f[0], f[3], f[4])?;
            }
        }
    }
    w.flush()?;

    let mut w = io::BufWriter::new(fs::File::create(out.join("heatmap.csv"))?);
    writeln!(w, "condition,domain,unit,active_steps")?;
    for c in [Condition::Tactile, Condition::Plain] {
        for d in DOMAINS {
            let mut counts = [0u64; UNITS];
            for e in pooled(&runs, c, d) {
                for (acc, x) in counts.iter_mut().zip(e.activation_counts) {
                    *acc += x;
                }
            }
            for (u, n) in counts.iter().enumerate() {
                writeln!(w, "{c},{d},{},{n}", u + 1)?;
            }
        }
    }
    w.flush()?;

    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(out.join("summary.json"), text)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_formula() {
        let v = improvement(31.2, 21.5).unwrap();
        assert!((v - 0.451_162_790_697_674_4).abs() < 1e-12);
        assert_eq!(improvement(5.0, 5.0), Some(0.0));
        assert_eq!(improvement(1.0, 0.0), None);
    }

    #[test]
    fn bootstrap_of_identical_samples_is_degenerate_at_zero() {
        let xs = [1.0, 2.0, 3.0];
        let (ci, _) = bootstrap_improvement(&xs, &[2.0, 2.0], 1000, 0.9, 1);
        let (lo, hi) = ci.unwrap();
        assert!(lo < 0.0 && hi > 0.0);
        let (ci, undefined) = bootstrap_improvement(&[4.0], &[2.0], 100, 0.9, 1);
        assert_eq!(ci, Some((1.0, 1.0)));
        assert_eq!(undefined, 0);
    }
}
