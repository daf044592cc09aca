//! Command-line front end: single runs and parameter sweeps, writing CSV
//! artifacts and a run manifest.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::config::{ScenarioConfig, TransmissionMode};
use crate::engine::{pooled_summary, replicate_seed, run_with_seed, RunRecord};
use crate::error::{Result, SimError};
use crate::metrics::{
    cdf_individual, ecdf, overlay_csv, predicted_throughput_ratio, summary_csv, write_text, EcdfCurve, Summary,
};
use crate::scheduler::{n_rb_for_bandwidth, CqiPolicy};

/// Environment variable capping the worker threads of `compare`.
pub const WORKERS_ENV: &str = "MBSFN_SIM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "mbsfn-sim", version, about = "LTE multicast vs unicast CAM delivery simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario file.
    Run(RunArgs),
    /// Sweep modes, bandwidths and CQI policies over a base scenario.
    Compare(CompareArgs),
    /// Print the reference scenario as TOML.
    Defaults,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent drops to pool.
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Base scenario; the reference scenario if omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "multicast,unicast")]
    pub modes: Vec<TransmissionMode>,
    #[arg(long, value_delimiter = ',', default_value = "5,20")]
    pub bandwidths: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "fixed:3,adaptive:3")]
    pub cqi: Vec<CqiPolicy>,
    #[arg(long, default_value_t = 4)]
    pub replicates: u64,
    /// Override the number of TTIs per run.
    #[arg(long)]
    pub n_tti: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    config_hash: String,
    label: String,
    seeds: Vec<u64>,
    n_tti: u64,
    reserved_subframes: u32,
    required_subframes: u32,
    packets_generated: u64,
    packets_superseded: u64,
    censored_latency_entries: usize,
    warnings: Vec<String>,
    scenario: &'a ScenarioConfig,
}

pub fn main_with_args(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a).map(|_| ()),
        Command::Defaults => {
            print!("{}", ScenarioConfig::default().to_toml_string());
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

/// Runs `cfg` for `n` replicates and writes all per-run artifacts to `out`.
pub fn run_to_dir(cfg: &ScenarioConfig, replicates: u64, out: &Path) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    create_dir(out)?;
    let records = run_jobs(&[cfg.clone()], replicates.max(1))?.pop().expect("one config");
    write_run_outputs(cfg, &records, out)?;
    Ok(records)
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        cfg.run.seed = seed;
    }
    let records = run_to_dir(&cfg, a.replicates, &a.out)?;
    let s = pooled_summary(&records)?;
    println!("{}", summary_csv(&[s]).trim_end());
    Ok(())
}

fn pooled_latency(records: &[RunRecord]) -> Vec<f64> {
    records.iter().flat_map(|r| r.latency.flat()).collect()
}

fn pooled_column_means(records: &[RunRecord]) -> Vec<f64> {
    records.iter().flat_map(|r| r.latency.column_means()).collect()
}

fn pooled_throughput(records: &[RunRecord]) -> Vec<f64> {
    records.iter().flat_map(|r| r.ordinary_throughput_mbps.iter().copied()).collect()
}

fn write_ecdf(path: &Path, samples: &[f64], header: &str) -> Result<()> {
    match ecdf(samples) {
        Ok(c) => write_text(path, &c.to_csv(header)),
        Err(_) => write_text(path, &format!("{header},cdf\n")),
    }
}

fn write_run_outputs(cfg: &ScenarioConfig, records: &[RunRecord], out: &Path) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| SimError::InvalidInput("no runs to write".into()))?;
    write_ecdf(&out.join("latency_combined.csv"), &pooled_latency(records), "latency_tti")?;
    write_ecdf(&out.join("latency_mean.csv"), &pooled_column_means(records), "latency_tti")?;
    write_ecdf(&out.join("throughput_ordinary.csv"), &pooled_throughput(records), "throughput_mbps")?;
    if !first.latency.is_empty() {
        for (curve, user) in cdf_individual(&first.latency)?.iter().zip(&first.source_users) {
            write_text(out.join(format!("latency_user_{user}.csv")), &curve.to_csv("latency_tti"))?;
        }
    }
    let mut matrix = String::from("replicate,source_user,seq,latency_tti,losses,censored\n");
    for (k, r) in records.iter().enumerate() {
        for e in &r.latency.entries {
            matrix.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                r.source_users[e.source], e.seq, e.latency_tti, e.losses, e.censored
            ));
        }
    }
    write_text(out.join("latency_matrix.csv"), &matrix)?;

    let pooled = pooled_summary(records)?;
    write_text(out.join("summary.csv"), &summary_csv(&[pooled]))?;
    if records.len() > 1 {
        let rows: Vec<Summary> = records.iter().map(|r| r.summary.clone()).collect();
        write_text(out.join("summary_replicates.csv"), &summary_csv(&rows))?;
    }

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.content_hash(),
        label: cfg.label(),
        seeds: records.iter().map(|r| r.seed).collect(),
        n_tti: cfg.run.n_tti,
        reserved_subframes: first.reserved_subframes,
        required_subframes: first.required_subframes,
        packets_generated: records.iter().map(|r| r.packets_generated).sum(),
        packets_superseded: records.iter().map(|r| r.packets_superseded).sum(),
        censored_latency_entries: records.iter().map(|r| r.latency.censored_count()).sum(),
        warnings: records.iter().flat_map(|r| r.warnings.iter().cloned()).collect(),
        scenario: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| SimError::Internal(e.to_string()))?;
    write_text(out.join("run_manifest.json"), &json)
}

fn worker_count(jobs: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let wanted = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    wanted.min(jobs).max(1)
}

/// Runs every config for `replicates` seeds on a small thread pool. Results
/// come back grouped per config in input order, independent of scheduling.
pub fn run_jobs(configs: &[ScenarioConfig], replicates: u64) -> Result<Vec<Vec<RunRecord>>> {
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| (0..replicates).map(move |k| (c, k)))
        .collect();
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<RunRecord>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..worker_count(jobs.len()) {
            scope.spawn(|| loop {
                let j = {
                    let mut n = next.lock().expect("job counter");
                    let j = *n;
                    *n += 1;
                    j
                };
                let Some(&(c, k)) = jobs.get(j) else { break };
                let cfg = &configs[c];
                info!("running {} replicate {k}", cfg.label());
                let r = run_with_seed(cfg, replicate_seed(cfg.run.seed, k));
                results.lock().expect("results")[j] = Some(r);
            });
        }
    });
    let mut flat = results.into_inner().expect("results").into_iter();
    let mut grouped = Vec::with_capacity(configs.len());
    for _ in configs {
        let mut group = Vec::with_capacity(replicates as usize);
        for _ in 0..replicates {
            group.push(flat.next().flatten().expect("every job ran")?);
        }
        grouped.push(group);
    }
    Ok(grouped)
}

/// One bandwidth-scaling comparison row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRatio {
    pub mode: String,
    pub cqi_policy: String,
    pub from_mhz: f64,
    pub to_mhz: f64,
    pub predicted: f64,
    pub measured: f64,
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub configs: Vec<ScenarioConfig>,
    pub summaries: Vec<Summary>,
    pub ratios: Vec<ThroughputRatio>,
    pub records: Vec<Vec<RunRecord>>,
}

/// Builds the sweep configs in mode, CQI policy, bandwidth order.
pub fn sweep_configs(
    base: &ScenarioConfig,
    modes: &[TransmissionMode],
    bandwidths: &[f64],
    policies: &[CqiPolicy],
) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for &mode in modes {
        for &policy in policies {
            for &bw in bandwidths {
                let mut c = base.clone();
                c.run.mode = mode;
                c.run.cqi_policy = policy;
                c.radio.bandwidth_mhz = bw;
                out.push(c);
            }
        }
    }
    out
}

pub fn throughput_ratios(configs: &[ScenarioConfig], summaries: &[Summary]) -> Result<Vec<ThroughputRatio>> {
    let mut out = Vec::new();
    for (i, a) in configs.iter().enumerate() {
        for (j, b) in configs.iter().enumerate().skip(i + 1) {
            if a.run.mode != b.run.mode || a.run.cqi_policy != b.run.cqi_policy {
                continue;
            }
            let (sa, sb) = (&summaries[i], &summaries[j]);
            let rb_a = n_rb_for_bandwidth(a.radio.bandwidth_mhz)? as f64;
            let rb_b = n_rb_for_bandwidth(b.radio.bandwidth_mhz)? as f64;
            let predicted =
                predicted_throughput_ratio(sa.utilization_pct / 100.0, rb_a, sb.utilization_pct / 100.0, rb_b)
                    .unwrap_or(f64::NAN);
            out.push(ThroughputRatio {
                mode: a.run.mode.to_string(),
                cqi_policy: a.run.cqi_policy.to_string(),
                from_mhz: a.radio.bandwidth_mhz,
                to_mhz: b.radio.bandwidth_mhz,
                predicted,
                measured: sb.mean_throughput_mbps / sa.mean_throughput_mbps,
            });
        }
    }
    Ok(out)
}

/// Runs a sweep and writes the comparison tables to `out`.
pub fn compare(configs: Vec<ScenarioConfig>, replicates: u64, out: &Path) -> Result<CompareResult> {
    for c in &configs {
        c.validate()?;
    }
    create_dir(out)?;
    let records = run_jobs(&configs, replicates.max(1))?;
    let summaries = records.iter().map(|r| pooled_summary(r)).collect::<Result<Vec<_>>>()?;
    write_text(out.join("summary.csv"), &summary_csv(&summaries))?;

    let labels: Vec<String> = configs.iter().map(|c| c.label()).collect();
    let overlay = |samples: &dyn Fn(&[RunRecord]) -> Vec<f64>| -> Result<Vec<(String, EcdfCurve)>> {
        let mut v = Vec::new();
        for (label, recs) in labels.iter().zip(&records) {
            if let Ok(c) = ecdf(&samples(recs)) {
                v.push((label.clone(), c));
            }
        }
        Ok(v)
    };
    for (file, header, curves) in [
        ("latency_overlay.csv", "latency_tti", overlay(&pooled_latency)?),
        ("latency_mean_overlay.csv", "latency_tti", overlay(&pooled_column_means)?),
        ("throughput_overlay.csv", "throughput_mbps", overlay(&pooled_throughput)?),
    ] {
        let refs: Vec<(String, &EcdfCurve)> = curves.iter().map(|(l, c)| (l.clone(), c)).collect();
        write_text(out.join(file), &overlay_csv(header, &refs))?;
    }

    let ratios = throughput_ratios(&configs, &summaries)?;
    let mut csv = String::from("mode,cqi_policy,from_mhz,to_mhz,predicted_ratio,measured_ratio\n");
    for r in &ratios {
        csv.push_str(&format!(
            "{},{},{},{},{:.4},{:.4}\n",
            r.mode, r.cqi_policy, r.from_mhz, r.to_mhz, r.predicted, r.measured
        ));
    }
    write_text(out.join("throughput_ratio.csv"), &csv)?;
    Ok(CompareResult {
        configs,
        summaries,
        ratios,
        records,
    })
}

pub fn cmd_compare(a: &CompareArgs) -> Result<CompareResult> {
    let mut base = match &a.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(n) = a.n_tti {
        base.run.n_tti = n;
    }
    if let Some(s) = a.seed {
        base.run.seed = s;
    }
    let configs = sweep_configs(&base, &a.modes, &a.bandwidths, &a.cqi);
    let result = compare(configs, a.replicates, &a.out)?;
    print!("{}", summary_csv(&result.summaries));
    for r in &result.ratios {
        println!(
            "{} {} {} -> {} MHz: predicted throughput ratio {:.3}, measured {:.3}",
            r.mode, r.cqi_policy, r.from_mhz, r.to_mhz, r.predicted, r.measured
        );
    }
    Ok(result)
}
