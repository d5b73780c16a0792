use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use safelab_core::campaign::{simulate, summarize, Summary};
use safelab_core::config::load_config;
use safelab_core::records::write_records;
use safelab_core::{AgentKind, AgentSpec, TaskConfig, TaskEnv};

use crate::{ensure_dir, io_context, Failure};

#[derive(clap::Args)]
pub struct Args {
    /// Task preset (1 or 2); ignored when --config is given.
    #[arg(long, default_value_t = 1)]
    experiment: u8,
    /// Key-value task configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Agents to run, comma separated: safeopt, tree1, tree2, random.
    #[arg(long, value_delimiter = ',', default_value = "safeopt", value_parser = parse_agent)]
    agent: Vec<AgentKind>,
    /// Simulated participants per agent; each plays every block once.
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence-bound multiplier.
    #[arg(long, default_value_t = safelab_core::acquisition::DEFAULT_BETA)]
    beta: f64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse().map_err(|e: safelab_core::Error| e.to_string())
}

pub fn run(args: Args) -> Result<(), Failure> {
    let config = match &args.config {
        Some(path) => load_config(path)?,
        None => TaskConfig::for_experiment(args.experiment).map_err(|e| Failure::Usage(e.to_string()))?,
    };
    if args.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    if !(args.beta > 0.0) {
        return Err(Failure::Usage("--beta must be positive".into()));
    }
    let env = TaskEnv::new(config)?;
    ensure_dir(&args.out)?;

    let records_path = args.out.join("records.jsonl");
    let mut out = BufWriter::new(File::create(&records_path).map_err(io_context(&records_path))?);
    let mut summaries = Vec::new();
    for kind in &args.agent {
        let agent = AgentSpec::new(*kind).with_seed(args.seed).with_beta(args.beta);
        let records = simulate(&env, &agent, args.runs, args.seed)?;
        write_records(&mut out, &records)?;
        summaries.extend(summarize(&records));
    }
    out.flush().map_err(io_context(&records_path))?;

    let summary_path = args.out.join("summary.csv");
    write_summary(&summary_path, &summaries)?;
    println!("{:<8} {:>7} {:>8} {:>14} {:>13} {:>15}", "agent", "blocks", "choices", "score/trial", "block length", "violation rate");
    for s in &summaries {
        println!(
            "{:<8} {:>7} {:>8} {:>14.4} {:>13.3} {:>15.3}",
            s.agent, s.blocks, s.choices, s.score_per_trial, s.mean_block_length, s.violation_rate
        );
    }
    println!("records: {}\nsummary: {}", records_path.display(), summary_path.display());
    Ok(())
}

fn write_summary(path: &PathBuf, summaries: &[Summary]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["agent", "blocks", "choices", "score_per_trial", "mean_block_length", "violation_rate"])?;
    for s in summaries {
        w.write_record([
            s.agent.clone(),
            s.blocks.to_string(),
            s.choices.to_string(),
            s.score_per_trial.to_string(),
            s.mean_block_length.to_string(),
            s.violation_rate.to_string(),
        ])?;
    }
    w.flush().map_err(io_context(path))?;
    Ok(())
}
