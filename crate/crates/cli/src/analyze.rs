use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use safelab_core::analysis::report::{distance_csv, distance_text, logistic_csv, logistic_text, tree_csv, tree_text};
use safelab_core::analysis::{
    aliased_features, distance_stats, expand_long, logistic_fit, logistic_fit_firth, tree_fit, LongTable,
};
use safelab_core::config::load_config;
use safelab_core::records::read_records;
use safelab_core::{ChoiceRecord, Condition, Error, GridDomain, TaskConfig};

use crate::{ensure_dir, io_context, Analysis, Failure};

#[derive(clap::Args)]
pub struct Args {
    /// Line-delimited choice records.
    records: PathBuf,
    #[arg(value_enum)]
    analysis: Analysis,
    /// Output directory (created if missing).
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
    /// Grid preset; inferred from the records when omitted.
    #[arg(long)]
    experiment: Option<u8>,
    /// Task configuration file defining the grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Maximum tree depth (1 or 2).
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Add one intercept per subject to the logistic regression.
    #[arg(long)]
    subject_dummies: bool,
    /// Fail on separation instead of refitting with the Firth penalty.
    #[arg(long)]
    no_firth: bool,
}

fn domain_for(args: &Args, records: &[ChoiceRecord]) -> Result<GridDomain, Failure> {
    if let Some(path) = &args.config {
        return Ok(load_config(path)?.domain.as_ref().clone());
    }
    if let Some(e) = args.experiment {
        return Ok(TaskConfig::for_experiment(e).map_err(|e| Failure::Usage(e.to_string()))?.domain.as_ref().clone());
    }
    let sizes = [GridDomain::experiment1(), GridDomain::experiment2()];
    let width = records.iter().find_map(|r| r.features.as_ref().map(|f| f.len()));
    let largest = records.iter().map(|r| r.chosen.max(r.start_index)).max().unwrap_or(0);
    sizes
        .into_iter()
        .find(|d| match width {
            Some(w) => d.len() == w,
            None => largest < d.len(),
        })
        .ok_or_else(|| Failure::Usage("cannot infer the grid from the records; pass --experiment or --config".into()))
}

fn groups(table: &LongTable) -> Vec<(&'static str, LongTable)> {
    [Condition::Normal, Condition::Safe]
        .into_iter()
        .map(|c| (c.as_str(), table.condition(c)))
        .filter(|(_, t)| !t.is_empty())
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(io_context(path))
}

pub fn run(args: Args) -> Result<(), Failure> {
    if !(1..=2).contains(&args.depth) {
        return Err(Failure::Usage("--depth must be 1 or 2".into()));
    }
    let file = File::open(&args.records).map_err(io_context(&args.records))?;
    let records = read_records(BufReader::new(file))
        .map_err(|e| Failure::Data(format!("{}: {e}", args.records.display())))?;
    if !records.iter().any(|r| r.is_choice()) {
        return Err(Failure::Data(format!("{}: no choice records", args.records.display())));
    }
    let domain = domain_for(&args, &records)?;
    ensure_dir(&args.out)?;
    let features: Vec<String> = args.features.clone().unwrap_or_else(|| {
        let default: &[&str] = match args.analysis {
            Analysis::Logistic => &["safe", "maximizer", "expander"],
            _ => &["p_safe", "p_improve", "p_expand"],
        };
        default.iter().map(|s| s.to_string()).collect()
    });
    let features: Vec<&str> = features.iter().map(String::as_str).collect();

    let (name, text) = match args.analysis {
        Analysis::Logistic => {
            let table = expand_long(&records, &domain)?;
            let mut fits = Vec::new();
            let mut text = String::new();
            for (group, t) in groups(&table) {
                let aliased = aliased_features(&t, &features)?;
                let kept: Vec<&str> =
                    features.iter().copied().filter(|f| !aliased.iter().any(|(a, _)| a == f)).collect();
                text.push_str(&format!("[{group}]\n"));
                for (name, reason) in &aliased {
                    text.push_str(&format!("dropped {name}: {reason}\n"));
                }
                let fit = match logistic_fit(&t, &kept, args.subject_dummies) {
                    Err(Error::Separation(why)) if !args.no_firth => {
                        text.push_str(&format!("separation ({why}); refitted with the Firth penalty\n"));
                        logistic_fit_firth(&t, &kept, args.subject_dummies)?
                    }
                    other => other?,
                };
                text.push_str(&format!("{}\n", logistic_text(&fit)));
                fits.push((group, fit));
            }
            let refs: Vec<(&str, _)> = fits.iter().map(|(g, f)| (*g, f)).collect();
            let csv_path = args.out.join("logistic.csv");
            logistic_csv(&refs, File::create(&csv_path).map_err(io_context(&csv_path))?)?;
            ("logistic", text)
        }
        Analysis::Tree => {
            let table = expand_long(&records, &domain)?;
            let mut fits = Vec::new();
            for (group, t) in groups(&table) {
                fits.push((group, tree_fit(&t, &features, args.depth)?));
            }
            let refs: Vec<(&str, _)> = fits.iter().map(|(g, f)| (*g, f)).collect();
            let csv_path = args.out.join("tree.csv");
            tree_csv(&refs, File::create(&csv_path).map_err(io_context(&csv_path))?)?;
            let text: String = fits.iter().map(|(g, f)| format!("[{g}]\n{}\n", tree_text(f))).collect();
            ("tree", text)
        }
        Analysis::Distance => {
            let summaries = distance_stats(&records, &domain)?;
            let csv_path = args.out.join("distance.csv");
            distance_csv(&summaries, File::create(&csv_path).map_err(io_context(&csv_path))?)?;
            ("distance", distance_text(&summaries))
        }
    };
    let text_path = args.out.join(format!("{name}.txt"));
    write_text(&text_path, &text)?;
    print!("{text}");
    println!("report: {}\ntable: {}", text_path.display(), args.out.join(format!("{name}.csv")).display());
    Ok(())
}
