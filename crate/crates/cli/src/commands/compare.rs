//! `compare`: align metric reports on a shared query universe and print
//! means with deltas against the first (baseline) report.

use std::fmt::Write as _;

use rubric_rerank::metrics::{compare_runs, MetricReport, MetricsError};

use crate::output::OutputDir;
use crate::{commands, CliError, CliResult, CompareArgs};

pub fn run(args: CompareArgs) -> CliResult<()> {
    let mut reports: Vec<MetricReport> = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let text = commands::read_to_string(path)?;
        let report: MetricReport = serde_json::from_str(&text).map_err(|e| {
            CliError::validation(format!("{} is not a metric report: {e}", path.display()))
        })?;
        reports.push(report);
    }
    let rows = compare_runs(&reports).map_err(|e| match e {
        MetricsError::MismatchedQueries { .. } | MetricsError::NoRuns => {
            CliError::validation(e.to_string())
        }
        other => CliError::Runtime(anyhow::Error::new(other)),
    })?;

    let mut out = OutputDir::create(&args.out)?;
    let table_path = out.file("comparison.tsv");
    let mut table = String::from("tag\tmean\tdelta\n");
    for row in &rows {
        writeln!(table, "{}\t{:.5}\t{:+.5}", row.tag, row.mean, row.delta).expect("string write");
    }
    std::fs::write(&table_path, table.as_bytes()).map_err(|e| {
        CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", table_path.display()))
    })?;
    out.write_manifest()?;

    println!("{:<24} {:>10} {:>10}", "tag", "mean", "delta");
    for row in &rows {
        println!("{:<24} {:>10.5} {:>+10.5}", row.tag, row.mean, row.delta);
    }
    Ok(())
}
