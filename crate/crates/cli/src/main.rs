//! `socvid`: simulate scenarios, compare delivery strategies, and reproduce
//! the propagation analyses from a run's logs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 analysis precondition unmet.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use socvid_core::analysis::{
    distance_cdf, fig2_experiment, fit_zipf, strategy_report, write_cdf, write_fig2, write_fig4, write_report,
    DistanceMode, LagHistogram, PopularityClass,
};
use socvid_core::config::ScenarioConfig;
use socvid_core::d2d::D2dStrategy;
use socvid_core::delivery::{fit_c1_c2, ReplicationStrategy};
use socvid_core::logs::ScenarioLog;
use socvid_core::runner::{compare_strategies, load_run, run_scenario, write_comparison, Strategy};
use socvid_core::Error;

#[derive(Parser)]
#[command(name = "socvid", version, about = "Social video propagation and delivery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs and manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `delivery.replication`.
        #[arg(long, value_parser = parse_replication)]
        replication: Option<ReplicationStrategy>,
        /// Overrides `d2d.strategy`.
        #[arg(long, value_parser = parse_d2d)]
        d2d: Option<D2dStrategy>,
    },
    /// Run several strategies over common seeds and report paired differences.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated: static, influence-index, oracle, d2d-off,
        /// d2d-flood, d2d-coverage. The first is the reference.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<String>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce a figure's data from a run directory.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// Figure to produce; all of them plus `report.csv` when omitted.
        #[arg(long)]
        fig: Option<u8>,
        #[arg(long)]
        out: PathBuf,
        /// Distances between sharer and viewer only, instead of all pairs.
        #[arg(long)]
        parent_child: bool,
    },
    /// Fit a model to a CSV file.
    Fit {
        #[arg(long, value_enum)]
        what: FitTarget,
        /// `lag,count` columns for zipf; `s_prev,regions` for c1c2.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitTarget {
    Zipf,
    C1c2,
}

fn parse_replication(s: &str) -> std::result::Result<ReplicationStrategy, String> {
    ReplicationStrategy::parse(s).ok_or_else(|| format!("expected static, influence-index or oracle, got {s:?}"))
}

fn parse_d2d(s: &str) -> std::result::Result<D2dStrategy, String> {
    D2dStrategy::parse(s).ok_or_else(|| format!("expected off, flood or coverage, got {s:?}"))
}

fn simulate(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    replication: Option<ReplicationStrategy>,
    d2d: Option<D2dStrategy>,
) -> Result<()> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replication {
        cfg.delivery.replication = r;
    }
    if let Some(d) = d2d {
        cfg.d2d.strategy = d;
    }
    let manifest = run_scenario(&cfg, out)?;
    println!("scenario {} -> {}", manifest.scenario_id, out.display());
    for f in manifest.outputs.keys() {
        println!("  {f}");
    }
    Ok(())
}

fn compare(config: &Path, names: &[String], seeds: usize, out: &Path) -> Result<()> {
    let cfg = ScenarioConfig::load(config)?;
    let strategies = names
        .iter()
        .map(|n| Strategy::parse(n.trim()).ok_or_else(|| Error::Config(format!("unknown strategy {n:?}"))))
        .collect::<socvid_core::Result<Vec<_>>>()?;
    let cmp = compare_strategies(&cfg, &strategies, seeds)?;
    write_comparison(out, &cmp)?;
    println!("{:<16} {:<20} {:>10} {:>10} {:>22}", "strategy", "metric", "mean", "diff", "95% ci");
    for r in &cmp.rows {
        println!(
            "{:<16} {:<20} {:>10.4} {:>10.4} [{:>9.4}, {:>9.4}]",
            r.strategy, r.metric, r.mean, r.diff_mean, r.ci_low, r.ci_high
        );
    }
    Ok(())
}

fn analyze(input: &Path, fig: Option<u8>, out: &Path, parent_child: bool) -> Result<()> {
    let run = load_run(input)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let figs: Vec<u8> = match fig {
        Some(f @ 2..=4) => vec![f],
        Some(f) => return Err(Error::Config(format!("--fig must be 2, 3 or 4, got {f}")).into()),
        None => vec![2, 3, 4],
    };
    for f in figs {
        match f {
            2 => {
                let r = fig2_experiment(&run.trees, &run.graph, run.manifest.seed)?;
                write_fig2(&out.join("fig2_scatter.csv"), &r)?;
                match r.rho {
                    Some(rho) => println!("fig2: {} cascades, spearman rho = {rho:.4}", r.rows.len()),
                    None => println!("fig2: {} cascades, spearman rho undefined (constant column)", r.rows.len()),
                }
            }
            3 => {
                let mode = if parent_child { DistanceMode::ParentChild } else { DistanceMode::Pairwise };
                for class in [PopularityClass::Unpopular, PopularityClass::Middle, PopularityClass::Popular] {
                    let cdf = distance_cdf(&run.trees, &run.graph, Some(class), mode)?;
                    let name = format!("fig3_cdf_{}.csv", class.as_str());
                    write_cdf(&out.join(&name), &cdf)?;
                    println!(
                        "fig3 {}: {} pairs, median {:.3} km, {:.1}% at 0 km",
                        class.as_str(),
                        cdf.len(),
                        cdf.median(),
                        100.0 * cdf.at(0.0)
                    );
                }
            }
            _ => {
                let h = LagHistogram::from_lags(run.trees.iter().flat_map(|t| t.share_lags().collect::<Vec<_>>()))?;
                let fit = fit_zipf(&h)?;
                write_fig4(&out.join("fig4_lag.csv"), &h, &fit)?;
                println!("fig4: {} re-shares, fitted s = {:.4}", h.total(), fit.s);
            }
        }
    }
    if fig.is_none() {
        let id = run.manifest.scenario_id.clone();
        let report = strategy_report(
            "run",
            &ScenarioLog { scenario_id: id.clone(), records: run.delivery },
            &ScenarioLog { scenario_id: id.clone(), records: run.predictions },
            &ScenarioLog { scenario_id: id, records: run.d2d },
        )?;
        write_report(&out.join("report.csv"), &[report])?;
    }
    Ok(())
}

fn read_columns(path: &Path, a: &str, b: &str) -> socvid_core::Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let (ia, ib) = (col(a)?, col(b)?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| {
            rec.get(k).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        };
        out.push((num(ia)?, num(ib)?));
    }
    Ok(out)
}

fn fit(what: FitTarget, input: &Path) -> Result<()> {
    match what {
        FitTarget::Zipf => {
            let mut h = LagHistogram::new();
            for (lag, count) in read_columns(input, "lag", "count")? {
                if lag < 1.0 || lag.fract() != 0.0 || count < 0.0 || count.fract() != 0.0 {
                    return Err(Error::Config(format!("bad histogram row ({lag}, {count})")).into());
                }
                h.add(lag as u64, count as u64)?;
            }
            let fit = fit_zipf(&h)?;
            println!("s = {:.6}", fit.s);
        }
        FitTarget::C1c2 => {
            let (c1, c2) = fit_c1_c2(&read_columns(input, "s_prev", "regions")?)?;
            println!("c1 = {c1:.6}");
            println!("c2 = {c2:.6}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 2,
        Some(e) if e.is_precondition() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out, seed, replication, d2d } => simulate(config, out, *seed, *replication, *d2d),
        Command::Compare { config, strategies, seeds, out } => compare(config, strategies, *seeds, out),
        Command::Analyze { input, fig, out, parent_child } => analyze(input, *fig, out, *parent_child),
        Command::Fit { what, input } => fit(*what, input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
