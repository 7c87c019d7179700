//! Command-line front end: `uvar <estimate|variance|simulate|oracle|synth>`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;

use uvar::io::config::parse_assignment;
use uvar::io::output::{self, ESTIMATE_HEADER, ORACLE_HEADER, VARIANCE_HEADER};
use uvar::io::{generate_synthetic, load_population, load_sample, write_population, PopulationSource, RunConfig};
use uvar::{
    asymptotic_variance, compute_inclusion_probs, estimate_ht, exact_h_components, fit_greg, greg::greg_from_fit,
    hd_variance, ij_bm_variance, run_replications, summarize, ErrorKind, KernelContext, Population,
};

#[derive(Parser, Debug)]
#[command(name = "uvar", version, about = "Design-based GREG estimation and exact-variance estimators")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set design.n=50. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = parse_assignment)]
    overrides: Vec<(String, String)>,
    /// Output directory (same as output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// HT and GREG point estimates for a sample file.
    Estimate,
    /// H-decomposition variance report for a sample file.
    Variance,
    /// Monte Carlo replications with summary tables.
    Simulate,
    /// Exact enumeration report for a small Bernoulli/Poisson frame.
    Oracle,
    /// Write a synthetic population file.
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Variance => "variance",
            Command::Simulate => "simulate",
            Command::Oracle => "oracle",
            Command::Synth => "synth",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<uvar::Error>().map(uvar::Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numerical) => 4,
        None => 1,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 2 config, 3 data, 4 numerical, 1 other.
pub fn cli_main<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn population(cfg: &RunConfig) -> anyhow::Result<Population> {
    let pop = match &cfg.population {
        PopulationSource::File(path) => load_population(path, &cfg.mapping)?,
        PopulationSource::Synthetic { params, seed } => {
            let pop = generate_synthetic(params, *seed)?;
            if cfg.mapping.log_outcome {
                let mut y = Vec::with_capacity(pop.len());
                for (i, &v) in pop.y().iter().enumerate() {
                    if v <= 0.0 {
                        return Err(uvar::Error::Domain { row: i + 1, value: v }.into());
                    }
                    y.push(v.ln());
                }
                pop.with_outcome(y)?
            } else {
                pop
            }
        }
    };
    Ok(pop)
}

fn sample_path(cfg: &RunConfig) -> anyhow::Result<&Path> {
    cfg.sample_path
        .as_deref()
        .ok_or_else(|| uvar::Error::Config("sample.path is required".into()).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pop = population(&cfg)?;
    let mut files: Vec<&str> = Vec::new();

    match cli.command {
        Command::Synth => {
            write_population(dir.join("population.csv"), &pop)?;
            files.push("population.csv");
        }
        Command::Estimate => {
            let design = cfg.require_design()?;
            design.validate(&pop)?;
            let probs = compute_inclusion_probs(design, &pop)?;
            let sample = load_sample(sample_path(&cfg)?, &pop)?;
            let fit = fit_greg(&pop, &sample, &probs)?;
            let rows = [
                ("n", sample.len() as f64),
                ("ht", estimate_ht(&pop, &sample, &probs)),
                ("greg", greg_from_fit(&fit, &pop, &sample, &probs)),
            ];
            output::write_pairs_file(&dir.join("estimate.csv"), ESTIMATE_HEADER, &rows)?;
            files.push("estimate.csv");
        }
        Command::Variance => {
            let design = cfg.require_design()?;
            design.validate(&pop)?;
            let probs = compute_inclusion_probs(design, &pop)?;
            let sample = load_sample(sample_path(&cfg)?, &pop)?;
            let ctx = KernelContext::new(&pop, &probs, &sample)?;
            let rep = hd_variance(&ctx, cfg.hd)?;
            let fit = fit_greg(&pop, &sample, &probs)?;
            let mut rows = output::variance_rows(&rep, cfg.timing);
            rows.push(("v_asy", asymptotic_variance(&pop, &sample, &probs, &fit)?));
            let bm = ij_bm_variance(&ctx, cfg.bm_plugin)?;
            rows.push(("tau1_bm", bm.tau1_bm));
            rows.push(("v_ij", bm.variance));
            output::write_pairs_file(&dir.join("variance.csv"), VARIANCE_HEADER, &rows)?;
            files.push("variance.csv");
        }
        Command::Simulate => {
            let sim = cfg.sim_config()?;
            let result = run_replications(&pop, &sim)?;
            output::write_replicates_file(&dir.join("replicates.csv"), &result)?;
            let summary = summarize(&result, &cfg.alphas)?;
            output::write_summary_file(&dir.join("summary.csv"), &summary)?;
            files.extend(["replicates.csv", "summary.csv"]);
        }
        Command::Oracle => {
            let design = cfg.require_design()?;
            design.validate(&pop)?;
            let probs = compute_inclusion_probs(design, &pop)?;
            let report = exact_h_components(&pop, &probs)?;
            output::write_pairs_file(&dir.join("oracle.csv"), ORACLE_HEADER, &output::oracle_rows(&report))?;
            output::write_oracle_units(std::fs::File::create(dir.join("oracle_units.csv"))?, &report, pop.ids())?;
            files.extend(["oracle.csv", "oracle_units.csv"]);
        }
    }

    let manifest = json!({
        "tool": "uvar",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "seed": cfg.master_seed,
        "config": cfg.echo,
        "outputs": files,
    });
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
