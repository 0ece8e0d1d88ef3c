use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pnlsvi::experiment::config::{ExperimentConfig, SCHEMA_VERSION};
use pnlsvi::experiment::harness::{run_cell, stage_classes, CellSetup};
use pnlsvi::experiment::sweep::run_sweep;
use pnlsvi::experiment::verify::run_verify;
use pnlsvi::mdp::optimal_values;
use pnlsvi::pnlsvi::RadiusProfile;

#[derive(Parser)]
#[command(name = "pnlsvi", version, about = "Pessimistic offline value iteration: runs, sweeps and invariant checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One (K, seed) cell; prints a JSON report.
    Run {
        #[command(flatten)]
        common: Common,
        /// episodes per half; defaults to the smallest configured K
        #[arg(long)]
        k: Option<usize>,
    },
    /// All (K, seed) cells; writes CSV and a JSON summary.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Invariant suite; exit code 0 iff every check passes.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Pretty-print the scenario MDP with its optimal values and policy.
    ShowMdp {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Rate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Paper,
    Practical,
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// built-in config used when no file is given
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// seed for `run`; first seed of the list for `sweep` and `verify`
    #[arg(long)]
    seed: Option<u64>,
    /// output file (`run`, `verify`, `show-mdp`) or directory (`sweep`)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => match self.preset {
                Preset::Default => ExperimentConfig::default(),
                Preset::Rate => ExperimentConfig::rate_preset(),
            },
        };
        if let Some(seed) = self.seed {
            cfg.rebase_seeds(seed);
        }
        if let Some(p) = self.profile {
            cfg.profile = match p {
                Profile::Paper => RadiusProfile::Paper,
                Profile::Practical => RadiusProfile::Practical,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    // a closed pipe (`| head`) is not an error
    if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(e.into());
        }
    }
    if let Some(path) = out {
        write(path, &format!("{text}\n"))?;
    }
    Ok(())
}

fn cmd_run(common: &Common, k: Option<usize>) -> Result<()> {
    let cfg = common.load()?;
    let k = k.unwrap_or_else(|| *cfg.k_values.iter().min().expect("validated"));
    let seed = cfg.seeds[0];
    let mdp = cfg.scenario.build()?;
    let behavior = cfg.behavior.build(&mdp)?;
    let classes = stage_classes(&cfg.class, &mdp)?;
    let planner = cfg.planner();
    let label = cfg.scenario.label();
    let setup = CellSetup { scenario: &label, mdp: &mdp, behavior: &behavior, classes: &classes, config: &planner };
    let outcome = run_cell(&setup, k, seed)?;
    let opt = optimal_values(&mdp);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "record": outcome.record,
        "behavior": cfg.behavior.label(),
        "class": cfg.class.label(),
        "profile": cfg.profile,
        "radii": outcome.output.params,
        "bonus_provenance": outcome.output.bonus_provenance,
        "heuristic_bonus": outcome.output.heuristic_bonus,
        "policy": (0..mdp.horizon())
            .map(|h| (0..mdp.num_states()).map(|s| outcome.output.policy.deterministic_action(h, s)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "optimal_policy": (0..mdp.horizon())
            .map(|h| (0..mdp.num_states()).map(|s| opt.policy.deterministic_action(h, s)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    emit_json(&report, common.out.as_deref().or(cfg.output.json.as_deref()))
}

fn cmd_sweep(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let report = run_sweep(&cfg)?;
    let (csv_path, json_path) = match &common.out {
        Some(dir) => (Some(dir.join("sweep.csv")), Some(dir.join("summary.json"))),
        None => (cfg.output.csv.clone(), cfg.output.json.clone()),
    };
    match &csv_path {
        Some(p) => write(p, &report.csv())?,
        None => eprint!("{}", report.csv()),
    }
    emit_json(&serde_json::to_value(&report.summary)?, json_path.as_deref())
}

fn cmd_verify(common: &Common) -> Result<bool> {
    let cfg = common.load()?;
    let report = run_verify(&cfg);
    for c in &report.checks {
        eprintln!("{} {} (metric {:.4e}, threshold {:.4e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.metric, c.threshold);
    }
    emit_json(&serde_json::to_value(&report)?, common.out.as_deref().or(cfg.output.json.as_deref()))?;
    Ok(report.all_passed)
}

fn cmd_show_mdp(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let mdp = cfg.scenario.build()?;
    let opt = optimal_values(&mdp);
    let gaps: Vec<Vec<f64>> = opt
        .values
        .q
        .iter()
        .map(|q| {
            (0..mdp.num_states())
                .map(|s| {
                    let mut row = q.row(s).to_vec();
                    row.sort_by(|a, b| b.total_cmp(a));
                    if row.len() > 1 { row[0] - row[1] } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario.label(),
        "mdp": mdp,
        "optimal_values": opt.values.v,
        "optimal_policy": (0..mdp.horizon())
            .map(|h| (0..mdp.num_states()).map(|s| opt.policy.deterministic_action(h, s)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "action_gaps": gaps,
    });
    emit_json(&report, common.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, k } => cmd_run(common, *k).map(|_| true),
        Command::Sweep { common } => cmd_sweep(common).map(|_| true),
        Command::Verify { common } => cmd_verify(common),
        Command::ShowMdp { common } => cmd_show_mdp(common).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
