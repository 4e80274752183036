use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cascade_kpz::dimension::{aligned_levels, euclid_dimension, partition_table, quantum_dimension};
use cascade_kpz::frostman::{lower_bound_evidence, DEFAULT_BOUNDED_RATIO};
use cascade_kpz::harness::output::{write_energy_rows, write_partition_rows, write_realization, MAX_DUMP_LEVEL};
use cascade_kpz::harness::{self, ConfigEntries, ExperimentConfig, ExperimentReport, HarnessError};
use cascade_kpz::kpz::{solve_zeta, DEFAULT_SOLVE_TOL};

#[derive(Parser)]
#[command(name = "cascade-kpz", version, about = "Cascade metrics and the dimension relation zeta0 = phi(zeta)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a weight law and print moments on the s grid
    ValidateWeights(Common),
    /// Sample one realization and dump its cell masses
    Simulate(Common),
    /// Box-counting dimension of the set
    DimEuclid(Common),
    /// Partition-exponent dimension of the set under the cascade metric
    DimQuantum(Common),
    /// Solve phi(zeta) = zeta0
    KpzSolve(Common),
    /// Compare the quantum dimension estimate with the solved prediction
    KpzExperiment(Common),
    /// Expectation, atom, negative moment and recursion checks
    Diagnostics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Which::All)]
        which: Which,
    },
    /// Quantum energies of the tilted uniform measure on the set
    Energy(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    All,
    MeanEll,
    Atoms,
    NegMoments,
    Recursion,
}

#[derive(Args, Default)]
struct Common {
    /// Config file of key=value lines; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight law, e.g. "family=lognormal sigma2=ln2"
    #[arg(long)]
    model: Option<String>,
    /// Set, e.g. "set=digits b=2 allow=00,11" or "set=full"
    #[arg(long)]
    set: Option<String>,
    /// Master seed (decimal or 0x hex)
    #[arg(long)]
    seed: Option<String>,
    /// Explicit seeds, comma separated
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    seeds_file: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    nmin: Option<u32>,
    #[arg(long)]
    nmax: Option<u32>,
    /// Exponent or comma separated grid
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    zeta0: Option<String>,
    /// Exponent of the negative moment diagnostic
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    max_level: Option<u32>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    gap_tol: Option<String>,
    /// mean_of_roots or root_of_mean_slope
    #[arg(long)]
    aggregation: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads or "auto"
    #[arg(long)]
    threads: Option<String>,
    /// Also write the JSON summary to this file
    #[arg(long)]
    json: Option<PathBuf>,
}

impl Common {
    fn entries(&self) -> Result<ConfigEntries, HarnessError> {
        let mut e = match &self.config {
            Some(path) => ConfigEntries::from_path(path)?,
            None => ConfigEntries::new(),
        };
        let text = |p: &PathBuf| p.display().to_string();
        let flags: [(&str, Option<String>); 17] = [
            ("model", self.model.clone()),
            ("set", self.set.clone()),
            ("seed", self.seed.clone()),
            ("seeds", self.seeds.clone()),
            ("seeds_file", self.seeds_file.as_ref().map(text)),
            ("replicates", self.replicates.map(|r| r.to_string())),
            ("nmin", self.nmin.map(|n| n.to_string())),
            ("nmax", self.nmax.map(|n| n.to_string())),
            ("s", self.s.clone()),
            ("zeta0", self.zeta0.clone()),
            ("r", self.r.clone()),
            ("max_level", self.max_level.map(|n| n.to_string())),
            ("tol", self.tol.clone()),
            ("gap_tol", self.gap_tol.clone()),
            ("aggregation", self.aggregation.clone()),
            ("out_dir", self.out_dir.as_ref().map(text)),
            ("threads", self.threads.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                // a seed source given on the command line replaces the file's
                if matches!(key, "seed" | "seeds" | "seeds_file") {
                    for k in ["seed", "seeds", "seeds_file"] {
                        e.remove(k);
                    }
                }
                e.set(key, v)?;
            }
        }
        Ok(e)
    }

    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        ExperimentConfig::from_entries(&self.entries()?)
    }
}

struct Outcome {
    json: serde_json::Value,
    passed: bool,
}

impl Outcome {
    fn ok(json: serde_json::Value) -> Self {
        Self { json, passed: true }
    }

    fn report(report: &ExperimentReport) -> Result<Self, HarnessError> {
        let json = serde_json::to_value(report).map_err(|e| HarnessError::Io(e.to_string()))?;
        Ok(Self { json, passed: report.passed() })
    }
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> Option<PathBuf> {
    cfg.out_dir.as_ref().map(|d| d.join(name))
}

fn run(command: &Command) -> Result<Outcome, HarnessError> {
    let (common, which) = match command {
        Command::Diagnostics { common, which } => (common, Some(*which)),
        Command::ValidateWeights(c)
        | Command::Simulate(c)
        | Command::DimEuclid(c)
        | Command::DimQuantum(c)
        | Command::KpzSolve(c)
        | Command::KpzExperiment(c)
        | Command::Energy(c) => (c, None),
    };
    let cfg = common.config()?;
    let outcome = cfg.threads.install(|| execute(command, &cfg, which))??;
    if let Some(path) = &common.json {
        let text = serde_json::to_string_pretty(&outcome.json).map_err(|e| HarnessError::Io(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(outcome)
}

fn execute(command: &Command, cfg: &ExperimentConfig, which: Option<Which>) -> Result<Outcome, HarnessError> {
    match command {
        Command::ValidateWeights(_) => {
            let report = cfg.model.validate();
            let moments = cfg
                .s_grid
                .iter()
                .map(|&s| {
                    let m = cfg.model.moment_report(s)?;
                    Ok(json!({ "s": s, "moment": m.m, "phi": m.phi, "psi": cfg.model.psi(s)?, "neg_moment": m.neg_m }))
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            Ok(Outcome {
                passed: report.is_valid(),
                json: json!({ "model": cfg.model.to_string(), "validation": report, "moments": moments }),
            })
        }
        Command::Simulate(_) => {
            let real = &harness::realizations(cfg)[0];
            let depth = cfg.n_max;
            let ell = (0..=depth).map(|n| real.ell_n(n)).collect::<Result<Vec<_>, _>>()?;
            let mut rows = None;
            if let Some(path) = out_path(cfg, &format!("realization_{}.csv", cfg.seeds[0])) {
                rows = Some(write_realization(&path, real, depth.min(MAX_DUMP_LEVEL))?);
            }
            Ok(Outcome::ok(json!({
                "seed": cfg.seeds[0],
                "depth": depth,
                "ell": ell,
                "max_atom": real.max_atom(depth)?,
                "csv_rows": rows,
            })))
        }
        Command::DimEuclid(_) => {
            let est = euclid_dimension::<f64>(&cfg.set, cfg.n_min, cfg.n_max)?;
            Ok(Outcome::ok(json!({ "set": cfg.set.to_string(), "zeta0": cfg.set.zeta0::<f64>(), "estimate": est })))
        }
        Command::DimQuantum(_) => {
            let reals = harness::realizations(cfg);
            let est = quantum_dimension(&reals, &cfg.set, cfg.n_min, cfg.n_max, cfg.tol, cfg.aggregation)?;
            if let Some(path) = out_path(cfg, "partition.csv") {
                let levels = aligned_levels(&cfg.set, cfg.n_min, cfg.n_max)?;
                let rows = partition_table(&reals, &cfg.set, &levels, &cfg.s_grid)?;
                write_partition_rows(&path, &rows)?;
            }
            Ok(Outcome::ok(json!({ "estimate": est, "seeds": cfg.seeds, "config_hash": cfg.hash() })))
        }
        Command::KpzSolve(_) => {
            let zeta0 = cfg.zeta0.unwrap_or_else(|| cfg.set.zeta0());
            let sol = solve_zeta(&cfg.model, zeta0, DEFAULT_SOLVE_TOL)?;
            Ok(Outcome::ok(json!({ "zeta": sol.zeta, "residual": sol.residual, "iterations": sol.iterations })))
        }
        Command::KpzExperiment(_) => Outcome::report(&harness::run_kpz_experiment(cfg)?),
        Command::Diagnostics { .. } => {
            let report = match which.unwrap_or(Which::All) {
                Which::All => harness::run_diagnostics(cfg)?,
                Which::MeanEll => harness::diag_mean_ell(cfg)?,
                Which::Atoms => harness::diag_atoms(cfg)?,
                Which::NegMoments => harness::diag_neg_moments(cfg)?,
                Which::Recursion => harness::diag_recursion(cfg)?,
            };
            Outcome::report(&report)
        }
        Command::Energy(_) => {
            let reals = harness::realizations(cfg);
            let levels: Vec<u32> = (cfg.n_min.max(cfg.set.block())..=cfg.n_max).filter(|n| n % cfg.set.block() == 0).collect();
            let evidence =
                lower_bound_evidence(&cfg.model, &reals, &cfg.set, cfg.s_grid[0], &levels, DEFAULT_BOUNDED_RATIO)?;
            if let Some(path) = out_path(cfg, "energy.csv") {
                write_energy_rows(&path, &evidence.rows)?;
            }
            Ok(Outcome {
                passed: evidence.bounded,
                json: json!({ "evidence": evidence, "seeds": cfg.seeds, "config_hash": cfg.hash() }),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.json).expect("JSON values always serialize"));
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
