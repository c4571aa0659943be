use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wc4dvar::experiments::{
    dump_singular_values, gauss_newton, generate_twin, run_ensemble, run_inner, Case, ExperimentConfig, Variant, Which,
};

#[derive(Parser)]
#[command(name = "wc4dvar", version, about = "Weak-constraint 4D-Var solver lab with randomised preconditioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One inner solve; writes the per-iteration cost trace.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Outer Gauss-Newton iterations; the trace of the last inner solve is written.
        #[arg(long, default_value_t = 1)]
        outer: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeats the inner solve with independent sketches.
    Ensemble {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 100)]
        realisations: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Leading singular values of P or W and their randomised approximations.
    Singvals {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_parser = parse_which)]
        which: Which,
        #[arg(long, value_delimiter = ',', default_value = "30,60,90")]
        ranks: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the resolved configuration.
    Config {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Emit every resolved key as `key=value`.
        #[arg(long)]
        dump: bool,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    case: u8,
    #[arg(long, default_value = "none", value_parser = parse_variant)]
    precond: Variant,
    #[arg(long, default_value_t = 30)]
    rank: usize,
    #[arg(long, default_value_t = 5)]
    oversample: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed_truth: u64,
    #[arg(long, default_value_t = 2)]
    seed_noise: u64,
    #[arg(long, default_value_t = 3)]
    seed_sketch: u64,
    /// Model-error std 0.1 instead of 0.05 (C_q length scale 2dx unless overridden).
    #[arg(long)]
    large_model_error: bool,
    /// C_q length scale in grid spacings, e.g. `0.75dx` or `2dx`.
    #[arg(long, value_parser = parse_lengthscale)]
    cq_lengthscale: Option<f64>,
    /// n = 20, N = 29 instead of n = 100, N = 149.
    #[arg(long)]
    reduced_scale: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: wc4dvar::Error| e.to_string())
}

fn parse_which(s: &str) -> Result<Which, String> {
    s.parse().map_err(|e: wc4dvar::Error| e.to_string())
}

fn parse_lengthscale(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().trim_end_matches("dx").parse().map_err(|_| format!("invalid length scale '{s}'"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("length scale must be positive, got '{s}'"))
    }
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let case = Case::from_id(self.case)?;
        let mut cfg = if self.reduced_scale { ExperimentConfig::reduced(case) } else { ExperimentConfig::full_scale(case) };
        cfg = cfg.with_variant(self.precond, self.rank).with_seeds(self.seed_truth, self.seed_noise, self.seed_sketch);
        cfg.oversampling = self.oversample;
        cfg.iterations = self.iters;
        if self.large_model_error {
            cfg = cfg.large_model_error(self.cq_lengthscale.unwrap_or(2.0));
        } else if let Some(l) = self.cq_lengthscale {
            cfg.model_error_lengthscale = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { exp, outer, out } => {
            let mut cfg = exp.config()?;
            cfg.outer_iterations = outer;
            let twin = generate_twin(&cfg)?;
            let trace = if outer == 1 {
                run_inner(&cfg, &twin)?
            } else {
                let gn = gauss_newton(&cfg, &twin, outer)?;
                for (j, c) in gn.costs.iter().enumerate() {
                    eprintln!("outer {j}: J = {c:.16e}");
                }
                gn.traces.into_iter().last().expect("outer >= 1")
            };
            trace.write_csv(create(&out)?)?;
            log::info!("{}: J {:e} -> {:e}", trace.preconditioner, trace.initial_cost(), trace.final_cost());
        }
        Command::Ensemble { exp, realisations, out_dir } => {
            let cfg = exp.config()?;
            if !cfg.precond.is_randomised() {
                log::warn!("{} is deterministic; all members will be identical", cfg.precond);
            }
            let twin = generate_twin(&cfg)?;
            let result = run_ensemble(&cfg, &twin, realisations)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            for (m, trace) in result.members.iter().enumerate() {
                trace.write_csv(create(&out_dir.join(format!("member_{m:03}.csv")))?)?;
            }
            result.write_aggregate_csv(create(&out_dir.join("aggregate.csv"))?)?;
            if result.breakdowns > 0 {
                eprintln!("{} of {realisations} members broke down and were excluded", result.breakdowns);
            }
        }
        Command::Singvals { exp, which, ranks, out } => {
            let cfg = exp.config()?;
            let s = cfg.n * (cfg.window + 1);
            if let Some(&k) = ranks.iter().find(|&&k| k + cfg.oversampling > s) {
                bail!("rank {k} plus oversampling {} exceeds the operator dimension {s}", cfg.oversampling);
            }
            let twin = generate_twin(&cfg)?;
            let table = dump_singular_values(&cfg, &twin, which, &ranks, cfg.seeds.sketch, exp.reduced_scale)?;
            table.write_csv(create(&out)?)?;
        }
        Command::Config { exp, dump, out } => {
            let cfg = exp.config()?;
            let text = if dump {
                cfg.dump()
            } else {
                format!("case={}\nprecond={}\nrank={}\n", cfg.case.id(), cfg.precond, cfg.rank)
            };
            match out {
                Some(path) => create(&path)?.write_all(text.as_bytes())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
