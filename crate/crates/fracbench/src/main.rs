use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracbench::commands::{run_bootstrap, run_evaluate, run_phantom, run_rank, run_significance, run_simulate, with_jobs};
use fracbench::study::{load_json, load_manifest};
use fracbench::Error;
use fracbench_core::drr::SimulationConfig;
use fracbench_core::phantom::{PerturbationSpec, PhantomSpec};
use fracbench_core::ranking::DEFAULT_BOOTSTRAP_SAMPLES;

/// Pelvic fracture segmentation benchmark.
#[derive(Parser)]
#[command(name = "fracbench", version)]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every team's predictions against the ground truth.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the leaderboard from a study document.
    Rank {
        /// study.json from `evaluate`, or a table of team means.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap the ranking over cases.
    Bootstrap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pairwise one-sided signed-rank tests for all six metrics.
    Significance {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render radiographs and projected masks from a labelled CT.
    Simulate {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Simulation parameters as JSON; unspecified fields use defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        n_views: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic fractured pelvis.
    Phantom {
        /// Full phantom spec as JSON; otherwise a random layout is drawn.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [128usize, 128, 128])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        /// Upper bound on fracture planes per bone for random layouts.
        #[arg(long, default_value_t = 3)]
        max_planes: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Perturbation spec as JSON; writes pred.mha.
        #[arg(long)]
        perturb: Option<PathBuf>,
        /// Store volumes uncompressed.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn announce(out: &Path) {
    eprintln!("wrote results to {}", out.display());
}

fn run(cli: Cli) -> fracbench::Result<()> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Evaluate { manifest, out } => {
            let m = load_manifest(&manifest)?;
            let study = with_jobs(jobs, || run_evaluate(&m, &out))??;
            for w in &study.warnings {
                eprintln!("warning: {w}");
            }
            announce(&out);
        }
        Command::Rank { manifest, out } => {
            let board = run_rank(&manifest, &out)?;
            for e in &board.entries {
                println!("{:>3}  {}", e.final_rank, e.team);
            }
        }
        Command::Bootstrap { manifest, out, n_samples, seed } => {
            let r = with_jobs(jobs, || run_bootstrap(&manifest, &out, n_samples, seed))??;
            println!("kendall tau mean {:.4}, 95% interval [{:.4}, {:.4}]", r.tau_mean, r.tau_ci95.0, r.tau_ci95.1);
        }
        Command::Significance { manifest, out } => {
            run_significance(&manifest, &out)?;
            announce(&out);
        }
        Command::Simulate { ct, labels, config, n_views, seed, out } => {
            let config: SimulationConfig = match config {
                Some(p) => load_json(&p)?,
                None => SimulationConfig::default(),
            };
            let views = with_jobs(jobs, || run_simulate(&ct, &labels, &config, n_views, seed, &out))??;
            if !views.is_empty() {
                announce(&out);
            }
        }
        Command::Phantom { config, dims, spacing, max_planes, seed, perturb, raw, out } => {
            let mut spec = match config {
                Some(p) => load_json::<PhantomSpec>(&p)?,
                None => {
                    let dims: [usize; 3] =
                        dims.try_into().map_err(|_| Error::Input("--dims takes three values".into()))?;
                    PhantomSpec::random(dims, [spacing; 3], max_planes, seed.unwrap_or(0))
                }
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let perturbation: Option<PerturbationSpec> = perturb.map(|p| load_json(&p)).transpose()?;
            for w in run_phantom(&spec, perturbation.as_ref(), &out, !raw)? {
                eprintln!("warning: {w}");
            }
            announce(&out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
