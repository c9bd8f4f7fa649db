//! Command-line pipeline driver. Argument parsing and dispatch only; all
//! stage logic lives in the library (`s5vh::pipeline`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use s5vh::bench::BenchConfig;
use s5vh::centers::AdmmOptions;
use s5vh::config::RunConfig;
use s5vh::pipeline;
use s5vh::synth::SynthOptions;

#[derive(Parser)]
#[command(
    name = "s5vh",
    about = "Self-supervised video hashing: synthetic data, clustering, hash centers, training, encoding, retrieval evaluation and an inference bench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus with manifests and labels.
    Synth {
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        videos: usize,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        drift_scale: f64,
        #[arg(long, default_value_t = 0.2)]
        query_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster temporally averaged features into semantic centroids.
    Cluster {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 100)]
        num_centers: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate ±1 hash centers from a cluster directory.
    Centers {
        /// Directory produced by `cluster` (needs similarity.s5vt).
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long, default_value_t = 16)]
        code_bits: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the hashing model.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding centers.s5vt and assignments.json.
        #[arg(long)]
        centers: PathBuf,
        /// JSON run config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a manifest into packed binary codes.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate query codes against a database.
    Eval {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        database: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stress-test encoding and fit time-versus-length scaling laws.
    Bench {
        /// JSON bench config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated sequence lengths, overriding the config.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn run(command: Command) -> s5vh::Result<()> {
    match command {
        Command::Synth {
            classes,
            videos,
            frames,
            dim,
            seed,
            noise_sigma,
            drift_scale,
            query_fraction,
            out,
        } => {
            let summary = pipeline::run_synth(
                &out,
                &SynthOptions {
                    classes,
                    videos,
                    frames,
                    dim,
                    seed,
                    noise_sigma,
                    drift_scale,
                    query_fraction,
                },
            )?;
            println!(
                "wrote {} train/database and {} query videos under {}",
                summary.num_database,
                summary.num_query,
                out.display()
            );
        }
        Command::Cluster {
            manifest,
            num_centers,
            seed,
            out,
        } => {
            let summary = pipeline::run_cluster(&manifest, num_centers, seed, &out)?;
            println!(
                "clustered {} videos into {} centroids ({} iterations, objective {:.4})",
                summary.num_videos,
                summary.num_clusters,
                summary.iterations,
                summary.final_objective
            );
        }
        Command::Centers {
            cluster,
            code_bits,
            seed,
            out,
        } => {
            let report =
                pipeline::run_centers(&cluster, code_bits, seed, &out, &AdmmOptions::default())?;
            println!(
                "centers after {} iterations (converged: {}), objective {:.4} (init {:.4})",
                report.iterations,
                report.converged,
                report.objective_final,
                report.objective_init_binarized
            );
            if let Some(warning) = &report.warning {
                eprintln!("warning: {warning}");
            }
        }
        Command::Train {
            manifest,
            centers,
            config,
            out,
        } => {
            let config = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            let summary = pipeline::run_train(&manifest, &centers, &config, &out)?;
            println!(
                "trained {} epochs (best epoch {}, loss {:.6}, early stop: {})",
                summary.epochs_run, summary.best_epoch, summary.best_loss, summary.stopped_early
            );
        }
        Command::Encode {
            manifest,
            checkpoint,
            out,
        } => {
            let count = pipeline::run_encode(&manifest, &checkpoint, &out)?;
            println!("encoded {count} videos into {}", out.display());
        }
        Command::Eval {
            queries,
            database,
            labels,
            out,
        } => {
            let report = pipeline::run_eval(&queries, &database, &labels, &out)?;
            for (n, value) in &report.map_at {
                println!("mAP@{n}: {value:.4}");
            }
            println!("GmAP: {:.4}", report.gmap);
        }
        Command::Bench {
            config,
            lengths,
            out,
        } => {
            let mut config = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| s5vh::Error::io(path.display().to_string(), e))?;
                    serde_json::from_str::<BenchConfig>(&text)
                        .map_err(|e| s5vh::Error::json(path.display().to_string(), e))?
                }
                None => BenchConfig::default(),
            };
            if let Some(lengths) = lengths {
                config.lengths = lengths;
            }
            let report = pipeline::run_bench(&config, &out)?;
            println!(
                "scan: linear R^2 {:.4}, quadratic share at max length {:.3}",
                report.scan.linear.r_squared, report.scan.quadratic_share_at_max
            );
            println!(
                "reference: quadratic share at max length {:.3}",
                report.reference.quadratic_share_at_max
            );
        }
        Command::Gradcheck { seed } => {
            let results = s5vh::verify::run_all(seed)?;
            let mut worst: f64 = 0.0;
            for check in &results {
                println!("{:<40} max rel error {:.3e}", check.name, check.max_rel_error);
                worst = worst.max(check.max_rel_error);
            }
            if worst > 1e-4 {
                return Err(s5vh::Error::NonFinite(format!(
                    "gradient checks exceeded tolerance: worst {worst:.3e}"
                )));
            }
            println!("all gradient checks within 1e-4 (worst {worst:.3e})");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let payload = serde_json::json!({ "error": error.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
