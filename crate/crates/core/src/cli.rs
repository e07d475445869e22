use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::embed::{
    evaluate_run, feature_matrix_to_dmatrix, normalize_map, pca_reduce, rerender_report, tsne_embed, MapLabel,
    RunEvalOptions, TauSource, TsneConfig,
};
use crate::error::{Error, Result};
use crate::evo::evolve;
use crate::fid::{fid_between, FeatureMatrix};
use crate::io::{atomic_write, Dataset, Profile, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "coegan", version, about = "Coevolutionary GAN training and embedding-based evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve generator and discriminator populations.
    Evolve {
        /// Flat `key = value` overrides applied on top of the profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "desk")]
        profile: Profile,
        /// Run directory (default `runs/seed-<seed>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum concurrent pair trainings.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write and print the resolved configuration, then stop.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score saved generator snapshots of a run by embedding overlap.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Generator generations, comma separated (default from the run config).
        #[arg(long, value_delimiter = ',')]
        generations: Option<Vec<usize>>,
        /// Discriminator generations (default: same as `--generations`).
        #[arg(long, value_delimiter = ',')]
        disc_generations: Option<Vec<usize>>,
        /// Fixed matching threshold instead of the median rule.
        #[arg(long)]
        tau: Option<f64>,
        /// Pool the median over every generator instead of the latest one.
        #[arg(long)]
        tau_all: bool,
        /// Output directory (default `<run>/eval`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fréchet distance between two feature files (`.fm` binary or `.csv`).
    Fid { a: PathBuf, b: PathBuf },
    /// Embed a feature file into two dimensions and write `x,y` rows as CSV.
    Tsne {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 50)]
        pca: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rescale the output into the unit square.
        #[arg(long)]
        normalize: bool,
    },
    /// Re-render CSV and montages from a saved evaluation directory.
    Report {
        #[arg(long)]
        eval: PathBuf,
    },
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingFile(_) | Error::Config { .. } => 2,
        _ => 1,
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}

fn load_features(path: &Path) -> Result<FeatureMatrix> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    FeatureMatrix::load(path)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Evolve {
            config,
            seed,
            profile,
            out,
            jobs,
            dry_run,
        } => {
            let base = RunConfig::for_profile(profile);
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p, base)?,
                None => base,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/seed-{}", cfg.seed)));
            if dry_run {
                std::fs::create_dir_all(&out)?;
                atomic_write(&out.join("config.txt"), cfg.echo().as_bytes())?;
                print!("{}", cfg.echo());
                return Ok(());
            }
            let data = Dataset::load(&cfg.dataset, cfg.seed)?;
            let summary = evolve(&cfg, &data, &out, jobs)?;
            if let Some(last) = summary.metrics.last() {
                println!(
                    "{}",
                    serde_json::json!({
                        "run": out.display().to_string(),
                        "generations": last.generation,
                        "best_generator_fid": last.best_generator_fid,
                    })
                );
            }
            Ok(())
        }
        Command::Evaluate {
            run,
            generations,
            disc_generations,
            tau,
            tau_all,
            out,
        } => {
            let cfg_path = run.join("config.txt");
            let generations = match generations {
                Some(g) => g,
                None => RunConfig::load(&cfg_path, RunConfig::default())?.eval_generations,
            };
            let tau = match (tau, tau_all) {
                (Some(t), _) if t > 0.0 => TauSource::Fixed(t),
                (Some(t), _) => return Err(Error::invalid(format!("--tau must be positive, got {t}"))),
                (None, true) => TauSource::AllGenerators,
                (None, false) => TauSource::Latest,
            };
            let report = evaluate_run(
                &run,
                &RunEvalOptions {
                    generations,
                    disc_generations,
                    tau,
                    out_dir: out,
                },
            )?;
            println!(
                "{}",
                serde_json::json!({
                    "tau": report.tau,
                    "disc_generations": report.disc_generations,
                    "gen_generations": report.gen_generations,
                    "j": report.matrix(),
                })
            );
            Ok(())
        }
        Command::Fid { a, b } => {
            let fa = load_features(&a)?;
            let fb = load_features(&b)?;
            let d = fid_between(&fa, &fb)?;
            println!("{}", serde_json::json!({ "fid": d }));
            Ok(())
        }
        Command::Tsne {
            input,
            out,
            perplexity,
            iterations,
            pca,
            seed,
            normalize,
        } => {
            let f = load_features(&input)?;
            let x = feature_matrix_to_dmatrix(&f);
            let k = pca.min(x.nrows()).min(x.ncols());
            let reduced = pca_reduce(&x, k)?;
            let emb = tsne_embed(&reduced.scores, &TsneConfig::new(perplexity, iterations, seed))?;
            let points = if normalize {
                normalize_map(&emb.points, vec![MapLabel::Dataset; emb.points.len()], input.display().to_string())?
                    .points
            } else {
                emb.points.clone()
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["x", "y"])?;
            for p in &points {
                w.write_record([p[0].to_string(), p[1].to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            atomic_write(&out, &bytes)?;
            println!("{}", serde_json::json!({ "points": points.len(), "kl": emb.final_kl() }));
            Ok(())
        }
        Command::Report { eval } => {
            let report = rerender_report(&eval)?;
            println!("{}", serde_json::json!({ "rows": report.rows.len(), "tau": report.tau }));
            Ok(())
        }
    }
}
