//! `mvsense`: one binary driving the whole compressed-domain pipeline, from
//! corpus generation through codec operations, benchmarking, training and
//! evaluation reports.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mvsense", version, about = "Compressed-domain video activity toolkit")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Worker threads for cross-video parallelism; 1 is bit-exact everywhere.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// `key = value` settings file; flags override it, it overrides presets.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus (bitstreams, raw frames, manifest).
    Gen(commands::GenArgs),
    /// Encode raw planar RGB into an MVB1 bitstream.
    Encode(commands::EncodeArgs),
    /// Decode an MVB1 bitstream to raw RGB (and optionally PPM frames).
    Decode(commands::DecodeArgs),
    /// Extract per-P-frame motion vector fields without touching residuals.
    ExtractMv(commands::ExtractMvArgs),
    /// Selectively decode a bitstream and write the rendered frames as PPM.
    Render(commands::RenderArgs),
    /// Write per-frame macroblock activity maps as PGM images.
    Activity(commands::ActivityArgs),
    /// Benchmark extraction, selective decode and full decode over a corpus.
    Bench(commands::BenchArgs),
    /// Sweep the decode interval X and record FPS and SSIM curves.
    SsimCurve(commands::SsimCurveArgs),
    /// Train a temporal or spatial stream network on a corpus.
    Train(commands::TrainArgs),
    /// Evaluate a trained network on the test split of a corpus.
    Eval(commands::EvalArgs),
    /// Evaluate both streams, fuse their scores, and report agreement.
    FuseEval(commands::FuseEvalArgs),
    /// Emit the cloud-cost table from published FPS and price inputs.
    Cost(commands::CostArgs),
    /// Render kappa and recall-difference figures from a predictions CSV.
    Report(commands::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // A second invocation inside tests can fail harmlessly; the pool is
        // already configured then.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let ctx = commands::Ctx {
        seed: cli.seed,
        jobs: cli.jobs,
        file: match config::FileConfig::load(cli.config.as_deref()) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(e.exit_code());
            }
        },
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Encode(a) => commands::encode(&ctx, a),
        Command::Decode(a) => commands::decode(&ctx, a),
        Command::ExtractMv(a) => commands::extract_mv(&ctx, a),
        Command::Render(a) => commands::render(&ctx, a),
        Command::Activity(a) => commands::activity(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
        Command::SsimCurve(a) => commands::ssim_curve(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::FuseEval(a) => commands::fuse_eval(&ctx, a),
        Command::Cost(a) => commands::cost(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
