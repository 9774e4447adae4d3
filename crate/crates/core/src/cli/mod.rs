//! The `ldrnet` command line.
//!
//! ```text
//! ldrnet <synth|extract|train|eval|ablate|perturb-eval|heatmap> --config <file> [--set key=value]...
//! ```
//!
//! Exit codes: 0 success, 1 usage or config error, 2 I/O error, 3 data or
//! contract error. `LDRNET_THREADS` caps the worker pool.

mod commands;
mod config;
mod featfile;
mod record;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_ablate, cmd_eval, cmd_extract, cmd_heatmap, cmd_perturb_eval, cmd_synth, cmd_train,
    evaluate, test_pairs, AblationRow, PerturbRow, PerturbTable,
};
pub use config::{LvpChoice, RunConfig, KEYS};
pub use featfile::{
    decode_features, encode_features, feature_path, read_features, write_features, HEADER_LEN,
    MAGIC, VERSION,
};
pub use record::ExperimentRecord;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ldrnet", version, about = "Local gradient and variation-pattern detector for generated images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic natural/smoothed corpus and its manifests.
    Synth(Common),
    /// Extract feature files for every manifest image.
    Extract(Common),
    /// Train the classifier on extracted features.
    Train(Common),
    /// Score a manifest with a trained checkpoint.
    Eval(Common),
    /// Run the σ and gradient-operator sweeps.
    Ablate(Common),
    /// Score the held-out set under each perturbation.
    PerturbEval(Common),
    /// Write |LGA| and LVP heatmaps, and a gradient scatter for two images.
    Heatmap(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Io { .. } => 2,
        _ => 3,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LDRNET_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("LDRNET_THREADS must be a positive integer, got `{raw}`")))?;
    // A pool that already exists (e.g. in-process callers) is left alone.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, common, cmd): (&str, &Common, fn(&RunConfig) -> Result<ExperimentRecord>) =
        match &cli.command {
            Command::Synth(c) => ("synth", c, cmd_synth),
            Command::Extract(c) => ("extract", c, cmd_extract),
            Command::Train(c) => ("train", c, cmd_train),
            Command::Eval(c) => ("eval", c, cmd_eval),
            Command::Ablate(c) => ("ablate", c, cmd_ablate),
            Command::PerturbEval(c) => ("perturb-eval", c, cmd_perturb_eval),
            Command::Heatmap(c) => ("heatmap", c, cmd_heatmap),
        };
    let result = configure_threads()
        .and_then(|()| RunConfig::load(&common.config, &common.set))
        .and_then(|cfg| cmd(&cfg));
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("ldrnet {name}: {e}");
            exit_code(&e)
        }
    }
}
