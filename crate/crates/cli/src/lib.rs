//! Command-line interface for the discourse-parsing toolkit: harmonize
//! treebanks, train parsers (monolingually or across languages), parse
//! documents, and score the results — all reproducible from a seed.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 broken internal
//! invariant.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "rstkit", version, about = "Multilingual RST discourse parsing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert raw treebanks (dis/lisp/rs3 + CoNLL-U) into a harmonized corpus.
    Harmonize {
        /// Raw-corpus manifest: id, tree file, conllu file, language.
        manifest: PathBuf,
        /// Directory to write the harmonized corpus into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a parser from a run configuration (grid search or fixed point).
    Train {
        /// Flat key=value configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override one configuration key, e.g. `--set seed=7` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Parse a harmonized corpus with a trained model.
    Parse {
        #[arg(long)]
        model: PathBuf,
        /// Harmonized-corpus manifest of the documents to parse.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the predicted `.brackets` files.
        #[arg(long)]
        out: PathBuf,
        /// Beam width (default: the width the model was tuned with).
        #[arg(long)]
        beam: Option<usize>,
        /// Bilingual dictionary rewriting word features, as used during
        /// cross-lingual training (repeatable; merged in order).
        #[arg(long)]
        dictionary: Vec<PathBuf>,
        /// Also write a per-step beam trace next to each tree.
        #[arg(long)]
        trace: bool,
    },
    /// Score predicted trees against gold trees (micro-averaged).
    Eval {
        /// Directory of predicted `.brackets` files.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of gold `.brackets` files.
        #[arg(long)]
        gold: PathBuf,
    },
    /// Most-frequent-structure baseline, scored on the corpus's test split.
    Baseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the baseline trees here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that every gold tree survives the oracle/replay round trip.
    OracleCheck {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Dictionary coverage of a corpus (word-type counts).
    Coverage {
        #[arg(long)]
        manifest: PathBuf,
        /// Bilingual dictionary file (repeatable; merged in order).
        #[arg(long, required = true)]
        dictionary: Vec<PathBuf>,
    },
}

/// Run the command line against the given output streams and return the
/// process exit code.
pub fn run(args: &[OsString], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let _ = write!(err, "{e}");
            return 1;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Harmonize { manifest, out: dir } => {
            commands::harmonize(&manifest, &dir, out).map(|_| ())
        }
        Command::Train { config, overrides } => {
            let config = config::RunConfig::load(&config, &overrides)?;
            commands::train(&config, out).map(|_| ())
        }
        Command::Parse {
            model,
            manifest,
            out: dir,
            beam,
            dictionary,
            trace,
        } => commands::parse(&model, &manifest, &dir, beam, &dictionary, trace, out),
        Command::Eval { pred, gold } => commands::eval(&pred, &gold, out).map(|_| ()),
        Command::Baseline {
            manifest,
            seed,
            out: dir,
        } => commands::baseline(&manifest, seed, dir.as_deref(), out).map(|_| ()),
        Command::OracleCheck { manifest } => commands::oracle_check(&manifest, out),
        Command::Coverage {
            manifest,
            dictionary,
        } => commands::coverage(&manifest, &dictionary, out),
    }
}
