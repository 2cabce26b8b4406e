//! Command-line drivers for the topic-model engines.

pub mod args;
pub mod commands;
pub mod data;
pub mod manifest;

use anyhow::Result;

use args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Vocab(a) => commands::vocab(a),
        Command::TrainGibbs(a) => commands::train_gibbs(a),
        Command::TrainSgmcmc(a) => commands::train_sgmcmc(a),
        Command::TrainHybrid(a) => commands::train_hybrid(a),
        Command::TrainSupervised(a) => commands::train_supervised(a),
        Command::Extract(a) => commands::extract(a),
        Command::Classify(a) => commands::classify(a),
        Command::Phrases(a) => commands::phrases(a),
        Command::Tree(a) => commands::tree(a),
        Command::EvalTrace(a) => commands::eval_trace(a),
    }
}

/// Exit status for an error: 2 for missing inputs, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<data::MissingInput>().is_some() {
        2
    } else {
        1
    }
}
