//! One module per subcommand.

pub mod analyze;
pub mod attack;
pub mod data;
pub mod evaluate;
pub mod train;

use anyhow::Result;

use crate::config::{Cmd, RunConfig};

pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    match cfg.cmd {
        Cmd::Train => train::run(cfg),
        Cmd::Attack => attack::run(cfg),
        Cmd::Evaluate => evaluate::run(cfg),
        Cmd::Analyze => analyze::run(cfg),
        Cmd::SynthData => data::synth(cfg),
        Cmd::IngestData => data::ingest(cfg),
    }
}
