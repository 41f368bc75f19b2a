//! Command implementations.
//!
//! Each command resolves its arguments (flag > config file > default) into
//! a serializable struct, executes, and records a [`crate::manifest::RunManifest`];
//! `rerun` replays any of them from that record.

pub mod ablate;
pub mod build_relations;
pub mod eval;
pub mod export_attention;
pub mod gen_synth;
pub mod gradcheck;
pub mod rerun;
pub mod train;

use crate::args::Command;
use crate::error::Result;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenSynth(args) => gen_synth::execute(&gen_synth::resolve(args)?),
        Command::BuildRelations(args) => {
            build_relations::execute(&build_relations::resolve(args)?)
        }
        Command::Train(args) => train::execute(&train::resolve(args)?),
        Command::Eval(args) => eval::execute(&eval::resolve(args)?),
        Command::Ablate(args) => ablate::execute(&train::resolve(args)?),
        Command::ExportAttention(args) => {
            export_attention::execute(&export_attention::resolve(args)?)
        }
        Command::Gradcheck(args) => gradcheck::execute(&gradcheck::resolve(args)?),
        Command::Rerun(args) => rerun::execute(&args),
    }
}
