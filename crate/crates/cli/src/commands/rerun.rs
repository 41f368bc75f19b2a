use crate::args::RerunArgs;
use crate::error::{CliError, Result};
use crate::manifest::read_manifest;

use super::{ablate, build_relations, eval, export_attention, gen_synth, gradcheck, train};

/// Replays a recorded command: the manifest's resolved arguments are
/// re-executed, rewriting the same outputs (bit-identical for every
/// deterministic command).
pub fn execute(args: &RerunArgs) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    let value = manifest.args.clone();
    match manifest.command.as_str() {
        "gen-synth" => gen_synth::execute(&serde_json::from_value(value)?),
        "build-relations" => build_relations::execute(&serde_json::from_value(value)?),
        "train" => train::execute(&serde_json::from_value(value)?),
        "ablate" => ablate::execute(&serde_json::from_value(value)?),
        "eval" => eval::execute(&serde_json::from_value(value)?),
        "export-attention" => export_attention::execute(&serde_json::from_value(value)?),
        "gradcheck" => gradcheck::execute(&serde_json::from_value(value)?),
        other => Err(CliError::Data(format!(
            "manifest references unknown command {other:?}"
        ))),
    }
}
