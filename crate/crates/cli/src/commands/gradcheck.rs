use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rkt_core::model::{full_model_gradcheck, RktConfig};

use crate::args::GradcheckArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;
use crate::pipeline::manifest_path_for_file;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub d: usize,
    pub l: usize,
    pub seed: u64,
    pub coords: usize,
    pub out: String,
}

#[derive(Serialize)]
struct GradcheckReport {
    d: usize,
    l: usize,
    seed: u64,
    coords: usize,
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
}

pub fn resolve(args: GradcheckArgs) -> Result<Resolved> {
    Ok(Resolved {
        d: args.d,
        l: args.l,
        seed: args.seed,
        coords: args.coords,
        out: args.out.display().to_string(),
    })
}

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mb = ManifestBuilder::new("gradcheck", resolved, resolved.seed);
    let config = RktConfig {
        d: resolved.d,
        l: resolved.l,
        d_w: 5,
        ..RktConfig::default()
    };
    let err = full_model_gradcheck(&config, resolved.seed, resolved.coords)?;
    let passed = err <= TOLERANCE;
    println!("max relative error: {err:.3e} (tolerance {TOLERANCE:.0e})");

    let out = PathBuf::from(&resolved.out);
    let report = GradcheckReport {
        d: resolved.d,
        l: resolved.l,
        seed: resolved.seed,
        coords: resolved.coords,
        max_rel_error: err,
        tolerance: TOLERANCE,
        passed,
    };
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    mb.finish(std::slice::from_ref(&out), &manifest_path_for_file(&out))?;
    if !passed {
        return Err(CliError::Numeric(format!(
            "gradient check failed: {err:.3e} > {TOLERANCE:.0e}"
        )));
    }
    Ok(())
}
