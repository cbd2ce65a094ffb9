//! Seeded synthetic cohorts with planted effects.
//!
//! Every analyte is a monotone transform of a standard-normal latent
//! `L = ρ_d·D + ρ_s·S + √(1 − ρ_d² − ρ_s²)·ε`, where `D` is the age z-score,
//! `S` a per-patient severity factor shared across analytes and `ε` visit
//! noise. Planted baseline AUCs fix `ρ_d`; planted DLS AUCs fix the binormal
//! separation of the score latent given the label the library itself derives.

mod config;
mod generate;

use std::path::{Path, PathBuf};

use crate::cohort::write_cohort;
use crate::error::{Error, Result};

pub use config::{AnalyteConfig, GapConfig, Marginal, PlantedEffect, Share, SynthConfig};
pub use generate::{
    binormal_delta, calibrate_demographic_corr, generate, generate_with, threshold_auc, PlantedTruth,
    ResolvedAnalyte, SynthManifest, SynthOutput,
};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the cohort CSVs plus `manifest.json`.
pub fn write_output(output: &SynthOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = write_cohort(&output.cohort, dir)?;
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&output.manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    paths.push(path);
    Ok(paths)
}
