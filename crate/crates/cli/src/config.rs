//! Run configuration: an optional JSON config file merged with command-line
//! flags, flags winning. Unknown keys in the file are rejected.

use cascadenet::cascade::{CascadeConfig, GatingPolicy};
use cascadenet::dataset::GeneratorConfig;
use cascadenet::scg::ScgConfig;
use cascadenet::Error;
use clap::ValueEnum;
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const DEFAULT_PCS: [usize; 6] = [1, 2, 3, 4, 6, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingArg {
    StopAtFirstRejection,
    TryAllDepths,
}

impl From<GatingArg> for GatingPolicy {
    fn from(g: GatingArg) -> Self {
        match g {
            GatingArg::StopAtFirstRejection => GatingPolicy::StopAtFirstRejection,
            GatingArg::TryAllDepths => GatingPolicy::TryAllDepths,
        }
    }
}

/// Optional JSON config file contents. Every field may be omitted; present
/// fields act as defaults under the command-line flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub generator: Option<GeneratorFile>,
    pub cascade: Option<CascadeFile>,
    pub pcs: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub n_models: Option<usize>,
    pub n_years: Option<usize>,
    pub linear_pattern_seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub nonlinear_amplitude: Option<f64>,
    pub noise_sd: Option<f64>,
    pub model_offset_sd: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeFile {
    pub max_nets: Option<usize>,
    pub hidden_width: Option<usize>,
    pub gating: Option<GatingArg>,
    pub restarts: Option<usize>,
    pub scg: Option<ScgFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScgFile {
    pub sigma0: Option<f64>,
    pub lambda_init: Option<f64>,
    pub max_iterations: Option<usize>,
    pub grad_tol: Option<f64>,
    pub obj_tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parameter(format!("config file {}: {e}", path.display())))
    }
}

/// Generator flags shared by `generate` and usable in `train` provenance.
#[derive(Debug, Clone, clap::Args)]
pub struct GeneratorFlags {
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub n_models: Option<usize>,
    #[arg(long)]
    pub n_years: Option<usize>,
    /// Seed for the spatial patterns.
    #[arg(long)]
    pub pattern_seed: Option<u64>,
    /// Seed for model offsets and pixel noise.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub nonlinear_amplitude: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub model_offset_sd: Option<f64>,
}

pub fn merge_generator(file: Option<&GeneratorFile>, flags: &GeneratorFlags) -> GeneratorConfig {
    let mut cfg = GeneratorConfig::default();
    if let Some(f) = file {
        apply(&mut cfg.height, f.height);
        apply(&mut cfg.width, f.width);
        apply(&mut cfg.n_models, f.n_models);
        apply(&mut cfg.n_years, f.n_years);
        apply(&mut cfg.linear_pattern_seed, f.linear_pattern_seed);
        apply(&mut cfg.noise_seed, f.noise_seed);
        apply(&mut cfg.nonlinear_amplitude, f.nonlinear_amplitude);
        apply(&mut cfg.noise_sd, f.noise_sd);
        apply(&mut cfg.model_offset_sd, f.model_offset_sd);
    }
    apply(&mut cfg.height, flags.height);
    apply(&mut cfg.width, flags.width);
    apply(&mut cfg.n_models, flags.n_models);
    apply(&mut cfg.n_years, flags.n_years);
    apply(&mut cfg.linear_pattern_seed, flags.pattern_seed);
    apply(&mut cfg.noise_seed, flags.noise_seed);
    apply(&mut cfg.nonlinear_amplitude, flags.nonlinear_amplitude);
    apply(&mut cfg.noise_sd, flags.noise_sd);
    apply(&mut cfg.model_offset_sd, flags.model_offset_sd);
    cfg
}

/// Cascade flags shared by `train`.
#[derive(Debug, Clone, clap::Args)]
pub struct CascadeFlags {
    #[arg(long)]
    pub max_nets: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long, value_enum)]
    pub gating: Option<GatingArg>,
    /// Seeded re-initializations per candidate net.
    #[arg(long)]
    pub restarts: Option<usize>,
}

pub fn merge_cascade(file: Option<&CascadeFile>, flags: &CascadeFlags, seed: u64) -> CascadeConfig {
    let mut cfg = CascadeConfig {
        seed,
        ..CascadeConfig::default()
    };
    if let Some(f) = file {
        apply(&mut cfg.max_nets, f.max_nets);
        apply(&mut cfg.hidden_width, f.hidden_width);
        if let Some(g) = f.gating {
            cfg.gating = g.into();
        }
        apply(&mut cfg.restarts, f.restarts);
        if let Some(s) = &f.scg {
            cfg.scg = merge_scg(s);
        }
    }
    apply(&mut cfg.max_nets, flags.max_nets);
    apply(&mut cfg.hidden_width, flags.hidden_width);
    if let Some(g) = flags.gating {
        cfg.gating = g.into();
    }
    apply(&mut cfg.restarts, flags.restarts);
    cfg
}

fn merge_scg(file: &ScgFile) -> ScgConfig {
    let mut cfg = ScgConfig::default();
    apply(&mut cfg.sigma0, file.sigma0);
    apply(&mut cfg.lambda_init, file.lambda_init);
    apply(&mut cfg.max_iterations, file.max_iterations);
    apply(&mut cfg.grad_tol, file.grad_tol);
    apply(&mut cfg.obj_tol, file.obj_tol);
    cfg
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses a `--pcs` list like `1,2,5,10`.
pub fn parse_pcs(raw: &str) -> Result<Vec<usize>, Error> {
    let values: Result<Vec<usize>, _> = raw.split(',').map(|p| p.trim().parse::<usize>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|&k| k >= 1) => Ok(v),
        _ => Err(Error::Parameter(format!(
            "--pcs must be a comma-separated list of positive integers, got `{raw}`"
        ))),
    }
}
