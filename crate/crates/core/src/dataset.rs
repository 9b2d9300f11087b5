//! Synthetic climate-like grids, per-sample mean removal, year-grouped
//! partitioning, and a plain CSV interchange format.
//!
//! The generator builds two-channel samples whose target is the (normalized)
//! year: each channel is a smooth linear-trend pattern times the year plus a
//! second pattern times a late-onset ramp, with optional per-model offsets
//! and pixel noise. The ramp is zero for the first half of the year range, so
//! a linear model fits early years well and degrades late, which is exactly
//! the asymmetry the cascade is meant to pick up.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

/// One two-channel grid with its target year and originating model label.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSample {
    /// Temperature channel, H*W row-major.
    pub temp: Vec<f64>,
    /// Precipitation channel, H*W row-major.
    pub precip: Vec<f64>,
    /// Regression target: the normalized year in [0, 1].
    pub year: f64,
    pub source_model: u32,
}

/// A full collection of samples sharing one grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub samples: Vec<GridSample>,
}

impl Dataset {
    pub fn grid_len(&self) -> usize {
        self.height * self.width
    }

    /// Flattened input dimension D = 2 * H * W.
    pub fn input_dim(&self) -> usize {
        2 * self.grid_len()
    }

    /// Sample `i` flattened as temp row-major followed by precip row-major.
    pub fn flatten(&self, i: usize) -> Vec<f64> {
        let s = &self.samples[i];
        let mut out = Vec::with_capacity(self.input_dim());
        out.extend_from_slice(&s.temp);
        out.extend_from_slice(&s.precip);
        out
    }

    /// All samples flattened into a row-per-sample matrix.
    pub fn to_matrix(&self) -> Matrix {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(self.samples.len() * d);
        for s in &self.samples {
            data.extend_from_slice(&s.temp);
            data.extend_from_slice(&s.precip);
        }
        Matrix::from_rows(self.samples.len(), d, data).expect("samples are finite")
    }

    /// Distinct year values in ascending order.
    pub fn distinct_years(&self) -> Vec<f64> {
        let mut years: Vec<f64> = self.samples.iter().map(|s| s.year).collect();
        years.sort_by(f64::total_cmp);
        years.dedup();
        years
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.year).collect()
    }
}

/// Disjoint train/validation/test index sets covering the whole dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Settings for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub height: usize,
    pub width: usize,
    pub n_models: usize,
    pub n_years: usize,
    /// Seed for the spatial patterns (linear trends and ramp patterns).
    pub linear_pattern_seed: u64,
    /// Seed for per-model offsets and pixel noise.
    pub noise_seed: u64,
    /// Scale of the late-onset ramp patterns; 0 makes the data exactly linear.
    pub nonlinear_amplitude: f64,
    /// Standard deviation of i.i.d. pixel noise.
    pub noise_sd: f64,
    /// Standard deviation of the per-model, per-channel constant offset.
    pub model_offset_sd: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            height: 24,
            width: 48,
            n_models: 5,
            n_years: 100,
            linear_pattern_seed: 7,
            noise_seed: 11,
            nonlinear_amplitude: 1.0,
            noise_sd: 0.02,
            model_offset_sd: 0.05,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 {
            return Err(Error::parameter(format!(
                "height must be at least 4, got {}",
                self.height
            )));
        }
        if self.width < 4 {
            return Err(Error::parameter(format!(
                "width must be at least 4, got {}",
                self.width
            )));
        }
        if self.n_models < 1 {
            return Err(Error::parameter("n_models must be at least 1"));
        }
        if self.n_years < 2 {
            return Err(Error::parameter("n_years must be at least 2"));
        }
        if self.nonlinear_amplitude < 0.0 {
            return Err(Error::parameter(format!(
                "nonlinear_amplitude must be nonnegative, got {}",
                self.nonlinear_amplitude
            )));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::parameter(format!(
                "noise_sd must be nonnegative, got {}",
                self.noise_sd
            )));
        }
        if self.model_offset_sd < 0.0 {
            return Err(Error::parameter(format!(
                "model_offset_sd must be nonnegative, got {}",
                self.model_offset_sd
            )));
        }
        Ok(())
    }

    /// Number of independent input-space directions carrying target signal.
    /// The ramp rides along the trend direction (see `true_patterns`), so the
    /// centered signal always spans a single direction per channel pair.
    pub fn signal_rank(&self) -> usize {
        1
    }
}

/// The spatial patterns behind a generated dataset; ground truth for
/// sensitivity-map checks.
#[derive(Debug, Clone)]
pub struct TruePatterns {
    /// Linear-trend pattern of the temperature channel.
    pub temp_linear: Vec<f64>,
    /// Ramp pattern of the temperature channel, amplitude included.
    pub temp_ramp: Vec<f64>,
    pub precip_linear: Vec<f64>,
    pub precip_ramp: Vec<f64>,
}

impl TruePatterns {
    /// The concatenated linear pattern with each channel centered --- the
    /// direction a trained linear net should be sensitive to after per-sample
    /// mean removal.
    pub fn centered_linear_pattern(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.temp_linear.len() + self.precip_linear.len());
        out.extend(centered(&self.temp_linear));
        out.extend(centered(&self.precip_linear));
        out
    }
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Late-onset ramp: zero through the first half of the normalized year range,
/// quadratic after.
pub fn late_ramp(t: f64) -> f64 {
    let s = (t - 0.5).max(0.0);
    s * s
}

/// Builds the four spatial patterns for `cfg` without generating samples.
///
/// The ramp patterns are the trend patterns scaled by `nonlinear_amplitude`,
/// with one shared coefficient for both channels. That makes each pixel carry
/// `pattern * (t + amplitude * ramp(t))`: the year is encoded through an
/// invertible but curved time course, so no linear readout of the inputs can
/// recover it exactly and late years stay systematically hard for a linear
/// model. Any ramp component along an independent spatial direction would
/// instead let a linear readout cancel the ramp term outright.
pub fn true_patterns(cfg: &GeneratorConfig) -> Result<TruePatterns> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.linear_pattern_seed);

    // Temperature patterns live in the upper half of the grid, precipitation
    // patterns in the lower half, so the two channels respond to distinct
    // regions.
    let temp_rows = 0..h / 2;
    let precip_rows = h / 2..h;

    let mut temp_linear = smooth_field(h, w, temp_rows, &mut rng);
    let precip_linear = smooth_field(h, w, precip_rows, &mut rng);

    // Guarantee a non-empty positive region for the temperature trend.
    if !temp_linear.iter().any(|&v| v > 0.0) {
        for v in temp_linear.iter_mut() {
            *v = -*v;
        }
    }

    let scale =
        |trend: &[f64]| -> Vec<f64> { trend.iter().map(|a| cfg.nonlinear_amplitude * a).collect() };
    let mut temp_ramp = scale(&temp_linear);
    let precip_ramp = scale(&precip_linear);

    // Center the temperature ramp over the trend's positive region so the
    // regional mean depends on the year only through the strictly increasing
    // linear term.
    let positive: Vec<usize> = temp_linear
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();
    let ramp_mean = positive.iter().map(|&i| temp_ramp[i]).sum::<f64>() / positive.len() as f64;
    for v in temp_ramp.iter_mut() {
        *v -= ramp_mean;
    }

    Ok(TruePatterns {
        temp_linear,
        temp_ramp,
        precip_linear,
        precip_ramp,
    })
}

/// Sum of a few random Gaussian bumps with centers in `rows`, normalized to
/// unit root-mean-square over the grid.
fn smooth_field(
    h: usize,
    w: usize,
    rows: std::ops::Range<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    const BUMPS: usize = 6;
    let min_dim = h.min(w) as f64;
    let mut field = vec![0.0; h * w];
    for _ in 0..BUMPS {
        let cr = rng.gen_range(rows.start as f64..rows.end as f64);
        let cc = rng.gen_range(0.0..w as f64);
        let sigma = rng.gen_range(min_dim / 10.0..min_dim / 4.0);
        let amp = rng.gen_range(-1.0..1.0f64);
        for r in 0..h {
            for c in 0..w {
                let dr = r as f64 - cr;
                let dc = c as f64 - cc;
                field[r * w + c] += amp * (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let rms = (field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64).sqrt();
    if rms > 1e-12 {
        for v in field.iter_mut() {
            *v /= rms;
        }
    }
    field
}

/// Generates `n_models * n_years` samples. Year order is outermost so all
/// models of a year are adjacent.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    let patterns = true_patterns(cfg)?;
    let grid = cfg.height * cfg.width;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);

    let mut temp_offsets = Vec::with_capacity(cfg.n_models);
    let mut precip_offsets = Vec::with_capacity(cfg.n_models);
    for _ in 0..cfg.n_models {
        let zt: f64 = noise_rng.sample(StandardNormal);
        let zp: f64 = noise_rng.sample(StandardNormal);
        temp_offsets.push(zt * cfg.model_offset_sd);
        precip_offsets.push(zp * cfg.model_offset_sd);
    }

    let mut samples = Vec::with_capacity(cfg.n_models * cfg.n_years);
    for year_idx in 0..cfg.n_years {
        let t = year_idx as f64 / (cfg.n_years - 1) as f64;
        let ramp = late_ramp(t);
        for model in 0..cfg.n_models {
            let mut temp = Vec::with_capacity(grid);
            for p in 0..grid {
                let z: f64 = noise_rng.sample(StandardNormal);
                temp.push(
                    patterns.temp_linear[p] * t
                        + patterns.temp_ramp[p] * ramp
                        + temp_offsets[model]
                        + z * cfg.noise_sd,
                );
            }
            let mut precip = Vec::with_capacity(grid);
            for p in 0..grid {
                let z: f64 = noise_rng.sample(StandardNormal);
                precip.push(
                    patterns.precip_linear[p] * t
                        + patterns.precip_ramp[p] * ramp
                        + precip_offsets[model]
                        + z * cfg.noise_sd,
                );
            }
            samples.push(GridSample {
                temp,
                precip,
                year: t,
                source_model: model as u32,
            });
        }
    }

    Ok(Dataset {
        height: cfg.height,
        width: cfg.width,
        samples,
    })
}

/// Subtracts each sample's per-channel mean in place. Idempotent.
pub fn remove_sample_means(ds: &mut Dataset) {
    for s in &mut ds.samples {
        subtract_mean(&mut s.temp);
        subtract_mean(&mut s.precip);
    }
}

fn subtract_mean(channel: &mut [f64]) {
    let mean = channel.iter().sum::<f64>() / channel.len() as f64;
    for v in channel.iter_mut() {
        *v -= mean;
    }
}

/// Removes the per-channel means of a single flattened sample (temp first,
/// precip second); the prediction-side mirror of `remove_sample_means`.
pub fn remove_channel_means_flat(sample: &mut [f64]) {
    let half = sample.len() / 2;
    let (temp, precip) = sample.split_at_mut(half);
    subtract_mean(temp);
    subtract_mean(precip);
}

/// Assigns whole years to train/validation/test so no year is split across
/// partitions. Years are shuffled by `seed` and dealt out by fraction.
pub fn partition_by_year(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Partition> {
    let (ft, fv, fe) = fractions;
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::parameter(format!(
            "partition fractions must sum to 1, got {}",
            ft + fv + fe
        )));
    }
    if ft <= 0.0 || fv <= 0.0 || fe <= 0.0 {
        return Err(Error::parameter("partition fractions must be positive"));
    }
    let mut years = ds.distinct_years();
    let n = years.len();
    if n < 3 {
        return Err(Error::parameter(format!(
            "need at least 3 distinct years to partition, got {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    years.shuffle(&mut rng);

    let mut n_train = ((ft * n as f64).round() as usize).max(1);
    let mut n_val = ((fv * n as f64).round() as usize).max(1);
    while n_train + n_val > n - 1 {
        if n_train >= n_val {
            n_train -= 1;
        } else {
            n_val -= 1;
        }
    }

    let train_years = &years[..n_train];
    let val_years = &years[n_train..n_train + n_val];

    let in_set = |set: &[f64], y: f64| set.contains(&y);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        if in_set(train_years, s.year) {
            train_idx.push(i);
        } else if in_set(val_years, s.year) {
            val_idx.push(i);
        } else {
            test_idx.push(i);
        }
    }
    Ok(Partition {
        train_idx,
        val_idx,
        test_idx,
    })
}

/// Formats a float with 9 significant digits, the dataset text precision.
pub fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes the dataset CSV. Lines in `comments` are emitted first, each
/// prefixed with `# `.
pub fn save_csv(ds: &Dataset, path: &Path, comments: &[String]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w, comments).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_csv<W: Write>(ds: &Dataset, w: &mut W, comments: &[String]) -> std::io::Result<()> {
    for line in comments {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{},{},{}", ds.height, ds.width, ds.samples.len())?;
    let mut line = String::new();
    for s in &ds.samples {
        line.clear();
        line.push_str(&format_float(s.year));
        line.push(',');
        line.push_str(&s.source_model.to_string());
        for v in s.temp.iter().chain(&s.precip) {
            line.push(',');
            line.push_str(&format_float(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Reads a dataset CSV written by `save_csv`. `#` lines are comments; parse
/// failures report the 1-based line number.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_csv(&content)
}

fn parse_csv(content: &str) -> Result<Dataset> {
    let mut data_lines = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = data_lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header line".to_string(),
    })?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 3 {
        return Err(Error::Parse {
            line: header_line,
            message: format!("header must be `height,width,n_samples`, got `{header}`"),
        });
    }
    let parse_dim = |s: &str, name: &str| -> Result<usize> {
        s.trim().parse::<usize>().map_err(|_| Error::Parse {
            line: header_line,
            message: format!("{name} `{s}` is not a nonnegative integer"),
        })
    };
    let height = parse_dim(dims[0], "height")?;
    let width = parse_dim(dims[1], "width")?;
    let n_samples = parse_dim(dims[2], "n_samples")?;
    if height == 0 || width == 0 {
        return Err(Error::Parse {
            line: header_line,
            message: "grid dimensions must be positive".to_string(),
        });
    }

    let grid = height * width;
    let expected_fields = 2 + 2 * grid;
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (line_no, line) = data_lines.next().ok_or_else(|| Error::Parse {
            line: content.lines().count(),
            message: format!("expected {n_samples} sample lines, found {}", samples.len()),
        })?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_fields {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {expected_fields} fields (year, source_model, {} values), got {}",
                    2 * grid,
                    fields.len()
                ),
            });
        }
        let year: f64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("year `{}` is not a number", fields[0]),
        })?;
        let source_model: u32 = fields[1].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("source_model `{}` is not an integer", fields[1]),
        })?;
        let mut values = Vec::with_capacity(2 * grid);
        for f in &fields[2..] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("value `{f}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("value `{f}` is not finite"),
                });
            }
            values.push(v);
        }
        let precip = values.split_off(grid);
        samples.push(GridSample {
            temp: values,
            precip,
            year,
            source_model,
        });
    }
    if let Some((line_no, _)) = data_lines.next() {
        return Err(Error::Parse {
            line: line_no,
            message: format!("trailing data beyond the {n_samples} declared samples"),
        });
    }
    Ok(Dataset {
        height,
        width,
        samples,
    })
}
