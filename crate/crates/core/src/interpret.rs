//! Back-projection of first-layer weights through the PCA basis: what
//! spatial pattern, per channel, drives a given unit.
//!
//! The map of a unit is `sum_c (w_c / sd_c) * component_c`, where `sd_c` is
//! the training standard deviation of score `c`. The PCA mean and the
//! per-sample mean removal are deliberately excluded: the map is a direction
//! of sensitivity in centered space, not an absolute field.

use crate::cascade::Cascade;
use crate::dataset::format_float;
use crate::error::{Error, Result};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Input-space sensitivity pattern of one first-layer unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    /// Temperature-channel grid, H*W row-major.
    pub temp: Vec<f64>,
    /// Precipitation-channel grid, H*W row-major.
    pub precip: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub net_index: usize,
    pub unit_index: usize,
}

/// Reconstructs the sensitivity map of `unit_index` in the first layer of
/// net `net_index` (0-based). For the linear net the single output unit is
/// the first layer.
pub fn unit_map(cascade: &Cascade, net_index: usize, unit_index: usize) -> Result<SensitivityMap> {
    let net = cascade.nets.get(net_index).ok_or_else(|| {
        Error::parameter(format!(
            "net index {net_index} out of range; cascade has {} nets",
            cascade.nets.len()
        ))
    })?;
    let weights = net.params.first_layer_weights(&net.spec, unit_index)?;

    // Fold the input standardization into the weights: the net saw scores
    // divided by sd, so sensitivity to the raw score is w / sd.
    let scaled: Vec<f64> = weights
        .iter()
        .zip(&cascade.score_standardization.sd)
        .map(|(w, sd)| w / sd)
        .collect();

    let flat = cascade.pca.combine_components(&scaled)?;
    let grid = cascade.height * cascade.width;
    let (temp, precip) = flat.split_at(grid);
    Ok(SensitivityMap {
        temp: temp.to_vec(),
        precip: precip.to_vec(),
        height: cascade.height,
        width: cascade.width,
        net_index,
        unit_index,
    })
}

/// Cosine similarity between two equal-length vectors; 0 when either is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

impl SensitivityMap {
    /// Both channels concatenated, temp first.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.temp.len() + self.precip.len());
        out.extend_from_slice(&self.temp);
        out.extend_from_slice(&self.precip);
        out
    }
}

/// Writes one grid CSV and one PPM heatmap per (net, first-layer unit) per
/// channel into `out_dir`; returns the created paths. File names are
/// 1-based: `net1_unit1_temp.csv` etc.
pub fn export_maps(cascade: &Cascade, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for (n, net) in cascade.nets.iter().enumerate() {
        for u in 0..net.spec.first_layer_units() {
            let map = unit_map(cascade, n, u)?;
            for (channel, grid) in [("temp", &map.temp), ("precip", &map.precip)] {
                let stem = format!("net{}_unit{}_{channel}", n + 1, u + 1);
                let csv_path = out_dir.join(format!("{stem}.csv"));
                write_grid_csv(&csv_path, grid, map.height, map.width)?;
                written.push(csv_path);
                let ppm_path = out_dir.join(format!("{stem}.ppm"));
                write_grid_ppm(&ppm_path, grid, map.height, map.width)?;
                written.push(ppm_path);
            }
        }
    }
    Ok(written)
}

/// H lines of W comma-separated values.
fn write_grid_csv(path: &Path, grid: &[f64], height: usize, width: usize) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    for r in 0..height {
        let row: Vec<String> = grid[r * width..(r + 1) * width]
            .iter()
            .map(|v| format_float(*v))
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a grid CSV written by `export_maps`; returns (height, width, values).
pub fn load_grid_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut values = Vec::new();
    let mut width = 0;
    let mut height = 0;
    for (i, line) in content.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("value `{f}` is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        if height == 0 {
            width = row.len();
        } else if row.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("row has {} values, expected {width}", row.len()),
            });
        }
        height += 1;
        values.extend(row);
    }
    Ok((height, width, values))
}

/// 256-step blue-white-red diverging palette: index 0 is saturated blue,
/// 127/128 are white, 255 is saturated red.
pub fn diverging_palette(index: usize) -> (u8, u8, u8) {
    debug_assert!(index < 256);
    if index <= 127 {
        let t = index as f64 / 127.0;
        let ramp = (255.0 * t).round() as u8;
        (ramp, ramp, 255)
    } else {
        let t = (index - 128) as f64 / 127.0;
        let ramp = (255.0 * (1.0 - t)).round() as u8;
        (255, ramp, ramp)
    }
}

/// Palette index for `v` on a symmetric scale of `[-limit, +limit]`.
/// A zero limit (all-zero map) pins everything to mid scale.
pub fn palette_index(v: f64, limit: f64) -> usize {
    if limit == 0.0 {
        return 128;
    }
    let t = (v + limit) / (2.0 * limit);
    ((t * 255.0).round() as isize).clamp(0, 255) as usize
}

/// Plain (P3) PPM heatmap with the diverging palette on a symmetric scale
/// centered at zero with limits +-max|grid|.
fn write_grid_ppm(path: &Path, grid: &[f64], height: usize, width: usize) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let limit = grid.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    writeln!(w, "P3").map_err(io_err)?;
    writeln!(w, "{width} {height}").map_err(io_err)?;
    writeln!(w, "255").map_err(io_err)?;
    for v in grid {
        let (r, g, b) = diverging_palette(palette_index(*v, limit));
        writeln!(w, "{r} {g} {b}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
