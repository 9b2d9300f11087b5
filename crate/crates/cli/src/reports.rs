//! CSV report emission for `train` and `evaluate`: sweep summaries,
//! per-net and per-year error breakdowns, and raw predictions. Every file
//! starts with provenance comment lines.

use cascadenet::cascade::{Cascade, SweepRecord};
use cascadenet::dataset::{format_float, Dataset, Partition};
use cascadenet::{Error, Result};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

fn open(path: &Path, provenance: &[String]) -> Result<BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    for line in provenance {
        writeln!(w, "# {line}").map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(w)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// RMSE and kept-net count per swept PC count.
pub fn write_rmse_vs_pcs(
    path: &Path,
    records: &[SweepRecord],
    provenance: &[String],
) -> Result<()> {
    let mut w = open(path, provenance)?;
    let err = io_err(path);
    writeln!(w, "k,train_rmse,val_rmse,test_rmse,nets_kept").map_err(&err)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.k,
            format_float(r.train_rmse),
            format_float(r.val_rmse),
            format_float(r.test_rmse),
            r.nets_kept
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// Cumulative RMSE after each kept net, per partition.
pub fn write_per_net_rmse(
    path: &Path,
    cascade: &Cascade,
    ds: &Dataset,
    partition: &Partition,
    provenance: &[String],
) -> Result<()> {
    let mut w = open(path, provenance)?;
    let err = io_err(path);
    writeln!(w, "net,depth,train_rmse,val_rmse,test_rmse").map_err(&err)?;
    for m in 1..=cascade.nets.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            m,
            cascade.nets[m - 1].spec.hidden_layers,
            format_float(cascade.rmse_truncated(ds, &partition.train_idx, m)?),
            format_float(cascade.rmse_truncated(ds, &partition.val_idx, m)?),
            format_float(cascade.rmse_truncated(ds, &partition.test_idx, m)?),
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

fn partition_labels(n: usize, partition: &Partition) -> Vec<&'static str> {
    let mut labels = vec!["test"; n];
    for &i in &partition.train_idx {
        labels[i] = "train";
    }
    for &i in &partition.val_idx {
        labels[i] = "val";
    }
    labels
}

/// One row per sample: actual year, full-cascade prediction, partition.
pub fn write_pred_vs_actual(
    path: &Path,
    cascade: &Cascade,
    ds: &Dataset,
    partition: &Partition,
    provenance: &[String],
) -> Result<()> {
    let labels = partition_labels(ds.samples.len(), partition);
    let mut w = open(path, provenance)?;
    let err = io_err(path);
    writeln!(w, "year,predicted,partition").map_err(&err)?;
    for (i, s) in ds.samples.iter().enumerate() {
        let pred = cascade.predict(&ds.flatten(i))?;
        writeln!(
            w,
            "{},{},{}",
            format_float(s.year),
            format_float(pred),
            labels[i]
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// Per-year RMSE of the linear-only model (first net) and the full cascade.
/// All samples of one year share one partition, so each row carries a single
/// partition label.
pub fn write_rmse_per_year(
    path: &Path,
    cascade: &Cascade,
    ds: &Dataset,
    partition: &Partition,
    provenance: &[String],
) -> Result<()> {
    let labels = partition_labels(ds.samples.len(), partition);
    let mut rows: Vec<(f64, &'static str, usize, f64, f64)> = Vec::new();
    for year in ds.distinct_years() {
        let idx: Vec<usize> = ds
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.year == year)
            .map(|(i, _)| i)
            .collect();
        let label = labels[idx[0]];
        let linear = cascade.rmse_truncated(ds, &idx, 1)?;
        let full = cascade.rmse(ds, &idx)?;
        rows.push((year, label, idx.len(), linear, full));
    }
    let mut w = open(path, provenance)?;
    let err = io_err(path);
    writeln!(w, "year,partition,n_samples,rmse_linear,rmse_cascade").map_err(&err)?;
    for (year, label, n, linear, full) in rows {
        writeln!(
            w,
            "{},{label},{n},{},{}",
            format_float(year),
            format_float(linear),
            format_float(full)
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}
