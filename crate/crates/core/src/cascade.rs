//! Stagewise cascade training: nets of increasing depth are fitted to
//! residual targets, and a candidate joins the ensemble only if it strictly
//! lowers validation RMSE (by more than a float-noise guard; a tie is a
//! rejection). Prediction is the sum of all kept nets' outputs.
//!
//! Earlier nets are frozen once recruited; a candidate is trained purely on
//! what the existing ensemble leaves unexplained. PC scores and targets are
//! standardized with training-partition statistics before the optimizer sees
//! them, and predictions are mapped back to target units at the end.

use crate::dataset::{remove_channel_means_flat, remove_sample_means, Dataset, Partition};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{self, MlpParams, MlpSpec};
use crate::pca::{self, PcaModel};
use crate::scg::{self, ScgConfig};
use rayon::prelude::*;

/// Validation improvements smaller than this fraction of the target scale
/// count as ties, and a tie is a rejection. The scale matches the trainer's
/// own termination resolution (grad_tol/obj_tol), below which an
/// "improvement" is convergence noise; real improvements sit orders of
/// magnitude above this.
const KEEP_TIE_TOL: f64 = 1e-7;

/// What happens after a candidate net is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatingPolicy {
    /// Stop recruiting at the first rejected candidate.
    StopAtFirstRejection,
    /// Keep probing deeper candidates up to `max_nets`.
    TryAllDepths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub max_nets: usize,
    pub hidden_width: usize,
    pub gating: GatingPolicy,
    pub scg: ScgConfig,
    pub seed: u64,
    /// Seeded re-initializations per candidate; the best training objective
    /// wins. 1 means a single attempt.
    pub restarts: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            max_nets: 8,
            hidden_width: 2,
            gating: GatingPolicy::StopAtFirstRejection,
            scg: ScgConfig::default(),
            seed: 0,
            restarts: 1,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_nets < 1 {
            return Err(Error::parameter("max_nets must be at least 1"));
        }
        if self.hidden_width < 1 {
            return Err(Error::parameter("hidden_width must be at least 1"));
        }
        if self.restarts < 1 {
            return Err(Error::parameter("restarts must be at least 1"));
        }
        self.scg.validate()
    }
}

/// Per-score-coordinate affine normalization fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation; degenerate coordinates get 1.0 so the
    /// transform stays invertible.
    pub sd: Vec<f64>,
}

impl Standardization {
    fn fit(scores: &Matrix) -> Standardization {
        let (n, k) = (scores.rows(), scores.cols());
        let mut mean = vec![0.0; k];
        for r in 0..n {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += scores.get(r, c);
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut sd = vec![0.0; k];
        for r in 0..n {
            for (c, s) in sd.iter_mut().enumerate() {
                let dev = scores.get(r, c) - mean[c];
                *s += dev * dev;
            }
        }
        for s in sd.iter_mut() {
            *s = (*s / n as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardization { mean, sd }
    }

    fn apply_matrix(&self, scores: &Matrix) -> Matrix {
        let (n, k) = (scores.rows(), scores.cols());
        let mut out = Matrix::zeros(n, k);
        for r in 0..n {
            for c in 0..k {
                out.set(r, c, (scores.get(r, c) - self.mean[c]) / self.sd[c]);
            }
        }
        out
    }

    fn apply(&self, scores: &mut [f64]) {
        for (c, s) in scores.iter_mut().enumerate() {
            *s = (*s - self.mean[c]) / self.sd[c];
        }
    }
}

/// One recruitment decision: the candidate's depth and the cascade RMSE with
/// the candidate included, whether or not it was kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub depth: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub kept: bool,
}

/// A recruited net.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

/// A trained cascade: PCA front end, standardization constants, the ordered
/// kept nets, and the full recruitment history.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    /// Grid geometry of the samples the cascade was trained on.
    pub height: usize,
    pub width: usize,
    pub pca: PcaModel,
    /// Number of PC scores actually fed to the nets.
    pub k: usize,
    pub score_standardization: Standardization,
    pub target_mean: f64,
    pub target_sd: f64,
    pub nets: Vec<TrainedNet>,
    pub history: Vec<CandidateRecord>,
}

impl Cascade {
    /// Prediction from the full ensemble for one raw flattened sample
    /// (temp channel then precip channel).
    pub fn predict(&self, sample: &[f64]) -> Result<f64> {
        self.predict_truncated(sample, self.nets.len())
    }

    /// Prediction using only the first `m` kept nets.
    pub fn predict_truncated(&self, sample: &[f64], m: usize) -> Result<f64> {
        if m > self.nets.len() {
            return Err(Error::parameter(format!(
                "cascade has {} nets, cannot use {m}",
                self.nets.len()
            )));
        }
        let scores = self.standardized_scores(sample)?;
        let mut sum = 0.0;
        for net in &self.nets[..m] {
            sum += network::forward(&net.spec, &net.params, &scores)?;
        }
        Ok(self.target_mean + self.target_sd * sum)
    }

    /// Standardized PC scores of one raw flattened sample.
    pub fn standardized_scores(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != self.pca.input_dim() {
            return Err(Error::shape(format!(
                "sample has length {}, cascade expects {}",
                sample.len(),
                self.pca.input_dim()
            )));
        }
        let mut x = sample.to_vec();
        remove_channel_means_flat(&mut x);
        let mut scores = self.pca.transform(&x, self.k)?;
        self.score_standardization.apply(&mut scores);
        Ok(scores)
    }

    /// Full-ensemble predictions for the indexed samples of `ds`.
    pub fn predict_indexed(&self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        idx.iter().map(|&i| self.predict(&ds.flatten(i))).collect()
    }

    /// RMSE over the indexed samples using the first `m` nets.
    pub fn rmse_truncated(&self, ds: &Dataset, idx: &[usize], m: usize) -> Result<f64> {
        let mut acc = 0.0;
        for &i in idx {
            let pred = self.predict_truncated(&ds.flatten(i), m)?;
            let err = pred - ds.samples[i].year;
            acc += err * err;
        }
        Ok((acc / idx.len() as f64).sqrt())
    }

    /// RMSE of the full ensemble over the indexed samples.
    pub fn rmse(&self, ds: &Dataset, idx: &[usize]) -> Result<f64> {
        self.rmse_truncated(ds, idx, self.nets.len())
    }
}

/// Root mean squared error between two equal-length slices.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    let acc: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    (acc / predictions.len() as f64).sqrt()
}

/// Residual target for net `j` (1-based): the original target minus the
/// summed outputs of nets 1..j-1.
pub fn residual_targets(targets: &[f64], net_outputs: &[Vec<f64>], j: usize) -> Result<Vec<f64>> {
    if j < 1 {
        return Err(Error::parameter("net index j is 1-based"));
    }
    if net_outputs.len() < j - 1 {
        return Err(Error::shape(format!(
            "need outputs of nets 1..{} but only {} were provided",
            j - 1,
            net_outputs.len()
        )));
    }
    for (idx, out) in net_outputs[..j - 1].iter().enumerate() {
        if out.len() != targets.len() {
            return Err(Error::shape(format!(
                "output of net {} has length {}, expected {}",
                idx + 1,
                out.len(),
                targets.len()
            )));
        }
    }
    let mut residual = targets.to_vec();
    for out in &net_outputs[..j - 1] {
        for (r, o) in residual.iter_mut().zip(out) {
            *r -= o;
        }
    }
    Ok(residual)
}

/// Trains a cascade at `k` principal components, fitting PCA on the training
/// partition first.
pub fn train(
    ds: &Dataset,
    partition: &Partition,
    k: usize,
    cfg: &CascadeConfig,
) -> Result<Cascade> {
    cfg.validate()?;
    check_partition(ds, partition)?;
    let mut prepared = ds.clone();
    remove_sample_means(&mut prepared);
    let train_matrix = matrix_of(&prepared, &partition.train_idx);
    let pca_model = pca::fit(&train_matrix, k)?;
    train_with_pca(&prepared, partition, pca_model, k, cfg)
}

/// Trains a cascade against an already fitted PCA model. `ds` must hold the
/// same samples the PCA mean/basis refer to; sample means are (re)moved here,
/// which is idempotent.
pub fn train_with_pca(
    ds: &Dataset,
    partition: &Partition,
    pca_model: PcaModel,
    k: usize,
    cfg: &CascadeConfig,
) -> Result<Cascade> {
    cfg.validate()?;
    check_partition(ds, partition)?;
    if k < 1 || k > pca_model.k_max() {
        return Err(Error::parameter(format!(
            "k = {k} outside 1..={} of the fitted PCA",
            pca_model.k_max()
        )));
    }

    let mut prepared = ds.clone();
    remove_sample_means(&mut prepared);

    let scores_train = score_matrix(&pca_model, &prepared, &partition.train_idx, k)?;
    let scores_val = score_matrix(&pca_model, &prepared, &partition.val_idx, k)?;

    let standardization = Standardization::fit(&scores_train);
    let x_train = standardization.apply_matrix(&scores_train);
    let x_val = standardization.apply_matrix(&scores_val);

    let t_train: Vec<f64> = partition
        .train_idx
        .iter()
        .map(|&i| prepared.samples[i].year)
        .collect();
    let t_val: Vec<f64> = partition
        .val_idx
        .iter()
        .map(|&i| prepared.samples[i].year)
        .collect();

    let target_mean = t_train.iter().sum::<f64>() / t_train.len() as f64;
    let target_sd = {
        let var = t_train
            .iter()
            .map(|t| (t - target_mean) * (t - target_mean))
            .sum::<f64>()
            / t_train.len() as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            1.0
        } else {
            sd
        }
    };
    let t_train_std: Vec<f64> = t_train
        .iter()
        .map(|t| (t - target_mean) / target_sd)
        .collect();

    let mut nets: Vec<TrainedNet> = Vec::new();
    let mut history: Vec<CandidateRecord> = Vec::new();
    let mut train_outputs: Vec<Vec<f64>> = Vec::new();
    let mut val_outputs: Vec<Vec<f64>> = Vec::new();
    let mut best_val_rmse = f64::INFINITY;

    for j in 1..=cfg.max_nets {
        let depth = j - 1;
        let spec = MlpSpec::new(k, depth, cfg.hidden_width)?;
        let residual = residual_targets(&t_train_std, &train_outputs, nets.len() + 1)?;

        let mut best: Option<scg::ScgResult> = None;
        for restart in 0..cfg.restarts {
            let init = network::init_params(&spec, net_seed(cfg.seed, j, restart));
            // Shapes are fixed by construction; surface any mismatch eagerly.
            network::sse_and_gradient(&spec, &init, &x_train, &residual).map_err(|e| {
                Error::Training {
                    net: j,
                    source: Box::new(e),
                }
            })?;
            let oracle = |w: &[f64]| {
                let params = MlpParams { flat: w.to_vec() };
                network::sse_and_gradient(&spec, &params, &x_train, &residual)
                    .expect("shapes validated before optimization")
            };
            let result =
                scg::minimize(oracle, &init.flat, &cfg.scg).map_err(|e| Error::Training {
                    net: j,
                    source: Box::new(e),
                })?;
            if best
                .as_ref()
                .is_none_or(|b| result.objective < b.objective)
            {
                best = Some(result);
            }
        }
        let params = MlpParams {
            flat: best.expect("at least one restart").params,
        };

        let cand_train = network::forward_batch(&spec, &params, &x_train)?;
        let cand_val = network::forward_batch(&spec, &params, &x_val)?;

        let train_rmse = cascade_rmse(
            &train_outputs,
            &cand_train,
            &t_train,
            target_mean,
            target_sd,
        );
        let val_rmse = cascade_rmse(&val_outputs, &cand_val, &t_val, target_mean, target_sd);

        let kept = val_rmse < best_val_rmse - KEEP_TIE_TOL * target_sd;
        history.push(CandidateRecord {
            depth,
            train_rmse,
            val_rmse,
            kept,
        });

        if kept {
            best_val_rmse = val_rmse;
            nets.push(TrainedNet { spec, params });
            train_outputs.push(cand_train);
            val_outputs.push(cand_val);
        } else if cfg.gating == GatingPolicy::StopAtFirstRejection {
            break;
        }
    }

    Ok(Cascade {
        height: ds.height,
        width: ds.width,
        pca: pca_model,
        k,
        score_standardization: standardization,
        target_mean,
        target_sd,
        nets,
        history,
    })
}

/// One row of a PC sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub k: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub test_rmse: f64,
    pub nets_kept: usize,
}

/// Result of sweeping the PC count: one record per k plus the winning
/// cascade (lowest validation RMSE, ties to the smallest k).
#[derive(Debug)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub best_k: usize,
    pub best_cascade: Cascade,
}

/// Trains one cascade per entry of `k_values`. PCA is fitted once at the
/// largest k and truncated, which is equivalent for an exact eigensolver.
/// Per-k runs are independent and may execute in parallel; results do not
/// depend on the schedule.
pub fn sweep_pcs(
    ds: &Dataset,
    partition: &Partition,
    k_values: &[usize],
    cfg: &CascadeConfig,
) -> Result<SweepResult> {
    cfg.validate()?;
    check_partition(ds, partition)?;
    if k_values.is_empty() {
        return Err(Error::parameter("k_values must not be empty"));
    }
    let k_max = *k_values.iter().max().expect("non-empty");
    let k_min = *k_values.iter().min().expect("non-empty");
    let fit_limit = (partition.train_idx.len() - 1).min(ds.input_dim());
    if k_min < 1 || k_max > fit_limit {
        return Err(Error::parameter(format!(
            "swept k values must lie in 1..={fit_limit} for {} training samples \
             of dimension {}, got {k_min}..={k_max}",
            partition.train_idx.len(),
            ds.input_dim()
        )));
    }

    let mut prepared = ds.clone();
    remove_sample_means(&mut prepared);
    let train_matrix = matrix_of(&prepared, &partition.train_idx);
    let pca_full = pca::fit(&train_matrix, k_max)?;

    let runs: Vec<(SweepRecord, Cascade)> = k_values
        .par_iter()
        .map(|&k| -> Result<(SweepRecord, Cascade)> {
            let annotate = |e: Error| Error::Sweep {
                k,
                source: Box::new(e),
            };
            let pca_k = pca_full.truncated(k).map_err(annotate)?;
            let cascade = train_with_pca(&prepared, partition, pca_k, k, cfg).map_err(annotate)?;
            let record = SweepRecord {
                k,
                train_rmse: cascade
                    .rmse(&prepared, &partition.train_idx)
                    .map_err(annotate)?,
                val_rmse: cascade
                    .rmse(&prepared, &partition.val_idx)
                    .map_err(annotate)?,
                test_rmse: cascade
                    .rmse(&prepared, &partition.test_idx)
                    .map_err(annotate)?,
                nets_kept: cascade.nets.len(),
            };
            Ok((record, cascade))
        })
        .collect::<Result<Vec<_>>>()?;

    let best_pos = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.0.val_rmse
                .total_cmp(&b.0.val_rmse)
                .then(a.0.k.cmp(&b.0.k))
        })
        .map(|(i, _)| i)
        .expect("non-empty");

    let best_k = runs[best_pos].0.k;
    let mut records = Vec::with_capacity(runs.len());
    let mut best_cascade = None;
    for (i, (record, cascade)) in runs.into_iter().enumerate() {
        if i == best_pos {
            best_cascade = Some(cascade);
        }
        records.push(record);
    }

    Ok(SweepResult {
        records,
        best_k,
        best_cascade: best_cascade.expect("best index in range"),
    })
}

/// RMSE in target units of the ensemble formed by `prior_outputs` plus the
/// candidate, all in standardized space.
fn cascade_rmse(
    prior_outputs: &[Vec<f64>],
    candidate: &[f64],
    targets: &[f64],
    target_mean: f64,
    target_sd: f64,
) -> f64 {
    let mut acc = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let mut sum = candidate[i];
        for out in prior_outputs {
            sum += out[i];
        }
        let pred = target_mean + target_sd * sum;
        acc += (pred - t) * (pred - t);
    }
    (acc / targets.len() as f64).sqrt()
}

fn check_partition(ds: &Dataset, partition: &Partition) -> Result<()> {
    if partition.train_idx.is_empty()
        || partition.val_idx.is_empty()
        || partition.test_idx.is_empty()
    {
        return Err(Error::parameter("all three partitions must be non-empty"));
    }
    let n = ds.samples.len();
    for &i in partition
        .train_idx
        .iter()
        .chain(&partition.val_idx)
        .chain(&partition.test_idx)
    {
        if i >= n {
            return Err(Error::parameter(format!(
                "partition index {i} out of range for {n} samples"
            )));
        }
    }
    Ok(())
}

fn matrix_of(ds: &Dataset, idx: &[usize]) -> Matrix {
    let d = ds.input_dim();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend(ds.flatten(i));
    }
    Matrix::from_rows(idx.len(), d, data).expect("samples are finite")
}

fn score_matrix(pca: &PcaModel, ds: &Dataset, idx: &[usize], k: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(idx.len() * k);
    for &i in idx {
        data.extend(pca.transform(&ds.flatten(i), k)?);
    }
    Matrix::from_rows(idx.len(), k, data)
}

/// Deterministic per-(net, restart) seed derived from the run seed;
/// SplitMix64-style mixing.
fn net_seed(base: u64, net_index: usize, restart: usize) -> u64 {
    let mut z = base
        ^ (net_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
