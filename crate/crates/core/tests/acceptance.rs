//! Acceptance suite: every release criterion as one test that prints a
//! PASS/FAIL line. All tolerances are pinned here, in code.

use cascadenet::cascade::{self, CascadeConfig};
use cascadenet::dataset::{self, GeneratorConfig};
use cascadenet::interpret;
use cascadenet::linalg::Matrix;
use cascadenet::network::{self, MlpSpec};
use cascadenet::pca;
use cascadenet::persistence;
use cascadenet::scg::{self, ScgConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion} ({name}): {status} [{detail}]");
    assert!(pass, "ACCEPTANCE {criterion} ({name}): {status} [{detail}]");
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for depth in 0..=3usize {
        let spec = MlpSpec::new(5, depth, 2).unwrap();
        let params = network::init_params(&spec, 1000 + depth as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + depth as u64);
        let rows = 10;
        let data: Vec<f64> = (0..rows * 5).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let xs = Matrix::from_rows(rows, 5, data).unwrap();
        let targets: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let (_, analytic) = network::sse_and_gradient(&spec, &params, &xs, &targets).unwrap();
        let h = 1e-6;
        for i in 0..params.flat.len() {
            let mut plus = params.clone();
            plus.flat[i] += h;
            let mut minus = params.clone();
            minus.flat[i] -= h;
            let (op, _) = network::sse_and_gradient(&spec, &plus, &xs, &targets).unwrap();
            let (om, _) = network::sse_and_gradient(&spec, &minus, &xs, &targets).unwrap();
            let numeric = (op - om) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "gradient correctness",
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        &format!("max relative deviation {worst:.3e}, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// 2. SCG oracle equivalence
// ---------------------------------------------------------------------------

/// Gaussian elimination with partial pivoting (independent solver).
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let diag = m[col][col];
        for row in col + 1..n {
            let factor = m[row][col] / diag;
            for c in col..n {
                m[row][c] -= factor * m[col][c];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    x
}

#[test]
fn criterion_2_scg_matches_normal_equations() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for problem in 0..20u64 {
        let n = 2 + (problem as usize * 7) % 49; // sizes spread over 2..=50
        let m = 2 * n;
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + problem);
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Normal equations oracle.
        let mut ata = vec![vec![0.0; n]; n];
        let mut atb = vec![0.0; n];
        for row in 0..m {
            for i in 0..n {
                atb[i] += a[row][i] * b[row];
                for j in 0..n {
                    ata[i][j] += a[row][i] * a[row][j];
                }
            }
        }
        let expected = solve_dense(&ata, &atb);

        let (ac, bc) = (a.clone(), b.clone());
        let oracle = move |w: &[f64]| {
            let mut obj = 0.0;
            let mut grad = vec![0.0; w.len()];
            for row in 0..ac.len() {
                let mut resid = -bc[row];
                for (j, wj) in w.iter().enumerate() {
                    resid += ac[row][j] * wj;
                }
                obj += resid * resid;
                for (j, g) in grad.iter_mut().enumerate() {
                    *g += 2.0 * resid * ac[row][j];
                }
            }
            (obj, grad)
        };
        let result = scg::minimize(oracle, &vec![0.0; n], &ScgConfig::default()).unwrap();
        for (got, want) in result.params.iter().zip(&expected) {
            worst = worst.max((got - want).abs());
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        "scg oracle equivalence",
        worst < 1e-6 && elapsed < Duration::from_secs(5),
        &format!("max abs deviation {worst:.3e} over 20 problems, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// 3. PCA oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_pca_route_equivalence() {
    let (n, d, k) = (50usize, 20usize, 10usize);
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let train = Matrix::from_rows(n, d, data).unwrap();

    let gram = pca::fit_gram_route(&train, k).unwrap();
    let cov = pca::fit_covariance_route(&train, k).unwrap();

    let mut worst_component = 0.0_f64;
    for c in 0..k {
        let g = gram.components.column(c);
        let v = cov.components.column(c);
        let dot: f64 = g.iter().zip(&v).map(|(x, y)| x * y).sum();
        let sign = if dot >= 0.0 { 1.0 } else { -1.0 };
        for (x, y) in g.iter().zip(&v) {
            worst_component = worst_component.max((x - sign * y).abs());
        }
    }

    let mut worst_ortho = 0.0_f64;
    for a in 0..k {
        for b in 0..k {
            let dot: f64 = (0..d)
                .map(|r| gram.components.get(r, a) * gram.components.get(r, b))
                .sum();
            let want = if a == b { 1.0 } else { 0.0 };
            worst_ortho = worst_ortho.max((dot - want).abs());
        }
    }

    // Independent total-variance oracle: sum of squared centered entries
    // over N-1.
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mean[c] += train.get(r, c);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut total = 0.0;
    for r in 0..n {
        for c in 0..d {
            let dev = train.get(r, c) - mean[c];
            total += dev * dev;
        }
    }
    total /= (n - 1) as f64;
    let explained: f64 = gram.variances.iter().sum();

    let pass = worst_component < 1e-7 && worst_ortho < 1e-8 && explained <= total + 1e-9 * total;
    report(
        3,
        "pca oracle equivalence",
        pass,
        &format!(
            "route deviation {worst_component:.3e}, orthonormality {worst_ortho:.3e}, \
             explained {explained:.6} <= total {total:.6}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4 & 5 share the default-config pipeline.
// ---------------------------------------------------------------------------

struct Pipeline {
    dataset: dataset::Dataset,
    best: cascade::Cascade,
    elapsed: Duration,
}

static PIPELINE: OnceLock<Pipeline> = OnceLock::new();

/// Full pipeline on the default nonlinear config: generate, partition,
/// sweep the default PC list, keep the winning cascade.
fn default_pipeline() -> &'static Pipeline {
    PIPELINE.get_or_init(|| {
        let start = Instant::now();
        let gen = GeneratorConfig::default();
        let ds = dataset::generate(&gen).unwrap();
        let partition = dataset::partition_by_year(&ds, (0.5, 0.25, 0.25), 42).unwrap();
        let cfg = CascadeConfig {
            seed: 42,
            ..CascadeConfig::default()
        };
        let sweep = cascade::sweep_pcs(&ds, &partition, &[1, 2, 3, 4, 6, 8], &cfg).unwrap();
        Pipeline {
            dataset: ds,
            best: sweep.best_cascade,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_4_cascade_gating_soundness() {
    // Noiseless linear data: exactly one net, test RMSE below 1e-4.
    let linear_gen = GeneratorConfig {
        nonlinear_amplitude: 0.0,
        noise_sd: 0.0,
        model_offset_sd: 0.0,
        ..GeneratorConfig::default()
    };
    let ds = dataset::generate(&linear_gen).unwrap();
    let partition = dataset::partition_by_year(&ds, (0.5, 0.25, 0.25), 42).unwrap();
    let cfg = CascadeConfig {
        seed: 42,
        ..CascadeConfig::default()
    };
    let linear_cascade = cascade::train(&ds, &partition, 1, &cfg).unwrap();
    let test_rmse = linear_cascade.rmse(&ds, &partition.test_idx).unwrap();
    let linear_ok = linear_cascade.nets.len() == 1 && test_rmse < 1e-4;

    // Default nonlinear config: at least two nets, kept validation RMSEs
    // strictly decreasing.
    let pipeline = default_pipeline();
    let kept: Vec<f64> = pipeline
        .best
        .history
        .iter()
        .filter(|r| r.kept)
        .map(|r| r.val_rmse)
        .collect();
    let strictly_decreasing = kept.windows(2).all(|w| w[1] < w[0]);
    let nonlinear_ok = pipeline.best.nets.len() >= 2 && strictly_decreasing;

    report(
        4,
        "cascade gating soundness",
        linear_ok && nonlinear_ok,
        &format!(
            "linear: {} net(s), test RMSE {test_rmse:.3e}; nonlinear: {} nets kept, \
             val RMSEs {kept:?}",
            linear_cascade.nets.len(),
            pipeline.best.nets.len()
        ),
    );
}

#[test]
fn criterion_5_late_year_improvement() {
    let pipeline = default_pipeline();
    let ds = &pipeline.dataset;
    let best = &pipeline.best;

    let mut early = Vec::new();
    let mut late = Vec::new();
    for year in ds.distinct_years() {
        let idx: Vec<usize> = ds
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.year == year)
            .map(|(i, _)| i)
            .collect();
        let linear = best.rmse_truncated(ds, &idx, 1).unwrap();
        let full = best.rmse(ds, &idx).unwrap();
        if year > 0.5 {
            late.push(linear - full);
        } else {
            early.push(linear - full);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let early_mean = mean(&early);
    let late_mean = mean(&late);

    let pass = late_mean > early_mean && pipeline.elapsed < Duration::from_secs(60);
    report(
        5,
        "late-year improvement",
        pass,
        &format!(
            "mean improvement late {late_mean:.5} > early {early_mean:.5}, pipeline {:.2?}",
            pipeline.elapsed
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. PC sweep shape
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_pc_sweep_shape() {
    // Larger sample count than the default config so the validation/test
    // RMSE comparison is statistically stable; the swept list extends well
    // past the signal rank.
    let gen = GeneratorConfig {
        n_models: 10,
        n_years: 120,
        nonlinear_amplitude: 0.8,
        noise_sd: 0.1,
        ..GeneratorConfig::default()
    };
    let ds = dataset::generate(&gen).unwrap();
    let partition = dataset::partition_by_year(&ds, (0.5, 0.25, 0.25), 2).unwrap();
    let cfg = CascadeConfig {
        max_nets: 3,
        seed: 0,
        ..CascadeConfig::default()
    };
    let ks = [1usize, 2, 3, 4, 6, 8, 16, 32];
    let sweep = cascade::sweep_pcs(&ds, &partition, &ks, &cfg).unwrap();
    let record = sweep.records.iter().find(|r| r.k == sweep.best_k).unwrap();
    let bound = gen.signal_rank() + 5;
    let ratio = record.test_rmse / record.val_rmse;
    let pass = sweep.best_k <= bound && (ratio - 1.0).abs() <= 0.1;
    report(
        6,
        "pc sweep shape",
        pass,
        &format!(
            "k* = {} (bound {bound}), test/val ratio {ratio:.4}",
            sweep.best_k
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Map recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_map_recovery() {
    let gen = GeneratorConfig {
        nonlinear_amplitude: 0.0,
        noise_sd: 0.0,
        model_offset_sd: 0.0,
        ..GeneratorConfig::default()
    };
    let ds = dataset::generate(&gen).unwrap();
    let partition = dataset::partition_by_year(&ds, (0.5, 0.25, 0.25), 42).unwrap();
    let cfg = CascadeConfig {
        seed: 42,
        ..CascadeConfig::default()
    };
    // k = 1 matches the generator's signal rank.
    let cascade = cascade::train(&ds, &partition, 1, &cfg).unwrap();
    let map = interpret::unit_map(&cascade, 0, 0).unwrap();
    let truth = dataset::true_patterns(&gen)
        .unwrap()
        .centered_linear_pattern();
    let cos = interpret::cosine_similarity(&map.concat(), &truth);
    report(
        7,
        "map recovery",
        cos >= 0.9,
        &format!("cosine similarity {cos:.6}"),
    );
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism_and_persistence() {
    let run = || -> (dataset::Dataset, cascade::Cascade, String) {
        let gen = GeneratorConfig::default();
        let ds = dataset::generate(&gen).unwrap();
        let partition = dataset::partition_by_year(&ds, (0.5, 0.25, 0.25), 9).unwrap();
        let cfg = CascadeConfig {
            seed: 9,
            ..CascadeConfig::default()
        };
        let trained = cascade::train(&ds, &partition, 3, &cfg).unwrap();
        let json = persistence::to_json_string(&trained, &["acceptance".to_string()]);
        (ds, trained, json)
    };
    let (ds, trained, json_a) = run();
    let (_, _, json_b) = run();
    let byte_identical = json_a == json_b;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    persistence::save(&trained, &path, &["acceptance".to_string()]).unwrap();
    let loaded = persistence::load(&path).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..ds.samples.len() {
        let a = trained.predict(&ds.flatten(i)).unwrap();
        let b = loaded.predict(&ds.flatten(i)).unwrap();
        worst = worst.max((a - b).abs());
    }

    report(
        8,
        "determinism and persistence",
        byte_identical && worst <= 1e-15,
        &format!("byte-identical: {byte_identical}, max prediction drift {worst:.3e}"),
    );
}
