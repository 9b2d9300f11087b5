//! Feed-forward perceptrons with tanh hidden layers and a linear scalar
//! output. Parameters live in one flat vector so the optimizer can treat a
//! network as an opaque point in R^n; gradients of the summed squared error
//! come from exact reverse-mode accumulation.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Architecture of one network: `hidden_layers` layers of `hidden_width`
/// tanh units feeding a single linear output. `hidden_layers = 0` is the
/// plain linear net.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_layers: usize, hidden_width: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::parameter("input_dim must be at least 1"));
        }
        if hidden_width == 0 {
            return Err(Error::parameter("hidden_width must be at least 1"));
        }
        Ok(MlpSpec {
            input_dim,
            hidden_layers,
            hidden_width,
        })
    }

    /// (fan_in, fan_out) per layer, first hidden layer first, output last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.hidden_layers {
            shapes.push((prev, self.hidden_width));
            prev = self.hidden_width;
        }
        shapes.push((prev, 1));
        shapes
    }

    /// Total flat-parameter length: sum over layers of (fan_in + 1) * fan_out.
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }

    /// Width of the first layer (number of units whose incoming weights touch
    /// the input directly). For the linear net this is the output unit itself.
    pub fn first_layer_units(&self) -> usize {
        if self.hidden_layers == 0 {
            1
        } else {
            self.hidden_width
        }
    }
}

/// All weights and biases of a network in one flat vector.
///
/// Layout, layer by layer: weights row-major with one row per unit (so a
/// unit's incoming weights are contiguous), then that layer's biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub flat: Vec<f64>,
}

impl MlpParams {
    pub fn from_flat(spec: &MlpSpec, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::shape(format!(
                "params: expected {} entries for spec, got {}",
                spec.param_count(),
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("params must be finite"));
        }
        Ok(MlpParams { flat })
    }

    /// Incoming weights of `unit` in the first layer.
    pub fn first_layer_weights<'a>(&'a self, spec: &MlpSpec, unit: usize) -> Result<&'a [f64]> {
        if unit >= spec.first_layer_units() {
            return Err(Error::parameter(format!(
                "unit {unit} out of range; first layer has {} units",
                spec.first_layer_units()
            )));
        }
        let fan_in = spec.input_dim;
        let start = unit * fan_in;
        Ok(&self.flat[start..start + fan_in])
    }
}

/// Seeded uniform initialization: weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
/// per layer, biases zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_shapes() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            flat.push(rng.gen_range(-bound..bound));
        }
        flat.extend(std::iter::repeat_n(0.0, fan_out));
    }
    MlpParams { flat }
}

/// Scalar output for one input vector.
pub fn forward(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> Result<f64> {
    check_params(spec, params)?;
    if x.len() != spec.input_dim {
        return Err(Error::shape(format!(
            "forward: input has length {}, spec expects {}",
            x.len(),
            spec.input_dim
        )));
    }
    let shapes = spec.layer_shapes();
    let mut current = x.to_vec();
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let weights = &params.flat[offset..offset + fan_in * fan_out];
        let biases = &params.flat[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let last = l == shapes.len() - 1;
        let mut next = vec![0.0; fan_out];
        for (u, out) in next.iter_mut().enumerate() {
            let row = &weights[u * fan_in..(u + 1) * fan_in];
            let mut z = biases[u];
            for (w, a) in row.iter().zip(&current) {
                z += w * a;
            }
            *out = if last { z } else { z.tanh() };
        }
        current = next;
    }
    Ok(current[0])
}

/// Outputs for every row of `xs`, in row order.
pub fn forward_batch(spec: &MlpSpec, params: &MlpParams, xs: &Matrix) -> Result<Vec<f64>> {
    (0..xs.rows())
        .map(|r| forward(spec, params, xs.row(r)))
        .collect()
}

/// Summed squared error over the batch and its exact gradient with respect
/// to the flat parameter vector.
///
/// Samples are accumulated in row order so the result is deterministic.
pub fn sse_and_gradient(
    spec: &MlpSpec,
    params: &MlpParams,
    xs: &Matrix,
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_params(spec, params)?;
    if xs.rows() != targets.len() {
        return Err(Error::shape(format!(
            "sse_and_gradient: {} rows but {} targets",
            xs.rows(),
            targets.len()
        )));
    }
    if xs.cols() != spec.input_dim {
        return Err(Error::shape(format!(
            "sse_and_gradient: rows have length {}, spec expects {}",
            xs.cols(),
            spec.input_dim
        )));
    }

    let shapes = spec.layer_shapes();
    let mut offsets = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for &(fan_in, fan_out) in &shapes {
        offsets.push(off);
        off += (fan_in + 1) * fan_out;
    }

    let mut objective = 0.0;
    let mut grad = vec![0.0; params.flat.len()];
    // Post-activation outputs per layer, reused across samples.
    let mut acts: Vec<Vec<f64>> = shapes.iter().map(|&(_, o)| vec![0.0; o]).collect();

    for (r, &t) in targets.iter().enumerate() {
        let x = xs.row(r);

        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let base = offsets[l];
            let last = l == shapes.len() - 1;
            let (prev_acts, rest) = acts.split_at_mut(l);
            let inputs: &[f64] = if l == 0 { x } else { &prev_acts[l - 1] };
            let out = &mut rest[0];
            for u in 0..fan_out {
                let row = &params.flat[base + u * fan_in..base + (u + 1) * fan_in];
                let mut z = params.flat[base + fan_in * fan_out + u];
                for (w, a) in row.iter().zip(inputs) {
                    z += w * a;
                }
                out[u] = if last { z } else { z.tanh() };
            }
        }

        let y = acts[shapes.len() - 1][0];
        let e = t - y;
        objective += e * e;

        // d(SSE)/dy for this sample; the output unit is linear.
        let mut delta = vec![-2.0 * e];
        for l in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[l];
            let base = offsets[l];
            let inputs: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            for (u, &du) in delta.iter().enumerate().take(fan_out) {
                let grow = &mut grad[base + u * fan_in..base + (u + 1) * fan_in];
                for (g, a) in grow.iter_mut().zip(inputs) {
                    *g += du * a;
                }
                grad[base + fan_in * fan_out + u] += du;
            }
            if l > 0 {
                let mut prev = vec![0.0; fan_in];
                for (u, &du) in delta.iter().enumerate().take(fan_out) {
                    let row = &params.flat[base + u * fan_in..base + (u + 1) * fan_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += du * w;
                    }
                }
                // tanh'(z) expressed through the stored activation.
                for (p, a) in prev.iter_mut().zip(&acts[l - 1]) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    Ok((objective, grad))
}

fn check_params(spec: &MlpSpec, params: &MlpParams) -> Result<()> {
    if params.flat.len() != spec.param_count() {
        return Err(Error::shape(format!(
            "params length {} does not match spec ({} expected)",
            params.flat.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded_inputs(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Matrix::from_rows(n, d, data).unwrap()
    }

    #[test]
    fn linear_spec_param_count() {
        let spec = MlpSpec::new(3, 0, 2).unwrap();
        assert_eq!(spec.param_count(), 4); // 3 weights + 1 bias
        assert_eq!(init_params(&spec, 0).flat.len(), 4);
    }

    #[test]
    fn one_hidden_layer_param_count() {
        let spec = MlpSpec::new(240, 1, 2).unwrap();
        assert_eq!(spec.param_count(), 240 * 2 + 2 + 2 + 1); // 485
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = MlpSpec::new(7, 2, 2).unwrap();
        assert_eq!(init_params(&spec, 42), init_params(&spec, 42));
        assert_ne!(init_params(&spec, 42).flat, init_params(&spec, 43).flat);
    }

    #[test]
    fn init_respects_bounds_and_zero_biases() {
        let spec = MlpSpec::new(16, 2, 3).unwrap();
        let params = init_params(&spec, 9);
        let mut off = 0;
        for (fan_in, fan_out) in spec.layer_shapes() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for i in 0..fan_in * fan_out {
                assert!(params.flat[off + i].abs() <= bound);
            }
            for i in 0..fan_out {
                assert_eq!(params.flat[off + fan_in * fan_out + i], 0.0);
            }
            off += (fan_in + 1) * fan_out;
        }
    }

    #[test]
    fn forward_zero_params_is_zero() {
        let spec = MlpSpec::new(5, 2, 2).unwrap();
        let params = MlpParams::from_flat(&spec, vec![0.0; spec.param_count()]).unwrap();
        let y = forward(&spec, &params, &[1.0, -2.0, 0.5, 3.0, -1.0]).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn forward_linear_hand_example() {
        let spec = MlpSpec::new(2, 0, 2).unwrap();
        let params = MlpParams::from_flat(&spec, vec![1.0, 2.0, 0.5]).unwrap();
        let y = forward(&spec, &params, &[1.0, 1.0]).unwrap();
        assert!((y - 3.5).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_direct_formula_oracle() {
        // Independent direct formula for a 1-hidden-layer net, reading the
        // documented flat layout by hand.
        let spec = MlpSpec::new(3, 1, 2).unwrap();
        let params = init_params(&spec, 17);
        let f = &params.flat;
        let x = [0.3, -0.7, 1.1];
        let h0 = (f[0] * x[0] + f[1] * x[1] + f[2] * x[2] + f[6]).tanh();
        let h1 = (f[3] * x[0] + f[4] * x[1] + f[5] * x[2] + f[7]).tanh();
        let oracle = f[8] * h0 + f[9] * h1 + f[10];
        let y = forward(&spec, &params, &x).unwrap();
        assert!((y - oracle).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_objective_and_gradient() {
        // Linear net reproducing t = 2 x0 - x1 + 0.25 exactly.
        let spec = MlpSpec::new(2, 0, 2).unwrap();
        let params = MlpParams::from_flat(&spec, vec![2.0, -1.0, 0.25]).unwrap();
        let xs = seeded_inputs(6, 2, 4);
        let targets: Vec<f64> = (0..6)
            .map(|r| 2.0 * xs.get(r, 0) - xs.get(r, 1) + 0.25)
            .collect();
        let (sse, grad) = sse_and_gradient(&spec, &params, &xs, &targets).unwrap();
        assert!(sse < 1e-24);
        assert!(grad.iter().all(|g| g.abs() < 1e-11));
    }

    #[test]
    fn linear_gradient_matches_symbolic_formula() {
        let spec = MlpSpec::new(3, 0, 2).unwrap();
        let params = MlpParams::from_flat(&spec, vec![0.5, -1.0, 2.0, 0.1]).unwrap();
        let xs = Matrix::from_rows(1, 3, vec![0.4, 1.2, -0.3]).unwrap();
        let t = 1.0;
        let y = forward(&spec, &params, xs.row(0)).unwrap();
        let (_, grad) = sse_and_gradient(&spec, &params, &xs, &[t]).unwrap();
        let factor = -2.0 * (t - y);
        for i in 0..3 {
            assert!((grad[i] - factor * xs.get(0, i)).abs() < 1e-12);
        }
        assert!((grad[3] - factor).abs() < 1e-12);
    }

    /// Central finite differences over the objective, h = 1e-6.
    fn finite_difference_gradient(
        spec: &MlpSpec,
        params: &MlpParams,
        xs: &Matrix,
        targets: &[f64],
    ) -> Vec<f64> {
        let h = 1e-6;
        let mut out = vec![0.0; params.flat.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.flat[i] += h;
            let mut minus = params.clone();
            minus.flat[i] -= h;
            let (op, _) = sse_and_gradient(spec, &plus, xs, targets).unwrap();
            let (om, _) = sse_and_gradient(spec, &minus, xs, targets).unwrap();
            *slot = (op - om) / (2.0 * h);
        }
        out
    }

    pub(crate) fn max_relative_deviation(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences_for_each_depth() {
        for depth in 0..=3usize {
            let spec = MlpSpec::new(4, depth, 2).unwrap();
            let params = init_params(&spec, 100 + depth as u64);
            let xs = seeded_inputs(8, 4, 200 + depth as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(300 + depth as u64);
            let targets: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, analytic) = sse_and_gradient(&spec, &params, &xs, &targets).unwrap();
            let numeric = finite_difference_gradient(&spec, &params, &xs, &targets);
            let dev = max_relative_deviation(&analytic, &numeric);
            assert!(dev < 1e-5, "depth {depth}: max relative deviation {dev}");
        }
    }

    #[test]
    fn odd_symmetry_with_zero_biases() {
        let spec = MlpSpec::new(5, 3, 2).unwrap();
        let params = init_params(&spec, 55); // biases are zero by construction
        let x: Vec<f64> = vec![0.2, -0.4, 1.0, 0.7, -0.9];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let a = forward(&spec, &params, &x).unwrap();
        let b = forward(&spec, &params, &neg).unwrap();
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn parameter_perturbation_bound() {
        // |f(p + d) - f(p)| <= C * ||d|| with C assembled from layer norms:
        // each layer contributes (input norm + 1) * product of downstream
        // Frobenius norms, tanh being 1-Lipschitz.
        let spec = MlpSpec::new(4, 2, 2).unwrap();
        let params = init_params(&spec, 5);
        let x = [0.8, -1.2, 0.3, 0.5];

        let shapes = spec.layer_shapes();
        let mut frob = Vec::new();
        let mut off = 0;
        for &(fan_in, fan_out) in &shapes {
            let w = &params.flat[off..off + fan_in * fan_out];
            frob.push(w.iter().map(|v| v * v).sum::<f64>().sqrt());
            off += (fan_in + 1) * fan_out;
        }
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let width_norm = (spec.hidden_width as f64).sqrt();
        let mut c = 0.0;
        for l in 0..shapes.len() {
            let input_norm = if l == 0 { x_norm } else { width_norm };
            let downstream: f64 = frob[l + 1..].iter().product();
            c += (input_norm + 1.0) * downstream;
        }

        let base = forward(&spec, &params, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..20 {
            let delta: Vec<f64> = (0..params.flat.len())
                .map(|_| rng.gen_range(-0.1..0.1))
                .collect();
            let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut perturbed = params.clone();
            for (p, d) in perturbed.flat.iter_mut().zip(&delta) {
                *p += d;
            }
            let shifted = forward(&spec, &perturbed, &x).unwrap();
            assert!((shifted - base).abs() <= c * norm + 1e-12);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let spec = MlpSpec::new(3, 1, 2).unwrap();
        let params = init_params(&spec, 1);
        assert!(matches!(
            forward(&spec, &params, &[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
        let xs = seeded_inputs(4, 3, 2);
        assert!(matches!(
            sse_and_gradient(&spec, &params, &xs, &[0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn first_layer_weights_view() {
        let spec = MlpSpec::new(3, 1, 2).unwrap();
        let params = init_params(&spec, 8);
        let u0 = params.first_layer_weights(&spec, 0).unwrap();
        let u1 = params.first_layer_weights(&spec, 1).unwrap();
        assert_eq!(u0, &params.flat[0..3]);
        assert_eq!(u1, &params.flat[3..6]);
        assert!(params.first_layer_weights(&spec, 2).is_err());

        let linear = MlpSpec::new(4, 0, 2).unwrap();
        let lp = init_params(&linear, 9);
        assert_eq!(lp.first_layer_weights(&linear, 0).unwrap().len(), 4);
    }
}
