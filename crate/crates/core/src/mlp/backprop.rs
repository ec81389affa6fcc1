use crate::error::{Error, Result};

use super::train::TrackedWeight;
use super::MlpParams;

/// `(features, label)`.
pub type Sample<'a> = (&'a [f64], usize);

/// Rows per GEMM call. Fixed so reductions happen in the same order on every machine.
const CHUNK: usize = 256;

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers, `op(a)` is `m × k`,
/// `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn softmax_rows(z: &mut [f64], width: usize) {
    for row in z.chunks_exact_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Activations for one chunk; `acts[0]` is the input, `acts[L]` the probabilities.
fn forward_chunk(params: &MlpParams, rows: usize, acts: &mut [Vec<f64>]) {
    let sizes = params.shape().sizes();
    let n_layers = params.shape().n_layers();
    for l in 0..n_layers {
        let (fi, fo) = (sizes[l], sizes[l + 1]);
        let (head, tail) = acts.split_at_mut(l + 1);
        let input = &head[l];
        let out = &mut tail[0];
        out.resize(rows * fo, 0.0);
        let bias = params.biases(l);
        for row in out.chunks_exact_mut(fo) {
            row.copy_from_slice(bias);
        }
        gemm(rows, fi, fo, 1.0, input, false, params.weights(l), false, 1.0, out);
        if l + 1 == n_layers {
            softmax_rows(out, fo);
        } else {
            let act = params.activation();
            for v in out.iter_mut() {
                *v = act.apply(*v);
            }
        }
    }
}

fn validate(params: &MlpParams, batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let d = params.shape().input_dim();
    let c = params.shape().n_classes();
    for (i, (x, y)) in batch.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, network expects {d}",
                x.len()
            )));
        }
        if *y >= c {
            return Err(Error::InvalidArgument(format!(
                "sample {i} label {y} outside 0..{c}"
            )));
        }
    }
    Ok(())
}

fn gather<'a>(chunk: impl Iterator<Item = &'a [f64]>, d: usize, buf: &mut Vec<f64>) -> usize {
    buf.clear();
    let mut rows = 0;
    for x in chunk {
        debug_assert_eq!(x.len(), d);
        buf.extend_from_slice(x);
        rows += 1;
    }
    rows
}

/// Class probabilities for one input.
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    let d = params.shape().input_dim();
    if input.len() != d {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {d}",
            input.len()
        )));
    }
    let mut acts = vec![Vec::new(); params.shape().n_layers() + 1];
    acts[0] = input.to_vec();
    forward_chunk(params, 1, &mut acts);
    Ok(acts.pop().unwrap())
}

/// Class probabilities for many inputs, one row per input.
pub fn forward_batch(params: &MlpParams, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let d = params.shape().input_dim();
    let c = params.shape().n_classes();
    if let Some(bad) = inputs.iter().position(|x| x.len() != d) {
        return Err(Error::Shape(format!("input {bad} does not have {d} features")));
    }
    let mut acts = vec![Vec::new(); params.shape().n_layers() + 1];
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(CHUNK) {
        let mut buf = std::mem::take(&mut acts[0]);
        let rows = gather(chunk.iter().copied(), d, &mut buf);
        acts[0] = buf;
        forward_chunk(params, rows, &mut acts);
        out.extend(acts[acts.len() - 1].chunks_exact(c).map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Arg-max class per input; ties go to the lowest class index.
pub fn predict(params: &MlpParams, inputs: &[&[f64]]) -> Result<Vec<usize>> {
    Ok(forward_batch(params, inputs)?
        .iter()
        .map(|p| {
            let mut best = 0;
            for (i, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

fn neg_log(p: f64) -> f64 {
    -p.max(f64::MIN_POSITIVE).ln()
}

/// Mean cross-entropy plus `(lambda / 2) * Σ W²`, without the gradient.
pub fn loss(params: &MlpParams, batch: &[Sample], lambda: f64) -> Result<f64> {
    validate(params, batch)?;
    let d = params.shape().input_dim();
    let c = params.shape().n_classes();
    let mut acts = vec![Vec::new(); params.shape().n_layers() + 1];
    let mut total = 0.0;
    for chunk in batch.chunks(CHUNK) {
        let mut buf = std::mem::take(&mut acts[0]);
        let rows = gather(chunk.iter().map(|s| s.0), d, &mut buf);
        acts[0] = buf;
        forward_chunk(params, rows, &mut acts);
        let probs = &acts[acts.len() - 1];
        for (r, (_, y)) in chunk.iter().enumerate() {
            total += neg_log(probs[r * c + y]);
        }
    }
    Ok(total / batch.len() as f64 + 0.5 * lambda * params.weight_sq_norm())
}

/// Loss and its exact gradient. The loss is the mean cross-entropy over `batch`
/// plus `(lambda / 2) * Σ W²` over weights (biases are not decayed).
pub fn loss_and_grad(params: &MlpParams, batch: &[Sample], lambda: f64) -> Result<(f64, MlpParams)> {
    let (l, g, _) = loss_and_grad_tapped(params, batch, lambda, None)?;
    Ok((l, g))
}

/// [`loss_and_grad`] that also returns, for every sample, the derivative of that
/// sample's own loss (cross-entropy plus the decay term) with respect to `tap`.
pub fn loss_and_grad_tapped(
    params: &MlpParams,
    batch: &[Sample],
    lambda: f64,
    tap: Option<TrackedWeight>,
) -> Result<(f64, MlpParams, Vec<f64>)> {
    validate(params, batch)?;
    let tap_index = match tap {
        Some(t) => Some(params.weight_index(t.layer, t.out, t.input)?),
        None => None,
    };
    let shape = params.shape();
    let sizes = shape.sizes();
    let n_layers = shape.n_layers();
    let d = shape.input_dim();
    let c = shape.n_classes();
    let scale = 1.0 / batch.len() as f64;
    let act = params.activation();

    let mut grad = MlpParams::zeros_like(params);
    let mut acts = vec![Vec::new(); n_layers + 1];
    let mut delta = Vec::new();
    let mut delta_prev = Vec::new();
    let mut bias_sum = Vec::new();
    let mut tapped = Vec::with_capacity(if tap.is_some() { batch.len() } else { 0 });
    let mut total = 0.0;

    for chunk in batch.chunks(CHUNK) {
        let mut buf = std::mem::take(&mut acts[0]);
        let rows = gather(chunk.iter().map(|s| s.0), d, &mut buf);
        acts[0] = buf;
        forward_chunk(params, rows, &mut acts);

        delta.clear();
        delta.extend_from_slice(&acts[n_layers]);
        for (r, (_, y)) in chunk.iter().enumerate() {
            total += neg_log(delta[r * c + y]);
            delta[r * c + y] -= 1.0;
        }

        for l in (0..n_layers).rev() {
            let (fi, fo) = (sizes[l], sizes[l + 1]);
            if let Some(t) = tap.filter(|t| t.layer == l) {
                for r in 0..rows {
                    tapped.push(acts[l][r * fi + t.input] * delta[r * fo + t.out]);
                }
            }
            gemm(fi, rows, fo, scale, &acts[l], true, &delta, false, 1.0, grad.weights_mut(l));
            bias_sum.clear();
            bias_sum.resize(fo, 0.0);
            for row in delta.chunks_exact(fo) {
                for (s, v) in bias_sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            for (g, s) in grad.biases_mut(l).iter_mut().zip(&bias_sum) {
                *g += scale * s;
            }
            if l > 0 {
                delta_prev.resize(rows * fi, 0.0);
                gemm(rows, fo, fi, 1.0, &delta, false, params.weights(l), true, 0.0, &mut delta_prev);
                for (dp, a) in delta_prev.iter_mut().zip(&acts[l]) {
                    *dp *= act.derivative_from_output(*a);
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }

    if lambda != 0.0 {
        for l in 0..n_layers {
            let w = params.weights(l).to_vec();
            for (g, w) in grad.weights_mut(l).iter_mut().zip(&w) {
                *g += lambda * w;
            }
        }
        if let Some(i) = tap_index {
            let w = params.as_slice()[i];
            for v in tapped.iter_mut() {
                *v += lambda * w;
            }
        }
    }
    let loss = total * scale + 0.5 * lambda * params.weight_sq_norm();
    Ok((loss, grad, tapped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{init_params, Activation, MlpShape};

    fn sigmoid(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let shape = MlpShape::new(vec![3, 4, 5]).unwrap();
        let p = MlpParams::zeros(&shape, Activation::Sigmoid);
        let out = forward(&p, &[0.3, -1.0, 2.0]).unwrap();
        assert!(out.iter().all(|v| (v - 0.2).abs() < 1e-15));
        let x = [0.3, -1.0, 2.0];
        let l = loss(&p, &[(&x, 2)], 0.7).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn hand_worked_two_two_two() {
        let shape = MlpShape::new(vec![2, 2, 2]).unwrap();
        let mut p = MlpParams::zeros(&shape, Activation::Sigmoid);
        // layer 0: w[in][out]
        p.weights_mut(0).copy_from_slice(&[0.5, -1.0, 0.25, 2.0]);
        p.biases_mut(0).copy_from_slice(&[0.1, -0.2]);
        p.weights_mut(1).copy_from_slice(&[1.0, -1.0, 0.5, 0.3]);
        p.biases_mut(1).copy_from_slice(&[0.0, 0.2]);
        let x = [1.0, 2.0];
        let h0 = sigmoid(0.5 * 1.0 + 0.25 * 2.0 + 0.1);
        let h1 = sigmoid(-1.0 * 1.0 + 2.0 * 2.0 - 0.2);
        let z0 = 1.0 * h0 + 0.5 * h1;
        let z1 = -1.0 * h0 + 0.3 * h1 + 0.2;
        let e0 = z0.exp();
        let e1 = z1.exp();
        let want = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let got = forward(&p, &x).unwrap();
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        let l = loss(&p, &[(&x, 1)], 0.0).unwrap();
        assert!((l + want[1].ln()).abs() < 1e-12);
    }

    #[test]
    fn simplex_for_extreme_inputs() {
        let shape = MlpShape::new(vec![4, 6, 3]).unwrap();
        let p = init_params(&shape, Activation::Relu, 2);
        for x in [[1e6, -1e6, 3.0, 0.0], [0.0; 4], [-500.0, 200.0, 1e-9, 7.0]] {
            let out = forward(&p, &x).unwrap();
            assert!(out.iter().all(|v| *v >= 0.0));
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let shape = MlpShape::new(vec![2, 3]).unwrap();
        let p = MlpParams::zeros(&shape, Activation::Sigmoid);
        assert!(forward(&p, &[1.0]).is_err());
        let x = [1.0, 2.0];
        assert!(loss_and_grad(&p, &[(&x, 3)], 0.0).is_err());
        assert!(loss_and_grad(&p, &[], 0.0).is_err());
    }

    #[test]
    fn chunked_and_single_pass_agree() {
        let shape = MlpShape::new(vec![5, 4, 3]).unwrap();
        let p = init_params(&shape, Activation::Tanh, 4);
        let xs: Vec<Vec<f64>> = (0..600)
            .map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0).collect())
            .collect();
        let batch: Vec<Sample> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
        let (l, g) = loss_and_grad(&p, &batch, 0.01).unwrap();
        assert!((l - loss(&p, &batch, 0.01).unwrap()).abs() < 1e-12);
        // average of per-sample gradients equals the batch gradient
        let mut avg = MlpParams::zeros_like(&p);
        for s in &batch {
            let (_, gi) = loss_and_grad(&p, std::slice::from_ref(s), 0.01).unwrap();
            avg.axpy(1.0 / batch.len() as f64, &gi);
        }
        for (a, b) in avg.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
