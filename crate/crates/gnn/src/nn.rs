//! MLP and LSTM building blocks recorded on a tape.

use maxsat_core::rng::Rng;

use crate::optim::Params;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Scalar, Tensor};
use crate::TensorError;

/// Affine layers per MLP; ReLU sits between consecutive layers.
pub const MLP_LAYERS: usize = 3;

fn lookup<'a, S>(params: &'a Params<S>, name: &str) -> Result<&'a Tensor<S>, TensorError> {
    params
        .get(name)
        .ok_or_else(|| TensorError::MissingParam(name.to_string()))
}

pub fn mlp_param_shapes(prefix: &str, d_in: usize, hidden: usize, d_out: usize) -> Vec<(String, (usize, usize))> {
    let dims = [d_in, hidden, hidden, d_out];
    let mut out = Vec::new();
    for l in 0..MLP_LAYERS {
        out.push((format!("{prefix}.{l}.w"), (dims[l], dims[l + 1])));
        out.push((format!("{prefix}.{l}.b"), (1, dims[l + 1])));
    }
    out
}

pub fn lstm_param_shapes(prefix: &str, d_in: usize, d: usize) -> Vec<(String, (usize, usize))> {
    vec![
        (format!("{prefix}.w"), (d_in + d, 4 * d)),
        (format!("{prefix}.b"), (1, 4 * d)),
    ]
}

/// Weights `U(−1/√fan_in, 1/√fan_in)`; biases zero except LSTM forget gates at +1.
pub fn init_param(name: &str, shape: (usize, usize), rng: &mut Rng) -> Tensor {
    let (rows, cols) = shape;
    if name.ends_with(".b") {
        let mut b = Tensor::zeros(rows, cols);
        if is_lstm_name(name) {
            let d = cols / 4;
            for v in &mut b.data_mut()[d..2 * d] {
                *v = 1.0;
            }
        }
        return b;
    }
    let bound = 1.0 / (rows as f32).sqrt();
    let data = (0..rows * cols).map(|_| (2.0 * rng.unit_f32() - 1.0) * bound).collect();
    Tensor::from_vec(rows, cols, data).expect("sized by shape")
}

fn is_lstm_name(name: &str) -> bool {
    // LSTM parameters are `{prefix}.w` / `{prefix}.b`; MLP ones carry a layer index.
    let mut parts = name.rsplit('.');
    parts.next();
    parts.next().is_some_and(|p| p.parse::<usize>().is_err())
}

/// `x → W0 → ReLU → W1 → ReLU → W2`; each row is transformed independently.
pub fn mlp<S: Scalar>(tape: &mut Tape<S>, params: &Params<S>, prefix: &str, x: NodeId) -> Result<NodeId, TensorError> {
    let mut h = x;
    for l in 0..MLP_LAYERS {
        let wn = format!("{prefix}.{l}.w");
        let bn = format!("{prefix}.{l}.b");
        let w = tape.param(&wn, lookup(params, &wn)?);
        let b = tape.param(&bn, lookup(params, &bn)?);
        let z = tape.matmul(h, w)?;
        h = tape.add_bias(z, b)?;
        if l + 1 < MLP_LAYERS {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

/// One LSTM step. Returns `(h', c')`.
pub fn lstm_step<S: Scalar>(
    tape: &mut Tape<S>,
    params: &Params<S>,
    prefix: &str,
    input: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
    let d = tape.value(h).cols();
    let wn = format!("{prefix}.w");
    let bn = format!("{prefix}.b");
    let w = tape.param(&wn, lookup(params, &wn)?);
    let b = tape.param(&bn, lookup(params, &bn)?);
    let xh = tape.concat_cols(input, h)?;
    let z = tape.matmul(xh, w)?;
    let gates = tape.add_bias(z, b)?;
    let hc = tape.lstm_pointwise(gates, c)?;
    let h_new = tape.slice_cols(hc, 0, d)?;
    let c_new = tape.slice_cols(hc, d, d)?;
    Ok((h_new, c_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Gradients;

    fn zero_params<S: Scalar>(shapes: &[(String, (usize, usize))]) -> Params<S> {
        shapes
            .iter()
            .map(|(n, (r, c))| (n.clone(), Tensor::zeros(*r, *c)))
            .collect()
    }

    fn random_params(shapes: &[(String, (usize, usize))], seed: u64) -> Params {
        let mut rng = Rng::new(seed);
        shapes
            .iter()
            .map(|(n, s)| {
                let t = Tensor::from_vec(s.0, s.1, (0..s.0 * s.1).map(|_| rng.unit_f32() - 0.5).collect()).unwrap();
                (n.clone(), t)
            })
            .collect()
    }

    fn random_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.unit_f64() * 2.0 - 1.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn mlp_zero_weights_give_final_bias() {
        let mut p: Params<f64> = zero_params(&mlp_param_shapes("m", 3, 4, 2));
        p.insert("m.2.b".into(), Tensor::from_vec(1, 2, vec![0.5, -1.5]).unwrap());
        let mut tape = Tape::new();
        let x = tape.input(Tensor::filled(5, 3, 7.0));
        let y = mlp(&mut tape, &p, "m", x).unwrap();
        for r in 0..5 {
            assert_eq!(tape.value(y).row(r), &[0.5, -1.5]);
        }
    }

    #[test]
    fn mlp_relu_blocks_negative_path() {
        let mut p: Params<f64> = Params::new();
        for l in 0..MLP_LAYERS {
            p.insert(format!("m.{l}.w"), Tensor::scalar(1.0));
            p.insert(format!("m.{l}.b"), Tensor::scalar(0.0));
        }
        let mut tape = Tape::new();
        let x = tape.input(Tensor::from_vec(2, 1, vec![-5.0, 3.0]).unwrap());
        let y = mlp(&mut tape, &p, "m", x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 3.0]);
    }

    #[test]
    fn mlp_rows_are_independent() {
        let p = random_params(&mlp_param_shapes("m", 3, 5, 2), 3)
            .iter()
            .map(|(k, v)| (k.clone(), v.cast::<f64>()))
            .collect();
        let mut rng = Rng::new(9);
        let x = random_tensor(4, 3, &mut rng);
        let perm = [2usize, 0, 3, 1];
        let mut xp = Tensor::zeros(4, 3);
        for (i, &r) in perm.iter().enumerate() {
            xp.row_mut(i).copy_from_slice(x.row(r));
        }
        let run = |x: Tensor<f64>| {
            let mut tape = Tape::new();
            let xi = tape.input(x);
            let y = mlp(&mut tape, &p, "m", xi).unwrap();
            tape.value(y).clone()
        };
        let (y, yp) = (run(x), run(xp));
        for (i, &r) in perm.iter().enumerate() {
            assert_eq!(yp.row(i), y.row(r));
        }
    }

    #[test]
    fn mlp_missing_param() {
        let p: Params<f64> = Params::new();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(1, 1));
        assert_eq!(
            mlp(&mut tape, &p, "m", x),
            Err(TensorError::MissingParam("m.0.w".into()))
        );
    }

    fn lstm_zero(c0: f64) -> (f64, f64) {
        let p: Params<f64> = zero_params(&lstm_param_shapes("u", 2, 3));
        let mut tape = Tape::new();
        let x = tape.input(Tensor::filled(1, 2, 0.7));
        let h = tape.input(Tensor::filled(1, 3, -0.2));
        let c = tape.input(Tensor::filled(1, 3, c0));
        let (h1, c1) = lstm_step(&mut tape, &p, "u", x, h, c).unwrap();
        (tape.value(h1).data()[0], tape.value(c1).data()[0])
    }

    #[test]
    fn lstm_zero_params() {
        assert_eq!(lstm_zero(0.0), (0.0, 0.0));
        let c0 = 0.8;
        let (h, c) = lstm_zero(c0);
        assert!((c - 0.5 * c0).abs() < 1e-15);
        assert!((h - 0.5 * (0.5 * c0).tanh()).abs() < 1e-15);
    }

    #[test]
    fn lstm_shape_mismatch() {
        let p: Params<f64> = zero_params(&lstm_param_shapes("u", 2, 3));
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(2, 2));
        let h = tape.input(Tensor::zeros(1, 3));
        let c = tape.input(Tensor::zeros(1, 3));
        assert!(lstm_step(&mut tape, &p, "u", x, h, c).is_err());
    }

    #[test]
    fn init_follows_fan_in_and_forget_bias() {
        let mut rng = Rng::new(1);
        let w = init_param("m.0.w", (16, 8), &mut rng);
        assert!(w.data().iter().all(|&v| v.abs() <= 0.25));
        assert!(w.data().iter().any(|&v| v != 0.0));
        assert_eq!(init_param("m.0.b", (1, 8), &mut rng), Tensor::zeros(1, 8));
        let b = init_param("upd_c.b", (1, 8), &mut rng);
        assert_eq!(b.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    /// Loss = Σ ([h' | c']·R) for a fixed random R, so every output matters.
    fn lstm_loss<S: Scalar>(
        params: &Params<S>,
        x: &Tensor<S>,
        h: &Tensor<S>,
        c: &Tensor<S>,
        r: &Tensor<S>,
    ) -> (Tape<S>, NodeId) {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let hi = tape.input(h.clone());
        let ci = tape.input(c.clone());
        let (h1, c1) = lstm_step(&mut tape, params, "u", xi, hi, ci).unwrap();
        let hc = tape.concat_cols(h1, c1).unwrap();
        let ri = tape.input(r.clone());
        let ones = tape.input(Tensor::filled(r.cols(), 1, S::one()));
        let proj = tape.matmul(hc, ri).unwrap();
        let col = tape.matmul(proj, ones).unwrap();
        let loss = tape.sum(col);
        (tape, loss)
    }

    #[test]
    fn lstm_gradient_matches_finite_differences() {
        let (d_in, d, n) = (3, 4, 5);
        let shapes = lstm_param_shapes("u", d_in, d);
        let p32 = random_params(&shapes, 21);
        let p64: Params<f64> = p32.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
        let mut rng = Rng::new(5);
        let x = random_tensor(n, d_in, &mut rng);
        let h = random_tensor(n, d, &mut rng);
        let c = random_tensor(n, d, &mut rng);
        let r = random_tensor(2 * d, 3, &mut rng);

        let (mut tape, loss) = lstm_loss(&p32, &x.cast(), &h.cast(), &c.cast(), &r.cast());
        let grads: Gradients = tape.backward(loss).unwrap();

        let eval = |p: &Params<f64>| {
            let (tape, loss) = lstm_loss(p, &x, &h, &c, &r);
            tape.value(loss).data()[0]
        };
        let step = 1e-3;
        for (name, value) in &p64 {
            let mut fd = Tensor::<f64>::zeros(value.rows(), value.cols());
            for i in 0..value.len() {
                let mut plus = p64.clone();
                plus.get_mut(name).unwrap().data_mut()[i] += step;
                let mut minus = p64.clone();
                minus.get_mut(name).unwrap().data_mut()[i] -= step;
                fd.data_mut()[i] = (eval(&plus) - eval(&minus)) / (2.0 * step);
            }
            let analytic: Tensor<f64> = grads[name].cast();
            let diff: f64 = analytic
                .data()
                .iter()
                .zip(fd.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let rel = diff / analytic.norm().max(fd.norm()).max(1e-12);
            assert!(rel < 1e-4, "{name}: relative error {rel}");
        }
    }
}
