//! Dense tanh network with hand-written reverse-mode differentiation and Adam.
//!
//! Parameters live in one flat vector so gradients, optimizer moments and
//! checkpoints share a single layout: for each layer `l` the weight matrix
//! `W_l` (row-major, `out x in`) followed by the bias `b_l`, and finally an
//! optional linear skip matrix mapping a `skip`-wide vector straight to the
//! output. By default that vector is the first `skip` inputs; callers may
//! pass a different one through [`Mlp::forward_cached_with`]. Hidden layers use `tanh`, the output layer is linear.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

const CHECKPOINT_TAG: &str = "scdm-mlp v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    skip: usize,
    params: Vec<f64>,
}

/// Activation buffers reused across forward/backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    skip_in: Vec<f64>,
}

impl Mlp {
    /// All-zero network. `sizes` lists every layer width, input first.
    pub fn zeros(sizes: &[usize], skip: usize) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        if skip > sizes[0] {
            return Err(Error::InvalidParameter(format!(
                "skip width {skip} exceeds input width {}",
                sizes[0]
            )));
        }
        let count = Self::count(sizes, skip);
        Ok(Self { sizes: sizes.to_vec(), skip, params: vec![0.0; count] })
    }

    /// Glorot-uniform weights, zero biases, zero skip matrix.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], skip: usize, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, skip)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    fn count(sizes: &[usize], skip: usize) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + skip * sizes[sizes.len() - 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn skip(&self) -> usize {
        self.skip
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Offset of the skip matrix in the flat parameter vector.
    pub fn skip_offset(&self) -> usize {
        self.params.len() - self.skip * self.output_dim()
    }

    /// Forward pass without keeping intermediate activations for backprop.
    pub fn forward(&self, x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        self.forward_cached(x, ws);
        out.copy_from_slice(ws.acts.last().expect("forward pass ran"));
    }

    /// Convenience wrapper allocating its own buffers.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.forward(x, &mut out, &mut Workspace::default());
        out
    }

    /// Forward pass storing every layer's output in `ws`; the network output
    /// is `ws.output()`.
    pub fn forward_cached(&self, x: &[f64], ws: &mut Workspace) {
        self.forward_cached_with(x, &x[..self.skip], ws);
    }

    /// [`forward_cached`](Self::forward_cached) with the skip matrix applied
    /// to `skip_x` instead of the leading inputs.
    pub fn forward_cached_with(&self, x: &[f64], skip_x: &[f64], ws: &mut Workspace) {
        debug_assert_eq!(x.len(), self.input_dim());
        debug_assert_eq!(skip_x.len(), self.skip);
        ws.skip_in.clear();
        ws.skip_in.extend_from_slice(skip_x);
        let layers = self.sizes.len() - 1;
        ws.acts.resize_with(layers + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let output = &mut rest[0];
            output.clear();
            for (row, bias) in w.chunks_exact(n_in).zip(b) {
                let z = bias + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                output.push(if l + 1 < layers { z.tanh() } else { z });
            }
        }
        if self.skip > 0 {
            let s = &self.params[off..];
            let out = &mut ws.acts[layers];
            for (o, row) in out.iter_mut().zip(s.chunks_exact(self.skip)) {
                *o += row.iter().zip(&ws.skip_in).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    /// Accumulates `dL/dparams` into `grads` given `dL/doutput`, using the
    /// activations left in `ws` by the preceding [`forward_cached`](Self::forward_cached).
    pub fn backward(&self, ws: &mut Workspace, dout: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        // layer offsets
        let mut offs = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        if self.skip > 0 {
            for (g_row, d) in grads[off..].chunks_exact_mut(self.skip).zip(dout) {
                for (g, xi) in g_row.iter_mut().zip(&ws.skip_in) {
                    *g += d * xi;
                }
            }
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(dout);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offs[l];
            let input = &ws.acts[l];
            {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for ((g_row, gbias), d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&ws.delta) {
                    *gbias += d;
                    for (g, a) in g_row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            ws.delta_prev.clear();
            ws.delta_prev.resize(n_in, 0.0);
            for (row, d) in w.chunks_exact(n_in).zip(&ws.delta) {
                for (dp, wij) in ws.delta_prev.iter_mut().zip(row) {
                    *dp += wij * d;
                }
            }
            // input[k] is tanh of the previous layer
            for (dp, a) in ws.delta_prev.iter_mut().zip(input) {
                *dp *= 1.0 - a * a;
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }

    /// Writes a versioned text checkpoint: tag, layer sizes, skip width,
    /// parameter count, then one parameter per line in flat layout order.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CHECKPOINT_TAG}")?;
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        writeln!(out, "layers {}", sizes.join(" "))?;
        writeln!(out, "skip {}", self.skip)?;
        writeln!(out, "params {}", self.params.len())?;
        for p in &self.params {
            // Display for f64 is the shortest string that round-trips exactly
            writeln!(out, "{p}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(Error::from)
        };
        if next()?.trim() != CHECKPOINT_TAG {
            return Err(bad("missing or unknown version tag"));
        }
        let header = |line: String, key: &str| -> Result<Vec<usize>> {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected '{key}' line")));
            }
            parts
                .map(|t| t.parse().map_err(|_| bad(&format!("bad integer '{t}'"))))
                .collect()
        };
        let sizes = header(next()?, "layers")?;
        let skip = header(next()?, "skip")?;
        let count = header(next()?, "params")?;
        let (&[skip], &[count]) = (skip.as_slice(), count.as_slice()) else {
            return Err(bad("malformed skip/params line"));
        };
        let mut net = Self::zeros(&sizes, skip)?;
        if count != net.param_count() {
            return Err(bad(&format!(
                "parameter count {count} does not match layout ({})",
                net.param_count()
            )));
        }
        for p in net.params.iter_mut() {
            let line = next()?;
            *p = line.trim().parse().map_err(|_| bad(&format!("bad parameter '{line}'")))?;
        }
        Ok(net)
    }
}

impl Workspace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    for len in [grads.len(), state.m.len()] {
        if len != params.len() {
            return Err(Error::ShapeMismatch { expected: params.len(), actual: len });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    /// Sum of squared outputs against a fixed target, for gradient checks.
    fn loss(net: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        net.eval(x).iter().zip(target).map(|(o, t)| (o - t).powi(2)).sum()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], 2).unwrap();
        assert_eq!(net.eval(&[1.0, -2.0, 0.3]), vec![0.0, 0.0]);
    }

    #[test]
    fn skip_adds_linear_path() {
        let mut net = Mlp::zeros(&[3, 4, 2], 2).unwrap();
        let off = net.skip_offset();
        net.params_mut()[off..].copy_from_slice(&[1.0, 0.0, 0.0, -2.0]);
        assert_eq!(net.eval(&[0.5, 0.25, 9.0]), vec![0.5, -0.5]);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(Mlp::zeros(&[3], 0).is_err());
        assert!(Mlp::zeros(&[3, 0, 2], 0).is_err());
        assert!(Mlp::zeros(&[2, 4, 2], 3).is_err());
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = stream_rng(11, 0);
        let mut net = Mlp::init(&[3, 8, 6, 2], 2, &mut rng).unwrap();
        for p in net.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x = [0.4, -1.2, 0.7];
        let target = [0.3, -0.8];
        let mut ws = Workspace::default();
        net.forward_cached(&x, &mut ws);
        let dout: Vec<f64> = ws.output().iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
        let mut grads = vec![0.0; net.param_count()];
        net.backward(&mut ws, &dout, &mut grads);
        let h = 1e-5;
        for k in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let fd = (loss(&plus, &x, &target) - loss(&minus, &x, &target)) / (2.0 * h);
            let err = (fd - grads[k]).abs() / fd.abs().max(grads[k].abs()).max(1e-8);
            assert!(err <= 1e-4 || (fd - grads[k]).abs() < 1e-9, "param {k}: fd {fd} vs {}", grads[k]);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::init(&[3, 7, 2], 2, &mut stream_rng(4, 0)).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = Mlp::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(Mlp::read_checkpoint("nope\n".as_bytes()).is_err());
        let truncated = "scdm-mlp v1\nlayers 2 2\nskip 0\nparams 6\n1\n2\n";
        assert!(Mlp::read_checkpoint(truncated.as_bytes()).is_err());
        let wrong = "scdm-mlp v1\nlayers 2 2\nskip 0\nparams 5\n";
        assert!(Mlp::read_checkpoint(wrong.as_bytes()).is_err());
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = vec![0.5, -1.0, 2.0];
        let before = p.clone();
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let cfg = AdamConfig { learning_rate: 1e-3, ..Default::default() };
        let grads = [1e-3, -5.0, 300.0, 1e-9];
        let mut p = vec![0.0; 4];
        adam_step(&mut p, &grads, &mut AdamState::new(4), &cfg).unwrap();
        for (dp, g) in p.iter().zip(grads) {
            // bias-corrected first step: -lr * g / (|g| + eps)
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.eps);
            assert!((dp - expected).abs() < 1e-15);
            assert!(dp.abs() <= cfg.learning_rate * (1.0 + 1e-12));
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let cfg = AdamConfig { learning_rate: 0.01, ..Default::default() };
        let mut w = vec![1.0];
        let mut st = AdamState::new(1);
        let mut prev = w[0] * w[0];
        for _ in 0..2 {
            let g = [2.0 * w[0]];
            adam_step(&mut w, &g, &mut st, &cfg).unwrap();
            let f = w[0] * w[0];
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = vec![0.0; 3];
        let err = adam_step(&mut p, &[0.0; 2], &mut AdamState::new(3), &AdamConfig::default());
        assert!(matches!(err, Err(Error::ShapeMismatch { expected: 3, actual: 2 })));
        let err = adam_step(&mut p, &[0.0; 3], &mut AdamState::new(4), &AdamConfig::default());
        assert!(err.is_err());
    }
}
