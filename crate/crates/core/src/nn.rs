//! Small dense networks with hand-written backprop, the Gaussian latent used
//! by the CVAE heads, and Adam.
//!
//! Parameters of an [`Mlp`] live in one flat buffer: for each layer the
//! weight matrix in row-major order (`out × in`) followed by the bias.
//! Gradients and optimizer moments use the same layout.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{check_len, Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations recorded by [`Mlp::forward`]: `acts[0]` is the
/// input, `acts[l + 1]` the (post-ReLU) output of layer `l`.
#[derive(Debug, Clone)]
pub struct GradTape {
    acts: Vec<Vec<f64>>,
}

impl GradTape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an input")
    }
}

fn n_params(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|d| *d > 0), "bad layer dims {dims:?}");
        let mut params = Vec::with_capacity(n_params(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            dims: dims.to_vec(),
            params,
        }
    }

    pub fn from_params(dims: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Checkpoint(format!("bad layer dims {dims:?}")));
        }
        check_len("mlp params", n_params(&dims), params.len())?;
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    fn layer_offset(&self, l: usize) -> usize {
        n_params(&self.dims[..=l])
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, GradTape)> {
        check_len("mlp input", self.input_dim(), input.len())?;
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(input.to_vec());
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let x = &acts[l];
            let n_in = x.len();
            let mut out: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bias)| {
                    let mut acc = 0.0;
                    for (wij, xj) in row.iter().zip(x) {
                        acc += wij * xj;
                    }
                    acc + bias
                })
                .collect();
            if l != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        let output = acts.last().unwrap().clone();
        Ok((output, GradTape { acts }))
    }

    /// Backpropagates `out_grad` through the recorded pass. Parameter
    /// gradients are added into `grads` when given; the input gradient is
    /// returned.
    pub fn backward(
        &self,
        tape: &GradTape,
        out_grad: &[f64],
        mut grads: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        check_len("mlp output grad", self.output_dim(), out_grad.len())?;
        check_len("mlp tape", self.dims.len(), tape.acts.len())?;
        if let Some(g) = grads.as_deref() {
            check_len("mlp grads", self.n_params(), g.len())?;
        }
        let last = self.n_layers() - 1;
        let mut delta = out_grad.to_vec();
        for l in (0..self.n_layers()).rev() {
            if l != last {
                for (d, a) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &tape.acts[l];
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            if let Some(g) = grads.as_deref_mut() {
                let (gw, gb) = g[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (i, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (gij, xj) in gw[i * n_in..(i + 1) * n_in].iter_mut().zip(x) {
                        *gij += d * xj;
                    }
                    gb[i] += d;
                }
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (i, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (p, wij) in prev.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                    *p += wij * d;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    fn write_text(&self, name: &str, out: &mut String) {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "net {name}").unwrap();
        writeln!(out, "dims {}", dims.join(" ")).unwrap();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            for row in w.chunks_exact(self.dims[l]) {
                out.push('w');
                for v in row {
                    write!(out, " {v:e}").unwrap();
                }
                out.push('\n');
            }
            out.push('b');
            for v in b {
                write!(out, " {v:e}").unwrap();
            }
            out.push('\n');
        }
    }
}

/// Diagonal Gaussian from a latent head, `log_var` clamped to
/// `[LOG_VAR_MIN, LOG_VAR_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    /// Whether the raw log-variance was inside the clamp range (gradient mask).
    pub log_var_active: Vec<bool>,
}

impl GaussianLatent {
    /// Splits a head output `[mu | log_var]`.
    pub fn from_head(raw: &[f64]) -> Result<Self> {
        if !raw.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                context: "latent head",
                expected: raw.len() + 1,
                got: raw.len(),
            });
        }
        let d = raw.len() / 2;
        let mu = raw[..d].to_vec();
        let log_var = raw[d..].iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        let log_var_active = raw[d..]
            .iter()
            .map(|v| (LOG_VAR_MIN..=LOG_VAR_MAX).contains(v))
            .collect();
        Ok(Self {
            mu,
            log_var,
            log_var_active,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// Maps `(∂/∂mu, ∂/∂log_var)` back to the raw head output.
    pub fn head_grad(&self, d_mu: &[f64], d_log_var: &[f64]) -> Vec<f64> {
        let mut out = d_mu.to_vec();
        out.extend(
            d_log_var
                .iter()
                .zip(&self.log_var_active)
                .map(|(g, active)| if *active { *g } else { 0.0 }),
        );
        out
    }
}

/// Reparameterized sample `mu + exp(log_var / 2) ⊙ noise`.
pub fn sample_latent(gl: &GaussianLatent, noise: &[f64]) -> Result<Vec<f64>> {
    check_len("latent noise", gl.dim(), noise.len())?;
    Ok(gl
        .mu
        .iter()
        .zip(&gl.log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// `(∂z/∂mu ⊙ dz, ∂z/∂log_var ⊙ dz)` for [`sample_latent`].
pub fn sample_latent_backward(gl: &GaussianLatent, noise: &[f64], d_z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_lv = gl
        .log_var
        .iter()
        .zip(noise)
        .zip(d_z)
        .map(|((lv, e), g)| g * 0.5 * (0.5 * lv).exp() * e)
        .collect();
    (d_z.to_vec(), d_lv)
}

/// `KL(N(mu, σ²) ‖ N(0, I))` and its gradient in `(mu, log_var)`.
pub fn kl_loss(gl: &GaussianLatent) -> (f64, Vec<f64>, Vec<f64>) {
    let mut value = 0.0;
    let mut d_lv = Vec::with_capacity(gl.dim());
    for (m, lv) in gl.mu.iter().zip(&gl.log_var) {
        let e = lv.exp();
        value += 0.5 * (e + m * m - 1.0 - lv);
        d_lv.push(0.5 * (e - 1.0));
    }
    (value, gl.mu.clone(), d_lv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
    check_len("adam grads", params.len(), grads.len())?;
    check_len("adam state", params.len(), state.m.len())?;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

/// Named sub-networks of one model, in file order.
///
/// Text layout, one item per line:
///
/// ```text
/// zonowalk-checkpoint 1
/// model <name>
/// net <sub-network name>
/// dims <d0> <d1> ... <dL>
/// w <row of layer 0 weights>      (dims[1] lines of dims[0] values)
/// b <layer 0 bias>
/// ...                              (repeated per layer)
/// end
/// ```
///
/// Numbers are written in shortest round-trip exponent form, so a
/// write/read cycle is lossless. Several models may follow each other in
/// one file.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedNets {
    pub model: String,
    pub nets: Vec<(String, Mlp)>,
}

pub const CHECKPOINT_MAGIC: &str = "zonowalk-checkpoint 1";

impl NamedNets {
    pub fn get(&self, name: &str) -> Result<&Mlp> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Checkpoint(format!("model {} lacks net {name}", self.model)))
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, models: &[NamedNets]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    for m in models {
        writeln!(out, "model {}", m.model).unwrap();
        for (name, net) in &m.nets {
            net.write_text(name, &mut out);
        }
        writeln!(out, "end").unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Vec<NamedNets>> {
    let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == CHECKPOINT_MAGIC => {}
        _ => return Err(bad(1, "missing header")),
    }
    let parse_floats = |line: usize, rest: &str| -> Result<Vec<f64>> {
        rest.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| bad(line, &e.to_string())))
            .collect()
    };

    let mut models = Vec::new();
    let mut current: Option<NamedNets> = None;
    let mut pending: Option<(String, Vec<usize>, Vec<f64>)> = None;
    let flush = |pending: &mut Option<(String, Vec<usize>, Vec<f64>)>,
                 current: &mut Option<NamedNets>,
                 line: usize|
     -> Result<()> {
        if let Some((name, dims, params)) = pending.take() {
            let net = Mlp::from_params(dims, params).map_err(|e| bad(line, &e.to_string()))?;
            current
                .as_mut()
                .ok_or_else(|| bad(line, "net outside model"))?
                .nets
                .push((name, net));
        }
        Ok(())
    };
    for (no, line) in lines {
        let line = line?;
        let (tag, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match tag {
            "" => {}
            "model" => {
                if current.is_some() {
                    return Err(bad(no, "model without end"));
                }
                current = Some(NamedNets {
                    model: rest.trim().to_string(),
                    nets: Vec::new(),
                });
            }
            "net" => {
                flush(&mut pending, &mut current, no)?;
                pending = Some((rest.trim().to_string(), Vec::new(), Vec::new()));
            }
            "dims" => {
                let p = pending.as_mut().ok_or_else(|| bad(no, "dims outside net"))?;
                p.1 = rest
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| bad(no, &e.to_string())))
                    .collect::<Result<_>>()?;
            }
            "w" | "b" => {
                let p = pending.as_mut().ok_or_else(|| bad(no, "values outside net"))?;
                p.2.extend(parse_floats(no, rest)?);
            }
            "end" => {
                flush(&mut pending, &mut current, no)?;
                models.push(current.take().ok_or_else(|| bad(no, "end without model"))?);
            }
            other => return Err(bad(no, &format!("unknown tag {other:?}"))),
        }
    }
    if current.is_some() || pending.is_some() {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_net_passes_through() {
        let mut params = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_params(vec![3, 3], params).unwrap();
        let (out, _) = net.forward(&[0.5, 2.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.5, 2.0, 0.0]);
    }

    #[test]
    fn zero_input_sees_only_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng);
        // layer-0 bias, then layer-1 bias
        let p = net.params_mut();
        p[6..9].copy_from_slice(&[1.0, -1.0, 2.0]);
        p[9..12].copy_from_slice(&[1.0, 1.0, 1.0]);
        p[12] = 0.5;
        let (out, _) = net.forward(&[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![1.0 + 2.0 + 0.5]);
    }

    #[test]
    fn linear_layer_gradient_is_input() {
        let net = Mlp::from_params(vec![3, 1], vec![0.2, -0.4, 1.5, 0.1]).unwrap();
        let x = [0.3, -2.0, 4.0];
        let (_, tape) = net.forward(&x).unwrap();
        let mut g = vec![0.0; 4];
        let dx = net.backward(&tape, &[1.0], Some(&mut g)).unwrap();
        assert_eq!(&g[..3], &x);
        assert_eq!(g[3], 1.0);
        assert_eq!(dx, vec![0.2, -0.4, 1.5]);
    }

    #[test]
    fn dead_unit_has_no_gradient() {
        // hidden unit 1 has a large negative bias
        let net = Mlp::from_params(vec![1, 2, 1], vec![1.0, 1.0, 0.0, -100.0, 1.0, 1.0, 0.0]).unwrap();
        let (_, tape) = net.forward(&[1.0]).unwrap();
        let mut g = vec![0.0; net.n_params()];
        net.backward(&tape, &[1.0], Some(&mut g)).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[3], 0.0);
        assert_eq!(g[5], 0.0);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[4, 2], &mut rng);
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        let (_, tape) = net.forward(&[0.0; 4]).unwrap();
        assert!(net.backward(&tape, &[1.0], None).is_err());
        let gl = GaussianLatent::from_head(&[0.0, 0.0]).unwrap();
        assert!(sample_latent(&gl, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn latent_sampling_edges() {
        let gl = GaussianLatent::from_head(&[0.5, -1.0, -1e6, 0.0]).unwrap();
        assert_eq!(gl.log_var[0], LOG_VAR_MIN);
        assert_eq!(sample_latent(&gl, &[0.0, 0.0]).unwrap(), vec![0.5, -1.0]);
        let z = sample_latent(&gl, &[1.0, 0.0]).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-2);
        assert_eq!(gl.head_grad(&[1.0, 1.0], &[1.0, 1.0]), vec![1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn kl_closed_forms() {
        let gl = GaussianLatent::from_head(&[0.0, 0.0]).unwrap();
        assert_eq!(kl_loss(&gl).0, 0.0);
        let gl = GaussianLatent::from_head(&[1.0, 0.0]).unwrap();
        assert_eq!(kl_loss(&gl).0, 0.5);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_update(&mut p, &[0.0, 0.0], &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_constant_gradient_step_tends_to_lr() {
        let hyper = AdamHyper::default();
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        let mut last = 0.0;
        for _ in 0..2000 {
            last = p[0];
            adam_update(&mut p, &[-3.0], &mut st, &hyper).unwrap();
        }
        assert!(((p[0] - last) - hyper.lr).abs() < 1e-9);
    }

    #[test]
    fn adam_descends_quadratic() {
        let hyper = AdamHyper::default();
        let mut p = vec![2.0];
        let mut st = AdamState::new(1);
        let mut prev = f64::INFINITY;
        for k in 0..1000 {
            let loss = p[0] * p[0];
            if k >= 10 {
                assert!(loss <= prev, "step {k}");
            }
            prev = loss;
            let g = [2.0 * p[0]];
            adam_update(&mut p, &g, &mut st, &hyper).unwrap();
        }
        assert!(p[0] < 1.5);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let models = vec![
            NamedNets {
                model: "A".into(),
                nets: vec![("x".into(), Mlp::new(&[3, 4, 2], &mut rng)), ("y".into(), Mlp::new(&[2, 1], &mut rng))],
            },
            NamedNets {
                model: "B".into(),
                nets: vec![("z".into(), Mlp::new(&[1, 5], &mut rng))],
            },
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &models).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, models);
        assert!(read_checkpoint(&b"garbage\n"[..]).is_err());
        let truncated = &buf[..buf.len() - 4];
        assert!(read_checkpoint(truncated).is_err());
    }
}
