//! Fully connected Q-network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is linear with one unit per
//! action. Parameters are addressed in a flat order: for each layer, the
//! weight matrix (input-major, `w[i * outputs + o]`) followed by the biases.

use rand::Rng;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Weight matrix `outputs x inputs` given row by row (`rows[o][i]`).
    pub fn from_rows(rows: &[Vec<f64>], biases: Vec<f64>) -> Result<Self> {
        let outputs = rows.len();
        let inputs = rows.first().map_or(0, Vec::len);
        if outputs == 0 || inputs == 0 || rows.iter().any(|r| r.len() != inputs) {
            return Err(Error::ShapeMismatch {
                expected: "non-empty rectangular weight rows".into(),
                actual: format!("{outputs} rows"),
            });
        }
        if biases.len() != outputs {
            return Err(Error::ShapeMismatch {
                expected: format!("{outputs} biases"),
                actual: format!("{} biases", biases.len()),
            });
        }
        let mut layer = Layer::zeros(inputs, outputs);
        for (o, row) in rows.iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                layer.weights[i * outputs + o] = w;
            }
        }
        layer.biases = biases;
        Ok(layer)
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (i, &x) in input.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (acc, &w) in out.iter_mut().zip(row) {
                *acc += w * x;
            }
        }
        if relu {
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// One regression target for the output unit `action`.
#[derive(Clone, Copy, Debug)]
pub struct RegressionSample<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

impl QNetwork {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_len: usize,
        hidden: &[usize],
        output_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_len, hidden, output_len)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(input_len: usize, hidden: &[usize], output_len: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_len);
        sizes.extend_from_slice(hidden);
        sizes.push(output_len);
        if sizes.contains(&0) {
            return Err(Error::config(format!(
                "layer sizes must be positive: {sizes:?}"
            )));
        }
        Ok(QNetwork {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} inputs", pair[0].outputs),
                    actual: format!("{} inputs", pair[1].inputs),
                });
            }
        }
        Ok(QNetwork { layers })
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// `[input, hidden.., output]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_len())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.param_count()),
                actual: format!("{} parameters", params.len()),
            });
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.biases.len());
            layer.weights.copy_from_slice(w);
            layer.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    /// Visits every parameter in flat order.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                f(idx, p);
                idx += 1;
            }
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("observation of length {}", self.input_len()),
                actual: format!("length {}", input.len()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut acts = vec![Vec::new(); self.layers.len()];
        self.trace(input, &mut acts);
        Ok(acts.pop().unwrap_or_default())
    }

    /// Fills `acts[l]` with layer `l`'s output (after ReLU for hidden layers).
    fn trace(&self, input: &[f64], acts: &mut [Vec<f64>]) {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.split_at_mut(l);
            let x = if l == 0 { input } else { &done[l - 1] };
            layer.forward_into(x, &mut rest[0], l != last);
        }
    }

    /// Mean squared error over `samples`, each comparing one output unit
    /// against its target.
    pub fn loss(&self, samples: &[RegressionSample<'_>]) -> Result<f64> {
        let mut acts = vec![Vec::new(); self.layers.len()];
        let mut total = 0.0;
        for s in samples {
            self.check_sample(s)?;
            self.trace(s.input, &mut acts);
            let err = acts[acts.len() - 1][s.action] - s.target;
            total += err * err;
        }
        Ok(total / samples.len().max(1) as f64)
    }

    fn check_sample(&self, s: &RegressionSample<'_>) -> Result<()> {
        self.check_input(s.input)?;
        if s.action >= self.output_len() {
            return Err(Error::OutOfRange {
                index: s.action,
                len: self.output_len(),
            });
        }
        Ok(())
    }

    /// Loss and its gradient in flat parameter order.
    pub fn loss_and_gradient(&self, samples: &[RegressionSample<'_>]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.param_count()];
        if samples.is_empty() {
            return Ok((0.0, grad));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }

        let scale = 2.0 / samples.len() as f64;
        let mut acts = vec![Vec::new(); self.layers.len()];
        let mut delta = Vec::new();
        let mut next_delta = Vec::new();
        let mut loss = 0.0;
        for s in samples {
            self.check_sample(s)?;
            self.trace(s.input, &mut acts);
            let err = acts[acts.len() - 1][s.action] - s.target;
            loss += err * err;

            delta.clear();
            delta.resize(self.output_len(), 0.0);
            delta[s.action] = scale * err;
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let x: &[f64] = if l == 0 { s.input } else { &acts[l - 1] };
                let (gw, gb) = grad[offsets[l]..offsets[l] + layer.param_count()]
                    .split_at_mut(layer.weights.len());
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                    for (g, &d) in row.iter_mut().zip(&delta) {
                        *g += xi * d;
                    }
                }
                for (g, &d) in gb.iter_mut().zip(&delta) {
                    *g += d;
                }
                if l > 0 {
                    next_delta.clear();
                    next_delta.extend(x.iter().enumerate().map(|(i, &xi)| {
                        // ReLU gate: post-activation is positive iff pre-activation was.
                        if xi > 0.0 {
                            let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                            row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                        } else {
                            0.0
                        }
                    }));
                    std::mem::swap(&mut delta, &mut next_delta);
                }
            }
        }
        Ok((loss / samples.len() as f64, grad))
    }

    pub fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot {
            layer_sizes: self.layer_sizes(),
            params: self.params(),
        }
    }

    pub fn load_snapshot(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        if snapshot.layer_sizes != self.layer_sizes() {
            return Err(Error::ShapeMismatch {
                expected: format!("architecture {:?}", self.layer_sizes()),
                actual: format!("architecture {:?}", snapshot.layer_sizes),
            });
        }
        self.set_params(&snapshot.params)
    }

    pub fn from_snapshot(snapshot: &WeightSnapshot) -> Result<Self> {
        let sizes = &snapshot.layer_sizes;
        if sizes.len() < 2 {
            return Err(Error::Snapshot("fewer than two layer sizes".into()));
        }
        let mut net = Self::zeros(sizes[0], &sizes[1..sizes.len() - 1], sizes[sizes.len() - 1])?;
        net.set_params(&snapshot.params)?;
        Ok(net)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut QNetwork, grad: &[f64], learning_rate: f64) {
        debug_assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut off = 0;
        for layer in &mut net.layers {
            for params in [&mut layer.weights, &mut layer.biases] {
                let n = params.len();
                let state = self.m[off..off + n]
                    .iter_mut()
                    .zip(&mut self.v[off..off + n]);
                for ((p, &g), (m, v)) in params.iter_mut().zip(&grad[off..off + n]).zip(state) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
                }
                off += n;
            }
        }
    }
}

/// Architecture plus flat parameters.
///
/// Binary layout (little-endian): magic `QNET`, `u32` format version (1),
/// `u32` layer-size count `n`, `n x u32` layer sizes, `u64` parameter count,
/// then the parameters as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSnapshot {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"QNET";
const SNAPSHOT_VERSION: u32 = 1;

impl WeightSnapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.layer_sizes.len() + 8 * self.params.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses one snapshot from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cursor = ByteCursor { bytes, pos: 0 };
        if cursor.take(4)? != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = cursor.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let n = cursor.u32()? as usize;
        let layer_sizes = (0..n)
            .map(|_| cursor.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = cursor.u64()? as usize;
        let expected: usize = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if count != expected {
            return Err(Error::Snapshot(format!(
                "parameter count {count} does not match architecture ({expected})"
            )));
        }
        let params = (0..count)
            .map(|_| {
                cursor
                    .take(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            WeightSnapshot {
                layer_sizes,
                params,
            },
            cursor.pos,
        ))
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Snapshot("truncated".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Central finite differences of the loss for every parameter.
pub fn finite_difference_gradient(
    net: &QNetwork,
    samples: &[RegressionSample<'_>],
    perturbation: f64,
) -> Result<Vec<f64>> {
    let base = net.params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        params[i] = base[i] + perturbation;
        probe.set_params(&params)?;
        let plus = probe.loss(samples)?;
        params[i] = base[i] - perturbation;
        probe.set_params(&params)?;
        let minus = probe.loss(samples)?;
        params[i] = base[i];
        grad.push((plus - minus) / (2.0 * perturbation));
    }
    Ok(grad)
}

/// Max over parameters of `|fd - analytic| / max(1e-8, |fd| + |analytic|)`.
pub fn gradient_check_against(
    net: &QNetwork,
    samples: &[RegressionSample<'_>],
    perturbation: f64,
    analytic: &[f64],
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&perturbation) {
        return Err(Error::config("perturbation must lie in [1e-7, 1e-3]"));
    }
    if analytic.len() != net.param_count() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradient entries", net.param_count()),
            actual: format!("{}", analytic.len()),
        });
    }
    let fd = finite_difference_gradient(net, samples, perturbation)?;
    Ok(fd
        .iter()
        .zip(analytic)
        .map(|(f, b)| (f - b).abs() / (f.abs() + b.abs()).max(1e-8))
        .fold(0.0, f64::max))
}

/// Compares backprop against central finite differences.
pub fn gradient_check(
    net: &QNetwork,
    samples: &[RegressionSample<'_>],
    perturbation: f64,
) -> Result<f64> {
    let (_, analytic) = net.loss_and_gradient(samples)?;
    gradient_check_against(net, samples, perturbation, &analytic)
}
