//! Fully connected Q-network with rectifier hidden layers, its TD
//! gradient, and an adaptive-moment optimizer.
//!
//! Parameters live in one flat vector: for each layer the weights
//! row-major `[out][in]`, then the bias `[out]`. Checkpoints store that
//! vector as little-endian `f64` next to a JSON sidecar with the shapes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default topology: 8 inputs, two hidden layers of 32, 11 Q-values.
pub const DEFAULT_SIZES: [usize; 4] = [8, 32, 32, 11];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LayerView {
    w: usize,
    b: usize,
    inputs: usize,
    outputs: usize,
}

fn layout(sizes: &[usize]) -> (Vec<LayerView>, usize) {
    let mut views = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut off = 0;
    for w in sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        views.push(LayerView {
            w: off,
            b: off + inputs * outputs,
            inputs,
            outputs,
        });
        off += inputs * outputs + outputs;
    }
    (views, off)
}

/// Activations of one forward pass, reused across calls.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    /// Pre-activations per layer.
    z: Vec<Vec<f64>>,
    /// Post-activations per layer, including the input at index 0.
    a: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output layer");
        let (_, n) = layout(sizes);
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let (views, _) = layout(sizes);
        for v in views {
            let bound = 1.0 / (v.inputs as f64).sqrt();
            for p in &mut net.params[v.w..v.b + v.outputs] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let (_, n) = layout(sizes);
        if sizes.len() < 2 || params.len() != n {
            return Err(Error::Dimension(format!(
                "{} parameters for layer sizes {sizes:?} (expected {n})",
                params.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("non-empty")
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

    /// Weight `(row, col)` of `layer`, for hand-built networks.
    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) {
        let v = layout(&self.sizes).0[layer];
        self.params[v.w + row * v.inputs + col] = value;
    }

    pub fn set_bias(&mut self, layer: usize, row: usize, value: f64) {
        let v = layout(&self.sizes).0[layer];
        self.params[v.b + row] = value;
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Dimension(format!(
                "input of length {} for a network with {} inputs",
                x.len(),
                self.inputs()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite network input".into()));
        }
        let mut ws = Workspace::default();
        Ok(self.forward_with(x, &mut ws).to_vec())
    }

    /// Forward pass without input checks; keeps activations in `ws`.
    pub fn forward_with<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        let (views, _) = layout(&self.sizes);
        let layers = views.len();
        if ws.a.len() != layers + 1 {
            ws.a = self.sizes.iter().map(|&n| vec![0.0; n]).collect();
            ws.z = self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        }
        ws.a[0].copy_from_slice(x);
        for (l, v) in views.iter().enumerate() {
            let (head, tail) = ws.a.split_at_mut(l + 1);
            let input = &head[l];
            let z = &mut ws.z[l];
            let w = &self.params[v.w..v.b];
            let b = &self.params[v.b..v.b + v.outputs];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * v.inputs..(o + 1) * v.inputs];
                *zo = b[o] + row.iter().zip(input.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
            let out = &mut tail[0];
            if l + 1 < layers {
                for (a, &zv) in out.iter_mut().zip(z.iter()) {
                    *a = zv.max(0.0);
                }
            } else {
                out.copy_from_slice(z);
            }
        }
        &ws.a[layers]
    }

    /// Gradient of `0.5 * (Q(x)[action] - target)^2`.
    pub fn td_gradient(&self, x: &[f64], action: usize, target: f64) -> Result<Vec<f64>> {
        if action >= self.outputs() {
            return Err(Error::Contract(format!("action {action} out of range")));
        }
        if x.len() != self.inputs() {
            return Err(Error::Dimension("input length".into()));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::default();
        self.accumulate_td(x, action, target, 1.0, &mut grad, &mut ws);
        Ok(grad)
    }

    /// Adds `scale` times the TD gradient at `x` to `grad`; returns the
    /// residual `Q(x)[action] - target`.
    pub fn accumulate_td(
        &self,
        x: &[f64],
        action: usize,
        target: f64,
        scale: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        let residual = self.forward_with(x, ws)[action] - target;
        let (views, _) = layout(&self.sizes);
        let last = views.len() - 1;

        // output layer: only the selected head carries error
        let v = views[last];
        let d = residual * scale;
        let a_in = &ws.a[last];
        for (g, a) in grad[v.w + action * v.inputs..v.w + (action + 1) * v.inputs]
            .iter_mut()
            .zip(a_in)
        {
            *g += d * a;
        }
        grad[v.b + action] += d;
        ws.delta.clear();
        ws.delta.extend(
            self.params[v.w + action * v.inputs..v.w + (action + 1) * v.inputs]
                .iter()
                .zip(&ws.z[last - 1])
                .map(|(w, &z)| if z > 0.0 { w * d } else { 0.0 }),
        );

        for l in (0..last).rev() {
            let v = views[l];
            let a_in = &ws.a[l];
            for (o, &dl) in ws.delta.iter().enumerate() {
                if dl != 0.0 {
                    let g = &mut grad[v.w + o * v.inputs..v.w + (o + 1) * v.inputs];
                    for (gi, ai) in g.iter_mut().zip(a_in) {
                        *gi += dl * ai;
                    }
                    grad[v.b + o] += dl;
                }
            }
            if l > 0 {
                ws.delta_next.clear();
                ws.delta_next.resize(v.inputs, 0.0);
                for (o, &dl) in ws.delta.iter().enumerate() {
                    if dl != 0.0 {
                        let row = &self.params[v.w + o * v.inputs..v.w + (o + 1) * v.inputs];
                        for (dn, w) in ws.delta_next.iter_mut().zip(row) {
                            *dn += w * dl;
                        }
                    }
                }
                for (dn, &z) in ws.delta_next.iter_mut().zip(&ws.z[l - 1]) {
                    if z <= 0.0 {
                        *dn = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_next);
            }
        }
        residual
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) {
        debug_assert_eq!(self.sizes, online.sizes);
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }

    /// Writes the parameters to `path` and the shape sidecar next to it
    /// (`<path>.json`). `metadata` is stored verbatim in the sidecar.
    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            format: SIDECAR_FORMAT.into(),
            version: 1,
            layer_sizes: self.sizes.clone(),
            activation: "relu".into(),
            layout: "per layer: weights row-major [out][in] then bias [out]; little-endian f64".into(),
            parameter_count: self.params.len(),
            metadata,
        };
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::format(&side, e))?;
        if sidecar.format != SIDECAR_FORMAT {
            return Err(Error::format(&side, format!("unknown format '{}'", sidecar.format)));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != sidecar.parameter_count * 8 {
            return Err(Error::format(path, "parameter file size does not match the sidecar"));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let net = Mlp::from_params(&sidecar.layer_sizes, params).map_err(|e| Error::format(path, e))?;
        Ok((net, sidecar.metadata))
    }
}

const SIDECAR_FORMAT: &str = "irl-dr-mlp";

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    activation: String,
    layout: String,
    parameter_count: usize,
    #[serde(default)]
    metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn apply(&mut self, net: &mut Mlp, grad: &[f64]) -> Result<()> {
        if grad.len() != net.params.len() || self.m.len() != grad.len() {
            return Err(Error::Dimension("gradient and parameter shapes differ".into()));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in net.params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        if !net.is_finite() {
            return Err(Error::Numerical("non-finite parameters after update".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&DEFAULT_SIZES);
        assert_eq!(net.forward(&[1.0; 8]).unwrap(), vec![0.0; 11]);
        assert_eq!(net.params().len(), 8 * 32 + 32 + 32 * 32 + 32 + 32 * 11 + 11);
    }

    #[test]
    fn handcrafted_passthrough() {
        // route input 2 through one hidden unit to output 5
        let mut net = Mlp::zeros(&DEFAULT_SIZES);
        net.set_weight(0, 0, 2, 1.0);
        net.set_weight(1, 0, 0, 1.0);
        net.set_weight(2, 5, 0, 1.0);
        let mut x = [0.0; 8];
        x[2] = 0.37;
        let y = net.forward(&x).unwrap();
        assert_eq!(y[5], 0.37);
        assert!(y.iter().enumerate().all(|(i, v)| i == 5 || *v == 0.0));
    }

    #[test]
    fn input_contract() {
        let net = Mlp::zeros(&DEFAULT_SIZES);
        assert!(matches!(net.forward(&[f64::NAN; 8]), Err(Error::Contract(_))));
        assert!(matches!(net.forward(&[0.0; 3]), Err(Error::Dimension(_))));
        assert!(net.td_gradient(&[0.0; 8], 11, 0.0).is_err());
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&DEFAULT_SIZES, &mut rng);
        let x = [0.3, -0.2, 0.5, 0.1, 0.0, 0.9, -0.4, 0.2];
        let q = net.forward(&x).unwrap();
        let g = net.td_gradient(&x, 4, q[4]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unselected_heads_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&DEFAULT_SIZES, &mut rng);
        let g = net.td_gradient(&[0.5; 8], 3, 10.0).unwrap();
        let (views, _) = layout(net.sizes());
        let out = views[2];
        for o in (0..11).filter(|&o| o != 3) {
            assert!(g[out.w + o * 32..out.w + (o + 1) * 32].iter().all(|v| *v == 0.0));
            assert_eq!(g[out.b + o], 0.0);
        }
        assert!(g[out.b + 3] != 0.0);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&DEFAULT_SIZES, &mut rng);
        let before = net.clone();
        let mut opt = Adam::new(net.params().len(), 0.001);
        opt.apply(&mut net, &vec![0.0; before.params().len()]).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_scalar_trace() {
        let mut net = Mlp::from_params(&[1, 1], vec![0.0, 0.0]).unwrap();
        let mut opt = Adam::new(2, 0.001);
        let g = [0.5, -2.0];
        opt.apply(&mut net, &g).unwrap();
        // m1 = 0.1 g, v1 = 0.001 g^2; corrected: m = g, v = g^2
        assert!((opt.first_moment()[0] - 0.05).abs() < 1e-15);
        assert!((opt.second_moment()[1] - 0.004).abs() < 1e-15);
        let step0 = 0.001 * 0.5 / (0.5 + 1e-8);
        assert!((net.params()[0] + step0).abs() < 1e-15);
        opt.apply(&mut net, &g).unwrap();
        let m2 = 0.9 * 0.05 + 0.1 * 0.5;
        let v2 = 0.999 * 0.00025 + 0.001 * 0.25;
        assert!((opt.first_moment()[0] - m2).abs() < 1e-15);
        assert!((opt.second_moment()[0] - v2).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_step_is_lr() {
        let mut net = Mlp::from_params(&[1, 1], vec![0.0, 0.0]).unwrap();
        let mut opt = Adam::new(2, 0.001);
        let mut prev = net.params()[0];
        for _ in 0..1000 {
            opt.apply(&mut net, &[3.0, 3.0]).unwrap();
            let step = prev - net.params()[0];
            assert!((step - 0.001).abs() < 1e-9, "{step}");
            prev = net.params()[0];
        }
    }

    #[test]
    fn soft_update_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let online = Mlp::new(&DEFAULT_SIZES, &mut rng);
        let target = Mlp::new(&DEFAULT_SIZES, &mut rng);
        let mut t = target.clone();
        t.soft_update(&online, 0.0);
        assert_eq!(t, target);
        t.soft_update(&online, 1.0);
        assert_eq!(t, online);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&DEFAULT_SIZES, &mut rng);
        net.save(&path, serde_json::json!({"note": 1})).unwrap();
        let (back, meta) = Mlp::load(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(meta["note"], 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 * 1707);
    }
}
