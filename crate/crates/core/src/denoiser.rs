//! Conditional noise-prediction network.
//!
//! Per point, the input `[position ⊕ condition features ⊕ time embedding]`
//! goes through two SiLU layers (`enc1`, `enc2`). Their output is max-pooled
//! over points, projected (`pool_proj`), and concatenated back onto every
//! point before a two-layer head (`head1`, `head2`) emits the noise estimate.
//! Max-pool ties resolve to the lowest point index, which also receives the
//! whole subgradient.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::Vector3;
use rand::Rng as _;

use crate::geometry::PointCloud;
use crate::rng::{self, streams};
use crate::{Error, Result};

pub const LAYER_NAMES: [&str; 5] = ["enc1", "enc2", "pool_proj", "head1", "head2"];

/// Sinusoidal timestep embedding: `[sin(t·ω_0), cos(t·ω_0), sin(t·ω_1), ...]`
/// with `ω_k = 10000^(-2k/dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    pub values: Vec<f64>,
}

/// `t = 0` is accepted so the embedding can be inspected at the origin.
pub fn time_embed(t: usize, dim: usize, steps: usize) -> Result<TimeEmbedding> {
    if dim % 2 != 0 {
        return Err(Error::invalid(format!("time embedding dim must be even, got {dim}")));
    }
    if t > steps {
        return Err(Error::invalid(format!("timestep {t} exceeds T = {steps}")));
    }
    let mut values = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let omega = 10000f64.powf(-(2.0 * k as f64) / dim as f64);
        let (s, c) = (t as f64 * omega).sin_cos();
        values.push(s);
        values.push(c);
    }
    Ok(TimeEmbedding { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserDims {
    pub cond_dim: usize,
    pub hidden_dim: usize,
    pub time_embed_dim: usize,
}

impl DenoiserDims {
    pub fn input_dim(&self) -> usize {
        3 + self.cond_dim + self.time_embed_dim
    }

    fn layer_shapes(&self) -> [(usize, usize); 5] {
        let h = self.hidden_dim;
        [
            (h, self.input_dim()),
            (h, h),
            (h, h),
            (h, 2 * h),
            (3, h),
        ]
    }
}

/// A dense layer inside the flat parameter vector: an `out × in` row-major
/// weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlice {
    pub name: String,
    pub offset: usize,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl LayerSlice {
    pub fn len(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.out_dim * self.in_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    dims: DenoiserDims,
    layout: Vec<LayerSlice>,
    values: Vec<f64>,
}

fn build_layout(dims: &DenoiserDims) -> Vec<LayerSlice> {
    let mut offset = 0;
    LAYER_NAMES
        .iter()
        .zip(dims.layer_shapes())
        .map(|(name, (out_dim, in_dim))| {
            let slice = LayerSlice {
                name: name.to_string(),
                offset,
                out_dim,
                in_dim,
            };
            offset += slice.len();
            slice
        })
        .collect()
}

fn validate_dims(dims: &DenoiserDims) -> Result<()> {
    if dims.hidden_dim == 0 {
        return Err(Error::invalid("hidden_dim must be positive"));
    }
    if dims.time_embed_dim == 0 || dims.time_embed_dim % 2 != 0 {
        return Err(Error::invalid("time_embed_dim must be positive and even"));
    }
    Ok(())
}

impl DenoiserParams {
    /// Parameter vector laid out for `dims`; `values` must match exactly.
    pub fn from_values(dims: DenoiserDims, values: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let layout = build_layout(&dims);
        let total: usize = layout.iter().map(LayerSlice::len).sum();
        if values.len() != total {
            return Err(Error::shape(format!(
                "{} parameters for a layout of {total}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(Self {
            dims,
            layout,
            values,
        })
    }

    pub fn dims(&self) -> DenoiserDims {
        self.dims
    }

    pub fn layout(&self) -> &[LayerSlice] {
        &self.layout
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSlice> {
        self.layout.iter().find(|l| l.name == name)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self -= lr · grad`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.values.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.dims.hidden_dim.hash(&mut h);
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn dense(&self, layer: usize) -> Dense<'_> {
        let l = &self.layout[layer];
        Dense {
            w: &self.values[l.offset..l.bias_offset()],
            b: &self.values[l.bias_offset()..l.offset + l.len()],
            out_dim: l.out_dim,
            in_dim: l.in_dim,
        }
    }
}

/// Uniform `±1/√fan_in` weights and biases; `head2` starts at zero so the
/// initial noise estimate is identically zero.
pub fn init_params(seed: u64, dims: DenoiserDims) -> Result<DenoiserParams> {
    validate_dims(&dims)?;
    let layout = build_layout(&dims);
    let total: usize = layout.iter().map(LayerSlice::len).sum();
    let mut values = vec![0.0; total];
    let mut rng = rng::stream(seed, streams::INIT);
    for l in &layout {
        if l.name == "head2" {
            continue;
        }
        let bound = 1.0 / (l.in_dim as f64).sqrt();
        for v in &mut values[l.range()] {
            *v = rng.random_range(-bound..bound);
        }
    }
    DenoiserParams::from_values(dims, values)
}

struct Dense<'a> {
    w: &'a [f64],
    b: &'a [f64],
    out_dim: usize,
    in_dim: usize,
}

impl Dense<'_> {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.w.chunks_exact(self.in_dim).zip(self.b)) {
            *o = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulates `dW += dy ⊗ x`, `db += dy` into `grad` (this layer's
    /// slice) and writes `Wᵀ dy` into `dx` when given.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let (gw, gb) = grad.split_at_mut(self.out_dim * self.in_dim);
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            for (g, xv) in gw[o * self.in_dim..(o + 1) * self.in_dim].iter_mut().zip(x) {
                *g += d * xv;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in dy.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (dxv, w) in dx.iter_mut().zip(&self.w[o * self.in_dim..(o + 1) * self.in_dim]) {
                    *dxv += d * w;
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Activations kept for the backward pass. Row-major per-point matrices.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    params_fingerprint: u64,
    n: usize,
    input: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
    zp: Vec<f64>,
    cat: Vec<f64>,
    z3: Vec<f64>,
    h3: Vec<f64>,
}

/// Gradients from [`denoise_backward`].
#[derive(Debug, Clone)]
pub struct DenoiserGrad {
    /// Same layout as the parameter vector.
    pub params: Vec<f64>,
    /// `N × (3 + cond_dim)` gradient w.r.t. positions and condition features.
    pub input: Vec<f64>,
}

/// Predicts per-point noise for the conditioned cloud `x_t` at step `t` of
/// `steps`.
pub fn denoise_forward(
    params: &DenoiserParams,
    x_t: &PointCloud,
    t: usize,
    steps: usize,
) -> Result<(Vec<Vector3<f64>>, ForwardCache)> {
    let dims = params.dims;
    if x_t.feature_width() != dims.cond_dim {
        return Err(Error::shape(format!(
            "cloud carries {} condition features, denoiser expects {}",
            x_t.feature_width(),
            dims.cond_dim
        )));
    }
    let temb = time_embed(t, dims.time_embed_dim, steps)?;
    let n = x_t.len();
    let (din, h) = (dims.input_dim(), dims.hidden_dim);

    let mut input = Vec::with_capacity(n * din);
    for (i, p) in x_t.positions().iter().enumerate() {
        input.extend_from_slice(&[p.x, p.y, p.z]);
        if let Some(f) = x_t.features() {
            input.extend_from_slice(f.row(i));
        }
        input.extend_from_slice(&temb.values);
    }

    let (enc1, enc2, pool, head1, head2) =
        (params.dense(0), params.dense(1), params.dense(2), params.dense(3), params.dense(4));
    let mut z1 = vec![0.0; n * h];
    let mut z2 = vec![0.0; n * h];
    let mut h1 = vec![0.0; n * h];
    let mut h2 = vec![0.0; n * h];
    for i in 0..n {
        enc1.apply(&input[i * din..(i + 1) * din], &mut z1[i * h..(i + 1) * h]);
        for k in i * h..(i + 1) * h {
            h1[k] = silu(z1[k]);
        }
        enc2.apply(&h1[i * h..(i + 1) * h], &mut z2[i * h..(i + 1) * h]);
        for k in i * h..(i + 1) * h {
            h2[k] = silu(z2[k]);
        }
    }

    let mut argmax = vec![0usize; h];
    let mut pooled = h2[..h].to_vec();
    for i in 1..n {
        for k in 0..h {
            let v = h2[i * h + k];
            if v > pooled[k] {
                pooled[k] = v;
                argmax[k] = i;
            }
        }
    }
    let mut zp = vec![0.0; h];
    pool.apply(&pooled, &mut zp);
    let gp: Vec<f64> = zp.iter().map(|&z| silu(z)).collect();

    let mut cat = vec![0.0; n * 2 * h];
    let mut z3 = vec![0.0; n * h];
    let mut h3 = vec![0.0; n * h];
    let mut out = Vec::with_capacity(n);
    let mut eps = [0.0; 3];
    for i in 0..n {
        let row = &mut cat[i * 2 * h..(i + 1) * 2 * h];
        row[..h].copy_from_slice(&h2[i * h..(i + 1) * h]);
        row[h..].copy_from_slice(&gp);
        head1.apply(row, &mut z3[i * h..(i + 1) * h]);
        for k in i * h..(i + 1) * h {
            h3[k] = silu(z3[k]);
        }
        head2.apply(&h3[i * h..(i + 1) * h], &mut eps);
        out.push(Vector3::new(eps[0], eps[1], eps[2]));
    }

    let cache = ForwardCache {
        params_fingerprint: params.fingerprint(),
        n,
        input,
        z1,
        h1,
        z2,
        argmax,
        pooled,
        zp,
        cat,
        z3,
        h3,
    };
    Ok((out, cache))
}

/// Reverse-mode gradients for `Σ upstream · ε̂`.
pub fn denoise_backward(
    params: &DenoiserParams,
    cache: &ForwardCache,
    upstream: &[Vector3<f64>],
) -> Result<DenoiserGrad> {
    if cache.params_fingerprint != params.fingerprint() {
        return Err(Error::StaleCache("parameters changed since the forward pass".into()));
    }
    if upstream.len() != cache.n {
        return Err(Error::StaleCache(format!(
            "upstream has {} rows, cached forward had {}",
            upstream.len(),
            cache.n
        )));
    }
    let dims = params.dims;
    let (n, h, din) = (cache.n, dims.hidden_dim, dims.input_dim());
    let mut grad = vec![0.0; params.len()];
    let ranges: Vec<_> = params.layout.iter().map(LayerSlice::range).collect();
    let (enc1, enc2, pool, head1, head2) =
        (params.dense(0), params.dense(1), params.dense(2), params.dense(3), params.dense(4));

    let mut dh2 = vec![0.0; n * h];
    let mut dgp = vec![0.0; h];
    let mut dh3 = vec![0.0; h];
    let mut dz3 = vec![0.0; h];
    let mut dcat = vec![0.0; 2 * h];
    for i in 0..n {
        let dy = [upstream[i].x, upstream[i].y, upstream[i].z];
        if dy == [0.0; 3] {
            continue;
        }
        head2.backward(&cache.h3[i * h..(i + 1) * h], &dy, &mut grad[ranges[4].clone()], Some(&mut dh3));
        for k in 0..h {
            dz3[k] = dh3[k] * silu_grad(cache.z3[i * h + k]);
        }
        head1.backward(
            &cache.cat[i * 2 * h..(i + 1) * 2 * h],
            &dz3,
            &mut grad[ranges[3].clone()],
            Some(&mut dcat),
        );
        for k in 0..h {
            dh2[i * h + k] += dcat[k];
            dgp[k] += dcat[h + k];
        }
    }

    let dzp: Vec<f64> = dgp.iter().zip(&cache.zp).map(|(d, &z)| d * silu_grad(z)).collect();
    let mut dpooled = vec![0.0; h];
    pool.backward(&cache.pooled, &dzp, &mut grad[ranges[2].clone()], Some(&mut dpooled));
    for k in 0..h {
        dh2[cache.argmax[k] * h + k] += dpooled[k];
    }

    let mut input_grad = vec![0.0; n * (3 + dims.cond_dim)];
    let mut dz2 = vec![0.0; h];
    let mut dh1 = vec![0.0; h];
    let mut dz1 = vec![0.0; h];
    let mut dinput = vec![0.0; din];
    for i in 0..n {
        for k in 0..h {
            dz2[k] = dh2[i * h + k] * silu_grad(cache.z2[i * h + k]);
        }
        enc2.backward(&cache.h1[i * h..(i + 1) * h], &dz2, &mut grad[ranges[1].clone()], Some(&mut dh1));
        for k in 0..h {
            dz1[k] = dh1[k] * silu_grad(cache.z1[i * h + k]);
        }
        enc1.backward(
            &cache.input[i * din..(i + 1) * din],
            &dz1,
            &mut grad[ranges[0].clone()],
            Some(&mut dinput),
        );
        let w = 3 + dims.cond_dim;
        input_grad[i * w..(i + 1) * w].copy_from_slice(&dinput[..w]);
    }

    Ok(DenoiserGrad {
        params: grad,
        input: input_grad,
    })
}
