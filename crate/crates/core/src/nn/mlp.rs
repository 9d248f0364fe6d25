use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Width of the hidden layers of every network in this crate.
pub const HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    /// ELU with α = 1.
    Elu,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Elu => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Elu),
            _ => None,
        }
    }
}

/// Fully connected network with parameters in one flat buffer.
///
/// Layer `l` maps `sizes[l] → sizes[l+1]`; its weights are stored row-major
/// as an `(in × out)` block followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Activations saved by a forward pass: `inputs[l]` feeds layer `l` and
/// `pre[l]` is its pre-activation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    /// Zero-initialized network.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::size(format!("invalid layer sizes {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::size(format!(
                "{} activations for {} layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        let count = param_count(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; count],
        })
    }

    /// ELU on every hidden layer, identity on the output.
    pub fn standard(sizes: &[usize]) -> Result<Self> {
        let mut acts = vec![Activation::Elu; sizes.len().saturating_sub(2)];
        acts.push(Activation::Identity);
        Self::zeros(sizes, &acts)
    }

    /// `d_in → 64 → 64 → d_out`.
    pub fn propagator(d_in: usize, d_out: usize) -> Result<Self> {
        Self::standard(&[d_in, HIDDEN, HIDDEN, d_out])
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init_glorot(&mut self, seed: u64) {
        let mut rng = seed::rng_for(seed, seed::stream::INIT, 0);
        let mut off = 0;
        for l in 0..self.num_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let limit = (6.0 / (i + o) as f64).sqrt();
            for w in &mut self.params[off..off + i * o] {
                *w = rng.random_range(-limit..limit);
            }
            self.params[off + i * o..off + i * o + o].fill(0.0);
            off += i * o + o;
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::size(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1]).sum()
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer);
        ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).unwrap()
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer) + i * o;
        ArrayView1::from(&self.params[off..off + o])
    }

    /// Split into the first `layer` layers and the rest.
    pub fn split_at(&self, layer: usize) -> Result<(Mlp, Mlp)> {
        if layer == 0 || layer >= self.num_layers() {
            return Err(Error::size(format!("cannot split {} layers at {layer}", self.num_layers())));
        }
        let off = self.offset(layer);
        Ok((
            Mlp {
                sizes: self.sizes[..=layer].to_vec(),
                activations: self.activations[..layer].to_vec(),
                params: self.params[..off].to_vec(),
            },
            Mlp {
                sizes: self.sizes[layer..].to_vec(),
                activations: self.activations[layer..].to_vec(),
                params: self.params[off..].to_vec(),
            },
        ))
    }

    /// Stack `self` followed by `next`.
    pub fn chain(&self, next: &Mlp) -> Result<Mlp> {
        if self.output_dim() != next.input_dim() {
            return Err(Error::size(format!(
                "cannot chain output {} into input {}",
                self.output_dim(),
                next.input_dim()
            )));
        }
        let mut sizes = self.sizes.clone();
        sizes.extend_from_slice(&next.sizes[1..]);
        let mut activations = self.activations.clone();
        activations.extend_from_slice(&next.activations);
        let mut params = self.params.clone();
        params.extend_from_slice(&next.params);
        Ok(Mlp {
            sizes,
            activations,
            params,
        })
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::size(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass; row `i` of the output depends only on row `i`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for l in 0..self.num_layers() {
            let mut z = self.affine(l, a.view());
            if self.activations[l] == Activation::Elu {
                z.mapv_inplace(elu);
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass keeping what `backward` needs.
    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut a = x.to_owned();
        for l in 0..self.num_layers() {
            let z = self.affine(l, a.view());
            let out = match self.activations[l] {
                Activation::Elu => z.mapv(elu),
                Activation::Identity => z.clone(),
            };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: a,
        })
    }

    fn affine(&self, layer: usize, a: ArrayView2<'_, f64>) -> Array2<f64> {
        let b = self.bias(layer);
        let mut z = Array2::from_shape_fn((a.nrows(), b.len()), |(_, j)| b[j]);
        general_mat_mul(1.0, &a, &self.weights(layer), 1.0, &mut z);
        z
    }

    /// Backpropagate `d_output = ∂L/∂output`. Writes the parameter gradient
    /// into `grad` (overwrite) and returns `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>, grad: &mut [f64]) -> Result<Array2<f64>> {
        if grad.len() != self.params.len() {
            return Err(Error::size("gradient buffer does not match parameter count"));
        }
        if d_output.dim() != cache.output.dim() {
            return Err(Error::size("output gradient shape does not match forward pass"));
        }
        let mut delta = d_output.clone();
        for l in (0..self.num_layers()).rev() {
            if self.activations[l] == Activation::Elu {
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre[l])
                    .for_each(|d, &z| *d *= elu_grad(z));
            }
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let (w_grad, rest) = grad[off..off + i * o + o].split_at_mut(i * o);
            let mut w_grad = ArrayViewMut2::from_shape((i, o), w_grad).unwrap();
            general_mat_mul(1.0, &cache.inputs[l].t(), &delta, 0.0, &mut w_grad);
            for (b, s) in rest.iter_mut().zip(delta.sum_axis(Axis(0)).iter()) {
                *b = *s;
            }
            delta = delta.dot(&self.weights(l).t());
        }
        Ok(delta)
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[inline]
pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

pub(crate) fn write_layout(net: &Mlp, buf: &mut Vec<u8>) {
    buf.extend_from_slice(&(net.num_layers() as u32).to_le_bytes());
    for &s in &net.sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for a in &net.activations {
        buf.push(a.tag());
    }
}

pub(crate) fn read_layout(bytes: &[u8], pos: &mut usize) -> Result<(Vec<usize>, Vec<Activation>)> {
    let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*pos..*pos + len)
            .ok_or_else(|| Error::format(*pos as u64, "truncated network layout"))?;
        *pos += len;
        Ok(s)
    };
    let layers_off = *pos as u64;
    let layers = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
    if layers == 0 || layers > 64 {
        return Err(Error::format(layers_off, format!("implausible layer count {layers}")));
    }
    let mut sizes = Vec::with_capacity(layers + 1);
    for _ in 0..=layers {
        let off = *pos as u64;
        let s = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
        if s == 0 || s > 1 << 20 {
            return Err(Error::format(off, format!("implausible layer size {s}")));
        }
        sizes.push(s);
    }
    let mut acts = Vec::with_capacity(layers);
    for _ in 0..layers {
        let off = *pos as u64;
        let t = take(pos, 1)?[0];
        acts.push(Activation::from_tag(t).ok_or_else(|| Error::format(off, format!("unknown activation tag {t}")))?);
    }
    Ok((sizes, acts))
}
