use ndarray::{linalg::general_mat_mul, s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `sin(ω₀·z)`; ω₀ comes from the net spec.
    Sine,
    Tanh,
    Relu,
    Identity,
}

/// Optional random Fourier feature map applied to the input before the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierSpec {
    pub features: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub activation: Activation,
    #[serde(default = "default_omega")]
    pub omega0: f64,
    #[serde(default)]
    pub fourier: Option<FourierSpec>,
}

fn default_omega() -> f64 {
    30.0
}

impl NetSpec {
    pub fn siren(input_dim: usize, output_dim: usize, hidden_width: usize, depth: usize) -> Self {
        NetSpec {
            input_dim,
            output_dim,
            hidden_width,
            depth,
            activation: Activation::Sine,
            omega0: 30.0,
            fourier: None,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_fourier(mut self, features: usize, sigma: f64) -> Self {
        self.fourier = Some(FourierSpec { features, sigma });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::validation("network input/output dimensions must be positive"));
        }
        if self.hidden_width == 0 || self.depth == 0 {
            return Err(Error::validation("network width and depth must be positive"));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::validation("omega0 must be positive and finite"));
        }
        if let Some(f) = self.fourier {
            if f.features == 0 || !(f.sigma > 0.0) {
                return Err(Error::validation("fourier features need positive count and sigma"));
            }
        }
        Ok(())
    }

    /// Width seen by the first dense layer.
    fn mlp_input_dim(&self) -> usize {
        self.fourier.map_or(self.input_dim, |f| 2 * f.features)
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.mlp_input_dim(), self.hidden_width)];
        for _ in 1..self.depth {
            dims.push((self.hidden_width, self.hidden_width));
        }
        dims.push((self.hidden_width, self.output_dim));
        dims
    }

    /// Trainable parameter count (the Fourier kernel is fixed, not trained).
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

/// Dense network with a flat parameter vector. Weights are stored
/// row-major as `fan_in × fan_out`, so a batch forward is `X·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    spec: NetSpec,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
    /// `input_dim × features`, present iff `spec.fourier` is set.
    fourier_kernel: Option<Array2<f64>>,
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Array2<f64>,
    fourier_proj: Option<Array2<f64>>,
    /// Input to each dense layer.
    layer_inputs: Vec<Array2<f64>>,
    /// Derivative of each hidden activation at its pre-activation.
    deriv: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

fn build_layout(spec: &NetSpec) -> Vec<LayerLayout> {
    let mut off = 0;
    spec.layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let l = LayerLayout {
                fan_in,
                fan_out,
                weight: off,
                bias: off + fan_in * fan_out,
            };
            off += fan_in * fan_out + fan_out;
            l
        })
        .collect()
}

impl DenseNet {
    /// Randomly initialized network, deterministic in `seed`.
    ///
    /// Sine nets follow the SIREN scheme: first layer `U(−1/n, 1/n)`, later
    /// layers `U(−√(6/n)/ω₀, √(6/n)/ω₀)`. Tanh/identity nets use Glorot
    /// uniform and ReLU nets He uniform. Biases follow PyTorch's default
    /// `U(−1/√n, 1/√n)`.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self> {
        let mut net = DenseNet::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = net.spec.clone();
        for (li, l) in net.layout.clone().into_iter().enumerate() {
            let n = l.fan_in as f64;
            let w_bound = match spec.activation {
                Activation::Sine if li == 0 && spec.fourier.is_none() => 1.0 / n,
                Activation::Sine => (6.0 / n).sqrt() / spec.omega0,
                Activation::Relu => (6.0 / n).sqrt(),
                Activation::Tanh | Activation::Identity => (6.0 / (n + l.fan_out as f64)).sqrt(),
            };
            let b_bound = 1.0 / n.sqrt();
            for w in &mut net.params[l.weight..l.bias] {
                *w = rng.random_range(-w_bound..=w_bound);
            }
            for b in &mut net.params[l.bias..l.bias + l.fan_out] {
                *b = rng.random_range(-b_bound..=b_bound);
            }
        }
        if let Some(f) = spec.fourier {
            let normal = Normal::new(0.0, f.sigma).map_err(|e| Error::validation(e.to_string()))?;
            net.fourier_kernel = Some(Array2::from_shape_fn((spec.input_dim, f.features), |_| {
                normal.sample(&mut rng)
            }));
        }
        Ok(net)
    }

    /// All parameters zero (Fourier kernel, if any, also zero).
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let layout = build_layout(&spec);
        let params = vec![0.0; spec.param_count()];
        let fourier_kernel = spec
            .fourier
            .map(|f| Array2::zeros((spec.input_dim, f.features)));
        Ok(DenseNet {
            spec,
            layout,
            params,
            fourier_kernel,
        })
    }

    /// Rebuilds a network from stored parts.
    pub fn from_parts(spec: NetSpec, params: Vec<f64>, fourier_kernel: Option<Vec<f64>>) -> Result<Self> {
        let mut net = DenseNet::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        match (net.spec.fourier, fourier_kernel) {
            (Some(f), Some(k)) => {
                net.fourier_kernel = Some(
                    Array2::from_shape_vec((net.spec.input_dim, f.features), k)
                        .map_err(|e| Error::validation(e.to_string()))?,
                );
            }
            (None, None) => {}
            _ => return Err(Error::validation("fourier kernel presence does not match spec")),
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
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

    pub fn fourier_kernel(&self) -> Option<&Array2<f64>> {
        self.fourier_kernel.as_ref()
    }

    fn weight(&self, l: &LayerLayout) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.fan_in, l.fan_out), &self.params[l.weight..l.bias]).unwrap()
    }

    fn bias(&self, l: &LayerLayout) -> &[f64] {
        &self.params[l.bias..l.bias + l.fan_out]
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::validation(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite network input"));
        }
        Ok(())
    }

    fn activate(&self, z: &mut Array2<f64>) {
        let w0 = self.spec.omega0;
        match self.spec.activation {
            Activation::Sine => z.mapv_inplace(|v| (w0 * v).sin()),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }

    /// Applies the activation in place and returns its derivative.
    fn activate_with_deriv(&self, z: &mut Array2<f64>) -> Array2<f64> {
        let w0 = self.spec.omega0;
        let mut d = Array2::zeros(z.raw_dim());
        match self.spec.activation {
            Activation::Sine => ndarray::Zip::from(&mut *z).and(&mut d).for_each(|v, dv| {
                let (s, c) = (w0 * *v).sin_cos();
                *v = s;
                *dv = w0 * c;
            }),
            Activation::Tanh => ndarray::Zip::from(&mut *z).and(&mut d).for_each(|v, dv| {
                let t = v.tanh();
                *v = t;
                *dv = 1.0 - t * t;
            }),
            Activation::Relu => ndarray::Zip::from(&mut *z).and(&mut d).for_each(|v, dv| {
                if *v > 0.0 {
                    *dv = 1.0;
                } else {
                    *v = 0.0;
                }
            }),
            Activation::Identity => d.fill(1.0),
        }
        d
    }

    fn affine(&self, l: &LayerLayout, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((x.nrows(), l.fan_out));
        general_mat_mul(1.0, x, &self.weight(l), 0.0, &mut z);
        let b = self.bias(l);
        for mut row in z.rows_mut() {
            for (v, bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        z
    }

    fn embed(&self, x: &ArrayView2<f64>) -> Option<(Array2<f64>, Array2<f64>)> {
        let k = self.fourier_kernel.as_ref()?;
        let proj = x.dot(k);
        let f = k.ncols();
        let mut e = Array2::zeros((x.nrows(), 2 * f));
        e.slice_mut(s![.., ..f]).assign(&proj.mapv(f64::sin));
        e.slice_mut(s![.., f..]).assign(&proj.mapv(f64::cos));
        Some((proj, e))
    }

    /// Batched forward pass, one row per input point.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = match self.embed(&x) {
            Some((_, e)) => e,
            None => x.to_owned(),
        };
        let last = self.layout.len() - 1;
        for (li, l) in self.layout.iter().enumerate() {
            let mut z = self.affine(l, &h.view());
            if li < last {
                self.activate(&mut z);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let (fourier_proj, mut h) = match self.embed(&x) {
            Some((p, e)) => (Some(p), e),
            None => (None, x.to_owned()),
        };
        let last = self.layout.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layout.len());
        let mut deriv = Vec::with_capacity(last);
        for (li, l) in self.layout.iter().enumerate() {
            let mut z = self.affine(l, &h.view());
            layer_inputs.push(h);
            if li < last {
                deriv.push(self.activate_with_deriv(&mut z));
            }
            h = z;
        }
        Ok((
            h,
            Tape {
                input: x.to_owned(),
                fourier_proj,
                layer_inputs,
                deriv,
            },
        ))
    }

    /// Single-point forward.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xv = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::validation(e.to_string()))?;
        Ok(self.forward_batch(xv)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass. Given `d_out = ∂L/∂output` (one row per batch entry),
    /// accumulates `∂L/∂params` into `grad` (if given) and returns `∂L/∂input`.
    pub fn backward(&self, tape: &Tape, d_out: ArrayView2<f64>, grad: Option<&mut [f64]>) -> Result<Array2<f64>> {
        if d_out.nrows() != tape.batch_size() || d_out.ncols() != self.spec.output_dim {
            return Err(Error::validation(format!(
                "adjoint shape {:?} does not match batch {} × output {}",
                d_out.shape(),
                tape.batch_size(),
                self.spec.output_dim
            )));
        }
        if let Some(g) = grad.as_ref() {
            if g.len() != self.params.len() {
                return Err(Error::validation("gradient buffer has wrong length"));
            }
        }
        let mut grad = grad;
        let mut delta = d_out.to_owned();
        for li in (0..self.layout.len()).rev() {
            let l = self.layout[li];
            if li < self.layout.len() - 1 {
                // delta is ∂L/∂activation; turn it into ∂L/∂pre-activation.
                delta *= &tape.deriv[li];
            }
            if let Some(g) = grad.as_deref_mut() {
                let input = &tape.layer_inputs[li];
                let mut gw = ArrayViewMut2::from_shape((l.fan_in, l.fan_out), &mut g[l.weight..l.bias]).unwrap();
                general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut gw);
                let gb = &mut g[l.bias..l.bias + l.fan_out];
                let colsum: Array1<f64> = delta.sum_axis(Axis(0));
                for (a, b) in gb.iter_mut().zip(colsum.iter()) {
                    *a += b;
                }
            }
            let mut prev = Array2::zeros((delta.nrows(), l.fan_in));
            general_mat_mul(1.0, &delta, &self.weight(&l).t(), 0.0, &mut prev);
            delta = prev;
        }
        if let (Some(k), Some(proj)) = (self.fourier_kernel.as_ref(), tape.fourier_proj.as_ref()) {
            let f = k.ncols();
            // e = [sin(p), cos(p)], p = xK
            let mut dp = Array2::zeros(proj.raw_dim());
            ndarray::Zip::from(&mut dp)
                .and(proj)
                .and(delta.slice(s![.., ..f]))
                .and(delta.slice(s![.., f..]))
                .for_each(|o, &p, &ds, &dc| *o = ds * p.cos() - dc * p.sin());
            delta = dp.dot(&k.t());
        }
        Ok(delta)
    }

    /// Gradient of `⟨adjoint, net(x)⟩` with respect to the parameters.
    pub fn grad_params(&self, x: &[f64], adjoint: &[f64]) -> Result<Vec<f64>> {
        let xv = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::validation(e.to_string()))?;
        let av = ArrayView2::from_shape((1, adjoint.len()), adjoint)
            .map_err(|e| Error::validation(e.to_string()))?;
        let (_, tape) = self.forward_tape(xv)?;
        let mut g = vec![0.0; self.params.len()];
        self.backward(&tape, av, Some(&mut g))?;
        Ok(g)
    }

    /// Exact `output_dim × input_dim` Jacobian at `x` via one reverse pass per output.
    pub fn jacobian_input(&self, x: &[f64]) -> Result<Array2<f64>> {
        let m = self.spec.output_dim;
        let xs = Array2::from_shape_fn((m, x.len()), |(_, j)| x[j]);
        let (_, tape) = self.forward_tape(xs.view())?;
        let eye = Array2::<f64>::eye(m);
        self.backward(&tape, eye.view(), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn paper_scale_parameter_count() {
        let spec = NetSpec::siren(3, 3, 128, 5);
        assert_eq!(spec.param_count(), 3 * 128 + 128 + 4 * (128 * 128 + 128) + 128 * 3 + 3);
        assert_eq!(spec.param_count(), 66_947);
    }

    #[test]
    fn zero_net_outputs_zero() {
        for act in [Activation::Sine, Activation::Relu, Activation::Tanh] {
            let net = DenseNet::zeros(NetSpec::siren(3, 3, 8, 2).with_activation(act)).unwrap();
            assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn same_seed_same_params() {
        let spec = NetSpec::siren(3, 3, 16, 3);
        assert_eq!(DenseNet::new(spec.clone(), 5).unwrap(), DenseNet::new(spec.clone(), 5).unwrap());
        assert_ne!(DenseNet::new(spec.clone(), 5).unwrap(), DenseNet::new(spec, 6).unwrap());
    }

    #[test]
    fn identity_net_is_identity() {
        // One hidden identity layer of width 3 with W = I, output W = I.
        let spec = NetSpec::siren(3, 3, 3, 1).with_activation(Activation::Identity);
        let mut net = DenseNet::zeros(spec).unwrap();
        let p = net.params_mut();
        for layer in 0..2 {
            let off = layer * 12;
            for i in 0..3 {
                p[off + i * 3 + i] = 1.0;
            }
        }
        let x = [0.5, -2.0, 7.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
        let j = net.jacobian_input(&x).unwrap();
        assert_eq!(j, Array2::<f64>::eye(3));
    }

    #[test]
    fn sine_at_zero_with_zero_bias_is_zero() {
        let mut net = DenseNet::new(NetSpec::siren(3, 2, 8, 2), 1).unwrap();
        let layout = net.layout.clone();
        for l in layout {
            for b in &mut net.params_mut()[l.bias..l.bias + l.fan_out] {
                *b = 0.0;
            }
        }
        assert_eq!(net.forward(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn batch_equals_single() {
        let net = DenseNet::new(NetSpec::siren(3, 3, 16, 3), 2).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-0.4, 0.5, 0.9], [1.0, -1.0, 0.0]];
        let batch = net.forward_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            assert_eq!(batch.row(i).to_vec(), single);
        }
    }

    #[test]
    fn rejects_nan_and_bad_shapes() {
        let net = DenseNet::new(NetSpec::siren(3, 3, 4, 1), 0).unwrap();
        assert!(matches!(net.forward(&[f64::NAN, 0.0, 0.0]), Err(Error::Numeric(_))));
        assert!(net.forward(&[0.0, 0.0]).is_err());
        let (_, tape) = net.forward_tape(array![[0.0, 0.0, 0.0]].view()).unwrap();
        assert!(net.backward(&tape, array![[1.0, 0.0]].view(), None).is_err());
    }

    #[test]
    fn zero_width_rejected() {
        assert!(DenseNet::new(NetSpec::siren(3, 3, 0, 2), 0).is_err());
        assert!(DenseNet::new(NetSpec::siren(3, 3, 4, 0), 0).is_err());
    }

    #[test]
    fn linear_net_weight_gradient_is_outer_product() {
        let spec = NetSpec::siren(2, 2, 2, 1).with_activation(Activation::Identity);
        let net = DenseNet::new(spec, 3).unwrap();
        let x = [0.7, -1.3];
        let adj = [2.0, 0.5];
        let g = net.grad_params(&x, &adj).unwrap();
        // Output layer: ∂/∂W2[i][j] = h_i · adj_j where h is the hidden activation.
        let l0 = net.layout[0];
        let w = net.weight(&l0);
        let b = net.bias(&l0);
        let h: Vec<f64> = (0..2).map(|j| x[0] * w[[0, j]] + x[1] * w[[1, j]] + b[j]).collect();
        let l1 = net.layout[1];
        for i in 0..2 {
            for j in 0..2 {
                let got = g[l1.weight + i * 2 + j];
                assert!((got - h[i] * adj[j]).abs() < 1e-14);
            }
        }
    }
}
