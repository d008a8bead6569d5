//! Fully connected networks with hand-written backward passes.
//!
//! Parameters live in one flat vector, layer after layer, each layer storing
//! its `fan_in x fan_out` weight block (row-major) followed by its bias. A
//! batch is a matrix with one sample per row, so a layer computes
//! `H_out = f(H_in * W + b)`.

use rand::Rng;

use super::matrix::{gemm, Matrix, Op};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// f'(z) written in terms of y = f(z).
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    /// f''(z) written in terms of y = f(z).
    #[inline]
    fn second_derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu | Activation::Identity => 0.0,
            Activation::Tanh => -2.0 * y * (1.0 - y * y),
            Activation::Sigmoid => y * (1.0 - y) * (1.0 - 2.0 * y),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Identity => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            2 => Activation::Sigmoid,
            3 => Activation::Identity,
            _ => return Err(Error::config(format!("unknown activation code {code}"))),
        })
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    offset: usize,
}

impl LayerShape {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

/// Weights and biases of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    version: u64,
}

/// Gradient with the same flat layout as [`Mlp`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<f64>);

impl std::ops::Deref for Grads {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Grads {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Post-activation values from a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
    version: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache always holds the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

impl Mlp {
    /// Builds a network with layer widths `dims` (input first) and one
    /// activation per layer, initialised uniformly in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut mlp = Mlp::zeros(dims, activations)?;
        for layer in mlp.layers.clone() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for p in &mut mlp.params[layer.offset..layer.bias_range().end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(mlp)
    }

    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output width"));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::config(format!(
                "{} layers but {} activation tags",
                dims.len() - 1,
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let mut layers = Vec::with_capacity(activations.len());
        let mut offset = 0;
        for (w, &activation) in dims.windows(2).zip(activations) {
            layers.push(LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                activation,
                offset,
            });
            offset += w[0] * w[1] + w[1];
        }
        Ok(Mlp {
            layers,
            params: vec![0.0; offset],
            version: 0,
        })
    }

    /// Rebuilds a network from explicit `(weight, bias, activation)` layers;
    /// each weight is `fan_in x fan_out`.
    pub fn from_layers(layers: Vec<(Matrix, Vec<f64>, Activation)>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::config("an MLP needs at least one layer"));
        };
        let mut dims = vec![first.0.rows()];
        let mut acts = Vec::new();
        for (i, (w, b, act)) in layers.iter().enumerate() {
            if w.rows() != *dims.last().unwrap() {
                return Err(Error::config(format!("layer {i} input width does not chain")));
            }
            if b.len() != w.cols() {
                return Err(Error::config(format!("layer {i} bias length mismatch")));
            }
            dims.push(w.cols());
            acts.push(*act);
        }
        let mut mlp = Mlp::zeros(&dims, &acts)?;
        for (shape, (w, b, _)) in mlp.layers.clone().iter().zip(&layers) {
            mlp.params[shape.weight_range()].copy_from_slice(w.data());
            mlp.params[shape.bias_range()].copy_from_slice(b);
        }
        Ok(mlp)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.fan_out));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> Matrix {
        let l = &self.layers[layer];
        Matrix::from_vec(l.fan_in, l.fan_out, self.params[l.weight_range()].to_vec())
            .expect("layer shape is consistent")
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].bias_range()]
    }

    fn weight_slice(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].weight_range()]
    }

    /// Multiplies the weights and bias of one layer by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: f64) {
        let l = self.layers[layer];
        for p in &mut self.params_mut()[l.offset..l.bias_range().end] {
            *p *= factor;
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers == other.layers
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        assert!(self.same_shape(source), "soft update between differently shaped networks");
        for (t, s) in self.params_mut().iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "network expects input width {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        if !input.is_finite() {
            return Err(Error::numerical("non-finite network input"));
        }
        Ok(())
    }

    fn layer_forward(&self, layer: usize, input: &Matrix) -> Matrix {
        let mut out = self.layer_linear(layer, input);
        let act = self.layers[layer].activation;
        if act != Activation::Identity {
            out.map_inplace(|z| act.apply(z));
        }
        out
    }

    fn layer_linear(&self, layer: usize, input: &Matrix) -> Matrix {
        let l = &self.layers[layer];
        let rows = input.rows();
        let mut out = Matrix::zeros(rows, l.fan_out);
        let bias = self.bias(layer);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(bias);
        }
        gemm(
            1.0,
            input.data(),
            rows,
            l.fan_in,
            Op::N,
            self.weight_slice(layer),
            l.fan_in,
            l.fan_out,
            Op::N,
            1.0,
            out.data_mut(),
        );
        out
    }

    /// Batched forward pass without keeping intermediates.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut h = self.layer_forward(0, input);
        for l in 1..self.layers.len() {
            h = self.layer_forward(l, &h);
        }
        Ok(h)
    }

    /// Batched forward pass returning the output and a cache for [`Mlp::backward`].
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for l in 0..self.layers.len() {
            let h = self.layer_forward(l, &activations[l]);
            activations.push(h);
        }
        let cache = ForwardCache {
            activations,
            version: self.version,
        };
        Ok((cache.output().clone(), cache))
    }

    /// Single-sample forward pass.
    pub fn forward_vec(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let (out, cache) = self.forward(&Matrix::row_vector(input))?;
        Ok((out.into_vec(), cache))
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.version != self.version || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Internal("forward cache does not match current parameters".into()));
        }
        for (l, shape) in self.layers.iter().enumerate() {
            if cache.activations[l + 1].cols() != shape.fan_out {
                return Err(Error::Internal("forward cache shape mismatch".into()));
            }
        }
        Ok(())
    }

    /// Gradients of `sum(output ⊙ upstream)` with respect to every parameter
    /// and to the input batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(Grads, Matrix)> {
        let (grads, input_grad) = self.backward_impl(cache, upstream, true)?;
        Ok((grads.expect("parameter gradients requested"), input_grad))
    }

    /// Output-layer values before the final activation, recomputed from a cache.
    pub fn output_preactivation(&self, cache: &ForwardCache) -> Result<Matrix> {
        self.check_cache(cache)?;
        let last = self.layers.len() - 1;
        Ok(self.layer_linear(last, &cache.activations[last]))
    }

    /// Like [`Mlp::backward`], with `preact_grad` added directly to the
    /// gradient at the output pre-activation. Useful for penalties on the
    /// pre-squash output, which would vanish if routed through a saturated
    /// activation derivative.
    pub fn backward_with_preactivation_grad(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        preact_grad: &Matrix,
    ) -> Result<(Grads, Matrix)> {
        if preact_grad.rows() != upstream.rows() || preact_grad.cols() != upstream.cols() {
            return Err(Error::config("pre-activation gradient shape does not match network output"));
        }
        let (grads, input_grad) = self.backward_impl_with(cache, upstream, Some(preact_grad), true)?;
        Ok((grads.expect("parameter gradients requested"), input_grad))
    }

    /// Like [`Mlp::backward`] but only the input gradient is formed.
    pub fn input_gradient(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Matrix> {
        Ok(self.backward_impl(cache, upstream, false)?.1)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        want_params: bool,
    ) -> Result<(Option<Grads>, Matrix)> {
        self.backward_impl_with(cache, upstream, None, want_params)
    }

    fn backward_impl_with(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        preact_grad: Option<&Matrix>,
        want_params: bool,
    ) -> Result<(Option<Grads>, Matrix)> {
        self.check_cache(cache)?;
        let out = cache.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::config("upstream gradient shape does not match network output"));
        }
        if !upstream.is_finite() {
            return Err(Error::numerical("non-finite upstream gradient"));
        }
        let rows = out.rows();
        let mut grads = want_params.then(|| vec![0.0; self.params.len()]);
        let mut dh = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let h_out = &cache.activations[l + 1];
            let h_in = &cache.activations[l];
            let mut dz = dh;
            if shape.activation != Activation::Identity {
                for (d, &y) in dz.data_mut().iter_mut().zip(h_out.data()) {
                    *d *= shape.activation.derivative_at_output(y);
                }
            }
            if let (Some(extra), true) = (preact_grad, l + 1 == self.layers.len()) {
                for (d, e) in dz.data_mut().iter_mut().zip(extra.data()) {
                    *d += e;
                }
            }
            if let Some(g) = grads.as_mut() {
                gemm(
                    1.0,
                    h_in.data(),
                    rows,
                    shape.fan_in,
                    Op::T,
                    dz.data(),
                    rows,
                    shape.fan_out,
                    Op::N,
                    0.0,
                    &mut g[shape.weight_range()],
                );
                for (b, s) in g[shape.bias_range()].iter_mut().zip(dz.column_sums()) {
                    *b = s;
                }
            }
            let mut prev = Matrix::zeros(rows, shape.fan_in);
            gemm(
                1.0,
                dz.data(),
                rows,
                shape.fan_out,
                Op::N,
                self.weight_slice(l),
                shape.fan_in,
                shape.fan_out,
                Op::T,
                0.0,
                prev.data_mut(),
            );
            dh = prev;
        }
        Ok((grads.map(Grads), dh))
    }

    /// Mean over the batch of `(‖∇ₓ f(x)‖ − target)²` for a scalar-output
    /// network, together with its gradient with respect to the parameters.
    ///
    /// The parameter gradient differentiates through the input-gradient
    /// computation itself (a second backward sweep), so it needs f'' of each
    /// activation.
    pub fn input_grad_penalty(&self, input: &Matrix, target: f64) -> Result<(f64, Grads)> {
        if self.output_dim() != 1 {
            return Err(Error::config("gradient penalty needs a scalar-output network"));
        }
        self.check_input(input)?;
        let rows = input.rows();
        let n_layers = self.layers.len();

        // Forward sweep: h[0] = x, h[l] = f_l(h[l-1] W_l + b_l), l = 1..=L.
        let mut h = Vec::with_capacity(n_layers + 1);
        h.push(input.clone());
        for l in 0..n_layers {
            let next = self.layer_forward(l, &h[l]);
            h.push(next);
        }

        // Input-gradient sweep. u[l] = ∂f/∂z_l and v[l] = ∂f/∂h_l, with v[L] = 1.
        let mut u: Vec<Matrix> = vec![Matrix::zeros(0, 0); n_layers + 1];
        let mut v: Vec<Matrix> = vec![Matrix::zeros(0, 0); n_layers + 1];
        v[n_layers] = Matrix::from_vec(rows, 1, vec![1.0; rows])?;
        for l in (1..=n_layers).rev() {
            let shape = self.layers[l - 1];
            let mut ul = v[l].clone();
            for (d, &y) in ul.data_mut().iter_mut().zip(h[l].data()) {
                *d *= shape.activation.derivative_at_output(y);
            }
            let mut vprev = Matrix::zeros(rows, shape.fan_in);
            gemm(
                1.0,
                ul.data(),
                rows,
                shape.fan_out,
                Op::N,
                self.weight_slice(l - 1),
                shape.fan_in,
                shape.fan_out,
                Op::T,
                0.0,
                vprev.data_mut(),
            );
            u[l] = ul;
            v[l - 1] = vprev;
        }

        let scale = 1.0 / rows as f64;
        let mut penalty = 0.0;
        let mut vbar = Matrix::zeros(rows, self.input_dim());
        for r in 0..rows {
            let g = v[0].row(r);
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            penalty += (norm - target).powi(2);
            if norm > 1e-12 {
                let coeff = 2.0 * (norm - target) / norm * scale;
                for (dst, &gi) in vbar.row_mut(r).iter_mut().zip(g) {
                    *dst = coeff * gi;
                }
            }
        }
        penalty *= scale;

        let mut grads = vec![0.0; self.params.len()];
        // Adjoint of the input-gradient sweep, walking it in reverse (l = 1..=L).
        // z_direct[l] collects what flows into z_l through f'_l(z_l).
        let mut z_direct: Vec<Matrix> = vec![Matrix::zeros(0, 0); n_layers + 1];
        for l in 1..=n_layers {
            let shape = self.layers[l - 1];
            // v[l-1] = u[l] W_lᵀ
            gemm(
                1.0,
                vbar.data(),
                rows,
                shape.fan_in,
                Op::T,
                u[l].data(),
                rows,
                shape.fan_out,
                Op::N,
                0.0,
                &mut grads[shape.weight_range()],
            );
            let mut ubar = Matrix::zeros(rows, shape.fan_out);
            gemm(
                1.0,
                vbar.data(),
                rows,
                shape.fan_in,
                Op::N,
                self.weight_slice(l - 1),
                shape.fan_in,
                shape.fan_out,
                Op::N,
                0.0,
                ubar.data_mut(),
            );
            // u[l] = v[l] ⊙ f'_l(z_l)
            let mut zd = Matrix::zeros(rows, shape.fan_out);
            let mut next_vbar = Matrix::zeros(rows, shape.fan_out);
            for i in 0..rows * shape.fan_out {
                let y = h[l].data()[i];
                let ub = ubar.data()[i];
                zd.data_mut()[i] = ub * v[l].data()[i] * shape.activation.second_derivative_at_output(y);
                next_vbar.data_mut()[i] = ub * shape.activation.derivative_at_output(y);
            }
            z_direct[l] = zd;
            vbar = next_vbar;
        }

        // Ordinary reverse sweep over the forward pass, injecting z_direct.
        let mut hbar = Matrix::zeros(rows, 1);
        for l in (1..=n_layers).rev() {
            let shape = self.layers[l - 1];
            let mut zbar = hbar;
            for i in 0..rows * shape.fan_out {
                let y = h[l].data()[i];
                zbar.data_mut()[i] =
                    zbar.data()[i] * shape.activation.derivative_at_output(y) + z_direct[l].data()[i];
            }
            gemm(
                1.0,
                h[l - 1].data(),
                rows,
                shape.fan_in,
                Op::T,
                zbar.data(),
                rows,
                shape.fan_out,
                Op::N,
                1.0,
                &mut grads[shape.weight_range()],
            );
            for (b, s) in grads[shape.bias_range()].iter_mut().zip(zbar.column_sums()) {
                *b += s;
            }
            let mut prev = Matrix::zeros(rows, shape.fan_in);
            if l > 1 {
                gemm(
                    1.0,
                    zbar.data(),
                    rows,
                    shape.fan_out,
                    Op::N,
                    self.weight_slice(l - 1),
                    shape.fan_in,
                    shape.fan_out,
                    Op::T,
                    0.0,
                    prev.data_mut(),
                );
            }
            hbar = prev;
        }
        Ok((penalty, Grads(grads)))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(vec![(Matrix::identity(2), vec![0.0, 0.0], Activation::Identity)]).unwrap();
        let (out, _) = mlp.forward_vec(&[3.0, -1.0]).unwrap();
        assert_eq!(out, vec![3.0, -1.0]);
    }

    #[test]
    fn zero_sigmoid_unit_outputs_one_half() {
        let mlp = Mlp::zeros(&[3, 1], &[Activation::Sigmoid]).unwrap();
        for x in [[0.0, 0.0, 0.0], [5.0, -2.0, 100.0]] {
            assert_eq!(mlp.forward_vec(&x).unwrap().0, vec![0.5]);
        }
    }

    #[test]
    fn linear_unit_gradients_follow_product_rule() {
        let w = 1.7;
        let mlp = Mlp::from_layers(vec![(
            Matrix::from_vec(1, 1, vec![w]).unwrap(),
            vec![0.3],
            Activation::Identity,
        )])
        .unwrap();
        let (_, cache) = mlp.forward_vec(&[2.0]).unwrap();
        let (g, dx) = mlp.backward(&cache, &Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(g.0, vec![2.0, 1.0]);
        assert_eq!(dx.data(), &[w]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[3, 5, 2], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        let (_, cache) = mlp.forward_vec(&[0.1, -0.4, 0.9]).unwrap();
        let (g, dx) = mlp.backward(&cache, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preactivation_gradient_bypasses_squash() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let squashed = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let mut linear = Mlp::zeros(&[3, 4, 2], &[Activation::Relu, Activation::Identity]).unwrap();
        linear.params_mut().copy_from_slice(squashed.params());
        let x = Matrix::from_vec(2, 3, vec![0.3, -1.2, 0.5, 2.0, 0.1, -0.7]).unwrap();
        let (y, cache) = squashed.forward(&x).unwrap();
        let (z, lin_cache) = linear.forward(&x).unwrap();
        assert_eq!(squashed.output_preactivation(&cache).unwrap(), z);
        for (a, b) in y.data().iter().zip(z.data()) {
            assert!((a - b.tanh()).abs() < 1e-15);
        }
        let extra = Matrix::from_vec(2, 2, vec![0.4, -1.0, 0.25, 2.0]).unwrap();
        let (g, dx) = squashed
            .backward_with_preactivation_grad(&cache, &Matrix::zeros(2, 2), &extra)
            .unwrap();
        let (g_lin, dx_lin) = linear.backward(&lin_cache, &extra).unwrap();
        assert_eq!(g, g_lin);
        assert_eq!(dx, dx_lin);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let mlp = Mlp::zeros(&[3, 1], &[Activation::Identity]).unwrap();
        assert!(matches!(mlp.forward_vec(&[1.0, 2.0]), Err(Error::Config(_))));
        assert!(matches!(Mlp::zeros(&[3, 2, 1], &[Activation::Relu]), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mlp = Mlp::zeros(&[2, 1], &[Activation::Identity]).unwrap();
        assert!(matches!(mlp.forward_vec(&[f64::NAN, 0.0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn stale_cache_is_an_internal_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let (_, cache) = mlp.forward_vec(&[0.5, 0.5]).unwrap();
        mlp.params_mut()[0] += 1.0;
        assert!(matches!(
            mlp.backward(&cache, &Matrix::row_vector(&[1.0])),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn soft_update_interpolates() {
        let a = Mlp::zeros(&[1, 1], &[Activation::Identity]).unwrap();
        let mut b = a.clone();
        b.params_mut().iter_mut().for_each(|p| *p = 1.0);
        b.soft_update_from(&a, 0.25);
        assert_eq!(b.params(), &[0.75, 0.75]);
    }
}
