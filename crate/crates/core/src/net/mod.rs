//! Fully connected networks with a fixed input rescaling, evaluated either
//! on plain values (inference) or on second-order jets (training).

pub mod checkpoint;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::batch::{activation_backward, activation_forward};
use crate::jets::{
    jet_activation, jet_affine, Activation, Jet2, JetField, JetLayout, Order, MAX_DIM,
};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};

/// Layer widths `[d_in, h_1, .., h_L, d_out]` and the hidden activation.
/// The output layer is always linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self { sizes, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tanh(sizes: &[usize]) -> Self {
        Self::new(sizes.to_vec(), Activation::Tanh).expect("valid layer sizes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer sizes {:?}: need at least two entries, all >= 1",
                self.sizes
            )));
        }
        if self.sizes[0] > MAX_DIM {
            return Err(Error::Dimension(self.sizes[0]));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated spec")
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    pub fn mac_count(&self) -> usize {
        mac_count(self)
    }
}

/// `Σ_l (d_{l-1} + 1) d_l`.
pub fn param_count(spec: &LayerSpec) -> usize {
    spec.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Multiply-accumulates per sample, `Σ_l d_{l-1} d_l`.
pub fn mac_count(spec: &LayerSpec) -> usize {
    spec.sizes.windows(2).map(|w| w[0] * w[1]).sum()
}

/// Affine map taking the box `[lo, hi]` onto `[-1, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScale {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScale {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let scale = Self { lo, hi };
        scale.validate()?;
        Ok(scale)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() {
            return Err(Error::Shape("input scale bounds differ in length".into()));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(h - l > 0.0) || !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "input scale needs lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// d(scaled)/d(raw) for coordinate `i`.
    #[inline]
    pub fn factor(&self, i: usize) -> f64 {
        2.0 / (self.hi[i] - self.lo[i])
    }

    #[inline]
    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.lo[i] + self.hi[i])
    }

    #[inline]
    pub fn apply(&self, i: usize, x: f64) -> f64 {
        (x - self.midpoint(i)) * self.factor(i)
    }

    #[inline]
    pub fn invert(&self, i: usize, xi: f64) -> f64 {
        xi / self.factor(i) + self.midpoint(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    spec: LayerSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    input_scale: InputScale,
}

/// Intermediate states of one jet-augmented forward pass, kept for the
/// reverse sweep.
#[derive(Clone, Debug)]
pub struct Tape {
    layout: JetLayout,
    n: usize,
    /// Input state of every layer, `inputs[0]` being the scaled seeds.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation state of every hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn layout(&self) -> JetLayout {
        self.layout
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn output_field(&self) -> JetField {
        JetField {
            layout: self.layout,
            n: self.n,
            data: self.output.clone(),
        }
    }
}

impl MlpNetwork {
    /// Network with all weights and biases zero.
    pub fn zeros(spec: LayerSpec, input_scale: InputScale) -> Result<Self> {
        spec.validate()?;
        input_scale.validate()?;
        if input_scale.dim() != spec.input_dim() {
            return Err(Error::Shape(format!(
                "input scale has {} coordinates, network takes {}",
                input_scale.dim(),
                spec.input_dim()
            )));
        }
        let weights = spec
            .sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = spec.sizes[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self {
            spec,
            weights,
            biases,
            input_scale,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero
    /// biases. Deterministic in `seed`.
    pub fn init_xavier(spec: LayerSpec, input_scale: InputScale, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec, input_scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut net.weights {
            let (fan_out, fan_in) = w.dim();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn input_scale(&self) -> &InputScale {
        &self.input_scale
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.spec.param_count()
    }

    /// Flat parameter vector: per layer, the weight matrix row-major
    /// followed by the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.n_params()
            )));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = it.next().unwrap());
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        spec: LayerSpec,
        input_scale: InputScale,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let mut net = Self::zeros(spec, input_scale)?;
        if weights.len() != net.weights.len() || biases.len() != net.biases.len() {
            return Err(Error::Shape("layer count does not match spec".into()));
        }
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            if w.dim() != net.weights[l].dim() || b.len() != net.biases[l].len() {
                return Err(Error::Shape(format!("layer {l} shape does not match spec")));
            }
            net.weights[l] = w;
            net.biases[l] = b;
        }
        Ok(net)
    }

    fn check_points(&self, points: &ArrayView2<'_, f64>) -> Result<()> {
        if points.ncols() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "points have {} columns, network takes {}",
                points.ncols(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }

    /// Raw points (`n x d_in`) to the scaled, feature-major layout
    /// (`d_in x n`) consumed by [`Self::forward_scaled`].
    pub fn prescale(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_points(&points)?;
        let (n, d) = points.dim();
        Ok(Array2::from_shape_fn((d, n), |(i, p)| {
            self.input_scale.apply(i, points[[p, i]])
        }))
    }

    /// Inference on prescaled inputs (`d_in x n`), returning `d_out x n`.
    pub fn forward_scaled(&self, scaled: &Array2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut a: Option<Array2<f64>> = None;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = match &a {
                None => w.dot(scaled),
                Some(a) => w.dot(a),
            };
            for (mut row, &br) in z.rows_mut().into_iter().zip(b) {
                let row = row.as_slice_mut().expect("standard layout");
                row.iter_mut().for_each(|v| *v += br);
                if l < last {
                    self.spec.activation.apply_in_place(row);
                }
            }
            a = Some(z);
        }
        a.expect("at least one layer")
    }

    /// Values at raw points (`n x d_in`), returning `n x d_out`.
    pub fn forward(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let scaled = self.prescale(points)?;
        let out = self.forward_scaled(&scaled).reversed_axes();
        // single-output results are already row-major
        Ok(if out.is_standard_layout() {
            out
        } else {
            out.as_standard_layout().into_owned()
        })
    }

    /// Output jets at one raw point. Derivatives are with respect to the raw
    /// coordinates; the input scaling enters through the chain rule.
    pub fn forward_jets(&self, x: &[f64]) -> Result<Vec<Jet2>> {
        let d = self.spec.input_dim();
        if x.len() != d {
            return Err(Error::Shape(format!(
                "point has {} coordinates, network takes {d}",
                x.len()
            )));
        }
        let mut z: Vec<Jet2> = (0..d)
            .map(|i| {
                let mut j = Jet2::constant(self.input_scale.apply(i, x[i]), d);
                j.grad_mut()[i] = self.input_scale.factor(i);
                j
            })
            .collect();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            z = jet_affine(w, b, &z)?;
            if l < last {
                let act = self.spec.activation;
                z = z.into_iter().map(|j| jet_activation(act, j)).collect();
            }
        }
        Ok(z)
    }

    /// Seeds for a batch: scaled values plus the constant chain-rule factor
    /// of the input scaling in the gradient blocks.
    fn seed_batch(&self, points: &ArrayView2<'_, f64>, layout: JetLayout) -> Array2<f64> {
        let (n, d) = points.dim();
        let mut a0 = Array2::zeros((d, layout.components() * n));
        for i in 0..d {
            for p in 0..n {
                a0[[i, p]] = self.input_scale.apply(i, points[[p, i]]);
            }
            if layout.order == Order::Second {
                let b = layout.grad_block(i);
                let f = self.input_scale.factor(i);
                a0.slice_mut(ndarray::s![i, b * n..(b + 1) * n]).fill(f);
            }
        }
        a0
    }

    /// Jet-augmented forward pass over a batch, recording what the reverse
    /// sweep needs.
    pub fn forward_tape(&self, points: ArrayView2<'_, f64>, order: Order) -> Result<Tape> {
        self.check_points(&points)?;
        let n = points.nrows();
        let layout = JetLayout::new(self.spec.input_dim(), order);
        let mut a = self.seed_batch(&points, layout);
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len() - 1);
        let last = self.weights.len() - 1;
        let mut output = None;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&a);
            for (mut row, &br) in z.rows_mut().into_iter().zip(b) {
                row.slice_mut(ndarray::s![..n]).mapv_inplace(|v| v + br);
            }
            inputs.push(a);
            if l < last {
                let next = activation_forward(self.spec.activation, layout, n, &z);
                pre.push(z);
                a = next;
            } else {
                output = Some(z);
                a = Array2::zeros((0, 0));
            }
        }
        Ok(Tape {
            layout,
            n,
            inputs,
            pre,
            output: output.expect("at least one layer"),
        })
    }

    /// Reverse sweep: accumulates into `grad` the parameter gradient of a
    /// scalar whose adjoint with respect to the tape output is `output_bar`.
    pub fn backward(&self, tape: &Tape, output_bar: &Array2<f64>, grad: &mut [f64]) -> Result<()> {
        if output_bar.dim() != tape.output.dim() {
            return Err(Error::Shape(format!(
                "output adjoint {:?} for output {:?}",
                output_bar.dim(),
                tape.output.dim()
            )));
        }
        if grad.len() != self.n_params() {
            return Err(Error::Shape("gradient buffer length".into()));
        }
        let offsets = self.layer_offsets();
        let n = tape.n;
        let mut z_bar = output_bar.clone();
        for l in (0..self.weights.len()).rev() {
            let w_bar = z_bar.dot(&tape.inputs[l].t());
            let off = offsets[l];
            for (g, wb) in grad[off..].iter_mut().zip(w_bar.iter()) {
                *g += wb;
            }
            let b_off = off + w_bar.len();
            for (r, row) in z_bar.rows().into_iter().enumerate() {
                grad[b_off + r] += row.slice(ndarray::s![..n]).sum();
            }
            if l > 0 {
                let a_bar = self.weights[l].t().dot(&z_bar);
                z_bar = activation_backward(
                    self.spec.activation,
                    tape.layout,
                    n,
                    &tape.pre[l - 1],
                    &a_bar,
                );
            }
        }
        Ok(())
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut acc = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(acc);
            acc += w.len() + b.len();
        }
        offsets
    }
}
