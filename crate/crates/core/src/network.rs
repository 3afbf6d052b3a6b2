//! Feed-forward networks with hand-written reverse-mode gradients, and the
//! adaptive-moment optimizer used by both players of the min-max game.

use rayon::prelude::*;

use crate::error::{check_dim, Result, WignerError};
use crate::rng::StreamRng;
use crate::scalar::{Real, View, ViewMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Self::Identity => 0,
            Self::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Self::Identity),
            1 => Ok(Self::Tanh),
            _ => Err(WignerError::Format(format!("unknown activation tag {tag}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Tanh => "tanh",
        }
    }

    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Self::Identity => z,
            Self::Tanh => tanh(z),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output<T: Real>(self, a: T) -> T {
        match self {
            Self::Identity => T::one(),
            Self::Tanh => T::one() - a * a,
        }
    }
}

/// `1 - 2 / (e^{2z} + 1)`: one `exp` instead of the library `tanh`, with
/// absolute error near machine epsilon.
#[inline]
fn tanh<T: Real>(z: T) -> T {
    let e = (z + z).exp();
    T::one() - (T::one() + T::one()) / (e + T::one())
}

/// Affine map followed by an activation; weights are `outputs x inputs`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    inputs: usize,
    outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        check_dim("layer weights", inputs * outputs, weights.len())?;
        check_dim("layer bias", outputs, bias.len())?;
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn forward_into(&self, input: &[T], out: &mut [T]) {
        for (o, (row, &b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            let z = row.iter().zip(input).fold(b, |acc, (&w, &a)| acc + w * a);
            *o = self.activation.apply(z);
        }
    }
}

/// Multilayer perceptron: tanh (or identity) hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(WignerError::ShapeMismatch("network without layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(WignerError::WidthMismatch {
                    expected: pair[0].outputs,
                    found: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Network with the given layer widths (input first, output last). Hidden
    /// layers use fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
    /// the output layer starts at zero so the network initially outputs 0.
    pub fn init(widths: &[usize], hidden: Activation, rng: &mut StreamRng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(WignerError::ShapeMismatch(format!(
                "invalid widths {widths:?}"
            )));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                if l == last {
                    Layer::zeros(w[0], w[1], Activation::Identity)
                } else {
                    let bound = T::one() / T::lit(w[0] as f64).sqrt();
                    let weights = (0..w[0] * w[1])
                        .map(|_| rng.uniform_in(-bound, bound))
                        .collect();
                    let bias = (0..w[1]).map(|_| rng.uniform_in(-bound, bound)).collect();
                    Layer {
                        inputs: w[0],
                        outputs: w[1],
                        weights,
                        bias,
                        activation: hidden,
                    }
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    fn max_width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(0)
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        check_dim("network input", self.input_width(), input.len()).map_err(|_| {
            WignerError::WidthMismatch {
                expected: self.input_width(),
                found: input.len(),
            }
        })?;
        let width = self.max_width();
        let mut a = vec![T::zero(); width];
        let mut b = vec![T::zero(); width];
        a[..input.len()].copy_from_slice(input);
        for layer in &self.layers {
            layer.forward_into(&a[..layer.inputs], &mut b[..layer.outputs]);
            std::mem::swap(&mut a, &mut b);
        }
        a.truncate(self.output_width());
        Ok(a)
    }

    /// Forward pass over `inputs.len() / input_width` rows.
    pub fn forward_batch(&self, inputs: &[T]) -> Result<Vec<T>> {
        let (din, dout) = (self.input_width(), self.output_width());
        if !inputs.len().is_multiple_of(din) {
            return Err(WignerError::WidthMismatch {
                expected: din,
                found: inputs.len() % din,
            });
        }
        let rows = inputs.len() / din;
        let mut out = vec![T::zero(); rows * dout];
        out.par_chunks_mut(dout * CHUNK)
            .zip(inputs.par_chunks(din * CHUNK))
            .for_each(|(o, i)| {
                let mut work = Workspace::new(self, i.len() / din);
                self.forward_chunk(i, &mut work);
                o.copy_from_slice(&work.acts[self.layers.len()]);
            });
        Ok(out)
    }

    /// Gradient of `sum_m <cotangent_m, forward(input_m)>` with respect to every
    /// parameter, in the layout of [`Mlp::to_flat`].
    ///
    /// Rows are processed in fixed-size chunks whose partial sums are added
    /// in order, so the result does not depend on the worker count.
    pub fn backward(&self, inputs: &[T], cotangents: &[T]) -> Result<Vec<T>> {
        let (din, dout) = (self.input_width(), self.output_width());
        if !inputs.len().is_multiple_of(din) {
            return Err(WignerError::WidthMismatch {
                expected: din,
                found: inputs.len() % din,
            });
        }
        let rows = inputs.len() / din;
        if cotangents.len() != rows * dout {
            return Err(WignerError::ShapeMismatch(format!(
                "{} cotangents for {rows} rows of width {dout}",
                cotangents.len()
            )));
        }
        let partials: Vec<Vec<T>> = inputs
            .par_chunks(din * CHUNK)
            .zip(cotangents.par_chunks(dout * CHUNK))
            .map(|(i, c)| {
                let mut grad = vec![T::zero(); self.num_params()];
                let mut work = Workspace::new(self, i.len() / din);
                self.forward_chunk(i, &mut work);
                self.backward_chunk(c, &mut grad, &mut work);
                grad
            })
            .collect();
        let mut total = vec![T::zero(); self.num_params()];
        for part in partials {
            for (t, g) in total.iter_mut().zip(part) {
                *t += g;
            }
        }
        Ok(total)
    }

    /// Forward pass over one chunk of rows, keeping every layer's output.
    fn forward_chunk(&self, inputs: &[T], work: &mut Workspace<T>) {
        let rows = work.rows;
        work.acts[0].copy_from_slice(inputs);
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = work.acts.split_at_mut(l + 1);
            let (input, out) = (&prev[l], &mut next[0]);
            for row in out.chunks_exact_mut(layer.outputs) {
                row.copy_from_slice(&layer.bias);
            }
            T::gemm(
                rows,
                layer.inputs,
                layer.outputs,
                View {
                    data: input,
                    row: layer.inputs,
                    col: 1,
                },
                View {
                    data: &layer.weights,
                    row: 1,
                    col: layer.inputs,
                },
                T::one(),
                ViewMut {
                    data: out,
                    row: layer.outputs,
                    col: 1,
                },
            );
            if layer.activation != Activation::Identity {
                for z in out.iter_mut() {
                    *z = layer.activation.apply(*z);
                }
            }
        }
    }

    /// Adds the chunk's parameter gradient to `grad`; `work` must hold the
    /// activations from [`Mlp::forward_chunk`].
    fn backward_chunk(&self, cotangents: &[T], grad: &mut [T], work: &mut Workspace<T>) {
        let rows = work.rows;
        let mut offset = self.num_params();
        work.delta[..cotangents.len()].copy_from_slice(cotangents);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.num_params();
            let delta = &mut work.delta[..rows * layer.outputs];
            if layer.activation != Activation::Identity {
                for (d, &a) in delta.iter_mut().zip(&work.acts[l + 1]) {
                    *d *= layer.activation.derivative_from_output(a);
                }
            }
            let (gw, gb) =
                grad[offset..offset + layer.num_params()].split_at_mut(layer.weights.len());
            T::gemm(
                layer.outputs,
                rows,
                layer.inputs,
                View {
                    data: delta,
                    row: 1,
                    col: layer.outputs,
                },
                View {
                    data: &work.acts[l],
                    row: layer.inputs,
                    col: 1,
                },
                T::one(),
                ViewMut {
                    data: gw,
                    row: layer.inputs,
                    col: 1,
                },
            );
            for drow in delta.chunks_exact(layer.outputs) {
                for (g, &d) in gb.iter_mut().zip(drow) {
                    *g += d;
                }
            }
            if l > 0 {
                T::gemm(
                    rows,
                    layer.outputs,
                    layer.inputs,
                    View {
                        data: delta,
                        row: layer.outputs,
                        col: 1,
                    },
                    View {
                        data: &layer.weights,
                        row: layer.inputs,
                        col: 1,
                    },
                    T::zero(),
                    ViewMut {
                        data: &mut work.delta_in[..rows * layer.inputs],
                        row: layer.inputs,
                        col: 1,
                    },
                );
                std::mem::swap(&mut work.delta, &mut work.delta_in);
            }
        }
    }

    /// All parameters, layer by layer: weights (row-major) then bias.
    pub fn to_flat(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        check_dim("flat network parameters", self.num_params(), flat.len())?;
        let mut rest = flat;
        for layer in &mut self.layers {
            let (w, r) = rest.split_at(layer.weights.len());
            let (b, r) = r.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }
}

const CHUNK: usize = 64;

/// Per-chunk buffers: every layer's output for `rows` rows, and two
/// back-propagated error blocks.
struct Workspace<T> {
    rows: usize,
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_in: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new(net: &Mlp<T>, rows: usize) -> Self {
        let max = net.max_width() * rows;
        Self {
            rows,
            acts: net
                .widths()
                .iter()
                .map(|&w| vec![T::zero(); w * rows])
                .collect(),
            delta: vec![T::zero(); max],
            delta_in: vec![T::zero(); max],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// Adaptive-moment optimizer state for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update; `Ascent` flips the sign of the step.
    pub fn apply(
        &mut self,
        params: &mut [T],
        grads: &[T],
        lr: T,
        direction: Direction,
    ) -> Result<()> {
        check_dim("optimizer parameters", self.m.len(), params.len())?;
        check_dim("optimizer gradients", self.m.len(), grads.len())?;
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step as i32);
        let c2 = one - self.beta2.powi(self.step as i32);
        let sign = match direction {
            Direction::Descent => -one,
            Direction::Ascent => one,
        };
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p += sign * lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(widths: &[usize], act: Activation, seed: u64) -> Mlp<f64> {
        let mut rng = StreamRng::new(seed);
        let mut net = Mlp::init(widths, act, &mut rng).unwrap();
        // Randomize the output layer as well so every parameter matters.
        let flat: Vec<f64> = (0..net.num_params())
            .map(|_| rng.uniform_in(-0.8, 0.8))
            .collect();
        net.set_flat(&flat).unwrap();
        net
    }

    #[test]
    fn tanh_matches_the_library() {
        for i in -400..=400 {
            let z = i as f64 * 0.05;
            assert!((tanh(z) - z.tanh()).abs() < 4e-16, "{z}");
        }
        assert_eq!(tanh(800.0f64), 1.0);
        assert_eq!(tanh(-800.0f64), -1.0);
    }

    #[test]
    fn batched_forward_matches_single_rows() {
        let net = random_net(&[5, 17, 9, 2], Activation::Tanh, 4);
        let mut rng = StreamRng::new(6);
        let inputs = rng.normals::<f64>(150 * 5);
        let batch = net.forward_batch(&inputs).unwrap();
        for (row, out) in inputs.chunks(5).zip(batch.chunks(2)) {
            let single = net.forward(row).unwrap();
            for (a, b) in single.iter().zip(out) {
                assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::from_layers(vec![
            Layer::zeros(3, 5, Activation::Tanh),
            Layer::zeros(5, 2, Activation::Identity),
        ])
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_reproduces_slice() {
        let layer = Layer::new(
            3,
            2,
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap();
        let net = Mlp::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(&[7.0, 8.0, 9.0]).unwrap(), vec![8.0, 9.0]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(WignerError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn initial_output_is_zero_and_bounded_inputs_stay_finite() {
        let mut rng = StreamRng::new(5);
        let net = Mlp::<f64>::init(&[5, 64, 64, 64, 4], Activation::Tanh, &mut rng).unwrap();
        assert_eq!(
            net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            vec![0.0; 4]
        );
        let net = random_net(&[5, 16, 16, 4], Activation::Tanh, 6);
        let out = net.forward(&[1e3, -1e3, 5e2, 1e3, -7e2]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_layers_rejected() {
        assert!(Mlp::<f64>::from_layers(vec![
            Layer::zeros(3, 5, Activation::Tanh),
            Layer::zeros(4, 2, Activation::Identity),
        ])
        .is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let net = random_net(&[3, 4, 2], Activation::Tanh, 1);
        let g = net
            .backward(&[0.1, 0.2, 0.3, 1.0, 2.0, 3.0], &[0.0; 4])
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(net.backward(&[0.1, 0.2, 0.3], &[0.0; 3]).is_err());
    }

    #[test]
    fn linear_layer_closed_form() {
        let net = random_net(&[3, 2], Activation::Tanh, 2);
        let x = [0.5, -1.0, 2.0];
        let u = [0.3, -0.7];
        let g = net.backward(&x, &u).unwrap();
        // Single layer is the output layer: identity activation.
        let expected_w: Vec<f64> = u
            .iter()
            .flat_map(|&ui| x.iter().map(move |&xj| ui * xj))
            .collect();
        for (a, b) in g[..6].iter().zip(&expected_w) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(&g[6..], &u);
    }

    /// Central differences of `sum_m <u_m, forward(x_m)>` over every parameter.
    fn fd_gradient(net: &Mlp<f64>, inputs: &[f64], cot: &[f64], h: f64) -> Vec<f64> {
        let scalar = |n: &Mlp<f64>| -> f64 {
            let out = n.forward_batch(inputs).unwrap();
            out.iter().zip(cot).map(|(a, b)| a * b).sum()
        };
        let base = net.to_flat();
        (0..base.len())
            .map(|i| {
                let mut plus = net.clone();
                let mut p = base.clone();
                p[i] += h;
                plus.set_flat(&p).unwrap();
                let mut minus = net.clone();
                p[i] = base[i] - h;
                minus.set_flat(&p).unwrap();
                (scalar(&plus) - scalar(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shapes: [&[usize]; 3] = [&[3, 2], &[3, 6, 2], &[3, 5, 4, 2]];
        for (li, widths) in shapes.iter().enumerate() {
            for act in [Activation::Tanh, Activation::Identity] {
                for draw in 0..10u64 {
                    let net = random_net(
                        widths,
                        act,
                        100 * li as u64 + draw + if act == Activation::Tanh { 0 } else { 50 },
                    );
                    assert!(net.num_params() <= 200);
                    let mut rng = StreamRng::new(draw + 999);
                    let inputs = rng.normals::<f64>(4 * 3);
                    let cot = rng.normals::<f64>(4 * 2);
                    let exact = net.backward(&inputs, &cot).unwrap();
                    let approx = fd_gradient(&net, &inputs, &cot, 1e-5);
                    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
                    for (a, b) in exact.iter().zip(&approx) {
                        assert!(
                            (a - b).abs() <= 1e-5 * scale,
                            "{widths:?} {act:?}: {a} vs {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn backward_is_thread_count_independent() {
        let net = random_net(&[4, 16, 16, 3], Activation::Tanh, 8);
        let mut rng = StreamRng::new(3);
        let inputs = rng.normals::<f64>(1000 * 4);
        let cot = rng.normals::<f64>(1000 * 3);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| net.backward(&inputs, &cot).unwrap());
        let b = four.install(|| net.backward(&inputs, &cot).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut opt = Adam::<f64>::new(2);
        opt.m = vec![0.5, -0.5];
        opt.v = vec![0.25, 0.25];
        let mut p = vec![1.0, 2.0];
        let before_m = opt.m.clone();
        opt.apply(&mut p, &[0.0, 0.0], 0.1, Direction::Descent)
            .unwrap();
        assert!(opt.m.iter().zip(&before_m).all(|(a, b)| a.abs() < b.abs()));
        let mut fresh = Adam::<f64>::new(2);
        let mut q = vec![1.0, 2.0];
        fresh
            .apply(&mut q, &[0.0, 0.0], 0.1, Direction::Descent)
            .unwrap();
        assert_eq!(q, vec![1.0, 2.0]);
    }

    #[test]
    fn descent_then_ascent_returns_to_start() {
        let start: Vec<f64> = vec![0.3, -1.2, 4.0];
        let g = [0.7, -0.1, 2.5];
        let mut p = start.clone();
        Adam::new(3)
            .apply(&mut p, &g, 0.01, Direction::Descent)
            .unwrap();
        Adam::new(3)
            .apply(&mut p, &g, 0.01, Direction::Ascent)
            .unwrap();
        for (a, b) in p.iter().zip(&start) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        let mut theta = [1.0f64];
        let mut opt = Adam::new(1);
        for _ in 0..500 {
            let g = [theta[0]];
            opt.apply(&mut theta, &g, 0.05, Direction::Descent).unwrap();
        }
        assert!(theta[0].abs() < 1e-3, "{}", theta[0]);
    }
}
