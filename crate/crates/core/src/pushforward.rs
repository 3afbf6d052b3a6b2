//! Signed two-branch pushforward generator.
//!
//! The solution is represented as `f = (1 + a) f+ - a f-` where each of `f+`
//! and `f-` is the law of `(x0, p0) + sqrt(t) F(t, x0, p0, z)` with `(x0, p0)`
//! drawn from the matching part of the initial data and `z` standard normal.
//! The mixing weight `a = softplus(alpha_raw)` is non-negative by
//! construction, so the total mass is one for every parameter value.

use crate::error::{check_dim, Result, WignerError};
use crate::network::{Activation, Mlp};
use crate::phase::{PhaseBatch, PhasePoint};
use crate::rng::{label, StreamRng};
use crate::scalar::{sigmoid, softplus, softplus_inverse, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

/// Initial Wigner functions with a known split into non-negative parts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState<T> {
    /// Gaussian in phase space (non-negative, so the minus part is empty).
    Coherent {
        center_x: Vec<T>,
        center_p: Vec<T>,
        sigma_x: T,
        sigma_p: T,
    },
    /// First excited harmonic-oscillator state along the first coordinate,
    /// ground state along the others.
    FirstExcited {
        dim: usize,
        mass: T,
        omega: T,
        hbar: T,
    },
}

/// Negative volume `int max(-W, 0)` of the first excited oscillator state,
/// `2 e^{-1/2} - 1`.
pub fn first_excited_negative_volume() -> f64 {
    2.0 * (-0.5f64).exp() - 1.0
}

/// Prescribed initial data `f0 = (1 + a0) f0+ - a0 f0-` together with
/// samplers for both parts.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDecomposition<T> {
    state: InitialState<T>,
}

impl<T: Real> InitialDecomposition<T> {
    pub fn new(state: InitialState<T>) -> Result<Self> {
        match &state {
            InitialState::Coherent {
                center_x,
                center_p,
                sigma_x,
                sigma_p,
            } => {
                check_dim(
                    "coherent state momentum centre",
                    center_x.len(),
                    center_p.len(),
                )?;
                if center_x.is_empty() {
                    return Err(WignerError::NonPositiveConstant("dim"));
                }
                if !(*sigma_x > T::zero()) {
                    return Err(WignerError::NonPositiveConstant("sigma_x"));
                }
                if !(*sigma_p > T::zero()) {
                    return Err(WignerError::NonPositiveConstant("sigma_p"));
                }
            }
            InitialState::FirstExcited {
                dim,
                mass,
                omega,
                hbar,
            } => {
                if *dim == 0 {
                    return Err(WignerError::NonPositiveConstant("dim"));
                }
                for (name, v) in [("mass", mass), ("omega", omega), ("hbar", hbar)] {
                    if !(*v > T::zero()) {
                        return Err(WignerError::NonPositiveConstant(name));
                    }
                }
            }
        }
        Ok(Self { state })
    }

    /// Minimum-uncertainty Gaussian of the oscillator with frequency `omega`.
    pub fn coherent(
        center_x: Vec<T>,
        center_p: Vec<T>,
        mass: T,
        omega: T,
        hbar: T,
    ) -> Result<Self> {
        let half = T::lit(0.5);
        Self::new(InitialState::Coherent {
            center_x,
            center_p,
            sigma_x: (half * hbar / (mass * omega)).sqrt(),
            sigma_p: (half * hbar * mass * omega).sqrt(),
        })
    }

    pub fn first_excited(dim: usize, mass: T, omega: T, hbar: T) -> Result<Self> {
        Self::new(InitialState::FirstExcited {
            dim,
            mass,
            omega,
            hbar,
        })
    }

    pub fn state(&self) -> &InitialState<T> {
        &self.state
    }

    pub fn dim(&self) -> usize {
        match &self.state {
            InitialState::Coherent { center_x, .. } => center_x.len(),
            InitialState::FirstExcited { dim, .. } => *dim,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        matches!(self.state, InitialState::Coherent { .. })
    }

    /// Weight of the negative part.
    pub fn alpha0(&self) -> T {
        match self.state {
            InitialState::Coherent { .. } => T::zero(),
            InitialState::FirstExcited { .. } => T::lit(first_excited_negative_volume()),
        }
    }

    /// Initial Wigner function value, for oracles and plots.
    pub fn density(&self, x: &[T], p: &[T]) -> T {
        let pi = T::PI();
        match &self.state {
            InitialState::Coherent {
                center_x,
                center_p,
                sigma_x,
                sigma_p,
            } => {
                let two = T::lit(2.0);
                let mut q = T::zero();
                for i in 0..x.len() {
                    let dx = (x[i] - center_x[i]) / *sigma_x;
                    let dp = (p[i] - center_p[i]) / *sigma_p;
                    q += dx * dx + dp * dp;
                }
                let norm = (two * pi * *sigma_x * *sigma_p).powi(x.len() as i32);
                (-q / two).exp() / norm
            }
            InitialState::FirstExcited {
                mass, omega, hbar, ..
            } => {
                let (ux, vp) = (
                    (*mass * *omega / *hbar).sqrt(),
                    T::one() / (*mass * *omega * *hbar).sqrt(),
                );
                let mut value = T::one();
                for i in 0..x.len() {
                    let s = (x[i] * ux).powi(2) + (p[i] * vp).powi(2);
                    let ground = (-s).exp() / (pi * *hbar);
                    value *= if i == 0 {
                        ground * (T::lit(2.0) * s - T::one())
                    } else {
                        ground
                    };
                }
                value
            }
        }
    }

    /// Draws one point from the normalized `branch` part of the initial data.
    pub fn sample(&self, branch: Branch, rng: &mut StreamRng) -> Result<PhasePoint<T>> {
        match &self.state {
            InitialState::Coherent {
                center_x,
                center_p,
                sigma_x,
                sigma_p,
            } => {
                if branch == Branch::Minus {
                    return Err(WignerError::EmptyBatch);
                }
                let x = center_x
                    .iter()
                    .map(|&c| c + *sigma_x * rng.normal::<T>())
                    .collect();
                let p = center_p
                    .iter()
                    .map(|&c| c + *sigma_p * rng.normal::<T>())
                    .collect();
                PhasePoint::new(x, p)
            }
            InitialState::FirstExcited {
                dim,
                mass,
                omega,
                hbar,
            } => {
                let x_unit = (*hbar / (*mass * *omega)).sqrt();
                let p_unit = (*mass * *omega * *hbar).sqrt();
                let ground_sd = T::lit(0.5f64.sqrt());
                let mut x = Vec::with_capacity(*dim);
                let mut p = Vec::with_capacity(*dim);
                let s: f64 = match branch {
                    Branch::Plus => sample_excited_positive(rng),
                    Branch::Minus => sample_excited_negative(rng),
                };
                let theta: f64 = rng.uniform::<f64>() * std::f64::consts::TAU;
                let r = s.sqrt();
                x.push(T::lit(r * theta.cos()) * x_unit);
                p.push(T::lit(r * theta.sin()) * p_unit);
                for _ in 1..*dim {
                    x.push(ground_sd * rng.normal::<T>() * x_unit);
                    p.push(ground_sd * rng.normal::<T>() * p_unit);
                }
                PhasePoint::new(x, p)
            }
        }
    }
}

/// `s = u^2 + v^2` with density proportional to `(2s - 1) e^{-s}` on `s > 1/2`,
/// by rejection from a Gamma(2, 1) proposal.
fn sample_excited_positive(rng: &mut StreamRng) -> f64 {
    loop {
        let u1 = 1.0 - rng.uniform::<f64>();
        let u2 = 1.0 - rng.uniform::<f64>();
        let s = -(u1 * u2).ln();
        if s > 0.5 && rng.uniform::<f64>() * 2.0 * s < 2.0 * s - 1.0 {
            return s;
        }
    }
}

/// `s` with density proportional to `(1 - 2s) e^{-s}` on `[0, 1/2]`, by
/// rejection from the uniform proposal.
fn sample_excited_negative(rng: &mut StreamRng) -> f64 {
    loop {
        let s = 0.5 * rng.uniform::<f64>();
        if rng.uniform::<f64>() < (1.0 - 2.0 * s) * (-s).exp() {
            return s;
        }
    }
}

/// Exogenous randomness for one branch of a batch: times, initial points and
/// base noise (`d_base` values per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct Draws<T> {
    pub init: PhaseBatch<T>,
    pub noise: Vec<T>,
    pub noise_dim: usize,
}

impl<T: Real> Draws<T> {
    pub fn len(&self) -> usize {
        self.init.len()
    }

    pub fn is_empty(&self) -> bool {
        self.init.is_empty()
    }

    pub fn noise(&self, m: usize) -> &[T] {
        &self.noise[m * self.noise_dim..(m + 1) * self.noise_dim]
    }

    /// Draws `times.len()` initial points from `branch` and matching noise.
    pub fn draw(
        decomp: &InitialDecomposition<T>,
        branch: Branch,
        times: &[T],
        noise_dim: usize,
        rng: &StreamRng,
    ) -> Result<Self> {
        let (init_label, noise_label) = match branch {
            Branch::Plus => (label::INIT_PLUS, label::NOISE_PLUS),
            Branch::Minus => (label::INIT_MINUS, label::NOISE_MINUS),
        };
        let mut init_rng = rng.split(init_label);
        let mut noise_rng = rng.split(noise_label);
        let mut init = PhaseBatch::with_capacity(decomp.dim(), times.len());
        for &t in times {
            let pt = decomp.sample(branch, &mut init_rng)?;
            init.push(t, pt.x(), pt.p())?;
        }
        let noise = noise_rng.normals(times.len() * noise_dim);
        Ok(Self {
            init,
            noise,
            noise_dim,
        })
    }
}

/// Anything that pushes initial draws forward in time: the trained networks,
/// or an exact flow substituted for them.
pub trait SignedGenerator<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    /// Current mixing weight `a >= 0`.
    fn alpha(&self) -> T;

    /// Whether the minus branch carries weight and must be sampled.
    fn uses_minus(&self) -> bool;

    fn push_batch(&self, branch: Branch, draws: &Draws<T>) -> Result<PhaseBatch<T>>;
}

/// A deterministic phase-space flow `(t, x0, p0) -> (x, p)`.
pub trait PhaseFlow<T: Real>: Sync {
    fn flow(&self, t: T, x: &[T], p: &[T], out_x: &mut [T], out_p: &mut [T]);
}

/// Exact characteristic map used in place of the networks; single branch,
/// no base noise.
pub struct FrozenFlow<F> {
    pub flow: F,
    pub dim: usize,
}

impl<T: Real, F: PhaseFlow<T>> SignedGenerator<T> for FrozenFlow<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn alpha(&self) -> T {
        T::zero()
    }

    fn uses_minus(&self) -> bool {
        false
    }

    fn push_batch(&self, _branch: Branch, draws: &Draws<T>) -> Result<PhaseBatch<T>> {
        let n = self.dim;
        let m = draws.len();
        let mut x = vec![T::zero(); m * n];
        let mut p = vec![T::zero(); m * n];
        for i in 0..m {
            self.flow.flow(
                draws.init.time(i),
                draws.init.x(i),
                draws.init.p(i),
                &mut x[i * n..(i + 1) * n],
                &mut p[i * n..(i + 1) * n],
            );
        }
        PhaseBatch::from_flat(n, draws.init.times().to_vec(), x, p)
    }
}

/// The two networks `F+`, `F-` and the raw mixing scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPushforward<T> {
    dim: usize,
    noise_dim: usize,
    pub plus: Mlp<T>,
    pub minus: Mlp<T>,
    pub alpha_raw: T,
    /// Pins `a = 0` and skips the minus branch entirely.
    pub alpha_frozen: bool,
}

/// Architecture knobs for [`SignedPushforward::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkShape {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Base-noise dimension; `None` means `2N`.
    pub noise_dim: Option<usize>,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            activation: Activation::Tanh,
            noise_dim: None,
        }
    }
}

impl<T: Real> SignedPushforward<T> {
    /// Fresh generator with zero output layers (each branch starts as the
    /// identity map) and `a = alpha0`. With `alpha0 = 0` the raw scalar is
    /// `-inf`, which the softplus map sends to exactly zero.
    pub fn new(
        dim: usize,
        shape: &NetworkShape,
        alpha0: T,
        alpha_frozen: bool,
        rng: &StreamRng,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(WignerError::NonPositiveConstant("dim"));
        }
        if !(alpha0 >= T::zero()) {
            return Err(WignerError::NonPositiveConstant("alpha0"));
        }
        let noise_dim = shape.noise_dim.unwrap_or(2 * dim);
        let mut widths = vec![1 + 2 * dim + noise_dim];
        widths.extend(&shape.hidden);
        widths.push(2 * dim);
        let net_rng = rng.split(label::NETWORK_INIT);
        let plus = Mlp::init(&widths, shape.activation, &mut net_rng.split(0))?;
        let minus = Mlp::init(&widths, shape.activation, &mut net_rng.split(1))?;
        let alpha_raw = if alpha0 > T::zero() {
            softplus_inverse(alpha0)
        } else {
            T::neg_infinity()
        };
        Ok(Self {
            dim,
            noise_dim,
            plus,
            minus,
            alpha_raw,
            alpha_frozen,
        })
    }

    /// Assembles a generator from existing networks, checking their widths.
    pub fn from_parts(
        dim: usize,
        noise_dim: usize,
        plus: Mlp<T>,
        minus: Mlp<T>,
        alpha_raw: T,
        alpha_frozen: bool,
    ) -> Result<Self> {
        for net in [&plus, &minus] {
            check_dim(
                "pushforward network input",
                1 + 2 * dim + noise_dim,
                net.input_width(),
            )?;
            check_dim("pushforward network output", 2 * dim, net.output_width())?;
        }
        Ok(Self {
            dim,
            noise_dim,
            plus,
            minus,
            alpha_raw,
            alpha_frozen,
        })
    }

    pub fn net(&self, branch: Branch) -> &Mlp<T> {
        match branch {
            Branch::Plus => &self.plus,
            Branch::Minus => &self.minus,
        }
    }

    pub fn net_mut(&mut self, branch: Branch) -> &mut Mlp<T> {
        match branch {
            Branch::Plus => &mut self.plus,
            Branch::Minus => &mut self.minus,
        }
    }

    /// Weights `(1 + a, a)` of the two branches.
    pub fn alpha_weights(&self) -> (T, T) {
        let a = self.alpha();
        (T::one() + a, a)
    }

    /// `d a / d alpha_raw`; zero when frozen.
    pub fn alpha_slope(&self) -> T {
        if self.alpha_frozen {
            T::zero()
        } else {
            sigmoid(self.alpha_raw)
        }
    }

    /// Sets `alpha_raw` so that the transformed weight equals `alpha`.
    pub fn set_alpha(&mut self, alpha: T) {
        self.alpha_raw = if alpha > T::zero() {
            softplus_inverse(alpha)
        } else {
            T::neg_infinity()
        };
    }

    fn network_input(&self, t: T, init: &[T], p: &[T], z: &[T], out: &mut Vec<T>) {
        out.push(t);
        out.extend_from_slice(init);
        out.extend_from_slice(p);
        out.extend_from_slice(z);
    }

    /// `init + sqrt(t) F(t, init, z)`; returns `init` untouched at `t = 0`.
    pub fn push(
        &self,
        branch: Branch,
        t: T,
        init: &PhasePoint<T>,
        z: &[T],
    ) -> Result<PhasePoint<T>> {
        if !(t >= T::zero()) {
            return Err(WignerError::NegativeTime(t.as_f64()));
        }
        check_dim("pushforward initial point", self.dim, init.dim())?;
        check_dim("pushforward base noise", self.noise_dim, z.len())?;
        if t == T::zero() {
            return Ok(init.clone());
        }
        let mut input = Vec::with_capacity(self.net(branch).input_width());
        self.network_input(t, init.x(), init.p(), z, &mut input);
        let out = self.net(branch).forward(&input)?;
        let s = t.sqrt();
        let n = self.dim;
        let x = init
            .x()
            .iter()
            .zip(&out[..n])
            .map(|(&a, &d)| a + s * d)
            .collect();
        let p = init
            .p()
            .iter()
            .zip(&out[n..])
            .map(|(&a, &d)| a + s * d)
            .collect();
        PhasePoint::new(x, p)
    }

    /// Network inputs for every row of `draws`, row-major.
    pub(crate) fn batch_inputs(&self, draws: &Draws<T>) -> Vec<T> {
        let mut input = Vec::with_capacity(draws.len() * (1 + 2 * self.dim + self.noise_dim));
        for m in 0..draws.len() {
            self.network_input(
                draws.init.time(m),
                draws.init.x(m),
                draws.init.p(m),
                draws.noise(m),
                &mut input,
            );
        }
        input
    }
}

impl<T: Real> SignedGenerator<T> for SignedPushforward<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn alpha(&self) -> T {
        if self.alpha_frozen {
            T::zero()
        } else {
            softplus(self.alpha_raw)
        }
    }

    fn uses_minus(&self) -> bool {
        !self.alpha_frozen
    }

    fn push_batch(&self, branch: Branch, draws: &Draws<T>) -> Result<PhaseBatch<T>> {
        let times = draws.init.times();
        if let Some(&t) = times.iter().find(|&&t| !(t >= T::zero())) {
            return Err(WignerError::NegativeTime(t.as_f64()));
        }
        check_dim(
            "pushforward base noise",
            draws.len() * self.noise_dim,
            draws.noise.len(),
        )?;
        let out = self.net(branch).forward_batch(&self.batch_inputs(draws))?;
        let n = self.dim;
        let mut x = Vec::with_capacity(draws.len() * n);
        let mut p = Vec::with_capacity(draws.len() * n);
        for (m, row) in out.chunks_exact(2 * n).enumerate() {
            let t = times[m];
            if t == T::zero() {
                x.extend_from_slice(draws.init.x(m));
                p.extend_from_slice(draws.init.p(m));
                continue;
            }
            let s = t.sqrt();
            x.extend(
                draws
                    .init
                    .x(m)
                    .iter()
                    .zip(&row[..n])
                    .map(|(&a, &d)| a + s * d),
            );
            p.extend(
                draws
                    .init
                    .p(m)
                    .iter()
                    .zip(&row[n..])
                    .map(|(&a, &d)| a + s * d),
            );
        }
        PhaseBatch::from_flat(n, times.to_vec(), x, p)
    }
}

/// The current mixing weight `a`.
pub fn wigner_negativity_weight<T: Real>(sp: &SignedPushforward<T>) -> T {
    sp.alpha()
}

/// Pushed samples of both branches with their weights.
#[derive(Debug, Clone)]
pub struct SignedSamples<T> {
    pub plus: PhaseBatch<T>,
    pub minus: PhaseBatch<T>,
    pub alpha_plus: T,
    pub alpha_minus: T,
}

/// Draws `times.len()` independent tuples per branch and pushes them forward.
/// The minus batch is empty when the generator does not use it.
pub fn sample_batch<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    times: &[T],
    rng: &StreamRng,
) -> Result<SignedSamples<T>> {
    check_dim("initial decomposition", gen.dim(), decomp.dim())?;
    let plus = gen.push_batch(
        Branch::Plus,
        &Draws::draw(decomp, Branch::Plus, times, gen.noise_dim(), rng)?,
    )?;
    let (alpha_plus, alpha_minus) = branch_weights(gen, decomp);
    let minus = if alpha_minus_active(gen, decomp) {
        gen.push_batch(
            Branch::Minus,
            &Draws::draw(decomp, Branch::Minus, times, gen.noise_dim(), rng)?,
        )?
    } else {
        PhaseBatch::with_capacity(gen.dim(), 0)
    };
    Ok(SignedSamples {
        plus,
        minus,
        alpha_plus,
        alpha_minus,
    })
}

/// The minus branch is sampled only when the generator uses it and the
/// initial data has a negative part to draw from.
pub fn alpha_minus_active<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
) -> bool {
    gen.uses_minus() && !decomp.is_nonnegative()
}

/// Branch weights `(1 + a, a)`, or `(1, 0)` when the minus branch is inactive.
pub fn branch_weights<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
) -> (T, T) {
    if alpha_minus_active(gen, decomp) {
        let a = gen.alpha();
        (T::one() + a, a)
    } else {
        (T::one(), T::zero())
    }
}

/// `(1/M) sum_m [a+ g(plus_m) - a- g(minus_m)]`; the minus batch may be empty
/// only when `a- = 0`.
pub fn signed_expectation<T: Real, G>(
    plus: &PhaseBatch<T>,
    minus: &PhaseBatch<T>,
    alpha_plus: T,
    alpha_minus: T,
    g: G,
) -> Result<T>
where
    G: Fn(T, &[T], &[T]) -> T,
{
    let m = plus.len();
    if m == 0 {
        return Err(WignerError::EmptyBatch);
    }
    let use_minus = !minus.is_empty() || alpha_minus != T::zero();
    if use_minus {
        check_dim("minus batch", m, minus.len())?;
    }
    let mut acc = T::zero();
    for i in 0..m {
        let mut c = alpha_plus * g(plus.time(i), plus.x(i), plus.p(i));
        if use_minus {
            c -= alpha_minus * g(minus.time(i), minus.x(i), minus.p(i));
        }
        acc += c;
    }
    Ok(acc / T::lit(m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use proptest::prelude::*;

    fn small_shape() -> NetworkShape {
        NetworkShape {
            hidden: vec![8, 8],
            activation: Activation::Tanh,
            noise_dim: None,
        }
    }

    fn randomized(seed: u64, dim: usize) -> SignedPushforward<f64> {
        let mut sp =
            SignedPushforward::new(dim, &small_shape(), 0.3, false, &StreamRng::new(seed)).unwrap();
        let mut rng = StreamRng::new(seed + 1);
        for branch in [Branch::Plus, Branch::Minus] {
            let n = sp.net(branch).num_params();
            let flat: Vec<f64> = (0..n).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            sp.net_mut(branch).set_flat(&flat).unwrap();
        }
        sp
    }

    #[test]
    fn push_at_time_zero_is_identity_bit_exact() {
        let mut rng = StreamRng::new(77);
        for probe in 0..10_000u64 {
            let sp = if probe % 1000 == 0 {
                randomized(probe, 1)
            } else {
                randomized(probe % 7, 1)
            };
            let x: f64 = rng.normal::<f64>() * 10.0;
            let p = if probe % 3 == 0 {
                -0.0
            } else {
                rng.normal::<f64>() * 10.0
            };
            let init = PhasePoint::new(vec![x], vec![p]).unwrap();
            let z = rng.normals::<f64>(2);
            let out = sp.push(Branch::Plus, 0.0, &init, &z).unwrap();
            assert_eq!(out.x()[0].to_bits(), x.to_bits());
            assert_eq!(out.p()[0].to_bits(), p.to_bits());
        }
    }

    #[test]
    fn fresh_generator_is_identity_at_any_time() {
        let sp = SignedPushforward::<f64>::new(2, &small_shape(), 0.0, true, &StreamRng::new(1))
            .unwrap();
        let init = PhasePoint::new(vec![0.3, -1.0], vec![2.0, 0.5]).unwrap();
        let out = sp
            .push(Branch::Plus, 0.9, &init, &[0.1, 0.2, 0.3, 0.4])
            .unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn bias_only_network_shifts_by_sqrt_t() {
        let out_layer =
            Layer::new(4, 2, vec![0.0; 8], vec![0.5, -1.5], Activation::Identity).unwrap();
        let net = Mlp::from_layers(vec![out_layer]).unwrap();
        let sp = SignedPushforward::from_parts(1, 1, net.clone(), net, 0.0, true).unwrap();
        let init = PhasePoint::new(vec![1.0], vec![2.0]).unwrap();
        let out = sp.push(Branch::Plus, 1.0, &init, &[0.3]).unwrap();
        assert_eq!((out.x()[0], out.p()[0]), (1.5, 0.5));
        let out = sp.push(Branch::Plus, 4.0, &init, &[0.3]).unwrap();
        assert_eq!((out.x()[0], out.p()[0]), (2.0, -1.0));
        assert!(matches!(
            sp.push(Branch::Plus, -1.0, &init, &[0.3]),
            Err(WignerError::NegativeTime(_))
        ));
    }

    #[test]
    fn sample_batch_examples() {
        let decomp = InitialDecomposition::coherent(vec![1.0], vec![0.0], 1.0, 1.0, 1.0).unwrap();
        let sp = randomized(3, 1);
        let mut frozen = sp.clone();
        frozen.alpha_frozen = true;
        let times = vec![0.0; 16];
        let s = sample_batch(&frozen, &decomp, &times, &StreamRng::new(4)).unwrap();
        assert_eq!((s.alpha_plus, s.alpha_minus), (1.0, 0.0));
        assert!(s.minus.is_empty());
        // At t = 0 the pushed points are the raw initial draws.
        let raw = Draws::draw(&decomp, Branch::Plus, &times, 2, &StreamRng::new(4)).unwrap();
        assert_eq!(s.plus, raw.init);
        let again = sample_batch(&frozen, &decomp, &times, &StreamRng::new(4)).unwrap();
        assert_eq!(s.plus, again.plus);
    }

    #[test]
    fn branch_streams_are_distinct() {
        let decomp = InitialDecomposition::first_excited(1, 1.0, 1.0, 1.0).unwrap();
        let times = vec![0.5; 8];
        let rng = StreamRng::new(12);
        let plus = Draws::draw(&decomp, Branch::Plus, &times, 2, &rng).unwrap();
        let minus = Draws::draw(&decomp, Branch::Minus, &times, 2, &rng).unwrap();
        assert_ne!(
            rng.split(label::INIT_PLUS).stream_id(),
            rng.split(label::INIT_MINUS).stream_id()
        );
        assert_ne!(
            rng.split(label::NOISE_PLUS).stream_id(),
            rng.split(label::NOISE_MINUS).stream_id()
        );
        assert_ne!(plus.noise, minus.noise);
    }

    #[test]
    fn signed_expectation_examples() {
        let plus = PhaseBatch::from_flat(1, vec![0.0; 4], vec![-1.0, 1.0, -2.0, 2.0], vec![0.0; 4])
            .unwrap();
        let minus = PhaseBatch::from_flat(1, vec![0.0; 4], vec![5.0; 4], vec![1.0; 4]).unwrap();
        let one: f64 = signed_expectation(&plus, &minus, 1.4, 0.4, |_, _, _| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        let empty = PhaseBatch::with_capacity(1, 0);
        let mean = signed_expectation(&plus, &empty, 1.0, 0.0, |_, x, _| x[0] * x[0]).unwrap();
        assert_eq!(mean, 2.5);
        let sym = signed_expectation(&plus, &empty, 1.0, 0.0, |_, x, _| x[0]).unwrap();
        assert_eq!(sym, 0.0);
        assert!(matches!(
            signed_expectation(&empty, &empty, 1.0, 0.0, |_, _, _| 1.0),
            Err(WignerError::EmptyBatch)
        ));
        assert!(signed_expectation(&plus, &empty, 1.3, 0.3, |_, _, _| 1.0).is_err());
    }

    #[test]
    fn negativity_weight_examples() {
        let mut sp = randomized(5, 1);
        sp.alpha_raw = f64::NEG_INFINITY;
        assert_eq!(wigner_negativity_weight(&sp), 0.0);
        sp.alpha_raw = -800.0;
        assert_eq!(wigner_negativity_weight(&sp), 0.0);
        sp.set_alpha(0.213);
        assert!((wigner_negativity_weight(&sp) - 0.213).abs() < 1e-14);
        let fresh =
            SignedPushforward::<f64>::new(1, &small_shape(), 0.0, false, &StreamRng::new(2))
                .unwrap();
        assert_eq!(wigner_negativity_weight(&fresh), 0.0);
    }

    #[test]
    fn excited_parts_have_expected_radial_means() {
        // E[s] for the positive part: int_{1/2}^inf s(2s-1)e^{-s} ds / int (2s-1)e^{-s} ds,
        // evaluated in closed form: numerator 3.5 e^{-1/2}... computed by quadrature below.
        let quad = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 200_000;
            let h = (b - a) / n as f64;
            (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
        };
        let pos_mean = quad(&|s| s * (2.0 * s - 1.0) * (-s).exp(), 0.5, 60.0)
            / quad(&|s| (2.0 * s - 1.0) * (-s).exp(), 0.5, 60.0);
        let neg_mean = quad(&|s| s * (1.0 - 2.0 * s) * (-s).exp(), 0.0, 0.5)
            / quad(&|s| (1.0 - 2.0 * s) * (-s).exp(), 0.0, 0.5);
        let mut rng = StreamRng::new(21);
        let n = 200_000;
        let mp: f64 = (0..n)
            .map(|_| sample_excited_positive(&mut rng))
            .sum::<f64>()
            / n as f64;
        let mn: f64 = (0..n)
            .map(|_| sample_excited_negative(&mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mp - pos_mean).abs() < 0.02, "{mp} vs {pos_mean}");
        assert!((mn - neg_mean).abs() < 0.005, "{mn} vs {neg_mean}");
        // Mass of the negative part is the negative volume.
        let neg_mass = quad(&|s| (1.0 - 2.0 * s) * (-s).exp(), 0.0, 0.5);
        assert!((neg_mass - first_excited_negative_volume()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn normalization_holds_for_every_raw_alpha(raw in -50.0..50.0f64) {
            let mut sp = randomized(9, 1);
            sp.alpha_raw = raw;
            let (ap, am) = sp.alpha_weights();
            prop_assert!(am >= 0.0);
            let plus = PhaseBatch::from_flat(1, vec![0.0; 3], vec![1.0, 2.0, 3.0], vec![0.0; 3]).unwrap();
            let minus = plus.clone();
            let e = signed_expectation(&plus, &minus, ap, am, |_, _, _| 1.0).unwrap();
            prop_assert!((e - 1.0).abs() <= 1e-12);
        }
    }
}
