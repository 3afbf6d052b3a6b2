//! Monte Carlo estimate of the weak-form residual
//!
//! `R_k = E_{f(T)}[phi_k(T)] - E_{f0}[phi_k(0)] - T E_{t ~ U[0,T]} E_{f(t)}[(kappa + w_x.p/m - D_k/hbar) cos(phase_k)]`
//!
//! and of the loss `(1/K) sum_k R_k^2` with its exact pathwise gradients.
//! The three terms use independent batches of size `M`.

use rayon::prelude::*;

use crate::error::{check_dim, Result, WignerError};
use crate::phase::{PhaseBatch, PhysicalConstants};
use crate::potentials::{
    classical_force_term, fd_gradient_into, moyal_truncated_term, FdSteps, MoyalOrder, Potential,
};
use crate::pushforward::{
    alpha_minus_active, branch_weights, Branch, Draws, InitialDecomposition, SignedGenerator,
    SignedPushforward,
};
use crate::rng::{label, StreamRng};
use crate::scalar::Real;
use crate::testfuncs::{IntegrandParts, TestFunctionSet};

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSampling {
    /// `t ~ U[0, T]` independently per sample.
    Uniform,
    /// One uniform draw inside each of `M` equal strata of `[0, T]`.
    Stratified,
}

/// How the potential enters the bulk integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BulkTerm {
    /// The shifted finite difference of `V`.
    Exact,
    /// `grad V . w_p` (the `hbar -> 0` limit).
    Classical,
    /// Moyal expansion truncated after the third-order term.
    Moyal3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSettings<T> {
    pub horizon: T,
    pub batch_size: usize,
    pub time_sampling: TimeSampling,
    /// Subtract the estimated variance of each `R_k` from its square.
    pub variance_correction: bool,
    /// Steps for derivatives of `V` (gradients and the non-exact bulk terms).
    pub fd_steps: FdSteps<T>,
    pub bulk_term: BulkTerm,
}

impl<T: Real> ResidualSettings<T> {
    pub fn new(horizon: T, batch_size: usize) -> Self {
        Self {
            horizon,
            batch_size,
            time_sampling: TimeSampling::Uniform,
            variance_correction: false,
            fd_steps: FdSteps::default(),
            bulk_term: BulkTerm::Exact,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero() && self.horizon.is_finite()) {
            return Err(WignerError::NonPositiveConstant("horizon"));
        }
        if self.batch_size == 0 {
            return Err(WignerError::NonPositiveConstant("batch_size"));
        }
        if !(self.fd_steps.first > T::zero()) {
            return Err(WignerError::NonPositiveConstant("fd_step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEstimate<T> {
    pub per_test: Vec<T>,
    /// `(1/K) sum_k R_k^2`.
    pub loss: T,
    /// The quantity actually optimized: `loss`, minus the mean estimated
    /// variance when variance correction is on.
    pub objective: T,
    /// Estimated variance of each `R_k`.
    pub variance: Vec<T>,
    /// Per-test means of the three terms (before the `-T` scaling of the bulk).
    pub terminal: Vec<T>,
    pub initial: Vec<T>,
    pub bulk: Vec<T>,
    /// Potential evaluations spent on the bulk term (two per sample per test
    /// function).
    pub v_evals: u64,
}

impl<T: Real> ResidualEstimate<T> {
    pub fn std_errors(&self) -> Vec<T> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

/// Gradients congruent with the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer<T> {
    pub plus: Vec<T>,
    pub minus: Vec<T>,
    pub alpha_raw: T,
    /// Flat in the [`TestFunctionSet::to_flat`] layout.
    pub tests: Vec<T>,
}

/// `M` times on `[0, horizon]`.
pub fn sample_times<T: Real>(
    horizon: T,
    m: usize,
    sampling: TimeSampling,
    rng: &mut StreamRng,
) -> Vec<T> {
    match sampling {
        TimeSampling::Uniform => (0..m).map(|_| horizon * rng.uniform::<T>()).collect(),
        TimeSampling::Stratified => {
            let width = horizon / T::lit(m as f64);
            (0..m)
                .map(|i| (T::lit(i as f64) + rng.uniform::<T>()) * width)
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Terminal,
    Initial,
    Bulk,
}

struct BranchBatch<T> {
    branch: Branch,
    points: PhaseBatch<T>,
    /// Exogenous inputs of pushed batches; `None` for the raw initial draws.
    draws: Option<Draws<T>>,
    /// Signed weight `+a+` or `-a-`.
    weight: T,
    /// `d weight / d a`.
    alpha_slope: T,
}

struct TermData<T> {
    term: Term,
    branches: Vec<BranchBatch<T>>,
    /// Per branch, `M x K` row-major by sample.
    parts: Vec<Vec<IntegrandParts<T>>>,
    /// Per-sample signed contributions, `K x M` row-major by test function.
    contrib: Vec<T>,
    mean: Vec<T>,
    sample_var: Vec<T>,
}

struct Problem<'a, T, P: ?Sized> {
    tfs: &'a TestFunctionSet<T>,
    v: &'a P,
    consts: &'a PhysicalConstants<T>,
    settings: &'a ResidualSettings<T>,
}

fn check_shapes<T: Real, G: SignedGenerator<T> + ?Sized, P: Potential<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    tfs: &TestFunctionSet<T>,
    v: &P,
    consts: &PhysicalConstants<T>,
    settings: &ResidualSettings<T>,
) -> Result<()> {
    consts.validate()?;
    settings.validate()?;
    let n = consts.dim;
    check_dim("generator", n, gen.dim())?;
    check_dim("initial decomposition", n, decomp.dim())?;
    check_dim("test function set", n, tfs.dim())?;
    check_dim("potential", n, v.dim())?;
    if tfs.is_empty() {
        return Err(WignerError::NonPositiveConstant("num_test"));
    }
    Ok(())
}

fn pushed_branch<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    branch: Branch,
    times: &[T],
    rng: &StreamRng,
    weight: T,
    alpha_slope: T,
) -> Result<BranchBatch<T>> {
    let draws = Draws::draw(decomp, branch, times, gen.noise_dim(), rng)?;
    let points = gen.push_batch(branch, &draws)?;
    Ok(BranchBatch {
        branch,
        points,
        draws: Some(draws),
        weight,
        alpha_slope,
    })
}

fn pushed_term<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    times: &[T],
    rng: &StreamRng,
) -> Result<Vec<BranchBatch<T>>> {
    let (ap, am) = branch_weights(gen, decomp);
    let mut out = vec![pushed_branch(
        gen,
        decomp,
        Branch::Plus,
        times,
        rng,
        ap,
        T::one(),
    )?];
    if alpha_minus_active(gen, decomp) {
        out.push(pushed_branch(
            gen,
            decomp,
            Branch::Minus,
            times,
            rng,
            -am,
            -T::one(),
        )?);
    }
    Ok(out)
}

fn initial_term<T: Real>(
    decomp: &InitialDecomposition<T>,
    m: usize,
    rng: &StreamRng,
) -> Result<Vec<BranchBatch<T>>> {
    let zeros = vec![T::zero(); m];
    let a0 = decomp.alpha0();
    let mut out = Vec::with_capacity(2);
    let mut branches = vec![(Branch::Plus, T::one() + a0)];
    if !decomp.is_nonnegative() {
        branches.push((Branch::Minus, -a0));
    }
    for (branch, weight) in branches {
        let draws = Draws::draw(decomp, branch, &zeros, 0, rng)?;
        out.push(BranchBatch {
            branch,
            points: draws.init,
            draws: None,
            weight,
            alpha_slope: T::zero(),
        });
    }
    Ok(out)
}

/// Draws the three independent batches of one estimate.
fn draw_terms<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    settings: &ResidualSettings<T>,
    rng: &StreamRng,
) -> Result<Vec<(Term, Vec<BranchBatch<T>>)>> {
    let m = settings.batch_size;
    let terminal_times = vec![settings.horizon; m];
    let terminal = pushed_term(gen, decomp, &terminal_times, &rng.split(label::TERMINAL))?;
    let initial = initial_term(decomp, m, &rng.split(label::INITIAL))?;
    let bulk_rng = rng.split(label::BULK);
    let times = sample_times(
        settings.horizon,
        m,
        settings.time_sampling,
        &mut bulk_rng.split(label::TIMES),
    );
    let bulk = pushed_term(gen, decomp, &times, &bulk_rng)?;
    Ok(vec![
        (Term::Terminal, terminal),
        (Term::Initial, initial),
        (Term::Bulk, bulk),
    ])
}

impl<T: Real, P: Potential<T> + ?Sized> Problem<'_, T, P> {
    fn bulk_parts(
        &self,
        k: usize,
        t: T,
        x: &[T],
        p: &[T],
        scratch: &mut Vec<T>,
    ) -> Result<IntegrandParts<T>> {
        let tf = &self.tfs.members()[k];
        match self.settings.bulk_term {
            BulkTerm::Exact => tf.integrand_parts(t, x, p, self.v, self.consts, scratch),
            mode => {
                let diff = match mode {
                    BulkTerm::Classical => {
                        classical_force_term(self.v, x, &tf.w_p, self.settings.fd_steps.first)?
                    }
                    _ => moyal_truncated_term(
                        self.v,
                        x,
                        &tf.w_p,
                        self.consts.hbar,
                        MoyalOrder::Third,
                        self.settings.fd_steps,
                    )?,
                };
                let phi = tf.phase_at(t, x, p);
                Ok(IntegrandParts {
                    amplitude: tf.kappa + crate::scalar::dot(&tf.w_x, p) / self.consts.mass - diff,
                    sin: phi.sin(),
                    cos: phi.cos(),
                })
            }
        }
    }

    /// Pointwise pieces for every (sample, test function) pair.
    fn parts(&self, term: Term, points: &PhaseBatch<T>) -> Result<Vec<IntegrandParts<T>>> {
        let k = self.tfs.len();
        let mut out = vec![IntegrandParts::default(); points.len() * k];
        out.par_chunks_mut(CHUNK * k)
            .enumerate()
            .try_for_each(|(c, slot)| -> Result<()> {
                let mut scratch = Vec::new();
                for (r, row) in slot.chunks_mut(k).enumerate() {
                    let m = c * CHUNK + r;
                    let (t, x, p) = (points.time(m), points.x(m), points.p(m));
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell = match term {
                            Term::Bulk => self.bulk_parts(j, t, x, p, &mut scratch)?,
                            _ => {
                                let phi = self.tfs.members()[j].phase_at(t, x, p);
                                IntegrandParts {
                                    amplitude: T::one(),
                                    sin: phi.sin(),
                                    cos: phi.cos(),
                                }
                            }
                        };
                    }
                }
                Ok(())
            })?;
        Ok(out)
    }

    fn evaluate_term(&self, term: Term, branches: Vec<BranchBatch<T>>) -> Result<TermData<T>> {
        let k = self.tfs.len();
        let m = self.settings.batch_size;
        let parts = branches
            .iter()
            .map(|b| self.parts(term, &b.points))
            .collect::<Result<Vec<_>>>()?;
        let mut contrib = vec![T::zero(); k * m];
        for (b, bp) in branches.iter().zip(&parts) {
            for i in 0..m {
                for j in 0..k {
                    contrib[j * m + i] += b.weight * value(term, &bp[i * k + j]);
                }
            }
        }
        let mut mean = Vec::with_capacity(k);
        let mut sample_var = Vec::with_capacity(k);
        let mf = T::lit(m as f64);
        for row in contrib.chunks(m) {
            let mu = row.iter().fold(T::zero(), |a, &c| a + c) / mf;
            let ss = row.iter().fold(T::zero(), |a, &c| a + (c - mu) * (c - mu));
            mean.push(mu);
            sample_var.push(if m > 1 {
                ss / T::lit((m - 1) as f64)
            } else {
                T::zero()
            });
        }
        Ok(TermData {
            term,
            branches,
            parts,
            contrib,
            mean,
            sample_var,
        })
    }

    /// `(R_k, Var R_k)` from the three terms.
    fn combine(&self, terms: &[TermData<T>]) -> Result<ResidualEstimate<T>> {
        let horizon = self.settings.horizon;
        let m = T::lit(self.settings.batch_size as f64);
        let k = self.tfs.len();
        let get = |term: Term| terms.iter().find(|d| d.term == term).expect("term present");
        let (terminal, initial, bulk) = (get(Term::Terminal), get(Term::Initial), get(Term::Bulk));
        let mut per_test = Vec::with_capacity(k);
        let mut variance = Vec::with_capacity(k);
        for j in 0..k {
            let r = terminal.mean[j] - initial.mean[j] - horizon * bulk.mean[j];
            if !r.is_finite() {
                return Err(WignerError::NonFinite("residual"));
            }
            per_test.push(r);
            variance.push(
                (terminal.sample_var[j]
                    + initial.sample_var[j]
                    + horizon * horizon * bulk.sample_var[j])
                    / m,
            );
        }
        let kf = T::lit(k as f64);
        let loss = per_test.iter().fold(T::zero(), |a, &r| a + r * r) / kf;
        let objective = if self.settings.variance_correction {
            loss - variance.iter().fold(T::zero(), |a, &v| a + v) / kf
        } else {
            loss
        };
        let v_evals = bulk.branches.len() as u64 * 2 * (self.settings.batch_size * k) as u64;
        Ok(ResidualEstimate {
            per_test,
            loss,
            objective,
            variance,
            terminal: terminal.mean.clone(),
            initial: initial.mean.clone(),
            bulk: bulk.mean.clone(),
            v_evals,
        })
    }

    /// `dL/dc` for every per-sample contribution of `data`, `K x M`.
    fn upstream(&self, data: &TermData<T>, est: &ResidualEstimate<T>) -> Vec<T> {
        let k = self.tfs.len();
        let m = self.settings.batch_size;
        let horizon = self.settings.horizon;
        let (sign, scale2) = match data.term {
            Term::Terminal => (T::one(), T::one()),
            Term::Initial => (-T::one(), T::one()),
            Term::Bulk => (-horizon, horizon * horizon),
        };
        let kf = T::lit(k as f64);
        let mf = T::lit(m as f64);
        let two = T::lit(2.0);
        let lambda = if self.settings.variance_correction && m > 1 {
            scale2 * two / (mf * T::lit((m - 1) as f64))
        } else {
            T::zero()
        };
        let mut u = vec![T::zero(); k * m];
        for j in 0..k {
            let base = two * est.per_test[j] * sign / mf;
            for i in 0..m {
                let c = data.contrib[j * m + i] - data.mean[j];
                u[j * m + i] = (base - lambda * c) / kf;
            }
        }
        u
    }

    /// Back-propagates `u` through one branch to the pushed points (`M x 2N`),
    /// the test parameters and the mixing weight.
    fn branch_gradient(
        &self,
        term: Term,
        batch: &BranchBatch<T>,
        parts: &[IntegrandParts<T>],
        u: &[T],
    ) -> Result<(Vec<T>, Vec<T>, T)> {
        let n = self.consts.dim;
        let k = self.tfs.len();
        let m = self.settings.batch_size;
        let stride = self.tfs.stride();
        let hbar = self.consts.hbar;
        let inv_mass = T::one() / self.consts.mass;
        let half = T::lit(0.5);
        let fd = self.settings.fd_steps.first;
        if term == Term::Bulk && self.settings.bulk_term != BulkTerm::Exact {
            return Err(WignerError::Unsupported(
                "gradients of the approximate bulk terms",
            ));
        }
        let mut cot = vec![T::zero(); m * 2 * n];
        let partials = cot
            .par_chunks_mut(CHUNK * 2 * n)
            .enumerate()
            .map(|(c, slot)| -> Result<(Vec<T>, T)> {
                let mut tests = vec![T::zero(); k * stride];
                let mut dalpha = T::zero();
                let mut at = vec![T::zero(); n];
                let mut g_plus = vec![T::zero(); n];
                let mut g_minus = vec![T::zero(); n];
                for (r, row) in slot.chunks_mut(2 * n).enumerate() {
                    let i = c * CHUNK + r;
                    let (t, x, p) = (batch.points.time(i), batch.points.x(i), batch.points.p(i));
                    let (cx, cp) = row.split_at_mut(n);
                    for j in 0..k {
                        let uk = u[j * m + i];
                        if uk == T::zero() {
                            continue;
                        }
                        let tf = &self.tfs.members()[j];
                        let part = &parts[i * k + j];
                        dalpha += uk * batch.alpha_slope * value(term, part);
                        let g = uk * batch.weight;
                        let grad = &mut tests[j * stride..(j + 1) * stride];
                        if term != Term::Bulk {
                            let gc = g * part.cos;
                            for d in 0..n {
                                cx[d] += gc * tf.w_x[d];
                                cp[d] += gc * tf.w_p[d];
                                grad[d] += gc * x[d];
                                grad[n + d] += gc * p[d];
                            }
                            grad[2 * n] += gc * t;
                            grad[2 * n + 1] += gc;
                            continue;
                        }
                        for d in 0..n {
                            at[d] = x[d] + half * hbar * tf.w_p[d];
                        }
                        fd_gradient_into(self.v, &mut at, fd, &mut g_plus)?;
                        for d in 0..n {
                            at[d] = x[d] - half * hbar * tf.w_p[d];
                        }
                        fd_gradient_into(self.v, &mut at, fd, &mut g_minus)?;
                        let (a, s, co) = (part.amplitude, part.sin, part.cos);
                        let gas = g * a * s;
                        let gc = g * co;
                        for d in 0..n {
                            cx[d] += -gc * (g_plus[d] - g_minus[d]) / hbar - gas * tf.w_x[d];
                            cp[d] += gc * tf.w_x[d] * inv_mass - gas * tf.w_p[d];
                            grad[d] += gc * p[d] * inv_mass - gas * x[d];
                            grad[n + d] += -gc * half * (g_plus[d] + g_minus[d]) - gas * p[d];
                        }
                        grad[2 * n] += gc - gas * t;
                        grad[2 * n + 1] += -gas;
                    }
                }
                Ok((tests, dalpha))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tests = vec![T::zero(); k * stride];
        let mut dalpha = T::zero();
        for (part, da) in partials {
            for (a, b) in tests.iter_mut().zip(&part) {
                *a += *b;
            }
            dalpha += da;
        }
        Ok((cot, tests, dalpha))
    }
}

#[inline]
fn value<T: Real>(term: Term, part: &IntegrandParts<T>) -> T {
    match term {
        Term::Bulk => part.value(),
        _ => part.sin,
    }
}

struct Evaluation<T> {
    estimate: ResidualEstimate<T>,
    terms: Vec<TermData<T>>,
}

fn evaluate<T: Real, G: SignedGenerator<T> + ?Sized, P: Potential<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    problem: &Problem<'_, T, P>,
    rng: &StreamRng,
) -> Result<Evaluation<T>> {
    check_shapes(
        gen,
        decomp,
        problem.tfs,
        problem.v,
        problem.consts,
        problem.settings,
    )?;
    let terms = draw_terms(gen, decomp, problem.settings, rng)?
        .into_iter()
        .map(|(term, branches)| problem.evaluate_term(term, branches))
        .collect::<Result<Vec<_>>>()?;
    let estimate = problem.combine(&terms)?;
    Ok(Evaluation { estimate, terms })
}

/// Residuals of every test function for the generator `gen`.
pub fn estimate_residual<T, G, P>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    tfs: &TestFunctionSet<T>,
    v: &P,
    consts: &PhysicalConstants<T>,
    settings: &ResidualSettings<T>,
    rng: &StreamRng,
) -> Result<ResidualEstimate<T>>
where
    T: Real,
    G: SignedGenerator<T> + ?Sized,
    P: Potential<T> + ?Sized,
{
    let problem = Problem {
        tfs,
        v,
        consts,
        settings,
    };
    Ok(evaluate(gen, decomp, &problem, rng)?.estimate)
}

/// Gradient accumulation shared by the adversary-only and full passes.
struct Backprop<T> {
    tests: Vec<T>,
    dalpha: T,
    /// Per branch: network inputs and output cotangents of every pushed row.
    net: Vec<(Branch, Vec<T>, Vec<T>)>,
}

fn backprop<T: Real, P: Potential<T> + ?Sized>(
    eval: &Evaluation<T>,
    problem: &Problem<'_, T, P>,
    inputs: Option<&dyn Fn(&Draws<T>) -> Vec<T>>,
) -> Result<Backprop<T>> {
    let n = problem.consts.dim;
    let mut tests = vec![T::zero(); problem.tfs.len() * problem.tfs.stride()];
    let mut dalpha = T::zero();
    let mut net: Vec<(Branch, Vec<T>, Vec<T>)> = Vec::new();
    for data in &eval.terms {
        let u = problem.upstream(data, &eval.estimate);
        for (batch, parts) in data.branches.iter().zip(&data.parts) {
            let (cot, tg, da) = problem.branch_gradient(data.term, batch, parts, &u)?;
            for (a, b) in tests.iter_mut().zip(&tg) {
                *a += *b;
            }
            dalpha += da;
            let (Some(make_inputs), Some(draws)) = (inputs, &batch.draws) else {
                continue;
            };
            let mut out_cot = cot;
            for (i, row) in out_cot.chunks_mut(2 * n).enumerate() {
                let s = batch.points.time(i).sqrt();
                for c in row.iter_mut() {
                    *c *= s;
                }
            }
            let rows = make_inputs(draws);
            match net.iter_mut().find(|(b, _, _)| *b == batch.branch) {
                Some((_, ins, cots)) => {
                    ins.extend(rows);
                    cots.extend(out_cot);
                }
                None => net.push((batch.branch, rows, out_cot)),
            }
        }
    }
    Ok(Backprop { tests, dalpha, net })
}

/// Residual estimate and the gradient of the objective with respect to the
/// flat test-function parameters.
pub fn adversary_gradient<T, G, P>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    tfs: &TestFunctionSet<T>,
    v: &P,
    consts: &PhysicalConstants<T>,
    settings: &ResidualSettings<T>,
    rng: &StreamRng,
) -> Result<(ResidualEstimate<T>, Vec<T>)>
where
    T: Real,
    G: SignedGenerator<T> + ?Sized,
    P: Potential<T> + ?Sized,
{
    let problem = Problem {
        tfs,
        v,
        consts,
        settings,
    };
    let eval = evaluate(gen, decomp, &problem, rng)?;
    let bp = backprop(&eval, &problem, None)?;
    Ok((eval.estimate, bp.tests))
}

/// Residual estimate and exact gradients of the objective with respect to
/// both networks, the raw mixing scalar and the test-function parameters.
///
/// Derivatives of `V` (needed where the shifted difference is differentiated
/// in `x` or `w_p`) use central differences with step `settings.fd_steps.first`.
pub fn loss_and_gradients<T, P>(
    sp: &SignedPushforward<T>,
    decomp: &InitialDecomposition<T>,
    tfs: &TestFunctionSet<T>,
    v: &P,
    consts: &PhysicalConstants<T>,
    settings: &ResidualSettings<T>,
    rng: &StreamRng,
) -> Result<(ResidualEstimate<T>, GradientBuffer<T>)>
where
    T: Real,
    P: Potential<T> + ?Sized,
{
    let problem = Problem {
        tfs,
        v,
        consts,
        settings,
    };
    let eval = evaluate(sp, decomp, &problem, rng)?;
    let make_inputs = |draws: &Draws<T>| sp.batch_inputs(draws);
    let bp = backprop(&eval, &problem, Some(&make_inputs))?;
    let mut plus = vec![T::zero(); sp.plus.num_params()];
    let mut minus = vec![T::zero(); sp.minus.num_params()];
    for (branch, inputs, cots) in &bp.net {
        let grad = sp.net(*branch).backward(inputs, cots)?;
        match branch {
            Branch::Plus => plus = grad,
            Branch::Minus => minus = grad,
        }
    }
    Ok((
        eval.estimate,
        GradientBuffer {
            plus,
            minus,
            alpha_raw: bp.dalpha * sp.alpha_slope(),
            tests: bp.tests,
        },
    ))
}

/// Per-test mean and standard error of the bulk expectation
/// `E_{f(t)}[(kappa + w_x.p/m - D/hbar) cos(phase)]` over a batch pushed to
/// the given times.
pub fn bulk_expectation<T, G, P>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    tfs: &TestFunctionSet<T>,
    v: &P,
    consts: &PhysicalConstants<T>,
    settings: &ResidualSettings<T>,
    times: &[T],
    rng: &StreamRng,
) -> Result<(Vec<T>, Vec<T>)>
where
    T: Real,
    G: SignedGenerator<T> + ?Sized,
    P: Potential<T> + ?Sized,
{
    let mut local = settings.clone();
    local.batch_size = times.len();
    check_shapes(gen, decomp, tfs, v, consts, &local)?;
    let problem = Problem {
        tfs,
        v,
        consts,
        settings: &local,
    };
    let branches = pushed_term(gen, decomp, times, rng)?;
    let data = problem.evaluate_term(Term::Bulk, branches)?;
    let m = T::lit(times.len() as f64);
    let se = data.sample_var.iter().map(|v| (*v / m).sqrt()).collect();
    Ok((data.mean, se))
}
