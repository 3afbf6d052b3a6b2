//! The min-max loop: `n_adv` ascent steps on the test functions, then one
//! descent step on both networks and the mixing scalar, per epoch.
//!
//! Every batch is drawn from a stream addressed by `(seed, phase, epoch,
//! step)`, so a resumed run replays exactly what an uninterrupted one does.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::checkpoint::{
    decode_checkpoint, encode_checkpoint, write_atomic, ByteReader, ByteWriter, GeneratorCheckpoint,
};
use crate::error::{Result, WignerError};
use crate::network::{Adam, Direction};
use crate::phase::{validate_config, PhysicalConstants, RunConfig};
use crate::potentials::{FdSteps, Potential};
use crate::pushforward::{
    alpha_minus_active, sample_batch, signed_expectation, InitialDecomposition, NetworkShape,
    SignedGenerator, SignedPushforward,
};
use crate::residual::{
    adversary_gradient, estimate_residual, loss_and_gradients, BulkTerm, ResidualEstimate,
    ResidualSettings, TimeSampling,
};
use crate::rng::{label, StreamRng};
use crate::scalar::Real;
use crate::testfuncs::{init_test_set, TestFunctionSet, TestScales};

#[derive(Debug, Clone)]
pub struct TrainOptions<T> {
    pub run: RunConfig<T>,
    pub consts: PhysicalConstants<T>,
    pub shape: NetworkShape,
    pub scales: TestScales<T>,
    pub time_sampling: TimeSampling,
    pub variance_correction: bool,
    pub fd_steps: FdSteps<T>,
    /// `None` freezes the mixing weight exactly when the initial data is
    /// non-negative.
    pub freeze_alpha: Option<bool>,
    /// Held-out evaluation cadence in epochs (0 disables it).
    pub eval_every: usize,
    /// Size of the held-out test set as a multiple of `K`.
    pub heldout_factor: usize,
    pub divergence_threshold: T,
    /// Checkpoint cadence in epochs; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Fill the wall-clock column (otherwise it is 0, keeping logs
    /// reproducible).
    pub record_wallclock: bool,
    /// Cosine decay of the generator rate from `lr_gen` to `final` over
    /// the first `epochs` epochs (absolute epoch index, so resumes agree).
    pub lr_gen_decay: Option<LrDecay<T>>,
    /// Raised from outside to stop after the current epoch.
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrDecay<T> {
    pub final_lr: T,
    pub epochs: usize,
}

impl<T: Real> TrainOptions<T> {
    pub fn new(run: RunConfig<T>, consts: PhysicalConstants<T>) -> Self {
        Self {
            run,
            consts,
            shape: NetworkShape::default(),
            scales: TestScales::default(),
            time_sampling: TimeSampling::Uniform,
            variance_correction: false,
            fd_steps: FdSteps::default(),
            freeze_alpha: None,
            eval_every: 50,
            heldout_factor: 4,
            divergence_threshold: T::lit(1e6),
            checkpoint_every: 0,
            checkpoint_path: None,
            record_wallclock: false,
            lr_gen_decay: None,
            stop: None,
        }
    }

    pub fn residual_settings(&self) -> ResidualSettings<T> {
        ResidualSettings {
            horizon: self.run.horizon,
            batch_size: self.run.batch_size,
            time_sampling: self.time_sampling,
            variance_correction: self.variance_correction,
            fd_steps: self.fd_steps,
            bulk_term: BulkTerm::Exact,
        }
    }

    /// Generator learning rate at `epoch`.
    pub fn lr_gen_at(&self, epoch: usize) -> T {
        let lr = self.run.lr_gen;
        match self.lr_gen_decay {
            None => lr,
            Some(d) if d.epochs == 0 || epoch >= d.epochs => d.final_lr,
            Some(d) => {
                let c = (T::PI() * T::lit(epoch as f64 / d.epochs as f64)).cos();
                d.final_lr + (lr - d.final_lr) * T::lit(0.5) * (T::one() + c)
            }
        }
    }
}

/// The fixed ingredients of a run.
pub struct TrainContext<'a, T> {
    pub opts: &'a TrainOptions<T>,
    pub v: &'a dyn Potential<T>,
    pub decomp: &'a InitialDecomposition<T>,
    pub settings: ResidualSettings<T>,
}

impl<'a, T: Real> TrainContext<'a, T> {
    pub fn new(
        opts: &'a TrainOptions<T>,
        v: &'a dyn Potential<T>,
        decomp: &'a InitialDecomposition<T>,
    ) -> Self {
        Self {
            opts,
            v,
            decomp,
            settings: opts.residual_settings(),
        }
    }

    fn root(&self, seed: u64) -> StreamRng {
        StreamRng::new(seed)
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow<T> {
    pub epoch: usize,
    pub loss: T,
    /// Present on held-out evaluation epochs only.
    pub heldout_loss: Option<T>,
    /// Nine times the mean estimated variance of the residuals: the loss an
    /// exact solution reaches with all residuals at three standard errors.
    pub noise_floor: T,
    pub alpha: T,
    /// Signed means at the horizon.
    pub mean_x: Vec<T>,
    pub mean_p: Vec<T>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub sp: SignedPushforward<T>,
    pub tfs: TestFunctionSet<T>,
    pub adam_plus: Adam<T>,
    pub adam_minus: Adam<T>,
    pub adam_alpha: Adam<T>,
    pub adam_tests: Adam<T>,
    pub epoch: usize,
    pub seed: u64,
    pub history: Vec<MetricRow<T>>,
}

impl<T: Real> TrainState<T> {
    /// Fresh generator (identity pushforward, `a = a0`) and a random test set.
    pub fn new(opts: &TrainOptions<T>, decomp: &InitialDecomposition<T>) -> Result<Self> {
        let root = StreamRng::new(opts.run.seed);
        let frozen = opts.freeze_alpha.unwrap_or_else(|| decomp.is_nonnegative());
        let sp =
            SignedPushforward::new(opts.consts.dim, &opts.shape, decomp.alpha0(), frozen, &root)?;
        let tfs = init_test_set(
            opts.run.num_test,
            opts.consts.dim,
            &opts.scales,
            &mut root.split(label::TEST_INIT),
        )?;
        Ok(Self {
            adam_plus: Adam::new(sp.plus.num_params()),
            adam_minus: Adam::new(sp.minus.num_params()),
            adam_alpha: Adam::new(1),
            adam_tests: Adam::new(tfs.len() * tfs.stride()),
            sp,
            tfs,
            epoch: 0,
            seed: opts.run.seed,
            history: Vec::new(),
        })
    }

    fn encode_trainer(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u64(self.epoch as u64);
        w.u64(self.seed);
        w.u64(self.tfs.dim() as u64);
        w.u64(self.tfs.len() as u64);
        w.reals(&self.tfs.to_flat());
        for adam in [
            &self.adam_plus,
            &self.adam_minus,
            &self.adam_alpha,
            &self.adam_tests,
        ] {
            w.u64(adam.step);
            w.real(adam.beta1);
            w.real(adam.beta2);
            w.real(adam.eps);
            w.reals(&adam.m);
            w.reals(&adam.v);
        }
        w.len_prefix(self.history.len());
        for row in &self.history {
            w.u64(row.epoch as u64);
            w.real(row.loss);
            match row.heldout_loss {
                Some(h) => {
                    w.u8(1);
                    w.real(h);
                }
                None => w.u8(0),
            }
            w.real(row.noise_floor);
            w.real(row.alpha);
            w.reals(&row.mean_x);
            w.reals(&row.mean_p);
            w.f64(row.wallclock_s);
        }
        w.into_inner()
    }

    fn decode_trainer(sp: SignedPushforward<T>, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let epoch = r.u64()? as usize;
        let seed = r.u64()?;
        let dim = r.u64()? as usize;
        let k = r.u64()? as usize;
        let flat: Vec<T> = r.reals()?;
        if dim == 0 || k == 0 {
            return Err(WignerError::Format("empty test set".into()));
        }
        let zeros = vec![T::zero(); dim];
        let member =
            crate::testfuncs::TestFunction::new(zeros.clone(), zeros, T::zero(), T::zero())?;
        let mut tfs = TestFunctionSet::new(vec![member; k])?;
        tfs.set_flat(&flat)?;
        let mut adams = Vec::with_capacity(4);
        for _ in 0..4 {
            let step = r.u64()?;
            let (beta1, beta2, eps) = (r.real()?, r.real()?, r.real()?);
            let m: Vec<T> = r.reals()?;
            let v: Vec<T> = r.reals()?;
            if m.len() != v.len() {
                return Err(WignerError::Format(
                    "optimizer moments differ in length".into(),
                ));
            }
            adams.push(Adam {
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            });
        }
        let n = r.len_prefix(1)?;
        let mut history = Vec::with_capacity(n);
        for _ in 0..n {
            history.push(MetricRow {
                epoch: r.u64()? as usize,
                loss: r.real()?,
                heldout_loss: match r.u8()? {
                    0 => None,
                    _ => Some(r.real()?),
                },
                noise_floor: r.real()?,
                alpha: r.real()?,
                mean_x: r.reals()?,
                mean_p: r.reals()?,
                wallclock_s: r.f64()?,
            });
        }
        r.finish()?;
        let adam_tests = adams.pop().expect("four groups");
        let adam_alpha = adams.pop().expect("four groups");
        let adam_minus = adams.pop().expect("four groups");
        let adam_plus = adams.pop().expect("four groups");
        if adam_plus.len() != sp.plus.num_params()
            || adam_minus.len() != sp.minus.num_params()
            || adam_alpha.len() != 1
            || adam_tests.len() != flat.len()
        {
            return Err(WignerError::Format(
                "optimizer state does not match parameters".into(),
            ));
        }
        Ok(Self {
            sp,
            tfs,
            adam_plus,
            adam_minus,
            adam_alpha,
            adam_tests,
            epoch,
            seed,
            history,
        })
    }

    pub fn to_bytes(
        &self,
        decomp: &InitialDecomposition<T>,
        horizon: T,
        consts: &PhysicalConstants<T>,
    ) -> Vec<u8> {
        let ck = GeneratorCheckpoint {
            sp: self.sp.clone(),
            decomp: decomp.clone(),
            horizon,
            hbar: consts.hbar,
            mass: consts.mass,
        };
        encode_checkpoint(&ck, Some(&self.encode_trainer()))
    }

    /// Restores the state and returns the generator section alongside it.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, GeneratorCheckpoint<T>)> {
        let (ck, trainer) = decode_checkpoint::<T>(bytes)?;
        let trainer = trainer
            .ok_or_else(|| WignerError::Format("checkpoint has no training state".into()))?;
        let state = Self::decode_trainer(ck.sp.clone(), &trainer)?;
        Ok((state, ck))
    }
}

/// Signed means of `x` and `p` at time `t` over `n` fresh samples.
pub fn moments_at<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    decomp: &InitialDecomposition<T>,
    t: T,
    n: usize,
    rng: &StreamRng,
) -> Result<(Vec<T>, Vec<T>)> {
    let times = vec![t; n];
    let s = sample_batch(gen, decomp, &times, rng)?;
    let dim = gen.dim();
    let mut mean_x = Vec::with_capacity(dim);
    let mut mean_p = Vec::with_capacity(dim);
    for d in 0..dim {
        mean_x.push(signed_expectation(
            &s.plus,
            &s.minus,
            s.alpha_plus,
            s.alpha_minus,
            |_, x, _| x[d],
        )?);
        mean_p.push(signed_expectation(
            &s.plus,
            &s.minus,
            s.alpha_plus,
            s.alpha_minus,
            |_, _, p| p[d],
        )?);
    }
    Ok((mean_x, mean_p))
}

/// `n_adv` ascent steps on the test parameters, each on a fresh batch, with
/// frequencies clipped after every step. Returns the estimate from the last
/// step.
pub fn adversary_phase<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    tfs: &mut TestFunctionSet<T>,
    adam: &mut Adam<T>,
    ctx: &TrainContext<'_, T>,
    seed: u64,
    epoch: usize,
    n_adv: usize,
) -> Result<Option<ResidualEstimate<T>>> {
    let root = ctx.root(seed);
    let mut last = None;
    for step in 0..n_adv {
        let rng = root.derive(&[label::ADVERSARY, epoch as u64, step as u64]);
        let (est, grad) = adversary_gradient(
            gen,
            ctx.decomp,
            tfs,
            ctx.v,
            &ctx.opts.consts,
            &ctx.settings,
            &rng,
        )?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(WignerError::NonFiniteLoss(epoch));
        }
        let mut flat = tfs.to_flat();
        adam.apply(&mut flat, &grad, ctx.opts.run.lr_adv, Direction::Ascent)?;
        tfs.set_flat(&flat)?;
        tfs.clip(&ctx.opts.scales);
        last = Some(est);
    }
    Ok(last)
}

/// One descent step on `(theta+, theta-, alpha_raw)` with a fresh batch. The
/// loss is checked before any parameter moves.
pub fn generator_phase<T: Real>(
    state: &mut TrainState<T>,
    ctx: &TrainContext<'_, T>,
) -> Result<ResidualEstimate<T>> {
    let rng = ctx
        .root(state.seed)
        .derive(&[label::GENERATOR, state.epoch as u64]);
    let (est, grads) = loss_and_gradients(
        &state.sp,
        ctx.decomp,
        &state.tfs,
        ctx.v,
        &ctx.opts.consts,
        &ctx.settings,
        &rng,
    )?;
    let finite = est.objective.is_finite()
        && grads.plus.iter().chain(&grads.minus).all(|g| g.is_finite())
        && grads.alpha_raw.is_finite();
    if !finite {
        return Err(WignerError::NonFiniteLoss(state.epoch));
    }
    if est.loss > ctx.opts.divergence_threshold {
        return Err(WignerError::Divergence {
            epoch: state.epoch,
            loss: est.loss.as_f64(),
        });
    }
    let lr = ctx.opts.lr_gen_at(state.epoch);
    let mut plus = state.sp.plus.to_flat();
    state
        .adam_plus
        .apply(&mut plus, &grads.plus, lr, Direction::Descent)?;
    state.sp.plus.set_flat(&plus)?;
    if alpha_minus_active(&state.sp, ctx.decomp) {
        let mut minus = state.sp.minus.to_flat();
        state
            .adam_minus
            .apply(&mut minus, &grads.minus, lr, Direction::Descent)?;
        state.sp.minus.set_flat(&minus)?;
        if !state.sp.alpha_frozen {
            let mut raw = [state.sp.alpha_raw];
            state
                .adam_alpha
                .apply(&mut raw, &[grads.alpha_raw], lr, Direction::Descent)?;
            state.sp.alpha_raw = raw[0];
        }
    }
    Ok(est)
}

/// Loss on a freshly drawn test set of `heldout_factor * K` members that the
/// adversary never trained.
pub fn heldout_loss<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    ctx: &TrainContext<'_, T>,
    seed: u64,
    epoch: usize,
) -> Result<T> {
    let root = ctx.root(seed);
    let k = ctx.opts.run.num_test * ctx.opts.heldout_factor.max(1);
    let tfs = init_test_set(
        k,
        ctx.opts.consts.dim,
        &ctx.opts.scales,
        &mut root.derive(&[label::HELD_OUT, epoch as u64]),
    )?;
    let rng = root.derive(&[label::EVALUATION, epoch as u64]);
    Ok(estimate_residual(
        gen,
        ctx.decomp,
        &tfs,
        ctx.v,
        &ctx.opts.consts,
        &ctx.settings,
        &rng,
    )?
    .loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainStatus {
    Completed,
    Interrupted,
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub state: TrainState<T>,
    pub status: TrainStatus,
}

fn is_divergence(e: &WignerError) -> Option<f64> {
    match e {
        WignerError::Divergence { loss, .. } => Some(*loss),
        WignerError::NonFiniteLoss(_)
        | WignerError::NonFinite(_)
        | WignerError::NonFinitePotential(_) => Some(f64::NAN),
        _ => None,
    }
}

fn save<T: Real>(state: &TrainState<T>, ctx: &TrainContext<'_, T>) -> Result<()> {
    if let Some(path) = &ctx.opts.checkpoint_path {
        write_atomic(
            path,
            &state.to_bytes(ctx.decomp, ctx.opts.run.horizon, &ctx.opts.consts),
        )?;
    }
    Ok(())
}

fn metric_row<T: Real, G: SignedGenerator<T> + ?Sized>(
    gen: &G,
    ctx: &TrainContext<'_, T>,
    seed: u64,
    epoch: usize,
    est: &ResidualEstimate<T>,
    started: Instant,
) -> Result<MetricRow<T>> {
    let opts = ctx.opts;
    let target = opts.run.epochs;
    let evaluate =
        opts.eval_every > 0 && ((epoch + 1).is_multiple_of(opts.eval_every) || epoch + 1 == target);
    let heldout_loss = if evaluate {
        Some(heldout_loss(gen, ctx, seed, epoch)?)
    } else {
        None
    };
    let (mean_x, mean_p) = moments_at(
        gen,
        ctx.decomp,
        opts.run.horizon,
        opts.run.batch_size,
        &ctx.root(seed).derive(&[label::EVALUATION, epoch as u64, 1]),
    )?;
    let k = T::lit(est.variance.len() as f64);
    Ok(MetricRow {
        epoch,
        loss: est.loss,
        heldout_loss,
        noise_floor: T::lit(9.0) * est.variance.iter().fold(T::zero(), |a, &v| a + v) / k,
        alpha: gen.alpha(),
        mean_x,
        mean_p,
        wallclock_s: if opts.record_wallclock {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

/// Adversary-only run against a fixed generator: every epoch makes `n_adv`
/// ascent steps and logs the same metrics as [`train`]. An exact solution
/// keeps the loss at the noise floor however the test functions move.
pub fn audit_frozen<T: Real, G: SignedGenerator<T> + ?Sized>(
    opts: &TrainOptions<T>,
    v: &dyn Potential<T>,
    decomp: &InitialDecomposition<T>,
    gen: &G,
    observer: &mut dyn FnMut(&MetricRow<T>),
) -> Result<(TestFunctionSet<T>, Vec<MetricRow<T>>)> {
    validate_config(&opts.run, &opts.consts)?;
    let ctx = TrainContext::new(opts, v, decomp);
    let root = StreamRng::new(opts.run.seed);
    let mut tfs = init_test_set(
        opts.run.num_test,
        opts.consts.dim,
        &opts.scales,
        &mut root.split(label::TEST_INIT),
    )?;
    let mut adam = Adam::new(tfs.len() * tfs.stride());
    let started = Instant::now();
    let mut history = Vec::with_capacity(opts.run.epochs);
    for epoch in 0..opts.run.epochs {
        adversary_phase(
            gen,
            &mut tfs,
            &mut adam,
            &ctx,
            opts.run.seed,
            epoch,
            opts.run.n_adv,
        )?;
        let rng = root.derive(&[label::GENERATOR, epoch as u64]);
        let est = estimate_residual(gen, decomp, &tfs, v, &opts.consts, &ctx.settings, &rng)?;
        if !est.loss.is_finite() {
            return Err(WignerError::NonFiniteLoss(epoch));
        }
        let row = metric_row(gen, &ctx, opts.run.seed, epoch, &est, started)?;
        observer(&row);
        history.push(row);
    }
    Ok((tfs, history))
}

/// Runs epochs until `state.epoch == opts.run.epochs`, starting from `state`
/// or from a fresh state. `observer` sees every metrics row as it is
/// appended.
pub fn train<T: Real>(
    opts: &TrainOptions<T>,
    v: &dyn Potential<T>,
    decomp: &InitialDecomposition<T>,
    state: Option<TrainState<T>>,
    observer: &mut dyn FnMut(&MetricRow<T>),
) -> Result<TrainReport<T>> {
    let mut check = opts.run.clone();
    check.epochs = check.epochs.max(1);
    validate_config(&check, &opts.consts)?;
    let ctx = TrainContext::new(opts, v, decomp);
    let mut state = match state {
        Some(s) => s,
        None => TrainState::new(opts, decomp)?,
    };
    let started = Instant::now();
    let target = opts.run.epochs;
    while state.epoch < target {
        let epoch = state.epoch;
        let step = adversary_phase(
            &state.sp,
            &mut state.tfs,
            &mut state.adam_tests,
            &ctx,
            state.seed,
            epoch,
            opts.run.n_adv,
        )
        .and_then(|_| generator_phase(&mut state, &ctx));
        let est = match step {
            Ok(est) => est,
            Err(e) => match is_divergence(&e) {
                Some(loss) => {
                    return Ok(TrainReport {
                        state,
                        status: TrainStatus::Diverged { epoch, loss },
                    })
                }
                None => return Err(e),
            },
        };
        let row = metric_row(&state.sp, &ctx, state.seed, epoch, &est, started)?;
        state.epoch += 1;
        observer(&row);
        state.history.push(row);
        if opts.checkpoint_every > 0 && state.epoch % opts.checkpoint_every == 0 {
            save(&state, &ctx)?;
        }
        if opts.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst)) {
            save(&state, &ctx)?;
            return Ok(TrainReport {
                state,
                status: TrainStatus::Interrupted,
            });
        }
    }
    save(&state, &ctx)?;
    Ok(TrainReport {
        state,
        status: TrainStatus::Completed,
    })
}
