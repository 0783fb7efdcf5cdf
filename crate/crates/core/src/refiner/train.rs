//! Mini-batch Adam training with hand-written backpropagation.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{channel_loss, VelocityForm};
use super::network::{
    Centering, Forward, Layout, Network, Preprocess, RefinerWeights, BLOCKS, DEFAULT_HIDDEN, OUTPUTS,
};
use super::window::{CHANNELS, WINDOW};
use crate::math::sqrt;
use crate::{Error, Pose3D, Result, NUM_JOINTS};

/// Shortest usable trajectory: one full window plus the window before it.
pub const MIN_TRAJECTORY: usize = WINDOW + 1;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const DIVERGENCE_FACTOR: f64 = 10.0;
const EVAL_WINDOWS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerHyperparams {
    pub alpha_loss: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Pose windows per batch; each contributes all 51 channels.
    pub batch_size: usize,
    /// Windows drawn per epoch; `None` uses every window once.
    pub samples_per_epoch: Option<usize>,
    pub hidden: usize,
    pub input_scale: f64,
    pub velocity_form: VelocityForm,
    pub seed: u64,
}

impl Default for RefinerHyperparams {
    fn default() -> Self {
        Self {
            alpha_loss: 0.5,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            samples_per_epoch: None,
            hidden: DEFAULT_HIDDEN,
            input_scale: 10.0,
            velocity_form: VelocityForm::Difference,
            seed: 0,
        }
    }
}

impl RefinerHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Model(m.into()));
        if !(0.0..=1.0).contains(&self.alpha_loss) {
            return bad("alpha_loss must lie in [0, 1]");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 || self.samples_per_epoch == Some(0) {
            return bad("epochs, batch size, hidden width and samples per epoch must be positive");
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return bad("input scale must be positive");
        }
        Ok(())
    }
}

/// Aligned clean and noisy pose sequences of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub clean: Vec<Pose3D>,
    pub noisy: Vec<Pose3D>,
    /// Ground truth of the frame between `t - 1` and `t` at index `t`
    /// (index 0 unused). Defaults to the midpoint of the clean frames.
    pub intermediate: Option<Vec<Pose3D>>,
}

/// One coordinate channel of one training window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub input: [f64; WINDOW],
    /// The same channel one frame earlier; its refined current output is
    /// the previous emitted frame of the velocity term.
    pub prev_input: [f64; WINDOW],
    /// Ground truth `[current, intermediate]`.
    pub target: [f64; OUTPUTS],
    pub prev_target: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Per trajectory, per channel: (clean, noisy, intermediate) series.
    series: Vec<Vec<[Vec<f64>; 3]>>,
    windows: Vec<(usize, usize)>,
}

impl TrainingSet {
    pub fn new(trajectories: &[Trajectory]) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Dataset("no trajectories".into()));
        }
        let mut series = Vec::with_capacity(trajectories.len());
        let mut windows = Vec::new();
        for (k, tr) in trajectories.iter().enumerate() {
            let n = tr.clean.len();
            if n < MIN_TRAJECTORY {
                return Err(Error::Dataset(alloc::format!(
                    "trajectory {k} has {n} frames, need at least {MIN_TRAJECTORY}"
                )));
            }
            if tr.noisy.len() != n || tr.intermediate.as_ref().is_some_and(|m| m.len() != n) {
                return Err(Error::Dataset(alloc::format!("trajectory {k}: clean/noisy/intermediate lengths differ")));
            }
            let all = tr.clean.iter().chain(&tr.noisy).chain(tr.intermediate.iter().flatten());
            if all.clone().any(|p| p.joints.len() != NUM_JOINTS) {
                return Err(Error::Dataset(alloc::format!("trajectory {k}: pose without {NUM_JOINTS} joints")));
            }
            if all.flat_map(|p| p.joints.iter()).any(|j| !j.iter().all(|v| v.is_finite())) {
                return Err(Error::Dataset(alloc::format!("trajectory {k}: non-finite coordinate")));
            }
            let mut chans = Vec::with_capacity(CHANNELS);
            for c in 0..CHANNELS {
                let (j, a) = (c / 3, c % 3);
                let clean: Vec<f64> = tr.clean.iter().map(|p| p.joints[j][a]).collect();
                let noisy: Vec<f64> = tr.noisy.iter().map(|p| p.joints[j][a]).collect();
                let mid: Vec<f64> = match &tr.intermediate {
                    Some(m) => m.iter().map(|p| p.joints[j][a]).collect(),
                    None => (0..n).map(|t| if t == 0 { clean[0] } else { 0.5 * (clean[t - 1] + clean[t]) }).collect(),
                };
                chans.push([clean, noisy, mid]);
            }
            series.push(chans);
            windows.extend((WINDOW..n).map(|t| (k, t)));
        }
        Ok(Self { series, windows })
    }

    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }

    /// All 51 channel samples of window `w`.
    pub fn window_samples(&self, w: usize) -> impl Iterator<Item = ChannelSample> + '_ {
        let (k, t) = self.windows[w];
        self.series[k].iter().map(move |[clean, noisy, mid]| {
            let mut input = [0.0; WINDOW];
            let mut prev_input = [0.0; WINDOW];
            input.copy_from_slice(&noisy[t + 1 - WINDOW..=t]);
            prev_input.copy_from_slice(&noisy[t - WINDOW..t]);
            ChannelSample { input, prev_input, target: [clean[t], mid[t]], prev_target: clean[t - 1] }
        })
    }

    fn gather(&self, windows: &[usize]) -> Vec<ChannelSample> {
        windows.iter().flat_map(|&w| self.window_samples(w)).collect()
    }
}

struct BatchGrad {
    cur: Forward,
    prev: Forward,
    d_cur: DMatrix<f64>,
    d_prev: DMatrix<f64>,
}

fn batch_loss(
    net: &Network,
    samples: &[ChannelSample],
    alpha: f64,
    form: VelocityForm,
    with_grad: bool,
) -> (f64, Option<BatchGrad>) {
    let prev_in: Vec<[f64; WINDOW]> = samples.iter().map(|s| s.prev_input).collect();
    let cur_in: Vec<[f64; WINDOW]> = samples.iter().map(|s| s.input).collect();
    let prev = net.forward(&prev_in);
    let cur = net.forward(&cur_in);
    let n = samples.len();
    let mut total = 0.0;
    let mut d_cur = DMatrix::zeros(OUTPUTS, if with_grad { n } else { 0 });
    let mut d_prev = DMatrix::zeros(OUTPUTS, if with_grad { n } else { 0 });
    for (c, s) in samples.iter().enumerate() {
        let y = [cur.output(c, 0), cur.output(c, 1)];
        let (l, g) = channel_loss(y, s.target, s.prev_target, prev.output(c, 0), alpha, form);
        total += l;
        if with_grad {
            d_cur[(0, c)] = g[0] / n as f64;
            d_cur[(1, c)] = g[1] / n as f64;
            d_prev[(0, c)] = g[2] / n as f64;
        }
    }
    let grad = with_grad.then_some(BatchGrad { cur, prev, d_cur, d_prev });
    (total / n as f64, grad)
}

fn accumulate_gradient(net: &Network, b: &BatchGrad, layout: &Layout, grad: &mut [f64]) {
    net.backward(&b.cur, &b.d_cur, layout, grad);
    net.backward(&b.prev, &b.d_prev, layout, grad);
}

fn check_inputs(weights: &RefinerWeights, samples: &[ChannelSample], alpha: f64) -> Result<()> {
    weights.validate()?;
    if samples.is_empty() {
        return Err(Error::Dataset("no samples".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::LossShape(alloc::format!("alpha_loss {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Mean channel loss over `samples`.
pub fn evaluate_loss(
    weights: &RefinerWeights,
    samples: &[ChannelSample],
    alpha: f64,
    form: VelocityForm,
) -> Result<f64> {
    check_inputs(weights, samples, alpha)?;
    Ok(batch_loss(&Network::new(weights), samples, alpha, form, false).0)
}

/// Mean channel loss and its gradient with respect to `weights.params`.
pub fn loss_and_gradient(
    weights: &RefinerWeights,
    samples: &[ChannelSample],
    alpha: f64,
    form: VelocityForm,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(weights, samples, alpha)?;
    let net = Network::new(weights);
    let (loss, b) = batch_loss(&net, samples, alpha, form, true);
    let layout = weights.layout();
    let mut grad = alloc::vec![0.0; layout.len];
    if let Some(b) = b {
        accumulate_gradient(&net, &b, &layout, &mut grad);
    }
    Ok((loss, grad))
}

/// Uniform `+-1/sqrt(fan_in)` initialization; the output layer is shrunk so
/// that an untrained model with last-frame centering starts close to the
/// identity on the current frame.
pub fn init_weights(hidden: usize, preprocess: Preprocess, rng: &mut impl Rng) -> RefinerWeights {
    let l = Layout::new(hidden);
    let mut params = alloc::vec![0.0; l.len];
    let mut fill = |at: usize, n: usize, fan_in: usize, gain: f64| {
        let b = gain / sqrt(fan_in as f64);
        for p in &mut params[at..at + n] {
            *p = rng.random_range(-b..b);
        }
    };
    fill(l.w_in, hidden * WINDOW, WINDOW, 1.0);
    fill(l.b_in, hidden, WINDOW, 1.0);
    for b in &l.blocks {
        fill(b.w1, hidden * hidden, hidden, 1.0);
        fill(b.b1, hidden, hidden, 1.0);
        fill(b.w2, hidden * hidden, hidden, 1.0);
        fill(b.b2, hidden, hidden, 1.0);
    }
    fill(l.w_out, OUTPUTS * hidden, hidden, 0.1);
    fill(l.b_out, OUTPUTS, hidden, 0.1);
    RefinerWeights { hidden, params, preprocess }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: RefinerWeights,
    /// Loss on a fixed evaluation subset: entry 0 before training, then one
    /// entry per epoch.
    pub loss_curve: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self { m: alloc::vec![0.0; n], v: alloc::vec![0.0; n], step: 0, lr }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, self.step as f64);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / (sqrt(self.v[i] / c2) + ADAM_EPS);
        }
    }
}

pub fn train(set: &TrainingSet, hp: &RefinerHyperparams) -> Result<TrainOutcome> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let preprocess = Preprocess { centering: Centering::LastFrame, scale: hp.input_scale };
    let mut weights = init_weights(hp.hidden, preprocess, &mut rng);
    let layout = weights.layout();
    debug_assert_eq!(layout.blocks.len(), BLOCKS);

    let n = set.num_windows();
    let stride = n.div_ceil(EVAL_WINDOWS).max(1);
    let eval_ids: Vec<usize> = (0..n).step_by(stride).collect();
    let eval = set.gather(&eval_ids);
    let form = hp.velocity_form;
    let initial = evaluate_loss(&weights, &eval, hp.alpha_loss, form)?;
    let mut curve = alloc::vec![initial];

    let mut adam = Adam::new(layout.len, hp.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = alloc::vec![0.0; layout.len];
    for _ in 0..hp.epochs {
        let ids: Vec<usize> = match hp.samples_per_epoch {
            None => {
                order.shuffle(&mut rng);
                order.clone()
            }
            Some(k) => (0..k).map(|_| rng.random_range(0..n)).collect(),
        };
        for chunk in ids.chunks(hp.batch_size) {
            let batch = set.gather(chunk);
            let net = Network::new(&weights);
            let (_, b) = batch_loss(&net, &batch, hp.alpha_loss, form, true);
            grad.iter_mut().for_each(|g| *g = 0.0);
            if let Some(b) = b {
                accumulate_gradient(&net, &b, &layout, &mut grad);
            }
            adam.update(&mut weights.params, &grad);
        }
        let current = evaluate_loss(&weights, &eval, hp.alpha_loss, form)
            .map_err(|_| Error::Divergence { initial, current: f64::NAN })?;
        if !current.is_finite() || current > DIVERGENCE_FACTOR * initial {
            return Err(Error::Divergence { initial, current });
        }
        curve.push(current);
    }
    Ok(TrainOutcome { weights, loss_curve: curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;
    use approx::assert_relative_eq;

    fn sample(rng: &mut ChaCha8Rng) -> ChannelSample {
        let mut s =
            ChannelSample { input: [0.0; WINDOW], prev_input: [0.0; WINDOW], target: [0.0; 2], prev_target: 0.0 };
        for v in s.input.iter_mut().chain(s.prev_input.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        s.target = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        s.prev_target = rng.random_range(-1.0..1.0);
        s
    }

    fn fixture(seed: u64, hidden: usize, centering: Centering) -> (RefinerWeights, Vec<ChannelSample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = init_weights(hidden, Preprocess { centering, scale: 1.5 }, &mut rng);
        // larger output weights so every parameter gets a visible gradient
        let l = w.layout();
        for p in &mut w.params[l.w_out..] {
            *p *= 10.0;
        }
        let samples = (0..6).map(|_| sample(&mut rng)).collect();
        (w, samples)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (centering, form) in [
            (Centering::None, VelocityForm::Difference),
            (Centering::LastFrame, VelocityForm::Difference),
            (Centering::LastFrame, VelocityForm::LiteralProduct),
        ] {
            let (w, samples) = fixture(7, 3, centering);
            let (_, grad) = loss_and_gradient(&w, &samples, 0.4, form).unwrap();
            let eps = 1e-5;
            for i in 0..w.params.len() {
                let mut hi = w.clone();
                let mut lo = w.clone();
                hi.params[i] += eps;
                lo.params[i] -= eps;
                let num = (evaluate_loss(&hi, &samples, 0.4, form).unwrap()
                    - evaluate_loss(&lo, &samples, 0.4, form).unwrap())
                    / (2.0 * eps);
                let denom = grad[i].abs().max(num.abs()).max(1e-8);
                assert!(
                    (grad[i] - num).abs() / denom < 1e-4,
                    "param {i}: analytic {} numeric {num} ({centering:?}, {form:?})",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn hand_unrolled_forward_two_channels() {
        let (w, samples) = fixture(3, 2, Centering::LastFrame);
        let inputs = [samples[0].input, samples[1].input];
        let out = w.forward_channels(&inputs).unwrap();

        let p = &w.params;
        let l = w.layout();
        let h = 2;
        let lr = |x: f64| if x > 0.0 { x } else { 0.1 * x };
        for (c, x) in inputs.iter().enumerate() {
            let s = w.preprocess.scale;
            let ctr = x[8];
            let mut hid = [0.0; 2];
            for i in 0..h {
                let mut acc = p[l.b_in + i];
                for k in 0..9 {
                    acc += p[l.w_in + i * 9 + k] * (x[k] - ctr) * s;
                }
                hid[i] = lr(acc);
            }
            for b in &l.blocks {
                let mut r = [0.0; 2];
                for i in 0..h {
                    r[i] = lr(p[b.b1 + i] + p[b.w1 + i * h] * hid[0] + p[b.w1 + i * h + 1] * hid[1]);
                }
                let mut next = hid;
                for i in 0..h {
                    next[i] += p[b.b2 + i] + p[b.w2 + i * h] * r[0] + p[b.w2 + i * h + 1] * r[1];
                }
                hid = next;
            }
            for o in 0..2 {
                let y = p[l.b_out + o] + p[l.w_out + o * h] * hid[0] + p[l.w_out + o * h + 1] * hid[1];
                assert_relative_eq!(out[c][o], ctr + y / s, epsilon = 1e-9);
            }
        }
    }

    fn constant_trajectory(offset: f64, len: usize) -> Trajectory {
        let pose: Vec<Vec3> =
            (0..NUM_JOINTS).map(|j| Vec3::new(offset + 0.05 * j as f64, -0.3, 0.9 - 0.04 * j as f64)).collect();
        let frames: Vec<Pose3D> = (0..len).map(|i| Pose3D::new(pose.clone(), i as u64, i as f64 * 0.02)).collect();
        Trajectory { clean: frames.clone(), noisy: frames, intermediate: None }
    }

    #[test]
    fn identity_fit_on_constant_trajectories() {
        let trajs: Vec<Trajectory> = (0..4).map(|k| constant_trajectory(0.3 * k as f64 - 0.5, 20)).collect();
        let set = TrainingSet::new(&trajs).unwrap();
        let hp =
            RefinerHyperparams { hidden: 16, epochs: 40, batch_size: 8, learning_rate: 1e-3, ..Default::default() };
        let out = train(&set, &hp).unwrap();
        assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
        let samples = set.gather(&(0..set.num_windows()).collect::<Vec<_>>());
        let pos = evaluate_loss(&out.weights, &samples, 1.0, VelocityForm::Difference).unwrap();
        assert!(pos < 1e-4, "position loss {pos}");
    }

    #[test]
    fn short_trajectory_is_dataset_error() {
        assert!(matches!(TrainingSet::new(&[constant_trajectory(0.0, 9)]), Err(Error::Dataset(_))));
        assert!(TrainingSet::new(&[constant_trajectory(0.0, 10)]).is_ok());
    }

    #[test]
    fn window_samples_are_causal_and_aligned() {
        let mut tr = constant_trajectory(0.0, 12);
        for (i, p) in tr.noisy.iter_mut().enumerate() {
            p.joints[0].x = i as f64;
        }
        for (i, p) in tr.clean.iter_mut().enumerate() {
            p.joints[0].x = 100.0 + i as f64;
        }
        let set = TrainingSet::new(&[tr]).unwrap();
        assert_eq!(set.num_windows(), 3);
        let s = set.window_samples(0).next().unwrap();
        assert_eq!(s.input, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(s.prev_input[0], 0.0);
        assert_eq!(s.target, [109.0, 108.5]);
        assert_eq!(s.prev_target, 108.0);
    }
}
