use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::Loss;
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Rows per chunk when evaluating large sets.
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before halting.
    pub patience: usize,
    /// Multiply the learning rate by this factor after `decay_patience`
    /// epochs without validation improvement (1 disables decay).
    pub decay_factor: f64,
    pub decay_patience: usize,
    /// Shuffle training rows every epoch.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 1000,
            patience: 20,
            decay_factor: 0.5,
            decay_patience: 5,
            shuffle: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::config("batch size, epochs and patience must be positive"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::config(format!(
                "patience {} must be below max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::config("learning rate and epsilon must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_patience == 0 {
            return Err(Error::config("decay factor must lie in (0, 1] with positive patience"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("moment decay rates must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
}

/// Adaptive-moment optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Mean loss over a batch and its gradient with respect to every parameter.
pub fn loss_and_gradient<L: Loss + ?Sized>(
    net: &Mlp,
    loss: &L,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<(f64, Vec<f64>)> {
    let cache = net.forward_cached(x)?;
    let (value, d_out) = loss.value_and_grad(cache.output().view(), y)?;
    let mut grad = vec![0.0; net.num_params()];
    net.backward(&cache, &d_out, &mut grad)?;
    Ok((value, grad))
}

/// Forward in fixed-size chunks.
pub fn predict(net: &Mlp, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() <= EVAL_CHUNK {
        return net.forward(x);
    }
    let mut out = Array2::zeros((x.nrows(), net.output_dim()));
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let y = net.forward(x.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&y);
    }
    Ok(out)
}

/// Row order of the training set for `epoch`: a fresh seeded permutation, or
/// the identity when shuffling is off.
pub fn epoch_order(rows: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows).collect();
    if cfg.shuffle {
        order.shuffle(&mut seed::rng_for(cfg.seed, stream::SHUFFLE, epoch as u64));
    }
    order
}

/// Mini-batch training with validation-based checkpointing. On return `net`
/// holds the parameters of the epoch with the best validation metric.
pub fn fit<L: Loss + ?Sized>(
    net: &mut Mlp,
    loss: &L,
    train: (ArrayView2<'_, f64>, ArrayView2<'_, f64>),
    val: (ArrayView2<'_, f64>, ArrayView2<'_, f64>),
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let rows = train.0.nrows();
    fit_scheduled(net, loss, train, val, cfg, |epoch| epoch_order(rows, cfg, epoch))
}

/// As [`fit`] with the per-epoch row order supplied by `schedule`.
pub fn fit_scheduled<L: Loss + ?Sized>(
    net: &mut Mlp,
    loss: &L,
    train: (ArrayView2<'_, f64>, ArrayView2<'_, f64>),
    val: (ArrayView2<'_, f64>, ArrayView2<'_, f64>),
    cfg: &TrainConfig,
    mut schedule: impl FnMut(usize) -> Vec<usize>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let (xt, yt) = train;
    let (xv, yv) = val;
    if xt.nrows() == 0 || xv.nrows() == 0 {
        return Err(Error::config("training and validation sets must be non-empty"));
    }
    if xt.nrows() != yt.nrows() || xv.nrows() != yv.nrows() {
        return Err(Error::size("feature and target row counts differ"));
    }
    let mut opt = Adam::new(net.num_params(), cfg);
    let mut best_val = f64::INFINITY;
    let mut best_params = net.params().to_vec();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut since_decay = 0;
    let mut curve = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let order = schedule(epoch);
        if order.len() != xt.nrows() {
            return Err(Error::size("batch schedule does not cover the training set"));
        }
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xt.select(Axis(0), chunk);
            let yb = yt.select(Axis(0), chunk);
            let (value, grad) = loss_and_gradient(net, loss, xb.view(), yb.view())?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            opt.step(net.params_mut(), &grad);
            sum += value;
            batches += 1;
        }
        let pred = predict(net, xv)?;
        let val_metric = loss.metric(pred.view(), yv)?;
        if !val_metric.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        curve.push(EpochStats {
            epoch,
            train_loss: sum / batches as f64,
            val_metric,
        });
        log::trace!("epoch {epoch}: train {:.3e} val {:.3e}", sum / batches as f64, val_metric);
        if val_metric < best_val {
            best_val = val_metric;
            best_params.copy_from_slice(net.params());
            best_epoch = epoch;
            since_best = 0;
            since_decay = 0;
        } else {
            since_best += 1;
            since_decay += 1;
            if since_decay >= cfg.decay_patience && cfg.decay_factor < 1.0 {
                opt.set_learning_rate(opt.learning_rate() * cfg.decay_factor);
                since_decay = 0;
            }
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    net.set_params(&best_params)?;
    Ok(TrainReport {
        curve,
        best_epoch,
        best_val,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng;

    use super::*;
    use crate::nn::loss::{SquaredErrorLoss, TraceDistanceLoss};

    fn random_instance(d_in: usize, d_out: usize, rows: usize, seed: u64) -> (Mlp, Array2<f64>, Array2<f64>) {
        let mut net = Mlp::propagator(d_in, d_out).unwrap();
        net.init_glorot(seed);
        let mut rng = crate::seed::rng(seed ^ 0xabc);
        for p in net.params_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let x = Array2::from_shape_fn((rows, d_in), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((rows, d_out), |_| rng.random_range(-1.0..1.0));
        (net, x, y)
    }

    fn check_gradient(net: &Mlp, x: &Array2<f64>, y: &Array2<f64>, loss: &dyn Loss) {
        let (_, grad) = loss_and_gradient(net, loss, x.view(), y.view()).unwrap();
        let h = 1e-5;
        let mut probe = net.clone();
        for i in 0..net.num_params() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let up = loss.value_and_grad(probe.forward(x.view()).unwrap().view(), y.view()).unwrap().0;
            probe.params_mut()[i] = orig - h;
            let down = loss.value_and_grad(probe.forward(x.view()).unwrap().view(), y.view()).unwrap().0;
            probe.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd} (rel {rel})", grad[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (net, x, y) = random_instance(6, 3, 4, 1);
        check_gradient(&net, &x, &y, &TraceDistanceLoss);
        check_gradient(&net, &x, &y, &SquaredErrorLoss);
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let (net, x, _) = random_instance(6, 3, 4, 2);
        let y = net.forward(x.view()).unwrap();
        let (v, g) = loss_and_gradient(&net, &TraceDistanceLoss, x.view(), y.view()).unwrap();
        assert!(v <= 1e-6);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-5);
    }

    #[test]
    fn duplicated_batch_leaves_gradient_unchanged() {
        let (net, x, y) = random_instance(6, 3, 4, 3);
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2 = ndarray::concatenate(Axis(0), &[y.view(), y.view()]).unwrap();
        let (_, g1) = loss_and_gradient(&net, &TraceDistanceLoss, x.view(), y.view()).unwrap();
        let (_, g2) = loss_and_gradient(&net, &TraceDistanceLoss, x2.view(), y2.view()).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn learns_identity_map() {
        let mut rng = crate::seed::rng(8);
        let x = Array2::from_shape_fn((600, 3), |_| rng.random_range(-0.6..0.6));
        let (xt, xv) = x.view().split_at(Axis(0), 500);
        let mut net = Mlp::propagator(3, 3).unwrap();
        net.init_glorot(1);
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 10,
            ..TrainConfig::default()
        };
        let report = fit(&mut net, &TraceDistanceLoss, (xt, xt), (xv, xv), &cfg).unwrap();
        assert!(report.best_val < 1e-2, "{}", report.best_val);
        let best_so_far: Vec<f64> = report
            .curve
            .iter()
            .scan(f64::INFINITY, |b, e| {
                *b = b.min(e.val_metric);
                Some(*b)
            })
            .collect();
        assert!(best_so_far.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(best_so_far.last().copied().unwrap(), report.best_val);
    }

    #[test]
    fn flat_validation_triggers_patience() {
        // Targets independent of inputs: validation cannot keep improving.
        let mut rng = crate::seed::rng(2);
        let x = Array2::from_shape_fn((64, 3), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((64, 3), |_| rng.random_range(-1.0..1.0));
        let mut net = Mlp::propagator(3, 3).unwrap();
        net.init_glorot(3);
        let cfg = TrainConfig {
            max_epochs: 400,
            patience: 5,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (xt, xv) = x.view().split_at(Axis(0), 32);
        let (yt, yv) = y.view().split_at(Axis(0), 32);
        let report = fit(&mut net, &TraceDistanceLoss, (xt, yt), (xv, yv), &cfg).unwrap();
        assert!(report.stopped_early);
        assert!(report.curve.len() < 400);
        let restored = TraceDistanceLoss.metric(net.forward(xv).unwrap().view(), yv).unwrap();
        assert_eq!(restored, report.best_val);
    }

    #[test]
    fn pre_shuffled_rows_give_identical_parameters() {
        let mut rng = crate::seed::rng(4);
        let x = Array2::from_shape_fn((300, 4), |_| rng.random_range(-1.0..1.0));
        let y = x.slice(s![.., 0..3]).to_owned();
        let cfg = TrainConfig { max_epochs: 6, patience: 5, seed: 11, ..TrainConfig::default() };
        // Row i of the permuted set is row sigma[i] of the original.
        let mut sigma: Vec<usize> = (0..300).collect();
        sigma.shuffle(&mut crate::seed::rng(99));
        let mut position = vec![0; 300];
        for (i, &r) in sigma.iter().enumerate() {
            position[r] = i;
        }
        let xp = x.select(Axis(0), &sigma);
        let yp = y.select(Axis(0), &sigma);

        let mut a = Mlp::propagator(4, 3).unwrap();
        a.init_glorot(5);
        let mut b = a.clone();
        let ra = fit(&mut a, &TraceDistanceLoss, (x.view(), y.view()), (x.view(), y.view()), &cfg).unwrap();
        let rb = fit_scheduled(&mut b, &TraceDistanceLoss, (xp.view(), yp.view()), (x.view(), y.view()), &cfg, |e| {
            epoch_order(300, &cfg, e).into_iter().map(|r| position[r]).collect()
        })
        .unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra, rb);
    }

    #[test]
    fn divergence_is_reported() {
        let x = Array2::from_elem((8, 3), f64::NAN);
        let mut net = Mlp::propagator(3, 3).unwrap();
        net.init_glorot(0);
        let cfg = TrainConfig { max_epochs: 3, patience: 1, ..TrainConfig::default() };
        let err = fit(&mut net, &TraceDistanceLoss, (x.view(), x.view()), (x.view(), x.view()), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0 }));
    }
}
