//! TD(λ) training of the evaluation network.
//!
//! States `x_0 .. x_{N-1}` are turn end-states. For player `p` the temporal
//! error is `d_{t,p} = J(x_{t+1})_p - J(x_t)_p`, except:
//!
//! * if `p` is dead at `x_{t+1}` the successor value is 0, and steps from the
//!   death onwards are dropped;
//! * on the last step of a finished match the successor is the reward.
//!
//! Truncated matches keep the final evaluation as the successor, so their
//! sums end at the cap without a reward.

mod dataset;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureSet, Normalizer};
use crate::network::{Network, Params};
use crate::rules::{Position, Rules, MAX_PLAYERS};

pub use dataset::{read_dataset, write_dataset, Dataset, DatasetError, DATASET_VERSION};

#[derive(Debug, Error)]
pub enum TdError {
    #[error("episode needs at least two states, has {0}")]
    TooShort(usize),
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parameters became non-finite during training")]
    NonFinite,
    #[error("network: {0}")]
    Network(#[from] crate::network::NetworkError),
}

/// One match as seen by training: raw turn end-states and the outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub states: Vec<Position>,
    pub reward: [f64; MAX_PLAYERS],
    /// Index of the first state in which the player is dead.
    pub death: [Option<usize>; MAX_PLAYERS],
    pub truncated: bool,
}

impl Episode {
    /// Derives rewards and death indices from the state sequence.
    pub fn from_states(states: Vec<Position>, truncated: bool) -> Episode {
        let mut death = [None; MAX_PLAYERS];
        for (i, s) in states.iter().enumerate() {
            for (p, d) in death.iter_mut().enumerate() {
                if d.is_none() && !s.alive[p] {
                    *d = Some(i);
                }
            }
        }
        let mut reward = [0.0; MAX_PLAYERS];
        if !truncated {
            if let Some(w) = states.last().and_then(|s| s.winner()) {
                reward[w.index()] = 1.0;
            }
        }
        Episode {
            states,
            reward,
            death,
            truncated,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// An episode with normalized features, ready for gradient work.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub features: Vec<FeatureSet>,
    pub reward: [f64; MAX_PLAYERS],
    pub death: [Option<usize>; MAX_PLAYERS],
    pub truncated: bool,
}

impl Prepared {
    pub fn new(net: &Network, rules: &Rules, ep: &Episode) -> Prepared {
        Prepared {
            features: ep.states.iter().map(|s| net.features(rules, s)).collect(),
            reward: ep.reward,
            death: ep.death,
            truncated: ep.truncated,
        }
    }

    fn check(&self) -> Result<(), TdError> {
        if self.features.len() < 2 {
            return Err(TdError::TooShort(self.features.len()));
        }
        Ok(())
    }

    /// Number of leading steps that carry an error for player `p`.
    fn steps_for(&self, p: usize) -> usize {
        let last = self.features.len() - 1;
        match self.death[p] {
            Some(d) => d.min(last),
            None => last,
        }
    }
}

/// Fits the network's normalizer on every state of the episodes.
pub fn fit_normalizer(net: &mut Network, rules: &Rules, episodes: &[Episode]) -> Result<(), TdError> {
    let raw: Vec<FeatureSet> = episodes
        .iter()
        .flat_map(|e| e.states.iter())
        .map(|s| features::extract(rules, s, &net.feature_config))
        .collect();
    net.normalizer = Normalizer::fit(&raw).map_err(|_| TdError::EmptyDataset)?;
    Ok(())
}

fn evaluations(net: &Network, ep: &Prepared) -> Result<Array2<f64>, TdError> {
    Ok(net.forward_batch(&ep.features)?)
}

/// Errors `d[t][p]` for `t` in `0..N-1`. Entries past a player's death are 0.
pub fn td_errors(net: &Network, ep: &Prepared) -> Result<Array2<f64>, TdError> {
    ep.check()?;
    let j = evaluations(net, ep)?;
    Ok(errors_from(&j, ep))
}

fn errors_from(j: &Array2<f64>, ep: &Prepared) -> Array2<f64> {
    let n = j.nrows();
    let mut d = Array2::zeros((n - 1, MAX_PLAYERS));
    for p in 0..MAX_PLAYERS {
        if ep.death[p] == Some(0) {
            continue;
        }
        for t in 0..ep.steps_for(p) {
            let next = if ep.death[p] == Some(t + 1) {
                0.0
            } else if t + 1 == n - 1 && !ep.truncated {
                ep.reward[p]
            } else {
                j[[t + 1, p]]
            };
            d[[t, p]] = next - j[[t, p]];
        }
    }
    d
}

/// `e[t] = sum_{j >= t} λ^{j-t} d[j]`, per player.
fn eligibility(d: &Array2<f64>, lambda: f64) -> Array2<f64> {
    let mut e = Array2::zeros(d.raw_dim());
    let n = d.nrows();
    for p in 0..d.ncols() {
        let mut acc = 0.0;
        for t in (0..n).rev() {
            acc = d[[t, p]] + lambda * acc;
            e[[t, p]] = acc;
        }
    }
    e
}

/// `α Σ_p Σ_t ∇J(x_t)_p · Σ_{j≥t} λ^{j-t} d_{j,p}` at the current weights,
/// with one seeded reverse pass per state.
pub fn td_lambda_update(net: &Network, ep: &Prepared, lambda: f64, alpha: f64) -> Result<Params, TdError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(TdError::Lambda(lambda));
    }
    let d = td_errors(net, ep)?;
    let e = eligibility(&d, lambda);
    let mut delta = Params::zeros(&net.arch);
    for t in 0..d.nrows() {
        let seed = e.row(t);
        if seed.iter().all(|&v| v == 0.0) {
            continue;
        }
        let trace = net.trace(&ep.features[t])?;
        delta.add_scaled(alpha, &net.backward_seeded(&trace, seed));
    }
    Ok(delta)
}

/// `α Σ_t Σ_p ∇J(x_t)_p d_{t,p}`, one reverse pass per player.
pub fn td0_update(net: &Network, ep: &Prepared, alpha: f64) -> Result<Params, TdError> {
    let d = td_errors(net, ep)?;
    let mut delta = Params::zeros(&net.arch);
    for t in 0..d.nrows() {
        let trace = net.trace(&ep.features[t])?;
        for p in 0..MAX_PLAYERS {
            if d[[t, p]] != 0.0 {
                delta.add_scaled(alpha * d[[t, p]], &net.backward(&trace, p)?);
            }
        }
    }
    Ok(delta)
}

/// `α Σ_t Σ_p ∇J(x_t)_p (z_p - J(x_t)_p)` where `z_p` is the reward, 0 for
/// dead players, or the final evaluation of a truncated match.
pub fn td1_update(net: &Network, ep: &Prepared, alpha: f64) -> Result<Params, TdError> {
    ep.check()?;
    let j = evaluations(net, ep)?;
    let last = j.nrows() - 1;
    let mut delta = Params::zeros(&net.arch);
    for t in 0..last {
        let trace = net.trace(&ep.features[t])?;
        for p in 0..MAX_PLAYERS {
            if ep.death[p] == Some(0) || t >= ep.steps_for(p) {
                continue;
            }
            let target = if ep.death[p].is_some() {
                0.0
            } else if ep.truncated {
                j[[last, p]]
            } else {
                ep.reward[p]
            };
            let err = target - j[[t, p]];
            if err != 0.0 {
                delta.add_scaled(alpha * err, &net.backward(&trace, p)?);
            }
        }
    }
    Ok(delta)
}

/// Adadelta with a learning-rate multiplier on the final step. Steps are
/// applied as ascent along the given direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    sq_grad: Params,
    sq_step: Params,
}

impl Adadelta {
    pub fn new(like: &Params, rho: f64, eps: f64, lr: f64) -> Adadelta {
        let mut z = like.clone();
        z.fill(0.0);
        Adadelta {
            rho,
            eps,
            lr,
            sq_grad: z.clone(),
            sq_step: z,
        }
    }

    pub fn accumulators(&self) -> (&Params, &Params) {
        (&self.sq_grad, &self.sq_step)
    }

    /// Applies one step and returns it.
    pub fn apply(&mut self, params: &mut Params, direction: &Params) -> Params {
        let mut step = direction.clone();
        let (rho, eps, lr) = (self.rho, self.eps, self.lr);
        let iter = params
            .slices_mut()
            .into_iter()
            .zip(direction.slices())
            .zip(self.sq_grad.slices_mut())
            .zip(self.sq_step.slices_mut())
            .zip(step.slices_mut());
        for ((((w, g), eg), ex), out) in iter {
            for i in 0..w.len() {
                eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
                let dx = (ex[i] + eps).sqrt() / (eg[i] + eps).sqrt() * g[i];
                ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
                out[i] = lr * dx;
                w[i] += out[i];
            }
        }
        step
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// One optimizer step per episode.
    Episode,
    /// Sum over the whole epoch, then one step.
    Epoch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub rho: f64,
    pub eps: f64,
    pub seed: u64,
    pub mode: UpdateMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.8,
            alpha: 0.5,
            epochs: 3,
            rho: 0.9,
            eps: 1e-6,
            seed: 0,
            mode: UpdateMode::Episode,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean |d| over all live (t, p) pairs, measured before each update.
    pub mean_abs_td: f64,
    pub mean_eval: f64,
    pub std_eval: f64,
    pub max_step: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_mean_abs_td: f64,
    pub epochs: Vec<EpochStats>,
}

/// Mean |d| over every live (t, p) pair of the episodes.
pub fn mean_abs_td(net: &Network, episodes: &[Prepared]) -> Result<f64, TdError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for ep in episodes {
        let d = td_errors(net, ep)?;
        let (s, c) = live_abs_sum(&d, ep);
        sum += s;
        n += c;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn live_abs_sum(d: &Array2<f64>, ep: &Prepared) -> (f64, usize) {
    let (mut s, mut c) = (0.0, 0);
    for p in 0..MAX_PLAYERS {
        if ep.death[p] == Some(0) {
            continue;
        }
        for t in 0..ep.steps_for(p) {
            s += d[[t, p]].abs();
            c += 1;
        }
    }
    (s, c)
}

/// Runs `cfg.epochs` passes over shuffled episodes. Each update direction is
/// the TD(λ) sum at unit scale; `cfg.alpha` enters once, as the optimizer
/// learning rate.
pub fn train(net: &mut Network, episodes: &[Prepared], cfg: &TrainConfig) -> Result<TrainReport, TdError> {
    if episodes.is_empty() {
        return Err(TdError::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(TdError::Lambda(cfg.lambda));
    }
    let mut report = TrainReport {
        initial_mean_abs_td: mean_abs_td(net, episodes)?,
        epochs: Vec::new(),
    };
    let mut opt = Adadelta::new(&net.params, cfg.rho, cfg.eps, cfg.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..episodes.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut abs_sum, mut abs_n) = (0.0, 0usize);
        let mut max_step = 0.0f64;
        let mut epoch_dir = Params::zeros(&net.arch);
        for &i in &order {
            let ep = &episodes[i];
            let d = td_errors(net, ep)?;
            let (s, c) = live_abs_sum(&d, ep);
            abs_sum += s;
            abs_n += c;
            let dir = td_lambda_update(net, ep, cfg.lambda, 1.0)?;
            match cfg.mode {
                UpdateMode::Episode => {
                    let step = opt.apply(&mut net.params, &dir);
                    max_step = max_step.max(step.max_abs());
                    if !net.params.is_finite() {
                        return Err(TdError::NonFinite);
                    }
                }
                UpdateMode::Epoch => epoch_dir.add_scaled(1.0, &dir),
            }
        }
        if cfg.mode == UpdateMode::Epoch {
            let step = opt.apply(&mut net.params, &epoch_dir);
            max_step = step.max_abs();
            if !net.params.is_finite() {
                return Err(TdError::NonFinite);
            }
        }
        let (mean_eval, std_eval) = eval_stats(net, episodes)?;
        log::info!("epoch {epoch}: mean |d| {:.5}", abs_sum / abs_n.max(1) as f64);
        report.epochs.push(EpochStats {
            epoch,
            mean_abs_td: abs_sum / abs_n.max(1) as f64,
            mean_eval,
            std_eval,
            max_step,
        });
    }
    Ok(report)
}

fn eval_stats(net: &Network, episodes: &[Prepared]) -> Result<(f64, f64), TdError> {
    let mut all = Vec::new();
    for ep in episodes {
        let j = net.forward_batch(&ep.features)?;
        all.extend(j.iter().copied());
    }
    let v = Array1::from(all);
    let mean = v.mean().unwrap_or(0.0);
    Ok((mean, v.std(0.0)))
}
