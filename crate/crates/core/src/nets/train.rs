//! Minibatch training and held-out evaluation for the PPN and the ESN.
//!
//! The PPN learns from (agent, neighbor) pairs: the neighbor's observed past
//! and future in the agent's frame, conditioned on the agent's first future
//! displacement. The ESN is trained afterwards on agent windows, with the
//! neighbor summary produced by the (frozen) PPN in inference mode.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::esn::CrowdSummary;
use super::loss::midpoint_containment;
use super::{encode_grads, zonotope_losses, Esn, LossBreakdown, LossConfig, Mode, Ppn, StackGrads, ZonoSeq, LATENT_DIM};
use crate::data::{Track, TrainingSample};
use crate::error::{Error, Result};
use crate::nn::{kl_loss, AdamHyper};
use crate::zono::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub loss: LossConfig,
    /// Global gradient-norm clip per minibatch; `None` disables it.
    pub clip_norm: Option<f64>,
    /// The generator-length weight ramps linearly from 0 to `loss.w_gen`
    /// over this many epochs.
    pub gen_warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            adam: AdamHyper::default(),
            loss: LossConfig::default(),
            clip_norm: Some(10.0),
            gen_warmup_epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Loss weights in effect during `epoch` (1-based).
    pub fn epoch_loss(&self, epoch: usize) -> LossConfig {
        let mut lc = self.loss;
        if self.gen_warmup_epochs > 0 {
            lc.w_gen *= ((epoch - 1) as f64 / self.gen_warmup_epochs as f64).min(1.0);
        }
        lc
    }
}

/// One pedestrian example for the PPN, all in the agent's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpnExample {
    pub past: Track,
    pub future: Track,
    pub ego_next: Vec2,
}

impl PpnExample {
    pub fn origin(&self) -> Vec2 {
        self.past[self.past.len() - 1]
    }
}

/// One ego example for the ESN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsnExample {
    pub crowd: CrowdSummary,
    pub goal: Vec2,
    pub ego_next: Vec2,
    pub future: Track,
}

pub fn ppn_examples(samples: &[TrainingSample]) -> Vec<PpnExample> {
    samples
        .iter()
        .flat_map(|s| {
            s.neighbors.iter().filter_map(move |n| {
                n.future.map(|future| PpnExample {
                    past: n.past,
                    future,
                    ego_next: s.ego_next,
                })
            })
        })
        .collect()
}

/// Sums the PPN's `z = 0` predictions over the given pedestrian pasts.
pub fn crowd_summary<'a>(ppn: &Ppn, pasts: impl IntoIterator<Item = &'a Track>, ego_next: Vec2) -> Result<CrowdSummary> {
    let mut sum = CrowdSummary::empty();
    for past in pasts {
        let pass = ppn.forward(past, ego_next, None, Mode::Infer, None)?;
        sum.add(&pass.zonos.centers(), pass.endpoint);
    }
    Ok(sum)
}

pub fn esn_examples(ppn: &Ppn, samples: &[TrainingSample]) -> Result<Vec<EsnExample>> {
    samples
        .par_iter()
        .map(|s| {
            Ok(EsnExample {
                crowd: crowd_summary(ppn, s.neighbors.iter().map(|n| &n.past), s.ego_next)?,
                goal: s.goal,
                ego_next: s.ego_next,
                future: s.agent_future,
            })
        })
        .collect()
}

/// Full training loss for one PPN example and its parameter gradient
/// (accumulated into `grads`).
pub fn ppn_loss_grad(
    ppn: &Ppn,
    ex: &PpnExample,
    noise: &[f64],
    cfg: &LossConfig,
    grads: Option<&mut StackGrads>,
) -> Result<LossBreakdown> {
    let truth_end = ex.future[ex.future.len() - 1];
    let pass = ppn.forward(&ex.past, ex.ego_next, Some(truth_end), Mode::Train, Some(noise))?;
    let (loss, zgrads) = zonotope_losses(&pass.zonos, &ex.future, ex.origin(), cfg);
    let (kl, d_mu, d_lv) = kl_loss(&pass.latent);
    if let Some(g) = grads {
        let d_mu: Vec<f64> = d_mu.iter().map(|v| v * cfg.w_kl).collect();
        let d_lv: Vec<f64> = d_lv.iter().map(|v| v * cfg.w_kl).collect();
        ppn.backward(&pass, &encode_grads(&zgrads), Vec2::zeros(), Some((&d_mu, &d_lv)), Some(g))?;
    }
    Ok(loss.with_kl(kl, cfg))
}

pub fn esn_loss_grad(
    esn: &Esn,
    ex: &EsnExample,
    noise: &[f64],
    cfg: &LossConfig,
    grads: Option<&mut StackGrads>,
) -> Result<LossBreakdown> {
    let pass = esn.forward(&ex.crowd, ex.goal, ex.ego_next, Some(&ex.future), Mode::Train, Some(noise))?;
    let (loss, zgrads) = zonotope_losses(&pass.zonos, &ex.future, Vec2::zeros(), cfg);
    let (kl, d_mu, d_lv) = kl_loss(&pass.latent);
    if let Some(g) = grads {
        let d_mu: Vec<f64> = d_mu.iter().map(|v| v * cfg.w_kl).collect();
        let d_lv: Vec<f64> = d_lv.iter().map(|v| v * cfg.w_kl).collect();
        esn.backward(&pass, &encode_grads(&zgrads), Some((&d_mu, &d_lv)), Some(g))?;
    }
    Ok(loss.with_kl(kl, cfg))
}

/// Held-out accuracy of `z = 0` predictions against ground-truth midpoints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ade: f64,
    pub fde: f64,
    /// Fraction of ground-truth midpoints inside their predicted zonotope.
    pub containment: f64,
    pub n: usize,
}

fn evaluate<T: Sync>(items: &[T], predict: impl Fn(&T) -> Result<(ZonoSeq, Track)> + Sync) -> Result<Evaluation> {
    let per: Vec<(f64, f64, usize, usize)> = items
        .par_iter()
        .map(|it| {
            let (pred, future) = predict(it)?;
            let (loss, _) = zonotope_losses(&pred, &future, Vec2::zeros(), &LossConfig::default());
            let (inside, total) = midpoint_containment(&pred, &future);
            Ok((loss.l_ade, loss.l_fde, inside, total))
        })
        .collect::<Result<_>>()?;
    if per.is_empty() {
        return Ok(Evaluation::default());
    }
    let n = per.len();
    let (ade, fde, inside, total) = per
        .into_iter()
        .fold((0.0, 0.0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
    Ok(Evaluation {
        ade: ade / n as f64,
        fde: fde / n as f64,
        containment: inside as f64 / total as f64,
        n,
    })
}

pub fn evaluate_ppn(ppn: &Ppn, examples: &[PpnExample]) -> Result<Evaluation> {
    evaluate(examples, |ex| {
        let pass = ppn.forward(&ex.past, ex.ego_next, None, Mode::Infer, None)?;
        Ok((pass.zonos, ex.future))
    })
}

pub fn evaluate_esn(esn: &Esn, examples: &[EsnExample]) -> Result<Evaluation> {
    evaluate(examples, |ex| {
        let pass = esn.forward(&ex.crowd, ex.goal, ex.ego_next, None, Mode::Infer, None)?;
        Ok((pass.zonos, ex.future))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub network: String,
    /// Mean training loss over the epoch.
    pub loss: LossBreakdown,
    pub heldout: Evaluation,
}

fn draw_noise(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..LATENT_DIM).map(|_| rng.sample(StandardNormal)).collect()
}

fn clip(grads: &mut StackGrads, max_norm: f64) {
    let norm = grads.0.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// Generic minibatch Adam loop over a network stack.
fn fit<M: StackOwner, T: Sync>(
    name: &str,
    model: &mut M,
    train: &[T],
    loss_grad: impl Fn(&M, &T, &[f64], &LossConfig, Option<&mut StackGrads>) -> Result<LossBreakdown> + Sync,
    eval: impl Fn(&M) -> Result<Evaluation>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochRecord>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = model.stack_ref().adam_state();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let lc = cfg.epoch_loss(epoch);
        let mut epoch_loss = LossBreakdown::default();
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let noises: Vec<Vec<f64>> = batch.iter().map(|_| draw_noise(rng)).collect();
            let owner: &M = model;
            let parts: Vec<(LossBreakdown, StackGrads)> = batch
                .par_iter()
                .zip(&noises)
                .map(|(&i, noise)| {
                    let mut g = owner.stack_ref().zero_grads();
                    let l = loss_grad(owner, &train[i], noise, &lc, Some(&mut g))?;
                    Ok((l, g))
                })
                .collect::<Result<_>>()?;
            let mut grads = model.stack_ref().zero_grads();
            for (l, g) in &parts {
                epoch_loss.accumulate(l);
                grads.add(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(max) = cfg.clip_norm {
                clip(&mut grads, max);
            }
            model.stack_mut_ref().apply_adam(&grads, &mut adam, &cfg.adam)?;
        }
        let loss = epoch_loss.scaled(1.0 / train.len() as f64);
        let heldout = eval(model)?;
        log::info!(
            "{name} epoch {epoch}: loss {:.4} (ade {:.4}) held-out ade {:.4} fde {:.4} containment {:.3}",
            loss.total,
            loss.l_ade,
            heldout.ade,
            heldout.fde,
            heldout.containment
        );
        records.push(EpochRecord {
            epoch,
            network: name.to_string(),
            loss,
            heldout,
        });
    }
    Ok(records)
}

trait StackOwner: Sync {
    fn stack_ref(&self) -> &super::NetStack;
    fn stack_mut_ref(&mut self) -> &mut super::NetStack;
}

impl StackOwner for Ppn {
    fn stack_ref(&self) -> &super::NetStack {
        self.stack()
    }
    fn stack_mut_ref(&mut self) -> &mut super::NetStack {
        self.stack_mut()
    }
}

impl StackOwner for Esn {
    fn stack_ref(&self) -> &super::NetStack {
        self.stack()
    }
    fn stack_mut_ref(&mut self) -> &mut super::NetStack {
        self.stack_mut()
    }
}

pub fn train_ppn(
    ppn: &mut Ppn,
    train: &[PpnExample],
    heldout: &[PpnExample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochRecord>> {
    fit(
        "PPN",
        ppn,
        train,
        ppn_loss_grad,
        |m| evaluate_ppn(m, heldout),
        cfg,
        rng,
    )
}

pub fn train_esn(
    esn: &mut Esn,
    train: &[EsnExample],
    heldout: &[EsnExample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochRecord>> {
    fit(
        "ESN",
        esn,
        train,
        esn_loss_grad,
        |m| evaluate_esn(m, heldout),
        cfg,
        rng,
    )
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub ppn_before: Evaluation,
    pub esn_before: Evaluation,
    pub ppn_after: Evaluation,
    pub esn_after: Evaluation,
}

/// Trains the PPN, then the ESN on PPN-summarized neighbors, both on
/// `train`; `heldout` is only used for evaluation.
pub fn train_models(
    ppn: &mut Ppn,
    esn: &mut Esn,
    train: &[TrainingSample],
    heldout: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ppn_train = ppn_examples(train);
    let ppn_test = ppn_examples(heldout);
    let ppn_before = evaluate_ppn(ppn, &ppn_test)?;
    let mut records = if ppn_train.is_empty() {
        log::warn!("no neighbor futures in the training set, PPN left untrained");
        Vec::new()
    } else {
        train_ppn(ppn, &ppn_train, &ppn_test, cfg, &mut rng)?
    };
    let ppn_after = evaluate_ppn(ppn, &ppn_test)?;

    let esn_train = esn_examples(ppn, train)?;
    let esn_test = esn_examples(ppn, heldout)?;
    let esn_before = evaluate_esn(esn, &esn_test)?;
    records.extend(train_esn(esn, &esn_train, &esn_test, cfg, &mut rng)?);
    let esn_after = evaluate_esn(esn, &esn_test)?;
    Ok(TrainReport {
        records,
        ppn_before,
        esn_before,
        ppn_after,
        esn_after,
    })
}

pub const METRICS_HEADER: &str =
    "epoch,network,l_ade,l_fde,l_prev,l_nxt,l_g,l_kl,total,heldout_ade,heldout_fde,heldout_containment";

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[EpochRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        let l = &r.loss;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.network,
            l.l_ade,
            l.l_fde,
            l.l_prev,
            l.l_nxt,
            l.l_g,
            l.l_kl,
            l.total,
            r.heldout.ade,
            r.heldout.fde,
            r.heldout.containment
        )?;
    }
    Ok(())
}
