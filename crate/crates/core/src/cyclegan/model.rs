use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, Discriminator, Generator};
use super::checkpoint;
use super::losses::{
    combined_adversarial_loss, cycle_l1, discriminator_loss, l1_adversarial_loss, power_loss, spectral_loss,
    temporal_loss, LossParts, LossWeights,
};
use crate::error::{Error, Result};
use crate::nn::{named_params, named_tensors, no_grad, Adam, Ctx, Float, Init, Tensor};
use crate::signal::{pearson_corr, SegmentBatch};

/// Segments per forward pass during extraction.
pub const EXTRACT_BATCH: usize = 16;

/// Slack allowed on the `[0, 1]` input range check.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Discriminator updates per generator update.
    pub k: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            learning_rate: 1e-5,
            batch_size: 16,
            k: 1,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 for batch norm".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.weights.validate()
    }
}

/// Loss values from one training step, or averaged over an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub j_d: f64,
    pub j_g: f64,
    pub l1: f64,
    pub spec: f64,
    pub temp: f64,
    pub power: f64,
    pub cycle: f64,
    /// Signal-loss rows left out because they were flat or powerless.
    pub skipped_rows: usize,
}

impl StepReport {
    fn accumulate(&mut self, o: &StepReport) {
        self.j_d += o.j_d;
        self.j_g += o.j_g;
        self.l1 += o.l1;
        self.spec += o.spec;
        self.temp += o.temp;
        self.power += o.power;
        self.cycle += o.cycle;
        self.skipped_rows += o.skipped_rows;
    }

    fn scaled(mut self, s: f64) -> Self {
        for v in [
            &mut self.j_d,
            &mut self.j_g,
            &mut self.l1,
            &mut self.spec,
            &mut self.temp,
            &mut self.power,
            &mut self.cycle,
        ] {
            *v *= s;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: StepReport,
    pub val_pcc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights the model holds after training.
    pub best_epoch: usize,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,J_D,J_G,L_L1,L_spec,L_temp,L_power,cycle,val_PCC";

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let l = &r.losses;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.epoch, l.j_d, l.j_g, l.l1, l.spec, l.temp, l.power, l.cycle, r.val_pcc
            );
        }
        s
    }
}

/// Aligned abdominal (`[N, 4, L]`) and fetal (`[N, 1, L]`) segments.
#[derive(Debug, Clone)]
pub struct PairedSegments {
    pub mecg: SegmentBatch,
    pub fecg: SegmentBatch,
}

impl PairedSegments {
    pub fn new(mecg: SegmentBatch, fecg: SegmentBatch) -> Result<Self> {
        if mecg.len() != fecg.len() || mecg.segment_len() != fecg.segment_len() {
            return Err(Error::shape(format!(
                "unaligned pair: {:?} vs {:?}",
                mecg.shape(),
                fecg.shape()
            )));
        }
        Ok(Self { mecg, fecg })
    }

    pub fn len(&self) -> usize {
        self.mecg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mecg.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            mecg: self.mecg.select(idx),
            fecg: self.fecg.select(idx),
        }
    }
}

/// Network-layout tensor `[N, C, L]` from a segment batch.
pub fn batch_tensor<T: Float>(b: &SegmentBatch) -> Result<Tensor<T>> {
    let (n, m, c) = b.shape();
    Tensor::from_f64(b.data(), &[n, c, m])
}

/// Both generators, both discriminators and their optimizers.
pub struct CycleGanModel<T: Float = f32> {
    pub arch: ArchConfig,
    /// Abdominal to fetal.
    pub g1: Generator<T>,
    /// Fetal to abdominal.
    pub g2: Generator<T>,
    /// Judges fetal-domain signals.
    pub d1: Discriminator<T>,
    /// Judges abdominal-domain signals.
    pub d2: Discriminator<T>,
    opt_g: Adam<T>,
    opt_d: Adam<T>,
    steps: u64,
    last_good: Option<PathBuf>,
}

fn mix_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn finite(term: &str, v: f64, step: u64, last_good: &Option<PathBuf>) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss {
            term: term.into(),
            step: step as usize,
            last_good: last_good.clone(),
        })
    }
}

impl<T: Float> CycleGanModel<T> {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        let mut init = Init::new(seed);
        let g1 = Generator::new(arch.mecg_channels, arch.fecg_channels, &arch, &mut init)?;
        let g2 = Generator::new(arch.fecg_channels, arch.mecg_channels, &arch, &mut init)?;
        let d1 = Discriminator::new(arch.fecg_channels, &arch, &mut init)?;
        let d2 = Discriminator::new(arch.mecg_channels, &arch, &mut init)?;
        let lr = TrainConfig::default().learning_rate;
        let mut gp = named_params(&g1, "g1");
        gp.extend(named_params(&g2, "g2"));
        let mut dp = named_params(&d1, "d1");
        dp.extend(named_params(&d2, "d2"));
        Ok(Self {
            arch,
            g1,
            g2,
            d1,
            d2,
            opt_g: Adam::new(gp, lr),
            opt_d: Adam::new(dp, lr),
            steps: 0,
            last_good: None,
        })
    }

    pub fn generator_params(&self) -> &[(String, Tensor<T>)] {
        self.opt_g.params()
    }

    pub fn discriminator_params(&self) -> &[(String, Tensor<T>)] {
        self.opt_d.params()
    }

    /// Every parameter and batch-norm buffer, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut v = named_tensors(&self.g1, "g1");
        v.extend(named_tensors(&self.g2, "g2"));
        v.extend(named_tensors(&self.d1, "d1"));
        v.extend(named_tensors(&self.d2, "d2"));
        v
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt_g.state.learning_rate = lr;
        self.opt_d.state.learning_rate = lr;
    }

    /// Generator steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Checkpoint named in errors raised by later steps.
    pub fn last_good_checkpoint(&self) -> Option<&Path> {
        self.last_good.as_deref()
    }

    fn snapshot(&self) -> Vec<Vec<T>> {
        self.tensors().iter().map(|(_, t)| t.to_vec()).collect()
    }

    fn restore(&self, snap: &[Vec<T>]) {
        for ((_, t), v) in self.tensors().iter().zip(snap) {
            t.update(|w| w.copy_from_slice(v));
        }
    }

    /// Generator losses on a batch, `x: [B, Ca, L]`, `y: [B, Cf, L]`.
    fn generator_objective(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        g1x: &Tensor<T>,
        g2y: &Tensor<T>,
        w: &LossWeights,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, LossParts<T>, Tensor<T>, usize)> {
        let (xv, yv) = (x.to_f64(), y.to_f64());
        let l1 = l1_adversarial_loss(&self.d1.score(g1x, ctx)?, &self.d2.score(g2y, ctx)?)?;
        let spec = [
            spectral_loss(&yv, g1x, &xv, self.arch.mecg_channels)?,
            spectral_loss(&xv, g2y, &yv, self.arch.fecg_channels)?,
        ];
        let temp = [temporal_loss(&yv, g1x)?, temporal_loss(&xv, g2y)?];
        let power = [power_loss(&yv, g1x)?, power_loss(&xv, g2y)?];
        let skipped = spec.iter().chain(&temp).chain(&power).map(|t| t.skipped).sum();
        let parts = LossParts {
            l1,
            spec: spec[0].value.add(&spec[1].value)?,
            temp: temp[0].value.add(&temp[1].value)?,
            power: power[0].value.add(&power[1].value)?,
        };
        let cycle = cycle_l1(&self.g2.forward(g1x, ctx)?, x)?.add(&cycle_l1(&self.g1.forward(g2y, ctx)?, y)?)?;
        let total = combined_adversarial_loss(&parts, w)?.add(&cycle.scale(T::of(w.cycle)))?;
        Ok((total, parts, cycle, skipped))
    }

    /// Full generator objective on a batch: the weighted adversarial loss
    /// plus the weighted cycle loss. Returns the total and its parts.
    pub fn generator_loss(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        w: &LossWeights,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, LossParts<T>, Tensor<T>)> {
        let g1x = self.g1.forward(x, ctx)?;
        let g2y = self.g2.forward(y, ctx)?;
        let (total, parts, cycle, _) = self.generator_objective(x, y, &g1x, &g2y, w, ctx)?;
        Ok((total, parts, cycle))
    }

    /// Both discriminator objectives on a batch, fakes detached.
    pub fn discriminator_objective(&self, x: &Tensor<T>, y: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>> {
        let g1x = self.g1.forward(x, ctx)?;
        let g2y = self.g2.forward(y, ctx)?;
        discriminator_loss(&self.d1, y, &g1x, ctx)?.add(&discriminator_loss(&self.d2, x, &g2y, ctx)?)
    }

    /// One iteration of the training schedule: `k` discriminator updates on
    /// this batch, then one joint update of both generators.
    pub fn train_step(&mut self, x: &Tensor<T>, y: &Tensor<T>, cfg: &TrainConfig) -> Result<StepReport> {
        let step = self.steps;
        let mut ctx = Ctx::train(mix_seed(cfg.seed, step));
        let g1x = self.g1.forward(x, &mut ctx)?;
        let g2y = self.g2.forward(y, &mut ctx)?;

        let mut j_d = 0.0;
        for _ in 0..cfg.k {
            self.opt_d.zero_grad();
            let ld = discriminator_loss(&self.d1, y, &g1x, &ctx)?.add(&discriminator_loss(&self.d2, x, &g2y, &ctx)?)?;
            j_d = finite("J_D", ld.item().as_f64(), step, &self.last_good)?;
            ld.backward()?;
            self.opt_d.step()?;
        }

        self.opt_g.zero_grad();
        let (total, parts, cycle, skipped) = self.generator_objective(x, y, &g1x, &g2y, &cfg.weights, &mut ctx)?;
        let report = StepReport {
            j_d,
            l1: finite("L_L1", parts.l1.item().as_f64(), step, &self.last_good)?,
            spec: finite("L_spec", parts.spec.item().as_f64(), step, &self.last_good)?,
            temp: finite("L_temp", parts.temp.item().as_f64(), step, &self.last_good)?,
            power: finite("L_power", parts.power.item().as_f64(), step, &self.last_good)?,
            cycle: finite("cycle", cycle.item().as_f64(), step, &self.last_good)?,
            j_g: finite("J_G", total.item().as_f64(), step, &self.last_good)?,
            skipped_rows: skipped,
        };
        total.backward()?;
        self.opt_g.step()?;
        // The generator loss also deposited gradients on the discriminators.
        self.opt_d.zero_grad();
        self.steps += 1;
        Ok(report)
    }

    /// Runs `cfg.epochs` epochs of shuffled mini-batches over `train`,
    /// scores G1 on `val` after every epoch and ends holding the weights of
    /// the best-scoring epoch. With `checkpoint`, that state is also
    /// written there whenever it improves.
    pub fn train(
        &mut self,
        train: &PairedSegments,
        val: &PairedSegments,
        cfg: &TrainConfig,
        checkpoint: Option<&Path>,
    ) -> Result<History> {
        cfg.validate()?;
        if train.len() < 2 || val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.set_learning_rate(cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut history = History::default();
        let mut best: Option<(f64, Vec<Vec<T>>)> = None;

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            let mut sum = StepReport::default();
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                let batch = train.select(chunk);
                let r = self.train_step(&batch_tensor(&batch.mecg)?, &batch_tensor(&batch.fecg)?, cfg)?;
                sum.accumulate(&r);
                batches += 1;
            }
            let losses = sum.scaled(1.0 / batches.max(1) as f64);
            let val_pcc = self.mean_pcc(val)?;
            history.epochs.push(EpochRecord { epoch, losses, val_pcc });
            if best.as_ref().is_none_or(|(b, _)| val_pcc > *b) {
                best = Some((val_pcc, self.snapshot()));
                history.best_epoch = epoch;
                if let Some(path) = checkpoint {
                    checkpoint::save(self, path)?;
                    self.last_good = Some(path.to_path_buf());
                }
            }
        }
        if let Some((_, snap)) = best {
            self.restore(&snap);
        }
        Ok(history)
    }

    /// Mean Pearson correlation between G1's output and the fetal target
    /// over segments where it is defined.
    pub fn mean_pcc(&self, data: &PairedSegments) -> Result<f64> {
        let out = self.extract(&data.mecg)?;
        let m = data.fecg.segment_len();
        let mut total = 0.0;
        let mut n = 0usize;
        for i in 0..data.len() {
            if let Ok(r) = pearson_corr(&out.data()[i * m..(i + 1) * m], data.fecg.channel(i, 0)) {
                total += r;
                n += 1;
            }
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }

    /// G1 in eval mode over normalized abdominal segments `[N, 4, L]`.
    /// Returns `[N, 1, L]` segments in `[0, 1]` with the input's metadata.
    pub fn extract(&self, mecg: &SegmentBatch) -> Result<SegmentBatch> {
        let (n, m, c) = mecg.shape();
        if c != self.arch.mecg_channels {
            return Err(Error::shape(format!(
                "expected {} abdominal channels, got {c}",
                self.arch.mecg_channels
            )));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(&v) = mecg
            .data()
            .iter()
            .find(|v| !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(*v))
        {
            return Err(Error::NotNormalized(v));
        }
        let mut data = Vec::with_capacity(n * m);
        let idx: Vec<usize> = (0..n).collect();
        let mut ctx = Ctx::eval();
        for chunk in idx.chunks(EXTRACT_BATCH) {
            let x = batch_tensor::<T>(&mecg.select(chunk))?;
            let y = no_grad(|| self.g1.forward(&x, &mut ctx))?;
            data.extend(y.to_f64().into_iter().map(|v| v.clamp(0.0, 1.0)));
        }
        SegmentBatch::new(
            data,
            (n, m, self.arch.fecg_channels),
            mecg.sample_rate_hz(),
            true,
            mecg.starts().to_vec(),
            vec![false; n * self.arch.fecg_channels],
        )
    }
}

/// Free-function form of [`CycleGanModel::extract`].
pub fn extract_fecg<T: Float>(model: &CycleGanModel<T>, mecg: &SegmentBatch) -> Result<SegmentBatch> {
    model.extract(mecg)
}
