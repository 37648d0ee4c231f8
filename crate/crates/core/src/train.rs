//! Alternating optimization: per iteration update D, then G with E held fixed,
//! then E with G held fixed. Optional labeled real anchors join the contrast.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, Matrix, Tape, Tensor};
use crate::data::ImageBatch;
use crate::error::{CdganError, Result};
use crate::eval::{evaluate, ClusterReport, EvalConfig};
use crate::latent::{sample_latent, uniform_prior, LatentBatch};
use crate::losses::{self, Anchors, GanMode, LossWeights};
use crate::models::{ModelBundle, ModelConfig};
use crate::rng::{derive, Rng};

// RNG stream tags
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_ANCHORS: u64 = 3;
const STREAM_SNAPSHOT: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub sigma: f64,
    /// Class prior; uniform when absent.
    pub pi: Option<Vec<f64>>,
    pub weights: LossWeights,
    pub gan_mode: GanMode,
    pub batch_g: usize,
    pub batch_d: usize,
    pub batch_e: usize,
    pub steps: usize,
    /// Discriminator updates per generator/encoder update.
    pub d_updates: usize,
    /// Fraction of each class drawn as labeled anchors; 0 disables anchors.
    pub label_fraction: f64,
    /// Whether anchors of other classes also act as negatives.
    pub anchor_negatives: bool,
    pub opt_g: AdamConfig,
    pub opt_d: AdamConfig,
    pub opt_e: AdamConfig,
    /// Evaluate every this many steps (0 = only at the end).
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        TrainConfig {
            model: ModelConfig::default(),
            sigma: 0.2,
            pi: None,
            weights: LossWeights {
                beta2: 0.5,
                ..LossWeights::default()
            },
            gan_mode: GanMode::NonSaturating,
            batch_g: 32,
            batch_d: 32,
            batch_e: 64,
            steps: 6000,
            d_updates: 1,
            label_fraction: 0.0,
            anchor_negatives: true,
            opt_g: opt,
            opt_d: opt,
            opt_e: opt,
            snapshot_every: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn prior(&self) -> Vec<f64> {
        self.pi.clone().unwrap_or_else(|| uniform_prior(self.model.k))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        crate::latent::validate_prior(&self.prior())?;
        if self.prior().len() != self.model.k {
            return Err(CdganError::validation("class prior length differs from k"));
        }
        if self.batch_g == 0 || self.batch_d == 0 || self.batch_e == 0 || self.d_updates == 0 {
            return Err(CdganError::validation("batch sizes and d_updates must be positive"));
        }
        if self.batch_g > self.batch_e {
            return Err(CdganError::validation(format!(
                "batch_g ({}) cannot exceed batch_e ({}): the adversarial term uses a prefix of the encoder batch",
                self.batch_g, self.batch_e
            )));
        }
        if self.weights.beta1 > 0.0 && self.batch_e < 2 * self.model.k {
            return Err(CdganError::validation(format!(
                "batch_e ({}) must be at least 2k ({}) when the contrastive term is active",
                self.batch_e,
                2 * self.model.k
            )));
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return Err(CdganError::validation(format!(
                "label fraction must lie in [0, 1], got {}",
                self.label_fraction
            )));
        }
        for (name, o) in [("g", &self.opt_g), ("d", &self.opt_d), ("e", &self.opt_e)] {
            if !(o.lr >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
                return Err(CdganError::validation(format!("optimizer {name} has invalid hyperparameters")));
            }
        }
        Ok(())
    }
}

/// Labeled real images used as fixed reference points in the contrast.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pub images: Matrix<f32>,
    pub labels: Vec<usize>,
}

/// Stratified labeled subset: `⌈fraction · n_class⌉` images from every class.
pub fn select_anchor_set(dataset: &ImageBatch, fraction: f64, rng: &mut Rng) -> Result<AnchorSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CdganError::validation(format!("anchor fraction must lie in (0, 1], got {fraction}")));
    }
    let by_class = dataset.class_indices()?;
    let mut picked = Vec::new();
    for mut members in by_class {
        if members.is_empty() {
            continue;
        }
        let take = ((fraction * members.len() as f64).ceil() as usize).min(members.len());
        members.shuffle(rng);
        picked.extend_from_slice(&members[..take]);
    }
    picked.sort_unstable();
    let subset = dataset.select(&picked);
    Ok(AnchorSet {
        images: subset.images,
        labels: subset.labels.expect("labeled dataset"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_gan: f64,
    pub l_c: f64,
    pub l_z: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(usize, ClusterReport)>,
}

/// Generator-side loss terms for one latent batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorTerms {
    pub g_gan: f64,
    pub l_c: f64,
    pub l_z: f64,
    pub total: f64,
}

struct Recorded {
    g_gan: Tensor,
    l_c: Option<Tensor>,
    l_z: Tensor,
    contrast: Tensor,
    total: Tensor,
}

/// Model bundle plus the three optimizers and the training RNG.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub bundle: ModelBundle<f32>,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    opt_e: Adam<f32>,
    rng: Rng,
    step: usize,
}

fn shapes(params: Vec<&Matrix<f32>>) -> Vec<[usize; 2]> {
    params.into_iter().map(Matrix::shape).collect()
}

fn check_finite(term: &'static str, step: usize, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CdganError::NonFinite { term, step, value })
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let bundle = ModelBundle::init(cfg.model.clone(), &mut derive(cfg.seed, STREAM_INIT))?;
        Self::with_bundle(cfg, bundle)
    }

    pub fn with_bundle(cfg: TrainConfig, bundle: ModelBundle<f32>) -> Result<Self> {
        cfg.validate()?;
        if bundle.config != cfg.model {
            return Err(CdganError::contract("bundle architecture differs from the training config"));
        }
        Ok(Trainer {
            opt_g: Adam::new(cfg.opt_g, &shapes(bundle.generator.params())),
            opt_d: Adam::new(cfg.opt_d, &shapes(bundle.discriminator.params())),
            opt_e: Adam::new(cfg.opt_e, &shapes(bundle.encoder.params())),
            rng: derive(cfg.seed, STREAM_TRAIN),
            step: 0,
            cfg,
            bundle,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn sample_latent(&mut self, n: usize) -> Result<LatentBatch<f32>> {
        let m = &self.cfg.model;
        sample_latent(n, m.d_z, m.k, self.cfg.sigma, &self.cfg.prior(), &mut self.rng)
    }

    fn sample_real(&mut self, data: &Matrix<f32>, n: usize) -> Matrix<f32> {
        let n = n.min(data.rows());
        let idx = index::sample(&mut self.rng, data.rows(), n).into_vec();
        data.select_rows(&idx)
    }

    /// One discriminator step on a real batch and fresh fakes.
    pub fn update_discriminator(&mut self, real: &Matrix<f32>, latent: &LatentBatch<f32>) -> Result<f64> {
        let mut tape = Tape::new();
        let fake = self.bundle.generate(&mut tape, latent, false)?.out;
        let real_t = tape.constant(real);
        let real_logits = self.bundle.discriminate(&mut tape, real_t, true)?;
        let fake_logits = self.bundle.discriminate(&mut tape, fake, true)?;
        let loss = losses::d_loss(&mut tape, real_logits.out, fake_logits.out)?;
        let value = check_finite("d_loss", self.step, tape.scalar(loss)? as f64)?;
        let grads = tape.backward(loss)?;
        // Both passes bind the same parameters; sum their gradients.
        let summed: Vec<Vec<f32>> = real_logits
            .params
            .iter()
            .zip(&fake_logits.params)
            .map(|(&a, &b)| -> Result<Vec<f32>> {
                Ok(grads.get(a)?.iter().zip(grads.get(b)?).map(|(x, y)| x + y).collect())
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&[f32]> = summed.iter().map(Vec::as_slice).collect();
        self.opt_d.step(&mut self.bundle.discriminator.params_mut(), &refs)?;
        Ok(value)
    }

    fn anchor_tensor<'a>(
        &self,
        tape: &mut Tape<f32>,
        anchors: Option<&'a AnchorSet>,
        trainable: bool,
    ) -> Result<(Option<Anchors<'a>>, Vec<Tensor>)> {
        match anchors {
            Some(a) => {
                let x = tape.constant(&a.images);
                let enc = self.bundle.encode(tape, x, trainable)?;
                Ok((
                    Some(Anchors {
                        features: enc.f,
                        labels: &a.labels,
                        as_negatives: self.cfg.anchor_negatives,
                    }),
                    enc.params,
                ))
            }
            None => Ok((None, Vec::new())),
        }
    }

    /// Records `β₁·L_c + β₂·L_z` (and the adversarial term) for `latent`.
    fn record_objective(
        &self,
        tape: &mut Tape<f32>,
        latent: &LatentBatch<f32>,
        anchors: Option<&AnchorSet>,
        train_g: bool,
        train_e: bool,
    ) -> Result<(Recorded, Vec<Tensor>, Vec<Tensor>)> {
        let w = self.cfg.weights;
        let gen = self.bundle.generate(tape, latent, train_g)?;
        let enc = self.bundle.encode(tape, gen.out, train_e)?;
        let (anchor_feats, anchor_params) = self.anchor_tensor(tape, anchors, train_e)?;

        let n_gan = self.cfg.batch_g.min(latent.len());
        let gan_images = if n_gan == latent.len() {
            gen.out
        } else {
            tape.slice(gen.out, 0, 0, n_gan)?
        };
        let logits = self.bundle.discriminate(tape, gan_images, false)?.out;
        let g_gan = losses::g_loss(tape, logits, self.cfg.gan_mode)?;

        let l_c = match losses::contrastive_loss(tape, enc.f, &latent.c_index, w.tau, anchor_feats) {
            Ok(t) => Some(t),
            Err(CdganError::DegenerateContrastive) => None,
            Err(e) => return Err(e),
        };
        let z = tape.constant(&latent.z);
        let l_z = losses::content_loss(tape, z, enc.e)?;

        let zero = tape.scalar_constant(0.0);
        let lc_or_zero = l_c.unwrap_or(zero);
        let total = losses::total_g_loss(tape, g_gan, lc_or_zero, l_z, &w)?;
        // encoder objective: the same weighted terms without the adversarial part
        let contrast = losses::total_g_loss(tape, zero, lc_or_zero, l_z, &w)?;

        let mut e_params = enc.params;
        if !anchor_params.is_empty() {
            e_params.extend(anchor_params);
        }
        Ok((
            Recorded {
                g_gan,
                l_c,
                l_z,
                contrast,
                total,
            },
            gen.params,
            e_params,
        ))
    }

    fn terms(&self, tape: &Tape<f32>, r: &Recorded) -> Result<GeneratorTerms> {
        Ok(GeneratorTerms {
            g_gan: check_finite("g_gan", self.step, tape.scalar(r.g_gan)? as f64)?,
            l_c: check_finite(
                "l_c",
                self.step,
                r.l_c.map(|t| tape.scalar(t)).transpose()?.unwrap_or(0.0) as f64,
            )?,
            l_z: check_finite("l_z", self.step, tape.scalar(r.l_z)? as f64)?,
            total: check_finite("total", self.step, tape.scalar(r.total)? as f64)?,
        })
    }

    /// Loss terms for `latent` under the current parameters, without updating.
    pub fn objective(&self, latent: &LatentBatch<f32>, anchors: Option<&AnchorSet>) -> Result<GeneratorTerms> {
        let mut tape = Tape::new();
        let (r, _, _) = self.record_objective(&mut tape, latent, anchors, false, false)?;
        self.terms(&tape, &r)
    }

    /// Descends `L_GAN + β₁L_c + β₂L_z` in G only.
    pub fn update_generator(&mut self, latent: &LatentBatch<f32>, anchors: Option<&AnchorSet>) -> Result<GeneratorTerms> {
        let mut tape = Tape::new();
        let (r, g_params, _) = self.record_objective(&mut tape, latent, anchors, true, false)?;
        let terms = self.terms(&tape, &r)?;
        let grads = tape.backward(r.total)?;
        let refs: Vec<&[f32]> = g_params.iter().map(|&p| grads.get(p)).collect::<Result<_>>()?;
        self.opt_g.step(&mut self.bundle.generator.params_mut(), &refs)?;
        Ok(terms)
    }

    /// Descends `β₁L_c + β₂L_z` in E only.
    pub fn update_encoder(&mut self, latent: &LatentBatch<f32>, anchors: Option<&AnchorSet>) -> Result<()> {
        let mut tape = Tape::new();
        let (r, _, e_params) = self.record_objective(&mut tape, latent, anchors, false, true)?;
        check_finite("encoder objective", self.step, tape.scalar(r.contrast)? as f64)?;
        let grads = tape.backward(r.contrast)?;
        let n = self.opt_e_len();
        // Anchor passes bind the encoder a second time; fold their gradients in.
        let mut summed: Vec<Vec<f32>> = e_params[..n]
            .iter()
            .map(|&p| grads.get(p).map(<[f32]>::to_vec))
            .collect::<Result<_>>()?;
        for chunk in e_params[n..].chunks(n) {
            for (acc, &p) in summed.iter_mut().zip(chunk) {
                for (a, g) in acc.iter_mut().zip(grads.get(p)?) {
                    *a += g;
                }
            }
        }
        let refs: Vec<&[f32]> = summed.iter().map(Vec::as_slice).collect();
        self.opt_e.step(&mut self.bundle.encoder.params_mut(), &refs)
    }

    fn opt_e_len(&self) -> usize {
        self.bundle.encoder.params().len()
    }

    /// One full iteration: D update(s), then G with E fixed, then E with G fixed.
    pub fn train_step(&mut self, data: &Matrix<f32>, anchors: Option<&AnchorSet>) -> Result<StepRecord> {
        let mut d_loss = 0.0;
        for _ in 0..self.cfg.d_updates {
            let real = self.sample_real(data, self.cfg.batch_d);
            let latent = self.sample_latent(self.cfg.batch_d)?;
            d_loss = self.update_discriminator(&real, &latent)?;
        }
        let latent = self.sample_latent(self.cfg.batch_e)?;
        let terms = self.update_generator(&latent, anchors)?;
        self.update_encoder(&latent, anchors)?;
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            d_loss,
            g_gan: terms.g_gan,
            l_c: terms.l_c,
            l_z: terms.l_z,
            total: terms.total,
        })
    }
}

/// Labeled held-out images for periodic evaluation.
pub struct EvalSet<'a> {
    pub images: &'a Matrix<f32>,
    pub labels: &'a [usize],
    pub config: &'a EvalConfig,
}

/// Callback hook invoked after each step with any snapshot taken at that step.
pub trait Observer {
    fn on_step(&mut self, _trainer: &Trainer, _record: &StepRecord, _snapshot: Option<&ClusterReport>) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

pub fn snapshot(trainer: &Trainer, eval: &EvalSet<'_>) -> Result<ClusterReport> {
    let mut rng = derive(trainer.cfg.seed ^ trainer.steps_done() as u64, STREAM_SNAPSHOT);
    evaluate(
        &trainer.bundle,
        eval.images,
        eval.labels,
        trainer.cfg.model.k,
        eval.config,
        &mut rng,
    )
}

/// Full run: anchors (if configured), `cfg.steps` iterations, periodic snapshots.
pub fn train_with(
    dataset: &ImageBatch,
    eval: Option<&EvalSet<'_>>,
    cfg: &TrainConfig,
    observer: &mut dyn Observer,
) -> Result<(ModelBundle<f32>, TrainHistory)> {
    if dataset.is_empty() {
        return Err(CdganError::contract("training set is empty"));
    }
    if dataset.pixels() != cfg.model.pixels {
        return Err(CdganError::contract(format!(
            "dataset has {} pixels per image, model expects {}",
            dataset.pixels(),
            cfg.model.pixels
        )));
    }
    let anchors = if cfg.label_fraction > 0.0 {
        let set = select_anchor_set(dataset, cfg.label_fraction, &mut derive(cfg.seed, STREAM_ANCHORS))?;
        if set.labels.iter().any(|&l| l >= cfg.model.k) {
            return Err(CdganError::validation("anchor label exceeds k"));
        }
        Some(set)
    } else {
        None
    };

    let mut trainer = Trainer::new(cfg.clone())?;
    let mut history = TrainHistory::default();
    for _ in 0..cfg.steps {
        let record = trainer.train_step(&dataset.images, anchors.as_ref())?;
        let due = trainer.steps_done() == cfg.steps
            || (cfg.snapshot_every > 0 && trainer.steps_done() % cfg.snapshot_every == 0);
        let report = match eval {
            Some(e) if due => Some(snapshot(&trainer, e)?),
            _ => None,
        };
        observer.on_step(&trainer, &record, report.as_ref())?;
        history.records.push(record);
        if let Some(r) = report {
            history.snapshots.push((record.step, r));
        }
    }
    Ok((trainer.bundle, history))
}

pub fn train(dataset: &ImageBatch, cfg: &TrainConfig) -> Result<(ModelBundle<f32>, TrainHistory)> {
    train_with(dataset, None, cfg, &mut ())
}
