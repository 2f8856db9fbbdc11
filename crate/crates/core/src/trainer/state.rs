use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ClassVocabulary, Domain, LabeledImageBatch};
use crate::error::{Error, Result};
use crate::losses::{
    classifier_update_loss, discriminator_loss, focal_classification_loss, gen_adversarial_loss,
    generator_total_loss, pixel_consistency_loss, scalar, LossReport,
};
use crate::models::{Generator, ModelConfig, NetId, Networks};
use crate::nn::ParamStore;
use crate::pool::{MixPolicy, PooledSketches, SketchPool};

use super::config::{Strategy, TrainConfig};
use super::optim::Adam;

const MIX_STREAM: u64 = 0x6d69_78;
const POOL_STREAM: u64 = 0x706f_6f6c;

/// The sketch batch the photo generator is adversarially trained on this step.
#[derive(Debug, Clone)]
pub enum MixedSketches {
    /// The dataset sketch batch `(s, eta_s)`.
    Real,
    /// A pool answer `(s_c, eta_c)` built from synthesized sketches and photo labels.
    Pooled(PooledSketches),
}

impl MixedSketches {
    pub fn substituted(&self) -> bool {
        matches!(self, MixedSketches::Pooled(_))
    }
}

/// Forward results of one step before any parameter update.
#[derive(Debug)]
pub struct StepObjectives {
    pub s_fake: Tensor,
    pub p_rec: Tensor,
    pub p_fake: Tensor,
    pub p_mix: Tensor,
    pub mixed: MixedSketches,
    pub g_s_adv: Tensor,
    pub g_p_adv: Tensor,
    pub pix: Tensor,
    pub eta: Tensor,
    pub g_total: Tensor,
    pub d_s: Tensor,
    pub d_p: Tensor,
    pub r: Tensor,
}

impl StepObjectives {
    pub fn report(&self) -> Result<LossReport> {
        Ok(LossReport {
            g_s_adv: scalar(&self.g_s_adv)?,
            g_p_adv: scalar(&self.g_p_adv)?,
            pix: scalar(&self.pix)?,
            eta: scalar(&self.eta)?,
            g_total: scalar(&self.g_total)?,
            d_s: scalar(&self.d_s)?,
            d_p: scalar(&self.d_p)?,
            r: scalar(&self.r)?,
            substituted: self.mixed.substituted(),
        })
    }
}

/// Everything the training loop mutates: networks, optimizers, pool and RNG streams.
pub struct TrainState {
    pub model: ModelConfig,
    pub config: TrainConfig,
    pub vocabulary: ClassVocabulary,
    pub nets: Networks,
    optimizers: [Adam; 5],
    pub pool: SketchPool,
    pub policy: MixPolicy,
    pub mix_rng: ChaCha8Rng,
    pub data_rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed steps.
    pub step: u64,
    pre_extractor: Option<Generator>,
}

impl std::fmt::Debug for TrainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainState")
            .field("epoch", &self.epoch)
            .field("step", &self.step)
            .field("strategy", &self.config.strategy)
            .field("threshold", &self.policy.threshold())
            .field("pool_len", &self.pool.len())
            .finish()
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl TrainState {
    pub fn new(
        model: ModelConfig,
        config: TrainConfig,
        vocabulary: ClassVocabulary,
        device: &Device,
    ) -> Result<Self> {
        config.validate()?;
        vocabulary.check_trainable()?;
        let nets = Networks::new(model, vocabulary.len(), config.seed, DType::F32, device)?;
        let optimizers = NetId::ALL
            .map(|id| Adam::new(nets.store(id), config.lr, config.adam_betas))
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .try_into()
            .expect("five optimizers");
        let pool = SketchPool::new(config.pool_capacity, config.swap_likelihood, config.seed)?;
        let mut pool = pool;
        pool.restore(Vec::new(), seeded(config.seed, POOL_STREAM))?;
        let policy = MixPolicy::new(config.threshold(&vocabulary)?)?;
        Ok(Self {
            model,
            vocabulary,
            nets,
            optimizers,
            pool,
            policy,
            mix_rng: seeded(config.seed, MIX_STREAM),
            data_rng: seeded(config.seed, 0),
            epoch: 0,
            step: 0,
            pre_extractor: None,
            config,
        })
    }

    pub fn device(&self) -> Device {
        self.nets.store(NetId::GS).device()
    }

    pub fn optimizer(&self, id: NetId) -> &Adam {
        &self.optimizers[id as usize]
    }

    pub(crate) fn optimizer_mut(&mut self, id: NetId) -> &mut Adam {
        &mut self.optimizers[id as usize]
    }

    pub fn set_lr(&mut self, lr: f64) {
        for opt in self.optimizers.iter_mut() {
            opt.set_lr(lr);
        }
    }

    /// Installs the frozen photo-to-sketch network used by the `pre_extracted` arm.
    pub fn set_pre_extractor(&mut self, generator: Generator) {
        self.pre_extractor = Some(generator);
    }

    pub fn pre_extractor(&self) -> Option<&Generator> {
        self.pre_extractor.as_ref()
    }

    /// Sketches extracted from `photos` by the frozen network, labelled with the photo labels.
    pub fn pre_extracted_sketches(&self, photos: &LabeledImageBatch) -> Result<LabeledImageBatch> {
        let gen = self.pre_extractor.as_ref().ok_or_else(|| {
            Error::Config("pre_extracted strategy needs a frozen sketch extractor".into())
        })?;
        let sketches = gen.photo_to_sketch(&photos.images)?.detach();
        LabeledImageBatch::new(sketches, photos.labels.clone(), Domain::Sketch)
    }

    fn check_batches(&self, photo: &LabeledImageBatch, sketch: &LabeledImageBatch) -> Result<()> {
        if photo.domain != Domain::Photo || sketch.domain != Domain::Sketch {
            return Err(Error::Argument(
                "expected a photo batch and a sketch batch".into(),
            ));
        }
        for l in photo.labels.iter().chain(&sketch.labels) {
            self.vocabulary.check_label(*l)?;
        }
        Ok(())
    }

    /// Decides the generator's sketch input for this step. With the
    /// random-mixed strategy and a successful draw, the detached synthesized
    /// sketches and the photo labels go through the pool.
    pub fn mix(&mut self, s_fake: &Tensor, photo_labels: &[u32]) -> Result<MixedSketches> {
        if self.config.strategy != Strategy::RandomMixed {
            return Ok(MixedSketches::Real);
        }
        if !self.policy.should_substitute(&mut self.mix_rng) {
            return Ok(MixedSketches::Real);
        }
        let fresh = PooledSketches::new(s_fake.detach(), photo_labels.to_vec())?;
        Ok(MixedSketches::Pooled(self.pool.query(fresh)?))
    }

    /// Runs every forward pass of one step and builds all objectives.
    ///
    /// The discriminators only ever see the dataset batches as real inputs;
    /// pooled sketches reach nothing but the photo generator's adversarial
    /// and classification terms.
    pub fn forward_step(
        &mut self,
        photo: &LabeledImageBatch,
        sketch: &LabeledImageBatch,
    ) -> Result<StepObjectives> {
        self.check_batches(photo, sketch)?;
        let gamma = self.config.focal_gamma;
        let eta_p = photo.label_tensor()?;
        let eta_s = sketch.label_tensor()?;

        let s_fake = self.nets.g_s.photo_to_sketch(&photo.images)?;
        let mixed = self.mix(&s_fake, &photo.labels)?;
        let nets = &self.nets;
        let p_rec = nets.g_p.sketch_to_photo(&s_fake, &eta_p)?;
        let p_fake = nets.g_p.sketch_to_photo(&sketch.images, &eta_s)?;
        let (p_mix, eta_c) = match &mixed {
            MixedSketches::Real => (p_fake.clone(), eta_s.clone()),
            MixedSketches::Pooled(pooled) => {
                let eta_c = pooled.label_tensor()?;
                (nets.g_p.sketch_to_photo(&pooled.sketches, &eta_c)?, eta_c)
            }
        };

        let g_s_adv = gen_adversarial_loss(&nets.d_s.forward(&s_fake)?)?;
        let g_p_adv = gen_adversarial_loss(&nets.d_p.forward(&p_mix)?)?;
        let pix = pixel_consistency_loss(&p_rec, &photo.images)?;
        let eta = focal_classification_loss(&nets.r.forward(&p_mix)?, &eta_c, gamma)?;
        let g_total = generator_total_loss(&self.config.weights, &g_s_adv, &g_p_adv, &pix, &eta)?;

        let s_fake_const = s_fake.detach();
        let p_fake_const = p_fake.detach();
        let d_s = discriminator_loss(
            &nets.d_s.forward(&sketch.images)?,
            &nets.d_s.forward(&s_fake_const)?,
        )?;
        let d_p = discriminator_loss(
            &nets.d_p.forward(&photo.images)?,
            &nets.d_p.forward(&p_fake_const)?,
        )?;
        let r = classifier_update_loss(
            &nets.r.forward(&photo.images)?,
            &eta_p,
            &nets.r.forward(&p_fake_const)?,
            &eta_s,
            gamma,
        )?;

        Ok(StepObjectives {
            s_fake,
            p_rec,
            p_fake,
            p_mix,
            mixed,
            g_s_adv,
            g_p_adv,
            pix,
            eta,
            g_total,
            d_s,
            d_p,
            r,
        })
    }

    fn step_nets(&mut self, ids: &[NetId], grads: &GradStore) -> Result<()> {
        for &id in ids {
            self.optimizer_mut(id).step(grads)?;
        }
        Ok(())
    }

    pub fn apply_generator_update(&mut self, obj: &StepObjectives) -> Result<()> {
        let grads = obj.g_total.backward()?;
        self.step_nets(&[NetId::GS, NetId::GP], &grads)
    }

    pub fn apply_discriminator_update(&mut self, obj: &StepObjectives) -> Result<()> {
        let grads = obj.d_s.backward()?;
        self.step_nets(&[NetId::DS], &grads)?;
        let grads = obj.d_p.backward()?;
        self.step_nets(&[NetId::DP], &grads)
    }

    pub fn apply_classifier_update(&mut self, obj: &StepObjectives) -> Result<()> {
        let grads = obj.r.backward()?;
        self.step_nets(&[NetId::R], &grads)
    }

    /// L2 norm of the gradient of `loss` over each network's parameters.
    pub fn grad_norms(&self, loss: &Tensor) -> Result<Vec<(NetId, f64)>> {
        let grads = loss.backward()?;
        NetId::ALL
            .iter()
            .map(|&id| Ok((id, grad_norm(self.nets.store(id), &grads)?)))
            .collect()
    }

    /// One iteration: generator update, then both discriminators on real
    /// data, then the classifier.
    pub fn train_step(
        &mut self,
        photo: &LabeledImageBatch,
        sketch: &LabeledImageBatch,
    ) -> Result<LossReport> {
        let obj = self.forward_step(photo, sketch)?;
        let report = obj.report()?;
        if !report.is_finite() {
            let mut diag = format!("{report:?}");
            for (name, loss) in [
                ("g_total", &obj.g_total),
                ("d_s", &obj.d_s),
                ("d_p", &obj.d_p),
                ("r", &obj.r),
            ] {
                let norms = self.grad_norms(loss)?;
                diag.push_str(&format!("; grad norms of {name}: {norms:?}"));
            }
            return Err(Error::NonFinite {
                step: self.step + 1,
                diagnostic: diag,
            });
        }
        self.apply_generator_update(&obj)?;
        self.apply_discriminator_update(&obj)?;
        self.apply_classifier_update(&obj)?;
        self.step += 1;
        Ok(report)
    }
}

/// L2 norm of the gradients held for a store's parameters (missing = 0).
pub fn grad_norm(store: &ParamStore, grads: &GradStore) -> Result<f64> {
    let mut sq = 0.0;
    for var in store.vars() {
        if let Some(g) = grads.get(var.as_tensor()) {
            sq += scalar(&g.sqr()?.sum_all()?)?;
        }
    }
    Ok(sq.sqrt())
}
