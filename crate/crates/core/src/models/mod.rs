//! The five networks: photo-to-sketch generator `G_s`, label-conditioned
//! sketch-to-photo generator `G_p`, sketch and photo PatchGAN discriminators
//! `D_s` / `D_p`, and the photo classifier `R`.

mod classifier;
mod discriminator;
mod generator;

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

pub use classifier::{Backbone, Classifier, ClassifierSpec};
pub use discriminator::{DiscriminatorNorm, DiscriminatorSpec, PatchDiscriminator};
pub use generator::{
    to_sketch_domain, Conditioning, Generator, GeneratorSpec, LabelEmbedding, Upsampling,
    SKETCH_LUMA,
};

use crate::error::Result;
use crate::nn::ParamStore;

/// Architecture hyper-parameters shared by all five networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_width: usize,
    pub n_blocks: usize,
    pub embed_dim: usize,
    pub d_layers: usize,
    pub d_base_width: usize,
    pub classifier: Backbone,
    pub classifier_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            n_blocks: 9,
            embed_dim: 64,
            d_layers: 5,
            d_base_width: 64,
            classifier: Backbone::SimpleCnn,
            classifier_width: 32,
        }
    }
}

impl ModelConfig {
    pub fn g_s_spec(&self) -> GeneratorSpec {
        GeneratorSpec::photo_to_sketch(self.base_width, self.n_blocks)
    }

    pub fn g_p_spec(&self) -> GeneratorSpec {
        GeneratorSpec::sketch_to_photo(self.base_width, self.n_blocks, self.embed_dim)
    }

    pub fn d_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            n_layers: self.d_layers,
            base_width: self.d_base_width,
            norm: DiscriminatorNorm::Instance,
        }
    }

    pub fn r_spec(&self, n_classes: usize) -> ClassifierSpec {
        ClassifierSpec {
            backbone: self.classifier,
            n_classes,
            base_width: self.classifier_width,
        }
    }
}

/// Which of the five networks a parameter store belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetId {
    GS,
    GP,
    DS,
    DP,
    R,
}

impl NetId {
    pub const ALL: [NetId; 5] = [NetId::GS, NetId::GP, NetId::DS, NetId::DP, NetId::R];

    pub fn key(self) -> &'static str {
        match self {
            NetId::GS => "g_s",
            NetId::GP => "g_p",
            NetId::DS => "d_s",
            NetId::DP => "d_p",
            NetId::R => "r",
        }
    }
}

/// All five networks with their parameter stores.
#[derive(Debug, Clone)]
pub struct Networks {
    pub config: ModelConfig,
    pub n_classes: usize,
    pub g_s: Generator,
    pub g_p: Generator,
    pub d_s: PatchDiscriminator,
    pub d_p: PatchDiscriminator,
    pub r: Classifier,
    stores: [ParamStore; 5],
}

impl Networks {
    pub fn new(
        config: ModelConfig,
        n_classes: usize,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let stores = NetId::ALL.map(|id| {
            ParamStore::new(
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(id as u64 + 1),
                dtype,
                device,
            )
        });
        let g_s = Generator::new(&stores[0], config.g_s_spec(), n_classes)?;
        let g_p = Generator::new(&stores[1], config.g_p_spec(), n_classes)?;
        let d_s = PatchDiscriminator::new(&stores[2], config.d_spec())?;
        let d_p = PatchDiscriminator::new(&stores[3], config.d_spec())?;
        let r = Classifier::new(&stores[4], config.r_spec(n_classes))?;
        Ok(Self {
            config,
            n_classes,
            g_s,
            g_p,
            d_s,
            d_p,
            r,
            stores,
        })
    }

    pub fn store(&self, id: NetId) -> &ParamStore {
        &self.stores[id as usize]
    }
}
