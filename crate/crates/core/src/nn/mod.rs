//! Building blocks shared by every network: seeded parameter storage,
//! normalisation, padding, AdaIN conditioning and sub-pixel upsampling.

mod adain;
mod layers;
mod params;
mod shuffle;

pub use adain::adain;
pub use layers::{
    apply, conv2d, conv_transpose2d_x2, embedding, instance_norm, leaky_relu, linear, linear_with,
    reflection_pad2d, LayerNorm2d, NORM_EPS,
};
pub use params::{Init, ParamStore};
pub use shuffle::{subpixel_downsample, subpixel_upsample};
