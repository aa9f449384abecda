//! Temporal multi-view segmentation network.
//!
//! Five per-view encoders consume short stacks of heatmaps (one stack per
//! radar view), collapse time with unpadded 3D convolutions, widen their
//! receptive field with dilated-convolution pyramids, and meet in a shared
//! latent plane that a transposed-convolution decoder turns into per-class
//! probabilities on the elevation–azimuth grid.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` when gradients are checked against finite
//! differences.

mod checkpoint;
mod model;
mod ops;
mod params;
mod tensor;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, save_checkpoint, CheckpointData};
pub use model::{window_input, Model, Prediction};
pub use ops::{
    concat_channels, conv2d_backward, conv2d_forward, conv3d_backward, conv3d_forward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, resize_bilinear_backward,
    resize_bilinear_forward, softmax_backward, softmax_forward, split_channels, tconv2d_backward,
    tconv2d_forward, Conv2dSpec,
};
pub use params::{Gradients, ParamDef, ParamId, Parameters};
pub use tensor::{Scalar, Tensor};

use serde::{Deserialize, Serialize};

use crate::config::ViewId;
use crate::error::{Error, Result};
use crate::projection::ViewSpecs;

/// Architecture hyper-parameters.
///
/// The defaults describe the full-size model; [`NetworkConfig::tiny`] is a
/// scaled-down variant small enough for exhaustive gradient checking and
/// quick overfitting runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Temporal window length (frames per view stack), at most 5 so the two
    /// unpadded temporal convolutions collapse the depth axis to one.
    pub window: usize,
    /// Output channels of the two temporal (3D) convolution stages.
    pub conv3d_channels: [usize; 2],
    /// Output channels of the two spatial (2D) convolution stages.
    pub conv2d_channels: [usize; 2],
    /// Branch and output width of the dilated-convolution pyramid.
    pub aspp_channels: usize,
    /// Dilation rates of the pyramid's 3×3 branches (a 1×1 branch is always
    /// present in addition).
    pub aspp_rates: Vec<usize>,
    /// Latent plane height all view features are resampled onto.
    pub latent_rows: usize,
    /// Latent plane width.
    pub latent_cols: usize,
    /// Channel widths after the first and second decoder upsampling stages.
    pub decoder_channels: [usize; 2],
    /// Number of output classes (background + person = 2).
    pub classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            window: 5,
            conv3d_channels: [32, 64],
            conv2d_channels: [128, 128],
            aspp_channels: 128,
            aspp_rates: vec![1, 6, 12, 18],
            latent_rows: 32,
            latent_cols: 32,
            decoder_channels: [256, 128],
            classes: 2,
        }
    }
}

impl NetworkConfig {
    /// Miniature configuration for gradient checks and fixture training:
    /// same topology, a couple of channels everywhere, 8×8 views.
    pub fn tiny() -> Self {
        Self {
            window: 3,
            conv3d_channels: [2, 2],
            conv2d_channels: [2, 2],
            aspp_channels: 2,
            aspp_rates: vec![1],
            latent_rows: 2,
            latent_cols: 2,
            decoder_channels: [4, 2],
            classes: 2,
        }
    }

    /// Kernel depths of the two temporal stages: each consumes up to three
    /// adjacent frames without padding, so a window of 1..=5 frames always
    /// collapses to depth one after both stages.
    pub fn temporal_kernel_depths(&self) -> (usize, usize) {
        let kd1 = self.window.min(3);
        let d1 = self.window - kd1 + 1;
        (kd1, d1.min(3))
    }

    /// Spatial dims of a view's encoder output. The elevation–azimuth view
    /// is pooled once (its full resolution carries the output mask); every
    /// other view is pooled twice.
    pub fn encoder_out_dims(&self, view: ViewId, rows: usize, cols: usize) -> (usize, usize) {
        let div = self.pool_divisor(view);
        (rows / div, cols / div)
    }

    fn pool_divisor(&self, view: ViewId) -> usize {
        if view == ViewId::Ea {
            2
        } else {
            4
        }
    }

    /// Check the architecture against the heatmap geometry it will consume.
    pub fn validate(&self, specs: &ViewSpecs) -> Result<()> {
        if self.window == 0 || self.window > 5 {
            return Err(Error::Config(format!(
                "temporal window must be 1..=5 (two unpadded depth-3 stages \
                 cannot collapse {} frames to one)",
                self.window
            )));
        }
        for (what, v) in [
            ("conv3d_channels[0]", self.conv3d_channels[0]),
            ("conv3d_channels[1]", self.conv3d_channels[1]),
            ("conv2d_channels[0]", self.conv2d_channels[0]),
            ("conv2d_channels[1]", self.conv2d_channels[1]),
            ("aspp_channels", self.aspp_channels),
            ("latent_rows", self.latent_rows),
            ("latent_cols", self.latent_cols),
            ("decoder_channels[0]", self.decoder_channels[0]),
            ("decoder_channels[1]", self.decoder_channels[1]),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{what} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.aspp_rates.is_empty() {
            return Err(Error::Config("need at least one dilation rate".into()));
        }
        if self.aspp_rates.iter().any(|&r| r == 0) {
            return Err(Error::Config("dilation rates must be positive".into()));
        }
        for spec in specs.iter() {
            let div = self.pool_divisor(spec.view);
            if spec.rows % div != 0 || spec.cols % div != 0 {
                return Err(Error::Config(format!(
                    "view {} is {}x{}, not divisible by its pooling factor {div}",
                    spec.view.name(),
                    spec.rows,
                    spec.cols
                )));
            }
            let (h, w) = self.encoder_out_dims(spec.view, spec.rows, spec.cols);
            for &rate in &self.aspp_rates {
                if rate >= h.max(w) {
                    return Err(Error::Config(format!(
                        "dilation rate {rate} cannot reach any neighbor on the \
                         {h}x{w} feature map of view {}",
                        spec.view.name()
                    )));
                }
            }
            // Corner-aligned resampling onto the latent plane needs at least
            // two samples along any axis that changes size.
            if (h != self.latent_rows && h < 2) || (w != self.latent_cols && w < 2) {
                return Err(Error::Config(format!(
                    "view {} encoder output {h}x{w} cannot be resampled to \
                     {}x{}",
                    spec.view.name(),
                    self.latent_rows,
                    self.latent_cols
                )));
            }
        }
        let (mask_rows, mask_cols) = specs.mask_dims();
        if self.latent_rows * 4 != mask_rows || self.latent_cols * 4 != mask_cols {
            return Err(Error::Config(format!(
                "latent plane {}x{} must upsample 4x to the {mask_rows}x{mask_cols} output grid",
                self.latent_rows, self.latent_cols
            )));
        }
        Ok(())
    }

    /// Exact number of learnable scalars this configuration allocates.
    pub fn count_params(&self) -> usize {
        let [c31, c32] = self.conv3d_channels;
        let [c21, c22] = self.conv2d_channels;
        let (kd1, kd2) = self.temporal_kernel_depths();
        let encoder = conv3d_param_count(1, c31, kd1)
            + conv3d_param_count(c31, c32, kd2)
            + conv2d_param_count(c32, c21, 3)
            + conv2d_param_count(c21, c22, 3);
        let a = self.aspp_channels;
        let branches = self.aspp_rates.len();
        let aspp = conv2d_param_count(c22, a, 1)
            + branches * conv2d_param_count(c22, a, 3)
            + conv2d_param_count(a * (branches + 1), a, 1);
        let [d0, d1] = self.decoder_channels;
        let decoder = tconv2d_param_count(5 * a, d0)
            + 2 * conv2d_param_count(d0, d0, 3)
            + tconv2d_param_count(d0, d1)
            + 2 * conv2d_param_count(d1, d1, 3)
            + conv2d_param_count(d1, self.classes, 1);
        5 * (encoder + aspp) + decoder
    }
}

/// Learnable scalars in a square 2D convolution with bias.
pub fn conv2d_param_count(in_ch: usize, out_ch: usize, kernel: usize) -> usize {
    out_ch * in_ch * kernel * kernel + out_ch
}

/// Learnable scalars in a 3D convolution (3×3 spatial) with bias.
pub fn conv3d_param_count(in_ch: usize, out_ch: usize, k_depth: usize) -> usize {
    out_ch * in_ch * k_depth * 9 + out_ch
}

/// Learnable scalars in a 2×2 stride-2 transposed convolution with bias.
pub fn tconv2d_param_count(in_ch: usize, out_ch: usize) -> usize {
    in_ch * out_ch * 4 + out_ch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BinConfig, FovConfig};

    fn full_specs() -> ViewSpecs {
        ViewSpecs::new(&FovConfig::default(), &BinConfig::default()).unwrap()
    }

    fn tiny_specs() -> ViewSpecs {
        let bins = BinConfig {
            elevation: 8,
            azimuth: 8,
            range: 8,
            doppler: 8,
            coarse_elevation: 4,
            coarse_azimuth: 4,
        };
        ViewSpecs::new(&FovConfig::default(), &bins).unwrap()
    }

    #[test]
    fn single_unit_conv_counts_ten_params() {
        assert_eq!(conv2d_param_count(1, 1, 3), 10);
    }

    #[test]
    fn default_config_validates_and_counts_millions() {
        let cfg = NetworkConfig::default();
        cfg.validate(&full_specs()).unwrap();
        assert_eq!(cfg.count_params(), 7_095_362);
    }

    #[test]
    fn tiny_config_validates_on_tiny_views() {
        let cfg = NetworkConfig::tiny();
        cfg.validate(&tiny_specs()).unwrap();
        assert_eq!(cfg.count_params(), 1_696);
    }

    #[test]
    fn window_sizes_collapse_depth_to_one() {
        for window in 1..=5 {
            let cfg = NetworkConfig {
                window,
                ..NetworkConfig::default()
            };
            let (kd1, kd2) = cfg.temporal_kernel_depths();
            let d1 = window - kd1 + 1;
            let d2 = d1 - kd2 + 1;
            assert_eq!(d2, 1, "window {window}");
        }
        let cfg = NetworkConfig {
            window: 6,
            ..NetworkConfig::default()
        };
        assert!(cfg.validate(&full_specs()).is_err());
        let cfg = NetworkConfig {
            window: 0,
            ..NetworkConfig::default()
        };
        assert!(cfg.validate(&full_specs()).is_err());
    }

    #[test]
    fn oversized_dilation_rate_is_a_config_error() {
        // 64x64 bins -> non-EA encoder maps are 16x16; rate 18 cannot reach
        // any in-bounds neighbor there.
        let bins = BinConfig {
            elevation: 64,
            azimuth: 64,
            range: 64,
            doppler: 64,
            coarse_elevation: 28,
            coarse_azimuth: 44,
        };
        let specs = ViewSpecs::new(&FovConfig::default(), &bins).unwrap();
        let cfg = NetworkConfig {
            latent_rows: 16,
            latent_cols: 16,
            ..NetworkConfig::default()
        };
        let err = cfg.validate(&specs).unwrap_err();
        assert!(err.to_string().contains("dilation rate 18"), "{err}");
        // Dropping the oversized rates fixes it.
        let cfg = NetworkConfig {
            latent_rows: 16,
            latent_cols: 16,
            aspp_rates: vec![1, 6, 12],
            ..NetworkConfig::default()
        };
        cfg.validate(&specs).unwrap();
    }

    #[test]
    fn latent_plane_must_match_output_grid() {
        let cfg = NetworkConfig {
            latent_rows: 16,
            ..NetworkConfig::default()
        };
        let err = cfg.validate(&full_specs()).unwrap_err();
        assert!(err.to_string().contains("latent plane"), "{err}");
    }

    #[test]
    fn pooling_divisibility_is_checked() {
        let bins = BinConfig {
            elevation: 126, // not divisible by 4 for the twice-pooled views
            azimuth: 128,
            range: 256,
            doppler: 256,
            coarse_elevation: 28,
            coarse_azimuth: 44,
        };
        let specs = ViewSpecs::new(&FovConfig::default(), &bins).unwrap();
        let err = NetworkConfig::default().validate(&specs).unwrap_err();
        assert!(err.to_string().contains("pooling factor"), "{err}");
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = NetworkConfig::tiny();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: NetworkConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<NetworkConfig>("{\"windows\":3}").is_err());
    }
}
