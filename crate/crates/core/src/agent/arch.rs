use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::glimpse::GlimpseConfig;
use crate::nn::{conv_out_dim, Affine, Conv2d, Lstm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvLayerSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize) -> Self {
        Self {
            filters,
            kernel,
            stride,
        }
    }

    /// Conv stack used when the config leaves it unspecified, chosen by focal patch size.
    pub fn default_stack(patch_size: usize) -> Vec<ConvLayerSpec> {
        if patch_size >= 40 {
            vec![Self::new(32, 8, 4), Self::new(64, 4, 2), Self::new(64, 3, 1)]
        } else if patch_size >= 16 {
            vec![Self::new(32, 4, 2), Self::new(64, 3, 1)]
        } else {
            vec![Self::new(32, 3, 1)]
        }
    }
}

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// Width of the glimpse feature vector `k_t`.
    pub glimpse_fc: usize,
    /// Width of the location feature layer and of the locator's hidden layer.
    pub loc_fc: usize,
    /// Hidden size of both LSTMs.
    pub lstm: usize,
    /// Explicit conv stack; `None` selects [`ConvLayerSpec::default_stack`].
    #[serde(default)]
    pub conv: Option<Vec<ConvLayerSpec>>,
    pub actions: usize,
    /// Standard deviation of the truncated-normal location policy.
    pub locator_std: f64,
}

impl ArchConfig {
    pub fn atari(actions: usize) -> Self {
        Self {
            glimpse_fc: 384,
            loc_fc: 256,
            lstm: 128,
            conv: None,
            actions,
            locator_std: 0.1,
        }
    }

    pub fn carracing(actions: usize) -> Self {
        Self {
            glimpse_fc: 512,
            ..Self::atari(actions)
        }
    }

    /// Small widths for CPU-scale toy environments.
    pub fn desk(actions: usize) -> Self {
        Self {
            glimpse_fc: 64,
            loc_fc: 32,
            lstm: 64,
            conv: Some(vec![ConvLayerSpec::new(16, 4, 2), ConvLayerSpec::new(32, 3, 1)]),
            actions,
            locator_std: 0.1,
        }
    }

    pub fn conv_stack(&self, glimpse: &GlimpseConfig) -> Vec<ConvLayerSpec> {
        self.conv
            .clone()
            .unwrap_or_else(|| ConvLayerSpec::default_stack(glimpse.patch_size))
    }

    /// Width of the merged location/glimpse vector `g_t`.
    pub fn merge_width(&self) -> usize {
        self.glimpse_fc + self.loc_fc
    }

    /// `(channels, height, width)` entering each conv layer, plus the final output shape.
    pub fn conv_shapes(&self, glimpse: &GlimpseConfig) -> Result<Vec<(usize, usize, usize)>> {
        let mut shapes = vec![(glimpse.num_patches, glimpse.patch_size, glimpse.patch_size)];
        for (i, layer) in self.conv_stack(glimpse).iter().enumerate() {
            let &(_, h, w) = shapes.last().expect("non-empty");
            let oh = conv_out_dim(h, layer.kernel, layer.stride)
                .map_err(|e| config_err(format!("arch.conv[{i}]: {e}")))?;
            let ow = conv_out_dim(w, layer.kernel, layer.stride)
                .map_err(|e| config_err(format!("arch.conv[{i}]: {e}")))?;
            shapes.push((layer.filters, oh, ow));
        }
        Ok(shapes)
    }

    pub fn validate(&self, glimpse: &GlimpseConfig) -> Result<()> {
        glimpse.validate()?;
        for (name, v) in [
            ("arch.glimpse_fc", self.glimpse_fc),
            ("arch.loc_fc", self.loc_fc),
            ("arch.lstm", self.lstm),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        if self.actions == 0 {
            return Err(config_err("arch.actions must be at least 1"));
        }
        if !(self.locator_std > 0.0 && self.locator_std.is_finite()) {
            return Err(config_err("arch.locator_std must be positive"));
        }
        for (i, layer) in self.conv_stack(glimpse).iter().enumerate() {
            if layer.filters == 0 || layer.kernel == 0 || layer.stride == 0 {
                return Err(config_err(format!("arch.conv[{i}] has a zero field")));
            }
        }
        self.conv_shapes(glimpse)?;
        Ok(())
    }
}

/// Exact number of trainable scalars. Depends on the glimpse geometry, never on frame size.
pub fn param_count(arch: &ArchConfig, glimpse: &GlimpseConfig) -> Result<usize> {
    arch.validate(glimpse)?;
    let shapes = arch.conv_shapes(glimpse)?;
    let mut total = 0;
    for (layer, &(cin, _, _)) in arch.conv_stack(glimpse).iter().zip(&shapes) {
        total += Conv2d::param_count(cin, layer.filters, layer.kernel);
    }
    let &(c, h, w) = shapes.last().expect("non-empty");
    let (f, l, hd) = (arch.glimpse_fc, arch.loc_fc, arch.lstm);
    total += Affine::param_count(c * h * w, f);
    total += Lstm::param_count(f, hd);
    total += Affine::param_count(hd, arch.actions);
    total += Affine::param_count(hd, 1);
    total += Affine::param_count(2, l);
    total += Affine::param_count(f + l, arch.merge_width());
    total += Lstm::param_count(arch.merge_width(), hd);
    total += Affine::param_count(hd, l);
    total += Affine::param_count(l, 2);
    Ok(total)
}
