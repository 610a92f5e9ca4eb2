use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::taxonomy::CLASS_COUNT;

/// Residual U-Net backbone shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneConfig {
    pub in_channels: usize,
    /// Channel width of each resolution level, shallowest first.
    pub stage_channels: Vec<usize>,
    /// Residual blocks per encoder level and per decoder level.
    pub blocks_per_stage: usize,
    /// Channels of the decoder output fed to the dynamic head.
    pub decoder_out_channels: usize,
    pub input_size: usize,
    pub norm_groups: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            in_channels: 3,
            stage_channels: vec![32, 64, 128, 256, 512],
            blocks_per_stage: 2,
            decoder_out_channels: 8,
            input_size: 512,
            norm_groups: 8,
        }
    }
}

/// Parameter budget of the three-layer dynamic head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadLayout {
    pub in_channels: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl HeadLayout {
    pub fn layer_shapes(&self) -> [(usize, usize); 3] {
        [(self.in_channels, self.hidden), (self.hidden, self.hidden), (self.hidden, self.outputs)]
    }

    /// Total weights plus biases over the three 1×1 layers.
    pub fn kernel_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// `(weight_offset, bias_offset)` of each layer inside the flat kernel vector.
    pub fn offsets(&self) -> [(usize, usize); 3] {
        let mut out = [(0, 0); 3];
        let mut at = 0;
        for (slot, &(i, o)) in out.iter_mut().zip(self.layer_shapes().iter()) {
            *slot = (at, at + i * o);
            at += i * o + o;
        }
        out
    }
}

/// Controller input and output widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerConfig {
    pub feature_dim: usize,
    pub task_dim: usize,
    pub kernel_budget: usize,
}

impl ControllerConfig {
    pub fn input_width(&self) -> usize {
        self.feature_dim + self.task_dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub backbone: BackboneConfig,
    pub head_hidden: usize,
    pub head_outputs: usize,
    pub task_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { backbone: BackboneConfig::default(), head_hidden: 8, head_outputs: 2, task_dim: CLASS_COUNT }
    }
}

impl NetConfig {
    /// Small network for desk-scale experiments and tests.
    pub fn reduced(input_size: usize, stage_channels: &[usize]) -> Self {
        NetConfig {
            backbone: BackboneConfig {
                stage_channels: stage_channels.to_vec(),
                blocks_per_stage: 1,
                input_size,
                norm_groups: 4,
                ..BackboneConfig::default()
            },
            ..NetConfig::default()
        }
    }

    pub fn head(&self) -> HeadLayout {
        HeadLayout {
            in_channels: self.backbone.decoder_out_channels,
            hidden: self.head_hidden,
            outputs: self.head_outputs,
        }
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            feature_dim: *self.backbone.stage_channels.last().unwrap_or(&0),
            task_dim: self.task_dim,
            kernel_budget: self.head().kernel_count(),
        }
    }

    pub fn stages(&self) -> usize {
        self.backbone.stage_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.backbone;
        if b.stage_channels.is_empty() {
            bail!(InvalidArgument, "backbone needs at least one stage");
        }
        if b.in_channels == 0 || b.decoder_out_channels == 0 || self.head_hidden == 0 || self.task_dim == 0 {
            bail!(InvalidArgument, "channel counts must be positive");
        }
        if self.head_outputs != 2 {
            bail!(InvalidArgument, "the dynamic head emits a two-channel prediction");
        }
        for &c in &b.stage_channels {
            if c == 0 || b.norm_groups == 0 || c % b.norm_groups != 0 {
                bail!(InvalidArgument, "stage width {c} is not divisible into {} norm groups", b.norm_groups);
            }
        }
        let factor = 1usize << (b.stage_channels.len() - 1);
        if b.input_size == 0 || b.input_size % factor != 0 {
            bail!(
                InvalidArgument,
                "input size {} must be a positive multiple of {factor} for {} stages",
                b.input_size,
                b.stage_channels.len()
            );
        }
        Ok(())
    }

    /// `key=value` lines, the config block of checkpoint files.
    pub fn to_text(&self) -> String {
        let b = &self.backbone;
        let stages: Vec<String> = b.stage_channels.iter().map(|c| format!("{c}")).collect();
        format!(
            "in_channels={}\nstage_channels={}\nblocks_per_stage={}\ndecoder_out_channels={}\ninput_size={}\nnorm_groups={}\nhead_hidden={}\nhead_outputs={}\ntask_dim={}\n",
            b.in_channels,
            stages.join(","),
            b.blocks_per_stage,
            b.decoder_out_channels,
            b.input_size,
            b.norm_groups,
            self.head_hidden,
            self.head_outputs,
            self.task_dim
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = NetConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Format(format!("expected key=value, got `{line}`")))?;
            let num = |v: &str| -> Result<usize> {
                v.trim().parse().map_err(|_| Error::Format(format!("bad integer for {key}: `{v}`")))
            };
            match key.trim() {
                "in_channels" => cfg.backbone.in_channels = num(value)?,
                "stage_channels" => {
                    cfg.backbone.stage_channels = value.split(',').map(num).collect::<Result<Vec<_>>>()?
                }
                "blocks_per_stage" => cfg.backbone.blocks_per_stage = num(value)?,
                "decoder_out_channels" => cfg.backbone.decoder_out_channels = num(value)?,
                "input_size" => cfg.backbone.input_size = num(value)?,
                "norm_groups" => cfg.backbone.norm_groups = num(value)?,
                "head_hidden" => cfg.head_hidden = num(value)?,
                "head_outputs" => cfg.head_outputs = num(value)?,
                "task_dim" => cfg.task_dim = num(value)?,
                other => bail!(Format, "unknown network config key `{other}`"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
