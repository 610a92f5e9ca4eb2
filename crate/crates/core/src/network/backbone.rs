//! Residual U-Net: mirror-symmetric encoder/decoder with skip concatenation.

use alloc::format;
use alloc::vec::Vec;

use super::config::BackboneConfig;
use crate::nn::{
    relu_backward_in_place, relu_in_place, Conv2d, ConvTranspose2x2, FeatureMap, GroupNorm, GroupNormCache,
    ParamLayout, Scalar,
};

/// conv → group norm → ReLU
#[derive(Debug, Clone)]
struct ConvNormAct {
    conv: Conv2d,
    norm: GroupNorm,
}

struct ConvNormActCache<S> {
    input: FeatureMap<S>,
    norm: GroupNormCache<S>,
    output: FeatureMap<S>,
}

impl ConvNormAct {
    fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, stride: usize, groups: usize) -> Self {
        ConvNormAct {
            conv: Conv2d::new(layout, &format!("{name}.conv"), cin, cout, 3, stride, 1),
            norm: GroupNorm::new(layout, &format!("{name}.norm"), cout, groups),
        }
    }

    fn forward<S: Scalar>(&self, p: &[S], l: &ParamLayout, x: &FeatureMap<S>) -> FeatureMap<S> {
        let a = self.conv.forward(p, l, x);
        let (mut y, _) = self.norm.forward(p, l, &a);
        relu_in_place(&mut y);
        y
    }

    fn forward_train<S: Scalar>(&self, p: &[S], l: &ParamLayout, x: FeatureMap<S>) -> ConvNormActCache<S> {
        let a = self.conv.forward(p, l, &x);
        let (mut y, norm) = self.norm.forward(p, l, &a);
        relu_in_place(&mut y);
        ConvNormActCache { input: x, norm, output: y }
    }

    fn backward<S: Scalar>(
        &self,
        p: &[S],
        l: &ParamLayout,
        cache: &ConvNormActCache<S>,
        mut dy: FeatureMap<S>,
        grads: &mut [S],
    ) -> FeatureMap<S> {
        relu_backward_in_place(&cache.output, &mut dy);
        let da = self.norm.backward(p, l, &cache.norm, &dy, grads);
        self.conv.backward(p, l, &cache.input, &da, grads)
    }
}

/// `relu(x + norm(conv(relu(norm(conv(x))))))`
#[derive(Debug, Clone)]
struct ResBlock {
    first: ConvNormAct,
    conv: Conv2d,
    norm: GroupNorm,
}

struct ResBlockCache<S> {
    first: ConvNormActCache<S>,
    hidden: FeatureMap<S>,
    norm: GroupNormCache<S>,
    output: FeatureMap<S>,
}

impl ResBlock {
    fn new(layout: &mut ParamLayout, name: &str, channels: usize, groups: usize) -> Self {
        ResBlock {
            first: ConvNormAct::new(layout, &format!("{name}.a"), channels, channels, 1, groups),
            conv: Conv2d::new(layout, &format!("{name}.b.conv"), channels, channels, 3, 1, 1),
            norm: GroupNorm::new(layout, &format!("{name}.b.norm"), channels, groups),
        }
    }

    fn forward<S: Scalar>(&self, p: &[S], l: &ParamLayout, x: &FeatureMap<S>) -> FeatureMap<S> {
        let h = self.first.forward(p, l, x);
        let a = self.conv.forward(p, l, &h);
        let (mut y, _) = self.norm.forward(p, l, &a);
        y.add_assign(x);
        relu_in_place(&mut y);
        y
    }

    fn forward_train<S: Scalar>(&self, p: &[S], l: &ParamLayout, x: FeatureMap<S>) -> ResBlockCache<S> {
        let first = self.first.forward_train(p, l, x);
        let hidden = first.output.clone();
        let a = self.conv.forward(p, l, &hidden);
        let (mut y, norm) = self.norm.forward(p, l, &a);
        y.add_assign(&first.input);
        relu_in_place(&mut y);
        ResBlockCache { first, hidden, norm, output: y }
    }

    fn backward<S: Scalar>(
        &self,
        p: &[S],
        l: &ParamLayout,
        cache: &ResBlockCache<S>,
        mut dy: FeatureMap<S>,
        grads: &mut [S],
    ) -> FeatureMap<S> {
        relu_backward_in_place(&cache.output, &mut dy);
        let da = self.norm.backward(p, l, &cache.norm, &dy, grads);
        let dh = self.conv.backward(p, l, &cache.hidden, &da, grads);
        let mut dx = self.first.backward(p, l, &cache.first, dh, grads);
        dx.add_assign(&dy);
        dx
    }
}

#[derive(Debug, Clone)]
struct EncoderStage {
    entry: ConvNormAct,
    blocks: Vec<ResBlock>,
}

#[derive(Debug, Clone)]
struct DecoderStage {
    up: ConvTranspose2x2,
    fuse: ConvNormAct,
    blocks: Vec<ResBlock>,
}

struct StageCache<S> {
    entry: ConvNormActCache<S>,
    blocks: Vec<ResBlockCache<S>>,
}

impl<S: Scalar> StageCache<S> {
    fn output(&self) -> &FeatureMap<S> {
        self.blocks.last().map(|b| &b.output).unwrap_or(&self.entry.output)
    }
}

struct DecoderCache<S> {
    up_input: FeatureMap<S>,
    stage: StageCache<S>,
}

/// Saved activations of one training forward pass.
pub struct BackboneCache<S> {
    encoder: Vec<StageCache<S>>,
    decoder: Vec<DecoderCache<S>>,
    head_input: FeatureMap<S>,
}

/// Encoder/decoder outputs consumed by the controller and the dynamic head.
pub struct BackboneOutput<S> {
    /// Deepest encoder features.
    pub bottleneck: FeatureMap<S>,
    /// Full-resolution decoder output.
    pub decoded: FeatureMap<S>,
}

#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    encoder: Vec<EncoderStage>,
    /// Ordered deepest first.
    decoder: Vec<DecoderStage>,
    out: Conv2d,
}

fn run_stage<S: Scalar>(
    entry: &ConvNormAct,
    blocks: &[ResBlock],
    p: &[S],
    l: &ParamLayout,
    x: &FeatureMap<S>,
) -> FeatureMap<S> {
    let mut h = entry.forward(p, l, x);
    for b in blocks {
        h = b.forward(p, l, &h);
    }
    h
}

fn train_stage<S: Scalar>(
    entry: &ConvNormAct,
    blocks: &[ResBlock],
    p: &[S],
    l: &ParamLayout,
    x: FeatureMap<S>,
) -> StageCache<S> {
    let entry_cache = entry.forward_train(p, l, x);
    let mut caches: Vec<ResBlockCache<S>> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let input = caches.last().map(|c| c.output.clone()).unwrap_or_else(|| entry_cache.output.clone());
        caches.push(b.forward_train(p, l, input));
    }
    StageCache { entry: entry_cache, blocks: caches }
}

fn back_stage<S: Scalar>(
    entry: &ConvNormAct,
    blocks: &[ResBlock],
    p: &[S],
    l: &ParamLayout,
    cache: &StageCache<S>,
    mut dy: FeatureMap<S>,
    grads: &mut [S],
) -> FeatureMap<S> {
    for (b, c) in blocks.iter().zip(&cache.blocks).rev() {
        dy = b.backward(p, l, c, dy, grads);
    }
    entry.backward(p, l, &cache.entry, dy, grads)
}

impl Backbone {
    pub fn new(layout: &mut ParamLayout, config: &BackboneConfig) -> Self {
        let ch = &config.stage_channels;
        let g = config.norm_groups;
        let blocks = |layout: &mut ParamLayout, prefix: &str, c: usize| -> Vec<ResBlock> {
            (0..config.blocks_per_stage).map(|i| ResBlock::new(layout, &format!("{prefix}.res{i}"), c, g)).collect()
        };
        let mut encoder = Vec::with_capacity(ch.len());
        for (s, &c) in ch.iter().enumerate() {
            let name = format!("backbone.enc{s}");
            let (cin, stride) = if s == 0 { (config.in_channels, 1) } else { (ch[s - 1], 2) };
            let entry = ConvNormAct::new(layout, &format!("{name}.entry"), cin, c, stride, g);
            let res = blocks(layout, &name, c);
            encoder.push(EncoderStage { entry, blocks: res });
        }
        let mut decoder = Vec::with_capacity(ch.len().saturating_sub(1));
        for s in (1..ch.len()).rev() {
            let name = format!("backbone.dec{}", s - 1);
            let c = ch[s - 1];
            let up = ConvTranspose2x2::new(layout, &format!("{name}.up"), ch[s], c);
            let fuse = ConvNormAct::new(layout, &format!("{name}.fuse"), 2 * c, c, 1, g);
            let res = blocks(layout, &name, c);
            decoder.push(DecoderStage { up, fuse, blocks: res });
        }
        let out = Conv2d::new(layout, "backbone.out", ch[0], config.decoder_out_channels, 1, 1, 0);
        Backbone { config: config.clone(), encoder, decoder, out }
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// Name of one convolution weight deep in the backbone (used by gradient checks).
    pub fn probe_parameter(&self) -> &'static str {
        "backbone.enc0.entry.conv.weight"
    }

    pub fn forward<S: Scalar>(&self, p: &[S], l: &ParamLayout, x: &FeatureMap<S>) -> BackboneOutput<S> {
        let mut skips: Vec<FeatureMap<S>> = Vec::with_capacity(self.encoder.len());
        for (s, stage) in self.encoder.iter().enumerate() {
            let input = if s == 0 { x } else { &skips[s - 1] };
            let h = run_stage(&stage.entry, &stage.blocks, p, l, input);
            skips.push(h);
        }
        let bottleneck = skips.last().unwrap().clone();
        let mut h = bottleneck.clone();
        for (i, stage) in self.decoder.iter().enumerate() {
            let skip = &skips[self.encoder.len() - 2 - i];
            let up = stage.up.forward(p, l, &h);
            let cat = FeatureMap::concat(&up, skip);
            h = run_stage(&stage.fuse, &stage.blocks, p, l, &cat);
        }
        let decoded = self.out.forward(p, l, &h);
        BackboneOutput { bottleneck, decoded }
    }

    pub fn forward_train<S: Scalar>(
        &self,
        p: &[S],
        l: &ParamLayout,
        x: &FeatureMap<S>,
    ) -> (BackboneOutput<S>, BackboneCache<S>) {
        let mut encoder: Vec<StageCache<S>> = Vec::with_capacity(self.encoder.len());
        for stage in &self.encoder {
            let input = encoder.last().map(|c| c.output().clone()).unwrap_or_else(|| x.clone());
            encoder.push(train_stage(&stage.entry, &stage.blocks, p, l, input));
        }
        let bottleneck = encoder.last().unwrap().output().clone();
        let mut decoder: Vec<DecoderCache<S>> = Vec::with_capacity(self.decoder.len());
        let mut h = bottleneck.clone();
        for (i, stage) in self.decoder.iter().enumerate() {
            let skip = encoder[self.encoder.len() - 2 - i].output();
            let up = stage.up.forward(p, l, &h);
            let cat = FeatureMap::concat(&up, skip);
            let sc = train_stage(&stage.fuse, &stage.blocks, p, l, cat);
            let next = sc.output().clone();
            decoder.push(DecoderCache { up_input: h, stage: sc });
            h = next;
        }
        let decoded = self.out.forward(p, l, &h);
        (BackboneOutput { bottleneck, decoded }, BackboneCache { encoder, decoder, head_input: h })
    }

    /// Accumulate parameter gradients given gradients of both outputs.
    pub fn backward<S: Scalar>(
        &self,
        p: &[S],
        l: &ParamLayout,
        cache: &BackboneCache<S>,
        d_bottleneck: &FeatureMap<S>,
        d_decoded: &FeatureMap<S>,
        grads: &mut [S],
    ) {
        let n_enc = self.encoder.len();
        let mut d_skips: Vec<Option<FeatureMap<S>>> = (0..n_enc).map(|_| None).collect();
        let mut dh = self.out.backward(p, l, &cache.head_input, d_decoded, grads);
        for (i, (stage, dc)) in self.decoder.iter().zip(&cache.decoder).enumerate().rev() {
            let dcat = back_stage(&stage.fuse, &stage.blocks, p, l, &dc.stage, dh, grads);
            let (dup, dskip) = dcat.split(stage.up.out_channels);
            d_skips[n_enc - 2 - i] = Some(dskip);
            dh = stage.up.backward(p, l, &dc.up_input, &dup, grads);
        }
        // With a single stage the head input is the bottleneck, so `dh` is already its gradient.
        let mut d = dh;
        d.add_assign(d_bottleneck);
        for s in (0..n_enc).rev() {
            if let Some(extra) = d_skips[s].take() {
                d.add_assign(&extra);
            }
            let stage = &self.encoder[s];
            d = back_stage(&stage.entry, &stage.blocks, p, l, &cache.encoder[s], d, grads);
        }
    }
}
