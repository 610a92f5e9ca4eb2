//! The segmentation network: residual U-Net backbone, class-aware controller
//! and the dynamic head whose kernels the controller emits per sample.
//!
//! ```text
//! image ──► encoder ──► F ──GAP──┐
//!              │                 ├─► controller ──► ω = (ω1, ω2, ω3)
//!              ▼          T_k ───┘                     │
//!           decoder ──► M ─────────────────────────► head ──► logits
//! ```

mod backbone;
mod checkpoint;
mod config;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use backbone::{Backbone, BackboneCache, BackboneOutput};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{BackboneConfig, ControllerConfig, HeadLayout, NetConfig};

use crate::data::Mask;
use crate::error::{bail, Result};
use crate::nn::{gemm, FeatureMap, Init, MatMut, MatRef, ParamId, ParamLayout, Scalar};
use crate::taxonomy::TaskVector;

/// Flat head parameters emitted by the controller for one sample.
///
/// Layout: `w1, b1, w2, b2, w3, b3`, each weight row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicKernels<S> {
    layout: HeadLayout,
    values: Vec<S>,
}

impl<S: Scalar> DynamicKernels<S> {
    pub fn new(layout: HeadLayout, values: Vec<S>) -> Result<Self> {
        if values.len() != layout.kernel_count() {
            bail!(Shape, "expected {} kernel values, got {}", layout.kernel_count(), values.len());
        }
        Ok(DynamicKernels { layout, values })
    }

    pub fn zeros(layout: HeadLayout) -> Self {
        DynamicKernels { layout, values: alloc::vec![S::ZERO; layout.kernel_count()] }
    }

    pub fn layout(&self) -> HeadLayout {
        self.layout
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(weight, bias)` of head layer `i` (0-based).
    pub fn layer(&self, i: usize) -> (&[S], &[S]) {
        let (w, b) = self.layout.offsets()[i];
        let (cin, cout) = self.layout.layer_shapes()[i];
        (&self.values[w..w + cin * cout], &self.values[b..b + cout])
    }

    pub fn layer_mut(&mut self, i: usize) -> (&mut [S], &mut [S]) {
        let (w, b) = self.layout.offsets()[i];
        let (cin, cout) = self.layout.layer_shapes()[i];
        let (head, tail) = self.values.split_at_mut(b);
        (&mut head[w..w + cin * cout], &mut tail[..cout])
    }
}

/// Two-channel logits `[background, foreground]` at full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S> {
    logits: FeatureMap<S>,
}

impl<S: Scalar> Prediction<S> {
    pub fn from_logits(logits: FeatureMap<S>) -> Result<Self> {
        if logits.channels() != 2 {
            bail!(Shape, "prediction needs 2 channels, got {}", logits.channels());
        }
        Ok(Prediction { logits })
    }

    pub fn logits(&self) -> &FeatureMap<S> {
        &self.logits
    }

    pub fn width(&self) -> usize {
        self.logits.width()
    }

    pub fn height(&self) -> usize {
        self.logits.height()
    }

    /// Foreground probability of the two-channel softmax, `σ(l_fg − l_bg)`.
    pub fn foreground_probability(&self) -> Vec<S> {
        self.logits
            .channel(0)
            .iter()
            .zip(self.logits.channel(1))
            .map(|(&bg, &fg)| S::ONE / (S::ONE + (bg - fg).exp()))
            .collect()
    }

    /// Foreground where its probability exceeds 0.5.
    pub fn to_mask(&self) -> Mask {
        let (bg, fg) = (self.logits.channel(0), self.logits.channel(1));
        let w = self.width();
        Mask::from_fn(w, self.height(), |x, y| fg[y * w + x] > bg[y * w + x])
    }
}

/// Single 1×1 convolution over `GAP(F) || T_k`.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    weight: ParamId,
    bias: ParamId,
}

impl Controller {
    pub fn new(layout: &mut ParamLayout, config: ControllerConfig) -> Self {
        let fan_in = config.input_width();
        let weight = layout.add(
            "controller.weight",
            &[config.kernel_budget, fan_in, 1, 1],
            Init::Scaled { fan_in, gain: 1.0 },
        );
        let bias = layout.add("controller.bias", &[config.kernel_budget], Init::Zeros);
        Controller { config, weight, bias }
    }

    pub fn config(&self) -> ControllerConfig {
        self.config
    }

    /// Controller input: pooled features followed by the task one-hot.
    pub fn input<S: Scalar>(&self, bottleneck: &FeatureMap<S>, task: &TaskVector) -> Result<Vec<S>> {
        if task.len() != self.config.task_dim {
            bail!(Shape, "task vector has length {}, controller expects {}", task.len(), self.config.task_dim);
        }
        if bottleneck.channels() != self.config.feature_dim {
            bail!(
                Shape,
                "bottleneck has {} channels, controller expects {}",
                bottleneck.channels(),
                self.config.feature_dim
            );
        }
        let mut z = bottleneck.global_average();
        z.extend(task.entries().iter().map(|&v| S::from_f64(v as f64)));
        Ok(z)
    }

    pub fn apply<S: Scalar>(&self, params: &[S], layout: &ParamLayout, z: &[S]) -> Vec<S> {
        let n = self.config.kernel_budget;
        let mut out: Vec<S> = params[layout.range(self.bias)].to_vec();
        gemm(
            S::ONE,
            MatRef::row_major(&params[layout.range(self.weight)], n, z.len()),
            MatRef::row_major(z, z.len(), 1),
            S::ONE,
            MatMut::row_major(&mut out, n, 1),
        );
        out
    }

    /// Accumulates controller gradients and returns the gradient of the input vector.
    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        layout: &ParamLayout,
        z: &[S],
        d_kernels: &[S],
        grads: &mut [S],
    ) -> Vec<S> {
        let n = self.config.kernel_budget;
        for (g, &d) in grads[layout.range(self.bias)].iter_mut().zip(d_kernels) {
            *g += d;
        }
        gemm(
            S::ONE,
            MatRef::row_major(d_kernels, n, 1),
            MatRef::row_major(z, 1, z.len()),
            S::ONE,
            MatMut::row_major(&mut grads[layout.range(self.weight)], n, z.len()),
        );
        let mut dz = alloc::vec![S::ZERO; z.len()];
        gemm(
            S::ONE,
            MatRef::row_major(&params[layout.range(self.weight)], n, z.len()).t(),
            MatRef::row_major(d_kernels, n, 1),
            S::ZERO,
            MatMut::row_major(&mut dz, z.len(), 1),
        );
        dz
    }
}

/// Post-activation hidden maps of the dynamic head.
pub struct HeadCache<S> {
    hidden1: FeatureMap<S>,
    hidden2: FeatureMap<S>,
}

fn pointwise<S: Scalar>(weight: &[S], bias: &[S], cin: usize, x: &FeatureMap<S>, relu: bool) -> FeatureMap<S> {
    let cout = bias.len();
    let plane = x.plane();
    let mut y = FeatureMap::zeros(cout, x.height(), x.width());
    gemm(
        S::ONE,
        MatRef::row_major(weight, cout, cin),
        MatRef::row_major(x.data(), cin, plane),
        S::ZERO,
        MatMut::row_major(y.data_mut(), cout, plane),
    );
    for (c, &b) in bias.iter().enumerate() {
        for v in y.channel_mut(c) {
            *v += b;
            if relu && *v < S::ZERO {
                *v = S::ZERO;
            }
        }
    }
    y
}

fn pointwise_backward<S: Scalar>(
    weight: &[S],
    cin: usize,
    x: &FeatureMap<S>,
    dy: &FeatureMap<S>,
    dw: &mut [S],
    db: &mut [S],
) -> FeatureMap<S> {
    let cout = dy.channels();
    let plane = x.plane();
    for (c, g) in db.iter_mut().enumerate() {
        *g += dy.channel(c).iter().copied().sum::<S>();
    }
    let dym = MatRef::row_major(dy.data(), cout, plane);
    gemm(S::ONE, dym, MatRef::row_major(x.data(), cin, plane).t(), S::ONE, MatMut::row_major(dw, cout, cin));
    let mut dx = FeatureMap::zeros(cin, x.height(), x.width());
    gemm(
        S::ONE,
        MatRef::row_major(weight, cout, cin).t(),
        dym,
        S::ZERO,
        MatMut::row_major(dx.data_mut(), cin, plane),
    );
    dx
}

/// Three chained 1×1 convolutions with sample-specific kernels; ReLU after
/// the first two layers, none after the last.
pub fn head_forward<S: Scalar>(
    decoded: &FeatureMap<S>,
    kernels: &DynamicKernels<S>,
) -> Result<(Prediction<S>, HeadCache<S>)> {
    let layout = kernels.layout();
    if decoded.channels() != layout.in_channels {
        bail!(
            Shape,
            "decoder output has {} channels, head layer 1 expects {}",
            decoded.channels(),
            layout.in_channels
        );
    }
    let shapes = layout.layer_shapes();
    let (w1, b1) = kernels.layer(0);
    let hidden1 = pointwise(w1, b1, shapes[0].0, decoded, true);
    let (w2, b2) = kernels.layer(1);
    let hidden2 = pointwise(w2, b2, shapes[1].0, &hidden1, true);
    let (w3, b3) = kernels.layer(2);
    let logits = pointwise(w3, b3, shapes[2].0, &hidden2, false);
    Ok((Prediction::from_logits(logits)?, HeadCache { hidden1, hidden2 }))
}

/// Returns `(d_kernels, d_decoded)`.
pub fn head_backward<S: Scalar>(
    decoded: &FeatureMap<S>,
    kernels: &DynamicKernels<S>,
    cache: &HeadCache<S>,
    d_logits: &FeatureMap<S>,
) -> (DynamicKernels<S>, FeatureMap<S>) {
    let layout = kernels.layout();
    let shapes = layout.layer_shapes();
    let mut grads = DynamicKernels::zeros(layout);
    let mut dh2 = {
        let (dw, db) = grads.layer_mut(2);
        pointwise_backward(kernels.layer(2).0, shapes[2].0, &cache.hidden2, d_logits, dw, db)
    };
    crate::nn::relu_backward_in_place(&cache.hidden2, &mut dh2);
    let mut dh1 = {
        let (dw, db) = grads.layer_mut(1);
        pointwise_backward(kernels.layer(1).0, shapes[1].0, &cache.hidden1, &dh2, dw, db)
    };
    crate::nn::relu_backward_in_place(&cache.hidden1, &mut dh1);
    let dm = {
        let (dw, db) = grads.layer_mut(0);
        pointwise_backward(kernels.layer(0).0, shapes[0].0, decoded, &dh1, dw, db)
    };
    (grads, dm)
}

/// Everything one training forward pass keeps for its backward pass.
pub struct TrainCache<S> {
    backbone: BackboneCache<S>,
    outputs: BackboneOutput<S>,
    controller_input: Vec<S>,
    kernels: DynamicKernels<S>,
    head: HeadCache<S>,
}

/// One network instance serving every task through its task vector.
#[derive(Debug, Clone)]
pub struct DynamicHeadNet<S = f32> {
    config: NetConfig,
    layout: ParamLayout,
    backbone: Backbone,
    controller: Controller,
    params: Vec<S>,
}

fn build_modules(config: &NetConfig) -> Result<(ParamLayout, Backbone, Controller)> {
    config.validate()?;
    let mut layout = ParamLayout::new();
    let backbone = Backbone::new(&mut layout, &config.backbone);
    let controller = Controller::new(&mut layout, config.controller());
    let emitted = layout.find("controller.bias").map(|s| s.len).unwrap_or(0);
    if emitted != config.head().kernel_count() {
        bail!(Shape, "controller emits {emitted} values but the head needs {}", config.head().kernel_count());
    }
    Ok((layout, backbone, controller))
}

impl<S: Scalar> DynamicHeadNet<S> {
    /// Fresh network with seeded random initialization.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let (layout, backbone, controller) = build_modules(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout.initialize(&mut rng);
        Ok(DynamicHeadNet { config, layout, backbone, controller, params })
    }

    /// Rebuild a network from a flat parameter buffer in layout order.
    pub fn from_params(config: NetConfig, params: Vec<S>) -> Result<Self> {
        let (layout, backbone, controller) = build_modules(&config)?;
        if params.len() != layout.total() {
            bail!(Shape, "expected {} parameters, got {}", layout.total(), params.len());
        }
        Ok(DynamicHeadNet { config, layout, backbone, controller, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn head_layout(&self) -> HeadLayout {
        self.config.head()
    }

    pub fn input_size(&self) -> usize {
        self.config.backbone.input_size
    }

    pub fn cast<T: Scalar>(&self) -> DynamicHeadNet<T> {
        DynamicHeadNet {
            config: self.config.clone(),
            layout: self.layout.clone(),
            backbone: self.backbone.clone(),
            controller: self.controller.clone(),
            params: self.params.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    /// Hex digest over the parameter values.
    pub fn weight_digest(&self) -> String {
        digest_values(&self.params)
    }

    fn check_input(&self, x: &FeatureMap<S>) -> Result<()> {
        let size = self.input_size();
        if x.channels() != self.config.backbone.in_channels || x.height() != size || x.width() != size {
            bail!(
                Shape,
                "input is {}x{}x{}, network expects {}x{size}x{size}",
                x.channels(),
                x.height(),
                x.width(),
                self.config.backbone.in_channels
            );
        }
        Ok(())
    }

    pub fn backbone_forward(&self, x: &FeatureMap<S>) -> Result<BackboneOutput<S>> {
        self.check_input(x)?;
        Ok(self.backbone.forward(&self.params, &self.layout, x))
    }

    /// `ω = φ(GAP(F) || T_k)`
    pub fn controller_forward(&self, bottleneck: &FeatureMap<S>, task: &TaskVector) -> Result<DynamicKernels<S>> {
        let z = self.controller.input(bottleneck, task)?;
        DynamicKernels::new(self.head_layout(), self.controller.apply(&self.params, &self.layout, &z))
    }

    pub fn head_forward(&self, decoded: &FeatureMap<S>, kernels: &DynamicKernels<S>) -> Result<Prediction<S>> {
        head_forward(decoded, kernels).map(|(p, _)| p)
    }

    pub fn forward(&self, x: &FeatureMap<S>, task: &TaskVector) -> Result<Prediction<S>> {
        let out = self.backbone_forward(x)?;
        let kernels = self.controller_forward(&out.bottleneck, task)?;
        self.head_forward(&out.decoded, &kernels)
    }

    /// One backbone pass shared by several tasks; identical to calling
    /// [`DynamicHeadNet::forward`] once per task.
    pub fn forward_tasks(&self, x: &FeatureMap<S>, tasks: &[TaskVector]) -> Result<Vec<Prediction<S>>> {
        let out = self.backbone_forward(x)?;
        tasks
            .iter()
            .map(|t| {
                let kernels = self.controller_forward(&out.bottleneck, t)?;
                self.head_forward(&out.decoded, &kernels)
            })
            .collect()
    }

    pub fn forward_train(&self, x: &FeatureMap<S>, task: &TaskVector) -> Result<(Prediction<S>, TrainCache<S>)> {
        self.check_input(x)?;
        let (outputs, backbone) = self.backbone.forward_train(&self.params, &self.layout, x);
        let controller_input = self.controller.input(&outputs.bottleneck, task)?;
        let kernels = DynamicKernels::new(
            self.head_layout(),
            self.controller.apply(&self.params, &self.layout, &controller_input),
        )?;
        let (prediction, head) = head_forward(&outputs.decoded, &kernels)?;
        Ok((prediction, TrainCache { backbone, outputs, controller_input, kernels, head }))
    }

    /// Accumulate `d loss / d params` into `grads` given the logit gradient.
    pub fn backward(&self, cache: &TrainCache<S>, d_logits: &FeatureMap<S>, grads: &mut [S]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer length");
        let (d_kernels, d_decoded) = head_backward(&cache.outputs.decoded, &cache.kernels, &cache.head, d_logits);
        let dz = self.controller.backward(
            &self.params,
            &self.layout,
            &cache.controller_input,
            d_kernels.as_slice(),
            grads,
        );
        let f = &cache.outputs.bottleneck;
        let inv = S::from_f64(1.0 / f.plane() as f64);
        let mut d_bottleneck = FeatureMap::zeros(f.channels(), f.height(), f.width());
        for c in 0..f.channels() {
            let g = dz[c] * inv;
            for v in d_bottleneck.channel_mut(c) {
                *v = g;
            }
        }
        self.backbone.backward(&self.params, &self.layout, &cache.backbone, &d_bottleneck, &d_decoded, grads);
    }
}

pub(crate) fn digest_values<S: Scalar>(values: &[S]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_f64().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::encode_task;
    use rand::Rng;

    fn small() -> NetConfig {
        NetConfig::reduced(16, &[4, 8])
    }

    fn random_input(seed: u64, size: usize) -> FeatureMap<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_vec(3, size, size, (0..3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_kernels_give_uniform_probability() {
        let layout = NetConfig::default().head();
        let m = random_input(1, 8);
        let mut m8 = FeatureMap::zeros(8, 8, 8);
        for c in 0..8 {
            m8.channel_mut(c).copy_from_slice(m.channel(c % 3));
        }
        let (pred, _) = head_forward(&m8, &DynamicKernels::<f64>::zeros(layout)).unwrap();
        assert!(pred.logits().data().iter().all(|&v| v == 0.0));
        assert!(pred.foreground_probability().iter().all(|&p| (p - 0.5).abs() < 1e-7));
    }

    #[test]
    fn identity_layers_with_zero_last_layer_give_zero_logits() {
        let layout = NetConfig::default().head();
        let mut k = DynamicKernels::<f64>::zeros(layout);
        for layer in 0..2 {
            let (w, _) = k.layer_mut(layer);
            for i in 0..8 {
                w[i * 8 + i] = 1.0;
            }
        }
        let m = FeatureMap::filled(8, 4, 4, 0.7);
        let (pred, _) = head_forward(&m, &k).unwrap();
        assert!(pred.logits().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_rejects_channel_mismatch() {
        let layout = NetConfig::default().head();
        let m = FeatureMap::<f64>::zeros(5, 4, 4);
        assert!(head_forward(&m, &DynamicKernels::zeros(layout)).is_err());
    }

    #[test]
    fn gap_of_constant_map_is_the_constant() {
        let net = DynamicHeadNet::<f64>::new(small(), 0).unwrap();
        let mut f = FeatureMap::zeros(8, 2, 2);
        for c in 0..8 {
            for v in f.channel_mut(c) {
                *v = c as f64 * 0.5;
            }
        }
        let z = net.controller().input(&f, &encode_task(2, 14).unwrap()).unwrap();
        for c in 0..8 {
            assert_eq!(z[c], c as f64 * 0.5);
        }
        assert_eq!(&z[8..], &[0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn different_tasks_give_different_kernels() {
        let net = DynamicHeadNet::<f64>::new(small(), 3).unwrap();
        let out = net.backbone_forward(&random_input(4, 16)).unwrap();
        let a = net.controller_forward(&out.bottleneck, &encode_task(0, 14).unwrap()).unwrap();
        let b = net.controller_forward(&out.bottleneck, &encode_task(5, 14).unwrap()).unwrap();
        assert_eq!(a.len(), net.head_layout().kernel_count());
        assert!(a.as_slice().iter().zip(b.as_slice()).any(|(x, y)| x != y));
        assert!(net.controller_forward(&out.bottleneck, &encode_task(0, 13).unwrap()).is_err());
    }

    #[test]
    fn forward_is_deterministic_and_shapes_hold() {
        let net = DynamicHeadNet::<f32>::new(small(), 5).unwrap();
        let x = random_input(6, 16).cast::<f32>();
        let t = encode_task(7, 14).unwrap();
        let a = net.forward(&x, &t).unwrap();
        let b = net.forward(&x, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.logits().channels(), a.height(), a.width()), (2, 16, 16));
        let shared = net.forward_tasks(&x, &[t.clone(), encode_task(1, 14).unwrap()]).unwrap();
        assert_eq!(shared[0], a);
        let (trained, _) = net.forward_train(&x, &t).unwrap();
        assert_eq!(trained, a);
        assert!(net.forward(&random_input(6, 8).cast::<f32>(), &t).is_err());
    }

    #[test]
    fn default_network_audits_head_budget() {
        let cfg = NetConfig::default();
        let (layout, _, _) = build_modules(&cfg).unwrap();
        assert_eq!(layout.find("controller.bias").unwrap().len, 162);
        assert_eq!(layout.find("controller.weight").unwrap().shape, alloc::vec![162, 526, 1, 1]);
    }

    /// Full-model gradient against central differences on a few coordinates.
    #[test]
    fn backward_matches_finite_differences() {
        let net = DynamicHeadNet::<f64>::new(NetConfig::reduced(8, &[4, 8]), 11).unwrap();
        let x = random_input(12, 8);
        let t = encode_task(4, 14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let weights: Vec<f64> = (0..2 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |n: &DynamicHeadNet<f64>| -> f64 {
            let p = n.forward(&x, &t).unwrap();
            p.logits().data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward_train(&x, &t).unwrap();
        let mut grads = alloc::vec![0.0; net.params().len()];
        net.backward(&cache, &FeatureMap::from_vec(2, 8, 8, weights.clone()), &mut grads);
        let total = net.params().len();
        for idx in (0..total).step_by(total / 40 + 1).chain([total - 1, total - 200]) {
            let h = 1e-6;
            let mut plus = net.clone();
            plus.params_mut()[idx] += h;
            let mut minus = net.clone();
            minus.params_mut()[idx] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (fd - grads[idx]).abs() / (fd.abs().max(grads[idx].abs()).max(1e-4));
            assert!(err < 1e-4, "{}: fd {fd} vs analytic {}", idx, grads[idx]);
        }
    }
}
