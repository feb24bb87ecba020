//! Desk-scale differentiable segmentation heads built around the pooling
//! layer.
//!
//! Three topologies wire the layer into a network:
//!
//! * **V1** — pooling as postprocessing: per-pixel class scores are pooled
//!   over superpixels and broadcast back.
//! * **V2** — pooled features to classes: features are pooled first, a
//!   dense layer maps each superpixel to class scores, broadcast back.
//! * **V3** — hybrid: the pixel branch and the superpixel branch are
//!   combined in a pixel-wise sum, letting the network learn pixel-wise
//!   corrections to the superpixel labels.

mod train;

pub use train::{predict_classes, train_toy, TrainSample, TrainStep, TrainTrace};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pooling::{pool_backward, pool_forward, unpool_backward, unpool_broadcast};
use crate::tensor::{FeatureImage, LabelMap, PoolMode, PooledFeatures};

/// A fully connected map applied independently per pixel or per superpixel.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    out_dim: usize,
    in_dim: usize,
    /// `out_dim x in_dim`, row-major.
    weights: Vec<f32>,
    bias: Vec<f32>,
}

/// Gradients of a dense layer's parameters, same layout as the layer.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseLayer {
    pub fn new(out_dim: usize, in_dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weights.len() != out_dim * in_dim || bias.len() != out_dim {
            return Err(Error::Dimension(format!(
                "dense layer {out_dim}x{in_dim} needs {} weights and {out_dim} biases, got {} and {}",
                out_dim * in_dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("dense parameters must be finite".into()));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights,
            bias,
        })
    }

    /// Uniform init in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`.
    pub fn seeded(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f32).sqrt();
        let weights = (0..out_dim * in_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            out_dim,
            in_dim,
            weights,
            bias,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// `y[o,j] = sum_i w[o,i] x[i,j] + b[o]` over `n` columns.
    fn affine(&self, x: &[f32], n: usize) -> Vec<f32> {
        let mut y = vec![0.0f32; self.out_dim * n];
        for o in 0..self.out_dim {
            let row = &mut y[o * n..(o + 1) * n];
            row.fill(self.bias[o]);
            for i in 0..self.in_dim {
                let w = self.weights[o * self.in_dim + i];
                let col = &x[i * n..(i + 1) * n];
                for (slot, &v) in row.iter_mut().zip(col) {
                    *slot += w * v;
                }
            }
        }
        y
    }

    /// Backward of [`Self::affine`]: input gradient plus parameter
    /// gradients (accumulated in f64).
    fn affine_backward(&self, x: &[f32], grad_y: &[f32], n: usize) -> (Vec<f32>, DenseGrads) {
        let mut grad_x = vec![0.0f32; self.in_dim * n];
        let mut grad_w = vec![0.0f64; self.out_dim * self.in_dim];
        let mut grad_b = vec![0.0f64; self.out_dim];
        for o in 0..self.out_dim {
            let gy = &grad_y[o * n..(o + 1) * n];
            grad_b[o] += gy.iter().map(|&g| g as f64).sum::<f64>();
            for i in 0..self.in_dim {
                let w = self.weights[o * self.in_dim + i];
                let col = &x[i * n..(i + 1) * n];
                let gx = &mut grad_x[i * n..(i + 1) * n];
                let mut dw = 0.0f64;
                for j in 0..n {
                    gx[j] += w * gy[j];
                    dw += gy[j] as f64 * col[j] as f64;
                }
                grad_w[o * self.in_dim + i] += dw;
            }
        }
        (
            grad_x,
            DenseGrads {
                weights: grad_w.iter().map(|&g| g as f32).collect(),
                bias: grad_b.iter().map(|&g| g as f32).collect(),
            },
        )
    }

    fn forward_image(&self, x: &FeatureImage) -> Result<FeatureImage> {
        if x.channels() != self.in_dim {
            return Err(Error::Dimension(format!(
                "dense layer expects {} input channels, image has {}",
                self.in_dim,
                x.channels()
            )));
        }
        FeatureImage::new(
            x.shape().clone(),
            self.out_dim,
            self.affine(x.data(), x.pixel_count()),
        )
    }

    fn forward_pooled(&self, x: &PooledFeatures) -> Result<PooledFeatures> {
        if x.channels() != self.in_dim {
            return Err(Error::Dimension(format!(
                "dense layer expects {} input channels, pooled array has {}",
                self.in_dim,
                x.channels()
            )));
        }
        PooledFeatures::new(
            self.out_dim,
            x.num_labels(),
            self.affine(x.data(), x.num_labels()),
        )
    }

    pub(crate) fn apply_update(&mut self, grads: &DenseGrads, lr: f32) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grads.bias) {
            *b -= lr * g;
        }
    }
}

/// Which integration design a head implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    V1,
    V2,
    V3,
}

/// A segmentation head: a per-pixel branch and/or a per-superpixel branch
/// around the pooling layer, per [`TopologyKind`].
#[derive(Debug, Clone)]
pub struct SegHead {
    kind: TopologyKind,
    pool_mode: PoolMode,
    pub(crate) pixel_branch: Option<DenseLayer>,
    pub(crate) sp_branch: Option<DenseLayer>,
}

impl SegHead {
    /// Validates branch presence against the topology: V1 has only the
    /// pixel branch, V2 only the superpixel branch, V3 both.
    pub fn new(
        kind: TopologyKind,
        pixel_branch: Option<DenseLayer>,
        sp_branch: Option<DenseLayer>,
        pool_mode: PoolMode,
    ) -> Result<Self> {
        let (want_pixel, want_sp) = match kind {
            TopologyKind::V1 => (true, false),
            TopologyKind::V2 => (false, true),
            TopologyKind::V3 => (true, true),
        };
        if pixel_branch.is_some() != want_pixel || sp_branch.is_some() != want_sp {
            return Err(Error::Parameter(format!(
                "{kind:?} expects pixel_branch={want_pixel}, sp_branch={want_sp}"
            )));
        }
        if let (Some(p), Some(s)) = (&pixel_branch, &sp_branch) {
            if p.out_dim() != s.out_dim() || p.in_dim() != s.in_dim() {
                return Err(Error::Dimension(
                    "V3 branches must share input and output dimensions".into(),
                ));
            }
        }
        Ok(Self {
            kind,
            pool_mode,
            pixel_branch,
            sp_branch,
        })
    }

    /// A head with reproducible uniform-initialized parameters.
    pub fn seeded(
        kind: TopologyKind,
        in_channels: usize,
        num_classes: usize,
        pool_mode: PoolMode,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixel_branch = matches!(kind, TopologyKind::V1 | TopologyKind::V3)
            .then(|| DenseLayer::seeded(num_classes, in_channels, &mut rng));
        let sp_branch = matches!(kind, TopologyKind::V2 | TopologyKind::V3)
            .then(|| DenseLayer::seeded(num_classes, in_channels, &mut rng));
        Self {
            kind,
            pool_mode,
            pixel_branch,
            sp_branch,
        }
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn pool_mode(&self) -> PoolMode {
        self.pool_mode
    }

    pub fn num_classes(&self) -> usize {
        self.pixel_branch
            .as_ref()
            .or(self.sp_branch.as_ref())
            .map(DenseLayer::out_dim)
            .expect("a head always has at least one branch")
    }

    pub fn in_channels(&self) -> usize {
        self.pixel_branch
            .as_ref()
            .or(self.sp_branch.as_ref())
            .map(DenseLayer::in_dim)
            .expect("a head always has at least one branch")
    }

    pub fn pixel_branch(&self) -> Option<&DenseLayer> {
        self.pixel_branch.as_ref()
    }

    pub fn sp_branch(&self) -> Option<&DenseLayer> {
        self.sp_branch.as_ref()
    }
}

/// Gradients for every parameter of a head.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub pixel_branch: Option<DenseGrads>,
    pub sp_branch: Option<DenseGrads>,
}

fn add_images(a: &FeatureImage, b: &FeatureImage) -> FeatureImage {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    FeatureImage::new(a.shape().clone(), a.channels(), data)
        .expect("sums of finite scores are finite")
}

/// Per-pixel class scores (`num_classes x P`) for the head's topology.
pub fn head_forward(
    head: &SegHead,
    features: &FeatureImage,
    seg: &LabelMap,
) -> Result<FeatureImage> {
    match head.kind {
        TopologyKind::V1 => {
            let scores = head
                .pixel_branch
                .as_ref()
                .unwrap()
                .forward_image(features)?;
            let (pooled, _) = pool_forward(&scores, seg, head.pool_mode)?;
            unpool_broadcast(&pooled, seg)
        }
        TopologyKind::V2 => {
            let (pooled, _) = pool_forward(features, seg, head.pool_mode)?;
            let sp_scores = head.sp_branch.as_ref().unwrap().forward_pooled(&pooled)?;
            unpool_broadcast(&sp_scores, seg)
        }
        TopologyKind::V3 => {
            let pixel_scores = head
                .pixel_branch
                .as_ref()
                .unwrap()
                .forward_image(features)?;
            let (pooled, _) = pool_forward(features, seg, head.pool_mode)?;
            let sp_scores = head.sp_branch.as_ref().unwrap().forward_pooled(&pooled)?;
            let sp_up = unpool_broadcast(&sp_scores, seg)?;
            Ok(add_images(&pixel_scores, &sp_up))
        }
    }
}

/// Chain rule through the head: gradient with respect to the input
/// features plus gradients for every branch parameter. The forward pass is
/// recomputed internally to rebuild the pooling caches.
pub fn head_backward(
    head: &SegHead,
    features: &FeatureImage,
    seg: &LabelMap,
    grad_out: &FeatureImage,
) -> Result<(FeatureImage, HeadGrads)> {
    if grad_out.channels() != head.num_classes() || grad_out.shape() != features.shape() {
        return Err(Error::Dimension(format!(
            "upstream gradient is {}x{:?}, expected {}x{:?}",
            grad_out.channels(),
            grad_out.shape().dims(),
            head.num_classes(),
            features.shape().dims()
        )));
    }
    match head.kind {
        TopologyKind::V1 => {
            let branch = head.pixel_branch.as_ref().unwrap();
            let scores = branch.forward_image(features)?;
            let (_, cache) = pool_forward(&scores, seg, head.pool_mode)?;
            let grad_pooled = unpool_backward(grad_out, seg)?;
            let grad_scores = pool_backward(&grad_pooled, &cache, seg)?;
            let (grad_feat, grads) =
                branch.affine_backward(features.data(), grad_scores.data(), features.pixel_count());
            Ok((
                FeatureImage::new(features.shape().clone(), features.channels(), grad_feat)?,
                HeadGrads {
                    pixel_branch: Some(grads),
                    sp_branch: None,
                },
            ))
        }
        TopologyKind::V2 => {
            let branch = head.sp_branch.as_ref().unwrap();
            let (pooled, cache) = pool_forward(features, seg, head.pool_mode)?;
            let grad_sp_scores = unpool_backward(grad_out, seg)?;
            let (grad_pooled, grads) =
                branch.affine_backward(pooled.data(), grad_sp_scores.data(), pooled.num_labels());
            let grad_pooled =
                PooledFeatures::new(features.channels(), seg.num_labels(), grad_pooled)?;
            let grad_feat = pool_backward(&grad_pooled, &cache, seg)?;
            Ok((
                grad_feat,
                HeadGrads {
                    pixel_branch: None,
                    sp_branch: Some(grads),
                },
            ))
        }
        TopologyKind::V3 => {
            let pixel = head.pixel_branch.as_ref().unwrap();
            let sp = head.sp_branch.as_ref().unwrap();
            // Pixel path.
            let (grad_feat_pixel, pixel_grads) =
                pixel.affine_backward(features.data(), grad_out.data(), features.pixel_count());
            // Superpixel path.
            let (pooled, cache) = pool_forward(features, seg, head.pool_mode)?;
            let grad_sp_scores = unpool_backward(grad_out, seg)?;
            let (grad_pooled, sp_grads) =
                sp.affine_backward(pooled.data(), grad_sp_scores.data(), pooled.num_labels());
            let grad_pooled =
                PooledFeatures::new(features.channels(), seg.num_labels(), grad_pooled)?;
            let grad_feat_sp = pool_backward(&grad_pooled, &cache, seg)?;

            let grad_feat = FeatureImage::new(
                features.shape().clone(),
                features.channels(),
                grad_feat_pixel
                    .iter()
                    .zip(grad_feat_sp.data())
                    .map(|(a, b)| a + b)
                    .collect(),
            )?;
            Ok((
                grad_feat,
                HeadGrads {
                    pixel_branch: Some(pixel_grads),
                    sp_branch: Some(sp_grads),
                },
            ))
        }
    }
}

/// Mean per-pixel softmax cross-entropy and its gradient
/// `(softmax - onehot) / P`.
pub fn softmax_xent(scores: &FeatureImage, targets: &[i32]) -> Result<(f32, FeatureImage)> {
    let classes = scores.channels();
    let pixels = scores.pixel_count();
    if targets.len() != pixels {
        return Err(Error::Dimension(format!(
            "{} targets for {pixels} pixels",
            targets.len()
        )));
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f32; classes * pixels];
    let inv_p = 1.0 / pixels as f64;
    for (i, &t) in targets.iter().enumerate() {
        if t < 0 || t as usize >= classes {
            return Err(Error::Parameter(format!(
                "target {t} outside [0, {classes})"
            )));
        }
        let t = t as usize;
        let mut max = f64::NEG_INFINITY;
        for c in 0..classes {
            max = max.max(scores.value(c, i) as f64);
        }
        let mut sum = 0.0f64;
        for c in 0..classes {
            sum += ((scores.value(c, i) as f64) - max).exp();
        }
        let log_sum = sum.ln();
        loss += log_sum - ((scores.value(t, i) as f64) - max);
        for c in 0..classes {
            let soft = (((scores.value(c, i) as f64) - max).exp() / sum) * inv_p;
            let one = if c == t { inv_p } else { 0.0 };
            grad[c * pixels + i] = (soft - one) as f32;
        }
    }
    Ok((
        (loss * inv_p) as f32,
        FeatureImage::new(scores.shape().clone(), classes, grad)?,
    ))
}
