//! Double-precision reference evaluators, written as plain per-segment
//! scans straight from the definitions.

use spxpool::netgraph::{SegHead, TopologyKind};
use spxpool::tensor::PoolMode;

/// `out[c*k + j] = reduce { data[c*pixels + i] : labels[i] = j }`, all in
/// f64. Max ties resolve to the first value in scan order (the values used
/// with this oracle are distinct, so ties never matter).
pub fn ref_pool(
    data: &[f64],
    pixels: usize,
    labels: &[usize],
    k: usize,
    mode: PoolMode,
) -> Vec<f64> {
    let channels = data.len() / pixels;
    let mut out = vec![0.0f64; channels * k];
    for c in 0..channels {
        for j in 0..k {
            let members: Vec<f64> = (0..pixels)
                .filter(|&i| labels[i] == j)
                .map(|i| data[c * pixels + i])
                .collect();
            out[c * k + j] = match mode {
                PoolMode::Max => members.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                PoolMode::Avg => members.iter().sum::<f64>() / members.len() as f64,
            };
        }
    }
    out
}

fn ref_affine(
    weights: &[f64],
    bias: &[f64],
    out_dim: usize,
    in_dim: usize,
    x: &[f64],
    n: usize,
) -> Vec<f64> {
    let mut y = vec![0.0f64; out_dim * n];
    for o in 0..out_dim {
        for j in 0..n {
            let mut acc = bias[o];
            for i in 0..in_dim {
                acc += weights[o * in_dim + i] * x[i * n + j];
            }
            y[o * n + j] = acc;
        }
    }
    y
}

fn ref_unpool(pooled: &[f64], labels: &[usize], k: usize) -> Vec<f64> {
    let channels = pooled.len() / k;
    let pixels = labels.len();
    let mut out = vec![0.0f64; channels * pixels];
    for c in 0..channels {
        for (i, &label) in labels.iter().enumerate() {
            out[c * pixels + i] = pooled[c * k + label];
        }
    }
    out
}

/// Widened parameters of a head, flattened so finite differences can
/// perturb them one scalar at a time.
#[derive(Debug, Clone)]
pub struct RefHeadParams {
    pub kind: TopologyKind,
    pub pool_mode: PoolMode,
    pub in_dim: usize,
    pub classes: usize,
    /// pixel weights, pixel bias, sp weights, sp bias — whichever branches
    /// exist, in that order.
    pub flat: Vec<f64>,
}

impl RefHeadParams {
    pub fn from_head(head: &SegHead) -> Self {
        let mut flat = Vec::new();
        if let Some(b) = head.pixel_branch() {
            flat.extend(b.weights().iter().map(|&w| w as f64));
            flat.extend(b.bias().iter().map(|&w| w as f64));
        }
        if let Some(b) = head.sp_branch() {
            flat.extend(b.weights().iter().map(|&w| w as f64));
            flat.extend(b.bias().iter().map(|&w| w as f64));
        }
        Self {
            kind: head.kind(),
            pool_mode: head.pool_mode(),
            in_dim: head.in_channels(),
            classes: head.num_classes(),
            flat,
        }
    }

    fn branch(&self, offset: usize) -> (&[f64], &[f64]) {
        let w = self.classes * self.in_dim;
        (
            &self.flat[offset..offset + w],
            &self.flat[offset + w..offset + w + self.classes],
        )
    }

    fn pixel_params(&self) -> Option<(&[f64], &[f64])> {
        matches!(self.kind, TopologyKind::V1 | TopologyKind::V3).then(|| self.branch(0))
    }

    fn sp_params(&self) -> Option<(&[f64], &[f64])> {
        let offset = match self.kind {
            TopologyKind::V2 => 0,
            TopologyKind::V3 => self.classes * self.in_dim + self.classes,
            TopologyKind::V1 => return None,
        };
        Some(self.branch(offset))
    }
}

/// Per-pixel class scores of a head, evaluated entirely in f64.
pub fn ref_head_forward(
    params: &RefHeadParams,
    features: &[f64],
    pixels: usize,
    labels: &[usize],
    k: usize,
) -> Vec<f64> {
    match params.kind {
        TopologyKind::V1 => {
            let (w, b) = params.pixel_params().unwrap();
            let scores = ref_affine(w, b, params.classes, params.in_dim, features, pixels);
            let pooled = ref_pool(&scores, pixels, labels, k, params.pool_mode);
            ref_unpool(&pooled, labels, k)
        }
        TopologyKind::V2 => {
            let (w, b) = params.sp_params().unwrap();
            let pooled = ref_pool(features, pixels, labels, k, params.pool_mode);
            let sp_scores = ref_affine(w, b, params.classes, params.in_dim, &pooled, k);
            ref_unpool(&sp_scores, labels, k)
        }
        TopologyKind::V3 => {
            let (pw, pb) = params.pixel_params().unwrap();
            let (sw, sb) = params.sp_params().unwrap();
            let pixel_scores = ref_affine(pw, pb, params.classes, params.in_dim, features, pixels);
            let pooled = ref_pool(features, pixels, labels, k, params.pool_mode);
            let sp_scores = ref_affine(sw, sb, params.classes, params.in_dim, &pooled, k);
            let sp_up = ref_unpool(&sp_scores, labels, k);
            pixel_scores
                .iter()
                .zip(&sp_up)
                .map(|(a, b)| a + b)
                .collect()
        }
    }
}
