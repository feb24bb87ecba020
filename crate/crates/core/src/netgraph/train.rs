//! Plain gradient-descent trainer for segmentation heads at desk scale.

use crate::error::{Error, Result};
use crate::metrics::pixel_accuracy;
use crate::netgraph::{head_backward, head_forward, softmax_xent, DenseGrads, SegHead};
use crate::tensor::{FeatureImage, LabelMap};

/// One training example: per-pixel features, a superpixel segmentation and
/// per-pixel target classes.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: FeatureImage,
    pub seg: LabelMap,
    pub targets: Vec<i32>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainStep {
    /// Mean loss over the dataset before this step's update.
    pub loss: f32,
    /// Per-pixel accuracy over the dataset after the update.
    pub accuracy: f32,
}

#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub steps: Vec<TrainStep>,
}

impl TrainTrace {
    pub fn final_accuracy(&self) -> f32 {
        self.steps.last().map(|s| s.accuracy).unwrap_or(0.0)
    }
}

/// Argmax class per pixel; ties break toward the smaller class index.
pub fn predict_classes(
    head: &SegHead,
    features: &FeatureImage,
    seg: &LabelMap,
) -> Result<Vec<i32>> {
    let scores = head_forward(head, features, seg)?;
    let pixels = scores.pixel_count();
    let classes = scores.channels();
    Ok((0..pixels)
        .map(|i| {
            let mut best = 0usize;
            for c in 1..classes {
                if scores.value(c, i) > scores.value(best, i) {
                    best = c;
                }
            }
            best as i32
        })
        .collect())
}

fn dataset_accuracy(head: &SegHead, dataset: &[TrainSample]) -> Result<f32> {
    let mut hits = 0.0f64;
    let mut total = 0.0f64;
    for sample in dataset {
        let pred = predict_classes(head, &sample.features, &sample.seg)?;
        let n = pred.len() as f64;
        hits += pixel_accuracy(&pred, &sample.targets)? * n;
        total += n;
    }
    Ok((hits / total) as f32)
}

struct GradAccum {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl GradAccum {
    fn zeros_like(grads: &DenseGrads) -> Self {
        Self {
            weights: vec![0.0; grads.weights.len()],
            bias: vec![0.0; grads.bias.len()],
        }
    }

    fn add(&mut self, grads: &DenseGrads) {
        for (a, g) in self.weights.iter_mut().zip(&grads.weights) {
            *a += *g as f64;
        }
        for (a, g) in self.bias.iter_mut().zip(&grads.bias) {
            *a += *g as f64;
        }
    }

    fn mean(&self, n: usize) -> DenseGrads {
        let inv = 1.0 / n as f64;
        DenseGrads {
            weights: self.weights.iter().map(|&g| (g * inv) as f32).collect(),
            bias: self.bias.iter().map(|&g| (g * inv) as f32).collect(),
        }
    }
}

/// Full-batch gradient descent. Per step the mean loss over the dataset is
/// recorded before the update and accuracy after it. A non-finite loss
/// aborts with a divergence error naming the step.
pub fn train_toy(
    mut head: SegHead,
    dataset: &[TrainSample],
    steps: usize,
    learning_rate: f32,
) -> Result<(SegHead, TrainTrace)> {
    if dataset.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    let mut trace = TrainTrace::default();
    for step in 0..steps {
        let mut loss_sum = 0.0f64;
        let mut pixel_acc: Option<GradAccum> = None;
        let mut sp_acc: Option<GradAccum> = None;
        for sample in dataset {
            let scores = head_forward(&head, &sample.features, &sample.seg)?;
            let (loss, grad_scores) = softmax_xent(&scores, &sample.targets)?;
            loss_sum += loss as f64;
            let (_, grads) = head_backward(&head, &sample.features, &sample.seg, &grad_scores)?;
            if let Some(g) = &grads.pixel_branch {
                pixel_acc
                    .get_or_insert_with(|| GradAccum::zeros_like(g))
                    .add(g);
            }
            if let Some(g) = &grads.sp_branch {
                sp_acc
                    .get_or_insert_with(|| GradAccum::zeros_like(g))
                    .add(g);
            }
        }
        let loss = (loss_sum / dataset.len() as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        if let (Some(branch), Some(acc)) = (head.pixel_branch.as_mut(), &pixel_acc) {
            branch.apply_update(&acc.mean(dataset.len()), learning_rate);
        }
        if let (Some(branch), Some(acc)) = (head.sp_branch.as_mut(), &sp_acc) {
            branch.apply_update(&acc.mean(dataset.len()), learning_rate);
        }
        let accuracy = dataset_accuracy(&head, dataset)?;
        trace.steps.push(TrainStep { loss, accuracy });
    }
    Ok((head, trace))
}
