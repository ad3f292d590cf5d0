use crate::nn::{gradient_check, GradientReport, LayerSpec, Network, Tensor};
use crate::preprocess::Roi;
use crate::rng::XorShift64;

use super::{ClassifyError, EmotionLabel, EmotionScores, LabeledRoi, Result};

/// Convolutional emotion classifier over square grayscale ROIs.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    network: Network<f32>,
    seed: u64,
}

impl CnnModel {
    /// Freshly initialized default stack for `roi_size × roi_size` inputs.
    pub fn new(roi_size: usize, seed: u64) -> Result<Self> {
        let specs = LayerSpec::default_stack(EmotionLabel::COUNT);
        Self::from_network(Network::init([roi_size, roi_size, 1], &specs, seed)?, seed)
    }

    /// Wraps an existing network; it must take one square channel and emit
    /// seven classes.
    pub fn from_network(network: Network<f32>, seed: u64) -> Result<Self> {
        let [h, w, c] = network.input_shape();
        if h != w || c != 1 {
            return Err(ClassifyError::InvalidArgument(format!(
                "classifier input must be square single-channel, got {h}x{w}x{c}"
            )));
        }
        if network.num_classes() != EmotionLabel::COUNT {
            return Err(ClassifyError::InvalidArgument(format!(
                "classifier must emit {} classes, got {}",
                EmotionLabel::COUNT,
                network.num_classes()
            )));
        }
        Ok(CnnModel { network, seed })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn roi_size(&self) -> usize {
        self.network.input_shape()[0]
    }

    pub fn predict(&self, roi: &Roi) -> Result<EmotionScores> {
        let probs = self.network.predict(&roi.to_tensor())?;
        EmotionScores::new(&probs)
    }

    /// Central-difference check of the backward pass on one sample, run in
    /// double precision.
    pub fn gradient_check(&self, roi: &Roi, label: EmotionLabel, eps: f64) -> Result<GradientReport> {
        let wide: Network<f64> = self.network.cast();
        let input: Tensor<f64> = roi.to_tensor().cast();
        Ok(gradient_check(&wide, &input, label.index(), eps)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, learning_rate: 0.05, batch_size: 32, seed: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of samples whose pre-update prediction was correct.
    pub accuracy: f64,
}

/// Mini-batch SGD over a shuffled copy of the data each epoch.
pub fn cnn_train(data: &[LabeledRoi], config: TrainConfig) -> Result<(CnnModel, Vec<EpochStats>)> {
    cnn_train_with(data, config, |_| {})
}

/// [`cnn_train`] with a callback invoked after every epoch.
pub fn cnn_train_with(
    data: &[LabeledRoi],
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(CnnModel, Vec<EpochStats>)> {
    if config.epochs == 0 {
        return Err(ClassifyError::InvalidArgument("epochs must be at least 1".into()));
    }
    if config.batch_size == 0 {
        return Err(ClassifyError::InvalidArgument("batch size must be at least 1".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(ClassifyError::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {}",
            config.learning_rate
        )));
    }
    for label in EmotionLabel::ALL {
        if !data.iter().any(|s| s.label == label) {
            return Err(ClassifyError::EmptyClass(label));
        }
    }
    let side = data[0].roi.side();
    if data.iter().any(|s| s.roi.side() != side) {
        return Err(ClassifyError::InvalidArgument("samples differ in roi size".into()));
    }
    let inputs: Vec<(Tensor<f32>, usize)> =
        data.iter().map(|s| (s.roi.to_tensor(), s.label.index())).collect();
    let mut model = CnnModel::new(side, config.seed)?;
    let mut rng = XorShift64::new(config.seed ^ 0x5eed_0f_5a_3b1e);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Tensor<f32>, usize)> =
                chunk.iter().map(|&i| (&inputs[i].0, inputs[i].1)).collect();
            let (mean_loss, hits) = model.network.train_step(&batch, config.learning_rate)?;
            loss_sum += mean_loss * chunk.len() as f64;
            correct += hits;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / inputs.len() as f64,
            accuracy: correct as f64 / inputs.len() as f64,
        };
        log::debug!("epoch {epoch}: loss {:.4} acc {:.4}", stats.mean_loss, stats.accuracy);
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((model, history))
}
