//! The model zoo: pretrainable candidate forecasters and the reference
//! suite, with exact hand-written gradients, an AdamW optimizer with global
//! norm clipping, a backbone/head parameter partition, and checkpoint reset.

mod nets;
mod optimizer;
mod stat;

pub use optimizer::{adamw_step, OptimizerConfig, OptimizerState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{WindowSample, WindowSpec};
use crate::error::{AuditError, Result};
use crate::util::Mat;

/// Network shape. Hyperparameters are part of the architecture so that
/// small instances can be built for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Two-layer MLP: tanh hidden layer plus linear head.
    ScratchMlp { hidden: usize },
    /// Two causal conv layers (tanh), mean-pool over time, linear head.
    ScratchCnn { channels: usize, kernel: usize },
    /// One self-attention block with residual, mean-pool, linear head.
    ScratchTransformer { d_model: usize, heads: usize },
    /// Frozen random feature extractor with a trainable linear head.
    FrozenFeature { d_feat: usize },
    /// Mean of seasonal-naive, drift, and exponential-smoothing forecasts.
    /// No trainable parameters.
    StatEnsemble,
}

/// Which part of the parameter vector a segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Backbone,
    Head,
}

/// Which parameters enter the displacement norm. Candidates measure the
/// backbone partition only; scratch references measure all parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisplacementScope {
    Backbone,
    AllParams,
}

/// Contiguous run of parameters with a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub part: Part,
    pub trainable: bool,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
    pub total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: &str, len: usize, part: Part, trainable: bool) {
        self.segments.push(Segment {
            name: name.to_string(),
            offset: self.total,
            len,
            part,
            trainable,
        });
        self.total += len;
    }

    pub fn seg(&self, name: &str) -> std::ops::Range<usize> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(Segment::range)
            .unwrap_or_else(|| panic!("no parameter segment named {name}"))
    }

    /// True at indices of trainable parameters.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for s in &self.segments {
            if s.trainable {
                mask[s.range()].fill(true);
            }
        }
        mask
    }
}

fn build_layout(arch: &Architecture, spec: &WindowSpec) -> ParamLayout {
    let (l, h) = (spec.context_len, spec.horizon);
    let mut layout = ParamLayout::default();
    match *arch {
        Architecture::ScratchMlp { hidden } => {
            layout.push("w1", hidden * l, Part::Backbone, true);
            layout.push("b1", hidden, Part::Backbone, true);
            layout.push("w2", h * hidden, Part::Head, true);
            layout.push("b2", h, Part::Head, true);
        }
        Architecture::ScratchCnn { channels, kernel } => {
            layout.push("conv1_w", channels * kernel, Part::Backbone, true);
            layout.push("conv1_b", channels, Part::Backbone, true);
            layout.push("conv2_w", channels * channels * kernel, Part::Backbone, true);
            layout.push("conv2_b", channels, Part::Backbone, true);
            layout.push("head_w", h * channels, Part::Head, true);
            layout.push("head_b", h, Part::Head, true);
        }
        Architecture::ScratchTransformer { d_model, .. } => {
            layout.push("embed_w", d_model, Part::Backbone, true);
            layout.push("embed_b", d_model, Part::Backbone, true);
            layout.push("wq", d_model * d_model, Part::Backbone, true);
            layout.push("wk", d_model * d_model, Part::Backbone, true);
            layout.push("wv", d_model * d_model, Part::Backbone, true);
            layout.push("wo", d_model * d_model, Part::Backbone, true);
            layout.push("head_w", h * d_model, Part::Head, true);
            layout.push("head_b", h, Part::Head, true);
        }
        Architecture::FrozenFeature { d_feat } => {
            layout.push("feat_w", d_feat * l, Part::Backbone, false);
            layout.push("feat_b", d_feat, Part::Backbone, false);
            layout.push("head_w", h * d_feat, Part::Head, true);
            layout.push("head_b", h, Part::Head, true);
        }
        Architecture::StatEnsemble => {}
    }
    layout
}

/// A forecaster instance: architecture, window geometry, and a flat
/// parameter vector partitioned by `layout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub model_id: String,
    pub arch: Architecture,
    pub window: WindowSpec,
    pub params: Vec<f64>,
    pub layout: ParamLayout,
    pub scope: DisplacementScope,
}

impl Forecaster {
    /// Build a forecaster with seeded random initialization.
    pub fn new(
        model_id: &str,
        arch: Architecture,
        window: WindowSpec,
        scope: DisplacementScope,
        seed: u64,
    ) -> Self {
        let layout = build_layout(&arch, &window);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for seg in &layout.segments {
            let fan_in = init_fan_in(&arch, &window, &seg.name);
            nets::init_segment(&mut params[seg.range()], fan_in, &seg.name, &mut rng);
        }
        Forecaster {
            model_id: model_id.to_string(),
            arch,
            window,
            params,
            layout,
            scope,
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.layout.segments.iter().any(|s| s.trainable)
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    /// Forecast: maps an L x P context to an H x P output, channel by
    /// channel.
    pub fn predict(&self, context: &Mat) -> Result<Mat> {
        if context.rows != self.window.context_len {
            return Err(AuditError::Shape(format!(
                "context has {} rows, expected {}",
                context.rows, self.window.context_len
            )));
        }
        let h = self.window.horizon;
        let mut out = Mat::zeros(h, context.cols);
        for c in 0..context.cols {
            let x = context.col(c);
            let y = match self.arch {
                Architecture::StatEnsemble => stat::ensemble_forecast(&x, h),
                _ => nets::forward(self, &x),
            };
            for (r, v) in y.iter().enumerate() {
                out.set(r, c, *v);
            }
        }
        Ok(out)
    }

    /// Mean squared forecasting loss over the batch: mean over samples of
    /// the squared Frobenius error divided by H*P.
    pub fn mse_loss(&self, batch: &[WindowSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(AuditError::Config("mse_loss on empty batch".into()));
        }
        let mut total = 0.0;
        for w in batch {
            let pred = self.predict(&w.context)?;
            let hp = (pred.rows * pred.cols) as f64;
            let err: f64 = pred
                .data
                .iter()
                .zip(w.target.data.iter())
                .map(|(p, y)| (p - y) * (p - y))
                .sum();
            total += err / hp;
        }
        Ok(total / batch.len() as f64)
    }

    /// Exact gradient of `mse_loss` with respect to every trainable
    /// parameter. Frozen segments stay at zero.
    pub fn backward(&self, batch: &[WindowSample]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(AuditError::Config("backward on empty batch".into()));
        }
        if !self.is_trainable() {
            return Err(AuditError::Config(format!(
                "model {} has no trainable parameters",
                self.model_id
            )));
        }
        let mut grad = vec![0.0; self.layout.total];
        let n = batch.len() as f64;
        for w in batch {
            for c in 0..w.context.cols {
                let x = w.context.col(c);
                let y = w.target.col(c);
                let hp = (w.target.rows * w.target.cols) as f64;
                // d(loss)/d(pred) = 2 (pred - y) / (n * H * P)
                let pred = nets::forward(self, &x);
                let dout: Vec<f64> = pred
                    .iter()
                    .zip(y.iter())
                    .map(|(p, t)| 2.0 * (p - t) / (n * hp))
                    .collect();
                nets::backward(self, &x, &dout, &mut grad);
            }
        }
        // zero out frozen segments
        for seg in &self.layout.segments {
            if !seg.trainable {
                grad[seg.range()].fill(0.0);
            }
        }
        Ok(grad)
    }

    /// L2 displacement from the origin checkpoint over the scope's
    /// parameter partition.
    pub fn backbone_displacement(&self, origin: &Checkpoint) -> Result<f64> {
        if origin.params.len() != self.params.len() {
            return Err(AuditError::Shape(format!(
                "checkpoint has {} params, model has {}",
                origin.params.len(),
                self.params.len()
            )));
        }
        let mut sum = 0.0;
        match self.scope {
            DisplacementScope::AllParams => {
                for (a, b) in self.params.iter().zip(origin.params.iter()) {
                    sum += (a - b) * (a - b);
                }
            }
            DisplacementScope::Backbone => {
                for seg in &self.layout.segments {
                    if seg.part == Part::Backbone {
                        for i in seg.range() {
                            sum += (self.params[i] - origin.params[i]) * (self.params[i] - origin.params[i]);
                        }
                    }
                }
            }
        }
        Ok(sum.sqrt())
    }

    pub fn snapshot(&self, opt_state: &OptimizerState, rng: &RngState) -> Checkpoint {
        Checkpoint {
            arch: self.arch,
            window: self.window,
            params: self.params.clone(),
            opt_state: opt_state.clone(),
            rng: rng.clone(),
        }
    }

    /// Restore parameters from a checkpoint. Subsequent behavior is
    /// bit-identical to the run the checkpoint was taken from.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.params.len() != self.layout.total {
            return Err(AuditError::Shape(
                "checkpoint parameter count does not match model".into(),
            ));
        }
        self.params.clone_from(&ck.params);
        Ok(())
    }
}

fn init_fan_in(arch: &Architecture, spec: &WindowSpec, seg: &str) -> usize {
    match (*arch, seg) {
        (Architecture::ScratchMlp { hidden }, "w2") => hidden,
        (Architecture::ScratchMlp { .. }, _) => spec.context_len,
        (Architecture::ScratchCnn { kernel, .. }, "conv1_w") => kernel,
        (Architecture::ScratchCnn { channels, kernel }, "conv2_w") => channels * kernel,
        (Architecture::ScratchCnn { channels, .. }, _) => channels,
        (Architecture::ScratchTransformer { .. }, "embed_w" | "embed_b") => 1,
        (Architecture::ScratchTransformer { d_model, .. }, _) => d_model,
        (Architecture::FrozenFeature { .. }, "feat_w" | "feat_b") => spec.context_len,
        (Architecture::FrozenFeature { d_feat }, _) => d_feat,
        (Architecture::StatEnsemble, _) => 1,
    }
}

/// Serializable RNG position: seed plus ChaCha word position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, word_pos: 0 }
    }

    pub fn to_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState {
            seed,
            word_pos: rng.get_word_pos(),
        }
    }
}

/// Full training snapshot: parameters, optimizer state, and rng position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub window: WindowSpec,
    pub params: Vec<f64>,
    pub opt_state: OptimizerState,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Pretrain a forecaster on a pooled window set. Returns the checkpoint at
/// the end of training, which serves as the probe origin.
pub fn pretrain(
    f: &mut Forecaster,
    windows: &[WindowSample],
    epochs: usize,
    batch_size: usize,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<Checkpoint> {
    if windows.is_empty() {
        return Err(AuditError::Config("pretrain on empty window pool".into()));
    }
    if !f.is_trainable() {
        return Err(AuditError::Config(format!(
            "model {} is not trainable",
            f.model_id
        )));
    }
    let mut state = OptimizerState::new(f.layout.total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for _ in 0..epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<WindowSample> = chunk.iter().map(|&i| windows[i].clone()).collect();
            let grad = f.backward(&batch)?;
            adamw_step(&mut f.params, &f.layout, &grad, opt, &mut state)?;
        }
        let loss = f.mse_loss(windows)?;
        if !loss.is_finite() {
            return Err(AuditError::Numerical(format!(
                "pretraining diverged on model {}",
                f.model_id
            )));
        }
    }
    Ok(f.snapshot(&state, &RngState::capture(seed, &rng)))
}

/// Fisher-Yates shuffle driven by the given rng.
pub fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
