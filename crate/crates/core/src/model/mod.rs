//! The multimodal top-M beam predictor.
//!
//! Three feature extractors feed a concatenation + two dense layers +
//! softmax head sized to the codebook:
//!
//! * position: three 1-D conv blocks (three conv layers each, max-pool at
//!   the block end), then flatten;
//! * point cloud: a PointNet-style pipeline — learned 3x3 input transform,
//!   shared per-point MLP (64, 64), learned 64x64 feature transform, shared
//!   MLP (64, 128, 1024), masked global max pool;
//! * visual: a small inverted-bottleneck CNN — 3x3 stride-2 stem, four
//!   MBConv blocks (expansion {1, 6, 6, 6}, skip connection when shapes
//!   match), 1x1 head conv and global average pooling, batch norm + SiLU
//!   after every convolution.
//!
//! Disabled modalities contribute nothing to the concatenation; the head is
//! sized accordingly.

pub mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use crate::channel::BeamIndex;
use crate::nn::{NnError, NodeId, ParamSet, Tape, Tensor};
use crate::preprocess::{ModalitySet, PreprocessError, PreprocessedSample};
use crate::rng::{fnv1a, substream, Stream};

pub use train::{evaluate_split, train, train_with, EpochStats, TrainConfig, TrainOutput};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Nn(NnError),
    Preprocess(PreprocessError),
    /// Training split has no samples.
    EmptyDataset,
    /// The configuration enables no modality.
    NoModalities,
    /// A sample lacks a modality the configuration requires.
    MissingModality(&'static str),
    InvalidConfig(String),
}

impl From<NnError> for ModelError {
    fn from(e: NnError) -> Self {
        ModelError::Nn(e)
    }
}

impl From<PreprocessError> for ModelError {
    fn from(e: PreprocessError) -> Self {
        ModelError::Preprocess(e)
    }
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::Nn(e) => write!(f, "{e}"),
            ModelError::Preprocess(e) => write!(f, "{e}"),
            ModelError::EmptyDataset => write!(f, "training split is empty"),
            ModelError::NoModalities => write!(f, "at least one modality must be enabled"),
            ModelError::MissingModality(m) => {
                write!(f, "sample does not carry the enabled {m} modality")
            }
            ModelError::InvalidConfig(msg) => write!(f, "invalid model config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

/// Three conv blocks over the 2-element position vector. Convs are
/// same-padded with ReLU; each block ends in a max pool whose window clamps
/// to the remaining length.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionNetConfig {
    pub block_channels: [usize; 3],
    pub convs_per_block: usize,
    pub kernel: usize,
    pub pool_window: usize,
}

impl Default for PositionNetConfig {
    fn default() -> Self {
        PositionNetConfig {
            block_channels: [16, 32, 64],
            convs_per_block: 3,
            kernel: 3,
            pool_window: 2,
        }
    }
}

impl PositionNetConfig {
    fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// (channels, length) after the final block.
    fn output_shape(&self) -> Result<(usize, usize), ModelError> {
        let mut len = 2usize;
        for _ in 0..3 {
            for _ in 0..self.convs_per_block {
                let padded = len + 2 * self.pad();
                if padded < self.kernel {
                    return Err(ModelError::InvalidConfig(format!(
                        "position conv kernel {} does not fit length {len}",
                        self.kernel
                    )));
                }
                len = padded - self.kernel + 1;
            }
            len = if len >= self.pool_window {
                (len - self.pool_window) / self.pool_window + 1
            } else {
                1
            };
        }
        Ok((self.block_channels[2], len))
    }

    pub fn feature_dim(&self) -> Result<usize, ModelError> {
        let (c, l) = self.output_shape()?;
        Ok(c * l)
    }
}

/// PointNet-style point-cloud extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNetLiteConfig {
    pub mlp1: [usize; 2],
    pub mlp2: [usize; 3],
    /// Hidden widths of the per-point MLP inside both transform nets.
    pub tnet_hidden: [usize; 2],
    pub target_points: usize,
}

impl Default for PointNetLiteConfig {
    fn default() -> Self {
        PointNetLiteConfig {
            mlp1: [64, 64],
            mlp2: [64, 128, 1024],
            tnet_hidden: [16, 32],
            target_points: crate::preprocess::CLOUD_POINTS,
        }
    }
}

impl PointNetLiteConfig {
    pub fn feature_dim(&self) -> usize {
        self.mlp2[2]
    }
}

/// Small inverted-bottleneck visual extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualNetConfig {
    pub input_hw: (usize, usize),
    pub stem_channels: usize,
    pub block_channels: [usize; 4],
    pub block_strides: [usize; 4],
    pub expansion: [usize; 4],
    pub head_channels: usize,
    pub bn_eps: f64,
    /// Running-statistics momentum: `run = (1 - m) * run + m * observed`.
    pub bn_momentum: f64,
}

impl Default for VisualNetConfig {
    fn default() -> Self {
        VisualNetConfig {
            input_hw: (224, 224),
            stem_channels: 8,
            block_channels: [8, 16, 24, 24],
            block_strides: [2, 2, 2, 1],
            expansion: [1, 6, 6, 6],
            head_channels: 128,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl VisualNetConfig {
    /// Reduced-resolution variant for gradient checks and fast tests.
    pub fn tiny() -> Self {
        VisualNetConfig {
            input_hw: (16, 16),
            stem_channels: 4,
            block_channels: [4, 6, 8, 8],
            block_strides: [1, 2, 2, 1],
            head_channels: 16,
            ..Default::default()
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.head_channels
    }

    fn validate(&self) -> Result<(), ModelError> {
        let (mut h, mut w) = self.input_hw;
        let shrink = |dim: usize, stride: usize| -> Option<usize> {
            let padded = dim + 2;
            if padded < 3 {
                return None;
            }
            Some((padded - 3) / stride + 1)
        };
        h = shrink(h, 2).ok_or_else(|| ModelError::InvalidConfig("image too small".into()))?;
        w = shrink(w, 2).ok_or_else(|| ModelError::InvalidConfig("image too small".into()))?;
        for &stride in &self.block_strides {
            h = shrink(h, stride)
                .ok_or_else(|| ModelError::InvalidConfig("image too small for blocks".into()))?;
            w = shrink(w, stride)
                .ok_or_else(|| ModelError::InvalidConfig("image too small for blocks".into()))?;
            if h == 0 || w == 0 {
                return Err(ModelError::InvalidConfig("image collapses to zero size".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionHeadConfig {
    pub hidden: usize,
}

impl Default for FusionHeadConfig {
    fn default() -> Self {
        FusionHeadConfig { hidden: 256 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_beams: usize,
    pub modalities: ModalitySet,
    pub position: PositionNetConfig,
    pub pointnet: PointNetLiteConfig,
    pub visual: VisualNetConfig,
    pub fusion: FusionHeadConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_beams: 64,
            modalities: ModalitySet::ALL,
            position: PositionNetConfig::default(),
            pointnet: PointNetLiteConfig::default(),
            visual: VisualNetConfig::default(),
            fusion: FusionHeadConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.modalities.any() {
            return Err(ModelError::NoModalities);
        }
        if self.n_beams == 0 {
            return Err(ModelError::InvalidConfig("n_beams must be >= 1".into()));
        }
        if self.modalities.position {
            self.position.output_shape()?;
        }
        if self.modalities.visual {
            self.visual.validate()?;
        }
        Ok(())
    }

    pub fn concat_dim(&self) -> Result<usize, ModelError> {
        let mut dim = 0;
        if self.modalities.position {
            dim += self.position.feature_dim()?;
        }
        if self.modalities.visual {
            dim += self.visual.feature_dim();
        }
        if self.modalities.lidar {
            dim += self.pointnet.feature_dim();
        }
        Ok(dim)
    }
}

// ── parameter construction ──────────────────────────────────────────────────

struct ParamBuilder {
    params: ParamSet,
    seed: u64,
}

impl ParamBuilder {
    /// Fan-in scaled uniform init (He bound, `sqrt(6 / fan_in)`), seeded per
    /// parameter name so the draw is independent of construction order and
    /// modality subset. The He gain keeps activation variance roughly
    /// constant through the ReLU stacks.
    fn fan_in(&mut self, name: String, shape: &[usize], fan_in: usize) {
        self.uniform(name, shape, (6.0 / fan_in as f64).sqrt());
    }

    /// PyTorch-style bias range, `1 / sqrt(fan_in)`. A zero bias would leave
    /// dead channels with preactivations exactly on the ReLU kink, where
    /// finite differences and the one-sided analytic gradient legitimately
    /// disagree.
    fn bias(&mut self, name: String, shape: &[usize], fan_in: usize) {
        self.uniform(name, shape, 1.0 / (fan_in as f64).sqrt());
    }

    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) {
        let mut rng = substream(self.seed, Stream::Init, fnv1a(name.as_bytes()));
        let data = (0..shape.iter().product::<usize>())
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        self.params
            .add(name, Tensor::from_vec(shape, data).expect("shape"), true);
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f64, trainable: bool) {
        self.params.add(name, Tensor::filled(shape, value), trainable);
    }

    /// Flattened identity matrix; the transform-net output bias, so the
    /// zero-weight final layer yields an exact identity transform at init.
    fn identity_bias(&mut self, name: String, dim: usize) {
        let mut t = Tensor::zeros(&[dim * dim]);
        for i in 0..dim {
            t.data_mut()[i * dim + i] = 1.0;
        }
        self.params.add(name, t, true);
    }

    fn conv2d(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) {
        self.fan_in(format!("{prefix}.w"), &[cout, cin, k, k], cin * k * k);
        self.bias(format!("{prefix}.b"), &[cout], cin * k * k);
    }

    fn depthwise(&mut self, prefix: &str, c: usize, k: usize) {
        self.fan_in(format!("{prefix}.w"), &[c, k, k], k * k);
        self.bias(format!("{prefix}.b"), &[c], k * k);
    }

    fn linear(&mut self, prefix: &str, inp: usize, out: usize) {
        self.fan_in(format!("{prefix}.w"), &[out, inp], inp);
        self.bias(format!("{prefix}.b"), &[out], inp);
    }

    fn batch_norm(&mut self, prefix: &str, c: usize) {
        self.constant(format!("{prefix}.gamma"), &[c], 1.0, true);
        self.constant(format!("{prefix}.beta"), &[c], 0.0, true);
        self.constant(format!("{prefix}.mean"), &[c], 0.0, false);
        self.constant(format!("{prefix}.var"), &[c], 1.0, false);
    }
}

/// Builds and initializes all parameters for a model configuration. Weights
/// use fan-in scaled uniform draws; transform-net outputs start as exact
/// identities; the classifier layer starts at zero so an untrained model
/// predicts the uniform distribution.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet, ModelError> {
    cfg.validate()?;
    let mut b = ParamBuilder { params: ParamSet::new(), seed };

    if cfg.modalities.position {
        let p = &cfg.position;
        let mut cin = 1;
        let mut len = 2usize;
        for (block, &cout) in p.block_channels.iter().enumerate() {
            for conv in 0..p.convs_per_block {
                // On these short signals most kernel taps overlap padding, so
                // the He gain uses the taps that actually see data; the plain
                // cin * k fan-in would shrink the signal ~sqrt(3) per layer.
                let effective = cin * p.kernel.min(len);
                let prefix = format!("pos.block{}.conv{conv}", block + 1);
                b.fan_in(format!("{prefix}.w"), &[cout, cin, p.kernel], effective);
                b.bias(format!("{prefix}.b"), &[cout], effective);
                cin = cout;
                len = len + 2 * p.pad() - p.kernel + 1;
            }
            len = if len >= p.pool_window { (len - p.pool_window) / p.pool_window + 1 } else { 1 };
        }
    }

    if cfg.modalities.visual {
        let v = &cfg.visual;
        b.conv2d("vis.stem.conv", 3, v.stem_channels, 3);
        b.batch_norm("vis.stem.bn", v.stem_channels);
        let mut cin = v.stem_channels;
        for (i, (&cout, &exp)) in v.block_channels.iter().zip(v.expansion.iter()).enumerate() {
            let prefix = format!("vis.mb{}", i + 1);
            let mid = cin * exp;
            if exp > 1 {
                b.conv2d(&format!("{prefix}.expand.conv"), cin, mid, 1);
                b.batch_norm(&format!("{prefix}.expand.bn"), mid);
            }
            b.depthwise(&format!("{prefix}.dw.conv"), mid, 3);
            b.batch_norm(&format!("{prefix}.dw.bn"), mid);
            b.conv2d(&format!("{prefix}.pw.conv"), mid, cout, 1);
            b.batch_norm(&format!("{prefix}.pw.bn"), cout);
            cin = cout;
        }
        b.conv2d("vis.head.conv", cin, v.head_channels, 1);
        b.batch_norm("vis.head.bn", v.head_channels);
    }

    if cfg.modalities.lidar {
        let l = &cfg.pointnet;
        b.linear("lid.tnet_in.mlp0", 3, l.tnet_hidden[0]);
        b.linear("lid.tnet_in.mlp1", l.tnet_hidden[0], l.tnet_hidden[1]);
        b.constant("lid.tnet_in.fc.w".into(), &[9, l.tnet_hidden[1]], 0.0, true);
        b.identity_bias("lid.tnet_in.fc.b".into(), 3);

        b.linear("lid.mlp1.0", 3, l.mlp1[0]);
        b.linear("lid.mlp1.1", l.mlp1[0], l.mlp1[1]);

        let f = l.mlp1[1];
        b.linear("lid.tnet_feat.mlp0", f, l.tnet_hidden[0]);
        b.linear("lid.tnet_feat.mlp1", l.tnet_hidden[0], l.tnet_hidden[1]);
        b.constant("lid.tnet_feat.fc.w".into(), &[f * f, l.tnet_hidden[1]], 0.0, true);
        b.identity_bias("lid.tnet_feat.fc.b".into(), f);

        b.linear("lid.mlp2.0", f, l.mlp2[0]);
        b.linear("lid.mlp2.1", l.mlp2[0], l.mlp2[1]);
        b.linear("lid.mlp2.2", l.mlp2[1], l.mlp2[2]);
    }

    let concat = cfg.concat_dim()?;
    b.linear("fuse.fc1", concat, cfg.fusion.hidden);
    // Zero-initialized classifier: the untrained model emits exactly 1/|Q|.
    b.constant("fuse.fc2.w".into(), &[cfg.n_beams, cfg.fusion.hidden], 0.0, true);
    b.constant("fuse.fc2.b".into(), &[cfg.n_beams], 0.0, true);

    // Position-normalization bounds ride along in checkpoints.
    b.params.add(
        "preproc.pos_stats",
        Tensor::from_vec(&[4], vec![0.0, 1.0, 0.0, 1.0]).expect("shape"),
        false,
    );
    Ok(b.params)
}

// ── forward passes ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Batch-norm layers use this input's statistics and report them.
    Train,
    /// Batch-norm layers use stored running statistics.
    Eval,
}

/// A training-mode batch-norm observation to fold into running statistics.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub mean_name: String,
    pub var_name: String,
    pub node: NodeId,
}

pub struct ForwardPass {
    pub logits: NodeId,
    pub probs: NodeId,
    pub bn_updates: Vec<BnUpdate>,
}

fn position_branch(
    tape: &mut Tape<'_>,
    cfg: &PositionNetConfig,
    pos: &[f64; 2],
) -> Result<NodeId, ModelError> {
    let input = Tensor::from_vec(&[1, 2], vec![pos[0], pos[1]])?;
    let mut x = tape.input(input);
    let mut len = 2usize;
    for (block, _) in cfg.block_channels.iter().enumerate() {
        for conv in 0..cfg.convs_per_block {
            let w = tape.param_named(&format!("pos.block{}.conv{conv}.w", block + 1))?;
            let b = tape.param_named(&format!("pos.block{}.conv{conv}.b", block + 1))?;
            x = tape.conv1d(x, w, b, 1, cfg.pad())?;
            x = tape.relu(x);
            len = len + 2 * cfg.pad() - cfg.kernel + 1;
        }
        x = tape.maxpool1d(x, cfg.pool_window, cfg.pool_window)?;
        len = if len >= cfg.pool_window {
            (len - cfg.pool_window) / cfg.pool_window + 1
        } else {
            1
        };
    }
    let flat = cfg.block_channels[2] * len;
    Ok(tape.reshape(x, &[flat])?)
}

/// Gathers unmasked rows into a dense `[n, 3]` tensor. Masked (padding) rows
/// never enter the graph, which is what makes padding provably neutral.
fn gather_points(points: &Tensor, mask: &[bool]) -> Result<Tensor, NnError> {
    let &[n, three] = points.shape() else {
        return Err(NnError::ShapeError(format!(
            "cloud must be [n, 3], got {:?}",
            points.shape()
        )));
    };
    if three != 3 || mask.len() != n {
        return Err(NnError::ShapeError(format!(
            "cloud {:?} with mask of length {}",
            points.shape(),
            mask.len()
        )));
    }
    let real = mask.iter().filter(|&&m| m).count();
    if real == 0 {
        return Err(NnError::AllMasked);
    }
    let mut data = Vec::with_capacity(real * 3);
    for (row, &keep) in mask.iter().enumerate() {
        if keep {
            data.extend_from_slice(&points.data()[row * 3..row * 3 + 3]);
        }
    }
    Tensor::from_vec(&[real, 3], data)
}

fn shared_mlp(
    tape: &mut Tape<'_>,
    mut x: NodeId,
    prefix: &str,
    layers: usize,
) -> Result<NodeId, NnError> {
    for i in 0..layers {
        let w = tape.param_named(&format!("{prefix}.{i}.w"))?;
        let b = tape.param_named(&format!("{prefix}.{i}.b"))?;
        x = tape.linear(x, w, b)?;
        x = tape.relu(x);
    }
    Ok(x)
}

fn transform_net(
    tape: &mut Tape<'_>,
    x: NodeId,
    prefix: &str,
    dim: usize,
) -> Result<NodeId, NnError> {
    let mut h = x;
    for i in 0..2 {
        let w = tape.param_named(&format!("{prefix}.mlp{i}.w"))?;
        let b = tape.param_named(&format!("{prefix}.mlp{i}.b"))?;
        h = tape.linear(h, w, b)?;
        h = tape.relu(h);
    }
    let pooled = tape.masked_max_rows(h, None)?;
    let w = tape.param_named(&format!("{prefix}.fc.w"))?;
    let b = tape.param_named(&format!("{prefix}.fc.b"))?;
    let flat = tape.linear(pooled, w, b)?;
    tape.reshape(flat, &[dim, dim])
}

fn pointnet_branch(
    tape: &mut Tape<'_>,
    cfg: &PointNetLiteConfig,
    points: &Tensor,
    mask: &[bool],
) -> Result<NodeId, ModelError> {
    let gathered = gather_points(points, mask)?;
    let p0 = tape.input(gathered);

    let t_in = transform_net(tape, p0, "lid.tnet_in", 3)?;
    let p1 = tape.matmul(p0, t_in)?;

    let local = shared_mlp(tape, p1, "lid.mlp1", 2)?;

    let t_feat = transform_net(tape, local, "lid.tnet_feat", cfg.mlp1[1])?;
    let aligned = tape.matmul(local, t_feat)?;

    let features = shared_mlp(tape, aligned, "lid.mlp2", 3)?;
    Ok(tape.masked_max_rows(features, None)?)
}

fn bn_silu(
    tape: &mut Tape<'_>,
    x: NodeId,
    prefix: &str,
    eps: f64,
    phase: Phase,
    bn_updates: &mut Vec<BnUpdate>,
) -> Result<NodeId, NnError> {
    let gamma = tape.param_named(&format!("{prefix}.gamma"))?;
    let beta = tape.param_named(&format!("{prefix}.beta"))?;
    let y = match phase {
        Phase::Train => {
            let node = tape.batch_norm_train(x, gamma, beta, eps)?;
            bn_updates.push(BnUpdate {
                mean_name: format!("{prefix}.mean"),
                var_name: format!("{prefix}.var"),
                node,
            });
            node
        }
        Phase::Eval => {
            let mean = tape.params().tensor_named(&format!("{prefix}.mean"))?.data().to_vec();
            let var = tape.params().tensor_named(&format!("{prefix}.var"))?.data().to_vec();
            tape.batch_norm_eval(x, gamma, beta, eps, &mean, &var)?
        }
    };
    Ok(tape.silu(y))
}

fn visual_branch(
    tape: &mut Tape<'_>,
    cfg: &VisualNetConfig,
    image: &Tensor,
    phase: Phase,
    bn_updates: &mut Vec<BnUpdate>,
) -> Result<NodeId, ModelError> {
    let expected = [3, cfg.input_hw.0, cfg.input_hw.1];
    if image.shape() != expected {
        return Err(NnError::ShapeError(format!(
            "visual input {:?}, config expects {expected:?}",
            image.shape()
        ))
        .into());
    }
    let x = tape.input(image.clone());
    let w = tape.param_named("vis.stem.conv.w")?;
    let b = tape.param_named("vis.stem.conv.b")?;
    let stem = tape.conv2d(x, w, b, 2, 1)?;
    let mut x = bn_silu(tape, stem, "vis.stem.bn", cfg.bn_eps, phase, bn_updates)?;

    let mut cin = cfg.stem_channels;
    for (i, (&cout, (&exp, &stride))) in cfg
        .block_channels
        .iter()
        .zip(cfg.expansion.iter().zip(cfg.block_strides.iter()))
        .enumerate()
    {
        let prefix = format!("vis.mb{}", i + 1);
        let block_input = x;
        let mut h = x;
        if exp > 1 {
            let w = tape.param_named(&format!("{prefix}.expand.conv.w"))?;
            let b = tape.param_named(&format!("{prefix}.expand.conv.b"))?;
            h = tape.conv2d(h, w, b, 1, 0)?;
            h = bn_silu(tape, h, &format!("{prefix}.expand.bn"), cfg.bn_eps, phase, bn_updates)?;
        }
        let w = tape.param_named(&format!("{prefix}.dw.conv.w"))?;
        let b = tape.param_named(&format!("{prefix}.dw.conv.b"))?;
        h = tape.depthwise_conv2d(h, w, b, stride, 1)?;
        h = bn_silu(tape, h, &format!("{prefix}.dw.bn"), cfg.bn_eps, phase, bn_updates)?;
        let w = tape.param_named(&format!("{prefix}.pw.conv.w"))?;
        let b = tape.param_named(&format!("{prefix}.pw.conv.b"))?;
        h = tape.conv2d(h, w, b, 1, 0)?;
        h = bn_silu(tape, h, &format!("{prefix}.pw.bn"), cfg.bn_eps, phase, bn_updates)?;
        if stride == 1 && cin == cout {
            h = tape.add(h, block_input)?;
        }
        x = h;
        cin = cout;
    }

    let w = tape.param_named("vis.head.conv.w")?;
    let b = tape.param_named("vis.head.conv.b")?;
    let head = tape.conv2d(x, w, b, 1, 0)?;
    let head = bn_silu(tape, head, "vis.head.bn", cfg.bn_eps, phase, bn_updates)?;
    Ok(tape.global_avg_pool2d(head)?)
}

/// Builds the full forward graph for one preprocessed sample.
pub fn forward(
    tape: &mut Tape<'_>,
    cfg: &ModelConfig,
    sample: &PreprocessedSample,
    phase: Phase,
) -> Result<ForwardPass, ModelError> {
    let mut bn_updates = Vec::new();
    let mut features = Vec::new();

    if cfg.modalities.position {
        let pos = sample.pos.as_ref().ok_or(ModelError::MissingModality("position"))?;
        features.push(position_branch(tape, &cfg.position, pos)?);
    }
    if cfg.modalities.visual {
        let vis = sample.vis.as_ref().ok_or(ModelError::MissingModality("visual"))?;
        features.push(visual_branch(tape, &cfg.visual, vis, phase, &mut bn_updates)?);
    }
    if cfg.modalities.lidar {
        let points = sample
            .cloud_points
            .as_ref()
            .ok_or(ModelError::MissingModality("lidar"))?;
        let mask = sample
            .cloud_mask
            .as_ref()
            .ok_or(ModelError::MissingModality("lidar"))?;
        features.push(pointnet_branch(tape, &cfg.pointnet, points, mask)?);
    }
    if features.is_empty() {
        return Err(ModelError::NoModalities);
    }

    let fused = tape.concat(&features)?;
    let w1 = tape.param_named("fuse.fc1.w")?;
    let b1 = tape.param_named("fuse.fc1.b")?;
    let hidden = tape.linear(fused, w1, b1)?;
    let hidden = tape.relu(hidden);
    let w2 = tape.param_named("fuse.fc2.w")?;
    let b2 = tape.param_named("fuse.fc2.b")?;
    let logits = tape.linear(hidden, w2, b2)?;
    let probs = tape.softmax(logits)?;
    Ok(ForwardPass { logits, probs, bn_updates })
}

/// Inference: probability over the codebook for one preprocessed sample.
pub fn predict(
    sample: &PreprocessedSample,
    params: &ParamSet,
    cfg: &ModelConfig,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new(params);
    let pass = forward(&mut tape, cfg, sample, Phase::Eval)?;
    Ok(tape.value(pass.probs).data().to_vec())
}

/// Position features alone (inference mode).
pub fn position_features(
    pos: &[f64; 2],
    params: &ParamSet,
    cfg: &PositionNetConfig,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new(params);
    let z = position_branch(&mut tape, cfg, pos)?;
    Ok(tape.value(z).data().to_vec())
}

/// Global point-cloud feature (inference mode).
pub fn pointcloud_features(
    points: &Tensor,
    mask: &[bool],
    params: &ParamSet,
    cfg: &PointNetLiteConfig,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new(params);
    let z = pointnet_branch(&mut tape, cfg, points, mask)?;
    Ok(tape.value(z).data().to_vec())
}

/// Visual features alone (inference mode, frozen batch-norm statistics).
pub fn visual_features(
    image: &Tensor,
    params: &ParamSet,
    cfg: &VisualNetConfig,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new(params);
    let mut unused = Vec::new();
    let z = visual_branch(&mut tape, cfg, image, Phase::Eval, &mut unused)?;
    Ok(tape.value(z).data().to_vec())
}

/// Indices of the `m` largest probabilities, descending, ties broken toward
/// the lowest index. Returned as 1-based beam indices.
pub fn top_m(probs: &[f64], m: usize) -> Result<Vec<BeamIndex>, NnError> {
    if m == 0 || m > probs.len() {
        return Err(NnError::RangeError { got: m, max: probs.len() });
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_unstable_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    Ok(order[..m].iter().map(|&i| BeamIndex::from_zero_based(i)).collect())
}
