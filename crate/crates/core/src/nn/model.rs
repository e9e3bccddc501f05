//! CNN-LSTM motion classifier with an optional adversarial domain head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Act, GrlConfig, LnCache, NormAxis};
use super::lstm::{lstm_backward, lstm_forward, LstmCache, LstmWeights};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const N_BLOCKS: usize = 4;
pub const BLUR_AFTER_BLOCK: usize = 1;
pub const CHECKPOINT_FORMAT: &str = "emgshift-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Concatenated input channels per frame.
    pub in_channels: usize,
    /// Samples per segment (time axis of a frame).
    pub segment_len: usize,
    /// Optional linear projection of the input channels to this width before the first block.
    pub width: Option<usize>,
    pub n_classes: usize,
    pub n_domains: usize,
    pub block_dropout: [f64; N_BLOCKS],
    pub lstm_dropout: f64,
    pub norm_axis: NormAxis,
    pub grl: GrlConfig,
}

impl ModelConfig {
    pub fn new(in_channels: usize, segment_len: usize) -> Self {
        Self {
            in_channels,
            segment_len,
            width: None,
            n_classes: 3,
            n_domains: 3,
            block_dropout: [0.1, 0.2, 0.3, 0.4],
            lstm_dropout: 0.1,
            norm_axis: NormAxis::Channel,
            grl: GrlConfig::default(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.width.unwrap_or(self.in_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.segment_len == 0 || self.hidden() == 0 || self.n_classes < 2 || self.n_domains < 2 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        let rates = self.block_dropout.iter().chain(std::iter::once(&self.lstm_dropout));
        if rates.clone().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if !self.grl.lambda.is_finite() {
            return Err(Error::Config("GRL lambda must be finite".into()));
        }
        Ok(())
    }

    /// Time steps per block output.
    pub fn block_lengths(&self) -> [usize; N_BLOCKS] {
        let mut l = self.segment_len;
        let mut out = [0; N_BLOCKS];
        for (k, o) in out.iter_mut().enumerate() {
            l += 2;
            if k == BLUR_AFTER_BLOCK {
                l = layers::blur_out_len(l);
            }
            *o = l;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct LnIx {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinIx {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct LstmIx {
    wih: usize,
    whh: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: Option<LinIx>,
    block_ln: [LnIx; N_BLOCKS],
    block_conv: [LinIx; N_BLOCKS],
    lstm_ln: LnIx,
    lstm: [LstmIx; 2],
    out_ln: LnIx,
    out_fc: LinIx,
    ada_ln1: LnIx,
    ada_fc1: LinIx,
    ada_ln2: LnIx,
    ada_fc2: LinIx,
    n_cnn: usize,
}

struct Builder<'a> {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> usize {
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.push(name, Tensor { shape: shape.to_vec(), values })
    }

    fn push(&mut self, name: &str, t: Tensor) -> usize {
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn ln(&mut self, name: &str, w: usize) -> LnIx {
        LnIx { g: self.push(&format!("{name}.gamma"), Tensor::filled(&[w], 1.0)), b: self.push(&format!("{name}.beta"), Tensor::zeros(&[w])) }
    }

    fn lin(&mut self, name: &str, out: usize, inp: usize) -> LinIx {
        let bound = 1.0 / (inp as f64).sqrt();
        LinIx { w: self.uniform(&format!("{name}.weight"), &[out, inp], bound), b: self.uniform(&format!("{name}.bias"), &[out], bound) }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
    layout: Layout,
}

pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

struct BlockCache {
    ln: LnCache,
    relu: Act,
    conv: layers::ConvCache,
    mask: Option<Vec<f64>>,
    pre_blur_len: usize,
}

struct AdaCache {
    a1: Act,
    c1: LnCache,
    r1: Act,
    a2: Act,
    c2: LnCache,
}

pub struct ForwardCache {
    input: Act,
    blocks: Vec<BlockCache>,
    final_len: usize,
    lstm_ln: LnCache,
    l0: Act,
    h1: Act,
    lc1: LstmCache,
    lc2: LstmCache,
    feat_mask: Option<Vec<f64>>,
    out_ln: LnCache,
    ol: Act,
    ada: Option<AdaCache>,
    batch: usize,
}

pub struct ForwardOutput {
    /// `[n_classes, N]`.
    pub probs: Vec<f64>,
    /// `[n_domains, N]` when the domain head ran.
    pub domain_probs: Option<Vec<f64>>,
    pub n: usize,
}

impl ForwardOutput {
    pub fn argmax(&self) -> Vec<usize> {
        argmax_columns(&self.probs, self.n)
    }
}

pub fn argmax_columns(p: &[f64], n: usize) -> Vec<usize> {
    let k = p.len() / n.max(1);
    (0..n)
        .map(|j| {
            let mut best = 0;
            for i in 1..k {
                if p[i * n + j] > p[best * n + j] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn slices<const K: usize>(v: &mut [Tensor], idx: [usize; K]) -> [&mut [f64]; K] {
    v.get_disjoint_mut(idx).expect("distinct parameter indices").map(|t| t.values.as_mut_slice())
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let w = config.hidden();
        let mut b = Builder { names: Vec::new(), tensors: Vec::new(), rng };
        let stem = config.width.map(|wd| b.lin("stem", wd, config.in_channels));
        let mut block_ln = [LnIx { g: 0, b: 0 }; N_BLOCKS];
        let mut block_conv = [LinIx { w: 0, b: 0 }; N_BLOCKS];
        for k in 0..N_BLOCKS {
            block_ln[k] = b.ln(&format!("cnn.block{k}.ln"), w);
            let bound = 1.0 / ((w * layers::CONV_K) as f64).sqrt();
            block_conv[k] = LinIx {
                w: b.uniform(&format!("cnn.block{k}.conv.weight"), &[w, w, layers::CONV_K], bound),
                b: b.uniform(&format!("cnn.block{k}.conv.bias"), &[w], bound),
            };
        }
        let n_cnn = b.tensors.len();
        let lstm_ln = b.ln("lstm.ln", w);
        let bound = 1.0 / (w as f64).sqrt();
        let mut lstm = [LstmIx { wih: 0, whh: 0, b: 0 }; 2];
        for (k, l) in lstm.iter_mut().enumerate() {
            *l = LstmIx {
                wih: b.uniform(&format!("lstm.{k}.weight_ih"), &[4 * w, w], bound),
                whh: b.uniform(&format!("lstm.{k}.weight_hh"), &[4 * w, w], bound),
                b: b.uniform(&format!("lstm.{k}.bias"), &[4 * w], bound),
            };
        }
        let out_ln = b.ln("out.ln", w);
        let out_fc = b.lin("out.fc", config.n_classes, w);
        let ada_ln1 = b.ln("ada.ln1", w);
        let ada_fc1 = b.lin("ada.fc1", w, w);
        let ada_ln2 = b.ln("ada.ln2", w);
        let ada_fc2 = b.lin("ada.fc2", config.n_domains, w);
        let layout = Layout { stem, block_ln, block_conv, lstm_ln, lstm, out_ln, out_fc, ada_ln1, ada_fc1, ada_ln2, ada_fc2, n_cnn };
        Ok(Self { config, names: b.names, params: b.tensors, layout })
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors of the convolutional stage (stem and blocks).
    pub fn cnn_mask(&self) -> Vec<bool> {
        (0..self.params.len()).map(|i| i < self.layout.n_cnn).collect()
    }

    /// Parameter tensors of the domain head.
    pub fn ada_mask(&self) -> Vec<bool> {
        self.names.iter().map(|n| n.starts_with("ada.")).collect()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(&p.shape)).collect()
    }

    fn p(&self, i: usize) -> &[f64] {
        &self.params[i].values
    }

    fn ln_fwd(&self, x: &Act, ix: LnIx, axis: NormAxis) -> (Act, LnCache) {
        layers::layer_norm(x, self.p(ix.g), self.p(ix.b), axis)
    }

    fn lstm_w(&self, ix: LstmIx) -> LstmWeights<'_> {
        LstmWeights { wih: self.p(ix.wih), whh: self.p(ix.whh), b: self.p(ix.b), hidden: self.config.hidden() }
    }

    /// `frames` holds `N = steps * batch` frames, each `[in_channels, segment_len]`
    /// channel-major, ordered time-major (`t * batch + b`).
    pub fn forward(&self, frames: &[f64], batch: usize, mode: Mode<'_>, ada: bool) -> Result<(ForwardOutput, ForwardCache)> {
        let cfg = &self.config;
        let (c, l) = (cfg.in_channels, cfg.segment_len);
        let per = c * l;
        if batch == 0 || frames.is_empty() || !frames.len().is_multiple_of(per * batch) {
            return Err(Error::Shape(format!("{} values is not a whole batch of {batch} x [{c} x {l}] frames", frames.len())));
        }
        let n = frames.len() / per;
        let mut input = Act::zeros(c, n, l);
        for f in 0..n {
            for ch in 0..c {
                input.data[ch * n * l + f * l..ch * n * l + (f + 1) * l].copy_from_slice(&frames[f * per + ch * l..f * per + (ch + 1) * l]);
            }
        }
        self.forward_input(input, batch, mode, ada)
    }

    /// Forward pass on an input already laid out as `[in_channels, N * segment_len]`.
    pub fn forward_input(&self, input: Act, batch: usize, mut mode: Mode<'_>, ada: bool) -> Result<(ForwardOutput, ForwardCache)> {
        let cfg = &self.config;
        if input.rows != cfg.in_channels || input.len != cfg.segment_len || batch == 0 || !input.frames.is_multiple_of(batch) {
            return Err(Error::Shape(format!(
                "input [{} x {} x {}] does not match [{} x N x {}] with batch {batch}",
                input.rows, input.frames, input.len, cfg.in_channels, cfg.segment_len
            )));
        }
        let n = input.frames;
        let w = cfg.hidden();
        let mut h = match self.layout.stem {
            Some(ix) => layers::linear(&input, self.p(ix.w), self.p(ix.b), w),
            None => input.clone(),
        };
        let mut blocks = Vec::with_capacity(N_BLOCKS);
        for k in 0..N_BLOCKS {
            let (ln, lnc) = self.ln_fwd(&h, self.layout.block_ln[k], cfg.norm_axis);
            let r = layers::relu(&ln);
            let ix = self.layout.block_conv[k];
            let (mut cv, cc) = layers::conv1d(&r, self.p(ix.w), self.p(ix.b), w);
            let mask = match &mut mode {
                Mode::Train(rng) if cfg.block_dropout[k] > 0.0 => {
                    let m = layers::dropout_mask(cv.data.len(), cfg.block_dropout[k], *rng);
                    layers::apply_mask(&mut cv, &m);
                    Some(m)
                }
                _ => None,
            };
            let pre_blur_len = cv.len;
            if k == BLUR_AFTER_BLOCK {
                cv = layers::blur_pool(&cv);
            }
            blocks.push(BlockCache { ln: lnc, relu: r, conv: cc, mask, pre_blur_len });
            h = cv;
        }
        let final_len = h.len;
        let g = layers::gap(&h);
        let (l0, lstm_ln) = self.ln_fwd(&g, self.layout.lstm_ln, NormAxis::Channel);
        let (h1, lc1) = lstm_forward(&l0, &self.lstm_w(self.layout.lstm[0]), batch);
        let (mut feat, lc2) = lstm_forward(&h1, &self.lstm_w(self.layout.lstm[1]), batch);
        let feat_mask = match &mut mode {
            Mode::Train(rng) if cfg.lstm_dropout > 0.0 => {
                let m = layers::dropout_mask(feat.data.len(), cfg.lstm_dropout, *rng);
                layers::apply_mask(&mut feat, &m);
                Some(m)
            }
            _ => None,
        };
        let (ol, out_ln) = self.ln_fwd(&feat, self.layout.out_ln, NormAxis::Channel);
        let logits = layers::linear(&ol, self.p(self.layout.out_fc.w), self.p(self.layout.out_fc.b), cfg.n_classes);
        let probs = layers::softmax_columns(&logits).data;

        let (domain_probs, ada_cache) = if ada {
            let lay = &self.layout;
            let gr = layers::grl_forward(&feat);
            let (a1, c1) = self.ln_fwd(&gr, lay.ada_ln1, NormAxis::Channel);
            let z1 = layers::linear(&a1, self.p(lay.ada_fc1.w), self.p(lay.ada_fc1.b), w);
            let r1 = layers::relu(&z1);
            let (a2, c2) = self.ln_fwd(&r1, lay.ada_ln2, NormAxis::Channel);
            let z2 = layers::linear(&a2, self.p(lay.ada_fc2.w), self.p(lay.ada_fc2.b), cfg.n_domains);
            (Some(layers::softmax_columns(&z2).data), Some(AdaCache { a1, c1, r1, a2, c2 }))
        } else {
            (None, None)
        };
        if !probs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("class probabilities".into()));
        }
        let cache = ForwardCache { input, blocks, final_len, lstm_ln, l0, h1, lc1, lc2, feat_mask, out_ln, ol, ada: ada_cache, batch };
        Ok((ForwardOutput { probs, domain_probs, n }, cache))
    }

    /// Reverse pass from logit gradients of the class head and, when the
    /// domain head ran, of the domain head.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], ddomain: Option<&[f64]>) -> Result<Vec<Tensor>> {
        let cfg = &self.config;
        let lay = &self.layout;
        let w = cfg.hidden();
        let n = cache.ol.cols();
        let mut grads = self.zero_grads();
        let vec_act = |rows: usize, data: &[f64]| Act { rows, frames: n, len: 1, data: data.to_vec() };

        let dz = vec_act(cfg.n_classes, dlogits);
        let [dw, db] = slices(&mut grads, [lay.out_fc.w, lay.out_fc.b]);
        let dol = layers::linear_backward(&dz, &cache.ol, self.p(lay.out_fc.w), dw, db);
        let [dg, db] = slices(&mut grads, [lay.out_ln.g, lay.out_ln.b]);
        let mut dfeat = layers::layer_norm_backward(&dol, &cache.out_ln, self.p(lay.out_ln.g), dg, db);

        if let (Some(dd), Some(ac)) = (ddomain, &cache.ada) {
            let dz2 = vec_act(cfg.n_domains, dd);
            let [dw, db] = slices(&mut grads, [lay.ada_fc2.w, lay.ada_fc2.b]);
            let da2 = layers::linear_backward(&dz2, &ac.a2, self.p(lay.ada_fc2.w), dw, db);
            let [dg, db] = slices(&mut grads, [lay.ada_ln2.g, lay.ada_ln2.b]);
            let dr1 = layers::layer_norm_backward(&da2, &ac.c2, self.p(lay.ada_ln2.g), dg, db);
            let dz1 = layers::relu_backward(&dr1, &ac.r1);
            let [dw, db] = slices(&mut grads, [lay.ada_fc1.w, lay.ada_fc1.b]);
            let da1 = layers::linear_backward(&dz1, &ac.a1, self.p(lay.ada_fc1.w), dw, db);
            let [dg, db] = slices(&mut grads, [lay.ada_ln1.g, lay.ada_ln1.b]);
            let dgr = layers::layer_norm_backward(&da1, &ac.c1, self.p(lay.ada_ln1.g), dg, db);
            let rev = layers::grl_backward(&dgr, cfg.grl);
            for (a, b) in dfeat.data.iter_mut().zip(&rev.data) {
                *a += b;
            }
        } else if ddomain.is_some() {
            return Err(Error::Shape("domain gradient given but the domain head did not run".into()));
        }

        if let Some(m) = &cache.feat_mask {
            layers::apply_mask(&mut dfeat, m);
        }
        let [a, b, c] = slices(&mut grads, [lay.lstm[1].wih, lay.lstm[1].whh, lay.lstm[1].b]);
        let dh1 = lstm_backward(&dfeat, &cache.h1, &cache.lc2, &self.lstm_w(lay.lstm[1]), a, b, c);
        let [a, b, c] = slices(&mut grads, [lay.lstm[0].wih, lay.lstm[0].whh, lay.lstm[0].b]);
        let dl0 = lstm_backward(&dh1, &cache.l0, &cache.lc1, &self.lstm_w(lay.lstm[0]), a, b, c);
        let [dg, db] = slices(&mut grads, [lay.lstm_ln.g, lay.lstm_ln.b]);
        let dgap = layers::layer_norm_backward(&dl0, &cache.lstm_ln, self.p(lay.lstm_ln.g), dg, db);
        let mut dh = layers::gap_backward(&dgap, cache.final_len);

        for k in (0..N_BLOCKS).rev() {
            let bc = &cache.blocks[k];
            if k == BLUR_AFTER_BLOCK {
                dh = layers::blur_pool_backward(&dh, bc.pre_blur_len);
            }
            if let Some(m) = &bc.mask {
                layers::apply_mask(&mut dh, m);
            }
            let ix = lay.block_conv[k];
            let [dw, db] = slices(&mut grads, [ix.w, ix.b]);
            let dr = layers::conv1d_backward(&dh, &bc.conv, self.p(ix.w), w, dw, db);
            let dln = layers::relu_backward(&dr, &bc.relu);
            let ln = lay.block_ln[k];
            let [dg, db] = slices(&mut grads, [ln.g, ln.b]);
            dh = layers::layer_norm_backward(&dln, &bc.ln, self.p(ln.g), dg, db);
        }
        if let Some(ix) = lay.stem {
            let [dw, db] = slices(&mut grads, [ix.w, ix.b]);
            layers::linear_backward_params(&dh, &cache.input, dw, db);
        }
        let _ = cache.batch;
        Ok(grads)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors: self.names.iter().zip(&self.params).map(|(n, t)| NamedTensor { name: n.clone(), shape: t.shape.clone(), values: t.values.clone() }).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        let mut rng = crate::rng::stream(0, &[]);
        let mut m = Self::new(ck.config.clone(), &mut rng)?;
        if ck.tensors.len() != m.params.len() {
            return Err(Error::Shape("checkpoint tensor count does not match the model".into()));
        }
        for (i, t) in ck.tensors.iter().enumerate() {
            if t.name != m.names[i] || t.shape != m.params[i].shape {
                return Err(Error::Shape(format!("checkpoint tensor '{}' does not match '{}'", t.name, m.names[i])));
            }
            m.params[i] = Tensor::from_vec(&t.shape, t.values.clone())?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}
