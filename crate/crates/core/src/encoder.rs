//! Triplet transformer encoder with demographic fusion.
//!
//! A series of `(time, feature, value)` triplets is embedded row by row as the
//! sum of a feature lookup and two small scalar-to-vector networks, passed
//! through self-attention blocks without positional encoding, and pooled by a
//! learned softmax weighting into `e_T`. Static demographics are mapped to
//! `e_d` by a feed-forward network. The encoding is `e_E = [e_T, e_d]`.
//!
//! A linear forecast head on `e_E` predicts the next observation for the
//! self-supervised objective; the oxygen-flag output alone goes through a
//! sigmoid.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamFile, Tensor, Var};
use crate::data::{FeatureKind, Triplet, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_var: usize,
    pub d_stat: usize,
    pub blocks: usize,
    pub heads: usize,
    pub dropout: f64,
    pub max_rows: usize,
    pub n_features: usize,
    /// Width of the encoded demographic vector (depends on the ward vocabulary).
    pub demo_width: usize,
    /// Triplet times (hours) are divided by this before the time embedding.
    pub time_scale_hours: f64,
}

impl EncoderConfig {
    /// 40/10 split, 2 blocks of 4 heads, dropout 0.2, at most 60 rows.
    pub fn standard(demo_width: usize) -> Self {
        Self {
            d_var: 40,
            d_stat: 10,
            blocks: 2,
            heads: 4,
            dropout: 0.2,
            max_rows: 60,
            n_features: N_FEATURES,
            demo_width,
            time_scale_hours: 24.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.d_var == 0 || self.heads == 0 || !self.d_var.is_multiple_of(self.heads) {
            bad.push("d_var must be a positive multiple of heads");
        }
        if self.d_stat == 0 {
            bad.push("d_stat must be positive");
        }
        if self.n_features != N_FEATURES {
            bad.push("n_features must be 7");
        }
        if self.demo_width == 0 {
            bad.push("demo_width must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push("dropout must lie in [0, 1)");
        }
        if !(self.time_scale_hours > 0.0) {
            bad.push("time_scale_hours must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn d(&self) -> usize {
        self.d_var + self.d_stat
    }

    pub fn head_dim(&self) -> usize {
        self.d_var / self.heads
    }

    /// Hidden width of the value/time/fusion networks: floor(sqrt(d_var)).
    pub fn small_hidden(&self) -> usize {
        ((self.d_var as f64).sqrt().floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct BlockLayout {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    ln1: Norm,
    ff1: Dense,
    ff2: Dense,
    ln2: Norm,
}

/// Indices of each named tensor in the flat parameter list.
#[derive(Debug, Clone)]
struct Layout {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    kinds: Vec<InitKind>,
    feature_table: usize,
    value_cve: [Dense; 2],
    time_cve: [Dense; 2],
    blocks: Vec<BlockLayout>,
    fusion: [Dense; 2],
    demo: [Dense; 3],
    head: Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum InitKind {
    Glorot,
    Zero,
    One,
}

struct LayoutBuilder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    kinds: Vec<InitKind>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, kind: InitKind) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.kinds.push(kind);
        self.names.len() - 1
    }

    fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Dense {
        Dense {
            w: self.add(format!("{name}.w"), vec![fan_in, fan_out], InitKind::Glorot),
            b: self.add(format!("{name}.b"), vec![1, fan_out], InitKind::Zero),
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> Norm {
        Norm {
            gain: self.add(format!("{name}.gain"), vec![1, width], InitKind::One),
            bias: self.add(format!("{name}.bias"), vec![1, width], InitKind::Zero),
        }
    }
}

impl Layout {
    fn new(cfg: &EncoderConfig) -> Self {
        let mut lb = LayoutBuilder {
            names: Vec::new(),
            shapes: Vec::new(),
            kinds: Vec::new(),
        };
        let dv = cfg.d_var;
        let hs = cfg.small_hidden();
        let feature_table = lb.add("feature_table".into(), vec![cfg.n_features, dv], InitKind::Glorot);
        let value_cve = [lb.dense("value_cve.l1", 1, hs), lb.dense("value_cve.l2", hs, dv)];
        let time_cve = [lb.dense("time_cve.l1", 1, hs), lb.dense("time_cve.l2", hs, dv)];
        let blocks = (0..cfg.blocks)
            .map(|b| BlockLayout {
                q: lb.dense(&format!("block{b}.query"), dv, dv),
                k: lb.dense(&format!("block{b}.key"), dv, dv),
                v: lb.dense(&format!("block{b}.value"), dv, dv),
                o: lb.dense(&format!("block{b}.output"), dv, dv),
                ln1: lb.norm(&format!("block{b}.attn_norm"), dv),
                ff1: lb.dense(&format!("block{b}.ffn1"), dv, 2 * dv),
                ff2: lb.dense(&format!("block{b}.ffn2"), 2 * dv, dv),
                ln2: lb.norm(&format!("block{b}.ffn_norm"), dv),
            })
            .collect();
        let fusion = [lb.dense("fusion.l1", dv, hs), lb.dense("fusion.l2", hs, 1)];
        let ds = cfg.d_stat;
        let demo = [
            lb.dense("demo.l1", cfg.demo_width, 2 * ds),
            lb.dense("demo.l2", 2 * ds, ds),
            lb.dense("demo.l3", ds, ds),
        ];
        let head = lb.dense("forecast", cfg.d(), cfg.n_features);
        Self {
            names: lb.names,
            shapes: lb.shapes,
            kinds: lb.kinds,
            feature_table,
            value_cve,
            time_cve,
            blocks,
            fusion,
            demo,
            head,
        }
    }
}

/// The fixed-length encoding of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub e_t: Vec<f64>,
    pub e_d: Vec<f64>,
    pub e_e: Vec<f64>,
}

/// Dropout behaviour for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

struct DropoutStream {
    p: f64,
    seed: Option<u64>,
    counter: u64,
}

impl DropoutStream {
    fn new(p: f64, mode: Mode) -> Self {
        Self {
            p,
            seed: match mode {
                Mode::Eval => None,
                Mode::Train { seed } => Some(seed),
            },
            counter: 0,
        }
    }

    fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.seed {
            None => Ok(x),
            Some(seed) => {
                self.counter += 1;
                let site = seed ^ self.counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                g.dropout(x, self.p, true, site)
            }
        }
    }
}

/// Graph nodes produced by one forward pass through [`Encoder::forward`].
pub struct ForwardVars {
    pub e_t: Var,
    pub e_d: Var,
    pub e_e: Var,
    pub forecast: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    params: Vec<Tensor>,
    names: Vec<String>,
}

impl Encoder {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout
            .shapes
            .iter()
            .zip(&layout.kinds)
            .map(|(shape, kind)| match kind {
                InitKind::Zero => Tensor::zeros(shape),
                InitKind::One => Tensor::filled(shape, 1.0),
                InitKind::Glorot => {
                    let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let n = shape[0] * shape[1];
                    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
                    Tensor::new(shape.clone(), data).expect("layout shapes are positive")
                }
            })
            .collect();
        Ok(Self {
            config,
            params,
            names: layout.names,
        })
    }

    /// Same layout, every tensor zero (gains included).
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        let mut e = Self::init(config, 0)?;
        for p in &mut e.params {
            p.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        Ok(e)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Mutable access to one tensor by name.
    pub fn param_by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.params[i])
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// Records every parameter on `g` (as trainable leaves when `trainable`).
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    fn dense(g: &mut Graph, p: &[Var], d: Dense, x: Var) -> Result<Var> {
        let z = g.matmul(x, p[d.w])?;
        g.add_row(z, p[d.b])
    }

    fn embed_g(&self, g: &mut Graph, p: &[Var], lay: &Layout, triplets: &[Triplet]) -> Result<Var> {
        if triplets.is_empty() {
            return Err(Error::EmptySeries);
        }
        let idx: Vec<usize> = triplets.iter().map(|t| t.feature.code()).collect();
        let ef = g.embedding(p[lay.feature_table], &idx)?;
        let vals = g.constant(Tensor::column(triplets.iter().map(|t| t.value).collect()));
        let times = g.constant(Tensor::column(
            triplets
                .iter()
                .map(|t| t.t / self.config.time_scale_hours)
                .collect(),
        ));
        let mut cve = |input: Var, net: [Dense; 2]| -> Result<Var> {
            let h = Self::dense(g, p, net[0], input)?;
            let h = g.tanh(h);
            Self::dense(g, p, net[1], h)
        };
        let ev = cve(vals, lay.value_cve)?;
        let et = cve(times, lay.time_cve)?;
        let s = g.add(ef, ev)?;
        g.add(s, et)
    }

    fn context_g(
        &self,
        g: &mut Graph,
        p: &[Var],
        lay: &Layout,
        x: Var,
        pad: Option<&[bool]>,
        drop: &mut DropoutStream,
    ) -> Result<Var> {
        let n = g.value(x).dims2().0;
        let mask = match pad {
            Some(pad) if pad.iter().any(|&b| b) => {
                if pad.len() != n {
                    return Err(Error::Shape {
                        op: "contextualize",
                        lhs: vec![n],
                        rhs: vec![pad.len()],
                    });
                }
                let row: Vec<f64> = pad
                    .iter()
                    .map(|&b| if b { f64::NEG_INFINITY } else { 0.0 })
                    .collect();
                Some(Tensor::matrix(n, n, row.repeat(n)))
            }
            _ => None,
        };
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = x;
        for b in &lay.blocks {
            let q = Self::dense(g, p, b.q, x)?;
            let k = Self::dense(g, p, b.k, x)?;
            let v = Self::dense(g, p, b.v, x)?;
            let mut heads = Vec::with_capacity(self.config.heads);
            for h in 0..self.config.heads {
                let (lo, hi) = (h * dh, (h + 1) * dh);
                let qh = g.slice_cols(q, lo, hi)?;
                let kh = g.slice_cols(k, lo, hi)?;
                let vh = g.slice_cols(v, lo, hi)?;
                let kt = g.transpose(kh);
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale);
                let attn = g.softmax(scores, 1, mask.as_ref())?;
                let attn = drop.apply(g, attn)?;
                heads.push(g.matmul(attn, vh)?);
            }
            let cat = g.concat(&heads, 1)?;
            let o = Self::dense(g, p, b.o, cat)?;
            let r = g.add(x, o)?;
            x = g.layer_norm(r, p[b.ln1.gain], p[b.ln1.bias], 1)?;
            let f = Self::dense(g, p, b.ff1, x)?;
            let f = g.relu(f);
            let f = Self::dense(g, p, b.ff2, f)?;
            let f = drop.apply(g, f)?;
            let r = g.add(x, f)?;
            x = g.layer_norm(r, p[b.ln2.gain], p[b.ln2.bias], 1)?;
        }
        Ok(x)
    }

    fn fuse_g(&self, g: &mut Graph, p: &[Var], lay: &Layout, c: Var, pad: Option<&[bool]>) -> Result<Var> {
        let n = g.value(c).dims2().0;
        let mask = pad.filter(|m| m.iter().any(|&b| b)).map(|m| {
            Tensor::column(m.iter().map(|&b| if b { f64::NEG_INFINITY } else { 0.0 }).collect())
        });
        if let Some(m) = &mask {
            if m.len() != n {
                return Err(Error::Shape {
                    op: "fuse",
                    lhs: vec![n],
                    rhs: vec![m.len()],
                });
            }
        }
        let h = Self::dense(g, p, lay.fusion[0], c)?;
        let h = g.tanh(h);
        let scores = Self::dense(g, p, lay.fusion[1], h)?;
        let alpha = g.softmax(scores, 0, mask.as_ref())?;
        let at = g.transpose(alpha);
        g.matmul(at, c)
    }

    fn demo_g(&self, g: &mut Graph, p: &[Var], lay: &Layout, x: &[f64]) -> Result<Var> {
        if x.len() != self.config.demo_width {
            return Err(Error::Shape {
                op: "embed_demographics",
                lhs: vec![self.config.demo_width],
                rhs: vec![x.len()],
            });
        }
        let x = g.constant(Tensor::row(x.to_vec()));
        let h = Self::dense(g, p, lay.demo[0], x)?;
        let h = g.tanh(h);
        let h = Self::dense(g, p, lay.demo[1], h)?;
        let h = g.tanh(h);
        Self::dense(g, p, lay.demo[2], h)
    }

    fn head_g(&self, g: &mut Graph, p: &[Var], lay: &Layout, e: Var) -> Result<Var> {
        let z = Self::dense(g, p, lay.head, e)?;
        let flag = FeatureKind::SupplementalOxygen.code();
        let cont = g.slice_cols(z, 0, flag)?;
        let cat = g.slice_cols(z, flag, flag + 1)?;
        let cat = g.sigmoid(cat);
        g.concat(&[cont, cat], 1)
    }

    /// Full forward pass on a graph whose parameters were recorded by [`Encoder::bind`].
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        triplets: &[Triplet],
        demographics: &[f64],
        mode: Mode,
    ) -> Result<ForwardVars> {
        let lay = self.layout();
        let mut drop = DropoutStream::new(self.config.dropout, mode);
        let emb = self.embed_g(g, p, &lay, triplets)?;
        let c = self.context_g(g, p, &lay, emb, None, &mut drop)?;
        let e_t = self.fuse_g(g, p, &lay, c, None)?;
        let e_d = self.demo_g(g, p, &lay, demographics)?;
        let e_e = g.concat(&[e_t, e_d], 1)?;
        let forecast = self.head_g(g, p, &lay, e_e)?;
        Ok(ForwardVars {
            e_t,
            e_d,
            e_e,
            forecast,
        })
    }

    fn eval_graph(&self) -> (Graph, Vec<Var>, Layout) {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        (g, p, self.layout())
    }

    /// `n x d_var` triplet embeddings.
    pub fn embed_triplets(&self, triplets: &[Triplet]) -> Result<Tensor> {
        let (mut g, p, lay) = self.eval_graph();
        let v = self.embed_g(&mut g, &p, &lay, triplets)?;
        Ok(g.value(v).clone())
    }

    /// Attention blocks in evaluation mode; `pad[i]` marks padded rows.
    pub fn contextualize(&self, embeddings: &Tensor, pad: Option<&[bool]>) -> Result<Tensor> {
        let (mut g, p, lay) = self.eval_graph();
        let x = g.constant(embeddings.clone());
        let mut drop = DropoutStream::new(self.config.dropout, Mode::Eval);
        let c = self.context_g(&mut g, &p, &lay, x, pad, &mut drop)?;
        Ok(g.value(c).clone())
    }

    /// Softmax-weighted pooling of contextual rows into `e_T`.
    pub fn fuse(&self, contextual: &Tensor, pad: Option<&[bool]>) -> Result<Vec<f64>> {
        let (mut g, p, lay) = self.eval_graph();
        let c = g.constant(contextual.clone());
        let e = self.fuse_g(&mut g, &p, &lay, c, pad)?;
        Ok(g.value(e).data().to_vec())
    }

    pub fn embed_demographics(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (mut g, p, lay) = self.eval_graph();
        let e = self.demo_g(&mut g, &p, &lay, x)?;
        Ok(g.value(e).data().to_vec())
    }

    /// Evaluation-mode encoding of one series.
    pub fn encode(&self, triplets: &[Triplet], demographics: &[f64]) -> Result<Encoding> {
        let (mut g, p, _) = self.eval_graph();
        let f = self.forward(&mut g, &p, triplets, demographics, Mode::Eval)?;
        Ok(Encoding {
            e_t: g.value(f.e_t).data().to_vec(),
            e_d: g.value(f.e_d).data().to_vec(),
            e_e: g.value(f.e_e).data().to_vec(),
        })
    }

    /// Encodes several series by padding them to a common length and masking
    /// the padded rows out of attention and pooling.
    pub fn encode_batch(&self, items: &[(&[Triplet], &[f64])]) -> Result<Vec<Encoding>> {
        let embeddings = items
            .iter()
            .map(|(t, _)| self.embed_triplets(t))
            .collect::<Result<Vec<_>>>()?;
        let n_max = embeddings.iter().map(|e| e.dims2().0).max().unwrap_or(0);
        let dv = self.config.d_var;
        items
            .iter()
            .zip(embeddings)
            .map(|((_, demo), emb)| {
                let n = emb.dims2().0;
                let mut data = emb.into_data();
                data.resize(n_max * dv, 0.0);
                let padded = Tensor::matrix(n_max, dv, data);
                let pad: Vec<bool> = (0..n_max).map(|i| i >= n).collect();
                let c = self.contextualize(&padded, Some(&pad))?;
                let e_t = self.fuse(&c, Some(&pad))?;
                let e_d = self.embed_demographics(demo)?;
                let mut e_e = e_t.clone();
                e_e.extend_from_slice(&e_d);
                Ok(Encoding { e_t, e_d, e_e })
            })
            .collect()
    }

    /// Next-observation prediction from an encoding: six linear outputs and
    /// a sigmoid on the oxygen flag.
    pub fn forecast(&self, e_e: &[f64]) -> Result<Vec<f64>> {
        if e_e.len() != self.config.d() {
            return Err(Error::Shape {
                op: "forecast",
                lhs: vec![self.config.d()],
                rhs: vec![e_e.len()],
            });
        }
        let (mut g, p, lay) = self.eval_graph();
        let e = g.constant(Tensor::row(e_e.to_vec()));
        let out = self.head_g(&mut g, &p, &lay, e)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn to_param_file(&self) -> ParamFile {
        ParamFile {
            metadata: toml::to_string(&self.config).expect("config serializes"),
            params: self
                .names
                .iter()
                .cloned()
                .zip(self.params.iter().cloned())
                .collect(),
        }
    }

    /// Rebuilds an encoder, checking every name and shape against the config header.
    pub fn from_param_file(file: ParamFile) -> Result<Self> {
        let config: EncoderConfig = toml::from_str(&file.metadata)
            .map_err(|e| Error::Format(format!("encoder config header: {e}")))?;
        config.validate()?;
        let layout = Layout::new(&config);
        if file.params.len() != layout.names.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                layout.names.len(),
                file.params.len()
            )));
        }
        let mut params = Vec::with_capacity(file.params.len());
        for ((name, t), (want, shape)) in file
            .params
            .into_iter()
            .zip(layout.names.iter().zip(&layout.shapes))
        {
            if &name != want || t.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor `{name}` {:?} does not match expected `{want}` {shape:?}",
                    t.shape()
                )));
            }
            params.push(t);
        }
        Ok(Self {
            config,
            params,
            names: layout.names,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_param_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_param_file(ParamFile::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::sigmoid;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            d_var: 4,
            d_stat: 2,
            blocks: 1,
            heads: 2,
            dropout: 0.0,
            max_rows: 60,
            n_features: 7,
            demo_width: 3,
            time_scale_hours: 1.0,
        }
    }

    fn trip(t: f64, f: usize, v: f64) -> Triplet {
        Triplet {
            t,
            feature: FeatureKind::from_code(f).unwrap(),
            value: v,
        }
    }

    #[test]
    fn standard_config_dimensions() {
        let c = EncoderConfig::standard(7);
        assert_eq!((c.d_var, c.d_stat, c.d()), (40, 10, 50));
        assert_eq!(c.head_dim(), 10);
        assert_eq!(c.small_hidden(), 6);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut c = tiny_config();
        c.heads = 3;
        assert!(Encoder::init(c, 0).is_err());
    }

    #[test]
    fn zero_params_give_zero_embeddings() {
        let e = Encoder::zeros(tiny_config()).unwrap();
        let emb = e
            .embed_triplets(&[trip(0.0, 0, 1.3), trip(2.0, 5, -0.4)])
            .unwrap();
        assert!(emb.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_series_is_an_error() {
        let e = Encoder::init(tiny_config(), 1).unwrap();
        assert!(matches!(e.embed_triplets(&[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn identical_triplets_identical_rows() {
        let e = Encoder::init(tiny_config(), 1).unwrap();
        let emb = e
            .embed_triplets(&[trip(1.0, 2, 0.5), trip(3.0, 1, 0.1), trip(1.0, 2, 0.5)])
            .unwrap();
        assert_eq!(emb.row_slice(0), emb.row_slice(2));
    }

    #[test]
    fn hand_computed_triplet_embedding() {
        // d_var = 2, hidden = floor(sqrt 2) = 1
        let cfg = EncoderConfig {
            d_var: 2,
            heads: 1,
            ..tiny_config()
        };
        let mut e = Encoder::zeros(cfg).unwrap();
        let set = |e: &mut Encoder, name: &str, vals: &[f64]| {
            e.param_by_name_mut(name)
                .unwrap()
                .data_mut()
                .copy_from_slice(vals);
        };
        set(&mut e, "feature_table", &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4]);
        set(&mut e, "value_cve.l1.w", &[0.5]);
        set(&mut e, "value_cve.l1.b", &[0.1]);
        set(&mut e, "value_cve.l2.w", &[2.0, -1.0]);
        set(&mut e, "value_cve.l2.b", &[0.01, 0.02]);
        set(&mut e, "time_cve.l1.w", &[-0.3]);
        set(&mut e, "time_cve.l1.b", &[0.0]);
        set(&mut e, "time_cve.l2.w", &[1.0, 1.0]);
        set(&mut e, "time_cve.l2.b", &[0.0, 0.5]);
        let (t, v) = (2.0, 0.8);
        let emb = e.embed_triplets(&[trip(t, 3, v)]).unwrap();
        let hv = (0.5f64 * v + 0.1).tanh();
        let ht = (-0.3f64 * t).tanh();
        let expected = [
            0.7 + (2.0 * hv + 0.01) + ht,
            0.8 + (-hv + 0.02) + (ht + 0.5),
        ];
        for (a, b) in emb.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn single_row_attention_is_residual_path() {
        let e = Encoder::init(tiny_config(), 4).unwrap();
        let emb = e.embed_triplets(&[trip(0.0, 1, 0.3)]).unwrap();
        let c = e.contextualize(&emb, None).unwrap();
        // With one row the attention output is exactly the value projection,
        // so the block reduces to dense layers; recompute it directly.
        let lay = e.layout();
        let b = &lay.blocks[0];
        let p = e.params();
        let x = emb.data().to_vec();
        let affine = |x: &[f64], d: Dense| -> Vec<f64> {
            let w = &p[d.w];
            let (r, cols) = w.dims2();
            (0..cols)
                .map(|j| (0..r).map(|i| x[i] * w.get2(i, j)).sum::<f64>() + p[d.b].data()[j])
                .collect()
        };
        let ln = |x: &[f64], n: Norm| -> Vec<f64> {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
            let s = (var + crate::autodiff::LAYER_NORM_EPS).sqrt();
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - m) / s * p[n.gain].data()[i] + p[n.bias].data()[i])
                .collect()
        };
        let v = affine(&x, b.v);
        let o = affine(&v, b.o);
        let r: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
        let h = ln(&r, b.ln1);
        let f1: Vec<f64> = affine(&h, b.ff1).into_iter().map(|z| z.max(0.0)).collect();
        let f2 = affine(&f1, b.ff2);
        let r2: Vec<f64> = h.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let expected = ln(&r2, b.ln2);
        for (a, b) in c.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_of_single_row_is_that_row() {
        let e = Encoder::init(tiny_config(), 9).unwrap();
        let c = Tensor::row(vec![0.3, -1.0, 2.0, 0.25]);
        assert_eq!(e.fuse(&c, None).unwrap(), c.data().to_vec());
        let same = Tensor::matrix(3, 4, [0.3, -1.0, 2.0, 0.25].repeat(3));
        for (a, b) in e.fuse(&same, None).unwrap().iter().zip(c.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fuse_matches_softmax_weighted_sum() {
        let mut e = Encoder::init(tiny_config(), 2).unwrap();
        let w1 = [0.2, -0.1, 0.4, 0.3, 0.0, 0.5, -0.2, 0.1];
        e.param_by_name_mut("fusion.l1.w").unwrap().data_mut().copy_from_slice(&w1);
        e.param_by_name_mut("fusion.l1.b").unwrap().data_mut().copy_from_slice(&[0.05, -0.05]);
        e.param_by_name_mut("fusion.l2.w").unwrap().data_mut().copy_from_slice(&[1.5, -0.7]);
        e.param_by_name_mut("fusion.l2.b").unwrap().data_mut().copy_from_slice(&[0.3]);
        let rows = [[0.1, 0.2, -0.3, 1.0], [-0.5, 0.4, 0.9, 0.0], [1.2, -1.1, 0.3, 0.7]];
        let c = Tensor::matrix(3, 4, rows.concat());
        let scores: Vec<f64> = rows
            .iter()
            .map(|r| {
                let h: Vec<f64> = (0..2)
                    .map(|j| ((0..4).map(|i| r[i] * w1[i * 2 + j]).sum::<f64>() + [0.05, -0.05][j]).tanh())
                    .collect();
                1.5 * h[0] - 0.7 * h[1] + 0.3
            })
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let expected: Vec<f64> = (0..4)
            .map(|j| (0..3).map(|i| scores[i].exp() / z * rows[i][j]).sum())
            .collect();
        for (a, b) in e.fuse(&c, None).unwrap().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn demographics_zero_and_width() {
        let e = Encoder::zeros(tiny_config()).unwrap();
        assert_eq!(e.embed_demographics(&[1.0, 0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(e.embed_demographics(&[1.0]).is_err());
        let full = Encoder::init(EncoderConfig::standard(7), 3).unwrap();
        assert_eq!(full.embed_demographics(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap().len(), 10);
    }

    #[test]
    fn demographic_map_separates_inputs() {
        let e = Encoder::init(EncoderConfig::standard(7), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let a: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_ne!(e.embed_demographics(&a).unwrap(), e.embed_demographics(&b).unwrap());
        }
    }

    #[test]
    fn encoding_is_concatenation() {
        let e = Encoder::init(EncoderConfig::standard(6), 5).unwrap();
        let enc = e
            .encode(&[trip(0.0, 0, 0.1), trip(0.0, 4, -0.2), trip(6.0, 5, 1.1)], &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(enc.e_e.len(), 50);
        assert_eq!(&enc.e_e[..40], enc.e_t.as_slice());
        assert_eq!(&enc.e_e[40..], enc.e_d.as_slice());
    }

    #[test]
    fn forecast_head_activations() {
        let cfg = tiny_config();
        let e = Encoder::zeros(cfg.clone()).unwrap();
        let out = e.forecast(&[0.3; 6]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]);

        let mut e = Encoder::zeros(cfg).unwrap();
        // weight on e_E[0] -> pulse output, and e_E[1] -> oxygen flag
        let w = e.param_by_name_mut("forecast.w").unwrap();
        w.data_mut()[5] = 2.0;
        w.data_mut()[7 + 6] = -3.0;
        let x = [0.4, 0.9, 0.0, 0.0, 0.0, 0.0];
        let out = e.forecast(&x).unwrap();
        assert!((out[5] - 0.8).abs() < 1e-15);
        assert!((out[6] - sigmoid(-2.7)).abs() < 1e-15);
        assert!(out[6] > 0.0 && out[6] < 1.0);
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let e = Encoder::init(EncoderConfig::standard(6), 8).unwrap();
        let file = e.to_param_file();
        let bytes = file.to_bytes();
        let back = Encoder::from_param_file(ParamFile::read_from(&mut &bytes[..]).unwrap()).unwrap();
        assert_eq!(back, e);
        let t = [trip(0.0, 1, 0.2), trip(3.0, 2, -0.9)];
        let demo = [0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        assert_eq!(back.encode(&t, &demo).unwrap(), e.encode(&t, &demo).unwrap());
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let e = Encoder::init(tiny_config(), 8).unwrap();
        let mut file = e.to_param_file();
        file.params[0].1 = Tensor::zeros(&[7, 5]);
        assert!(Encoder::from_param_file(file).is_err());
    }
}
