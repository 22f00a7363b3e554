//! Fully connected autoencoder trained on rank-weighted reconstruction error.
//!
//! The encoder sees inputs mapped to `[0,1]^{n_x}` through the affine map of
//! the decision box and ends in a sigmoid, so latent codes live in
//! `[0,1]^{n_z}`. The MLP decoder ends in a scaled and shifted sigmoid whose
//! range is the decision box itself; the linear decoder `x̂ = Az + b` is
//! clipped to the box at inference time instead.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadataset::MetaDataset;
use crate::problems::BoxDomain;
use crate::sampling::RngStream;

pub const EMBEDDING_FORMAT: &str = "meta-bbo-ae-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputBounding {
    None,
    SigmoidBox { domain: BoxDomain },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_bounding: OutputBounding,
}

impl MlpSpec {
    fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "network needs >= 2 layers of size >= 1, got {:?}",
                self.layer_sizes
            )));
        }
        if let OutputBounding::SigmoidBox { domain } = &self.output_bounding {
            let out = *self.layer_sizes.last().unwrap();
            if domain.dim() != out {
                return Err(Error::DimensionMismatch {
                    what: "output box vs output layer",
                    expected: out,
                    got: domain.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Dense feed-forward network. Weights are stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    // cached (lower, width) of the sigmoid output box
    out_box: Option<(Array1<f64>, Array1<f64>)>,
}

struct Cache {
    pre: Vec<Array2<f64>>,
    act: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let sizes = &spec.layer_sizes;
        let weights = sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        let out_box = match &spec.output_bounding {
            OutputBounding::None => None,
            OutputBounding::SigmoidBox { domain } => Some((
                Array1::from(domain.lower().to_vec()),
                Array1::from(
                    (0..domain.dim())
                        .map(|i| domain.width(i))
                        .collect::<Vec<_>>(),
                ),
            )),
        };
        Ok(Self {
            spec,
            weights,
            biases,
            out_box,
        })
    }

    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn random<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for w in &mut net.weights {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.spec.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn forward_cached(&self, input: Array2<f64>) -> Cache {
        let layers = self.n_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut act = Vec::with_capacity(layers + 1);
        act.push(input);
        for l in 0..layers {
            let z = act[l].dot(&self.weights[l].t()) + &self.biases[l];
            let a = if l + 1 < layers {
                match self.spec.hidden_activation {
                    Activation::Tanh => z.mapv(f64::tanh),
                    Activation::Relu => z.mapv(|v| v.max(0.0)),
                }
            } else {
                match &self.out_box {
                    None => z.clone(),
                    Some((lo, width)) => {
                        let mut a = z.mapv(sigmoid);
                        a *= width;
                        a += lo;
                        a
                    }
                }
            };
            pre.push(z);
            act.push(a);
        }
        Cache { pre, act }
    }

    /// Batch forward pass, one row per sample.
    pub fn forward_batch(&self, input: Array2<f64>) -> Array2<f64> {
        self.forward_cached(input).act.pop().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward_batch(input).into_raw_vec_and_offset().0
    }

    /// Accumulates parameter gradients into `grad` (flat layout) and returns
    /// the gradient with respect to the input.
    fn backward(&self, cache: &Cache, d_out: Array2<f64>, grad: &mut [f64]) -> Array2<f64> {
        let layers = self.n_layers();
        let offsets = self.param_offsets();
        let mut delta = d_out;
        for l in (0..layers).rev() {
            let z = &cache.pre[l];
            if l + 1 < layers {
                let a = &cache.act[l + 1];
                match self.spec.hidden_activation {
                    Activation::Tanh => delta.zip_mut_with(a, |d, &a| *d *= 1.0 - a * a),
                    Activation::Relu => delta.zip_mut_with(z, |d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    }),
                }
            } else if let Some((_, width)) = &self.out_box {
                delta.zip_mut_with(z, |d, &z| {
                    let s = sigmoid(z);
                    *d *= s * (1.0 - s);
                });
                delta *= width;
            }
            let dw = delta.t().dot(&cache.act[l]);
            let db = delta.sum_axis(Axis(0));
            let (w_off, b_off) = offsets[l];
            for (g, v) in grad[w_off..w_off + dw.len()].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            for (g, v) in grad[b_off..b_off + db.len()].iter_mut().zip(db.iter()) {
                *g += v;
            }
            delta = delta.dot(&self.weights[l]);
        }
        delta
    }

    /// Start offsets of `(W_l, b_l)` in the flat parameter layout.
    fn param_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let w_off = off;
                off += w.len();
                let b_off = off;
                off += b.len();
                (w_off, b_off)
            })
            .collect()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = src[off];
                off += 1;
            }
            for v in b.iter_mut() {
                *v = src[off];
                off += 1;
            }
        }
        off
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Mlp,
    Linear,
}

/// Architecture of an encoder/decoder pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub domain: BoxDomain,
    pub n_z: usize,
    /// Encoder hidden sizes; the MLP decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub decoder: DecoderKind,
}

impl AutoencoderSpec {
    /// `n_x → 128 → 64 → n_z` with a mirrored tanh decoder.
    pub fn new(domain: BoxDomain, n_z: usize) -> Self {
        Self {
            domain,
            n_z,
            hidden: vec![128, 64],
            activation: Activation::Tanh,
            decoder: DecoderKind::Mlp,
        }
    }

    pub fn encoder_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![self.domain.dim()];
        sizes.extend(&self.hidden);
        sizes.push(self.n_z);
        Ok(MlpSpec {
            layer_sizes: sizes,
            hidden_activation: self.activation,
            output_bounding: OutputBounding::SigmoidBox {
                domain: BoxDomain::unit(self.n_z)?,
            },
        })
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        match self.decoder {
            DecoderKind::Mlp => {
                let mut sizes = vec![self.n_z];
                sizes.extend(self.hidden.iter().rev());
                sizes.push(self.domain.dim());
                MlpSpec {
                    layer_sizes: sizes,
                    hidden_activation: self.activation,
                    output_bounding: OutputBounding::SigmoidBox {
                        domain: self.domain.clone(),
                    },
                }
            }
            DecoderKind::Linear => MlpSpec {
                layer_sizes: vec![self.n_z, self.domain.dim()],
                hidden_activation: self.activation,
                output_bounding: OutputBounding::None,
            },
        }
    }
}

/// `x̂ = Az + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
}

/// Column-normalized magnitudes `|A_{:,j} / ‖A_{:,j}‖₂|`.
pub fn linear_decoder_magnitudes(d: &LinearDecoder) -> Result<Array2<f64>> {
    let mut out = d.a.clone();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid(format!("linear decoder column {j} is zero")));
        }
        col.mapv_inplace(|v| (v / norm).abs());
    }
    Ok(out)
}

/// A trained (or initialized) encoder/decoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    domain: BoxDomain,
    encoder: Mlp,
    decoder: Mlp,
    kind: DecoderKind,
}

impl Embedding {
    pub fn init<R: Rng + ?Sized>(spec: &AutoencoderSpec, rng: &mut R) -> Result<Self> {
        if spec.n_z == 0 {
            return Err(Error::invalid("latent dimension must be >= 1"));
        }
        let encoder = Mlp::random(spec.encoder_spec()?, rng)?;
        let mut decoder = Mlp::random(spec.decoder_spec(), rng)?;
        if spec.decoder == DecoderKind::Linear {
            // start at the box center with axis-proportional slopes
            let w = &mut decoder.weights[0];
            for i in 0..w.nrows() {
                let half = 0.5 * spec.domain.width(i);
                for v in w.row_mut(i) {
                    *v *= half;
                }
            }
            decoder.biases[0] = Array1::from(spec.domain.center());
        }
        Self::from_parts(spec.domain.clone(), encoder, decoder, spec.decoder)
    }

    pub fn from_parts(
        domain: BoxDomain,
        encoder: Mlp,
        decoder: Mlp,
        kind: DecoderKind,
    ) -> Result<Self> {
        if encoder.input_dim() != domain.dim() || decoder.output_dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                what: "network io vs decision box",
                expected: domain.dim(),
                got: if encoder.input_dim() != domain.dim() {
                    encoder.input_dim()
                } else {
                    decoder.output_dim()
                },
            });
        }
        if encoder.output_dim() != decoder.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "latent size of decoder",
                expected: encoder.output_dim(),
                got: decoder.input_dim(),
            });
        }
        let unit = BoxDomain::unit(encoder.output_dim())?;
        if encoder.spec.output_bounding != (OutputBounding::SigmoidBox { domain: unit }) {
            return Err(Error::invalid(
                "encoder must end in a sigmoid onto [0,1]^n_z",
            ));
        }
        match kind {
            DecoderKind::Linear
                if decoder.n_layers() != 1
                    || decoder.spec.output_bounding != OutputBounding::None =>
            {
                return Err(Error::invalid(
                    "linear decoder must be a single unbounded layer",
                ));
            }
            _ => {}
        }
        Ok(Self {
            domain,
            encoder,
            decoder,
            kind,
        })
    }

    pub fn n_x(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_z(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn decoder_kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    pub fn linear_decoder(&self) -> Option<LinearDecoder> {
        (self.kind == DecoderKind::Linear).then(|| LinearDecoder {
            a: self.decoder.weights[0].clone(),
            b: self.decoder.biases[0].clone(),
        })
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.encoder.forward(&self.domain.to_unit(x))
    }

    /// Always inside the box: the MLP head is bounded by construction (the
    /// clip only absorbs rounding at the edges), the linear head is clipped.
    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.domain.clip(&self.decoder.forward(z))
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.decode(&self.encode(x))
    }

    fn normalize_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut u = x.clone();
        for (j, mut col) in u.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, w) = (self.domain.lower()[j], self.domain.width(j));
            col.mapv_inplace(|v| (v - lo) / w);
        }
        u
    }

    /// Batch reconstruction; `clip` applies the inference-time clip of the
    /// linear decoder.
    fn reconstruct_batch(&self, x: &Array2<f64>, clip: bool) -> Array2<f64> {
        let z = self.encoder.forward_batch(self.normalize_rows(x));
        let mut out = self.decoder.forward_batch(z);
        if clip && self.kind == DecoderKind::Linear {
            for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
                let (lo, hi) = (self.domain.lower()[j], self.domain.upper()[j]);
                col.mapv_inplace(|v| v.clamp(lo, hi));
            }
        }
        out
    }

    /// `Σ_b c_b ‖x_b − x̂_b‖²` and, if requested, its gradient in flat layout.
    ///
    /// The linear decoder is differentiated without its inference clip.
    fn loss_and_grad(&self, x: &Array2<f64>, coef: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let enc_cache = self.encoder.forward_cached(self.normalize_rows(x));
        let z = enc_cache.act.last().unwrap().clone();
        let dec_cache = self.decoder.forward_cached(z);
        let xhat = dec_cache.act.last().unwrap();
        let mut diff = xhat - x;
        let mut loss = 0.0;
        for (row, &c) in diff.axis_iter(Axis(0)).zip(coef) {
            loss += c * row.iter().map(|v| v * v).sum::<f64>();
        }
        if let Some(grad) = grad {
            for (mut row, &c) in diff.axis_iter_mut(Axis(0)).zip(coef) {
                row *= 2.0 * c;
            }
            let n_enc = self.encoder.num_params();
            let (g_enc, g_dec) = grad.split_at_mut(n_enc);
            let d_z = self.decoder.backward(&dec_cache, diff, g_dec);
            self.encoder.backward(&enc_cache, d_z, g_enc);
        }
        loss
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        self.encoder.write_params(&mut p);
        self.decoder.write_params(&mut p);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                what: "flat parameter vector",
                expected: self.num_params(),
                got: p.len(),
            });
        }
        let used = self.encoder.read_params(p);
        self.decoder.read_params(&p[used..]);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EmbeddingFile {
            format: EMBEDDING_FORMAT.to_string(),
            n_x: self.n_x(),
            n_z: self.n_z(),
            decoder_kind: self.kind,
            domain: self.domain.clone(),
            encoder: NetworkFile::from_mlp(&self.encoder),
            decoder: NetworkFile::from_mlp(&self.decoder),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if format != EMBEDDING_FORMAT {
            return Err(Error::FormatVersion {
                expected: EMBEDDING_FORMAT.to_string(),
                found: format.to_string(),
            });
        }
        let file: EmbeddingFile = serde_json::from_value(value)?;
        let e = Self::from_parts(
            file.domain,
            file.encoder.to_mlp()?,
            file.decoder.to_mlp()?,
            file.decoder_kind,
        )?;
        if e.n_x() != file.n_x || e.n_z() != file.n_z {
            return Err(Error::invalid(
                "embedding header dimensions disagree with the networks",
            ));
        }
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(source) => Error::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    format: String,
    n_x: usize,
    n_z: usize,
    decoder_kind: DecoderKind,
    domain: BoxDomain,
    encoder: NetworkFile,
    decoder: NetworkFile,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    spec: MlpSpec,
    /// Row-major `out × in` matrices, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl NetworkFile {
    fn from_mlp(m: &Mlp) -> Self {
        Self {
            spec: m.spec.clone(),
            weights: m
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }

    fn to_mlp(&self) -> Result<Mlp> {
        let mut m = Mlp::zeros(self.spec.clone())?;
        if self.weights.len() != m.weights.len() || self.biases.len() != m.biases.len() {
            return Err(Error::invalid("layer count disagrees with layer_sizes"));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let shape = m.weights[l].dim();
            if w.len() != shape.0 * shape.1 || b.len() != shape.0 {
                return Err(Error::invalid(format!(
                    "layer {l}: weight array size mismatch"
                )));
            }
            if w.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {l}: non-finite weight")));
            }
            m.weights[l] = Array2::from_shape_vec(shape, w.clone()).expect("checked shape");
            m.biases[l] = Array1::from(b.clone());
        }
        Ok(m)
    }
}

/// `w_k = λ^{rank(k)}`, rank 0 for the smallest `f`; ties keep input order.
pub fn rank_weights(f_values: &[f64], lambda: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..f_values.len()).collect();
    order.sort_by(|&a, &b| f_values[a].total_cmp(&f_values[b]).then(a.cmp(&b)));
    let mut w = vec![0.0; f_values.len()];
    for (rank, &i) in order.iter().enumerate() {
        w[i] = lambda.powi(rank as i32);
    }
    w
}

fn dataset_matrix(dataset: &MetaDataset, lambda: f64) -> (Array2<f64>, Vec<f64>) {
    let n_x = dataset.n_x;
    let total: usize = dataset.instances.iter().map(|i| i.points.len()).sum();
    let mut x = Array2::zeros((total, n_x));
    let mut w = Vec::with_capacity(total);
    let mut row = 0;
    for inst in &dataset.instances {
        let f: Vec<f64> = inst.points.iter().map(|p| p.f).collect();
        for (p, wk) in inst.points.iter().zip(rank_weights(&f, lambda)) {
            x.row_mut(row).assign(&ndarray::ArrayView1::from(&p.x[..]));
            w.push(wk);
            row += 1;
        }
    }
    (x, w)
}

/// `(1/N) Σ_i Σ_k w_k^{(i)} ‖x_k^{(i)} − D(E(x_k^{(i)}))‖²`.
pub fn weighted_loss(e: &Embedding, dataset: &MetaDataset, lambda: f64) -> Result<f64> {
    if dataset.instances.is_empty() {
        return Err(Error::invalid("weighted loss of an empty dataset"));
    }
    if dataset.n_x != e.n_x() {
        return Err(Error::DimensionMismatch {
            what: "dataset x-dimension vs embedding",
            expected: e.n_x(),
            got: dataset.n_x,
        });
    }
    let (x, w) = dataset_matrix(dataset, lambda);
    Ok(weighted_loss_rows(e, &x, &w, true) / dataset.instances.len() as f64)
}

fn weighted_loss_rows(e: &Embedding, x: &Array2<f64>, w: &[f64], clip: bool) -> f64 {
    const CHUNK: usize = 4096;
    let mut total = 0.0;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + CHUNK).min(x.nrows());
        let xs = x.slice(ndarray::s![start..end, ..]).to_owned();
        let xhat = e.reconstruct_batch(&xs, clip);
        for ((xr, hr), wk) in xs
            .axis_iter(Axis(0))
            .zip(xhat.axis_iter(Axis(0)))
            .zip(&w[start..end])
        {
            total += wk
                * xr.iter()
                    .zip(hr.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
        }
        start = end;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: RngStream,
}

impl TrainConfig {
    pub fn new(seed: RngStream) -> Self {
        Self {
            lambda: 0.5,
            epochs: 2000,
            batch_size: 256,
            learning_rate: 1e-3,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Full-dataset weighted loss before training, then after every epoch.
    pub losses: Vec<f64>,
    /// Index into `losses` of the returned model.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        self.losses[self.best_epoch]
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam on the weighted reconstruction loss.
///
/// The returned embedding is the best full-dataset snapshot seen, so its loss
/// never exceeds the initial one.
pub fn train(
    spec: &AutoencoderSpec,
    dataset: &MetaDataset,
    cfg: &TrainConfig,
) -> Result<(Embedding, TrainHistory)> {
    cfg.validate()?;
    if dataset.n_x != spec.domain.dim() {
        return Err(Error::DimensionMismatch {
            what: "dataset x-dimension vs autoencoder input",
            expected: spec.domain.dim(),
            got: dataset.n_x,
        });
    }
    if dataset.instances.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut embedding = Embedding::init(spec, &mut cfg.seed.substream(0).rng())?;
    let mut shuffle_rng = cfg.seed.substream(1).rng();

    let n_inst = dataset.instances.len() as f64;
    let (x, w) = dataset_matrix(dataset, cfg.lambda);
    let total = x.nrows();
    let scale = total as f64 / n_inst;

    let full_loss = |e: &Embedding| weighted_loss_rows(e, &x, &w, true) / n_inst;
    let initial = full_loss(&embedding);
    if !initial.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut history = TrainHistory {
        losses: vec![initial],
        best_epoch: 0,
    };
    if cfg.epochs == 0 {
        return Ok((embedding, history));
    }

    let mut params = embedding.params();
    let mut best_params = params.clone();
    let mut grad = vec![0.0; params.len()];
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..total).collect();
    let batch = cfg.batch_size.min(total);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let coef: Vec<f64> = chunk
                .iter()
                .map(|&i| w[i] * scale / chunk.len() as f64)
                .collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            embedding.loss_and_grad(&xb, &coef, Some(&mut grad));
            adam.step(&mut params, &grad);
            embedding.set_params(&params)?;
        }
        let loss = full_loss(&embedding);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.losses.push(loss);
        if loss < history.losses[history.best_epoch] {
            history.best_epoch = epoch;
            best_params.copy_from_slice(&params);
        }
    }
    embedding.set_params(&best_params)?;
    Ok((embedding, history))
}

/// One reconstruction target with its loss weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub x: Vec<f64>,
    pub weight: f64,
}

/// Negative control for [`gradient_check`]: flip the analytic gradient's sign
/// on one layer (counted across encoder then decoder layers).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipLayerSign(pub usize);

/// Max over the selected parameters of `|g_a − g_fd| / (|g_a| + |g_fd| + 1e-12)`,
/// with `g_fd` from central differences of step `1e-6`.
pub fn gradient_check_params(
    e: &Embedding,
    samples: &[WeightedSample],
    indices: &[usize],
    corruption: Option<FlipLayerSign>,
) -> Result<f64> {
    const STEP: f64 = 1e-6;
    if samples.is_empty() {
        return Err(Error::invalid("gradient check needs at least one sample"));
    }
    let n_x = e.n_x();
    let mut x = Array2::zeros((samples.len(), n_x));
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != n_x {
            return Err(Error::DimensionMismatch {
                what: "gradient-check sample",
                expected: n_x,
                got: s.x.len(),
            });
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&s.x[..]));
    }
    let coef: Vec<f64> = samples.iter().map(|s| s.weight).collect();

    let n = e.num_params();
    let mut grad = vec![0.0; n];
    e.loss_and_grad(&x, &coef, Some(&mut grad));
    if let Some(FlipLayerSign(layer)) = corruption {
        let ranges = layer_ranges(e);
        let r = ranges
            .get(layer)
            .ok_or_else(|| Error::invalid(format!("no layer {layer} to corrupt")))?;
        grad[r.clone()].iter_mut().for_each(|g| *g = -*g);
    }

    let base = e.params();
    let mut probe = e.clone();
    let mut worst: f64 = 0.0;
    for &i in indices {
        if i >= n {
            return Err(Error::invalid(format!("parameter index {i} out of range")));
        }
        let mut p = base.clone();
        let (hi, lo) = (base[i] + STEP, base[i] - STEP);
        p[i] = hi;
        probe.set_params(&p)?;
        let up = probe.reconstruct_batch(&x, false);
        p[i] = lo;
        probe.set_params(&p)?;
        let down = probe.reconstruct_batch(&x, false);
        // ‖u−x‖² − ‖d−x‖² = (u−d)·(u+d−2x), which avoids cancelling two
        // nearly equal losses
        let mut diff = 0.0;
        for (b, &c) in coef.iter().enumerate() {
            let row: f64 = (0..n_x)
                .map(|j| {
                    (up[[b, j]] - down[[b, j]]) * (up[[b, j]] + down[[b, j]] - 2.0 * x[[b, j]])
                })
                .sum();
            diff += c * row;
        }
        let fd = diff / (hi - lo);
        let rel = (grad[i] - fd).abs() / (grad[i].abs() + fd.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// [`gradient_check_params`] over every parameter.
pub fn gradient_check(
    e: &Embedding,
    samples: &[WeightedSample],
    corruption: Option<FlipLayerSign>,
) -> Result<f64> {
    let all: Vec<usize> = (0..e.num_params()).collect();
    gradient_check_params(e, samples, &all, corruption)
}

/// Flat-parameter ranges of each layer, encoder layers first.
fn layer_ranges(e: &Embedding) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut off = 0;
    for net in [&e.encoder, &e.decoder] {
        for (w, b) in net.weights.iter().zip(&net.biases) {
            let len = w.len() + b.len();
            out.push(off..off + len);
            off += len;
        }
    }
    out
}
