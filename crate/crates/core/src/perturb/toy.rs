//! A small attention-only transformer built to name its fixture items.
//!
//! Construction happens in a readable canonical basis and is then hidden
//! behind random orthogonal rotations, so every weight matrix is dense and
//! each hidden unit mixes all features, as in a trained network.
//!
//! Canonical residual layout: four token-type dimensions (bos, cue, ask,
//! word) followed by a word space split into a semantic half and a
//! phonological half. Each word's vector combines a semantic code (shared
//! with its associates in the norms table) and a bag-of-phonemes code, so
//! the nearest neighbours of a target are its semantic relatives and its
//! sound-alikes.
//!
//! Every head routes the final `<ask>` query to the picture cue and every
//! other query to the `<bos>` sink, whose value is zero. Layer `l` copies
//! one half of the word space from the cue with gain `g_l`; within each
//! half the gains sum to one, but come in `+k, -k` pairs so that disturbing
//! any single layer moves the answer. The pair amplitude follows a bell
//! profile over depth, making the first and last layers less fragile.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::rng::{Stream, StreamKey};
use crate::taxonomy::LexicalResources;
use crate::{Error, Result};

pub const BOS: &str = "<bos>";
pub const ASK: &str = "<ask>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

const TAG_TOY_BUILD: &str = "blum/toy-build/v1";
const TYPE_DIMS: usize = 4;
const T_BOS: usize = 0;
const T_CUE: usize = 1;
const T_ASK: usize = 2;
const T_WORD: usize = 3;

/// Dense row-major matrix. Rows are output units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { shape: [rows, cols], data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows(), self.cols(), &self.data)
    }

    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Position-wise ReLU block. Present in the fixture so that the lesion
/// scope can optionally include it; its contribution is kept small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w_in: Matrix,
    pub w_out: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub o: Matrix,
    pub mlp: Option<Mlp>,
}

impl Layer {
    pub fn attention(&self) -> [&Matrix; 4] {
        [&self.q, &self.k, &self.v, &self.o]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Seed for the construction randomness (word codes, rotations).
    pub seed: u64,
    /// Attention logit for a matched query/key pair.
    pub sharpness: f64,
    /// Pair gain amplitude at the edges and at the middle of the stack.
    pub gain_edge: f64,
    pub gain_peak: f64,
    /// End-of-sequence logit; word logits are cosines against the residual.
    pub eos_bias: f64,
    /// Magnitude of the token-type features. Noise reading them is shared
    /// by every item, so keeping them small keeps item failures independent.
    pub type_scale: f64,
    /// Relative weight of the phonological half of each word code.
    pub phon_weight: f64,
    /// Strength with which a word's semantic code borrows from its associates.
    pub association: f64,
    /// Output scale of the MLP blocks; zero omits them.
    pub mlp_scale: f64,
    pub max_new_tokens: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            layers: 8,
            hidden: 64,
            heads: 4,
            seed: 0,
            sharpness: 12.0,
            gain_edge: 1.0,
            gain_peak: 3.0,
            eos_bias: 0.4,
            type_scale: 0.15,
            phon_weight: 1.0,
            association: 0.8,
            mlp_scale: 0.02,
            max_new_tokens: 4,
        }
    }
}

/// Result of greedy decoding for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<String>,
    /// A non-finite logit or residual was seen; decoding stopped.
    pub non_finite: bool,
}

impl Generation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    hidden: usize,
    heads: usize,
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
    /// Token ids that can be generated; the end token is one of them.
    outputs: Vec<usize>,
    eos: usize,
    eos_bias: f64,
    max_new_tokens: usize,
    embedding: Matrix,
    unembedding: Matrix,
    layers: Vec<Arc<Layer>>,
}

/// On-disk weights, format `blum-toy-transformer` version 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    hidden: usize,
    heads: usize,
    eos_bias: f64,
    max_new_tokens: usize,
    vocab: Vec<String>,
    outputs: Vec<usize>,
    embedding: Matrix,
    unembedding: Matrix,
    layers: Vec<Layer>,
}

const WEIGHTS_FORMAT: &str = "blum-toy-transformer";
const WEIGHTS_VERSION: u32 = 1;

/// Lowercase and strip trailing punctuation; cue tokens like `<pic:cat>` are kept whole.
pub fn prompt_tokens(prompt: &str) -> Vec<String> {
    prompt
        .split_whitespace()
        .map(|w| {
            let w = w.to_lowercase();
            if w.starts_with('<') && w.ends_with('>') {
                w
            } else {
                w.trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'').to_string()
            }
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Cue token naming a picture of `target`.
pub fn cue_token(target: &str) -> String {
    format!("<pic:{}>", target.trim().to_lowercase())
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn gaussian(s: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| s.standard_normal()).collect()
}

fn random_orthogonal(s: &mut Stream, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| s.standard_normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Block-diagonal matrix with one random orthogonal block per head.
fn head_rotation(s: &mut Stream, heads: usize, head_dim: usize) -> DMatrix<f64> {
    let n = heads * head_dim;
    let mut m = DMatrix::zeros(n, n);
    for h in 0..heads {
        let b = random_orthogonal(s, head_dim);
        m.view_mut((h * head_dim, h * head_dim), (head_dim, head_dim)).copy_from(&b);
    }
    m
}

/// Which half of the word space layer `l` (0-based) copies, and its gain.
fn layer_plan(cfg: &ToyConfig) -> Vec<(usize, f64)> {
    let l = cfg.layers;
    if l == 1 {
        return vec![(2, 1.0)];
    }
    let pairs = l.div_ceil(2);
    // Stacks too shallow to give each half its own pair copy both halves.
    let half_of = |layer: usize| if l < 4 { 2 } else { (layer / 2) % 2 };
    let per_half: Vec<usize> = (0..3).map(|h| (0..l).filter(|&x| half_of(x) == h).count()).collect();
    (0..l)
        .map(|layer| {
            let pair = layer / 2;
            let half = half_of(layer);
            let has_partner = pair * 2 + 1 < l;
            let amp = if has_partner {
                let phase = std::f64::consts::PI * (pair as f64 + 0.5) / pairs as f64;
                cfg.gain_edge + (cfg.gain_peak - cfg.gain_edge) * phase.sin()
            } else {
                0.0
            };
            let sign = if layer % 2 == 0 { 1.0 } else { -1.0 };
            (half, sign * amp + 1.0 / per_half[half] as f64)
        })
        .collect()
}

impl ToyTransformer {
    /// Build the fixture model for a set of picture-naming targets.
    ///
    /// The output vocabulary is every word with a pronunciation in `res`
    /// plus the prompt words in `framing`. Each target gets an input-only
    /// cue token.
    pub fn fixture(cfg: &ToyConfig, targets: &[String], framing: &[String], res: &LexicalResources) -> Result<Self> {
        let h = cfg.hidden;
        if cfg.layers == 0 || cfg.heads == 0 || !h.is_multiple_of(cfg.heads) || h < TYPE_DIMS + 4 {
            return Err(Error::Config(format!(
                "unsupported toy shape: layers {}, hidden {h}, heads {}",
                cfg.layers, cfg.heads
            )));
        }
        let head_dim = h / cfg.heads;
        if head_dim < 2 {
            return Err(Error::Config("toy heads need at least two dimensions".into()));
        }
        let word_dims = h - TYPE_DIMS;
        let sem_dims = word_dims / 2;
        let phon_dims = word_dims - sem_dims;
        res.check_targets(targets.iter().map(String::as_str))?;

        let mut s = StreamKey::new(TAG_TOY_BUILD).u64(cfg.seed).u64(h as u64).stream();

        // Vocabulary.
        let mut vocab: Vec<String> = vec![BOS.into(), ASK.into(), UNK.into(), EOS.into()];
        let mut words: Vec<String> = res.pronunciations.keys().cloned().collect();
        for f in framing {
            if !words.contains(f) {
                words.push(f.clone());
            }
        }
        let first_word = vocab.len();
        vocab.extend(words.iter().cloned());
        let first_cue = vocab.len();
        let mut cue_targets: Vec<String> = targets.iter().map(|t| t.trim().to_lowercase()).collect();
        cue_targets.dedup();
        vocab.extend(cue_targets.iter().map(|t| cue_token(t)));
        let index: BTreeMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(Error::Config("duplicate token in toy vocabulary".into()));
        }

        // Word codes in the canonical word space.
        let mut own_sem: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for w in &words {
            own_sem.insert(w, gaussian(&mut s, sem_dims));
        }
        let mut phoneme_codes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut word_code = |w: &str, s: &mut Stream| -> Vec<f64> {
            let mut sem = own_sem[w].clone();
            let mut related: Vec<&str> = Vec::new();
            if let Some(set) = res.semantic_norms.get(w) {
                related.extend(set.iter().map(String::as_str));
            }
            for (t, set) in &res.semantic_norms {
                if set.contains(w) {
                    related.push(t);
                }
            }
            related.sort_unstable();
            related.dedup();
            for r in related {
                if let Some(code) = own_sem.get(r) {
                    for (a, b) in sem.iter_mut().zip(code) {
                        *a += cfg.association * b;
                    }
                }
            }
            normalize(&mut sem);
            let phones: Vec<String> = match res.pronunciation(w) {
                Some(p) => p.to_vec(),
                None => w.chars().map(|c| format!("#{c}")).collect(),
            };
            let mut phon = vec![0.0; phon_dims];
            for (pos, ph) in phones.iter().enumerate() {
                let code = phoneme_codes
                    .entry(ph.clone())
                    .or_insert_with(|| gaussian(s, phon_dims));
                let weight = 1.0 / (1.0 + 0.15 * pos as f64);
                for (a, b) in phon.iter_mut().zip(code.iter()) {
                    *a += weight * b;
                }
            }
            normalize(&mut phon);
            let a = 1.0 / (1.0 + cfg.phon_weight * cfg.phon_weight).sqrt();
            let b = cfg.phon_weight * a;
            sem.iter().map(|x| a * x).chain(phon.iter().map(|x| b * x)).collect()
        };
        let codes: Vec<Vec<f64>> = words.iter().map(|w| word_code(w, &mut s)).collect();
        let code_of = |w: &str| -> &Vec<f64> { &codes[words.iter().position(|x| x == w).expect("known word")] };

        let v = vocab.len();
        let mut emb = Matrix::zeros(v, h);
        let mut unemb = Matrix::zeros(v, h);
        let ts = cfg.type_scale;
        emb.set(index[BOS], T_BOS, ts);
        emb.set(index[ASK], T_ASK, ts);
        emb.set(index[UNK], T_WORD, ts);
        for i in 0..words.len() {
            let row = first_word + i;
            emb.set(row, T_WORD, ts);
            for (d, x) in codes[i].iter().enumerate() {
                emb.set(row, TYPE_DIMS + d, *x);
                unemb.set(row, TYPE_DIMS + d, *x);
            }
        }
        for (i, t) in cue_targets.iter().enumerate() {
            let row = first_cue + i;
            emb.set(row, T_CUE, ts);
            for (d, x) in code_of(t).iter().enumerate() {
                emb.set(row, TYPE_DIMS + d, *x);
            }
        }

        // Canonical layers.
        let beta = (cfg.sharpness * (head_dim as f64).sqrt()).sqrt() / ts;
        let plan = layer_plan(cfg);
        let half_dims = |half: usize| -> Vec<usize> {
            let sem = (TYPE_DIMS..TYPE_DIMS + sem_dims).collect::<Vec<_>>();
            let phon = (TYPE_DIMS + sem_dims..h).collect::<Vec<_>>();
            match half {
                0 => sem,
                1 => phon,
                _ => sem.into_iter().chain(phon).collect(),
            }
        };
        let rot = random_orthogonal(&mut s, h);
        let rot_t = rot.transpose();
        let mut layers = Vec::with_capacity(cfg.layers);
        for &(half, gain) in &plan {
            let mut q = Matrix::zeros(h, h);
            let mut k = Matrix::zeros(h, h);
            let mut val = Matrix::zeros(h, h);
            let mut o = Matrix::zeros(h, h);
            for head in 0..cfg.heads {
                let base = head * head_dim;
                q.set(base, T_ASK, beta);
                for t in [T_BOS, T_CUE, T_WORD] {
                    q.set(base + 1, t, beta);
                }
                k.set(base, T_CUE, beta);
                k.set(base + 1, T_BOS, beta);
            }
            let dims = half_dims(half);
            if dims.len() > h {
                return Err(Error::Config("word space exceeds head capacity".into()));
            }
            for (slot, &d) in dims.iter().enumerate() {
                let head = slot % cfg.heads;
                let r = slot / cfg.heads;
                let unit = head * head_dim + r;
                val.set(unit, d, 1.0);
                o.set(d, unit, gain);
            }
            let qk_rot = head_rotation(&mut s, cfg.heads, head_dim);
            let v_rot = head_rotation(&mut s, cfg.heads, head_dim);
            let q = Matrix::from_dmatrix(&(&qk_rot * q.to_dmatrix() * &rot_t));
            let k = Matrix::from_dmatrix(&(&qk_rot * k.to_dmatrix() * &rot_t));
            let val = Matrix::from_dmatrix(&(&v_rot * val.to_dmatrix() * &rot_t));
            let o = Matrix::from_dmatrix(&(&rot * o.to_dmatrix() * v_rot.transpose()));
            let mlp = (cfg.mlp_scale > 0.0).then(|| {
                let scale_in = 1.0 / (h as f64).sqrt();
                let scale_out = cfg.mlp_scale / (h as f64).sqrt();
                let mut w_in = Matrix::zeros(h, h);
                let mut w_out = Matrix::zeros(h, h);
                w_in.data.iter_mut().for_each(|x| *x = scale_in * s.standard_normal());
                w_out.data.iter_mut().for_each(|x| *x = scale_out * s.standard_normal());
                Mlp { w_in, w_out }
            });
            layers.push(Arc::new(Layer { q, k, v: val, o, mlp }));
        }
        let embedding = Matrix::from_dmatrix(&(emb.to_dmatrix() * &rot_t));
        let unembedding = Matrix::from_dmatrix(&(unemb.to_dmatrix() * &rot_t));

        let mut outputs: Vec<usize> = (first_word..first_word + words.len()).collect();
        outputs.push(index[EOS]);
        Ok(ToyTransformer {
            hidden: h,
            heads: cfg.heads,
            eos: index[EOS],
            vocab,
            index,
            outputs,
            eos_bias: cfg.eos_bias,
            max_new_tokens: cfg.max_new_tokens,
            embedding,
            unembedding,
            layers,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer by 1-based index.
    pub fn layer(&self, layer: usize) -> &Layer {
        &self.layers[layer - 1]
    }

    pub(crate) fn layer_arc(&self, layer: usize) -> &Arc<Layer> {
        &self.layers[layer - 1]
    }

    pub(crate) fn replace_layer(&mut self, layer: usize, new: Layer) {
        self.layers[layer - 1] = Arc::new(new);
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn embedding(&self) -> &Matrix {
        &self.embedding
    }

    pub fn unembedding(&self) -> &Matrix {
        &self.unembedding
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.is_finite()
            && self.unembedding.is_finite()
            && self.layers.iter().all(|l| {
                l.attention().iter().all(|m| m.is_finite())
                    && l.mlp.as_ref().is_none_or(|m| m.w_in.is_finite() && m.w_out.is_finite())
            })
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.index[UNK])
    }

    /// Residual stream of the last position after all layers.
    fn final_residual(&self, ids: &[usize]) -> Vec<f64> {
        let h = self.hidden;
        let head_dim = h / self.heads;
        let n = ids.len();
        let mut x: Vec<Vec<f64>> = ids.iter().map(|&i| self.embedding.row(i).to_vec()).collect();
        let mut q = vec![vec![0.0; h]; n];
        let mut k = vec![vec![0.0; h]; n];
        let mut v = vec![vec![0.0; h]; n];
        let mut z = vec![0.0; h];
        let mut out = vec![0.0; h];
        let mut scores = vec![0.0; n];
        let scale = 1.0 / (head_dim as f64).sqrt();
        for layer in &self.layers {
            for p in 0..n {
                layer.q.matvec(&x[p], &mut q[p]);
                layer.k.matvec(&x[p], &mut k[p]);
                layer.v.matvec(&x[p], &mut v[p]);
            }
            let mut updates = vec![vec![0.0; h]; n];
            for p in 0..n {
                for head in 0..self.heads {
                    let r = head * head_dim..(head + 1) * head_dim;
                    let qh = &q[p][r.clone()];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=p {
                        let sc = qh.iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>() * scale;
                        scores[j] = sc;
                        max = max.max(sc);
                    }
                    let mut total = 0.0;
                    for sc in scores.iter_mut().take(p + 1) {
                        *sc = (*sc - max).exp();
                        total += *sc;
                    }
                    for d in r.clone() {
                        z[d] = (0..=p).map(|j| scores[j] * v[j][d]).sum::<f64>() / total;
                    }
                }
                layer.o.matvec(&z, &mut out);
                updates[p].copy_from_slice(&out);
            }
            for p in 0..n {
                for (a, b) in x[p].iter_mut().zip(&updates[p]) {
                    *a += b;
                }
            }
            if let Some(mlp) = &layer.mlp {
                let mut hidden = vec![0.0; mlp.w_in.rows()];
                for xp in x.iter_mut() {
                    mlp.w_in.matvec(xp, &mut hidden);
                    hidden.iter_mut().for_each(|a| *a = a.max(0.0));
                    mlp.w_out.matvec(&hidden, &mut out);
                    for (a, b) in xp.iter_mut().zip(&out) {
                        *a += b;
                    }
                }
            }
        }
        x.pop().expect("non-empty sequence")
    }

    /// Next-token logits over the output vocabulary, as `(token id, logit)`.
    /// Word logits are cosines between the unembedding row and the final
    /// residual; the end token has a fixed logit. `None` if anything is
    /// non-finite.
    pub fn logits(&self, ids: &[usize]) -> Option<Vec<(usize, f64)>> {
        let r = self.final_residual(ids);
        let norm = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        let mut out = Vec::with_capacity(self.outputs.len());
        for &t in &self.outputs {
            let logit = if t == self.eos {
                self.eos_bias
            } else {
                self.unembedding.row(t).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / norm
            };
            if !logit.is_finite() {
                return None;
            }
            out.push((t, logit));
        }
        Some(out)
    }

    /// Greedy decoding. Stops at the end token, at the first generated word
    /// that does not echo the prompt, or after the token budget.
    pub fn generate(&self, prompt: &str) -> Generation {
        let words = prompt_tokens(prompt);
        let mut ids: Vec<usize> = std::iter::once(self.index[BOS])
            .chain(words.iter().map(|w| self.token_id(w)))
            .chain(std::iter::once(self.index[ASK]))
            .collect();
        let mut tokens = Vec::new();
        for _ in 0..self.max_new_tokens {
            let Some(logits) = self.logits(&ids) else {
                return Generation { tokens, non_finite: true };
            };
            // First maximum wins, so ties resolve to the lower token id.
            let (best, _) = logits
                .iter()
                .copied()
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (t, l)| if l > acc.1 { (t, l) } else { acc });
            if best == self.eos {
                break;
            }
            let word = self.vocab[best].clone();
            let echo = words.contains(&word);
            tokens.push(word);
            ids.push(best);
            if !echo {
                break;
            }
        }
        Generation { tokens, non_finite: false }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = WeightsFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            hidden: self.hidden,
            heads: self.heads,
            eos_bias: self.eos_bias,
            max_new_tokens: self.max_new_tokens,
            vocab: self.vocab.clone(),
            outputs: self.outputs.clone(),
            embedding: self.embedding.clone(),
            unembedding: self.unembedding.clone(),
            layers: self.layers.iter().map(|l| (**l).clone()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: WeightsFile = serde_json::from_str(text)?;
        if f.format != WEIGHTS_FORMAT || f.version != WEIGHTS_VERSION {
            return Err(Error::Schema(format!(
                "unsupported weights format {} v{}",
                f.format, f.version
            )));
        }
        let h = f.hidden;
        let v = f.vocab.len();
        let check = |m: &Matrix, rows: usize, cols: usize, what: &str| -> Result<()> {
            if m.shape != [rows, cols] || m.data.len() != rows * cols {
                return Err(Error::Schema(format!(
                    "{what}: shape {:?} with {} values, expected [{rows}, {cols}]",
                    m.shape,
                    m.data.len()
                )));
            }
            if !m.is_finite() {
                return Err(Error::Schema(format!("{what}: non-finite weight")));
            }
            Ok(())
        };
        if f.heads == 0 || !h.is_multiple_of(f.heads) {
            return Err(Error::Schema("hidden size not divisible by heads".into()));
        }
        check(&f.embedding, v, h, "embedding")?;
        check(&f.unembedding, v, h, "unembedding")?;
        for (i, l) in f.layers.iter().enumerate() {
            for (m, name) in l.attention().iter().zip(["q", "k", "v", "o"]) {
                check(m, h, h, &format!("layer {} {name}", i + 1))?;
            }
            if let Some(mlp) = &l.mlp {
                check(&mlp.w_in, mlp.w_in.rows(), h, &format!("layer {} mlp w_in", i + 1))?;
                check(&mlp.w_out, h, mlp.w_in.rows(), &format!("layer {} mlp w_out", i + 1))?;
            }
        }
        let index: BTreeMap<String, usize> = f.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        for special in [BOS, ASK, EOS, UNK] {
            if !index.contains_key(special) {
                return Err(Error::Schema(format!("vocabulary lacks {special}")));
            }
        }
        if index.len() != v || f.outputs.iter().any(|&o| o >= v) || f.layers.is_empty() {
            return Err(Error::Schema("inconsistent vocabulary or empty model".into()));
        }
        Ok(ToyTransformer {
            hidden: h,
            heads: f.heads,
            eos: index[EOS],
            vocab: f.vocab,
            index,
            outputs: f.outputs,
            eos_bias: f.eos_bias,
            max_new_tokens: f.max_new_tokens,
            embedding: f.embedding,
            unembedding: f.unembedding,
            layers: f.layers.into_iter().map(Arc::new).collect(),
        })
    }
}
