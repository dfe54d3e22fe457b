//! Pre-norm transformer stack shared by the decoder (next-statement
//! generator) and the encoder (real/random classifier), with an exact
//! hand-written backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ops::{self, gelu, gelu_grad, layer_norm, layer_norm_backward, LayerNormCache};
use super::tensor::Tensor2;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} tokens exceeds n_positions = {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab_size}")]
    InvalidToken { id: u32, vocab_size: usize },
    #[error("empty input sequence")]
    EmptySequence,
}

/// Output projection of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum HeadKind {
    /// Next-token logits through the transposed token embedding.
    TiedLm,
    /// Next-token logits through a separate `vocab_size × n_embd` matrix.
    UntiedLm,
    /// Class logits from the first position's final hidden state.
    Classifier { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_embd: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_positions: usize,
    pub vocab_size: usize,
    pub causal: bool,
    pub head: HeadKind,
}

impl ModelConfig {
    /// Decoder at the published generator size (768 / 3 layers / 4 heads /
    /// 1024 positions).
    pub fn generator(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_embd: 768,
            n_layer: 3,
            n_head: 4,
            n_positions: 1024,
            vocab_size,
            causal: true,
            head: HeadKind::TiedLm,
        }
    }

    /// Encoder at the published classifier size (768 / 6 / 12 / 512).
    pub fn classifier(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_embd: 768,
            n_layer: 6,
            n_head: 12,
            n_positions: 512,
            vocab_size,
            causal: false,
            head: HeadKind::Classifier { classes: 2 },
        }
    }

    /// Small decoder for tests and desk runs.
    pub fn desk_generator(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_embd: 32,
            n_layer: 2,
            n_head: 2,
            n_positions: 128,
            ..ModelConfig::generator(vocab_size)
        }
    }

    pub fn desk_classifier(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_embd: 32,
            n_layer: 2,
            n_head: 2,
            n_positions: 128,
            ..ModelConfig::classifier(vocab_size)
        }
    }

    pub fn d_k(&self) -> usize {
        self.n_embd / self.n_head
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.n_embd == 0 || self.n_layer == 0 || self.n_head == 0 || self.vocab_size == 0 {
            return bad("n_embd, n_layer, n_head and vocab_size must be positive");
        }
        if self.n_embd % self.n_head != 0 {
            return bad("n_embd must be divisible by n_head");
        }
        if self.n_positions == 0 {
            return bad("n_positions must be at least 1");
        }
        if let HeadKind::Classifier { classes } = self.head {
            if classes < 2 {
                return bad("classifier needs at least two classes");
            }
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        match self.head {
            HeadKind::TiedLm | HeadKind::UntiedLm => self.vocab_size,
            HeadKind::Classifier { classes } => classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gamma: Tensor2,
    pub ln1_beta: Tensor2,
    pub w_q: Tensor2,
    pub b_q: Tensor2,
    pub w_k: Tensor2,
    pub b_k: Tensor2,
    pub w_v: Tensor2,
    pub b_v: Tensor2,
    pub w_o: Tensor2,
    pub b_o: Tensor2,
    pub ln2_gamma: Tensor2,
    pub ln2_beta: Tensor2,
    pub w_fc: Tensor2,
    pub b_fc: Tensor2,
    pub w_proj: Tensor2,
    pub b_proj: Tensor2,
}

const LAYER_TENSOR_NAMES: [&str; 16] = [
    "ln1_gamma", "ln1_beta", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln2_gamma", "ln2_beta",
    "w_fc", "b_fc", "w_proj", "b_proj",
];

impl LayerParams {
    fn zeros(d: usize) -> LayerParams {
        let z = |r, c| Tensor2::zeros(r, c);
        LayerParams {
            ln1_gamma: z(1, d),
            ln1_beta: z(1, d),
            w_q: z(d, d),
            b_q: z(1, d),
            w_k: z(d, d),
            b_k: z(1, d),
            w_v: z(d, d),
            b_v: z(1, d),
            w_o: z(d, d),
            b_o: z(1, d),
            ln2_gamma: z(1, d),
            ln2_beta: z(1, d),
            w_fc: z(d, 4 * d),
            b_fc: z(1, 4 * d),
            w_proj: z(4 * d, d),
            b_proj: z(1, d),
        }
    }

    fn tensors(&self) -> [&Tensor2; 16] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.w_q,
            &self.b_q,
            &self.w_k,
            &self.b_k,
            &self.w_v,
            &self.b_v,
            &self.w_o,
            &self.b_o,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.w_fc,
            &self.b_fc,
            &self.w_proj,
            &self.b_proj,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor2; 16] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.w_q,
            &mut self.b_q,
            &mut self.w_k,
            &mut self.b_k,
            &mut self.w_v,
            &mut self.b_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.w_fc,
            &mut self.b_fc,
            &mut self.w_proj,
            &mut self.b_proj,
        ]
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub token_embedding: Tensor2,
    pub position_embedding: Tensor2,
    pub layers: Vec<LayerParams>,
    pub lnf_gamma: Tensor2,
    pub lnf_beta: Tensor2,
    /// `vocab_size × n_embd` for an untied LM head, `n_embd × classes` for a
    /// classifier head, absent for a tied head.
    pub head_weight: Option<Tensor2>,
    pub head_bias: Option<Tensor2>,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Params {
        let d = cfg.n_embd;
        let (head_weight, head_bias) = match cfg.head {
            HeadKind::TiedLm => (None, None),
            HeadKind::UntiedLm => (Some(Tensor2::zeros(cfg.vocab_size, d)), None),
            HeadKind::Classifier { classes } => (Some(Tensor2::zeros(d, classes)), Some(Tensor2::zeros(1, classes))),
        };
        Params {
            token_embedding: Tensor2::zeros(cfg.vocab_size, d),
            position_embedding: Tensor2::zeros(cfg.n_positions, d),
            layers: (0..cfg.n_layer).map(|_| LayerParams::zeros(d)).collect(),
            lnf_gamma: Tensor2::zeros(1, d),
            lnf_beta: Tensor2::zeros(1, d),
            head_weight,
            head_bias,
        }
    }

    /// Tensors with stable names, in a fixed order shared with
    /// [`Params::tensors_mut`].
    pub fn named(&self) -> Vec<(String, &Tensor2)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors()) {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("lnf_gamma".into(), &self.lnf_gamma));
        out.push(("lnf_beta".into(), &self.lnf_beta));
        if let Some(w) = &self.head_weight {
            out.push(("head_weight".into(), w));
        }
        if let Some(b) = &self.head_bias {
            out.push(("head_bias".into(), b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.lnf_gamma);
        out.push(&mut self.lnf_beta);
        if let Some(w) = &mut self.head_weight {
            out.push(w);
        }
        if let Some(b) = &mut self.head_bias {
            out.push(b);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Params) {
        let src: Vec<&Tensor2> = other.named().into_iter().map(|(_, t)| t).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.add_assign(s);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }
}

/// Whether decoupled weight decay applies to a named tensor: weight
/// matrices and embeddings decay, biases and layer-norm parameters do not.
pub fn decays(name: &str) -> bool {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    !(leaf.starts_with("b_") || leaf.starts_with("ln") || leaf == "head_bias")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    pub config: ModelConfig,
    pub params: Params,
}

struct LayerCache {
    ln1: LayerNormCache,
    a: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    probs: Vec<Tensor2>,
    o: Tensor2,
    ln2: LayerNormCache,
    m: Tensor2,
    u: Tensor2,
    g: Tensor2,
}

/// Intermediate values of one forward pass, kept for backpropagation and
/// for inspecting attention weights.
pub struct ForwardTrace {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LayerNormCache,
    hidden: Tensor2,
}

impl ForwardTrace {
    /// Attention-weight matrices, indexed `[layer][head]`.
    pub fn attention_weights(&self) -> Vec<Vec<&Tensor2>> {
        self.layers.iter().map(|l| l.probs.iter().collect()).collect()
    }

    /// Final (post layer-norm) hidden states.
    pub fn hidden(&self) -> &Tensor2 {
        &self.hidden
    }
}

impl TransformerModel {
    /// GPT-2 style initialization: N(0, 0.02) weights and embeddings, zero
    /// biases, unit layer-norm scales.
    pub fn new(config: ModelConfig, seed: u64) -> Result<TransformerModel, ModelError> {
        Self::with_init_std(config, seed, INIT_STD)
    }

    pub fn with_init_std(config: ModelConfig, seed: u64, std: f64) -> Result<TransformerModel, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&config);
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            let leaf = name.rsplit('.').next().unwrap_or(name);
            if leaf.ends_with("gamma") {
                t.fill(1.0);
            } else if decays(name) {
                *t = Tensor2::random_normal(t.rows(), t.cols(), std, &mut rng);
            }
        }
        Ok(TransformerModel { config, params })
    }

    /// All weights zero, layer-norm scales one.
    pub fn zeroed(config: ModelConfig) -> Result<TransformerModel, ModelError> {
        config.validate()?;
        let mut params = Params::zeros(&config);
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            if name.ends_with("gamma") {
                t.fill(1.0);
            }
        }
        Ok(TransformerModel { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if tokens.len() > self.config.n_positions {
            return Err(ModelError::SequenceTooLong {
                len: tokens.len(),
                max: self.config.n_positions,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(ModelError::InvalidToken {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Runs the stack up to the final layer norm.
    pub fn trace(&self, tokens: &[u32]) -> Result<ForwardTrace, ModelError> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let p = &self.params;
        let (t_len, d) = (tokens.len(), cfg.n_embd);
        let dk = cfg.d_k();
        let scale = 1.0 / (dk as f64).sqrt();

        let mut x = Tensor2::zeros(t_len, d);
        for (t, &tok) in tokens.iter().enumerate() {
            let row = x.row_mut(t);
            for ((o, e), pe) in row
                .iter_mut()
                .zip(p.token_embedding.row(tok as usize))
                .zip(p.position_embedding.row(t))
            {
                *o = e + pe;
            }
        }

        let mut layers = Vec::with_capacity(cfg.n_layer);
        for lp in &p.layers {
            let (a, ln1) = layer_norm(&x, &lp.ln1_gamma, &lp.ln1_beta);
            let q = affine(&a, &lp.w_q, &lp.b_q);
            let k = affine(&a, &lp.w_k, &lp.b_k);
            let v = affine(&a, &lp.w_v, &lp.b_v);
            let mut o = Tensor2::zeros(t_len, d);
            let mut probs = Vec::with_capacity(cfg.n_head);
            for h in 0..cfg.n_head {
                let (qh, kh, vh) = (q.col_slice(h * dk, dk), k.col_slice(h * dk, dk), v.col_slice(h * dk, dk));
                let w = ops::attention_weights(&qh, &kh, cfg.causal, scale);
                o.set_col_slice(h * dk, &w.matmul(&vh));
                probs.push(w);
            }
            x.add_assign(&affine(&o, &lp.w_o, &lp.b_o));

            let (m, ln2) = layer_norm(&x, &lp.ln2_gamma, &lp.ln2_beta);
            let u = affine(&m, &lp.w_fc, &lp.b_fc);
            let mut g = u.clone();
            g.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
            x.add_assign(&affine(&g, &lp.w_proj, &lp.b_proj));

            layers.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                m,
                u,
                g,
            });
        }
        let (hidden, lnf) = layer_norm(&x, &p.lnf_gamma, &p.lnf_beta);
        Ok(ForwardTrace {
            tokens: tokens.to_vec(),
            layers,
            lnf,
            hidden,
        })
    }

    /// Head output for hidden states: `T × vocab_size` for LM heads,
    /// `1 × classes` for a classifier (first position pooled).
    pub fn head(&self, hidden: &Tensor2) -> Tensor2 {
        let p = &self.params;
        match self.config.head {
            HeadKind::TiedLm => hidden.matmul_t(&p.token_embedding),
            HeadKind::UntiedLm => hidden.matmul_t(p.head_weight.as_ref().expect("untied head weight")),
            HeadKind::Classifier { .. } => {
                let pooled = Tensor2::from_vec(1, hidden.cols(), hidden.row(0).to_vec());
                affine(
                    &pooled,
                    p.head_weight.as_ref().expect("classifier head weight"),
                    p.head_bias.as_ref().expect("classifier head bias"),
                )
            }
        }
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<Tensor2, ModelError> {
        let trace = self.trace(tokens)?;
        Ok(self.head(&trace.hidden))
    }

    pub fn forward_traced(&self, tokens: &[u32]) -> Result<(Tensor2, ForwardTrace), ModelError> {
        let trace = self.trace(tokens)?;
        Ok((self.head(&trace.hidden), trace))
    }

    /// Logits for the position after the last token, computing the head
    /// for that row only.
    pub fn next_token_logits(&self, tokens: &[u32]) -> Result<Vec<f64>, ModelError> {
        let trace = self.trace(tokens)?;
        let last = trace.hidden.rows() - 1;
        let row = Tensor2::from_vec(1, trace.hidden.cols(), trace.hidden.row(last).to_vec());
        Ok(self.head(&row).into_vec())
    }

    /// Accumulates parameter gradients for upstream gradient `dlogits`
    /// (same shape as the head output) into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Tensor2, grads: &mut Params) {
        let cfg = &self.config;
        let p = &self.params;
        let hidden = &trace.hidden;
        let dk = cfg.d_k();
        let scale = 1.0 / (dk as f64).sqrt();

        let dhidden = match cfg.head {
            HeadKind::TiedLm => {
                grads.token_embedding.add_assign(&dlogits.t_matmul(hidden));
                dlogits.matmul(&p.token_embedding)
            }
            HeadKind::UntiedLm => {
                let w = p.head_weight.as_ref().expect("untied head weight");
                grads
                    .head_weight
                    .as_mut()
                    .expect("untied head grad")
                    .add_assign(&dlogits.t_matmul(hidden));
                dlogits.matmul(w)
            }
            HeadKind::Classifier { .. } => {
                let w = p.head_weight.as_ref().expect("classifier head weight");
                let pooled = Tensor2::from_vec(1, hidden.cols(), hidden.row(0).to_vec());
                grads
                    .head_weight
                    .as_mut()
                    .expect("classifier head grad")
                    .add_assign(&pooled.t_matmul(dlogits));
                grads.head_bias.as_mut().expect("classifier bias grad").add_assign(dlogits);
                let mut dh = Tensor2::zeros(hidden.rows(), hidden.cols());
                dh.row_mut(0).copy_from_slice(dlogits.matmul_t(w).row(0));
                dh
            }
        };

        let mut dx = layer_norm_backward(
            &dhidden,
            &trace.lnf,
            &p.lnf_gamma,
            &mut grads.lnf_gamma,
            &mut grads.lnf_beta,
        );

        for (l, cache) in trace.layers.iter().enumerate().rev() {
            let lp = &p.layers[l];
            let gl = &mut grads.layers[l];

            // feed-forward block
            gl.w_proj.add_assign(&cache.g.t_matmul(&dx));
            gl.b_proj.add_assign(&dx.col_sums());
            let mut du = dx.matmul_t(&lp.w_proj);
            for (d, &u) in du.data_mut().iter_mut().zip(cache.u.data()) {
                *d *= gelu_grad(u);
            }
            gl.w_fc.add_assign(&cache.m.t_matmul(&du));
            gl.b_fc.add_assign(&du.col_sums());
            let dm = du.matmul_t(&lp.w_fc);
            dx.add_assign(&layer_norm_backward(
                &dm,
                &cache.ln2,
                &lp.ln2_gamma,
                &mut gl.ln2_gamma,
                &mut gl.ln2_beta,
            ));

            // attention block
            gl.w_o.add_assign(&cache.o.t_matmul(&dx));
            gl.b_o.add_assign(&dx.col_sums());
            let d_o = dx.matmul_t(&lp.w_o);
            let t_len = dx.rows();
            let mut dq = Tensor2::zeros(t_len, cfg.n_embd);
            let mut dkm = Tensor2::zeros(t_len, cfg.n_embd);
            let mut dv = Tensor2::zeros(t_len, cfg.n_embd);
            for (h, probs) in cache.probs.iter().enumerate() {
                let off = h * dk;
                let doh = d_o.col_slice(off, dk);
                let (qh, kh, vh) = (cache.q.col_slice(off, dk), cache.k.col_slice(off, dk), cache.v.col_slice(off, dk));
                dv.set_col_slice(off, &probs.t_matmul(&doh));
                let mut ds = doh.matmul_t(&vh);
                for i in 0..t_len {
                    let p_row = probs.row(i);
                    let ds_row = ds.row_mut(i);
                    let s: f64 = ds_row.iter().zip(p_row).map(|(a, b)| a * b).sum();
                    for (d, &pv) in ds_row.iter_mut().zip(p_row) {
                        *d = pv * (*d - s) * scale;
                    }
                }
                dq.set_col_slice(off, &ds.matmul(&kh));
                dkm.set_col_slice(off, &ds.t_matmul(&qh));
            }
            gl.w_q.add_assign(&cache.a.t_matmul(&dq));
            gl.b_q.add_assign(&dq.col_sums());
            gl.w_k.add_assign(&cache.a.t_matmul(&dkm));
            gl.b_k.add_assign(&dkm.col_sums());
            gl.w_v.add_assign(&cache.a.t_matmul(&dv));
            gl.b_v.add_assign(&dv.col_sums());
            let mut da = dq.matmul_t(&lp.w_q);
            da.add_assign(&dkm.matmul_t(&lp.w_k));
            da.add_assign(&dv.matmul_t(&lp.w_v));
            dx.add_assign(&layer_norm_backward(
                &da,
                &cache.ln1,
                &lp.ln1_gamma,
                &mut gl.ln1_gamma,
                &mut gl.ln1_beta,
            ));
        }

        for (t, &tok) in trace.tokens.iter().enumerate() {
            let g = dx.row(t);
            for (o, v) in grads.token_embedding.row_mut(tok as usize).iter_mut().zip(g) {
                *o += v;
            }
            for (o, v) in grads.position_embedding.row_mut(t).iter_mut().zip(g) {
                *o += v;
            }
        }
    }
}

fn affine(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Tensor2 {
    let mut y = x.matmul(w);
    y.add_row_broadcast(b);
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::generator(100).validate().is_ok());
        assert!(ModelConfig::classifier(100).validate().is_ok());
        let mut bad = ModelConfig::desk_generator(10);
        bad.n_head = 3;
        assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig(_))));
        bad.n_head = 2;
        bad.n_positions = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zeroed_model_gives_uniform_logits() {
        let m = TransformerModel::zeroed(ModelConfig::desk_generator(7)).unwrap();
        let logits = m.forward(&[0, 3, 5, 6]).unwrap();
        assert_eq!(logits.shape(), (4, 7));
        let first = logits[(0, 0)];
        assert!(logits.data().iter().all(|&v| v == first));
    }

    #[test]
    fn sequence_limits() {
        let mut cfg = ModelConfig::desk_generator(5);
        cfg.n_positions = 3;
        let m = TransformerModel::new(cfg, 1).unwrap();
        assert_eq!(
            m.forward(&[0, 1, 2, 3]),
            Err(ModelError::SequenceTooLong { len: 4, max: 3 })
        );
        assert!(matches!(m.forward(&[9]), Err(ModelError::InvalidToken { id: 9, .. })));
        assert_eq!(m.forward(&[]), Err(ModelError::EmptySequence));
    }

    #[test]
    fn forward_is_deterministic() {
        let m1 = TransformerModel::new(ModelConfig::desk_generator(11), 5).unwrap();
        let m2 = TransformerModel::new(ModelConfig::desk_generator(11), 5).unwrap();
        let toks = [0, 4, 7, 10, 3];
        let a = m1.forward(&toks).unwrap();
        let b = m2.forward(&toks).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.is_finite());
    }

    #[test]
    fn next_token_logits_match_last_row() {
        let m = TransformerModel::new(ModelConfig::desk_generator(9), 3).unwrap();
        let toks = [0, 2, 8, 4];
        let full = m.forward(&toks).unwrap();
        assert_eq!(m.next_token_logits(&toks).unwrap(), full.row(3).to_vec());
    }

    #[test]
    fn classifier_head_shape() {
        let m = TransformerModel::new(ModelConfig::desk_classifier(20), 2).unwrap();
        let logits = m.forward(&[0, 5, 6, 7]).unwrap();
        assert_eq!(logits.shape(), (1, 2));
    }

    #[test]
    fn causal_attention_ignores_future_tokens() {
        let m = TransformerModel::new(ModelConfig::desk_generator(9), 8).unwrap();
        let a = m.forward(&[0, 2, 8, 4]).unwrap();
        let b = m.forward(&[0, 2, 8, 1]).unwrap();
        for t in 0..3 {
            assert_eq!(a.row(t), b.row(t));
        }
    }

    #[test]
    fn weight_decay_mask() {
        assert!(decays("layers.0.w_q"));
        assert!(decays("token_embedding"));
        assert!(decays("head_weight"));
        assert!(!decays("layers.1.b_fc"));
        assert!(!decays("layers.1.ln2_gamma"));
        assert!(!decays("lnf_beta"));
        assert!(!decays("head_bias"));
    }
}
