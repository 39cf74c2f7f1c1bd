//! The network: input assembly, relative-attention encoder, one-layer decoder
//! and the copy pointer.

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ct_core::corpus::vocab::{END_OF_NAME_ID, METHOD_NAME_MASK_ID, PAD_ID, UNK_ID};
use ct_core::corpus::SUBTOKEN_SLOTS;
use ct_core::relations::{BinnedRelations, Relation};
use ct_core::shard::Snippet;

use crate::config::{ConfigError, ModelConfig, MAX_OUTPUT_SUBTOKENS};
use crate::encoding::encoding_table;
use crate::tape::{Grads, Graph, Mat, ParamId, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("snippet {snippet}: {what} id {id} outside table of {size}")]
    IdOutOfRange {
        snippet: String,
        what: &'static str,
        id: usize,
        size: usize,
    },
    #[error("snippet {snippet}: {detail}")]
    Shape { snippet: String, detail: String },
    #[error("label id {id} outside output support of {support}")]
    LabelOutOfSupport { id: usize, support: usize },
    #[error("non-finite loss {0}")]
    NonFinite(f64),
}

/// Forward-pass mode. Dropout only acts in training mode.
pub enum Mode {
    Eval,
    Train { p: f64, rng: ChaCha8Rng },
}

impl Mode {
    pub fn train(p: f64, seed: u64) -> Self {
        Mode::Train {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone)]
struct EmbedIds {
    subtoken: ParamId,
    kind: Option<ParamId>,
    node: Option<ParamId>,
    language: Option<ParamId>,
    proj_w: ParamId,
    proj_b: ParamId,
}

#[derive(Debug, Clone)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln1: Norm,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    wr: Vec<(Relation, ParamId)>,
    u: ParamId,
    v: ParamId,
    ln2: Norm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
struct Attention {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Debug, Clone)]
struct Decoder {
    embed: ParamId,
    ln1: Norm,
    self_attn: Attention,
    ln2: Norm,
    cross_attn: Attention,
    ln3: Norm,
    ff: FeedForward,
    ln_out: Norm,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone)]
struct Pointer {
    wq: ParamId,
    wk: ParamId,
    ws: ParamId,
    slot: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
}

#[derive(Debug, Clone)]
struct Ids {
    embed: EmbedIds,
    layers: Vec<EncoderLayer>,
    ln_enc: Norm,
    decoder: Decoder,
    pointer: Option<Pointer>,
}

/// Parameter initialization helper.
struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize, bound: f64) -> ParamId {
        let dist = Uniform::new_inclusive(-bound, bound);
        let rng = &mut self.rng;
        let m = Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng));
        self.store.add(name, m)
    }

    fn xavier(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(name, rows, cols, bound)
    }

    fn embedding(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        self.uniform(name, rows, cols, 0.1)
    }

    fn fill(&mut self, name: String, rows: usize, cols: usize, value: f64) -> ParamId {
        self.store.add(name, Array2::from_elem((rows, cols), value))
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gain: self.fill(format!("{prefix}.gain"), 1, d, 1.0),
            bias: self.fill(format!("{prefix}.bias"), 1, d, 0.0),
        }
    }

    fn ff(&mut self, prefix: &str, d: usize, d_ff: usize) -> FeedForward {
        FeedForward {
            w1: self.xavier(format!("{prefix}.w1"), d, d_ff),
            b1: self.fill(format!("{prefix}.b1"), 1, d_ff, 0.0),
            w2: self.xavier(format!("{prefix}.w2"), d_ff, d),
            b2: self.fill(format!("{prefix}.b2"), 1, d, 0.0),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Attention {
        Attention {
            wq: self.xavier(format!("{prefix}.wq"), d, d),
            wk: self.xavier(format!("{prefix}.wk"), d, d),
            wv: self.xavier(format!("{prefix}.wv"), d, d),
            wo: self.xavier(format!("{prefix}.wo"), d, d),
        }
    }
}

/// Output-side view of one snippet: extended-vocabulary targets per step.
fn step_targets(label: &[u32], steps: usize) -> Vec<Option<u32>> {
    (0..steps)
        .map(|t| match t.cmp(&label.len()) {
            std::cmp::Ordering::Less => Some(label[t]),
            std::cmp::Ordering::Equal => Some(END_OF_NAME_ID),
            std::cmp::Ordering::Greater => None,
        })
        .collect()
}

/// Smoothed one-hot targets divided by the number of scored steps, so that
/// `-Σ targets ⊙ log p` is the mean per-step cross-entropy.
fn target_matrix(targets: &[Option<usize>], width: usize, smoothing: f64) -> Result<Mat, ModelError> {
    let scored = targets.iter().filter(|t| t.is_some()).count().max(1) as f64;
    let mut m = Mat::zeros((targets.len(), width));
    for (t, target) in targets.iter().enumerate() {
        let Some(id) = *target else { continue };
        if id >= width {
            return Err(ModelError::LabelOutOfSupport { id, support: width });
        }
        m.row_mut(t).fill(smoothing / width as f64 / scored);
        m[[t, id]] += (1.0 - smoothing) / scored;
    }
    Ok(m)
}

/// Mean over scored steps of the cross-entropy between `(1-ε)·onehot + ε/V`
/// and each row of `dists`. Steps with target `None` are skipped.
pub fn smoothed_cross_entropy(dists: &Mat, targets: &[Option<usize>], smoothing: f64) -> Result<f64, ModelError> {
    let w = target_matrix(targets, dists.ncols(), smoothing)?;
    Ok(-w
        .iter()
        .zip(dists.iter())
        .map(|(t, p)| if *t == 0.0 { 0.0 } else { t * p.max(1e-300).ln() })
        .sum::<f64>())
}

/// Mixes a vocabulary distribution (`T × V`) with copy attention over slots
/// (`T × m`) whose targets are `copy_ids` in the extended space of `width`:
/// `p = p_gen · vocab + (1 - p_gen) · Σ_{slots → w} copy`.
pub fn pointer_mix_var(g: &mut Graph, vocab: Var, copy: Var, copy_ids: &[usize], gate: Var, width: usize) -> Var {
    let v = g.value(vocab).ncols();
    let identity: Vec<usize> = (0..v).collect();
    let vocab_ext = g.scatter_cols(vocab, &identity, width);
    let copy_ext = g.scatter_cols(copy, copy_ids, width);
    let keep = g.affine(gate, -1.0, 1.0);
    let a = g.mul_col(vocab_ext, gate);
    let b = g.mul_col(copy_ext, keep);
    g.add(a, b)
}

/// [`pointer_mix_var`] on plain matrices; `p_gen` is one value per step.
pub fn pointer_mix(vocab: &Mat, copy: &Mat, copy_ids: &[usize], p_gen: &[f64], width: usize) -> Mat {
    let empty = ParamStore::default();
    let mut g = Graph::new(&empty);
    let vv = g.constant(vocab.clone());
    let cv = g.constant(copy.clone());
    let gv = g.constant(Mat::from_shape_vec((p_gen.len(), 1), p_gen.to_vec()).expect("one gate per step"));
    let out = pointer_mix_var(&mut g, vv, cv, copy_ids, gv, width);
    g.value(out).clone()
}

/// Copyable input slots of a snippet: `(token, slot)` pairs that hold a real
/// subtoken. The masked name itself is never a copy source, and neither are
/// tokens hidden from the model.
fn copy_slots(s: &Snippet, visible: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (t, ids) in s.copy_ids.iter().enumerate().filter(|&(t, _)| visible(t)) {
        for (j, &id) in ids.iter().enumerate() {
            if id != PAD_ID && id != METHOD_NAME_MASK_ID {
                out.push((t, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    ids: Ids,
}

/// Per-step output distributions plus what produced them.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// `T × W`, `W` = vocabulary size plus the snippet's OOV count when the
    /// pointer is on.
    pub dists: Mat,
    /// Generation probability per step (all ones without pointer).
    pub p_gen: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let c = &config;
        let d = c.d;
        let mut store = ParamStore::default();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };

        let embed = EmbedIds {
            subtoken: init.embedding("embed.subtoken".into(), c.subtoken_vocab, c.d_sub),
            kind: c.use_context.then(|| init.embedding("embed.kind".into(), c.n_kinds(), c.d_kind)),
            node: c.use_structure.then(|| init.embedding("embed.node".into(), c.node_vocab, c.d_node)),
            language: (c.n_languages >= 2).then(|| init.embedding("embed.language".into(), c.n_languages, d)),
            proj_w: init.xavier("embed.proj.w".into(), c.input_width(), d),
            proj_b: init.fill("embed.proj.b".into(), 1, d, 0.0),
        };

        let active = c.active_relations();
        let layers = (0..c.n_layers)
            .map(|l| {
                let p = format!("enc.{l}");
                EncoderLayer {
                    ln1: init.norm(&format!("{p}.ln1"), d),
                    wq: init.xavier(format!("{p}.wq"), d, d),
                    wk: init.xavier(format!("{p}.wk"), d, d),
                    wv: init.xavier(format!("{p}.wv"), d, d),
                    wo: init.xavier(format!("{p}.wo"), d, d),
                    wr: active
                        .iter()
                        .map(|&r| (r, init.xavier(format!("{p}.wr.{}", r.name()), d, d)))
                        .collect(),
                    u: init.embedding(format!("{p}.u"), 1, d),
                    v: init.embedding(format!("{p}.v"), 1, d),
                    ln2: init.norm(&format!("{p}.ln2"), d),
                    ff: init.ff(&format!("{p}.ff"), d, c.d_ff),
                }
            })
            .collect();
        let ln_enc = init.norm("enc.ln", d);

        let decoder = Decoder {
            embed: init.embedding("dec.embed".into(), c.subtoken_vocab, d),
            ln1: init.norm("dec.ln1", d),
            self_attn: init.attention("dec.self", d),
            ln2: init.norm("dec.ln2", d),
            cross_attn: init.attention("dec.cross", d),
            ln3: init.norm("dec.ln3", d),
            ff: init.ff("dec.ff", d, c.d_ff),
            ln_out: init.norm("dec.ln", d),
            out_w: init.xavier("dec.out.w".into(), d, c.subtoken_vocab),
            out_b: init.fill("dec.out.b".into(), 1, c.subtoken_vocab, 0.0),
        };

        let pointer = c.use_pointer.then(|| Pointer {
            wq: init.xavier("ptr.wq".into(), d, d),
            wk: init.xavier("ptr.wk".into(), d, d),
            ws: init.xavier("ptr.ws".into(), c.d_sub, d),
            slot: init.embedding("ptr.slot".into(), SUBTOKEN_SLOTS, d),
            gate_w: init.xavier("ptr.gate.w".into(), 2 * d, 1),
            gate_b: init.fill("ptr.gate.b".into(), 1, 1, 0.0),
        });

        let ids = Ids {
            embed,
            layers,
            ln_enc,
            decoder,
            pointer,
        };
        Ok(Self {
            config,
            params: store,
            ids,
        })
    }

    /// Rejects snippets whose ids do not fit the embedding tables.
    pub fn check_snippet(&self, s: &Snippet) -> Result<(), ModelError> {
        let c = &self.config;
        let oob = |what, id: usize, size| ModelError::IdOutOfRange {
            snippet: s.id.clone(),
            what,
            id,
            size,
        };
        let shape = |detail: String| ModelError::Shape {
            snippet: s.id.clone(),
            detail,
        };
        let n = s.len();
        if n == 0 {
            return Err(shape("no tokens".into()));
        }
        if s.kinds.len() != n || s.node_types.len() != n || s.is_leaf.len() != n || s.copy_ids.len() != n {
            return Err(shape("per-token arrays differ in length".into()));
        }
        if s.relations.n != n || s.relations.relations.len() != Relation::COUNT {
            return Err(shape(format!("relations cover {} positions, expected {n}", s.relations.n)));
        }
        for r in &s.relations.relations {
            if r.index.len() != n * n || r.index.iter().any(|&i| i as usize >= r.values.len()) {
                return Err(shape("bin index out of range".into()));
            }
        }
        if s.name_position >= n {
            return Err(shape(format!("name position {} of {n}", s.name_position)));
        }
        for ids in &s.subtokens {
            if let Some(&id) = ids.iter().find(|&&id| id as usize >= c.subtoken_vocab) {
                return Err(oob("subtoken", id as usize, c.subtoken_vocab));
            }
        }
        let width = c.subtoken_vocab + s.oov.len();
        for ids in &s.copy_ids {
            if let Some(&id) = ids.iter().find(|&&id| id as usize >= width) {
                return Err(oob("copy", id as usize, width));
            }
        }
        if let Some(&k) = s.kinds.iter().find(|&&k| k as usize >= c.n_kinds()) {
            return Err(oob("token kind", k as usize, c.n_kinds()));
        }
        if c.use_structure {
            if let Some(&t) = s.node_types.iter().find(|&&t| t as usize >= c.node_vocab) {
                return Err(oob("node type", t as usize, c.node_vocab));
            }
        }
        if c.n_languages >= 2 && s.language as usize >= c.n_languages {
            return Err(oob("language", s.language as usize, c.n_languages));
        }
        if let Some(&id) = s.label.iter().find(|&&id| id as usize >= width) {
            return Err(oob("label", id as usize, width));
        }
        Ok(())
    }

    fn dropout(&self, g: &mut Graph, x: Var, mode: &mut Mode) -> Var {
        let Mode::Train { p, rng } = mode else { return x };
        if *p <= 0.0 {
            return x;
        }
        let keep = 1.0 - *p;
        let shape = g.value(x).raw_dim();
        let mask = Mat::from_shape_simple_fn(shape, || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let m = g.constant(mask);
        g.mul(x, m)
    }

    fn norm(&self, g: &mut Graph, x: Var, n: &Norm) -> Var {
        let gain = g.param(n.gain);
        let bias = g.param(n.bias);
        g.layer_norm(x, gain, bias)
    }

    fn linear(&self, g: &mut Graph, x: Var, w: ParamId, b: Option<ParamId>) -> Var {
        let wv = g.param(w);
        let y = g.matmul(x, wv);
        match b {
            Some(b) => {
                let bv = g.param(b);
                g.add_row(y, bv)
            }
            None => y,
        }
    }

    fn feed_forward(&self, g: &mut Graph, x: Var, ff: &FeedForward) -> Var {
        let h = self.linear(g, x, ff.w1, Some(ff.b1));
        let h = g.gelu(h);
        self.linear(g, h, ff.w2, Some(ff.b2))
    }

    /// Per-token input embeddings, `n × d`.
    pub fn assemble_input(&self, g: &mut Graph, s: &Snippet) -> Var {
        let c = &self.config;
        let e = &self.ids.embed;
        let structure_only = !c.use_context;
        let mut parts = Vec::with_capacity(SUBTOKEN_SLOTS + 2);
        for slot in 0..SUBTOKEN_SLOTS {
            let ids: Vec<usize> = s
                .subtokens
                .iter()
                .zip(&s.is_leaf)
                .map(|(sub, &leaf)| {
                    if structure_only && !leaf {
                        PAD_ID as usize
                    } else {
                        sub[slot] as usize
                    }
                })
                .collect();
            parts.push(g.embed(e.subtoken, &ids));
        }
        if let Some(kind) = e.kind {
            let ids: Vec<usize> = s.kinds.iter().map(|&k| k as usize).collect();
            parts.push(g.embed(kind, &ids));
        }
        if let Some(node) = e.node {
            let ids: Vec<usize> = s.node_types.iter().map(|&t| t as usize).collect();
            parts.push(g.embed(node, &ids));
        }
        let x = g.concat_cols(&parts);
        let x = self.linear(g, x, e.proj_w, Some(e.proj_b));
        let x = g.tanh(x);
        match e.language {
            Some(lang) => {
                let l = g.embed(lang, &vec![s.language as usize; s.len()]);
                g.add(x, l)
            }
            None => x,
        }
    }

    /// Encoded bin values of every active relation, `k × d` each.
    fn relation_tables(&self, g: &mut Graph, rel: &BinnedRelations) -> Vec<(Relation, Var)> {
        self.config
            .active_relations()
            .into_iter()
            .map(|r| (r, g.constant(encoding_table(&rel.get(r).values, self.config.d))))
            .collect()
    }

    /// Scaled pre-softmax scores of every head of encoder layer `layer` for
    /// (already normalized) inputs `x`. Relative terms are computed once per
    /// bin and gathered per pair.
    fn relative_logits(
        &self,
        g: &mut Graph,
        x: Var,
        layer: usize,
        rel: &BinnedRelations,
        tables: &[(Relation, Var)],
    ) -> Vec<Var> {
        let lp = &self.ids.layers[layer];
        let dk = self.config.d_k();
        let q = self.linear(g, x, lp.wq, None);
        let k = self.linear(g, x, lp.wk, None);
        let u = g.param(lp.u);
        let v = g.param(lp.v);
        let qu = g.add_row(q, u);
        let qv = g.add_row(q, v);
        let keys: Vec<(Relation, Var)> = lp
            .wr
            .iter()
            .map(|&(r, w)| {
                let phi = tables.iter().find(|(t, _)| *t == r).expect("table per active relation").1;
                let wv = g.param(w);
                (r, g.matmul(phi, wv))
            })
            .collect();
        let scale = 1.0 / (dk as f64).sqrt();
        (0..self.config.n_heads)
            .map(|h| {
                let start = h * dk;
                let qu_h = g.slice_cols(qu, start, dk);
                let k_h = g.slice_cols(k, start, dk);
                let mut logits = g.matmul_t(qu_h, k_h);
                if !keys.is_empty() {
                    let qv_h = g.slice_cols(qv, start, dk);
                    for &(r, rk) in &keys {
                        let rk_h = g.slice_cols(rk, start, dk);
                        let per_bin = g.matmul_t(qv_h, rk_h);
                        let pairs = g.bin_gather(per_bin, &rel.get(r).index);
                        logits = g.add(logits, pairs);
                    }
                }
                g.scale(logits, scale)
            })
            .collect()
    }

    /// Relative-attention logits of one layer for a given input matrix, one
    /// `n × n` matrix per head.
    pub fn attention_logits(&self, x: &Mat, layer: usize, rel: &BinnedRelations) -> Vec<Mat> {
        let mut g = Graph::new(&self.params);
        let xv = g.constant(x.clone());
        let tables = self.relation_tables(&mut g, rel);
        self.relative_logits(&mut g, xv, layer, rel, &tables)
            .into_iter()
            .map(|v| g.value(v).clone())
            .collect()
    }

    fn encoder_layer(
        &self,
        g: &mut Graph,
        x: Var,
        layer: usize,
        rel: &BinnedRelations,
        tables: &[(Relation, Var)],
        mode: &mut Mode,
    ) -> Var {
        let lp = &self.ids.layers[layer];
        let dk = self.config.d_k();
        let h = self.norm(g, x, &lp.ln1);
        let logits = self.relative_logits(g, h, layer, rel, tables);
        let values = self.linear(g, h, lp.wv, None);
        let heads: Vec<Var> = logits
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let a = g.softmax(l);
                let a = self.dropout(g, a, mode);
                let v_h = g.slice_cols(values, i * dk, dk);
                g.matmul(a, v_h)
            })
            .collect();
        let cat = g.concat_cols(&heads);
        let out = self.linear(g, cat, lp.wo, None);
        let out = self.dropout(g, out, mode);
        let x = g.add(x, out);

        let h = self.norm(g, x, &lp.ln2);
        let f = self.feed_forward(g, h, &lp.ff);
        let f = self.dropout(g, f, mode);
        g.add(x, f)
    }

    /// Encoder output, `n × d`.
    pub fn encode(&self, g: &mut Graph, s: &Snippet, mode: &mut Mode) -> Var {
        let tables = self.relation_tables(g, &s.relations);
        let mut x = self.assemble_input(g, s);
        for layer in 0..self.config.n_layers {
            x = self.encoder_layer(g, x, layer, &s.relations, &tables, mode);
        }
        self.norm(g, x, &self.ids.ln_enc)
    }

    /// Plain multi-head attention; `causal` hides later positions.
    fn attention(&self, g: &mut Graph, q_in: Var, kv_in: Var, a: &Attention, causal: bool, mode: &mut Mode) -> Var {
        let dk = self.config.d_k();
        let q = self.linear(g, q_in, a.wq, None);
        let k = self.linear(g, kv_in, a.wk, None);
        let v = self.linear(g, kv_in, a.wv, None);
        let (tq, tk) = (g.value(q).nrows(), g.value(k).nrows());
        let mask = causal.then(|| {
            let m = Mat::from_shape_fn((tq, tk), |(i, j)| if j > i { -1e9 } else { 0.0 });
            g.constant(m)
        });
        let scale = 1.0 / (dk as f64).sqrt();
        let heads: Vec<Var> = (0..self.config.n_heads)
            .map(|h| {
                let q_h = g.slice_cols(q, h * dk, dk);
                let k_h = g.slice_cols(k, h * dk, dk);
                let v_h = g.slice_cols(v, h * dk, dk);
                let mut l = g.matmul_t(q_h, k_h);
                l = g.scale(l, scale);
                if let Some(m) = mask {
                    l = g.add(l, m);
                }
                let w = g.softmax(l);
                let w = self.dropout(g, w, mode);
                g.matmul(w, v_h)
            })
            .collect();
        let cat = g.concat_cols(&heads);
        self.linear(g, cat, a.wo, None)
    }

    /// Decoder states for inputs `[name encoding, prev...]`, `T × d`.
    fn decoder_states(&self, g: &mut Graph, enc: Var, s: &Snippet, prev: &[u32], mode: &mut Mode) -> Var {
        let dec = &self.ids.decoder;
        let v = self.config.subtoken_vocab as u32;
        let first = g.gather_rows(enc, &[s.name_position]);
        let mut rows = vec![first];
        if !prev.is_empty() {
            let ids: Vec<usize> = prev.iter().map(|&id| if id < v { id } else { UNK_ID } as usize).collect();
            rows.push(g.embed(dec.embed, &ids));
        }
        let x = g.concat_rows(&rows);
        let steps: Vec<f64> = (0..=prev.len()).map(|t| t as f64).collect();
        let pos = g.constant(encoding_table(&steps, self.config.d));
        let x = g.add(x, pos);

        let h = self.norm(g, x, &dec.ln1);
        let a = self.attention(g, h, h, &dec.self_attn, true, mode);
        let a = self.dropout(g, a, mode);
        let x = g.add(x, a);
        let h = self.norm(g, x, &dec.ln2);
        let a = self.attention(g, h, enc, &dec.cross_attn, false, mode);
        let a = self.dropout(g, a, mode);
        let x = g.add(x, a);
        let h = self.norm(g, x, &dec.ln3);
        let f = self.feed_forward(g, h, &dec.ff);
        let f = self.dropout(g, f, mode);
        let x = g.add(x, f);
        self.norm(g, x, &dec.ln_out)
    }

    /// Final distributions over the (extended) output space for decoder
    /// states `dec`; also returns the generation gate when the pointer is on.
    fn output(&self, g: &mut Graph, enc: Var, dec: Var, s: &Snippet) -> (Var, Option<Var>) {
        let d = &self.ids.decoder;
        let logits = self.linear(g, dec, d.out_w, Some(d.out_b));
        let vocab = g.softmax(logits);
        let Some(p) = &self.ids.pointer else {
            return (vocab, None);
        };
        let structure_only = !self.config.use_context;
        let slots = copy_slots(s, |t| !structure_only || s.is_leaf[t]);
        if slots.is_empty() {
            let width = self.config.subtoken_vocab + s.oov.len();
            let identity: Vec<usize> = (0..self.config.subtoken_vocab).collect();
            return (g.scatter_cols(vocab, &identity, width), None);
        }
        let tokens: Vec<usize> = slots.iter().map(|&(t, _)| t).collect();
        let slot_idx: Vec<usize> = slots.iter().map(|&(_, j)| j).collect();
        let sub_ids: Vec<usize> = slots.iter().map(|&(t, j)| s.subtokens[t][j] as usize).collect();
        let copy_ids: Vec<usize> = slots.iter().map(|&(t, j)| s.copy_ids[t][j] as usize).collect();

        let enc_rows = g.gather_rows(enc, &tokens);
        let k1 = self.linear(g, enc_rows, p.wk, None);
        let sub = g.embed(self.ids.embed.subtoken, &sub_ids);
        let k2 = self.linear(g, sub, p.ws, None);
        let k3 = g.embed(p.slot, &slot_idx);
        let keys = g.add(k1, k2);
        let keys = g.add(keys, k3);
        let q = self.linear(g, dec, p.wq, None);
        let scores = g.matmul_t(q, keys);
        let scores = g.scale(scores, 1.0 / (self.config.d as f64).sqrt());
        let copy = g.softmax(scores);
        let ctx = g.matmul(copy, keys);
        let feats = g.concat_cols(&[dec, ctx]);
        let gate = self.linear(g, feats, p.gate_w, Some(p.gate_b));
        let gate = g.sigmoid(gate);
        let width = self.config.subtoken_vocab + s.oov.len();
        (pointer_mix_var(g, vocab, copy, &copy_ids, gate, width), Some(gate))
    }

    fn support(&self, s: &Snippet) -> usize {
        if self.config.use_pointer {
            self.config.subtoken_vocab + s.oov.len()
        } else {
            self.config.subtoken_vocab
        }
    }

    /// Teacher-forced targets in the model's output support: OOV label
    /// subtokens become `[UNK]` without the pointer.
    fn targets(&self, s: &Snippet) -> Vec<Option<u32>> {
        let v = self.config.subtoken_vocab as u32;
        step_targets(&s.label, MAX_OUTPUT_SUBTOKENS)
            .into_iter()
            .map(|t| t.map(|id| if !self.config.use_pointer && id >= v { UNK_ID } else { id }))
            .collect()
    }

    /// Teacher-forced step distributions (always `MAX_OUTPUT_SUBTOKENS` rows).
    pub fn teacher_forced(&self, s: &Snippet) -> Result<StepOutput, ModelError> {
        self.check_snippet(s)?;
        let mut g = Graph::new(&self.params);
        let mut mode = Mode::Eval;
        let enc = self.encode(&mut g, s, &mut mode);
        let prev = self.teacher_inputs(s);
        let dec = self.decoder_states(&mut g, enc, s, &prev, &mut mode);
        let (dists, gate) = self.output(&mut g, enc, dec, s);
        let steps = g.value(dists).nrows();
        Ok(StepOutput {
            dists: g.value(dists).clone(),
            p_gen: gate.map_or(vec![1.0; steps], |v| g.value(v).column(0).to_vec()),
        })
    }

    fn teacher_inputs(&self, s: &Snippet) -> Vec<u32> {
        self.targets(s)
            .into_iter()
            .take(MAX_OUTPUT_SUBTOKENS - 1)
            .map(|t| t.unwrap_or(PAD_ID))
            .collect()
    }

    /// Builds the loss of one snippet on `g`.
    pub fn loss_var(&self, g: &mut Graph, s: &Snippet, smoothing: f64, mode: &mut Mode) -> Result<Var, ModelError> {
        let enc = self.encode(g, s, mode);
        let prev = self.teacher_inputs(s);
        let dec = self.decoder_states(g, enc, s, &prev, mode);
        let (dists, _) = self.output(g, enc, dec, s);
        let targets: Vec<Option<usize>> = self.targets(s).into_iter().map(|t| t.map(|id| id as usize)).collect();
        let w = target_matrix(&targets, self.support(s), smoothing)?;
        let w = g.constant(w);
        let logp = g.log(dists);
        let prod = g.mul(logp, w);
        let total = g.sum_all(prod);
        Ok(g.scale(total, -1.0))
    }

    /// Loss and parameter gradients of one snippet.
    pub fn loss_and_grads(&self, s: &Snippet, smoothing: f64, mode: &mut Mode) -> Result<(f64, Grads), ModelError> {
        self.check_snippet(s)?;
        let mut g = Graph::new(&self.params);
        let loss = self.loss_var(&mut g, s, smoothing, mode)?;
        let value = g.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(ModelError::NonFinite(value));
        }
        let mut grads = Grads::zeros_like(&self.params);
        g.backward(loss, &mut grads);
        Ok((value, grads))
    }

    pub fn loss(&self, s: &Snippet, smoothing: f64) -> Result<f64, ModelError> {
        self.check_snippet(s)?;
        let mut g = Graph::new(&self.params);
        let loss = self.loss_var(&mut g, s, smoothing, &mut Mode::Eval)?;
        Ok(g.value(loss)[[0, 0]])
    }

    /// Greedy decoding; returns extended-space ids without the end marker.
    pub fn predict(&self, s: &Snippet) -> Result<Vec<u32>, ModelError> {
        self.check_snippet(s)?;
        let mut g = Graph::new(&self.params);
        let mut mode = Mode::Eval;
        let enc = self.encode(&mut g, s, &mut mode);
        let mut out: Vec<u32> = Vec::new();
        for _ in 0..MAX_OUTPUT_SUBTOKENS {
            let dec = self.decoder_states(&mut g, enc, s, &out, &mut mode);
            let (dists, _) = self.output(&mut g, enc, dec, s);
            let last = g.value(dists).row(out.len()).to_owned();
            let best = last
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc })
                .0 as u32;
            if best == END_OF_NAME_ID {
                break;
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Encoder output at the masked-name position.
    pub fn embed(&self, s: &Snippet) -> Result<Vec<f64>, ModelError> {
        let enc = self.encoder_output(s)?;
        Ok(enc.row(s.name_position).to_vec())
    }

    pub fn encoder_output(&self, s: &Snippet) -> Result<Mat, ModelError> {
        self.check_snippet(s)?;
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, s, &mut Mode::Eval);
        Ok(g.value(enc).clone())
    }

    /// Overwrites parameter values by name, e.g. from a checkpoint.
    pub fn load_params(&mut self, named: Vec<(String, Mat)>) -> Result<(), String> {
        if named.len() != self.params.len() {
            return Err(format!(
                "checkpoint has {} tensors, model expects {}",
                named.len(),
                self.params.len()
            ));
        }
        for (name, value) in named {
            let id = self.params.id(&name).ok_or_else(|| format!("unexpected tensor {name}"))?;
            let slot = self.params.get_mut(id);
            if slot.dim() != value.dim() {
                return Err(format!("tensor {name} has shape {:?}, expected {:?}", value.dim(), slot.dim()));
            }
            *slot = value;
        }
        Ok(())
    }
}
