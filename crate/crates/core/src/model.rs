//! Pointer-generator encoder-decoder.
//!
//! Bidirectional LSTM encoder, single-layer LSTM decoder with additive
//! attention, and a scalar copy gate mixing the generation softmax with the
//! attention distribution scattered onto extended (source-OOV) ids:
//!
//! ```text
//! e_i    = v · tanh(W_h h_i + W_s s_t + b_attn)
//! a      = softmax(e)
//! h*_t   = Σ a_i h_i
//! P_vocab = softmax(W [s_t; h*_t] + b)
//! p_gen  = σ(w_h* · h*_t + w_s · s_t + w_x · x_t + b_gen)
//! P(w)   = p_gen P_vocab(w) + (1 − p_gen) Σ_{i: x_i = w} a_i
//! ```
//!
//! Every computation is expressed on a [`Tape`] so the same code path serves
//! training (with gradients) and decoding (values only).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::UNK;
use crate::diffcore::{Array, NodeId, ParamId, Tape};
use crate::error::{Error, Result};

/// Floor added inside the log of a step probability.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub emb_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub attn_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(256, 128, 5000, 20)
    }
}

impl ModelConfig {
    /// Attention width defaults to the encoder state width.
    pub fn new(hidden_dim: usize, emb_dim: usize, vocab_size: usize, max_len: usize) -> Self {
        ModelConfig {
            hidden_dim,
            emb_dim,
            vocab_size,
            max_len,
            attn_dim: 2 * hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.hidden_dim,
            self.emb_dim,
            self.vocab_size,
            self.max_len,
            self.attn_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::config(format!("model dimensions must be positive: {self:?}")));
        }
        if self.vocab_size <= crate::corpus::STOP {
            return Err(Error::config("vocab_size must exceed the reserved ids"));
        }
        Ok(())
    }

    /// `(name, shape)` for every parameter, in storage order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (h, e, v, a) = (self.hidden_dim, self.emb_dim, self.vocab_size, self.attn_dim);
        vec![
            ("embedding", vec![v, e]),
            ("enc_fw_w", vec![e + h, 4 * h]),
            ("enc_fw_b", vec![4 * h]),
            ("enc_bw_w", vec![e + h, 4 * h]),
            ("enc_bw_b", vec![4 * h]),
            ("reduce_h_w", vec![2 * h, h]),
            ("reduce_h_b", vec![h]),
            ("reduce_c_w", vec![2 * h, h]),
            ("reduce_c_b", vec![h]),
            ("dec_w", vec![e + 2 * h + h, 4 * h]),
            ("dec_b", vec![4 * h]),
            ("attn_wh", vec![2 * h, a]),
            ("attn_ws", vec![h, a]),
            ("attn_b", vec![a]),
            ("attn_v", vec![a]),
            ("out_w", vec![3 * h, v]),
            ("out_b", vec![v]),
            ("gen_wc", vec![2 * h, 1]),
            ("gen_ws", vec![h, 1]),
            ("gen_wx", vec![e, 1]),
            ("gen_b", vec![1]),
        ]
    }
}

/// Parameter ids in [`ModelConfig::layout`] order.
pub mod pid {
    use crate::diffcore::ParamId;

    pub const EMBEDDING: ParamId = ParamId(0);
    pub const ENC_FW_W: ParamId = ParamId(1);
    pub const ENC_FW_B: ParamId = ParamId(2);
    pub const ENC_BW_W: ParamId = ParamId(3);
    pub const ENC_BW_B: ParamId = ParamId(4);
    pub const REDUCE_H_W: ParamId = ParamId(5);
    pub const REDUCE_H_B: ParamId = ParamId(6);
    pub const REDUCE_C_W: ParamId = ParamId(7);
    pub const REDUCE_C_B: ParamId = ParamId(8);
    pub const DEC_W: ParamId = ParamId(9);
    pub const DEC_B: ParamId = ParamId(10);
    pub const ATTN_WH: ParamId = ParamId(11);
    pub const ATTN_WS: ParamId = ParamId(12);
    pub const ATTN_B: ParamId = ParamId(13);
    pub const ATTN_V: ParamId = ParamId(14);
    pub const OUT_W: ParamId = ParamId(15);
    pub const OUT_B: ParamId = ParamId(16);
    pub const GEN_WC: ParamId = ParamId(17);
    pub const GEN_WS: ParamId = ParamId(18);
    pub const GEN_WX: ParamId = ParamId(19);
    pub const GEN_B: ParamId = ParamId(20);
}

/// Named model weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    config: ModelConfig,
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParameterStore {
    /// Weights uniform in [−0.1, 0.1], biases (`*_b`) zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, shape) in config.layout() {
            let mut arr = Array::zeros(&shape);
            if !name.ends_with("_b") {
                for v in arr.data_mut() {
                    *v = rng.gen_range(-0.1..=0.1);
                }
            }
            names.push(name.to_string());
            values.push(arr);
        }
        Ok(ParameterStore { config, names, values })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.id(name).map(|i| &self.values[i.0])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.id(name).map(move |i| &mut self.values[i.0])
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }
}

// ---------------------------------------------------------------- checkpoint

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PGEN";
pub const CHECKPOINT_VERSION: u32 = 1;

impl ParameterStore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.num_scalars() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let c = &self.config;
        for v in [c.hidden_dim, c.emb_dim, c.vocab_size, c.max_len, c.attn_dim] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for (name, arr) in self.names.iter().zip(&self.values) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(arr.rank() as u32).to_le_bytes());
            for &d in arr.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in arr.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {magic:?}, expected \"PGEN\""
            )));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            hidden_dim: dims[0],
            emb_dim: dims[1],
            vocab_size: dims[2],
            max_len: dims[3],
            attn_dim: dims[4],
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let layout = config.layout();
        let mut names = Vec::with_capacity(layout.len());
        let mut values = Vec::with_capacity(layout.len());
        for (expected_name, expected_shape) in &layout {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
                .to_string();
            if name != *expected_name {
                return Err(Error::Format(format!(
                    "expected parameter {expected_name:?}, found {name:?}"
                )));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != *expected_shape {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {shape:?}, expected {expected_shape:?}"
                )));
            }
            let len: usize = shape.iter().product();
            let raw = r.take(len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            names.push(name);
            values.push(Array::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after parameters",
                bytes.len() - r.pos
            )));
        }
        Ok(ParameterStore { config, names, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        ParameterStore::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

// ------------------------------------------------------------- tape forward

/// Encoder outputs as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct EncoderNodes {
    /// `[S, 2H]`
    pub states: NodeId,
    /// `[S, A]`, the `W_h h_i` attention features.
    pub features: NodeId,
    pub init: DecoderNodes,
    pub len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderNodes {
    pub h: NodeId,
    pub c: NodeId,
    /// Previous context vector h*_{t−1}.
    pub ctx: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct StepNodes {
    pub state: DecoderNodes,
    pub dist: NodeId,
    pub attention: NodeId,
    pub p_gen: NodeId,
}

fn lstm_cell(
    t: &mut Tape<'_>,
    w: ParamId,
    b: ParamId,
    input: NodeId,
    h: NodeId,
    c: NodeId,
    hidden: usize,
) -> Result<(NodeId, NodeId)> {
    let w = t.param(w);
    let b = t.param(b);
    let z = t.concat(&[input, h])?;
    let zw = t.matmul(z, w)?;
    let gates = t.add(zw, b)?;
    let i = t.slice(gates, 0, hidden)?;
    let f = t.slice(gates, hidden, hidden)?;
    let g = t.slice(gates, 2 * hidden, hidden)?;
    let o = t.slice(gates, 3 * hidden, hidden)?;
    let i = t.sigmoid(i);
    let f = t.sigmoid(f);
    let g = t.tanh(g);
    let o = t.sigmoid(o);
    let fc = t.mul(f, c)?;
    let ig = t.mul(i, g)?;
    let c_new = t.add(fc, ig)?;
    let tc = t.tanh(c_new);
    let h_new = t.mul(o, tc)?;
    Ok((h_new, c_new))
}

fn affine_tanh(t: &mut Tape<'_>, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
    let w = t.param(w);
    let b = t.param(b);
    let xw = t.matmul(x, w)?;
    let y = t.add(xw, b)?;
    Ok(t.tanh(y))
}

/// Runs the bidirectional encoder. Ids must be base-vocabulary ids.
pub fn encode_nodes(t: &mut Tape<'_>, config: &ModelConfig, src_ids: &[usize]) -> Result<EncoderNodes> {
    if src_ids.is_empty() {
        return Err(Error::contract("encode_source: empty source"));
    }
    if let Some(&bad) = src_ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(Error::contract(format!(
            "encoder input id {bad} >= vocab_size {}",
            config.vocab_size
        )));
    }
    let hd = config.hidden_dim;
    let emb = t.param(pid::EMBEDDING);
    let embedded = src_ids
        .iter()
        .map(|&id| t.gather(emb, id))
        .collect::<Result<Vec<_>>>()?;
    let zero = t.constant(Array::zeros(&[hd]));

    let mut fw = Vec::with_capacity(src_ids.len());
    let (mut h, mut c) = (zero, zero);
    for &x in &embedded {
        (h, c) = lstm_cell(t, pid::ENC_FW_W, pid::ENC_FW_B, x, h, c, hd)?;
        fw.push(h);
    }
    let fw_c = c;
    let mut bw = vec![zero; src_ids.len()];
    let (mut h, mut c) = (zero, zero);
    for (i, &x) in embedded.iter().enumerate().rev() {
        (h, c) = lstm_cell(t, pid::ENC_BW_W, pid::ENC_BW_B, x, h, c, hd)?;
        bw[i] = h;
    }
    let bw_c = c;

    let rows = fw
        .iter()
        .zip(&bw)
        .map(|(&f, &b)| t.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    let states = t.stack(&rows)?;
    let wh = t.param(pid::ATTN_WH);
    let features = t.matmul(states, wh)?;

    let last_h = t.concat(&[*fw.last().expect("non-empty"), bw[0]])?;
    let last_c = t.concat(&[fw_c, bw_c])?;
    let init_h = affine_tanh(t, last_h, pid::REDUCE_H_W, pid::REDUCE_H_B)?;
    let init_c = affine_tanh(t, last_c, pid::REDUCE_C_W, pid::REDUCE_C_B)?;
    let ctx = t.constant(Array::zeros(&[2 * hd]));
    Ok(EncoderNodes {
        states,
        features,
        init: DecoderNodes {
            h: init_h,
            c: init_c,
            ctx,
        },
        len: src_ids.len(),
    })
}

/// Size of the extended vocabulary implied by a source's extended ids.
pub fn extended_size(config: &ModelConfig, src_ext_ids: &[usize]) -> usize {
    src_ext_ids
        .iter()
        .map(|&i| i + 1)
        .max()
        .unwrap_or(0)
        .max(config.vocab_size)
}

/// One decoder step; `input_id` may be an extended id (embedded as UNK).
pub fn step_nodes(
    t: &mut Tape<'_>,
    config: &ModelConfig,
    state: &DecoderNodes,
    input_id: usize,
    enc: &EncoderNodes,
    src_ext_ids: &[usize],
) -> Result<StepNodes> {
    let ext = extended_size(config, src_ext_ids);
    if input_id >= ext {
        return Err(Error::contract(format!(
            "decoder input {input_id} outside extended vocabulary of size {ext}"
        )));
    }
    if src_ext_ids.len() != enc.len {
        return Err(Error::contract(format!(
            "{} extended ids for {} encoder states",
            src_ext_ids.len(),
            enc.len
        )));
    }
    let hd = config.hidden_dim;
    let emb_table = t.param(pid::EMBEDDING);
    let lookup = if input_id < config.vocab_size { input_id } else { UNK };
    let x = t.gather(emb_table, lookup)?;
    let dec_in = t.concat(&[x, state.ctx])?;
    let (h, c) = lstm_cell(t, pid::DEC_W, pid::DEC_B, dec_in, state.h, state.c, hd)?;

    // attention
    let ws = t.param(pid::ATTN_WS);
    let ab = t.param(pid::ATTN_B);
    let v = t.param(pid::ATTN_V);
    let hs = t.matmul(h, ws)?;
    let dec_feat = t.add(hs, ab)?;
    let pre = t.add(enc.features, dec_feat)?;
    let act = t.tanh(pre);
    let energy = t.matmul(act, v)?;
    let attention = t.softmax(energy);
    let ctx = t.matmul(attention, enc.states)?;

    // generation distribution
    let out_w = t.param(pid::OUT_W);
    let out_b = t.param(pid::OUT_B);
    let feat = t.concat(&[h, ctx])?;
    let logits = t.matmul(feat, out_w)?;
    let logits = t.add(logits, out_b)?;
    let p_vocab = t.softmax(logits);

    // copy gate
    let wc = t.param(pid::GEN_WC);
    let wsg = t.param(pid::GEN_WS);
    let wx = t.param(pid::GEN_WX);
    let gb = t.param(pid::GEN_B);
    let gc = t.matmul(ctx, wc)?;
    let gs = t.matmul(h, wsg)?;
    let gx = t.matmul(x, wx)?;
    let g = t.add(gc, gs)?;
    let g = t.add(g, gx)?;
    let g = t.add(g, gb)?;
    let p_gen = t.sigmoid(g);

    let gen = t.mul(p_gen, p_vocab)?;
    let gen = if ext > config.vocab_size {
        let identity: Vec<usize> = (0..config.vocab_size).collect();
        t.scatter_add(gen, &identity, ext)?
    } else {
        gen
    };
    let p_copy = t.affine(p_gen, -1.0, 1.0);
    let copy = t.mul(p_copy, attention)?;
    let copy = t.scatter_add(copy, src_ext_ids, ext)?;
    let dist = t.add(gen, copy)?;

    Ok(StepNodes {
        state: DecoderNodes { h, c, ctx },
        dist,
        attention,
        p_gen,
    })
}

/// `log(dist[token] + ε)` on the tape.
pub fn log_prob_node(t: &mut Tape<'_>, dist: NodeId, token: usize) -> Result<NodeId> {
    let support = t.value(dist).len();
    if token >= support {
        return Err(Error::contract(format!(
            "token {token} outside distribution support {support}"
        )));
    }
    let p = t.pick(dist, token)?;
    let p = t.affine(p, 1.0, LOG_EPS);
    Ok(t.log(p))
}

/// `log(dist[token] + ε)`.
pub fn step_log_prob(dist: &[f64], token: usize) -> Result<f64> {
    dist.get(token)
        .map(|&p| (1.0 * p + LOG_EPS).ln())
        .ok_or_else(|| Error::contract(format!("token {token} outside distribution support {}", dist.len())))
}

// ------------------------------------------------------------ value forward

/// Encoder outputs as plain arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates {
    /// `[S, 2H]` concatenated forward/backward states.
    pub states: Array,
    pub features: Array,
    pub init: DecoderState,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub h: Array,
    pub c: Array,
    pub ctx: Array,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: DecoderState,
    pub dist: Vec<f64>,
    pub attention: Vec<f64>,
    pub p_gen: f64,
}

pub fn encode_source(params: &ParameterStore, src_ids: &[usize]) -> Result<EncoderStates> {
    let mut t = Tape::new(params.values());
    let enc = encode_nodes(&mut t, params.config(), src_ids)?;
    Ok(EncoderStates {
        states: t.value(enc.states).clone(),
        features: t.value(enc.features).clone(),
        init: DecoderState {
            h: t.value(enc.init.h).clone(),
            c: t.value(enc.init.c).clone(),
            ctx: t.value(enc.init.ctx).clone(),
        },
    })
}

pub fn decoder_step(
    params: &ParameterStore,
    state: &DecoderState,
    input_id: usize,
    enc: &EncoderStates,
    src_ext_ids: &[usize],
) -> Result<StepOutput> {
    let mut t = Tape::new(params.values());
    let enc_nodes = EncoderNodes {
        states: t.constant(enc.states.clone()),
        features: t.constant(enc.features.clone()),
        init: DecoderNodes {
            h: t.constant(state.h.clone()),
            c: t.constant(state.c.clone()),
            ctx: t.constant(state.ctx.clone()),
        },
        len: enc.len(),
    };
    let out = step_nodes(
        &mut t,
        params.config(),
        &enc_nodes.init,
        input_id,
        &enc_nodes,
        src_ext_ids,
    )?;
    Ok(StepOutput {
        state: DecoderState {
            h: t.value(out.state.h).clone(),
            c: t.value(out.state.c).clone(),
            ctx: t.value(out.state.ctx).clone(),
        },
        dist: t.value(out.dist).data().to_vec(),
        attention: t.value(out.attention).data().to_vec(),
        p_gen: t.value(out.p_gen).item(),
    })
}
