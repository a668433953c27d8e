//! The differentiable seq2seq networks: tied embeddings, stacked GRU
//! encoder/decoder pairs in both directions, additive attention, greedy
//! decoding, teacher-forced losses, and the hand-written reverse-mode
//! gradients for all of it.
//!
//! The forward network maps linearized facts to a sentence; the backward
//! network re-encodes a decoded sentence back into the facts for the
//! autoencoding objective. The embedding matrix is shared by all four
//! stacks; recurrent, attention and output parameters are per direction.
//! Greedy decodes are constants for differentiation: no gradient flows
//! through the decode that produced a reconstruction input.

use super::attention::{AttnCache, Attention};
use super::gru::{GruCache, GruLayer};
use super::math::{argmax, log_softmax_at, softmax, Mat};
use super::Hyperparams;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

const INIT_SCALE: f64 = 0.08;

/// Recurrent stacks, attention and output projection for one direction.
#[derive(Debug, Clone)]
pub struct DirectionParams {
    pub encoder: Vec<GruLayer>,
    pub decoder: Vec<GruLayer>,
    pub attention: Attention,
    pub w_out: Mat,
    pub b_out: Vec<f64>,
}

impl DirectionParams {
    fn shaped(hp: &Hyperparams, init: Option<&mut rand_chacha::ChaCha8Rng>) -> DirectionParams {
        let (d, h, v) = (hp.embed_dim, hp.hidden_dim, hp.vocab_size);
        let enc_in = |l: usize| if l == 0 { d } else { h };
        let dec_in = |l: usize| if l == 0 { d + h } else { h };
        match init {
            Some(rng) => DirectionParams {
                encoder: (0..hp.layers)
                    .map(|l| GruLayer::init(enc_in(l), h, INIT_SCALE, rng))
                    .collect(),
                decoder: (0..hp.layers)
                    .map(|l| GruLayer::init(dec_in(l), h, INIT_SCALE, rng))
                    .collect(),
                attention: Attention::init(h, INIT_SCALE, rng),
                w_out: Mat::uniform(v, h, INIT_SCALE, rng),
                b_out: vec![0.0; v],
            },
            None => DirectionParams {
                encoder: (0..hp.layers).map(|l| GruLayer::zeros(enc_in(l), h)).collect(),
                decoder: (0..hp.layers).map(|l| GruLayer::zeros(dec_in(l), h)).collect(),
                attention: Attention::zeros(h),
                w_out: Mat::zeros(v, h),
                b_out: vec![0.0; v],
            },
        }
    }

    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.encoder.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("encoder.{i}.{name}"), t));
            }
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("decoder.{i}.{name}"), t));
            }
        }
        for (name, t) in self.attention.tensors() {
            out.push((format!("attention.{name}"), t));
        }
        out.push(("w_out".into(), self.w_out.data()));
        out.push(("b_out".into(), &self.b_out));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("encoder.{i}.{name}"), t));
            }
        }
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("decoder.{i}.{name}"), t));
            }
        }
        for (name, t) in self.attention.tensors_mut() {
            out.push((format!("attention.{name}"), t));
        }
        out.push(("w_out".into(), self.w_out.data_mut()));
        out.push(("b_out".into(), &mut self.b_out));
        out
    }
}

/// All trainable tensors. Gradients reuse the same struct, zero-shaped.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Tied embedding matrix, shared by all four stacks.
    pub embedding: Mat,
    pub forward_net: DirectionParams,
    pub backward_net: DirectionParams,
}

impl ModelParams {
    /// Seeded uniform(-0.08, 0.08) weights, zero biases.
    pub fn init(hp: &Hyperparams) -> ModelParams {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(hp.seed);
        ModelParams {
            embedding: Mat::uniform(hp.vocab_size, hp.embed_dim, INIT_SCALE, &mut rng),
            forward_net: DirectionParams::shaped(hp, Some(&mut rng)),
            backward_net: DirectionParams::shaped(hp, Some(&mut rng)),
        }
    }

    pub fn zeros(hp: &Hyperparams) -> ModelParams {
        ModelParams {
            embedding: Mat::zeros(hp.vocab_size, hp.embed_dim),
            forward_net: DirectionParams::shaped(hp, None),
            backward_net: DirectionParams::shaped(hp, None),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    /// Named tensors in a fixed traversal order shared with gradients.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.data())];
        for (name, t) in self.forward_net.tensors() {
            out.push((format!("forward.{name}"), t));
        }
        for (name, t) in self.backward_net.tensors() {
            out.push((format!("backward.{name}"), t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.data_mut())];
        for (name, t) in self.forward_net.tensors_mut() {
            out.push((format!("forward.{name}"), t));
        }
        for (name, t) in self.backward_net.tensors_mut() {
            out.push((format!("backward.{name}"), t));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Encoder output: per-position top-layer states and per-layer final states.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub states: Vec<Vec<f64>>,
    pub final_states: Vec<Vec<f64>>,
}

/// Loss components for one batch. `total = forward + ae_weight * reconstruction`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub forward_loss: f64,
    pub reconstruction_loss: f64,
    pub total: f64,
    /// Instances whose greedy decode was empty and were scored by the
    /// GO-seeded backward decoder alone.
    pub empty_decodes: usize,
}

// ---------------------------------------------------------------------------
// Forward traces
// ---------------------------------------------------------------------------

struct EncodeTrace {
    /// `states[t][layer]`: hidden state after step `t`.
    states: Vec<Vec<Vec<f64>>>,
    caches: Vec<Vec<GruCache>>,
}

impl EncodeTrace {
    fn top_states(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.last().unwrap().clone()).collect()
    }

    fn final_states(&self) -> Vec<Vec<f64>> {
        self.states.last().unwrap().clone()
    }
}

fn encode_trace(stack: &[GruLayer], emb: &Mat, ids: &[u32]) -> EncodeTrace {
    let layers = stack.len();
    let h = stack[0].hidden_dim();
    let mut states: Vec<Vec<f64>> = vec![vec![0.0; h]; layers];
    let mut trace = EncodeTrace {
        states: Vec::with_capacity(ids.len()),
        caches: Vec::with_capacity(ids.len()),
    };
    for &id in ids {
        let mut input = emb.row(id as usize).to_vec();
        let mut step_states = Vec::with_capacity(layers);
        let mut step_caches = Vec::with_capacity(layers);
        for (l, layer) in stack.iter().enumerate() {
            let (new_state, cache) = layer.step(&input, &states[l]);
            input = new_state.clone();
            states[l] = new_state.clone();
            step_states.push(new_state);
            step_caches.push(cache);
        }
        trace.states.push(step_states);
        trace.caches.push(step_caches);
    }
    trace
}

struct DecodeTrace {
    caches: Vec<Vec<GruCache>>,
    attn: Vec<Option<AttnCache>>,
    queries: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    top_states: Vec<Vec<f64>>,
    prev_ids: Vec<u32>,
}

struct DecodeResult {
    trace: DecodeTrace,
    nll_sum: f64,
    scored: usize,
}

/// Teacher-forced decode of `targets` with `prev_ids` fed at each step.
/// `init` seeds the per-layer decoder states (zeros when absent); attention
/// runs only when enabled and encoder states exist.
#[allow(clippy::too_many_arguments)]
fn decode_teacher_forced(
    dir: &DirectionParams,
    emb: &Mat,
    enc_states: &[Vec<f64>],
    enc_proj: &[Vec<f64>],
    init: Option<&[Vec<f64>]>,
    prev_ids: &[u32],
    targets: &[u32],
    use_attention: bool,
) -> DecodeResult {
    let layers = dir.decoder.len();
    let h = dir.decoder[0].hidden_dim();
    let mut states: Vec<Vec<f64>> = match init {
        Some(s) => s.to_vec(),
        None => vec![vec![0.0; h]; layers],
    };
    let attending = use_attention && !enc_states.is_empty();
    let mut trace = DecodeTrace {
        caches: Vec::with_capacity(targets.len()),
        attn: Vec::with_capacity(targets.len()),
        queries: Vec::with_capacity(targets.len()),
        probs: Vec::with_capacity(targets.len()),
        top_states: Vec::with_capacity(targets.len()),
        prev_ids: prev_ids.to_vec(),
    };
    let mut nll_sum = 0.0;
    let mut scored = 0usize;
    for (&prev, &target) in prev_ids.iter().zip(targets) {
        let query = states[layers - 1].clone();
        let (context, attn_cache) = if attending {
            let (c, cache) = dir.attention.forward(&query, enc_states, enc_proj);
            (c, Some(cache))
        } else {
            (vec![0.0; h], None)
        };
        let mut input: Vec<f64> = Vec::with_capacity(emb.cols() + h);
        input.extend_from_slice(emb.row(prev as usize));
        input.extend_from_slice(&context);

        let mut step_caches = Vec::with_capacity(layers);
        for (l, layer) in dir.decoder.iter().enumerate() {
            let (new_state, cache) = layer.step(&input, &states[l]);
            input = new_state.clone();
            states[l] = new_state.clone();
            step_caches.push(cache);
        }
        let top = states[layers - 1].clone();
        let mut logits = dir.b_out.clone();
        dir.w_out.matvec_add(&top, &mut logits);
        if target != Vocabulary::PAD_ID {
            nll_sum -= log_softmax_at(&logits, target as usize);
            scored += 1;
        }
        trace.probs.push(softmax(&logits));
        trace.top_states.push(top);
        trace.queries.push(query);
        trace.attn.push(attn_cache);
        trace.caches.push(step_caches);
    }
    DecodeResult {
        trace,
        nll_sum,
        scored,
    }
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Backprop one instance through one direction: decoder (with attention)
/// first, then the encoder. `scale` multiplies the per-token NLL gradients
/// (1/N for the forward objective, lambda/N for reconstruction). Encoder
/// inputs may be absent (empty-decode reconstruction path).
#[allow(clippy::too_many_arguments)]
fn direction_backward(
    dir: &DirectionParams,
    grads: &mut DirectionParams,
    emb: &Mat,
    demb: &mut Mat,
    enc_ids: Option<&[u32]>,
    enc_trace: Option<&EncodeTrace>,
    enc_states: &[Vec<f64>],
    dec: &DecodeTrace,
    targets: &[u32],
    scale: f64,
    use_attention: bool,
) {
    let layers = dir.decoder.len();
    let h = dir.decoder[0].hidden_dim();
    let d = emb.cols();
    let attending = use_attention && !enc_states.is_empty();

    let mut denc: Vec<Vec<f64>> = vec![vec![0.0; h]; enc_states.len()];
    let mut dstates: Vec<Vec<f64>> = vec![vec![0.0; h]; layers];

    for t in (0..targets.len()).rev() {
        // d loss / d logits = scale * (softmax - onehot), zero on PAD.
        if targets[t] != Vocabulary::PAD_ID {
            let mut dlogits = dec.probs[t].clone();
            dlogits[targets[t] as usize] -= 1.0;
            for v in dlogits.iter_mut() {
                *v *= scale;
            }
            grads.w_out.add_outer(&dlogits, &dec.top_states[t]);
            for (g, dl) in grads.b_out.iter_mut().zip(&dlogits) {
                *g += dl;
            }
            dir.w_out.matvec_t_add(&dlogits, &mut dstates[layers - 1]);
        }

        // Stack backward, top to bottom.
        let mut dx_above: Option<Vec<f64>> = None;
        for l in (0..layers).rev() {
            let mut dh = std::mem::take(&mut dstates[l]);
            if let Some(dx) = &dx_above {
                for (a, b) in dh.iter_mut().zip(dx) {
                    *a += b;
                }
            }
            let mut dx = vec![0.0; dir.decoder[l].in_dim()];
            let mut dh_prev = vec![0.0; h];
            dir.decoder[l].backward(&dec.caches[t][l], &dh, &mut grads.decoder[l], &mut dx, &mut dh_prev);
            dstates[l] = dh_prev;
            dx_above = Some(dx);
        }
        let dx0 = dx_above.expect("at least one layer");

        // Input split: [embedding(prev) ; context].
        let prev = dec.prev_ids[t] as usize;
        for (g, v) in demb.row_mut(prev).iter_mut().zip(&dx0[..d]) {
            *g += v;
        }
        if attending {
            let dcontext = &dx0[d..];
            let mut dquery = vec![0.0; h];
            dir.attention.backward(
                dec.attn[t].as_ref().expect("attention cache"),
                &dec.queries[t],
                enc_states,
                dcontext,
                &mut grads.attention,
                &mut dquery,
                &mut denc,
            );
            for (a, b) in dstates[layers - 1].iter_mut().zip(&dquery) {
                *a += b;
            }
        }
    }

    // dstates now holds gradients w.r.t. the initial decoder states, which
    // are the encoder final states when an encoder ran.
    let (enc_ids, enc_trace) = match (enc_ids, enc_trace) {
        (Some(ids), Some(trace)) => (ids, trace),
        _ => return,
    };
    for i in (0..enc_ids.len()).rev() {
        for (a, b) in dstates[layers - 1].iter_mut().zip(&denc[i]) {
            *a += b;
        }
        let mut dx_above: Option<Vec<f64>> = None;
        for l in (0..layers).rev() {
            let mut dh = std::mem::take(&mut dstates[l]);
            if let Some(dx) = &dx_above {
                for (a, b) in dh.iter_mut().zip(dx) {
                    *a += b;
                }
            }
            let mut dx = vec![0.0; dir.encoder[l].in_dim()];
            let mut dh_prev = vec![0.0; h];
            dir.encoder[l].backward(
                &enc_trace.caches[i][l],
                &dh,
                &mut grads.encoder[l],
                &mut dx,
                &mut dh_prev,
            );
            dstates[l] = dh_prev;
            dx_above = Some(dx);
        }
        let dx0 = dx_above.expect("at least one layer");
        for (g, v) in demb.row_mut(enc_ids[i] as usize).iter_mut().zip(&dx0) {
            *g += v;
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

fn check_ids(ids: &[u32], vocab_size: usize) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(Error::Invalid(format!(
            "token id {bad} out of range for vocabulary of {vocab_size}"
        )));
    }
    Ok(())
}

/// Run the forward-direction encoder over an input id sequence.
pub fn encode(params: &ModelParams, _hp: &Hyperparams, ids: &[u32]) -> Result<EncoderOutput> {
    if ids.is_empty() {
        return Err(Error::Invalid("cannot encode an empty input".into()));
    }
    check_ids(ids, params.vocab_size())?;
    let trace = encode_trace(&params.forward_net.encoder, &params.embedding, ids);
    Ok(EncoderOutput {
        states: trace.top_states(),
        final_states: trace.final_states(),
    })
}

/// Decoder state exposed for step-by-step decoding.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub layer_states: Vec<Vec<f64>>,
}

impl DecoderState {
    /// Seed from encoder final states.
    pub fn from_encoder(enc: &EncoderOutput) -> DecoderState {
        DecoderState {
            layer_states: enc.final_states.clone(),
        }
    }
}

/// One decoder step of the forward network: consume `prev_id`, attend over
/// `enc.states`, and return the next-token distribution with the updated
/// state. The distribution sums to one.
pub fn decode_distribution(
    params: &ModelParams,
    hp: &Hyperparams,
    prev_id: u32,
    state: &DecoderState,
    enc: &EncoderOutput,
) -> Result<(Vec<f64>, DecoderState)> {
    check_ids(&[prev_id], params.vocab_size())?;
    let dir = &params.forward_net;
    let h = hp.hidden_dim;
    let layers = dir.decoder.len();
    let mut states = state.layer_states.clone();
    let query = states[layers - 1].clone();
    let context = if enc.states.is_empty() {
        vec![0.0; h]
    } else {
        let proj = dir.attention.project_encoder(&enc.states);
        dir.attention.forward(&query, &enc.states, &proj).0
    };
    let mut input: Vec<f64> = Vec::with_capacity(hp.embed_dim + h);
    input.extend_from_slice(params.embedding.row(prev_id as usize));
    input.extend_from_slice(&context);
    for (l, layer) in dir.decoder.iter().enumerate() {
        let new_state = layer.step_inference(&input, &states[l]);
        input = new_state.clone();
        states[l] = new_state;
    }
    let mut logits = dir.b_out.clone();
    dir.w_out.matvec_add(&states[layers - 1], &mut logits);
    Ok((softmax(&logits), DecoderState { layer_states: states }))
}

/// Mean per-token negative log-likelihood of `y` given `x` under the
/// forward network, teacher-forced, with PAD positions excluded. `y` must
/// end with the end-of-sequence token.
pub fn teacher_forced_loss(
    params: &ModelParams,
    _hp: &Hyperparams,
    x: &[u32],
    y: &[u32],
) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Invalid("empty sequence".into()));
    }
    check_ids(x, params.vocab_size())?;
    check_ids(y, params.vocab_size())?;
    let last_real = y.iter().rev().find(|&&id| id != Vocabulary::PAD_ID);
    if last_real != Some(&Vocabulary::EOS_ID) {
        return Err(Error::Invalid("target must end with EOS".into()));
    }
    let enc = encode_trace(&params.forward_net.encoder, &params.embedding, x);
    let enc_states = enc.top_states();
    let proj = params.forward_net.attention.project_encoder(&enc_states);
    let prev_ids = go_prefixed(y);
    let result = decode_teacher_forced(
        &params.forward_net,
        &params.embedding,
        &enc_states,
        &proj,
        Some(&enc.final_states()),
        &prev_ids,
        y,
        true,
    );
    Ok(result.nll_sum / result.scored.max(1) as f64)
}

/// `[GO, y_0, ..., y_{n-2}]`: the decoder inputs for teacher forcing.
fn go_prefixed(targets: &[u32]) -> Vec<u32> {
    let mut prev = Vec::with_capacity(targets.len());
    prev.push(Vocabulary::GO_ID);
    prev.extend_from_slice(&targets[..targets.len() - 1]);
    prev
}

/// Greedy decode: argmax at each step (ties to the lowest id), fed back as
/// the next input, stopping at EOS or `max_decode_len`. EOS is excluded
/// from the returned sequence.
pub fn greedy_decode(params: &ModelParams, hp: &Hyperparams, x: &[u32]) -> Result<Vec<u32>> {
    if x.is_empty() {
        return Err(Error::Invalid("cannot decode from an empty input".into()));
    }
    check_ids(x, params.vocab_size())?;
    let dir = &params.forward_net;
    let layers = dir.decoder.len();
    let enc = encode_trace(&dir.encoder, &params.embedding, x);
    let enc_states = enc.top_states();
    let proj = dir.attention.project_encoder(&enc_states);
    let mut states = enc.final_states();
    let mut prev = Vocabulary::GO_ID;
    let mut out = Vec::new();
    for _ in 0..hp.max_decode_len {
        let query = states[layers - 1].clone();
        let (context, _) = dir.attention.forward(&query, &enc_states, &proj);
        let mut input: Vec<f64> = Vec::with_capacity(hp.embed_dim + hp.hidden_dim);
        input.extend_from_slice(params.embedding.row(prev as usize));
        input.extend_from_slice(&context);
        for (l, layer) in dir.decoder.iter().enumerate() {
            let new_state = layer.step_inference(&input, &states[l]);
            input = new_state.clone();
            states[l] = new_state;
        }
        let mut logits = dir.b_out.clone();
        dir.w_out.matvec_add(&states[layers - 1], &mut logits);
        let id = argmax(&logits) as u32;
        if id == Vocabulary::EOS_ID {
            break;
        }
        out.push(id);
        prev = id;
    }
    Ok(out)
}

/// Reconstruction loss: the backward network encodes the decoded sequence
/// `y_hat` (a constant for differentiation) and is teacher-forced against
/// `x` plus EOS. An empty `y_hat` is scored by the GO-seeded decoder alone,
/// with no encoder states.
pub fn reconstruction_loss(
    params: &ModelParams,
    hp: &Hyperparams,
    y_hat: &[u32],
    x: &[u32],
) -> Result<f64> {
    check_ids(x, params.vocab_size())?;
    check_ids(y_hat, params.vocab_size())?;
    let targets = eos_suffixed(x);
    let prev_ids = go_prefixed(&targets);
    let dir = &params.backward_net;
    if y_hat.is_empty() {
        let result = decode_teacher_forced(
            dir,
            &params.embedding,
            &[],
            &[],
            None,
            &prev_ids,
            &targets,
            hp.backward_attention,
        );
        return Ok(result.nll_sum / result.scored.max(1) as f64);
    }
    let enc = encode_trace(&dir.encoder, &params.embedding, y_hat);
    let enc_states = enc.top_states();
    let proj = dir.attention.project_encoder(&enc_states);
    let result = decode_teacher_forced(
        dir,
        &params.embedding,
        &enc_states,
        &proj,
        Some(&enc.final_states()),
        &prev_ids,
        &targets,
        hp.backward_attention,
    );
    Ok(result.nll_sum / result.scored.max(1) as f64)
}

fn eos_suffixed(ids: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len() + 1);
    out.extend_from_slice(ids);
    out.push(Vocabulary::EOS_ID);
    out
}

/// Batch loss with gradients. `y_hats` must be supplied when the
/// autoencoding weight is positive (one greedy decode per pair, treated as
/// constant). Losses are means over all non-PAD target tokens in the batch.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    hp: &Hyperparams,
    pairs: &[(Vec<u32>, Vec<u32>)],
    y_hats: Option<&[Vec<u32>]>,
) -> Result<(LossBreakdown, Box<ModelParams>)> {
    compute_batch(params, hp, pairs, y_hats, true)
}

/// Batch loss without gradients; the finite-difference harness in the test
/// suite drives this with pinned `y_hats`.
pub fn batch_loss(
    params: &ModelParams,
    hp: &Hyperparams,
    pairs: &[(Vec<u32>, Vec<u32>)],
    y_hats: Option<&[Vec<u32>]>,
) -> Result<LossBreakdown> {
    compute_batch(params, hp, pairs, y_hats, false).map(|(loss, _)| loss)
}

/// Greedy decodes for every pair, for use as reconstruction inputs.
pub fn greedy_decodes(
    params: &ModelParams,
    hp: &Hyperparams,
    pairs: &[(Vec<u32>, Vec<u32>)],
) -> Result<Vec<Vec<u32>>> {
    pairs
        .iter()
        .map(|(x, _)| greedy_decode(params, hp, x))
        .collect()
}

fn compute_batch(
    params: &ModelParams,
    hp: &Hyperparams,
    pairs: &[(Vec<u32>, Vec<u32>)],
    y_hats: Option<&[Vec<u32>]>,
    want_grads: bool,
) -> Result<(LossBreakdown, Box<ModelParams>)> {
    if pairs.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let lambda = hp.ae_weight;
    if lambda > 0.0 {
        match y_hats {
            Some(list) if list.len() == pairs.len() => {}
            _ => {
                return Err(Error::Invalid(
                    "autoencoding loss needs one decoded sequence per pair".into(),
                ))
            }
        }
    }
    for (x, y) in pairs {
        if x.is_empty() || y.is_empty() {
            return Err(Error::Invalid("empty sequence in batch".into()));
        }
        check_ids(x, params.vocab_size())?;
        check_ids(y, params.vocab_size())?;
    }

    // Token totals are known up front, so gradients can be scaled during a
    // single pass over the batch.
    let count_real = |ids: &[u32]| ids.iter().filter(|&&t| t != Vocabulary::PAD_ID).count();
    let n_forward: usize = pairs.iter().map(|(_, y)| count_real(y)).sum();
    let n_recon: usize = if lambda > 0.0 {
        pairs.iter().map(|(x, _)| count_real(x) + 1).sum()
    } else {
        0
    };

    let mut grads = Box::new(ModelParams::zeros(hp));
    let mut forward_sum = 0.0;
    let mut recon_sum = 0.0;
    let mut empty_decodes = 0usize;

    for (i, (x, y)) in pairs.iter().enumerate() {
        let enc = encode_trace(&params.forward_net.encoder, &params.embedding, x);
        let enc_states = enc.top_states();
        let proj = params.forward_net.attention.project_encoder(&enc_states);
        let prev_ids = go_prefixed(y);
        let dec = decode_teacher_forced(
            &params.forward_net,
            &params.embedding,
            &enc_states,
            &proj,
            Some(&enc.final_states()),
            &prev_ids,
            y,
            true,
        );
        forward_sum += dec.nll_sum;
        if want_grads {
            direction_backward(
                &params.forward_net,
                &mut grads.forward_net,
                &params.embedding,
                &mut grads.embedding,
                Some(x),
                Some(&enc),
                &enc_states,
                &dec.trace,
                y,
                1.0 / n_forward as f64,
                true,
            );
        }

        if lambda > 0.0 {
            let y_hat = &y_hats.expect("validated above")[i];
            check_ids(y_hat, params.vocab_size())?;
            let targets = eos_suffixed(x);
            let prev_ids = go_prefixed(&targets);
            if y_hat.is_empty() {
                empty_decodes += 1;
                let dec_b = decode_teacher_forced(
                    &params.backward_net,
                    &params.embedding,
                    &[],
                    &[],
                    None,
                    &prev_ids,
                    &targets,
                    hp.backward_attention,
                );
                recon_sum += dec_b.nll_sum;
                if want_grads {
                    direction_backward(
                        &params.backward_net,
                        &mut grads.backward_net,
                        &params.embedding,
                        &mut grads.embedding,
                        None,
                        None,
                        &[],
                        &dec_b.trace,
                        &targets,
                        lambda / n_recon as f64,
                        hp.backward_attention,
                    );
                }
            } else {
                let enc_b = encode_trace(&params.backward_net.encoder, &params.embedding, y_hat);
                let enc_b_states = enc_b.top_states();
                let proj_b = params.backward_net.attention.project_encoder(&enc_b_states);
                let dec_b = decode_teacher_forced(
                    &params.backward_net,
                    &params.embedding,
                    &enc_b_states,
                    &proj_b,
                    Some(&enc_b.final_states()),
                    &prev_ids,
                    &targets,
                    hp.backward_attention,
                );
                recon_sum += dec_b.nll_sum;
                if want_grads {
                    direction_backward(
                        &params.backward_net,
                        &mut grads.backward_net,
                        &params.embedding,
                        &mut grads.embedding,
                        Some(y_hat),
                        Some(&enc_b),
                        &enc_b_states,
                        &dec_b.trace,
                        &targets,
                        lambda / n_recon as f64,
                        hp.backward_attention,
                    );
                }
            }
        }
    }

    let forward_loss = forward_sum / n_forward.max(1) as f64;
    let reconstruction_loss = if lambda > 0.0 {
        recon_sum / n_recon.max(1) as f64
    } else {
        0.0
    };
    let total = forward_loss + lambda * reconstruction_loss;
    Ok((
        LossBreakdown {
            forward_loss,
            reconstruction_loss,
            total,
            empty_decodes,
        },
        grads,
    ))
}
