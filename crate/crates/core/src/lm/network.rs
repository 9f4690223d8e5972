//! Multi-layer LSTM: parameters, recurrent state, the forward step and
//! back-propagation through time.
//!
//! All parameters live in one flat `Vec<f64>`. Blocks appear in this order,
//! each row-major:
//!
//! 1. embedding, `vocab x emb`
//! 2. for every layer `l`: gate weights `4*hidden x (in_l + hidden)` acting
//!    on `[x; h]`, then gate bias `4*hidden`. Gate rows are stacked as input,
//!    forget, cell, output. `in_l` is `emb` for the first layer and `hidden`
//!    above it.
//! 3. output projection `hidden x vocab`, then output bias `vocab`.
//!
//! The checkpoint format writes the same sequence.

use std::ops::Range;

use rand::Rng;

use super::LmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDims {
    pub layers: usize,
    pub emb: usize,
    pub hidden: usize,
    pub vocab: usize,
}

impl LstmDims {
    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.emb
        } else {
            self.hidden
        }
    }

    fn gate_cols(&self, layer: usize) -> usize {
        self.layer_input(layer) + self.hidden
    }

    /// Named parameter blocks in storage order.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut blocks = Vec::with_capacity(2 * self.layers + 3);
        let mut at = 0;
        let mut push = |name: String, len: usize| {
            blocks.push((name, at..at + len));
            at += len;
        };
        push("embedding".into(), self.vocab * self.emb);
        for l in 0..self.layers {
            push(format!("layer{l}.weight"), 4 * self.hidden * self.gate_cols(l));
            push(format!("layer{l}.bias"), 4 * self.hidden);
        }
        push("output.weight".into(), self.hidden * self.vocab);
        push("output.bias".into(), self.vocab);
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks().last().map_or(0, |(_, r)| r.end)
    }

    fn layer_offsets(&self, layer: usize) -> (Range<usize>, Range<usize>) {
        let blocks = self.blocks();
        (blocks[1 + 2 * layer].1.clone(), blocks[2 + 2 * layer].1.clone())
    }

    fn output_offsets(&self) -> (Range<usize>, Range<usize>) {
        let blocks = self.blocks();
        let n = blocks.len();
        (blocks[n - 2].1.clone(), blocks[n - 1].1.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    dims: LstmDims,
    params: Vec<f64>,
    layer_ranges: Vec<(Range<usize>, Range<usize>)>,
    output_ranges: (Range<usize>, Range<usize>),
}

impl LstmWeights {
    pub fn zeros(dims: LstmDims) -> Self {
        Self::from_params(dims, vec![0.0; dims.param_count()]).expect("length matches")
    }

    pub fn from_params(dims: LstmDims, params: Vec<f64>) -> Result<Self, LmError> {
        if dims.layers == 0 || dims.emb == 0 || dims.hidden == 0 || dims.vocab < 2 {
            return Err(LmError::InvalidDims(format!("{dims:?}")));
        }
        if params.len() != dims.param_count() {
            return Err(LmError::InvalidDims(format!(
                "expected {} parameters, got {}",
                dims.param_count(),
                params.len()
            )));
        }
        Ok(LstmWeights {
            dims,
            params,
            layer_ranges: (0..dims.layers).map(|l| dims.layer_offsets(l)).collect(),
            output_ranges: dims.output_offsets(),
        })
    }

    /// Uniform initialisation in `[-scale, scale]`; forget-gate biases start at 1.
    pub fn random<R: Rng>(dims: LstmDims, scale: f64, rng: &mut R) -> Self {
        let mut w = Self::zeros(dims);
        for p in w.params.iter_mut() {
            *p = rng.gen_range(-scale..=scale);
        }
        for l in 0..dims.layers {
            let bias = w.layer_ranges[l].1.clone();
            let h = dims.hidden;
            w.params[bias.clone()].iter_mut().for_each(|b| *b = 0.0);
            w.params[bias.start + h..bias.start + 2 * h]
                .iter_mut()
                .for_each(|b| *b = 1.0);
        }
        let out_bias = w.output_ranges.1.clone();
        w.params[out_bias].iter_mut().for_each(|b| *b = 0.0);
        w
    }

    pub fn dims(&self) -> LstmDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn embedding_row(&self, id: u32) -> &[f64] {
        let e = self.dims.emb;
        let start = id as usize * e;
        &self.params[start..start + e]
    }

    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b) = &self.layer_ranges[layer];
        (&self.params[w.clone()], &self.params[b.clone()])
    }

    pub fn output(&self) -> (&[f64], &[f64]) {
        let (w, b) = &self.output_ranges;
        (&self.params[w.clone()], &self.params[b.clone()])
    }

    pub fn output_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let (w, b) = self.output_ranges.clone();
        let (head, tail) = self.params.split_at_mut(b.start);
        (&mut head[w], &mut tail[..b.len()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Per-layer hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub layers: Vec<LayerState>,
}

impl LstmState {
    pub fn zeros(dims: LstmDims) -> Self {
        LstmState {
            layers: (0..dims.layers)
                .map(|_| LayerState {
                    h: vec![0.0; dims.hidden],
                    c: vec![0.0; dims.hidden],
                })
                .collect(),
        }
    }

    pub fn top_hidden(&self) -> &[f64] {
        &self.layers.last().expect("at least one layer").h
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.h.iter().chain(&l.c).all(|v| v.is_finite()))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// One cell update. `xh` is `[x; h_prev]`; `gates` receives the activated
/// input, forget, cell and output gates.
fn cell_forward(
    weight: &[f64],
    bias: &[f64],
    xh: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let hidden = c_prev.len();
    let cols = xh.len();
    for (r, g) in gates.iter_mut().enumerate() {
        *g = bias[r] + dot(&weight[r * cols..(r + 1) * cols], xh);
    }
    for k in 0..hidden {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[hidden + k]);
        let g = gates[2 * hidden + k].tanh();
        let o = sigmoid(gates[3 * hidden + k]);
        gates[k] = i;
        gates[hidden + k] = f;
        gates[2 * hidden + k] = g;
        gates[3 * hidden + k] = o;
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
}

fn project(weights: &LstmWeights, h: &[f64], logits: &mut [f64]) {
    let (w, b) = weights.output();
    let v = weights.dims.vocab;
    logits.copy_from_slice(b);
    for (k, hk) in h.iter().enumerate() {
        axpy(logits, *hk, &w[k * v..(k + 1) * v]);
    }
}

/// Next-token logits from a state.
pub fn output_logits(weights: &LstmWeights, state: &LstmState) -> Vec<f64> {
    let mut logits = vec![0.0; weights.dims.vocab];
    project(weights, state.top_hidden(), &mut logits);
    logits
}

/// Scratch buffers for stepping without allocation.
struct StepScratch {
    xh: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepScratch {
    fn new(dims: LstmDims) -> Self {
        StepScratch {
            xh: Vec::with_capacity(dims.emb.max(dims.hidden) + dims.hidden),
            gates: vec![0.0; 4 * dims.hidden],
            c: vec![0.0; dims.hidden],
            tanh_c: vec![0.0; dims.hidden],
            h: vec![0.0; dims.hidden],
        }
    }
}

fn step_in_place(weights: &LstmWeights, state: &mut LstmState, token_id: u32, scratch: &mut StepScratch) {
    let dims = weights.dims;
    for l in 0..dims.layers {
        scratch.xh.clear();
        if l == 0 {
            scratch.xh.extend_from_slice(weights.embedding_row(token_id));
        } else {
            scratch.xh.extend_from_slice(&state.layers[l - 1].h);
        }
        scratch.xh.extend_from_slice(&state.layers[l].h);
        let (w, b) = weights.layer(l);
        cell_forward(
            w,
            b,
            &scratch.xh,
            &state.layers[l].c,
            &mut scratch.gates,
            &mut scratch.c,
            &mut scratch.tanh_c,
            &mut scratch.h,
        );
        state.layers[l].c.copy_from_slice(&scratch.c);
        state.layers[l].h.copy_from_slice(&scratch.h);
    }
}

/// Consumes one token: returns the updated state and the logits for the
/// token that follows it.
pub fn lstm_step(weights: &LstmWeights, state: &LstmState, token_id: u32) -> Result<(LstmState, Vec<f64>), LmError> {
    check_token(weights, token_id)?;
    let mut next = state.clone();
    let mut scratch = StepScratch::new(weights.dims);
    step_in_place(weights, &mut next, token_id, &mut scratch);
    let logits = output_logits(weights, &next);
    Ok((next, logits))
}

fn check_token(weights: &LstmWeights, token_id: u32) -> Result<(), LmError> {
    if (token_id as usize) < weights.dims.vocab {
        Ok(())
    } else {
        Err(LmError::TokenOutOfRange {
            id: token_id,
            vocab: weights.dims.vocab,
        })
    }
}

/// Output of scoring a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub ids: Vec<u32>,
    /// Natural-log probability of each token given the initial state and
    /// all earlier tokens.
    pub log_probs: Vec<f64>,
    /// Final-layer hidden state after consuming each token.
    pub hidden: Vec<Vec<f64>>,
    /// Full next-token distribution at each position (log space); kept only
    /// when requested.
    pub distributions: Option<Vec<Vec<f64>>>,
}

impl ScoredSentence {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn total_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

/// Runs the model over `ids` starting from `init`.
pub fn forward(weights: &LstmWeights, init: &LstmState, ids: &[u32]) -> Result<ScoredSentence, LmError> {
    forward_impl(weights, init, ids, false).map(|(s, _)| s)
}

/// Like [`forward`] but also keeps every next-token log distribution and
/// returns the state after the last token.
pub fn forward_full(weights: &LstmWeights, init: &LstmState, ids: &[u32]) -> Result<(ScoredSentence, LstmState), LmError> {
    forward_impl(weights, init, ids, true)
}

fn forward_impl(
    weights: &LstmWeights,
    init: &LstmState,
    ids: &[u32],
    keep_distributions: bool,
) -> Result<(ScoredSentence, LstmState), LmError> {
    if ids.is_empty() {
        return Err(LmError::EmptySentence);
    }
    for &id in ids {
        check_token(weights, id)?;
    }
    let mut state = init.clone();
    let mut scratch = StepScratch::new(weights.dims);
    let mut logits = vec![0.0; weights.dims.vocab];
    let mut log_probs = Vec::with_capacity(ids.len());
    let mut hidden = Vec::with_capacity(ids.len());
    let mut distributions = keep_distributions.then(Vec::new);
    for &id in ids {
        project(weights, state.top_hidden(), &mut logits);
        let lp = log_softmax(&logits);
        log_probs.push(lp[id as usize]);
        if let Some(d) = distributions.as_mut() {
            d.push(lp);
        }
        step_in_place(weights, &mut state, id, &mut scratch);
        hidden.push(state.top_hidden().to_vec());
    }
    Ok((
        ScoredSentence {
            ids: ids.to_vec(),
            log_probs,
            hidden,
            distributions,
        },
        state,
    ))
}

/// State after consuming `ids` from `init`, without scoring.
pub fn run_state(weights: &LstmWeights, init: &LstmState, ids: &[u32]) -> Result<LstmState, LmError> {
    let mut state = init.clone();
    let mut scratch = StepScratch::new(weights.dims);
    for &id in ids {
        check_token(weights, id)?;
        step_in_place(weights, &mut state, id, &mut scratch);
    }
    Ok(state)
}

/// Cached activations of one layer at one time step.
#[derive(Default)]
struct LayerTrace {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Reusable buffers for [`sequence_gradient`].
#[derive(Default)]
pub struct GradWorkspace {
    trace: Vec<Vec<LayerTrace>>,
    top_h: Vec<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

/// Cross-entropy of predicting `targets[k]` from the state reached after
/// consuming `inputs[..k]` (so `targets.len() == inputs.len() + 1`).
/// Adds `scale * d(loss)/d(params)` into `grad` and returns the summed loss
/// together with the state after the last input. No gradient flows into
/// `init`.
pub fn sequence_gradient(
    weights: &LstmWeights,
    init: &LstmState,
    inputs: &[u32],
    targets: &[u32],
    scale: f64,
    grad: &mut [f64],
    ws: &mut GradWorkspace,
) -> Result<(f64, LstmState), LmError> {
    let dims = weights.dims;
    let (hid, vocab, layers) = (dims.hidden, dims.vocab, dims.layers);
    assert_eq!(targets.len(), inputs.len() + 1, "one more target than inputs");
    assert_eq!(grad.len(), weights.params.len());
    for &id in inputs.iter().chain(targets) {
        check_token(weights, id)?;
    }
    let steps = inputs.len();

    // Forward, caching every layer.
    if ws.trace.len() < steps {
        ws.trace.resize_with(steps, Vec::new);
        ws.top_h.resize_with(steps, Vec::new);
    }
    let mut state = init.clone();
    let mut c_buf = vec![0.0; hid];
    let mut h_buf = vec![0.0; hid];
    for (t, &id) in inputs.iter().enumerate() {
        let row = &mut ws.trace[t];
        row.resize_with(layers, LayerTrace::default);
        for l in 0..layers {
            let tr = &mut row[l];
            tr.xh.clear();
            if l == 0 {
                tr.xh.extend_from_slice(weights.embedding_row(id));
            } else {
                tr.xh.extend_from_slice(&state.layers[l - 1].h);
            }
            tr.xh.extend_from_slice(&state.layers[l].h);
            tr.c_prev.clear();
            tr.c_prev.extend_from_slice(&state.layers[l].c);
            tr.gates.resize(4 * hid, 0.0);
            tr.tanh_c.resize(hid, 0.0);
            let (w, b) = weights.layer(l);
            cell_forward(w, b, &tr.xh, &tr.c_prev, &mut tr.gates, &mut c_buf, &mut tr.tanh_c, &mut h_buf);
            state.layers[l].c.copy_from_slice(&c_buf);
            state.layers[l].h.copy_from_slice(&h_buf);
        }
        ws.top_h[t].clear();
        ws.top_h[t].extend_from_slice(state.top_hidden());
    }

    // Output layer: prediction k uses the top hidden state before input k.
    let (out_w, _) = weights.output();
    let (out_w_range, out_b_range) = weights.output_ranges.clone();
    let mut dh_out = vec![vec![0.0; hid]; steps];
    ws.logits.resize(vocab, 0.0);
    ws.probs.resize(vocab, 0.0);
    let mut loss = 0.0;
    for (k, &target) in targets.iter().enumerate() {
        let h_k: &[f64] = if k == 0 { init.top_hidden() } else { &ws.top_h[k - 1] };
        project(weights, h_k, &mut ws.logits);
        let max = ws.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, z) in ws.probs.iter_mut().zip(&ws.logits) {
            *p = (z - max).exp();
            sum += *p;
        }
        loss += sum.ln() + max - ws.logits[target as usize];
        // dlogits = softmax - onehot, scaled
        for p in ws.probs.iter_mut() {
            *p = *p / sum * scale;
        }
        ws.probs[target as usize] -= scale;
        axpy(&mut grad[out_b_range.clone()], 1.0, &ws.probs);
        let gw = &mut grad[out_w_range.clone()];
        for (j, hj) in h_k.iter().enumerate() {
            axpy(&mut gw[j * vocab..(j + 1) * vocab], *hj, &ws.probs);
        }
        if k > 0 {
            for (j, d) in dh_out[k - 1].iter_mut().enumerate() {
                *d = dot(&out_w[j * vocab..(j + 1) * vocab], &ws.probs);
            }
        }
    }

    // Back-propagation through time.
    let mut dh_next = vec![vec![0.0; hid]; layers];
    let mut dc_next = vec![vec![0.0; hid]; layers];
    let mut dz = vec![0.0; 4 * hid];
    let mut dxh: Vec<f64> = Vec::new();
    let mut dx_above: Vec<f64> = vec![0.0; hid];
    let emb = dims.emb;
    for t in (0..steps).rev() {
        for l in (0..layers).rev() {
            let tr = &ws.trace[t][l];
            let cols = tr.xh.len();
            let in_dim = cols - hid;
            for k in 0..hid {
                let from_above = if l + 1 == layers { dh_out[t][k] } else { dx_above[k] };
                let dh = dh_next[l][k] + from_above;
                let i = tr.gates[k];
                let f = tr.gates[hid + k];
                let g = tr.gates[2 * hid + k];
                let o = tr.gates[3 * hid + k];
                let tc = tr.tanh_c[k];
                let dc = dc_next[l][k] + dh * o * (1.0 - tc * tc);
                dz[k] = dc * g * i * (1.0 - i);
                dz[hid + k] = dc * tr.c_prev[k] * f * (1.0 - f);
                dz[2 * hid + k] = dc * i * (1.0 - g * g);
                dz[3 * hid + k] = dh * tc * o * (1.0 - o);
                dc_next[l][k] = dc * f;
            }
            let (w_range, b_range) = weights.layer_ranges[l].clone();
            axpy(&mut grad[b_range], 1.0, &dz);
            let (w, _) = weights.layer(l);
            dxh.clear();
            dxh.resize(cols, 0.0);
            let gw = &mut grad[w_range];
            for (r, dzr) in dz.iter().enumerate() {
                if *dzr == 0.0 {
                    continue;
                }
                axpy(&mut gw[r * cols..(r + 1) * cols], *dzr, &tr.xh);
                axpy(&mut dxh, *dzr, &w[r * cols..(r + 1) * cols]);
            }
            dh_next[l].copy_from_slice(&dxh[in_dim..]);
            if l > 0 {
                dx_above.copy_from_slice(&dxh[..in_dim]);
            } else {
                let id = inputs[t] as usize;
                axpy(&mut grad[id * emb..(id + 1) * emb], 1.0, &dxh[..in_dim]);
            }
        }
    }

    Ok((loss, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> LstmDims {
        LstmDims {
            layers: 2,
            emb: 3,
            hidden: 4,
            vocab: 6,
        }
    }

    #[test]
    fn block_layout() {
        let d = dims();
        let names: Vec<String> = d.blocks().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["embedding", "layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias", "output.weight", "output.bias"]
        );
        assert_eq!(d.param_count(), 6 * 3 + 16 * 7 + 16 + 16 * 8 + 16 + 4 * 6 + 6);
    }

    #[test]
    fn zero_weights_give_uniform_step() {
        let w = LstmWeights::zeros(dims());
        let s = LstmState::zeros(dims());
        let (next, logits) = lstm_step(&w, &s, 3).unwrap();
        assert!(next.layers.iter().all(|l| l.h.iter().chain(&l.c).all(|v| *v == 0.0)));
        assert!(logits.iter().all(|z| *z == 0.0));
    }

    #[test]
    fn stepping_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = LstmWeights::random(dims(), 0.5, &mut rng);
        let init = LstmState::zeros(dims());
        let ids = [2u32, 4, 5, 1];
        let scored = forward(&w, &init, &ids).unwrap();
        let mut state = init.clone();
        let mut logits = output_logits(&w, &state);
        for (t, &id) in ids.iter().enumerate() {
            let lp = log_softmax(&logits);
            assert_eq!(lp[id as usize], scored.log_probs[t]);
            let (next, l) = lstm_step(&w, &state, id).unwrap();
            assert_eq!(next.top_hidden(), scored.hidden[t].as_slice());
            state = next;
            logits = l;
        }
    }

    #[test]
    fn token_out_of_range() {
        let w = LstmWeights::zeros(dims());
        let s = LstmState::zeros(dims());
        assert!(matches!(lstm_step(&w, &s, 6), Err(LmError::TokenOutOfRange { .. })));
        assert!(matches!(forward(&w, &s, &[]), Err(LmError::EmptySentence)));
    }

    #[test]
    fn sequence_loss_matches_forward_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = LstmWeights::random(dims(), 0.5, &mut rng);
        let init = LstmState::zeros(dims());
        let inputs = [2u32, 3, 4];
        let targets = [2u32, 3, 4, 1];
        let mut grad = vec![0.0; w.params().len()];
        let (loss, end) = sequence_gradient(&w, &init, &inputs, &targets, 1.0, &mut grad, &mut GradWorkspace::default()).unwrap();
        let (scored, end2) = forward_full(&w, &init, &inputs).unwrap();
        let eos_lp = log_softmax(&output_logits(&w, &end2))[1];
        let expected = -(scored.total_log_prob() + eos_lp);
        assert!((loss - expected).abs() < 1e-12);
        assert_eq!(end, end2);
    }
}
