//! Linear layers, token embeddings, and the gated recurrent cell used for
//! both the utterance encoder and the autoregressive decoder.

use super::{Bound, ParamId, ParamStore};
use crate::error::{CoreError, Result};
use crate::tensor::{linalg, Tape, Var};
use rand_chacha::ChaCha8Rng;

/// Fully connected layer `x · W + b` with `W: [in, out]`, `b: [out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), &[in_dim, out_dim], in_dim, rng);
        let b = store.add_zeros(&format!("{name}.b"), &[out_dim]);
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    /// `[n, in] → [n, out]` on the tape.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, bound.var(self.w))?;
        tape.add_bias(xw, bound.var(self.b))
    }

    /// Gradient-free forward for a single row, reading the store directly.
    pub fn forward_raw(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = store.get(self.w);
        let b = store.get(self.b);
        let mut out = b.data.clone();
        linalg::matmul_acc(x, &w.data, &mut out, 1, self.in_dim, self.out_dim);
        out
    }
}

/// Token-id to vector lookup table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let table = store.add_uniform(&format!("{name}.table"), &[vocab, dim], dim, rng);
        Embedding { table, vocab, dim }
    }

    /// `[n] ids → [n, dim]`; gradients scatter only to the looked-up rows.
    pub fn lookup(&self, tape: &mut Tape, bound: &Bound, ids: &[usize]) -> Result<Var> {
        tape.gather_rows(bound.var(self.table), ids)
    }

    pub fn lookup_raw(&self, store: &ParamStore, id: usize) -> Vec<f64> {
        let t = store.get(self.table);
        t.data[id * self.dim..(id + 1) * self.dim].to_vec()
    }
}

/// Single-layer gated recurrent cell.
///
/// Gates follow the standard formulation: update gate `z`, reset gate `r`,
/// candidate `n`, with `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_n: ParamId,
    pub u_n: ParamId,
    pub b_n: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut mat = |store: &mut ParamStore, suffix: &str, rows: usize, rng: &mut ChaCha8Rng| {
            store.add_uniform(&format!("{name}.{suffix}"), &[rows, hidden], rows, rng)
        };
        let w_z = mat(store, "w_z", input_dim, rng);
        let u_z = mat(store, "u_z", hidden, rng);
        let b_z = store.add_zeros(&format!("{name}.b_z"), &[hidden]);
        let w_r = mat(store, "w_r", input_dim, rng);
        let u_r = mat(store, "u_r", hidden, rng);
        let b_r = store.add_zeros(&format!("{name}.b_r"), &[hidden]);
        let w_n = mat(store, "w_n", input_dim, rng);
        let u_n = mat(store, "u_n", hidden, rng);
        let b_n = store.add_zeros(&format!("{name}.b_n"), &[hidden]);
        GruCell {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_n,
            u_n,
            b_n,
            input_dim,
            hidden,
        }
    }

    /// One step: `x: [n, input_dim]`, `h: [n, hidden]` → `[n, hidden]`.
    pub fn step(&self, tape: &mut Tape, bound: &Bound, x: Var, h: Var) -> Result<Var> {
        let gate = |tape: &mut Tape, w: ParamId, u: ParamId, b: ParamId, hx: Var| -> Result<Var> {
            let xw = tape.matmul(x, bound.var(w))?;
            let hu = tape.matmul(hx, bound.var(u))?;
            let s = tape.add(xw, hu)?;
            tape.add_bias(s, bound.var(b))
        };
        let z_pre = gate(tape, self.w_z, self.u_z, self.b_z, h)?;
        let z = tape.sigmoid(z_pre)?;
        let r_pre = gate(tape, self.w_r, self.u_r, self.b_r, h)?;
        let r = tape.sigmoid(r_pre)?;
        let rh = tape.mul(r, h)?;
        let n_pre = gate(tape, self.w_n, self.u_n, self.b_n, rh)?;
        let n = tape.tanh(n_pre)?;

        let one = tape.scalar(1.0);
        let omz = tape.sub(one, z)?;
        let a = tape.mul(omz, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }

    /// Gradient-free single-row step against raw store data.
    pub fn step_raw(&self, store: &ParamStore, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hidden = self.hidden;
        let gate_pre = |w: ParamId, u: ParamId, b: ParamId, hx: &[f64]| -> Vec<f64> {
            let mut out = store.get(b).data.clone();
            linalg::matmul_acc(x, &store.get(w).data, &mut out, 1, self.input_dim, hidden);
            linalg::matmul_acc(hx, &store.get(u).data, &mut out, 1, hidden, hidden);
            out
        };
        let z: Vec<f64> = gate_pre(self.w_z, self.u_z, self.b_z, h)
            .iter()
            .map(|&v| linalg::sigmoid(v))
            .collect();
        let r: Vec<f64> = gate_pre(self.w_r, self.u_r, self.b_r, h)
            .iter()
            .map(|&v| linalg::sigmoid(v))
            .collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
        let n: Vec<f64> = gate_pre(self.w_n, self.u_n, self.b_n, &rh)
            .iter()
            .map(|&v| v.tanh())
            .collect();
        z.iter()
            .zip(&n)
            .zip(h)
            .map(|((&zv, &nv), &hv)| (1.0 - zv) * nv + zv * hv)
            .collect()
    }
}

/// Run the cell left-to-right over one embedded token sequence; returns the
/// final hidden state as `[1, hidden]`.
pub fn encode_sequence(
    tape: &mut Tape,
    bound: &Bound,
    embedding: &Embedding,
    cell: &GruCell,
    tokens: &[usize],
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(CoreError::Usage("encode_sequence on empty token sequence".into()));
    }
    let mut h = tape.constant(&[1, cell.hidden], vec![0.0; cell.hidden])?;
    for &tok in tokens {
        let x = embedding.lookup(tape, bound, &[tok])?;
        h = cell.step(tape, bound, x, h)?;
    }
    Ok(h)
}

/// Batched encoder over variable-length sequences. Shorter sequences hold
/// their final hidden state while longer ones continue; row `i` of the
/// result equals [`encode_sequence`] on `sequences[i]`.
pub fn encode_batch(
    tape: &mut Tape,
    bound: &Bound,
    embedding: &Embedding,
    cell: &GruCell,
    sequences: &[Vec<usize>],
) -> Result<Var> {
    if sequences.is_empty() || sequences.iter().any(|s| s.is_empty()) {
        return Err(CoreError::Usage("encode_batch requires non-empty sequences".into()));
    }
    let n = sequences.len();
    let max_len = sequences.iter().map(Vec::len).max().unwrap();
    let mut h = tape.constant(&[n, cell.hidden], vec![0.0; n * cell.hidden])?;
    for t in 0..max_len {
        let ids: Vec<usize> = sequences
            .iter()
            .map(|s| if t < s.len() { s[t] } else { 0 })
            .collect();
        let mask: Vec<f64> = sequences
            .iter()
            .map(|s| if t < s.len() { 1.0 } else { 0.0 })
            .collect();
        let x = embedding.lookup(tape, bound, &ids)?;
        let h_new = cell.step(tape, bound, x, h)?;
        if mask.iter().all(|&m| m == 1.0) {
            h = h_new;
        } else {
            let delta = tape.sub(h_new, h)?;
            let masked = tape.mul_mask_rows(delta, &mask)?;
            h = tape.add(h, masked)?;
        }
    }
    Ok(h)
}

/// Teacher-forced reconstruction loss for a batch of gold sequences.
///
/// The hidden state starts from `init_proj(z)`; step `t` consumes gold token
/// `t` and scores gold token `t + 1`. Per sequence the negative
/// log-likelihood is averaged over its predicted positions, then averaged
/// over the batch.
pub fn decode_nll_batch(
    tape: &mut Tape,
    bound: &Bound,
    embedding: &Embedding,
    cell: &GruCell,
    init_proj: &Linear,
    out_proj: &Linear,
    z: Var,
    gold: &[Vec<usize>],
    sos: usize,
    eos: usize,
) -> Result<Var> {
    if gold.is_empty() {
        return Err(CoreError::Usage("decode on empty batch".into()));
    }
    let n = gold.len();
    if tape.shape(z)[0] != n {
        return Err(CoreError::dimension("decode batch", tape.shape(z), &[n]));
    }
    for seq in gold {
        if seq.is_empty() {
            return Err(CoreError::Usage("decode on empty gold sequence".into()));
        }
        if seq[0] != sos || *seq.last().unwrap() != eos {
            return Err(CoreError::Usage(
                "gold sequence must start with the start token and end with the end token".into(),
            ));
        }
    }

    let mut h = init_proj.forward(tape, bound, z)?;
    let steps = gold.iter().map(|s| s.len()).max().unwrap() - 1;
    let mut per_sample: Option<Var> = None;
    for t in 0..steps {
        let ids: Vec<usize> = gold
            .iter()
            .map(|s| if t < s.len() - 1 { s[t] } else { 0 })
            .collect();
        let targets: Vec<usize> = gold
            .iter()
            .map(|s| if t + 1 < s.len() { s[t + 1] } else { 0 })
            .collect();
        let mask: Vec<f64> = gold
            .iter()
            .map(|s| if t + 1 < s.len() { 1.0 } else { 0.0 })
            .collect();

        let x = embedding.lookup(tape, bound, &ids)?;
        let h_new = cell.step(tape, bound, x, h)?;
        if mask.iter().all(|&m| m == 1.0) {
            h = h_new;
        } else {
            let delta = tape.sub(h_new, h)?;
            let masked = tape.mul_mask_rows(delta, &mask)?;
            h = tape.add(h, masked)?;
        }

        let logits = out_proj.forward(tape, bound, h)?;
        let ce = tape.softmax_ce_rows(logits, &targets)?;
        let mask_t = tape.constant(&[n], mask)?;
        let ce_masked = tape.mul(ce, mask_t)?;
        per_sample = Some(match per_sample {
            Some(acc) => tape.add(acc, ce_masked)?,
            None => ce_masked,
        });
    }

    let totals = per_sample.expect("at least one decoding step");
    let weights: Vec<f64> = gold
        .iter()
        .map(|s| 1.0 / ((s.len() - 1) as f64 * n as f64))
        .collect();
    let w = tape.constant(&[n], weights)?;
    let weighted = tape.mul(totals, w)?;
    tape.sum(weighted, None)
}

/// Single-sequence wrapper over [`decode_nll_batch`].
#[allow(clippy::too_many_arguments)]
pub fn decode_autoregressive(
    tape: &mut Tape,
    bound: &Bound,
    embedding: &Embedding,
    cell: &GruCell,
    init_proj: &Linear,
    out_proj: &Linear,
    z: Var,
    gold: &[usize],
    sos: usize,
    eos: usize,
) -> Result<Var> {
    decode_nll_batch(
        tape,
        bound,
        embedding,
        cell,
        init_proj,
        out_proj,
        z,
        &[gold.to_vec()],
        sos,
        eos,
    )
}

/// Greedy gradient-free decoding from a latent vector, for demos.
pub fn greedy_decode(
    store: &ParamStore,
    embedding: &Embedding,
    cell: &GruCell,
    init_proj: &Linear,
    out_proj: &Linear,
    z: &[f64],
    sos: usize,
    eos: usize,
    max_len: usize,
) -> Vec<usize> {
    let mut h = init_proj.forward_raw(store, z);
    let mut tok = sos;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let x = embedding.lookup_raw(store, tok);
        h = cell.step_raw(store, &x, &h);
        let logits = out_proj.forward_raw(store, &h);
        tok = linalg::argmax(&logits);
        if tok == eos {
            break;
        }
        out.push(tok);
    }
    out
}
