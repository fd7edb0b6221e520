//! Tape-level building blocks of the forward pass.

use crate::error::Result;
use crate::graph::{Direction, SessionGraph};
use crate::tensor::{Tape, Var};

/// How an edge's time vector enters the message from a neighbor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    /// No edge time: the neighbor vector itself.
    Plain,
    /// Neighbor vector plus edge vector.
    Additive,
    /// `(1 - g) ⊙ neighbor + g ⊙ edge` with `g = σ(W[src; dst; edge] + b)`.
    Gated,
}

#[derive(Clone, Copy, Debug)]
pub struct MessageVars {
    pub gate_w: Var,
    pub gate_b: Var,
    pub w: Var,
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GgnnVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wh: Var,
    pub uh: Var,
    pub bh: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ReadoutVars {
    pub w0: Var,
    pub w1: Var,
    pub w2: Var,
    pub w3: Var,
    pub b: Var,
    pub pref_w: Var,
    pub pref_b: Var,
}

/// Mean of the node vectors.
pub fn init_star(tape: &mut Tape<'_>, nodes: &[Var]) -> Result<Var> {
    tape.mean(nodes)
}

/// Directional messages for every node. `edges[i]` is the time vector of
/// edge `i`, ignored under [`EdgeMode::Plain`]. A node without neighbors in
/// `direction` receives `W·0 + b = b`.
pub fn message_pass(
    tape: &mut Tape<'_>,
    graph: &SessionGraph,
    nodes: &[Var],
    edges: &[Var],
    direction: Direction,
    vars: &MessageVars,
    mode: EdgeMode,
) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(nodes.len());
    for k in 0..nodes.len() {
        let incident = graph.incident(k, direction);
        if incident.is_empty() {
            out.push(vars.b);
            continue;
        }
        let mut terms = Vec::with_capacity(incident.len());
        for i in incident {
            let e = graph.edges[i];
            let neighbor = match direction {
                Direction::Incoming => nodes[e.src],
                Direction::Outgoing => nodes[e.dst],
            };
            let term = match mode {
                EdgeMode::Plain => neighbor,
                EdgeMode::Additive => tape.add(neighbor, edges[i])?,
                EdgeMode::Gated => {
                    let cat = tape.concat(&[nodes[e.src], nodes[e.dst], edges[i]])?;
                    let pre = tape.affine(vars.gate_w, cat, vars.gate_b)?;
                    let g = tape.sigmoid(pre)?;
                    tape.lerp(neighbor, edges[i], g)?
                }
            };
            terms.push(term);
        }
        let avg = tape.mean(&terms)?;
        out.push(tape.affine(vars.w, avg, vars.b)?);
    }
    Ok(out)
}

/// GRU-style update of `v` driven by the concatenated message `m`.
pub fn ggnn_update(tape: &mut Tape<'_>, v: Var, m: Var, p: &GgnnVars) -> Result<Var> {
    let gate = |tape: &mut Tape<'_>, w: Var, u: Var, b: Var| -> Result<Var> {
        let wm = tape.matvec(w, m)?;
        let uv = tape.matvec(u, v)?;
        let pre = tape.sum(&[wm, uv, b])?;
        tape.sigmoid(pre)
    };
    let z = gate(tape, p.wz, p.uz, p.bz)?;
    let r = gate(tape, p.wr, p.ur, p.br)?;
    let wm = tape.matvec(p.wh, m)?;
    let rv = tape.mul(r, v)?;
    let urv = tape.matvec(p.uh, rv)?;
    let pre = tape.sum(&[wm, urv, p.bh])?;
    let candidate = tape.tanh(pre)?;
    tape.lerp(v, candidate, z)
}

/// `α = σ(v̂·star / sqrt(d))`, returning `(1 - α) v̂ + α star`.
pub fn star_mix(tape: &mut Tape<'_>, v_hat: Var, star: Var) -> Result<Var> {
    let d = tape.value(v_hat).len() as f64;
    let dot = tape.dot(v_hat, star)?;
    let scaled = tape.scale(dot, 1.0 / d.sqrt())?;
    let alpha = tape.sigmoid(scaled)?;
    tape.lerp(v_hat, star, alpha)
}

/// Attention-weighted node average with weights
/// `softmax(nodes · star / sqrt(d))`. Returns the new star and the weights.
pub fn star_update(tape: &mut Tape<'_>, nodes: &[Var], star: Var) -> Result<(Var, Var)> {
    let d = tape.value(star).len() as f64;
    let matrix = tape.stack(nodes)?;
    let logits = tape.matvec(matrix, star)?;
    let beta = tape.softmax_scaled(logits, 1.0 / d.sqrt())?;
    Ok((tape.matvec_t(matrix, beta)?, beta))
}

/// `g = σ(W[v_L; v_0] + b)`, returning `(1 - g) ⊙ v_L + g ⊙ v_0`.
pub fn highway(tape: &mut Tape<'_>, v_last: Var, v_first: Var, w: Var, b: Var) -> Result<Var> {
    let cat = tape.concat(&[v_last, v_first])?;
    let pre = tape.affine(w, cat, b)?;
    let g = tape.sigmoid(pre)?;
    tape.lerp(v_last, v_first, g)
}

/// Soft attention over the sequence `seq` (one vector per click, in order)
/// followed by the preference map. Returns `(r, p)`.
pub fn readout(tape: &mut Tape<'_>, seq: &[Var], star: Var, p: &ReadoutVars) -> Result<(Var, Var)> {
    let last = *seq.last().expect("readout needs at least one position");
    let w2u = tape.matvec(p.w2, last)?;
    let w3s = tape.matvec(p.w3, star)?;
    let shared = tape.sum(&[w2u, w3s, p.b])?;
    let mut weighted = Vec::with_capacity(seq.len());
    for &u in seq {
        let w1u = tape.matvec(p.w1, u)?;
        let pre = tape.add(w1u, shared)?;
        let act = tape.sigmoid(pre)?;
        let gamma = tape.dot(p.w0, act)?;
        weighted.push(tape.scale_by(u, gamma)?);
    }
    let r = tape.sum(&weighted)?;
    let cat = tape.concat(&[r, last])?;
    let pref = tape.affine(p.pref_w, cat, p.pref_b)?;
    Ok((r, pref))
}

/// Cosine scores against every item, scaled softmax, and cross-entropy.
/// Returns `(scores, probabilities, loss)`.
pub fn score_and_loss(
    tape: &mut Tape<'_>,
    pref: Var,
    item_table: Var,
    target: usize,
    tau: f64,
) -> Result<(Var, Var, Var)> {
    let items = tape.normalize_rows(item_table)?;
    let p = tape.l2_normalize(pref)?;
    let scores = tape.matvec(items, p)?;
    let probs = tape.softmax_scaled(scores, tau)?;
    let loss = tape.scaled_cross_entropy(scores, tau, target)?;
    Ok((scores, probs, loss))
}
