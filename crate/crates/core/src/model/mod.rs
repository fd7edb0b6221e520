//! The TempGNN forward pass, loss and parameters.

mod checkpoint;
pub mod layers;
mod params;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use params::{init_params, Param};

use crate::data::LabeledInstance;
use crate::error::{Error, Result};
use crate::graph::{build_graph, Direction, SessionGraph};
use crate::temporal::{record_gated_merge, EncoderVariant, TemporalTable, TimeContext, TimeEncoder, TimeVars};
use crate::tensor::{Tape, Tensor, Var};
use layers::{EdgeMode, GgnnVars, MessageVars, ReadoutVars};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub tau: f64,
    pub n_items: usize,
    pub tn: EncoderVariant,
    pub te: EncoderVariant,
    pub max_len: usize,
    /// Use the incoming gate parameters for outgoing messages as well.
    pub tie_direction_gates: bool,
}

impl ModelConfig {
    pub fn new(n_items: usize) -> Self {
        ModelConfig {
            dim: 256,
            layers: 6,
            tau: 12.0,
            n_items,
            tn: EncoderVariant::QuantileActGate(40),
            te: EncoderVariant::QuantileActGate(50),
            max_len: 10,
            tie_direction_gates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if self.n_items == 0 {
            return bad("the item vocabulary is empty");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if self.max_len == 0 {
            return bad("max_len must be positive");
        }
        if self.tn.buckets() == 0 || self.te.buckets() == 0 {
            return bad("bucket counts must be positive");
        }
        Ok(())
    }

    fn edge_mode(&self) -> EdgeMode {
        match self.te {
            EncoderVariant::None => EdgeMode::Plain,
            v if v.is_gated() => EdgeMode::Gated,
            _ => EdgeMode::Additive,
        }
    }
}

/// Every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardState {
    pub graph: SessionGraph,
    /// `node_vecs[l]` holds the node vectors after layer `l`; index 0 is the initialization.
    pub node_vecs: Vec<Vec<Tensor>>,
    pub stars: Vec<Tensor>,
    pub final_nodes: Vec<Tensor>,
    pub sequence: Vec<Tensor>,
    pub readout: Tensor,
    pub preference: Tensor,
    pub scores: Tensor,
    pub probabilities: Tensor,
    pub loss: f64,
}

struct Recorded {
    node_vecs: Vec<Vec<Var>>,
    stars: Vec<Var>,
    final_nodes: Vec<Var>,
    sequence: Vec<Var>,
    readout: Var,
    preference: Var,
    scores: Var,
    probabilities: Var,
    loss: Var,
}

/// Model configuration, fitted time encoders, and parameters in [`Param::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct TempGnn {
    pub config: ModelConfig,
    pub tn: TimeEncoder,
    pub te: TimeEncoder,
    pub params: Vec<Tensor>,
}

/// Node differences (prediction time minus click time, clamped at 0) and edge
/// intervals over the prefixes of `instances`.
pub fn time_differences(instances: &[LabeledInstance]) -> (Vec<i64>, Vec<i64>) {
    let mut tn = Vec::new();
    let mut te = Vec::new();
    for inst in instances {
        let ev = &inst.prefix.events;
        tn.extend(ev.iter().map(|e| (inst.prefix.prediction_ts - e.timestamp_ms).max(0)));
        te.extend(ev.windows(2).map(|w| (w[1].timestamp_ms - w[0].timestamp_ms).max(0)));
    }
    (tn, te)
}

/// Fits both time encoders on training instances.
pub fn fit_encoders(config: &ModelConfig, train: &[LabeledInstance]) -> Result<(TimeEncoder, TimeEncoder)> {
    let (tn, mut te) = time_differences(train);
    if tn.is_empty() {
        return Err(Error::EmptyCorpus {
            stage: "bucket fitting",
        });
    }
    if te.is_empty() {
        log::warn!("no click intervals in the training prefixes; edge buckets fitted on a single zero");
        te.push(0);
    }
    let tn = TimeEncoder::fit(config.tn, &tn)?;
    let te = TimeEncoder::fit(config.te, &te)?;
    Ok((tn, te))
}

impl TempGnn {
    pub fn new(config: ModelConfig, tn: TimeEncoder, te: TimeEncoder, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(TempGnn { config, tn, te, params })
    }

    /// Fits the encoders on `train` and initializes parameters from `seed`.
    pub fn from_training(config: ModelConfig, train: &[LabeledInstance], seed: u64) -> Result<Self> {
        config.validate()?;
        let (tn, te) = fit_encoders(&config, train)?;
        TempGnn::new(config, tn, te, seed)
    }

    pub fn param(&self, p: Param) -> &Tensor {
        &self.params[p.index()]
    }

    pub fn param_mut(&mut self, p: Param) -> &mut Tensor {
        &mut self.params[p.index()]
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn graph(&self, instance: &LabeledInstance) -> Result<SessionGraph> {
        instance.check(self.config.n_items)?;
        Ok(build_graph(instance, &self.tn.bucketizer, &self.te.bucketizer))
    }

    fn record_graph(&self, tape: &mut Tape<'_>, vars: &[Var], graph: &SessionGraph, target: usize) -> Result<Recorded> {
        let cfg = &self.config;
        let p = |x: Param| vars[x.index()];
        let tn_vars = TimeVars {
            table: p(Param::TnTable),
            weight: p(Param::TnProjW),
            bias: p(Param::TnProjB),
            positions: p(Param::TnPositions),
            constant: p(Param::TnConstant),
        };
        let te_vars = TimeVars {
            table: p(Param::TeTable),
            weight: p(Param::TeProjW),
            bias: p(Param::TeProjB),
            positions: p(Param::TePositions),
            constant: p(Param::TeConstant),
        };

        let len = graph.seq_len();
        let mut v0 = Vec::with_capacity(graph.node_count());
        for (k, &j) in graph.last_occurrence().iter().enumerate() {
            let node = graph.nodes[k];
            let raw = tape.row(p(Param::ItemTable), node.item)?;
            let item = tape.l2_normalize(raw)?;
            let ctx = TimeContext {
                bucket: node.tn_bucket,
                diff_ms: graph.tn_diffs_ms[j],
                position: len - 1 - j,
            };
            let v = match self.tn.record(tape, &tn_vars, ctx)? {
                None => item,
                Some(t) if cfg.tn.is_gated() => {
                    record_gated_merge(tape, item, t, p(Param::NodeGateW), p(Param::NodeGateB))?
                }
                Some(t) => tape.add(item, t)?,
            };
            v0.push(v);
        }

        let mode = cfg.edge_mode();
        let n_edges = graph.edges.len();
        let mut edge_vecs = Vec::with_capacity(n_edges);
        if mode != EdgeMode::Plain {
            for (i, e) in graph.edges.iter().enumerate() {
                let ctx = TimeContext {
                    bucket: e.te_bucket,
                    diff_ms: graph.te_diffs_ms[i],
                    position: n_edges - 1 - i,
                };
                edge_vecs.push(self.te.record(tape, &te_vars, ctx)?.expect("edge variant is active"));
            }
        }

        let incoming = MessageVars {
            gate_w: p(Param::InGateW),
            gate_b: p(Param::InGateB),
            w: p(Param::InW),
            b: p(Param::InB),
        };
        let outgoing = MessageVars {
            gate_w: p(if cfg.tie_direction_gates {
                Param::InGateW
            } else {
                Param::OutGateW
            }),
            gate_b: p(if cfg.tie_direction_gates {
                Param::InGateB
            } else {
                Param::OutGateB
            }),
            w: p(Param::OutW),
            b: p(Param::OutB),
        };
        let ggnn = GgnnVars {
            wz: p(Param::Wz),
            uz: p(Param::Uz),
            bz: p(Param::Bz),
            wr: p(Param::Wr),
            ur: p(Param::Ur),
            br: p(Param::Br),
            wh: p(Param::Wh),
            uh: p(Param::Uh),
            bh: p(Param::Bh),
        };

        let mut star = layers::init_star(tape, &v0)?;
        let mut node_vecs = vec![v0];
        let mut stars = vec![star];
        for _ in 0..cfg.layers {
            let prev = node_vecs.last().unwrap();
            let m_in = layers::message_pass(tape, graph, prev, &edge_vecs, Direction::Incoming, &incoming, mode)?;
            let m_out = layers::message_pass(tape, graph, prev, &edge_vecs, Direction::Outgoing, &outgoing, mode)?;
            let mut next = Vec::with_capacity(prev.len());
            for k in 0..prev.len() {
                let m = tape.concat(&[m_in[k], m_out[k]])?;
                let v_hat = layers::ggnn_update(tape, prev[k], m, &ggnn)?;
                next.push(layers::star_mix(tape, v_hat, star)?);
            }
            star = layers::star_update(tape, &next, star)?.0;
            node_vecs.push(next);
            stars.push(star);
        }

        let (first, last) = (&node_vecs[0], node_vecs.last().unwrap());
        let final_nodes = first
            .iter()
            .zip(last)
            .map(|(&v0, &vl)| layers::highway(tape, vl, v0, p(Param::HighwayW), p(Param::HighwayB)))
            .collect::<Result<Vec<_>>>()?;
        let sequence: Vec<Var> = graph.seq_to_node.iter().map(|&k| final_nodes[k]).collect();
        let readout_vars = ReadoutVars {
            w0: p(Param::ReadoutW0),
            w1: p(Param::ReadoutW1),
            w2: p(Param::ReadoutW2),
            w3: p(Param::ReadoutW3),
            b: p(Param::ReadoutB),
            pref_w: p(Param::PrefW),
            pref_b: p(Param::PrefB),
        };
        let (readout, preference) = layers::readout(tape, &sequence, star, &readout_vars)?;
        let (scores, probabilities, loss) =
            layers::score_and_loss(tape, preference, p(Param::ItemTable), target, cfg.tau)?;
        Ok(Recorded {
            node_vecs,
            stars,
            final_nodes,
            sequence,
            readout,
            preference,
            scores,
            probabilities,
            loss,
        })
    }

    /// Records the loss of `instance` on `tape` with `vars` standing in for
    /// the parameters (in [`Param::ALL`] order).
    pub fn record_loss(&self, tape: &mut Tape<'_>, vars: &[Var], instance: &LabeledInstance) -> Result<Var> {
        let graph = self.graph(instance)?;
        Ok(self.record_graph(tape, vars, &graph, instance.target)?.loss)
    }

    fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<Var> {
        self.params.iter().map(|t| tape.param(t)).collect()
    }

    pub fn forward(&self, instance: &LabeledInstance) -> Result<ForwardState> {
        let graph = self.graph(instance)?;
        self.forward_graph(graph, instance.target)
    }

    /// Forward pass on an already built graph.
    pub fn forward_graph(&self, graph: SessionGraph, target: usize) -> Result<ForwardState> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let rec = self.record_graph(&mut tape, &vars, &graph, target)?;
        let values = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
        Ok(ForwardState {
            node_vecs: rec.node_vecs.iter().map(|l| values(l)).collect(),
            stars: values(&rec.stars),
            final_nodes: values(&rec.final_nodes),
            sequence: values(&rec.sequence),
            readout: tape.value(rec.readout).clone(),
            preference: tape.value(rec.preference).clone(),
            scores: tape.value(rec.scores).clone(),
            probabilities: tape.value(rec.probabilities).clone(),
            loss: tape.value(rec.loss).item(),
            graph,
        })
    }

    /// Next-item probabilities for `instance`; the target is not used.
    pub fn predict(&self, instance: &LabeledInstance) -> Result<Tensor> {
        let graph = build_graph(instance, &self.tn.bucketizer, &self.te.bucketizer);
        for &i in &instance.items() {
            if i >= self.config.n_items {
                return Err(Error::Vocabulary {
                    index: i,
                    size: self.config.n_items,
                });
            }
        }
        Ok(self.forward_graph(graph, 0)?.probabilities)
    }

    /// Projected bucket vectors of the TN (`node == true`) or TE table, one per
    /// bucket in bucket order; `None` for a variant without a bucket table.
    pub fn bucket_vectors(&self, node: bool) -> Result<Option<Vec<Tensor>>> {
        let (variant, [table, weight, bias]) = if node {
            (self.config.tn, [Param::TnTable, Param::TnProjW, Param::TnProjB])
        } else {
            (self.config.te, [Param::TeTable, Param::TeProjW, Param::TeProjB])
        };
        let Some(activate) = variant.table_activation() else {
            return Ok(None);
        };
        let table = TemporalTable {
            embeddings: self.param(table).clone(),
            weight: self.param(weight).clone(),
            bias: self.param(bias).clone(),
        };
        (0..table.bucket_count())
            .map(|b| table.encode(b, activate))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Loss of one instance and its gradient per parameter; `None` marks a
    /// parameter the instance does not touch.
    pub fn loss_and_grad(&self, instance: &LabeledInstance) -> Result<(f64, Vec<Option<Tensor>>)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let loss = self.record_loss(&mut tape, &vars, instance)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: format!("loss of session {}", instance.prefix.id),
            });
        }
        let mut grads = tape.backward(loss)?;
        Ok((value, vars.iter().map(|&v| grads.take(v)).collect()))
    }
}
