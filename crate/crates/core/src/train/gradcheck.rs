//! End-to-end finite-difference check of the full model loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{expand, synth_corpus, LabeledInstance, SynthSpec, Vocabulary};
use crate::error::Result;
use crate::model::{ModelConfig, Param, TempGnn};
use crate::temporal::EncoderVariant;
use crate::tensor::{grad_check, GradCheck, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSpec {
    pub dim: usize,
    pub n_items: usize,
    pub layers: usize,
    pub buckets: usize,
    pub max_len: usize,
    /// Instances whose mean loss is differentiated.
    pub instances: usize,
    pub h: f64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        GradCheckSpec {
            dim: 8,
            n_items: 20,
            layers: 2,
            buckets: 4,
            max_len: 5,
            instances: 1,
            h: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOutcome {
    pub seed: u64,
    pub loss: f64,
    pub report: GradCheck,
    /// Parameter name of the worst coordinate.
    pub worst_param: Option<&'static str>,
    /// `|analytic - numeric|` at the worst coordinate.
    pub worst_abs_error: f64,
    /// One unit of rounding in the loss, seen through the difference quotient:
    /// `eps · |loss| / h`.
    pub rounding_floor: f64,
}

impl GradCheckOutcome {
    pub fn passes(&self, tol: f64) -> bool {
        self.report.max_rel_error <= tol
    }
}

/// Full Q+A+G model on a random synthetic problem drawn from `seed`.
pub fn gradcheck_problem(spec: &GradCheckSpec, seed: u64) -> Result<(TempGnn, Vec<LabeledInstance>)> {
    let synth = SynthSpec {
        max_len: spec.max_len + 1,
        ..SynthSpec::new(spec.n_items, 40, seed, true)
    };
    let sessions = synth_corpus(&synth);
    let vocab = Vocabulary::from_keys((0..spec.n_items).map(SynthSpec::item_key).collect())?;
    let encoded = sessions.iter().map(|s| vocab.encode(s)).collect::<Result<Vec<_>>>()?;
    let pool = expand(&encoded, spec.max_len)?;
    let config = ModelConfig {
        dim: spec.dim,
        layers: spec.layers,
        max_len: spec.max_len,
        tn: EncoderVariant::QuantileActGate(spec.buckets),
        te: EncoderVariant::QuantileActGate(spec.buckets),
        ..ModelConfig::new(spec.n_items)
    };
    let model = TempGnn::from_training(config, &pool, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut long: Vec<LabeledInstance> = pool.into_iter().filter(|i| i.prefix.len() >= 2).collect();
    long.shuffle(&mut rng);
    long.truncate(spec.instances.max(1));
    Ok((model, long))
}

pub fn run_gradcheck(spec: &GradCheckSpec, seed: u64) -> Result<GradCheckOutcome> {
    let (model, instances) = gradcheck_problem(spec, seed)?;
    let scale = 1.0 / instances.len() as f64;
    let report = grad_check(
        |tape, vars| {
            let mut total = model.record_loss(tape, vars, &instances[0])?;
            for inst in &instances[1..] {
                let l = model.record_loss(tape, vars, inst)?;
                total = tape.add(total, l)?;
            }
            tape.scale(total, scale)
        },
        &model.params,
        spec.h,
    )?;
    let loss = {
        let mut tape = Tape::new();
        let vars: Vec<_> = model.params.iter().map(|p| tape.param(p)).collect();
        let mut total = 0.0;
        for inst in &instances {
            let l = model.record_loss(&mut tape, &vars, inst)?;
            total += tape.value(l).item();
        }
        total * scale
    };
    let (worst_param, worst_abs_error) = match report.worst {
        Some((p, c)) => (
            Some(Param::ALL[p].name()),
            (report.analytic[p].data()[c] - report.numeric[p].data()[c]).abs(),
        ),
        None => (None, 0.0),
    };
    Ok(GradCheckOutcome {
        seed,
        loss,
        rounding_floor: f64::EPSILON * loss.abs() / spec.h,
        report,
        worst_param,
        worst_abs_error,
    })
}
