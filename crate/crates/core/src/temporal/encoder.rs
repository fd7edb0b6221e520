use std::fmt;

use super::Bucketizer;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Slope of every leaky ReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Fraction clipped from each end of the sample before equal-width bucketing.
pub const EQUAL_WIDTH_CLIP: f64 = 0.02;

/// How a time difference is turned into a vector, and how that vector is
/// merged with the thing it annotates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderVariant {
    None,
    /// Learned vector per (reverse) sequence position.
    Position,
    /// A single learned vector scaled by the min-max normalized difference.
    Constant,
    /// Equal-width buckets over the clipped training range.
    Bucket(usize),
    /// Quantile buckets.
    Quantile(usize),
    /// Quantile buckets with a leaky ReLU before the projection.
    QuantileAct(usize),
    /// Quantile buckets merged through a learned gate.
    QuantileGate(usize),
    /// Quantile buckets, leaky ReLU, and gated merge.
    QuantileActGate(usize),
}

impl EncoderVariant {
    /// Parses `none|position|constant|bucket|q|q+a|q+g|q+a+g` (`base` is an
    /// alias for `none`); bucketed forms take `buckets`.
    pub fn parse(name: &str, buckets: usize) -> Result<Self> {
        let v = match name.trim().to_ascii_lowercase().as_str() {
            "none" | "base" | "off" => EncoderVariant::None,
            "position" => EncoderVariant::Position,
            "constant" => EncoderVariant::Constant,
            "bucket" => EncoderVariant::Bucket(buckets),
            "q" => EncoderVariant::Quantile(buckets),
            "q+a" => EncoderVariant::QuantileAct(buckets),
            "q+g" => EncoderVariant::QuantileGate(buckets),
            "q+a+g" => EncoderVariant::QuantileActGate(buckets),
            other => return Err(Error::Config(format!("unknown encoder variant {other:?}"))),
        };
        if v.buckets() == 0 {
            return Err(Error::Config(format!("{name} needs at least one bucket")));
        }
        Ok(v)
    }

    pub fn name(&self) -> &'static str {
        match self {
            EncoderVariant::None => "none",
            EncoderVariant::Position => "position",
            EncoderVariant::Constant => "constant",
            EncoderVariant::Bucket(_) => "bucket",
            EncoderVariant::Quantile(_) => "q",
            EncoderVariant::QuantileAct(_) => "q+a",
            EncoderVariant::QuantileGate(_) => "q+g",
            EncoderVariant::QuantileActGate(_) => "q+a+g",
        }
    }

    /// Stable numeric id used in checkpoints.
    pub fn id(&self) -> u8 {
        match self {
            EncoderVariant::None => 0,
            EncoderVariant::Position => 1,
            EncoderVariant::Constant => 2,
            EncoderVariant::Bucket(_) => 3,
            EncoderVariant::Quantile(_) => 4,
            EncoderVariant::QuantileAct(_) => 5,
            EncoderVariant::QuantileGate(_) => 6,
            EncoderVariant::QuantileActGate(_) => 7,
        }
    }

    pub fn from_id(id: u8, buckets: usize) -> Result<Self> {
        Ok(match id {
            0 => EncoderVariant::None,
            1 => EncoderVariant::Position,
            2 => EncoderVariant::Constant,
            3 => EncoderVariant::Bucket(buckets),
            4 => EncoderVariant::Quantile(buckets),
            5 => EncoderVariant::QuantileAct(buckets),
            6 => EncoderVariant::QuantileGate(buckets),
            7 => EncoderVariant::QuantileActGate(buckets),
            _ => return Err(Error::Format(format!("unknown encoder variant id {id}"))),
        })
    }

    /// Bucket count of the lookup table; 1 for the non-bucketed variants.
    pub fn buckets(&self) -> usize {
        match *self {
            EncoderVariant::Bucket(b)
            | EncoderVariant::Quantile(b)
            | EncoderVariant::QuantileAct(b)
            | EncoderVariant::QuantileGate(b)
            | EncoderVariant::QuantileActGate(b) => b,
            _ => 1,
        }
    }

    pub fn is_bucketed(&self) -> bool {
        self.table_activation().is_some()
    }

    /// `Some(activate)` for the bucket-table variants.
    pub fn table_activation(&self) -> Option<bool> {
        match self {
            EncoderVariant::Bucket(_) | EncoderVariant::Quantile(_) | EncoderVariant::QuantileGate(_) => Some(false),
            EncoderVariant::QuantileAct(_) | EncoderVariant::QuantileActGate(_) => Some(true),
            _ => None,
        }
    }

    pub fn is_gated(&self) -> bool {
        matches!(
            self,
            EncoderVariant::QuantileGate(_) | EncoderVariant::QuantileActGate(_)
        )
    }

    pub fn is_none(&self) -> bool {
        matches!(self, EncoderVariant::None)
    }
}

impl fmt::Display for EncoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bucketed() {
            write!(f, "{}:{}", self.name(), self.buckets())
        } else {
            f.write_str(self.name())
        }
    }
}

/// Per-occurrence inputs an encoder may look at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeContext {
    pub bucket: usize,
    pub diff_ms: i64,
    /// Distance from the most recent click, 0 for the last one.
    pub position: usize,
}

/// Tape handles of the parameters one encoder may use.
#[derive(Clone, Copy, Debug)]
pub struct TimeVars {
    pub table: Var,
    pub weight: Var,
    pub bias: Var,
    pub positions: Var,
    pub constant: Var,
}

/// A variant together with everything fitted on training differences.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeEncoder {
    pub variant: EncoderVariant,
    pub bucketizer: Bucketizer,
    /// Minimum and maximum training difference, for [`EncoderVariant::Constant`].
    pub range: (i64, i64),
}

impl TimeEncoder {
    pub fn fit(variant: EncoderVariant, diffs: &[i64]) -> Result<Self> {
        let bucketizer = match variant {
            EncoderVariant::Bucket(b) => Bucketizer::fit_equal_width(diffs, b, EQUAL_WIDTH_CLIP)?,
            v if v.is_bucketed() => Bucketizer::fit_quantile(diffs, v.buckets())?,
            _ => Bucketizer::single(),
        };
        let range = (
            diffs.iter().copied().min().unwrap_or(0),
            diffs.iter().copied().max().unwrap_or(0),
        );
        Ok(TimeEncoder {
            variant,
            bucketizer,
            range,
        })
    }

    pub fn disabled() -> Self {
        TimeEncoder {
            variant: EncoderVariant::None,
            bucketizer: Bucketizer::single(),
            range: (0, 0),
        }
    }

    pub fn bucket(&self, diff_ms: i64) -> usize {
        self.bucketizer.bucketize(diff_ms)
    }

    /// `diff` min-max normalized over the training range and clamped to [0, 1].
    pub fn normalized(&self, diff_ms: i64) -> f64 {
        let (lo, hi) = self.range;
        if hi <= lo {
            return 0.0;
        }
        ((diff_ms - lo) as f64 / (hi - lo) as f64).clamp(0.0, 1.0)
    }

    /// The time vector for one occurrence, `None` when the variant is off.
    pub fn record(&self, tape: &mut Tape<'_>, vars: &TimeVars, ctx: TimeContext) -> Result<Option<Var>> {
        let v = match self.variant {
            EncoderVariant::None => return Ok(None),
            EncoderVariant::Position => {
                let rows = tape.value(vars.positions).rows();
                tape.row(vars.positions, ctx.position.min(rows - 1))?
            }
            EncoderVariant::Constant => tape.scale(vars.constant, self.normalized(ctx.diff_ms))?,
            v => {
                let activate = v.table_activation().unwrap_or(false);
                record_bucket_embedding(tape, vars.table, vars.weight, vars.bias, ctx.bucket, activate)?
            }
        };
        Ok(Some(v))
    }
}

/// `W · act(normalize(table[bucket])) + b`, with `act` the leaky ReLU when
/// `activate` is set and the identity otherwise.
pub fn record_bucket_embedding(
    tape: &mut Tape<'_>,
    table: Var,
    weight: Var,
    bias: Var,
    bucket: usize,
    activate: bool,
) -> Result<Var> {
    let raw = tape.row(table, bucket)?;
    let mut x = tape.l2_normalize(raw)?;
    if activate {
        x = tape.leaky_relu(x, LEAKY_SLOPE)?;
    }
    tape.affine(weight, x, bias)
}

/// `g = σ(W[a; b] + c)`, returning `(1 - g) ⊙ a + g ⊙ b`.
pub fn record_gated_merge(tape: &mut Tape<'_>, a: Var, b: Var, weight: Var, bias: Var) -> Result<Var> {
    let cat = tape.concat(&[a, b])?;
    let pre = tape.affine(weight, cat, bias)?;
    let g = tape.sigmoid(pre)?;
    tape.lerp(a, b, g)
}

/// Bucket embedding table plus its output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalTable {
    pub embeddings: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl TemporalTable {
    pub fn bucket_count(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn encode(&self, bucket: usize, activate: bool) -> Result<Tensor> {
        let mut tape = Tape::new();
        let t = tape.param(&self.embeddings);
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let out = record_bucket_embedding(&mut tape, t, w, b, bucket, activate)?;
        Ok(tape.value(out).clone())
    }
}

/// Node time vector for a click at `event_ts` seen from `prediction_ts`.
/// A click after the prediction time counts as a zero difference.
pub fn encode_tn(table: &TemporalTable, bucketizer: &Bucketizer, prediction_ts: i64, event_ts: i64) -> Result<Tensor> {
    let diff = (prediction_ts - event_ts).max(0);
    table.encode(bucketizer.bucketize(diff), true)
}

/// Edge time vector for the interval between two consecutive clicks.
pub fn encode_te(table: &TemporalTable, bucketizer: &Bucketizer, ts_next: i64, ts_prev: i64) -> Result<Tensor> {
    let diff = (ts_next - ts_prev).max(0);
    table.encode(bucketizer.bucketize(diff), true)
}

/// Value-level gated merge of a normalized item vector and a time vector.
pub fn aggregate_node(item: &Tensor, time: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (a, b) = (tape.param(item), tape.param(time));
    let (w, c) = (tape.param(weight), tape.param(bias));
    let out = record_gated_merge(&mut tape, a, b, w, c)?;
    Ok(tape.value(out).clone())
}
