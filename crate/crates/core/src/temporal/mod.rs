//! Bucketing of time differences and the temporal embedding encoders.

mod bucketizer;
mod encoder;

pub use bucketizer::Bucketizer;
pub use encoder::{
    aggregate_node, encode_te, encode_tn, record_bucket_embedding, record_gated_merge, EncoderVariant, TemporalTable,
    TimeContext, TimeEncoder, TimeVars, EQUAL_WIDTH_CLIP, LEAKY_SLOPE,
};
