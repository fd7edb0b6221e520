use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::tensor::Tensor;

/// Every trainable tensor. All layers share one set, so the list does not
/// depend on the layer count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    ItemTable,
    TnTable,
    TnProjW,
    TnProjB,
    TeTable,
    TeProjW,
    TeProjB,
    TnPositions,
    TePositions,
    TnConstant,
    TeConstant,
    NodeGateW,
    NodeGateB,
    InGateW,
    InGateB,
    OutGateW,
    OutGateB,
    InW,
    InB,
    OutW,
    OutB,
    Wz,
    Uz,
    Bz,
    Wr,
    Ur,
    Br,
    Wh,
    Uh,
    Bh,
    HighwayW,
    HighwayB,
    ReadoutW0,
    ReadoutW1,
    ReadoutW2,
    ReadoutW3,
    ReadoutB,
    PrefW,
    PrefB,
}

impl Param {
    pub const ALL: [Param; 39] = [
        Param::ItemTable,
        Param::TnTable,
        Param::TnProjW,
        Param::TnProjB,
        Param::TeTable,
        Param::TeProjW,
        Param::TeProjB,
        Param::TnPositions,
        Param::TePositions,
        Param::TnConstant,
        Param::TeConstant,
        Param::NodeGateW,
        Param::NodeGateB,
        Param::InGateW,
        Param::InGateB,
        Param::OutGateW,
        Param::OutGateB,
        Param::InW,
        Param::InB,
        Param::OutW,
        Param::OutB,
        Param::Wz,
        Param::Uz,
        Param::Bz,
        Param::Wr,
        Param::Ur,
        Param::Br,
        Param::Wh,
        Param::Uh,
        Param::Bh,
        Param::HighwayW,
        Param::HighwayB,
        Param::ReadoutW0,
        Param::ReadoutW1,
        Param::ReadoutW2,
        Param::ReadoutW3,
        Param::ReadoutB,
        Param::PrefW,
        Param::PrefB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::ItemTable => "item_table",
            Param::TnTable => "tn_table",
            Param::TnProjW => "tn_proj_w",
            Param::TnProjB => "tn_proj_b",
            Param::TeTable => "te_table",
            Param::TeProjW => "te_proj_w",
            Param::TeProjB => "te_proj_b",
            Param::TnPositions => "tn_positions",
            Param::TePositions => "te_positions",
            Param::TnConstant => "tn_constant",
            Param::TeConstant => "te_constant",
            Param::NodeGateW => "node_gate_w",
            Param::NodeGateB => "node_gate_b",
            Param::InGateW => "in_gate_w",
            Param::InGateB => "in_gate_b",
            Param::OutGateW => "out_gate_w",
            Param::OutGateB => "out_gate_b",
            Param::InW => "in_w",
            Param::InB => "in_b",
            Param::OutW => "out_w",
            Param::OutB => "out_b",
            Param::Wz => "ggnn_wz",
            Param::Uz => "ggnn_uz",
            Param::Bz => "ggnn_bz",
            Param::Wr => "ggnn_wr",
            Param::Ur => "ggnn_ur",
            Param::Br => "ggnn_br",
            Param::Wh => "ggnn_wh",
            Param::Uh => "ggnn_uh",
            Param::Bh => "ggnn_bh",
            Param::HighwayW => "highway_w",
            Param::HighwayB => "highway_b",
            Param::ReadoutW0 => "readout_w0",
            Param::ReadoutW1 => "readout_w1",
            Param::ReadoutW2 => "readout_w2",
            Param::ReadoutW3 => "readout_w3",
            Param::ReadoutB => "readout_b",
            Param::PrefW => "pref_w",
            Param::PrefB => "pref_b",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn shape(self, config: &ModelConfig) -> Vec<usize> {
        let d = config.dim;
        match self {
            Param::ItemTable => vec![config.n_items, d],
            Param::TnTable => vec![config.tn.buckets(), d],
            Param::TeTable => vec![config.te.buckets(), d],
            Param::TnPositions => vec![config.max_len.max(1), d],
            Param::TePositions => vec![config.max_len.saturating_sub(1).max(1), d],
            Param::TnProjW
            | Param::TeProjW
            | Param::InW
            | Param::OutW
            | Param::Uz
            | Param::Ur
            | Param::Uh
            | Param::ReadoutW1
            | Param::ReadoutW2
            | Param::ReadoutW3 => vec![d, d],
            Param::NodeGateW | Param::Wz | Param::Wr | Param::Wh | Param::HighwayW | Param::PrefW => {
                vec![d, 2 * d]
            }
            Param::InGateW | Param::OutGateW => vec![d, 3 * d],
            Param::TnProjB
            | Param::TeProjB
            | Param::TnConstant
            | Param::TeConstant
            | Param::NodeGateB
            | Param::InGateB
            | Param::OutGateB
            | Param::InB
            | Param::OutB
            | Param::Bz
            | Param::Br
            | Param::Bh
            | Param::HighwayB
            | Param::ReadoutW0
            | Param::ReadoutB
            | Param::PrefB => vec![d],
        }
    }
}

/// Uniform on `[-1/sqrt(d), 1/sqrt(d)]` for every entry, in [`Param::ALL`] order.
pub fn init_params(config: &ModelConfig, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (config.dim as f64).sqrt();
    Param::ALL
        .iter()
        .map(|p| {
            let shape = p.shape(config);
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
            Tensor::new(shape, data).expect("shape and data agree")
        })
        .collect()
}
