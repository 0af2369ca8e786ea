use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::corpus::embeddings::INIT_RANGE;
use crate::error::{Error, Result};
use crate::numerics::{LstmCellVars, Scalar, Tape, Tensor, Var};

/// Model dimensions. The attention size and the co-attention size both
/// equal the hidden size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub emb: usize,
    pub hidden: usize,
}

impl ModelDims {
    pub fn enc_out(&self) -> usize {
        2 * self.hidden
    }
}

/// Parameter groups for transfer freezing. `decoder`, `pointer` and
/// `output` together form the summarization part.
pub const GROUPS: [&str; 6] = ["embeddings", "encoder", "decoder", "pointer", "output", "alignment"];

macro_rules! model_tensors {
    ($macro:ident) => {
        $macro! {
            embeddings_table: "embeddings.table",
            gate_w_i: "encoder.gate.w_i",
            gate_b_i: "encoder.gate.b_i",
            gate_w_u: "encoder.gate.w_u",
            gate_b_u: "encoder.gate.b_u",
            enc_fw_w_x: "encoder.fw.w_x",
            enc_fw_w_h: "encoder.fw.w_h",
            enc_fw_b: "encoder.fw.b",
            enc_bw_w_x: "encoder.bw.w_x",
            enc_bw_w_h: "encoder.bw.w_h",
            enc_bw_b: "encoder.bw.b",
            dec_w_x: "decoder.cell.w_x",
            dec_w_h: "decoder.cell.w_h",
            dec_b: "decoder.cell.b",
            attn_m: "decoder.attn.m",
            attn_w_h: "decoder.attn.w_h",
            attn_w_s: "decoder.attn.w_s",
            attn_w_q: "decoder.attn.w_q",
            attn_b: "decoder.attn.b",
            bridge_w_h: "decoder.bridge.w_h",
            bridge_b_h: "decoder.bridge.b_h",
            bridge_w_c: "decoder.bridge.w_c",
            bridge_b_c: "decoder.bridge.b_c",
            proj_w_1: "decoder.proj.w_1",
            proj_b_1: "decoder.proj.b_1",
            ptr_w_h: "pointer.w_h",
            ptr_w_x: "pointer.w_x",
            ptr_w_q: "pointer.w_q",
            ptr_b_p: "pointer.b_p",
            ptr_w_c: "pointer.w_c",
            out_w_2: "output.w_2",
            out_b_2: "output.b_2",
            align_q_proj: "alignment.q_proj",
            align_u: "alignment.u",
            align_w_s: "alignment.w_s",
            align_b_s: "alignment.b_s",
        }
    };
}

macro_rules! define_params {
    ($($field:ident: $name:expr,)*) => {
        /// All learnable weights. Tensors live behind `Arc` so tapes can
        /// reference them without copying; updates go through
        /// `tensor_mut`, which is only legal between training steps.
        #[derive(Debug, Clone)]
        pub struct ModelParams<S> {
            pub dims: ModelDims,
            $(pub $field: Arc<Tensor<S>>,)*
        }

        impl<S: Scalar> ModelParams<S> {
            /// Tensors in a fixed, checkpoint-stable order.
            pub fn named(&self) -> Vec<(&'static str, &Arc<Tensor<S>>)> {
                vec![$(($name, &self.$field),)*]
            }

            pub fn tensor(&self, name: &str) -> Option<&Arc<Tensor<S>>> {
                match name {
                    $($name => Some(&self.$field),)*
                    _ => None,
                }
            }

            /// Mutable access for optimizer updates and checkpoint
            /// restores. Panics if a tape still shares the tensor.
            pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
                match name {
                    $($name => Some(Arc::make_mut(&mut self.$field)),)*
                    _ => None,
                }
            }
        }
    };
}

macro_rules! define_param_vars {
    ($($field:ident: $name:expr,)*) => {
        /// The same tensors registered as leaves on one tape.
        #[derive(Debug, Clone, Copy)]
        pub struct ParamVars {
            $(pub $field: Var,)*
            pub dims: ModelDims,
        }

        pub fn register_params<S: Scalar>(tape: &mut Tape<S>, p: &ModelParams<S>) -> ParamVars {
            ParamVars {
                $($field: tape.leaf(Arc::clone(&p.$field)),)*
                dims: p.dims,
            }
        }

        impl ParamVars {
            /// Name/var pairs mirroring `ModelParams::named`.
            pub fn named(&self) -> Vec<(&'static str, Var)> {
                vec![$(($name, self.$field),)*]
            }
        }
    };
}

model_tensors!(define_params);
model_tensors!(define_param_vars);

/// Group a tensor name belongs to (the prefix before the first dot).
pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

pub fn validate_groups(names: &[String]) -> Result<()> {
    for n in names {
        if !GROUPS.contains(&n.as_str()) {
            return Err(Error::Config(format!(
                "unknown parameter group '{n}' (expected one of {})",
                GROUPS.join(", ")
            )));
        }
    }
    Ok(())
}

impl<S: Scalar> ModelParams<S> {
    /// Fresh model with every tensor drawn uniform from [-0.05, 0.05].
    pub fn init(dims: ModelDims, rng: &mut ChaCha8Rng) -> Self {
        let u = |shape: Vec<usize>, rng: &mut ChaCha8Rng| {
            Arc::new(Tensor::uniform(shape, -INIT_RANGE, INIT_RANGE, rng))
        };
        let (v, e, h) = (dims.vocab, dims.emb, dims.hidden);
        let eo = dims.enc_out();
        ModelParams {
            dims,
            embeddings_table: u(vec![v, e], rng),
            gate_w_i: u(vec![e, e], rng),
            gate_b_i: u(vec![e], rng),
            gate_w_u: u(vec![e, e], rng),
            gate_b_u: u(vec![e], rng),
            enc_fw_w_x: u(vec![4 * h, e], rng),
            enc_fw_w_h: u(vec![4 * h, h], rng),
            enc_fw_b: u(vec![4 * h], rng),
            enc_bw_w_x: u(vec![4 * h, e], rng),
            enc_bw_w_h: u(vec![4 * h, h], rng),
            enc_bw_b: u(vec![4 * h], rng),
            dec_w_x: u(vec![4 * h, e], rng),
            dec_w_h: u(vec![4 * h, h], rng),
            dec_b: u(vec![4 * h], rng),
            attn_m: u(vec![h], rng),
            attn_w_h: u(vec![h, eo], rng),
            attn_w_s: u(vec![h, h], rng),
            attn_w_q: u(vec![h, eo], rng),
            attn_b: u(vec![h], rng),
            bridge_w_h: u(vec![h, eo], rng),
            bridge_b_h: u(vec![h], rng),
            bridge_w_c: u(vec![h, eo], rng),
            bridge_b_c: u(vec![h], rng),
            proj_w_1: u(vec![h, h + eo], rng),
            proj_b_1: u(vec![h], rng),
            ptr_w_h: u(vec![h], rng),
            ptr_w_x: u(vec![e], rng),
            ptr_w_q: u(vec![eo], rng),
            ptr_b_p: u(vec![1], rng),
            ptr_w_c: u(vec![1], rng),
            out_w_2: u(vec![v, h], rng),
            out_b_2: u(vec![v], rng),
            align_q_proj: u(vec![h, eo], rng),
            align_u: u(vec![h, h], rng),
            align_w_s: u(vec![2, 2 * h], rng),
            align_b_s: u(vec![2], rng),
        }
    }

    /// Replace the embedding table (e.g. with pre-trained rows).
    pub fn set_embeddings(&mut self, table: Tensor<S>) {
        assert_eq!(table.shape(), &[self.dims.vocab, self.dims.emb], "embedding table shape");
        self.embeddings_table = Arc::new(table);
    }
}

impl ParamVars {
    pub fn enc_fw_cell(&self) -> LstmCellVars {
        LstmCellVars {
            w_x: self.enc_fw_w_x,
            w_h: self.enc_fw_w_h,
            b: self.enc_fw_b,
            hidden: self.dims.hidden,
        }
    }

    pub fn enc_bw_cell(&self) -> LstmCellVars {
        LstmCellVars {
            w_x: self.enc_bw_w_x,
            w_h: self.enc_bw_w_h,
            b: self.enc_bw_b,
            hidden: self.dims.hidden,
        }
    }

    pub fn dec_cell(&self) -> LstmCellVars {
        LstmCellVars { w_x: self.dec_w_x, w_h: self.dec_w_h, b: self.dec_b, hidden: self.dims.hidden }
    }
}
