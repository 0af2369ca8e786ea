//! Compare-aggregate preprocessing and the shared Bi-LSTM encoder.

use crate::model::params::ParamVars;
use crate::numerics::{lstm_step, Scalar, Tape, Var};

/// Encoded sequence: row t is the forward state at t concatenated with
/// the backward state at t. Padding rows of the input are dropped, so
/// `h` always has exactly `len` rows and downstream attention never sees
/// a padded position.
#[derive(Debug, Clone, Copy)]
pub struct EncodedSequence {
    pub h: Var,
    pub len: usize,
    pub final_fw: Var,
    pub final_bw: Var,
}

/// Gated projection applied row-wise to the embedded input:
/// sigmoid(x W_i^T + b_i) * tanh(x W_u^T + b_u). Output entries lie in
/// (-1, 1).
pub fn compare_gate<S: Scalar>(tape: &mut Tape<S>, p: &ParamVars, w: Var) -> Var {
    let gi = tape.matmul_tb(w, p.gate_w_i);
    let gi = tape.add_row_broadcast(gi, p.gate_b_i);
    let gi = tape.sigmoid(gi);
    let gu = tape.matmul_tb(w, p.gate_w_u);
    let gu = tape.add_row_broadcast(gu, p.gate_b_u);
    let gu = tape.tanh(gu);
    tape.mul(gi, gu)
}

/// Run both directions over rows `0..len` of `x`; rows past `len` are
/// padding and never read.
pub fn bilstm_encode<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    x: Var,
    len: usize,
) -> EncodedSequence {
    let rows = tape.value(x).rows();
    assert!(len >= 1, "cannot encode a zero-length sequence");
    assert!(len <= rows, "true length {len} exceeds {rows} rows");
    let hid = p.dims.hidden;
    let fw_cell = p.enc_fw_cell();
    let bw_cell = p.enc_bw_cell();

    let mut fw = Vec::with_capacity(len);
    let mut h = tape.zeros(vec![hid]);
    let mut c = tape.zeros(vec![hid]);
    for t in 0..len {
        let xt = tape.row_of(x, t);
        let (h2, c2) = lstm_step(tape, &fw_cell, xt, h, c);
        fw.push(h2);
        h = h2;
        c = c2;
    }
    let final_fw = h;

    let mut bw = Vec::with_capacity(len);
    let mut h = tape.zeros(vec![hid]);
    let mut c = tape.zeros(vec![hid]);
    for t in (0..len).rev() {
        let xt = tape.row_of(x, t);
        let (h2, c2) = lstm_step(tape, &bw_cell, xt, h, c);
        bw.push(h2);
        h = h2;
        c = c2;
    }
    bw.reverse();
    let final_bw = h;

    let rows: Vec<Var> = (0..len).map(|t| tape.concat(&[fw[t], bw[t]])).collect();
    let h_mat = tape.stack_rows(&rows);
    EncodedSequence { h: h_mat, len, final_fw, final_bw }
}

/// Mean of the unpadded encoder rows (the question summary vector).
pub fn question_vector<S: Scalar>(tape: &mut Tape<S>, enc: Var, len: usize) -> Var {
    tape.mean_rows(enc, len)
}
