//! Single LSTM cell step, composed from tape primitives so gradients
//! come from the op-level VJPs.

use crate::numerics::{Tape, Scalar, Var};

/// Cell parameters registered on a tape. Gate blocks are packed in the
/// order input, forget, output, candidate: `w_x` is `[4h, in]`, `w_h` is
/// `[4h, h]`, `b` is `[4h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
    pub hidden: usize,
}

/// One step of the standard gated cell:
/// i,f,o = sigmoid gates, g = tanh candidate,
/// c' = f*c + i*g, h' = o * tanh(c').
pub fn lstm_step<S: Scalar>(
    tape: &mut Tape<S>,
    cell: &LstmCellVars,
    x: Var,
    h: Var,
    c: Var,
) -> (Var, Var) {
    let hid = cell.hidden;
    assert_eq!(tape.value(h).numel(), hid, "lstm_step hidden size mismatch");
    assert_eq!(tape.value(c).numel(), hid, "lstm_step cell size mismatch");
    let from_x = tape.matvec(cell.w_x, x);
    let from_h = tape.matvec(cell.w_h, h);
    let pre = tape.add(from_x, from_h);
    let gates = tape.add(pre, cell.b);

    let i_pre = tape.slice(gates, 0, hid);
    let f_pre = tape.slice(gates, hid, hid);
    let o_pre = tape.slice(gates, 2 * hid, hid);
    let g_pre = tape.slice(gates, 3 * hid, hid);

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let o = tape.sigmoid(o_pre);
    let g = tape.tanh(g_pre);

    let keep = tape.mul(f, c);
    let write = tape.mul(i, g);
    let c_next = tape.add(keep, write);
    let c_act = tape.tanh(c_next);
    let h_next = tape.mul(o, c_act);
    (h_next, c_next)
}
