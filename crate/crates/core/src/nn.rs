//! Parameter initialization and small layer helpers shared by the encoder
//! and the decoders.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Mat, ParamStore, Tape, Var};

/// Glorot-uniform matrix.
pub fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Small symmetric uniform matrix, used for embedding tables.
pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

pub fn zeros(rows: usize, cols: usize) -> Mat {
    Array2::zeros((rows, cols))
}

/// Registers `{prefix}.w` (in×out) and `{prefix}.b` (1×out).
pub fn init_linear(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, input: usize, output: usize) {
    params.insert(format!("{prefix}.w"), xavier(rng, input, output));
    params.insert(format!("{prefix}.b"), zeros(1, output));
}

/// `x · W + b` with the parameters registered by [`init_linear`].
pub fn linear(tape: &Tape, params: &ParamStore, prefix: &str, x: Var) -> Var {
    let w = params.bind(tape, &format!("{prefix}.w"));
    let b = params.bind(tape, &format!("{prefix}.b"));
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

/// `x · W` without bias.
pub fn project(tape: &Tape, params: &ParamStore, name: &str, x: Var) -> Var {
    let w = params.bind(tape, name);
    tape.matmul(x, w)
}
