//! A small, deterministic neural-network engine: 1-D convolution, LSTM,
//! dense, pooling and dropout layers with hand-written gradients, binary
//! cross-entropy loss and the Adam optimizer.

mod adam;
mod kernels;
mod layers;
mod loss;
mod model;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState};
pub use layers::{
    avgpool, avgpool_backward, dropout_mask, flatten, maxpool, maxpool_backward, relu, sigmoid, unflatten, Conv1d,
    Dense, Layer, LayerCache, Lstm, LstmCache, Mode,
};
pub use loss::{bce_batch, bce_grad, bce_loss, PROB_CLAMP};
pub use model::{build_model, build_model_with, predict_layers, Arch, ForwardTrace, ModelDims, Network, Prediction, THRESHOLD};
pub use tensor::{Act, Mat, SeqBatch, Tensor};
pub use train::{train_model, train_on_windows, TrainConfig, TrainOutput};

use crate::error::{Error, Result};

/// `y = conv(x)` for a single sequence `x` of shape `(c_in, T)`.
pub fn conv1d_forward(x: &Tensor, layer: &Conv1d) -> Result<Tensor> {
    let y = layer.forward(&x.to_batch())?;
    Ok(Tensor::from_batch(&y, 0))
}

/// Runs an LSTM over a single sequence; returns the hidden sequence
/// `(hidden, T)` and the final hidden state.
pub fn lstm_forward(x: &Tensor, layer: &Lstm) -> Result<(Tensor, Vec<f64>)> {
    let (seq, _) = layer.forward_full(&x.to_batch())?;
    let out = Tensor::from_batch(&seq, 0);
    let last = (0..out.channels()).map(|c| out.get(c, out.len() - 1)).collect();
    Ok((out, last))
}

/// `C = op(A) * op(B) + beta * C` on row-major slices, where `op(A)` is
/// `m x k` and `op(B)` is `k x n`. A transposed operand is stored in its
/// untransposed shape (`k x m` or `n x k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe matrices that fit inside the asserted slice
    // lengths, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn check_window_len(values: usize, window_seconds: usize) -> Result<()> {
    let want = 120 * window_seconds;
    if values != want {
        return Err(Error::shape(format!(
            "window has {values} values, model expects {want} (20*S x 6 with S={window_seconds})"
        )));
    }
    Ok(())
}
