//! 2x2 stride-2 max pooling.

use super::LayerGrad;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-window argmax positions captured by [`maxpool2_forward`].
///
/// Each entry is the within-window offset `0..4` in row-major order
/// (`0` = top-left, `1` = top-right, `2` = bottom-left, `3` = bottom-right).
#[derive(Debug, Clone)]
pub struct PoolIndices {
    shape: Vec<usize>,
    idx: Vec<u8>,
}

impl PoolIndices {
    /// Output shape `[C, H/2, W/2]` of the pooled tensor.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn indices(&self) -> &[u8] {
        &self.idx
    }
}

/// Non-overlapping 2x2 window maximum. Ties keep the first occurrence in
/// row-major scan order. `H` and `W` must be even.
pub fn maxpool2_forward<S: Scalar>(input: &Tensor<S>) -> Result<(Tensor<S>, PoolIndices)> {
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(Error::shape(
            "maxpool2_forward",
            "[C, H, W]",
            format!("{shape:?}"),
        ));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2_forward",
            "even H and W",
            format!("[{c}, {h}, {w}]"),
        ));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, ho, wo]);
    let mut idx = vec![0u8; c * ho * wo];
    let data = input.data();
    let out_data = out.data_mut();

    for ch in 0..c {
        let chan = &data[ch * h * w..(ch + 1) * h * w];
        for y in 0..ho {
            let row0 = &chan[(2 * y) * w..(2 * y + 1) * w];
            let row1 = &chan[(2 * y + 1) * w..(2 * y + 2) * w];
            for x in 0..wo {
                let window = [row0[2 * x], row0[2 * x + 1], row1[2 * x], row1[2 * x + 1]];
                let mut best = 0usize;
                for k in 1..4 {
                    if window[k] > window[best] {
                        best = k;
                    }
                }
                let o = (ch * ho + y) * wo + x;
                out_data[o] = window[best];
                idx[o] = best as u8;
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            shape: vec![c, ho, wo],
            idx,
        },
    ))
}

/// Routes the upstream gradient to each window's recorded argmax position;
/// every other input position receives zero.
///
/// Panics if an index is outside its window: that is an internal invariant
/// violation, not a recoverable input error.
pub fn maxpool2_backward<S: Scalar>(
    indices: &PoolIndices,
    upstream: &Tensor<S>,
) -> Result<LayerGrad<S>> {
    if upstream.shape() != indices.shape() {
        return Err(Error::shape(
            "maxpool2_backward",
            format!("{:?}", indices.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let (c, ho, wo) = (indices.shape[0], indices.shape[1], indices.shape[2]);
    let (h, w) = (ho * 2, wo * 2);
    let mut d_input = Tensor::zeros(&[c, h, w]);
    let din = d_input.data_mut();
    let up = upstream.data();

    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let o = (ch * ho + y) * wo + x;
                let k = indices.idx[o] as usize;
                assert!(k < 4, "pool argmax index {k} out of window bounds");
                let (dy, dx) = (k / 2, k % 2);
                din[(ch * h + 2 * y + dy) * w + 2 * x + dx] = up[o];
            }
        }
    }
    Ok(LayerGrad::parameter_free(d_input))
}
