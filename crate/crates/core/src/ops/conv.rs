//! 3x3 stride-1 same-padded 2-D convolution.

use rayon::prelude::*;

use super::{axpy, dot, LayerGrad};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) const KERNEL: usize = 3;
/// Zero padding of 1 on each border keeps the spatial size unchanged.
const PAD: usize = 1;

/// Channel slices below this size are not worth a rayon dispatch.
const PAR_MIN_ELEMS: usize = 16 * 1024;

struct ConvDims {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
}

fn check_shapes<S: Scalar>(
    context: &'static str,
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<ConvDims> {
    let ishape = input.shape();
    let wshape = weights.shape();
    if ishape.len() != 3 {
        return Err(Error::shape(context, "[C_in, H, W]", format!("{ishape:?}")));
    }
    if wshape.len() != 4 || wshape[2] != KERNEL || wshape[3] != KERNEL {
        return Err(Error::shape(
            context,
            "[C_out, C_in, 3, 3]",
            format!("{wshape:?}"),
        ));
    }
    if wshape[1] != ishape[0] {
        return Err(Error::shape(
            context,
            format!("weight C_in = {}", ishape[0]),
            format!("weight C_in = {}", wshape[1]),
        ));
    }
    if bias.shape() != [wshape[0]] {
        return Err(Error::shape(
            context,
            format!("bias [{}]", wshape[0]),
            format!("{:?}", bias.shape()),
        ));
    }
    Ok(ConvDims {
        c_in: ishape[0],
        c_out: wshape[0],
        h: ishape[1],
        w: ishape[2],
    })
}

/// Row extents for one kernel tap: output columns `x0..x1` read input columns
/// `x0 + d - PAD .. x1 + d - PAD`, clipped so the input index stays in range.
#[inline]
fn tap_range(d: usize, extent: usize) -> (usize, usize) {
    let lo = PAD.saturating_sub(d);
    let hi = (extent + PAD - d).min(extent);
    (lo, hi)
}

/// Same-padded 3x3 stride-1 convolution:
/// `out[o,y,x] = bias[o] + sum_{c,dy,dx} input[c, y+dy-1, x+dx-1] * weights[o,c,dy,dx]`
/// with out-of-range input treated as zero.
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let dims = check_shapes("conv2d_forward", input, weights, bias)?;
    let ConvDims { c_in, c_out, h, w } = dims;
    let hw = h * w;

    let mut out = Tensor::zeros(&[c_out, h, w]);
    let in_data = input.data();
    let w_data = weights.data();
    let b_data = bias.data();

    let fill_channel = |o: usize, out_chan: &mut [S]| {
        out_chan.fill(b_data[o]);
        for c in 0..c_in {
            let in_chan = &in_data[c * hw..(c + 1) * hw];
            let w_base = (o * c_in + c) * KERNEL * KERNEL;
            for dy in 0..KERNEL {
                let (y0, y1) = tap_range(dy, h);
                for dx in 0..KERNEL {
                    let (x0, x1) = tap_range(dx, w);
                    let wv = w_data[w_base + dy * KERNEL + dx];
                    for y in y0..y1 {
                        let iy = y + dy - PAD;
                        let ix0 = x0 + dx - PAD;
                        let in_row = &in_chan[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        let out_row = &mut out_chan[y * w + x0..y * w + x1];
                        axpy(out_row, wv, in_row);
                    }
                }
            }
        }
    };

    if c_out * hw >= PAR_MIN_ELEMS && c_out > 1 {
        out.data_mut()
            .par_chunks_mut(hw)
            .enumerate()
            .for_each(|(o, chunk)| fill_channel(o, chunk));
    } else {
        for (o, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
            fill_channel(o, chunk);
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weights, and bias.
///
/// `param_grads` is `[d_weights, d_bias]`; the bias gradient is the spatial
/// sum of the upstream gradient per output channel.
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    upstream: &Tensor<S>,
) -> Result<LayerGrad<S>> {
    let bias_probe = Tensor::zeros(&[weights.shape()[0]]);
    let dims = check_shapes("conv2d_backward", input, weights, &bias_probe)?;
    let ConvDims { c_in, c_out, h, w } = dims;
    if upstream.shape() != [c_out, h, w] {
        return Err(Error::shape(
            "conv2d_backward",
            format!("[{c_out}, {h}, {w}]"),
            format!("{:?}", upstream.shape()),
        ));
    }
    let hw = h * w;
    let in_data = input.data();
    let w_data = weights.data();
    let up_data = upstream.data();

    // d_weights[o,c,dy,dx] = sum over valid rows of <upstream row, input row>;
    // d_bias[o] = sum of upstream over the channel. Parallel over o.
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_bias = Tensor::zeros(&[c_out]);
    let wk = c_in * KERNEL * KERNEL;
    let fill_wgrad = |o: usize, dw_chan: &mut [S], db: &mut S| {
        let up_chan = &up_data[o * hw..(o + 1) * hw];
        *db = up_chan.iter().copied().sum();
        for c in 0..c_in {
            let in_chan = &in_data[c * hw..(c + 1) * hw];
            for dy in 0..KERNEL {
                let (y0, y1) = tap_range(dy, h);
                for dx in 0..KERNEL {
                    let (x0, x1) = tap_range(dx, w);
                    let mut acc = S::zero();
                    for y in y0..y1 {
                        let iy = y + dy - PAD;
                        let ix0 = x0 + dx - PAD;
                        let in_row = &in_chan[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        let up_row = &up_chan[y * w + x0..y * w + x1];
                        acc += dot(up_row, in_row);
                    }
                    dw_chan[c * KERNEL * KERNEL + dy * KERNEL + dx] = acc;
                }
            }
        }
    };
    if c_out * hw >= PAR_MIN_ELEMS && c_out > 1 {
        d_weights
            .data_mut()
            .par_chunks_mut(wk)
            .zip(d_bias.data_mut().par_iter_mut())
            .enumerate()
            .for_each(|(o, (dw, db))| fill_wgrad(o, dw, db));
    } else {
        for (o, (dw, db)) in d_weights
            .data_mut()
            .chunks_mut(wk)
            .zip(d_bias.data_mut().iter_mut())
            .enumerate()
        {
            fill_wgrad(o, dw, db);
        }
    }

    // d_input is the adjoint of the forward taps: wherever the forward did
    // out[y,x] += w * in[iy,ix], accumulate d_in[iy,ix] += w * up[y,x].
    // Parallel over input channels; per channel the o/dy/dx order is fixed.
    let mut d_input = Tensor::zeros(input.shape());
    let fill_igrad = |c: usize, din_chan: &mut [S]| {
        for o in 0..c_out {
            let up_chan = &up_data[o * hw..(o + 1) * hw];
            let w_base = (o * c_in + c) * KERNEL * KERNEL;
            for dy in 0..KERNEL {
                let (y0, y1) = tap_range(dy, h);
                for dx in 0..KERNEL {
                    let (x0, x1) = tap_range(dx, w);
                    let wv = w_data[w_base + dy * KERNEL + dx];
                    for y in y0..y1 {
                        let iy = y + dy - PAD;
                        let ix0 = x0 + dx - PAD;
                        let din_row = &mut din_chan[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        let up_row = &up_chan[y * w + x0..y * w + x1];
                        axpy(din_row, wv, up_row);
                    }
                }
            }
        }
    };
    if c_in * hw >= PAR_MIN_ELEMS && c_in > 1 {
        d_input
            .data_mut()
            .par_chunks_mut(hw)
            .enumerate()
            .for_each(|(c, chunk)| fill_igrad(c, chunk));
    } else {
        for (c, chunk) in d_input.data_mut().chunks_mut(hw).enumerate() {
            fill_igrad(c, chunk);
        }
    }

    Ok(LayerGrad {
        input_grad: d_input,
        param_grads: vec![d_weights, d_bias],
    })
}
