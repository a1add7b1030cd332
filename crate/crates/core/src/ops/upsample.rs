//! Nearest-neighbor 2x upsampling.

use super::LayerGrad;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Replicates each input pixel into a 2x2 block: `[C,H,W] -> [C,2H,2W]`.
pub fn upsample2_forward<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(Error::shape(
            "upsample2_forward",
            "[C, H, W]",
            format!("{shape:?}"),
        ));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[c, h2, w2]);
    let data = input.data();
    let out_data = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let in_row = &data[(ch * h + y) * w..(ch * h + y + 1) * w];
            for dy in 0..2 {
                let base = (ch * h2 + 2 * y + dy) * w2;
                let out_row = &mut out_data[base..base + w2];
                for (x, &v) in in_row.iter().enumerate() {
                    out_row[2 * x] = v;
                    out_row[2 * x + 1] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample2_forward`]: each input position receives the sum of
/// its 2x2 replica block in the upstream gradient.
pub fn upsample2_backward<S: Scalar>(upstream: &Tensor<S>) -> Result<LayerGrad<S>> {
    let shape = upstream.shape();
    if shape.len() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
        return Err(Error::shape(
            "upsample2_backward",
            "[C, 2H, 2W]",
            format!("{shape:?}"),
        ));
    }
    let (c, h2, w2) = (shape[0], shape[1], shape[2]);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut d_input = Tensor::zeros(&[c, h, w]);
    let up = upstream.data();
    let din = d_input.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let row0 = &up[(ch * h2 + 2 * y) * w2..(ch * h2 + 2 * y + 1) * w2];
            let row1 = &up[(ch * h2 + 2 * y + 1) * w2..(ch * h2 + 2 * y + 2) * w2];
            let out_row = &mut din[(ch * h + y) * w..(ch * h + y + 1) * w];
            for x in 0..w {
                out_row[x] = row0[2 * x] + row0[2 * x + 1] + row1[2 * x] + row1[2 * x + 1];
            }
        }
    }
    Ok(LayerGrad::parameter_free(d_input))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_becomes_2x2_block() {
        let input = Tensor::new(vec![1, 1, 1], vec![7.5f64]).unwrap();
        let out = upsample2_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 7.5));
    }

    #[test]
    fn doubles_100_to_200() {
        let input = Tensor::<f64>::zeros(&[2, 100, 100]);
        let out = upsample2_forward(&input).unwrap();
        assert_eq!(out.shape(), &[2, 200, 200]);
    }

    #[test]
    fn backward_sums_the_four_replicas() {
        let upstream = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = upsample2_backward(&upstream).unwrap();
        assert_eq!(g.input_grad.shape(), &[1, 1, 1]);
        assert_eq!(g.input_grad.data(), &[10.0]);
    }

    #[test]
    fn pool_then_upsample_is_identity_on_constants() {
        let input = Tensor::full(&[3, 8, 6], -1.25f64);
        let (pooled, _) = crate::ops::maxpool2_forward(&input).unwrap();
        let restored = upsample2_forward(&pooled).unwrap();
        assert_eq!(restored, input);
    }
}
