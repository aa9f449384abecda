//! Neural-network kernels: convolutions, pooling, resampling, softmax.
//!
//! Every operation comes as a `*_forward` / `*_backward` pair. Backwards
//! take the cached forward inputs (or outputs, where that is cheaper) and
//! the gradient flowing in from above, and they *accumulate* into parameter
//! gradient buffers so one buffer can serve a whole batch.
//!
//! Layout conventions (row-major, last axis fastest):
//! - 2D feature maps: `[channels, height, width]`
//! - 3D feature maps: `[channels, depth, height, width]`
//! - conv2d weights:  `[out_ch, in_ch, k, k]`
//! - conv3d weights:  `[out_ch, in_ch, k_depth, 3, 3]`
//! - tconv2d weights: `[in_ch, out_ch, 2, 2]`

use crate::error::Result;
use crate::projection::interp_positions;

use super::tensor::{Scalar, Tensor};

/// Geometry of a stride-1 square 2D convolution.
#[derive(Clone, Copy, Debug)]
pub struct Conv2dSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl Conv2dSpec {
    /// Same-size convolution: padding covers the dilated kernel radius.
    pub fn same(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Self {
        debug_assert!(kernel % 2 == 1, "same-size conv needs an odd kernel");
        Self {
            in_ch,
            out_ch,
            kernel,
            pad: dilation * (kernel - 1) / 2,
            dilation,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }
}

/// out[y, x] += wv * inp[y + dy, x + dx] over the in-bounds region.
/// Both planes are h×w; the shift decides which border rows/cols drop out.
#[inline]
fn add_shifted_plane<T: Scalar>(
    out: &mut [T],
    inp: &[T],
    h: usize,
    w: usize,
    wv: T,
    dy: isize,
    dx: isize,
) {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let iy = (y as isize + dy) as usize;
        let ix = (x0 as isize + dx) as usize;
        let orow = &mut out[y * w + x0..y * w + x1];
        let irow = &inp[iy * w + ix..iy * w + ix + (x1 - x0)];
        for (o, i) in orow.iter_mut().zip(irow) {
            *o += wv * *i;
        }
    }
}

/// Σ a[y, x] * b[y + dy, x + dx] over the in-bounds region (planes h×w).
#[inline]
fn dot_shifted_plane<T: Scalar>(
    a: &[T],
    b: &[T],
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
) -> T {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
    let mut acc = T::zero();
    if x0 >= x1 {
        return acc;
    }
    for y in y0..y1 {
        let by = (y as isize + dy) as usize;
        let bx = (x0 as isize + dx) as usize;
        let arow = &a[y * w + x0..y * w + x1];
        let brow = &b[by * w + bx..by * w + bx + (x1 - x0)];
        for (av, bv) in arow.iter().zip(brow) {
            acc += *av * *bv;
        }
    }
    acc
}

/// Stride-1 2D convolution that preserves spatial dims (`pad` must cover the
/// dilated kernel radius, as [`Conv2dSpec::same`] guarantees).
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    spec: &Conv2dSpec,
) -> Tensor<T> {
    let (ci, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("conv2d expects [c, h, w], got {s:?}"),
    };
    debug_assert_eq!(ci, spec.in_ch);
    debug_assert_eq!(weight.len(), spec.weight_len());
    debug_assert_eq!(bias.len(), spec.out_ch);
    debug_assert_eq!(spec.dilation * (spec.kernel - 1), 2 * spec.pad);

    let plane = h * w;
    let k = spec.kernel;
    let mut out = Tensor::zeros(&[spec.out_ch, h, w]);
    for oc in 0..spec.out_ch {
        let oplane = &mut out.data_mut()[oc * plane..(oc + 1) * plane];
        oplane.fill(bias[oc]);
        for ic in 0..ci {
            let iplane = &input.data()[ic * plane..(ic + 1) * plane];
            let wbase = (oc * ci + ic) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[wbase + ky * k + kx];
                    let dy = (ky * spec.dilation) as isize - spec.pad as isize;
                    let dx = (kx * spec.dilation) as isize - spec.pad as isize;
                    add_shifted_plane(oplane, iplane, h, w, wv, dy, dx);
                }
            }
        }
    }
    out
}

/// Backward of [`conv2d_forward`]: returns the input gradient and
/// accumulates weight/bias gradients.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    spec: &Conv2dSpec,
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let (ci, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("conv2d expects [c, h, w], got {s:?}"),
    };
    debug_assert_eq!(grad_out.shape(), &[spec.out_ch, h, w]);
    let plane = h * w;
    let k = spec.kernel;
    let mut grad_in = Tensor::zeros(&[ci, h, w]);
    for oc in 0..spec.out_ch {
        let gplane = &grad_out.data()[oc * plane..(oc + 1) * plane];
        grad_bias[oc] += gplane.iter().fold(T::zero(), |s, &g| s + g);
        for ic in 0..ci {
            let iplane = &input.data()[ic * plane..(ic + 1) * plane];
            let dplane = &mut grad_in.data_mut()[ic * plane..(ic + 1) * plane];
            let wbase = (oc * ci + ic) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let dy = (ky * spec.dilation) as isize - spec.pad as isize;
                    let dx = (kx * spec.dilation) as isize - spec.pad as isize;
                    // d input[y+dy, x+dx] += wv * d out[y, x]  ⇒ shift by -d.
                    let wv = weight[wbase + ky * k + kx];
                    add_shifted_plane(dplane, gplane, h, w, wv, -dy, -dx);
                    grad_weight[wbase + ky * k + kx] +=
                        dot_shifted_plane(gplane, iplane, h, w, dy, dx);
                }
            }
        }
    }
    grad_in
}

/// 3D convolution: spatial 3×3 with pad 1 (dims preserved), depth axis
/// unpadded so the output depth is `d - k_depth + 1`.
pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    out_ch: usize,
    k_depth: usize,
) -> Tensor<T> {
    let (ci, d, h, w) = match *input.shape() {
        [c, d, h, w] => (c, d, h, w),
        ref s => panic!("conv3d expects [c, d, h, w], got {s:?}"),
    };
    debug_assert!(k_depth >= 1 && k_depth <= d);
    debug_assert_eq!(weight.len(), out_ch * ci * k_depth * 9);
    debug_assert_eq!(bias.len(), out_ch);

    let od = d - k_depth + 1;
    let plane = h * w;
    let mut out = Tensor::zeros(&[out_ch, od, h, w]);
    for oc in 0..out_ch {
        for oz in 0..od {
            let obase = (oc * od + oz) * plane;
            let oplane = &mut out.data_mut()[obase..obase + plane];
            oplane.fill(bias[oc]);
            for ic in 0..ci {
                for kz in 0..k_depth {
                    let ibase = (ic * d + oz + kz) * plane;
                    let iplane = &input.data()[ibase..ibase + plane];
                    let wbase = ((oc * ci + ic) * k_depth + kz) * 9;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wv = weight[wbase + ky * 3 + kx];
                            add_shifted_plane(
                                oplane,
                                iplane,
                                h,
                                w,
                                wv,
                                ky as isize - 1,
                                kx as isize - 1,
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`conv3d_forward`].
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    out_ch: usize,
    k_depth: usize,
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let (ci, d, h, w) = match *input.shape() {
        [c, d, h, w] => (c, d, h, w),
        ref s => panic!("conv3d expects [c, d, h, w], got {s:?}"),
    };
    let od = d - k_depth + 1;
    debug_assert_eq!(grad_out.shape(), &[out_ch, od, h, w]);
    let plane = h * w;
    let mut grad_in = Tensor::zeros(&[ci, d, h, w]);
    for oc in 0..out_ch {
        for oz in 0..od {
            let gbase = (oc * od + oz) * plane;
            let gplane = &grad_out.data()[gbase..gbase + plane];
            grad_bias[oc] += gplane.iter().fold(T::zero(), |s, &g| s + g);
            for ic in 0..ci {
                for kz in 0..k_depth {
                    let ibase = (ic * d + oz + kz) * plane;
                    let wbase = ((oc * ci + ic) * k_depth + kz) * 9;
                    {
                        let iplane = &input.data()[ibase..ibase + plane];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                grad_weight[wbase + ky * 3 + kx] += dot_shifted_plane(
                                    gplane,
                                    iplane,
                                    h,
                                    w,
                                    ky as isize - 1,
                                    kx as isize - 1,
                                );
                            }
                        }
                    }
                    let dplane = &mut grad_in.data_mut()[ibase..ibase + plane];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wv = weight[wbase + ky * 3 + kx];
                            add_shifted_plane(
                                dplane,
                                gplane,
                                h,
                                w,
                                wv,
                                1 - ky as isize,
                                1 - kx as isize,
                            );
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Transposed 2D convolution with a 2×2 kernel and stride 2 (doubles both
/// spatial dims). Weight layout `[in_ch, out_ch, 2, 2]`.
pub fn tconv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    out_ch: usize,
) -> Tensor<T> {
    let (ci, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("tconv2d expects [c, h, w], got {s:?}"),
    };
    debug_assert_eq!(weight.len(), ci * out_ch * 4);
    debug_assert_eq!(bias.len(), out_ch);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[out_ch, oh, ow]);
    for oc in 0..out_ch {
        out.data_mut()[oc * oh * ow..(oc + 1) * oh * ow].fill(bias[oc]);
    }
    for ic in 0..ci {
        let iplane = &input.data()[ic * h * w..(ic + 1) * h * w];
        for oc in 0..out_ch {
            let obase = oc * oh * ow;
            let wbase = (ic * out_ch + oc) * 4;
            for ky in 0..2 {
                for kx in 0..2 {
                    let wv = weight[wbase + ky * 2 + kx];
                    for y in 0..h {
                        let irow = &iplane[y * w..(y + 1) * w];
                        let orow = obase + (2 * y + ky) * ow + kx;
                        for (x, &iv) in irow.iter().enumerate() {
                            out.data_mut()[orow + 2 * x] += wv * iv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`tconv2d_forward`].
pub fn tconv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &[T],
    out_ch: usize,
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let (ci, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("tconv2d expects [c, h, w], got {s:?}"),
    };
    let (oh, ow) = (2 * h, 2 * w);
    debug_assert_eq!(grad_out.shape(), &[out_ch, oh, ow]);
    for oc in 0..out_ch {
        let gplane = &grad_out.data()[oc * oh * ow..(oc + 1) * oh * ow];
        grad_bias[oc] += gplane.iter().fold(T::zero(), |s, &g| s + g);
    }
    let mut grad_in = Tensor::zeros(&[ci, h, w]);
    for ic in 0..ci {
        let iplane = &input.data()[ic * h * w..(ic + 1) * h * w];
        let dbase = ic * h * w;
        for oc in 0..out_ch {
            let gplane = &grad_out.data()[oc * oh * ow..(oc + 1) * oh * ow];
            let wbase = (ic * out_ch + oc) * 4;
            for ky in 0..2 {
                for kx in 0..2 {
                    let wv = weight[wbase + ky * 2 + kx];
                    let mut wgrad = T::zero();
                    for y in 0..h {
                        let grow = &gplane[(2 * y + ky) * ow + kx..];
                        let irow = &iplane[y * w..(y + 1) * w];
                        let drow = &mut grad_in.data_mut()[dbase + y * w..dbase + (y + 1) * w];
                        for x in 0..w {
                            let g = grow[2 * x];
                            drow[x] += wv * g;
                            wgrad += irow[x] * g;
                        }
                    }
                    grad_weight[wbase + ky * 2 + kx] += wgrad;
                }
            }
        }
    }
    grad_in
}

/// 2×2 max pooling with stride 2 over the last two axes (which must be
/// even). Returns the pooled tensor plus the flat source index of each
/// maximum for the backward scatter. Ties resolve to the earliest element
/// in row-major order, so results do not depend on visit order.
pub fn maxpool2_forward<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let shape = input.shape();
    assert!(shape.len() >= 2, "maxpool needs at least 2 axes");
    let w = shape[shape.len() - 1];
    let h = shape[shape.len() - 2];
    assert!(h % 2 == 0 && w % 2 == 0, "maxpool dims must be even: {h}x{w}");
    let outer: usize = shape[..shape.len() - 2].iter().product();
    debug_assert!(input.len() <= u32::MAX as usize);

    let mut out_shape = shape.to_vec();
    let olen = shape.len();
    out_shape[olen - 2] = h / 2;
    out_shape[olen - 1] = w / 2;
    let mut out = Tensor::zeros(&out_shape);
    let mut argmax = vec![0u32; out.len()];
    let (oh, ow) = (h / 2, w / 2);
    for p in 0..outer {
        let ibase = p * h * w;
        let obase = p * oh * ow;
        for y in 0..oh {
            for x in 0..ow {
                let i00 = ibase + (2 * y) * w + 2 * x;
                let candidates = [i00, i00 + 1, i00 + w, i00 + w + 1];
                let mut best = candidates[0];
                let mut best_v = input.data()[best];
                for &c in &candidates[1..] {
                    let v = input.data()[c];
                    if v > best_v {
                        best = c;
                        best_v = v;
                    }
                }
                out.data_mut()[obase + y * ow + x] = best_v;
                argmax[obase + y * ow + x] = best as u32;
            }
        }
    }
    (out, argmax)
}

/// Backward of [`maxpool2_forward`]: routes each gradient to the element
/// that produced the maximum.
pub fn maxpool2_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
    argmax: &[u32],
) -> Tensor<T> {
    debug_assert_eq!(grad_out.len(), argmax.len());
    let mut grad_in = Tensor::zeros(input_shape);
    for (g, &src) in grad_out.data().iter().zip(argmax) {
        grad_in.data_mut()[src as usize] += *g;
    }
    grad_in
}

/// Rectified linear unit, applied in place.
pub fn relu_forward<T: Scalar>(mut t: Tensor<T>) -> Tensor<T> {
    for v in t.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    t
}

/// Backward of [`relu_forward`] masked by the cached *output*: units that
/// were clamped (output zero) pass no gradient.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, mut grad_out: Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(output.shape(), grad_out.shape());
    for (g, &o) in grad_out.data_mut().iter_mut().zip(output.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
    grad_out
}

/// Channel-wise corner-aligned bilinear resize of `[c, h, w]` feature maps,
/// sharing positions and rounding with the heatmap resize so both paths
/// interpolate identically.
pub fn resize_bilinear_forward<T: Scalar>(
    input: &Tensor<T>,
    dst_h: usize,
    dst_w: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("resize expects [c, h, w], got {s:?}"),
    };
    let mut out = Tensor::zeros(&[c, dst_h, dst_w]);
    for ch in 0..c {
        let src = &input.data()[ch * h * w..(ch + 1) * h * w];
        let resized = crate::projection::resize_values(src, h, w, dst_h, dst_w)?;
        out.data_mut()[ch * dst_h * dst_w..(ch + 1) * dst_h * dst_w].copy_from_slice(&resized);
    }
    Ok(out)
}

/// Backward of [`resize_bilinear_forward`]: transposes the two separable
/// interpolation passes (rows first in the forward, so columns first here).
pub fn resize_bilinear_backward<T: Scalar>(
    src_h: usize,
    src_w: usize,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (c, dh, dw) = match *grad_out.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("resize grad expects [c, h, w], got {s:?}"),
    };
    let row_pos = interp_positions(src_h, dh);
    let col_pos = interp_positions(src_w, dw);
    let mut grad_in = Tensor::zeros(&[c, src_h, src_w]);
    // Intermediate gradient after undoing the column pass: [dh, src_w].
    let mut mid = vec![T::zero(); dh * src_w];
    for ch in 0..c {
        mid.fill(T::zero());
        let g = &grad_out.data()[ch * dh * dw..(ch + 1) * dh * dw];
        for r in 0..dh {
            for (j, &(j0, f)) in col_pos.iter().enumerate() {
                let gv = g[r * dw + j];
                if f == 0.0 {
                    mid[r * src_w + j0] += gv;
                } else {
                    let fv = T::from_f64(f);
                    mid[r * src_w + j0] += (T::one() - fv) * gv;
                    mid[r * src_w + j0 + 1] += fv * gv;
                }
            }
        }
        let dst = &mut grad_in.data_mut()[ch * src_h * src_w..(ch + 1) * src_h * src_w];
        for (i, &(i0, f)) in row_pos.iter().enumerate() {
            let mrow = &mid[i * src_w..(i + 1) * src_w];
            if f == 0.0 {
                for (d, &m) in dst[i0 * src_w..(i0 + 1) * src_w].iter_mut().zip(mrow) {
                    *d += m;
                }
            } else {
                let fv = T::from_f64(f);
                for (x, &m) in mrow.iter().enumerate() {
                    dst[i0 * src_w + x] += (T::one() - fv) * m;
                    dst[(i0 + 1) * src_w + x] += fv * m;
                }
            }
        }
    }
    grad_in
}

/// Concatenate feature maps along the channel axis; all parts must share
/// trailing dims.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty());
    let tail = &parts[0].shape()[1..];
    let mut channels = 0;
    for p in parts {
        assert_eq!(&p.shape()[1..], tail, "concat parts must share trailing dims");
        channels += p.shape()[0];
    }
    let mut shape = vec![channels];
    shape.extend_from_slice(tail);
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&shape, data)
}

/// Backward of [`concat_channels`]: split the gradient back into per-part
/// tensors with the given channel counts.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let tail = &grad.shape()[1..];
    let stride: usize = tail.iter().product();
    debug_assert_eq!(channels.iter().sum::<usize>(), grad.shape()[0]);
    let mut parts = Vec::with_capacity(channels.len());
    let mut offset = 0;
    for &c in channels {
        let mut shape = vec![c];
        shape.extend_from_slice(tail);
        let data = grad.data()[offset * stride..(offset + c) * stride].to_vec();
        parts.push(Tensor::from_vec(&shape, data));
        offset += c;
    }
    parts
}

/// Softmax over the leading (class) axis of `[k, h, w]` logits.
pub fn softmax_forward<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (k, h, w) = match *logits.shape() {
        [k, h, w] => (k, h, w),
        ref s => panic!("softmax expects [k, h, w], got {s:?}"),
    };
    let plane = h * w;
    let mut out = Tensor::zeros(logits.shape());
    for p in 0..plane {
        let mut m = logits.data()[p];
        for c in 1..k {
            m = m.max(logits.data()[c * plane + p]);
        }
        let mut sum = T::zero();
        for c in 0..k {
            let e = (logits.data()[c * plane + p] - m).exp();
            out.data_mut()[c * plane + p] = e;
            sum += e;
        }
        for c in 0..k {
            out.data_mut()[c * plane + p] = out.data()[c * plane + p] / sum;
        }
    }
    out
}

/// Backward of [`softmax_forward`] given cached probabilities:
/// `d logit_k = p_k (g_k − Σ_j p_j g_j)` per pixel.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_probs: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(probs.shape(), grad_probs.shape());
    let (k, h, w) = match *probs.shape() {
        [k, h, w] => (k, h, w),
        ref s => panic!("softmax grad expects [k, h, w], got {s:?}"),
    };
    let plane = h * w;
    let mut grad = Tensor::zeros(probs.shape());
    for p in 0..plane {
        let mut inner = T::zero();
        for c in 0..k {
            inner += probs.data()[c * plane + p] * grad_probs.data()[c * plane + p];
        }
        for c in 0..k {
            let idx = c * plane + p;
            grad.data_mut()[idx] = probs.data()[idx] * (grad_probs.data()[idx] - inner);
        }
    }
    grad
}
