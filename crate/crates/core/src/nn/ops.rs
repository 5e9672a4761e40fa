//! Raw tensor kernels over the channel-major layout.
//!
//! A spatial activation of `batch` images with `c` channels of `h x w` pixels
//! is an `(c, batch * h * w)` matrix; column `(b * h + y) * w + x`.

use ndarray::{Array1, Array2};

/// Unfolds `k x k` patches (stride 1, zero padding `pad`) into columns.
///
/// Output rows are ordered `(channel, ky, kx)`, matching a weight matrix of
/// shape `(c_out, c_in * k * k)`.
pub fn im2col(input: &Array2<f64>, batch: usize, h: usize, w: usize, k: usize, pad: usize) -> Array2<f64> {
    let c = input.nrows();
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let mut cols = Array2::zeros((c * k * k, batch * ho * wo));
    let src = input.as_standard_layout();
    let src = src.as_slice().unwrap();
    let stride = batch * h * w;
    {
        let dst = cols.as_slice_mut().unwrap();
        let ncol = batch * ho * wo;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let out = &mut dst[row * ncol..(row + 1) * ncol];
                    for b in 0..batch {
                        for y in 0..ho {
                            let sy = y + ky;
                            if sy < pad || sy - pad >= h {
                                continue;
                            }
                            let sy = sy - pad;
                            let base_in = ci * stride + (b * h + sy) * w;
                            let base_out = (b * ho + y) * wo;
                            for x in 0..wo {
                                let sx = x + kx;
                                if sx >= pad && sx - pad < w {
                                    out[base_out + x] = src[base_in + sx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates columns back into an image tensor.
pub fn col2im(cols: &Array2<f64>, c: usize, batch: usize, h: usize, w: usize, k: usize, pad: usize) -> Array2<f64> {
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let ncol = batch * ho * wo;
    let mut out = Array2::zeros((c, batch * h * w));
    let src = cols.as_standard_layout();
    let src = src.as_slice().unwrap();
    let stride = batch * h * w;
    let dst = out.as_slice_mut().unwrap();
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let col = &src[row * ncol..(row + 1) * ncol];
                for b in 0..batch {
                    for y in 0..ho {
                        let sy = y + ky;
                        if sy < pad || sy - pad >= h {
                            continue;
                        }
                        let base_out = ci * stride + (b * h + sy - pad) * w;
                        let base_in = (b * ho + y) * wo;
                        for x in 0..wo {
                            let sx = x + kx;
                            if sx >= pad && sx - pad < w {
                                dst[base_out + sx - pad] += col[base_in + x];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and, per output
/// element, the flat index of the winning input element (first maximum wins).
pub fn max_pool2(input: &Array2<f64>, batch: usize, h: usize, w: usize) -> (Array2<f64>, Vec<u32>) {
    let c = input.nrows();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array2::zeros((c, batch * ho * wo));
    let mut arg = vec![0u32; c * batch * ho * wo];
    let src = input.as_standard_layout();
    let src = src.as_slice().unwrap();
    let dst = out.as_slice_mut().unwrap();
    let (in_stride, out_stride) = (batch * h * w, batch * ho * wo);
    for ci in 0..c {
        for b in 0..batch {
            for y in 0..ho {
                for x in 0..wo {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let i = ci * in_stride + (b * h + 2 * y + dy) * w + 2 * x + dx;
                            if best == usize::MAX || src[i] > best_v {
                                best = i;
                                best_v = src[i];
                            }
                        }
                    }
                    let o = ci * out_stride + (b * ho + y) * wo + x;
                    dst[o] = best_v;
                    arg[o] = best as u32;
                }
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward(d_out: &Array2<f64>, arg: &[u32], in_cols: usize) -> Array2<f64> {
    let mut d_in = Array2::zeros((d_out.nrows(), in_cols));
    let src = d_out.as_standard_layout();
    let dst = d_in.as_slice_mut().unwrap();
    for (g, &i) in src.iter().zip(arg) {
        dst[i as usize] += g;
    }
    d_in
}

/// `[start, end)` source range of adaptive pooling cell `i` (`n` inputs, `m` cells).
fn adaptive_range(i: usize, n: usize, m: usize) -> (usize, usize) {
    ((i * n) / m, ((i + 1) * n).div_ceil(m))
}

/// Adaptive average pooling of every `h x w` map onto a `gh x gw` grid.
pub fn adaptive_avg_pool(input: &Array2<f64>, batch: usize, h: usize, w: usize, gh: usize, gw: usize) -> Array2<f64> {
    let c = input.nrows();
    let mut out = Array2::zeros((c, batch * gh * gw));
    for ci in 0..c {
        for b in 0..batch {
            for gy in 0..gh {
                let (y0, y1) = adaptive_range(gy, h, gh);
                for gx in 0..gw {
                    let (x0, x1) = adaptive_range(gx, w, gw);
                    let mut s = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            s += input[[ci, (b * h + y) * w + x]];
                        }
                    }
                    out[[ci, (b * gh + gy) * gw + gx]] = s / ((y1 - y0) * (x1 - x0)) as f64;
                }
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward(
    d_out: &Array2<f64>,
    batch: usize,
    h: usize,
    w: usize,
    gh: usize,
    gw: usize,
) -> Array2<f64> {
    let c = d_out.nrows();
    let mut d_in = Array2::zeros((c, batch * h * w));
    for ci in 0..c {
        for b in 0..batch {
            for gy in 0..gh {
                let (y0, y1) = adaptive_range(gy, h, gh);
                for gx in 0..gw {
                    let (x0, x1) = adaptive_range(gx, w, gw);
                    let g = d_out[[ci, (b * gh + gy) * gw + gx]] / ((y1 - y0) * (x1 - x0)) as f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            d_in[[ci, (b * h + y) * w + x]] += g;
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// `(c, batch * hw)` spatial layout to `(c * hw, batch)` feature columns.
pub fn flatten(input: &Array2<f64>, batch: usize, hw: usize) -> Array2<f64> {
    let c = input.nrows();
    Array2::from_shape_fn((c * hw, batch), |(f, b)| input[[f / hw, b * hw + f % hw]])
}

pub fn unflatten(input: &Array2<f64>, c: usize, batch: usize, hw: usize) -> Array2<f64> {
    Array2::from_shape_fn((c, batch * hw), |(ci, col)| input[[ci * hw + col % hw, col / hw]])
}

pub fn add_bias(m: &mut Array2<f64>, bias: &Array1<f64>) {
    for (mut row, &b) in m.rows_mut().into_iter().zip(bias) {
        row.mapv_inplace(|v| v + b);
    }
}

/// Column-wise softmax of `(classes, batch)` logits.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut col in p.columns_mut() {
        let max = col.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        col.mapv_inplace(|v| (v - max).exp());
        let s = col.sum();
        col.mapv_inplace(|v| v / s);
    }
    p
}
