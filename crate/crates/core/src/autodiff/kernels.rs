//! Batch kernels behind the graph operations.
//!
//! The convolution loops are organized as shifted row AXPYs so the inner
//! loops stay contiguous; rayon splits work across output planes, which
//! keeps every float written by exactly one thread and the reduction order
//! fixed (backward stays bit-reproducible).

use rayon::prelude::*;

use super::scalar::Element;

/// y[n,o,:,:] = b[o] + sum_c x[n,c]  *  w[o,c]  (3x3, stride 1, zero pad 1)
pub fn conv3x3_forward<R: Element>(
    x: &[R],
    w: &[R],
    b: &[R],
    _n: usize,
    c_in: usize,
    h: usize,
    wd: usize,
    c_out: usize,
    out: &mut [R],
) {
    let plane = h * wd;
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, op)| {
        let (ni, oi) = (idx / c_out, idx % c_out);
        op.fill(b[oi]);
        for ci in 0..c_in {
            let xbase = (ni * c_in + ci) * plane;
            let wbase = (oi * c_in + ci) * 9;
            for dy in 0..3usize {
                for dx in 0..3usize {
                    let wv = w[wbase + dy * 3 + dx];
                    if wv == R::zero() {
                        continue;
                    }
                    // out[y][x] += wv * in[y+dy-1][x+dx-1]
                    for y in 0..h {
                        let sy = y as isize + dy as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let (x0, x1) = shifted_range(wd, dx);
                        let off = dx as isize - 1;
                        let s0 = (x0 as isize + off) as usize;
                        let src = &x[xbase + sy as usize * wd + s0..][..x1 - x0];
                        let dst = &mut op[y * wd + x0..][..x1 - x0];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * *s;
                        }
                    }
                }
            }
        }
    });
}

/// Valid output-column range for a kernel column offset `dx` in {0,1,2}.
#[inline]
fn shifted_range(wd: usize, dx: usize) -> (usize, usize) {
    match dx {
        0 => (1, wd),     // reads x-1
        1 => (0, wd),     // reads x
        _ => (0, wd - 1), // reads x+1
    }
}

/// Gradient of [`conv3x3_forward`] w.r.t. the input, accumulated into `dx_out`.
pub fn conv3x3_backward_input<R: Element>(
    w: &[R],
    g: &[R],
    _n: usize,
    c_in: usize,
    h: usize,
    wd: usize,
    c_out: usize,
    dx_out: &mut [R],
) {
    let plane = h * wd;
    dx_out
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dxp)| {
            let (ni, ci) = (idx / c_in, idx % c_in);
            for oi in 0..c_out {
                let gbase = (ni * c_out + oi) * plane;
                let wbase = (oi * c_in + ci) * 9;
                for dy in 0..3usize {
                    for dxk in 0..3usize {
                        let wv = w[wbase + dy * 3 + dxk];
                        if wv == R::zero() {
                            continue;
                        }
                        for y in 0..h {
                            let sy = y as isize + dy as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let (x0, x1) = shifted_range(wd, dxk);
                            let off = dxk as isize - 1;
                            let s0 = (x0 as isize + off) as usize;
                            let grow = &g[gbase + y * wd + x0..][..x1 - x0];
                            let drow = &mut dxp[sy as usize * wd + s0..][..x1 - x0];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += wv * *gv;
                            }
                        }
                    }
                }
            }
        });
}

/// Gradients of [`conv3x3_forward`] w.r.t. weights and bias.
pub fn conv3x3_backward_params<R: Element>(
    x: &[R],
    g: &[R],
    n: usize,
    c_in: usize,
    h: usize,
    wd: usize,
    c_out: usize,
    dw_out: &mut [R],
    db_out: &mut [R],
) {
    let plane = h * wd;
    dw_out
        .par_chunks_mut(c_in * 9)
        .zip(db_out.par_iter_mut())
        .enumerate()
        .for_each(|(oi, (dwp, dbp))| {
            let mut db_acc = 0.0f64;
            for ni in 0..n {
                let gbase = (ni * c_out + oi) * plane;
                for v in &g[gbase..gbase + plane] {
                    db_acc += v.as_f64();
                }
                for ci in 0..c_in {
                    let xbase = (ni * c_in + ci) * plane;
                    for dy in 0..3usize {
                        for dxk in 0..3usize {
                            let mut acc = 0.0f64;
                            for y in 0..h {
                                let sy = y as isize + dy as isize - 1;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                let (x0, x1) = shifted_range(wd, dxk);
                                let off = dxk as isize - 1;
                                let s0 = (x0 as isize + off) as usize;
                                let grow = &g[gbase + y * wd + x0..][..x1 - x0];
                                let xrow = &x[xbase + sy as usize * wd + s0..][..x1 - x0];
                                let mut row_acc = R::zero();
                                for (gv, xv) in grow.iter().zip(xrow) {
                                    row_acc += *gv * *xv;
                                }
                                acc += row_acc.as_f64();
                            }
                            dwp[ci * 9 + dy * 3 + dxk] += R::from_f64(acc);
                        }
                    }
                }
            }
            *dbp += R::from_f64(db_acc);
        });
}

/// y[n,o,p] = b[o] + sum_c w[o,c] * x[n,c,p]
pub fn conv1x1_forward<R: Element>(
    x: &[R],
    w: &[R],
    b: &[R],
    _n: usize,
    c_in: usize,
    plane: usize,
    c_out: usize,
    out: &mut [R],
) {
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, op)| {
        let (ni, oi) = (idx / c_out, idx % c_out);
        op.fill(b[oi]);
        for ci in 0..c_in {
            let wv = w[oi * c_in + ci];
            let src = &x[(ni * c_in + ci) * plane..][..plane];
            for (d, s) in op.iter_mut().zip(src) {
                *d += wv * *s;
            }
        }
    });
}

pub fn conv1x1_backward_input<R: Element>(
    w: &[R],
    g: &[R],
    _n: usize,
    c_in: usize,
    plane: usize,
    c_out: usize,
    dx_out: &mut [R],
) {
    dx_out
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dxp)| {
            let (ni, ci) = (idx / c_in, idx % c_in);
            for oi in 0..c_out {
                let wv = w[oi * c_in + ci];
                let grow = &g[(ni * c_out + oi) * plane..][..plane];
                for (d, gv) in dxp.iter_mut().zip(grow) {
                    *d += wv * *gv;
                }
            }
        });
}

pub fn conv1x1_backward_params<R: Element>(
    x: &[R],
    g: &[R],
    n: usize,
    c_in: usize,
    plane: usize,
    c_out: usize,
    dw_out: &mut [R],
    db_out: &mut [R],
) {
    dw_out
        .par_chunks_mut(c_in)
        .zip(db_out.par_iter_mut())
        .enumerate()
        .for_each(|(oi, (dwp, dbp))| {
            let mut db_acc = 0.0f64;
            for ni in 0..n {
                let grow = &g[(ni * c_out + oi) * plane..][..plane];
                for v in grow {
                    db_acc += v.as_f64();
                }
                for ci in 0..c_in {
                    let xrow = &x[(ni * c_in + ci) * plane..][..plane];
                    let mut acc = 0.0f64;
                    for (gv, xv) in grow.iter().zip(xrow) {
                        acc += (*gv * *xv).as_f64();
                    }
                    dwp[ci] += R::from_f64(acc);
                }
            }
            *dbp += R::from_f64(db_acc);
        });
}

/// y = x @ w + b for x: (m,k), w: (k,nc), b: (nc)
pub fn affine_forward<R: Element>(
    x: &[R],
    w: &[R],
    b: &[R],
    m: usize,
    k: usize,
    nc: usize,
    out: &mut [R],
) {
    let body = |(row, orow): (usize, &mut [R])| {
        orow.copy_from_slice(b);
        let xrow = &x[row * k..][..k];
        for (ki, &xv) in xrow.iter().enumerate() {
            if xv == R::zero() {
                continue;
            }
            let wrow = &w[ki * nc..][..nc];
            for (o, wv) in orow.iter_mut().zip(wrow) {
                *o += xv * *wv;
            }
        }
    };
    if m >= 32 {
        out.par_chunks_mut(nc).enumerate().for_each(body);
    } else {
        out.chunks_mut(nc).enumerate().for_each(body);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nested-loop reference convolution, the independent oracle.
    fn conv3x3_naive(
        x: &[f64],
        w: &[f64],
        b: &[f64],
        n: usize,
        c_in: usize,
        h: usize,
        wd: usize,
        c_out: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; n * c_out * h * wd];
        for ni in 0..n {
            for oi in 0..c_out {
                for y in 0..h {
                    for xi in 0..wd {
                        let mut acc = b[oi];
                        for ci in 0..c_in {
                            for dy in 0..3isize {
                                for dx in 0..3isize {
                                    let sy = y as isize + dy - 1;
                                    let sx = xi as isize + dx - 1;
                                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= wd as isize {
                                        continue;
                                    }
                                    acc += w[((oi * c_in + ci) * 3 + dy as usize) * 3
                                        + dx as usize]
                                        * x[((ni * c_in + ci) * h + sy as usize) * wd
                                            + sx as usize];
                                }
                            }
                        }
                        out[((ni * c_out + oi) * h + y) * wd + xi] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv3x3_matches_naive_oracle() {
        let mut rng = crate::rng::stream_rng(11, "conv-test", 0);
        use rand::Rng;
        let (n, c_in, h, wd, c_out) = (2, 3, 5, 7, 4);
        let x: Vec<f64> = (0..n * c_in * h * wd).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..c_out * c_in * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut fast = vec![0.0; n * c_out * h * wd];
        conv3x3_forward(&x, &w, &b, n, c_in, h, wd, c_out, &mut fast);
        let slow = conv3x3_naive(&x, &w, &b, n, c_in, h, wd, c_out);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() <= 1e-12, "conv mismatch: {a} vs {e}");
        }
    }

    #[test]
    fn conv3x3_single_filter_on_1x5x5() {
        let mut rng = crate::rng::stream_rng(12, "conv-test", 1);
        use rand::Rng;
        let x: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = vec![0.25];
        let mut fast = vec![0.0; 25];
        conv3x3_forward(&x, &w, &b, 1, 1, 5, 5, 1, &mut fast);
        let slow = conv3x3_naive(&x, &w, &b, 1, 1, 5, 5, 1);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() <= 1e-12);
        }
    }
}
