//! Forward and backward kernels for each layer type.
//!
//! Batched work is split per sample with rayon; every reduction across
//! samples runs sequentially in sample order, so results do not depend on the
//! number of worker threads.

use rand::Rng;
use rayon::prelude::*;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

fn check_conv(
    x: &Tensor<impl Real>,
    w: &Tensor<impl Real>,
    b: &Tensor<impl Real>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, wd) = x.dims4()?;
    let (o, wc, kh, kw) = w.dims4()?;
    if wc != c {
        return Err(Error::ShapeMismatch(format!(
            "conv weight expects {wc} input channels, input has {c}"
        )));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::ShapeMismatch(format!(
            "conv kernel must be odd and square, got {kh}x{kw}"
        )));
    }
    if b.shape() != [o] {
        return Err(Error::ShapeMismatch(format!(
            "conv bias shape {:?}, expected [{o}]",
            b.shape()
        )));
    }
    Ok((n, c, h, wd, o, kh))
}

/// Unfolds one `[C, H, W]` sample into `[C·k·k, H·W]` columns with zero
/// "same" padding.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let r = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ch * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let lo = (-dx).max(0) as usize;
                    let hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    dst[..lo.min(w)].fill(T::zero());
                    if hi > lo {
                        let s0 = (lo as isize + dx) as usize;
                        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                    dst[hi.max(lo).min(w)..].fill(T::zero());
                }
            }
        }
    }
}

/// Inverse of [`im2col`]: scatter-adds columns back into a `[C, H, W]` sample.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx_out: &mut [T]) {
    let r = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dx_out[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ch * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let lo = (-dx).max(0) as usize;
                    let hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    if hi <= lo {
                        continue;
                    }
                    let s0 = (lo as isize + dx) as usize;
                    let src = &row[y * w + lo..y * w + hi];
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (hi - lo)];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Stride-1, zero "same"-padded cross-correlation.
/// `x: [N, C, H, W]`, `w: [O, C, k, k]`, `b: [O]` → `[N, O, H, W]`.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, wd, o, k) = check_conv(x, w, b)?;
    let hw = h * wd;
    let ckk = c * k * k;
    let mut out = vec![T::zero(); n * o * hw];
    out.par_chunks_mut(o * hw)
        .zip(x.data().par_chunks(c * hw))
        .for_each(|(out_n, x_n)| {
            let mut col = vec![T::zero(); ckk * hw];
            im2col(x_n, c, h, wd, k, &mut col);
            for oc in 0..o {
                let dst = &mut out_n[oc * hw..(oc + 1) * hw];
                dst.fill(b.data()[oc]);
                let wrow = &w.data()[oc * ckk..(oc + 1) * ckk];
                for (p, &wv) in wrow.iter().enumerate() {
                    if wv != T::zero() {
                        axpy(wv, &col[p * hw..(p + 1) * hw], dst);
                    }
                }
            }
        });
    Tensor::new(vec![n, o, h, wd], out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, wd, o, k) = check_conv(x, w, b)?;
    if dout.shape() != [n, o, h, wd] {
        return Err(Error::ShapeMismatch(format!(
            "conv upstream gradient {:?}, expected {:?}",
            dout.shape(),
            [n, o, h, wd]
        )));
    }
    let hw = h * wd;
    let ckk = c * k * k;
    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = x
        .data()
        .par_chunks(c * hw)
        .zip(dout.data().par_chunks(o * hw))
        .map(|(x_n, g_n)| {
            let mut col = vec![T::zero(); ckk * hw];
            im2col(x_n, c, h, wd, k, &mut col);
            let mut dw = vec![T::zero(); o * ckk];
            let mut db = vec![T::zero(); o];
            let mut dcol = vec![T::zero(); ckk * hw];
            for oc in 0..o {
                let g = &g_n[oc * hw..(oc + 1) * hw];
                db[oc] = g.iter().copied().sum();
                let wrow = &w.data()[oc * ckk..(oc + 1) * ckk];
                for p in 0..ckk {
                    let crow = &col[p * hw..(p + 1) * hw];
                    dw[oc * ckk + p] = dot(g, crow);
                    let wv = wrow[p];
                    if wv != T::zero() {
                        axpy(wv, g, &mut dcol[p * hw..(p + 1) * hw]);
                    }
                }
            }
            let mut dx = vec![T::zero(); c * hw];
            col2im(&dcol, c, h, wd, k, &mut dx);
            (dx, dw, db)
        })
        .collect();

    let mut dx = Vec::with_capacity(n * c * hw);
    let mut dw = vec![T::zero(); o * ckk];
    let mut db = vec![T::zero(); o];
    for (dx_n, dw_n, db_n) in per_sample {
        dx.extend_from_slice(&dx_n);
        for (a, v) in dw.iter_mut().zip(dw_n) {
            *a += v;
        }
        for (a, v) in db.iter_mut().zip(db_n) {
            *a += v;
        }
    }
    Ok((
        Tensor::new(vec![n, c, h, wd], dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![o], db)?,
    ))
}

/// 2×2, stride-2 max pooling. Returns the pooled tensor and, for each output
/// element, the flat input index it was taken from. Ties go to the first
/// element in row-major window order.
pub fn maxpool2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "max pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best_i = base + 2 * y * w + 2 * xx;
                let mut best = xd[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * xx + dx;
                    if xd[i] > best {
                        best = xd[i];
                        best_i = i;
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

pub fn maxpool2_backward<T: Real>(
    dout: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if dout.len() != argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "pool gradient has {} values for {} windows",
            dout.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dout.data()) {
        d[i] += g;
    }
    Ok(dx)
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Subgradient 0 at the origin.
pub fn relu_backward<T: Real>(x: &Tensor<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dout.shape() {
        return Err(Error::ShapeMismatch("relu gradient shape".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `p` and survivors are scaled by `1/(1-p)`; the returned mask
/// holds the per-element multiplier. Inference is the identity.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "dropout p must be in [0,1), got {p}"
        )));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(dout: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(dout.clone()),
        Some(m) if m.len() == dout.len() => {
            let data = dout.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::new(dout.shape().to_vec(), data)
        }
        Some(_) => Err(Error::ShapeMismatch("dropout mask length".into())),
    }
}

fn check_fc(
    x: &Tensor<impl Real>,
    w: &Tensor<impl Real>,
    b: &Tensor<impl Real>,
) -> Result<(usize, usize, usize)> {
    let (n, f) = x.dims2()?;
    let (o, wf) = w.dims2()?;
    if wf != f {
        return Err(Error::ShapeMismatch(format!(
            "fully connected layer expects {wf} features, input has {f}"
        )));
    }
    if b.shape() != [o] {
        return Err(Error::ShapeMismatch(format!(
            "fc bias shape {:?}, expected [{o}]",
            b.shape()
        )));
    }
    Ok((n, f, o))
}

/// `y = W x + b` per row; `x: [N, F]`, `w: [O, F]`, `b: [O]`.
pub fn fc_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, f, o) = check_fc(x, w, b)?;
    let mut out = Vec::with_capacity(n * o);
    for row in x.data().chunks(f) {
        for oc in 0..o {
            out.push(b.data()[oc] + dot(&w.data()[oc * f..(oc + 1) * f], row));
        }
    }
    Tensor::new(vec![n, o], out)
}

pub fn fc_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, f, o) = check_fc(x, w, b)?;
    if dout.shape() != [n, o] {
        return Err(Error::ShapeMismatch("fc upstream gradient shape".into()));
    }
    let mut dx = vec![T::zero(); n * f];
    let mut dw = vec![T::zero(); o * f];
    let mut db = vec![T::zero(); o];
    for s in 0..n {
        let xs = &x.data()[s * f..(s + 1) * f];
        let gs = &dout.data()[s * o..(s + 1) * o];
        for oc in 0..o {
            let g = gs[oc];
            db[oc] += g;
            axpy(g, xs, &mut dw[oc * f..(oc + 1) * f]);
            axpy(
                g,
                &w.data()[oc * f..(oc + 1) * f],
                &mut dx[s * f..(s + 1) * f],
            );
        }
    }
    Ok((
        Tensor::new(vec![n, f], dx)?,
        Tensor::new(vec![o, f], dw)?,
        Tensor::new(vec![o], db)?,
    ))
}
