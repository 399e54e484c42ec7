//! Forward and backward kernels for every layer kind.

use super::{output_shape, LayerSpec, Network, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-layer state captured on the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Input(Tensor),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    DropoutMask(Vec<f64>),
    None,
}

/// Begin-padding per axis for Same; Valid pads nothing.
fn pad_begin(n: usize, f: usize, s: usize, out: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => {
            let total = ((out - 1) * s + f).saturating_sub(n);
            total / 2
        }
    }
}

fn conv3d_fwd(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: (usize, usize, usize),
    padding: Padding,
    out_shape: &[usize],
) -> Tensor {
    let (h, wd, c, t) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (fh, fw, ft) = (w.shape[0], w.shape[1], w.shape[2]);
    let d = w.shape[4];
    let (oh, ow, ot) = (out_shape[0], out_shape[1], out_shape[3]);
    let ph = pad_begin(h, fh, stride.0, oh, padding);
    let pw = pad_begin(wd, fw, stride.1, ow, padding);
    let pt = pad_begin(t, ft, stride.2, ot, padding);
    let mut out = Tensor::zeros(out_shape);
    let mut acc = vec![0.0f64; d];
    for y in 0..oh {
        for xo in 0..ow {
            for to in 0..ot {
                acc.copy_from_slice(&b.data);
                for kh in 0..fh {
                    let iy = (y * stride.0 + kh) as isize - ph as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kw in 0..fw {
                        let ix = (xo * stride.1 + kw) as isize - pw as isize;
                        if ix < 0 || ix as usize >= wd {
                            continue;
                        }
                        for kt in 0..ft {
                            let it = (to * stride.2 + kt) as isize - pt as isize;
                            if it < 0 || it as usize >= t {
                                continue;
                            }
                            for ch in 0..c {
                                let xv = x.data
                                    [((iy as usize * wd + ix as usize) * c + ch) * t + it as usize];
                                let wbase = (((kh * fw + kw) * ft + kt) * c + ch) * d;
                                for (a, &wv) in acc.iter_mut().zip(&w.data[wbase..wbase + d]) {
                                    *a += xv * wv;
                                }
                            }
                        }
                    }
                }
                for dd in 0..d {
                    out.data[((y * ow + xo) * d + dd) * ot + to] = acc[dd];
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3d_bwd(
    x: &Tensor,
    w: &Tensor,
    stride: (usize, usize, usize),
    padding: Padding,
    gout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (h, wd, c, t) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (fh, fw, ft) = (w.shape[0], w.shape[1], w.shape[2]);
    let d = w.shape[4];
    let (oh, ow, ot) = (gout.shape[0], gout.shape[1], gout.shape[3]);
    let ph = pad_begin(h, fh, stride.0, oh, padding);
    let pw = pad_begin(wd, fw, stride.1, ow, padding);
    let pt = pad_begin(t, ft, stride.2, ot, padding);
    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = Tensor::zeros(&[d]);
    let mut g = vec![0.0f64; d];
    for y in 0..oh {
        for xo in 0..ow {
            for to in 0..ot {
                for (dd, gv) in g.iter_mut().enumerate() {
                    *gv = gout.data[((y * ow + xo) * d + dd) * ot + to];
                    db.data[dd] += *gv;
                }
                for kh in 0..fh {
                    let iy = (y * stride.0 + kh) as isize - ph as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kw in 0..fw {
                        let ix = (xo * stride.1 + kw) as isize - pw as isize;
                        if ix < 0 || ix as usize >= wd {
                            continue;
                        }
                        for kt in 0..ft {
                            let it = (to * stride.2 + kt) as isize - pt as isize;
                            if it < 0 || it as usize >= t {
                                continue;
                            }
                            for ch in 0..c {
                                let xi = ((iy as usize * wd + ix as usize) * c + ch) * t
                                    + it as usize;
                                let xv = x.data[xi];
                                let wbase = (((kh * fw + kw) * ft + kt) * c + ch) * d;
                                let mut acc = 0.0;
                                for dd in 0..d {
                                    dw.data[wbase + dd] += xv * g[dd];
                                    acc += w.data[wbase + dd] * g[dd];
                                }
                                dx.data[xi] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn conv2d_fwd(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: (usize, usize),
    padding: Padding,
    out_shape: &[usize],
) -> Tensor {
    let (h, wd, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (fh, fw) = (w.shape[0], w.shape[1]);
    let d = w.shape[3];
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let ph = pad_begin(h, fh, stride.0, oh, padding);
    let pw = pad_begin(wd, fw, stride.1, ow, padding);
    let mut out = Tensor::zeros(out_shape);
    let mut acc = vec![0.0f64; d];
    for y in 0..oh {
        for xo in 0..ow {
            acc.copy_from_slice(&b.data);
            for kh in 0..fh {
                let iy = (y * stride.0 + kh) as isize - ph as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                for kw in 0..fw {
                    let ix = (xo * stride.1 + kw) as isize - pw as isize;
                    if ix < 0 || ix as usize >= wd {
                        continue;
                    }
                    for ch in 0..c {
                        let xv = x.data[(iy as usize * wd + ix as usize) * c + ch];
                        let wbase = ((kh * fw + kw) * c + ch) * d;
                        for (a, &wv) in acc.iter_mut().zip(&w.data[wbase..wbase + d]) {
                            *a += xv * wv;
                        }
                    }
                }
            }
            for dd in 0..d {
                out.data[(y * ow + xo) * d + dd] = acc[dd];
            }
        }
    }
    out
}

fn conv2d_bwd(
    x: &Tensor,
    w: &Tensor,
    stride: (usize, usize),
    padding: Padding,
    gout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (h, wd, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (fh, fw) = (w.shape[0], w.shape[1]);
    let d = w.shape[3];
    let (oh, ow) = (gout.shape[0], gout.shape[1]);
    let ph = pad_begin(h, fh, stride.0, oh, padding);
    let pw = pad_begin(wd, fw, stride.1, ow, padding);
    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = Tensor::zeros(&[d]);
    for y in 0..oh {
        for xo in 0..ow {
            let gbase = (y * ow + xo) * d;
            let g = &gout.data[gbase..gbase + d];
            for (dd, gv) in g.iter().enumerate() {
                db.data[dd] += gv;
            }
            for kh in 0..fh {
                let iy = (y * stride.0 + kh) as isize - ph as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                for kw in 0..fw {
                    let ix = (xo * stride.1 + kw) as isize - pw as isize;
                    if ix < 0 || ix as usize >= wd {
                        continue;
                    }
                    for ch in 0..c {
                        let xi = (iy as usize * wd + ix as usize) * c + ch;
                        let xv = x.data[xi];
                        let wbase = ((kh * fw + kw) * c + ch) * d;
                        let mut acc = 0.0;
                        for dd in 0..d {
                            dw.data[wbase + dd] += xv * g[dd];
                            acc += w.data[wbase + dd] * g[dd];
                        }
                        dx.data[xi] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn maxpool3d_fwd(
    x: &Tensor,
    window: (usize, usize, usize),
    stride: (usize, usize, usize),
    out_shape: &[usize],
) -> (Tensor, Vec<usize>) {
    let (_h, wd, c, t) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (oh, ow, ot) = (out_shape[0], out_shape[1], out_shape[3]);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.numel()];
    for y in 0..oh {
        for xo in 0..ow {
            for ch in 0..c {
                for to in 0..ot {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0usize;
                    for kh in 0..window.0 {
                        for kw in 0..window.1 {
                            for kt in 0..window.2 {
                                let i = ((y * stride.0 + kh) * wd + xo * stride.1 + kw) * c * t
                                    + ch * t
                                    + to * stride.2
                                    + kt;
                                // Strict >: ties keep the first scan position.
                                if x.data[i] > best {
                                    best = x.data[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let oi = ((y * ow + xo) * c + ch) * ot + to;
                    out.data[oi] = best;
                    argmax[oi] = best_i;
                }
            }
        }
    }
    (out, argmax)
}

fn maxpool2d_fwd(
    x: &Tensor,
    window: (usize, usize),
    stride: (usize, usize),
    out_shape: &[usize],
) -> (Tensor, Vec<usize>) {
    let (_h, wd, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.numel()];
    for y in 0..oh {
        for xo in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                for kh in 0..window.0 {
                    for kw in 0..window.1 {
                        let i = ((y * stride.0 + kh) * wd + xo * stride.1 + kw) * c + ch;
                        if x.data[i] > best {
                            best = x.data[i];
                            best_i = i;
                        }
                    }
                }
                let oi = (y * ow + xo) * c + ch;
                out.data[oi] = best;
                argmax[oi] = best_i;
            }
        }
    }
    (out, argmax)
}

/// Channel index a flat position belongs to, per the PReLU slope layout.
#[inline]
fn prelu_channel(shape: &[usize], idx: usize) -> usize {
    match shape.len() {
        4 => (idx / shape[3]) % shape[2],
        3 => idx % shape[2],
        _ => idx,
    }
}

fn run(
    net: &Network,
    input: &Tensor,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<Cache>, Tensor)> {
    if input.shape != net.config.input_shape {
        return Err(Error::DimensionMismatch(format!(
            "input shape {:?} but the network expects {:?}",
            input.shape, net.config.input_shape
        )));
    }
    let mut caches = Vec::with_capacity(net.layers.len());
    let mut x = input.clone();
    for layer in &net.layers {
        let out_shape = output_shape(&layer.spec, &x.shape)?;
        let (cache, y) = match layer.spec {
            LayerSpec::Conv3D { stride, padding, .. } => {
                let y =
                    conv3d_fwd(&x, &layer.params[0], &layer.params[1], stride, padding, &out_shape);
                (Cache::Input(x), y)
            }
            LayerSpec::Conv2D { stride, padding, .. } => {
                let y =
                    conv2d_fwd(&x, &layer.params[0], &layer.params[1], stride, padding, &out_shape);
                (Cache::Input(x), y)
            }
            LayerSpec::MaxPool3D { window, stride } => {
                let (y, argmax) = maxpool3d_fwd(&x, window, stride, &out_shape);
                (Cache::Pool { input_shape: x.shape, argmax }, y)
            }
            LayerSpec::MaxPool2D { window, stride } => {
                let (y, argmax) = maxpool2d_fwd(&x, window, stride, &out_shape);
                (Cache::Pool { input_shape: x.shape, argmax }, y)
            }
            LayerSpec::FullyConnected { out } => {
                let w = &layer.params[0];
                let b = &layer.params[1];
                let n = x.numel();
                let mut y = Tensor::zeros(&[out]);
                y.data.copy_from_slice(&b.data);
                for i in 0..n {
                    let xv = x.data[i];
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &w.data[i * out..(i + 1) * out];
                    for (yv, &wv) in y.data.iter_mut().zip(wrow) {
                        *yv += xv * wv;
                    }
                }
                (Cache::Input(x), y)
            }
            LayerSpec::PReLU => {
                let a = &layer.params[0];
                let mut y = x.clone();
                for (i, v) in y.data.iter_mut().enumerate() {
                    if *v < 0.0 {
                        *v *= a.data[prelu_channel(&x.shape, i)];
                    }
                }
                (Cache::Input(x), y)
            }
            LayerSpec::Dropout { ratio } => match dropout_rng.as_deref_mut() {
                Some(rng) => {
                    let keep = 1.0 - ratio;
                    let mask: Vec<f64> = (0..x.numel())
                        .map(|_| if rng.gen::<f64>() < ratio { 0.0 } else { 1.0 / keep })
                        .collect();
                    let mut y = x;
                    for (v, m) in y.data.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    (Cache::DropoutMask(mask), y)
                }
                None => (Cache::None, x),
            },
        };
        caches.push(cache);
        x = y;
    }
    Ok((caches, x))
}

/// Eval-mode forward pass: dropout disabled, returns class logits.
pub fn forward(net: &Network, input: &Tensor) -> Result<Vec<f64>> {
    run(net, input, None).map(|(_, y)| y.data)
}

/// Train-mode forward pass; `rng` drives the dropout masks.
pub fn forward_train(
    net: &Network,
    input: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Cache>, Vec<f64>)> {
    run(net, input, Some(rng)).map(|(c, y)| (c, y.data))
}

/// Backpropagates `dlogits` through the cached forward pass. Returns the
/// input gradient and per-layer parameter gradients (same nesting as
/// `Network::layers[i].params`).
pub fn backward(
    net: &Network,
    caches: &[Cache],
    dlogits: &[f64],
) -> Result<(Tensor, Vec<Vec<Tensor>>)> {
    let mut grads: Vec<Vec<Tensor>> = vec![Vec::new(); net.layers.len()];
    let mut g = Tensor {
        shape: vec![dlogits.len()],
        data: dlogits.to_vec(),
    };
    for (li, layer) in net.layers.iter().enumerate().rev() {
        let cache = &caches[li];
        g = match (&layer.spec, cache) {
            (LayerSpec::Conv3D { stride, padding, .. }, Cache::Input(x)) => {
                let (dx, dw, db) = conv3d_bwd(x, &layer.params[0], *stride, *padding, &g);
                grads[li] = vec![dw, db];
                dx
            }
            (LayerSpec::Conv2D { stride, padding, .. }, Cache::Input(x)) => {
                let (dx, dw, db) = conv2d_bwd(x, &layer.params[0], *stride, *padding, &g);
                grads[li] = vec![dw, db];
                dx
            }
            (LayerSpec::MaxPool3D { .. } | LayerSpec::MaxPool2D { .. }, Cache::Pool { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape);
                for (oi, &ii) in argmax.iter().enumerate() {
                    dx.data[ii] += g.data[oi];
                }
                dx
            }
            (LayerSpec::FullyConnected { out }, Cache::Input(x)) => {
                let w = &layer.params[0];
                let n = x.numel();
                let mut dw = Tensor::zeros(&w.shape);
                let mut dx = Tensor::zeros(&x.shape);
                for i in 0..n {
                    let xv = x.data[i];
                    let wrow = &w.data[i * out..(i + 1) * out];
                    let dwrow = &mut dw.data[i * out..(i + 1) * out];
                    let mut acc = 0.0;
                    for j in 0..*out {
                        dwrow[j] += xv * g.data[j];
                        acc += wrow[j] * g.data[j];
                    }
                    dx.data[i] = acc;
                }
                let db = Tensor { shape: vec![*out], data: g.data.clone() };
                grads[li] = vec![dw, db];
                dx
            }
            (LayerSpec::PReLU, Cache::Input(x)) => {
                let a = &layer.params[0];
                let mut da = Tensor::zeros(&a.shape);
                let mut dx = g;
                for (i, v) in dx.data.iter_mut().enumerate() {
                    let xv = x.data[i];
                    if xv < 0.0 {
                        let c = prelu_channel(&x.shape, i);
                        da.data[c] += *v * xv;
                        *v *= a.data[c];
                    }
                }
                dx.shape = x.shape.clone();
                grads[li] = vec![da];
                dx
            }
            (LayerSpec::Dropout { .. }, Cache::DropoutMask(mask)) => {
                let mut dx = g;
                for (v, m) in dx.data.iter_mut().zip(mask) {
                    *v *= m;
                }
                dx
            }
            (LayerSpec::Dropout { .. }, Cache::None) => g,
            _ => return Err(Error::InvalidInput("cache does not match the layer stack".into())),
        };
    }
    Ok((g, grads))
}
