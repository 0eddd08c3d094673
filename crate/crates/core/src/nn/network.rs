//! Layer specifications and the sequential corner-regression network.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::homography::CornerSet;
use crate::imaging::ImageBuffer;

/// Conv channel counts of the eleven convolutional layers at width 1.0.
pub const DEFAULT_CHANNELS: [usize; 11] = [32, 64, 128, 128, 256, 256, 256, 512, 512, 512, 256];
/// Kernel side of each convolutional layer.
pub const CONV_KERNELS: [usize; 11] = [5, 5, 3, 3, 3, 3, 3, 3, 3, 3, 1];
/// 1-based conv layers followed by 2×2 max pooling.
pub const POOL_AFTER: [usize; 5] = [1, 2, 3, 5, 7];
pub const OUTPUTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride 1, zero "same" padding.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    /// 2×2 window, stride 2.
    #[serde(rename = "maxpool")]
    MaxPool,
    Relu,
    Dropout {
        p: f64,
    },
    Flatten,
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    /// Fixed affine head mapping raw outputs to pixel coordinates of a
    /// `width×height` input: 0 is the image center, ±1 the outermost pixels.
    CornerScale {
        width: usize,
        height: usize,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. }
        )
    }

    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                kernel,
                ..
            } => Some(in_channels * kernel * kernel),
            LayerSpec::FullyConnected { in_features, .. } => Some(in_features),
            _ => None,
        }
    }

    /// Weight and bias shapes for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
            } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            )),
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    pub width_multiplier: f64,
    pub input: InputShape,
}

/// Scales a channel count and rounds to a multiple of 8 (at least 8).
pub fn scaled_channels(base: usize, width_multiplier: f64) -> usize {
    let v = (base as f64 * width_multiplier / 8.0).round() as usize * 8;
    v.max(8)
}

impl NetworkConfig {
    /// The eleven-conv architecture: 5×5 kernels on layers 1–2, 3×3 on 3–10,
    /// 1×1 on layer 11; ReLU after every conv except the last; 2×2 pooling
    /// after layers 1, 2, 3, 5 and 7; dropout(0.5) after the last conv; then a
    /// fully connected layer with eight outputs, read through a fixed
    /// [`LayerSpec::CornerScale`] head so outputs are pixel coordinates.
    pub fn paper(
        width_multiplier: f64,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        Self::with_channels(&DEFAULT_CHANNELS, width_multiplier, channels, height, width)
    }

    pub fn with_channels(
        schedule: &[usize; 11],
        width_multiplier: f64,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if !(width_multiplier > 0.0 && width_multiplier.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "width multiplier must be > 0, got {width_multiplier}"
            )));
        }
        let mut layers = Vec::new();
        let mut c_in = channels;
        let (mut h, mut w) = (height, width);
        for (i, (&base, &k)) in schedule.iter().zip(&CONV_KERNELS).enumerate() {
            let idx = i + 1;
            let out = scaled_channels(base, width_multiplier);
            layers.push(LayerSpec::Conv {
                in_channels: c_in,
                out_channels: out,
                kernel: k,
            });
            c_in = out;
            if idx < 11 {
                layers.push(LayerSpec::Relu);
            }
            if POOL_AFTER.contains(&idx) {
                layers.push(LayerSpec::MaxPool);
                h /= 2;
                w /= 2;
            }
        }
        layers.push(LayerSpec::Dropout { p: 0.5 });
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::FullyConnected {
            in_features: c_in * h * w,
            out_features: OUTPUTS,
        });
        layers.push(LayerSpec::CornerScale { width, height });
        let cfg = Self {
            layers,
            width_multiplier,
            input: InputShape {
                channels,
                height,
                width,
            },
        };
        cfg.output_shapes()?;
        Ok(cfg)
    }

    /// Per-sample output shape after each layer (`[C, H, W]` or `[F]`).
    /// Fails on any inconsistency, including a final size other than 8.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let InputShape {
            channels,
            height,
            width,
        } = self.input;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "input must have 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig("input dims must be positive".into()));
        }
        let mut cur = vec![channels, height, width];
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::InvalidConfig(format!("layer {i} ({layer:?}): {msg}"));
            cur = match (*layer, cur.as_slice()) {
                (
                    LayerSpec::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                    },
                    &[c, h, w],
                ) => {
                    if c != in_channels {
                        return Err(bad(format!("receives {c} channels")));
                    }
                    if kernel % 2 == 0 || out_channels == 0 {
                        return Err(bad("kernel must be odd, channels positive".into()));
                    }
                    vec![out_channels, h, w]
                }
                (LayerSpec::MaxPool, &[c, h, w]) => {
                    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
                        return Err(bad(format!("cannot pool odd or empty map {h}x{w}")));
                    }
                    vec![c, h / 2, w / 2]
                }
                (LayerSpec::Relu, s) => s.to_vec(),
                (LayerSpec::Dropout { p }, s) => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(bad(format!("dropout p={p} outside [0,1)")));
                    }
                    s.to_vec()
                }
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (
                    LayerSpec::FullyConnected {
                        in_features,
                        out_features,
                    },
                    &[f],
                ) => {
                    if f != in_features {
                        return Err(bad(format!("receives {f} features")));
                    }
                    vec![out_features]
                }
                (LayerSpec::CornerScale { width, height }, &[f]) => {
                    if f != OUTPUTS || width == 0 || height == 0 {
                        return Err(bad(format!("needs {OUTPUTS} features, receives {f}")));
                    }
                    vec![f]
                }
                (_, s) => return Err(bad(format!("incompatible input shape {s:?}"))),
            };
            shapes.push(cur.clone());
        }
        if cur != [OUTPUTS] {
            return Err(Error::InvalidConfig(format!(
                "network must end with {OUTPUTS} outputs, ends with {cur:?}"
            )));
        }
        Ok(shapes)
    }

    /// Shape entering the flatten layer, `[C, H, W]`.
    pub fn flatten_input_shape(&self) -> Result<Vec<usize>> {
        let shapes = self.output_shapes()?;
        let i = self
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Flatten))
            .ok_or_else(|| Error::InvalidConfig("no flatten layer".into()))?;
        Ok(if i == 0 {
            vec![self.input.channels, self.input.height, self.input.width]
        } else {
            shapes[i - 1].clone()
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.param_shapes())
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum()
    }
}

/// `(center, half_extent)` per axis `[x, y]` for the corner head.
pub fn corner_scale_coeffs<T: Real>(width: usize, height: usize) -> ([T; 2], [T; 2]) {
    let hx = T::lit(width.saturating_sub(1) as f64 / 2.0);
    let hy = T::lit(height.saturating_sub(1) as f64 / 2.0);
    ([hx, hy], [hx, hy])
}

/// Weight and bias of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// He-normal weights, `N(0, sqrt(2 / fan_in))`, and zero biases.
pub fn he_init<T: Real, R: Rng + ?Sized>(rng: &mut R, layer: &LayerSpec) -> Result<Params<T>> {
    let (ws, bs) = layer
        .param_shapes()
        .ok_or_else(|| Error::InvalidConfig(format!("{layer:?} has no parameters")))?;
    let fan_in = layer.fan_in().unwrap_or(1).max(1);
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
        .map_err(|e| Error::Internal(e.to_string()))?;
    let n: usize = ws.iter().product();
    let data = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
    Ok(Params {
        weight: Tensor::new(ws, data)?,
        bias: Tensor::zeros(bs),
    })
}

/// Intermediate values retained by a training forward pass.
#[derive(Debug)]
pub struct Trace<T> {
    inputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    output: Tensor<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

#[derive(Debug)]
enum Aux<T> {
    None,
    Argmax(Vec<usize>),
    Mask(Option<Vec<T>>),
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Vec<Option<Params<T>>>,
}

impl<T: Real> Network<T> {
    /// Builds the network with He-initialized parameters.
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        config.output_shapes()?;
        let params = config
            .layers
            .iter()
            .map(|l| {
                if l.has_params() {
                    he_init(rng, l).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, params })
    }

    /// Builds a network from explicit parameters, one entry per layer.
    pub fn from_params(config: NetworkConfig, params: Vec<Option<Params<T>>>) -> Result<Self> {
        config.output_shapes()?;
        if params.len() != config.layers.len() {
            return Err(Error::InvalidConfig(format!(
                "{} parameter slots for {} layers",
                params.len(),
                config.layers.len()
            )));
        }
        for (i, (l, p)) in config.layers.iter().zip(&params).enumerate() {
            match (l.param_shapes(), p) {
                (None, None) => {}
                (Some((ws, bs)), Some(p)) if p.weight.shape() == ws && p.bias.shape() == bs => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "parameters of layer {i} do not match {l:?}"
                    )))
                }
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Option<Params<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params<T>>] {
        &mut self.params
    }

    /// All parameter tensors in layer order (weight, then bias).
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.params
            .iter()
            .flatten()
            .flat_map(|p| [&p.weight, &p.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params
            .iter_mut()
            .flatten()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Params {
                        weight: p.weight.cast(),
                        bias: p.bias.cast(),
                    })
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let i = self.config.input;
        if (c, h, w) != (i.channels, i.height, i.width) {
            return Err(Error::ShapeMismatch(format!(
                "network expects [N, {}, {}, {}], got {:?}",
                i.channels,
                i.height,
                i.width,
                x.shape()
            )));
        }
        Ok(())
    }

    fn layer_forward<R: Rng + ?Sized>(
        &self,
        i: usize,
        x: &Tensor<T>,
        rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, Aux<T>)> {
        let layer = self.config.layers[i];
        Ok(match layer {
            LayerSpec::Conv { .. } => {
                let p = self.params[i].as_ref().expect("validated");
                (ops::conv2d_forward(x, &p.weight, &p.bias)?, Aux::None)
            }
            LayerSpec::FullyConnected { .. } => {
                let p = self.params[i].as_ref().expect("validated");
                (ops::fc_forward(x, &p.weight, &p.bias)?, Aux::None)
            }
            LayerSpec::MaxPool => {
                let (y, arg) = ops::maxpool2_forward(x)?;
                (y, Aux::Argmax(arg))
            }
            LayerSpec::Relu => (ops::relu_forward(x), Aux::None),
            LayerSpec::Dropout { p } => match rng {
                Some(r) => {
                    let (y, m) = ops::dropout_forward(x, p, r, true)?;
                    (y, Aux::Mask(m))
                }
                None => (x.clone(), Aux::Mask(None)),
            },
            LayerSpec::CornerScale { width, height } => {
                let (ctr, half) = corner_scale_coeffs::<T>(width, height);
                let mut y = x.clone();
                for (i, v) in y.data_mut().iter_mut().enumerate() {
                    *v = ctr[i % 2] + half[i % 2] * *v;
                }
                (y, Aux::None)
            }
            LayerSpec::Flatten => {
                let n = x.shape()[0];
                let f = x.len() / n.max(1);
                (x.clone().reshape(vec![n, f])?, Aux::None)
            }
        })
    }

    /// Inference forward pass (dropout disabled). `x: [N, C, H, W]` → `[N, 8]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for i in 0..self.config.layers.len() {
            cur = self
                .layer_forward::<rand_chacha::ChaCha8Rng>(i, &cur, None)?
                .0;
        }
        Ok(cur)
    }

    /// Training forward pass; keeps every layer input for [`Network::backward`].
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &Tensor<T>, rng: &mut R) -> Result<Trace<T>> {
        self.check_input(x)?;
        let n = self.config.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut aux = Vec::with_capacity(n);
        let mut cur = x.clone();
        for i in 0..n {
            let (y, a) = self.layer_forward(i, &cur, Some(&mut *rng))?;
            inputs.push(std::mem::replace(&mut cur, y));
            aux.push(a);
        }
        Ok(Trace {
            inputs,
            aux,
            output: cur,
        })
    }

    /// Back-propagates `dout` (gradient w.r.t. the network output). Returns
    /// gradients aligned with [`Network::tensors`] plus the input gradient.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        dout: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        if dout.shape() != trace.output.shape() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                dout.shape(),
                trace.output.shape()
            )));
        }
        let mut grads: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; self.config.layers.len()];
        let mut g = dout.clone();
        for i in (0..self.config.layers.len()).rev() {
            let x = &trace.inputs[i];
            g = match (self.config.layers[i], &trace.aux[i]) {
                (LayerSpec::Conv { .. }, _) => {
                    let p = self.params[i].as_ref().expect("validated");
                    let (dx, dw, db) = ops::conv2d_backward(x, &p.weight, &p.bias, &g)?;
                    grads[i] = Some((dw, db));
                    dx
                }
                (LayerSpec::FullyConnected { .. }, _) => {
                    let p = self.params[i].as_ref().expect("validated");
                    let (dx, dw, db) = ops::fc_backward(x, &p.weight, &p.bias, &g)?;
                    grads[i] = Some((dw, db));
                    dx
                }
                (LayerSpec::MaxPool, Aux::Argmax(arg)) => {
                    ops::maxpool2_backward(&g, arg, x.shape())?
                }
                (LayerSpec::Relu, _) => ops::relu_backward(x, &g)?,
                (LayerSpec::Dropout { .. }, Aux::Mask(m)) => {
                    ops::dropout_backward(&g, m.as_deref())?
                }
                (LayerSpec::Flatten, _) => g.reshape(x.shape().to_vec())?,
                (LayerSpec::CornerScale { width, height }, _) => {
                    let (_, half) = corner_scale_coeffs::<T>(width, height);
                    let mut dx = g;
                    for (i, v) in dx.data_mut().iter_mut().enumerate() {
                        *v *= half[i % 2];
                    }
                    dx
                }
                (l, _) => return Err(Error::Internal(format!("trace does not match layer {l:?}"))),
            };
        }
        let flat = grads
            .into_iter()
            .flatten()
            .flat_map(|(w, b)| [w, b])
            .collect();
        Ok((flat, g))
    }

    /// Predicts the four corners of a single image in pixel coordinates of
    /// the network input.
    pub fn predict(&self, img: &ImageBuffer) -> Result<CornerSet> {
        let x = image_to_tensor::<T>(img)?;
        let y = self.forward(&x)?;
        let v: Vec<f64> = y.data().iter().map(|v| v.as_f64()).collect();
        let arr: [f64; 8] = v
            .try_into()
            .map_err(|_| Error::ShapeMismatch("network did not return 8 values".into()))?;
        CornerSet::from_flat(arr)
    }
}

/// Converts an interleaved image into a `[1, C, H, W]` planar tensor.
pub fn image_to_tensor<T: Real>(img: &ImageBuffer) -> Result<Tensor<T>> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data();
    let mut data = vec![T::zero(); w * h * c];
    for (i, px) in src.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            data[ch * w * h + i] = T::lit(v as f64);
        }
    }
    Tensor::new(vec![1, c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_sequence() {
        let cfg = NetworkConfig::paper(1.0, 3, 256, 384).unwrap();
        let convs: Vec<usize> = cfg
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { kernel, .. } => Some(*kernel),
                _ => None,
            })
            .collect();
        assert_eq!(convs, CONV_KERNELS);
        let relus = cfg
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Relu))
            .count();
        assert_eq!(relus, 10);
        // dropout sits right after the 1x1 conv
        let last_conv = cfg
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Conv { .. }))
            .unwrap();
        assert!(matches!(cfg.layers[last_conv + 1], LayerSpec::Dropout { p } if p == 0.5));
    }

    #[test]
    fn pool_spatial_sizes() {
        let cfg = NetworkConfig::paper(1.0, 3, 256, 384).unwrap();
        let shapes = cfg.output_shapes().unwrap();
        let pooled: Vec<(usize, usize)> = cfg
            .layers
            .iter()
            .zip(&shapes)
            .filter(|(l, _)| matches!(l, LayerSpec::MaxPool))
            .map(|(_, s)| (s[2], s[1]))
            .collect();
        assert_eq!(
            pooled,
            vec![(192, 128), (96, 64), (48, 32), (24, 16), (12, 8)]
        );
        assert_eq!(cfg.flatten_input_shape().unwrap(), vec![256, 8, 12]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(NetworkConfig::paper(0.0, 3, 256, 384).is_err());
        assert!(NetworkConfig::paper(1.0, 3, 250, 384).is_err());
        assert!(NetworkConfig::paper(1.0, 2, 256, 384).is_err());
        let mut cfg = NetworkConfig::paper(0.25, 3, 64, 96).unwrap();
        cfg.layers.pop();
        cfg.layers.pop();
        assert!(matches!(cfg.output_shapes(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn channel_rounding() {
        assert_eq!(scaled_channels(32, 0.25), 8);
        assert_eq!(scaled_channels(32, 0.1), 8);
        assert_eq!(scaled_channels(512, 0.25), 128);
        assert_eq!(scaled_channels(128, 0.3), 40);
    }

    #[test]
    fn he_init_statistics() {
        let spec = LayerSpec::Conv {
            in_channels: 16,
            out_channels: 700,
            kernel: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Params<f64> = he_init(&mut rng, &spec).unwrap();
        let d = p.weight.data();
        let n = 100_000;
        let mean = d[..n].iter().sum::<f64>() / n as f64;
        let std = (d[..n].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let want = (2.0f64 / 144.0).sqrt();
        assert!((want - 0.11785).abs() < 1e-5);
        assert!(((std - want) / want).abs() < 0.02, "{std}");
        assert!(p.bias.data().iter().all(|&b| b == 0.0));

        let again: Params<f64> = he_init(&mut ChaCha8Rng::seed_from_u64(3), &spec).unwrap();
        assert_eq!(again, p);
        assert!(he_init::<f64, _>(&mut rng, &LayerSpec::Relu).is_err());
    }

    #[test]
    fn zeros_forward_shape() {
        for width in [0.1, 0.25] {
            let cfg = NetworkConfig::paper(width, 3, 64, 96).unwrap();
            let net: Network<f32> = Network::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let y = net.forward(&Tensor::zeros(vec![2, 3, 64, 96])).unwrap();
            assert_eq!(y.shape(), &[2, 8]);
            assert!(y.all_finite());
            assert!(net.forward(&Tensor::zeros(vec![1, 3, 32, 96])).is_err());
        }
    }

    #[test]
    fn planar_conversion() {
        let img = ImageBuffer::from_fn(2, 1, 3, |x, _, c| (x * 3 + c) as f32 / 10.0).unwrap();
        let t: Tensor<f64> = image_to_tensor(&img).unwrap();
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        let want = [0.0, 0.3, 0.1, 0.4, 0.2, 0.5];
        for (a, b) in t.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
