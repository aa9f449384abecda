//! Model assembly: five view encoders, per-view dilated-convolution
//! pyramids, a shared latent plane, and an upsampling decoder.

use crate::config::{PerView, ViewId};
use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::projection::ViewSpecs;

use super::ops::{
    concat_channels, conv2d_backward, conv2d_forward, conv3d_backward, conv3d_forward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, resize_bilinear_backward,
    resize_bilinear_forward, softmax_backward, softmax_forward, split_channels, tconv2d_backward,
    tconv2d_forward, Conv2dSpec,
};
use super::params::{Gradients, ParamId, Parameters};
use super::tensor::{Scalar, Tensor};
use super::NetworkConfig;

#[derive(Clone, Copy, Debug)]
struct ConvIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug)]
struct EncoderIds {
    temporal: [ConvIds; 2],
    spatial: [ConvIds; 2],
}

#[derive(Debug)]
struct PyramidIds {
    point: ConvIds,
    dilated: Vec<ConvIds>,
    fuse: ConvIds,
}

#[derive(Debug)]
struct DecoderIds {
    up1: ConvIds,
    refine1: [ConvIds; 2],
    up2: ConvIds,
    refine2: [ConvIds; 2],
    classify: ConvIds,
}

#[derive(Debug)]
struct Ids {
    encoders: PerView<EncoderIds>,
    pyramids: PerView<PyramidIds>,
    decoder: DecoderIds,
}

/// Output of a forward pass: raw logits and softmax probabilities, both
/// shaped `[classes, rows, cols]` on the elevation–azimuth grid.
#[derive(Debug)]
pub struct Prediction<T> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// Per-view activations cached by a training forward pass.
#[derive(Debug)]
struct ViewCache<T> {
    input: Tensor<T>,
    stage1: Tensor<T>,
    pool1: Option<(Tensor<T>, Vec<u32>)>,
    stage2: Tensor<T>,
    pool2: (Tensor<T>, Vec<u32>),
    spat1: Tensor<T>,
    spat2: Tensor<T>,
    cat: Tensor<T>,
    fused: Tensor<T>,
}

#[derive(Debug)]
struct Cache<T> {
    views: PerView<ViewCache<T>>,
    latent: Tensor<T>,
    dec: [Tensor<T>; 6],
    probs: Tensor<T>,
}

/// The segmentation network with its parameters.
#[derive(Debug)]
pub struct Model<T: Scalar> {
    config: NetworkConfig,
    input_dims: PerView<(usize, usize)>,
    params: Parameters<T>,
    ids: Ids,
    cache: Option<Cache<T>>,
}

/// Convert a loaded window sample into per-view input stacks.
pub fn window_input<T: Scalar>(sample: &WindowSample) -> PerView<Tensor<T>> {
    PerView::from_fn(|view| {
        let frames = sample.views.get(view);
        let (rows, cols) = (frames[0].rows(), frames[0].cols());
        let mut data = Vec::with_capacity(frames.len() * rows * cols);
        for grid in frames {
            data.extend(grid.data().iter().map(|&v| T::from_f32(v)));
        }
        Tensor::from_vec(&[frames.len(), rows, cols], data)
    })
}

impl<T: Scalar> Model<T> {
    /// Build a model with freshly initialized weights. The seed fully
    /// determines every parameter.
    pub fn new(config: NetworkConfig, specs: &ViewSpecs, seed: u64) -> Result<Self> {
        config.validate(specs)?;
        let mut params = Parameters::with_seed(seed);
        let ids = register_params(&config, &mut params);
        debug_assert_eq!(params.total_len(), config.count_params());
        Ok(Self {
            config,
            input_dims: PerView::from_fn(|v| {
                let s = specs.get(v);
                (s.rows, s.cols)
            }),
            params,
            ids,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    /// Inference pass; intermediate activations are discarded.
    pub fn forward(&self, input: &PerView<Tensor<T>>) -> Result<Prediction<T>> {
        let (pred, _) = self.run(input)?;
        Ok(pred)
    }

    /// Training pass: like [`Model::forward`] but keeps the activations a
    /// following [`Model::backward`] needs.
    pub fn forward_train(&mut self, input: &PerView<Tensor<T>>) -> Result<Prediction<T>> {
        let (pred, cache) = self.run(input)?;
        self.cache = Some(cache);
        Ok(pred)
    }

    /// Backpropagate a gradient with respect to the output probabilities
    /// through the cached forward pass, producing parameter gradients. Each
    /// forward pass supports exactly one backward pass.
    pub fn backward(&mut self, grad_probs: &Tensor<T>) -> Result<Gradients<T>> {
        let cache = self.cache.take().ok_or(Error::BackwardWithoutForward)?;
        if grad_probs.shape() != cache.probs.shape() {
            return Err(Error::Shape {
                context: "output gradient".into(),
                expected: format!("{:?}", cache.probs.shape()),
                actual: format!("{:?}", grad_probs.shape()),
            });
        }
        let mut grads = Gradients::zeros_like(&self.params);
        let d = &self.ids.decoder;
        let [dc0, dc1] = self.config.decoder_channels;
        let a = self.config.aspp_channels;
        let refine1 = Conv2dSpec::same(dc0, dc0, 3, 1);
        let refine2 = Conv2dSpec::same(dc1, dc1, 3, 1);
        let classify = Conv2dSpec::same(dc1, self.config.classes, 1, 1);

        let g_logits = softmax_backward(&cache.probs, grad_probs);
        let mut g = self.conv2d_bwd(&mut grads, d.classify, &classify, &cache.dec[5], &g_logits);
        g = relu_backward(&cache.dec[5], g);
        g = self.conv2d_bwd(&mut grads, d.refine2[1], &refine2, &cache.dec[4], &g);
        g = relu_backward(&cache.dec[4], g);
        g = self.conv2d_bwd(&mut grads, d.refine2[0], &refine2, &cache.dec[3], &g);
        g = relu_backward(&cache.dec[3], g);
        g = self.tconv2d_bwd(&mut grads, d.up2, dc1, &cache.dec[2], &g);
        g = relu_backward(&cache.dec[2], g);
        g = self.conv2d_bwd(&mut grads, d.refine1[1], &refine1, &cache.dec[1], &g);
        g = relu_backward(&cache.dec[1], g);
        g = self.conv2d_bwd(&mut grads, d.refine1[0], &refine1, &cache.dec[0], &g);
        g = relu_backward(&cache.dec[0], g);
        let g_latent = self.tconv2d_bwd(&mut grads, d.up1, dc0, &cache.latent, &g);

        let widths = vec![a; 5];
        let parts = split_channels(&g_latent, &widths);
        for (view, g_lat) in ViewId::ALL.into_iter().zip(parts) {
            self.backward_view(&mut grads, view, cache.views.get(view), g_lat);
        }
        Ok(grads)
    }

    fn backward_view(
        &self,
        grads: &mut Gradients<T>,
        view: ViewId,
        vc: &ViewCache<T>,
        g_lat: Tensor<T>,
    ) {
        let cfg = &self.config;
        let enc = self.ids.encoders.get(view);
        let pyr = self.ids.pyramids.get(view);
        let [c31, c32] = cfg.conv3d_channels;
        let [c21, c22] = cfg.conv2d_channels;
        let a = cfg.aspp_channels;
        let (kd1, kd2) = cfg.temporal_kernel_depths();
        let branches = cfg.aspp_rates.len() + 1;
        let (eh, ew) = (vc.fused.shape()[1], vc.fused.shape()[2]);

        let g = resize_bilinear_backward(eh, ew, &g_lat);
        let g = relu_backward(&vc.fused, g);
        let fuse_spec = Conv2dSpec::same(a * branches, a, 1, 1);
        let g_cat = self.conv2d_bwd(grads, pyr.fuse, &fuse_spec, &vc.cat, &g);

        let widths = vec![a; branches];
        let g_parts = split_channels(&g_cat, &widths);
        let branch_outs = split_channels(&vc.cat, &widths);
        let mut g_spat2 = Tensor::zeros(vc.spat2.shape());
        for (i, (g_part, branch_out)) in g_parts.into_iter().zip(&branch_outs).enumerate() {
            let gb = relu_backward(branch_out, g_part);
            let (ids, spec) = if i == 0 {
                (pyr.point, Conv2dSpec::same(c22, a, 1, 1))
            } else {
                let rate = cfg.aspp_rates[i - 1];
                (pyr.dilated[i - 1], Conv2dSpec::same(c22, a, 3, rate))
            };
            let gi = self.conv2d_bwd(grads, ids, &spec, &vc.spat2, &gb);
            for (acc, v) in g_spat2.data_mut().iter_mut().zip(gi.data()) {
                *acc += *v;
            }
        }

        let g = relu_backward(&vc.spat2, g_spat2);
        let spat2_spec = Conv2dSpec::same(c21, c22, 3, 1);
        let g = self.conv2d_bwd(grads, enc.spatial[1], &spat2_spec, &vc.spat1, &g);
        let g = relu_backward(&vc.spat1, g);
        let spat1_spec = Conv2dSpec::same(c32, c21, 3, 1);
        let g = self.conv2d_bwd(grads, enc.spatial[0], &spat1_spec, &vc.pool2.0, &g);
        let g = maxpool2_backward(vc.stage2.shape(), &g, &vc.pool2.1);
        let g = relu_backward(&vc.stage2, g);
        let stage2_in = vc.pool1.as_ref().map(|(p, _)| p).unwrap_or(&vc.stage1);
        let g = self.conv3d_bwd(grads, enc.temporal[1], c32, kd2, stage2_in, &g);
        let g = match &vc.pool1 {
            Some((_, argmax)) => maxpool2_backward(vc.stage1.shape(), &g, argmax),
            None => g,
        };
        let g = relu_backward(&vc.stage1, g);
        let _ = self.conv3d_bwd(grads, enc.temporal[0], c31, kd1, &vc.input, &g);
    }

    fn conv2d_bwd(
        &self,
        grads: &mut Gradients<T>,
        ids: ConvIds,
        spec: &Conv2dSpec,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Tensor<T> {
        let w = self.params.get(ids.w);
        let (gw, gb) = grads.wb_mut(ids.w, ids.b);
        conv2d_backward(input, w, spec, grad_out, gw, gb)
    }

    fn tconv2d_bwd(
        &self,
        grads: &mut Gradients<T>,
        ids: ConvIds,
        out_ch: usize,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Tensor<T> {
        let w = self.params.get(ids.w);
        let (gw, gb) = grads.wb_mut(ids.w, ids.b);
        tconv2d_backward(input, w, out_ch, grad_out, gw, gb)
    }

    fn conv3d_bwd(
        &self,
        grads: &mut Gradients<T>,
        ids: ConvIds,
        out_ch: usize,
        k_depth: usize,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Tensor<T> {
        let w = self.params.get(ids.w);
        let (gw, gb) = grads.wb_mut(ids.w, ids.b);
        conv3d_backward(input, w, out_ch, k_depth, grad_out, gw, gb)
    }

    fn run(&self, input: &PerView<Tensor<T>>) -> Result<(Prediction<T>, Cache<T>)> {
        let views = PerView {
            ea: self.encode_view(ViewId::Ea, input.get(ViewId::Ea))?,
            er: self.encode_view(ViewId::Er, input.get(ViewId::Er))?,
            ed: self.encode_view(ViewId::Ed, input.get(ViewId::Ed))?,
            ra: self.encode_view(ViewId::Ra, input.get(ViewId::Ra))?,
            da: self.encode_view(ViewId::Da, input.get(ViewId::Da))?,
        };
        let cfg = &self.config;
        let (lh, lw) = (cfg.latent_rows, cfg.latent_cols);
        let mut resized = Vec::with_capacity(5);
        for view in ViewId::ALL {
            resized.push(resize_bilinear_forward(&views.get(view).fused, lh, lw)?);
        }
        let latent = concat_channels(&resized.iter().collect::<Vec<_>>());
        latent.debug_assert_finite("latent fuse");

        let d = &self.ids.decoder;
        let [dc0, dc1] = cfg.decoder_channels;
        let refine1 = Conv2dSpec::same(dc0, dc0, 3, 1);
        let refine2 = Conv2dSpec::same(dc1, dc1, 3, 1);
        let classify = Conv2dSpec::same(dc1, cfg.classes, 1, 1);

        let d1 = relu_forward(self.tconv2d_fwd(d.up1, dc0, &latent));
        let d2 = relu_forward(self.conv2d_fwd(d.refine1[0], &refine1, &d1));
        let d3 = relu_forward(self.conv2d_fwd(d.refine1[1], &refine1, &d2));
        let d4 = relu_forward(self.tconv2d_fwd(d.up2, dc1, &d3));
        let d5 = relu_forward(self.conv2d_fwd(d.refine2[0], &refine2, &d4));
        let d6 = relu_forward(self.conv2d_fwd(d.refine2[1], &refine2, &d5));
        let logits = self.conv2d_fwd(d.classify, &classify, &d6);
        logits.debug_assert_finite("classification layer");
        let probs = softmax_forward(&logits);

        let pred = Prediction {
            logits,
            probs: probs.clone(),
        };
        let cache = Cache {
            views,
            latent,
            dec: [d1, d2, d3, d4, d5, d6],
            probs,
        };
        Ok((pred, cache))
    }

    fn encode_view(&self, view: ViewId, x: &Tensor<T>) -> Result<ViewCache<T>> {
        let cfg = &self.config;
        let (rows, cols) = *self.input_dims.get(view);
        if x.shape() != [cfg.window, rows, cols] {
            return Err(Error::Shape {
                context: format!("{} input stack", view.name()),
                expected: format!("[{}, {rows}, {cols}]", cfg.window),
                actual: format!("{:?}", x.shape()),
            });
        }
        let enc = self.ids.encoders.get(view);
        let pyr = self.ids.pyramids.get(view);
        let [c31, c32] = cfg.conv3d_channels;
        let [c21, c22] = cfg.conv2d_channels;
        let a = cfg.aspp_channels;
        let (kd1, kd2) = cfg.temporal_kernel_depths();

        let input = x.clone().reshape(&[1, cfg.window, rows, cols]);
        let stage1 = relu_forward(conv3d_forward(
            &input,
            self.params.get(enc.temporal[0].w),
            self.params.get(enc.temporal[0].b),
            c31,
            kd1,
        ));
        stage1.debug_assert_finite("temporal stage 1");
        let mut pool1 = None;
        let stage2_in = if view == ViewId::Ea {
            &stage1
        } else {
            let (pooled, argmax) = maxpool2_forward(&stage1);
            pool1 = Some((pooled, argmax));
            &pool1.as_ref().expect("just set").0
        };
        let stage2 = relu_forward(conv3d_forward(
            stage2_in,
            self.params.get(enc.temporal[1].w),
            self.params.get(enc.temporal[1].b),
            c32,
            kd2,
        ));
        stage2.debug_assert_finite("temporal stage 2");
        debug_assert_eq!(stage2.shape()[1], 1, "depth must collapse to one");
        let (pooled2, argmax2) = maxpool2_forward(&stage2);
        let (ph, pw) = (pooled2.shape()[2], pooled2.shape()[3]);
        let pool2 = (pooled2.reshape(&[c32, ph, pw]), argmax2);

        let spat1_spec = Conv2dSpec::same(c32, c21, 3, 1);
        let spat1 = relu_forward(self.conv2d_fwd(enc.spatial[0], &spat1_spec, &pool2.0));
        let spat2_spec = Conv2dSpec::same(c21, c22, 3, 1);
        let spat2 = relu_forward(self.conv2d_fwd(enc.spatial[1], &spat2_spec, &spat1));
        spat2.debug_assert_finite("spatial stages");

        let point_spec = Conv2dSpec::same(c22, a, 1, 1);
        let mut branches = vec![relu_forward(self.conv2d_fwd(pyr.point, &point_spec, &spat2))];
        for (ids, &rate) in pyr.dilated.iter().zip(&cfg.aspp_rates) {
            let spec = Conv2dSpec::same(c22, a, 3, rate);
            branches.push(relu_forward(self.conv2d_fwd(*ids, &spec, &spat2)));
        }
        let cat = concat_channels(&branches.iter().collect::<Vec<_>>());
        let fuse_spec = Conv2dSpec::same(a * (cfg.aspp_rates.len() + 1), a, 1, 1);
        let fused = relu_forward(self.conv2d_fwd(pyr.fuse, &fuse_spec, &cat));
        fused.debug_assert_finite("pyramid fuse");

        Ok(ViewCache {
            input,
            stage1,
            pool1,
            stage2,
            pool2,
            spat1,
            spat2,
            cat,
            fused,
        })
    }

    fn conv2d_fwd(&self, ids: ConvIds, spec: &Conv2dSpec, input: &Tensor<T>) -> Tensor<T> {
        conv2d_forward(input, self.params.get(ids.w), self.params.get(ids.b), spec)
    }

    fn tconv2d_fwd(&self, ids: ConvIds, out_ch: usize, input: &Tensor<T>) -> Tensor<T> {
        tconv2d_forward(input, self.params.get(ids.w), self.params.get(ids.b), out_ch)
    }
}

fn register_params<T: Scalar>(cfg: &NetworkConfig, params: &mut Parameters<T>) -> Ids {
    let [c31, c32] = cfg.conv3d_channels;
    let [c21, c22] = cfg.conv2d_channels;
    let a = cfg.aspp_channels;
    let (kd1, kd2) = cfg.temporal_kernel_depths();

    let conv2d = |params: &mut Parameters<T>, name: String, ci: usize, co: usize, k: usize| {
        ConvIds {
            w: params.weight(format!("{name}.weight"), &[co, ci, k, k], ci * k * k),
            b: params.bias(format!("{name}.bias"), co),
        }
    };
    let encoders = PerView::from_fn(|view| {
        let v = view.name();
        EncoderIds {
            temporal: [
                ConvIds {
                    w: params.weight(
                        format!("encoder.{v}.temporal1.weight"),
                        &[c31, 1, kd1, 3, 3],
                        kd1 * 9,
                    ),
                    b: params.bias(format!("encoder.{v}.temporal1.bias"), c31),
                },
                ConvIds {
                    w: params.weight(
                        format!("encoder.{v}.temporal2.weight"),
                        &[c32, c31, kd2, 3, 3],
                        c31 * kd2 * 9,
                    ),
                    b: params.bias(format!("encoder.{v}.temporal2.bias"), c32),
                },
            ],
            spatial: [
                conv2d(params, format!("encoder.{v}.spatial1"), c32, c21, 3),
                conv2d(params, format!("encoder.{v}.spatial2"), c21, c22, 3),
            ],
        }
    });
    let pyramids = PerView::from_fn(|view| {
        let v = view.name();
        PyramidIds {
            point: conv2d(params, format!("pyramid.{v}.point"), c22, a, 1),
            dilated: cfg
                .aspp_rates
                .iter()
                .map(|rate| conv2d(params, format!("pyramid.{v}.dilated{rate}"), c22, a, 3))
                .collect(),
            fuse: conv2d(
                params,
                format!("pyramid.{v}.fuse"),
                a * (cfg.aspp_rates.len() + 1),
                a,
                1,
            ),
        }
    });
    let [dc0, dc1] = cfg.decoder_channels;
    let decoder = DecoderIds {
        up1: ConvIds {
            w: params.weight("decoder.up1.weight".to_string(), &[5 * a, dc0, 2, 2], 5 * a * 4),
            b: params.bias("decoder.up1.bias".to_string(), dc0),
        },
        refine1: [
            conv2d(params, "decoder.refine1a".to_string(), dc0, dc0, 3),
            conv2d(params, "decoder.refine1b".to_string(), dc0, dc0, 3),
        ],
        up2: ConvIds {
            w: params.weight("decoder.up2.weight".to_string(), &[dc0, dc1, 2, 2], dc0 * 4),
            b: params.bias("decoder.up2.bias".to_string(), dc1),
        },
        refine2: [
            conv2d(params, "decoder.refine2a".to_string(), dc1, dc1, 3),
            conv2d(params, "decoder.refine2b".to_string(), dc1, dc1, 3),
        ],
        classify: conv2d(params, "decoder.classify".to_string(), dc1, cfg.classes, 1),
    };
    Ids {
        encoders,
        pyramids,
        decoder,
    }
}
