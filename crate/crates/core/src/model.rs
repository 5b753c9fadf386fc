//! The residual reconstruction network.
//!
//! Main path: `feat 5×5 → shrink 1×1 → [res block]×N → expand 1×1 → recon 5×5`,
//! every conv except `recon` followed by a PReLU. Each residual block is two
//! 3×3 conv+PReLU stages whose output is summed with the block input cropped
//! by two pixels per side. A parallel 7×7 `skip` conv maps RGB straight to the
//! output bands and is center-cropped onto the main-path output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{conv2d_valid_backward, conv2d_valid_forward};
use crate::error::{Error, Result};
use crate::ops::{add, add_assign, center_crop, center_crop_backward, prelu_backward, prelu_forward};
use crate::tensor::{ConvFilter, PReluSlopes, Scalar, Tensor4};

pub const INPUT_CHANNELS: usize = 3;
pub const FEAT_KERNEL: usize = 5;
pub const RES_KERNEL: usize = 3;
pub const RECON_KERNEL: usize = 5;
pub const SKIP_KERNEL: usize = 7;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_res_blocks: usize,
    pub n_features: usize,
    pub n_bottleneck: usize,
    pub out_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_res_blocks: 2,
            n_features: 128,
            n_bottleneck: 32,
            out_channels: 31,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bottleneck == 0 {
            return Err(Error::Config("n_bottleneck must be at least 1".into()));
        }
        if self.n_features < self.n_bottleneck {
            return Err(Error::Config(format!(
                "n_features ({}) must be >= n_bottleneck ({})",
                self.n_features, self.n_bottleneck
            )));
        }
        if self.out_channels == 0 {
            return Err(Error::Config("out_channels must be at least 1".into()));
        }
        Ok(())
    }

    /// Side length of the input window that influences one output pixel.
    pub fn receptive_field(&self) -> usize {
        let main_kernels = [FEAT_KERNEL, 1]
            .into_iter()
            .chain(std::iter::repeat_n(RES_KERNEL, 2 * self.n_res_blocks))
            .chain([1, RECON_KERNEL]);
        1 + main_kernels.map(|k| k - 1).sum::<usize>()
    }

    /// Pixels lost per spatial axis between input and output.
    pub fn shrinkage(&self) -> usize {
        self.receptive_field() - 1
    }
}

pub fn receptive_field(config: &ModelConfig) -> usize {
    config.receptive_field()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock<T = f32> {
    pub conv_a: ConvFilter<T>,
    pub act_a: PReluSlopes<T>,
    pub conv_b: ConvFilter<T>,
    pub act_b: PReluSlopes<T>,
}

/// All learnable parameters, addressable by layer name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub feat: ConvFilter<T>,
    pub feat_act: PReluSlopes<T>,
    pub shrink: ConvFilter<T>,
    pub shrink_act: PReluSlopes<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub expand: ConvFilter<T>,
    pub expand_act: PReluSlopes<T>,
    pub recon: ConvFilter<T>,
    pub skip: ConvFilter<T>,
}

/// Gradients share the parameter layout.
pub type ParamGrads<T = f32> = ModelParams<T>;

/// One named parameter buffer.
pub struct ParamView<'a, T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [T],
}

pub struct ParamViewMut<'a, T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a mut [T],
}

macro_rules! push_conv {
    ($out:ident, $view:ident, $name:expr, $conv:expr, $($m:tt)*) => {{
        let dims = $conv.dims().to_vec();
        let c_out = $conv.c_out();
        $out.push($view { name: format!("{}.weight", $name), dims, data: & $($m)* $conv.weight });
        $out.push($view { name: format!("{}.bias", $name), dims: vec![c_out], data: & $($m)* $conv.bias });
    }};
}

macro_rules! push_act {
    ($out:ident, $view:ident, $name:expr, $act:expr, $($m:tt)*) => {{
        let len = $act.len();
        $out.push($view { name: format!("{}.prelu", $name), dims: vec![len], data: & $($m)* $act.a });
    }};
}

impl<T: Scalar> ModelParams<T> {
    /// Zero weights, zero biases, PReLU slopes at 0.25.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let ModelConfig {
            n_res_blocks,
            n_features: f,
            n_bottleneck: b,
            out_channels: o,
        } = config;
        let act = |c| PReluSlopes::constant(c, T::from_f64_lossy(PRELU_INIT));
        let blocks = (0..n_res_blocks)
            .map(|_| {
                Ok(ResBlock {
                    conv_a: ConvFilter::zeros(b, b, RES_KERNEL, RES_KERNEL)?,
                    act_a: act(b),
                    conv_b: ConvFilter::zeros(b, b, RES_KERNEL, RES_KERNEL)?,
                    act_b: act(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            feat: ConvFilter::zeros(f, INPUT_CHANNELS, FEAT_KERNEL, FEAT_KERNEL)?,
            feat_act: act(f),
            shrink: ConvFilter::zeros(b, f, 1, 1)?,
            shrink_act: act(b),
            blocks,
            expand: ConvFilter::zeros(f, b, 1, 1)?,
            expand_act: act(f),
            recon: ConvFilter::zeros(o, f, RECON_KERNEL, RECON_KERNEL)?,
            skip: ConvFilter::zeros(o, INPUT_CHANNELS, SKIP_KERNEL, SKIP_KERNEL)?,
        })
    }

    /// Xavier-uniform weights drawn layer by layer in [`Self::views`] order.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params.for_each_conv_mut(|conv| {
            let [c_out, c_in, kh, kw] = conv.dims();
            let bound = xavier_bound(c_in * kh * kw, c_out * kh * kw);
            for w in conv.weight.iter_mut() {
                *w = T::from_f64_lossy(rng.gen_range(-bound..bound));
            }
        });
        Ok(params)
    }

    pub fn for_each_conv_mut(&mut self, mut f: impl FnMut(&mut ConvFilter<T>)) {
        f(&mut self.feat);
        f(&mut self.shrink);
        for b in &mut self.blocks {
            f(&mut b.conv_a);
            f(&mut b.conv_b);
        }
        f(&mut self.expand);
        f(&mut self.recon);
        f(&mut self.skip);
    }

    /// Every parameter buffer in canonical order. Checkpoints, optimizer
    /// state and gradient checks all rely on this order.
    pub fn views(&self) -> Vec<ParamView<'_, T>> {
        let mut out = Vec::new();
        push_conv!(out, ParamView, "feat", self.feat,);
        push_act!(out, ParamView, "feat", self.feat_act,);
        push_conv!(out, ParamView, "shrink", self.shrink,);
        push_act!(out, ParamView, "shrink", self.shrink_act,);
        for (i, b) in self.blocks.iter().enumerate() {
            let a = format!("res{}.conv_a", i + 1);
            let bb = format!("res{}.conv_b", i + 1);
            push_conv!(out, ParamView, a, b.conv_a,);
            push_act!(out, ParamView, a, b.act_a,);
            push_conv!(out, ParamView, bb, b.conv_b,);
            push_act!(out, ParamView, bb, b.act_b,);
        }
        push_conv!(out, ParamView, "expand", self.expand,);
        push_act!(out, ParamView, "expand", self.expand_act,);
        push_conv!(out, ParamView, "recon", self.recon,);
        push_conv!(out, ParamView, "skip", self.skip,);
        out
    }

    pub fn views_mut(&mut self) -> Vec<ParamViewMut<'_, T>> {
        let mut out = Vec::new();
        push_conv!(out, ParamViewMut, "feat", self.feat, mut);
        push_act!(out, ParamViewMut, "feat", self.feat_act, mut);
        push_conv!(out, ParamViewMut, "shrink", self.shrink, mut);
        push_act!(out, ParamViewMut, "shrink", self.shrink_act, mut);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let a = format!("res{}.conv_a", i + 1);
            let bb = format!("res{}.conv_b", i + 1);
            push_conv!(out, ParamViewMut, a, b.conv_a, mut);
            push_act!(out, ParamViewMut, a, b.act_a, mut);
            push_conv!(out, ParamViewMut, bb, b.conv_b, mut);
            push_act!(out, ParamViewMut, bb, b.act_b, mut);
        }
        push_conv!(out, ParamViewMut, "expand", self.expand, mut);
        push_act!(out, ParamViewMut, "expand", self.expand_act, mut);
        push_conv!(out, ParamViewMut, "recon", self.recon, mut);
        push_conv!(out, ParamViewMut, "skip", self.skip, mut);
        out
    }

    pub fn param_count(&self) -> usize {
        self.views().iter().map(|v| v.data.len()).sum()
    }

    /// Same layout with every buffer set to zero (including PReLU slopes).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for v in z.views_mut() {
            v.data.fill(T::zero());
        }
        z
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            feat: self.feat.cast(),
            feat_act: self.feat_act.cast(),
            shrink: self.shrink.cast(),
            shrink_act: self.shrink_act.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResBlock {
                    conv_a: b.conv_a.cast(),
                    act_a: b.act_a.cast(),
                    conv_b: b.conv_b.cast(),
                    act_b: b.act_b.cast(),
                })
                .collect(),
            expand: self.expand.cast(),
            expand_act: self.expand_act.cast(),
            recon: self.recon.cast(),
            skip: self.skip.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.views().iter().all(|v| v.data.iter().all(|x| x.is_finite()))
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

struct BlockCache<T> {
    input: Tensor4<T>,
    pre_a: Tensor4<T>,
    act_a: Tensor4<T>,
    pre_b: Tensor4<T>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<T = f32> {
    input: Tensor4<T>,
    pre_feat: Tensor4<T>,
    act_feat: Tensor4<T>,
    pre_shrink: Tensor4<T>,
    blocks: Vec<BlockCache<T>>,
    block_out: Tensor4<T>,
    pre_expand: Tensor4<T>,
    act_expand: Tensor4<T>,
    skip_dims: [usize; 4],
    pub output: Tensor4<T>,
}

fn check_input<T: Scalar>(params: &ModelParams<T>, rgb: &Tensor4<T>) -> Result<()> {
    if rgb.c() != INPUT_CHANNELS {
        return Err(Error::shape("forward", "channels", INPUT_CHANNELS, rgb.c()));
    }
    let rf = params.config.receptive_field();
    if rgb.h() < rf || rgb.w() < rf {
        return Err(Error::invalid(
            "forward",
            format!("input {}x{} smaller than receptive field {rf}x{rf}", rgb.h(), rgb.w()),
        ));
    }
    Ok(())
}

pub fn forward_cached<T: Scalar>(params: &ModelParams<T>, rgb: &Tensor4<T>) -> Result<ForwardCache<T>> {
    check_input(params, rgb)?;
    let pre_feat = conv2d_valid_forward(rgb, &params.feat)?;
    let act_feat = prelu_forward(&pre_feat, &params.feat_act)?;
    let pre_shrink = conv2d_valid_forward(&act_feat, &params.shrink)?;
    let mut h = prelu_forward(&pre_shrink, &params.shrink_act)?;

    let mut blocks = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let pre_a = conv2d_valid_forward(&h, &b.conv_a)?;
        let act_a = prelu_forward(&pre_a, &b.act_a)?;
        let pre_b = conv2d_valid_forward(&act_a, &b.conv_b)?;
        let mut out = prelu_forward(&pre_b, &b.act_b)?;
        let shortcut = center_crop(&h, out.h(), out.w())?;
        add_assign(&mut out, &shortcut)?;
        blocks.push(BlockCache {
            input: h,
            pre_a,
            act_a,
            pre_b,
        });
        h = out;
    }

    let pre_expand = conv2d_valid_forward(&h, &params.expand)?;
    let act_expand = prelu_forward(&pre_expand, &params.expand_act)?;
    let main = conv2d_valid_forward(&act_expand, &params.recon)?;
    let skip = conv2d_valid_forward(rgb, &params.skip)?;
    let skip_dims = skip.dims();
    let output = add(&main, &center_crop(&skip, main.h(), main.w())?)?;

    Ok(ForwardCache {
        input: rgb.clone(),
        pre_feat,
        act_feat,
        pre_shrink,
        blocks,
        block_out: h,
        pre_expand,
        act_expand,
        skip_dims,
        output,
    })
}

/// Maps an `(n, 3, h, w)` RGB batch to `(n, out_channels, h − 16, w − 16)`
/// for the default configuration.
pub fn forward<T: Scalar>(params: &ModelParams<T>, rgb: &Tensor4<T>) -> Result<Tensor4<T>> {
    Ok(forward_cached(params, rgb)?.output)
}

pub struct Gradients<T = f32> {
    pub params: ParamGrads<T>,
    pub input: Tensor4<T>,
}

pub fn backward_cached<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    grad_out: &Tensor4<T>,
) -> Result<Gradients<T>> {
    let od = cache.output.dims();
    let gd = grad_out.dims();
    for (i, axis) in ["batch", "channels", "height", "width"].into_iter().enumerate() {
        if od[i] != gd[i] {
            return Err(Error::shape("backward", axis, od[i], gd[i]));
        }
    }
    let mut grads = params.zeros_like();

    // skip branch
    let g_skip = center_crop_backward(grad_out, cache.skip_dims[2], cache.skip_dims[3])?;
    let sk = conv2d_valid_backward(&cache.input, &params.skip, &g_skip)?;
    grads.skip.weight = sk.weight;
    grads.skip.bias = sk.bias;
    let mut g_input = sk.input;

    // main branch, last layer first
    let rc = conv2d_valid_backward(&cache.act_expand, &params.recon, grad_out)?;
    grads.recon.weight = rc.weight;
    grads.recon.bias = rc.bias;
    let pe = prelu_backward(&cache.pre_expand, &params.expand_act, &rc.input)?;
    grads.expand_act.a = pe.slopes;
    let ex = conv2d_valid_backward(&cache.block_out, &params.expand, &pe.x)?;
    grads.expand.weight = ex.weight;
    grads.expand.bias = ex.bias;
    let mut g_h = ex.input;

    for ((b, bc), gb) in params
        .blocks
        .iter()
        .zip(&cache.blocks)
        .zip(grads.blocks.iter_mut())
        .rev()
    {
        let (ih, iw) = (bc.input.h(), bc.input.w());
        let mut g_in = center_crop_backward(&g_h, ih, iw)?;
        let pb = prelu_backward(&bc.pre_b, &b.act_b, &g_h)?;
        gb.act_b.a = pb.slopes;
        let cb = conv2d_valid_backward(&bc.act_a, &b.conv_b, &pb.x)?;
        gb.conv_b.weight = cb.weight;
        gb.conv_b.bias = cb.bias;
        let pa = prelu_backward(&bc.pre_a, &b.act_a, &cb.input)?;
        gb.act_a.a = pa.slopes;
        let ca = conv2d_valid_backward(&bc.input, &b.conv_a, &pa.x)?;
        gb.conv_a.weight = ca.weight;
        gb.conv_a.bias = ca.bias;
        add_assign(&mut g_in, &ca.input)?;
        g_h = g_in;
    }

    let ps = prelu_backward(&cache.pre_shrink, &params.shrink_act, &g_h)?;
    grads.shrink_act.a = ps.slopes;
    let sh = conv2d_valid_backward(&cache.act_feat, &params.shrink, &ps.x)?;
    grads.shrink.weight = sh.weight;
    grads.shrink.bias = sh.bias;
    let pf = prelu_backward(&cache.pre_feat, &params.feat_act, &sh.input)?;
    grads.feat_act.a = pf.slopes;
    let fe = conv2d_valid_backward(&cache.input, &params.feat, &pf.x)?;
    grads.feat.weight = fe.weight;
    grads.feat.bias = fe.bias;
    add_assign(&mut g_input, &fe.input)?;

    Ok(Gradients {
        params: grads,
        input: g_input,
    })
}

/// Recomputes the forward pass, then back-propagates `grad_out`.
pub fn backward<T: Scalar>(params: &ModelParams<T>, rgb: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Gradients<T>> {
    let cache = forward_cached(params, rgb)?;
    backward_cached(params, &cache, grad_out)
}

/// Mean squared error over every element, and its gradient.
pub fn l2_loss<T: Scalar>(pred: &Tensor4<T>, label: &Tensor4<T>) -> Result<(T, Tensor4<T>)> {
    for (i, axis) in ["batch", "channels", "height", "width"].into_iter().enumerate() {
        if pred.dims()[i] != label.dims()[i] {
            return Err(Error::shape("l2_loss", axis, label.dims()[i], pred.dims()[i]));
        }
    }
    let count = pred.data().len();
    if count == 0 {
        return Ok((T::zero(), pred.clone()));
    }
    let inv = T::one() / T::from_usize(count).unwrap_or_else(T::one);
    let two = T::one() + T::one();
    let mut grad = pred.clone();
    let mut sum = T::zero();
    for (g, &l) in grad.data_mut().iter_mut().zip(label.data()) {
        let r = *g - l;
        sum += r * r;
        *g = two * r * inv;
    }
    Ok((sum * inv, grad))
}
