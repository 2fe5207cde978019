use super::arch::{ArchDescriptor, LayerSpec};
use super::builder::{Feature, NetBuilder};
use super::{
    Architecture, LatentSpec, Network, ENERGY_OUTPUT, GENERATOR_OUTPUT, INPUT_C, INPUT_X, INPUT_Y,
};
use crate::error::{Error, Result};

fn energy_head(mut b: NetBuilder, h: Feature) -> Result<Network> {
    let h = b.flatten(h);
    let f = b.layer(h, &LayerSpec::Dense { units: 1 }, "head")?;
    Ok(b.finish(ENERGY_OUTPUT, f))
}

fn generator_head(mut b: NetBuilder, desc: &ArchDescriptor, h: Feature) -> Result<Network> {
    let h = b.output_head(h, desc.output);
    if h.len() != desc.target_len() {
        return Err(Error::config(format!(
            "`{}` produces {:?} ({} values) but the target is {:?}",
            desc.variant,
            h.shape,
            h.len(),
            desc.target_shape
        )));
    }
    let h = b.reshape(h, desc.target_shape.clone())?;
    Ok(b.finish(GENERATOR_OUTPUT, h))
}

fn split(desc: &ArchDescriptor, what: &str) -> Result<(usize, usize)> {
    let n = desc.concat_after;
    if n == 0 {
        return Err(Error::config(format!(
            "`{}` needs concat_after >= 1 ({what})",
            desc.variant
        )));
    }
    Ok((n, desc.layers.len()))
}

fn require_image_condition(desc: &ArchDescriptor) -> Result<Vec<usize>> {
    if desc.condition.classes().is_some() {
        return Err(Error::config(format!("`{}` needs an image condition", desc.variant)));
    }
    Ok(desc.condition.shape())
}

fn require_latent(desc: &ArchDescriptor, b: &mut NetBuilder) -> Option<Feature> {
    (desc.latent_dim > 0).then(|| b.input(INPUT_X, &[desc.latent_dim]))
}

/// Condition fused with `Y` before the first layer.
pub(super) struct EnergyEarly;

impl Architecture for EnergyEarly {
    fn name(&self) -> &'static str {
        "cat2img_early"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        let mut b = NetBuilder::new(desc);
        let y = b.input(INPUT_Y, &desc.target_shape);
        let c = b.input(INPUT_C, &desc.condition.shape());
        let h = b.fuse(y, c)?;
        b.record_shape("concat", &h.shape);
        let h = b.stack(h, &desc.layers, "l", true)?;
        energy_head(b, h)
    }
}

/// `Y` is encoded by the first `concat_after` layers, then fused with the
/// (spatially replicated) condition.
pub(super) struct EnergyLate;

impl Architecture for EnergyLate {
    fn name(&self) -> &'static str {
        "cat2img_late"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        let (n, _) = split(desc, "layers before the condition is joined")?;
        let mut b = NetBuilder::new(desc);
        let y = b.input(INPUT_Y, &desc.target_shape);
        let c = b.input(INPUT_C, &desc.condition.shape());
        let h = b.stack(y, &desc.layers[..n], "phi", true)?;
        let h = b.fuse(h, c)?;
        b.record_shape("concat", &h.shape);
        let h = b.stack(h, &desc.layers[n..], "l", true)?;
        energy_head(b, h)
    }
}

/// Target and condition images joined along channels at the input.
pub(super) struct EnergyChannelConcat;

impl Architecture for EnergyChannelConcat {
    fn name(&self) -> &'static str {
        "solver_channel_concat"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        let cshape = require_image_condition(desc)?;
        if desc.target_shape.len() != 3 || desc.target_shape[1..] != cshape[1..] {
            return Err(Error::config(format!(
                "channel concatenation needs equal spatial sizes, got {:?} and {:?}",
                desc.target_shape, cshape
            )));
        }
        EnergyEarly.build(desc)
    }
}

/// `[X, C]` mapped by the layer stack.
pub(super) struct GeneratorEarly;

impl Architecture for GeneratorEarly {
    fn name(&self) -> &'static str {
        "cat2img_early"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        let mut b = NetBuilder::new(desc);
        let x = require_latent(desc, &mut b);
        let c = b.input(INPUT_C, &desc.condition.shape());
        let z = match x {
            Some(x) => b.fuse(x, c)?,
            None => c,
        };
        b.record_shape("concat", &z.shape);
        let h = b.stack(z, &desc.layers, "l", false)?;
        let mut net = generator_head(b, desc, h)?;
        if desc.latent_dim > 0 {
            net.latents.insert(0, LatentSpec::Vector { dim: desc.latent_dim });
        }
        Ok(net)
    }
}

/// `X` is decoded by the first `concat_after` layers before the condition
/// is replicated and joined.
pub(super) struct GeneratorLate;

impl Architecture for GeneratorLate {
    fn name(&self) -> &'static str {
        "cat2img_late"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        let (n, _) = split(desc, "layers applied to the latent alone")?;
        if desc.latent_dim == 0 {
            return Err(Error::config("cat2img_late needs latent_dim >= 1"));
        }
        let mut b = NetBuilder::new(desc);
        let x = b.input(INPUT_X, &[desc.latent_dim]);
        let c = b.input(INPUT_C, &desc.condition.shape());
        let h = b.stack(x, &desc.layers[..n], "psi", true)?;
        let h = b.fuse(h, c)?;
        b.record_shape("concat", &h.shape);
        let h = b.stack(h, &desc.layers[n..], "l", false)?;
        let mut net = generator_head(b, desc, h)?;
        net.latents.insert(0, LatentSpec::Vector { dim: desc.latent_dim });
        Ok(net)
    }
}

/// Encoder on the condition image, flattened code joined with `X`, decoder
/// to the target.
pub(super) struct GeneratorNaive;

impl Architecture for GeneratorNaive {
    fn name(&self) -> &'static str {
        "img2img_naive"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        require_image_condition(desc)?;
        let (n, _) = split(desc, "encoder layers")?;
        let mut b = NetBuilder::new(desc);
        let x = require_latent(desc, &mut b);
        let c = b.input(INPUT_C, &desc.condition.shape());
        let e = b.stack(c, &desc.layers[..n], "enc", true)?;
        let e = b.flatten(e);
        let z = match x {
            Some(x) => b.fuse(e, x)?,
            None => e,
        };
        b.record_shape("concat", &z.shape);
        let h = b.stack(z, &desc.layers[n..], "dec", false)?;
        let mut net = generator_head(b, desc, h)?;
        if desc.latent_dim > 0 {
            net.latents.insert(0, LatentSpec::Vector { dim: desc.latent_dim });
        }
        Ok(net)
    }
}

/// Convolutional encoder given by `layers` and a mirrored transposed
/// decoder; decoder stage `j` is joined with the encoder feature of the same
/// resolution. Hidden decoder stages carry dropout masks `drop{j}`, which
/// are the latent of this variant.
pub(super) struct GeneratorUnet;

impl Architecture for GeneratorUnet {
    fn name(&self) -> &'static str {
        "img2img_unet"
    }

    fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        let cshape = require_image_condition(desc)?;
        if desc.latent_dim != 0 {
            return Err(Error::config("img2img_unet takes its latent from dropout; set latent_dim to 0"));
        }
        if desc.target_shape.len() != 3 || desc.target_shape[1..] != cshape[1..] {
            return Err(Error::config(format!(
                "U-Net needs target and condition of equal spatial size, got {:?} and {:?}",
                desc.target_shape, cshape
            )));
        }
        let m = desc.layers.len();
        if m == 0 {
            return Err(Error::config("img2img_unet needs at least one encoder layer"));
        }
        let mut enc_geom = Vec::with_capacity(m);
        for l in &desc.layers {
            match *l {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    padding,
                    ..
                } => enc_geom.push((kernel, stride, padding.unwrap_or((kernel - 1) / 2))),
                _ => return Err(Error::config("img2img_unet encoder layers must be conv")),
            }
        }

        let mut b = NetBuilder::new(desc);
        let c = b.input(INPUT_C, &cshape);
        let mut enc: Vec<Feature> = Vec::with_capacity(m);
        let mut h = c.clone();
        for (i, spec) in desc.layers.iter().enumerate() {
            let name = format!("enc{i}");
            h = b.layer(h, spec, &name)?;
            h = if i == 0 {
                b.act(h, desc.activation)
            } else {
                b.hidden(h, &name)
            };
            enc.push(h.clone());
        }

        let mut d = enc[m - 1].clone();
        for j in 0..m {
            let i = m - 1 - j;
            let (kernel, stride, pad) = enc_geom[i];
            let want = if i == 0 { &c.shape } else { &enc[i - 1].shape };
            let channels = if i == 0 { desc.target_shape[0] } else { want[0] };
            let natural = (d.shape[1] - 1) * stride + kernel;
            let op = (want[1] + 2 * pad)
                .checked_sub(natural)
                .filter(|&op| op < stride && (d.shape[2] - 1) * stride + kernel + op == want[2] + 2 * pad)
                .ok_or_else(|| {
                    Error::config(format!(
                        "decoder stage {j} cannot mirror encoder layer {i}: {:?} -> {:?}",
                        d.shape, want
                    ))
                })?;
            let name = format!("dec{j}");
            d = b.deconv_raw(d, kernel, stride, channels, pad, op, &name)?;
            if i > 0 {
                if desc.batchnorm {
                    d = b.batchnorm(d, &name);
                }
                if desc.dropout > 0.0 {
                    d = b.dropout(d, &format!("drop{j}"), desc.dropout);
                }
                d = b.act(d, super::Activation::Relu);
                d = b.fuse(d, enc[i - 1].clone())?;
            }
        }
        generator_head(b, desc, d)
    }
}
