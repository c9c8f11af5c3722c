use std::path::Path;

use anyhow::{Context, Result};

use wmamba_core::io::{crop, load_pair, pad_to_multiple, read_checkpoint, save_image, ycbcr_to_rgb, ImagePair};
use wmamba_core::model::WMamba;
use wmamba_core::Tensor;

use crate::FuseArgs;

/// Fuse one pair at full resolution: reflect-pad to a multiple of 4, run the
/// network on the luma, crop back, and reattach the visible chroma if any.
pub fn fuse_pair(model: &WMamba<f32>, pair: &ImagePair<f32>) -> Result<Tensor<f32>> {
    let (h, w) = pair.dims();
    let (ir, _) = pad_to_multiple(&pair.ir, 4)?;
    let (vi, _) = pad_to_multiple(&pair.vi_luma, 4)?;
    let batch = |t: Tensor<f32>| {
        let s = t.shape().to_vec();
        t.reshape([1, 1, s[1], s[2]])
    };
    let fused = model.fuse(&batch(ir)?, &batch(vi)?)?;
    let (ph, pw) = (fused.shape()[2], fused.shape()[3]);
    let luma = crop(&fused.reshape([1, ph, pw])?, (h, w))?;
    Ok(match &pair.vi_chroma {
        Some(chroma) => ycbcr_to_rgb(&luma, chroma)?,
        None => luma,
    })
}

pub fn fuse_files(ckpt: &Path, ir: &Path, vi: &Path, out: &Path) -> Result<Tensor<f32>> {
    let (model, _) = read_checkpoint::<f32>(ckpt).with_context(|| format!("reading checkpoint {}", ckpt.display()))?;
    let pair = load_pair::<f32>(ir, vi).context("loading input pair")?;
    let fused = fuse_pair(&model, &pair)?;
    save_image(out, &fused).with_context(|| format!("writing {}", out.display()))?;
    Ok(fused)
}

pub fn run(args: &FuseArgs) -> Result<()> {
    let fused = fuse_files(&args.ckpt, &args.ir, &args.vi, &args.out)?;
    let s = fused.shape();
    println!("wrote {} ({}x{}, {} channel{})", args.out.display(), s[2], s[1], s[0], if s[0] == 1 { "" } else { "s" });
    Ok(())
}
