use std::path::Path;

use anyhow::{Context, Result};

use wmamba_core::io::image::to_bytes;
use wmamba_core::io::{load_image, rgb_to_ycbcr};
use wmamba_metrics::{evaluate, to_csv, to_json, GrayImage, Metric, MetricConfig};

use crate::{EvalArgs, Format};

/// Load an image as 8-bit gray; RGB is reduced to its luma.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = load_image::<f64>(path).with_context(|| format!("loading {}", path.display()))?;
    let luma = if img.shape()[0] == 3 { rgb_to_ycbcr(&img)?.0 } else { img };
    let (h, w) = (luma.shape()[1], luma.shape()[2]);
    Ok(GrayImage::new(w, h, to_bytes(&luma))?)
}

pub fn eval_files(ir: &Path, vi: &Path, fused: &Path, metrics: &[Metric]) -> Result<Vec<(Metric, f64)>> {
    let (ir, vi, fused) = (load_gray(ir)?, load_gray(vi)?, load_gray(fused)?);
    Ok(evaluate(&ir, &vi, &fused, metrics, &MetricConfig::default())?)
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let metrics = Metric::parse_list(&args.metrics)?;
    let scores = eval_files(&args.ir, &args.vi, &args.fused, &metrics)?;
    match args.format {
        Format::Json => println!("{}", to_json(&scores)),
        Format::Csv => print!("{}", to_csv(&scores)),
    }
    Ok(())
}
