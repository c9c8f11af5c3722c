//! Image files, color conversion, padding, training pairs and checkpoints.

pub mod checkpoint;
pub mod color;
pub mod data;
pub mod image;
pub mod pad;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, OptimizerInfo};
pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use data::{find_pairs, load_dir, load_pair, sample_patches, sample_patches_with, ImagePair, Patch};
pub use image::{load_image, save_image};
pub use pad::{crop, pad_to_multiple};
