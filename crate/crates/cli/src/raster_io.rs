use std::path::Path;

use anyhow::{bail, Context};
use image::{GrayImage, RgbImage};

use roadgraph::imaging::Tile;

/// 8-bit PNG of a 1- or 3-channel tile; probabilities scale to 0..=255.
pub fn save_png(t: &Tile<f64>, path: &Path) -> anyhow::Result<()> {
    let (w, h) = (t.width() as u32, t.height() as u32);
    let bytes = t.to_u8();
    let r = match t.channels() {
        1 => GrayImage::from_raw(w, h, bytes).expect("sized").save(path),
        3 => RgbImage::from_raw(w, h, bytes).expect("sized").save(path),
        c => bail!("cannot write a {c}-channel tile"),
    };
    r.with_context(|| format!("writing {}", path.display()))
}

/// Binary mask as {0, 255}.
pub fn save_mask(t: &Tile<f64>, path: &Path) -> anyhow::Result<()> {
    let mask: Vec<u8> = t
        .to_mask()
        .into_iter()
        .map(|b| if b { 255 } else { 0 })
        .collect();
    GrayImage::from_raw(t.width() as u32, t.height() as u32, mask)
        .expect("sized")
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> anyhow::Result<image::DynamicImage> {
    image::open(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_rgb(path: &Path) -> anyhow::Result<Tile<f64>> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Tile::from_u8(w as usize, h as usize, 3, img.as_raw())?)
}

pub fn load_gray(path: &Path) -> anyhow::Result<Tile<f64>> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Tile::from_u8(w as usize, h as usize, 1, img.as_raw())?)
}
