use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diffnum::Tensor;
use crate::error::{Error, Result};

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dims(img: &Tensor) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] if c == 1 || c == 3 => Ok((c, h, w)),
        ref s => Err(Error::Config(format!("expected [1|3, H, W] image, got {s:?}"))),
    }
}

/// Write a `[3, H, W]` (or `[1, H, W]`) image in [0, 1] as 8-bit PNG.
pub fn write_png(img: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = dims(img)?;
    let mut bytes = Vec::with_capacity(h * w * c);
    for i in 0..h * w {
        for ch in 0..c {
            bytes.push(to_byte(img.data()[ch * h * w + i]));
        }
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(if c == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

/// Write the channel mean as binary PGM (P5).
pub fn write_pgm(img: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = dims(img)?;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = (0..h * w)
        .map(|i| to_byte((0..c).map(|ch| img.data()[ch * h * w + i]).sum::<f64>() / c as f64))
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Tensor::full(&[3, 4, 5], 1.0);
        write_pgm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n5 4\n255\n"));
        assert_eq!(bytes.len(), 11 + 20);
        assert!(bytes[11..].iter().all(|&b| b == 255));
    }

    #[test]
    fn png_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        write_png(&Tensor::full(&[3, 8, 8], 0.5), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
