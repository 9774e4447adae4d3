use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn from_dynamic(img: DynamicImage) -> Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    if gray {
        let buf = img.to_luma8();
        Tensor::new(1, h, w, buf.as_raw().iter().map(|&v| v as f32 / 255.0).collect())
    } else {
        let buf = img.to_rgb8();
        let raw = buf.as_raw();
        Tensor::from_fn(3, h, w, |c, y, x| raw[(y * w + x) * 3 + c] as f32 / 255.0)
    }
}

/// Decodes a PNG or baseline JPEG into a `C×H×W` tensor in `[0, 1]`, `C ∈ {1, 3}`.
pub fn decode_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bytes(&bytes).map_err(|msg| Error::Decode {
        path: path.to_path_buf(),
        msg,
    })
}

fn decode_bytes(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    from_dynamic(img).map_err(|e| e.to_string())
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Interleaved 8-bit samples, `round(v·255)`.
fn to_bytes(x: &Tensor) -> Result<(Vec<u8>, ExtendedColorType)> {
    let (c, h, w) = x.shape();
    let color = match c {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => {
            return Err(Error::Unsupported(format!(
                "images need 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = Vec::with_capacity(c * h * w);
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                out.push(quantize(x.get(ch, y, xx)));
            }
        }
    }
    Ok((out, color))
}

fn to_dynamic(x: &Tensor) -> Result<DynamicImage> {
    let (bytes, color) = to_bytes(x)?;
    let (w, h) = (x.width() as u32, x.height() as u32);
    Ok(match color {
        ExtendedColorType::L8 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized")),
    })
}

/// Encodes as an 8-bit PNG in memory.
pub fn encode_png(x: &Tensor) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_dynamic(x)?
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Contract(format!("png encoding failed: {e}")))?;
    Ok(buf.into_inner())
}

/// Writes an 8-bit PNG with `value = round(v·255)`.
pub fn emit_image(x: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_png(x)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Baseline JPEG encode at `quality`, then decode back to `[0, 1]`.
pub fn jpeg_roundtrip(x: &Tensor, quality: u8) -> Result<Tensor> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Domain(format!("JPEG quality must be in 1..=100, got {quality}")));
    }
    let (bytes, color) = to_bytes(x)?;
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(&bytes, x.width() as u32, x.height() as u32, color)
        .map_err(|e| Error::Contract(format!("jpeg encoding failed: {e}")))?;
    let img = image::load_from_memory_with_format(&buf, ImageFormat::Jpeg)
        .map_err(|e| Error::Contract(format!("jpeg decoding failed: {e}")))?;
    let out = from_dynamic(img)?;
    if out.shape() != x.shape() {
        return Err(Error::Contract(format!(
            "jpeg round trip changed shape {:?} -> {:?}",
            x.shape(),
            out.shape()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_noise(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(0..=255u8) as f32 / 255.0).unwrap()
    }

    #[test]
    fn white_png_decodes_to_ones() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        RgbImage::from_pixel(2, 2, image::Rgb([255, 255, 255])).save(&p).unwrap();
        let t = decode_image(&p).unwrap();
        assert_eq!(t.shape(), (3, 2, 2));
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn grayscale_png_has_one_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        GrayImage::from_pixel(3, 5, image::Luma([10])).save(&p).unwrap();
        assert_eq!(decode_image(&p).unwrap().shape(), (1, 5, 3));
    }

    #[test]
    fn emit_then_decode_is_exact_on_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        for c in [1, 3] {
            let x = grid_noise(c, 7, 9, c as u64);
            let p = dir.path().join(format!("x{c}.png"));
            emit_image(&x, &p).unwrap();
            assert_eq!(decode_image(&p).unwrap(), x);
        }
        let black = Tensor::zeros(1, 4, 4).unwrap();
        let p = dir.path().join("black.png");
        emit_image(&black, &p).unwrap();
        assert!(image::open(&p).unwrap().to_luma8().pixels().all(|px| px.0 == [0]));
        let white = Tensor::filled(3, 4, 4, 1.0).unwrap();
        emit_image(&white, &p).unwrap();
        assert!(image::open(&p).unwrap().to_rgb8().pixels().all(|px| px.0 == [255; 3]));
    }

    #[test]
    fn corrupt_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not an image").unwrap();
        assert!(matches!(decode_image(&p), Err(Error::Decode { .. })));
        assert!(matches!(decode_image(&dir.path().join("none.png")), Err(Error::Io { .. })));
    }

    #[test]
    fn two_channel_tensor_cannot_be_written() {
        let x = Tensor::zeros(2, 4, 4).unwrap();
        assert!(matches!(encode_png(&x), Err(Error::Unsupported(_))));
    }

    #[test]
    fn jpeg_high_quality_on_smooth_gradient() {
        let x = Tensor::from_fn(3, 32, 32, |c, y, xx| ((y + xx + 4 * c) as f32 / 70.0).min(1.0)).unwrap();
        let y = jpeg_roundtrip(&x, 100).unwrap();
        assert_eq!(y.shape(), x.shape());
        let worst = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst < 0.02, "max deviation {worst}");
    }

    #[test]
    fn jpeg_error_grows_as_quality_drops() {
        let x = grid_noise(1, 32, 32, 5);
        let mae = |q| {
            let y = jpeg_roundtrip(&x, q).unwrap();
            x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / x.len() as f64
        };
        assert!(mae(10) > mae(90));
        assert!(matches!(jpeg_roundtrip(&x, 0), Err(Error::Domain(_))));
        assert!(matches!(jpeg_roundtrip(&x, 101), Err(Error::Domain(_))));
    }
}
