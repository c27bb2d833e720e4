//! PNG reading and writing.
//!
//! Images are 8-bit RGB or grayscale (an alpha channel is ignored) mapped to
//! `[0, 1]`. Masks are read the same way; any nonzero pixel is inside.

use std::path::Path;

use ::image::{ColorType, DynamicImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::ImageFormat {
            path: path.to_path_buf(),
            message: "not a PNG file".into(),
        });
    }
    let img = reader.decode().map_err(|e| Error::ImageFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => Ok(img),
        other => Err(Error::ImageFormat {
            path: path.to_path_buf(),
            message: format!(
                "unsupported PNG pixel format {other:?}; only 8-bit RGB or gray is accepted"
            ),
        }),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let rgb = decode(path.as_ref())?.to_rgb8();
    Ok(Image::from_fn(
        rgb.width() as usize,
        rgb.height() as usize,
        |x, y| {
            rgb.get_pixel(x as u32, y as u32)
                .0
                .map(|v| v as f64 / 255.0)
        },
    ))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = decode(path.as_ref())?.to_rgb8();
    Ok(Mask::from_fn(
        img.width() as usize,
        img.height() as usize,
        |x, y| img.get_pixel(x as u32, y as u32).0.iter().any(|&v| v != 0),
    ))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb8(image: &Image) -> RgbImage {
    RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        ::image::Rgb(image.rgb(x as usize, y as usize).map(quantize))
    })
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_rgb8(image)
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            ::image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::ImageFormat {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let img = Image::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.get(x, y) {
            [1.0; 3]
        } else {
            [0.0; 3]
        }
    });
    save_image(&img, path)
}
