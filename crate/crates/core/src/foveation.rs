//! Space-variant blur around a fixation point using a Laplacian pyramid.
//!
//! The input is decomposed into band-pass levels; each level is attenuated by
//! a radial window around the fixation whose radius grows geometrically with
//! the level, then the pyramid is collapsed. Near the fixation every band
//! survives and the image is reproduced exactly; further out only the coarse
//! bands remain.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{in_bounds, Point};

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Validation(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Validation("image dimensions must be non-zero".into()));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "image data has {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        self.data[((y as usize * self.width as usize + x as usize) * self.channels as usize)
            + c as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u8, value: u8) {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.data[idx] = value;
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        buf.truncate(info.buffer_size());
        let (channels, data) = match info.color_type {
            png::ColorType::Grayscale => (1, buf),
            png::ColorType::Rgb => (3, buf),
            png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(2).map(|p| p[0]).collect()),
            png::ColorType::Rgba => (
                3,
                buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            ),
            other => {
                return Err(Error::Image(format!(
                    "{}: unsupported color type {other:?}",
                    path.display()
                )))
            }
        };
        Image::new(info.width, info.height, channels, data)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width, self.height);
            encoder.set_color(if self.channels == 1 {
                png::ColorType::Grayscale
            } else {
                png::ColorType::Rgb
            });
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder
                .write_header()
                .map_err(|e| Error::Image(e.to_string()))?;
            writer
                .write_image_data(&self.data)
                .map_err(|e| Error::Image(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        std::io::Write::write_all(&mut w, &bytes).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoveationConfig {
    /// Pyramid depth.
    pub levels: usize,
    /// Radius of the full-resolution region in pixels.
    pub sigma0: f64,
    /// Per-level multiplier on the window radius.
    pub growth: f64,
}

impl Default for FoveationConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            sigma0: 60.0,
            growth: 2.0,
        }
    }
}

impl FoveationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Validation(format!(
                "foveation levels must be >= 2, got {}",
                self.levels
            )));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::Validation("foveation sigma0 must be positive".into()));
        }
        if !(self.growth > 1.0) {
            return Err(Error::Validation("foveation growth must exceed 1".into()));
        }
        Ok(())
    }

    /// Fraction of band `level` kept at distance `r` from the fixation.
    ///
    /// Flat inside half the level radius, Gaussian fall-off outside it. The
    /// coarsest band is always kept whole.
    pub fn band_gain(&self, level: usize, r: f64) -> f64 {
        if level + 1 >= self.levels {
            return 1.0;
        }
        let half = 0.5 * self.sigma0 * self.growth.powi(level as i32);
        if r <= half {
            1.0
        } else {
            let t = (r - half) / half;
            (-0.5 * t * t).exp()
        }
    }
}

/// Single-channel float plane used while building the pyramid.
#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    px: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.px[y * self.w + x]
    }

    /// 5-tap binomial blur followed by 2× decimation, edge clamped.
    fn reduce(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w2, h2) = (self.w / 2, self.h / 2);
        // horizontal pass on every row, only at even columns
        let mut tmp = vec![0.0f32; w2 * self.h];
        for y in 0..self.h {
            for x2 in 0..w2 {
                let cx = (2 * x2) as isize;
                let mut acc = 0.0;
                for (i, k) in K.iter().enumerate() {
                    acc += k * self.at(cx + i as isize - 2, y as isize);
                }
                tmp[y * w2 + x2] = acc;
            }
        }
        let tmp = Plane {
            w: w2,
            h: self.h,
            px: tmp,
        };
        let mut out = vec![0.0f32; w2 * h2];
        for y2 in 0..h2 {
            let cy = (2 * y2) as isize;
            for x in 0..w2 {
                let mut acc = 0.0;
                for (i, k) in K.iter().enumerate() {
                    acc += k * tmp.at(x as isize, cy + i as isize - 2);
                }
                out[y2 * w2 + x] = acc;
            }
        }
        Plane {
            w: w2,
            h: h2,
            px: out,
        }
    }

    /// 2× upsampling: zero insertion filtered by the binomial kernel scaled by 4.
    fn expand(&self) -> Plane {
        let (w2, h2) = (self.w * 2, self.h * 2);
        let mut tmp = vec![0.0f32; w2 * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                let xi = x as isize;
                let yi = y as isize;
                tmp[y * w2 + 2 * x] =
                    (self.at(xi - 1, yi) + 6.0 * self.at(xi, yi) + self.at(xi + 1, yi)) / 8.0;
                tmp[y * w2 + 2 * x + 1] = (self.at(xi, yi) + self.at(xi + 1, yi)) / 2.0;
            }
        }
        let tmp = Plane {
            w: w2,
            h: self.h,
            px: tmp,
        };
        let mut out = vec![0.0f32; w2 * h2];
        for y in 0..self.h {
            let yi = y as isize;
            for x in 0..w2 {
                let xi = x as isize;
                out[2 * y * w2 + x] =
                    (tmp.at(xi, yi - 1) + 6.0 * tmp.at(xi, yi) + tmp.at(xi, yi + 1)) / 8.0;
                out[(2 * y + 1) * w2 + x] = (tmp.at(xi, yi) + tmp.at(xi, yi + 1)) / 2.0;
            }
        }
        Plane {
            w: w2,
            h: h2,
            px: out,
        }
    }
}

/// Foveates `image` around `fixation`.
pub fn foveate(image: &Image, fixation: Point, config: &FoveationConfig) -> Result<Image> {
    config.validate()?;
    if !in_bounds(fixation, image.width, image.height) {
        return Err(Error::Contract(format!(
            "fixation ({}, {}) outside {}x{} image",
            fixation.x, fixation.y, image.width, image.height
        )));
    }
    let (w, h) = (image.width as usize, image.height as usize);
    let align = 1usize << config.levels;
    let pw = w.div_ceil(align) * align;
    let ph = h.div_ceil(align) * align;

    // Blend weight of the level-l low-pass image at each pixel: the increase
    // of band gain from level l-1 to l. These sum to one per pixel.
    let levels = config.levels;
    let mut weights = vec![vec![0.0f32; pw * ph]; levels];
    for y in 0..ph {
        for x in 0..pw {
            let r = (x as f64 - fixation.x).hypot(y as f64 - fixation.y);
            let mut prev = 0.0;
            for (l, plane) in weights.iter_mut().enumerate() {
                let gain = config.band_gain(l, r).max(prev);
                plane[y * pw + x] = (gain - prev) as f32;
                prev = gain;
            }
        }
    }

    let channels = image.channels as usize;
    let mut out = vec![0u8; image.data.len()];
    for c in 0..channels {
        let mut base = Plane {
            w: pw,
            h: ph,
            px: vec![0.0; pw * ph],
        };
        for y in 0..ph {
            let sy = y.min(h - 1);
            for x in 0..pw {
                let sx = x.min(w - 1);
                base.px[y * pw + x] = image.data[(sy * w + sx) * channels + c] as f32;
            }
        }

        let mut blended: Vec<f32> = base.px.iter().zip(&weights[0]).map(|(v, wt)| v * wt).collect();
        let mut gaussian = base;
        for (l, weight) in weights.iter().enumerate().skip(1) {
            gaussian = gaussian.reduce();
            let mut up = gaussian.clone();
            for _ in 0..l {
                up = up.expand();
            }
            for ((b, v), wt) in blended.iter_mut().zip(&up.px).zip(weight) {
                *b += v * wt;
            }
        }

        for y in 0..h {
            for x in 0..w {
                let v = blended[y * pw + x].round().clamp(0.0, 255.0);
                out[(y * w + x) * channels + c] = v as u8;
            }
        }
    }
    Image::new(image.width, image.height, image.channels, out)
}
