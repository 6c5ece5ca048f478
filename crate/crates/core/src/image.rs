//! In-memory images and the binary PPM/PGM formats.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major image with interleaved channels and values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { width, height, channels, data }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::dim(format!("{} values for a {width}x{height}x{channels} image", data.len())));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// One channel as a separate grayscale image.
    pub fn channel(&self, c: usize) -> Image {
        Image::from_fn(self.width, self.height, 1, |x, y, _| self.get(x, y, c))
    }

    pub fn clamped(&self) -> Image {
        Image { data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(), ..self.clone() }
    }

    /// Pixel-center coordinates in `(0, 1)²`, row-major.
    pub fn pixel_coords(width: usize, height: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                out.push([(x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64]);
            }
        }
        out
    }

    /// Binary `P6` with 8-bit samples (grayscale images are replicated).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in 0..self.pixels() {
            for c in 0..3 {
                let v = self.data[p * self.channels + c.min(self.channels - 1)];
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    /// Binary `P5` with 16-bit big-endian samples of the first channel.
    pub fn to_pgm16(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for p in 0..self.pixels() {
            let v = self.data[p * self.channels];
            out.extend_from_slice(&((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes());
        }
        out
    }

    /// Parses binary `P5` (8 or 16 bit) and `P6` files.
    pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::data("truncated image header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token()?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(Error::data(format!("unsupported image magic {m}"))),
        };
        let num = |s: String| s.parse::<usize>().map_err(|_| Error::data(format!("bad header number {s}")));
        let width = num(token()?)?;
        let height = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::data(format!("bad maxval {maxval}")));
        }
        let body = &bytes[pos + 1..];
        let wide = maxval > 255;
        let n = width * height * channels;
        if body.len() != n * if wide { 2 } else { 1 } {
            return Err(Error::data("image payload size does not match header"));
        }
        let data = if wide {
            body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / maxval as f64).collect()
        } else {
            body.iter().map(|&b| b as f64 / maxval as f64).collect()
        };
        Image::from_data(width, height, channels, data)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, &self.to_ppm())
    }

    pub fn save_pgm16(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, &self.to_pgm16())
    }

    pub fn load(path: &Path) -> Result<Image> {
        Image::decode_pnm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Rounds to the 16-bit grid, so that a PGM round trip is exact.
    pub fn quantized16(&self) -> Image {
        Image { data: self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0).collect(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_round_trip_is_exact() {
        let img = Image::from_fn(5, 3, 1, |x, y, _| (x * 3 + y) as f64 / 17.0).quantized16();
        assert_eq!(Image::decode_pnm(&img.to_pgm16()).unwrap(), img);
    }

    #[test]
    fn ppm_round_trip_on_8bit_grid() {
        let img = Image::from_fn(4, 2, 3, |x, y, c| ((x + y * 4) * 3 + c) as f64 / 255.0);
        assert_eq!(Image::decode_pnm(&img.to_ppm()).unwrap(), img);
    }

    #[test]
    fn header_errors() {
        assert!(Image::decode_pnm(b"P3\n1 1\n255\n0").is_err());
        assert!(Image::decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(Image::decode_pnm(b"P5\n# c\n1 1\n255\n\x07").is_ok());
    }

    #[test]
    fn coords_are_pixel_centers() {
        let c = Image::pixel_coords(2, 2);
        assert_eq!(c, vec![[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]);
    }
}
