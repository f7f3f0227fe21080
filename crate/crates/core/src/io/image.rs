//! Binary PNM (P5/P6) codec, optional PNG input, and bilinear resampling of
//! maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::GrayMap;
use crate::ops::resize::ResizePlan;
use crate::tensor::Tensor;

/// 8-bit interleaved image with 1 or 3 channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bytes: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, bytes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::argument(format!(
                "unsupported raster {width}×{height}×{channels}"
            )));
        }
        if bytes.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{} bytes for a {width}×{height}×{channels} raster",
                bytes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            bytes,
        })
    }

    /// 1×C×H×W planar tensor with values `v / 255`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let plane = self.width * self.height;
        let c = self.channels;
        Tensor::from_fn(&[1, c, self.height, self.width], |i| {
            let (ch, p) = (i / plane, i % plane);
            f32::from(self.bytes[p * c + ch]) / 255.0
        })
        .expect("raster dims are positive")
    }

    pub fn to_gray(&self) -> Result<GrayMap> {
        if self.channels != 1 {
            return Err(Error::shape(format!(
                "expected a single-channel image, got {} channels",
                self.channels
            )));
        }
        GrayMap::from_u8(self.width, self.height, &self.bytes)
    }

    pub fn from_gray(map: &GrayMap) -> Self {
        Self {
            width: map.width(),
            height: map.height(),
            channels: 1,
            bytes: map.to_u8(),
        }
    }

    /// P5 for one channel, P6 for three.
    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn parse_pnm(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0, path };
        let channels = match bytes.get(..2) {
            Some(b"P5") => 1,
            Some(b"P6") => 3,
            _ => return Err(cur.error(0, "expected binary PNM magic P5 or P6")),
        };
        cur.pos = 2;
        let (width, _) = cur.header_number("width")?;
        let (height, _) = cur.header_number("height")?;
        let (maxval, maxval_at) = cur.header_number("maxval")?;
        if maxval != 255 {
            return Err(cur.error(maxval_at, format!("maxval {maxval} is not 255")));
        }
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(cur.error(cur.pos, "expected a single whitespace byte before pixel data")),
        }
        let need = width * height * channels;
        let payload = &bytes[cur.pos..];
        if payload.len() < need {
            return Err(cur.error(
                bytes.len(),
                format!("truncated pixel data: {} of {need} bytes", payload.len()),
            ));
        }
        Self::new(width, height, channels, payload[..need].to_vec())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::parse(self.path, offset, message)
    }

    fn skip_space_and_comments(&mut self) -> usize {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return self.pos,
            }
        }
    }

    /// Whitespace-separated decimal and the offset of its first digit.
    fn header_number(&mut self, what: &str) -> Result<(usize, usize)> {
        if self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            return Err(self.error(self.pos, format!("expected whitespace before {what}")));
        }
        let start = self.skip_space_and_comments();
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let digits = &self.bytes[start..self.pos];
        if digits.is_empty() {
            return Err(self.error(start, format!("expected {what}")));
        }
        let n: usize = std::str::from_utf8(digits)
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&n| n > 0 && n <= 1 << 16)
            .ok_or_else(|| self.error(start, format!("invalid {what}")))?;
        Ok((n, start))
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8], path: &Path) -> Result<Raster> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::parse(path, 0, format!("PNG header: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::parse(path, 0, format!("PNG data: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    let pixels = w * h;
    let (out_c, bytes) = match channels {
        1 => (1, data.to_vec()),
        2 => (1, data.chunks(2).map(|p| p[0]).collect()),
        3 => (3, data.to_vec()),
        4 => (3, data.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect()),
        c => return Err(Error::parse(path, 0, format!("unsupported PNG channel count {c}"))),
    };
    debug_assert_eq!(bytes.len(), pixels * out_c);
    Raster::new(w, h, out_c, bytes)
}

/// Reads a `.pgm`/`.ppm` file (or `.png` with the `png` feature).
pub fn load_image(path: &Path) -> Result<Raster> {
    let bytes = super::read_file(path)?;
    if has_extension(path, "png") {
        #[cfg(feature = "png")]
        return decode_png(&bytes, path);
        #[cfg(not(feature = "png"))]
        return Err(Error::parse(path, 0, "PNG support is not enabled in this build"));
    }
    Raster::parse_pnm(&bytes, path)
}

/// Reads a single-channel image as a map in [0, 1].
pub fn load_gray(path: &Path) -> Result<GrayMap> {
    let raster = load_image(path)?;
    raster
        .to_gray()
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Writes `map` as P5 with values `round(v · 255)`.
pub fn save_pgm(path: &Path, map: &GrayMap) -> Result<()> {
    super::write_file(path, &Raster::from_gray(map).encode_pnm())
}

/// Bilinear resize of a prediction to the ground-truth size.
pub fn resample_to(p: &GrayMap, width: usize, height: usize) -> Result<GrayMap> {
    if (p.width(), p.height()) == (width, height) {
        return Ok(p.clone());
    }
    let plan = ResizePlan::new(p.height(), p.width(), height, width)?;
    let mut out = vec![0.0; width * height];
    plan.apply(p.values(), &mut out);
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    GrayMap::new(width, height, out)
}
