//! Raster images and their lossless netpbm-family codecs.
//!
//! * PPM (`P6`, maxval 255) for 8-bit RGB.
//! * PGM (`P5`, maxval 255 or 65535) for 8/16-bit single channel, used for
//!   semantic labels. 16-bit samples are big-endian per the netpbm definition.
//! * PFM (`Pf` one channel, `PF` three channels) for 32-bit float depth,
//!   disparity and flow. Rows are stored bottom-to-top; a negative scale
//!   marks little-endian payloads.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::GeomIoError;

#[derive(Debug, Clone, PartialEq)]
pub enum PixelData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl PixelData {
    fn len(&self) -> usize {
        match self {
            PixelData::U8(v) => v.len(),
            PixelData::U16(v) => v.len(),
            PixelData::F32(v) => v.len(),
        }
    }
}

/// Row-major interleaved image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: PixelData,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: PixelData) -> Result<Self, GeomIoError> {
        if !(1..=4).contains(&channels) {
            return Err(GeomIoError::InvalidParameter(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(GeomIoError::InvalidParameter(format!(
                "buffer holds {} samples, {width}x{height}x{channels} needs {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn rgb8(width: usize, height: usize, data: Vec<u8>) -> Result<Self, GeomIoError> {
        Self::new(width, height, 3, PixelData::U8(data))
    }

    pub fn gray8(width: usize, height: usize, data: Vec<u8>) -> Result<Self, GeomIoError> {
        Self::new(width, height, 1, PixelData::U8(data))
    }

    pub fn labels16(width: usize, height: usize, data: Vec<u16>) -> Result<Self, GeomIoError> {
        Self::new(width, height, 1, PixelData::U16(data))
    }

    pub fn float(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, GeomIoError> {
        Self::new(width, height, channels, PixelData::F32(data))
    }

    /// Single-channel depth map; every value must be positive or `+inf`.
    pub fn depth(width: usize, height: usize, data: Vec<f32>) -> Result<Self, GeomIoError> {
        let img = Self::float(width, height, 1, data)?;
        img.validate_depth()?;
        Ok(img)
    }

    pub fn validate_depth(&self) -> Result<(), GeomIoError> {
        let d = self.as_f32().ok_or_else(|| GeomIoError::InvalidParameter("depth must be float".into()))?;
        if self.channels != 1 {
            return Err(GeomIoError::InvalidParameter("depth must have one channel".into()));
        }
        if let Some(i) = d.iter().position(|&z| !(z > 0.0)) {
            return Err(GeomIoError::InvalidDepth { index: i, value: d[i] });
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &PixelData {
        &self.data
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            PixelData::U8(v) => Some(v),
            _ => None,
        }
    }
    pub fn as_u16(&self) -> Option<&[u16]> {
        match &self.data {
            PixelData::U16(v) => Some(v),
            _ => None,
        }
    }
    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            PixelData::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Sample `c` at pixel `(u, v)` widened to f64.
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        let i = (v * self.width + u) * self.channels + c;
        match &self.data {
            PixelData::U8(d) => d[i] as f64,
            PixelData::U16(d) => d[i] as f64,
            PixelData::F32(d) => d[i] as f64,
        }
    }

    /// Luma (ITU-R BT.601 weights) for RGB, identity for one channel.
    pub fn to_gray_f32(&self) -> Vec<f32> {
        let n = self.width * self.height;
        (0..n)
            .map(|p| {
                let (u, v) = (p % self.width, p / self.width);
                if self.channels >= 3 {
                    (0.299 * self.get(u, v, 0) + 0.587 * self.get(u, v, 1) + 0.114 * self.get(u, v, 2)) as f32
                } else {
                    self.get(u, v, 0) as f32
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Pgm,
    Pfm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "pgm" => Some(ImageFormat::Pgm),
            "pfm" => Some(ImageFormat::Pfm),
            _ => None,
        }
    }
}

/// Read whitespace-separated header tokens, honouring `#` comments, and
/// return them with the offset of the single whitespace byte that ends the
/// last token.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), GeomIoError> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(GeomIoError::Format("image header truncated".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(GeomIoError::Format("image header truncated".into()));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str) -> Result<usize, GeomIoError> {
    tok.parse().map_err(|_| GeomIoError::Format(format!("bad image dimension {tok:?}")))
}

pub fn load_image(path: &Path) -> Result<Image, GeomIoError> {
    decode_image(&fs::read(path)?)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image, GeomIoError> {
    let magic = bytes.get(..2).ok_or_else(|| GeomIoError::Format("file too short".into()))?;
    match magic {
        b"P6" | b"P5" => {
            let (tok, off) = header_tokens(bytes, 4)?;
            let (w, h) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
            let maxval: u32 = tok[3].parse().map_err(|_| GeomIoError::Format("bad maxval".into()))?;
            let channels = if magic == b"P6" { 3 } else { 1 };
            let n = w * h * channels;
            let payload = &bytes[off..];
            match maxval {
                255 => {
                    if payload.len() < n {
                        return Err(GeomIoError::TruncatedPayload { expected: n, found: payload.len() });
                    }
                    Image::new(w, h, channels, PixelData::U8(payload[..n].to_vec()))
                }
                65535 if channels == 1 => {
                    if payload.len() < 2 * n {
                        return Err(GeomIoError::TruncatedPayload { expected: 2 * n, found: payload.len() });
                    }
                    let data = payload[..2 * n].chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
                    Image::new(w, h, 1, PixelData::U16(data))
                }
                other => Err(GeomIoError::Format(format!("unsupported maxval {other}"))),
            }
        }
        b"PF" | b"Pf" => {
            let (tok, off) = header_tokens(bytes, 4)?;
            let (w, h) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
            let scale: f64 = tok[3].parse().map_err(|_| GeomIoError::Format("bad PFM scale".into()))?;
            let channels = if magic == b"PF" { 3 } else { 1 };
            let n = w * h * channels;
            let payload = &bytes[off..];
            if payload.len() < 4 * n {
                return Err(GeomIoError::TruncatedPayload { expected: 4 * n, found: payload.len() });
            }
            let little = scale < 0.0;
            let mut data = vec![0f32; n];
            let row = w * channels;
            for (file_row, chunk) in payload[..4 * n].chunks_exact(4 * row.max(1)).enumerate().take(h) {
                let dst_row = h - 1 - file_row;
                for (k, b) in chunk.chunks_exact(4).enumerate() {
                    let b = [b[0], b[1], b[2], b[3]];
                    data[dst_row * row + k] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                }
            }
            Image::new(w, h, channels, PixelData::F32(data))
        }
        _ => Err(GeomIoError::Format(format!("unknown image magic {:?}", String::from_utf8_lossy(magic)))),
    }
}

pub fn encode_image(img: &Image, format: ImageFormat) -> Result<Vec<u8>, GeomIoError> {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut out = Vec::new();
    match (format, &img.data) {
        (ImageFormat::Ppm, PixelData::U8(d)) if c == 3 => {
            write!(out, "P6\n{w} {h}\n255\n")?;
            out.extend_from_slice(d);
        }
        (ImageFormat::Pgm, PixelData::U8(d)) if c == 1 => {
            write!(out, "P5\n{w} {h}\n255\n")?;
            out.extend_from_slice(d);
        }
        (ImageFormat::Pgm, PixelData::U16(d)) if c == 1 => {
            write!(out, "P5\n{w} {h}\n65535\n")?;
            for v in d {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        (ImageFormat::Pfm, PixelData::F32(d)) if c == 1 || c == 3 => {
            let magic = if c == 3 { "PF" } else { "Pf" };
            write!(out, "{magic}\n{w} {h}\n-1.0\n")?;
            let row = w * c;
            for r in (0..h).rev() {
                for v in &d[r * row..(r + 1) * row] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        _ => {
            return Err(GeomIoError::Format(format!(
                "cannot encode {c}-channel {:?} image as {format:?}",
                std::mem::discriminant(&img.data)
            )))
        }
    }
    Ok(out)
}

pub fn save_image(img: &Image, path: &Path, format: ImageFormat) -> Result<(), GeomIoError> {
    fs::write(path, encode_image(img, format)?)?;
    Ok(())
}

/// Save with the codec implied by the extension.
pub fn save_image_auto(img: &Image, path: &Path) -> Result<(), GeomIoError> {
    let format = ImageFormat::from_path(path)
        .ok_or_else(|| GeomIoError::Format(format!("unknown image extension: {}", path.display())))?;
    save_image(img, path, format)
}
