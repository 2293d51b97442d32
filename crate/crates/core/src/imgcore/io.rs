//! Bit-exact readers and writers: binary PGM (P5), 8/16-bit grayscale PNG,
//! little-endian PFM and a plain CSV dump for disparity maps.
//!
//! 16-bit PNG disparities follow the KITTI convention: a stored value `s`
//! means `s / 256` pixels and `s = 0` means invalid.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use super::{DisparityMap, GrayImage, RoadMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisparityFormat {
    Png16,
    Pfm,
    Csv,
}

impl DisparityFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DisparityFormat::Png16 => "png",
            DisparityFormat::Pfm => "pfm",
            DisparityFormat::Csv => "csv",
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(DisparityFormat::Png16),
            "pfm" => Ok(DisparityFormat::Pfm),
            "csv" => Ok(DisparityFormat::Csv),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }
}

impl FromStr for DisparityFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "png16" | "png" => Ok(DisparityFormat::Png16),
            "pfm" => Ok(DisparityFormat::Pfm),
            "csv" => Ok(DisparityFormat::Csv),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an 8-bit binary PGM or 8-bit grayscale PNG, sniffing the magic bytes.
pub fn load_gray_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let bytes = read_file(path.as_ref())?;
    decode_gray(&bytes)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        let (w, h, depth, data) = decode_png_gray(bytes)?;
        if depth != 8 {
            return Err(Error::UnsupportedDepth(depth));
        }
        GrayImage::new(w, h, data)
    } else {
        Err(Error::UnsupportedFormat(
            "expected binary PGM (P5) or PNG".into(),
        ))
    }
}

/// Writes PGM for a `.pgm` path and PNG for a `.png` path.
pub fn save_gray_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("pgm") => encode_pgm(img),
        Some("png") => encode_png(img.width(), img.height(), png::BitDepth::Eight, img.data())?,
        _ => return Err(Error::UnsupportedFormat(path.display().to_string())),
    };
    write_file(path, &bytes)
}

/// Loads a road mask from an 8-bit image; any non-zero pixel is road.
pub fn load_road_mask(path: impl AsRef<Path>) -> Result<RoadMask> {
    Ok(RoadMask::from_gray(&load_gray_image(path)?))
}

pub fn save_road_mask(mask: &RoadMask, path: impl AsRef<Path>) -> Result<()> {
    save_gray_image(&mask.to_gray(), path)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = [0usize; 4];
    for (i, field) in fields.iter_mut().enumerate() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n') | Some(b'\r')) {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| !c.is_ascii_whitespace()) {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::Malformed("non-ASCII PGM header".into()))?;
        *field = if i == 0 {
            if token != "P5" {
                return Err(Error::UnsupportedFormat(format!("PGM magic {token:?}")));
            }
            0
        } else {
            token
                .parse()
                .map_err(|_| Error::Malformed(format!("PGM header field {token:?}")))?
        };
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(Error::Malformed("PGM header not terminated".into()));
    }
    pos += 1;
    let [_, width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!("PGM maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedDepth(16));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(width, height));
    }
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::new(width, height, payload[..expected].to_vec())
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Malformed(format!("png: {e}"))
}

/// Returns width, height, bit depth and the raw sample bytes (big-endian for
/// 16-bit) of a single-channel PNG.
fn decode_png_gray(bytes: &[u8]) -> Result<(usize, usize, u32, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    let channels = info.color_type.samples();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedChannels(channels));
    }
    let depth = match info.bit_depth {
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => 16,
        other => return Err(Error::UnsupportedDepth(other as u32)),
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(frame.buffer_size());
    Ok((frame.width as usize, frame.height as usize, depth, buf))
}

fn encode_png(width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

pub fn load_disparity_png16<T: Scalar>(path: impl AsRef<Path>) -> Result<DisparityMap<T>> {
    decode_png16(&read_file(path.as_ref())?)
}

pub fn decode_png16<T: Scalar>(bytes: &[u8]) -> Result<DisparityMap<T>> {
    let (w, h, depth, data) = decode_png_gray(bytes)?;
    if depth != 16 {
        return Err(Error::UnsupportedDepth(depth));
    }
    let scale = T::lit(256.0);
    let values = data
        .chunks_exact(2)
        .map(|b| match u16::from_be_bytes([b[0], b[1]]) {
            0 => None,
            s => Some(T::lit(s as f64) / scale),
        })
        .collect();
    DisparityMap::new(w, h, values)
}

/// Valid disparities are stored as `round(d * 256)`, lifted to 1 so that a
/// valid pixel never aliases the invalid sentinel.
pub fn encode_png16<T: Scalar>(map: &DisparityMap<T>) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(map.width() * map.height() * 2);
    for v in 0..map.height() {
        for u in 0..map.width() {
            let s: u16 = match map.get(u, v) {
                None => 0,
                Some(d) => {
                    let d = d.to_f64_lossy();
                    let q = (d * 256.0).round();
                    if q > u16::MAX as f64 {
                        return Err(Error::Overflow { u, v, value: d });
                    }
                    (q as u16).max(1)
                }
            };
            data.extend_from_slice(&s.to_be_bytes());
        }
    }
    encode_png(map.width(), map.height(), png::BitDepth::Sixteen, &data)
}

/// Single-channel little-endian PFM, rows stored bottom to top. Invalid
/// pixels are written as negative infinity.
pub fn encode_pfm<T: Scalar>(map: &DisparityMap<T>) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for v in (0..h).rev() {
        for u in 0..w {
            let x = map
                .get(u, v)
                .and_then(|d| d.to_f32())
                .unwrap_or(f32::NEG_INFINITY);
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Reads a single-channel PFM of either endianness. Non-finite or negative
/// samples decode as invalid.
pub fn decode_pfm<T: Scalar>(bytes: &[u8]) -> Result<DisparityMap<T>> {
    let mut lines = Vec::with_capacity(3);
    let mut pos = 0;
    while lines.len() < 3 {
        let end = bytes[pos..]
            .iter()
            .position(|&c| c == b'\n')
            .ok_or_else(|| Error::Malformed("PFM header truncated".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::Malformed("non-ASCII PFM header".into()))?
            .trim();
        pos += end + 1;
        if !line.is_empty() {
            lines.push(line.to_string());
        }
    }
    match lines[0].as_str() {
        "Pf" => {}
        "PF" => return Err(Error::UnsupportedChannels(3)),
        other => return Err(Error::UnsupportedFormat(format!("PFM magic {other:?}"))),
    }
    let dims: Vec<usize> = lines[1]
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Malformed(format!("PFM dimensions {:?}", lines[1])))?;
    let [w, h] = dims[..] else {
        return Err(Error::Malformed(format!("PFM dimensions {:?}", lines[1])));
    };
    if w == 0 || h == 0 {
        return Err(Error::InvalidDimensions(w, h));
    }
    let scale: f64 = lines[2]
        .parse()
        .map_err(|_| Error::Malformed(format!("PFM scale {:?}", lines[2])))?;
    let little_endian = scale < 0.0;
    let payload = &bytes[pos..];
    let expected = w * h * 4;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let mut data = vec![None; w * h];
    for (i, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (u, row_from_bottom) = (i % w, i / w);
        let v = h - 1 - row_from_bottom;
        if x.is_finite() && x >= 0.0 {
            data[v * w + u] = T::from(x);
        }
    }
    DisparityMap::new(w, h, data)
}

/// One line per raster row, comma separated, `inv` for invalid pixels.
/// Values use the shortest representation that parses back exactly.
pub fn encode_csv<T: Scalar>(map: &DisparityMap<T>) -> Vec<u8> {
    let mut out = String::new();
    for v in 0..map.height() {
        for u in 0..map.width() {
            if u > 0 {
                out.push(',');
            }
            match map.get(u, v) {
                Some(d) => out.push_str(&d.to_string()),
                None => out.push_str("inv"),
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn decode_csv<T: Scalar + FromStr>(bytes: &[u8]) -> Result<DisparityMap<T>> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| Error::Malformed("CSV is not UTF-8".into()))?;
    let mut width = None;
    let mut data = Vec::new();
    let mut height = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let before = data.len();
        for cell in line.split(',') {
            let cell = cell.trim();
            if cell == "inv" {
                data.push(None);
            } else {
                let x = cell
                    .parse::<T>()
                    .map_err(|_| Error::Malformed(format!("CSV cell {cell:?}")))?;
                data.push(Some(x));
            }
        }
        let row_len = data.len() - before;
        match width {
            None => width = Some(row_len),
            Some(w) if w != row_len => {
                return Err(Error::Malformed(format!(
                    "CSV row {height} has {row_len} cells, expected {w}"
                )))
            }
            _ => {}
        }
        height += 1;
    }
    DisparityMap::new(width.unwrap_or(0), height, data)
}

pub fn save_disparity<T: Scalar>(
    map: &DisparityMap<T>,
    path: impl AsRef<Path>,
    format: DisparityFormat,
) -> Result<()> {
    let bytes = match format {
        DisparityFormat::Png16 => encode_png16(map)?,
        DisparityFormat::Pfm => encode_pfm(map),
        DisparityFormat::Csv => encode_csv(map),
    };
    write_file(path.as_ref(), &bytes)
}

/// Loads a disparity map, choosing the decoder from the file extension.
pub fn load_disparity<T: Scalar + FromStr>(path: impl AsRef<Path>) -> Result<DisparityMap<T>> {
    let path = path.as_ref();
    let format = DisparityFormat::from_path(path)?;
    let bytes = read_file(path)?;
    match format {
        DisparityFormat::Png16 => decode_png16(&bytes),
        DisparityFormat::Pfm => decode_pfm(&bytes),
        DisparityFormat::Csv => decode_csv(&bytes),
    }
}
