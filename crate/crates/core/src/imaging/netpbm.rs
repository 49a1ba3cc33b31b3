//! Binary Netpbm: P5 (graymap) and P6 (pixmap).
//!
//! Header tokens are separated by whitespace and may be interleaved with
//! `#` comments running to end of line. Exactly one whitespace byte follows
//! the max value, then the raster. Samples wider than a byte (max value above
//! 255) are big-endian `u16`. Bytes after the first image are ignored.

use super::RgbImage;

/// Largest image side accepted, to bound allocations on hostile input.
pub const MAX_SIDE: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Gray,
    Rgb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub kind: Kind,
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
}

impl Header {
    fn channels(&self) -> usize {
        match self.kind {
            Kind::Gray => 1,
            Kind::Rgb => 3,
        }
    }

    fn sample_bytes(&self) -> usize {
        if self.max_value > 255 {
            2
        } else {
            1
        }
    }

    pub fn raster_len(&self) -> usize {
        self.width * self.height * self.channels() * self.sample_bytes()
    }
}

pub fn is_netpbm(bytes: &[u8]) -> bool {
    matches!(bytes, [b'P', b'5' | b'6', ..])
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(usize::from(b - b'0')))
                .ok_or_else(|| format!("{what} overflows"))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(match self.bytes.get(self.pos) {
                None => format!("header ends before {what}"),
                Some(&b) => format!("expected {what}, found byte 0x{b:02x}"),
            });
        }
        Ok(value)
    }
}

/// Parses the header and returns it with the raster bytes that follow.
pub fn parse_header(bytes: &[u8]) -> Result<(Header, &[u8]), String> {
    let kind = match bytes {
        [b'P', b'5', ..] => Kind::Gray,
        [b'P', b'6', ..] => Kind::Rgb,
        _ => return Err("missing P5/P6 magic".into()),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let max_value = cur.number("max value")?;
    if width == 0 || height == 0 {
        return Err(format!("zero-sized image {width}x{height}"));
    }
    if width > MAX_SIDE || height > MAX_SIDE {
        return Err(format!("image {width}x{height} exceeds {MAX_SIDE} pixels per side"));
    }
    if max_value == 0 || max_value > usize::from(u16::MAX) {
        return Err(format!("max value {max_value} outside 1..=65535"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(&b) => return Err(format!("expected whitespace after max value, found byte 0x{b:02x}")),
        None => return Err("header ends before raster".into()),
    }
    let header = Header { kind, width, height, max_value: max_value as u16 };
    Ok((header, &bytes[cur.pos..]))
}

/// Decodes a P5 or P6 image to 8-bit RGB. Gray samples are replicated into
/// all three channels; samples are rescaled to 0..=255 when the max value differs.
pub fn decode(bytes: &[u8]) -> Result<RgbImage, String> {
    let (header, raster) = parse_header(bytes)?;
    let need = header.raster_len();
    if raster.len() < need {
        return Err(format!(
            "raster truncated: {} of {need} bytes for {}x{}",
            raster.len(),
            header.width,
            header.height
        ));
    }
    let raster = &raster[..need];
    let max = u32::from(header.max_value);
    let scale = |v: u32| -> u8 {
        let v = v.min(max);
        if max == 255 {
            v as u8
        } else {
            ((v * 255 + max / 2) / max) as u8
        }
    };
    let samples: Vec<u8> = if header.sample_bytes() == 2 {
        raster.chunks_exact(2).map(|p| scale(u32::from(u16::from_be_bytes([p[0], p[1]])))).collect()
    } else {
        raster.iter().map(|&v| scale(u32::from(v))).collect()
    };
    let pixels = match header.kind {
        Kind::Gray => samples.iter().map(|&g| [g, g, g]).collect(),
        Kind::Rgb => samples.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect(),
    };
    Ok(RgbImage { width: header.width, height: header.height, pixels })
}

/// Encodes an 8-bit graymap.
pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}
