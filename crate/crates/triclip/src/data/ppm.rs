//! Binary PPM (P6) read/write and PGM (P5) write. Maxval is fixed at 255.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

const MAX_DIM: usize = 1 << 14;

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// row-major, 3 bytes per pixel
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel-major f64 raster in [0, 1], the encoder's input layout.
    pub fn to_chw(&self) -> Vec<f64> {
        let hw = self.width * self.height;
        let mut out = vec![0.0; 3 * hw];
        for p in 0..hw {
            for c in 0..3 {
                out[c * hw + p] = self.pixels[p * 3 + c] as f64 / 255.0;
            }
        }
        out
    }
}

pub fn to_ppm_bytes(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Parse binary PPM. Comments (`#` to end of line) are allowed in the
/// header; maxval must be 255; the payload length must match exactly.
pub fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let magic = take_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::Format("ppm: expected magic P6".into()));
    }
    let width = parse_dim(bytes, &mut pos, "width")?;
    let height = parse_dim(bytes, &mut pos, "height")?;
    let maxval = parse_dim(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("ppm: maxval must be 255, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("ppm: missing raster separator".into()));
    }
    pos += 1;
    let expect = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::Format("ppm: dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() != expect {
        return Err(Error::Format(format!(
            "ppm: raster has {} bytes, expected {expect}",
            raster.len()
        )));
    }
    Ok(Image {
        width,
        height,
        pixels: raster.to_vec(),
    })
}

fn parse_dim(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = take_token(bytes, pos)?;
    let s = std::str::from_utf8(tok)
        .map_err(|_| Error::Format(format!("ppm: non-ascii {what}")))?;
    let v: usize = s
        .parse()
        .map_err(|_| Error::Format(format!("ppm: bad {what} '{s}'")))?;
    if what != "maxval" && (v == 0 || v > MAX_DIM) {
        return Err(Error::Format(format!("ppm: {what} {v} out of range")));
    }
    Ok(v)
}

fn take_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::Format("ppm: truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_ppm_bytes(img))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_ppm(&bytes)
}

/// Grayscale P5 writer (cluster visualizations).
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    assert_eq!(gray.len(), width * height);
    let path = path.as_ref();
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&out)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        let mut img = Image::new(3, 2);
        for y in 0..2 {
            for x in 0..3 {
                img.put(x, y, [(x * 40) as u8, (y * 90) as u8, 7]);
            }
        }
        img
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let img = sample();
        let bytes = to_ppm_bytes(&img);
        let back = parse_ppm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(to_ppm_bytes(&back), bytes);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n3 2\n# more\n255\n".to_vec();
        bytes.extend_from_slice(&sample().pixels);
        let img = parse_ppm(&bytes).unwrap();
        assert_eq!(img, sample());
    }

    #[test]
    fn rejects_bad_magic_and_maxval() {
        assert!(parse_ppm(b"P5\n1 1\n255\n\x00").is_err());
        assert!(parse_ppm(b"P6\n1 1\n65535\n\x00\x00\x00").is_err());
    }

    #[test]
    fn rejects_wrong_payload_length() {
        assert!(parse_ppm(b"P6\n2 2\n255\n\x00\x00\x00").is_err());
        let mut long = b"P6\n1 1\n255\n".to_vec();
        long.extend_from_slice(&[0; 6]);
        assert!(parse_ppm(&long).is_err());
    }

    #[test]
    fn rejects_zero_and_huge_dimensions() {
        assert!(parse_ppm(b"P6\n0 4\n255\n").is_err());
        assert!(parse_ppm(b"P6\n99999999 99999999\n255\n").is_err());
    }

    #[test]
    fn chw_layout_and_scaling() {
        let mut img = Image::new(2, 1);
        img.put(0, 0, [255, 0, 0]);
        img.put(1, 0, [0, 255, 51]);
        let chw = img.to_chw();
        assert_eq!(chw.len(), 6);
        assert_eq!(chw[0], 1.0); // R plane
        assert_eq!(chw[1], 0.0);
        assert_eq!(chw[2], 0.0); // G plane
        assert_eq!(chw[3], 1.0);
        assert!((chw[5] - 0.2).abs() < 1e-12); // B plane, 51/255
    }
}
