//! Portable float map: `PF\n<w> <h>\n<scale>\n` then bottom-to-top scanlines
//! of RGB float32. A negative scale means little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

use super::atomic_write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

pub fn encode_pfm(image: &Image, endian: Endian) -> Vec<u8> {
    let scale = match endian {
        Endian::Little => "-1.0",
        Endian::Big => "1.0",
    };
    let mut out = format!("PF\n{} {}\n{scale}\n", image.width, image.height).into_bytes();
    out.reserve(4 * image.data.len());
    let row = 3 * image.width as usize;
    for y in (0..image.height as usize).rev() {
        for v in &image.data[y * row..(y + 1) * row] {
            match endian {
                Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
                Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
            }
        }
    }
    out
}

/// Reads one whitespace-delimited header token, consuming the single
/// whitespace byte that ends it.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    let t = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Format("non-ASCII PFM header".into()))?;
    *pos += 1;
    Ok(t)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    match token(bytes, &mut pos)? {
        "PF" => {}
        "Pf" => return Err(Error::Format("greyscale PFM is not supported".into())),
        m => return Err(Error::Format(format!("bad PFM magic {m:?}"))),
    }
    let dim = |t: &str| -> Result<u32> {
        match t.parse::<u32>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Format(format!("bad PFM dimension {t:?}"))),
        }
    };
    let width = dim(token(bytes, &mut pos)?)?;
    let height = dim(token(bytes, &mut pos)?)?;
    let scale: f64 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    let endian = if scale < 0.0 {
        Endian::Little
    } else if scale > 0.0 {
        Endian::Big
    } else {
        return Err(Error::Format("PFM scale must be non-zero".into()));
    };
    let n = 3 * width as usize * height as usize;
    let payload = &bytes[pos..];
    if payload.len() != 4 * n {
        return Err(Error::Format(format!("PFM payload is {} bytes, expected {}", payload.len(), 4 * n)));
    }
    let mut data = vec![0.0f32; n];
    let row = 3 * width as usize;
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = match endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        };
        let (src_row, col) = (i / row, i % row);
        data[(height as usize - 1 - src_row) * row + col] = v;
    }
    Image::from_data(width, height, data)
}

pub fn write_pfm(path: &Path, image: &Image) -> Result<()> {
    atomic_write(path, &encode_pfm(image, Endian::Little))
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream};

    fn random_image(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = RngStream::derive(seed, Purpose::Test, &[]);
        let data = (0..3 * w * h).map(|_| f32::from_bits(rng.below(u32::MAX as usize) as u32 & 0x7f7f_ffff)).collect();
        Image::from_data(w, h, data).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        for (w, h) in [(1, 1), (7, 3), (16, 16)] {
            let img = random_image(w, h, w as u64);
            for e in [Endian::Little, Endian::Big] {
                let back = decode_pfm(&encode_pfm(&img, e)).unwrap();
                assert_eq!(back.width, w);
                let a: Vec<u32> = img.data.iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn hand_assembled_pixel() {
        let mut bytes = b"PF\n1 1\n-1.0\n".to_vec();
        for v in [0.5f32, 1.0, -2.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.data, vec![0.5, 1.0, -2.0]);
    }

    #[test]
    fn big_endian_fixture_and_row_order() {
        // 1x2 image, bottom row stored first
        let mut bytes = b"PF\n1 2\n1.0\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.get(0, 0).r, 4.0);
        assert_eq!(img.get(0, 1).b, 3.0);
    }

    #[test]
    fn malformed_inputs() {
        let good = encode_pfm(&random_image(2, 2, 1), Endian::Little);
        assert!(matches!(decode_pfm(&good[..good.len() - 1]), Err(Error::Format(_))));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(decode_pfm(&extra), Err(Error::Format(_))));
        for bad in [&b"P6\n1 1\n-1\n"[..], b"PF\n0 1\n-1\n", b"PF\n1 1\n0\n", b"PF\n1 x\n-1\n", b"PF\n1", b""] {
            assert!(matches!(decode_pfm(bad), Err(Error::Format(_))), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.pfm");
        let img = random_image(5, 4, 9);
        write_pfm(&p, &img).unwrap();
        assert_eq!(read_pfm(&p).unwrap(), img);
        assert!(matches!(read_pfm(&dir.path().join("missing.pfm")), Err(Error::Io { .. })));
    }
}
