//! Binary PGM (P5) and PPM (P6) with a maximum value of 255.

use oilsense_core::enhance::{ColorImage, GrayImage, Image};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PnmError {
    #[error("unsupported magic {0:?}; expected P5 or P6")]
    Magic(String),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("bad header field `{0}`")]
    BadField(String),
    #[error("maximum value {0} unsupported; only 255 is accepted")]
    MaxValue(u32),
    #[error("pixel data holds {found} bytes, expected {expected}")]
    PixelCount { expected: usize, found: usize },
    #[error("zero-sized image")]
    Empty,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&str, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::TruncatedHeader);
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| PnmError::BadField("non-ascii".into()))
    }

    fn number(&mut self) -> Result<u32, PnmError> {
        let t = self.token()?;
        t.parse().map_err(|_| PnmError::BadField(t.to_string()))
    }
}

pub fn read_pnm(bytes: &[u8]) -> Result<Image, PnmError> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?.to_string();
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(PnmError::Magic(magic)),
    };
    let width = h.number()? as usize;
    let height = h.number()? as usize;
    let maxval = h.number()?;
    if maxval != 255 {
        return Err(PnmError::MaxValue(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PnmError::Empty);
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PnmError::TruncatedHeader);
    }
    let data = &bytes[h.pos + 1..];
    let expected = width * height * channels;
    if data.len() != expected {
        return Err(PnmError::PixelCount { expected, found: data.len() });
    }
    Ok(if channels == 1 {
        Image::Gray(GrayImage::new(width, height, data.to_vec()).map_err(|_| PnmError::Empty)?)
    } else {
        let px = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Image::Color(ColorImage::new(width, height, px).map_err(|_| PnmError::Empty)?)
    })
}

pub fn write_pnm(img: &Image) -> Vec<u8> {
    let (w, h) = img.dims();
    match img {
        Image::Gray(g) => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(g.pixels());
            out
        }
        Image::Color(c) => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend(c.pixels().iter().flatten());
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_and_whitespace() {
        let mut bytes = b"P5 # gray\n2\t1\n# max\n255\n".to_vec();
        bytes.extend([7, 9]);
        let Image::Gray(g) = read_pnm(&bytes).unwrap() else { panic!("expected gray") };
        assert_eq!((g.width(), g.height(), g.pixels()), (2, 1, &[7u8, 9][..]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(read_pnm(b"P3\n1 1\n255\n"), Err(PnmError::Magic(_))));
        assert!(matches!(read_pnm(b"P5\n1 1\n65535\n\0\0"), Err(PnmError::MaxValue(65535))));
        assert!(matches!(read_pnm(b"P6\n1 1\n255\n\0"), Err(PnmError::PixelCount { expected: 3, found: 1 })));
        assert!(matches!(read_pnm(b"P5\n1"), Err(PnmError::TruncatedHeader)));
        assert!(matches!(read_pnm(b"P5\n0 1\n255\n"), Err(PnmError::Empty)));
    }
}
