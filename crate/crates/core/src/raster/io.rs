use super::{Raster, RasterError};

/// Decodes a binary PGM (`P5`) or PPM (`P6`) stream with maxval 255.
///
/// Header comments (`#` to end of line) are accepted. Bytes past the pixel
/// payload are ignored.
pub fn decode_image(bytes: &[u8]) -> Result<Raster, RasterError> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic {
        b"P5" => 1u8,
        b"P6" => 3u8,
        other => {
            return Err(RasterError::MalformedHeader(format!(
                "unknown magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(RasterError::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(RasterError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(RasterError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels as usize))
        .ok_or_else(|| RasterError::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(RasterError::TruncatedData {
            expected,
            found: payload.len(),
        });
    }
    Raster::new(
        width as usize,
        height as usize,
        channels,
        payload[..expected].to_vec(),
    )
}

/// Encodes as `P5`/`P6` with the canonical header `P5\n<w> <h>\n255\n`.
pub fn encode_image(img: &Raster) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], RasterError> {
        self.skip_separators();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::MalformedHeader("unexpected end of header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, RasterError> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                RasterError::MalformedHeader(format!(
                    "{what} is not a number: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_small_gray() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 0, 255]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 1));
        assert_eq!(img.data(), &[0, 255, 0, 255]);
        assert_eq!(img.mm_per_px(), None);
    }

    #[test]
    fn truncated_ppm() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5]);
        assert_eq!(
            decode_image(&bytes),
            Err(RasterError::TruncatedData {
                expected: 12,
                found: 5
            })
        );
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode_image(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0"),
            Err(RasterError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            decode_image(b"P3\n1 1\n255\n0 0 0"),
            Err(RasterError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_image(b"P5\n1 x\n255\n\0"),
            Err(RasterError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_image(b"P5\n1 1\n255"),
            Err(RasterError::MalformedHeader(_))
        ));
        assert!(matches!(decode_image(b""), Err(RasterError::MalformedHeader(_))));
    }

    #[test]
    fn comments_are_skipped() {
        let img = decode_image(b"P5\n# made by hand\n1 1\n255\n\x07").unwrap();
        assert_eq!(img.data(), &[7]);
    }

    proptest! {
        #[test]
        fn canonical_round_trip(w in 1usize..8, h in 1usize..8, rgb in any::<bool>(), seed in any::<u64>()) {
            let ch = if rgb { 3u8 } else { 1 };
            let n = w * h * ch as usize;
            let data: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let img = Raster::new(w, h, ch, data).unwrap();
            let bytes = encode_image(&img);
            let back = decode_image(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_image(&back), bytes);
        }
    }
}
