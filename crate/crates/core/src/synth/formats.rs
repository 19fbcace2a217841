//! Bit-exact file formats: binary PPM/PGM, raw f32 maps, and feature sets.

use crate::error::{Error, Result};
use crate::imaging::{ImageRGB, ScalarMap};
use std::fs;
use std::path::Path;

pub const F32RAW_MAGIC: &[u8; 4] = b"OMNR";
pub const F32RAW_VERSION: u32 = 1;
pub const FEATURES_MAGIC: &[u8; 8] = b"OMNIFEAT";
pub const FEATURES_VERSION: u32 = 1;

/// Modality tags used in feature files.
pub const MODALITY_RGB: u8 = 0;
pub const MODALITY_DEPTH: u8 = 1;
pub const MODALITY_SEG: u8 = 2;

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Serialize as binary PPM (P6, maxval 255). Values quantized by
/// round(v·255).
pub fn ppm_bytes(img: &ImageRGB) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| quantize(v)));
    out
}

/// Serialize as binary PGM (P5, maxval 255).
pub fn pgm_bytes(map: &ScalarMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.values().iter().map(|&v| quantize(v)));
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderReader { bytes, pos: 0 }
    }

    /// Skip whitespace and `#` comment lines between header fields.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedHeader {
                context: "expected an integer field".into(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::MalformedHeader {
                context: "unparseable integer field".into(),
            })
    }

    /// Consume the single whitespace byte that ends the header.
    fn expect_single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::MalformedHeader {
                context: "missing whitespace after maxval".into(),
            })
        }
    }
}

fn parse_netpbm(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::MalformedHeader {
            context: format!("expected magic {}", String::from_utf8_lossy(magic)),
        });
    }
    let mut r = HeaderReader::new(&bytes[2..]);
    let width = r.read_uint()?;
    let height = r.read_uint()?;
    let maxval = r.read_uint()?;
    if maxval != 255 {
        return Err(Error::MalformedHeader {
            context: format!("unsupported maxval {maxval}, expected 255"),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            context: "zero dimension".into(),
        });
    }
    r.expect_single_whitespace()?;
    let payload = &bytes[2 + r.pos..];
    let expected = width * height * channels;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    let values = payload[..expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok((height, width, values))
}

pub fn parse_ppm(bytes: &[u8]) -> Result<ImageRGB> {
    let (h, w, values) = parse_netpbm(bytes, b"P6", 3)?;
    ImageRGB::from_pixels(h, w, values)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<ScalarMap> {
    let (h, w, values) = parse_netpbm(bytes, b"P5", 1)?;
    ScalarMap::from_values(h, w, values)
}

pub fn write_ppm(path: &Path, img: &ImageRGB) -> Result<()> {
    fs::write(path, ppm_bytes(img))?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<ImageRGB> {
    parse_ppm(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, map: &ScalarMap) -> Result<()> {
    fs::write(path, pgm_bytes(map))?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<ScalarMap> {
    parse_pgm(&fs::read(path)?)
}

/// Serialize a scalar map as little-endian f32 with a 16-byte header
/// (magic, version, rows, cols).
pub fn f32raw_bytes(map: &ScalarMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + map.values().len() * 4);
    out.extend_from_slice(F32RAW_MAGIC);
    out.extend_from_slice(&F32RAW_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for &v in map.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn parse_f32raw(bytes: &[u8]) -> Result<ScalarMap> {
    if bytes.len() < 16 {
        return Err(Error::TruncatedPayload {
            expected: 16,
            got: bytes.len(),
        });
    }
    if &bytes[..4] != F32RAW_MAGIC {
        return Err(Error::MagicMismatch);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != F32RAW_VERSION {
        return Err(Error::VersionUnsupported { got: version });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = rows * cols * 4;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    let values = payload[..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ScalarMap::from_values(rows, cols, values)
}

pub fn write_f32raw(path: &Path, map: &ScalarMap) -> Result<()> {
    fs::write(path, f32raw_bytes(map))?;
    Ok(())
}

pub fn read_f32raw(path: &Path) -> Result<ScalarMap> {
    parse_f32raw(&fs::read(path)?)
}

/// A set of feature rows tagged with the modality they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSetFile {
    pub version: u32,
    pub n_items: u32,
    pub dim: u32,
    pub modality: u8,
    /// Row-major n_items×dim.
    pub data: Vec<f32>,
}

impl FeatureSetFile {
    pub fn new(n_items: u32, dim: u32, modality: u8, data: Vec<f32>) -> Result<Self> {
        if data.len() != (n_items as usize) * (dim as usize) {
            return Err(Error::LengthMismatch {
                expected: (n_items as usize) * (dim as usize),
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid {
                context: "feature payload must be finite".into(),
            });
        }
        Ok(FeatureSetFile {
            version: FEATURES_VERSION,
            n_items,
            dim,
            modality,
            data,
        })
    }
}

pub fn features_bytes(fs_: &FeatureSetFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + fs_.data.len() * 4);
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&fs_.version.to_le_bytes());
    out.extend_from_slice(&fs_.n_items.to_le_bytes());
    out.extend_from_slice(&fs_.dim.to_le_bytes());
    out.push(fs_.modality);
    for v in &fs_.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_features(bytes: &[u8]) -> Result<FeatureSetFile> {
    if bytes.len() < 21 {
        return Err(Error::TruncatedPayload {
            expected: 21,
            got: bytes.len(),
        });
    }
    if &bytes[..8] != FEATURES_MAGIC {
        return Err(Error::MagicMismatch);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FEATURES_VERSION {
        return Err(Error::VersionUnsupported { got: version });
    }
    let n_items = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let modality = bytes[20];
    let expected = (n_items as usize) * (dim as usize) * 4;
    let payload = &bytes[21..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    let data = payload[..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureSetFile {
        version,
        n_items,
        dim,
        modality,
        data,
    })
}

pub fn write_features(path: &Path, fs_: &FeatureSetFile) -> Result<()> {
    fs::write(path, features_bytes(fs_))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSetFile> {
    parse_features(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    #[test]
    fn one_by_one_white_ppm_matches_hand_encoding() {
        let img = ImageRGB::from_pixels(1, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let mut expect = b"P6\n1 1\n255\n".to_vec();
        expect.extend([0xFF, 0xFF, 0xFF]);
        assert_eq!(ppm_bytes(&img), expect);
    }

    #[test]
    fn ppm_round_trip_equals_quantized_image() {
        let mut rng = seeded_rng(1);
        let img = ImageRGB::from_pixels(4, 3, (0..36).map(|_| rng.next_unit_float()).collect())
            .unwrap();
        let back = parse_ppm(&ppm_bytes(&img)).unwrap();
        for (orig, got) in img.pixels().iter().zip(back.pixels()) {
            let quantized = (orig * 255.0).round() / 255.0;
            assert_eq!(*got, quantized);
        }
        // Quantization is idempotent: a second trip is bit-exact.
        assert_eq!(parse_ppm(&ppm_bytes(&back)).unwrap(), back);
    }

    #[test]
    fn truncated_ppm_is_detected() {
        let img = ImageRGB::from_pixels(2, 2, vec![0.5; 12]).unwrap();
        let mut bytes = ppm_bytes(&img);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(
            parse_ppm(&bytes),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn bad_magic_and_maxval_are_malformed() {
        assert!(matches!(
            parse_ppm(b"P5\n1 1\n255\n\0"),
            Err(Error::MalformedHeader { .. })
        ));
        assert!(matches!(
            parse_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let bytes = b"P6\n# made by hand\n2 1\n255\nabcdef".to_vec();
        let img = parse_ppm(&bytes).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 1);
    }

    #[test]
    fn pgm_round_trip() {
        let map =
            ScalarMap::from_values(2, 3, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let back = parse_pgm(&pgm_bytes(&map)).unwrap();
        for (orig, got) in map.values().iter().zip(back.values()) {
            assert_eq!(*got, (orig * 255.0).round() / 255.0);
        }
    }

    #[test]
    fn f32raw_round_trips_bit_exactly() {
        let mut rng = seeded_rng(2);
        let map = ScalarMap::from_values(
            3,
            5,
            (0..15).map(|_| rng.next_range(-100.0, 100.0)).collect(),
        )
        .unwrap();
        let back = parse_f32raw(&f32raw_bytes(&map)).unwrap();
        for (orig, got) in map.values().iter().zip(back.values()) {
            assert_eq!(*got, (*orig as f32) as f64);
        }
        // Second trip: values already representable in f32.
        let again = parse_f32raw(&f32raw_bytes(&back)).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn f32raw_rejects_bad_magic_and_version() {
        let map = ScalarMap::new(1, 1);
        let mut bytes = f32raw_bytes(&map);
        bytes[0] = b'X';
        assert_eq!(parse_f32raw(&bytes), Err(Error::MagicMismatch));
        let mut bytes = f32raw_bytes(&map);
        bytes[4] = 9;
        assert!(matches!(
            parse_f32raw(&bytes),
            Err(Error::VersionUnsupported { got: 9 })
        ));
    }

    #[test]
    fn features_round_trip_bit_exact() {
        let mut rng = seeded_rng(3);
        let data: Vec<f32> = (0..8 * 16).map(|_| rng.next_range(-2.0, 2.0) as f32).collect();
        let fs_ = FeatureSetFile::new(8, 16, MODALITY_DEPTH, data).unwrap();
        let back = parse_features(&features_bytes(&fs_)).unwrap();
        assert_eq!(back, fs_);
    }

    #[test]
    fn features_magic_mismatch() {
        let fs_ = FeatureSetFile::new(1, 2, MODALITY_RGB, vec![0.0, 1.0]).unwrap();
        let mut bytes = features_bytes(&fs_);
        bytes[0] = b'x';
        assert_eq!(parse_features(&bytes), Err(Error::MagicMismatch));
    }

    #[test]
    fn empty_feature_set_is_valid() {
        let fs_ = FeatureSetFile::new(0, 16, MODALITY_SEG, vec![]).unwrap();
        let back = parse_features(&features_bytes(&fs_)).unwrap();
        assert_eq!(back.n_items, 0);
        assert_eq!(back.dim, 16);
        assert!(back.data.is_empty());
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageRGB::from_pixels(2, 2, vec![0.25; 12]).unwrap();
        let p = dir.path().join("x.ppm");
        write_ppm(&p, &img).unwrap();
        let back = read_ppm(&p).unwrap();
        assert_eq!(back.height(), 2);
        let map = ScalarMap::from_values(2, 2, vec![1.5, -0.5, 0.0, 9.0]).unwrap();
        let p2 = dir.path().join("m.f32");
        write_f32raw(&p2, &map).unwrap();
        assert_eq!(
            read_f32raw(&p2).unwrap().values(),
            map.values()
                .iter()
                .map(|&v| (v as f32) as f64)
                .collect::<Vec<_>>()
                .as_slice()
        );
    }
}
