//! SPFX: little-endian binary container for one feature matrix.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SPFX"
//!      4     2  version (u16) = 1
//!      6     4  channels (u32)
//!     10     4  frames (u32)
//!     14     4  frame shift in ms (f32)
//!     18     1  kind (0 log_mel, 1 mfcc, 2 standardized_log_mel,
//!               3 standardized_mfcc, 255 corpus statistics)
//!     19     3  reserved, zero
//!     22  4*T*C payload, f32, time-major
//! ```
//!
//! A statistics file uses kind 255 with two rows: per-channel mean, then
//! per-channel variance.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featext::{FeatureKind, FeatureMatrix};
use crate::stats::CorpusStats;

pub const MAGIC: &[u8; 4] = b"SPFX";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 22;
pub const STATS_KIND: u8 = 255;

fn encode(kind: u8, frames: usize, channels: usize, frame_shift_ms: f64, payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    out.extend_from_slice(&(frames as u32).to_le_bytes());
    out.extend_from_slice(&(frame_shift_ms as f32).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&[0; 3]);
    for &v in payload {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

struct Decoded {
    kind: u8,
    frames: usize,
    channels: usize,
    frame_shift_ms: f64,
    payload: Vec<f64>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header needs {HEADER_LEN} bytes, file has {} (truncated at offset {})",
            bytes.len(),
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?} at offset 0", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version} at offset 4")));
    }
    let word = |at: usize| [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]];
    let channels = u32::from_le_bytes(word(6)) as usize;
    let frames = u32::from_le_bytes(word(10)) as usize;
    let frame_shift_ms = f64::from(f32::from_le_bytes(word(14)));
    let kind = bytes[18];
    if let Some(i) = bytes[19..22].iter().position(|&b| b != 0) {
        return Err(Error::Format(format!("nonzero reserved byte at offset {}", 19 + i)));
    }
    let expected = (frames as u64) * (channels as u64) * 4;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != expected {
        return Err(Error::Format(format!(
            "payload at offset {HEADER_LEN} should hold {expected} bytes ({frames}x{channels} f32), found {actual}"
        )));
    }
    let mut payload = Vec::with_capacity(frames * channels);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::Format(format!(
                "non-finite value at offset {}",
                HEADER_LEN + 4 * i
            )));
        }
        payload.push(f64::from(v));
    }
    Ok(Decoded {
        kind,
        frames,
        channels,
        frame_shift_ms,
        payload,
    })
}

/// Payload values are narrowed to `f32`.
pub fn encode_spfx(features: &FeatureMatrix) -> Vec<u8> {
    encode(
        features.kind().code(),
        features.num_frames(),
        features.num_channels(),
        features.frame_shift_ms(),
        features.data(),
    )
}

pub fn decode_spfx(bytes: &[u8]) -> Result<FeatureMatrix> {
    let d = decode(bytes)?;
    let kind = FeatureKind::from_code(d.kind)
        .ok_or_else(|| Error::Format(format!("unknown feature kind {} at offset 18", d.kind)))?;
    if d.frames == 0 || d.channels == 0 {
        return Err(Error::Format(format!(
            "empty {}x{} matrix declared at offset 6",
            d.frames, d.channels
        )));
    }
    FeatureMatrix::new(d.payload, d.frames, d.channels, d.frame_shift_ms, kind)
}

pub fn write_spfx(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_spfx(features)).map_err(|e| Error::io(path, e))
}

pub fn read_spfx(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    decode_spfx(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn encode_stats(stats: &CorpusStats) -> Vec<u8> {
    let mut rows = stats.mean.clone();
    rows.extend_from_slice(&stats.variance);
    encode(STATS_KIND, 2, stats.num_channels(), 0.0, &rows)
}

/// The frame count is not stored; a decoded value reports `count = 1`.
pub fn decode_stats(bytes: &[u8]) -> Result<CorpusStats> {
    let d = decode(bytes)?;
    if d.kind != STATS_KIND {
        return Err(Error::Format(format!(
            "kind {} at offset 18 is not a statistics file ({STATS_KIND})",
            d.kind
        )));
    }
    if d.frames != 2 || d.channels == 0 {
        return Err(Error::Format(format!(
            "statistics need 2 rows of at least one channel, found {}x{} at offset 6",
            d.frames, d.channels
        )));
    }
    let (mean, variance) = d.payload.split_at(d.channels);
    if let Some(c) = variance.iter().position(|&v| v < 0.0) {
        return Err(Error::Format(format!(
            "negative variance for channel {c} at offset {}",
            HEADER_LEN + 4 * (d.channels + c)
        )));
    }
    Ok(CorpusStats {
        mean: mean.to_vec(),
        variance: variance.to_vec(),
        count: 1,
    })
}

pub fn write_stats(path: impl AsRef<Path>, stats: &CorpusStats) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_stats(stats)).map_err(|e| Error::io(path, e))
}

pub fn read_stats(path: impl AsRef<Path>) -> Result<CorpusStats> {
    let path = path.as_ref();
    decode_stats(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn single_zero() -> FeatureMatrix {
        FeatureMatrix::new(vec![0.0], 1, 1, 10.0, FeatureKind::LogMel).unwrap()
    }

    #[test]
    fn one_by_one_layout() {
        let bytes = encode_spfx(&single_zero());
        assert_eq!(bytes.len(), HEADER_LEN + 4);
        assert_eq!(&bytes[..4], b"SPFX");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..14], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &10.0f32.to_le_bytes());
        assert_eq!(&bytes[18..22], &[0, 0, 0, 0]);
        assert_eq!(&bytes[22..], &[0, 0, 0, 0]);
    }

    #[test]
    fn random_matrix_round_trip() {
        let mut rng = SplitMix64::new(50);
        let data = (0..50 * 40).map(|_| f64::from(rng.gaussian() as f32)).collect();
        let m = FeatureMatrix::new(data, 50, 40, 10.0, FeatureKind::StandardizedMfcc).unwrap();
        let bytes = encode_spfx(&m);
        let back = decode_spfx(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_spfx(&back), bytes);
    }

    #[test]
    fn truncated_payload_reports_lengths() {
        let mut bytes = encode_spfx(&FeatureMatrix::new(vec![1.0; 6], 2, 3, 10.0, FeatureKind::Mfcc).unwrap());
        bytes.truncate(bytes.len() - 3);
        let msg = decode_spfx(&bytes).unwrap_err().to_string();
        assert!(
            msg.contains("24") && msg.contains("21") && msg.contains("offset 22"),
            "{msg}"
        );
    }

    #[test]
    fn header_errors_name_offsets() {
        let good = encode_spfx(&single_zero());
        let cases: [(usize, u8, &str); 4] = [
            (0, b'X', "offset 0"),
            (4, 2, "offset 4"),
            (18, 9, "offset 18"),
            (20, 1, "offset 20"),
        ];
        for (at, value, needle) in cases {
            let mut bytes = good.clone();
            bytes[at] = value;
            let err = decode_spfx(&bytes).unwrap_err();
            assert!(matches!(err, Error::Format(_)));
            assert!(err.to_string().contains(needle), "{err}");
        }
        assert!(decode_spfx(&good[..10]).is_err());
    }

    #[test]
    fn stats_round_trip() {
        let stats = CorpusStats {
            mean: vec![1.5, -2.0],
            variance: vec![0.25, 4.0],
            count: 77,
        };
        let bytes = encode_stats(&stats);
        assert_eq!(bytes[18], STATS_KIND);
        let back = decode_stats(&bytes).unwrap();
        assert_eq!((back.mean, back.variance), (stats.mean, stats.variance));
        assert!(decode_stats(&encode_spfx(&single_zero())).is_err());
        assert!(decode_spfx(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_is_lossless_at_f32(
            frames in 1usize..20,
            channels in 1usize..20,
            seed in any::<u64>(),
            shift in 1.0f32..50.0,
        ) {
            let mut rng = SplitMix64::new(seed);
            let data = (0..frames * channels).map(|_| f64::from((rng.gaussian() * 100.0) as f32)).collect();
            let m = FeatureMatrix::new(data, frames, channels, f64::from(shift), FeatureKind::LogMel).unwrap();
            prop_assert_eq!(decode_spfx(&encode_spfx(&m)).unwrap(), m);
        }
    }
}
