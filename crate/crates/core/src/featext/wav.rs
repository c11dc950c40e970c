//! Minimal RIFF/WAVE codec: 16-bit mono PCM only.

use std::fs;
use std::path::Path;

use super::PcmSignal;
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

pub fn read_wav(path: impl AsRef<Path>) -> Result<PcmSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode_wav(bytes: &[u8]) -> Result<PcmSignal> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut sample_rate = None;
    let mut data = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "chunk {:?} at offset {pos} declares {size} bytes past end of file",
                String::from_utf8_lossy(id)
            ))
        })?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format(format!("fmt chunk too short ({size} bytes)")));
                }
                let format_tag = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if format_tag != 1 {
                    return Err(Error::Unsupported {
                        field: "audio_format",
                        detail: format!("format tag {format_tag:#06x}, only PCM (1) is read"),
                    });
                }
                if channels != 1 {
                    return Err(Error::Unsupported {
                        field: "channels",
                        detail: format!("{channels} channels, only mono is read"),
                    });
                }
                if bits != 16 {
                    return Err(Error::Unsupported {
                        field: "bits_per_sample",
                        detail: format!("{bits} bits, only 16-bit is read"),
                    });
                }
                if rate == 0 {
                    return Err(Error::Format("sample rate is zero".into()));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                if sample_rate.is_none() {
                    return Err(Error::Format("data chunk precedes fmt chunk".into()));
                }
                if !size.is_multiple_of(2) {
                    return Err(Error::Format(format!(
                        "data chunk has odd length {size} for 16-bit samples"
                    )));
                }
                data = Some(&bytes[body..end]);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let rate = sample_rate.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    if data.is_empty() {
        return Err(Error::Format("data chunk holds no samples".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / PCM_SCALE)
        .collect();
    PcmSignal::new(samples, rate)
}

/// Encodes as 16-bit mono PCM. Samples are scaled by 32768, rounded and
/// clipped to the i16 range.
pub fn encode_wav(signal: &PcmSignal) -> Vec<u8> {
    let data_len = 2 * signal.len() as u32;
    let rate = signal.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in signal.samples() {
        let q = (s * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, signal: &PcmSignal) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(signal)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex(s: &str) -> Vec<u8> {
        let s: String = s.split_whitespace().collect();
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    // 8 samples at 8000 Hz, written out by hand.
    const FIXTURE: &str = "
        52494646 34000000 57415645
        666d7420 10000000 0100 0100 401f0000 803e0000 0200 1000
        64617461 10000000
        0000 0100 ffff ff7f 0080 0001 3412 feff";

    #[test]
    fn hand_built_fixture() {
        let sig = decode_wav(&hex(FIXTURE)).unwrap();
        assert_eq!(sig.sample_rate(), 8000);
        // 0x0000, 0x0001, 0xffff, 0x7fff, 0x8000, 0x0100, 0x1234, 0xfffe
        let expected = [0, 1, -1, 32767, -32768, 256, 4660, -2].map(|v: i32| f64::from(v) / 32768.0);
        assert_eq!(sig.samples(), &expected);
    }

    #[test]
    fn max_amplitude_sample() {
        let mut bytes = hex(FIXTURE);
        bytes.truncate(44);
        bytes[40..44].copy_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0xff, 0x7f]);
        let sig = decode_wav(&bytes).unwrap();
        assert_eq!(sig.samples(), &[32767.0 / 32768.0]);
    }

    #[test]
    fn one_second_of_silence() {
        let sig = PcmSignal::new(vec![0.0; 16_000], 16_000).unwrap();
        let back = decode_wav(&encode_wav(&sig)).unwrap();
        assert_eq!(back.len(), 16_000);
        assert_eq!(back.sample_rate(), 16_000);
        assert!(back.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unsupported_fields_are_named() {
        let base = hex(FIXTURE);
        let cases: [(usize, [u8; 2], &str); 3] = [
            (20, [3, 0], "audio_format"),
            (22, [2, 0], "channels"),
            (34, [8, 0], "bits_per_sample"),
        ];
        for (offset, value, field) in cases {
            let mut bytes = base.clone();
            bytes[offset..offset + 2].copy_from_slice(&value);
            let err = decode_wav(&bytes).unwrap_err();
            assert!(
                matches!(err, Error::Unsupported { field: f, .. } if f == field),
                "{err}"
            );
            assert!(err.to_string().contains(field));
        }
    }

    #[test]
    fn malformed_headers() {
        let base = hex(FIXTURE);
        assert!(matches!(decode_wav(&base[..10]), Err(Error::Format(_))));
        let mut bad_magic = base.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_wav(&bad_magic), Err(Error::Format(_))));
        // data chunk claims more bytes than present
        assert!(matches!(decode_wav(&base[..50]), Err(Error::Format(_))));
        // no data chunk
        assert!(matches!(decode_wav(&base[..36]), Err(Error::Format(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let base = hex(FIXTURE);
        let mut bytes = base[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]); // odd size plus pad byte
        bytes.extend_from_slice(&base[36..]);
        assert_eq!(decode_wav(&bytes).unwrap(), decode_wav(&base).unwrap());
    }
}
