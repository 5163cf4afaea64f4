use std::path::Path;

use super::{push_f32s, read_bytes, read_f32s, write_bytes, Cursor, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::features::{AcousticFrame, FeatureTrack};
use crate::mlpg::STATIC_DIMS;

pub const FEATURE_MAGIC: &[u8; 4] = b"LPCF";

pub fn encode_features(track: &FeatureTrack) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + track.len() * STATIC_DIMS * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(track.len() as u32).to_le_bytes());
    out.extend_from_slice(&(STATIC_DIMS as u16).to_le_bytes());
    for f in track.frames() {
        push_f32s(&mut out, f.to_array());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureTrack> {
    let mut c = Cursor::new(bytes);
    c.expect_magic(FEATURE_MAGIC)?;
    let frames = c.u32("frame count")? as usize;
    let dims = c.u16("dims")? as usize;
    if dims != STATIC_DIMS {
        return Err(Error::format(
            "dims",
            format!("{dims}, expected {STATIC_DIMS}"),
        ));
    }
    let expected = frames * dims * 4;
    if c.remaining() != expected {
        return Err(Error::format(
            "payload",
            format!("expected {expected} bytes, found {}", c.remaining()),
        ));
    }
    let values = read_f32s(&mut c, frames * dims, "payload")?;
    c.finish()?;
    let frames = values
        .chunks_exact(dims)
        .map(AcousticFrame::from_slice)
        .collect::<Result<Vec<_>>>()?;
    FeatureTrack::new(frames)
}

pub fn read_features(path: &Path) -> Result<FeatureTrack> {
    decode_features(&read_bytes(path)?)
}

pub fn write_features(track: &FeatureTrack, path: &Path) -> Result<()> {
    write_bytes(path, &encode_features(track))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_track(n: usize) -> FeatureTrack {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let frames = (0..n)
            .map(|_| {
                let mut v = [0.0; STATIC_DIMS];
                v.iter_mut()
                    .for_each(|x| *x = rng.gen_range(-3.0..3.0) as f32 as f64);
                v[18] = rng.gen_range(0.0..1.0) as f32 as f64;
                v[19] = rng.gen_range(0.0..1.0) as f32 as f64;
                AcousticFrame::from_slice(&v).unwrap()
            })
            .collect();
        FeatureTrack::new(frames).unwrap()
    }

    #[test]
    fn byte_identical_round_trip() {
        let t = random_track(100);
        let bytes = encode_features(&t);
        assert_eq!(bytes.len(), 12 + 100 * 80);
        assert_eq!(&bytes[..4], b"LPCF");
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_features(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_features(&random_track(3));
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[3, 0, 0, 0]);
        assert_eq!(&bytes[10..12], &[20, 0]);
    }

    #[test]
    fn truncation_and_overlong_rejected() {
        let bytes = encode_features(&random_track(5));
        let msg = decode_features(&bytes[..bytes.len() - 3])
            .unwrap_err()
            .to_string();
        assert!(msg.contains("expected 400 bytes, found 397"), "{msg}");
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_features(&long).is_err());
        for cut in 0..12 {
            assert!(decode_features(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn bad_magic_and_dims() {
        let mut bytes = encode_features(&random_track(2));
        bytes[0] = b'X';
        assert!(decode_features(&bytes)
            .unwrap_err()
            .to_string()
            .contains("magic"));
        let mut bytes = encode_features(&random_track(2));
        bytes[10] = 18;
        assert!(decode_features(&bytes)
            .unwrap_err()
            .to_string()
            .contains("dims"));
    }
}
