use std::collections::HashMap;
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use super::{push_f32s, read_bytes, read_f32s, write_bytes, Cursor, FORMAT_VERSION};
use crate::acoustic::SynthesizerWeights;
use crate::error::{Error, Result};
use crate::vocoder::VocoderWeights;

pub const WEIGHT_MAGIC: &[u8; 4] = b"LPCW";

pub type NamedTensor = (String, ArrayD<f64>);

pub fn encode_tensors<'a>(
    tensors: impl IntoIterator<Item = (&'a str, ArrayViewD<'a, f64>)>,
) -> Result<Vec<u8>> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::invalid(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.ndim())
            .map_err(|_| Error::invalid(format!("rank too large: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| Error::invalid(format!("dimension too large: {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        push_f32s(&mut out, t.iter().copied());
    }
    Ok(out)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut c = Cursor::new(bytes);
    c.expect_magic(WEIGHT_MAGIC)?;
    let count = c.u32("tensor count")? as usize;
    let mut out: Vec<NamedTensor> = Vec::new();
    for i in 0..count {
        let field = format!("tensor {i}");
        let len = c.u16(&format!("{field} name length"))? as usize;
        let name = std::str::from_utf8(c.take(len, &format!("{field} name"))?)
            .map_err(|_| Error::format(format!("{field} name"), "not UTF-8"))?
            .to_string();
        if out.iter().any(|(n, _)| *n == name) {
            return Err(Error::format(name, "duplicate tensor name"));
        }
        let rank = c.u8(&format!("{name} rank"))? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u32(&format!("{name} dims"))? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::format(name.clone(), "size overflow"))?;
        let data = read_f32s(&mut c, n, &name)?;
        let t = ArrayD::from_shape_vec(IxDyn(&dims), data).expect("element count matches dims");
        out.push((name, t));
    }
    c.finish()?;
    Ok(out)
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    decode_tensors(&read_bytes(path)?)
}

pub fn write_tensors<'a>(
    path: &Path,
    tensors: impl IntoIterator<Item = (&'a str, ArrayViewD<'a, f64>)>,
) -> Result<()> {
    write_bytes(path, &encode_tensors(tensors)?)
}

/// Builds a name lookup, rejecting or warning on names outside `known`.
fn lookup_table(
    tensors: Vec<NamedTensor>,
    known: &[&str],
    strict: bool,
) -> Result<HashMap<String, ArrayD<f64>>> {
    let mut map = HashMap::new();
    for (name, t) in tensors {
        if !known.contains(&name.as_str()) {
            if strict {
                return Err(Error::format(name, "unknown tensor name"));
            }
            log::warn!("ignoring unknown tensor '{name}'");
            continue;
        }
        map.insert(name, t);
    }
    Ok(map)
}

pub fn read_synthesizer(path: &Path, strict: bool) -> Result<SynthesizerWeights> {
    let template = SynthesizerWeights::zeros(&crate::acoustic::SynthesizerConfig::toy());
    let known: Vec<&str> = template
        .named_tensors()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut map = lookup_table(read_tensors(path)?, &known, strict)?;
    SynthesizerWeights::from_named(|n| map.remove(n))
}

pub fn write_synthesizer(w: &SynthesizerWeights, path: &Path) -> Result<()> {
    write_tensors(path, w.named_tensors())
}

pub fn read_vocoder(path: &Path, strict: bool) -> Result<VocoderWeights> {
    let mut template = VocoderWeights::zeros();
    template.gru_a_mask = Some(ndarray::Array2::ones(template.gru_a_w_hh.dim()));
    let known: Vec<&str> = template
        .named_tensors()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut map = lookup_table(read_tensors(path)?, &known, strict)?;
    VocoderWeights::from_named(|n| map.remove(n))
}

pub fn write_vocoder(w: &VocoderWeights, path: &Path) -> Result<()> {
    write_tensors(path, w.named_tensors())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::SynthesizerConfig;
    use ndarray::Array2;

    fn f32_exact(w: &mut SynthesizerWeights) {
        for (_, mut t) in w.tensors_mut() {
            t.mapv_inplace(|v| v as f32 as f64);
        }
    }

    #[test]
    fn tensor_round_trip_is_byte_exact() {
        let a = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.25).into_dyn();
        let b = ndarray::Array1::from(vec![1.5, -2.0]).into_dyn();
        let bytes = encode_tensors([("a", a.view()), ("bee", b.view())]).unwrap();
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(
            back,
            vec![("a".to_string(), a.clone()), ("bee".to_string(), b.clone())]
        );
        let again = encode_tensors(back.iter().map(|(n, t)| (n.as_str(), t.view()))).unwrap();
        assert_eq!(again, bytes);
        // magic, version 1, two tensors, name length 1, "a", rank 2, dims 3 and 4
        assert_eq!(
            &bytes[..16],
            b"LPCW\x01\x00\x02\x00\x00\x00\x01\x00a\x02\x03\x00"
        );
    }

    #[test]
    fn duplicate_names_rejected() {
        let a = ndarray::Array1::from(vec![1.0]).into_dyn();
        let bytes = encode_tensors([("x", a.view()), ("x", a.view())]).unwrap();
        assert!(decode_tensors(&bytes)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn every_truncation_and_extension_rejected() {
        let a = Array2::from_elem((2, 3), 0.5).into_dyn();
        let bytes = encode_tensors([("w", a.view())]).unwrap();
        for cut in 0..bytes.len() {
            assert!(decode_tensors(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(decode_tensors(&long).is_err());
    }

    #[test]
    fn huge_declared_sizes_fail_cleanly() {
        let mut bytes = b"LPCW\x01\x00\x01\x00\x00\x00\x01\x00w\x03".to_vec();
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode_tensors(&bytes).is_err());
    }

    #[test]
    fn synthesizer_file_round_trip_and_strictness() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.lpcw");
        let mut w = SynthesizerWeights::random(&SynthesizerConfig::toy(), 1);
        f32_exact(&mut w);
        write_synthesizer(&w, &p).unwrap();
        assert_eq!(read_synthesizer(&p, true).unwrap(), w);

        let mut named: Vec<(String, ArrayD<f64>)> = w
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.to_owned()))
            .collect();
        named.push(("extra".into(), ndarray::Array1::zeros(2).into_dyn()));
        write_tensors(&p, named.iter().map(|(n, t)| (n.as_str(), t.view()))).unwrap();
        assert!(read_synthesizer(&p, true)
            .unwrap_err()
            .to_string()
            .contains("extra"));
        assert_eq!(read_synthesizer(&p, false).unwrap(), w);
    }

    #[test]
    fn vocoder_file_round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.lpcw");
        let mut w = VocoderWeights::random(2);
        w.apply_block_sparsity(0.5).unwrap();
        write_vocoder(&w, &p).unwrap();
        let back = read_vocoder(&p, true).unwrap();
        assert_eq!(back.gru_a_mask, w.gru_a_mask);
        write_vocoder(&back, &dir.path().join("v2.lpcw")).unwrap();
        assert_eq!(
            std::fs::read(&p).unwrap(),
            std::fs::read(dir.path().join("v2.lpcw")).unwrap()
        );
    }
}
