// NPY v1.0 subset: little-endian float32, C order, rank 4.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;

pub fn load_npy(path: impl AsRef<Path>) -> Result<Tensor4> {
    read_npy(&super::read_file(path.as_ref())?)
}

pub fn save_npy(tensor: &Tensor4, path: impl AsRef<Path>) -> Result<()> {
    super::write_file(path.as_ref(), &write_npy(tensor))
}

pub fn write_npy(tensor: &Tensor4) -> Vec<u8> {
    let [n, c, h, w] = tensor.shape().dims();
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({n}, {c}, {h}, {w}), }}");
    // pad so that the data starts on a 64-byte boundary; header ends in '\n'
    let unpadded = PREAMBLE + header.len() + 1;
    header.extend(std::iter::repeat_n(' ', (64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + tensor.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in tensor.data() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    out
}

pub fn read_npy(bytes: &[u8]) -> Result<Tensor4> {
    if bytes.len() < PREAMBLE || &bytes[..6] != MAGIC {
        return Err(Error::format("magic", "not an NPY file"));
    }
    if bytes[6] != 1 {
        return Err(Error::format(
            "version",
            format!("unsupported NPY version {}.{}", bytes[6], bytes[7]),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    let header = bytes
        .get(PREAMBLE..data_start)
        .ok_or_else(|| Error::format("header", "truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|_| Error::format("header", "header is not ASCII"))?;

    let descr = dict_value(header, "descr")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    if descr != "<f4" {
        return Err(Error::format(
            "descr",
            format!("unsupported dtype '{descr}', expected '<f4'"),
        ));
    }
    let order = dict_value(header, "fortran_order")?;
    if order != "False" {
        return Err(Error::format(
            "fortran_order",
            format!("unsupported order {order}, expected C order"),
        ));
    }
    let shape_text = dict_value(header, "shape")?;
    let dims = parse_shape(shape_text)?;
    if dims.len() != 4 {
        return Err(Error::format(
            "shape",
            format!("expected 4 dimensions, found {} in {shape_text}", dims.len()),
        ));
    }
    let shape = Shape4::new(dims[0], dims[1], dims[2], dims[3]);

    let payload = &bytes[data_start..];
    if payload.len() != shape.numel() * 4 {
        return Err(Error::format(
            "data",
            format!("expected {} bytes of data, found {}", shape.numel() * 4, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    Tensor4::from_parts(shape, data)
}

/// Raw text of the value for `key` in a Python dict literal.
fn dict_value<'h>(header: &'h str, key: &str) -> Result<&'h str> {
    let pat_single = format!("'{key}'");
    let pat_double = format!("\"{key}\"");
    let start = header
        .find(&pat_single)
        .map(|i| i + pat_single.len())
        .or_else(|| header.find(&pat_double).map(|i| i + pat_double.len()))
        .ok_or_else(|| Error::format(key, "missing from header"))?;
    let rest = header[start..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| Error::format(key, "malformed header entry"))?
        .trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| Error::format(key, "unterminated header value"))?;
    Ok(rest[..end].trim())
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::format("shape", format!("malformed shape {text}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::format("shape", format!("bad dimension '{s}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn npy_with_header(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn header_is_aligned() {
        let t = Tensor4::zeros((1, 2, 3, 4));
        let bytes = write_npy(&t);
        assert_eq!((bytes.len() - t.len() * 4) % 64, 0);
    }

    #[test]
    fn roundtrip_special_values() {
        let payload_nan = f32::from_bits(0x7fc0_0abc);
        let data = vec![
            1.5,
            -0.0,
            f32::INFINITY,
            f32::NEG_INFINITY,
            payload_nan,
            f32::MIN_POSITIVE,
        ];
        let t = Tensor4::from_parts((1, 1, 2, 3), data).unwrap();
        let back = read_npy(&write_npy(&t)).unwrap();
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn rejects_float64() {
        let h = "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1, 1), }\n";
        let err = read_npy(&npy_with_header(h, &[0; 8])).unwrap_err();
        assert!(
            matches!(err, Error::Format { ref field, .. } if field == "descr"),
            "{err}"
        );
    }

    #[test]
    fn rejects_rank3() {
        let h = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2, 2), }\n";
        let err = read_npy(&npy_with_header(h, &[0; 16])).unwrap_err();
        assert!(
            matches!(err, Error::Format { ref field, .. } if field == "shape"),
            "{err}"
        );
    }

    #[test]
    fn rejects_fortran_order() {
        let h = "{'descr': '<f4', 'fortran_order': True, 'shape': (1, 1, 1, 1), }\n";
        let err = read_npy(&npy_with_header(h, &[0; 4])).unwrap_err();
        assert!(matches!(err, Error::Format { ref field, .. } if field == "fortran_order"));
    }

    #[test]
    fn rejects_truncated_data() {
        let h = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 1, 2, 2), }\n";
        assert!(read_npy(&npy_with_header(h, &[0; 12])).is_err());
    }

    #[test]
    fn reads_numpy_style_header_variants() {
        // key order and spacing as produced by other writers
        let h = "{\"shape\": (1,1,1,2), \"fortran_order\": False, \"descr\": \"<f4\"}\n";
        let mut payload = Vec::new();
        payload.extend_from_slice(&2.0f32.to_le_bytes());
        payload.extend_from_slice(&3.0f32.to_le_bytes());
        let t = read_npy(&npy_with_header(h, &payload)).unwrap();
        assert_eq!(t.data(), &[2.0, 3.0]);
    }
}
