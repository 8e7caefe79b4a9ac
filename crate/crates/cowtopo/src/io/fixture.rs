//! Raw fixture format: `<name>.json` header next to `<name>.bin` payload.
//!
//! The header records shape (z, y, x), spacing (dz, dy, dx), dtype, and the
//! optional channel count; the payload is the flat little-endian array,
//! channel-major for multi-channel data.

use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Affine, Spacing};

use super::{RawImage, Scalars};

#[derive(Debug, Serialize, Deserialize)]
struct FixtureHeader {
    shape: [usize; 3],
    spacing: [f64; 3],
    dtype: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    affine: Option<[[f64; 4]; 4]>,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

fn bin_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("bin")
}

pub(super) fn read(path: &Path) -> Result<RawImage> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: FixtureHeader = serde_json::from_str(&text)
        .map_err(|e| Error::malformed(path, format!("fixture header: {e}")))?;
    let [nz, ny, nx] = header.shape;
    let spacing = Spacing::new(header.spacing[0], header.spacing[1], header.spacing[2])?;
    let affine = header
        .affine
        .map(Affine)
        .unwrap_or_else(|| Affine::from_spacing(&spacing));

    let payload_path = bin_path(path);
    let bytes = std::fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let n = nz * ny * nx * header.channels;
    let scalars = decode(&header.dtype, &bytes, n)
        .ok_or_else(|| Error::malformed(path, format!("unknown dtype {:?}", header.dtype)))?
        .map_err(|have| {
            Error::malformed(
                &payload_path,
                format!("payload holds {have} elements, header declares {n}"),
            )
        })?;

    Ok(RawImage {
        shape: (nz, ny, nx),
        channels: header.channels,
        scalars,
        spacing,
        affine,
        scl_slope: 1.0,
        scl_inter: 0.0,
    })
}

/// Outer None: unknown dtype. Inner Err: element-count mismatch (carries count found).
fn decode(dtype: &str, bytes: &[u8], n: usize) -> Option<std::result::Result<Scalars, usize>> {
    fn sized<T: Default + Clone>(
        bytes: &[u8],
        n: usize,
        width: usize,
        fill: impl Fn(&[u8], &mut [T]),
        wrap: impl Fn(Vec<T>) -> Scalars,
    ) -> std::result::Result<Scalars, usize> {
        if bytes.len() != n * width {
            return Err(bytes.len() / width);
        }
        let mut v = vec![T::default(); n];
        fill(bytes, &mut v);
        Ok(wrap(v))
    }
    Some(match dtype {
        "u8" => {
            if bytes.len() != n {
                Err(bytes.len())
            } else {
                Ok(Scalars::U8(bytes.to_vec()))
            }
        }
        "i16" => sized(bytes, n, 2, LittleEndian::read_i16_into, Scalars::I16),
        "u16" => sized(bytes, n, 2, LittleEndian::read_u16_into, Scalars::U16),
        "i32" => sized(bytes, n, 4, LittleEndian::read_i32_into, Scalars::I32),
        "f32" => sized(bytes, n, 4, LittleEndian::read_f32_into, Scalars::F32),
        "f64" => sized(bytes, n, 8, LittleEndian::read_f64_into, Scalars::F64),
        _ => return None,
    })
}

pub(super) fn write(raw: &RawImage, path: &Path) -> Result<()> {
    let (dtype, payload) = encode(&raw.scalars);
    let header = FixtureHeader {
        shape: [raw.shape.0, raw.shape.1, raw.shape.2],
        spacing: raw.spacing.as_array(),
        dtype: dtype.to_string(),
        channels: raw.channels,
        affine: Some(raw.affine.0),
    };
    let text = serde_json::to_string_pretty(&header)
        .expect("fixture header serialization cannot fail");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let payload_path = bin_path(path);
    std::fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    Ok(())
}

fn encode(scalars: &Scalars) -> (&'static str, Vec<u8>) {
    match scalars {
        Scalars::U8(v) => ("u8", v.clone()),
        Scalars::I16(v) => {
            let mut out = vec![0u8; v.len() * 2];
            LittleEndian::write_i16_into(v, &mut out);
            ("i16", out)
        }
        Scalars::U16(v) => {
            let mut out = vec![0u8; v.len() * 2];
            LittleEndian::write_u16_into(v, &mut out);
            ("u16", out)
        }
        Scalars::I32(v) => {
            let mut out = vec![0u8; v.len() * 4];
            LittleEndian::write_i32_into(v, &mut out);
            ("i32", out)
        }
        Scalars::F32(v) => {
            let mut out = vec![0u8; v.len() * 4];
            LittleEndian::write_f32_into(v, &mut out);
            ("f32", out)
        }
        Scalars::F64(v) => {
            let mut out = vec![0u8; v.len() * 8];
            LittleEndian::write_f64_into(v, &mut out);
            ("f64", out)
        }
    }
}
