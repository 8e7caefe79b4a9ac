//! Minimal single-file NIfTI-1 reader and writer.
//!
//! Covers exactly what the toolkit needs: 3D/4D grids in the common scalar
//! dtypes, pixdim spacing, sform/qform affines, and slope/intercept scaling.
//! Files are read in either byte order and always written little-endian with
//! the data at offset 352.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Affine, Spacing};

use super::{RawImage, Scalars};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_gzip(&bytes) {
        let mut decoder = GzDecoder::new(&bytes[..]);
        let mut out = Vec::new();
        decoder
            .read_to_end(&mut out)
            .map_err(|e| Error::malformed(path, format!("gzip decode failed: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

pub(super) fn read(path: &Path) -> Result<RawImage> {
    let bytes = read_file_bytes(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::malformed(
            path,
            format!("file too small for a NIfTI-1 header ({} bytes)", bytes.len()),
        ));
    }
    let le = LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32;
    let be = BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32;
    if le {
        read_with::<LittleEndian>(&bytes, path)
    } else if be {
        read_with::<BigEndian>(&bytes, path)
    } else {
        Err(Error::malformed(path, "sizeof_hdr is not 348 in either byte order"))
    }
}

fn read_with<E: ByteOrder>(bytes: &[u8], path: &Path) -> Result<RawImage> {
    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        if magic == b"ni1\0" {
            return Err(Error::malformed(
                path,
                "two-file NIfTI (.hdr/.img) is not supported",
            ));
        }
        return Err(Error::malformed(path, "missing NIfTI magic"));
    }

    let mut dim = [0i16; 8];
    for (k, d) in dim.iter_mut().enumerate() {
        *d = E::read_i16(&bytes[40 + 2 * k..]);
    }
    let ndim = dim[0];
    if !(3..=4).contains(&ndim) {
        return Err(Error::malformed(path, format!("expected 3D or 4D image, dim[0]={ndim}")));
    }
    let (nx, ny, nz) = (dim[1] as usize, dim[2] as usize, dim[3] as usize);
    let channels = if ndim == 4 { dim[4].max(1) as usize } else { 1 };
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::malformed(path, "zero-sized dimension"));
    }

    let datatype = E::read_i16(&bytes[70..]);
    let bitpix = E::read_i16(&bytes[72..]) as usize;

    let mut pixdim = [0f32; 8];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = E::read_f32(&bytes[76 + 4 * k..]);
    }
    let spacing = Spacing::new(
        pixdim[3].abs() as f64,
        pixdim[2].abs() as f64,
        pixdim[1].abs() as f64,
    )?;

    let vox_offset = E::read_f32(&bytes[108..]) as usize;
    let scl_slope = E::read_f32(&bytes[112..]) as f64;
    let scl_inter = E::read_f32(&bytes[116..]) as f64;
    // A zero slope means "no scaling stored".
    let (scl_slope, scl_inter) = if scl_slope == 0.0 { (1.0, 0.0) } else { (scl_slope, scl_inter) };

    let qform_code = E::read_i16(&bytes[252..]);
    let sform_code = E::read_i16(&bytes[254..]);
    let affine = if sform_code > 0 {
        let mut m = [[0.0f64; 4]; 4];
        for row in 0..3 {
            for col in 0..4 {
                m[row][col] = E::read_f32(&bytes[280 + 16 * row + 4 * col..]) as f64;
            }
        }
        m[3] = [0.0, 0.0, 0.0, 1.0];
        Affine(m)
    } else if qform_code > 0 {
        let b = E::read_f32(&bytes[256..]) as f64;
        let c = E::read_f32(&bytes[260..]) as f64;
        let d = E::read_f32(&bytes[264..]) as f64;
        let qx = E::read_f32(&bytes[268..]) as f64;
        let qy = E::read_f32(&bytes[272..]) as f64;
        let qz = E::read_f32(&bytes[276..]) as f64;
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        quaternion_affine(b, c, d, [qx, qy, qz], &spacing, qfac)
    } else {
        Affine::from_spacing(&spacing)
    };

    let n = nx * ny * nz * channels;
    let need = n * bitpix / 8;
    let start = vox_offset.max(HEADER_SIZE);
    if bytes.len() < start + need {
        return Err(Error::malformed(
            path,
            format!("truncated data section: need {need} bytes at offset {start}"),
        ));
    }
    let data = &bytes[start..start + need];
    let scalars = decode_scalars::<E>(datatype, data, n)?;

    Ok(RawImage {
        shape: (nz, ny, nx),
        channels,
        scalars,
        spacing,
        affine,
        scl_slope,
        scl_inter,
    })
}

fn quaternion_affine(b: f64, c: f64, d: f64, offset: [f64; 3], spacing: &Spacing, qfac: f64) -> Affine {
    let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
    let r = [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - b * b - c * c,
        ],
    ];
    let scale = [spacing.dx, spacing.dy, spacing.dz * qfac];
    let mut m = [[0.0; 4]; 4];
    for row in 0..3 {
        for col in 0..3 {
            m[row][col] = r[row][col] * scale[col];
        }
        m[row][3] = offset[row];
    }
    m[3] = [0.0, 0.0, 0.0, 1.0];
    Affine(m)
}

fn decode_scalars<E: ByteOrder>(datatype: i16, data: &[u8], n: usize) -> Result<Scalars> {
    Ok(match datatype {
        DT_UINT8 => Scalars::U8(data.to_vec()),
        DT_INT16 => {
            let mut v = vec![0i16; n];
            E::read_i16_into(data, &mut v);
            Scalars::I16(v)
        }
        DT_UINT16 => {
            let mut v = vec![0u16; n];
            E::read_u16_into(data, &mut v);
            Scalars::U16(v)
        }
        DT_INT32 => {
            let mut v = vec![0i32; n];
            E::read_i32_into(data, &mut v);
            Scalars::I32(v)
        }
        DT_FLOAT32 => {
            let mut v = vec![0f32; n];
            E::read_f32_into(data, &mut v);
            Scalars::F32(v)
        }
        DT_FLOAT64 => {
            let mut v = vec![0f64; n];
            E::read_f64_into(data, &mut v);
            Scalars::F64(v)
        }
        other => return Err(Error::UnsupportedDatatype(other)),
    })
}

pub(super) fn write(raw: &RawImage, path: &Path) -> Result<()> {
    let (nz, ny, nx) = raw.shape;
    let (datatype, bitpix) = match &raw.scalars {
        Scalars::U8(_) => (DT_UINT8, 8i16),
        Scalars::I16(_) => (DT_INT16, 16),
        Scalars::U16(_) => (DT_UINT16, 16),
        Scalars::I32(_) => (DT_INT32, 32),
        Scalars::F32(_) => (DT_FLOAT32, 32),
        Scalars::F64(_) => (DT_FLOAT64, 64),
    };

    let mut header = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut header[0..], HEADER_SIZE as i32);

    let ndim: i16 = if raw.channels > 1 { 4 } else { 3 };
    let dims = [
        ndim,
        nx as i16,
        ny as i16,
        nz as i16,
        raw.channels.max(1) as i16,
        1,
        1,
        1,
    ];
    for (k, d) in dims.iter().enumerate() {
        LittleEndian::write_i16(&mut header[40 + 2 * k..], *d);
    }

    LittleEndian::write_i16(&mut header[70..], datatype);
    LittleEndian::write_i16(&mut header[72..], bitpix);

    let pixdims = [
        1.0f32,
        raw.spacing.dx as f32,
        raw.spacing.dy as f32,
        raw.spacing.dz as f32,
        1.0,
        0.0,
        0.0,
        0.0,
    ];
    for (k, p) in pixdims.iter().enumerate() {
        LittleEndian::write_f32(&mut header[76 + 4 * k..], *p);
    }

    LittleEndian::write_f32(&mut header[108..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut header[112..], raw.scl_slope as f32);
    LittleEndian::write_f32(&mut header[116..], raw.scl_inter as f32);
    header[123] = 2; // spatial units: millimeters

    LittleEndian::write_i16(&mut header[252..], 0); // qform unused
    LittleEndian::write_i16(&mut header[254..], 1); // sform: scanner anat
    for row in 0..3 {
        for col in 0..4 {
            LittleEndian::write_f32(
                &mut header[280 + 16 * row + 4 * col..],
                raw.affine.0[row][col] as f32,
            );
        }
    }
    header[344..348].copy_from_slice(b"n+1\0");

    let mut body = Vec::with_capacity(raw.scalars.len() * bitpix as usize / 8);
    encode_scalars(&raw.scalars, &mut body);

    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut sink: Box<dyn Write> = if name.ends_with(".gz") {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(std::io::BufWriter::new(file))
    };
    sink.write_all(&header).map_err(|e| Error::io(path, e))?;
    sink.write_all(&body).map_err(|e| Error::io(path, e))?;
    sink.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn encode_scalars(scalars: &Scalars, out: &mut Vec<u8>) {
    match scalars {
        Scalars::U8(v) => out.extend_from_slice(v),
        Scalars::I16(v) => {
            out.resize(v.len() * 2, 0);
            LittleEndian::write_i16_into(v, out);
        }
        Scalars::U16(v) => {
            out.resize(v.len() * 2, 0);
            LittleEndian::write_u16_into(v, out);
        }
        Scalars::I32(v) => {
            out.resize(v.len() * 4, 0);
            LittleEndian::write_i32_into(v, out);
        }
        Scalars::F32(v) => {
            out.resize(v.len() * 4, 0);
            LittleEndian::write_f32_into(v, out);
        }
        Scalars::F64(v) => {
            out.resize(v.len() * 8, 0);
            LittleEndian::write_f64_into(v, out);
        }
    }
}
