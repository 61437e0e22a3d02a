//! The `DTNS` binary tensor container.
//!
//! Layout: the magic bytes `DTNS`, a version byte (`1`), a `u8` rank, `rank`
//! little-endian `u32` dimensions, then the `f32` little-endian values in
//! row-major order. Several tensors may be written back to back in one stream.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, StyleVector};

pub const MAGIC: &[u8; 4] = b"DTNS";
pub const VERSION: u8 = 1;

/// A dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::param(format!("rank {} exceeds 255", dims.len())));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::param("dimension exceeds u32 range"));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::param(format!(
                "dims {dims:?} imply {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    /// Build from `f64` values, narrowing to `f32`.
    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, self.dims.len() as u8])?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Read one tensor. Returns `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut magic = [0u8; 4];
        match read_exact_or_eof(r, &mut magic)? {
            false => return Ok(None),
            true if &magic != MAGIC => return Err(Error::format("DTNS tensor", format!("bad magic {magic:?}"))),
            true => {}
        }
        let mut head = [0u8; 2];
        read_exact(r, &mut head)?;
        if head[0] != VERSION {
            return Err(Error::format("DTNS tensor", format!("unsupported version {}", head[0])));
        }
        let rank = head[1] as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut word = [0u8; 4];
        for _ in 0..rank {
            read_exact(r, &mut word)?;
            dims.push(u32::from_le_bytes(word) as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("DTNS tensor", "element count overflows"))?;
        let mut raw = vec![0u8; count * 4];
        read_exact(r, &mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Some(Tensor { dims, data }))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let t = Tensor::read_from(&mut cursor)?.ok_or_else(|| Error::format("DTNS tensor", "empty input"))?;
        if !cursor.is_empty() {
            return Err(Error::format("DTNS tensor", "trailing bytes"));
        }
        Ok(t)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format("DTNS tensor", format!("truncated: {e}")))
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::format("DTNS tensor", "truncated header")),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::format("DTNS tensor", e.to_string())),
        }
    }
    Ok(true)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_tensors(path, std::slice::from_ref(t))
}

pub fn write_tensors(path: impl AsRef<Path>, ts: &[Tensor]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in ts {
        t.write_to(&mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut ts = read_tensors(path)?;
    match ts.len() {
        1 => Ok(ts.pop().unwrap()),
        n => Err(Error::format("DTNS tensor", format!("expected one tensor, found {n}"))),
    }
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut out = Vec::new();
    while let Some(t) = Tensor::read_from(&mut r)? {
        out.push(t);
    }
    Ok(out)
}

/// Stack equally shaped feature maps into an `N × C × H × W` tensor.
pub fn feature_stack(maps: &[FeatureMap]) -> Result<Tensor> {
    let first = maps.first().ok_or_else(|| Error::param("no feature maps to stack"))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(maps.len() * c * h * w);
    for m in maps {
        if (m.channels(), m.height(), m.width()) != (c, h, w) {
            return Err(Error::param("feature maps differ in shape"));
        }
        data.extend_from_slice(m.data());
    }
    Tensor::from_f64(vec![maps.len(), c, h, w], &data)
}

/// Inverse of [`feature_stack`].
pub fn feature_unstack(t: &Tensor) -> Result<Vec<FeatureMap>> {
    let &[n, c, h, w] = t.dims.as_slice() else {
        return Err(Error::format(
            "feature stack",
            format!("expected rank 4, got dims {:?}", t.dims),
        ));
    };
    let per = c * h * w;
    (0..n)
        .map(|i| {
            FeatureMap::new(
                c,
                h,
                w,
                t.data[i * per..(i + 1) * per].iter().map(|&v| v as f64).collect(),
            )
        })
        .collect()
}

/// Style vectors as an `N × 2C` tensor, `mu` then `sigma` per row.
pub fn style_stack(styles: &[StyleVector]) -> Result<Tensor> {
    let first = styles.first().ok_or_else(|| Error::param("no styles to stack"))?;
    let d = 2 * first.channels();
    let mut data = Vec::with_capacity(styles.len() * d);
    for s in styles {
        if 2 * s.channels() != d {
            return Err(Error::param("style vectors differ in width"));
        }
        data.extend(s.to_vec());
    }
    Tensor::from_f64(vec![styles.len(), d], &data)
}

/// Inverse of [`style_stack`].
pub fn style_unstack(t: &Tensor) -> Result<Vec<StyleVector>> {
    let &[_, d] = t.dims.as_slice() else {
        return Err(Error::format(
            "style set",
            format!("expected rank 2, got dims {:?}", t.dims),
        ));
    };
    if d == 0 || d % 2 != 0 {
        return Err(Error::format("style set", format!("row width {d} is not 2C")));
    }
    t.to_f64().chunks_exact(d).map(StyleVector::from_concat).collect()
}

/// A JSON header line followed by DTNS tensors, the on-disk form of a model.
pub fn write_model_file<H: serde::Serialize>(path: impl AsRef<Path>, header: &H, tensors: &[Tensor]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec(header)?;
    bytes.push(b'\n');
    for t in tensors {
        t.write_to(&mut bytes).expect("writing to a Vec cannot fail");
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model_file<H: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<(H, Vec<Tensor>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("model file", "missing header line"))?;
    let header = serde_json::from_slice(&bytes[..nl])?;
    let mut rest = &bytes[nl + 1..];
    let mut tensors = Vec::new();
    while let Some(t) = Tensor::read_from(&mut rest)? {
        tensors.push(t);
    }
    Ok((header, tensors))
}
