//! Binary little-endian splat PLY, in the pre-activation layout used by
//! 3DGS checkpoints (logit opacity, log scales, unnormalized quaternion).

use std::io::{BufRead, Write};

use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::set::GaussianSet;

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Smallest opacity produced on load; keeps `sigmoid` underflow inside `(0, 1]`.
const MIN_OPACITY: f64 = 1e-12;

/// Stored opacity logits are clamped to this magnitude; `sigmoid(88)` is
/// already exactly 1 in double precision.
const MAX_LOGIT: f64 = 88.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => return Err(Error::Format(format!("unknown ply scalar type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, ScalarType)>,
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Truncated("ply header ended early".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next(r)? != "ply" {
        return Err(Error::Format("missing `ply` signature".into()));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next(r)?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("format") => match parts.next() {
                Some("binary_little_endian") => {}
                Some(other) => return Err(Error::UnsupportedVariant(other.to_string())),
                None => return Err(Error::Format("empty format line".into())),
            },
            Some("element") => {
                let name = parts.next().unwrap_or_default();
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad element line `{l}`")))?;
                in_vertex = name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                } else if count > 0 {
                    return Err(Error::UnsupportedVariant(format!(
                        "element `{name}` besides vertex"
                    )));
                }
            }
            Some("property") => {
                let ty = parts.next().unwrap_or_default();
                if ty == "list" {
                    return Err(Error::UnsupportedVariant("list properties".into()));
                }
                let name = parts
                    .next()
                    .ok_or_else(|| Error::Format(format!("bad property line `{l}`")))?;
                if in_vertex {
                    properties.push((name.to_string(), ScalarType::parse(ty)?));
                }
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(Error::Format(format!("unexpected header keyword `{other}`"))),
        }
    }
    Ok(Header {
        vertex_count: vertex_count.ok_or_else(|| Error::Format("no vertex element".into()))?,
        properties,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reads a splat PLY, applying the activations (sigmoid opacity, exp
/// scales floored at 1e-8, unit quaternion with `w >= 0`). Ids follow file
/// order.
pub fn read_ply<R: BufRead>(mut r: R) -> Result<GaussianSet> {
    let header = read_header(&mut r)?;
    let lookup = |name: &str| header.properties.iter().position(|(n, _)| n == name);
    let mut required = [0usize; REQUIRED.len()];
    for (slot, name) in required.iter_mut().zip(REQUIRED) {
        *slot = lookup(name).ok_or_else(|| Error::MissingProperty(name.to_string()))?;
    }
    let mut rest = Vec::new();
    while let Some(i) = lookup(&format!("f_rest_{}", rest.len())) {
        rest.push(i);
    }

    let mut offsets = Vec::with_capacity(header.properties.len());
    let mut stride = 0;
    for (_, ty) in &header.properties {
        offsets.push(stride);
        stride += ty.size();
    }
    let total = header
        .vertex_count
        .checked_mul(stride)
        .ok_or_else(|| Error::Format("vertex payload size overflows".into()))?;
    let mut payload = vec![0u8; total];
    let mut filled = 0;
    while filled < total {
        let n = r.read(&mut payload[filled..])?;
        if n == 0 {
            return Err(Error::Truncated(format!(
                "vertex payload has {filled} of {total} bytes"
            )));
        }
        filled += n;
    }

    let mut gaussians = Vec::with_capacity(header.vertex_count);
    for v in payload.chunks_exact(stride.max(1)).take(header.vertex_count) {
        let get = |p: usize| {
            let (_, ty) = header.properties[p];
            ty.read(&v[offsets[p]..])
        };
        let f: Vec<f64> = required.iter().map(|&p| get(p)).collect();
        let g = Gaussian3D {
            center: Vector3::new(f[0], f[1], f[2]),
            sh_dc: [f[3], f[4], f[5]],
            opacity: sigmoid(f[6]).clamp(MIN_OPACITY, 1.0),
            scale: Vector3::new(f[7].exp(), f[8].exp(), f[9].exp()),
            rotation: Quaternion::new(f[10], f[11], f[12], f[13]),
            sh_rest: rest.iter().map(|&p| get(p)).collect(),
        };
        gaussians.push(g.sanitized());
    }
    Ok(GaussianSet::new(gaussians))
}

/// Writes the active members in storage order, inverting the load
/// activations. Normals are zero-filled.
pub fn write_ply<W: Write>(set: &GaussianSet, mut w: W) -> Result<()> {
    let members: Vec<&Gaussian3D> = set.iter_active().map(|(_, g)| g).collect();
    let rest = members.iter().map(|g| g.sh_rest.len()).max().unwrap_or(0);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", members.len());
    for name in ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"] {
        header += &format!("property float {name}\n");
    }
    for i in 0..rest {
        header += &format!("property float f_rest_{i}\n");
    }
    for name in ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"] {
        header += &format!("property float {name}\n");
    }
    header += "end_header\n";
    w.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(members.len() * (17 + rest) * 4);
    for g in members {
        let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
        put(g.center.x);
        put(g.center.y);
        put(g.center.z);
        put(0.0);
        put(0.0);
        put(0.0);
        for c in g.sh_dc {
            put(c);
        }
        for i in 0..rest {
            put(g.sh_rest.get(i).copied().unwrap_or(0.0));
        }
        let o = g.opacity;
        put((o / (1.0 - o)).ln().clamp(-MAX_LOGIT, MAX_LOGIT));
        for s in g.scale.iter() {
            put(s.ln());
        }
        put(g.rotation.w);
        put(g.rotation.i);
        put(g.rotation.j);
        put(g.rotation.k);
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}
