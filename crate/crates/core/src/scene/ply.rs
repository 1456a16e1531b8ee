use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{logit, sigmoid, GaussianScene, SceneError, SH_REST_LEN};
use crate::geom::Quaternion;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Keep `f_rest_*` coefficients when the file has them.
    pub keep_sh_rest: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { keep_sh_rest: true }
    }
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    count: usize,
    props: Vec<(String, Scalar)>,
}

fn fmt_err(msg: impl Into<String>) -> SceneError {
    SceneError::Format(msg.into())
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header, SceneError> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<(), SceneError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(fmt_err("unexpected end of header"));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(fmt_err("missing 'ply' magic"));
    }
    let mut count = None;
    let mut props = Vec::new();
    // properties of elements other than `vertex` are counted but unsupported
    let mut in_vertex = false;
    loop {
        next(&mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => {}
            ["format", f, ..] => return Err(fmt_err(format!("unsupported format '{f}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse().map_err(|_| fmt_err("bad vertex count"))?);
                } else if count.is_none() {
                    return Err(fmt_err(format!("element '{name}' precedes vertex data")));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(fmt_err("list properties are not supported on vertices"))
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty)
                    .ok_or_else(|| fmt_err(format!("unknown property type '{ty}'")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(fmt_err(format!("unrecognized header line '{}'", line.trim_end()))),
        }
    }
    let count = count.ok_or_else(|| fmt_err("no vertex element"))?;
    Ok(Header { count, props })
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianScene, SceneError> {
    load_ply_with(path, LoadOptions::default())
}

pub fn load_ply_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<GaussianScene, SceneError> {
    let mut r = BufReader::new(File::open(path)?);
    read_ply(&mut r, opts)
}

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

pub fn read_ply<R: BufRead>(r: &mut R, opts: LoadOptions) -> Result<GaussianScene, SceneError> {
    let header = read_header(r)?;
    let find = |name: &str| header.props.iter().position(|(n, _)| n == name);
    let missing: Vec<String> = REQUIRED
        .iter()
        .filter(|n| find(n).is_none())
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SceneError::MissingProperties(missing));
    }
    let idx = |name: &str| find(name).unwrap();
    let rest_idx: Vec<Option<usize>> = (0..SH_REST_LEN).map(|k| find(&format!("f_rest_{k}"))).collect();
    let has_rest = opts.keep_sh_rest && rest_idx.iter().any(Option::is_some);

    let mut offsets = Vec::with_capacity(header.props.len());
    let mut stride = 0;
    for (_, s) in &header.props {
        offsets.push(stride);
        stride += s.size();
    }
    let mut row = vec![0u8; stride];
    let mut vals = vec![0.0f64; header.props.len()];
    let mut scene = GaussianScene {
        sh_rest: has_rest.then(Vec::new),
        ..Default::default()
    };
    let [ix, iy, iz] = ["x", "y", "z"].map(idx);
    let dc = ["f_dc_0", "f_dc_1", "f_dc_2"].map(idx);
    let sc = ["scale_0", "scale_1", "scale_2"].map(idx);
    let rot = ["rot_0", "rot_1", "rot_2", "rot_3"].map(idx);
    let iop = idx("opacity");
    for i in 0..header.count {
        r.read_exact(&mut row)
            .map_err(|_| fmt_err(format!("truncated vertex data at splat {i}")))?;
        for (k, (_, s)) in header.props.iter().enumerate() {
            vals[k] = s.read(&row[offsets[k]..]);
        }
        let check = |ids: &[usize], field: &'static str| {
            if ids.iter().all(|&k| vals[k].is_finite()) {
                Ok(())
            } else {
                Err(SceneError::NonFinite { index: i, field })
            }
        };
        check(&[ix, iy, iz], "mean")?;
        check(&dc, "f_dc")?;
        check(&sc, "scale")?;
        check(&rot, "rotation")?;
        check(&[iop], "opacity")?;
        let q = Quaternion::new(vals[rot[0]], vals[rot[1]], vals[rot[2]], vals[rot[3]]);
        if q.norm() == 0.0 {
            return Err(SceneError::NonFinite { index: i, field: "rotation" });
        }
        scene.means.push([vals[ix], vals[iy], vals[iz]]);
        scene.sh_dc.push(dc.map(|k| vals[k]));
        scene.log_scales.push(sc.map(|k| vals[k]));
        scene.rotations.push(q.normalized());
        scene.opacities.push(sigmoid(vals[iop]));
        if let Some(rest) = &mut scene.sh_rest {
            let mut c = [0.0; SH_REST_LEN];
            for (k, id) in rest_idx.iter().enumerate() {
                if let Some(id) = id {
                    c[k] = vals[*id];
                    if !c[k].is_finite() {
                        return Err(SceneError::NonFinite { index: i, field: "f_rest" });
                    }
                }
            }
            rest.push(c);
        }
    }
    Ok(scene)
}

pub fn save_ply(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(scene, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the standard layout as `float` properties; normals are zero.
pub fn write_ply<W: Write>(scene: &GaussianScene, w: &mut W) -> Result<(), SceneError> {
    scene.validate()?;
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", scene.len());
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .map(String::from)
        .to_vec();
    names.extend((0..SH_REST_LEN).map(|k| format!("f_rest_{k}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"].map(String::from),
    );
    for n in &names {
        header += &format!("property float {n}\n");
    }
    header += "end_header\n";
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(names.len() * 4);
    for i in 0..scene.len() {
        buf.clear();
        let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
        scene.means[i].iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        scene.sh_dc[i].iter().for_each(|&v| put(v));
        match &scene.sh_rest {
            Some(rest) => rest[i].iter().for_each(|&v| put(v)),
            None => (0..SH_REST_LEN).for_each(|_| put(0.0)),
        }
        put(logit(scene.opacities[i]));
        scene.log_scales[i].iter().for_each(|&v| put(v));
        scene.rotations[i].to_array().iter().for_each(|&v| put(v));
        w.write_all(&buf)?;
    }
    Ok(())
}
