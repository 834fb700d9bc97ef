//! Point clouds: PLY (ascii / binary little-endian) and xyz text I/O, plus
//! density-driven voxel subsampling.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::GeomIoError;

/// Environment point cloud in the right-handed, z-up world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    labels: Option<Vec<u32>>,
}

/// On-disk point cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    XyzText,
}

impl CloudFormat {
    /// Guess from the file extension (`.ply` defaults to binary on save).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::PlyBinaryLe),
            "xyz" | "txt" => Some(CloudFormat::XyzText),
            _ => None,
        }
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, labels: Option<Vec<u32>>) -> Result<Self, GeomIoError> {
        if let Some(idx) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeomIoError::NonFinite { index: idx });
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(GeomIoError::LabelCount { points: points.len(), labels: l.len() });
            }
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self, idx: usize) -> Option<u32> {
        self.labels.as_ref().map(|l| l[idx])
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Concatenate two clouds. Labels survive only if both sides carry them.
    pub fn merged(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        PointCloud { points, labels }
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, GeomIoError> {
    let bytes = fs::read(path)?;
    match format {
        CloudFormat::XyzText => parse_xyz(&String::from_utf8_lossy(&bytes)),
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => parse_ply(&bytes),
    }
}

/// Load a cloud, picking the decoder from the extension (PLY headers name
/// their own encoding).
pub fn load_point_cloud_auto(path: &Path) -> Result<PointCloud, GeomIoError> {
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| GeomIoError::Format(format!("unknown point cloud extension: {}", path.display())))?;
    load_point_cloud(path, format)
}

fn parse_xyz(text: &str) -> Result<PointCloud, GeomIoError> {
    let mut points = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut columns = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let n = fields.len();
        if n != 3 && n != 4 {
            return Err(GeomIoError::parse(lineno + 1, format!("expected 3 or 4 fields, found {n}")));
        }
        match columns {
            None => columns = Some(n),
            Some(c) if c != n => {
                return Err(GeomIoError::parse(lineno + 1, format!("column count changed from {c} to {n}")))
            }
            _ => {}
        }
        let mut xyz = [0.0; 3];
        for (k, f) in fields[..3].iter().enumerate() {
            xyz[k] = f
                .parse::<f64>()
                .map_err(|e| GeomIoError::parse(lineno + 1, format!("bad coordinate {f:?}: {e}")))?;
        }
        points.push(Point3::from(xyz));
        if n == 4 {
            labels.push(
                fields[3]
                    .parse::<u32>()
                    .map_err(|e| GeomIoError::parse(lineno + 1, format!("bad label {:?}: {e}", fields[3])))?,
            );
        }
    }
    let labels = (columns == Some(4)).then_some(labels);
    PointCloud::new(points, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<(String, PropKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

struct PlyHeader {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader, GeomIoError> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| GeomIoError::Format("PLY header not terminated by end_header".into()))?;
        let line = String::from_utf8_lossy(&rest[..nl]).trim_end_matches('\r').to_string();
        offset += nl + 1;
        let done = line.trim() == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }
    if lines.first().map(|l| l.trim()) != Some("ply") {
        return Err(GeomIoError::Format("missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for (n, line) in lines.iter().enumerate().skip(1) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(PlyEncoding::BinaryLe),
            ["format", other, _] => {
                return Err(GeomIoError::Format(format!("unsupported PLY format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| GeomIoError::parse(n + 1, format!("bad element count {count:?}")))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", cnt, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| GeomIoError::parse(n + 1, "property before element"))?;
                let (count, item) = match (Scalar::parse(cnt), Scalar::parse(item)) {
                    (Some(c), Some(i)) => (c, i),
                    _ => return Err(GeomIoError::parse(n + 1, "bad list property type")),
                };
                el.props.push((name.to_string(), PropKind::List { count, item }));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| GeomIoError::parse(n + 1, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| GeomIoError::parse(n + 1, format!("unknown property type {ty:?}")))?;
                el.props.push((name.to_string(), PropKind::Scalar(ty)));
            }
            _ => return Err(GeomIoError::parse(n + 1, format!("unrecognised header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| GeomIoError::Format("PLY header has no format line".into()))?;
    Ok(PlyHeader { encoding, elements, body_offset: offset })
}

struct VertexLayout {
    xyz: [usize; 3],
    label: Option<usize>,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout, GeomIoError> {
    let find = |name: &str| el.props.iter().position(|(n, _)| n == name);
    let mut xyz = [0; 3];
    for (k, axis) in ["x", "y", "z"].iter().enumerate() {
        xyz[k] = find(axis).ok_or_else(|| GeomIoError::Format(format!("vertex has no '{axis}' property")))?;
        if !matches!(el.props[xyz[k]].1, PropKind::Scalar(_)) {
            return Err(GeomIoError::Format(format!("vertex '{axis}' must be a scalar")));
        }
    }
    let label = match find("label") {
        Some(i) => match el.props[i].1 {
            PropKind::Scalar(s) if s.is_integer() => Some(i),
            _ => return Err(GeomIoError::Format("vertex 'label' must be an integer scalar".into())),
        },
        None => None,
    };
    Ok(VertexLayout { xyz, label })
}

fn parse_ply(bytes: &[u8]) -> Result<PointCloud, GeomIoError> {
    let header = parse_ply_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| GeomIoError::Format("PLY has no vertex element".into()))?;
    let layout = vertex_layout(&header.elements[vertex_idx])?;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut push_row = |row: &[f64]| -> Result<(), GeomIoError> {
        points.push(Point3::new(row[layout.xyz[0]], row[layout.xyz[1]], row[layout.xyz[2]]));
        if let Some(li) = layout.label {
            let l = row[li];
            if l < 0.0 || l > u32::MAX as f64 {
                return Err(GeomIoError::Format(format!("label {l} out of range")));
            }
            labels.push(l as u32);
        }
        Ok(())
    };

    match header.encoding {
        PlyEncoding::Ascii => {
            let text = String::from_utf8_lossy(body);
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for (ei, el) in header.elements.iter().enumerate() {
                for row_idx in 0..el.count {
                    let line = lines.next().ok_or(GeomIoError::Truncated {
                        element: el.name.clone(),
                        expected: el.count,
                        found: row_idx,
                    })?;
                    if ei != vertex_idx {
                        continue;
                    }
                    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
                    let vals = vals.map_err(|e| GeomIoError::Format(format!("vertex {row_idx}: {e}")))?;
                    if vals.len() < el.props.len() {
                        return Err(GeomIoError::Format(format!("vertex {row_idx}: too few values")));
                    }
                    push_row(&vals)?;
                }
                if ei == vertex_idx {
                    break;
                }
            }
        }
        PlyEncoding::BinaryLe => {
            let mut pos = 0usize;
            let take = |pos: &mut usize, n: usize, el: &Element, row: usize| -> Result<usize, GeomIoError> {
                if *pos + n > body.len() {
                    return Err(GeomIoError::Truncated { element: el.name.clone(), expected: el.count, found: row });
                }
                let start = *pos;
                *pos += n;
                Ok(start)
            };
            let mut row = Vec::new();
            for (ei, el) in header.elements.iter().enumerate() {
                for r in 0..el.count {
                    row.clear();
                    for (_, kind) in &el.props {
                        match *kind {
                            PropKind::Scalar(s) => {
                                let at = take(&mut pos, s.size(), el, r)?;
                                row.push(s.read_le(&body[at..]));
                            }
                            PropKind::List { count, item } => {
                                let at = take(&mut pos, count.size(), el, r)?;
                                let n = count.read_le(&body[at..]) as usize;
                                take(&mut pos, n * item.size(), el, r)?;
                                row.push(f64::NAN);
                            }
                        }
                    }
                    if ei == vertex_idx {
                        push_row(&row)?;
                    }
                }
                if ei == vertex_idx {
                    break;
                }
            }
        }
    }
    let labels = layout.label.map(|_| labels);
    PointCloud::new(points, labels)
}

// ---------------------------------------------------------------------------
// Saving
// ---------------------------------------------------------------------------

pub fn save_point_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<(), GeomIoError> {
    let mut out = Vec::new();
    match format {
        CloudFormat::XyzText => {
            for (i, p) in cloud.points.iter().enumerate() {
                match cloud.label(i) {
                    Some(l) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, l)?,
                    None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
                }
            }
        }
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => {
            let enc = if format == CloudFormat::PlyAscii { "ascii" } else { "binary_little_endian" };
            writeln!(out, "ply\nformat {enc} 1.0\nelement vertex {}", cloud.len())?;
            writeln!(out, "property double x\nproperty double y\nproperty double z")?;
            if cloud.labels.is_some() {
                writeln!(out, "property uint label")?;
            }
            writeln!(out, "end_header")?;
            for (i, p) in cloud.points.iter().enumerate() {
                if format == CloudFormat::PlyAscii {
                    match cloud.label(i) {
                        Some(l) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, l)?,
                        None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
                    }
                } else {
                    for c in p.coords.iter() {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                    if let Some(l) = cloud.label(i) {
                        out.extend_from_slice(&l.to_le_bytes());
                    }
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Density subsampling
// ---------------------------------------------------------------------------

/// Voxel edge length realising `delta` points per cubic meter.
pub fn voxel_edge_for_density(delta: f64) -> f64 {
    (1.0 / delta).cbrt()
}

fn voxel_key(p: &Point3<f64>, edge: f64) -> [i64; 3] {
    [
        (p.x / edge).floor() as i64,
        (p.y / edge).floor() as i64,
        (p.z / edge).floor() as i64,
    ]
}

/// Voxel-grid downsampling to at most one point per `(1/delta)^(1/3)` cube.
///
/// The grid is anchored at the world origin. Each occupied voxel yields the
/// centroid of its members and their majority label (ties to the smaller id).
/// If rounding pushes a centroid outside its voxel, the member nearest to the
/// centroid is used instead, so the output never straddles voxels and the
/// operation is idempotent. Output is ordered by voxel index.
pub fn subsample_density(cloud: &PointCloud, delta: f64) -> Result<PointCloud, GeomIoError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(GeomIoError::InvalidParameter(format!("density must be positive, got {delta}")));
    }
    if cloud.is_empty() {
        return Err(GeomIoError::EmptyCloud);
    }
    let edge = voxel_edge_for_density(delta);
    let mut bins: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        bins.entry(voxel_key(p, edge)).or_default().push(i);
    }
    let mut keys: Vec<_> = bins.keys().copied().collect();
    keys.sort_unstable();

    let mut points = Vec::with_capacity(keys.len());
    let mut labels = cloud.labels.as_ref().map(|_| Vec::with_capacity(keys.len()));
    for key in keys {
        let members = &bins[&key];
        let anchor = cloud.points[members[0]];
        let sum = members.iter().fold(nalgebra::Vector3::zeros(), |acc, &i| acc + (cloud.points[i] - anchor));
        let mut centroid = anchor + sum / members.len() as f64;
        if voxel_key(&centroid, edge) != key {
            let nearest = members
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (cloud.points[a] - centroid).norm_squared();
                    let db = (cloud.points[b] - centroid).norm_squared();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .copied()
                .unwrap();
            centroid = cloud.points[nearest];
        }
        points.push(centroid);
        if let (Some(out), Some(src)) = (labels.as_mut(), cloud.labels.as_ref()) {
            out.push(majority_label(members.iter().map(|&i| src[i])));
        }
    }
    PointCloud::new(points, labels)
}

/// Most frequent label; ties resolve to the smaller id.
pub fn majority_label(labels: impl IntoIterator<Item = u32>) -> u32 {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
        .map(|(l, _)| l)
        .unwrap_or(0)
}
