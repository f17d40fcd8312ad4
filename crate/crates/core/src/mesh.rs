//! Triangulated surfaces: loading, validation, connectivity and edge-graph
//! geodesics. Coordinates are millimetres and are never rescaled on load.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Real};

/// Smallest triangle area accepted, in mm².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
/// Highest icosphere subdivision level [`make_icosphere`] will build.
pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hemisphere {
    Left,
    Right,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("off") => Ok(MeshFormat::Off),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::Format(format!(
                "cannot infer mesh format of {} (expected .off or .ply)",
                path.display()
            ))),
        }
    }
}

/// An immutable, validated triangle mesh.
///
/// Construction checks that indices are in range, faces are non-degenerate,
/// every vertex is used, and that edges are manifold and consistently
/// oriented (each directed edge appears at most once).
#[derive(Clone, Debug)]
pub struct TriMesh<T: Real> {
    vertices: Vec<Vector3<T>>,
    faces: Vec<[usize; 3]>,
    neighbors: Vec<Vec<(usize, T)>>,
    component: Vec<usize>,
    n_components: usize,
    n_edges: usize,
    hemisphere: Vec<Hemisphere>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(vertices: Vec<Vector3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 || faces.is_empty() {
            return Err(Error::Topology("mesh has no vertices or no faces".into()));
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite_value()))
        {
            return Err(Error::Topology(format!(
                "vertex {i} has a non-finite coordinate"
            )));
        }
        let min_area = T::lit(MIN_TRIANGLE_AREA);
        let mut used = vec![false; n];
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::Topology(format!(
                        "face {fi} references vertex {v} but the mesh has {n} vertices"
                    )));
                }
                used[v] = true;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!(
                    "face {fi} repeats a vertex: {f:?}"
                )));
            }
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area > min_area) {
                return Err(Error::Topology(format!(
                    "face {fi} is degenerate (area {area:e} mm²)"
                )));
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if let Some(prev) = directed.insert((a, b), fi) {
                    return Err(Error::Topology(format!(
                        "directed edge ({a}, {b}) used by faces {prev} and {fi}: \
                         non-manifold or inconsistently oriented"
                    )));
                }
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Topology(format!(
                "vertex {v} is not used by any face"
            )));
        }

        let mut neighbors: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        let mut n_edges = 0;
        for &(a, b) in directed.keys() {
            // Each undirected edge is seen once or twice; add it once.
            if a < b || !directed.contains_key(&(b, a)) {
                let len = (vertices[a] - vertices[b]).norm();
                neighbors[a].push((b, len));
                neighbors[b].push((a, len));
                n_edges += 1;
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }

        let (component, n_components) = connected_components(n, &faces);
        let hemisphere = default_hemispheres(&vertices, &component, n_components);
        Ok(Self {
            vertices,
            faces,
            neighbors,
            component,
            n_components,
            n_edges,
            hemisphere,
        })
    }

    pub fn vertices(&self) -> &[Vector3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges as i64 + self.n_faces() as i64
    }

    /// Edge-graph neighbours of `v` with Euclidean edge lengths.
    pub fn neighbors(&self, v: usize) -> &[(usize, T)] {
        &self.neighbors[v]
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Connected-component id of every vertex. Ids are assigned in order of
    /// each component's lowest vertex index.
    pub fn component_ids(&self) -> &[usize] {
        &self.component
    }

    /// Vertex indices of each component, ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_components];
        for (v, &c) in self.component.iter().enumerate() {
            out[c].push(v);
        }
        out
    }

    pub fn hemisphere_labels(&self) -> &[Hemisphere] {
        &self.hemisphere
    }

    /// Replaces the per-vertex hemisphere labels, e.g. from a sidecar file.
    pub fn with_hemisphere_labels(mut self, labels: Vec<Hemisphere>) -> Result<Self> {
        if labels.len() != self.n_vertices() {
            return Err(Error::Shape(format!(
                "{} hemisphere labels for {} vertices",
                labels.len(),
                self.n_vertices()
            )));
        }
        self.hemisphere = labels;
        Ok(self)
    }

    /// Extracts one connected component as its own mesh, together with the
    /// map from local to global vertex indices.
    pub fn component_submesh(&self, component: usize) -> Result<(TriMesh<T>, Vec<usize>)> {
        if component >= self.n_components {
            return Err(Error::Index {
                index: component,
                len: self.n_components,
            });
        }
        let global: Vec<usize> = (0..self.n_vertices())
            .filter(|&v| self.component[v] == component)
            .collect();
        let mut local = vec![usize::MAX; self.n_vertices()];
        for (l, &g) in global.iter().enumerate() {
            local[g] = l;
        }
        let vertices = global.iter().map(|&g| self.vertices[g]).collect();
        let faces = self
            .faces
            .iter()
            .filter(|f| self.component[f[0]] == component)
            .map(|f| [local[f[0]], local[f[1]], local[f[2]]])
            .collect();
        let sub = TriMesh::new(vertices, faces)?;
        let labels = global.iter().map(|&g| self.hemisphere[g]).collect();
        Ok((sub.with_hemisphere_labels(labels)?, global))
    }

    /// Returns a copy with every vertex mapped through `f`; topology unchanged.
    pub fn map_vertices(&self, f: impl Fn(&Vector3<T>) -> Vector3<T>) -> Result<TriMesh<T>> {
        let mesh = TriMesh::new(self.vertices.iter().map(f).collect(), self.faces.clone())?;
        mesh.with_hemisphere_labels(self.hemisphere.clone())
    }

    /// Disjoint union of two meshes; `other`'s vertices are appended.
    pub fn union(&self, other: &TriMesh<T>) -> Result<TriMesh<T>> {
        let offset = self.n_vertices();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
        );
        TriMesh::new(vertices, faces)
    }

    pub fn centroid(&self) -> Vector3<T> {
        centroid(self.vertices.iter())
    }

    /// Centre (vertex centroid) and radius of a sphere enclosing all vertices.
    pub fn bounding_sphere(&self) -> (Vector3<T>, T) {
        let c = self.centroid();
        let r = self
            .vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a });
        (c, r)
    }

    pub fn total_area(&self) -> T {
        self.faces
            .iter()
            .map(|f| {
                triangle_area(
                    &self.vertices[f[0]],
                    &self.vertices[f[1]],
                    &self.vertices[f[2]],
                )
            })
            .fold(T::zero(), |a, b| a + b)
    }

    /// Unit vertex normals: area-weighted average of incident face normals.
    pub fn vertex_normals(&self) -> Vec<Vector3<T>> {
        let mut acc = vec![Vector3::zeros(); self.n_vertices()];
        for f in &self.faces {
            let (a, b, c) = (
                self.vertices[f[0]],
                self.vertices[f[1]],
                self.vertices[f[2]],
            );
            // |cross| is twice the area, so the raw cross product is already area weighted.
            let n = (b - a).cross(&(c - a));
            for &v in f {
                acc[v] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > T::zero() {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    }

    /// Content hash of vertex coordinates (as f64 bits) and faces.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_vertices() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.as_f64().to_bits().to_le_bytes());
            }
        }
        h.update((self.n_faces() as u64).to_le_bytes());
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Edge-graph (Dijkstra) distances from one vertex. Unreachable vertices
    /// get `+inf`.
    pub fn geodesic_distances(&self, source: usize) -> Result<Vec<T>> {
        self.geodesic_distances_from(&[source])
    }

    /// Distance from every vertex to the nearest vertex of `sources`.
    pub fn geodesic_distances_from(&self, sources: &[usize]) -> Result<Vec<T>> {
        let n = self.n_vertices();
        let mut dist = vec![T::infinity(); n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if s >= n {
                return Err(Error::Index { index: s, len: n });
            }
            dist[s] = T::zero();
            heap.push(Reverse(HeapEntry(T::zero(), s)));
        }
        while let Some(Reverse(HeapEntry(d, v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, len) in &self.neighbors[v] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Reverse(HeapEntry(nd, w)));
                }
            }
        }
        Ok(dist)
    }

    pub fn to_off(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "OFF\n{} {} 0", self.n_vertices(), self.n_faces());
        for v in &self.vertices {
            let _ = writeln!(out, "{} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
        }
        for f in &self.faces {
            let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
        }
        out
    }

    pub fn to_ply(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\n\
             property double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.n_vertices(),
            self.n_faces()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
        }
        for f in &self.faces {
            let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
        }
        out
    }

    pub fn save(&self, path: &Path, format: MeshFormat) -> Result<()> {
        let text = match format {
            MeshFormat::Off => self.to_off(),
            MeshFormat::Ply => self.to_ply(),
        };
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry<T>(T, usize);

impl<T: Real> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for HeapEntry<T> {}
impl<T: Real> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        total_cmp(&self.0, &other.0).then(self.1.cmp(&other.1))
    }
}

pub fn triangle_area<T: Real>(a: &Vector3<T>, b: &Vector3<T>, c: &Vector3<T>) -> T {
    (b - a).cross(&(c - a)).norm() * T::lit(0.5)
}

fn centroid<'a, T: Real>(points: impl Iterator<Item = &'a Vector3<T>>) -> Vector3<T> {
    let mut sum = Vector3::zeros();
    let mut count = 0usize;
    for p in points {
        sum += p;
        count += 1;
    }
    if count == 0 {
        sum
    } else {
        sum / T::of_usize(count)
    }
}

fn connected_components(n: usize, faces: &[[usize; 3]]) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for f in faces {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut count = 0;
    let mut out = vec![0; n];
    for (v, slot) in out.iter_mut().enumerate() {
        let r = find(&mut parent, v);
        if id[r] == usize::MAX {
            id[r] = count;
            count += 1;
        }
        *slot = id[r];
    }
    (out, count)
}

/// One component is `Single`. With exactly two, the component whose centroid
/// has negative x is `Left`; if both share a sign the lower-x one is `Left`.
/// Any other count labels everything `Single`.
fn default_hemispheres<T: Real>(
    vertices: &[Vector3<T>],
    component: &[usize],
    n_components: usize,
) -> Vec<Hemisphere> {
    if n_components != 2 {
        return vec![Hemisphere::Single; vertices.len()];
    }
    let cx: Vec<T> = (0..2)
        .map(|c| {
            centroid(
                vertices
                    .iter()
                    .zip(component)
                    .filter(|(_, &k)| k == c)
                    .map(|(v, _)| v),
            )
            .x
        })
        .collect();
    let left = if (cx[0] < T::zero()) != (cx[1] < T::zero()) {
        if cx[0] < T::zero() {
            0
        } else {
            1
        }
    } else if cx[0] <= cx[1] {
        0
    } else {
        1
    };
    component
        .iter()
        .map(|&c| {
            if c == left {
                Hemisphere::Left
            } else {
                Hemisphere::Right
            }
        })
        .collect()
}

/// Parses the hemisphere sidecar: one `L` or `R` per line, one line per vertex.
pub fn parse_hemisphere_sidecar(text: &str) -> Result<Vec<Hemisphere>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(match t {
            "L" | "l" => Hemisphere::Left,
            "R" | "r" => Hemisphere::Right,
            other => {
                return Err(Error::parse(
                    i + 1,
                    format!("hemisphere label must be L or R, found `{other}`"),
                ))
            }
        });
    }
    Ok(out)
}

pub fn load_mesh<T: Real>(path: &Path, format: MeshFormat) -> Result<TriMesh<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = match String::from_utf8(bytes) {
        Ok(text) => text,
        Err(e) => {
            let bytes = e.into_bytes();
            let head = String::from_utf8_lossy(&bytes[..bytes.len().min(512)]).into_owned();
            return Err(if format == MeshFormat::Ply && head.contains("binary") {
                Error::Format("binary PLY is not supported".into())
            } else {
                Error::Format(format!("{} is not a text file", path.display()))
            });
        }
    };
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Ply => parse_ply(&text),
    }
}

/// Loads a mesh and, if `sidecar` is given, applies its hemisphere labels.
pub fn load_mesh_with_sidecar<T: Real>(
    path: &Path,
    format: MeshFormat,
    sidecar: Option<&Path>,
) -> Result<TriMesh<T>> {
    let mesh = load_mesh(path, format)?;
    match sidecar {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            mesh.with_hemisphere_labels(parse_hemisphere_sidecar(&text)?)
        }
        None => Ok(mesh),
    }
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = match l.find('#') {
            Some(k) => &l[..k],
            None => l,
        }
        .trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<N: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<N> {
    tok.parse::<N>()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{tok}`")))
}

pub fn parse_off<T: Real>(text: &str) -> Result<TriMesh<T>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty OFF file"))?;
    let mut header_tokens = header.split_whitespace();
    if header_tokens.next() != Some("OFF") {
        return Err(Error::parse(hl, "expected `OFF` header"));
    }
    // Counts may share the header line.
    let rest: Vec<&str> = header_tokens.collect();
    let (cl, counts) = if rest.is_empty() {
        let (cl, l) = lines
            .next()
            .ok_or_else(|| Error::parse(hl, "missing `V F E` line"))?;
        (cl, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (hl, rest)
    };
    if counts.len() != 3 {
        return Err(Error::parse(cl, "expected `V F E` counts"));
    }
    let nv: usize = parse_num(counts[0], cl, "vertex count")?;
    let nf: usize = parse_num(counts[1], cl, "face count")?;
    let _: usize = parse_num(counts[2], cl, "edge count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cl, format!("expected {nv} vertices")))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(Error::parse(ln, "vertex line must be `x y z`"));
        }
        let c: [f64; 3] = [
            parse_num(t[0], ln, "coordinate")?,
            parse_num(t[1], ln, "coordinate")?,
            parse_num(t[2], ln, "coordinate")?,
        ];
        vertices.push(Vector3::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2])));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cl, format!("expected {nf} faces")))?;
        faces.push(parse_triangle(l, ln)?);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::parse(ln, "unexpected trailing data"));
    }
    TriMesh::new(vertices, faces)
}

fn parse_triangle(line: &str, ln: usize) -> Result<[usize; 3]> {
    let t: Vec<&str> = line.split_whitespace().collect();
    let count: usize = parse_num(t.first().copied().unwrap_or(""), ln, "face size")?;
    if count != 3 {
        return Err(Error::parse(
            ln,
            format!("only triangles are supported, found a {count}-gon"),
        ));
    }
    if t.len() != 4 {
        return Err(Error::parse(ln, "face line must be `3 i j k`"));
    }
    Ok([
        parse_num(t[1], ln, "vertex index")?,
        parse_num(t[2], ln, "vertex index")?,
        parse_num(t[3], ln, "vertex index")?,
    ])
}

#[derive(Debug)]
enum PlyProperty {
    Scalar(String),
    List,
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

/// Parses the ASCII PLY subset: a `vertex` element with float `x`, `y`, `z`
/// (other properties ignored) and a `face` element with one list property.
pub fn parse_ply<T: Real>(text: &str) -> Result<TriMesh<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(1, "expected `ply` magic line")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing `end_header`"))?;
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.first().copied() {
            Some("format") => {
                if t.get(1) != Some(&"ascii") {
                    return Err(Error::Format(format!(
                        "PLY format `{}` is not supported (ascii only)",
                        t.get(1).unwrap_or(&"")
                    )));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                if t.len() != 3 {
                    return Err(Error::parse(ln, "expected `element <name> <count>`"));
                }
                elements.push(PlyElement {
                    name: t[1].to_string(),
                    count: parse_num(t[2], ln, "element count")?,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ln, "property before any element"))?;
                let prop = match t.get(1).copied() {
                    Some("list") if t.len() == 5 => PlyProperty::List,
                    Some(_) if t.len() == 3 => PlyProperty::Scalar(t[2].to_string()),
                    _ => return Err(Error::parse(ln, "malformed property line")),
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(
                    ln,
                    format!("unknown header keyword `{other}`"),
                ))
            }
        }
    }
    if !saw_format {
        return Err(Error::Format("PLY header lacks a format line".into()));
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for el in &elements {
        let xyz = if el.name == "vertex" {
            let idx = |name: &str| {
                el.properties
                    .iter()
                    .position(|p| matches!(p, PlyProperty::Scalar(n) if n == name))
                    .ok_or_else(|| Error::Format(format!("vertex element lacks `{name}`")))
            };
            Some([idx("x")?, idx("y")?, idx("z")?])
        } else {
            None
        };
        for _ in 0..el.count {
            let (ln, line) = body
                .next()
                .ok_or_else(|| Error::parse(0, format!("truncated `{}` element", el.name)))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let mut pos = 0;
            let mut scalars: Vec<&str> = Vec::with_capacity(el.properties.len());
            let mut list: Option<Vec<&str>> = None;
            for p in &el.properties {
                match p {
                    PlyProperty::Scalar(_) => {
                        let tok = tokens
                            .get(pos)
                            .ok_or_else(|| Error::parse(ln, "too few values"))?;
                        scalars.push(tok);
                        pos += 1;
                    }
                    PlyProperty::List => {
                        let len: usize =
                            parse_num(tokens.get(pos).copied().unwrap_or(""), ln, "list length")?;
                        let items = tokens
                            .get(pos + 1..pos + 1 + len)
                            .ok_or_else(|| Error::parse(ln, "list shorter than declared"))?;
                        if list.is_none() {
                            list = Some(items.to_vec());
                        }
                        scalars.push("");
                        pos += 1 + len;
                    }
                }
            }
            if pos != tokens.len() {
                return Err(Error::parse(ln, "too many values"));
            }
            if let Some([ix, iy, iz]) = xyz {
                vertices.push(Vector3::new(
                    T::lit(parse_num(scalars[ix], ln, "coordinate")?),
                    T::lit(parse_num(scalars[iy], ln, "coordinate")?),
                    T::lit(parse_num(scalars[iz], ln, "coordinate")?),
                ));
            } else if el.name == "face" {
                let items =
                    list.ok_or_else(|| Error::Format("face element lacks a list".into()))?;
                if items.len() != 3 {
                    return Err(Error::parse(
                        ln,
                        format!("only triangles are supported, found a {}-gon", items.len()),
                    ));
                }
                faces.push([
                    parse_num(items[0], ln, "vertex index")?,
                    parse_num(items[1], ln, "vertex index")?,
                    parse_num(items[2], ln, "vertex index")?,
                ]);
            }
        }
    }
    if let Some((ln, _)) = body.next() {
        return Err(Error::parse(ln, "unexpected trailing data"));
    }
    TriMesh::new(vertices, faces)
}

/// Geodesic icosphere: the icosahedron, split `subdivisions` times by edge
/// midpoints, every vertex projected to the sphere of `radius` about the origin.
pub fn make_icosphere<T: Real>(subdivisions: u32, radius: T) -> Result<TriMesh<T>> {
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(Error::Limit(format!(
            "icosphere subdivision {subdivisions} exceeds {MAX_ICOSPHERE_SUBDIVISIONS}"
        )));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut points: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |p: [f64; 3]| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    for p in &mut points {
        *p = normalize(*p);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, points: &mut Vec<[f64; 3]>| {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoint.entry(key).or_insert_with(|| {
                let (pa, pb) = (points[a], points[b]);
                points.push(normalize([
                    (pa[0] + pb[0]) / 2.0,
                    (pa[1] + pb[1]) / 2.0,
                    (pa[2] + pb[2]) / 2.0,
                ]));
                points.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut points);
            let bc = mid(b, c, &mut points);
            let ca = mid(c, a, &mut points);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = points
        .into_iter()
        .map(|p| Vector3::new(T::lit(p[0]), T::lit(p[1]), T::lit(p[2])) * radius)
        .collect();
    TriMesh::new(vertices, faces)
}
