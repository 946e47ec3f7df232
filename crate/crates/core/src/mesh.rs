//! Closed triangulated surfaces embedded in 3-space.
//!
//! A [`SurfaceMesh`] is immutable once built. Construction validates that the
//! triangulation is an oriented closed 2-manifold and caches the per-triangle
//! geometry that finite element assembly needs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub type Point3 = [f64; 3];

/// Highest refinement level accepted by [`build_refined_sphere`].
pub const MAX_REFINEMENT_LEVEL: u32 = 9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("refinement level {level} exceeds the cap of {cap}")]
    Capacity { level: u32, cap: u32 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-manifold edge ({0}, {1}) shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("open boundary: edge ({0}, {1}) belongs to a single triangle")]
    OpenBoundary(usize, usize),
    #[error("surface is not orientable (conflict at triangle {0})")]
    NonOrientable(usize),
    #[error("triangle {0} is degenerate (zero area)")]
    DegenerateTriangle(usize),
    #[error("triangle {triangle} references vertex {vertex} but only {count} vertices exist")]
    VertexIndex {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Cached geometry of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub area: f64,
    pub normal: Point3,
    /// Edge vectors opposite to local vertex 0, 1, 2: `e0 = x2 - x1`,
    /// `e1 = x0 - x2`, `e2 = x1 - x0`.
    pub edges: [Point3; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    pub edges: usize,
    pub area: f64,
    pub h_max: f64,
}

impl MeshStats {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices as i64 - self.edges as i64 + self.triangles as i64
    }
}

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    id: u64,
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    geometry: Vec<TriangleGeometry>,
    edges: Vec<[usize; 2]>,
    area: f64,
    h_max: f64,
}

impl SurfaceMesh {
    /// Validates and builds a mesh from raw arrays. Orientation must already be
    /// consistent; use [`SurfaceMesh::from_unoriented`] otherwise.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        check_indices(&vertices, &triangles)?;
        let edges = check_manifold(&triangles)?;
        check_orientation(&triangles)?;
        Self::finish(vertices, triangles, edges)
    }

    /// Like [`SurfaceMesh::new`] but repairs triangle orientation by
    /// propagation from the first triangle of each connected piece, then
    /// flips pieces with negative enclosed volume so normals point outward.
    pub fn from_unoriented(
        vertices: Vec<Point3>,
        mut triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        check_indices(&vertices, &triangles)?;
        let edges = check_manifold(&triangles)?;
        orient_by_propagation(&vertices, &mut triangles)?;
        Self::finish(vertices, triangles, edges)
    }

    fn finish(
        vertices: Vec<Point3>,
        triangles: Vec<[usize; 3]>,
        edges: Vec<[usize; 2]>,
    ) -> Result<Self, MeshError> {
        let mut geometry = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let g = triangle_geometry(&vertices, tri);
            if !(g.area > 0.0) {
                return Err(MeshError::DegenerateTriangle(t));
            }
            geometry.push(g);
        }
        let area = geometry.iter().map(|g| g.area).sum();
        let h_max = edges
            .iter()
            .map(|&[a, b]| norm(sub(vertices[a], vertices[b])))
            .fold(0.0, f64::max);
        Ok(SurfaceMesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            vertices,
            triangles,
            geometry,
            edges,
            area,
            h_max,
        })
    }

    /// Identity token used to check that fields belong to this mesh. Clones
    /// share the id of the original.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn geometry(&self) -> &[TriangleGeometry] {
        &self.geometry
    }

    /// Undirected edges `[a, b]` with `a < b`, sorted.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn stats(&self) -> MeshStats {
        mesh_stats(self)
    }

    /// Vertex adjacency lists derived from the edge list.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Signed enclosed volume (divergence theorem); positive for outward
    /// orientation.
    pub fn signed_volume(&self) -> f64 {
        signed_volume(&self.vertices, &self.triangles)
    }
}

pub fn mesh_stats(mesh: &SurfaceMesh) -> MeshStats {
    MeshStats {
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        edges: mesh.edges.len(),
        area: mesh.area,
        h_max: mesh.h_max,
    }
}

/// Cube split into 12 triangles, refined `level` times by edge-midpoint
/// subdivision with every vertex projected onto the unit sphere. Yields
/// `6 * 4^level + 2` vertices and `12 * 4^level` triangles.
pub fn build_refined_sphere(level: u32) -> Result<SurfaceMesh, MeshError> {
    let (vertices, triangles) = refined_sphere_arrays(level)?;
    SurfaceMesh::new(vertices, triangles)
}

/// Octahedron refined `level` times like [`build_refined_sphere`]; yields
/// `4 * 4^level + 2` vertices.
pub fn build_octahedral_sphere(level: u32) -> Result<SurfaceMesh, MeshError> {
    let vertices: Vec<Point3> = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let triangles: Vec<[usize; 3]> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    let (vertices, triangles) = refine(vertices, triangles, level)?;
    SurfaceMesh::new(vertices, triangles)
}

fn refined_sphere_arrays(level: u32) -> Result<(Vec<Point3>, Vec<[usize; 3]>), MeshError> {
    let c = 1.0 / 3f64.sqrt();
    let vertices: Vec<Point3> = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { c } else { -c };
            [s(1), s(2), s(4)]
        })
        .collect();
    let quads = [
        [1, 3, 7, 5],
        [0, 4, 6, 2],
        [2, 6, 7, 3],
        [0, 1, 5, 4],
        [4, 5, 7, 6],
        [0, 2, 3, 1],
    ];
    let triangles: Vec<[usize; 3]> = quads
        .iter()
        .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
        .collect();
    refine(vertices, triangles, level)
}

fn refine(
    mut vertices: Vec<Point3>,
    mut triangles: Vec<[usize; 3]>,
    level: u32,
) -> Result<(Vec<Point3>, Vec<[usize; 3]>), MeshError> {
    if level > MAX_REFINEMENT_LEVEL {
        return Err(MeshError::Capacity {
            level,
            cap: MAX_REFINEMENT_LEVEL,
        });
    }
    for _ in 0..level {
        let (v, t) = subdivide(&vertices, &triangles);
        vertices = v;
        triangles = t;
    }
    Ok((vertices, triangles))
}

/// One round of 1-to-4 midpoint subdivision. Parent vertices keep their
/// indices; edge midpoints follow in sorted edge order.
fn subdivide(vertices: &[Point3], triangles: &[[usize; 3]]) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let mut edge_keys: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in triangles {
        for k in 0..3 {
            edge_keys.insert(edge_key(tri[k], tri[(k + 1) % 3]), 0);
        }
    }
    let mut new_vertices = vertices.to_vec();
    new_vertices.reserve(edge_keys.len());
    for (&(a, b), slot) in edge_keys.iter_mut() {
        *slot = new_vertices.len();
        new_vertices.push(normalize(scale(add(vertices[a], vertices[b]), 0.5)));
    }
    let mut new_triangles = Vec::with_capacity(triangles.len() * 4);
    for &[a, b, c] in triangles {
        let ab = edge_keys[&edge_key(a, b)];
        let bc = edge_keys[&edge_key(b, c)];
        let ca = edge_keys[&edge_key(c, a)];
        new_triangles.push([a, ab, ca]);
        new_triangles.push([ab, b, bc]);
        new_triangles.push([ca, bc, c]);
        new_triangles.push([ab, bc, ca]);
    }
    (new_vertices, new_triangles)
}

/// Refined sphere with the radial perturbation
/// `r = 1 + amplitude * cos(wavenumber * azimuth) * sin(polar)^2`.
/// Self-intersection is not checked; amplitudes below 0.5 keep the surface
/// star-shaped with respect to the origin.
pub fn build_bumpy_sphere(
    level: u32,
    amplitude: f64,
    wavenumber: u32,
) -> Result<SurfaceMesh, MeshError> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(MeshError::InvalidParameter(format!(
            "amplitude {amplitude} outside [0, 0.5)"
        )));
    }
    let (mut vertices, triangles) = refined_sphere_arrays(level)?;
    if amplitude > 0.0 {
        for x in vertices.iter_mut() {
            let azimuth = x[1].atan2(x[0]);
            let sin2 = 1.0 - x[2] * x[2];
            let r = 1.0 + amplitude * (wavenumber as f64 * azimuth).cos() * sin2;
            *x = scale(*x, r);
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Reads an ASCII OFF file with triangular faces and 0-based indices.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<SurfaceMesh, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_off(&text)
}

pub fn parse_off(text: &str) -> Result<SurfaceMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let parse_err = |line: usize, message: &str| MeshError::Parse {
        line,
        message: message.to_string(),
    };

    let (line, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    // Counts may share the header line ("OFF 4 4 6").
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(line, "missing OFF header"))?
        .trim();
    let (count_line, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(line, "missing counts line"))?
    } else {
        (line, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err(count_line, "counts must be nonnegative integers"))?;
    if counts.len() < 2 {
        return Err(parse_err(count_line, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(count_line, "unexpected end of file in vertex list"))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(line, "invalid vertex coordinate"))?;
        if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
            return Err(parse_err(line, "vertex needs three finite coordinates"));
        }
        vertices.push([coords[0], coords[1], coords[2]]);
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(count_line, "unexpected end of file in face list"))?;
        let ints: Vec<usize> = l
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(line, "invalid face index"))?;
        if ints.len() != 4 || ints[0] != 3 {
            return Err(parse_err(
                line,
                "only triangular faces \"3 i j k\" are supported",
            ));
        }
        triangles.push([ints[1], ints[2], ints[3]]);
    }
    SurfaceMesh::from_unoriented(vertices, triangles)
}

fn check_indices(vertices: &[Point3], triangles: &[[usize; 3]]) -> Result<(), MeshError> {
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if v >= vertices.len() {
                return Err(MeshError::VertexIndex {
                    triangle: t,
                    vertex: v,
                    count: vertices.len(),
                });
            }
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::DegenerateTriangle(t));
        }
    }
    Ok(())
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Returns the sorted undirected edge list, or the first manifold violation.
fn check_manifold(triangles: &[[usize; 3]]) -> Result<Vec<[usize; 2]>, MeshError> {
    let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for tri in triangles {
        for k in 0..3 {
            *counts
                .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                .or_insert(0) += 1;
        }
    }
    for (&(a, b), &n) in &counts {
        if n > 2 {
            return Err(MeshError::NonManifoldEdge(a, b));
        }
    }
    for (&(a, b), &n) in &counts {
        if n == 1 {
            return Err(MeshError::OpenBoundary(a, b));
        }
    }
    Ok(counts.keys().map(|&(a, b)| [a, b]).collect())
}

/// Every directed edge must appear exactly once.
fn check_orientation(triangles: &[[usize; 3]]) -> Result<(), MeshError> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            if directed.insert((tri[k], tri[(k + 1) % 3]), t).is_some() {
                return Err(MeshError::NonOrientable(t));
            }
        }
    }
    Ok(())
}

fn orient_by_propagation(
    vertices: &[Point3],
    triangles: &mut [[usize; 3]],
) -> Result<(), MeshError> {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> =
        HashMap::with_capacity(triangles.len() * 3 / 2);
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            by_edge
                .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                .or_default()
                .push(t);
        }
    }
    let has_directed =
        |tri: &[usize; 3], a: usize, b: usize| (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b);

    let mut visited = vec![false; triangles.len()];
    for seed in 0..triangles.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut piece = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(t) = queue.pop_front() {
            let tri = triangles[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                for &n in &by_edge[&edge_key(a, b)] {
                    if n == t {
                        continue;
                    }
                    // A consistently oriented neighbour traverses the shared edge as b -> a.
                    let consistent = has_directed(&triangles[n], b, a);
                    if visited[n] {
                        if !consistent {
                            return Err(MeshError::NonOrientable(n));
                        }
                        continue;
                    }
                    if !consistent {
                        triangles[n].swap(1, 2);
                    }
                    visited[n] = true;
                    piece.push(n);
                    queue.push_back(n);
                }
            }
        }
        let piece_tris: Vec<[usize; 3]> = piece.iter().map(|&t| triangles[t]).collect();
        if signed_volume(vertices, &piece_tris) < 0.0 {
            for &t in &piece {
                triangles[t].swap(1, 2);
            }
        }
    }
    Ok(())
}

fn signed_volume(vertices: &[Point3], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|&[a, b, c]| dot(vertices[a], cross(vertices[b], vertices[c])) / 6.0)
        .sum()
}

fn triangle_geometry(vertices: &[Point3], tri: &[usize; 3]) -> TriangleGeometry {
    let [x0, x1, x2] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    let edges = [sub(x2, x1), sub(x0, x2), sub(x1, x0)];
    let n = cross(edges[2], scale(edges[1], -1.0));
    let twice_area = norm(n);
    let normal = if twice_area > 0.0 {
        scale(n, 1.0 / twice_area)
    } else {
        [0.0; 3]
    };
    TriangleGeometry {
        area: 0.5 * twice_area,
        normal,
        edges,
    }
}

pub(crate) fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: Point3) -> Point3 {
    scale(a, 1.0 / norm(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TETRA_OFF: &str =
        "OFF\n4 4 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 2 3\n3 0 3 1\n3 1 3 2\n";

    fn euler(m: &SurfaceMesh) -> i64 {
        m.stats().euler_characteristic()
    }

    #[test]
    fn octahedron_counts() {
        let m = build_octahedral_sphere(0).unwrap();
        assert_eq!(
            (m.num_vertices(), m.num_triangles(), m.edges().len()),
            (6, 8, 12)
        );
        assert_eq!(euler(&m), 2);
        assert!((m.area() - 4.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn cube_counts() {
        let m = build_refined_sphere(0).unwrap();
        assert_eq!(
            (m.num_vertices(), m.num_triangles(), m.edges().len()),
            (8, 12, 18)
        );
        assert!(m.signed_volume() > 0.0);
        let o = build_octahedral_sphere(2).unwrap();
        assert_eq!((o.num_vertices(), euler(&o)), (66, 2));
    }

    #[test]
    fn vertex_counts_follow_six_four_k_plus_two() {
        for level in 0..=5 {
            let m = build_refined_sphere(level).unwrap();
            assert_eq!(m.num_vertices(), 6 * 4usize.pow(level) + 2);
            assert_eq!(euler(&m), 2);
        }
        assert_eq!(build_refined_sphere(4).unwrap().num_vertices(), 1538);
        assert_eq!(build_refined_sphere(5).unwrap().num_vertices(), 6146);
        assert_eq!(build_refined_sphere(6).unwrap().num_vertices(), 24578);
    }

    #[test]
    fn level_above_cap_is_rejected() {
        assert!(matches!(
            build_refined_sphere(MAX_REFINEMENT_LEVEL + 1),
            Err(MeshError::Capacity { .. })
        ));
    }

    #[test]
    fn area_increases_towards_four_pi() {
        let areas: Vec<f64> = (0..=5)
            .map(|l| build_refined_sphere(l).unwrap().area())
            .collect();
        for w in areas.windows(2) {
            assert!(w[1] > w[0]);
        }
        for &a in &areas {
            assert!(a < 4.0 * PI);
        }
        let a3 = areas[3];
        assert!((4.0 * PI - a3) / (4.0 * PI) < 0.01);
    }

    #[test]
    fn area_defect_scales_with_h_squared() {
        // defect / h^2 is 1.36..1.41 on levels 2..6.
        for level in 2..=6 {
            let m = build_refined_sphere(level).unwrap();
            let defect = 4.0 * PI - m.area();
            assert!(
                defect <= 1.5 * m.h_max().powi(2),
                "level {level}: {defect} vs h={}",
                m.h_max()
            );
        }
    }

    #[test]
    fn h_max_roughly_halves() {
        let h4 = build_refined_sphere(4).unwrap().h_max();
        let h5 = build_refined_sphere(5).unwrap().h_max();
        let ratio = h5 / h4;
        assert!((ratio - 0.5).abs() <= 0.05, "ratio {ratio}");
    }

    #[test]
    fn refinement_is_deterministic() {
        let a = build_refined_sphere(4).unwrap();
        let b = build_refined_sphere(4).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.triangles(), b.triangles());
    }

    #[test]
    fn bumpy_sphere_with_zero_amplitude_matches_sphere() {
        let s = build_refined_sphere(3).unwrap();
        let b = build_bumpy_sphere(3, 0.0, 4).unwrap();
        assert_eq!(s.vertices(), b.vertices());
    }

    #[test]
    fn bumpy_sphere_topology_and_area() {
        let b = build_bumpy_sphere(4, 0.2, 4).unwrap();
        assert_eq!(euler(&b), 2);
        assert!(b.area() > 4.0 * PI * 0.99);
        assert!(b.signed_volume() > 0.0);
        assert!(build_bumpy_sphere(2, 0.5, 4).is_err());
    }

    #[test]
    fn tetrahedron_off_loads() {
        let m = parse_off(TETRA_OFF).unwrap();
        let s = m.stats();
        assert_eq!((s.vertices, s.triangles, s.edges), (4, 4, 6));
        assert_eq!(s.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn off_orientation_is_repaired() {
        // Faces 1 and 3 flipped relative to the consistent orientation.
        let text =
            "OFF\n4 4 0\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 2 1\n3 0 2 3\n3 0 1 3\n3 1 3 2\n";
        let m = parse_off(text).unwrap();
        assert!(m.signed_volume() > 0.0);
        for g in m.geometry() {
            assert!(g.area > 0.0);
        }
    }

    #[test]
    fn off_with_missing_face_is_open() {
        let text = "OFF\n4 3 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 2 3\n3 0 3 1\n";
        assert!(matches!(parse_off(text), Err(MeshError::OpenBoundary(..))));
    }

    #[test]
    fn off_with_duplicate_face_is_non_manifold() {
        let text = format!("{}3 0 1 2\n", TETRA_OFF.replace("4 4 6", "4 5 6"));
        assert!(matches!(
            parse_off(&text),
            Err(MeshError::NonManifoldEdge(..))
        ));
    }

    #[test]
    fn off_parse_errors() {
        assert!(matches!(parse_off("PLY\n"), Err(MeshError::Parse { .. })));
        assert!(matches!(
            parse_off("OFF\n4 1 0\n0 0 0\n"),
            Err(MeshError::Parse { .. })
        ));
        assert!(matches!(
            parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 0\n"),
            Err(MeshError::Parse { .. })
        ));
        assert!(matches!(
            parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"),
            Err(MeshError::VertexIndex { .. })
        ));
    }

    #[test]
    fn mobius_like_inconsistent_orientation_is_detected_on_new() {
        let mut tris = build_refined_sphere(1).unwrap().triangles().to_vec();
        tris[0].swap(1, 2);
        let verts = build_refined_sphere(1).unwrap().vertices().to_vec();
        assert!(matches!(
            SurfaceMesh::new(verts, tris),
            Err(MeshError::NonOrientable(_))
        ));
    }
}
