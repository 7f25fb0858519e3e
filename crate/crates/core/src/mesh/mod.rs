//! Triangular surface meshes: built-in sphere and cube meshers, Gmsh import,
//! validation and element geometry queries for the Galerkin assembly.

mod msh;

pub use msh::{export_msh, import_msh};

use crate::geo::{self, Point3};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("mesh topology error: {0}")]
    Topology(String),
    #[error("mesh orientation error: {0}")]
    Orientation(String),
    #[error("invalid mesh input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A closed, outward-oriented triangle mesh. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    /// Unit outward normal per triangle.
    pub normals: Vec<Point3>,
    /// Area per triangle.
    pub areas: Vec<f64>,
}

/// Edge lengths and resolution relative to the wavelength of a given wavenumber.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MeshQuality {
    pub min_edge: f64,
    pub max_edge: f64,
    pub elements_per_wavelength: f64,
}

impl SurfaceMesh {
    /// Builds a mesh from raw arrays, computing per-triangle normals and areas.
    /// Fails if any triangle is degenerate or references invalid vertices.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Topology(format!(
                    "triangle {t} has repeated vertices"
                )));
            }
            for &v in tri {
                if v >= n {
                    return Err(MeshError::Topology(format!(
                        "triangle {t} references vertex {v} out of {n}"
                    )));
                }
            }
            let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let nv = geo::cross(geo::sub(b, a), geo::sub(c, a));
            let len = geo::norm(nv);
            if !(len > 0.0) {
                return Err(MeshError::Topology(format!("triangle {t} has zero area")));
            }
            normals.push(geo::scale(nv, 1.0 / len));
            areas.push(0.5 * len);
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
            areas,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn vertex_of(&self, tri: usize, local: usize) -> Point3 {
        self.vertices[self.triangles[tri][local]]
    }

    pub fn centroid(&self, tri: usize) -> Point3 {
        let [a, b, c] = self.triangle_points(tri);
        geo::scale(geo::add(geo::add(a, b), c), 1.0 / 3.0)
    }

    pub fn triangle_points(&self, tri: usize) -> [Point3; 3] {
        let t = self.triangles[tri];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    /// Enclosed volume by the divergence theorem; positive for outward orientation.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (
                    self.vertices[t[0]],
                    self.vertices[t[1]],
                    self.vertices[t[2]],
                );
                geo::dot(a, geo::cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Sum of signed area vectors; zero for a closed surface.
    pub fn area_vector_sum(&self) -> Point3 {
        let mut s = [0.0; 3];
        for (t, _) in self.triangles.iter().enumerate() {
            s = geo::add(s, geo::scale(self.normals[t], self.areas[t]));
        }
        s
    }

    /// Checks the full set of surface invariants: closed 2-manifold with
    /// consistently opposite half-edges and positive enclosed volume.
    pub fn validate(&self) -> Result<(), MeshError> {
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let dir = usize::from(a < b);
                let entry = edges.entry(key).or_insert((0, 0));
                if dir == 1 {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
                if entry.0 + entry.1 > 2 {
                    return Err(MeshError::Topology(format!(
                        "edge ({},{}) shared by more than 2 triangles (triangle {t})",
                        key.0, key.1
                    )));
                }
            }
        }
        for (key, (fwd, bwd)) in &edges {
            if fwd + bwd != 2 {
                return Err(MeshError::Topology(format!(
                    "edge ({},{}) is on {} triangle(s); surface not closed",
                    key.0,
                    key.1,
                    fwd + bwd
                )));
            }
            if *fwd != 1 || *bwd != 1 {
                return Err(MeshError::Orientation(format!(
                    "edge ({},{}) traversed twice in the same direction",
                    key.0, key.1
                )));
            }
        }
        let vol = self.signed_volume();
        if !(vol > 0.0) {
            return Err(MeshError::Orientation(format!(
                "signed volume {vol} is not positive"
            )));
        }
        let closure = geo::norm(self.area_vector_sum());
        if closure > 1e-10 * self.total_area() {
            return Err(MeshError::Topology(format!(
                "area vectors do not cancel: |sum| = {closure}"
            )));
        }
        Ok(())
    }

    /// Edge-length statistics and elements per wavelength at wavenumber `k`.
    pub fn quality(&self, k: f64) -> Result<MeshQuality, MeshError> {
        if !(k > 0.0) {
            return Err(MeshError::InvalidInput(format!(
                "wavenumber must be positive, got {k}"
            )));
        }
        let (mut min_edge, mut max_edge) = (f64::INFINITY, 0.0f64);
        for tri in &self.triangles {
            for e in 0..3 {
                let l = geo::distance(self.vertices[tri[e]], self.vertices[tri[(e + 1) % 3]]);
                min_edge = min_edge.min(l);
                max_edge = max_edge.max(l);
            }
        }
        let wavelength = 2.0 * PI / k;
        Ok(MeshQuality {
            min_edge,
            max_edge,
            elements_per_wavelength: wavelength / max_edge,
        })
    }

    /// Unit vertex normals, area-weighted over adjacent triangles.
    pub fn vertex_normals(&self) -> Vec<Point3> {
        let mut acc = vec![[0.0; 3]; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let w = geo::scale(self.normals[t], self.areas[t]);
            for &v in tri {
                acc[v] = geo::add(acc[v], w);
            }
        }
        acc.into_iter().map(geo::normalize).collect()
    }

    /// Returns a copy shifted by `offset`.
    pub fn translated(&self, offset: Point3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = geo::add(*v, offset);
        }
        out
    }

    /// Rewinds all triangles, flipping the orientation.
    pub fn flipped(&self) -> Self {
        let triangles = self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect();
        Self::new(self.vertices.clone(), triangles).expect("flip preserves validity")
    }

    /// Axis-aligned bounding box (min corner, max corner).
    pub fn aabb(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    /// Signed-solid-angle point classification for a closed oriented surface.
    /// Returns roughly 4 pi for interior points and 0 for exterior points.
    pub fn solid_angle(&self, p: Point3) -> f64 {
        let mut total = 0.0;
        for tri in &self.triangles {
            let a = geo::sub(self.vertices[tri[0]], p);
            let b = geo::sub(self.vertices[tri[1]], p);
            let c = geo::sub(self.vertices[tri[2]], p);
            let (la, lb, lc) = (geo::norm(a), geo::norm(b), geo::norm(c));
            let num = geo::dot(a, geo::cross(b, c));
            let den =
                la * lb * lc + geo::dot(a, b) * lc + geo::dot(b, c) * la + geo::dot(a, c) * lb;
            total += 2.0 * num.atan2(den);
        }
        total
    }

    pub fn contains(&self, p: Point3) -> bool {
        self.solid_angle(p) > 2.0 * PI
    }

    /// Distance from `p` to the closest mesh vertex.
    pub fn distance_to_vertices(&self, p: Point3) -> f64 {
        self.vertices
            .iter()
            .map(|v| geo::distance(*v, p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Subdivided icosahedron with all vertices projected onto the sphere of the
/// given radius. Level L has 20 * 4^L triangles and 10 * 4^L + 2 vertices.
pub fn make_icosphere(radius: f64, level: u32) -> Result<SurfaceMesh, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidInput(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in &mut vertices {
        *v = geo::scale(geo::normalize(*v), radius);
    }
    let mut triangles: Vec<[usize; 3]> = vec![
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

    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = geo::scale(geo::add(vertices[a], vertices[b]), 0.5);
                vertices.push(geo::scale(geo::normalize(m), radius));
                vertices.len() - 1
            })
        };
        for tri in &triangles {
            let ab = midpoint(tri[0], tri[1], &mut vertices);
            let bc = midpoint(tri[1], tri[2], &mut vertices);
            let ca = midpoint(tri[2], tri[0], &mut vertices);
            next.push([tri[0], ab, ca]);
            next.push([tri[1], bc, ab]);
            next.push([tri[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }

    let mesh = SurfaceMesh::new(vertices, triangles)?;
    mesh.validate()?;
    Ok(mesh)
}

/// Structured mesh of the axis-aligned cube [0, edge]^3 with n = ceil(edge / target_h)
/// subdivisions per face direction; each grid cell is split into two triangles.
pub fn make_cube(edge: f64, target_h: f64) -> Result<SurfaceMesh, MeshError> {
    if !(edge > 0.0) {
        return Err(MeshError::InvalidInput(format!(
            "edge must be positive, got {edge}"
        )));
    }
    if !(target_h > 0.0 && target_h <= edge) {
        return Err(MeshError::InvalidInput(format!(
            "target h must satisfy 0 < h <= edge, got {target_h}"
        )));
    }
    let n = (edge / target_h).ceil() as usize;
    let h = edge / n as f64;

    // Deduplicate vertices on shared cube edges via integer grid keys.
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut vertex = |i: i64, j: i64, k: i64| -> usize {
        *index.entry((i, j, k)).or_insert_with(|| {
            vertices.push([i as f64 * h, j as f64 * h, k as f64 * h]);
            vertices.len() - 1
        })
    };

    let n = n as i64;
    let mut triangles = Vec::new();
    // Each face: (fixed axis, fixed value, whether the face normal points along +axis).
    for (axis, at, positive) in [
        (0, 0, false),
        (0, n, true),
        (1, 0, false),
        (1, n, true),
        (2, 0, false),
        (2, n, true),
    ] {
        for u in 0..n {
            for v in 0..n {
                let gp = |u: i64, v: i64| -> (i64, i64, i64) {
                    match axis {
                        0 => (at, u, v),
                        1 => (u, at, v),
                        _ => (u, v, at),
                    }
                };
                let (a, b, c, d) = (gp(u, v), gp(u + 1, v), gp(u + 1, v + 1), gp(u, v + 1));
                let (ia, ib, ic, id) = (
                    vertex(a.0, a.1, a.2),
                    vertex(b.0, b.1, b.2),
                    vertex(c.0, c.1, c.2),
                    vertex(d.0, d.1, d.2),
                );
                // Winding giving outward normals; (u, v, axis) is right-handed
                // for axis = 1, left-handed otherwise.
                let outward_ccw = positive ^ (axis == 1);
                if outward_ccw {
                    triangles.push([ia, ib, ic]);
                    triangles.push([ia, ic, id]);
                } else {
                    triangles.push([ia, ic, ib]);
                    triangles.push([ia, id, ic]);
                }
            }
        }
    }

    let mesh = SurfaceMesh::new(vertices, triangles)?;
    mesh.validate()?;
    Ok(mesh)
}

/// Repairs triangle windings in place: breadth-first propagation of a consistent
/// orientation across shared edges, then a global flip if the volume is negative.
pub(crate) fn repair_orientation(
    vertices: Vec<Point3>,
    mut triangles: Vec<[usize; 3]>,
) -> Result<SurfaceMesh, MeshError> {
    // Adjacency over undirected edges.
    let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    for (key, ts) in &edge_tris {
        if ts.len() != 2 {
            return Err(MeshError::Topology(format!(
                "edge ({},{}) is on {} triangle(s); expected 2",
                key.0,
                key.1,
                ts.len()
            )));
        }
    }

    let has_directed = |tri: &[usize; 3], a: usize, b: usize| -> bool {
        (0..3).any(|e| tri[e] == a && tri[(e + 1) % 3] == b)
    };

    let mut visited = vec![false; triangles.len()];
    let mut queue = std::collections::VecDeque::new();
    visited[0] = true;
    queue.push_back(0usize);
    let mut seen = 1usize;
    while let Some(t) = queue.pop_front() {
        let tri = triangles[t];
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            let ts = &edge_tris[&(a.min(b), a.max(b))];
            let other = if ts[0] == t { ts[1] } else { ts[0] };
            if visited[other] {
                continue;
            }
            // Neighbour must traverse the shared edge in the opposite direction.
            if has_directed(&triangles[other], a, b) {
                triangles[other].swap(1, 2);
            }
            visited[other] = true;
            seen += 1;
            queue.push_back(other);
        }
    }
    if seen != triangles.len() {
        return Err(MeshError::Topology(format!(
            "surface is disconnected: reached {seen} of {} triangles",
            triangles.len()
        )));
    }

    let mut mesh = SurfaceMesh::new(vertices, triangles)?;
    if mesh.signed_volume() < 0.0 {
        mesh = mesh.flipped();
    }
    mesh.validate()?;
    Ok(mesh)
}
