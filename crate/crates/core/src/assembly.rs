//! Galerkin assembly of the Helmholtz boundary integral operators on
//! continuous P1 spaces.
//!
//! The four operators are assembled densely over all triangle pairs. Pairs on
//! the same mesh are classified as coincident, edge-adjacent, vertex-adjacent
//! or regular; the adjacent classes use the regularizing transformations from
//! [`crate::quadrature`]. Pairs across different (disjoint) meshes are always
//! regular. The hypersingular operator is assembled in its integration-by-parts
//! form, as a surface-curl single-layer term minus k^2 times a normal-weighted
//! single-layer term, so no hypersingular kernel is ever evaluated.
//!
//! Assembly is parallel over test triangles; each task produces the three
//! matrix rows of one test element and the rows are merged in element order,
//! so results do not depend on thread scheduling.

use crate::geo::{self, Point3};
use crate::linalg::SpdFactor;
use crate::mesh::SurfaceMesh;
use crate::quadrature::{simplex_shape, triangle_gauss, PairPoint, SingularRules, TriangleRule};
use faer::c64;
use faer::prelude::*;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("green's function evaluated at coincident points")]
    SingularPoint,
    #[error("mass matrix factorization failed: {0}")]
    MassFactor(#[from] crate::linalg::LinalgError),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad matrix file: {0}")]
    BadFile(String),
}

/// The boundary operator kinds plus the weak identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum OperatorKind {
    SingleLayer,
    DoubleLayer,
    AdjointDoubleLayer,
    Hypersingular,
    Mass,
}

impl OperatorKind {
    pub fn short_name(&self) -> &'static str {
        match self {
            OperatorKind::SingleLayer => "V",
            OperatorKind::DoubleLayer => "K",
            OperatorKind::AdjointDoubleLayer => "T",
            OperatorKind::Hypersingular => "D",
            OperatorKind::Mass => "M",
        }
    }
}

static SPACE_IDS: AtomicU64 = AtomicU64::new(0);

/// Continuous piecewise-linear space with one hat function per mesh vertex.
/// The mass matrix and its Cholesky factorization are cached on the space.
pub struct P1Space {
    pub mesh: Arc<SurfaceMesh>,
    id: u64,
    mass_coo: OnceLock<Arc<Vec<(usize, usize, f64)>>>,
    mass_factor: OnceLock<SpdFactor>,
}

impl std::fmt::Debug for P1Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("P1Space")
            .field("id", &self.id)
            .field("dim", &self.dim())
            .finish()
    }
}

impl P1Space {
    pub fn new(mesh: Arc<SurfaceMesh>) -> Arc<Self> {
        Arc::new(Self {
            mesh,
            id: SPACE_IDS.fetch_add(1, Ordering::Relaxed),
            mass_coo: OnceLock::new(),
            mass_factor: OnceLock::new(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Number of basis functions (mesh vertices).
    pub fn dim(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Sparse Galerkin mass matrix entries: per triangle, area/6 on the
    /// diagonal and area/12 off it.
    pub fn mass_coo(&self) -> &Arc<Vec<(usize, usize, f64)>> {
        self.mass_coo.get_or_init(|| {
            let mut coo = Vec::with_capacity(9 * self.mesh.triangle_count());
            for (t, tri) in self.mesh.triangles.iter().enumerate() {
                let a = self.mesh.areas[t];
                for i in 0..3 {
                    for j in 0..3 {
                        let w = if i == j { a / 6.0 } else { a / 12.0 };
                        coo.push((tri[i], tri[j], w));
                    }
                }
            }
            Arc::new(coo)
        })
    }

    pub fn mass_factor(&self) -> &SpdFactor {
        self.mass_factor.get_or_init(|| {
            SpdFactor::new(self.dim(), self.mass_coo())
                .expect("P1 mass matrix is SPD for a valid mesh")
        })
    }

    /// Applies the mass matrix to a coefficient vector (weak identity).
    pub fn apply_mass(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![c64::new(0.0, 0.0); self.dim()];
        for &(r, c, v) in self.mass_coo().iter() {
            y[r] += x[c] * v;
        }
        y
    }

    /// Surface L2 norm of a P1 coefficient vector.
    pub fn l2_norm(&self, x: &[c64]) -> f64 {
        let mx = self.apply_mass(x);
        crate::linalg::dot(x, &mx).re.max(0.0).sqrt()
    }
}

pub fn mass_matrix(space: &Arc<P1Space>) -> OperatorMatrix {
    OperatorMatrix {
        kind: OperatorKind::Mass,
        k: None,
        domain: space.clone(),
        range: space.clone(),
        data: OperatorData::Mass(space.mass_coo().clone()),
    }
}

enum OperatorData {
    Dense(Mat<c64>),
    Mass(Arc<Vec<(usize, usize, f64)>>),
}

/// One assembled Galerkin operator matrix.
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    /// Wavenumber of the kernel; absent for the mass matrix.
    pub k: Option<f64>,
    pub domain: Arc<P1Space>,
    pub range: Arc<P1Space>,
    data: OperatorData,
}

impl OperatorMatrix {
    pub fn nrows(&self) -> usize {
        self.range.dim()
    }

    pub fn ncols(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.data, OperatorData::Dense(_))
    }

    /// y = A x
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(x.len(), self.ncols(), "operator apply: dimension mismatch");
        match &self.data {
            OperatorData::Dense(a) => {
                let xm = faer::MatRef::from_column_major_slice(x, x.len(), 1);
                let y = a * xm;
                (0..self.nrows()).map(|i| y[(i, 0)]).collect()
            }
            OperatorData::Mass(coo) => {
                let mut y = vec![c64::new(0.0, 0.0); self.nrows()];
                for &(r, c, v) in coo.iter() {
                    y[r] += x[c] * v;
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> Mat<c64> {
        match &self.data {
            OperatorData::Dense(a) => a.clone(),
            OperatorData::Mass(coo) => {
                let mut m = Mat::<c64>::zeros(self.nrows(), self.ncols());
                for &(r, c, v) in coo.iter() {
                    m[(r, c)] += c64::new(v, 0.0);
                }
                m
            }
        }
    }

    pub fn dense_ref(&self) -> Option<faer::MatRef<'_, c64>> {
        match &self.data {
            OperatorData::Dense(a) => Some(a.as_ref()),
            OperatorData::Mass(_) => None,
        }
    }

    /// The transposed operator on swapped spaces. The adjoint double-layer
    /// matrix is the transpose of the double-layer matrix, so it never needs
    /// its own quadrature pass.
    pub fn transpose(&self) -> OperatorMatrix {
        let kind = match self.kind {
            OperatorKind::DoubleLayer => OperatorKind::AdjointDoubleLayer,
            OperatorKind::AdjointDoubleLayer => OperatorKind::DoubleLayer,
            other => other,
        };
        let data = match &self.data {
            OperatorData::Dense(a) => {
                OperatorData::Dense(Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)]))
            }
            OperatorData::Mass(coo) => OperatorData::Mass(coo.clone()),
        };
        OperatorMatrix {
            kind,
            k: self.k,
            domain: self.range.clone(),
            range: self.domain.clone(),
            data,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.data {
            OperatorData::Dense(a) => {
                let mut m = 0.0f64;
                for j in 0..a.ncols() {
                    for i in 0..a.nrows() {
                        m = m.max(a[(i, j)].norm());
                    }
                }
                m
            }
            OperatorData::Mass(coo) => coo.iter().map(|t| t.2.abs()).fold(0.0, f64::max),
        }
    }
}

/// Mass-preconditioned (strong-form) matrix M^-1 A, with M the mass matrix of
/// A's range space. Only used in dense analysis paths.
pub fn strong_form(a: &OperatorMatrix) -> Mat<c64> {
    let dense = a.to_dense();
    a.range.mass_factor().solve_mat(dense.as_ref())
}

/// Free-space Green's function e^{ikr} / (4 pi r).
pub fn greens_kernel(x: Point3, y: Point3, k: f64) -> Result<c64, AssemblyError> {
    let r = geo::distance(x, y);
    if r == 0.0 {
        return Err(AssemblyError::SingularPoint);
    }
    Ok(kernels::green(k, r))
}

pub(crate) mod kernels {
    use super::*;

    /// e^{ikr} / (4 pi r)
    #[inline]
    pub fn green(k: f64, r: f64) -> c64 {
        c64::from_polar(1.0 / (4.0 * PI * r), k * r)
    }

    /// e^{ikr} (ikr - 1) / (4 pi r^3); multiply by (y - x) . n to get dG/dn(y).
    #[inline]
    pub fn grad_scale(k: f64, r: f64) -> c64 {
        c64::from_polar(1.0 / (4.0 * PI * r * r * r), k * r) * c64::new(-1.0, k * r)
    }
}

/// Quadrature configuration: symmetric triangle rule degree for regular pairs
/// and tensor Gauss order per dimension for the singular transformations.
#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub regular_degree: usize,
    pub singular_order: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            regular_degree: 4,
            singular_order: 4,
        }
    }
}

/// Per-triangle data precomputed for the regular-pair fast path.
struct MeshPre {
    /// Mapped rule points, flattened per triangle.
    points: Vec<Point3>,
    nq: usize,
    /// Shape values at the rule points.
    shapes: Vec<[f64; 3]>,
    /// 2 x area per triangle.
    jac: Vec<f64>,
    /// Surface curls of the three hat functions on each triangle, in stored
    /// vertex order: curl phi_i = -e_i / (2 A) with e_i the opposite edge.
    curls: Vec<[Point3; 3]>,
}

impl MeshPre {
    fn build(mesh: &SurfaceMesh, rule: &TriangleRule) -> Self {
        let nq = rule.points.len();
        let shapes: Vec<[f64; 3]> = rule
            .points
            .iter()
            .map(|&(s, t)| crate::quadrature::unit_shape(s, t))
            .collect();
        let mut points = Vec::with_capacity(mesh.triangle_count() * nq);
        let mut jac = Vec::with_capacity(mesh.triangle_count());
        let mut curls = Vec::with_capacity(mesh.triangle_count());
        for t in 0..mesh.triangle_count() {
            let [a, b, c] = mesh.triangle_points(t);
            for &(s, tt) in &rule.points {
                points.push([
                    a[0] + s * (b[0] - a[0]) + tt * (c[0] - a[0]),
                    a[1] + s * (b[1] - a[1]) + tt * (c[1] - a[1]),
                    a[2] + s * (b[2] - a[2]) + tt * (c[2] - a[2]),
                ]);
            }
            let area2 = 2.0 * mesh.areas[t];
            jac.push(area2);
            let e0 = geo::sub(c, b);
            let e1 = geo::sub(a, c);
            let e2 = geo::sub(b, a);
            curls.push([
                geo::scale(e0, -1.0 / area2),
                geo::scale(e1, -1.0 / area2),
                geo::scale(e2, -1.0 / area2),
            ]);
        }
        Self {
            points,
            nq,
            shapes,
            jac,
            curls,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum PairRelation {
    Regular,
    /// chart permutations (chart index -> stored local index)
    Vertex([usize; 3], [usize; 3]),
    Edge([usize; 3], [usize; 3]),
    Coincident,
}

fn classify_pair(test: &[usize; 3], trial: &[usize; 3], same_index: bool) -> PairRelation {
    if same_index {
        return PairRelation::Coincident;
    }
    let mut shared: Vec<(usize, usize)> = Vec::with_capacity(2);
    for (i, a) in test.iter().enumerate() {
        for (j, b) in trial.iter().enumerate() {
            if a == b {
                shared.push((i, j));
            }
        }
    }
    match shared.len() {
        0 => PairRelation::Regular,
        1 => {
            let (i, j) = shared[0];
            PairRelation::Vertex([i, (i + 1) % 3, (i + 2) % 3], [j, (j + 1) % 3, (j + 2) % 3])
        }
        2 => {
            // Order the shared pair by global id so both charts agree on (P, Q).
            let (mut p, mut q) = (shared[0], shared[1]);
            if test[p.0] > test[q.0] {
                std::mem::swap(&mut p, &mut q);
            }
            let rt = [p.0, q.0, 3 - p.0 - q.0];
            let rs = [p.1, q.1, 3 - p.1 - q.1];
            PairRelation::Edge(rt, rs)
        }
        _ => PairRelation::Coincident,
    }
}

/// Assembles the Galerkin matrix of one boundary integral operator from
/// `domain` (trial) to `range` (test). On a shared mesh the singular rules
/// are used for adjacent pairs; across distinct meshes the surfaces must be
/// disjoint and only the regular rule is applied. Degenerate elements are
/// rejected at mesh construction, so every pair has positive Jacobian.
pub fn assemble(
    kind: OperatorKind,
    k: f64,
    domain: &Arc<P1Space>,
    range: &Arc<P1Space>,
    opts: &AssemblyOptions,
) -> Result<OperatorMatrix, AssemblyError> {
    if kind == OperatorKind::Mass {
        if !Arc::ptr_eq(domain, range) {
            return Err(AssemblyError::SpaceMismatch(
                "mass matrix requires domain == range".into(),
            ));
        }
        return Ok(mass_matrix(domain));
    }

    let rule = triangle_gauss(opts.regular_degree)?;
    let singular: Arc<SingularRules> = if opts.singular_order == 4 {
        static DEFAULT: OnceLock<Arc<SingularRules>> = OnceLock::new();
        DEFAULT
            .get_or_init(|| Arc::new(SingularRules::with_order(4)))
            .clone()
    } else {
        Arc::new(SingularRules::with_order(opts.singular_order))
    };

    let same_mesh = Arc::ptr_eq(&range.mesh, &domain.mesh);
    let test_mesh = range.mesh.clone();
    let trial_mesh = domain.mesh.clone();
    let test_pre = MeshPre::build(&test_mesh, &rule);
    let trial_pre = if same_mesh {
        None
    } else {
        Some(MeshPre::build(&trial_mesh, &rule))
    };

    let ctx = AssembleCtx {
        kind,
        k,
        test_mesh: &test_mesh,
        trial_mesh: &trial_mesh,
        test_pre: &test_pre,
        trial_pre: trial_pre.as_ref().unwrap_or(&test_pre),
        rule_weights: &rule.weights,
        singular: &singular,
        same_mesh,
    };

    let nrows = range.dim();
    let ncols = domain.dim();
    let ntest = test_mesh.triangle_count();
    let mut out = Mat::<c64>::zeros(nrows, ncols);

    // Parallel stripes merged in element order for run-to-run determinism.
    let chunk = 128usize;
    let mut start = 0usize;
    while start < ntest {
        let end = (start + chunk).min(ntest);
        let stripes: Vec<Vec<c64>> = (start..end)
            .into_par_iter()
            .map(|t| ctx.test_element_stripe(t, ncols))
            .collect();
        for (t, stripe) in (start..end).zip(stripes) {
            let dofs = test_mesh.triangles[t];
            for (l, &row) in dofs.iter().enumerate() {
                for j in 0..ncols {
                    out[(row, j)] += stripe[l * ncols + j];
                }
            }
        }
        start = end;
    }

    Ok(OperatorMatrix {
        kind,
        k: Some(k),
        domain: domain.clone(),
        range: range.clone(),
        data: OperatorData::Dense(out),
    })
}

struct AssembleCtx<'a> {
    kind: OperatorKind,
    k: f64,
    test_mesh: &'a SurfaceMesh,
    trial_mesh: &'a SurfaceMesh,
    test_pre: &'a MeshPre,
    trial_pre: &'a MeshPre,
    rule_weights: &'a [f64],
    singular: &'a SingularRules,
    same_mesh: bool,
}

impl AssembleCtx<'_> {
    /// Computes the three matrix rows contributed by one test element.
    fn test_element_stripe(&self, t: usize, ncols: usize) -> Vec<c64> {
        let mut stripe = vec![c64::new(0.0, 0.0); 3 * ncols];
        let ntrial = self.trial_mesh.triangle_count();
        for s in 0..ntrial {
            let relation = if self.same_mesh {
                classify_pair(
                    &self.test_mesh.triangles[t],
                    &self.trial_mesh.triangles[s],
                    t == s,
                )
            } else {
                PairRelation::Regular
            };
            match relation {
                PairRelation::Regular => self.regular_pair(t, s, &mut stripe, ncols),
                PairRelation::Coincident => {
                    let id = [0usize, 1, 2];
                    self.singular_pair(t, s, id, id, &self.singular.coincident, &mut stripe, ncols)
                }
                PairRelation::Edge(rt, rs) => {
                    self.singular_pair(t, s, rt, rs, &self.singular.edge, &mut stripe, ncols)
                }
                PairRelation::Vertex(rt, rs) => {
                    self.singular_pair(t, s, rt, rs, &self.singular.vertex, &mut stripe, ncols)
                }
            }
        }
        stripe
    }

    fn regular_pair(&self, t: usize, s: usize, stripe: &mut [c64], ncols: usize) {
        let nq = self.test_pre.nq;
        let xpts = &self.test_pre.points[t * nq..(t + 1) * nq];
        let ypts = &self.trial_pre.points[s * nq..(s + 1) * nq];
        let shapes = &self.test_pre.shapes;
        let rule_w = self.rule_weights;
        let jac = self.test_pre.jac[t] * self.trial_pre.jac[s];
        let trial_dofs = self.trial_mesh.triangles[s];
        let k = self.k;

        let mut block = [[c64::new(0.0, 0.0); 3]; 3];
        match self.kind {
            OperatorKind::SingleLayer => {
                for (qx, x) in xpts.iter().enumerate() {
                    for (qy, y) in ypts.iter().enumerate() {
                        let r = geo::distance(*x, *y);
                        let v = kernels::green(k, r) * (rule_w[qx] * rule_w[qy] * jac);
                        accumulate(&mut block, v, &shapes[qx], &shapes[qy]);
                    }
                }
            }
            OperatorKind::DoubleLayer => {
                let ny = self.trial_mesh.normals[s];
                for (qx, x) in xpts.iter().enumerate() {
                    for (qy, y) in ypts.iter().enumerate() {
                        let r = geo::distance(*x, *y);
                        let dn = geo::dot(geo::sub(*y, *x), ny);
                        let v = kernels::grad_scale(k, r) * dn * (rule_w[qx] * rule_w[qy] * jac);
                        accumulate(&mut block, v, &shapes[qx], &shapes[qy]);
                    }
                }
            }
            OperatorKind::AdjointDoubleLayer => {
                let nx = self.test_mesh.normals[t];
                for (qx, x) in xpts.iter().enumerate() {
                    for (qy, y) in ypts.iter().enumerate() {
                        let r = geo::distance(*x, *y);
                        let dn = geo::dot(geo::sub(*x, *y), nx);
                        let v = kernels::grad_scale(k, r) * dn * (rule_w[qx] * rule_w[qy] * jac);
                        accumulate(&mut block, v, &shapes[qx], &shapes[qy]);
                    }
                }
            }
            OperatorKind::Hypersingular => {
                let mut s0 = c64::new(0.0, 0.0);
                for (qx, x) in xpts.iter().enumerate() {
                    for (qy, y) in ypts.iter().enumerate() {
                        let r = geo::distance(*x, *y);
                        let v = kernels::green(k, r) * (rule_w[qx] * rule_w[qy] * jac);
                        s0 += v;
                        accumulate(&mut block, v, &shapes[qx], &shapes[qy]);
                    }
                }
                self.hypersingular_combine(t, s, s0, &mut block, [0, 1, 2], [0, 1, 2]);
            }
            OperatorKind::Mass => unreachable!(),
        }
        scatter(stripe, ncols, &block, [0, 1, 2], [0, 1, 2], &trial_dofs);
    }

    fn singular_pair(
        &self,
        t: usize,
        s: usize,
        rot_test: [usize; 3],
        rot_trial: [usize; 3],
        points: &[PairPoint],
        stripe: &mut [c64],
        ncols: usize,
    ) {
        let tv = self.test_mesh.triangles[t];
        let sv = self.trial_mesh.triangles[s];
        let tc: [Point3; 3] = [
            self.test_mesh.vertices[tv[rot_test[0]]],
            self.test_mesh.vertices[tv[rot_test[1]]],
            self.test_mesh.vertices[tv[rot_test[2]]],
        ];
        let sc: [Point3; 3] = [
            self.trial_mesh.vertices[sv[rot_trial[0]]],
            self.trial_mesh.vertices[sv[rot_trial[1]]],
            self.trial_mesh.vertices[sv[rot_trial[2]]],
        ];
        let jac = self.test_pre.jac[t] * self.trial_pre.jac[s];
        let k = self.k;

        let chart = |c: &[Point3; 3], (w1, w2): (f64, f64)| -> Point3 {
            [
                c[0][0] + w1 * (c[1][0] - c[0][0]) + w2 * (c[2][0] - c[1][0]),
                c[0][1] + w1 * (c[1][1] - c[0][1]) + w2 * (c[2][1] - c[1][1]),
                c[0][2] + w1 * (c[1][2] - c[0][2]) + w2 * (c[2][2] - c[1][2]),
            ]
        };

        let mut block = [[c64::new(0.0, 0.0); 3]; 3];
        match self.kind {
            OperatorKind::SingleLayer => {
                for p in points {
                    let x = chart(&tc, p.test);
                    let y = chart(&sc, p.trial);
                    let r = geo::distance(x, y);
                    let v = kernels::green(k, r) * (p.weight * jac);
                    accumulate(
                        &mut block,
                        v,
                        &simplex_shape(p.test.0, p.test.1),
                        &simplex_shape(p.trial.0, p.trial.1),
                    );
                }
            }
            OperatorKind::DoubleLayer => {
                let ny = self.trial_mesh.normals[s];
                for p in points {
                    let x = chart(&tc, p.test);
                    let y = chart(&sc, p.trial);
                    let r = geo::distance(x, y);
                    let dn = geo::dot(geo::sub(y, x), ny);
                    let v = kernels::grad_scale(k, r) * dn * (p.weight * jac);
                    accumulate(
                        &mut block,
                        v,
                        &simplex_shape(p.test.0, p.test.1),
                        &simplex_shape(p.trial.0, p.trial.1),
                    );
                }
            }
            OperatorKind::AdjointDoubleLayer => {
                let nx = self.test_mesh.normals[t];
                for p in points {
                    let x = chart(&tc, p.test);
                    let y = chart(&sc, p.trial);
                    let r = geo::distance(x, y);
                    let dn = geo::dot(geo::sub(x, y), nx);
                    let v = kernels::grad_scale(k, r) * dn * (p.weight * jac);
                    accumulate(
                        &mut block,
                        v,
                        &simplex_shape(p.test.0, p.test.1),
                        &simplex_shape(p.trial.0, p.trial.1),
                    );
                }
            }
            OperatorKind::Hypersingular => {
                let mut s0 = c64::new(0.0, 0.0);
                for p in points {
                    let x = chart(&tc, p.test);
                    let y = chart(&sc, p.trial);
                    let r = geo::distance(x, y);
                    let v = kernels::green(k, r) * (p.weight * jac);
                    s0 += v;
                    accumulate(
                        &mut block,
                        v,
                        &simplex_shape(p.test.0, p.test.1),
                        &simplex_shape(p.trial.0, p.trial.1),
                    );
                }
                self.hypersingular_combine(t, s, s0, &mut block, rot_test, rot_trial);
            }
            OperatorKind::Mass => unreachable!(),
        }
        scatter(stripe, ncols, &block, rot_test, rot_trial, &sv);
    }

    /// Converts an accumulated single-layer block (and its plain kernel sum
    /// `s0`) into the hypersingular block: curl-curl term minus k^2 times the
    /// normal-normal weighted term. `block` enters as sum of G phi_i phi_j and
    /// leaves as the final values, still indexed by chart order.
    fn hypersingular_combine(
        &self,
        t: usize,
        s: usize,
        s0: c64,
        block: &mut [[c64; 3]; 3],
        rot_test: [usize; 3],
        rot_trial: [usize; 3],
    ) {
        let nn = geo::dot(self.test_mesh.normals[t], self.trial_mesh.normals[s]);
        let k2nn = self.k * self.k * nn;
        let tcurl = &self.test_pre.curls[t];
        let scurl = &self.trial_pre.curls[s];
        for i in 0..3 {
            for j in 0..3 {
                let cc = geo::dot(tcurl[rot_test[i]], scurl[rot_trial[j]]);
                block[i][j] = s0 * cc - block[i][j] * k2nn;
            }
        }
    }
}

#[inline]
fn accumulate(block: &mut [[c64; 3]; 3], v: c64, sx: &[f64; 3], sy: &[f64; 3]) {
    for i in 0..3 {
        let vi = v * sx[i];
        for j in 0..3 {
            block[i][j] += vi * sy[j];
        }
    }
}

#[inline]
fn scatter(
    stripe: &mut [c64],
    ncols: usize,
    block: &[[c64; 3]; 3],
    rot_test: [usize; 3],
    rot_trial: [usize; 3],
    trial_dofs: &[usize; 3],
) {
    for i in 0..3 {
        let row = rot_test[i];
        for j in 0..3 {
            stripe[row * ncols + trial_dofs[rot_trial[j]]] += block[i][j];
        }
    }
}

/// Writes a dense operator as a one-line JSON header followed by row-major
/// little-endian complex128 payload.
pub fn write_matrix_bin(
    path: impl AsRef<std::path::Path>,
    op: &OperatorMatrix,
) -> Result<(), AssemblyError> {
    let dense = op.to_dense();
    let header = serde_json::json!({
        "kind": op.kind.short_name(),
        "k": op.k,
        "nrows": dense.nrows(),
        "ncols": dense.ncols(),
    });
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{header}")?;
    for i in 0..dense.nrows() {
        for j in 0..dense.ncols() {
            file.write_all(&dense[(i, j)].re.to_le_bytes())?;
            file.write_all(&dense[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_bin`].
pub fn read_matrix_bin(
    path: impl AsRef<std::path::Path>,
) -> Result<(String, Option<f64>, Mat<c64>), AssemblyError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    std::io::BufRead::read_line(&mut file, &mut header)?;
    let meta: serde_json::Value =
        serde_json::from_str(&header).map_err(|e| AssemblyError::BadFile(e.to_string()))?;
    let kind = meta["kind"]
        .as_str()
        .ok_or_else(|| AssemblyError::BadFile("missing kind".into()))?
        .to_string();
    let k = meta["k"].as_f64();
    let nrows = meta["nrows"]
        .as_u64()
        .ok_or_else(|| AssemblyError::BadFile("missing nrows".into()))? as usize;
    let ncols = meta["ncols"]
        .as_u64()
        .ok_or_else(|| AssemblyError::BadFile("missing ncols".into()))? as usize;
    let mut buf = vec![0u8; nrows * ncols * 16];
    file.read_exact(&mut buf)?;
    let mut mat = Mat::<c64>::zeros(nrows, ncols);
    let mut off = 0;
    for i in 0..nrows {
        for j in 0..ncols {
            let re = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[off + 8..off + 16].try_into().unwrap());
            mat[(i, j)] = c64::new(re, im);
            off += 16;
        }
    }
    Ok((kind, k, mat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    fn sphere_space(level: u32) -> Arc<P1Space> {
        P1Space::new(Arc::new(make_icosphere(1.0, level).unwrap()))
    }

    #[test]
    fn greens_kernel_examples() {
        let g = greens_kernel([0.0; 3], [1.0, 0.0, 0.0], 0.0).unwrap();
        assert!((g.re - 0.0795775).abs() < 1e-6 && g.im.abs() < 1e-15);
        let g = greens_kernel([0.0; 3], [0.5, 0.0, 0.0], 2.094).unwrap();
        assert!((g.re - 0.07958).abs() < 1e-4, "{g}");
        assert!((g.im - 0.13784).abs() < 1e-4, "{g}");
        assert!(matches!(
            greens_kernel([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 1.0),
            Err(AssemblyError::SingularPoint)
        ));
        // symmetry
        let (x, y) = ([0.1, -0.4, 0.9], [-0.7, 0.3, 0.2]);
        assert_eq!(
            greens_kernel(x, y, 3.3).unwrap(),
            greens_kernel(y, x, 3.3).unwrap()
        );
    }

    #[test]
    fn mass_row_sums_are_nodal_areas() {
        let space = sphere_space(3);
        let m = mass_matrix(&space);
        let ones = vec![c64::new(1.0, 0.0); space.dim()];
        let rows = m.apply(&ones);
        // row sums = integral of each hat = one third of adjacent areas
        let mut nodal = vec![0.0; space.dim()];
        for (t, tri) in space.mesh.triangles.iter().enumerate() {
            for &v in tri {
                nodal[v] += space.mesh.areas[t] / 3.0;
            }
        }
        for (r, n) in rows.iter().zip(&nodal) {
            assert!((r.re - n).abs() < 1e-13 && r.im == 0.0);
        }
        let total: f64 = rows.iter().map(|x| x.re).sum();
        let sphere = 4.0 * PI;
        assert!((total - sphere).abs() / sphere < 5e-3, "total {total}");
        assert!((total - space.mesh.total_area()).abs() < 1e-12);
    }

    #[test]
    fn laplace_single_layer_mean_value() {
        // V_0 applied to the unit density on the unit sphere is 1 on the surface.
        let space = sphere_space(2);
        let v = assemble(
            OperatorKind::SingleLayer,
            0.0,
            &space,
            &space,
            &AssemblyOptions::default(),
        )
        .unwrap();
        let ones = vec![c64::new(1.0, 0.0); space.dim()];
        let weak = v.apply(&ones);
        let lifted = space.mass_factor().solve_vec(&weak);
        for u in &lifted {
            assert!((u.re - 1.0).abs() < 0.02, "{u}");
            assert!(u.im.abs() < 1e-12);
        }
    }

    #[test]
    fn galerkin_symmetry_of_v_and_d() {
        let space = sphere_space(1);
        let opts = AssemblyOptions::default();
        for kind in [OperatorKind::SingleLayer, OperatorKind::Hypersingular] {
            let a = assemble(kind, 2.09, &space, &space, &opts).unwrap();
            let m = a.dense_ref().unwrap();
            let scale = a.max_abs();
            let mut worst = 0.0f64;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    worst = worst.max((m[(i, j)] - m[(j, i)]).norm());
                }
            }
            assert!(
                worst <= 1e-10 * scale,
                "{kind:?}: asymmetry {worst} vs scale {scale}"
            );
        }
    }

    #[test]
    fn adjoint_double_layer_is_transpose_of_double_layer() {
        let space = sphere_space(1);
        let opts = AssemblyOptions::default();
        let k = 1.7;
        let kd = assemble(OperatorKind::DoubleLayer, k, &space, &space, &opts).unwrap();
        let t = assemble(OperatorKind::AdjointDoubleLayer, k, &space, &space, &opts).unwrap();
        let (km, tm) = (kd.dense_ref().unwrap(), t.dense_ref().unwrap());
        let scale = kd.max_abs();
        for i in 0..km.nrows() {
            for j in 0..km.ncols() {
                assert!(
                    (km[(i, j)] - tm[(j, i)]).norm() <= 1e-12 * scale,
                    "entry ({i},{j})"
                );
            }
        }
        // the transpose route matches bitwise
        let tt = kd.transpose();
        assert_eq!(tt.kind, OperatorKind::AdjointDoubleLayer);
        let ttm = tt.dense_ref().unwrap();
        for i in 0..km.nrows() {
            for j in 0..km.ncols() {
                assert_eq!(km[(i, j)], ttm[(j, i)]);
            }
        }
    }

    #[test]
    fn strong_form_of_mass_is_identity() {
        let space = sphere_space(1);
        let m = mass_matrix(&space);
        let s = strong_form(&m);
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s[(i, j)].re - expect).abs() < 1e-10 && s[(i, j)].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strong_form_linearity() {
        let space = sphere_space(0);
        let opts = AssemblyOptions::default();
        let v = assemble(OperatorKind::SingleLayer, 1.0, &space, &space, &opts).unwrap();
        let s1 = strong_form(&v);
        // scale the dense data by hand
        let scaled = OperatorMatrix {
            kind: v.kind,
            k: v.k,
            domain: v.domain.clone(),
            range: v.range.clone(),
            data: OperatorData::Dense(Mat::from_fn(v.nrows(), v.ncols(), |i, j| {
                v.dense_ref().unwrap()[(i, j)] * c64::new(2.5, 0.0)
            })),
        };
        let s2 = strong_form(&scaled);
        for i in 0..s1.nrows() {
            for j in 0..s1.ncols() {
                assert!((s2[(i, j)] - s1[(i, j)] * 2.5).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_bin_round_trip() {
        let space = sphere_space(0);
        let v = assemble(
            OperatorKind::SingleLayer,
            2.0,
            &space,
            &space,
            &AssemblyOptions::default(),
        )
        .unwrap();
        let dir = std::env::temp_dir().join(format!("transbem-bin-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.bin");
        write_matrix_bin(&path, &v).unwrap();
        let (kind, k, mat) = read_matrix_bin(&path).unwrap();
        assert_eq!(kind, "V");
        assert_eq!(k, Some(2.0));
        let orig = v.dense_ref().unwrap();
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                assert_eq!(mat[(i, j)], orig[(i, j)]);
            }
        }
    }

    #[test]
    fn cross_mesh_assembly_dimensions() {
        let s1 = sphere_space(1);
        let mesh2 = Arc::new(make_icosphere(1.0, 0).unwrap().translated([3.0, 0.0, 0.0]));
        let s2 = P1Space::new(mesh2);
        let v = assemble(
            OperatorKind::SingleLayer,
            1.0,
            &s2,
            &s1,
            &AssemblyOptions::default(),
        )
        .unwrap();
        assert_eq!(v.nrows(), s1.dim());
        assert_eq!(v.ncols(), s2.dim());
        // smooth kernel: entries finite and nonzero
        assert!(v.max_abs().is_finite());
        assert!(v.max_abs() > 0.0);
    }
}
