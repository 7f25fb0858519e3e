//! The five discrete boundary integral formulations of the transmission
//! problem and their block extensions to multiple scattering.
//!
//! Every identity operator is discretised as the Galerkin mass matrix, and
//! operator products are never multiplied out in solve paths: a composition
//! A o B applies B, lifts through the cached mass Cholesky of the joint
//! space, then applies A. Dense products are formed only for spectral
//! analysis.
//!
//! Unknown conventions per object m (coefficient vectors on P1):
//! - high-contrast Neumann:   [gamma_N p_tot, psi]
//! - high-contrast Dirichlet: [phi, gamma_D p_tot]
//! - PMCHWT / Mueller / Calderon PMCHWT: [gamma_D p_tot, gamma_N p_tot]
//!
//! For multiple scattering the diagonal blocks are the single-object systems
//! and the off-diagonal blocks couple objects through exterior operators
//! only; for the standard formulations this mirrors the exterior-operator
//! coupling pattern of the high-contrast blocks.

use crate::assembly::{
    assemble, AssemblyError, AssemblyOptions, OperatorKind, OperatorMatrix, P1Space,
};
use crate::fields::{incident_traces, ExteriorContrib, ObjectSource, PlaneWave, ScatterSources};
use crate::geo::Point3;
use crate::linalg::{gmres, GmresReport};
use crate::materials::Material;
use crate::mesh::SurfaceMesh;
use faer::c64;
use faer::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum FormulationError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("objects overlap: {0}")]
    GeometryOverlap(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The five formulations benchmarked by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationKind {
    HighContrastNeumann,
    HighContrastDirichlet,
    Pmchwt,
    Muller,
    CalderonPmchwt,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 5] = [
        FormulationKind::HighContrastNeumann,
        FormulationKind::HighContrastDirichlet,
        FormulationKind::Pmchwt,
        FormulationKind::Muller,
        FormulationKind::CalderonPmchwt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FormulationKind::HighContrastNeumann => "hc-neumann",
            FormulationKind::HighContrastDirichlet => "hc-dirichlet",
            FormulationKind::Pmchwt => "pmchwt",
            FormulationKind::Muller => "muller",
            FormulationKind::CalderonPmchwt => "calderon-pmchwt",
        }
    }

    pub fn is_high_contrast(&self) -> bool {
        matches!(
            self,
            FormulationKind::HighContrastNeumann | FormulationKind::HighContrastDirichlet
        )
    }

    /// Number of assembled dense operator instances for `l` scatterers.
    pub fn expected_operator_count(&self, l: usize) -> usize {
        if self.is_high_contrast() {
            2 * l + 2 * l * l
        } else {
            4 * l + 4 * l * l
        }
    }

    /// Dense matrix-vector products per application of the full system.
    pub fn expected_matvecs(&self, l: usize) -> usize {
        match self {
            FormulationKind::HighContrastNeumann | FormulationKind::HighContrastDirichlet => {
                l + 3 * l * l
            }
            FormulationKind::Pmchwt | FormulationKind::Muller => 4 * l + 4 * l * l,
            FormulationKind::CalderonPmchwt => 8 * l + 8 * l * l,
        }
    }
}

impl std::str::FromStr for FormulationKind {
    type Err = FormulationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "hc-neumann" | "high-contrast-neumann" => Ok(FormulationKind::HighContrastNeumann),
            "hc-dirichlet" | "high-contrast-dirichlet" => {
                Ok(FormulationKind::HighContrastDirichlet)
            }
            "pmchwt" => Ok(FormulationKind::Pmchwt),
            "muller" | "mueller" => Ok(FormulationKind::Muller),
            "calderon-pmchwt" | "cp" => Ok(FormulationKind::CalderonPmchwt),
            other => Err(FormulationError::InvalidConfig(format!(
                "unknown formulation {other:?}"
            ))),
        }
    }
}

/// Which physical operator a leaf instance stands for. Exterior operators
/// couple object n to tests on object m; interior operators live on one
/// object with its interior wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Exterior { m: usize, n: usize },
    Interior { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StructKey {
    pub kind: OperatorKind,
    pub role: Role,
}

/// Cache of assembled operators, keyed by kind, wavenumber and space pair.
/// The adjoint double-layer is always produced by transposing the cached
/// double-layer, so it never costs a quadrature pass of its own.
pub struct OperatorCache {
    opts: AssemblyOptions,
    map: HashMap<(OperatorKind, u64, u64, u64), Arc<OperatorMatrix>>,
    spaces: HashMap<usize, Arc<P1Space>>,
    quadrature_runs: usize,
}

impl OperatorCache {
    pub fn new(opts: AssemblyOptions) -> Self {
        Self {
            opts,
            map: HashMap::new(),
            spaces: HashMap::new(),
            quadrature_runs: 0,
        }
    }

    /// Number of quadrature assembly passes performed so far.
    pub fn quadrature_runs(&self) -> usize {
        self.quadrature_runs
    }

    /// One P1 space per mesh, so repeated builds on the same mesh share
    /// operators and mass factorizations. The cache holds the mesh alive,
    /// keeping the address key valid.
    pub fn space_for(&mut self, mesh: &Arc<SurfaceMesh>) -> Arc<P1Space> {
        let key = Arc::as_ptr(mesh) as usize;
        self.spaces
            .entry(key)
            .or_insert_with(|| P1Space::new(mesh.clone()))
            .clone()
    }

    pub fn get(
        &mut self,
        kind: OperatorKind,
        k: f64,
        domain: &Arc<P1Space>,
        range: &Arc<P1Space>,
    ) -> Result<Arc<OperatorMatrix>, AssemblyError> {
        let key = (kind, k.to_bits(), domain.id(), range.id());
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let op = if kind == OperatorKind::AdjointDoubleLayer {
            let dl = self.get(OperatorKind::DoubleLayer, k, range, domain)?;
            Arc::new(dl.transpose())
        } else {
            self.quadrature_runs += 1;
            Arc::new(assemble(kind, k, domain, range, &self.opts)?)
        };
        self.map.insert(key, op.clone());
        Ok(op)
    }
}

/// One term of a block entry: a scaled dense leaf, a scaled mass matrix, or
/// a scaled composition of two leaves with the mass inverse at the joint.
#[derive(Debug, Clone)]
pub enum ExprTerm {
    Leaf {
        scale: c64,
        index: usize,
    },
    Mass {
        scale: c64,
        object: usize,
    },
    Compose {
        scale: c64,
        left: usize,
        right: usize,
    },
}

/// A block entry is a sum of terms (empty sum = zero block).
pub type BlockExpr = Vec<ExprTerm>;

/// Per-object data of an assembled system.
pub struct ObjectBlock {
    pub space: Arc<P1Space>,
    pub material: Material,
    pub k_interior: f64,
    pub gamma_d_inc: Vec<c64>,
    pub gamma_n_inc: Vec<c64>,
}

/// Recovered physical traces of a solution.
#[derive(Debug, Clone)]
pub struct SolutionTraces {
    /// Exterior Dirichlet trace of the total field, per object.
    pub gamma_d: Vec<Vec<c64>>,
    /// Exterior Neumann trace of the total field, per object.
    pub gamma_n: Vec<Vec<c64>>,
    /// Auxiliary surface densities (psi or phi) for the indirect kinds.
    pub auxiliary: Option<Vec<Vec<c64>>>,
}

/// A discrete block system: operator expression, right-hand side and unknown
/// labels. Immutable after build; application counts dense leaf products.
pub struct FormulationSystem {
    pub kind: FormulationKind,
    pub exterior: Material,
    pub frequency: f64,
    pub k_exterior: f64,
    pub wave: PlaneWave,
    pub objects: Vec<ObjectBlock>,
    pub unknowns: Vec<String>,
    pub rhs: Vec<c64>,
    /// Quadrature passes spent building this system (transposes are free).
    pub quadrature_assemblies: usize,
    leaves: Vec<Arc<OperatorMatrix>>,
    leaf_by_key: HashMap<StructKey, usize>,
    blocks: Vec<Vec<BlockExpr>>,
    squared: bool,
    matvecs: AtomicUsize,
}

impl FormulationSystem {
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Total system dimension (2 unknowns per object node).
    pub fn dim(&self) -> usize {
        self.objects.iter().map(|o| 2 * o.space.dim()).sum()
    }

    /// Distinct dense operator instances in the block structure.
    pub fn operator_count(&self) -> usize {
        self.leaf_by_key.len()
    }

    /// Dense leaf matrix-vector products performed since the last reset.
    pub fn matvec_count(&self) -> usize {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_matvec_count(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
    }

    fn row_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(2 * self.objects.len() + 1);
        let mut acc = 0;
        for o in &self.objects {
            off.push(acc);
            acc += o.space.dim();
            off.push(acc);
            acc += o.space.dim();
        }
        off.push(acc);
        off
    }

    fn block_space(&self, block_row: usize) -> &Arc<P1Space> {
        &self.objects[block_row / 2].space
    }

    fn apply_term(&self, term: &ExprTerm, x: &[c64]) -> Vec<c64> {
        match term {
            ExprTerm::Leaf { scale, index } => {
                self.matvecs.fetch_add(1, Ordering::Relaxed);
                let mut y = self.leaves[*index].apply(x);
                for v in &mut y {
                    *v *= scale;
                }
                y
            }
            ExprTerm::Mass { scale, object } => {
                let mut y = self.objects[*object].space.apply_mass(x);
                for v in &mut y {
                    *v *= scale;
                }
                y
            }
            ExprTerm::Compose { scale, left, right } => {
                self.matvecs.fetch_add(2, Ordering::Relaxed);
                let t = self.leaves[*right].apply(x);
                let lifted = self.leaves[*right].range.mass_factor().solve_vec(&t);
                let mut y = self.leaves[*left].apply(&lifted);
                for v in &mut y {
                    *v *= scale;
                }
                y
            }
        }
    }

    /// One application of the (non-squared) block operator.
    fn apply_blocks(&self, x: &[c64]) -> Vec<c64> {
        let off = self.row_offsets();
        let nb = 2 * self.objects.len();
        let mut y = vec![c64::new(0.0, 0.0); self.dim()];
        for (r, row) in self.blocks.iter().enumerate() {
            let out = &mut y[off[r]..off[r + 1]];
            for (c, expr) in row.iter().enumerate() {
                if expr.is_empty() {
                    continue;
                }
                let xin = &x[off[c]..off[c + 1]];
                for term in expr {
                    let t = self.apply_term(term, xin);
                    for (o, v) in out.iter_mut().zip(&t) {
                        *o += v;
                    }
                }
            }
        }
        debug_assert_eq!(nb + 1, off.len());
        y
    }

    /// Block-diagonal mass solve, lifting a dual vector to coefficients.
    pub fn mass_solve_blocks(&self, x: &[c64]) -> Vec<c64> {
        let off = self.row_offsets();
        let mut y = Vec::with_capacity(self.dim());
        for (r, _) in self.blocks.iter().enumerate() {
            let space = self.block_space(r);
            y.extend(space.mass_factor().solve_vec(&x[off[r]..off[r + 1]]));
        }
        y
    }

    /// Applies the full system operator in weak form. The Calderon variant
    /// applies the PMCHWT block twice with a mass solve at the joint.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(x.len(), self.dim(), "system apply: dimension mismatch");
        if self.squared {
            let first = self.apply_blocks(x);
            let lifted = self.mass_solve_blocks(&first);
            self.apply_blocks(&lifted)
        } else {
            self.apply_blocks(x)
        }
    }

    /// Strong-form application: block mass solve after the weak operator.
    pub fn apply_strong(&self, x: &[c64]) -> Vec<c64> {
        let y = self.apply(x);
        self.mass_solve_blocks(&y)
    }

    /// Right-hand side in strong form.
    pub fn rhs_strong(&self) -> Vec<c64> {
        self.mass_solve_blocks(&self.rhs)
    }

    /// GMRES on the strong-form system with the library's conventions:
    /// no restart, zero initial guess, relative tolerance `tol`.
    pub fn solve(&self, tol: f64, max_iter: Option<usize>) -> GmresReport {
        let rhs = self.rhs_strong();
        gmres(
            |x| self.apply_strong(x),
            &rhs,
            tol,
            max_iter.unwrap_or(self.dim()),
        )
    }

    fn term_dense(&self, term: &ExprTerm) -> Mat<c64> {
        match term {
            ExprTerm::Leaf { scale, index } => {
                let mut m = self.leaves[*index].to_dense();
                scale_mat(&mut m, *scale);
                m
            }
            ExprTerm::Mass { scale, object } => {
                let space = &self.objects[*object].space;
                let n = space.dim();
                let mut m = Mat::<c64>::zeros(n, n);
                for &(r, c, v) in space.mass_coo().iter() {
                    m[(r, c)] += c64::new(v, 0.0);
                }
                scale_mat(&mut m, *scale);
                m
            }
            ExprTerm::Compose { scale, left, right } => {
                let rd = self.leaves[*right].to_dense();
                let lifted = self.leaves[*right]
                    .range
                    .mass_factor()
                    .solve_mat(rd.as_ref());
                let ld = self.leaves[*left].to_dense();
                let mut m = &ld * &lifted;
                scale_mat(&mut m, *scale);
                m
            }
        }
    }

    /// Dense weak-form block matrix (the PMCHWT matrix for the Calderon
    /// variant, not its square).
    pub fn dense_weak(&self) -> Mat<c64> {
        let off = self.row_offsets();
        let n = self.dim();
        let mut out = Mat::<c64>::zeros(n, n);
        for (r, row) in self.blocks.iter().enumerate() {
            for (c, expr) in row.iter().enumerate() {
                for term in expr {
                    let m = self.term_dense(term);
                    for (i, oi) in (off[r]..off[r + 1]).enumerate() {
                        for (j, oj) in (off[c]..off[c + 1]).enumerate() {
                            out[(oi, oj)] += m[(i, j)];
                        }
                    }
                }
            }
        }
        out
    }

    /// Dense strong-form system matrix whose spectrum matches the operator
    /// accumulation points: blockdiag(M)^-1 A, squared for Calderon PMCHWT.
    pub fn dense_strong(&self) -> Mat<c64> {
        let weak = self.dense_weak();
        let off = self.row_offsets();
        let n = self.dim();
        let mut strong = Mat::<c64>::zeros(n, n);
        for r in 0..self.blocks.len() {
            let space = self.block_space(r);
            let rows = off[r]..off[r + 1];
            let sub = Mat::<c64>::from_fn(rows.len(), n, |i, j| weak[(off[r] + i, j)]);
            let solved = space.mass_factor().solve_mat(sub.as_ref());
            for (i, oi) in rows.enumerate() {
                for j in 0..n {
                    strong[(oi, j)] = solved[(i, j)];
                }
            }
        }
        if self.squared {
            &strong * &strong
        } else {
            strong
        }
    }

    /// Looks up a leaf instance by its structural role.
    pub fn leaf(&self, key: StructKey) -> Option<&Arc<OperatorMatrix>> {
        self.leaf_by_key.get(&key).map(|&i| &self.leaves[i])
    }

    /// Rescales the incident field (the problem is linear in the amplitude).
    pub fn scale_incidence(&mut self, amplitude: c64) {
        self.wave.amplitude *= amplitude;
        for v in &mut self.rhs {
            *v *= amplitude;
        }
        for o in &mut self.objects {
            for v in o.gamma_d_inc.iter_mut().chain(o.gamma_n_inc.iter_mut()) {
                *v *= amplitude;
            }
        }
    }

    /// Recovers the physical exterior traces from a solution vector.
    /// Indirect kinds reconstruct the missing trace through the on-surface
    /// exterior representation plus the incident trace.
    pub fn recover_traces(&self, solution: &[c64]) -> SolutionTraces {
        assert_eq!(solution.len(), self.dim());
        let off = self.row_offsets();
        let l = self.objects.len();
        let block = |r: usize| solution[off[r]..off[r + 1]].to_vec();
        match self.kind {
            FormulationKind::HighContrastNeumann => {
                let mut gamma_d = Vec::with_capacity(l);
                let mut gamma_n = Vec::with_capacity(l);
                let mut aux = Vec::with_capacity(l);
                for m in 0..l {
                    let gn = block(2 * m);
                    let psi_all: Vec<Vec<c64>> = (0..l).map(|n| block(2 * n + 1)).collect();
                    let mut weak = vec![c64::new(0.0, 0.0); self.objects[m].space.dim()];
                    for (n, psi) in psi_all.iter().enumerate() {
                        let v = self
                            .leaf(StructKey {
                                kind: OperatorKind::SingleLayer,
                                role: Role::Exterior { m, n },
                            })
                            .expect("V leaf present");
                        for (w, t) in weak.iter_mut().zip(v.apply(psi)) {
                            *w += t;
                        }
                    }
                    let mut gd = self.objects[m].space.mass_factor().solve_vec(&weak);
                    for (g, inc) in gd.iter_mut().zip(&self.objects[m].gamma_d_inc) {
                        *g += inc;
                    }
                    gamma_d.push(gd);
                    gamma_n.push(gn);
                    aux.push(block(2 * m + 1));
                }
                SolutionTraces {
                    gamma_d,
                    gamma_n,
                    auxiliary: Some(aux),
                }
            }
            FormulationKind::HighContrastDirichlet => {
                let mut gamma_d = Vec::with_capacity(l);
                let mut gamma_n = Vec::with_capacity(l);
                let mut aux = Vec::with_capacity(l);
                for m in 0..l {
                    let gd = block(2 * m + 1);
                    let phi_all: Vec<Vec<c64>> = (0..l).map(|n| block(2 * n)).collect();
                    let mut weak = vec![c64::new(0.0, 0.0); self.objects[m].space.dim()];
                    for (n, phi) in phi_all.iter().enumerate() {
                        let d = self
                            .leaf(StructKey {
                                kind: OperatorKind::Hypersingular,
                                role: Role::Exterior { m, n },
                            })
                            .expect("D leaf present");
                        for (w, t) in weak.iter_mut().zip(d.apply(phi)) {
                            *w += t;
                        }
                    }
                    let mut gn = self.objects[m].space.mass_factor().solve_vec(&weak);
                    for (g, inc) in gn.iter_mut().zip(&self.objects[m].gamma_n_inc) {
                        *g += inc;
                    }
                    gamma_d.push(gd);
                    gamma_n.push(gn);
                    aux.push(block(2 * m));
                }
                SolutionTraces {
                    gamma_d,
                    gamma_n,
                    auxiliary: Some(aux),
                }
            }
            _ => {
                let gamma_d = (0..l).map(|m| block(2 * m)).collect();
                let gamma_n = (0..l).map(|m| block(2 * m + 1)).collect();
                SolutionTraces {
                    gamma_d,
                    gamma_n,
                    auxiliary: None,
                }
            }
        }
    }

    /// Field-evaluation inputs matching this formulation's representation.
    pub fn field_sources(&self, traces: &SolutionTraces) -> ScatterSources {
        let objects = self
            .objects
            .iter()
            .enumerate()
            .map(|(m, o)| {
                let exterior = match self.kind {
                    FormulationKind::HighContrastNeumann => ExteriorContrib::SingleLayer {
                        psi: traces.auxiliary.as_ref().unwrap()[m].clone(),
                    },
                    FormulationKind::HighContrastDirichlet => ExteriorContrib::DoubleLayer {
                        phi: traces.auxiliary.as_ref().unwrap()[m].clone(),
                    },
                    _ => ExteriorContrib::Direct {
                        gamma_d_sca: traces.gamma_d[m]
                            .iter()
                            .zip(&o.gamma_d_inc)
                            .map(|(t, i)| t - i)
                            .collect(),
                        gamma_n_sca: traces.gamma_n[m]
                            .iter()
                            .zip(&o.gamma_n_inc)
                            .map(|(t, i)| t - i)
                            .collect(),
                    },
                };
                ObjectSource {
                    space: o.space.clone(),
                    k_interior: o.k_interior,
                    density_ratio: o.material.rho / self.exterior.rho,
                    exterior,
                    gamma_d_total: traces.gamma_d[m].clone(),
                    gamma_n_total: traces.gamma_n[m].clone(),
                }
            })
            .collect();
        ScatterSources {
            wave: self.wave.clone(),
            k_exterior: self.k_exterior,
            objects,
        }
    }
}

fn scale_mat(m: &mut Mat<c64>, s: c64) {
    if s == c64::new(1.0, 0.0) {
        return;
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= s;
        }
    }
}

/// Builds the single-object system for the given medium pair.
pub fn build(
    kind: FormulationKind,
    pair: &crate::materials::MediumPair,
    mesh: Arc<SurfaceMesh>,
    direction: Point3,
) -> Result<FormulationSystem, FormulationError> {
    build_multiple(
        kind,
        pair.exterior.clone(),
        &[pair.interior.clone()],
        vec![mesh],
        pair.frequency,
        direction,
    )
}

/// Builds the block system for scattering at `l` disjoint objects.
pub fn build_multiple(
    kind: FormulationKind,
    exterior: Material,
    interiors: &[Material],
    meshes: Vec<Arc<SurfaceMesh>>,
    frequency: f64,
    direction: Point3,
) -> Result<FormulationSystem, FormulationError> {
    let mut cache = OperatorCache::new(AssemblyOptions::default());
    build_multiple_with_cache(
        kind, exterior, interiors, meshes, frequency, direction, &mut cache,
    )
}

/// As [`build_multiple`], reusing an operator cache across builds. Parameter
/// sweeps that keep the mesh and wavenumbers fixed pay assembly only once.
#[allow(clippy::too_many_arguments)]
pub fn build_multiple_with_cache(
    kind: FormulationKind,
    exterior: Material,
    interiors: &[Material],
    meshes: Vec<Arc<SurfaceMesh>>,
    frequency: f64,
    direction: Point3,
    cache: &mut OperatorCache,
) -> Result<FormulationSystem, FormulationError> {
    if interiors.len() != meshes.len() || meshes.is_empty() {
        return Err(FormulationError::InvalidConfig(format!(
            "{} interior materials for {} meshes",
            interiors.len(),
            meshes.len()
        )));
    }
    check_disjoint(&meshes)?;

    let l = meshes.len();
    let k0 = 2.0 * PI * frequency / exterior.c;
    let wave = PlaneWave::new(direction, c64::new(1.0, 0.0), k0)
        .map_err(|e| FormulationError::InvalidConfig(e.to_string()))?;

    let spaces: Vec<Arc<P1Space>> = meshes.iter().map(|m| cache.space_for(m)).collect();
    let mut objects = Vec::with_capacity(l);
    for (space, mat) in spaces.iter().zip(interiors) {
        let (gd, gn) = incident_traces(&wave, &space.mesh);
        objects.push(ObjectBlock {
            space: space.clone(),
            material: mat.clone(),
            k_interior: 2.0 * PI * frequency / mat.c,
            gamma_d_inc: gd,
            gamma_n_inc: gn,
        });
    }

    let runs_before = cache.quadrature_runs();
    let mut builder = SystemBuilder {
        cache,
        leaves: Vec::new(),
        leaf_by_key: HashMap::new(),
        spaces: &spaces,
        objects: &objects,
        k0,
    };

    let one = c64::new(1.0, 0.0);
    let half = c64::new(0.5, 0.0);
    let rho0 = exterior.rho;
    let nb = 2 * l;
    let mut blocks: Vec<Vec<BlockExpr>> = vec![vec![Vec::new(); nb]; nb];
    let mut unknowns = Vec::with_capacity(nb);

    use OperatorKind::*;
    match kind {
        FormulationKind::HighContrastNeumann => {
            for m in 0..l {
                unknowns.push(format!("gamma_n_total[{m}]"));
                unknowns.push(format!("psi[{m}]"));
            }
            for m in 0..l {
                let r = c64::new(rho0 / objects[m].material.rho, 0.0);
                let t_int = builder.interior(AdjointDoubleLayer, m)?;
                let d_int = builder.interior(Hypersingular, m)?;
                // row 2m: (1/2 M - T_m^-) gamma_N,m - r D_m^- o V_mn^+ psi_n
                blocks[2 * m][2 * m].push(ExprTerm::Mass {
                    scale: half,
                    object: m,
                });
                blocks[2 * m][2 * m].push(ExprTerm::Leaf {
                    scale: -one,
                    index: t_int,
                });
                // row 2m+1: M gamma_N,m + (1/2 M - T_mm^+) psi_m - T_mn^+ psi_n
                blocks[2 * m + 1][2 * m].push(ExprTerm::Mass {
                    scale: one,
                    object: m,
                });
                for n in 0..l {
                    let v_ext = builder.exterior(SingleLayer, m, n)?;
                    let t_ext = builder.exterior(AdjointDoubleLayer, m, n)?;
                    blocks[2 * m][2 * n + 1].push(ExprTerm::Compose {
                        scale: -r,
                        left: d_int,
                        right: v_ext,
                    });
                    if m == n {
                        blocks[2 * m + 1][2 * n + 1].push(ExprTerm::Mass {
                            scale: half,
                            object: m,
                        });
                    }
                    blocks[2 * m + 1][2 * n + 1].push(ExprTerm::Leaf {
                        scale: -one,
                        index: t_ext,
                    });
                }
            }
        }
        FormulationKind::HighContrastDirichlet => {
            for m in 0..l {
                unknowns.push(format!("phi[{m}]"));
                unknowns.push(format!("gamma_d_total[{m}]"));
            }
            for m in 0..l {
                let q = c64::new(objects[m].material.rho / rho0, 0.0);
                let k_int = builder.interior(DoubleLayer, m)?;
                let v_int = builder.interior(SingleLayer, m)?;
                // row 2m: (1/2 M + K_mm^+) phi_m + K_mn^+ phi_n + M gamma_D,m
                blocks[2 * m][2 * m + 1].push(ExprTerm::Mass {
                    scale: one,
                    object: m,
                });
                // row 2m+1: -q V_m^- o D_mn^+ phi_n + (1/2 M + K_m^-) gamma_D,m
                blocks[2 * m + 1][2 * m + 1].push(ExprTerm::Mass {
                    scale: half,
                    object: m,
                });
                blocks[2 * m + 1][2 * m + 1].push(ExprTerm::Leaf {
                    scale: one,
                    index: k_int,
                });
                for n in 0..l {
                    let k_ext = builder.exterior(DoubleLayer, m, n)?;
                    let d_ext = builder.exterior(Hypersingular, m, n)?;
                    if m == n {
                        blocks[2 * m][2 * n].push(ExprTerm::Mass {
                            scale: half,
                            object: m,
                        });
                    }
                    blocks[2 * m][2 * n].push(ExprTerm::Leaf {
                        scale: one,
                        index: k_ext,
                    });
                    blocks[2 * m + 1][2 * n].push(ExprTerm::Compose {
                        scale: -q,
                        left: v_int,
                        right: d_ext,
                    });
                }
            }
        }
        FormulationKind::Pmchwt | FormulationKind::Muller | FormulationKind::CalderonPmchwt => {
            let muller = kind == FormulationKind::Muller;
            for m in 0..l {
                unknowns.push(format!("gamma_d_total[{m}]"));
                unknowns.push(format!("gamma_n_total[{m}]"));
            }
            for m in 0..l {
                let q = c64::new(objects[m].material.rho / rho0, 0.0);
                let r = c64::new(rho0 / objects[m].material.rho, 0.0);
                let k_int = builder.interior(DoubleLayer, m)?;
                let v_int = builder.interior(SingleLayer, m)?;
                let d_int = builder.interior(Hypersingular, m)?;
                let t_int = builder.interior(AdjointDoubleLayer, m)?;
                let (s_int, s_mass) = if muller {
                    (-one, one)
                } else {
                    (one, c64::new(0.0, 0.0))
                };
                // diagonal interior contributions
                if muller {
                    blocks[2 * m][2 * m].push(ExprTerm::Mass {
                        scale: s_mass,
                        object: m,
                    });
                    blocks[2 * m + 1][2 * m + 1].push(ExprTerm::Mass {
                        scale: s_mass,
                        object: m,
                    });
                }
                blocks[2 * m][2 * m].push(ExprTerm::Leaf {
                    scale: -s_int,
                    index: k_int,
                });
                blocks[2 * m][2 * m + 1].push(ExprTerm::Leaf {
                    scale: s_int * q,
                    index: v_int,
                });
                blocks[2 * m + 1][2 * m].push(ExprTerm::Leaf {
                    scale: s_int * r,
                    index: d_int,
                });
                blocks[2 * m + 1][2 * m + 1].push(ExprTerm::Leaf {
                    scale: s_int,
                    index: t_int,
                });
                for n in 0..l {
                    let k_ext = builder.exterior(DoubleLayer, m, n)?;
                    let v_ext = builder.exterior(SingleLayer, m, n)?;
                    let d_ext = builder.exterior(Hypersingular, m, n)?;
                    let t_ext = builder.exterior(AdjointDoubleLayer, m, n)?;
                    blocks[2 * m][2 * n].push(ExprTerm::Leaf {
                        scale: -one,
                        index: k_ext,
                    });
                    blocks[2 * m][2 * n + 1].push(ExprTerm::Leaf {
                        scale: one,
                        index: v_ext,
                    });
                    blocks[2 * m + 1][2 * n].push(ExprTerm::Leaf {
                        scale: one,
                        index: d_ext,
                    });
                    blocks[2 * m + 1][2 * n + 1].push(ExprTerm::Leaf {
                        scale: one,
                        index: t_ext,
                    });
                }
            }
        }
    }

    let leaves = builder.leaves;
    let leaf_by_key = builder.leaf_by_key;
    let quadrature_assemblies = cache.quadrature_runs() - runs_before;

    let mut system = FormulationSystem {
        kind,
        exterior,
        frequency,
        k_exterior: k0,
        wave,
        objects,
        unknowns,
        rhs: Vec::new(),
        quadrature_assemblies,
        leaves,
        leaf_by_key,
        blocks,
        squared: kind == FormulationKind::CalderonPmchwt,
        matvecs: AtomicUsize::new(0),
    };

    // Right-hand sides.
    let mut rhs = Vec::with_capacity(system.dim());
    match kind {
        FormulationKind::HighContrastNeumann => {
            for m in 0..l {
                let o = &system.objects[m];
                let r = rho0_ratio(&system, m);
                let d_int = system
                    .leaf(StructKey {
                        kind: Hypersingular,
                        role: Role::Interior { m },
                    })
                    .unwrap();
                let weak: Vec<c64> = d_int.apply(&o.gamma_d_inc).iter().map(|v| v * r).collect();
                rhs.extend(weak);
                rhs.extend(o.space.apply_mass(&o.gamma_n_inc));
            }
        }
        FormulationKind::HighContrastDirichlet => {
            for m in 0..l {
                let o = &system.objects[m];
                let q = c64::new(o.material.rho / system.exterior.rho, 0.0);
                rhs.extend(o.space.apply_mass(&o.gamma_d_inc));
                let v_int = system
                    .leaf(StructKey {
                        kind: SingleLayer,
                        role: Role::Interior { m },
                    })
                    .unwrap();
                let weak: Vec<c64> = v_int.apply(&o.gamma_n_inc).iter().map(|v| v * q).collect();
                rhs.extend(weak);
            }
        }
        FormulationKind::Pmchwt | FormulationKind::Muller => {
            for o in &system.objects {
                rhs.extend(o.space.apply_mass(&o.gamma_d_inc));
                rhs.extend(o.space.apply_mass(&o.gamma_n_inc));
            }
        }
        FormulationKind::CalderonPmchwt => {
            // A^2 u = A g with g the incident trace coefficients.
            let mut g = Vec::with_capacity(system.dim());
            for o in &system.objects {
                g.extend(o.gamma_d_inc.clone());
                g.extend(o.gamma_n_inc.clone());
            }
            rhs = system.apply_blocks(&g);
        }
    }
    system.rhs = rhs;
    system.reset_matvec_count();
    Ok(system)
}

fn rho0_ratio(system: &FormulationSystem, m: usize) -> c64 {
    c64::new(system.exterior.rho / system.objects[m].material.rho, 0.0)
}

struct SystemBuilder<'a> {
    cache: &'a mut OperatorCache,
    leaves: Vec<Arc<OperatorMatrix>>,
    leaf_by_key: HashMap<StructKey, usize>,
    spaces: &'a [Arc<P1Space>],
    objects: &'a [ObjectBlock],
    k0: f64,
}

impl SystemBuilder<'_> {
    fn insert(&mut self, key: StructKey, op: Arc<OperatorMatrix>) -> usize {
        if let Some(&i) = self.leaf_by_key.get(&key) {
            return i;
        }
        let i = self.leaves.len();
        self.leaves.push(op);
        self.leaf_by_key.insert(key, i);
        i
    }

    /// Exterior-kernel operator coupling trial object n to test object m.
    fn exterior(&mut self, kind: OperatorKind, m: usize, n: usize) -> Result<usize, AssemblyError> {
        let key = StructKey {
            kind,
            role: Role::Exterior { m, n },
        };
        if let Some(&i) = self.leaf_by_key.get(&key) {
            return Ok(i);
        }
        let op = self
            .cache
            .get(kind, self.k0, &self.spaces[n], &self.spaces[m])?;
        Ok(self.insert(key, op))
    }

    /// Interior-kernel operator on object m.
    fn interior(&mut self, kind: OperatorKind, m: usize) -> Result<usize, AssemblyError> {
        let key = StructKey {
            kind,
            role: Role::Interior { m },
        };
        if let Some(&i) = self.leaf_by_key.get(&key) {
            return Ok(i);
        }
        let op = self.cache.get(
            kind,
            self.objects[m].k_interior,
            &self.spaces[m],
            &self.spaces[m],
        )?;
        Ok(self.insert(key, op))
    }
}

/// Disjointness guard: report an overlap when bounding boxes intersect and
/// one surface has vertices inside the other.
fn check_disjoint(meshes: &[Arc<SurfaceMesh>]) -> Result<(), FormulationError> {
    for i in 0..meshes.len() {
        for j in (i + 1)..meshes.len() {
            let (alo, ahi) = meshes[i].aabb();
            let (blo, bhi) = meshes[j].aabb();
            let boxes_touch = (0..3).all(|d| alo[d] <= bhi[d] && blo[d] <= ahi[d]);
            if !boxes_touch {
                continue;
            }
            let collide = meshes[i].vertices.iter().any(|&v| meshes[j].contains(v))
                || meshes[j].vertices.iter().any(|&v| meshes[i].contains(v));
            if collide {
                return Err(FormulationError::GeometryOverlap(format!(
                    "objects {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}
