//! The benchmark commands: spectra, conditioning, solves, parameter sweeps,
//! multiple scattering and field maps.

use crate::config::{parse_materials_string, Config, ConfigError, GeometrySpec, SweepMode};
use crate::output::{announce, fmt_f, OutputDir};
use faer::c64;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;
use transbem::assembly::{assemble, strong_form, AssemblyOptions, OperatorKind, P1Space};
use transbem::fields::{evaluate_field, sphere_series_oracle, PlaneWave, RegionTag};
use transbem::formulations::{
    build_multiple_with_cache, FormulationKind, FormulationSystem, OperatorCache,
};
use transbem::materials::{Material, MediumPair};
use transbem::mesh::SurfaceMesh;
use transbem::spectral::{
    accumulation_points, cluster_metrics, spectral_report, PredictionTarget, SPECTRUM_CONVENTION,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("resource guard: {0}")]
    Guard(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) => 4,
        }
    }
}

impl From<transbem::formulations::FormulationError> for CliError {
    fn from(e: transbem::formulations::FormulationError) -> Self {
        use transbem::formulations::FormulationError as F;
        match e {
            F::InvalidConfig(msg) => CliError::Config(ConfigError::Invalid(msg)),
            F::GeometryOverlap(msg) => CliError::Config(ConfigError::Invalid(msg)),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<transbem::spectral::SpectralError> for CliError {
    fn from(e: transbem::spectral::SpectralError) -> Self {
        use transbem::spectral::SpectralError as S;
        match e {
            S::DimensionCap { dim, cap } => {
                CliError::Guard(format!("dense analysis dimension {dim} exceeds cap {cap}"))
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub struct RunContext {
    pub config: Config,
    pub budget_gb: f64,
}

impl RunContext {
    fn meshes(&self) -> Result<Vec<Arc<SurfaceMesh>>, CliError> {
        Ok(self.config.geometry.build()?)
    }

    fn exterior(&self) -> Result<Material, CliError> {
        Ok(self.config.exterior.resolve()?)
    }

    fn interiors(&self, n_objects: usize) -> Result<Vec<Material>, CliError> {
        let specs = &self.config.interior;
        if specs.is_empty() {
            return Err(ConfigError::Invalid("no interior material".into()).into());
        }
        let mats: Vec<Material> = specs
            .iter()
            .map(|s| s.resolve())
            .collect::<Result<_, _>>()?;
        if mats.len() == 1 && n_objects > 1 {
            return Ok(vec![mats[0].clone(); n_objects]);
        }
        if mats.len() != n_objects {
            return Err(ConfigError::Invalid(format!(
                "{} interior materials for {} objects",
                mats.len(),
                n_objects
            ))
            .into());
        }
        Ok(mats)
    }

    fn frequency(&self) -> Result<f64, CliError> {
        self.config
            .frequency
            .ok_or_else(|| ConfigError::Invalid("missing frequency".into()).into())
    }

    fn out(&self, command: &str, extra: Vec<(String, String)>) -> Result<OutputDir, CliError> {
        let dir = self
            .config
            .output_dir
            .clone()
            .unwrap_or_else(|| "out".into());
        let mut header = vec![
            ("command".to_string(), command.to_string()),
            (
                "artifact".to_string(),
                format!("transbem v{}", env!("CARGO_PKG_VERSION")),
            ),
            ("config-hash".to_string(), self.config.hash()),
            ("geometry".to_string(), self.config.geometry.describe()),
            (
                "spectra-convention".to_string(),
                SPECTRUM_CONVENTION.to_string(),
            ),
        ];
        header.extend(extra);
        Ok(OutputDir::new(dir, header)?)
    }

    /// Refuses runs whose dense working set would exceed the budget:
    /// (2 N l)^2 entries of 16 bytes per explicit matrix.
    fn guard_dense(&self, total_dim: usize, matrices: usize) -> Result<(), CliError> {
        let bytes = (total_dim as f64).powi(2) * 16.0 * matrices as f64;
        let budget = self.budget_gb * 1e9;
        if bytes > budget {
            return Err(CliError::Guard(format!(
                "predicted dense working set {:.2} GB exceeds budget {:.2} GB",
                bytes / 1e9,
                self.budget_gb
            )));
        }
        Ok(())
    }

    fn build_systems(
        &self,
        kinds: &[FormulationKind],
        meshes: &[Arc<SurfaceMesh>],
        exterior: &Material,
        interiors: &[Material],
        frequency: f64,
    ) -> Result<Vec<FormulationSystem>, CliError> {
        let mut cache = OperatorCache::new(AssemblyOptions::default());
        let mut out = Vec::new();
        for kind in kinds {
            let mut sys = build_multiple_with_cache(
                *kind,
                exterior.clone(),
                interiors,
                meshes.to_vec(),
                frequency,
                self.config.direction(),
                &mut cache,
            )?;
            if let Some([re, im]) = self.config.amplitude {
                sys.scale_incidence(c64::new(re, im));
            }
            out.push(sys);
        }
        Ok(out)
    }
}

fn pair_info(exterior: &Material, interiors: &[Material], f: f64) -> Vec<(String, String)> {
    let k0 = 2.0 * PI * f / exterior.c;
    let kints: Vec<String> = interiors
        .iter()
        .map(|m| format!("{:.6}", 2.0 * PI * f / m.c))
        .collect();
    let ratios: Vec<String> = interiors
        .iter()
        .map(|m| format!("{:.6}", m.rho / exterior.rho))
        .collect();
    vec![
        ("frequency-hz".into(), format!("{f}")),
        ("k-exterior".into(), format!("{k0:.6}")),
        ("k-interior".into(), kints.join(";")),
        ("density-ratio".into(), ratios.join(";")),
    ]
}

fn mesh_info(meshes: &[Arc<SurfaceMesh>]) -> (String, String) {
    let per: Vec<String> = meshes
        .iter()
        .map(|m| m.vertex_count().to_string())
        .collect();
    ("dofs-per-object".to_string(), per.join(";"))
}

/// Eigenvalue files plus predictions and clustering metrics per formulation,
/// and for any configured operator products V(k1) o D(k2).
pub fn run_spectrum(ctx: &RunContext) -> Result<(), CliError> {
    let meshes = ctx.meshes()?;
    let exterior = ctx.exterior()?;
    let interiors = ctx.interiors(meshes.len())?;
    let f = ctx.frequency()?;
    let kinds = ctx.config.formulation_kinds()?;
    let mut header = pair_info(&exterior, &interiors, f);
    header.push(mesh_info(&meshes));
    let out = ctx.out("spectrum", header)?;

    let total_dim: usize = meshes.iter().map(|m| 2 * m.vertex_count()).sum();
    let cap = ctx
        .config
        .dense_cap
        .unwrap_or(transbem::spectral::DEFAULT_DENSE_CAP);
    ctx.guard_dense(total_dim, 4)?;

    let systems = ctx.build_systems(&kinds, &meshes, &exterior, &interiors, f)?;
    for sys in &systems {
        let report = spectral_report(sys, Some(cap))?;
        let rows: Vec<Vec<String>> = report
            .eigenvalues
            .iter()
            .map(|e| vec![fmt_f(e[0]), fmt_f(e[1])])
            .collect();
        let name = sys.kind.name();
        announce(&out.write_csv(&format!("spectrum_{name}.csv"), &["re", "im"], &rows)?);
        announce(&out.write_json(&format!("spectrum_{name}.json"), &report)?);
    }

    // Operator-product spectra of strong-form V(k1) M^-1 D(k2).
    if !ctx.config.operator_products.is_empty() {
        let space = P1Space::new(meshes[0].clone());
        let opts = AssemblyOptions::default();
        for [k1, k2] in &ctx.config.operator_products {
            let v = assemble(OperatorKind::SingleLayer, *k1, &space, &space, &opts)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let d = assemble(OperatorKind::Hypersingular, *k2, &space, &space, &opts)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let product = strong_form(&v) * strong_form(&d);
            let eigs = transbem::linalg::eigenvalues(product.as_ref())
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let prediction =
                accumulation_points(PredictionTarget::OperatorProductVD, 1.0, 1.0).unwrap();
            let metrics = cluster_metrics(&eigs, &prediction);
            let rows: Vec<Vec<String>> = eigs
                .iter()
                .map(|e| vec![fmt_f(e.re), fmt_f(e.im)])
                .collect();
            let tag = format!("product_k1_{k1}_k2_{k2}");
            announce(&out.write_csv(&format!("{tag}.csv"), &["re", "im"], &rows)?);
            announce(&out.write_json(
                &format!("{tag}.json"),
                &serde_json::json!({"prediction": prediction, "metrics": metrics}),
            )?);
        }
    }
    Ok(())
}

/// Condition numbers of the strong-form systems.
pub fn run_condition(ctx: &RunContext) -> Result<(), CliError> {
    let meshes = ctx.meshes()?;
    let exterior = ctx.exterior()?;
    let interiors = ctx.interiors(meshes.len())?;
    let f = ctx.frequency()?;
    let kinds = ctx.config.formulation_kinds()?;
    let mut header = pair_info(&exterior, &interiors, f);
    header.push(mesh_info(&meshes));
    let out = ctx.out("condition", header)?;

    let total_dim: usize = meshes.iter().map(|m| 2 * m.vertex_count()).sum();
    ctx.guard_dense(total_dim, 3)?;

    let systems = ctx.build_systems(&kinds, &meshes, &exterior, &interiors, f)?;
    let mut rows = Vec::new();
    for sys in &systems {
        let kappa = transbem::linalg::condition_number(sys.dense_strong().as_ref());
        rows.push(vec![
            sys.kind.name().to_string(),
            sys.dim().to_string(),
            fmt_f(kappa),
        ]);
    }
    announce(&out.write_csv("condition.csv", &["formulation", "dim", "kappa2"], &rows)?);
    Ok(())
}

/// GMRES solves with iteration accounting.
pub fn run_solve(ctx: &RunContext) -> Result<(), CliError> {
    let meshes = ctx.meshes()?;
    let exterior = ctx.exterior()?;
    let interiors = ctx.interiors(meshes.len())?;
    let f = ctx.frequency()?;
    let kinds = ctx.config.formulation_kinds()?;
    let tol = ctx.config.gmres_tol.unwrap_or(1e-7);
    let mut header = pair_info(&exterior, &interiors, f);
    header.push(mesh_info(&meshes));
    let out = ctx.out("solve", header)?;

    let n_max = meshes.iter().map(|m| m.vertex_count()).max().unwrap_or(0);
    let l = meshes.len();
    ctx.guard_dense(2 * n_max, 4 * l + 4 * l * l)?;

    let systems = ctx.build_systems(&kinds, &meshes, &exterior, &interiors, f)?;
    let mut rows = Vec::new();
    let mut failed = false;
    for sys in &systems {
        sys.reset_matvec_count();
        let t0 = Instant::now();
        let rep = sys.solve(tol, None);
        let wall = t0.elapsed().as_secs_f64();
        if !rep.converged {
            failed = true;
        }
        rows.push(vec![
            sys.kind.name().to_string(),
            sys.dim().to_string(),
            sys.operator_count().to_string(),
            sys.quadrature_assemblies.to_string(),
            rep.iterations.to_string(),
            rep.converged.to_string(),
            fmt_f(rep.relative_residual),
            fmt_f(wall),
        ]);
        // residual history per formulation
        let hist: Vec<Vec<String>> = rep
            .residual_history
            .iter()
            .enumerate()
            .map(|(i, r)| vec![(i + 1).to_string(), fmt_f(*r)])
            .collect();
        announce(&out.write_csv(
            &format!("residuals_{}.csv", sys.kind.name()),
            &["iteration", "relative_residual"],
            &hist,
        )?);
    }
    announce(&out.write_csv(
        "solve.csv",
        &[
            "formulation",
            "dim",
            "operators",
            "quadrature_assemblies",
            "iterations",
            "converged",
            "relative_residual",
            "wall_s",
        ],
        &rows,
    )?);
    if failed {
        return Err(CliError::Numerical(
            "GMRES did not converge for all formulations".into(),
        ));
    }
    Ok(())
}

/// Condition number across a density-ratio sweep, with constant wavespeed or
/// constant compressibility.
pub fn run_density_sweep(ctx: &RunContext) -> Result<(), CliError> {
    let sweep = ctx
        .config
        .density_sweep
        .clone()
        .ok_or_else(|| ConfigError::Invalid("missing density_sweep section".into()))?;
    let meshes = ctx.meshes()?;
    if meshes.len() != 1 {
        return Err(ConfigError::Invalid("density sweep expects a single object".into()).into());
    }
    let exterior = ctx.exterior()?;
    let f = ctx.frequency()?;
    let kinds = ctx.config.formulation_kinds()?;

    let total_dim = 2 * meshes[0].vertex_count();
    ctx.guard_dense(total_dim, 3)?;

    let beta = exterior.compressibility();
    let mode_name = match sweep.mode {
        SweepMode::ConstantC => "constant-c",
        SweepMode::ConstantBeta => "constant-beta",
    };
    let mut header = pair_info(&exterior, &[exterior.clone()], f);
    header.push(("sweep-mode".into(), mode_name.into()));
    header.push(mesh_info(&meshes));
    let out = ctx.out("sweep-density", header)?;

    let mut cache = OperatorCache::new(AssemblyOptions::default());
    let mut rows = Vec::new();
    for ratio in sweep.ratios() {
        let rho_int = ratio * exterior.rho;
        let interior = match sweep.mode {
            SweepMode::ConstantC => Material::new("swept", rho_int, exterior.c),
            SweepMode::ConstantBeta => {
                let c = transbem::materials::wavespeed_from_compressibility(beta, rho_int)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Material::new("swept", rho_int, c)
            }
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let k_int = 2.0 * PI * f / interior.c;

        let mut row = vec![fmt_f(ratio), fmt_f(k_int)];
        for kind in &kinds {
            let sys = build_multiple_with_cache(
                *kind,
                exterior.clone(),
                &[interior.clone()],
                meshes.clone(),
                f,
                ctx.config.direction(),
                &mut cache,
            )?;
            let kappa = transbem::linalg::condition_number(sys.dense_strong().as_ref());
            row.push(fmt_f(kappa));
        }
        rows.push(row);
    }
    let mut columns = vec!["density_ratio".to_string(), "k_interior".to_string()];
    columns.extend(kinds.iter().map(|k| format!("kappa2_{}", k.name())));
    let colrefs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    announce(&out.write_csv("density_sweep.csv", &colrefs, &rows)?);
    Ok(())
}

/// Condition number and GMRES iterations across a frequency sweep on the
/// cube, regenerating the mesh at each frequency for the stricter medium.
pub fn run_frequency_sweep(ctx: &RunContext) -> Result<(), CliError> {
    let sweep = ctx
        .config
        .frequency_sweep
        .clone()
        .ok_or_else(|| ConfigError::Invalid("missing frequency_sweep section".into()))?;
    let edge = match ctx.config.geometry {
        GeometrySpec::Cube { edge, .. } => edge,
        _ => {
            return Err(ConfigError::Invalid("frequency sweep expects cube geometry".into()).into())
        }
    };
    let exterior = ctx.exterior()?;
    let interiors = ctx.interiors(1)?;
    let interior = interiors[0].clone();
    let kinds = ctx.config.formulation_kinds()?;
    let tol = ctx.config.gmres_tol.unwrap_or(1e-7);
    let epw = sweep.elements_per_wavelength.unwrap_or(6.0);

    let mut header = vec![(
        "sweep".into(),
        format!("{} .. {} Hz", sweep.min_hz, sweep.max_hz),
    )];
    header.push(("elements-per-wavelength".into(), format!("{epw}")));
    header.push((
        "density-ratio".into(),
        format!("{:.6}", interior.rho / exterior.rho),
    ));
    header.push(("k-ratio".into(), format!("{:.6}", exterior.c / interior.c)));
    let out = ctx.out("sweep-frequency", header)?;

    let mut rows = Vec::new();
    let mut k_top: f64 = 0.0;
    for i in 0..sweep.points {
        let t = if sweep.points == 1 {
            0.0
        } else {
            i as f64 / (sweep.points - 1) as f64
        };
        let f = sweep.min_hz + t * (sweep.max_hz - sweep.min_hz);
        let k_ext = 2.0 * PI * f / exterior.c;
        let k_int = 2.0 * PI * f / interior.c;
        let k_max = k_ext.max(k_int);
        k_top = k_top.max(k_max);
        // max mesh edge is sqrt(2) h on the structured cube
        let h = 2.0 * PI / k_max / (epw * 2.0f64.sqrt());
        let mesh = Arc::new(
            transbem::mesh::make_cube(edge, h.min(edge))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        );
        let dim = 2 * mesh.vertex_count();
        ctx.guard_dense(dim, 3)?;
        let quality = mesh
            .quality(k_max)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut row = vec![
            fmt_f(f),
            fmt_f(k_ext),
            fmt_f(k_int),
            mesh.vertex_count().to_string(),
            fmt_f(quality.elements_per_wavelength),
        ];
        let systems =
            ctx.build_systems(&kinds, &[mesh.clone()], &exterior, &[interior.clone()], f)?;
        for sys in &systems {
            let kappa = transbem::linalg::condition_number(sys.dense_strong().as_ref());
            let rep = sys.solve(tol, None);
            row.push(fmt_f(kappa));
            row.push(rep.iterations.to_string());
        }
        rows.push(row);
    }
    let mut columns = vec![
        "frequency_hz".to_string(),
        "k_exterior".to_string(),
        "k_interior".to_string(),
        "vertices".to_string(),
        "elements_per_wavelength".to_string(),
    ];
    for k in &kinds {
        columns.push(format!("kappa2_{}", k.name()));
        columns.push(format!("iters_{}", k.name()));
    }
    let colrefs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    announce(&out.write_csv("frequency_sweep.csv", &colrefs, &rows)?);

    // rigid-cube resonance markers up to the largest wavenumber
    let marks = transbem::fields::cube_resonances(k_top * edge);
    let rows: Vec<Vec<String>> = marks.iter().map(|k| vec![fmt_f(k / edge)]).collect();
    announce(&out.write_csv("resonances.csv", &["k"], &rows)?);
    Ok(())
}

/// Multiple-scattering benchmark over a string of interior materials.
pub fn run_multi(ctx: &RunContext) -> Result<(), CliError> {
    let letters = ctx
        .config
        .materials_string
        .clone()
        .ok_or_else(|| ConfigError::Invalid("missing materials_string".into()))?;
    let interiors = parse_materials_string(&letters)?;
    let l = interiors.len();
    let exterior = ctx.exterior()?;
    let f = ctx.frequency()?;
    let kinds = ctx.config.formulation_kinds()?;
    let tol = ctx.config.gmres_tol.unwrap_or(1e-7);

    // Sphere row layout; the geometry block controls radius/level/spacing.
    let (radius, level, spacing) = match ctx.config.geometry {
        GeometrySpec::SphereRow {
            radius,
            level,
            spacing,
            ..
        } => (radius, level, spacing),
        GeometrySpec::Icosphere { radius, level } => (radius, level, 3.0),
        _ => (1.0, 2, 3.0),
    };
    let base = transbem::mesh::make_icosphere(radius, level)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let meshes: Vec<Arc<SurfaceMesh>> = (0..l)
        .map(|j| Arc::new(base.translated([spacing * j as f64, 0.0, 0.0])))
        .collect();

    let n = base.vertex_count();
    ctx.guard_dense(2 * n, 4 * l + 4 * l * l)?;

    let mut header = pair_info(&exterior, &interiors, f);
    header.push(("materials".into(), letters.clone()));
    header.push(mesh_info(&meshes));
    let out = ctx.out("multi", header)?;

    let systems = ctx.build_systems(&kinds, &meshes, &exterior, &interiors, f)?;
    let mut rows = Vec::new();
    for sys in &systems {
        let t0 = Instant::now();
        let rep = sys.solve(tol, None);
        let wall = t0.elapsed().as_secs_f64();
        if !rep.converged {
            return Err(CliError::Numerical(format!(
                "{} did not converge in {} iterations",
                sys.kind.name(),
                rep.iterations
            )));
        }
        rows.push(vec![
            sys.kind.name().to_string(),
            l.to_string(),
            sys.dim().to_string(),
            sys.operator_count().to_string(),
            rep.iterations.to_string(),
            fmt_f(wall),
            fmt_f(wall / rep.iterations.max(1) as f64),
        ]);
    }
    announce(&out.write_csv(
        "multi.csv",
        &[
            "formulation",
            "objects",
            "dim",
            "operators",
            "iterations",
            "wall_s",
            "per_iter_s",
        ],
        &rows,
    )?);
    Ok(())
}

/// Plane-grid field map plus surface magnitudes, solving inline with the
/// first configured formulation.
pub fn run_field(ctx: &RunContext) -> Result<(), CliError> {
    let plane = ctx
        .config
        .field_plane
        .clone()
        .ok_or_else(|| ConfigError::Invalid("missing field_plane section".into()))?;
    let meshes = ctx.meshes()?;
    let exterior = ctx.exterior()?;
    let interiors = ctx.interiors(meshes.len())?;
    let f = ctx.frequency()?;
    let kinds = ctx.config.formulation_kinds()?;
    let tol = ctx.config.gmres_tol.unwrap_or(1e-7);
    let mut header = pair_info(&exterior, &interiors, f);
    header.push(mesh_info(&meshes));
    let out = ctx.out("field", header)?;

    let systems = ctx.build_systems(&kinds[..1], &meshes, &exterior, &interiors, f)?;
    let sys = &systems[0];
    let rep = sys.solve(tol, None);
    if !rep.converged {
        return Err(CliError::Numerical("field solve did not converge".into()));
    }
    let traces = sys.recover_traces(&rep.solution);
    let sources = sys.field_sources(&traces);

    // grid points on the requested plane
    let res = plane.resolution.max(2);
    let axis = match plane.normal.as_str() {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        other => {
            return Err(
                ConfigError::Invalid(format!("plane normal {other:?}; use x, y or z")).into(),
            )
        }
    };
    let mut points = Vec::with_capacity(res * res);
    for i in 0..res {
        for j in 0..res {
            let u = -plane.half_extent + 2.0 * plane.half_extent * (i as f64) / (res - 1) as f64;
            let v = -plane.half_extent + 2.0 * plane.half_extent * (j as f64) / (res - 1) as f64;
            let mut p = [0.0; 3];
            p[axis] = plane.offset;
            p[(axis + 1) % 3] = u;
            p[(axis + 2) % 3] = v;
            points.push(p);
        }
    }
    let grid = evaluate_field(&sources, &points);
    if grid.tags.iter().all(|t| *t == RegionTag::NearSurface) {
        return Err(ConfigError::Invalid(
            "field plane lies entirely in the near-surface exclusion zone".into(),
        )
        .into());
    }

    let oracle = if plane.compare_oracle {
        match (&ctx.config.geometry, interiors.len()) {
            (GeometrySpec::Icosphere { radius, .. }, 1) => {
                let pair = MediumPair::new(exterior.clone(), interiors[0].clone(), f)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let wave = PlaneWave::new(
                    ctx.config.direction(),
                    c64::new(1.0, 0.0),
                    pair.k_exterior(),
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Some(
                    sphere_series_oracle(&pair, *radius, &wave, &points)
                        .map_err(|e| CliError::Numerical(e.to_string()))?,
                )
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "oracle comparison requires a single icosphere geometry".into(),
                )
                .into())
            }
        }
    } else {
        None
    };

    let mut columns = vec!["x", "y", "z", "re", "im", "abs", "tag"];
    if oracle.is_some() {
        columns.push("oracle_re");
        columns.push("oracle_im");
    }
    let mut rows = Vec::with_capacity(points.len());
    for (i, (p, v)) in grid.points.iter().zip(&grid.values).enumerate() {
        let tag = match grid.tags[i] {
            RegionTag::Exterior => "exterior".to_string(),
            RegionTag::Interior(m) => format!("interior{m}"),
            RegionTag::NearSurface => "near-surface".to_string(),
        };
        let mut row = vec![
            fmt_f(p[0]),
            fmt_f(p[1]),
            fmt_f(p[2]),
            fmt_f(v.re),
            fmt_f(v.im),
            fmt_f(v.norm()),
            tag,
        ];
        if let Some(o) = &oracle {
            row.push(fmt_f(o[i].re));
            row.push(fmt_f(o[i].im));
        }
        rows.push(row);
    }
    announce(&out.write_csv(&format!("field_{}.csv", sys.kind.name()), &columns, &rows)?);

    // per-vertex surface magnitude of the total exterior pressure
    for (m, o) in sys.objects.iter().enumerate() {
        let rows: Vec<Vec<String>> = o
            .space
            .mesh
            .vertices
            .iter()
            .zip(&traces.gamma_d[m])
            .map(|(p, g)| vec![fmt_f(p[0]), fmt_f(p[1]), fmt_f(p[2]), fmt_f(g.norm())])
            .collect();
        announce(&out.write_csv(
            &format!("surface_magnitude_{m}.csv"),
            &["x", "y", "z", "abs_p"],
            &rows,
        )?);
    }
    Ok(())
}
