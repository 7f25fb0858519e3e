//! Incident plane waves and their traces, off-surface field evaluation via
//! representation formulas, and the analytic sphere-transmission series used
//! as a validation oracle.

pub mod bessel;

use crate::assembly::{kernels, P1Space};
use crate::geo::{self, Point3};
use crate::materials::MediumPair;
use crate::mesh::SurfaceMesh;
use faer::c64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("series did not converge within {0} modes")]
    SeriesNotConverged(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Plane wave A e^{i k d . x} with unit direction d.
#[derive(Debug, Clone)]
pub struct PlaneWave {
    pub direction: Point3,
    pub amplitude: c64,
    pub k: f64,
}

impl PlaneWave {
    pub fn new(direction: Point3, amplitude: c64, k: f64) -> Result<Self, FieldError> {
        let n = geo::norm(direction);
        if !(n > 0.0) {
            return Err(FieldError::InvalidInput("zero direction vector".into()));
        }
        if !(k > 0.0) {
            return Err(FieldError::InvalidInput(format!(
                "wavenumber must be positive, got {k}"
            )));
        }
        Ok(Self {
            direction: geo::scale(direction, 1.0 / n),
            amplitude,
            k,
        })
    }

    /// The benchmark default: direction (1, 1, 1)/sqrt(3) with unit amplitude.
    pub fn diagonal(k: f64) -> Self {
        let s = 1.0 / 3.0f64.sqrt();
        Self {
            direction: [s, s, s],
            amplitude: c64::new(1.0, 0.0),
            k,
        }
    }

    pub fn value(&self, x: Point3) -> c64 {
        self.amplitude * c64::from_polar(1.0, self.k * geo::dot(self.direction, x))
    }
}

/// Nodal interpolation of the incident Dirichlet and Neumann traces.
/// Vertex normals are area-weighted averages of the adjacent triangle normals.
pub fn incident_traces(wave: &PlaneWave, mesh: &SurfaceMesh) -> (Vec<c64>, Vec<c64>) {
    let normals = mesh.vertex_normals();
    let mut gamma_d = Vec::with_capacity(mesh.vertex_count());
    let mut gamma_n = Vec::with_capacity(mesh.vertex_count());
    for (v, n) in mesh.vertices.iter().zip(&normals) {
        let p = wave.value(*v);
        gamma_d.push(p);
        gamma_n.push(c64::new(0.0, wave.k * geo::dot(wave.direction, *n)) * p);
    }
    (gamma_d, gamma_n)
}

/// Region tag of an evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum RegionTag {
    Exterior,
    /// Inside object with this index.
    Interior(usize),
    /// Closer to a surface than the local mesh size; value not evaluated.
    NearSurface,
}

/// Evaluated complex pressure on a set of points.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub points: Vec<Point3>,
    pub values: Vec<c64>,
    pub tags: Vec<RegionTag>,
}

/// How one object contributes to the exterior scattered field.
#[derive(Debug, Clone)]
pub enum ExteriorContrib {
    /// p_sca += V psi (indirect single-layer representation).
    SingleLayer { psi: Vec<c64> },
    /// p_sca += -K phi (indirect double-layer representation).
    DoubleLayer { phi: Vec<c64> },
    /// p_sca += K gamma_d_sca - V gamma_n_sca (direct exterior representation).
    Direct {
        gamma_d_sca: Vec<c64>,
        gamma_n_sca: Vec<c64>,
    },
}

/// Everything needed to evaluate the acoustic field of a solved transmission
/// problem.
#[derive(Debug, Clone)]
pub struct ScatterSources {
    pub wave: PlaneWave,
    pub k_exterior: f64,
    pub objects: Vec<ObjectSource>,
}

/// Per-object data for field evaluation.
#[derive(Debug, Clone)]
pub struct ObjectSource {
    pub space: Arc<P1Space>,
    pub k_interior: f64,
    /// rho_interior / rho_exterior.
    pub density_ratio: f64,
    pub exterior: ExteriorContrib,
    /// Exterior total traces on this surface, for the interior representation.
    pub gamma_d_total: Vec<c64>,
    pub gamma_n_total: Vec<c64>,
}

/// Single-layer potential of a P1 density evaluated at an off-surface point.
pub fn single_layer_potential(space: &P1Space, coeffs: &[c64], k: f64, x: Point3) -> c64 {
    let rule = crate::quadrature::triangle_gauss(4).unwrap();
    let mesh = &space.mesh;
    let mut total = c64::new(0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(t);
        let area2 = 2.0 * mesh.areas[t];
        for (&(s, tt), &w) in rule.points.iter().zip(&rule.weights) {
            let y = [
                a[0] + s * (b[0] - a[0]) + tt * (c[0] - a[0]),
                a[1] + s * (b[1] - a[1]) + tt * (c[1] - a[1]),
                a[2] + s * (b[2] - a[2]) + tt * (c[2] - a[2]),
            ];
            let density =
                coeffs[tri[0]] * (1.0 - s - tt) + coeffs[tri[1]] * s + coeffs[tri[2]] * tt;
            let r = geo::distance(x, y);
            total += kernels::green(k, r) * density * (w * area2);
        }
    }
    total
}

/// Double-layer potential of a P1 density at an off-surface point.
pub fn double_layer_potential(space: &P1Space, coeffs: &[c64], k: f64, x: Point3) -> c64 {
    let rule = crate::quadrature::triangle_gauss(4).unwrap();
    let mesh = &space.mesh;
    let mut total = c64::new(0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(t);
        let area2 = 2.0 * mesh.areas[t];
        let ny = mesh.normals[t];
        for (&(s, tt), &w) in rule.points.iter().zip(&rule.weights) {
            let y = [
                a[0] + s * (b[0] - a[0]) + tt * (c[0] - a[0]),
                a[1] + s * (b[1] - a[1]) + tt * (c[1] - a[1]),
                a[2] + s * (b[2] - a[2]) + tt * (c[2] - a[2]),
            ];
            let density =
                coeffs[tri[0]] * (1.0 - s - tt) + coeffs[tri[1]] * s + coeffs[tri[2]] * tt;
            let r = geo::distance(x, y);
            let dn = geo::dot(geo::sub(y, x), ny);
            total += kernels::grad_scale(k, r) * dn * density * (w * area2);
        }
    }
    total
}

/// Evaluates the total pressure at the given points. Points within one local
/// mesh size of a surface are tagged and skipped; interior points use the
/// direct interior representation with traces mapped through the transmission
/// conditions; exterior points add the incident wave to the scattered
/// representation.
pub fn evaluate_field(sources: &ScatterSources, points: &[Point3]) -> FieldGrid {
    let exclusion: Vec<f64> = sources
        .objects
        .iter()
        .map(|o| o.space.mesh.quality(1.0).map(|q| q.max_edge).unwrap_or(0.0))
        .collect();

    let results: Vec<(c64, RegionTag)> = points
        .par_iter()
        .map(|&x| {
            for (m, obj) in sources.objects.iter().enumerate() {
                if obj.space.mesh.distance_to_vertices(x) < exclusion[m] {
                    return (c64::new(0.0, 0.0), RegionTag::NearSurface);
                }
            }
            for (m, obj) in sources.objects.iter().enumerate() {
                if obj.space.mesh.contains(x) {
                    // interior traces via the transmission conditions
                    let phi = &obj.gamma_d_total;
                    let psi: Vec<c64> = obj
                        .gamma_n_total
                        .iter()
                        .map(|g| g * obj.density_ratio)
                        .collect();
                    let p = single_layer_potential(&obj.space, &psi, obj.k_interior, x)
                        - double_layer_potential(&obj.space, phi, obj.k_interior, x);
                    return (p, RegionTag::Interior(m));
                }
            }
            let mut p = sources.wave.value(x);
            for obj in &sources.objects {
                p += match &obj.exterior {
                    ExteriorContrib::SingleLayer { psi } => {
                        single_layer_potential(&obj.space, psi, sources.k_exterior, x)
                    }
                    ExteriorContrib::DoubleLayer { phi } => {
                        -double_layer_potential(&obj.space, phi, sources.k_exterior, x)
                    }
                    ExteriorContrib::Direct {
                        gamma_d_sca,
                        gamma_n_sca,
                    } => {
                        double_layer_potential(&obj.space, gamma_d_sca, sources.k_exterior, x)
                            - single_layer_potential(&obj.space, gamma_n_sca, sources.k_exterior, x)
                    }
                };
            }
            (p, RegionTag::Exterior)
        })
        .collect();

    FieldGrid {
        points: points.to_vec(),
        values: results.iter().map(|r| r.0).collect(),
        tags: results.iter().map(|r| r.1).collect(),
    }
}

/// Maximum partial-wave order attempted by the series oracle.
pub const SERIES_MODE_CAP: usize = 200;

/// Scattering and transmission coefficients of the fluid-fluid sphere, per
/// partial-wave order. Enforces pressure continuity and density-weighted
/// normal-velocity continuity at the interface.
pub fn sphere_series_coefficients(
    pair: &MediumPair,
    radius: f64,
    n_modes: usize,
) -> (Vec<c64>, Vec<c64>) {
    let kp = pair.k_exterior();
    let km = pair.k_interior();
    let xp = kp * radius;
    let xm = km * radius;
    let alpha = kp / pair.exterior.rho;
    let beta = km / pair.interior.rho;

    let (j_p, jp_p) = bessel::spherical_jn(n_modes, xp);
    let (y_p, yp_p) = bessel::spherical_yn(n_modes, xp);
    let (j_m, jp_m) = bessel::spherical_jn(n_modes, xm);

    let mut a = Vec::with_capacity(n_modes + 1);
    let mut b = Vec::with_capacity(n_modes + 1);
    for n in 0..=n_modes {
        let h = c64::new(j_p[n], y_p[n]);
        let hp = c64::new(jp_p[n], yp_p[n]);
        let denom = alpha * hp * j_m[n] - beta * h * jp_m[n];
        let an = (beta * j_p[n] * jp_m[n] - alpha * jp_p[n] * j_m[n]) / denom;
        // b_n = i alpha / (x_p^2 denom), using the Wronskian j h' - j' h = i / x^2.
        let bn = c64::new(0.0, alpha) / (xp * xp * denom);
        a.push(an);
        b.push(bn);
    }
    (a, b)
}

/// Truncation order: modes are added until the scattering coefficients drop
/// below 1e-12 of the largest one. The interior series converges through
/// j_n(k_int r), so the order is floored by the interior size parameter.
fn series_order(pair: &MediumPair, radius: f64) -> Result<usize, FieldError> {
    let (a, _) = sphere_series_coefficients(pair, radius, SERIES_MODE_CAP);
    let largest = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let floor = (pair.k_interior() * radius).ceil() as usize + 12;
    if floor >= SERIES_MODE_CAP {
        return Err(FieldError::SeriesNotConverged(SERIES_MODE_CAP));
    }
    if largest == 0.0 {
        return Ok(floor); // zero contrast: no scattering
    }
    let mut order = None;
    for n in (0..a.len()).rev() {
        if a[n].norm() > 1e-12 * largest {
            order = Some(n);
            break;
        }
    }
    match order {
        Some(n) if n + 2 < SERIES_MODE_CAP => Ok((n + 2).max(floor)),
        _ => Err(FieldError::SeriesNotConverged(SERIES_MODE_CAP)),
    }
}

/// Partial-wave evaluation of the exact transmission solution for a plane
/// wave hitting a sphere of the given radius centred at the origin.
pub fn sphere_series_oracle(
    pair: &MediumPair,
    radius: f64,
    wave: &PlaneWave,
    points: &[Point3],
) -> Result<Vec<c64>, FieldError> {
    if !(radius > 0.0) {
        return Err(FieldError::InvalidInput("radius must be positive".into()));
    }
    let nmax = series_order(pair, radius)?;
    let (a, b) = sphere_series_coefficients(pair, radius, nmax);
    let kp = pair.k_exterior();
    let km = pair.k_interior();

    let values = points
        .par_iter()
        .map(|&x| {
            let r = geo::norm(x);
            let cos_gamma = if r > 0.0 {
                geo::dot(wave.direction, x) / r
            } else {
                1.0
            };
            let pn = bessel::legendre_p(nmax, cos_gamma.clamp(-1.0, 1.0));
            let mut i_pow = c64::new(1.0, 0.0);
            if r >= radius {
                // incident part in closed form, scattered part as a series
                let (jr, _) = bessel::spherical_jn(nmax, kp * r);
                let (yr, _) = bessel::spherical_yn(nmax, kp * r);
                let mut sca = c64::new(0.0, 0.0);
                for n in 0..=nmax {
                    let h = c64::new(jr[n], yr[n]);
                    sca += (2.0 * n as f64 + 1.0) * i_pow * a[n] * h * pn[n];
                    i_pow *= c64::new(0.0, 1.0);
                }
                wave.value(x) + sca * wave.amplitude
            } else {
                let (jr, _) = bessel::spherical_jn(nmax, km * r);
                let mut total = c64::new(0.0, 0.0);
                for n in 0..=nmax {
                    total += (2.0 * n as f64 + 1.0) * i_pow * b[n] * jr[n] * pn[n];
                    i_pow *= c64::new(0.0, 1.0);
                }
                total * wave.amplitude
            }
        })
        .collect();
    Ok(values)
}

/// Resonance wavenumbers of a rigid unit cube: pi sqrt(nx^2 + ny^2 + nz^2)
/// for nx, ny, nz >= 1, sorted with multiplicity.
pub fn cube_resonances(k_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if k_max <= 0.0 {
        return out;
    }
    let nmax = (k_max / PI).floor() as usize + 1;
    for nx in 1..=nmax {
        for ny in 1..=nmax {
            for nz in 1..=nmax {
                let k = PI * ((nx * nx + ny * ny + nz * nz) as f64).sqrt();
                if k <= k_max {
                    out.push(k);
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}
