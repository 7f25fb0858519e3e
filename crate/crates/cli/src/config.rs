//! Benchmark configuration: JSON file plus command-line overrides.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use transbem::materials::{builtin_material, Material};
use transbem::mesh::{import_msh, make_cube, make_icosphere, SurfaceMesh};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Mesh(#[from] transbem::mesh::MeshError),
    #[error(transparent)]
    Material(#[from] transbem::materials::MaterialError),
}

/// A material is either a built-in name or an explicit (rho, c) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialSpec {
    Name(String),
    Custom {
        name: Option<String>,
        rho: f64,
        c: f64,
    },
}

impl MaterialSpec {
    pub fn resolve(&self) -> Result<Material, ConfigError> {
        match self {
            MaterialSpec::Name(name) => Ok(builtin_material(name)?),
            MaterialSpec::Custom { name, rho, c } => Ok(Material::new(
                name.clone().unwrap_or_else(|| "custom".into()),
                *rho,
                *c,
            )?),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GeometrySpec {
    Icosphere {
        radius: f64,
        level: u32,
    },
    Cube {
        edge: f64,
        target_h: f64,
    },
    Msh {
        path: String,
    },
    /// `count` unit-radius spheres centred at (spacing * j, 0, 0).
    SphereRow {
        radius: f64,
        count: usize,
        spacing: f64,
        level: u32,
    },
}

impl GeometrySpec {
    pub fn build(&self) -> Result<Vec<Arc<SurfaceMesh>>, ConfigError> {
        Ok(match self {
            GeometrySpec::Icosphere { radius, level } => {
                vec![Arc::new(make_icosphere(*radius, *level)?)]
            }
            GeometrySpec::Cube { edge, target_h } => vec![Arc::new(make_cube(*edge, *target_h)?)],
            GeometrySpec::Msh { path } => vec![Arc::new(import_msh(path)?)],
            GeometrySpec::SphereRow {
                radius,
                count,
                spacing,
                level,
            } => {
                let base = make_icosphere(*radius, *level)?;
                (0..*count)
                    .map(|j| Arc::new(base.translated([*spacing * j as f64, 0.0, 0.0])))
                    .collect()
            }
        })
    }

    pub fn describe(&self) -> String {
        match self {
            GeometrySpec::Icosphere { radius, level } => format!("icosphere r={radius} L={level}"),
            GeometrySpec::Cube { edge, target_h } => format!("cube edge={edge} h={target_h}"),
            GeometrySpec::Msh { path } => format!("msh {path}"),
            GeometrySpec::SphereRow {
                radius,
                count,
                spacing,
                level,
            } => {
                format!("{count} spheres r={radius} spacing={spacing} L={level}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    ConstantC,
    ConstantBeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensitySweep {
    pub mode: SweepMode,
    /// Base-10 exponent range of rho_minus / rho_plus; defaults match the
    /// benchmark figures: 1e-4..1e4 over 17 points (constant wavespeed) and
    /// 1e-3..1e3 over 13 points (constant compressibility).
    pub exp_min: Option<f64>,
    pub exp_max: Option<f64>,
    pub points: Option<usize>,
}

impl DensitySweep {
    pub fn ratios(&self) -> Vec<f64> {
        let (lo, hi, n) = match self.mode {
            SweepMode::ConstantC => (
                self.exp_min.unwrap_or(-4.0),
                self.exp_max.unwrap_or(4.0),
                self.points.unwrap_or(17),
            ),
            SweepMode::ConstantBeta => (
                self.exp_min.unwrap_or(-3.0),
                self.exp_max.unwrap_or(3.0),
                self.points.unwrap_or(13),
            ),
        };
        (0..n)
            .map(|i| {
                let t = if n == 1 {
                    0.0
                } else {
                    i as f64 / (n - 1) as f64
                };
                10f64.powf(lo + t * (hi - lo))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencySweep {
    pub min_hz: f64,
    pub max_hz: f64,
    pub points: usize,
    /// Elements per wavelength for mesh regeneration (the stricter medium,
    /// i.e. the larger wavenumber, controls the size).
    pub elements_per_wavelength: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldPlane {
    /// Axis normal to the plane: "x", "y" or "z".
    pub normal: String,
    pub offset: f64,
    /// Half-extent of the square plane around the origin.
    pub half_extent: f64,
    /// Points per side.
    pub resolution: usize,
    /// Add a series-oracle column (single-sphere geometries only).
    #[serde(default)]
    pub compare_oracle: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub geometry: GeometrySpec,
    pub exterior: MaterialSpec,
    /// One interior material, or one per object for multi-object geometry.
    pub interior: Vec<MaterialSpec>,
    pub frequency: Option<f64>,
    #[serde(default)]
    pub formulations: Vec<String>,
    /// Incident direction; defaults to the diagonal (1,1,1)/sqrt(3).
    pub direction: Option<[f64; 3]>,
    /// Complex incident amplitude [re, im]; defaults to 1.
    pub amplitude: Option<[f64; 2]>,
    pub density_sweep: Option<DensitySweep>,
    pub frequency_sweep: Option<FrequencySweep>,
    pub field_plane: Option<FieldPlane>,
    /// Wavenumber pairs (k1, k2) for operator-product spectra.
    #[serde(default)]
    pub operator_products: Vec<[f64; 2]>,
    /// Interior material letters for the multi benchmark: f(at), b(one), i(ron).
    pub materials_string: Option<String>,
    pub output_dir: Option<String>,
    pub budget_gb: Option<f64>,
    pub dense_cap: Option<usize>,
    pub gmres_tol: Option<f64>,
}

impl Config {
    pub fn from_path(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn formulation_kinds(&self) -> Result<Vec<transbem::FormulationKind>, ConfigError> {
        if self.formulations.is_empty() {
            return Err(ConfigError::Invalid("empty formulation list".into()));
        }
        self.formulations
            .iter()
            .map(|s| {
                s.parse::<transbem::FormulationKind>()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            })
            .collect()
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction.unwrap_or({
            let s = 1.0 / 3.0f64.sqrt();
            [s, s, s]
        })
    }

    /// FNV-1a hash of the canonical JSON, tagged into every output file.
    /// The output directory is not part of the scientific configuration.
    pub fn hash(&self) -> String {
        let mut scientific = self.clone();
        scientific.output_dir = None;
        let canon = serde_json::to_string(&scientific).unwrap_or_default();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canon.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// Interior materials of a multi benchmark from the letter string.
pub fn parse_materials_string(s: &str) -> Result<Vec<Material>, ConfigError> {
    s.chars()
        .map(|c| match c {
            'f' => Ok(builtin_material("fat")?),
            'b' => Ok(builtin_material("bone")?),
            'i' => Ok(builtin_material("iron")?),
            other => Err(ConfigError::Invalid(format!(
                "unknown material letter {other:?} (expected f, b or i)"
            ))),
        })
        .collect()
}
