//! Physical parameters of the scattering media: densities, wavespeeds,
//! wavenumbers and the compressibility relation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum MaterialError {
    #[error("unknown material name: {0}")]
    UnknownName(String),
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
}

/// A homogeneous acoustic medium: mass density in kg/m^3 and wavespeed in m/s.
///
/// Attenuation is not modelled, so wavenumbers are always real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Mass density rho in kg/m^3.
    pub rho: f64,
    /// Wavespeed c in m/s.
    pub c: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, rho: f64, c: f64) -> Result<Self, MaterialError> {
        if !(rho > 0.0) {
            return Err(MaterialError::NonPositive {
                quantity: "density",
                value: rho,
            });
        }
        if !(c > 0.0) {
            return Err(MaterialError::NonPositive {
                quantity: "wavespeed",
                value: c,
            });
        }
        Ok(Self {
            name: name.into(),
            rho,
            c,
        })
    }

    /// Wavenumber k = 2 pi f / c at frequency `f` in Hz.
    pub fn wavenumber(&self, f: f64) -> Result<f64, MaterialError> {
        wavenumber(f, self.c)
    }

    /// Compressibility beta = 1 / (c^2 rho) in 1/Pa.
    pub fn compressibility(&self) -> f64 {
        1.0 / (self.c * self.c * self.rho)
    }
}

/// Wavenumber k = 2 pi f / c.
pub fn wavenumber(f: f64, c: f64) -> Result<f64, MaterialError> {
    if !(f > 0.0) {
        return Err(MaterialError::NonPositive {
            quantity: "frequency",
            value: f,
        });
    }
    if !(c > 0.0) {
        return Err(MaterialError::NonPositive {
            quantity: "wavespeed",
            value: c,
        });
    }
    Ok(2.0 * PI * f / c)
}

/// Wavespeed from the compressibility relation c = 1 / sqrt(beta rho).
pub fn wavespeed_from_compressibility(beta: f64, rho: f64) -> Result<f64, MaterialError> {
    if !(beta > 0.0) {
        return Err(MaterialError::NonPositive {
            quantity: "compressibility",
            value: beta,
        });
    }
    if !(rho > 0.0) {
        return Err(MaterialError::NonPositive {
            quantity: "density",
            value: rho,
        });
    }
    Ok(1.0 / (beta * rho).sqrt())
}

/// Characteristic material parameters commonly found in acoustical engineering.
pub fn builtin_material(name: &str) -> Result<Material, MaterialError> {
    let (rho, c) = match name {
        "air" => (1.225, 340.0),
        "fat" => (917.0, 1412.0),
        "water" => (1025.0, 1500.0),
        "bone" => (1912.0, 4080.0),
        "basalt" => (2740.0, 3350.0),
        "iron" => (7725.0, 4094.0),
        _ => return Err(MaterialError::UnknownName(name.to_string())),
    };
    Material::new(name, rho, c)
}

pub const BUILTIN_NAMES: [&str; 6] = ["air", "fat", "water", "bone", "basalt", "iron"];

/// An exterior/interior material pair at a fixed frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediumPair {
    pub exterior: Material,
    pub interior: Material,
    /// Frequency in Hz.
    pub frequency: f64,
}

impl MediumPair {
    pub fn new(
        exterior: Material,
        interior: Material,
        frequency: f64,
    ) -> Result<Self, MaterialError> {
        if !(frequency > 0.0) {
            return Err(MaterialError::NonPositive {
                quantity: "frequency",
                value: frequency,
            });
        }
        Ok(Self {
            exterior,
            interior,
            frequency,
        })
    }

    /// Exterior wavenumber k_plus.
    pub fn k_exterior(&self) -> f64 {
        2.0 * PI * self.frequency / self.exterior.c
    }

    /// Interior wavenumber k_minus.
    pub fn k_interior(&self) -> f64 {
        2.0 * PI * self.frequency / self.interior.c
    }

    /// Density ratio rho_minus / rho_plus.
    pub fn density_ratio(&self) -> f64 {
        self.interior.rho / self.exterior.rho
    }
}
