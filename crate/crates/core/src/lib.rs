//! Galerkin boundary element library for 3D acoustic transmission through
//! penetrable homogeneous objects, with boundary integral formulations whose
//! spectra stay well conditioned at high density contrast.
//!
//! The crate assembles the four Helmholtz boundary integral operators on
//! continuous P1 spaces, builds the high-contrast Neumann/Dirichlet systems
//! alongside the PMCHWT, Mueller and Calderon-preconditioned PMCHWT
//! formulations, solves them with non-restarted GMRES, and analyses their
//! spectra against the predicted eigenvalue accumulation points.

pub mod assembly;
pub mod fields;
pub mod formulations;
pub mod geo;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod quadrature;
pub mod spectral;

pub use assembly::{
    assemble, greens_kernel, mass_matrix, strong_form, AssemblyOptions, OperatorKind,
    OperatorMatrix, P1Space,
};
pub use fields::{
    cube_resonances, evaluate_field, incident_traces, sphere_series_oracle, FieldGrid, PlaneWave,
};
pub use formulations::{
    build, build_multiple, FormulationKind, FormulationSystem, OperatorCache, SolutionTraces,
};
pub use linalg::{condition_number, eigenvalues, gmres, GmresReport, SpectrumResult};
pub use materials::{
    builtin_material, wavenumber, wavespeed_from_compressibility, Material, MediumPair,
};
pub use mesh::{import_msh, make_cube, make_icosphere, MeshQuality, SurfaceMesh};
pub use spectral::{
    accumulation_points, cluster_metrics, spectral_report, SpectralPrediction, SpectralReport,
};
