//! Quadrature rules for Galerkin pair integrals on triangles.
//!
//! Regular (disjoint) pairs use a symmetric Gauss rule on each triangle.
//! Coincident, edge-adjacent and vertex-adjacent pairs use regularizing
//! coordinate transformations: the pair domain is decomposed into relative
//! coordinates around the singular set and each subdomain is pulled back to
//! the unit 4-cube with a Duffy-type substitution, so that the Jacobian
//! cancels the 1/r kernel singularity exactly. Tensor Gauss-Legendre points
//! are then placed on the cube.
//!
//! Triangle parametrizations used here:
//! - regular rules live on the unit triangle U = {(s, t) : s, t >= 0, s + t <= 1}
//!   with shape functions (1 - s - t, s, t);
//! - singular rules live on the ordered simplex T = {(w1, w2) : 0 <= w2 <= w1 <= 1}
//!   with chart x = A + w1 (B - A) + w2 (C - B) and shape functions
//!   (1 - w1, w1 - w2, w2) for chart vertices (A, B, C).

use std::sync::OnceLock;

#[derive(Debug, thiserror::Error)]
pub enum QuadratureError {
    #[error("unsupported triangle rule degree {0} (available: 1, 2, 4, 6)")]
    UnsupportedDegree(usize),
    #[error("quadrature degeneracy: {0}")]
    Degenerate(String),
}

/// Symmetric Gauss rule on the unit triangle U; weights sum to the reference
/// area 1/2, so physical integrals scale by twice the triangle area.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Dunavant symmetric rules. Weights in the tables sum to one and are halved
/// to match the reference measure.
pub fn triangle_gauss(degree: usize) -> Result<TriangleRule, QuadratureError> {
    let (points, weights): (Vec<(f64, f64)>, Vec<f64>) = match degree {
        1 => (vec![(1.0 / 3.0, 1.0 / 3.0)], vec![1.0]),
        2 => {
            let a = 1.0 / 6.0;
            let b = 2.0 / 3.0;
            (
                vec![(a, a), (b, a), (a, b)],
                vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            )
        }
        4 => {
            let a = 0.445948490915965;
            let wa = 0.223381589678011;
            let b = 0.091576213509771;
            let wb = 0.109951743655322;
            (
                vec![
                    (a, a),
                    (1.0 - 2.0 * a, a),
                    (a, 1.0 - 2.0 * a),
                    (b, b),
                    (1.0 - 2.0 * b, b),
                    (b, 1.0 - 2.0 * b),
                ],
                vec![wa, wa, wa, wb, wb, wb],
            )
        }
        6 => {
            let a = 0.249286745170910;
            let wa = 0.116786275726379;
            let b = 0.063089014491502;
            let wb = 0.050844906370207;
            let c = 0.310352451033785;
            let d = 0.053145049844816;
            let wc = 0.082851075618374;
            (
                vec![
                    (a, a),
                    (1.0 - 2.0 * a, a),
                    (a, 1.0 - 2.0 * a),
                    (b, b),
                    (1.0 - 2.0 * b, b),
                    (b, 1.0 - 2.0 * b),
                    (c, d),
                    (d, c),
                    (1.0 - c - d, c),
                    (c, 1.0 - c - d),
                    (d, 1.0 - c - d),
                    (1.0 - c - d, d),
                ],
                vec![wa, wa, wa, wb, wb, wb, wc, wc, wc, wc, wc, wc],
            )
        }
        _ => return Err(QuadratureError::UnsupportedDegree(degree)),
    };
    let weights = weights.into_iter().map(|w| 0.5 * w).collect();
    Ok(TriangleRule {
        points,
        weights,
        degree,
    })
}

/// Gauss-Legendre nodes and weights on [0, 1], by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// One 4D quadrature point of a singular pair rule: test and trial parameters
/// on the ordered simplex T plus the transformed weight (physical Jacobians
/// excluded).
#[derive(Debug, Clone, Copy)]
pub struct PairPoint {
    pub test: (f64, f64),
    pub trial: (f64, f64),
    pub weight: f64,
}

/// Precomputed singular rules for the three adjacent-pair classes.
#[derive(Debug, Clone)]
pub struct SingularRules {
    pub coincident: Vec<PairPoint>,
    pub edge: Vec<PairPoint>,
    pub vertex: Vec<PairPoint>,
    pub order: usize,
}

impl SingularRules {
    /// Builds the rules with `order` Gauss-Legendre points per cube dimension.
    pub fn with_order(order: usize) -> Self {
        let (g, w) = gauss_legendre_01(order);
        let mut coincident = Vec::new();
        let mut edge = Vec::new();
        let mut vertex = Vec::new();
        // Tensor loop over the unit 4-cube; each subdomain below contributes
        // one transformed point pair per orientation.
        for (i0, &a) in g.iter().enumerate() {
            for (i1, &b) in g.iter().enumerate() {
                for (i2, &c) in g.iter().enumerate() {
                    for (i3, &d) in g.iter().enumerate() {
                        let gw = w[i0] * w[i1] * w[i2] * w[i3];
                        coincident_point(a, b, c, d, gw, &mut coincident);
                        edge_point(a, b, c, d, gw, &mut edge);
                        vertex_point(a, b, c, d, gw, &mut vertex);
                    }
                }
            }
        }
        Self {
            coincident,
            edge,
            vertex,
            order,
        }
    }

    /// Shared default-order rules (order 4 per dimension).
    pub fn default_rules() -> &'static SingularRules {
        static RULES: OnceLock<SingularRules> = OnceLock::new();
        RULES.get_or_init(|| SingularRules::with_order(4))
    }
}

fn push_both(out: &mut Vec<PairPoint>, x: (f64, f64), y: (f64, f64), weight: f64) {
    out.push(PairPoint {
        test: x,
        trial: y,
        weight,
    });
    out.push(PairPoint {
        test: y,
        trial: x,
        weight,
    });
}

/// Coincident panels: relative coordinate z = x - y decomposed into four
/// sectors of the z-plane; the mirrored sectors are covered by the swapped
/// orientation emitted for every point.
fn coincident_point(xi: f64, eta: f64, u: f64, v: f64, gw: f64, out: &mut Vec<PairPoint>) {
    // Sector A: z = (xi, xi eta); y-domain 0 <= y2 <= y1 <= 1 - xi.
    {
        let y = ((1.0 - xi) * u, (1.0 - xi) * u * v);
        let z = (xi, xi * eta);
        let w = gw * xi * (1.0 - xi) * (1.0 - xi) * u;
        push_both(out, (y.0 + z.0, y.1 + z.1), y, w);
    }
    // Sector B: z = (xi eta, xi); y1 in [xi (1 - eta), 1 - xi eta].
    {
        let y1 = xi * (1.0 - eta) + u * (1.0 - xi);
        let y = (y1, u * v * (1.0 - xi));
        let z = (xi * eta, xi);
        let w = gw * xi * (1.0 - xi) * (1.0 - xi) * u;
        push_both(out, (y.0 + z.0, y.1 + z.1), y, w);
    }
    // Sectors C: z1 <= 0 <= z2, split by |z1| vs z2 and rescaled so the
    // radial variable zeta spans [0, 1] exactly.
    {
        let s = 1.0 + eta;
        let zeta = xi;
        let y1 = zeta + u * (1.0 - zeta);
        let y = (y1, u * v * (1.0 - zeta));
        let w = gw * zeta / (s * s) * u * (1.0 - zeta) * (1.0 - zeta);
        // C1: |z1| <= z2
        let z = (-zeta * eta / s, zeta / s);
        push_both(out, (y.0 + z.0, y.1 + z.1), y, w);
        // C2: z2 <= |z1|
        let z = (-zeta / s, zeta * eta / s);
        push_both(out, (y.0 + z.0, y.1 + z.1), y, w);
    }
}

/// Edge-adjacent panels, charts oriented so the shared edge is w2 = 0 of both
/// simplices. The singular directions (x1 - y1, x2, y2) are Duffy-decomposed
/// by their maximum; the x1 - y1 < 0 half is covered by the swapped
/// orientation.
fn edge_point(a: f64, b: f64, u: f64, zeta: f64, gw: f64, out: &mut Vec<PairPoint>) {
    // E1: distance along the shared edge dominates.
    {
        let s = 1.0 + b;
        let d = zeta / s;
        let (x2, y2) = (zeta * a / s, zeta * b / s);
        let y1 = y2 + u * (1.0 - zeta);
        let w = gw * zeta * zeta * (1.0 - zeta) / (s * s * s);
        push_both(out, (y1 + d, x2), (y1, y2), w);
    }
    // E2a: x2 dominates, y2 <= (1 - a) scaled.
    {
        let d = zeta * a;
        let (x2, y2) = (zeta, zeta * (1.0 - a) * b);
        let y1 = zeta * (1.0 - a) + u * (1.0 - zeta);
        let w = gw * zeta * zeta * (1.0 - a) * (1.0 - zeta);
        push_both(out, (y1 + d, x2), (y1, y2), w);
    }
    // E2b: x2 dominates, y2 between (1 - a)-scaled and full.
    {
        let s = 1.0 + b * (1.0 - a);
        let xi = zeta / s;
        let d = xi * (1.0 - b * a);
        let (x2, y2) = (xi, xi * b);
        let y1 = zeta * b / s + u * (1.0 - zeta);
        let w = gw * zeta * zeta * b * (1.0 - zeta) / (s * s * s);
        push_both(out, (y1 + d, x2), (y1, y2), w);
    }
    // E3: y2 dominates.
    {
        let s = 1.0 + a;
        let xi = zeta / s;
        let d = xi * a;
        let (x2, y2) = (xi * b, xi);
        let y1 = xi + u * (1.0 - zeta);
        let w = gw * zeta * zeta * (1.0 - zeta) / (s * s * s);
        push_both(out, (y1 + d, x2), (y1, y2), w);
    }
}

/// Vertex-adjacent panels, charts oriented so the shared vertex is the origin
/// of both simplices. Joint Duffy scaling with the larger first coordinate
/// factored out; the mirrored half comes from the swapped orientation.
fn vertex_point(xi: f64, eta: f64, a: f64, b: f64, gw: f64, out: &mut Vec<PairPoint>) {
    let x = (xi, xi * a);
    let y = (xi * eta, xi * eta * b);
    let w = gw * xi * xi * xi * eta;
    push_both(out, x, y, w);
}

/// Shape functions on the ordered simplex T for chart vertices (A, B, C).
#[inline]
pub fn simplex_shape(w1: f64, w2: f64) -> [f64; 3] {
    [1.0 - w1, w1 - w2, w2]
}

/// Shape functions on the unit triangle U for vertices (v0, v1, v2).
#[inline]
pub fn unit_shape(s: f64, t: f64) -> [f64; 3] {
    [1.0 - s - t, s, t]
}
