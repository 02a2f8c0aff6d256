//! Rest-state precomputation at quadrature points and runtime evaluation of
//! the deformation gradient and surface Laplacian; mass matrix assembly and
//! lumping.
//!
//! The material map from parametric `(u, v)` to material coordinates
//! `(X1, X2)` is inverted through the inverse function theorem. First-order
//! inverse derivatives come from the 2x2 Jacobian inverse; second-order
//! terms from differentiating that inverse through the spline's second
//! derivatives. Everything depends only on the rest shape and is computed
//! once.

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::quadrature::{QuadRule, RuleKind};
use crate::spline::{SplineSheet, STENCIL_EPS};

/// Basis value and derivatives of one stencil entry at a quadrature point.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasisData {
    pub n: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub dvv: f64,
    pub duv: f64,
}

/// First- and second-order derivatives of the parametric coordinates with
/// respect to material coordinates, e.g. `u1 = du/dX1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct InverseMap {
    pub u1: f64,
    pub u2: f64,
    pub v1: f64,
    pub v2: f64,
    pub u11: f64,
    pub u22: f64,
    pub u12: f64,
    pub v11: f64,
    pub v22: f64,
    pub v12: f64,
}

/// A quadrature site with precomputed rest-state quantities. `weight` is
/// the physical area weight (parametric weight times the material Jacobian
/// determinant).
#[derive(Debug, Clone)]
pub struct QuadPoint {
    pub u: f64,
    pub v: f64,
    pub weight: f64,
    /// Sheet-local control indices whose basis data is nonzero for the
    /// quantities this rule uses.
    pub stencil: Vec<u32>,
    pub basis: Vec<BasisData>,
    pub inv_map: InverseMap,
    /// Per-stencil `(dN/dX1, dN/dX2)`.
    pub grad_coeffs: Vec<Vector2<f64>>,
    /// Per-stencil scalar coefficients of the material-space Laplacian.
    pub lap_coeffs: Vec<f64>,
}

/// Lumped mass with the consistent total retained for bookkeeping.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    /// Per-control-point mass in kg.
    pub lumped: Vec<f64>,
    /// Total mass of the consistent matrix in kg.
    pub consistent_total: f64,
}

fn material_jacobians(
    sheet: &SplineSheet,
    entries: &[(u32, BasisData)],
) -> (Matrix2<f64>, Matrix2<f64>, Matrix2<f64>) {
    let mut j = Matrix2::zeros(); // dX/d(u,v)
    let mut ju = Matrix2::zeros(); // d/du of J
    let mut jv = Matrix2::zeros(); // d/dv of J
    for &(a, b) in entries {
        let x = sheet.material_cp[a as usize];
        j[(0, 0)] += b.du * x.x;
        j[(0, 1)] += b.dv * x.x;
        j[(1, 0)] += b.du * x.y;
        j[(1, 1)] += b.dv * x.y;
        ju[(0, 0)] += b.duu * x.x;
        ju[(0, 1)] += b.duv * x.x;
        ju[(1, 0)] += b.duu * x.y;
        ju[(1, 1)] += b.duv * x.y;
        jv[(0, 0)] += b.duv * x.x;
        jv[(0, 1)] += b.dvv * x.x;
        jv[(1, 0)] += b.duv * x.y;
        jv[(1, 1)] += b.dvv * x.y;
    }
    (j, ju, jv)
}

fn keep_entry(kind: RuleKind, b: &BasisData) -> bool {
    match kind {
        RuleKind::Mass => b.n.abs() > STENCIL_EPS,
        RuleKind::Membrane => {
            b.n.abs() > STENCIL_EPS || b.du.abs() > STENCIL_EPS || b.dv.abs() > STENCIL_EPS
        }
        RuleKind::Bending => {
            b.n.abs() > STENCIL_EPS
                || b.du.abs() > STENCIL_EPS
                || b.dv.abs() > STENCIL_EPS
                || b.duu.abs() > STENCIL_EPS
                || b.dvv.abs() > STENCIL_EPS
                || b.duv.abs() > STENCIL_EPS
        }
    }
}

fn precompute_one(sheet: &SplineSheet, kind: RuleKind, site: &crate::quadrature::QuadSite, det_floor: f64) -> Result<QuadPoint> {
    let bu = sheet.knots_u.active_basis(site.u)?;
    let bv = sheet.knots_v.active_basis(site.v)?;
    // Full candidate set first: the material Jacobian and its derivatives
    // need every entry, including ones whose only nonzero data is a second
    // derivative. Rule-specific pruning happens afterwards.
    let mut candidates: Vec<(u32, BasisData)> = Vec::with_capacity(9);
    for (ku, &(n_u, du_u, duu_u)) in bu.rows.iter().enumerate() {
        for (kv, &(n_v, dv_v, dvv_v)) in bv.rows.iter().enumerate() {
            let b = BasisData {
                n: n_u * n_v,
                du: du_u * n_v,
                dv: n_u * dv_v,
                duu: duu_u * n_v,
                dvv: n_u * dvv_v,
                duv: du_u * dv_v,
            };
            let a = sheet.cp_index(bu.first + ku, bv.first + kv) as u32;
            candidates.push((a, b));
        }
    }

    let (j, ju, jv) = material_jacobians(sheet, &candidates);
    let det = j.determinant();
    if det.abs() < det_floor {
        return Err(SimError::DegenerateGeometry(format!(
            "material Jacobian determinant {det:.3e} below floor {det_floor:.3e} \
             at quadrature point ({}, {})",
            site.u, site.v
        )));
    }
    if det <= 0.0 {
        return Err(SimError::DegenerateGeometry(format!(
            "material map is orientation-reversing (det = {det:.3e}) at ({}, {})",
            site.u, site.v
        )));
    }

    let jinv = Matrix2::new(j[(1, 1)], -j[(0, 1)], -j[(1, 0)], j[(0, 0)]) / det;
    let (u1, u2, v1, v2) = (jinv[(0, 0)], jinv[(0, 1)], jinv[(1, 0)], jinv[(1, 1)]);

    // d(Jinv)/dX_g = -Jinv (J_u u_g + J_v v_g) Jinv
    let k1 = -jinv * (ju * u1 + jv * v1) * jinv;
    let k2 = -jinv * (ju * u2 + jv * v2) * jinv;
    let inv_map = InverseMap {
        u1,
        u2,
        v1,
        v2,
        u11: k1[(0, 0)],
        u12: k2[(0, 0)],
        u22: k2[(0, 1)],
        v11: k1[(1, 0)],
        v12: k2[(1, 0)],
        v22: k2[(1, 1)],
    };

    let lap_u = inv_map.u1 * inv_map.u1 + inv_map.u2 * inv_map.u2;
    let lap_v = inv_map.v1 * inv_map.v1 + inv_map.v2 * inv_map.v2;
    let lap_du = inv_map.u11 + inv_map.u22;
    let lap_dv = inv_map.v11 + inv_map.v22;
    let lap_uv = 2.0 * (inv_map.u1 * inv_map.v1 + inv_map.u2 * inv_map.v2);

    let mut stencil = Vec::with_capacity(candidates.len());
    let mut basis = Vec::with_capacity(candidates.len());
    let mut grad_coeffs = Vec::with_capacity(candidates.len());
    let mut lap_coeffs = Vec::with_capacity(candidates.len());
    for (a, b) in &candidates {
        if !keep_entry(kind, b) {
            continue;
        }
        stencil.push(*a);
        basis.push(*b);
        grad_coeffs.push(Vector2::new(
            b.du * inv_map.u1 + b.dv * inv_map.v1,
            b.du * inv_map.u2 + b.dv * inv_map.v2,
        ));
        lap_coeffs.push(
            lap_u * b.duu + lap_v * b.dvv + lap_du * b.du + lap_dv * b.dv + lap_uv * b.duv,
        );
    }

    Ok(QuadPoint {
        u: site.u,
        v: site.v,
        weight: site.weight * det,
        stencil,
        basis,
        inv_map,
        grad_coeffs,
        lap_coeffs,
    })
}

/// Precompute rest-state data for every point of `rule`. Fails if the
/// material map is degenerate anywhere.
pub fn precompute_quadpoints(sheet: &SplineSheet, rule: &QuadRule) -> Result<Vec<QuadPoint>> {
    // Degeneracy floor scales with the squared typical span size of the
    // material grid.
    let (mut lo, mut hi) = (
        Vector2::new(f64::INFINITY, f64::INFINITY),
        Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in &sheet.material_cp {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let spans = (sheet.knots_u.span_count() * sheet.knots_v.span_count()) as f64;
    let span_size_sq = ((hi.x - lo.x) * (hi.y - lo.y) / spans).abs().max(f64::MIN_POSITIVE);
    let det_floor = 1e-12 * span_size_sq;

    rule.points
        .par_iter()
        .map(|site| precompute_one(sheet, rule.kind, site, det_floor))
        .collect()
}

/// In-plane deformation gradient `F = d(world)/d(material)` at `qp`.
pub fn deformation_gradient(qp: &QuadPoint, world_cp: &[Vector3<f64>]) -> Matrix3x2<f64> {
    let mut f = Matrix3x2::zeros();
    for (s, &a) in qp.stencil.iter().enumerate() {
        let c = world_cp[a as usize];
        let g = qp.grad_coeffs[s];
        for r in 0..3 {
            f[(r, 0)] += c[r] * g.x;
            f[(r, 1)] += c[r] * g.y;
        }
    }
    f
}

/// Material-space Laplacian of the world map at `qp`.
pub fn surface_laplacian(qp: &QuadPoint, world_cp: &[Vector3<f64>]) -> Vector3<f64> {
    let mut lap = Vector3::zeros();
    for (s, &a) in qp.stencil.iter().enumerate() {
        lap += qp.lap_coeffs[s] * world_cp[a as usize];
    }
    lap
}

/// Consistent mass integrated with `rule`, lumped by row sums.
/// `density` is volumetric (kg/m^3); `thickness` in meters.
pub fn build_mass(
    sheet: &SplineSheet,
    rule_points: &[QuadPoint],
    density: f64,
    thickness: f64,
) -> Result<MassMatrix> {
    let areal = density * thickness;
    let mut lumped = vec![0.0; sheet.point_count()];
    let mut consistent_total = 0.0;
    for qp in rule_points {
        let row_weight: f64 = qp.basis.iter().map(|b| b.n).sum();
        for (s, &a) in qp.stencil.iter().enumerate() {
            // Row sum of consistent entries: integral of rho*h*N_a*sum_b N_b.
            let m = qp.weight * areal * qp.basis[s].n * row_weight;
            lumped[a as usize] += m;
            consistent_total += m;
        }
    }
    for (a, m) in lumped.iter().enumerate() {
        if *m <= 0.0 {
            return Err(SimError::Discretization(format!(
                "non-positive lumped mass {m:.3e} at control point {a}"
            )));
        }
    }
    Ok(MassMatrix {
        lumped,
        consistent_total,
    })
}
