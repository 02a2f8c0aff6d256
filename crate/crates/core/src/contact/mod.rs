//! Proximity detection on embedded meshes and analytic colliders,
//! log-barrier contact energy with exact derivatives on mesh vertices,
//! pullback to control points, and continuous-collision step-size
//! filtering.

pub mod broadphase;
pub mod ccd;
pub mod distance;
pub mod dual2;

use nalgebra::{DMatrix, Vector3};

use crate::elasticity::{project_psd, LocalSystem};
use crate::error::{Result, SimError};
use distance::{edge_edge_distance, eval_form, point_triangle_distance, DistanceForm};
use dual2::{Dual12, DualV3};

/// Barrier activation distance and stiffness.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContactParams {
    /// Activation distance in meters.
    pub dhat: f64,
    /// Barrier stiffness in Pa.
    pub kappa: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            dhat: 1e-3,
            kappa: 1e5,
        }
    }
}

/// Analytic collider at its current pose.
#[derive(Debug, Clone, Copy)]
pub enum Collider {
    Plane {
        point: Vector3<f64>,
        /// Unit outward normal; cloth stays on the positive side.
        normal: Vector3<f64>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
}

impl Collider {
    pub fn distance(&self, x: &Vector3<f64>) -> f64 {
        match self {
            Collider::Plane { point, normal } => (x - point).dot(normal),
            Collider::Sphere { center, radius } => (x - center).norm() - radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ContactKind {
    VertexTriangle,
    EdgeEdge,
    VertexPlane(u32),
    VertexSphere(u32),
}

/// An active proximity pair with its barrier derivatives on the involved
/// vertex coordinates (filled by `barrier_local`).
#[derive(Debug, Clone)]
pub struct ContactPair {
    pub kind: ContactKind,
    /// Global embedded-mesh vertex ids (1, 2, or 4 of them).
    pub verts: Vec<u32>,
    /// Active closed-form squared distance for mesh-mesh pairs.
    pub form: Option<DistanceForm>,
    pub distance: f64,
    pub grad: Vec<Vector3<f64>>,
    pub hess: DMatrix<f64>,
}

/// Mesh connectivity over globally-numbered embedded vertices.
#[derive(Debug, Clone, Default)]
pub struct ContactTopology {
    pub triangles: Vec<[u32; 3]>,
    pub edges: Vec<[u32; 2]>,
}

/// The clamped log-barrier `b(d) = -kappa (d - dhat)^2 ln(d / dhat)` on
/// `(0, dhat)`, zero at and beyond the activation distance.
pub fn barrier_energy(d: f64, params: &ContactParams) -> f64 {
    if d >= params.dhat {
        return 0.0;
    }
    let t = d - params.dhat;
    -params.kappa * t * t * (d / params.dhat).ln()
}

fn barrier_dual(d: Dual12, params: &ContactParams) -> Dual12 {
    let t = d - Dual12::constant(params.dhat);
    -params.kappa * (t * t * (d / Dual12::constant(params.dhat)).ln())
}

/// All vertex-triangle and edge-edge pairs (excluding topologically
/// adjacent primitives) with distance below `dhat`, plus vertex pairs
/// against analytic colliders. Pair order is deterministic.
pub fn find_active_pairs(
    positions: &[Vector3<f64>],
    topology: &ContactTopology,
    colliders: &[Collider],
    dhat: f64,
) -> Result<Vec<ContactPair>> {
    for (i, p) in positions.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() || !p.z.is_finite() {
            return Err(SimError::NonFinite(format!(
                "embedded vertex {i} is not finite"
            )));
        }
    }
    let cands = broadphase::candidates(
        positions,
        None,
        &topology.triangles,
        &topology.edges,
        dhat,
    );
    let mut pairs = Vec::new();
    let fatal = |d: f64, what: String| -> SimError {
        SimError::Interpenetration(format!("{what} at non-positive distance {d:.3e}"))
    };
    for &(v, ti) in &cands.vertex_triangle {
        let t = topology.triangles[ti as usize];
        let (d, form) = point_triangle_distance(
            &positions[v as usize],
            &positions[t[0] as usize],
            &positions[t[1] as usize],
            &positions[t[2] as usize],
        );
        if d >= dhat {
            continue;
        }
        if d <= 0.0 {
            return Err(fatal(d, format!("vertex {v} / triangle {ti}")));
        }
        pairs.push(ContactPair {
            kind: ContactKind::VertexTriangle,
            verts: vec![v, t[0], t[1], t[2]],
            form: Some(form),
            distance: d,
            grad: Vec::new(),
            hess: DMatrix::zeros(0, 0),
        });
    }
    for &(ea, eb) in &cands.edge_edge {
        let a = topology.edges[ea as usize];
        let b = topology.edges[eb as usize];
        let (d, form) = edge_edge_distance(
            &positions[a[0] as usize],
            &positions[a[1] as usize],
            &positions[b[0] as usize],
            &positions[b[1] as usize],
        );
        if d >= dhat {
            continue;
        }
        if d <= 0.0 {
            return Err(fatal(d, format!("edge {ea} / edge {eb}")));
        }
        pairs.push(ContactPair {
            kind: ContactKind::EdgeEdge,
            verts: vec![a[0], a[1], b[0], b[1]],
            form: Some(form),
            distance: d,
            grad: Vec::new(),
            hess: DMatrix::zeros(0, 0),
        });
    }
    for (ci, collider) in colliders.iter().enumerate() {
        for (v, p) in positions.iter().enumerate() {
            let d = collider.distance(p);
            if d >= dhat {
                continue;
            }
            if d <= 0.0 {
                return Err(fatal(d, format!("vertex {v} / collider {ci}")));
            }
            let kind = match collider {
                Collider::Plane { .. } => ContactKind::VertexPlane(ci as u32),
                Collider::Sphere { .. } => ContactKind::VertexSphere(ci as u32),
            };
            pairs.push(ContactPair {
                kind,
                verts: vec![v as u32],
                form: None,
                distance: d,
                grad: Vec::new(),
                hess: DMatrix::zeros(0, 0),
            });
        }
    }
    pairs.sort_by(|a, b| (a.kind, &a.verts).cmp(&(b.kind, &b.verts)));
    Ok(pairs)
}

/// Total barrier energy at the given positions (detection included).
pub fn total_barrier_energy(
    positions: &[Vector3<f64>],
    topology: &ContactTopology,
    colliders: &[Collider],
    params: &ContactParams,
) -> Result<f64> {
    let pairs = find_active_pairs(positions, topology, colliders, params.dhat)?;
    Ok(pairs
        .iter()
        .map(|p| barrier_energy(p.distance, params))
        .sum())
}

/// Fill `pair.grad` / `pair.hess` with the barrier derivatives on the
/// involved vertex coordinates; the Hessian is projected positive
/// semidefinite. Returns the barrier energy.
pub fn barrier_local(
    pair: &mut ContactPair,
    positions: &[Vector3<f64>],
    params: &ContactParams,
) -> Result<f64> {
    if pair.distance <= 0.0 || pair.distance >= params.dhat {
        return Err(SimError::Domain(format!(
            "barrier evaluated outside (0, dhat): d = {:.3e}",
            pair.distance
        )));
    }
    let k = pair.verts.len();
    let b = match (&pair.kind, pair.form) {
        (ContactKind::VertexTriangle | ContactKind::EdgeEdge, Some(form)) => {
            let pts: Vec<Vector3<f64>> = pair
                .verts
                .iter()
                .map(|&v| positions[v as usize])
                .collect();
            let d2 = eval_form(form, &pts);
            barrier_dual(d2.sqrt(), params)
        }
        (ContactKind::VertexPlane(_) | ContactKind::VertexSphere(_), _) => {
            return Err(SimError::Domain(
                "collider pair needs barrier_local_with_colliders".into(),
            ))
        }
        _ => {
            return Err(SimError::Domain(
                "mesh pair without a distance form".into(),
            ))
        }
    };
    pair.grad = (0..k)
        .map(|s| Vector3::new(b.g[3 * s], b.g[3 * s + 1], b.g[3 * s + 2]))
        .collect();
    let mut h = DMatrix::zeros(3 * k, 3 * k);
    for i in 0..3 * k {
        for j in 0..3 * k {
            h[(i, j)] = b.h[(i, j)];
        }
    }
    project_psd(&mut h);
    pair.hess = h;
    Ok(b.v)
}

/// As `barrier_local`, with collider poses supplied for collider pairs.
pub fn barrier_local_with_colliders(
    pair: &mut ContactPair,
    positions: &[Vector3<f64>],
    colliders: &[Collider],
    params: &ContactParams,
) -> Result<f64> {
    match pair.kind {
        ContactKind::VertexTriangle | ContactKind::EdgeEdge => {
            barrier_local(pair, positions, params)
        }
        ContactKind::VertexPlane(ci) | ContactKind::VertexSphere(ci) => {
            if pair.distance <= 0.0 || pair.distance >= params.dhat {
                return Err(SimError::Domain(format!(
                    "barrier evaluated outside (0, dhat): d = {:.3e}",
                    pair.distance
                )));
            }
            let x = DualV3::var(&positions[pair.verts[0] as usize], 0);
            let d = match colliders[ci as usize] {
                Collider::Plane { point, normal } => {
                    x.sub(DualV3::constant(&point)).dot(DualV3::constant(&normal))
                }
                Collider::Sphere { center, radius } => {
                    x.sub(DualV3::constant(&center)).norm_squared().sqrt()
                        - Dual12::constant(radius)
                }
            };
            let b = barrier_dual(d, params);
            pair.grad = vec![Vector3::new(b.g[0], b.g[1], b.g[2])];
            let mut h = DMatrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    h[(i, j)] = b.h[(i, j)];
                }
            }
            project_psd(&mut h);
            pair.hess = h;
            Ok(b.v)
        }
    }
}

/// Pull a vertex-space local system back to control points through the
/// fixed interpolation weights: `grad_C = sum_a grad_{x_a} c^a`,
/// `hess_C = sum_{a,b} c^a c^b hess_{x_a x_b}`.
pub fn pullback(
    verts: &[u32],
    grad: &[Vector3<f64>],
    hess: &DMatrix<f64>,
    weights: &[Vec<(u32, f64)>],
) -> LocalSystem {
    let mut stencil: Vec<u32> = Vec::new();
    for &v in verts {
        for &(c, _) in &weights[v as usize] {
            stencil.push(c);
        }
    }
    stencil.sort_unstable();
    stencil.dedup();
    let slot_of = |c: u32| stencil.binary_search(&c).unwrap();

    let k = stencil.len();
    let mut g = vec![Vector3::zeros(); k];
    let mut h = DMatrix::zeros(3 * k, 3 * k);
    for (sa, &va) in verts.iter().enumerate() {
        for &(ci, wi) in &weights[va as usize] {
            let si = slot_of(ci);
            g[si] += wi * grad[sa];
            for (sb, &vb) in verts.iter().enumerate() {
                for &(cj, wj) in &weights[vb as usize] {
                    let sj = slot_of(cj);
                    let w = wi * wj;
                    for r in 0..3 {
                        for c in 0..3 {
                            h[(3 * si + r, 3 * sj + c)] += w * hess[(3 * sa + r, 3 * sb + c)];
                        }
                    }
                }
            }
        }
    }
    LocalSystem {
        stencil,
        grad: g,
        hess: h,
    }
}
