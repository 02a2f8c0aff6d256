//! Continuous collision detection by conservative advancement.
//!
//! Each candidate pair advances along the linear motion until its distance
//! would drop below a floor of 1% of its starting distance, using the sum
//! of the primitives' largest displacement magnitudes as a Lipschitz bound
//! on the approach speed. The returned step is the minimum over all pairs,
//! never reaching exact contact.

use nalgebra::Vector3;

use super::broadphase;
use super::distance::{edge_edge_distance, point_triangle_distance};
use super::{Collider, ContactTopology};
use crate::error::{Result, SimError};

/// Fraction of the starting distance kept as a safety floor.
pub const DISTANCE_FLOOR: f64 = 0.01;

const MAX_ITERS: usize = 256;

/// Conservative advancement for one pair given closures for the distance at
/// parameter `t` and the motion bound.
fn advance(dist_at: impl Fn(f64) -> f64, motion_bound: f64, d0: f64) -> f64 {
    if motion_bound <= 1e-14 {
        return 1.0;
    }
    let floor = DISTANCE_FLOOR * d0;
    let mut t = 0.0;
    for _ in 0..MAX_ITERS {
        let d = dist_at(t);
        let step = (d - floor) / motion_bound;
        if step <= 0.0 {
            return t;
        }
        if t + step >= 1.0 {
            return 1.0;
        }
        t += step;
        if step < 1e-12 {
            return t;
        }
    }
    t
}

/// Largest feasible step in `(0, 1]` along `positions + t * displacements`
/// such that no primitive-pair distance falls below 1% of its current
/// value. Colliders are static at their current pose.
pub fn ccd_max_step(
    positions: &[Vector3<f64>],
    displacements: &[Vector3<f64>],
    topology: &ContactTopology,
    colliders: &[Collider],
) -> Result<f64> {
    assert_eq!(positions.len(), displacements.len());
    let mut t_max: f64 = 1.0;

    let cands = broadphase::candidates(
        positions,
        Some(displacements),
        &topology.triangles,
        &topology.edges,
        1e-9,
    );

    let at = |v: u32, t: f64| positions[v as usize] + t * displacements[v as usize];
    let disp_norm = |v: u32| displacements[v as usize].norm();

    for &(v, ti) in &cands.vertex_triangle {
        let tri = topology.triangles[ti as usize];
        let d0 = point_triangle_distance(
            &at(v, 0.0),
            &at(tri[0], 0.0),
            &at(tri[1], 0.0),
            &at(tri[2], 0.0),
        )
        .0;
        if d0 <= 0.0 {
            return Err(SimError::Interpenetration(format!(
                "CCD started at non-positive distance (vertex {v}, triangle {ti})"
            )));
        }
        let bound = disp_norm(v)
            + disp_norm(tri[0]).max(disp_norm(tri[1])).max(disp_norm(tri[2]));
        let t = advance(
            |t| {
                point_triangle_distance(&at(v, t), &at(tri[0], t), &at(tri[1], t), &at(tri[2], t))
                    .0
            },
            bound,
            d0,
        );
        t_max = t_max.min(t);
    }

    for &(ea, eb) in &cands.edge_edge {
        let a = topology.edges[ea as usize];
        let b = topology.edges[eb as usize];
        let d0 = edge_edge_distance(&at(a[0], 0.0), &at(a[1], 0.0), &at(b[0], 0.0), &at(b[1], 0.0)).0;
        if d0 <= 0.0 {
            return Err(SimError::Interpenetration(format!(
                "CCD started at non-positive distance (edge {ea}, edge {eb})"
            )));
        }
        let bound = disp_norm(a[0]).max(disp_norm(a[1]))
            + disp_norm(b[0]).max(disp_norm(b[1]));
        let t = advance(
            |t| edge_edge_distance(&at(a[0], t), &at(a[1], t), &at(b[0], t), &at(b[1], t)).0,
            bound,
            d0,
        );
        t_max = t_max.min(t);
    }

    for collider in colliders {
        for v in 0..positions.len() as u32 {
            let d0 = collider.distance(&at(v, 0.0));
            if d0 <= 0.0 {
                return Err(SimError::Interpenetration(format!(
                    "CCD started inside a collider (vertex {v})"
                )));
            }
            // Cull vertices that cannot reach the collider this step.
            if d0 - disp_norm(v) > 0.0 {
                continue;
            }
            let t = advance(|t| collider.distance(&at(v, t)), disp_norm(v), d0);
            t_max = t_max.min(t);
        }
    }

    Ok(t_max)
}
