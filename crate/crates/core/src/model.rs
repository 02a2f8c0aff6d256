//! The discretized world model: per-sheet quadrature precomputation, lumped
//! masses, pins, contact coupling, and the incremental potential whose
//! minimizer is the implicit-Euler update.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::assembly::{self, BlockSparseMatrix, StencilMap, VertexLocal};
use crate::contact::{
    self, barrier_local_with_colliders, Collider, ContactPair, ContactParams, ContactTopology,
};
use crate::elasticity::{
    membrane_energy, membrane_local, BendingTemplate, LocalSystem, MaterialParams,
};
use crate::error::{Result, SimError};
use crate::geometry::{build_mass, precompute_quadpoints, MassMatrix, QuadPoint};
use crate::quadrature::{build_bending_rule, build_mass_rule, build_membrane_rule, MembraneScheme};
use crate::spline::{EmbeddedMesh, SplineSheet};

/// One sheet's discretization inside the global model.
#[derive(Debug, Clone)]
pub struct SheetModel {
    pub sheet: SplineSheet,
    pub params: MaterialParams,
    pub cp_offset: usize,
    pub vert_offset: usize,
    pub membrane_qps: Vec<QuadPoint>,
    pub bending_qps: Vec<QuadPoint>,
    pub bending_templates: Vec<BendingTemplate>,
    pub mesh: EmbeddedMesh,
    pub mass: MassMatrix,
}

impl SheetModel {
    pub fn point_count(&self) -> usize {
        self.sheet.point_count()
    }
}

/// Contact coupling over the union of all embedded meshes.
#[derive(Debug, Clone)]
pub struct ContactSetup {
    pub params: ContactParams,
    pub topology: ContactTopology,
    /// Per global vertex: `(global control point, weight)`.
    pub weights: Vec<Vec<(u32, f64)>>,
}

/// Immutable discretization shared by every step of a simulation.
#[derive(Debug)]
pub struct Model {
    pub sheets: Vec<SheetModel>,
    pub point_count: usize,
    pub vertex_count: usize,
    /// Lumped mass per global control point (kg).
    pub masses: Vec<f64>,
    pub gravity: Vector3<f64>,
    pub pinned: Vec<bool>,
    pub contact: Option<ContactSetup>,
    pub skeleton: BlockSparseMatrix,
    pub stencil_map: StencilMap,
}

/// Specification of one sheet when building a model.
pub struct SheetSpec {
    pub sheet: SplineSheet,
    pub params: MaterialParams,
    pub density: f64,
    pub thickness: f64,
    pub embedded_resolution: (usize, usize),
    pub scheme: MembraneScheme,
}

impl Model {
    pub fn build(
        specs: Vec<SheetSpec>,
        gravity: Vector3<f64>,
        contact_params: Option<ContactParams>,
        pinned_global: Vec<bool>,
    ) -> Result<Self> {
        let mut sheets = Vec::with_capacity(specs.len());
        let mut cp_offset = 0usize;
        let mut vert_offset = 0usize;
        let mut masses = Vec::new();
        let mut topology = ContactTopology::default();
        let mut weights: Vec<Vec<(u32, f64)>> = Vec::new();

        for spec in specs {
            let sheet = spec.sheet;
            let m_rule = build_membrane_rule(&sheet, spec.scheme);
            let b_rule = build_bending_rule(&sheet);
            let mass_rule = build_mass_rule(&sheet);
            let membrane_qps = precompute_quadpoints(&sheet, &m_rule)?;
            let bending_qps = precompute_quadpoints(&sheet, &b_rule)?;
            let mass_qps = precompute_quadpoints(&sheet, &mass_rule)?;
            let mass = build_mass(&sheet, &mass_qps, spec.density, spec.thickness)?;
            let bending_templates = bending_qps
                .iter()
                .map(|qp| BendingTemplate::new(qp, &spec.params))
                .collect();
            let mesh = sheet.sample_embedded_mesh(spec.embedded_resolution)?;

            masses.extend_from_slice(&mass.lumped);
            for t in &mesh.triangles {
                topology.triangles.push([
                    t[0] + vert_offset as u32,
                    t[1] + vert_offset as u32,
                    t[2] + vert_offset as u32,
                ]);
            }
            for e in &mesh.edges {
                topology
                    .edges
                    .push([e[0] + vert_offset as u32, e[1] + vert_offset as u32]);
            }
            for w in &mesh.weights {
                weights.push(
                    w.iter()
                        .map(|&(c, coef)| (c + cp_offset as u32, coef))
                        .collect(),
                );
            }

            let vcount = mesh.vertex_count();
            let pcount = sheet.point_count();
            sheets.push(SheetModel {
                sheet,
                params: spec.params,
                cp_offset,
                vert_offset,
                membrane_qps,
                bending_qps,
                bending_templates,
                mesh,
                mass,
            });
            cp_offset += pcount;
            vert_offset += vcount;
        }

        let point_count = cp_offset;
        let vertex_count = vert_offset;
        if pinned_global.len() != point_count {
            return Err(SimError::Scene(format!(
                "pin mask length {} does not match control point count {point_count}",
                pinned_global.len()
            )));
        }

        // Global stencils in fixed order: per sheet, membrane then bending.
        let mut global_stencils: Vec<Vec<u32>> = Vec::new();
        for s in &sheets {
            for qp in s.membrane_qps.iter().chain(s.bending_qps.iter()) {
                global_stencils.push(
                    qp.stencil
                        .iter()
                        .map(|&a| a + s.cp_offset as u32)
                        .collect(),
                );
            }
        }
        let stencil_refs: Vec<&[u32]> = global_stencils.iter().map(|s| s.as_slice()).collect();
        let (skeleton, stencil_map) = assembly::precompute_sparsity(point_count, &stencil_refs);

        let contact = contact_params.map(|params| ContactSetup {
            params,
            topology,
            weights,
        });

        Ok(Self {
            sheets,
            point_count,
            vertex_count,
            masses,
            gravity,
            pinned: pinned_global,
            contact,
            skeleton,
            stencil_map,
        })
    }

    /// Embedded vertex positions interpolated from global control points.
    pub fn vertex_positions(&self, c: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.vertex_count);
        for s in &self.sheets {
            let local = &c[s.cp_offset..s.cp_offset + s.point_count()];
            out.extend(s.mesh.positions(local));
        }
        out
    }

    /// Elastic local systems (membrane then bending per sheet) with
    /// stencils lifted to global control indices.
    pub fn elastic_locals(&self, c: &[Vector3<f64>], project: bool) -> Vec<LocalSystem> {
        let mut out: Vec<LocalSystem> = Vec::new();
        for s in &self.sheets {
            let local_cp = &c[s.cp_offset..s.cp_offset + s.point_count()];
            let off = s.cp_offset as u32;
            let mut membrane: Vec<LocalSystem> = s
                .membrane_qps
                .par_iter()
                .map(|qp| {
                    let mut ls = membrane_local(qp, local_cp, &s.params, project);
                    for a in ls.stencil.iter_mut() {
                        *a += off;
                    }
                    ls
                })
                .collect();
            out.append(&mut membrane);
            let mut bending: Vec<LocalSystem> = s
                .bending_qps
                .par_iter()
                .zip(s.bending_templates.par_iter())
                .map(|(qp, tpl)| {
                    let mut ls = tpl.local(qp, local_cp);
                    for a in ls.stencil.iter_mut() {
                        *a += off;
                    }
                    ls
                })
                .collect();
            out.append(&mut bending);
        }
        out
    }

    /// Total elastic energy (membrane + bending).
    pub fn elastic_energy(&self, c: &[Vector3<f64>]) -> (f64, f64) {
        let mut membrane = 0.0;
        let mut bending = 0.0;
        for s in &self.sheets {
            let local_cp = &c[s.cp_offset..s.cp_offset + s.point_count()];
            let em: f64 = s
                .membrane_qps
                .par_iter()
                .map(|qp| membrane_energy(qp, local_cp, &s.params))
                .sum();
            let eb: f64 = s
                .bending_qps
                .par_iter()
                .zip(s.bending_templates.par_iter())
                .map(|(qp, tpl)| tpl.energy(qp, local_cp, &s.params))
                .sum();
            membrane += em;
            bending += eb;
        }
        (membrane, bending)
    }
}

/// Barrier terms at one configuration: active pairs with derivatives, the
/// summed energy, the pulled-back gradient, and vertex-space Hessians ready
/// for conversion.
pub struct ContactState {
    pub pairs: Vec<ContactPair>,
    pub energy: f64,
    pub grad: Vec<Vector3<f64>>,
    pub vertex_locals: Vec<VertexLocal>,
    pub vertex_positions: Vec<Vector3<f64>>,
}

/// The per-step objective `E(C) = inertia + elasticity + gravity + barrier`
/// with `C_hat` the forward-extrapolated positions.
pub struct IncrementalPotential<'a> {
    pub model: &'a Model,
    pub dt: f64,
    pub c_hat: Vec<Vector3<f64>>,
    /// Colliders at their end-of-step pose.
    pub colliders: Vec<Collider>,
}

impl<'a> IncrementalPotential<'a> {
    /// Inertia + gravity over free control points.
    fn inertia_gravity(&self, c: &[Vector3<f64>]) -> f64 {
        let m = self.model;
        let inv2dt2 = 0.5 / (self.dt * self.dt);
        let mut e = 0.0;
        for a in 0..m.point_count {
            if m.pinned[a] {
                continue;
            }
            let d = c[a] - self.c_hat[a];
            e += m.masses[a] * inv2dt2 * d.norm_squared();
            e -= m.masses[a] * m.gravity.dot(&c[a]);
        }
        e
    }

    /// Objective value; fails on interpenetration or non-finite energy.
    pub fn value(&self, c: &[Vector3<f64>]) -> Result<f64> {
        let m = self.model;
        let (membrane, bending) = m.elastic_energy(c);
        let mut e = self.inertia_gravity(c) + membrane + bending;
        if let Some(setup) = &m.contact {
            let pos = m.vertex_positions(c);
            e += contact::total_barrier_energy(&pos, &setup.topology, &self.colliders, &setup.params)?;
        }
        if !e.is_finite() {
            return Err(SimError::NonFinite(format!(
                "incremental potential value {e}"
            )));
        }
        Ok(e)
    }

    /// Contact pairs with barrier derivatives at `c`.
    pub fn contact_state(&self, c: &[Vector3<f64>]) -> Result<Option<ContactState>> {
        let m = self.model;
        let Some(setup) = &m.contact else {
            return Ok(None);
        };
        let positions = m.vertex_positions(c);
        let mut pairs = contact::find_active_pairs(
            &positions,
            &setup.topology,
            &self.colliders,
            setup.params.dhat,
        )?;
        let mut energy = 0.0;
        for p in pairs.iter_mut() {
            energy += barrier_local_with_colliders(p, &positions, &self.colliders, &setup.params)?;
        }
        let mut grad = vec![Vector3::zeros(); m.point_count];
        for p in &pairs {
            for (s, &v) in p.verts.iter().enumerate() {
                for &(ci, w) in &setup.weights[v as usize] {
                    if !m.pinned[ci as usize] {
                        grad[ci as usize] += w * p.grad[s];
                    }
                }
            }
        }
        let vertex_locals = pairs
            .iter()
            .map(|p| VertexLocal {
                verts: p.verts.clone(),
                hess: p.hess.clone(),
            })
            .collect();
        Ok(Some(ContactState {
            pairs,
            energy,
            grad,
            vertex_locals,
            vertex_positions: positions,
        }))
    }

    /// Value and gradient together; the gradient of pinned control points
    /// is zero. Elastic locals are recomputed; callers needing the Hessian
    /// use `elastic_locals` plus the assembly module directly.
    pub fn value_and_grad(&self, c: &[Vector3<f64>]) -> Result<(f64, Vec<Vector3<f64>>)> {
        let m = self.model;
        let mut grad = vec![Vector3::zeros(); m.point_count];
        let inv_dt2 = 1.0 / (self.dt * self.dt);
        for a in 0..m.point_count {
            if m.pinned[a] {
                continue;
            }
            grad[a] = m.masses[a] * inv_dt2 * (c[a] - self.c_hat[a]) - m.masses[a] * m.gravity;
        }
        let locals = m.elastic_locals(c, false);
        assembly::accumulate_gradient(&locals, &m.pinned, &mut grad);
        let mut value = self.inertia_gravity(c);
        let (membrane, bending) = m.elastic_energy(c);
        value += membrane + bending;
        if let Some(state) = self.contact_state(c)? {
            value += state.energy;
            for (g, cg) in grad.iter_mut().zip(state.grad.iter()) {
                *g += cg;
            }
        }
        if !value.is_finite() {
            return Err(SimError::NonFinite(format!(
                "incremental potential value {value}"
            )));
        }
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn small_model(gravity: Vector3<f64>, stiff: bool) -> Model {
        let sheet = SplineSheet::rectangle(6, 6, 1.0, 1.0).unwrap();
        let scale = if stiff { 1.0 } else { 0.0 };
        let params = MaterialParams {
            mu_st1: 50.0 * scale,
            mu_st2: 50.0 * scale,
            mu_sh: 5.0 * scale,
            mu_bd: 0.01 * scale,
            poisson: 0.3,
        };
        let spec = SheetSpec {
            sheet,
            params,
            density: 400.0,
            thickness: 1e-3,
            embedded_resolution: (8, 8),
            scheme: MembraneScheme::Reduced,
        };
        Model::build(vec![spec], gravity, None, vec![false; 36]).unwrap()
    }

    #[test]
    fn pure_inertia_minimizer_is_c_hat() {
        let model = small_model(Vector3::zeros(), false);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c0: Vec<Vector3<f64>> = model.sheets[0].sheet.world_cp.clone();
        let c_hat: Vec<Vector3<f64>> = c0
            .iter()
            .map(|p| {
                p + Vector3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                )
            })
            .collect();
        let ip = IncrementalPotential {
            model: &model,
            dt: 0.01,
            c_hat: c_hat.clone(),
            colliders: Vec::new(),
        };
        // Zero elasticity: the gradient vanishes exactly at c = c_hat.
        let (_, g) = ip.value_and_grad(&c_hat).unwrap();
        for v in &g {
            assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-12);
        }
        // And is positive away from it.
        let e_hat = ip.value(&c_hat).unwrap();
        let e0 = ip.value(&c0).unwrap();
        assert!(e0 > e_hat);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = small_model(Vector3::new(0.0, 0.0, -9.81), true);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c0: Vec<Vector3<f64>> = model.sheets[0]
            .sheet
            .world_cp
            .iter()
            .map(|p| {
                p + Vector3::new(
                    rng.random_range(-0.02..0.02),
                    rng.random_range(-0.02..0.02),
                    rng.random_range(-0.02..0.02),
                )
            })
            .collect();
        let c_hat = c0.clone();
        let ip = IncrementalPotential {
            model: &model,
            dt: 0.05,
            c_hat,
            colliders: Vec::new(),
        };
        let (_, grad) = ip.value_and_grad(&c0).unwrap();
        let h = 1e-6;
        let mut c = c0.clone();
        let mut max_rel: f64 = 0.0;
        for a in (0..model.point_count).step_by(5) {
            for r in 0..3 {
                let orig = c[a][r];
                c[a][r] = orig + h;
                let ep = ip.value(&c).unwrap();
                c[a][r] = orig - h;
                let em = ip.value(&c).unwrap();
                c[a][r] = orig;
                let fd = (ep - em) / (2.0 * h);
                let rel = (grad[a][r] - fd).abs() / fd.abs().max(1e-3);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-5, "max relative gradient error {max_rel}");
    }

    #[test]
    fn pinned_points_contribute_nothing() {
        let sheet = SplineSheet::rectangle(5, 5, 1.0, 1.0).unwrap();
        let params = MaterialParams {
            mu_st1: 10.0,
            mu_st2: 10.0,
            mu_sh: 1.0,
            mu_bd: 0.01,
            poisson: 0.3,
        };
        let mut pinned = vec![false; 25];
        pinned[0] = true;
        pinned[24] = true;
        let spec = SheetSpec {
            sheet,
            params,
            density: 400.0,
            thickness: 1e-3,
            embedded_resolution: (6, 6),
            scheme: MembraneScheme::Reduced,
        };
        let model = Model::build(
            vec![spec],
            Vector3::new(0.0, 0.0, -9.81),
            None,
            pinned,
        )
        .unwrap();
        let c0 = model.sheets[0].sheet.world_cp.clone();
        let ip = IncrementalPotential {
            model: &model,
            dt: 0.01,
            c_hat: c0.clone(),
            colliders: Vec::new(),
        };
        let (_, g) = ip.value_and_grad(&c0).unwrap();
        assert_eq!(g[0], Vector3::zeros());
        assert_eq!(g[24], Vector3::zeros());
        assert!(g[12].norm() > 0.0); // free interior point feels gravity
    }
}
