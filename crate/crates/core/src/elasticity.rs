//! Membrane (FBW) and bending (quadratic Laplacian) energy densities with
//! gradients and projected local Hessians.
//!
//! Membrane energy uses the anisotropic invariants of the 3x2 deformation
//! gradient; its local Hessian is made positive semidefinite per quadrature
//! point by clamping negative eigenvalues of the control-point-space
//! Hessian. The bending Hessian is constant (the energy is quadratic in the
//! control points) and is precomputed once per quadrature point.

use nalgebra::{DMatrix, Matrix3, Matrix3x2, Vector3};

use crate::geometry::QuadPoint;

/// Stiffness parameters in the units the energy densities expect:
/// membrane coefficients in Pa*m (areal), bending in Pa*m^3 scale.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaterialParams {
    pub mu_st1: f64,
    pub mu_st2: f64,
    pub mu_sh: f64,
    pub mu_bd: f64,
    /// Poisson ratio; enters only through the bending modulus conversion.
    pub poisson: f64,
}

impl MaterialParams {
    /// Convert engineering moduli to energy coefficients.
    ///
    /// `mu_st = E_st * h / 2` (uniaxial stretch energy matches E*h*eps^2/2
    /// to leading order), `mu_sh = E_sh * h / 2`, and
    /// `mu_bd = E_bd * h^3 / (12 (1 - nu^2))`, the Kirchhoff plate modulus,
    /// so the plate bending benchmark converges to the textbook deflection.
    pub fn from_moduli(e_st: f64, e_sh: f64, e_bd: f64, poisson: f64, thickness: f64) -> Self {
        let mu_st = 0.5 * e_st * thickness;
        Self {
            mu_st1: mu_st,
            mu_st2: mu_st,
            mu_sh: 0.5 * e_sh * thickness,
            mu_bd: e_bd * thickness.powi(3) / (12.0 * (1.0 - poisson * poisson)),
            poisson,
        }
    }
}

/// Gradient and Hessian of one quadrature point's energy on its stencil.
/// `hess` is a symmetric `(3 * stencil.len())^2` matrix ordered stencil-major.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub stencil: Vec<u32>,
    pub grad: Vec<Vector3<f64>>,
    pub hess: DMatrix<f64>,
}

/// Clamp negative eigenvalues of a symmetric matrix to zero in place.
pub fn project_psd(mat: &mut DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(mat.clone());
    let mut needs_fix = false;
    for &l in eig.eigenvalues.iter() {
        if l < 0.0 {
            needs_fix = true;
            break;
        }
    }
    if !needs_fix {
        return;
    }
    let mut clamped = eig.eigenvalues;
    for l in clamped.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    let q = eig.eigenvectors;
    *mat = &q * DMatrix::from_diagonal(&clamped) * q.transpose();
}

/// Anisotropic invariants of `F`: the diagonal and off-diagonal entries of
/// `F^T F`.
pub fn membrane_invariants(f: &Matrix3x2<f64>) -> (f64, f64, f64) {
    let c1 = f.column(0);
    let c2 = f.column(1);
    (c1.dot(&c1), c2.dot(&c2), c1.dot(&c2))
}

/// FBW stretching plus shearing energy density.
pub fn membrane_density(f: &Matrix3x2<f64>, params: &MaterialParams) -> f64 {
    let (i5a, i5b, i6) = membrane_invariants(f);
    let sa = i5a.max(0.0).sqrt();
    let sb = i5b.max(0.0).sqrt();
    params.mu_st1 * (sa - 1.0) * (sa - 1.0)
        + params.mu_st2 * (sb - 1.0) * (sb - 1.0)
        + params.mu_sh * i6 * i6
}

/// Floor applied to sqrt(I5) to keep the stretch derivative finite when a
/// material direction collapses.
const SQRT_I5_FLOOR: f64 = 1e-10;

/// Density gradient and Hessian with respect to the 6 entries of `F`
/// (column-stacked: f1 then f2).
fn membrane_f_derivatives(
    f: &Matrix3x2<f64>,
    params: &MaterialParams,
) -> (Vector3<f64>, Vector3<f64>, nalgebra::SMatrix<f64, 6, 6>) {
    let c1: Vector3<f64> = f.column(0).into();
    let c2: Vector3<f64> = f.column(1).into();
    let i5a = c1.dot(&c1);
    let i5b = c2.dot(&c2);
    let i6 = c1.dot(&c2);
    let sa = i5a.sqrt().max(SQRT_I5_FLOOR);
    let sb = i5b.sqrt().max(SQRT_I5_FLOOR);
    if sa <= SQRT_I5_FLOOR || sb <= SQRT_I5_FLOOR {
        log::debug!("membrane stretch invariant clamped at collapsed direction");
    }

    let g1 = 2.0 * params.mu_st1 * (1.0 - 1.0 / sa) * c1 + 2.0 * params.mu_sh * i6 * c2;
    let g2 = 2.0 * params.mu_st2 * (1.0 - 1.0 / sb) * c2 + 2.0 * params.mu_sh * i6 * c1;

    let id = Matrix3::identity();
    let h11 = 2.0 * params.mu_st1 * ((1.0 - 1.0 / sa) * id + (c1 * c1.transpose()) / (sa * sa * sa))
        + 2.0 * params.mu_sh * (c2 * c2.transpose());
    let h22 = 2.0 * params.mu_st2 * ((1.0 - 1.0 / sb) * id + (c2 * c2.transpose()) / (sb * sb * sb))
        + 2.0 * params.mu_sh * (c1 * c1.transpose());
    let h12 = 2.0 * params.mu_sh * (c2 * c1.transpose() + i6 * id);

    let mut h = nalgebra::SMatrix::<f64, 6, 6>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&h11);
    h.fixed_view_mut::<3, 3>(3, 3).copy_from(&h22);
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&h12);
    h.fixed_view_mut::<3, 3>(3, 0).copy_from(&h12.transpose());
    (g1, g2, h)
}

/// Membrane energy, gradient, and Hessian of one quadrature point on its
/// stencil, scaled by the physical weight. `project` applies the PSD clamp.
pub fn membrane_local(
    qp: &QuadPoint,
    world_cp: &[Vector3<f64>],
    params: &MaterialParams,
    project: bool,
) -> LocalSystem {
    let f = crate::geometry::deformation_gradient(qp, world_cp);
    let (g1, g2, hf) = membrane_f_derivatives(&f, params);
    let k = qp.stencil.len();
    let w = qp.weight;

    let mut grad = Vec::with_capacity(k);
    for g in &qp.grad_coeffs {
        grad.push(w * (g1 * g.x + g2 * g.y));
    }

    // H_C[(s,t)] 3x3 block = sum_{b,e} g_s[b] * Hf[b-block, e-block] * g_t[e].
    let h11: Matrix3<f64> = hf.fixed_view::<3, 3>(0, 0).into();
    let h22: Matrix3<f64> = hf.fixed_view::<3, 3>(3, 3).into();
    let h12: Matrix3<f64> = hf.fixed_view::<3, 3>(0, 3).into();
    let h21 = h12.transpose();
    let mut hess = DMatrix::<f64>::zeros(3 * k, 3 * k);
    for s in 0..k {
        let gs = qp.grad_coeffs[s];
        for t in 0..k {
            let gt = qp.grad_coeffs[t];
            let block = w
                * (gs.x * gt.x * h11 + gs.x * gt.y * h12 + gs.y * gt.x * h21 + gs.y * gt.y * h22);
            hess.view_mut((3 * s, 3 * t), (3, 3)).copy_from(&block);
        }
    }
    if project {
        project_psd(&mut hess);
    }
    LocalSystem {
        stencil: qp.stencil.clone(),
        grad,
        hess,
    }
}

/// Membrane energy contribution of one quadrature point.
pub fn membrane_energy(qp: &QuadPoint, world_cp: &[Vector3<f64>], params: &MaterialParams) -> f64 {
    let f = crate::geometry::deformation_gradient(qp, world_cp);
    qp.weight * membrane_density(&f, params)
}

/// Precomputed constant bending Hessian of one quadrature point:
/// `w * mu_bd * (lap lap^T) (x) I3`, positive semidefinite by construction.
#[derive(Debug, Clone)]
pub struct BendingTemplate {
    pub stencil: Vec<u32>,
    pub hess: DMatrix<f64>,
    /// `w * mu_bd * lap_coeffs`, reused for the gradient.
    scaled_lap: Vec<f64>,
}

impl BendingTemplate {
    pub fn new(qp: &QuadPoint, params: &MaterialParams) -> Self {
        let k = qp.stencil.len();
        let c = qp.weight * params.mu_bd;
        let mut hess = DMatrix::<f64>::zeros(3 * k, 3 * k);
        for s in 0..k {
            for t in 0..k {
                let v = c * qp.lap_coeffs[s] * qp.lap_coeffs[t];
                for r in 0..3 {
                    hess[(3 * s + r, 3 * t + r)] = v;
                }
            }
        }
        Self {
            stencil: qp.stencil.clone(),
            hess,
            scaled_lap: qp.lap_coeffs.iter().map(|l| c * l).collect(),
        }
    }

    /// Bending energy of one quadrature point.
    pub fn energy(&self, qp: &QuadPoint, world_cp: &[Vector3<f64>], params: &MaterialParams) -> f64 {
        let lap = crate::geometry::surface_laplacian(qp, world_cp);
        0.5 * params.mu_bd * qp.weight * lap.dot(&lap)
    }

    /// Gradient plus the constant Hessian as a local system.
    pub fn local(&self, qp: &QuadPoint, world_cp: &[Vector3<f64>]) -> LocalSystem {
        let lap = crate::geometry::surface_laplacian(qp, world_cp);
        let grad = self.scaled_lap.iter().map(|&c| c * lap).collect();
        LocalSystem {
            stencil: self.stencil.clone(),
            grad,
            hess: self.hess.clone(),
        }
    }
}
