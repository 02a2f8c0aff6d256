//! Quadratic B-spline basis functions, tensor-product sheets, and the
//! embedded triangle mesh sampled from a sheet.
//!
//! Knot vectors are always open and uniform with interior knots on the
//! integer lattice, so a vector is fully determined by its control point
//! count. Basis evaluation follows the Cox-de Boor recursion with the
//! convention that divisions by zero from repeated knots contribute zero,
//! and evaluation at the right end of the domain takes the limit from the
//! left so the surface interpolates all four corner control points.

use nalgebra::{Vector2, Vector3};

use crate::error::{Result, SimError};

/// Polynomial degree of every basis in this crate.
pub const DEGREE: usize = 2;

/// Entries below this are treated as structurally zero when building
/// quadrature stencils.
pub const STENCIL_EPS: f64 = 1e-14;

/// Open uniform quadratic knot vector with integer interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    values: Vec<f64>,
    point_count: usize,
}

impl KnotVector {
    /// Build the open uniform knot vector for `point_count` control points.
    /// Requires at least `DEGREE + 1 = 3` points.
    pub fn open_uniform(point_count: usize) -> Result<Self> {
        if point_count < DEGREE + 1 {
            return Err(SimError::Domain(format!(
                "need at least {} control points per direction, got {}",
                DEGREE + 1,
                point_count
            )));
        }
        let n = point_count;
        let mut values = Vec::with_capacity(n + DEGREE + 1);
        values.extend(std::iter::repeat(0.0).take(DEGREE + 1));
        for k in 1..(n - DEGREE) {
            values.push(k as f64);
        }
        values.extend(std::iter::repeat((n - DEGREE) as f64).take(DEGREE + 1));
        debug_assert_eq!(values.len(), n + DEGREE + 1);
        Ok(Self {
            values,
            point_count: n,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of basis functions (= control points).
    pub fn point_count(&self) -> usize {
        self.point_count
    }

    /// Number of non-empty knot spans.
    pub fn span_count(&self) -> usize {
        self.point_count - DEGREE
    }

    /// Parametric domain `[0, span_count]`.
    pub fn domain(&self) -> (f64, f64) {
        (0.0, self.span_count() as f64)
    }

    pub fn contains(&self, xi: f64) -> bool {
        let (lo, hi) = self.domain();
        xi >= lo && xi <= hi
    }

    /// Index of the non-empty span containing `xi`; the right endpoint maps
    /// to the last span. Spans are numbered `0..span_count`.
    pub fn find_span(&self, xi: f64) -> Result<usize> {
        if !self.contains(xi) || !xi.is_finite() {
            return Err(SimError::Domain(format!(
                "parameter {xi} outside domain {:?}",
                self.domain()
            )));
        }
        let s = (xi.floor() as usize).min(self.span_count() - 1);
        Ok(s)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.point_count {
            return Err(SimError::Domain(format!(
                "basis index {i} out of range 0..{}",
                self.point_count
            )));
        }
        Ok(())
    }

    fn basis_rec(&self, i: usize, p: usize, xi: f64) -> f64 {
        let t = &self.values;
        if p == 0 {
            let last = *t.last().unwrap();
            let inside = t[i] <= xi && xi < t[i + 1];
            // Closure convention: the right endpoint belongs to the last
            // non-empty span.
            let at_end = xi == last && t[i] < t[i + 1] && t[i + 1] == last;
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut acc = 0.0;
        let dl = t[i + p] - t[i];
        if dl > 0.0 {
            acc += (xi - t[i]) / dl * self.basis_rec(i, p - 1, xi);
        }
        let dr = t[i + p + 1] - t[i + 1];
        if dr > 0.0 {
            acc += (t[i + p + 1] - xi) / dr * self.basis_rec(i + 1, p - 1, xi);
        }
        acc
    }

    /// Cox-de Boor evaluation of the `i`-th quadratic basis at `xi`.
    pub fn eval_basis(&self, i: usize, xi: f64) -> Result<f64> {
        self.check_index(i)?;
        if !self.contains(xi) {
            return Err(SimError::Domain(format!(
                "parameter {xi} outside domain {:?}",
                self.domain()
            )));
        }
        Ok(self.basis_rec(i, DEGREE, xi))
    }

    /// Value, first and second derivative of the `i`-th basis at `xi`.
    /// The second derivative is piecewise constant; at interior knots the
    /// value from the span to the right is used (left at the domain end).
    pub fn eval_basis_derivs(&self, i: usize, xi: f64) -> Result<(f64, f64, f64)> {
        self.check_index(i)?;
        if !self.contains(xi) {
            return Err(SimError::Domain(format!(
                "parameter {xi} outside domain {:?}",
                self.domain()
            )));
        }
        let t = &self.values;
        let n0 = self.basis_rec(i, DEGREE, xi);

        // dN_{i,2} = 2 [ N_{i,1}/(t_{i+2}-t_i) - N_{i+1,1}/(t_{i+3}-t_{i+1}) ]
        let mut d1 = 0.0;
        let dl = t[i + 2] - t[i];
        if dl > 0.0 {
            d1 += 2.0 / dl * self.basis_rec(i, 1, xi);
        }
        let dr = t[i + 3] - t[i + 1];
        if dr > 0.0 {
            d1 -= 2.0 / dr * self.basis_rec(i + 1, 1, xi);
        }

        // d2N_{i,2} = 2 [ dN_{i,1}/(t_{i+2}-t_i) - dN_{i+1,1}/(t_{i+3}-t_{i+1}) ]
        let d_linear = |j: usize| -> f64 {
            let mut d = 0.0;
            let a = t[j + 1] - t[j];
            if a > 0.0 {
                d += self.basis_rec(j, 0, xi) / a;
            }
            let b = t[j + 2] - t[j + 1];
            if b > 0.0 {
                d -= self.basis_rec(j + 1, 0, xi) / b;
            }
            d
        };
        let mut d2 = 0.0;
        if dl > 0.0 {
            d2 += 2.0 / dl * d_linear(i);
        }
        if dr > 0.0 {
            d2 -= 2.0 / dr * d_linear(i + 1);
        }
        Ok((n0, d1, d2))
    }

    /// The (at most 3) candidate basis indices active on the span holding
    /// `xi`, with value and derivatives for each.
    pub fn active_basis(&self, xi: f64) -> Result<ActiveBasis> {
        let span = self.find_span(xi)?;
        // Functions span, span+1, span+2 in control-point indexing are the
        // candidates over knot span [span, span+1].
        let first = span;
        let mut rows = [(0.0, 0.0, 0.0); DEGREE + 1];
        for (k, row) in rows.iter_mut().enumerate() {
            *row = self.eval_basis_derivs(first + k, xi)?;
        }
        Ok(ActiveBasis { first, rows })
    }

    /// Greville abscissa of basis `i`: the parameter whose spline fit
    /// reproduces affine functions when control values sample them there.
    pub fn greville(&self, i: usize) -> f64 {
        (self.values[i + 1] + self.values[i + 2]) / DEGREE as f64
    }
}

/// The candidate basis functions over one knot span, from `active_basis`.
#[derive(Debug, Clone, Copy)]
pub struct ActiveBasis {
    /// Control index of the first candidate.
    pub first: usize,
    /// `(value, d1, d2)` for candidates `first..first+3`.
    pub rows: [(f64, f64, f64); DEGREE + 1],
}

/// Which control grid to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Material,
    World,
}

/// A tensor-product quadratic B-spline cloth patch: knot vectors plus the
/// material (2D rest) and world (3D) control grids. Control points are
/// stored row-major with index `a = iu * nv + iv`.
#[derive(Debug, Clone)]
pub struct SplineSheet {
    pub knots_u: KnotVector,
    pub knots_v: KnotVector,
    pub material_cp: Vec<Vector2<f64>>,
    pub world_cp: Vec<Vector3<f64>>,
    pub world_vel: Vec<Vector3<f64>>,
}

impl SplineSheet {
    /// A flat rectangular sheet of physical size `size_u x size_v` meters
    /// with `nu x nv` control points. Material control points sit on the
    /// scaled Greville lattice so the material map is exactly affine; the
    /// world grid starts as the material grid embedded in the z = 0 plane.
    pub fn rectangle(nu: usize, nv: usize, size_u: f64, size_v: f64) -> Result<Self> {
        if size_u <= 0.0 || size_v <= 0.0 {
            return Err(SimError::Domain(format!(
                "sheet size must be positive, got {size_u} x {size_v}"
            )));
        }
        let knots_u = KnotVector::open_uniform(nu)?;
        let knots_v = KnotVector::open_uniform(nv)?;
        let su = knots_u.span_count() as f64;
        let sv = knots_v.span_count() as f64;
        let mut material_cp = Vec::with_capacity(nu * nv);
        for iu in 0..nu {
            let x = knots_u.greville(iu) / su * size_u;
            for iv in 0..nv {
                let y = knots_v.greville(iv) / sv * size_v;
                material_cp.push(Vector2::new(x, y));
            }
        }
        let world_cp = material_cp
            .iter()
            .map(|m| Vector3::new(m.x, m.y, 0.0))
            .collect::<Vec<_>>();
        let world_vel = vec![Vector3::zeros(); nu * nv];
        Ok(Self {
            knots_u,
            knots_v,
            material_cp,
            world_cp,
            world_vel,
        })
    }

    pub fn nu(&self) -> usize {
        self.knots_u.point_count()
    }

    pub fn nv(&self) -> usize {
        self.knots_v.point_count()
    }

    pub fn point_count(&self) -> usize {
        self.nu() * self.nv()
    }

    pub fn cp_index(&self, iu: usize, iv: usize) -> usize {
        iu * self.nv() + iv
    }

    /// Evaluate the surface at `(u, v)`; the z component is zero for the
    /// material field.
    pub fn eval_surface(&self, field: Field, u: f64, v: f64) -> Result<Vector3<f64>> {
        let bu = self.knots_u.active_basis(u)?;
        let bv = self.knots_v.active_basis(v)?;
        let mut out = Vector3::zeros();
        for (ku, &(nu_val, _, _)) in bu.rows.iter().enumerate() {
            if nu_val == 0.0 {
                continue;
            }
            for (kv, &(nv_val, _, _)) in bv.rows.iter().enumerate() {
                let w = nu_val * nv_val;
                if w == 0.0 {
                    continue;
                }
                let a = self.cp_index(bu.first + ku, bv.first + kv);
                match field {
                    Field::Material => {
                        let m = self.material_cp[a];
                        out += w * Vector3::new(m.x, m.y, 0.0);
                    }
                    Field::World => out += w * self.world_cp[a],
                }
            }
        }
        Ok(out)
    }

    /// Sample a regular `(ru+1) x (rv+1)` lattice of the parametric domain
    /// into a triangle mesh with fixed interpolation weights.
    pub fn sample_embedded_mesh(&self, resolution: (usize, usize)) -> Result<EmbeddedMesh> {
        let (ru, rv) = resolution;
        if ru < 1 || rv < 1 {
            return Err(SimError::Domain(format!(
                "embedded mesh resolution must be at least 1x1, got {ru}x{rv}"
            )));
        }
        let (_, umax) = self.knots_u.domain();
        let (_, vmax) = self.knots_v.domain();
        let mut vertices_uv = Vec::with_capacity((ru + 1) * (rv + 1));
        let mut weights = Vec::with_capacity((ru + 1) * (rv + 1));
        for i in 0..=ru {
            let u = umax * i as f64 / ru as f64;
            for j in 0..=rv {
                let v = vmax * j as f64 / rv as f64;
                vertices_uv.push((u, v));
                let bu = self.knots_u.active_basis(u)?;
                let bv = self.knots_v.active_basis(v)?;
                let mut w = Vec::with_capacity(9);
                for (ku, &(nu_val, _, _)) in bu.rows.iter().enumerate() {
                    for (kv, &(nv_val, _, _)) in bv.rows.iter().enumerate() {
                        let c = nu_val * nv_val;
                        if c.abs() > STENCIL_EPS {
                            let a = self.cp_index(bu.first + ku, bv.first + kv);
                            w.push((a as u32, c));
                        }
                    }
                }
                weights.push(w);
            }
        }
        let vid = |i: usize, j: usize| (i * (rv + 1) + j) as u32;
        let mut triangles = Vec::with_capacity(2 * ru * rv);
        for i in 0..ru {
            for j in 0..rv {
                let a = vid(i, j);
                let b = vid(i + 1, j);
                let c = vid(i + 1, j + 1);
                let d = vid(i, j + 1);
                // Alternating diagonals avoid directional bias.
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        Ok(EmbeddedMesh::new(vertices_uv, triangles, weights))
    }
}

/// Triangle mesh embedded in a sheet: vertices at fixed parametric
/// coordinates, interpolated from the control points with constant weights.
#[derive(Debug, Clone)]
pub struct EmbeddedMesh {
    pub vertices_uv: Vec<(f64, f64)>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex sparse interpolation weights `(control index, coefficient)`.
    pub weights: Vec<Vec<(u32, f64)>>,
    /// Unique undirected edges, derived from the triangles.
    pub edges: Vec<[u32; 2]>,
}

impl EmbeddedMesh {
    pub fn new(
        vertices_uv: Vec<(f64, f64)>,
        triangles: Vec<[u32; 3]>,
        weights: Vec<Vec<(u32, f64)>>,
    ) -> Self {
        let mut edges = Vec::with_capacity(triangles.len() * 3 / 2);
        for t in &triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.push([a.min(b), a.max(b)]);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Self {
            vertices_uv,
            triangles,
            weights,
            edges,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices_uv.len()
    }

    /// Interpolate vertex positions from a sheet-local control point slice.
    pub fn positions(&self, control_points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.weights
            .iter()
            .map(|w| {
                let mut p = Vector3::zeros();
                for &(a, c) in w {
                    p += c * control_points[a as usize];
                }
                p
            })
            .collect()
    }
}
