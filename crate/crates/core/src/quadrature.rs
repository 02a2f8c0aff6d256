//! Gauss-Legendre point sets and the reduced-integration layouts for
//! membrane, bending, and mass integrals over a sheet's parametric domain.
//!
//! The layouts partition the domain into a one-span-wide boundary frame and
//! an interior region tiled by dual-grid cells (cells centered on interior
//! knot-line intersections, clipped to the interior region). Membrane
//! points alternate 1x2 / 2x1 two-point Gauss patterns over the dual cells
//! in a checkerboard; corners of the frame get 3x3 and frame edges get 3x2
//! or 2x3 with the long axis along the boundary. Bending uses a single
//! point per dual cell plus one per boundary span.

use crate::error::{Result, SimError};
use crate::spline::SplineSheet;

/// What a rule integrates; determines stencil pruning during geometry
/// precomputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Membrane,
    Bending,
    Mass,
}

/// Interior membrane point placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum MembraneScheme {
    /// Alternating 1x2 / 2x1 patterns on the dual grid.
    #[default]
    Reduced,
    /// 2x2 Gauss per interior knot span (ablation baseline).
    FullTwoByTwo,
    /// One point per dual cell. Unstable by design; exposed only for the
    /// hourglass diagnostics and never selectable from scene files.
    DiagnosticOnePoint,
}

/// A quadrature site in parametric coordinates with parametric weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSite {
    pub u: f64,
    pub v: f64,
    pub weight: f64,
}

/// An ordered, deterministic set of quadrature sites.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub kind: RuleKind,
    pub points: Vec<QuadSite>,
}

impl QuadRule {
    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact for polynomials of
/// degree `2k - 1`.
pub fn gauss_legendre_1d(k: usize) -> Result<Vec<(f64, f64)>> {
    match k {
        1 => Ok(vec![(0.5, 1.0)]),
        2 => {
            let d = 3.0f64.sqrt() / 6.0;
            Ok(vec![(0.5 - d, 0.5), (0.5 + d, 0.5)])
        }
        3 => {
            let d = 15.0f64.sqrt() / 10.0;
            Ok(vec![
                (0.5 - d, 5.0 / 18.0),
                (0.5, 8.0 / 18.0),
                (0.5 + d, 5.0 / 18.0),
            ])
        }
        _ => Err(SimError::Domain(format!(
            "unsupported Gauss-Legendre point count {k}"
        ))),
    }
}

/// The dual grid of a sheet: cells centered on interior knot-line
/// intersections (clipped to the interior region) plus the one-span-wide
/// boundary frame. Only defined for sheets with at least 3 spans per
/// direction.
#[derive(Debug, Clone)]
pub struct DualGrid {
    pub spans_u: usize,
    pub spans_v: usize,
}

/// One clipped dual cell, centered on the interior knot intersection
/// `(i, j)`.
#[derive(Debug, Clone, Copy)]
pub struct DualCell {
    pub i: usize,
    pub j: usize,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
}

impl DualCell {
    pub fn area(&self) -> f64 {
        (self.u_range.1 - self.u_range.0) * (self.v_range.1 - self.v_range.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.i as f64, self.j as f64)
    }
}

impl DualGrid {
    pub fn new(sheet: &SplineSheet) -> Result<Self> {
        let spans_u = sheet.knots_u.span_count();
        let spans_v = sheet.knots_v.span_count();
        if spans_u < 3 || spans_v < 3 {
            return Err(SimError::Discretization(format!(
                "dual grid needs at least 3 spans per direction, got {spans_u}x{spans_v}"
            )));
        }
        Ok(Self { spans_u, spans_v })
    }

    /// Clipped interior dual cells in row-major `(i, j)` order.
    pub fn interior_cells(&self) -> Vec<DualCell> {
        let interior_u = (1.0, (self.spans_u - 1) as f64);
        let interior_v = (1.0, (self.spans_v - 1) as f64);
        let mut cells = Vec::with_capacity((self.spans_u - 1) * (self.spans_v - 1));
        for i in 1..self.spans_u {
            for j in 1..self.spans_v {
                let u0 = (i as f64 - 0.5).max(interior_u.0);
                let u1 = (i as f64 + 0.5).min(interior_u.1);
                let v0 = (j as f64 - 0.5).max(interior_v.0);
                let v1 = (j as f64 + 0.5).min(interior_v.1);
                cells.push(DualCell {
                    i,
                    j,
                    u_range: (u0, u1),
                    v_range: (v0, v1),
                });
            }
        }
        cells
    }

    /// Boundary knot spans `(si, sj)` in row-major order.
    pub fn boundary_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        for si in 0..self.spans_u {
            for sj in 0..self.spans_v {
                if si == 0 || si + 1 == self.spans_u || sj == 0 || sj + 1 == self.spans_v {
                    spans.push((si, sj));
                }
            }
        }
        spans
    }
}

fn push_tensor(points: &mut Vec<QuadSite>, ku: usize, kv: usize, span: (f64, f64, f64, f64)) {
    let (u0, u1, v0, v1) = span;
    let gu = gauss_legendre_1d(ku).expect("k in 1..=3");
    let gv = gauss_legendre_1d(kv).expect("k in 1..=3");
    let du = u1 - u0;
    let dv = v1 - v0;
    for &(nu, wu) in &gu {
        for &(nv, wv) in &gv {
            points.push(QuadSite {
                u: u0 + nu * du,
                v: v0 + nv * dv,
                weight: wu * wv * du * dv,
            });
        }
    }
}

/// Boundary-frame membrane pattern: 3x3 at corners, 3x2 / 2x3 along edges
/// with the long axis parallel to the boundary.
fn push_boundary_membrane(points: &mut Vec<QuadSite>, grid: &DualGrid) {
    for (si, sj) in grid.boundary_spans() {
        let span = (si as f64, si as f64 + 1.0, sj as f64, sj as f64 + 1.0);
        let on_u_edge = si == 0 || si + 1 == grid.spans_u;
        let on_v_edge = sj == 0 || sj + 1 == grid.spans_v;
        let (ku, kv) = match (on_u_edge, on_v_edge) {
            (true, true) => (3, 3),   // corner span
            (true, false) => (2, 3),  // left/right edge: long axis along v
            (false, true) => (3, 2),  // bottom/top edge: long axis along u
            (false, false) => unreachable!("not a boundary span"),
        };
        push_tensor(points, ku, kv, span);
    }
}

fn per_span_tensor_rule(sheet: &SplineSheet, kind: RuleKind, k: usize) -> QuadRule {
    let spans_u = sheet.knots_u.span_count();
    let spans_v = sheet.knots_v.span_count();
    let mut points = Vec::new();
    for si in 0..spans_u {
        for sj in 0..spans_v {
            push_tensor(
                &mut points,
                k,
                k,
                (si as f64, si as f64 + 1.0, sj as f64, sj as f64 + 1.0),
            );
        }
    }
    QuadRule { kind, points }
}

/// Membrane quadrature for a sheet. Sheets narrower than 3 spans have no
/// interior dual grid; they fall back to 2x2 per span with a warning.
pub fn build_membrane_rule(sheet: &SplineSheet, scheme: MembraneScheme) -> QuadRule {
    let grid = match DualGrid::new(sheet) {
        Ok(g) => g,
        Err(_) => {
            log::warn!(
                "sheet with {}x{} spans has no interior dual grid; \
                 falling back to 2x2 quadrature per knot span",
                sheet.knots_u.span_count(),
                sheet.knots_v.span_count()
            );
            return per_span_tensor_rule(sheet, RuleKind::Membrane, 2);
        }
    };
    let mut points = Vec::new();
    push_boundary_membrane(&mut points, &grid);
    match scheme {
        MembraneScheme::Reduced => {
            for cell in grid.interior_cells() {
                let (cu, cv) = cell.center();
                let area = cell.area();
                // Checkerboard: even parity fixes u on the knot line and
                // spreads two Gauss points along v; odd parity transposes.
                let fixed_u = (cell.i + cell.j) % 2 == 0;
                let g = gauss_legendre_1d(2).expect("two-point rule");
                if fixed_u {
                    let (v0, v1) = cell.v_range;
                    for &(n, _) in &g {
                        points.push(QuadSite {
                            u: cu,
                            v: v0 + n * (v1 - v0),
                            weight: 0.5 * area,
                        });
                    }
                } else {
                    let (u0, u1) = cell.u_range;
                    for &(n, _) in &g {
                        points.push(QuadSite {
                            u: u0 + n * (u1 - u0),
                            v: cv,
                            weight: 0.5 * area,
                        });
                    }
                }
            }
        }
        MembraneScheme::FullTwoByTwo => {
            for si in 1..grid.spans_u - 1 {
                for sj in 1..grid.spans_v - 1 {
                    push_tensor(
                        &mut points,
                        2,
                        2,
                        (si as f64, si as f64 + 1.0, sj as f64, sj as f64 + 1.0),
                    );
                }
            }
        }
        MembraneScheme::DiagnosticOnePoint => {
            for cell in grid.interior_cells() {
                let (cu, cv) = cell.center();
                points.push(QuadSite {
                    u: cu,
                    v: cv,
                    weight: cell.area(),
                });
            }
        }
    }
    QuadRule {
        kind: RuleKind::Membrane,
        points,
    }
}

/// Bending quadrature: one point per boundary knot-span center and one per
/// interior dual-cell center, weighted by covered cell areas.
pub fn build_bending_rule(sheet: &SplineSheet) -> QuadRule {
    let grid = match DualGrid::new(sheet) {
        Ok(g) => g,
        Err(_) => {
            log::warn!(
                "sheet with {}x{} spans has no interior dual grid; \
                 falling back to one-point bending quadrature per knot span",
                sheet.knots_u.span_count(),
                sheet.knots_v.span_count()
            );
            return per_span_tensor_rule(sheet, RuleKind::Bending, 1);
        }
    };
    let mut points = Vec::new();
    for (si, sj) in grid.boundary_spans() {
        points.push(QuadSite {
            u: si as f64 + 0.5,
            v: sj as f64 + 0.5,
            weight: 1.0,
        });
    }
    for cell in grid.interior_cells() {
        let (cu, cv) = cell.center();
        points.push(QuadSite {
            u: cu,
            v: cv,
            weight: cell.area(),
        });
    }
    QuadRule {
        kind: RuleKind::Bending,
        points,
    }
}

/// Mass quadrature: 3x3 Gauss per knot span, exact for the degree-4
/// products of two quadratic bases per span.
pub fn build_mass_rule(sheet: &SplineSheet) -> QuadRule {
    per_span_tensor_rule(sheet, RuleKind::Mass, 3)
}
