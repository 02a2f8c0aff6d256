//! Closest-distance computations between contact primitives with region
//! classification, and their squared-distance formulas evaluated on dual
//! numbers for exact derivatives.
//!
//! Each unclamped configuration (vertex region, edge region, face region,
//! edge-edge interior) has its own closed-form squared distance; the
//! classifier picks the active one and derivatives are taken of that closed
//! form, following the usual incremental-potential contact treatment.

use nalgebra::Vector3;

use super::dual2::{Dual12, DualV3};

/// Which closed-form squared distance is active, with the participating
/// point slots (indices into the pair's vertex list).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceForm {
    /// |a - b|^2 between two points.
    PointPoint(usize, usize),
    /// Point against the infinite line of an edge.
    PointLine(usize, usize, usize),
    /// Point against the plane of a triangle.
    PointPlane(usize, usize, usize, usize),
    /// Infinite line against infinite line.
    LineLine(usize, usize, usize, usize),
}

fn pp2(a: DualV3, b: DualV3) -> Dual12 {
    a.sub(b).norm_squared()
}

fn pl2(p: DualV3, e0: DualV3, e1: DualV3) -> Dual12 {
    let d = e1.sub(e0);
    let w = p.sub(e0);
    w.cross(d).norm_squared() / d.norm_squared()
}

fn ppl2(p: DualV3, t0: DualV3, t1: DualV3, t2: DualV3) -> Dual12 {
    let n = t1.sub(t0).cross(t2.sub(t0));
    let w = p.sub(t0).dot(n);
    w * w / n.norm_squared()
}

fn ll2(p0: DualV3, p1: DualV3, q0: DualV3, q1: DualV3) -> Dual12 {
    let n = p1.sub(p0).cross(q1.sub(q0));
    let w = q0.sub(p0).dot(n);
    w * w / n.norm_squared()
}

/// Evaluate the active squared distance with derivatives over the stacked
/// coordinates of `points` (up to 4 points, 12 variables).
pub fn eval_form(form: DistanceForm, points: &[Vector3<f64>]) -> Dual12 {
    let var = |slot: usize| DualV3::var(&points[slot], slot);
    match form {
        DistanceForm::PointPoint(a, b) => pp2(var(a), var(b)),
        DistanceForm::PointLine(p, e0, e1) => pl2(var(p), var(e0), var(e1)),
        DistanceForm::PointPlane(p, t0, t1, t2) => ppl2(var(p), var(t0), var(t1), var(t2)),
        DistanceForm::LineLine(p0, p1, q0, q1) => ll2(var(p0), var(p1), var(q0), var(q1)),
    }
}

/// Plain-value squared distance of a form.
pub fn eval_form_value(form: DistanceForm, points: &[Vector3<f64>]) -> f64 {
    eval_form(form, points).v
}

/// Classify the closest-point region of a point against a triangle.
/// Point slots are `[p, t0, t1, t2]`.
pub fn point_triangle_form(
    p: &Vector3<f64>,
    t0: &Vector3<f64>,
    t1: &Vector3<f64>,
    t2: &Vector3<f64>,
) -> DistanceForm {
    let ab = t1 - t0;
    let ac = t2 - t0;
    let ap = p - t0;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return DistanceForm::PointPoint(0, 1);
    }
    let bp = p - t1;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return DistanceForm::PointPoint(0, 2);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return DistanceForm::PointLine(0, 1, 2);
    }
    let cp = p - t2;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return DistanceForm::PointPoint(0, 3);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return DistanceForm::PointLine(0, 1, 3);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return DistanceForm::PointLine(0, 2, 3);
    }
    DistanceForm::PointPlane(0, 1, 2, 3)
}

/// Distance from a point to a triangle.
pub fn point_triangle_distance(
    p: &Vector3<f64>,
    t0: &Vector3<f64>,
    t1: &Vector3<f64>,
    t2: &Vector3<f64>,
) -> (f64, DistanceForm) {
    let form = point_triangle_form(p, t0, t1, t2);
    let pts = [*p, *t0, *t1, *t2];
    (eval_form_value(form, &pts).max(0.0).sqrt(), form)
}

/// Denominator threshold below which two edges count as parallel and the
/// distance falls back to the minimum over the four point-edge cases.
const PARALLEL_EPS: f64 = 1e-12;

/// Classify the closest-point region between two segments.
/// Point slots are `[p0, p1, q0, q1]`.
pub fn edge_edge_form(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    q0: &Vector3<f64>,
    q1: &Vector3<f64>,
) -> DistanceForm {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;

    let cross_norm2 = d1.cross(&d2).norm_squared();
    let parallel = cross_norm2 <= PARALLEL_EPS * a * e;

    if !parallel && denom > 0.0 {
        let s = ((b * f - c * e) / denom).clamp(0.0, 1.0);
        let t_unclamped = (b * s + f) / e;
        if (0.0..=1.0).contains(&t_unclamped) && s > 0.0 && s < 1.0 {
            return DistanceForm::LineLine(0, 1, 2, 3);
        }
        // Clamp and reclassify against the endpoint cases below.
    }

    // Fall back to the best of the four point-edge distances (covers
    // endpoint regions and parallel edges; no mollifier).
    let pts = [*p0, *p1, *q0, *q1];
    let seg_clamped = |p: &Vector3<f64>, e0: &Vector3<f64>, e1: &Vector3<f64>| -> (f64, f64) {
        let d = e1 - e0;
        let t = ((p - e0).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        ((p - (e0 + t * d)).norm_squared(), t)
    };
    let candidates = [
        (seg_clamped(p0, q0, q1), (0usize, 2usize, 3usize)),
        (seg_clamped(p1, q0, q1), (1, 2, 3)),
        (seg_clamped(q0, p0, p1), (2, 0, 1)),
        (seg_clamped(q1, p0, p1), (3, 0, 1)),
    ];
    let mut best = f64::INFINITY;
    let mut best_form = DistanceForm::PointPoint(0, 2);
    for ((dist2, t), (pt, e0, e1)) in candidates {
        if dist2 < best {
            best = dist2;
            best_form = if t <= 0.0 {
                DistanceForm::PointPoint(pt, e0)
            } else if t >= 1.0 {
                DistanceForm::PointPoint(pt, e1)
            } else {
                DistanceForm::PointLine(pt, e0, e1)
            };
        }
    }
    let _ = pts;
    best_form
}

/// Distance between two segments.
pub fn edge_edge_distance(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    q0: &Vector3<f64>,
    q1: &Vector3<f64>,
) -> (f64, DistanceForm) {
    let form = edge_edge_form(p0, p1, q0, q1);
    let pts = [*p0, *p1, *q0, *q1];
    (eval_form_value(form, &pts).max(0.0).sqrt(), form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn brute_point_triangle(
        p: &Vector3<f64>,
        t0: &Vector3<f64>,
        t1: &Vector3<f64>,
        t2: &Vector3<f64>,
    ) -> f64 {
        let mut best = f64::INFINITY;
        let n = 300;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let a = i as f64 / n as f64;
                let b = j as f64 / n as f64;
                let c = 1.0 - a - b;
                let q = a * t0 + b * t1 + c * t2;
                best = best.min((p - q).norm());
            }
        }
        best
    }

    #[test]
    fn point_triangle_regions() {
        let t0 = Vector3::new(0.0, 0.0, 0.0);
        let t1 = Vector3::new(1.0, 0.0, 0.0);
        let t2 = Vector3::new(0.0, 1.0, 0.0);
        // Face region.
        let (d, form) = point_triangle_distance(&Vector3::new(0.2, 0.2, 0.5), &t0, &t1, &t2);
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-14);
        assert_eq!(form, DistanceForm::PointPlane(0, 1, 2, 3));
        // Vertex region.
        let (d, form) = point_triangle_distance(&Vector3::new(-1.0, -1.0, 0.0), &t0, &t1, &t2);
        assert_abs_diff_eq!(d, 2.0f64.sqrt(), epsilon = 1e-14);
        assert_eq!(form, DistanceForm::PointPoint(0, 1));
        // Edge region.
        let (d, form) = point_triangle_distance(&Vector3::new(0.5, -1.0, 0.0), &t0, &t1, &t2);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-14);
        assert_eq!(form, DistanceForm::PointLine(0, 1, 2));
    }

    #[test]
    fn point_triangle_matches_sampling_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let r = |rng: &mut rand_chacha::ChaCha8Rng| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            };
            let (p, t0, t1, t2) = (r(&mut rng), r(&mut rng), r(&mut rng), r(&mut rng));
            if (t1 - t0).cross(&(t2 - t0)).norm() < 1e-3 {
                continue;
            }
            let (d, _) = point_triangle_distance(&p, &t0, &t1, &t2);
            let oracle = brute_point_triangle(&p, &t0, &t1, &t2);
            assert_abs_diff_eq!(d, oracle, epsilon = 5e-3);
            assert!(d <= oracle + 1e-12);
        }
    }

    fn brute_edge_edge(
        p0: &Vector3<f64>,
        p1: &Vector3<f64>,
        q0: &Vector3<f64>,
        q1: &Vector3<f64>,
    ) -> f64 {
        let mut best = f64::INFINITY;
        let n = 600;
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let a = p0 + s * (p1 - p0);
            for j in 0..=n {
                let t = j as f64 / n as f64;
                let b = q0 + t * (q1 - q0);
                best = best.min((a - b).norm());
            }
        }
        best
    }

    #[test]
    fn edge_edge_cases() {
        // Crossing interior-interior.
        let (d, form) = edge_edge_distance(
            &Vector3::new(-1.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, -1.0, 0.3),
            &Vector3::new(0.0, 1.0, 0.3),
        );
        assert_abs_diff_eq!(d, 0.3, epsilon = 1e-14);
        assert_eq!(form, DistanceForm::LineLine(0, 1, 2, 3));

        // Endpoint-endpoint.
        let (d, form) = edge_edge_distance(
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(2.0, 0.0, 0.0),
            &Vector3::new(3.0, 0.0, 1.0),
        );
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-14);
        assert_eq!(form, DistanceForm::PointPoint(1, 2));

        // Parallel edges fall back to point-edge.
        let (d, _) = edge_edge_distance(
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.25, 0.0, 0.4),
            &Vector3::new(0.75, 0.0, 0.4),
        );
        assert_abs_diff_eq!(d, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn edge_edge_matches_sampling_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let r = |rng: &mut rand_chacha::ChaCha8Rng| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            };
            let (p0, p1, q0, q1) = (r(&mut rng), r(&mut rng), r(&mut rng), r(&mut rng));
            let (d, _) = edge_edge_distance(&p0, &p1, &q0, &q1);
            let oracle = brute_edge_edge(&p0, &p1, &q0, &q1);
            assert_abs_diff_eq!(d, oracle, epsilon = 5e-3);
            assert!(d <= oracle + 1e-12);
        }
    }

    #[test]
    fn form_derivatives_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let r = |rng: &mut rand_chacha::ChaCha8Rng| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        };
        for _ in 0..20 {
            let pts = [r(&mut rng), r(&mut rng), r(&mut rng), r(&mut rng)];
            let forms = [
                DistanceForm::PointPoint(0, 2),
                DistanceForm::PointLine(0, 2, 3),
                DistanceForm::PointPlane(0, 1, 2, 3),
                DistanceForm::LineLine(0, 1, 2, 3),
            ];
            for form in forms {
                let d = eval_form(form, &pts);
                let h = 1e-6;
                for var in 0..12 {
                    let mut pp = pts;
                    pp[var / 3][var % 3] += h;
                    let mut pm = pts;
                    pm[var / 3][var % 3] -= h;
                    let fd = (eval_form_value(form, &pp) - eval_form_value(form, &pm)) / (2.0 * h);
                    assert_abs_diff_eq!(d.g[var], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
                }
            }
        }
    }
}
