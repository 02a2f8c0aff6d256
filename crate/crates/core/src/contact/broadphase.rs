//! Uniform spatial-hash broad phase over embedded-mesh primitives.
//!
//! Primitives are binned by the cells their (optionally swept and inflated)
//! bounding boxes cover; candidate pairs come from shared cells and are
//! returned sorted and deduplicated. The output is a superset of every pair
//! within the query radius.

use std::collections::HashMap;

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Aabb {
    fn of(points: &[Vector3<f64>]) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Self { lo, hi }
    }

    fn inflated(mut self, r: f64) -> Self {
        self.lo -= Vector3::repeat(r);
        self.hi += Vector3::repeat(r);
        self
    }
}

/// Candidate vertex-triangle and edge-edge index pairs.
#[derive(Debug, Default, Clone)]
pub struct CandidateSet {
    /// `(vertex id, triangle index)`, topologically incident pairs removed.
    pub vertex_triangle: Vec<(u32, u32)>,
    /// `(edge index, edge index)` with the first strictly smaller; pairs
    /// sharing a vertex removed.
    pub edge_edge: Vec<(u32, u32)>,
}

struct Grid {
    cell: f64,
    map: HashMap<(i32, i32, i32), Vec<u32>>,
}

impl Grid {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            map: HashMap::new(),
        }
    }

    fn key(&self, x: f64, y: f64, z: f64) -> (i32, i32, i32) {
        (
            (x / self.cell).floor() as i32,
            (y / self.cell).floor() as i32,
            (z / self.cell).floor() as i32,
        )
    }

    fn insert_box(&mut self, id: u32, b: &Aabb) {
        let lo = self.key(b.lo.x, b.lo.y, b.lo.z);
        let hi = self.key(b.hi.x, b.hi.y, b.hi.z);
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                for k in lo.2..=hi.2 {
                    self.map.entry((i, j, k)).or_default().push(id);
                }
            }
        }
    }

    fn query_box(&self, b: &Aabb, out: &mut Vec<u32>) {
        let lo = self.key(b.lo.x, b.lo.y, b.lo.z);
        let hi = self.key(b.hi.x, b.hi.y, b.hi.z);
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                for k in lo.2..=hi.2 {
                    if let Some(v) = self.map.get(&(i, j, k)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// Collect candidate pairs among primitives whose boxes (swept over the
/// optional displacements, inflated by `radius`) overlap.
pub fn candidates(
    positions: &[Vector3<f64>],
    displacements: Option<&[Vector3<f64>]>,
    triangles: &[[u32; 3]],
    edges: &[[u32; 2]],
    radius: f64,
) -> CandidateSet {
    let vert_box = |v: u32| -> Aabb {
        let p = positions[v as usize];
        let mut pts = vec![p];
        if let Some(d) = displacements {
            pts.push(p + d[v as usize]);
        }
        Aabb::of(&pts)
    };
    let prim_box = |vs: &[u32]| -> Aabb {
        let mut pts = Vec::with_capacity(vs.len() * 2);
        for &v in vs {
            pts.push(positions[v as usize]);
            if let Some(d) = displacements {
                pts.push(positions[v as usize] + d[v as usize]);
            }
        }
        Aabb::of(&pts)
    };

    // Cell size: typical primitive extent plus the query radius keeps both
    // insert and query cell counts small.
    let mut mean_extent = 0.0;
    for t in triangles.iter().take(200) {
        let b = prim_box(t);
        mean_extent += (b.hi - b.lo).amax();
    }
    let cell = if triangles.is_empty() {
        (radius * 2.0).max(1e-3)
    } else {
        (mean_extent / triangles.len().min(200) as f64 + radius).max(1e-6)
    };

    let mut tri_grid = Grid::new(cell);
    for (i, t) in triangles.iter().enumerate() {
        tri_grid.insert_box(i as u32, &prim_box(t));
    }
    let mut edge_grid = Grid::new(cell);
    for (i, e) in edges.iter().enumerate() {
        edge_grid.insert_box(i as u32, &prim_box(e));
    }

    let mut set = CandidateSet::default();
    let mut scratch = Vec::new();
    for v in 0..positions.len() as u32 {
        scratch.clear();
        tri_grid.query_box(&vert_box(v).inflated(radius), &mut scratch);
        for &ti in &scratch {
            let t = &triangles[ti as usize];
            if t.contains(&v) {
                continue;
            }
            set.vertex_triangle.push((v, ti));
        }
    }
    for (i, e) in edges.iter().enumerate() {
        scratch.clear();
        edge_grid.query_box(&prim_box(e).inflated(radius), &mut scratch);
        for &j in &scratch {
            if j <= i as u32 {
                continue;
            }
            let o = &edges[j as usize];
            if e.contains(&o[0]) || e.contains(&o[1]) {
                continue;
            }
            set.edge_edge.push((i as u32, j));
        }
    }
    set.vertex_triangle.sort_unstable();
    set.edge_edge.sort_unstable();
    set
}
