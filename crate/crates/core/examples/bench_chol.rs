use bscloth::assembly::BlockSparseMatrix;
use bscloth::cholesky::{Ordering, SpdSolver};
use std::time::Instant;

fn grid_matrix(n: usize) -> BlockSparseMatrix {
    let dims = n * n;
    let mut triplets = Vec::new();
    for iu in 0..n as i64 {
        for iv in 0..n as i64 {
            let a = (iu * n as i64 + iv) as u32;
            for du in -2i64..=2 {
                for dv in -2i64..=2 {
                    let (ju, jv) = (iu + du, iv + dv);
                    if ju < 0 || jv < 0 || ju >= n as i64 || jv >= n as i64 { continue; }
                    let b = (ju * n as i64 + jv) as u32;
                    let mut blk = [0.0f64; 9];
                    let v = if a == b { 30.0 } else { -0.5 };
                    blk[0] = v; blk[4] = v; blk[8] = v;
                    blk[1] = 0.01; blk[3] = 0.01;
                    triplets.push((a, b, blk));
                }
            }
        }
    }
    BlockSparseMatrix::from_triplets(dims, &triplets)
}

fn main() {
    for n in [32usize, 64, 100] {
        let m = grid_matrix(n);
        let mut solver = SpdSolver::new();
        solver.set_ordering(Ordering::nested_dissection(&[(n, n)]));
        let t0 = Instant::now();
        solver.factor(&m).unwrap();
        let t_first = t0.elapsed();
        let t1 = Instant::now();
        solver.factor(&m).unwrap();
        let t_re = t1.elapsed();
        let b = vec![1.0f64; 3 * n * n];
        let t2 = Instant::now();
        let x = solver.solve(&b).unwrap();
        let t_solve = t2.elapsed();
        println!(
            "n={:3} dofs={:6} Lnnz={:9} first={:?} refactor={:?} solve={:?} x0={:.4}",
            n, 3 * n * n, solver.factor_nnz(), t_first, t_re, t_solve, x[0]
        );
        // against identity ordering for fill comparison
        let mut s2 = SpdSolver::new();
        let t3 = Instant::now();
        s2.factor(&m).unwrap();
        println!("   natural ordering: Lnnz={:9} time={:?}", s2.factor_nnz(), t3.elapsed());
    }
}
