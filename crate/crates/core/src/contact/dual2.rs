//! Second-order forward-mode dual numbers over up to 12 variables (four
//! stacked 3D points), used to differentiate barrier energies through the
//! contact distance functions exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{SMatrix, SVector};

pub const VARS: usize = 12;

/// Value, gradient, and Hessian carried through arithmetic.
#[derive(Clone, Copy, Debug)]
pub struct Dual12 {
    pub v: f64,
    pub g: SVector<f64, VARS>,
    pub h: SMatrix<f64, VARS, VARS>,
}

impl Dual12 {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: SVector::zeros(),
            h: SMatrix::zeros(),
        }
    }

    pub fn var(v: f64, index: usize) -> Self {
        let mut g = SVector::zeros();
        g[index] = 1.0;
        Self {
            v,
            g,
            h: SMatrix::zeros(),
        }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let d1 = 0.5 / s;
        let d2 = -0.25 / (s * self.v);
        self.chain(s, d1, d2)
    }

    pub fn ln(self) -> Self {
        let d1 = 1.0 / self.v;
        self.chain(self.v.ln(), d1, -d1 * d1)
    }

    /// f(self) with given first and second derivatives at `self.v`.
    fn chain(self, f: f64, d1: f64, d2: f64) -> Self {
        Self {
            v: f,
            g: d1 * self.g,
            h: d1 * self.h + d2 * (self.g * self.g.transpose()),
        }
    }
}

impl Add for Dual12 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }
}

impl Sub for Dual12 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            g: self.g - o.g,
            h: self.h - o.h,
        }
    }
}

impl Mul for Dual12 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            g: o.v * self.g + self.v * o.g,
            h: o.v * self.h
                + self.v * o.h
                + self.g * o.g.transpose()
                + o.g * self.g.transpose(),
        }
    }
}

impl Div for Dual12 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // self * o^{-1}
        let inv = o.chain(1.0 / o.v, -1.0 / (o.v * o.v), 2.0 / (o.v * o.v * o.v));
        self * inv
    }
}

impl Neg for Dual12 {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            g: -self.g,
            h: -self.h,
        }
    }
}

impl Mul<Dual12> for f64 {
    type Output = Dual12;
    fn mul(self, o: Dual12) -> Dual12 {
        Dual12 {
            v: self * o.v,
            g: self * o.g,
            h: self * o.h,
        }
    }
}

/// 3-vector of duals with the usual geometric products.
#[derive(Clone, Copy, Debug)]
pub struct DualV3(pub [Dual12; 3]);

impl DualV3 {
    /// Point `p` whose coordinates are variables `3*slot .. 3*slot+3`.
    pub fn var(p: &nalgebra::Vector3<f64>, slot: usize) -> Self {
        Self([
            Dual12::var(p.x, 3 * slot),
            Dual12::var(p.y, 3 * slot + 1),
            Dual12::var(p.z, 3 * slot + 2),
        ])
    }

    pub fn constant(p: &nalgebra::Vector3<f64>) -> Self {
        Self([
            Dual12::constant(p.x),
            Dual12::constant(p.y),
            Dual12::constant(p.z),
        ])
    }

    pub fn sub(self, o: Self) -> Self {
        Self([
            self.0[0] - o.0[0],
            self.0[1] - o.0[1],
            self.0[2] - o.0[2],
        ])
    }

    pub fn dot(self, o: Self) -> Dual12 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(self, o: Self) -> Self {
        Self([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    pub fn norm_squared(self) -> Dual12 {
        self.dot(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matches_finite_differences() {
        // f(x) = sqrt(x0^2 + x1*x2) * ln(x1) - x2 / x0
        let f = |x: &[f64; 3]| (x[0] * x[0] + x[1] * x[2]).sqrt() * x[1].ln() - x[2] / x[0];
        let eval = |x: &[f64; 3]| -> Dual12 {
            let v: Vec<Dual12> = (0..3).map(|i| Dual12::var(x[i], i)).collect();
            let s = (v[0] * v[0] + v[1] * v[2]).sqrt();
            s * v[1].ln() - v[2] / v[0]
        };
        let x = [1.3, 2.1, 0.7];
        let d = eval(&x);
        assert_abs_diff_eq!(d.v, f(&x), epsilon = 1e-14);
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            assert_abs_diff_eq!(d.g[i], (f(&xp) - f(&xm)) / (2.0 * h), epsilon = 1e-8);
            for j in 0..3 {
                let mut xpp = xp;
                xpp[j] += h;
                let mut xpm = xp;
                xpm[j] -= h;
                let mut xmp = xm;
                xmp[j] += h;
                let mut xmm = xm;
                xmm[j] -= h;
                let fd2 = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
                assert_abs_diff_eq!(d.h[(i, j)], fd2, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn cross_dot_consistency() {
        let a = nalgebra::Vector3::new(0.3, -0.2, 1.1);
        let b = nalgebra::Vector3::new(-0.7, 0.4, 0.2);
        let da = DualV3::var(&a, 0);
        let db = DualV3::var(&b, 1);
        let c = da.cross(db);
        let expect = a.cross(&b);
        for i in 0..3 {
            assert_abs_diff_eq!(c.0[i].v, expect[i], epsilon = 1e-14);
        }
        // a x b is orthogonal to both.
        assert_abs_diff_eq!(c.dot(da).v, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.dot(db).v, 0.0, epsilon = 1e-14);
    }
}
