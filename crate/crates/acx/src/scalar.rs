//! Real-valued scalar fields u(z) with first and second holomorphic-frame
//! partials, either exact (polynomials in z, zbar) or by central differences.

use crate::{AcxError, CVec, Result, C64};
use std::sync::Arc;

/// Default finite-difference step for derivatives of u.
pub const H_U: f64 = 1e-4;

/// Polynomial in (z, zbar) with complex coefficients; real-valued when every
/// monomial comes paired with its conjugate.
#[derive(Debug, Clone, Default)]
pub struct Poly {
    /// (z-exponents, zbar-exponents, coefficient); exponent lists are sorted
    /// index multisets, e.g. z_1^2 zbar_2 = ([0, 0], [1]).
    pub terms: Vec<(Vec<usize>, Vec<usize>, C64)>,
}

impl Poly {
    pub fn new() -> Self {
        Poly { terms: vec![] }
    }

    pub fn add(&mut self, mut a: Vec<usize>, mut b: Vec<usize>, c: C64) {
        a.sort_unstable();
        b.sort_unstable();
        for t in &mut self.terms {
            if t.0 == a && t.1 == b {
                t.2 += c;
                return;
            }
        }
        self.terms.push((a, b, c));
    }

    /// Add Re(c z^a zbar^b) = (c/2) z^a zbar^b + (conj(c)/2) z^b zbar^a.
    pub fn add_re(&mut self, a: Vec<usize>, b: Vec<usize>, c: C64) {
        self.add(a.clone(), b.clone(), 0.5 * c);
        self.add(b, a, 0.5 * c.conj());
    }

    pub fn eval(&self, z: &CVec) -> C64 {
        let zb = z.conjugate();
        let mut out = C64::new(0.0, 0.0);
        for (a, b, c) in &self.terms {
            let mut v = *c;
            for &i in a {
                v *= z[i];
            }
            for &i in b {
                v *= zb[i];
            }
            out += v;
        }
        out
    }

    pub fn dz(&self, k: usize) -> Poly {
        let mut out = Poly::new();
        for (a, b, c) in &self.terms {
            for idx in 0..a.len() {
                if a[idx] == k {
                    let mut a2 = a.clone();
                    a2.remove(idx);
                    out.add(a2, b.clone(), *c);
                }
            }
        }
        out
    }

    pub fn dzb(&self, k: usize) -> Poly {
        let mut out = Poly::new();
        for (a, b, c) in &self.terms {
            for idx in 0..b.len() {
                if b[idx] == k {
                    let mut b2 = b.clone();
                    b2.remove(idx);
                    out.add(a.clone(), b2, *c);
                }
            }
        }
        out
    }
}

/// A real scalar field with u, du/dz_k, d2u/dz_k dz_l, d2u/dz_k dzbar_l.
/// The remaining partials follow from reality: du/dzbar = conj(du/dz),
/// d2u/dzbar dzbar = conj(d2u/dz dz).
#[derive(Clone)]
pub struct ScalarField {
    pub n: usize,
    u: Arc<dyn Fn(&CVec) -> f64 + Send + Sync>,
    uz: Arc<dyn Fn(&CVec, usize) -> C64 + Send + Sync>,
    uzz: Arc<dyn Fn(&CVec, usize, usize) -> C64 + Send + Sync>,
    uzzb: Arc<dyn Fn(&CVec, usize, usize) -> C64 + Send + Sync>,
}

impl ScalarField {
    pub fn from_poly(n: usize, p: &Poly) -> Result<Self> {
        // reality check at a few deterministic probe points
        for probe in 0..4usize {
            let z = CVec::from_fn(n, |k, _| {
                C64::new(
                    0.1 + 0.23 * (k as f64 + 1.0) * (probe as f64 + 1.0),
                    -0.07 * (k as f64 + 1.0) + 0.11 * probe as f64,
                )
            });
            if p.eval(&z).im.abs() > 1e-10 * (1.0 + p.eval(&z).norm()) {
                return Err(AcxError::Contract(
                    "polynomial is not real-valued; pair each monomial with its conjugate".into(),
                ));
            }
        }
        let pz: Vec<Poly> = (0..n).map(|k| p.dz(k)).collect();
        let pzz: Vec<Vec<Poly>> = pz.iter().map(|q| (0..n).map(|l| q.dz(l)).collect()).collect();
        let pzzb: Vec<Vec<Poly>> = pz.iter().map(|q| (0..n).map(|l| q.dzb(l)).collect()).collect();
        let p0 = p.clone();
        Ok(ScalarField {
            n,
            u: Arc::new(move |z| p0.eval(z).re),
            uz: {
                let pz = pz.clone();
                Arc::new(move |z, k| pz[k].eval(z))
            },
            uzz: Arc::new(move |z, k, l| pzz[k][l].eval(z)),
            uzzb: Arc::new(move |z, k, l| pzzb[k][l].eval(z)),
        })
    }

    /// Sampled field with central-difference partials (step `h`).
    pub fn from_fn(n: usize, h: f64, u: impl Fn(&CVec) -> f64 + Send + Sync + 'static) -> Self {
        let u = Arc::new(u);
        fn shift(z: &CVec, k: usize, dre: f64, dim: f64) -> CVec {
            let mut w = z.clone();
            w[k] += C64::new(dre, dim);
            w
        }
        let u1 = u.clone();
        let uz = Arc::new(move |z: &CVec, k: usize| -> C64 {
            let dx = (u1(&shift(z, k, h, 0.0)) - u1(&shift(z, k, -h, 0.0))) / (2.0 * h);
            let dy = (u1(&shift(z, k, 0.0, h)) - u1(&shift(z, k, 0.0, -h))) / (2.0 * h);
            C64::new(0.5 * dx, -0.5 * dy)
        });
        // real-coordinate second partials; coords indexed 0..2n as
        // (x_k for dre, y_k for dim)
        let u2 = u.clone();
        let d2 = Arc::new(move |z: &CVec, a: (usize, bool), b: (usize, bool)| -> f64 {
            let step = |zz: &CVec, c: (usize, bool), s: f64| -> CVec {
                if c.1 {
                    shift(zz, c.0, 0.0, s)
                } else {
                    shift(zz, c.0, s, 0.0)
                }
            };
            if a == b {
                (u2(&step(z, a, h)) - 2.0 * u2(z) + u2(&step(z, a, -h))) / (h * h)
            } else {
                (u2(&step(&step(z, a, h), b, h)) - u2(&step(&step(z, a, h), b, -h))
                    - u2(&step(&step(z, a, -h), b, h))
                    + u2(&step(&step(z, a, -h), b, -h)))
                    / (4.0 * h * h)
            }
        });
        let d2a: Arc<dyn Fn(&CVec, (usize, bool), (usize, bool)) -> f64 + Send + Sync> = d2.clone();
        let uzz = Arc::new(move |z: &CVec, k: usize, l: usize| -> C64 {
            let xx = d2a(z, (k, false), (l, false));
            let xy = d2a(z, (k, false), (l, true));
            let yx = d2a(z, (k, true), (l, false));
            let yy = d2a(z, (k, true), (l, true));
            0.25 * C64::new(xx - yy, -xy - yx)
        });
        let uzzb = Arc::new(move |z: &CVec, k: usize, l: usize| -> C64 {
            let xx = d2(z, (k, false), (l, false));
            let xy = d2(z, (k, false), (l, true));
            let yx = d2(z, (k, true), (l, false));
            let yy = d2(z, (k, true), (l, true));
            0.25 * C64::new(xx + yy, xy - yx)
        });
        ScalarField {
            n,
            u: {
                let u = u.clone();
                Arc::new(move |z| u(z))
            },
            uz,
            uzz,
            uzzb,
        }
    }

    /// Assemble a field from explicit derivative closures. The caller owns
    /// the consistency of the derivatives (used for exact chain rules).
    pub(crate) fn from_parts(
        n: usize,
        u: Arc<dyn Fn(&CVec) -> f64 + Send + Sync>,
        uz: Arc<dyn Fn(&CVec, usize) -> C64 + Send + Sync>,
        uzz: Arc<dyn Fn(&CVec, usize, usize) -> C64 + Send + Sync>,
        uzzb: Arc<dyn Fn(&CVec, usize, usize) -> C64 + Send + Sync>,
    ) -> Self {
        ScalarField { n, u, uz, uzz, uzzb }
    }

    pub fn value(&self, z: &CVec) -> f64 {
        (self.u)(z)
    }

    pub fn uz(&self, z: &CVec, k: usize) -> C64 {
        (self.uz)(z, k)
    }

    pub fn uzb(&self, z: &CVec, k: usize) -> C64 {
        (self.uz)(z, k).conj()
    }

    pub fn uzz(&self, z: &CVec, k: usize, l: usize) -> C64 {
        (self.uzz)(z, k, l)
    }

    pub fn uzzb(&self, z: &CVec, k: usize, l: usize) -> C64 {
        (self.uzzb)(z, k, l)
    }

    // --- builtins ---

    /// |z|^2.
    pub fn abs2(n: usize) -> Self {
        let mut p = Poly::new();
        for k in 0..n {
            p.add(vec![k], vec![k], C64::new(1.0, 0.0));
        }
        ScalarField::from_poly(n, &p).unwrap()
    }

    /// -|z|^2.
    pub fn neg_abs2(n: usize) -> Self {
        let mut p = Poly::new();
        for k in 0..n {
            p.add(vec![k], vec![k], C64::new(-1.0, 0.0));
        }
        ScalarField::from_poly(n, &p).unwrap()
    }

    /// Re z_1.
    pub fn re_z1(n: usize) -> Self {
        let mut p = Poly::new();
        p.add_re(vec![0], vec![], C64::new(1.0, 0.0));
        ScalarField::from_poly(n, &p).unwrap()
    }

    /// |z|^2 + Re(z_1^2 zbar_2) + 0.3 Re(z_1 z_2) + 0.2 Re(z_1): a mixed test
    /// field with nontrivial u_zz, u_zzb and gradient (needs n >= 2).
    pub fn mixed_poly(n: usize) -> Self {
        assert!(n >= 2);
        let mut p = Poly::new();
        for k in 0..n {
            p.add(vec![k], vec![k], C64::new(1.0, 0.0));
        }
        p.add_re(vec![0, 0], vec![1], C64::new(1.0, 0.0));
        p.add_re(vec![0, 1], vec![], C64::new(0.3, 0.0));
        p.add_re(vec![0], vec![], C64::new(0.2, 0.0));
        ScalarField::from_poly(n, &p).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cvec(parts: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(parts.len(), parts.iter().map(|&(re, im)| C64::new(re, im)))
    }

    #[test]
    fn abs2_partials() {
        let u = ScalarField::abs2(2);
        let z = cvec(&[(0.3, -0.2), (0.1, 0.4)]);
        assert!((u.value(&z) - (z[0].norm_sqr() + z[1].norm_sqr())).abs() <= 1e-15);
        assert!((u.uz(&z, 0) - z[0].conj()).norm() <= 1e-15);
        assert!((u.uzzb(&z, 0, 0) - C64::new(1.0, 0.0)).norm() <= 1e-15);
        assert!(u.uzzb(&z, 0, 1).norm() <= 1e-15);
        assert!(u.uzz(&z, 0, 0).norm() <= 1e-15);
    }

    #[test]
    fn nonreal_poly_is_rejected() {
        let mut p = Poly::new();
        p.add(vec![0], vec![], C64::new(1.0, 0.0)); // z_1 alone is not real
        assert!(ScalarField::from_poly(1, &p).is_err());
    }

    #[test]
    fn fd_field_matches_analytic_partials() {
        let exact = ScalarField::mixed_poly(2);
        let ex2 = exact.clone();
        let fd = ScalarField::from_fn(2, H_U, move |z| ex2.value(z));
        let z = cvec(&[(0.21, -0.13), (0.05, 0.17)]);
        for k in 0..2 {
            assert!((exact.uz(&z, k) - fd.uz(&z, k)).norm() <= 1e-8);
            for l in 0..2 {
                assert!((exact.uzz(&z, k, l) - fd.uzz(&z, k, l)).norm() <= 1e-6);
                assert!((exact.uzzb(&z, k, l) - fd.uzzb(&z, k, l)).norm() <= 1e-6);
            }
        }
    }

    #[test]
    fn reality_of_second_partials() {
        let u = ScalarField::mixed_poly(2);
        let z = cvec(&[(0.3, 0.1), (-0.2, 0.25)]);
        // the mixed block is Hermitian, the pure block symmetric
        for k in 0..2 {
            for l in 0..2 {
                assert!((u.uzzb(&z, k, l) - u.uzzb(&z, l, k).conj()).norm() <= 1e-14);
                assert!((u.uzz(&z, k, l) - u.uzz(&z, l, k)).norm() <= 1e-14);
            }
        }
    }
}
