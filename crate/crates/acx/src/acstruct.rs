//! Almost complex structures on a coordinate patch: real 2n x 2n
//! representation, complex split representation (A, B), order-3 normal-form
//! jets, and Nijenhuis torsion.

use crate::{cmat_norm_inf, complexify, realify, AcxError, CMat, CVec, RMat, RVec, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

const I: C64 = C64::new(0.0, 1.0);

/// Default finite-difference step for derivatives of J (patch scale 1).
pub const H_J: f64 = 1e-5;
/// J^2 = -I tolerance for analytically defined structures.
pub const TOL_J_ANALYTIC: f64 = 1e-10;
/// J^2 = -I tolerance for finite-difference reconstructions.
pub const TOL_J_FD: f64 = 1e-6;

/// Point evaluation of the complex split representation: J v = A v + conj(B) conj(v).
#[derive(Debug, Clone)]
pub struct ComplexSplitRep {
    pub a: CMat,
    pub b: CMat,
}

impl ComplexSplitRep {
    pub fn standard(n: usize) -> Self {
        ComplexSplitRep {
            a: CMat::from_diagonal_element(n, n, I),
            b: CMat::zeros(n, n),
        }
    }

    /// Action on the complex representation of a real vector.
    pub fn apply(&self, v: &CVec) -> CVec {
        &self.a * v + self.b.conjugate() * v.conjugate()
    }

    /// J^2 + I defect of the reconstructed structure, in the split form:
    /// A^2 + conj(B) B + I and A conj(B) + conj(B) conj(A).
    pub fn square_defect(&self) -> f64 {
        let n = self.a.nrows();
        let e1 = &self.a * &self.a
            + self.b.conjugate() * &self.b
            + CMat::identity(n, n);
        let e2 = &self.a * self.b.conjugate() + self.b.conjugate() * self.a.conjugate();
        cmat_norm_inf(&e1).max(cmat_norm_inf(&e2))
    }
}

/// Rebuild the real 2n x 2n matrix acting on (x_1..x_n, y_1..y_n) from (A, B).
pub fn merge_rep(rep: &ComplexSplitRep) -> RMat {
    let n = rep.a.nrows();
    let mut m = RMat::zeros(2 * n, 2 * n);
    for l in 0..2 * n {
        let mut e = RVec::zeros(2 * n);
        e[l] = 1.0;
        let col = realify(&rep.apply(&complexify(&e)));
        m.set_column(l, &col);
    }
    m
}

/// Split a real 2n x 2n matrix into its complex-linear and conjugate-linear
/// parts with respect to z_k = x_k + i y_k.
pub fn split_rep_matrix(m: &RMat) -> ComplexSplitRep {
    let n = m.nrows() / 2;
    let act = |v: &CVec| -> CVec { complexify(&(m * realify(v))) };
    let mut a = CMat::zeros(n, n);
    let mut b_conj = CMat::zeros(n, n);
    for l in 0..n {
        let mut e = CVec::zeros(n);
        e[l] = C64::new(1.0, 0.0);
        let le = act(&e);
        e[l] = I;
        let lie = act(&e);
        for k in 0..n {
            a[(k, l)] = 0.5 * (le[k] - I * lie[k]);
            b_conj[(k, l)] = 0.5 * (le[k] + I * lie[k]);
        }
    }
    ComplexSplitRep {
        a,
        b: b_conj.conjugate(),
    }
}

/// An almost complex structure J(z) on a patch {|z| < radius} of R^{2n},
/// with optional analytic first partials of J.
#[derive(Clone)]
pub struct AlmostComplexStructure {
    pub n: usize,
    pub radius: f64,
    j: Arc<dyn Fn(&RVec) -> RMat + Send + Sync>,
    /// Analytic partial of J with respect to real coordinate b, if available.
    dj: Option<Arc<dyn Fn(&RVec, usize) -> RMat + Send + Sync>>,
}

impl AlmostComplexStructure {
    pub fn standard(n: usize) -> Self {
        let j0 = merge_rep(&ComplexSplitRep::standard(n));
        let j0c = j0.clone();
        AlmostComplexStructure {
            n,
            radius: f64::INFINITY,
            j: Arc::new(move |_| j0.clone()),
            dj: Some(Arc::new(move |_, _| RMat::zeros(j0c.nrows(), j0c.nrows()))),
        }
    }

    pub fn from_fn(
        n: usize,
        radius: f64,
        j: impl Fn(&RVec) -> RMat + Send + Sync + 'static,
    ) -> Self {
        AlmostComplexStructure {
            n,
            radius,
            j: Arc::new(j),
            dj: None,
        }
    }

    pub fn from_jet(jet: &JetACS) -> Self {
        let jet_j = jet.clone();
        let jet_d = jet.clone();
        let n = jet.n;
        AlmostComplexStructure {
            n,
            radius: 1.0,
            j: Arc::new(move |x: &RVec| merge_rep(&jet_j.split_at(&complexify(x)))),
            dj: Some(Arc::new(move |x: &RVec, b: usize| {
                let z = complexify(x);
                let n = jet_d.n;
                // d/dx_b = d/dz_b + d/dzbar_b ; d/dy_b = i (d/dz_b - d/dzbar_b)
                let (k, along_y) = if b < n { (b, false) } else { (b - n, true) };
                let (daz, dazb) = (jet_d.a_dz(&z, k), jet_d.a_dzb(&z, k));
                let (dbz, dbzb) = (jet_d.b_dz(&z, k), jet_d.b_dzb(&z, k));
                let (da, db) = if along_y {
                    ((daz - dazb) * I, (dbz - dbzb) * I)
                } else {
                    (daz + dazb, dbz + dbzb)
                };
                // d(merge)/dx_b is linear in (dA, dB), so merging the
                // derivative of the split representation is exact.
                merge_split_derivative(&da, &db)
            })),
        }
    }

    pub fn check_point(&self, x: &RVec) -> Result<()> {
        if x.norm() >= self.radius {
            return Err(AcxError::Domain(format!(
                "point at |x| = {:.3e} outside patch of radius {:.3e}",
                x.norm(),
                self.radius
            )));
        }
        Ok(())
    }

    pub fn j_at(&self, x: &RVec) -> RMat {
        (self.j)(x)
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.dj.is_some()
    }

    /// Partial of J with respect to real coordinate b: analytic when the
    /// structure carries one, central differences with step `H_J` otherwise.
    pub fn dj_at(&self, x: &RVec, b: usize) -> RMat {
        if let Some(dj) = &self.dj {
            return dj(x, b);
        }
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[b] += H_J;
        xm[b] -= H_J;
        ((self.j)(&xp) - (self.j)(&xm)) / (2.0 * H_J)
    }

    pub fn split_at(&self, x: &RVec) -> ComplexSplitRep {
        split_rep_matrix(&self.j_at(x))
    }

    /// Holomorphic-frame partials of the split representation:
    /// (d(A,B)/dz_a, d(A,B)/dzbar_a) for a = 0..n. Exact when the structure
    /// carries analytic derivatives, central differences otherwise.
    pub fn split_derivs_at(&self, x: &RVec) -> (Vec<ComplexSplitRep>, Vec<ComplexSplitRep>) {
        let n = self.n;
        let by_coord: Vec<ComplexSplitRep> = (0..2 * n)
            .map(|b| split_rep_matrix(&self.dj_at(x, b)))
            .collect();
        let mut dz = Vec::with_capacity(n);
        let mut dzb = Vec::with_capacity(n);
        for a in 0..n {
            let (dxa, dya) = (&by_coord[a], &by_coord[n + a]);
            dz.push(ComplexSplitRep {
                a: (&dxa.a - &dya.a * I) * C64::new(0.5, 0.0),
                b: (&dxa.b - &dya.b * I) * C64::new(0.5, 0.0),
            });
            dzb.push(ComplexSplitRep {
                a: (&dxa.a + &dya.a * I) * C64::new(0.5, 0.0),
                b: (&dxa.b + &dya.b * I) * C64::new(0.5, 0.0),
            });
        }
        (dz, dzb)
    }

    pub fn tol_j(&self) -> f64 {
        if self.dj.is_some() {
            TOL_J_ANALYTIC
        } else {
            TOL_J_FD
        }
    }
}

/// The linear part of `merge_rep` applied to a split-representation increment.
fn merge_split_derivative(da: &CMat, db: &CMat) -> RMat {
    merge_rep(&ComplexSplitRep {
        a: da.clone(),
        b: db.clone(),
    })
}

/// Report of a J^2 = -I scan over sample points.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

/// Check J(z)^2 = -I at the given points.
pub fn validate_acs(
    j: &AlmostComplexStructure,
    points: &[RVec],
    tol: f64,
) -> Result<ValidationReport> {
    let dim = 2 * j.n;
    let id = RMat::identity(dim, dim);
    let mut worst = (0.0f64, RVec::zeros(dim));
    for x in points {
        j.check_point(x)?;
        let m = j.j_at(x);
        let res = crate::rmat_norm_inf(&(&m * &m + &id));
        if res >= worst.0 {
            worst = (res, x.clone());
        }
    }
    Ok(ValidationReport {
        max_residual: worst.0,
        worst_point: worst.1.iter().cloned().collect(),
        pass: worst.0 <= tol,
    })
}

/// Split representation of J at a point (checks the J^2 invariant first).
pub fn split_rep(j: &AlmostComplexStructure, x: &RVec) -> Result<ComplexSplitRep> {
    let report = validate_acs(j, std::slice::from_ref(x), j.tol_j())?;
    if !report.pass {
        return Err(AcxError::Contract(format!(
            "J^2 + I residual {:.3e} exceeds tolerance {:.3e} at the queried point",
            report.max_residual,
            j.tol_j()
        )));
    }
    Ok(j.split_at(x))
}

/// Condition-number cap for J_0 + J in `q_from_j`.
pub const KAPPA_MAX: f64 = 1e8;

/// The Beltrami-type operator q_J(z) = (J_0 + J(z))^{-1} (J_0 - J(z)) as a
/// real 2n x 2n matrix.
pub fn q_from_j(j: &AlmostComplexStructure, x: &RVec) -> Result<RMat> {
    j.check_point(x)?;
    q_from_matrix(&j.j_at(x), j.n)
}

pub fn q_from_matrix(jm: &RMat, n: usize) -> Result<RMat> {
    let j0 = merge_rep(&ComplexSplitRep::standard(n));
    let sum = &j0 + jm;
    let diff = &j0 - jm;
    let lu = sum.clone().lu();
    let q = lu.solve(&diff).ok_or_else(|| {
        AcxError::Numerical("structure too far from standard: J_0 + J is singular".into())
    })?;
    let inv = sum.clone().lu().solve(&RMat::identity(2 * n, 2 * n)).unwrap();
    let cond = sum.norm() * inv.norm();
    if cond > KAPPA_MAX {
        return Err(AcxError::Numerical(format!(
            "structure too far from standard: cond(J_0 + J) = {:.3e}",
            cond
        )));
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Order-3 normal-form jets
// ---------------------------------------------------------------------------

/// Normal-form jet of an almost complex structure at the origin. The small
/// matrix B(z) is the exact cubic polynomial
///   B(z) = sum_r B1[r] z_r
///        + sum_{r,s} (B2[r,s] z_r z_s + B2b[r,s] z_r conj(z_s))
///        + sum_{r,s,t} (B3[r,s,t] z_r z_s z_t + B3b[r,s,t] z_r z_s conj(z_t)
///                       + B3bb[r,s,t] z_r conj(z_s) conj(z_t))
/// and A(z) is the matching cubic with A(0) = iI, so that J^2 = -I holds
/// through order three.
#[derive(Debug, Clone)]
pub struct JetACS {
    pub n: usize,
    /// b1[r], n matrices.
    pub b1: Vec<CMat>,
    /// b2[r*n+s], symmetric in (r, s).
    pub b2: Vec<CMat>,
    /// b2b[r*n+s]: coefficient of z_r conj(z_s).
    pub b2b: Vec<CMat>,
    /// b3[(r*n+s)*n+t], symmetric in (r, s, t).
    pub b3: Vec<CMat>,
    /// b3b[(r*n+s)*n+t]: coefficient of z_r z_s conj(z_t), symmetric in (r, s).
    pub b3b: Vec<CMat>,
    /// b3bb[(r*n+s)*n+t]: coefficient of z_r conj(z_s) conj(z_t), symmetric in (s, t).
    pub b3bb: Vec<CMat>,
}

impl JetACS {
    pub fn zero(n: usize) -> Self {
        let z = CMat::zeros(n, n);
        JetACS {
            n,
            b1: vec![z.clone(); n],
            b2: vec![z.clone(); n * n],
            b2b: vec![z.clone(); n * n],
            b3: vec![z.clone(); n * n * n],
            b3b: vec![z.clone(); n * n * n],
            b3bb: vec![z; n * n * n],
        }
    }

    /// The standard non-integrable test jet: a single first-order entry
    /// B1[r=1]_{0,0} = c  (so B(z) = c z_2 E_{1,1} for n = 2).
    pub fn single_first_order(n: usize, c: C64) -> Self {
        assert!(n >= 2, "the vanishing pattern forces B = 0 when n = 1");
        let mut jet = JetACS::zero(n);
        jet.b1[1][(0, 0)] = c;
        jet
    }

    /// Seeded random jet honoring the symmetry and vanishing patterns.
    pub fn random(n: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rc = |rng: &mut ChaCha8Rng| {
            C64::new(
                rng.gen_range(-1.0..1.0) * scale,
                rng.gen_range(-1.0..1.0) * scale,
            )
        };
        let mut jet = JetACS::zero(n);
        for r in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if r > l {
                        jet.b1[r][(k, l)] = rc(&mut rng);
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..=r {
                for k in 0..n {
                    for l in 0..n {
                        if r > l || s > l {
                            let v = rc(&mut rng);
                            jet.b2[r * n + s][(k, l)] = v;
                            jet.b2[s * n + r][(k, l)] = v;
                        }
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        if r > l {
                            jet.b2b[r * n + s][(k, l)] = rc(&mut rng);
                        }
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..=r {
                for t in 0..=s {
                    for k in 0..n {
                        for l in 0..n {
                            if r > l || s > l || t > l {
                                let v = rc(&mut rng);
                                for (a, b, c) in
                                    [(r, s, t), (r, t, s), (s, r, t), (s, t, r), (t, r, s), (t, s, r)]
                                {
                                    jet.b3[(a * n + b) * n + c][(k, l)] = v;
                                }
                            }
                        }
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..=r {
                for t in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            if r > l || s > l {
                                let v = rc(&mut rng);
                                jet.b3b[(r * n + s) * n + t][(k, l)] = v;
                                jet.b3b[(s * n + r) * n + t][(k, l)] = v;
                            }
                        }
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..n {
                for t in 0..=s {
                    for k in 0..n {
                        for l in 0..n {
                            if r > l {
                                let v = rc(&mut rng);
                                jet.b3bb[(r * n + s) * n + t][(k, l)] = v;
                                jet.b3bb[(r * n + t) * n + s][(k, l)] = v;
                            }
                        }
                    }
                }
            }
        }
        jet
    }

    /// Verify the symmetry and vanishing invariants; names the first
    /// offending coefficient on failure.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let tol = 0.0;
        let fail = |name: String| Err(AcxError::Contract(format!("jet invariant violated at {name}")));
        for r in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if r <= l && self.b1[r][(k, l)].norm() > tol {
                        return fail(format!("B1[{}]({},{})", r + 1, k + 1, l + 1));
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        if (self.b2[r * n + s][(k, l)] - self.b2[s * n + r][(k, l)]).norm() > tol {
                            return fail(format!("B2 symmetry ({},{})", r + 1, s + 1));
                        }
                        if r <= l && s <= l && self.b2[r * n + s][(k, l)].norm() > tol {
                            return fail(format!("B2[{},{}]({},{})", r + 1, s + 1, k + 1, l + 1));
                        }
                        if r <= l && self.b2b[r * n + s][(k, l)].norm() > tol {
                            return fail(format!("B2b[{},{}]({},{})", r + 1, s + 1, k + 1, l + 1));
                        }
                    }
                }
            }
        }
        for r in 0..n {
            for s in 0..n {
                for t in 0..n {
                    let idx = (r * n + s) * n + t;
                    for k in 0..n {
                        for l in 0..n {
                            let v = self.b3[idx][(k, l)];
                            if (v - self.b3[(s * n + r) * n + t][(k, l)]).norm() > tol
                                || (v - self.b3[(r * n + t) * n + s][(k, l)]).norm() > tol
                            {
                                return fail(format!("B3 symmetry ({},{},{})", r + 1, s + 1, t + 1));
                            }
                            if r <= l && s <= l && t <= l && v.norm() > tol {
                                return fail(format!(
                                    "B3[{},{},{}]({},{})",
                                    r + 1, s + 1, t + 1, k + 1, l + 1
                                ));
                            }
                            let vb = self.b3b[idx][(k, l)];
                            if (vb - self.b3b[(s * n + r) * n + t][(k, l)]).norm() > tol {
                                return fail(format!("B3b symmetry ({},{})", r + 1, s + 1));
                            }
                            if r <= l && s <= l && vb.norm() > tol {
                                return fail(format!(
                                    "B3b[{},{},{}]({},{})",
                                    r + 1, s + 1, t + 1, k + 1, l + 1
                                ));
                            }
                            let vbb = self.b3bb[idx][(k, l)];
                            if (vbb - self.b3bb[(r * n + t) * n + s][(k, l)]).norm() > tol {
                                return fail(format!("B3bb symmetry ({},{})", s + 1, t + 1));
                            }
                            if r <= l && vbb.norm() > tol {
                                return fail(format!(
                                    "B3bb[{},{},{}]({},{})",
                                    r + 1, s + 1, t + 1, k + 1, l + 1
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact cubic polynomial B(z).
    pub fn b_at(&self, z: &CVec) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut b = CMat::zeros(n, n);
        for r in 0..n {
            b += &self.b1[r] * z[r];
            for s in 0..n {
                b += &self.b2[r * n + s] * (z[r] * z[s]);
                b += &self.b2b[r * n + s] * (z[r] * zb[s]);
                for t in 0..n {
                    b += &self.b3[(r * n + s) * n + t] * (z[r] * z[s] * z[t]);
                    b += &self.b3b[(r * n + s) * n + t] * (z[r] * z[s] * zb[t]);
                    b += &self.b3bb[(r * n + s) * n + t] * (z[r] * zb[s] * zb[t]);
                }
            }
        }
        b
    }

    /// Order-2 truncation of B(z) (what enters the Hessian expansion).
    pub fn b_jet2(&self, z: &CVec) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut b = CMat::zeros(n, n);
        for r in 0..n {
            b += &self.b1[r] * z[r];
            for s in 0..n {
                b += &self.b2[r * n + s] * (z[r] * z[s]);
                b += &self.b2b[r * n + s] * (z[r] * zb[s]);
            }
        }
        b
    }

    /// Exact cubic polynomial A(z) with A(0) = iI, matched to B so that
    /// J^2 + I = O(|z|^4).
    pub fn a_at(&self, z: &CVec) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut a = CMat::from_diagonal_element(n, n, I);
        let half_i = 0.5 * I;
        let quarter_i = 0.25 * I;
        for r in 0..n {
            for s in 0..n {
                a += self.b1[r].conjugate() * &self.b1[s] * (half_i * z[s] * zb[r]);
                for t in 0..n {
                    let m1 = self.b2b[t * n + r].conjugate() * &self.b1[s]
                        + self.b2b[t * n + s].conjugate() * &self.b1[r]
                        + self.b1[t].conjugate() * &self.b2[r * n + s] * C64::new(2.0, 0.0);
                    a += m1 * (quarter_i * z[r] * z[s] * zb[t]);
                    let m2 = self.b1[t].conjugate() * &self.b2b[r * n + s]
                        + self.b1[s].conjugate() * &self.b2b[r * n + t]
                        + self.b2[s * n + t].conjugate() * &self.b1[r] * C64::new(2.0, 0.0);
                    a += m2 * (quarter_i * z[r] * zb[s] * zb[t]);
                }
            }
        }
        a
    }

    /// d B / d z_k, exact.
    pub fn b_dz(&self, z: &CVec, k: usize) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut d = self.b1[k].clone();
        for r in 0..n {
            d += &self.b2[k * n + r] * (2.0 * z[r]);
            d += &self.b2b[k * n + r] * zb[r];
            for s in 0..n {
                d += &self.b3[(k * n + r) * n + s] * (3.0 * z[r] * z[s]);
                d += &self.b3b[(k * n + r) * n + s] * (2.0 * z[r] * zb[s]);
                d += &self.b3bb[(k * n + r) * n + s] * (zb[r] * zb[s]);
            }
        }
        d
    }

    /// d B / d conj(z_k), exact.
    pub fn b_dzb(&self, z: &CVec, k: usize) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut d = CMat::zeros(n, n);
        for r in 0..n {
            d += &self.b2b[r * n + k] * z[r];
            for s in 0..n {
                d += &self.b3b[(r * n + s) * n + k] * (z[r] * z[s]);
                d += &self.b3bb[(r * n + k) * n + s] * (2.0 * z[r] * zb[s]);
            }
        }
        d
    }

    /// d A / d z_k, exact.
    pub fn a_dz(&self, z: &CVec, k: usize) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut d = CMat::zeros(n, n);
        let half_i = 0.5 * I;
        let quarter_i = 0.25 * I;
        for r in 0..n {
            d += self.b1[r].conjugate() * &self.b1[k] * (half_i * zb[r]);
            for t in 0..n {
                // z_r z_s zb_t term, d/dz_k with the (r, s)-symmetric coefficient
                let m1 = self.b2b[t * n + k].conjugate() * &self.b1[r]
                    + self.b2b[t * n + r].conjugate() * &self.b1[k]
                    + self.b1[t].conjugate() * &self.b2[k * n + r] * C64::new(2.0, 0.0);
                d += m1 * (2.0 * quarter_i * z[r] * zb[t]);
                let m2 = self.b1[t].conjugate() * &self.b2b[k * n + r]
                    + self.b1[r].conjugate() * &self.b2b[k * n + t]
                    + self.b2[r * n + t].conjugate() * &self.b1[k] * C64::new(2.0, 0.0);
                d += m2 * (quarter_i * zb[r] * zb[t]);
            }
        }
        d
    }

    /// d A / d conj(z_k), exact.
    pub fn a_dzb(&self, z: &CVec, k: usize) -> CMat {
        let n = self.n;
        let zb = z.conjugate();
        let mut d = CMat::zeros(n, n);
        let half_i = 0.5 * I;
        let quarter_i = 0.25 * I;
        for s in 0..n {
            d += self.b1[k].conjugate() * &self.b1[s] * (half_i * z[s]);
            for r in 0..n {
                let m1 = self.b2b[k * n + r].conjugate() * &self.b1[s]
                    + self.b2b[k * n + s].conjugate() * &self.b1[r]
                    + self.b1[k].conjugate() * &self.b2[r * n + s] * C64::new(2.0, 0.0);
                d += m1 * (quarter_i * z[r] * z[s]);
                let m2 = self.b1[s].conjugate() * &self.b2b[r * n + k]
                    + self.b1[k].conjugate() * &self.b2b[r * n + s]
                    + self.b2[s * n + k].conjugate() * &self.b1[r] * C64::new(2.0, 0.0);
                d += m2 * (2.0 * quarter_i * z[r] * zb[s]);
            }
        }
        d
    }

    /// Split representation at z, built from the two cubic expansions.
    pub fn split_at(&self, z: &CVec) -> ComplexSplitRep {
        ComplexSplitRep {
            a: self.a_at(z),
            b: self.b_at(z),
        }
    }
}

/// jet_to_J: evaluate the jet expansions at z (validates the jet and the
/// reconstruction).
pub fn jet_to_j(jet: &JetACS, z: &CVec) -> Result<ComplexSplitRep> {
    jet.validate()?;
    let rep = jet.split_at(z);
    let defect = rep.square_defect();
    // Truncation is O(|z|^4); reject points where the reconstruction is no
    // longer a usable structure.
    if defect > 0.5 {
        return Err(AcxError::Domain(format!(
            "|z| too large for the cubic jet: J^2 + I defect {:.3e}",
            defect
        )));
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Torsion
// ---------------------------------------------------------------------------

/// Nijenhuis torsion coefficients Nbar^r_{k,l} at a point, stored for k < l.
#[derive(Debug, Clone)]
pub struct TorsionTensor {
    pub n: usize,
    /// nbar[r][(k, l)] for k < l, flattened as r * pairs + pair_index with
    /// pairs enumerated in lexicographic (k, l) order.
    pub nbar: Vec<C64>,
    pub pairs: Vec<(usize, usize)>,
}

impl TorsionTensor {
    pub fn get(&self, r: usize, k: usize, l: usize) -> C64 {
        assert!(k != l);
        let (a, b, sign) = if k < l { (k, l, 1.0) } else { (l, k, -1.0) };
        let p = self.pairs.iter().position(|&q| q == (a, b)).unwrap();
        self.nbar[r * self.pairs.len() + p] * sign
    }

    pub fn norm_inf(&self) -> f64 {
        self.nbar.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn index_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = vec![];
    for k in 0..n {
        for l in (k + 1)..n {
            pairs.push((k, l));
        }
    }
    pairs
}

/// First-order torsion jet
///   Nbar^r_{k,l}(z) = (i/2) B1[l]_{r,k}
///     + (i/2) sum_s [ 2 (B2[l,s]_{r,k} - B2[k,s]_{r,l}) z_s + B2b[l,s]_{r,k} conj(z_s) ].
pub fn torsion_jet(jet: &JetACS, z: &CVec) -> TorsionTensor {
    let n = jet.n;
    let zb = z.conjugate();
    let pairs = index_pairs(n);
    let mut nbar = vec![C64::new(0.0, 0.0); n * pairs.len()];
    let half_i = 0.5 * I;
    for r in 0..n {
        for (p, &(k, l)) in pairs.iter().enumerate() {
            let mut v = half_i * jet.b1[l][(r, k)];
            for s in 0..n {
                v += half_i
                    * (2.0 * (jet.b2[l * n + s][(r, k)] - jet.b2[k * n + s][(r, l)]) * z[s]
                        + jet.b2b[l * n + s][(r, k)] * zb[s]);
            }
            nbar[r * pairs.len() + p] = v;
        }
    }
    TorsionTensor { n, nbar, pairs }
}

/// Torsion from numerical Lie brackets of the frame zeta_l = (d/dz_l)^{1,0}_J,
/// expanded over the conjugate frame.
pub fn torsion_bracket(j: &AlmostComplexStructure, x: &RVec) -> Result<TorsionTensor> {
    use crate::cfields::{bracket, project01, zeta_frame, CField};
    j.check_point(x)?;
    let n = j.n;
    let pairs = index_pairs(n);
    let mut nbar = vec![C64::new(0.0, 0.0); n * pairs.len()];
    // Basis of the (0,1) space at x: conjugates of the frame.
    let frame = zeta_frame(j, x);
    let mut basis = CMat::zeros(2 * n, n);
    for r in 0..n {
        let zb: CField = frame[r].conjugate_field();
        for a in 0..n {
            basis[(a, r)] = zb.p[a];
            basis[(n + a, r)] = zb.q[a];
        }
    }
    let basis_svd = basis.svd(true, true);
    for (p, &(k, l)) in pairs.iter().enumerate() {
        let br = bracket(j, x, k, l)?;
        let t01 = project01(j, x, &br);
        let mut rhs = CVec::zeros(2 * n);
        for a in 0..n {
            rhs[a] = t01.p[a];
            rhs[n + a] = t01.q[a];
        }
        let coeffs = basis_svd
            .solve(&rhs, 1e-12)
            .map_err(|e| AcxError::Numerical(format!("torsion frame solve failed: {e}")))?;
        for r in 0..n {
            nbar[r * pairs.len() + p] = coeffs[r];
        }
    }
    Ok(TorsionTensor { n, nbar, pairs })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct JetJson {
    n: usize,
    #[serde(rename = "B1")]
    b1: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "B2")]
    b2: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "B2b")]
    b2b: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "B3")]
    b3: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "B3b")]
    b3b: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "B3bb")]
    b3bb: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
}

fn mat_to_json(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|k| (0..m.ncols()).map(|l| [m[(k, l)].re, m[(k, l)].im]).collect())
        .collect()
}

fn mat_from_json(v: &[Vec<[f64; 2]>], n: usize) -> Result<CMat> {
    if v.len() != n || v.iter().any(|row| row.len() != n) {
        return Err(AcxError::Config("jet matrix has wrong shape".into()));
    }
    Ok(CMat::from_fn(n, n, |k, l| C64::new(v[k][l][0], v[k][l][1])))
}

impl JetACS {
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.n;
        let pack2 = |tab: &Vec<CMat>| -> BTreeMap<String, Vec<Vec<[f64; 2]>>> {
            let mut m = BTreeMap::new();
            for r in 0..n {
                for s in 0..n {
                    let mat = &tab[r * n + s];
                    if mat.iter().any(|c| c.norm() != 0.0) {
                        m.insert(format!("({},{})", r + 1, s + 1), mat_to_json(mat));
                    }
                }
            }
            m
        };
        let pack3 = |tab: &Vec<CMat>| -> BTreeMap<String, Vec<Vec<[f64; 2]>>> {
            let mut m = BTreeMap::new();
            for r in 0..n {
                for s in 0..n {
                    for t in 0..n {
                        let mat = &tab[(r * n + s) * n + t];
                        if mat.iter().any(|c| c.norm() != 0.0) {
                            m.insert(format!("({},{},{})", r + 1, s + 1, t + 1), mat_to_json(mat));
                        }
                    }
                }
            }
            m
        };
        serde_json::to_value(JetJson {
            n,
            b1: self.b1.iter().map(mat_to_json).collect(),
            b2: pack2(&self.b2),
            b2b: pack2(&self.b2b),
            b3: pack3(&self.b3),
            b3b: pack3(&self.b3b),
            b3bb: pack3(&self.b3bb),
        })
        .unwrap()
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let jj: JetJson = serde_json::from_value(v.clone())
            .map_err(|e| AcxError::Config(format!("bad jet payload: {e}")))?;
        let n = jj.n;
        if n == 0 {
            return Err(AcxError::Config("jet needs n >= 1".into()));
        }
        if jj.b1.len() != n {
            return Err(AcxError::Config("B1 must list n matrices".into()));
        }
        let mut jet = JetACS::zero(n);
        for (r, m) in jj.b1.iter().enumerate() {
            jet.b1[r] = mat_from_json(m, n)?;
        }
        let parse_key = |key: &str, arity: usize| -> Result<Vec<usize>> {
            let inner = key.trim_start_matches('(').trim_end_matches(')');
            let idx: Vec<usize> = inner
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| ()))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| AcxError::Config(format!("bad jet index key {key:?}")))?;
            if idx.len() != arity || idx.iter().any(|&i| i < 1 || i > n) {
                return Err(AcxError::Config(format!("bad jet index key {key:?}")));
            }
            Ok(idx.iter().map(|&i| i - 1).collect())
        };
        for (tab, src, arity) in [
            (&mut jet.b2, &jj.b2, 2usize),
            (&mut jet.b2b, &jj.b2b, 2),
        ] {
            for (key, m) in src {
                let idx = parse_key(key, arity)?;
                tab[idx[0] * n + idx[1]] = mat_from_json(m, n)?;
            }
        }
        for (tab, src) in [
            (&mut jet.b3, &jj.b3),
            (&mut jet.b3b, &jj.b3b),
            (&mut jet.b3bb, &jj.b3bb),
        ] {
            for (key, m) in src {
                let idx = parse_key(key, 3)?;
                tab[(idx[0] * n + idx[1]) * n + idx[2]] = mat_from_json(m, n)?;
            }
        }
        jet.validate()?;
        Ok(jet)
    }
}
