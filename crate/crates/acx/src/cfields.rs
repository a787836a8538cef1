//! Complexified vector fields on a patch: a field is written
//! sum_k p_k d/dz_k + q_k d/dzbar_k with complex coefficients, and the
//! structure acts on the complexified tangent space.

use crate::acstruct::{AlmostComplexStructure, ComplexSplitRep};
use crate::{CVec, RVec, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// A complexified tangent vector (or pointwise field value).
#[derive(Debug, Clone)]
pub struct CField {
    pub p: CVec,
    pub q: CVec,
}

impl CField {
    pub fn zero(n: usize) -> Self {
        CField {
            p: CVec::zeros(n),
            q: CVec::zeros(n),
        }
    }

    /// Complex conjugate field: conj(p d/dz + q d/dzbar) = qbar d/dz + pbar d/dzbar.
    pub fn conjugate_field(&self) -> Self {
        CField {
            p: self.q.conjugate(),
            q: self.p.conjugate(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.p
            .iter()
            .chain(self.q.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Directional derivative of a scalar along this vector, given the
    /// holomorphic-coordinate partials (du/dz_k and du/dzbar_k) at the point.
    pub fn derive(&self, uz: &CVec, uzb: &CVec) -> C64 {
        self.p.dot(uz) + self.q.dot(uzb)
    }
}

/// J acting on the complexified tangent space:
/// J d/dz_l = sum_k A_{kl} d/dz_k + B_{kl} d/dzbar_k, and conjugates.
pub fn j_apply(rep: &ComplexSplitRep, v: &CField) -> CField {
    CField {
        p: &rep.a * &v.p + rep.b.conjugate() * &v.q,
        q: &rep.b * &v.p + rep.a.conjugate() * &v.q,
    }
}

/// (0,1)-projection with respect to J at x: (v + i J v) / 2.
pub fn project01(j: &AlmostComplexStructure, x: &RVec, v: &CField) -> CField {
    let rep = j.split_at(x);
    let jv = j_apply(&rep, v);
    CField {
        p: (&v.p + &jv.p * I) * C64::new(0.5, 0.0),
        q: (&v.q + &jv.q * I) * C64::new(0.5, 0.0),
    }
}

/// (1,0)-projection with respect to J at x: (v - i J v) / 2.
pub fn project10(j: &AlmostComplexStructure, x: &RVec, v: &CField) -> CField {
    let rep = j.split_at(x);
    let jv = j_apply(&rep, v);
    CField {
        p: (&v.p - &jv.p * I) * C64::new(0.5, 0.0),
        q: (&v.q - &jv.q * I) * C64::new(0.5, 0.0),
    }
}

/// The J-holomorphic frame zeta_l = (d/dz_l)^{1,0} at x, for l = 1..n:
/// zeta_l = (e_l - i A e_l) / 2 in the d/dz slots and -(i/2) B e_l in the
/// d/dzbar slots.
pub fn zeta_frame(j: &AlmostComplexStructure, x: &RVec) -> Vec<CField> {
    let rep = j.split_at(x);
    zeta_frame_from_rep(&rep)
}

pub fn zeta_frame_from_rep(rep: &ComplexSplitRep) -> Vec<CField> {
    let n = rep.a.nrows();
    (0..n)
        .map(|l| {
            let mut e = CVec::zeros(n);
            e[l] = C64::new(1.0, 0.0);
            let jal = rep.a.column(l).into_owned();
            let jbl = rep.b.column(l).into_owned();
            CField {
                p: (e - jal * I) * C64::new(0.5, 0.0),
                q: jbl * (I * C64::new(-0.5, 0.0)),
            }
        })
        .collect()
}

/// A field value together with its first partials in the holomorphic frame:
/// dz[a] = d(field)/dz_a, dzb[a] = d(field)/dzbar_a.
#[derive(Debug, Clone)]
pub struct FieldJet {
    pub val: CField,
    pub dz: Vec<CField>,
    pub dzb: Vec<CField>,
}

pub fn conj_jet(f: &FieldJet) -> FieldJet {
    FieldJet {
        val: f.val.conjugate_field(),
        dz: f.dzb.iter().map(CField::conjugate_field).collect(),
        dzb: f.dz.iter().map(CField::conjugate_field).collect(),
    }
}

/// Jets of the frame fields zeta_l at x, with partials from the split
/// representation of dJ (exact when J carries analytic derivatives).
pub fn zeta_jets(j: &AlmostComplexStructure, x: &RVec) -> Vec<FieldJet> {
    let n = j.n;
    let rep = j.split_at(x);
    let frame = zeta_frame_from_rep(&rep);
    let (dz_rep, dzb_rep) = j.split_derivs_at(x);
    let half_mi = C64::new(0.0, -0.5);
    let d_of = |r: &crate::acstruct::ComplexSplitRep, l: usize| -> CField {
        // zeta_l = ((e_l - i A e_l)/2, -(i/2) B e_l); A, B vary, e_l constant
        CField {
            p: r.a.column(l) * half_mi,
            q: r.b.column(l) * half_mi,
        }
    };
    (0..n)
        .map(|l| FieldJet {
            val: frame[l].clone(),
            dz: (0..n).map(|a| d_of(&dz_rep[a], l)).collect(),
            dzb: (0..n).map(|a| d_of(&dzb_rep[a], l)).collect(),
        })
        .collect()
}

/// Directional derivative of the components of Y along the value of X:
/// (X . Y)^m = sum_a X_p[a] dY/dz_a + X_q[a] dY/dzbar_a, componentwise.
pub fn deriv_along(x: &CField, y: &FieldJet) -> CField {
    let n = x.p.len();
    let mut out = CField::zero(n);
    for a in 0..n {
        out.p += &y.dz[a].p * x.p[a] + &y.dzb[a].p * x.q[a];
        out.q += &y.dz[a].q * x.p[a] + &y.dzb[a].q * x.q[a];
    }
    out
}

/// Lie bracket of two fields given by first-order jets at the same point.
pub fn bracket_jets(x: &FieldJet, y: &FieldJet) -> CField {
    let xy = deriv_along(&x.val, y);
    let yx = deriv_along(&y.val, x);
    CField {
        p: xy.p - yx.p,
        q: xy.q - yx.q,
    }
}

/// Lie bracket [zeta_k, zeta_l] at x.
pub fn bracket(j: &AlmostComplexStructure, x: &RVec, k: usize, l: usize) -> Result<CField> {
    let jets = zeta_jets(j, x);
    Ok(bracket_jets(&jets[k], &jets[l]))
}
