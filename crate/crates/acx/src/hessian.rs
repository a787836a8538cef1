//! The Hessian of a scalar field with respect to an almost complex structure,
//!   H_J u(xi) = (xi.xi.u + Jxi.Jxi.u + J[xi, Jxi].u) / 2,
//! its normal-coordinate expansion to second order with all coefficient
//! tables, the (1,1)-current coefficient matrix, the Laplacian, the gradient
//! form, and the dd^c consistency check. The pairing
//!   H_J u(xi) = 2 sum_{k,l} M_{k,l} xi_k conj(xi_l)
//! with M = current_11 is the normative constant convention; everything else
//! is calibrated against it.

use crate::acstruct::{AlmostComplexStructure, JetACS};
use crate::cfields::{bracket_jets, conj_jet, project01, zeta_jets, CField};
use crate::forms::HermitianMetric;
use crate::scalar::{ScalarField, H_U};
use crate::{hermitian_eigs, realify, AcxError, CMat, CVec, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Second directional derivative D^2 u (v, w) for constant real fields given
/// by complex coefficients v, w.
fn second_dir(u: &ScalarField, z: &CVec, v: &CVec, w: &CVec) -> C64 {
    let n = u.n;
    let mut s = C64::new(0.0, 0.0);
    for k in 0..n {
        for l in 0..n {
            let uzz = u.uzz(z, k, l);
            let uzzb = u.uzzb(z, k, l);
            s += v[k] * uzz * w[l];
            s += v[k] * uzzb * w[l].conj();
            s += v[k].conj() * u.uzzb(z, l, k) * w[l];
            s += v[k].conj() * uzz.conj() * w[l].conj();
        }
    }
    s
}

/// H_J u(xi) at z for a constant-coefficient real field xi (complex
/// representation). Equals i ddbar u (xi, J xi).
pub fn hessian_direct(
    j: &AlmostComplexStructure,
    u: &ScalarField,
    xi: &CVec,
    z: &CVec,
) -> Result<f64> {
    let n = j.n;
    let x = realify(z);
    j.check_point(&x)?;
    let rep = j.split_at(&x);
    let (dz, dzb) = j.split_derivs_at(&x);
    let xib = xi.conjugate();
    // eta = J xi, a real field through the z-dependence of (A, B)
    let eta: CVec = &rep.a * xi + rep.b.conjugate() * &xib;
    // d(eta)/dz_a and /dzbar_a; d(conj B)/dz_a = conj(dB/dzbar_a)
    let deta_z: Vec<CVec> = (0..n)
        .map(|a| &dz[a].a * xi + dzb[a].b.conjugate() * &xib)
        .collect();
    let deta_zb: Vec<CVec> = (0..n)
        .map(|a| &dzb[a].a * xi + dz[a].b.conjugate() * &xib)
        .collect();
    let t1 = second_dir(u, z, xi, xi);
    // Jxi.Jxi.u = D^2u(eta, eta) + sum_k (Jxi . eta_k) du/dz_k + conj
    let mut t2 = second_dir(u, z, &eta, &eta);
    for k in 0..n {
        let mut jxi_eta_k = C64::new(0.0, 0.0);
        for a in 0..n {
            jxi_eta_k += eta[a] * deta_z[a][k] + eta[a].conj() * deta_zb[a][k];
        }
        t2 += jxi_eta_k * u.uz(z, k) + jxi_eta_k.conj() * u.uzb(z, k);
    }
    // c = [xi, Jxi] = xi.eta (xi constant); then J c
    let mut c = CVec::zeros(n);
    for k in 0..n {
        for a in 0..n {
            c[k] += xi[a] * deta_z[a][k] + xib[a] * deta_zb[a][k];
        }
    }
    let jc: CVec = &rep.a * &c + rep.b.conjugate() * c.conjugate();
    let mut t3 = C64::new(0.0, 0.0);
    for k in 0..n {
        t3 += jc[k] * u.uz(z, k) + jc[k].conj() * u.uzb(z, k);
    }
    let h = 0.5 * (t1 + t2 + t3);
    if h.im.abs() > 1e-7 * (1.0 + h.re.abs()) {
        return Err(AcxError::Numerical(format!(
            "Hessian has spurious imaginary part {:.3e}",
            h.im
        )));
    }
    Ok(h.re)
}

// ---------------------------------------------------------------------------
// Normal-coordinate expansion
// ---------------------------------------------------------------------------

/// The eight constant coefficient tables of the order-2 expansion, indexed
/// [s][r][h][k][l] (flattened). Superscript-bar placement follows the field
/// names: e.g. `rklb_rhb` is the table R^{s,r,hbar}_{k,lbar}.
pub struct HessianTables {
    pub n: usize,
    pub rkl: Vec<C64>,
    pub rklrb: Vec<C64>,
    pub rklbb: Vec<C64>,
    pub rklb_rh: Vec<C64>,
    pub rklb_rhb: Vec<C64>,
    pub rklb_bb: Vec<C64>,
    pub rkblb_rhb: Vec<C64>,
    pub rkblb_bb: Vec<C64>,
    jet: JetACS,
}

/// Pointwise expansion data: the quadratic coefficients Q contracted with
/// (z, xi), and the gradient coefficients R^s contracted with z.
pub struct HessianExpansionTerms {
    /// Q_{k,lbar}(z, xi), paired with d2u/dz_k dzbar_l.
    pub q_klb: CMat,
    /// Q_{k,l}(z, xi), paired with d2u/dz_k dz_l.
    pub q_kl: CMat,
    /// R^s_{k,l}(z) xi_k xi_l summed over (k,l), per s.
    pub r_kl: CVec,
    /// R^s_{k,lbar}(z) xi_k conj(xi_l) summed, per s.
    pub r_klb: CVec,
    /// R^s_{kbar,lbar}(z) conj(xi_k xi_l) summed, per s.
    pub r_kblb: CVec,
}

fn idx5(n: usize, s: usize, r: usize, h: usize, k: usize, l: usize) -> usize {
    (((s * n + r) * n + h) * n + k) * n + l
}

impl HessianTables {
    pub fn new(jet: &JetACS) -> Result<Self> {
        jet.validate()?;
        let n = jet.n;
        let len = n * n * n * n * n;
        let zero = || vec![C64::new(0.0, 0.0); len];
        let (mut rkl, mut rklrb, mut rklbb) = (zero(), zero(), zero());
        let (mut rklb_rh, mut rklb_rhb, mut rklb_bb) = (zero(), zero(), zero());
        let (mut rkblb_rhb, mut rkblb_bb) = (zero(), zero());
        let b1 = |r: usize, a: usize, b: usize| jet.b1[r][(a, b)];
        let cb1 = |r: usize, a: usize, b: usize| jet.b1[r][(a, b)].conj();
        let b2 = |r: usize, s: usize, a: usize, b: usize| jet.b2[r * n + s][(a, b)];
        let cb2 = |r: usize, s: usize, a: usize, b: usize| jet.b2[r * n + s][(a, b)].conj();
        let b2b = |r: usize, s: usize, a: usize, b: usize| jet.b2b[r * n + s][(a, b)];
        let cb2b = |r: usize, s: usize, a: usize, b: usize| jet.b2b[r * n + s][(a, b)].conj();
        let cb3b =
            |r: usize, s: usize, t: usize, a: usize, b: usize| jet.b3b[(r * n + s) * n + t][(a, b)].conj();
        let cb3bb =
            |r: usize, s: usize, t: usize, a: usize, b: usize| jet.b3bb[(r * n + s) * n + t][(a, b)].conj();
        for s in 0..n {
            for r in 0..n {
                for h in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let id = idx5(n, s, r, h, k, l);
                            let mut v = C64::new(0.0, 0.0);
                            for t in 0..n {
                                for jj in 0..n {
                                    v += cb1(t, s, jj)
                                        * (b1(r, t, k) * b1(h, jj, l)
                                            + b1(h, t, k) * b1(r, jj, l)
                                            + b1(r, t, l) * b1(h, jj, k)
                                            + b1(h, t, l) * b1(r, jj, k));
                                }
                            }
                            rkl[id] = I / 8.0 * v;

                            let mut v = C64::new(0.0, 0.0);
                            for t in 0..n {
                                v += cb2b(h, k, s, t) * b1(r, t, l)
                                    + cb2b(h, l, s, t) * b1(r, t, k)
                                    + cb2b(h, r, s, t) * (b1(k, t, l) - b1(l, t, k));
                            }
                            rklrb[id] = -0.5 * v;

                            let mut v = C64::new(0.0, 0.0);
                            for t in 0..n {
                                v += cb2(r, h, s, t) * (b1(k, t, l) - b1(l, t, k));
                            }
                            rklbb[id] = -0.5 * v;

                            let mut v = C64::new(0.0, 0.0);
                            for t in 0..n {
                                v += b1(r, t, k) * cb2b(t, h, s, l)
                                    + b1(h, t, k) * cb2b(t, r, s, l)
                                    + 2.0 * b2(r, h, t, k) * cb1(t, s, l);
                            }
                            rklb_rh[id] = 0.5 * v;

                            let mut v = 4.0 * I * cb3bb(h, r, k, s, l);
                            for t in 0..n {
                                v += 2.0 * b1(r, t, k) * cb2(t, h, s, l)
                                    + b2b(r, h, t, k) * cb1(t, s, l)
                                    + b2b(r, l, t, k) * cb1(h, s, t);
                                for jj in 0..n {
                                    v += I / 2.0 * cb1(h, t, jj) * b1(r, jj, k) * b1(t, s, l);
                                }
                            }
                            rklb_rhb[id] = v;

                            let mut v = 2.0 * I * cb3b(r, h, k, s, l);
                            for t in 0..n {
                                for jj in 0..n {
                                    v += I / 4.0
                                        * (cb1(r, t, l) * cb1(h, s, jj)
                                            + cb1(h, t, l) * cb1(r, s, jj))
                                        * (b1(t, jj, k) - b1(k, jj, t));
                                }
                            }
                            rklb_bb[id] = v;

                            let mut v = C64::new(0.0, 0.0);
                            for t in 0..n {
                                for jj in 0..n {
                                    v += b1(r, t, jj)
                                        * (cb1(h, jj, k) * cb1(t, s, l)
                                            + cb1(h, jj, l) * cb1(t, s, k));
                                }
                            }
                            rkblb_rhb[id] = -I / 4.0 * v;

                            let mut v = C64::new(0.0, 0.0);
                            for t in 0..n {
                                v += cb1(r, t, k) * cb2b(h, t, s, l)
                                    + cb1(h, t, k) * cb2b(r, t, s, l)
                                    + cb1(r, t, l) * cb2b(h, t, s, k)
                                    + cb1(h, t, l) * cb2b(r, t, s, k);
                            }
                            rkblb_bb[id] = 0.25 * v;
                        }
                    }
                }
            }
        }
        Ok(HessianTables {
            n,
            rkl,
            rklrb,
            rklbb,
            rklb_rh,
            rklb_rhb,
            rklb_bb,
            rkblb_rhb,
            rkblb_bb,
            jet: jet.clone(),
        })
    }

    /// Evaluate the Q and R contractions at (z, xi).
    pub fn terms(&self, z: &CVec, xi: &CVec) -> HessianExpansionTerms {
        let n = self.n;
        let zb = z.conjugate();
        let xib = xi.conjugate();
        let jet = &self.jet;
        let j2 = jet.b_jet2(z);
        let cb1 = |r: usize, a: usize, b: usize| jet.b1[r][(a, b)].conj();
        let b1 = |r: usize, a: usize, b: usize| jet.b1[r][(a, b)];
        let mut q_klb = CMat::zeros(n, n);
        let mut q_kl = CMat::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                let mut qklb = C64::new(0.0, 0.0);
                for t in 0..n {
                    qklb += 2.0 * I * j2[(l, t)] * xi[k] * xi[t];
                }
                let mut qkl = C64::new(0.0, 0.0);
                for t in 0..n {
                    qkl += I * (j2[(k, t)].conj() * xi[l] * xib[t]
                        + j2[(l, t)].conj() * xi[k] * xib[t]);
                }
                for s in 0..n {
                    for t in 0..n {
                        for r in 0..n {
                            for h in 0..n {
                                qklb += cb1(h, k, s)
                                    * (b1(r, s, t) * xi[t] * xib[l]
                                        + b1(r, l, t) * xi[t] * xib[s])
                                    * z[r]
                                    * zb[h];
                                qkl -= 0.5
                                    * (cb1(h, k, s) * xi[l] * xi[t]
                                        + cb1(h, l, s) * xi[k] * xi[t])
                                    * b1(r, s, t)
                                    * z[r]
                                    * zb[h];
                                qkl += cb1(r, k, s)
                                    * cb1(h, l, t)
                                    * zb[r]
                                    * zb[h]
                                    * xib[s]
                                    * xib[t];
                            }
                        }
                    }
                }
                q_klb[(k, l)] = qklb;
                q_kl[(k, l)] = qkl;
            }
        }
        let mut r_kl = CVec::zeros(n);
        let mut r_klb = CVec::zeros(n);
        let mut r_kblb = CVec::zeros(n);
        for s in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut rs_kl = C64::new(0.0, 0.0);
                    let mut rs_klb = C64::new(0.0, 0.0);
                    let mut rs_kblb = C64::new(0.0, 0.0);
                    for r in 0..n {
                        let mut v1 = C64::new(0.0, 0.0);
                        for t in 0..n {
                            v1 += b1(r, t, k) * cb1(t, s, l);
                        }
                        rs_klb += v1 * z[r] + 2.0 * I * jet.b2b[r * n + k][(s, l)].conj() * zb[r];
                        for h in 0..n {
                            let id = idx5(n, s, r, h, k, l);
                            rs_kl += self.rkl[id] * z[r] * z[h]
                                + self.rklrb[id] * z[r] * zb[h]
                                + self.rklbb[id] * zb[r] * zb[h];
                            rs_klb += self.rklb_rh[id] * z[r] * z[h]
                                + self.rklb_rhb[id] * z[r] * zb[h]
                                + self.rklb_bb[id] * zb[r] * zb[h];
                            rs_kblb += self.rkblb_rhb[id] * z[r] * zb[h]
                                + self.rkblb_bb[id] * zb[r] * zb[h];
                        }
                    }
                    r_kl[s] += rs_kl * xi[k] * xi[l];
                    r_klb[s] += rs_klb * xi[k] * xib[l];
                    r_kblb[s] += rs_kblb * xib[k] * xib[l];
                }
            }
        }
        HessianExpansionTerms {
            q_klb,
            q_kl,
            r_kl,
            r_klb,
            r_kblb,
        }
    }
}

/// The full order-2 expansion of H_J u(xi) in normal coordinates of the jet.
pub fn hessian_expansion(
    tables: &HessianTables,
    u: &ScalarField,
    xi: &CVec,
    z: &CVec,
) -> f64 {
    let n = tables.n;
    let terms = tables.terms(z, xi);
    let mut h = 0.0f64;
    for k in 0..n {
        for l in 0..n {
            h += 2.0 * (u.uzzb(z, k, l) * xi[k] * xi[l].conj()).re;
            h += (terms.q_klb[(k, l)] * u.uzzb(z, k, l) + terms.q_kl[(k, l)] * u.uzz(z, k, l)).re;
        }
    }
    for s in 0..n {
        h += ((terms.r_kl[s] + terms.r_klb[s] + terms.r_kblb[s]) * u.uz(z, s)).re;
    }
    h
}

/// The reduced expansion, valid when the first-order torsion jet vanishes:
/// H = 2 sum u_{k,lbar} xi_k conj(xi_l)
///     - 2 sum Im[(2 conj(B3bb[h,r,k]) z_r conj(z_h)
///                 + conj(B3b[r,h,k]) conj(z_r z_h))_{s,l} du/dz_s xi_k conj(xi_l)].
pub fn hessian_expansion_reduced(
    jet: &JetACS,
    u: &ScalarField,
    xi: &CVec,
    z: &CVec,
) -> Result<f64> {
    jet.validate()?;
    let n = jet.n;
    // precondition: torsion vanishes to order 1
    for r in 0..n {
        for k in 0..n {
            for l in 0..n {
                if jet.b1[r][(k, l)].norm() != 0.0 {
                    return Err(AcxError::Contract(format!(
                        "first-order coefficient B1[{}]({},{}) nonzero: torsion does not vanish",
                        r + 1,
                        k + 1,
                        l + 1
                    )));
                }
            }
        }
    }
    for k in 0..n {
        for l in (k + 1)..n {
            for r in 0..n {
                for s in 0..n {
                    let lin = jet.b2[l * n + s][(r, k)] - jet.b2[k * n + s][(r, l)];
                    if lin.norm() != 0.0 || jet.b2b[l * n + s][(r, k)].norm() != 0.0 {
                        return Err(AcxError::Contract(format!(
                            "order-1 torsion coefficient at (r={}, k={}, l={}, s={}) nonzero",
                            r + 1,
                            k + 1,
                            l + 1,
                            s + 1
                        )));
                    }
                }
            }
        }
    }
    let zb = z.conjugate();
    let mut h = 0.0f64;
    for k in 0..n {
        for l in 0..n {
            h += 2.0 * (u.uzzb(z, k, l) * xi[k] * xi[l].conj()).re;
            for s in 0..n {
                let mut coeff = C64::new(0.0, 0.0);
                for r in 0..n {
                    for t in 0..n {
                        coeff += 2.0
                            * jet.b3bb[(t * n + r) * n + k][(s, l)].conj()
                            * z[r]
                            * zb[t];
                        coeff += jet.b3b[(r * n + t) * n + k][(s, l)].conj() * zb[r] * zb[t];
                    }
                }
                h -= 2.0 * (coeff * u.uz(z, s) * xi[k] * xi[l].conj()).im;
            }
        }
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// (1,1)-current matrix, Laplacian, gradient form, dd^c
// ---------------------------------------------------------------------------

/// Coefficient matrix of i ddbar u over the frame zeta_k:
/// M_{k,l} = zeta_k . conj(zeta_l) . u - [zeta_k, conj(zeta_l)]^{0,1} . u.
pub fn current_11(j: &AlmostComplexStructure, u: &ScalarField, z: &CVec) -> Result<CMat> {
    let n = j.n;
    let x = realify(z);
    j.check_point(&x)?;
    let jets = zeta_jets(j, &x);
    let uz = CVec::from_fn(n, |k, _| u.uz(z, k));
    let uzb = uz.conjugate();
    let deriv_scalar = |v: &CField| -> C64 { v.derive(&uz, &uzb) };
    let second = |v: &CField, w: &CField| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                s += v.p[a] * w.p[b] * u.uzz(z, a, b);
                s += v.p[a] * w.q[b] * u.uzzb(z, a, b);
                s += v.q[a] * w.p[b] * u.uzzb(z, b, a);
                s += v.q[a] * w.q[b] * u.uzz(z, a, b).conj();
            }
        }
        s
    };
    let mut m = CMat::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let zl_bar = conj_jet(&jets[l]);
            // zeta_k.(conj(zeta_l).u): derivative of the component functions
            // along zeta_k, plus the second-order term
            let dcomp = crate::cfields::deriv_along(&jets[k].val, &zl_bar);
            let mut v = second(&jets[k].val, &zl_bar.val);
            v += dcomp.derive(&uz, &uzb);
            // bracket term, (0,1)-part
            let br = bracket_jets(&jets[k], &zl_bar);
            let br01 = project01(j, &x, &br);
            v -= deriv_scalar(&br01);
            m[(k, l)] = v;
        }
    }
    // the exact matrix is Hermitian; report if discretization broke that
    let asym = crate::cmat_norm_inf(&(&m - m.adjoint()));
    if asym > 1e-6 {
        return Err(AcxError::Numerical(format!(
            "current matrix asymmetry {asym:.3e}"
        )));
    }
    Ok(m)
}

/// Laplacian: sum of H_J u over an omega-orthonormal complex frame
/// (equivalently half the sum over the real frame {f_k, J f_k}).
pub fn laplacian_j(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    u: &ScalarField,
    z: &CVec,
) -> Result<f64> {
    let frame = omega.orthonormal_frame(z)?;
    let mut total = 0.0;
    for xi in &frame {
        total += hessian_direct(j, u, xi, z)?;
    }
    Ok(total)
}

/// i del u wedge delbar u (xi, J xi) = (du(xi)^2 + du(J xi)^2) / 2.
pub fn grad_form(j: &AlmostComplexStructure, u: &ScalarField, xi: &CVec, z: &CVec) -> Result<f64> {
    let x = realify(z);
    j.check_point(&x)?;
    let rep = j.split_at(&x);
    let jxi = &rep.a * xi + rep.b.conjugate() * xi.conjugate();
    let du = |v: &CVec| -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..j.n {
            s += u.uz(z, k) * v[k];
        }
        2.0 * s.re
    };
    Ok(0.5 * (du(xi).powi(2) + du(&jxi).powi(2)))
}

/// |i ddbar u (xi, J xi) - d(d^c u)(xi, J xi)| with d^c u = -du o J / 2 and
/// the exterior derivative taken on the constant fields (xi, J(z) xi).
pub fn ddc_check(j: &AlmostComplexStructure, u: &ScalarField, xi: &CVec, z: &CVec) -> Result<f64> {
    let x = realify(z);
    j.check_point(&x)?;
    let rep = j.split_at(&x);
    let eta0 = &rep.a * xi + rep.b.conjugate() * xi.conjugate();
    // alpha_w(y) = -du_y(J(y) w) / 2 for the frozen vector w
    let alpha = |y: &CVec, w: &CVec| -> Result<f64> {
        let xr = realify(y);
        j.check_point(&xr)?;
        let r = j.split_at(&xr);
        let jw = &r.a * w + r.b.conjugate() * w.conjugate();
        let mut s = C64::new(0.0, 0.0);
        for k in 0..j.n {
            s += u.uz(y, k) * jw[k];
        }
        Ok(-s.re)
    };
    // d alpha (X, Y) = X.alpha(Y) - Y.alpha(X), directional central differences
    let h = H_U;
    let along = |dir: &CVec, w: &CVec| -> Result<f64> {
        let step = dir * C64::new(h, 0.0);
        let zp = z + &step;
        let zm = z - &step;
        Ok((alpha(&zp, w)? - alpha(&zm, w)?) / (2.0 * h))
    };
    let ddc = along(xi, &eta0)? - along(&eta0, xi)?;
    let lhs = hessian_direct(j, u, xi, z)?;
    Ok((lhs - ddc).abs())
}

/// Minimum over the sample points of the smallest eigenvalue of the paired
/// current matrix 2M relative to the metric h.
pub fn strictly_psh_margin(
    j: &AlmostComplexStructure,
    u: &ScalarField,
    omega: &HermitianMetric,
    points: &[CVec],
) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for z in points {
        let m = current_11(j, u, z)?;
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let h = omega.h_at(z)?;
        let chol = h
            .cholesky()
            .ok_or_else(|| AcxError::Contract("metric not positive at a sample".into()))?;
        let linv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| AcxError::Numerical("metric factor not invertible".into()))?;
        let rel = &linv * m * linv.adjoint();
        let eigs = hermitian_eigs(&rel)?;
        margin = margin.min(2.0 * eigs[0]);
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loglog_slope;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cvec(parts: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(parts.len(), parts.iter().map(|&(re, im)| C64::new(re, im)))
    }

    fn e1(n: usize) -> CVec {
        let mut v = CVec::zeros(n);
        v[0] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn classical_cases() {
        let j = AlmostComplexStructure::standard(2);
        let u = ScalarField::abs2(2);
        let z = cvec(&[(0.2, -0.1), (0.3, 0.15)]);
        assert!((hessian_direct(&j, &u, &e1(2), &z).unwrap() - 2.0).abs() <= 1e-12);
        // pluriharmonic: Re(z1^2)
        let mut p = crate::scalar::Poly::new();
        p.add_re(vec![0, 0], vec![], C64::new(1.0, 0.0));
        let uph = ScalarField::from_poly(2, &p).unwrap();
        for xi in [e1(2), cvec(&[(0.3, 0.7), (-0.2, 0.4)])] {
            assert!(hessian_direct(&j, &uph, &xi, &z).unwrap().abs() <= 1e-12);
        }
        // jet structure at the center: corrections vanish
        let jet = JetACS::single_first_order(2, C64::new(0.1, 0.0));
        let jj = AlmostComplexStructure::from_jet(&jet);
        let h0 = hessian_direct(&jj, &u, &e1(2), &CVec::zeros(2)).unwrap();
        assert!((h0 - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn quadratic_homogeneity_and_sign_symmetry() {
        let jet = JetACS::random(2, 0.3, 5);
        let j = AlmostComplexStructure::from_jet(&jet);
        let u = ScalarField::mixed_poly(2);
        let z = cvec(&[(0.05, -0.03), (0.02, 0.04)]);
        let xi = cvec(&[(0.4, -0.9), (0.7, 0.2)]);
        let h1 = hessian_direct(&j, &u, &xi, &z).unwrap();
        let hm = hessian_direct(&j, &u, &(-&xi), &z).unwrap();
        let hl = hessian_direct(&j, &u, &(&xi * C64::new(1.7, 0.0)), &z).unwrap();
        assert!((h1 - hm).abs() <= 1e-10);
        assert!((hl - 1.7 * 1.7 * h1).abs() <= 1e-10 * (1.0 + h1.abs()));
    }

    #[test]
    fn expansion_matches_direct_to_third_order() {
        let u = ScalarField::mixed_poly(2);
        for seed in [7u64, 19] {
            let jet = JetACS::random(2, 0.3, seed);
            let j = AlmostComplexStructure::from_jet(&jet);
            let tables = HessianTables::new(&jet).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut rnd = |rng: &mut ChaCha8Rng| {
                cvec(&[
                    (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ])
            };
            let zdir = rnd(&mut rng).normalize();
            for _ in 0..3 {
                let xi = rnd(&mut rng).normalize();
                let radii = [2.5e-2, 1.25e-2, 6.25e-3, 3.125e-3];
                let diffs: Vec<f64> = radii
                    .iter()
                    .map(|&r| {
                        let z = &zdir * C64::new(r, 0.0);
                        let hd = hessian_direct(&j, &u, &xi, &z).unwrap();
                        let he = hessian_expansion(&tables, &u, &xi, &z);
                        (hd - he).abs()
                    })
                    .collect();
                let slope = loglog_slope(&radii, &diffs);
                assert!(slope >= 2.9, "slope {slope}, diffs {diffs:?}");
            }
        }
    }

    #[test]
    fn expansion_zero_jet_is_classical() {
        let jet = JetACS::zero(2);
        let tables = HessianTables::new(&jet).unwrap();
        let u = ScalarField::mixed_poly(2);
        let z = cvec(&[(0.21, -0.08), (0.13, 0.02)]);
        let xi = cvec(&[(0.5, 0.1), (-0.3, 0.8)]);
        let he = hessian_expansion(&tables, &u, &xi, &z);
        let mut classical = 0.0;
        for k in 0..2 {
            for l in 0..2 {
                classical += 2.0 * (u.uzzb(&z, k, l) * xi[k] * xi[l].conj()).re;
            }
        }
        assert!((he - classical).abs() <= 1e-11);
        let j = AlmostComplexStructure::from_jet(&jet);
        assert!((he - hessian_direct(&j, &u, &xi, &z).unwrap()).abs() <= 1e-11);
    }

    #[test]
    fn expansion_at_center_is_classical() {
        let jet = JetACS::random(2, 0.4, 3);
        let tables = HessianTables::new(&jet).unwrap();
        let u = ScalarField::mixed_poly(2);
        let xi = cvec(&[(1.0, 0.5), (-0.3, 0.2)]);
        let z0 = CVec::zeros(2);
        let he = hessian_expansion(&tables, &u, &xi, &z0);
        let mut classical = 0.0;
        for k in 0..2 {
            for l in 0..2 {
                classical += 2.0 * (u.uzzb(&z0, k, l) * xi[k] * xi[l].conj()).re;
            }
        }
        assert!((he - classical).abs() <= 1e-14);
    }

    #[test]
    fn reduced_expansion_agrees_on_third_order_jets() {
        // only B3bb nonzero (jet invariants respected)
        let mut jet = JetACS::zero(2);
        let n = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for r in 0..n {
            for s in 0..n {
                for t in 0..=s {
                    for k in 0..n {
                        for l in 0..n {
                            if r > l {
                                let v = C64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                                jet.b3bb[(r * n + s) * n + t][(k, l)] = v;
                                jet.b3bb[(r * n + t) * n + s][(k, l)] = v;
                            }
                        }
                    }
                }
            }
        }
        jet.validate().unwrap();
        let tables = HessianTables::new(&jet).unwrap();
        let u = ScalarField::mixed_poly(2);
        let z = cvec(&[(0.007, -0.005), (0.004, 0.006)]);
        let xi = cvec(&[(0.8, 0.1), (0.2, -0.5)]);
        let full = hessian_expansion(&tables, &u, &xi, &z);
        let red = hessian_expansion_reduced(&jet, &u, &xi, &z).unwrap();
        assert!((full - red).abs() <= 1e-12, "{full} vs {red}");
        // negative control
        let bad = JetACS::single_first_order(2, C64::new(0.1, 0.0));
        assert!(hessian_expansion_reduced(&bad, &u, &xi, &z).is_err());
    }

    #[test]
    fn current_matrix_and_pairing() {
        let j = AlmostComplexStructure::standard(2);
        let u = ScalarField::abs2(2);
        let z = cvec(&[(0.1, 0.2), (-0.3, 0.05)]);
        let m = current_11(&j, &u, &z).unwrap();
        assert!(crate::cmat_norm_inf(&(&m - CMat::identity(2, 2))) <= 1e-10);
        // zero for Re z1
        let m0 = current_11(&j, &ScalarField::re_z1(2), &z).unwrap();
        assert!(crate::cmat_norm_inf(&m0) <= 1e-12);
        // pairing identity under a jet structure
        let jet = JetACS::random(2, 0.3, 9);
        let jj = AlmostComplexStructure::from_jet(&jet);
        let um = ScalarField::mixed_poly(2);
        let zp = cvec(&[(0.06, -0.04), (0.03, 0.02)]);
        let mm = current_11(&jj, &um, &zp).unwrap();
        // the pairing uses the coefficients of xi^{1,0} in the zeta frame;
        // the truncated jet leaves a square defect that bounds the gap
        let xp = realify(&zp);
        let defect = jj.split_at(&xp).square_defect();
        let frame = crate::cfields::zeta_frame(&jj, &xp);
        let pmat = CMat::from_fn(2, 2, |a, k| frame[k].p[a]);
        for xi in [e1(2), cvec(&[(0.3, -0.6), (0.9, 0.2)])] {
            let lhs = hessian_direct(&jj, &um, &xi, &zp).unwrap();
            let xfield = crate::cfields::CField {
                p: xi.clone(),
                q: xi.conjugate(),
            };
            let x10 = crate::cfields::project10(&jj, &xp, &xfield);
            let c = pmat
                .clone()
                .lu()
                .solve(&x10.p)
                .expect("frame matrix is invertible");
            let mut pair = C64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    pair += mm[(k, l)] * c[k] * c[l].conj();
                }
            }
            let rhs = 2.0 * pair.re;
            assert!(
                (lhs - rhs).abs() <= 100.0 * defect + 1e-9,
                "{lhs} vs {rhs} (defect {defect:.3e})"
            );
        }
        // torsion contribution visible for u = Re z1 away from the center
        let mr = current_11(&jj, &ScalarField::re_z1(2), &zp).unwrap();
        assert!(crate::cmat_norm_inf(&mr) > 1e-4);
    }

    #[test]
    fn laplacian_values_and_frame_independence() {
        let j = AlmostComplexStructure::standard(2);
        let omega = HermitianMetric::standard(2);
        let u = ScalarField::abs2(2);
        let z = cvec(&[(0.2, 0.1), (-0.1, 0.3)]);
        assert!((laplacian_j(&j, &omega, &u, &z).unwrap() - 4.0).abs() <= 1e-10);
        assert!(laplacian_j(&j, &omega, &ScalarField::re_z1(2), &z)
            .unwrap()
            .abs()
            <= 1e-12);
        // jet structure at the center
        let jet = JetACS::random(2, 0.3, 13);
        let jj = AlmostComplexStructure::from_jet(&jet);
        assert!((laplacian_j(&jj, &omega, &u, &CVec::zeros(2)).unwrap() - 4.0).abs() <= 1e-10);
        // unitary reshuffles of the frame leave the sum unchanged
        let um = ScalarField::mixed_poly(2);
        let base: f64 = omega
            .orthonormal_frame(&z)
            .unwrap()
            .iter()
            .map(|xi| hessian_direct(&j, &um, xi, &z).unwrap())
            .sum();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            // a random unitary from QR of a random complex matrix
            let g = CMat::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let qr = g.qr();
            let q = qr.q();
            let frame = omega.orthonormal_frame(&z).unwrap();
            let mut total = 0.0;
            for c in 0..2 {
                let mut v = CVec::zeros(2);
                for r in 0..2 {
                    v += &frame[r] * q[(r, c)];
                }
                total += hessian_direct(&j, &um, &v, &z).unwrap();
            }
            assert!((total - base).abs() <= 1e-9 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn grad_form_values() {
        let j = AlmostComplexStructure::standard(2);
        let z = cvec(&[(0.1, 0.0), (0.0, 0.0)]);
        // constant u
        let mut p = crate::scalar::Poly::new();
        p.add(vec![], vec![], C64::new(3.0, 0.0));
        let uc = ScalarField::from_poly(2, &p).unwrap();
        assert_eq!(grad_form(&j, &uc, &e1(2), &z).unwrap(), 0.0);
        // u = Re z1, xi = e1: du(xi) = 1, du(J xi) = 0
        let ur = ScalarField::re_z1(2);
        assert!((grad_form(&j, &ur, &e1(2), &z).unwrap() - 0.5).abs() <= 1e-14);
        // positivity over seeded random data
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let jet = JetACS::random(2, 0.3, 4);
        let jj = AlmostComplexStructure::from_jet(&jet);
        for _ in 0..200 {
            let mut q = crate::scalar::Poly::new();
            for k in 0..2 {
                for l in 0..2 {
                    q.add_re(
                        vec![k],
                        vec![l],
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    );
                }
            }
            let uu = match ScalarField::from_poly(2, &q) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let xi = cvec(&[
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ]);
            let zz = cvec(&[
                (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)),
                (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)),
            ]);
            assert!(grad_form(&jj, &uu, &xi, &zz).unwrap() >= 0.0);
        }
    }

    #[test]
    fn ddc_residuals() {
        let j = AlmostComplexStructure::standard(2);
        let u = ScalarField::mixed_poly(2);
        let z = cvec(&[(0.15, -0.1), (0.2, 0.05)]);
        let xi = cvec(&[(0.6, 0.2), (-0.4, 0.9)]);
        assert!(ddc_check(&j, &u, &xi, &z).unwrap() <= 1e-9);
        // jet structure
        let jet = JetACS::random(2, 0.3, 8);
        let jj = AlmostComplexStructure::from_jet(&jet);
        let z2 = cvec(&[(0.05, 0.0), (0.0, 0.0)]);
        let r = ddc_check(&jj, &ScalarField::abs2(2), &xi, &z2).unwrap();
        assert!(r <= 1e-6, "residual {r}");
        // linear u: both sides vanish
        let r2 = ddc_check(&jj, &ScalarField::re_z1(2), &xi, &z2).unwrap();
        assert!(r2 <= 1e-8);
    }

    #[test]
    fn psh_margins() {
        let j = AlmostComplexStructure::standard(2);
        let omega = HermitianMetric::standard(2);
        let pts = vec![CVec::zeros(2), cvec(&[(0.1, 0.05), (-0.04, 0.08)])];
        let m = strictly_psh_margin(&j, &ScalarField::abs2(2), &omega, &pts).unwrap();
        assert!((m - 2.0).abs() <= 1e-10);
        let m0 = strictly_psh_margin(&j, &ScalarField::re_z1(2), &omega, &pts).unwrap();
        assert!(m0.abs() <= 1e-10);
        let mneg = strictly_psh_margin(&j, &ScalarField::neg_abs2(2), &omega, &pts).unwrap();
        assert!((mneg + 2.0).abs() <= 1e-10);
        // |z|^2 under a jet structure stays strictly psh near the center
        let jet = JetACS::random(2, 0.3, 6);
        let jj = AlmostComplexStructure::from_jet(&jet);
        let near = vec![cvec(&[(0.02, -0.01), (0.01, 0.015)])];
        let mj = strictly_psh_margin(&jj, &ScalarField::abs2(2), &omega, &near).unwrap();
        assert!(mj >= 1.8, "margin {mj}");
    }
}
