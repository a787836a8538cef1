//! (p,p)-forms over a complex frame: evaluation on real vector tuples,
//! positivity in bidegree (1,1) with rank-one decomposition, the polarization
//! identity for frame covectors, Hermitian metrics, mass densities against
//! the coordinate volume, and the Wirtinger ratio of sampled surfaces.
//!
//! A form is stored through its coefficients u_{K,H} in the convention
//! u = i^{p^2} sum_{K,H} u_{K,H} zeta*_K wedge conj(zeta*_H) over increasing
//! multi-indices. Densities are reported against the coordinate Lebesgue
//! volume dx_1 dy_1 ... dx_n dy_n.

use crate::acstruct::AlmostComplexStructure;
use crate::{
    hermitian_eigen_pairs, realify, AcxError, CMat, CVec, Result, C64,
};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

const I: C64 = C64::new(0.0, 1.0);

/// Relative PSD tolerance (scaled by 1 + |trace|).
pub const TOL_PSD: f64 = 1e-9;

/// Increasing multi-indices of length p over 0..n, lexicographic.
pub fn multi_indices(n: usize, p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    let mut cur: Vec<usize> = (0..p).collect();
    if p > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        // advance
        let mut i = p;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - p {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in (i + 1)..p {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Complex exterior algebra on 2n generators (dz_1..dz_n, dzbar_1..dzbar_n)
// ---------------------------------------------------------------------------

/// A complex alternating form: map from sorted generator tuples to
/// coefficients. Generator a < n is dz_{a+1}; generator n + a is dzbar_{a+1}.
#[derive(Debug, Clone, Default)]
pub struct ExtForm {
    pub terms: BTreeMap<Vec<usize>, C64>,
}

impl ExtForm {
    pub fn zero() -> Self {
        ExtForm::default()
    }

    pub fn scalar(c: C64) -> Self {
        let mut f = ExtForm::zero();
        f.terms.insert(vec![], c);
        f
    }

    /// A 1-form sum_a coeffs[a] * generator_a.
    pub fn covector(coeffs: &[C64]) -> Self {
        let mut f = ExtForm::zero();
        for (a, &c) in coeffs.iter().enumerate() {
            if c != C64::new(0.0, 0.0) {
                f.terms.insert(vec![a], c);
            }
        }
        f
    }

    pub fn add_term(&mut self, gens: &[usize], c: C64) {
        // sort with sign, drop repeats
        let mut g = gens.to_vec();
        let mut sign = 1.0;
        for i in 1..g.len() {
            let mut j = i;
            while j > 0 && g[j - 1] > g[j] {
                g.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        for w in g.windows(2) {
            if w[0] == w[1] {
                return;
            }
        }
        let e = self.terms.entry(g).or_insert_with(|| C64::new(0.0, 0.0));
        *e += c * sign;
    }

    pub fn add(&self, other: &ExtForm) -> ExtForm {
        let mut out = self.clone();
        for (g, c) in &other.terms {
            let e = out.terms.entry(g.clone()).or_insert_with(|| C64::new(0.0, 0.0));
            *e += c;
        }
        out
    }

    pub fn scale(&self, c: C64) -> ExtForm {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn wedge(&self, other: &ExtForm) -> ExtForm {
        let mut out = ExtForm::zero();
        for (ga, ca) in &self.terms {
            for (gb, cb) in &other.terms {
                let mut g = ga.clone();
                g.extend_from_slice(gb);
                out.add_term(&g, ca * cb);
            }
        }
        out
    }

    pub fn norm_inf(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &ExtForm) -> ExtForm {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Evaluate a k-form on k real tangent vectors given by their complex
    /// representations v in C^n (so dz_a(v) = v_a, dzbar_a(v) = conj(v_a)).
    pub fn eval(&self, n: usize, vectors: &[CVec]) -> C64 {
        let k = vectors.len();
        let pair: Vec<Vec<C64>> = vectors
            .iter()
            .map(|v| {
                let mut row = Vec::with_capacity(2 * n);
                for a in 0..n {
                    row.push(v[a]);
                }
                for a in 0..n {
                    row.push(v[a].conj());
                }
                row
            })
            .collect();
        let mut out = C64::new(0.0, 0.0);
        for (g, c) in &self.terms {
            if g.len() != k {
                continue;
            }
            let m = CMat::from_fn(k, k, |r, col| pair[col][g[r]]);
            out += c * m.determinant();
        }
        out
    }
}

// ---------------------------------------------------------------------------
// PQForm
// ---------------------------------------------------------------------------

/// Coefficients u_{K,H} of a (p,p)-form over a complex frame, stored densely
/// over the increasing multi-indices of length p.
#[derive(Debug, Clone)]
pub struct PQForm {
    pub n: usize,
    pub p: usize,
    /// Multi-index list shared by rows and columns.
    pub indices: Vec<Vec<usize>>,
    /// coeffs[k * m + h] = u_{K_k, H_h}, m = C(n, p).
    pub coeffs: Vec<C64>,
}

impl PQForm {
    pub fn zero(n: usize, p: usize) -> Self {
        let indices = multi_indices(n, p);
        let m = indices.len();
        PQForm {
            n,
            p,
            indices,
            coeffs: vec![C64::new(0.0, 0.0); m * m],
        }
    }

    /// A (1,1)-form from its coefficient matrix.
    pub fn from_matrix(m: &CMat) -> Self {
        let n = m.nrows();
        let mut f = PQForm::zero(n, 1);
        for k in 0..n {
            for h in 0..n {
                f.coeffs[k * n + h] = m[(k, h)];
            }
        }
        f
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        if self.p != 1 {
            return Err(AcxError::Contract(format!(
                "matrix view requires a (1,1)-form, got p = {}",
                self.p
            )));
        }
        let n = self.n;
        Ok(CMat::from_fn(n, n, |k, h| self.coeffs[k * n + h]))
    }

    pub fn get(&self, k: usize, h: usize) -> C64 {
        self.coeffs[k * self.indices.len() + h]
    }

    pub fn set(&mut self, k: usize, h: usize, c: C64) {
        let m = self.indices.len();
        self.coeffs[k * m + h] = c;
    }

    /// Max violation of u_{H,K} = conj(u_{K,H}).
    pub fn reality_defect(&self) -> f64 {
        let m = self.indices.len();
        let mut worst = 0.0f64;
        for k in 0..m {
            for h in 0..m {
                worst = worst.max((self.coeffs[k * m + h] - self.coeffs[h * m + k].conj()).norm());
            }
        }
        worst
    }

    /// The form as an element of the exterior algebra, frame = coordinates.
    pub fn to_ext(&self) -> ExtForm {
        let m = self.indices.len();
        let ip2 = I.powu((self.p * self.p) as u32);
        let mut out = ExtForm::zero();
        for k in 0..m {
            for h in 0..m {
                let c = self.coeffs[k * m + h];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let mut gens: Vec<usize> = self.indices[k].clone();
                gens.extend(self.indices[h].iter().map(|&a| a + self.n));
                out.add_term(&gens, ip2 * c);
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let m = self.indices.len();
        let mut coeffs = Map::new();
        for k in 0..m {
            for h in 0..m {
                let c = self.coeffs[k * m + h];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let key = format!(
                    "{}|{}",
                    fmt_multi(&self.indices[k]),
                    fmt_multi(&self.indices[h])
                );
                coeffs.insert(key, json!([c.re, c.im]));
            }
        }
        json!({ "n": self.n, "p": self.p, "coeffs": coeffs })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| AcxError::Config(format!("form JSON: {m}"));
        let n = v["n"].as_u64().ok_or_else(|| bad("missing n"))? as usize;
        let p = v["p"].as_u64().ok_or_else(|| bad("missing p"))? as usize;
        if p > n {
            return Err(bad("p exceeds n"));
        }
        let mut f = PQForm::zero(n, p);
        let pos = |mi: &[usize]| f.indices.iter().position(|x| x == mi);
        let coeffs = v["coeffs"].as_object().ok_or_else(|| bad("missing coeffs"))?;
        for (key, val) in coeffs {
            let (ks, hs) = key
                .split_once('|')
                .ok_or_else(|| bad("key must be K|H"))?;
            let parse = |s: &str| -> Result<Vec<usize>> {
                if s.is_empty() {
                    return Ok(vec![]);
                }
                let mut out = vec![];
                for tok in s.split(',') {
                    let i: usize = tok
                        .trim()
                        .parse()
                        .map_err(|_| bad("bad multi-index entry"))?;
                    if i == 0 || i > n {
                        return Err(bad("multi-index entry out of range"));
                    }
                    out.push(i - 1);
                }
                if out.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad("multi-index must be strictly increasing"));
                }
                Ok(out)
            };
            let kmi = parse(ks)?;
            let hmi = parse(hs)?;
            let ki = pos(&kmi).ok_or_else(|| bad("multi-index length mismatch"))?;
            let hi = pos(&hmi).ok_or_else(|| bad("multi-index length mismatch"))?;
            let arr = val.as_array().ok_or_else(|| bad("coefficient must be [re, im]"))?;
            if arr.len() != 2 {
                return Err(bad("coefficient must be [re, im]"));
            }
            let c = C64::new(
                arr[0].as_f64().ok_or_else(|| bad("bad re"))?,
                arr[1].as_f64().ok_or_else(|| bad("bad im"))?,
            );
            let m = f.indices.len();
            f.coeffs[ki * m + hi] = c;
        }
        Ok(f)
    }
}

fn fmt_multi(mi: &[usize]) -> String {
    mi.iter()
        .map(|&a| (a + 1).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// u(xi_1, J xi_1, ..., xi_p, J xi_p) = 2^p sum u_{K,H} det(lambda_K)
/// conj(det(lambda_H)), lambda the n x p matrix of frame coefficients.
pub fn eval_pp(u: &PQForm, vectors: &[CVec]) -> Result<f64> {
    if vectors.len() != u.p {
        return Err(AcxError::Contract(format!(
            "expected {} vectors, got {}",
            u.p,
            vectors.len()
        )));
    }
    let scale = u.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if u.reality_defect() > 1e-12 * (1.0 + scale) {
        return Err(AcxError::Contract(
            "form is not real: coefficients must satisfy u_HK = conj(u_KH)".into(),
        ));
    }
    let p = u.p;
    let lambda = CMat::from_fn(u.n, p, |r, c| vectors[c][r]);
    let minor = |mi: &[usize]| -> C64 {
        CMat::from_fn(p, p, |r, c| lambda[(mi[r], c)]).determinant()
    };
    let dets: Vec<C64> = u.indices.iter().map(|mi| minor(mi)).collect();
    let m = u.indices.len();
    let mut out = C64::new(0.0, 0.0);
    for k in 0..m {
        for h in 0..m {
            out += u.coeffs[k * m + h] * dets[k] * dets[h].conj();
        }
    }
    out *= C64::new(2.0f64.powi(p as i32), 0.0);
    if out.im.abs() > 1e-12 * (1.0 + out.re.abs()) {
        return Err(AcxError::Numerical(format!(
            "evaluation has imaginary part {:.3e}",
            out.im
        )));
    }
    Ok(out.re)
}

/// Positivity verdict for a (1,1)-form.
#[derive(Debug, Clone)]
pub struct PositivityVerdict {
    pub positive: bool,
    pub min_eigenvalue: f64,
    /// Eigenvector of the minimal eigenvalue (complex representation of a
    /// real tangent vector), present on failure.
    pub witness: Option<CVec>,
}

pub fn is_positive_11(u: &PQForm) -> Result<PositivityVerdict> {
    let m = u.to_matrix()?;
    let (vals, vecs) = hermitian_eigen_pairs(&m)?;
    let trace: f64 = (0..u.n).map(|k| m[(k, k)].re).sum();
    let tol = TOL_PSD * (1.0 + trace.abs());
    let positive = vals[0] >= -tol;
    Ok(PositivityVerdict {
        positive,
        min_eigenvalue: vals[0],
        witness: if positive { None } else { Some(vecs.column(0).into_owned()) },
    })
}

/// Rank-one decomposition of a positive (1,1)-form: covectors alpha_t with
/// u = sum_t i alpha_t wedge conj(alpha_t).
pub fn strong_decomp_11(u: &PQForm) -> Result<Vec<CVec>> {
    let verdict = is_positive_11(u)?;
    if !verdict.positive {
        return Err(AcxError::Contract(format!(
            "form is not positive (min eigenvalue {:.3e})",
            verdict.min_eigenvalue
        )));
    }
    let m = u.to_matrix()?;
    let (vals, vecs) = hermitian_eigen_pairs(&m)?;
    let trace: f64 = vals.iter().sum();
    let tol = TOL_PSD * (1.0 + trace.abs());
    let mut out = vec![];
    for (t, &lam) in vals.iter().enumerate() {
        if lam > tol {
            out.push(vecs.column(t) * C64::new(lam.sqrt(), 0.0));
        }
    }
    // reconstruction check
    let mut rec = CMat::zeros(u.n, u.n);
    for a in &out {
        rec += a * a.adjoint();
    }
    let err = crate::cmat_norm_inf(&(&rec - &m));
    if err > 1e-10 * (1.0 + trace.abs()) {
        return Err(AcxError::Numerical(format!(
            "rank-one reconstruction error {err:.3e}"
        )));
    }
    Ok(out)
}

/// Residual of the polarization identity
///   4 zeta*_j wedge conj(zeta*_k)
///     = sum_{m=0..3} i^m (zeta*_j + i^m zeta*_k) wedge conj(same)
/// for frame covectors given as rows of `frame` (coefficients over dz).
pub fn polarization_check(frame: &CMat, j: usize, k: usize) -> f64 {
    let n = frame.ncols();
    let cov = |row: usize| -> Vec<C64> { (0..n).map(|c| frame[(row, c)]).collect() };
    let holo = |coeffs: &[C64]| -> ExtForm {
        let mut full = vec![C64::new(0.0, 0.0); 2 * n];
        full[..n].copy_from_slice(coeffs);
        ExtForm::covector(&full)
    };
    let anti = |coeffs: &[C64]| -> ExtForm {
        let mut full = vec![C64::new(0.0, 0.0); 2 * n];
        for a in 0..n {
            full[n + a] = coeffs[a].conj();
        }
        ExtForm::covector(&full)
    };
    let zj = cov(j);
    let zk = cov(k);
    let lhs = holo(&zj).wedge(&anti(&zk)).scale(C64::new(4.0, 0.0));
    let mut rhs = ExtForm::zero();
    for m in 0..4u32 {
        let w = I.powu(m);
        let combo: Vec<C64> = (0..n).map(|c| zj[c] + w * zk[c]).collect();
        rhs = rhs.add(&holo(&combo).wedge(&anti(&combo)).scale(w));
    }
    lhs.sub(&rhs).norm_inf()
}

// ---------------------------------------------------------------------------
// Hermitian metrics
// ---------------------------------------------------------------------------

/// A positive Hermitian matrix field h(z), the coefficients of
/// omega = i sum h_kl dz_k wedge dzbar_l.
#[derive(Clone)]
pub struct HermitianMetric {
    pub n: usize,
    h: Arc<dyn Fn(&CVec) -> CMat + Send + Sync>,
}

impl HermitianMetric {
    pub fn standard(n: usize) -> Self {
        HermitianMetric {
            n,
            h: Arc::new(move |_| CMat::identity(n, n)),
        }
    }

    pub fn from_fn(n: usize, h: impl Fn(&CVec) -> CMat + Send + Sync + 'static) -> Self {
        HermitianMetric { n, h: Arc::new(h) }
    }

    /// Conformal metric lambda(z) * I.
    pub fn conformal(n: usize, lambda: impl Fn(&CVec) -> f64 + Send + Sync + 'static) -> Self {
        HermitianMetric {
            n,
            h: Arc::new(move |z| CMat::identity(n, n) * C64::new(lambda(z), 0.0)),
        }
    }

    /// Coefficients at z, checked Hermitian and positive.
    pub fn h_at(&self, z: &CVec) -> Result<CMat> {
        let h = (self.h)(z);
        let asym = crate::cmat_norm_inf(&(&h - h.adjoint()));
        if asym > 1e-9 * (1.0 + crate::cmat_norm_inf(&h)) {
            return Err(AcxError::Contract(format!(
                "metric is not Hermitian (asymmetry {asym:.3e})"
            )));
        }
        // the complex Cholesky below does not reject indefinite matrices
        // (diagonal square roots stay complex), so check eigenvalues
        let eigs = crate::hermitian_eigs(&h)?;
        if eigs[0] <= 0.0 || h.clone().cholesky().is_none() {
            return Err(AcxError::Contract(
                "metric is not positive definite at the sample point".into(),
            ));
        }
        Ok(h)
    }

    /// An h-orthonormal complex frame at z (columns of the inverse adjoint
    /// Cholesky factor; the deterministic pivot order is the coordinate one).
    pub fn orthonormal_frame(&self, z: &CVec) -> Result<Vec<CVec>> {
        let h = self.h_at(z)?;
        let chol = h
            .cholesky()
            .ok_or_else(|| AcxError::Contract("metric not positive".into()))?;
        let linv_adj = chol
            .l()
            .adjoint()
            .try_inverse()
            .ok_or_else(|| AcxError::Numerical("metric factor not invertible".into()))?;
        Ok((0..self.n).map(|k| linv_adj.column(k).into_owned()).collect())
    }
}

/// omega(X, Y) for real tangent vectors in complex representation:
/// i sum h_kl dz_k wedge dzbar_l (X, Y) = -2 Im sum h_kl X_k conj(Y_l).
pub fn omega_eval(h: &CMat, x: &CVec, y: &CVec) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    let n = h.nrows();
    for k in 0..n {
        for l in 0..n {
            s += h[(k, l)] * x[k] * y[l].conj();
        }
    }
    -2.0 * s.im
}

/// The Riemannian metric of the pair (omega, J):
/// g(X, Y) = (omega(X, JY) + omega(Y, JX)) / 4. Euclidean for the standard
/// pair.
pub fn metric_g(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    z: &CVec,
    x: &CVec,
    y: &CVec,
) -> Result<f64> {
    let xr = realify(z);
    j.check_point(&xr)?;
    let rep = j.split_at(&xr);
    let h = omega.h_at(z)?;
    let jx = &rep.a * x + rep.b.conjugate() * x.conjugate();
    let jy = &rep.a * y + rep.b.conjugate() * y.conjugate();
    Ok(0.25 * (omega_eval(&h, x, &jy) + omega_eval(&h, y, &jx)))
}

/// Density of Theta wedge omega^{n-p}/(n-p)! against the coordinate Lebesgue
/// volume dx_1 dy_1 ... dx_n dy_n (n <= 2: brute-force exterior algebra).
pub fn mass_density(theta: &PQForm, omega: &HermitianMetric, z: &CVec) -> Result<f64> {
    let n = theta.n;
    let p = theta.p;
    if p > n {
        return Err(AcxError::Contract("form degree exceeds dimension".into()));
    }
    let h = omega.h_at(z)?;
    let mut omega_ext = ExtForm::zero();
    for k in 0..n {
        for l in 0..n {
            omega_ext.add_term(&[k, n + l], I * h[(k, l)]);
        }
    }
    let mut top = theta.to_ext();
    let mut fact = 1.0f64;
    for q in 0..(n - p) {
        top = top.wedge(&omega_ext);
        fact *= (q + 1) as f64;
    }
    top = top.scale(C64::new(1.0 / fact, 0.0));
    let sorted: Vec<usize> = (0..2 * n).collect();
    let c = top.terms.get(&sorted).copied().unwrap_or(C64::new(0.0, 0.0));
    // dz_1..dz_n dzbar_1..dzbar_n = (-1)^{n(n-1)/2} (-2i)^n Lebesgue
    let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let factor = (C64::new(0.0, -2.0)).powu(n as u32) * C64::new(sign, 0.0);
    let density = c * factor;
    if density.im.abs() > 1e-10 * (1.0 + density.re.abs()) {
        return Err(AcxError::Numerical(format!(
            "density has imaginary part {:.3e}",
            density.im
        )));
    }
    Ok(density.re)
}

// ---------------------------------------------------------------------------
// Wirtinger ratio
// ---------------------------------------------------------------------------

/// Ratio omega_W(T1, T2) / dV_g(T1, T2) at a point, with omega_W = g(J., .)
/// and dV_g the Gram area of the tangent pair. Rank-deficient tangents are a
/// numerical error (callers mark and skip the node).
pub fn wirtinger_at(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    z: &CVec,
    t1: &CVec,
    t2: &CVec,
) -> Result<f64> {
    let g11 = metric_g(j, omega, z, t1, t1)?;
    let g22 = metric_g(j, omega, z, t2, t2)?;
    let g12 = metric_g(j, omega, z, t1, t2)?;
    let disc = g11 * g22 - g12 * g12;
    let scale = (g11 * g22).max(1e-300);
    if disc <= 1e-12 * scale {
        return Err(AcxError::Numerical(
            "tangent pair is rank-deficient at this node".into(),
        ));
    }
    let xr = realify(z);
    let rep = j.split_at(&xr);
    let jt1 = &rep.a * t1 + rep.b.conjugate() * t1.conjugate();
    let w = metric_g(j, omega, z, &jt1, t2)?;
    Ok(w / disc.sqrt())
}

/// A map from an m x m grid on a parameter square into C^n (complex
/// representation of R^{2n}).
#[derive(Clone)]
pub struct SampledSurface {
    pub m: usize,
    pub step: f64,
    pub points: Vec<CVec>,
}

impl SampledSurface {
    pub fn from_fn(m: usize, a: f64, b: f64, f: impl Fn(f64, f64) -> CVec) -> Result<Self> {
        if m < 3 {
            return Err(AcxError::Config("surface grid needs m >= 3".into()));
        }
        let step = (b - a) / (m - 1) as f64;
        let mut points = Vec::with_capacity(m * m);
        for it in 0..m {
            for is in 0..m {
                points.push(f(a + it as f64 * step, a + is as f64 * step));
            }
        }
        Ok(SampledSurface { m, step, points })
    }

    fn at(&self, it: usize, is: usize) -> &CVec {
        &self.points[it * self.m + is]
    }

    /// Difference-quotient tangents (central inside, one-sided at the edge).
    pub fn tangents(&self, it: usize, is: usize) -> (CVec, CVec) {
        let m = self.m;
        let d = |hi: &CVec, lo: &CVec, span: f64| (hi - lo) / C64::new(span * self.step, 0.0);
        let t1 = if it == 0 {
            d(self.at(1, is), self.at(0, is), 1.0)
        } else if it == m - 1 {
            d(self.at(m - 1, is), self.at(m - 2, is), 1.0)
        } else {
            d(self.at(it + 1, is), self.at(it - 1, is), 2.0)
        };
        let t2 = if is == 0 {
            d(self.at(it, 1), self.at(it, 0), 1.0)
        } else if is == m - 1 {
            d(self.at(it, m - 1), self.at(it, m - 2), 1.0)
        } else {
            d(self.at(it, is + 1), self.at(it, is - 1), 2.0)
        };
        (t1, t2)
    }
}

/// Wirtinger ratio at every node; rank-deficient or out-of-patch nodes are
/// excluded (valid = false, alpha = 0).
pub fn wirtinger_ratio(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    surface: &SampledSurface,
) -> (Vec<f64>, Vec<bool>) {
    let m = surface.m;
    let mut alpha = vec![0.0f64; m * m];
    let mut valid = vec![false; m * m];
    for it in 0..m {
        for is in 0..m {
            let idx = it * m + is;
            let (t1, t2) = surface.tangents(it, is);
            match wirtinger_at(j, omega, surface.at(it, is), &t1, &t2) {
                Ok(a) => {
                    alpha[idx] = a;
                    valid[idx] = true;
                }
                Err(_) => {}
            }
        }
    }
    (alpha, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cvec(parts: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(parts.len(), parts.iter().map(|&(re, im)| C64::new(re, im)))
    }

    fn e(n: usize, k: usize) -> CVec {
        let mut v = CVec::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        v
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&g + g.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn eval_matches_exterior_algebra_oracle() {
        // p=1 identity on e1 -> 2
        let u = PQForm::from_matrix(&CMat::identity(2, 2));
        assert!((eval_pp(&u, &[e(2, 0)]).unwrap() - 2.0).abs() <= 1e-14);
        // zero vector -> 0
        assert_eq!(eval_pp(&u, &[CVec::zeros(2)]).unwrap(), 0.0);
        // oracle cross-check under J0 (J xi = i xi) for random Hermitian u
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_hermitian(2, &mut rng);
            let u = PQForm::from_matrix(&m);
            let xi = cvec(&[
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ]);
            let direct = eval_pp(&u, &[xi.clone()]).unwrap();
            let oracle = u.to_ext().eval(2, &[xi.clone(), &xi * I]);
            assert!(oracle.im.abs() <= 1e-12);
            assert!((direct - oracle.re).abs() <= 1e-12, "{direct} vs {oracle}");
        }
        // p=2, n=2: coefficients of omega^2/2! evaluated on (e1, e2)
        let mut vol = PQForm::zero(2, 2);
        vol.set(0, 0, C64::new(1.0, 0.0));
        let direct = eval_pp(&vol, &[e(2, 0), e(2, 1)]).unwrap();
        let oracle = vol
            .to_ext()
            .eval(2, &[e(2, 0), &e(2, 0) * I, e(2, 1), &e(2, 1) * I]);
        assert!((direct - oracle.re).abs() <= 1e-12);
        assert!((direct - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn non_real_form_is_rejected() {
        let mut m = CMat::identity(2, 2);
        m[(0, 1)] = C64::new(0.3, 0.0); // not Hermitian
        let u = PQForm::from_matrix(&m);
        assert!(eval_pp(&u, &[e(2, 0)]).is_err());
    }

    #[test]
    fn positivity_verdicts() {
        let u = PQForm::from_matrix(&CMat::identity(2, 2));
        let v = is_positive_11(&u).unwrap();
        assert!(v.positive && (v.min_eigenvalue - 1.0).abs() <= 1e-12);
        let mut d = CMat::identity(2, 2);
        d[(1, 1)] = C64::new(-0.1, 0.0);
        let v = is_positive_11(&PQForm::from_matrix(&d)).unwrap();
        assert!(!v.positive && (v.min_eigenvalue + 0.1).abs() <= 1e-12);
        let w = v.witness.unwrap();
        assert!((w[1].norm() - 1.0).abs() <= 1e-10 && w[0].norm() <= 1e-10);
    }

    #[test]
    fn positivity_matches_randomized_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..40 {
            let m = random_hermitian(2, &mut rng);
            let u = PQForm::from_matrix(&m);
            let verdict = is_positive_11(&u).unwrap().positive;
            let trace: f64 = (m[(0, 0)] + m[(1, 1)]).re;
            let tol = 1e-9 * (1.0 + trace.abs());
            let mut sampled = true;
            for _ in 0..1000 {
                let xi = cvec(&[
                    (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ]);
                if eval_pp(&u, &[xi]).unwrap() < -tol {
                    sampled = false;
                    break;
                }
            }
            assert_eq!(verdict, sampled);
        }
    }

    #[test]
    fn rank_one_decomposition() {
        // identity: frame covectors themselves
        let u = PQForm::from_matrix(&CMat::identity(2, 2));
        let alphas = strong_decomp_11(&u).unwrap();
        assert_eq!(alphas.len(), 2);
        // rank-1 vv*
        let v = cvec(&[(0.6, 0.2), (-0.3, 0.7)]);
        let m = &v * v.adjoint();
        let alphas = strong_decomp_11(&PQForm::from_matrix(&m)).unwrap();
        assert_eq!(alphas.len(), 1);
        // random PSD: reconstruction and positivity of each term
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = random_hermitian(2, &mut rng);
            let psd = &g * g.adjoint();
            let alphas = strong_decomp_11(&PQForm::from_matrix(&psd)).unwrap();
            let mut rec = CMat::zeros(2, 2);
            for a in &alphas {
                rec += a * a.adjoint();
                let term = PQForm::from_matrix(&(a * a.adjoint()));
                assert!(is_positive_11(&term).unwrap().positive);
            }
            assert!(crate::cmat_norm_inf(&(&rec - &psd)) <= 1e-10);
        }
        // negative control
        let mut d = CMat::identity(2, 2);
        d[(1, 1)] = C64::new(-0.1, 0.0);
        assert!(strong_decomp_11(&PQForm::from_matrix(&d)).is_err());
    }

    #[test]
    fn polarization_identity() {
        let id = CMat::identity(2, 2);
        assert!(polarization_check(&id, 0, 0) <= 1e-13);
        assert!(polarization_check(&id, 0, 1) <= 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let f = CMat::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            if f.determinant().norm() < 0.1 {
                continue;
            }
            assert!(polarization_check(&f, 0, 1) <= 1e-12);
            assert!(polarization_check(&f, 1, 0) <= 1e-12);
        }
    }

    #[test]
    fn mass_densities() {
        // Theta = omega at n=1 -> 2
        let omega1 = HermitianMetric::standard(1);
        let theta = PQForm::from_matrix(&CMat::identity(1, 1));
        let z1 = CVec::zeros(1);
        assert!((mass_density(&theta, &omega1, &z1).unwrap() - 2.0).abs() <= 1e-12);
        // Theta = 0 -> 0
        let zero = PQForm::zero(1, 1);
        assert_eq!(mass_density(&zero, &omega1, &z1).unwrap(), 0.0);
        // Theta with identity coefficients on C^2 -> 8
        let omega2 = HermitianMetric::standard(2);
        let theta2 = PQForm::from_matrix(&CMat::identity(2, 2));
        let z2 = CVec::zeros(2);
        assert!((mass_density(&theta2, &omega2, &z2).unwrap() - 8.0).abs() <= 1e-12);
        // linearity and positivity on random PSD forms
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let g = CMat::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let psd = &g * g.adjoint();
            let d = mass_density(&PQForm::from_matrix(&psd), &omega2, &z2).unwrap();
            assert!(d >= -1e-12);
            let d2 =
                mass_density(&PQForm::from_matrix(&(&psd * C64::new(2.0, 0.0))), &omega2, &z2)
                    .unwrap();
            assert!((d2 - 2.0 * d).abs() <= 1e-10 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn orthonormal_frame_is_orthonormal() {
        let h0 = CMat::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => C64::new(2.0, 0.0),
            (1, 1) => C64::new(1.5, 0.0),
            (0, 1) => C64::new(0.3, 0.4),
            _ => C64::new(0.3, -0.4),
        });
        let omega = HermitianMetric::from_fn(2, move |_| h0.clone());
        let z = CVec::zeros(2);
        let h = omega.h_at(&z).unwrap();
        let frame = omega.orthonormal_frame(&z).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..2 {
                    for l in 0..2 {
                        s += frame[a][k].conj() * h[(k, l)] * frame[b][l];
                    }
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s - C64::new(want, 0.0)).norm() <= 1e-12);
            }
        }
        // non-positive metric is rejected
        let bad = HermitianMetric::from_fn(1, |_| CMat::identity(1, 1) * C64::new(-1.0, 0.0));
        assert!(bad.h_at(&CVec::zeros(1)).is_err());
    }

    #[test]
    fn metric_is_euclidean_for_standard_pair() {
        let j = AlmostComplexStructure::standard(2);
        let omega = HermitianMetric::standard(2);
        let z = cvec(&[(0.1, 0.2), (0.0, -0.1)]);
        // complex rep inner product: g(X, Y) = Re <X, Y>
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = cvec(&[
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ]);
            let y = cvec(&[
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ]);
            let g = metric_g(&j, &omega, &z, &x, &y).unwrap();
            let want = x.dotc(&y).re;
            assert!((g - want).abs() <= 1e-12, "{g} vs {want}");
        }
    }

    #[test]
    fn wirtinger_model_surfaces() {
        let j = AlmostComplexStructure::standard(2);
        let omega = HermitianMetric::standard(2);
        // complex line z1 = t + is, z2 = c (t + is): alpha = 1 everywhere
        let c = C64::new(0.4, -0.7);
        let line = SampledSurface::from_fn(9, -0.3, 0.3, |t, s| {
            let w = C64::new(t, s);
            CVec::from_iterator(2, [w, c * w])
        })
        .unwrap();
        let (alpha, valid) = wirtinger_ratio(&j, &omega, &line);
        for (a, v) in alpha.iter().zip(&valid) {
            assert!(*v && (a - 1.0).abs() <= 1e-10, "alpha {a}");
        }
        // orientation flip -> -1
        let flipped = SampledSurface::from_fn(9, -0.3, 0.3, |t, s| {
            let w = C64::new(s, t);
            CVec::from_iterator(2, [w, c * w])
        })
        .unwrap();
        let (alpha, _) = wirtinger_ratio(&j, &omega, &flipped);
        assert!((alpha[40] + 1.0).abs() <= 1e-10);
        // totally real plane: alpha = 0
        let real_plane =
            SampledSurface::from_fn(9, -0.3, 0.3, |t, s| cvec(&[(t, 0.0), (s, 0.0)])).unwrap();
        let (alpha, valid) = wirtinger_ratio(&j, &omega, &real_plane);
        for (a, v) in alpha.iter().zip(&valid) {
            assert!(*v && a.abs() <= 1e-12);
        }
        // seeded surfaces: |alpha| <= 1 + tol
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let coef: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let surf = SampledSurface::from_fn(7, -0.2, 0.2, |t, s| {
                cvec(&[
                    (coef[0] * t + coef[1] * s, coef[2] * t + coef[3] * s),
                    (coef[4] * t + coef[5] * s, coef[6] * t + coef[7] * s),
                ])
            })
            .unwrap();
            let (alpha, valid) = wirtinger_ratio(&j, &omega, &surf);
            for (a, v) in alpha.iter().zip(&valid) {
                if *v {
                    assert!(a.abs() <= 1.0 + 1e-3, "alpha {a}");
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_hermitian(2, &mut rng);
        let u = PQForm::from_matrix(&m);
        let v = u.to_json();
        let back = PQForm::from_json(&v).unwrap();
        for i in 0..4 {
            assert!((u.coeffs[i] - back.coeffs[i]).norm() <= 1e-15);
        }
        assert!(PQForm::from_json(&json!({"n": 2, "p": 3, "coeffs": {}})).is_err());
        assert!(
            PQForm::from_json(&json!({"n": 2, "p": 1, "coeffs": {"3|1": [1.0, 0.0]}})).is_err()
        );
    }
}
