//! Plurisubharmonicity by restriction to solved disks, the log(e^f + eps)
//! transform, the canonical Hermitian connection with its geodesic
//! exponential, and the geodesic-flow smoothing operator with monotonicity
//! and positivity-loss scans.

use crate::acstruct::AlmostComplexStructure;
use crate::cauchy::DiskField;
use crate::forms::{metric_g, HermitianMetric};
use crate::scalar::ScalarField;
use crate::{complexify, realify, AcxError, CVec, RMat, RVec, Result, C64};
use std::sync::Arc;

const PI: f64 = std::f64::consts::PI;

/// Step for the metric finite differences inside the connection.
const H_G: f64 = 2e-5;
/// Step for the curvature finite differences of the connection coefficients.
const H_CURV: f64 = 1e-3;
/// Residual bound for solved disks in the psh test.
const DISK_TOL: f64 = 1e-10;
/// Monotonicity slack on unit-scale fields.
pub const TOL_MONO: f64 = 1e-7;
/// Metric / structure compatibility residual bound for the connection.
pub const TOL_CONN: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Circle means on the disk grid
// ---------------------------------------------------------------------------

/// Bilinear interpolation of one component of a disk-grid field. Falls back
/// to the nearest node where the 2 x 2 patch is incomplete (near the rim).
pub fn interp_disk(field: &DiskField, comp: usize, zeta: C64) -> C64 {
    let grid = &field.grid;
    let n = grid.n_cells;
    let h = grid.h;
    // lattice coordinates of the lower-left surrounding node
    let fx = (zeta.re + 1.0) / h - 0.5;
    let fy = (zeta.im + 1.0) / h - 0.5;
    let ix = fx.floor() as i64;
    let iy = fy.floor() as i64;
    let corner = |dx: i64, dy: i64| -> Option<C64> {
        let (i, j) = (ix + dx, iy + dy);
        if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
            return None;
        }
        grid.node_of_cell[(i as usize) * n + j as usize]
            .map(|id| field.values[id * field.ncomp + comp])
    };
    match (corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)) {
        (Some(v00), Some(v10), Some(v01), Some(v11)) => {
            let tx = fx - ix as f64;
            let ty = fy - iy as f64;
            v00 * ((1.0 - tx) * (1.0 - ty))
                + v10 * (tx * (1.0 - ty))
                + v01 * ((1.0 - tx) * ty)
                + v11 * (tx * ty)
        }
        _ => field.values[grid.nearest_node(zeta) * field.ncomp + comp],
    }
}

/// Circle averages of a scalar disk field around 0 at the given radii,
/// by the (periodic, hence equal-weight) trapezoid rule with n_ang nodes.
pub fn circle_means(g: &DiskField, radii: &[f64], n_ang: usize) -> Result<Vec<f64>> {
    if g.ncomp != 1 {
        return Err(AcxError::Contract("circle means expect a scalar field".into()));
    }
    if n_ang < 64 {
        return Err(AcxError::Config("circle quadrature needs >= 64 nodes".into()));
    }
    let rim = 1.0 - g.grid.h;
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(0.0..=rim).contains(&r) {
            return Err(AcxError::Domain(format!(
                "circle radius {r} outside the sampled disk (limit {rim:.3})"
            )));
        }
        let mut s = 0.0;
        for m in 0..n_ang {
            let th = 2.0 * PI * m as f64 / n_ang as f64;
            s += interp_disk(g, 0, C64::from_polar(r, th)).re;
        }
        out.push(s / n_ang as f64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Psh test by restriction to solved disks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PshOutcome {
    Consistent,
    Violation,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct DirectionRecord {
    pub direction: RVec,
    pub radii: Vec<f64>,
    /// worst f(x) - circle mean over the radii (positive = suspicious)
    pub worst_margin: f64,
    pub disk_residual: f64,
    /// tolerance actually applied to this direction
    pub tol_used: f64,
}

#[derive(Debug, Clone)]
pub struct PshVerdict {
    pub point: RVec,
    pub records: Vec<DirectionRecord>,
    pub outcome: PshOutcome,
    /// (direction index, radius) witnessing a violation
    pub witness: Option<(usize, f64)>,
}

/// Mean-value test of f along J-holomorphic disks through x. The verdict is
/// a violation only when the margin clears a tolerance that already absorbs
/// the disk residual and the quadrature error, so solver noise is never
/// reported as a counterexample.
pub fn psh_test(
    j: &AlmostComplexStructure,
    f: &ScalarField,
    x: &RVec,
    directions: &[RVec],
    radii: &[f64],
    tol: f64,
) -> PshVerdict {
    let fx = f.value(&complexify(x));
    let mut records = Vec::with_capacity(directions.len());
    let mut witness = None;
    let mut any_failed = false;
    for (di, v) in directions.iter().enumerate() {
        let vn = v.norm();
        let room = if j.radius.is_finite() {
            (j.radius - x.norm()).max(0.0)
        } else {
            1.0
        };
        let rho = 0.45 * room / vn.max(1e-12);
        let disk = match crate::jdisks::solve_disk_adaptive(j, x, v, rho, DISK_TOL, 80, 48) {
            Ok(d) => d,
            Err(_) => {
                any_failed = true;
                records.push(DirectionRecord {
                    direction: v.clone(),
                    radii: radii.to_vec(),
                    worst_margin: f64::NAN,
                    disk_residual: f64::INFINITY,
                    tol_used: f64::INFINITY,
                });
                continue;
            }
        };
        // f composed with the disk, sampled at the grid nodes
        let mut g = DiskField::zeros(&disk.samples.grid.clone(), 1);
        for node in 0..disk.samples.grid.len() {
            let gz = CVec::from_fn(j.n, |c, _| disk.samples.values[node * j.n + c]);
            g.values[node] = C64::new(f.value(&gz), 0.0);
        }
        let means = match (
            circle_means(&g, radii, 128),
            circle_means(&g, radii, 256),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                any_failed = true;
                records.push(DirectionRecord {
                    direction: v.clone(),
                    radii: radii.to_vec(),
                    worst_margin: f64::NAN,
                    disk_residual: disk.residual,
                    tol_used: f64::INFINITY,
                });
                continue;
            }
        };
        let scale = g.sup_norm().max(1.0);
        let mut worst = f64::NEG_INFINITY;
        let mut worst_r = radii[0];
        let mut quad_err = 0.0f64;
        for (i, &r) in radii.iter().enumerate() {
            let interp_err = g.grid.h * g.grid.h * scale;
            quad_err = quad_err.max((means.0[i] - means.1[i]).abs() + interp_err);
            let margin = fx - means.1[i];
            if margin > worst {
                worst = margin;
                worst_r = r;
            }
        }
        let tol_used = tol.max(10.0 * (disk.residual + quad_err));
        if worst > tol_used {
            if disk.residual <= DISK_TOL {
                if witness.is_none() {
                    witness = Some((di, worst_r));
                }
            } else {
                // margin over tolerance on an uncertified disk proves nothing
                any_failed = true;
            }
        }
        records.push(DirectionRecord {
            direction: v.clone(),
            radii: radii.to_vec(),
            worst_margin: worst,
            disk_residual: disk.residual,
            tol_used,
        });
    }
    let outcome = if witness.is_some() {
        PshOutcome::Violation
    } else if any_failed {
        PshOutcome::Inconclusive
    } else {
        PshOutcome::Consistent
    };
    PshVerdict {
        point: x.clone(),
        records,
        outcome,
        witness,
    }
}

// ---------------------------------------------------------------------------
// log(e^f + eps)
// ---------------------------------------------------------------------------

/// The transform f -> log(e^f + eps) with exact chain-rule derivatives.
/// With s = e^f / (e^f + eps) the partials are s f_z, and the second-order
/// ones pick up s(1 - s) f_a f_b.
pub fn log_eps(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    if eps <= 0.0 {
        return Err(AcxError::Config("log smoothing needs eps > 0".into()));
    }
    let n = f.n;
    // stable in both tails of f
    let val = move |fv: f64| -> f64 {
        if fv > eps.ln() {
            fv + (eps * (-fv).exp()).ln_1p()
        } else {
            eps.ln() + (fv - eps.ln()).exp().ln_1p()
        }
    };
    let sig = move |fv: f64| -> f64 { 1.0 / (1.0 + eps * (-fv).exp()) };
    let (f0, f1, f2, f3) = (f.clone(), f.clone(), f.clone(), f.clone());
    Ok(ScalarField::from_parts(
        n,
        Arc::new(move |z| val(f0.value(z))),
        Arc::new(move |z, k| f1.uz(z, k) * sig(f1.value(z))),
        Arc::new(move |z, k, l| {
            let s = sig(f2.value(z));
            f2.uzz(z, k, l) * s + f2.uz(z, k) * f2.uz(z, l) * (s * (1.0 - s))
        }),
        Arc::new(move |z, k, l| {
            let s = sig(f3.value(z));
            f3.uzzb(z, k, l) * s + f3.uz(z, k) * f3.uzb(z, l) * (s * (1.0 - s))
        }),
    ))
}

// ---------------------------------------------------------------------------
// The canonical Hermitian connection and its geodesics
// ---------------------------------------------------------------------------

/// Connection coefficients Gamma^a_{bc}(x) on the patch, flattened to
/// a * d^2 + b * d + c with d = 2n. b is the differentiation slot.
#[derive(Clone)]
pub struct ConnectionCoefficients {
    pub dim: usize,
    gamma: Arc<dyn Fn(&RVec) -> Result<Vec<f64>> + Send + Sync>,
}

impl ConnectionCoefficients {
    pub fn flat(dim: usize) -> Self {
        ConnectionCoefficients {
            dim,
            gamma: Arc::new(move |_| Ok(vec![0.0; dim * dim * dim])),
        }
    }

    pub fn at(&self, x: &RVec) -> Result<Vec<f64>> {
        (self.gamma)(x)
    }
}

/// Real Gram matrix of the pair (omega, J) in the coordinate basis
/// (d/dx_1..d/dx_n, d/dy_1..d/dy_n).
pub fn real_gram(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    z: &CVec,
) -> Result<RMat> {
    let n = j.n;
    let basis: Vec<CVec> = (0..2 * n)
        .map(|a| {
            CVec::from_fn(n, |k, _| {
                if a < n && k == a {
                    C64::new(1.0, 0.0)
                } else if a >= n && k == a - n {
                    C64::new(0.0, 1.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        })
        .collect();
    let mut g = RMat::zeros(2 * n, 2 * n);
    for a in 0..2 * n {
        for b in a..2 * n {
            let v = metric_g(j, omega, z, &basis[a], &basis[b])?;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

/// The first canonical Hermitian connection of the pair (g, J):
/// Gamma = Gamma^{LC} - (1/2) J (nabla^{LC} J). It is metric (nabla g = 0)
/// and complex (nabla J = 0), at the price of torsion.
pub fn hermitian_connection(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
) -> ConnectionCoefficients {
    let d = 2 * j.n;
    let (jj, om) = (j.clone(), omega.clone());
    let gamma = move |x: &RVec| -> Result<Vec<f64>> {
        jj.check_point(x)?;
        let g0 = real_gram(&jj, &om, &complexify(x))?;
        let ginv = g0
            .clone()
            .cholesky()
            .ok_or_else(|| AcxError::Contract("metric degenerate at the sample point".into()))?
            .inverse();
        // central differences of the Gram matrix
        let mut dg = Vec::with_capacity(d);
        for b in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += H_G;
            xm[b] -= H_G;
            dg.push(
                (real_gram(&jj, &om, &complexify(&xp))? - real_gram(&jj, &om, &complexify(&xm))?)
                    / (2.0 * H_G),
            );
        }
        // Levi-Civita part
        let mut lc = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut s = 0.0;
                    for e in 0..d {
                        s += ginv[(a, e)] * (dg[b][(e, c)] + dg[c][(e, b)] - dg[e][(b, c)]);
                    }
                    lc[(a * d + b) * d + c] = 0.5 * s;
                }
            }
        }
        let jm = jj.j_at(x);
        let mut out = vec![0.0; d * d * d];
        for b in 0..d {
            let djb = jj.dj_at(x, b);
            // (nabla_b J)^a_c = dJ^a_c + Gamma_b J - J Gamma_b
            let gb = RMat::from_fn(d, d, |a, c| lc[(a * d + b) * d + c]);
            let nab = &djb + &gb * &jm - &jm * &gb;
            let corr = &jm * &nab;
            for a in 0..d {
                for c in 0..d {
                    out[(a * d + b) * d + c] = lc[(a * d + b) * d + c] - 0.5 * corr[(a, c)];
                }
            }
        }
        Ok(out)
    };
    ConnectionCoefficients {
        dim: d,
        gamma: Arc::new(gamma),
    }
}

/// Worst-case nabla g and nabla J residuals of a connection at x
/// (finite-difference check of the defining properties).
pub fn connection_residuals(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    conn: &ConnectionCoefficients,
    x: &RVec,
) -> Result<(f64, f64)> {
    let d = conn.dim;
    let gm = conn.at(x)?;
    let jm = j.j_at(x);
    let mut res_g = 0.0f64;
    let mut res_j = 0.0f64;
    for b in 0..d {
        let gb = RMat::from_fn(d, d, |a, c| gm[(a * d + b) * d + c]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[b] += H_G;
        xm[b] -= H_G;
        let dgb = (real_gram(j, omega, &complexify(&xp))?
            - real_gram(j, omega, &complexify(&xm))?)
            / (2.0 * H_G);
        let g0 = real_gram(j, omega, &complexify(x))?;
        // nabla_b g = dg - Gamma_b^T g - g Gamma_b
        let ng = &dgb - gb.transpose() * &g0 - &g0 * &gb;
        let nj = j.dj_at(x, b) + &gb * &jm - &jm * &gb;
        res_g = res_g.max(ng.amax());
        res_j = res_j.max(nj.amax());
    }
    Ok((res_g, res_j))
}

/// Endpoint at time 1 of the geodesic with initial point x and velocity
/// zeta, by classical Runge-Kutta with the given step count.
pub fn exp_map(
    conn: &ConnectionCoefficients,
    x: &RVec,
    zeta: &RVec,
    steps: usize,
) -> Result<RVec> {
    if zeta.amax() == 0.0 {
        return Ok(x.clone());
    }
    if steps == 0 {
        return Err(AcxError::Config("geodesic integration needs steps >= 1".into()));
    }
    let d = conn.dim;
    let accel = |p: &RVec, v: &RVec| -> Result<RVec> {
        let gm = conn.at(p).map_err(|e| {
            AcxError::Domain(format!("geodesic left the patch near {:?}: {e}", p.as_slice()))
        })?;
        let mut a = RVec::zeros(d);
        for i in 0..d {
            let mut s = 0.0;
            for b in 0..d {
                for c in 0..d {
                    s += gm[(i * d + b) * d + c] * v[b] * v[c];
                }
            }
            a[i] = -s;
        }
        Ok(a)
    };
    let h = 1.0 / steps as f64;
    let mut p = x.clone();
    let mut v = zeta.clone();
    for _ in 0..steps {
        let k1p = v.clone();
        let k1v = accel(&p, &v)?;
        let k2p = &v + &k1v * (0.5 * h);
        let k2v = accel(&(&p + &k1p * (0.5 * h)), &k2p)?;
        let k3p = &v + &k2v * (0.5 * h);
        let k3v = accel(&(&p + &k2p * (0.5 * h)), &k3p)?;
        let k4p = &v + &k3v * h;
        let k4v = accel(&(&p + &k3p * h), &k4p)?;
        p += (k1p + &k2p * 2.0 + &k3p * 2.0 + k4p) * (h / 6.0);
        v += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Smoothing kernel and the regularization operator
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [a, b].
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for i in 0..m {
        // Newton from the Chebyshev-like initial guess
        let mut t = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, t);
        for k in 2..=m {
            let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
        xs[i] = 0.5 * (b - a) * t + 0.5 * (a + b);
        ws[i] = (b - a) / ((1.0 - t * t) * dp * dp);
    }
    (xs, ws)
}

fn chi_raw(t: f64) -> f64 {
    if t < 1.0 {
        (1.0 / (t - 1.0)).exp()
    } else {
        0.0
    }
}

/// int_0^1 t^p chi_raw(t) dt at the given quadrature order.
fn chi_moment(p: i32, m: usize) -> f64 {
    let (xs, ws) = gauss_legendre(m, 0.0, 1.0);
    xs.iter()
        .zip(&ws)
        .map(|(&t, &w)| w * t.powi(p) * chi_raw(t))
        .sum()
}

/// The smoothing profile chi(t) = C exp(1/(t - 1)) for t < 1, zero beyond,
/// normalized so that int_{C^n} chi(|v|^2) dv = 1.
#[derive(Debug, Clone)]
pub struct RegularizationKernel {
    pub n: usize,
    norm_c: f64,
}

impl RegularizationKernel {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(AcxError::Config("kernel needs n >= 1".into()));
        }
        // int_{C^n} chi(|v|^2) dv = pi^n / (n-1)! * int_0^1 t^{n-1} chi(t) dt
        let m1 = chi_moment(n as i32 - 1, 200);
        let m2 = chi_moment(n as i32 - 1, 400);
        if (m1 - m2).abs() > 1e-8 * m2.abs() {
            return Err(AcxError::Numerical(
                "kernel normalization quadrature did not settle".into(),
            ));
        }
        let mut fact = 1.0;
        for k in 2..n {
            fact *= k as f64;
        }
        Ok(RegularizationKernel {
            n,
            norm_c: 1.0 / (PI.powi(n as i32) / fact * m2),
        })
    }

    pub fn chi(&self, t: f64) -> f64 {
        self.norm_c * chi_raw(t)
    }

    pub fn chi_eps(&self, t: f64, eps: f64) -> f64 {
        self.chi(t / (eps * eps)) / eps.powi(2 * self.n as i32)
    }

    /// int_{C^n} |v|^2 chi(|v|^2) dv, the flat-case second moment: for
    /// u = |z|^2 and the flat pair the smoothed value at 0 is c_chi eps^2.
    pub fn c_chi(&self) -> f64 {
        let mut fact = 1.0;
        for k in 2..self.n {
            fact *= k as f64;
        }
        self.norm_c * PI.powi(self.n as i32) / fact * chi_moment(self.n as i32, 400)
    }
}

/// Quadrature nodes (coefficient vector in an orthonormal basis of R^{2n},
/// weight, squared radius) for the eps-ball, polar Gauss-Legendre.
fn ball_nodes(n: usize, eps: f64, nr: usize, na: usize) -> Result<Vec<(RVec, f64, f64)>> {
    let (rs, rw) = gauss_legendre(nr, 0.0, eps);
    let mut out = vec![];
    match n {
        1 => {
            for (r, wr) in rs.iter().zip(&rw) {
                for m in 0..na {
                    let th = 2.0 * PI * m as f64 / na as f64;
                    let c = RVec::from_vec(vec![r * th.cos(), r * th.sin()]);
                    out.push((c, wr * r * (2.0 * PI / na as f64), r * r));
                }
            }
        }
        2 => {
            // S^3 in Hopf coordinates: dS = cos(psi) sin(psi) dpsi dth1 dth2
            let (ps, pw) = gauss_legendre(nr, 0.0, 0.5 * PI);
            let da = 2.0 * PI / na as f64;
            for (r, wr) in rs.iter().zip(&rw) {
                for (psi, wp) in ps.iter().zip(&pw) {
                    let (cp, sp) = (psi.cos(), psi.sin());
                    for m1 in 0..na {
                        let t1 = da * m1 as f64;
                        for m2 in 0..na {
                            let t2 = da * m2 as f64;
                            let c = RVec::from_vec(vec![
                                r * cp * t1.cos(),
                                r * sp * t2.cos(),
                                r * cp * t1.sin(),
                                r * sp * t2.sin(),
                            ]);
                            let w = wr * r * r * r * wp * cp * sp * da * da;
                            out.push((c, w, r * r));
                        }
                    }
                }
            }
        }
        _ => {
            return Err(AcxError::Config(
                "the smoothing quadrature is implemented for n <= 2".into(),
            ))
        }
    }
    Ok(out)
}

/// Internal steps of each geodesic in the smoothing integral.
const GEO_STEPS: usize = 16;

/// Smoothed value with a caller-provided connection and kernel (the scans
/// reuse both across many evaluations).
pub fn regularize_with(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    conn: &ConnectionCoefficients,
    kernel: &RegularizationKernel,
    u: &ScalarField,
    eps: f64,
    x: &CVec,
    quad_res: (usize, usize),
) -> Result<f64> {
    if eps <= 0.0 {
        return Err(AcxError::Config("smoothing needs eps > 0".into()));
    }
    let n = j.n;
    let xr = realify(x);
    j.check_point(&xr)?;
    let g0 = real_gram(j, omega, x)?;
    let chol = g0
        .cholesky()
        .ok_or_else(|| AcxError::Contract("metric degenerate at the center".into()))?;
    // columns of L^{-T} form a g-orthonormal basis; fiber volume is then
    // Lebesgue in the coefficients
    let e = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| AcxError::Numerical("metric factor not invertible".into()))?;
    let mut acc = 0.0;
    for (c, w, r2) in ball_nodes(n, eps, quad_res.0, quad_res.1)? {
        let zeta = &e * &c;
        let endpoint = exp_map(conn, &xr, &zeta, GEO_STEPS)?;
        acc += u.value(&complexify(&endpoint)) * kernel.chi_eps(r2, eps) * w;
    }
    Ok(acc)
}

/// The smoothing operator: u_eps(x) = int u(exp_x(zeta)) chi_eps(|zeta|^2)
/// over the tangent fiber, with a polar Gauss-Legendre quadrature of
/// resolution quad_res = (radial, angular).
pub fn regularize(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    u: &ScalarField,
    eps: f64,
    x: &CVec,
    quad_res: (usize, usize),
) -> Result<f64> {
    let conn = hermitian_connection(j, omega);
    let kernel = RegularizationKernel::new(j.n)?;
    regularize_with(j, omega, &conn, &kernel, u, eps, x, quad_res)
}

// ---------------------------------------------------------------------------
// Scans
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// scales, ascending
    pub eps: Vec<f64>,
    /// values[point][eps index]
    pub values: Vec<Vec<f64>>,
    /// max over points and eps' <= eps of u_{eps'} - u_eps
    pub worst_violation: f64,
    pub pass: bool,
}

/// Check u_{eps'} <= u_eps + tol for eps' <= eps at every sample point.
pub fn monotonicity_scan(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    u: &ScalarField,
    eps_list: &[f64],
    points: &[CVec],
    quad_res: (usize, usize),
) -> Result<MonotonicityReport> {
    let mut eps = eps_list.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let conn = hermitian_connection(j, omega);
    let kernel = RegularizationKernel::new(j.n)?;
    let mut values = Vec::with_capacity(points.len());
    let mut worst = f64::NEG_INFINITY;
    for x in points {
        let row: Result<Vec<f64>> = eps
            .iter()
            .map(|&e| regularize_with(j, omega, &conn, &kernel, u, e, x, quad_res))
            .collect();
        let row = row?;
        for i in 0..row.len() {
            for k in i + 1..row.len() {
                worst = worst.max(row[i] - row[k]);
            }
        }
        values.push(row);
    }
    Ok(MonotonicityReport {
        eps,
        values,
        worst_violation: worst,
        pass: worst <= TOL_MONO,
    })
}

/// Worst positivity loss of the smoothed field over the samples:
/// max of (-H_J u_eps(xi) / |xi|^2_omega)_+ with u_eps evaluated through the
/// smoothing quadrature on a finite-difference stencil of step stencil_h.
pub fn positivity_loss_scan(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    u: &ScalarField,
    eps: f64,
    samples: &[(CVec, CVec)],
    quad_res: (usize, usize),
    stencil_h: f64,
) -> Result<f64> {
    if stencil_h > 0.1 * eps {
        return Err(AcxError::Config(format!(
            "stencil step {stencil_h} is not small against eps = {eps}"
        )));
    }
    let conn = hermitian_connection(j, omega);
    let kernel = RegularizationKernel::new(j.n)?;
    let (jc, oc, uc) = (j.clone(), omega.clone(), u.clone());
    let smoothed = ScalarField::from_fn(j.n, stencil_h, move |z| {
        regularize_with(&jc, &oc, &conn, &kernel, &uc, eps, z, quad_res)
            .unwrap_or(f64::NAN)
    });
    let mut delta = 0.0f64;
    for (z, xi) in samples {
        let h = crate::hessian::hessian_direct(j, &smoothed, xi, z)?;
        let nrm = metric_g(j, omega, z, xi, xi)?;
        if !h.is_finite() || nrm <= 0.0 {
            return Err(AcxError::Numerical(
                "smoothing stencil left the patch".into(),
            ));
        }
        delta = delta.max(-h / nrm);
    }
    Ok(delta.max(0.0))
}

// ---------------------------------------------------------------------------
// Curvature of the connection, Griffiths lower bounds
// ---------------------------------------------------------------------------

/// Curvature R^a_{bcd} of the connection at x by central differences of the
/// coefficients: (R(e_c, e_d) e_b)^a, flattened ((a d + b) d + c) d + d'.
pub fn curvature_tensor(conn: &ConnectionCoefficients, x: &RVec) -> Result<Vec<f64>> {
    let d = conn.dim;
    let g0 = conn.at(x)?;
    let mut dgamma = Vec::with_capacity(d);
    for c in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += H_CURV;
        xm[c] -= H_CURV;
        let (gp, gm) = (conn.at(&xp)?, conn.at(&xm)?);
        dgamma.push(
            gp.iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * H_CURV))
                .collect::<Vec<f64>>(),
        );
    }
    let idx = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
    let mut r = vec![0.0; d * d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    let mut v = dgamma[c][idx(a, dd, b)] - dgamma[dd][idx(a, c, b)];
                    for e in 0..d {
                        v += g0[idx(a, c, e)] * g0[idx(e, dd, b)]
                            - g0[idx(a, dd, e)] * g0[idx(e, c, b)];
                    }
                    r[(idx(a, b, c)) * d + dd] = v;
                }
            }
        }
    }
    Ok(r)
}

/// The curvature form of (T, omega) in the direction xi, as a real symmetric
/// matrix in a g-orthonormal basis: Q(eta) = -g(R(xi, J xi) eta, J eta),
/// normalized so that the integrable n = 1 case returns the Gauss curvature
/// times |xi|^2. Returns (form matrix, orthonormal basis columns) with the
/// first two basis vectors spanning the complex line of xi.
fn griffiths_form(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    x: &CVec,
    xi: &CVec,
) -> Result<(RMat, RMat)> {
    let d = 2 * j.n;
    let xr = realify(x);
    j.check_point(&xr)?;
    let conn = hermitian_connection(j, omega);
    let r = curvature_tensor(&conn, &xr)?;
    let jm = j.j_at(&xr);
    let xir = realify(xi);
    if xir.amax() == 0.0 {
        return Err(AcxError::Contract("curvature direction must be nonzero".into()));
    }
    let jxi = &jm * &xir;
    // endomorphism E = R(xi, J xi)
    let mut endo = RMat::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let mut s = 0.0;
            for c in 0..d {
                for dd in 0..d {
                    s += r[(((a * d + b) * d + c)) * d + dd] * xir[c] * jxi[dd];
                }
            }
            endo[(a, b)] = s;
        }
    }
    let g0 = real_gram(j, omega, x)?;
    // Q(eta) = -g(E eta, J eta); symmetrized matrix
    let m = endo.transpose() * &g0 * &jm;
    let q = (&m + m.transpose()) * -0.5;
    // g-orthonormal basis starting with xi, J xi (Gram-Schmidt with the
    // coordinate basis as filler)
    let mut basis: Vec<RVec> = vec![];
    let mut candidates = vec![xir.clone(), jxi.clone()];
    for a in 0..d {
        candidates.push(RVec::from_fn(d, |i, _| if i == a { 1.0 } else { 0.0 }));
    }
    for cand in candidates {
        let mut v = cand;
        for u in &basis {
            let proj = (u.transpose() * &g0 * &v)[(0, 0)];
            v -= u * proj;
        }
        let nrm2 = (v.transpose() * &g0 * &v)[(0, 0)];
        if nrm2 > 1e-12 {
            basis.push(&v / nrm2.sqrt());
        }
        if basis.len() == d {
            break;
        }
    }
    if basis.len() < d {
        return Err(AcxError::Numerical("orthonormalization lost rank".into()));
    }
    let eb = RMat::from_fn(d, d, |i, k| basis[k][i]);
    Ok((eb.transpose() * q * &eb, eb))
}

/// Lower Griffiths curvature: the minimum of the curvature form over unit
/// eta, homogeneous of degree 2 in xi.
pub fn griffiths_lower(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    x: &CVec,
    xi: &CVec,
) -> Result<f64> {
    let (q, _) = griffiths_form(j, omega, x, xi)?;
    let eigs = q.symmetric_eigenvalues();
    Ok(eigs.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Partial Griffiths bound with eta restricted to the metric-orthogonal
/// complement of the complex line of xi (needs n >= 2).
pub fn griffiths_perp(
    j: &AlmostComplexStructure,
    omega: &HermitianMetric,
    x: &CVec,
    xi: &CVec,
) -> Result<f64> {
    if j.n < 2 {
        return Err(AcxError::Contract(
            "the partial bound needs n >= 2 (empty complement otherwise)".into(),
        ));
    }
    let d = 2 * j.n;
    let (q, _) = griffiths_form(j, omega, x, xi)?;
    // the basis starts with xi, J xi; the complement is the trailing block
    let sub = q.view((2, 2), (d - 2, d - 2)).into_owned();
    let eigs = sub.symmetric_eigenvalues();
    Ok(eigs.iter().cloned().fold(f64::INFINITY, f64::min))
}
