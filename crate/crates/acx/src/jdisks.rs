//! Local J-holomorphic disks by Picard iteration: gamma is J-holomorphic iff
//! gamma + P(q_J(gamma) dgamma/dz) is holomorphic in the usual sense, so the
//! solver iterates gamma <- H - P(q_J(gamma) dgamma/dz) from the affine seed
//! H(z) = x + rho z v on the unit disk. Cylinder families stack disk solves
//! over a transverse lattice, and the J-flat field is the pushforward of
//! d/dt under the stacked map.

use crate::acstruct::{q_from_matrix, AlmostComplexStructure};
use crate::cauchy::{dbar, CauchySolver, DiskField, DiskGrid};
use crate::{complexify, realify, AcxError, CVec, RVec, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Default solver settings (unit-disk grid resolution, stop tolerance).
pub const DEFAULT_N: usize = 128;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 50;
pub const MAX_HALVINGS: usize = 6;

#[derive(Debug, Clone)]
pub struct JHolDisk {
    pub center: RVec,
    pub direction: RVec,
    pub radius: f64,
    /// gamma rescaled to the unit disk, complex representation (n components).
    pub samples: DiskField,
    pub residual: f64,
    pub iterations: usize,
    /// successive-iterate sup distances, for contraction certification.
    pub step_sizes: Vec<f64>,
}

/// d/dz = (d/dt - i d/ds)/2 at every node: central differences where both
/// lattice neighbors exist, one-sided on the boundary ring.
pub fn dz_field(f: &DiskField) -> DiskField {
    let grid = &f.grid;
    let n = grid.n_cells;
    let mut out = DiskField::zeros(grid, f.ncomp);
    let node = |ix: i64, iy: i64| -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= n as i64 || iy >= n as i64 {
            None
        } else {
            grid.node_of_cell[(ix as usize) * n + iy as usize]
        }
    };
    let diff = |c: usize, plus: Option<usize>, here: usize, minus: Option<usize>| -> C64 {
        match (plus, minus) {
            (Some(p), Some(m)) => {
                (f.values[p * f.ncomp + c] - f.values[m * f.ncomp + c]) / (2.0 * grid.h)
            }
            (Some(p), None) => (f.values[p * f.ncomp + c] - f.values[here * f.ncomp + c]) / grid.h,
            (None, Some(m)) => (f.values[here * f.ncomp + c] - f.values[m * f.ncomp + c]) / grid.h,
            (None, None) => C64::new(0.0, 0.0),
        }
    };
    for (id, &(ix, iy)) in grid.nodes.iter().enumerate() {
        let (ix, iy) = (ix as i64, iy as i64);
        for c in 0..f.ncomp {
            let dt = diff(c, node(ix + 1, iy), id, node(ix - 1, iy));
            let ds = diff(c, node(ix, iy + 1), id, node(ix, iy - 1));
            out.values[id * f.ncomp + c] = 0.5 * (dt - I * ds);
        }
    }
    out
}

/// q_J(gamma) dgamma/dz at every node (q acts real-linearly on the complex
/// representation). Errors if any sample leaves the patch of J.
fn q_term(j: &AlmostComplexStructure, gamma: &DiskField, dzg: &DiskField) -> Result<DiskField> {
    let grid = &gamma.grid;
    let mut out = DiskField::zeros(grid, gamma.ncomp);
    let mut exiting = vec![];
    for id in 0..grid.len() {
        let pt = CVec::from_row_slice(gamma.get(id));
        let x = realify(&pt);
        if x.norm() >= j.radius {
            exiting.push(id);
            continue;
        }
        let q = q_from_matrix(&j.j_at(&x), j.n)?;
        let dv = CVec::from_row_slice(dzg.get(id));
        let qdv = complexify(&(q * realify(&dv)));
        for c in 0..gamma.ncomp {
            out.values[id * gamma.ncomp + c] = qdv[c];
        }
    }
    if !exiting.is_empty() {
        return Err(AcxError::Domain(format!(
            "{} samples exit the patch (first cells: {:?})",
            exiting.len(),
            &exiting[..exiting.len().min(5)]
        )));
    }
    Ok(out)
}

/// Residual of the J-holomorphy equation, sup over interior cells of
/// |dbar gamma + q_J(gamma) dgamma/dz|.
pub fn residual(j: &AlmostComplexStructure, disk: &JHolDisk) -> Result<f64> {
    residual_of(j, &disk.samples)
}

pub fn residual_of(j: &AlmostComplexStructure, samples: &DiskField) -> Result<f64> {
    let db = dbar(samples)?;
    let qt = q_term(j, samples, &dz_field(samples))?;
    let mut worst = 0.0f64;
    for id in 0..samples.grid.len() {
        if db.valid[id] {
            for c in 0..samples.ncomp {
                worst = worst
                    .max((db.field.values[id * samples.ncomp + c]
                        + qt.values[id * samples.ncomp + c])
                    .norm());
            }
        }
    }
    Ok(worst)
}

/// Check the contraction precondition |q_J| < 1/2 on a bounding box around
/// the reachable set.
fn check_q_bound(j: &AlmostComplexStructure, x: &RVec, reach: f64) -> Result<f64> {
    let dim = 2 * j.n;
    let steps = 3i64;
    let mut worst = 0.0f64;
    let mut corner = vec![-steps; dim];
    loop {
        let mut p = x.clone();
        for (a, &c) in corner.iter().enumerate() {
            p[a] += reach * c as f64 / steps as f64;
        }
        if p.norm() < j.radius {
            let q = q_from_matrix(&j.j_at(&p), j.n)?;
            worst = worst.max(q.norm());
        }
        // odometer over the box lattice
        let mut a = 0;
        loop {
            corner[a] += 1;
            if corner[a] <= steps {
                break;
            }
            corner[a] = -steps;
            a += 1;
            if a == dim {
                return if worst < 0.5 {
                    Ok(worst)
                } else {
                    Err(AcxError::Contract(format!(
                        "|q_J| = {worst:.3} >= 1/2 on the reachable box; shrink the radius"
                    )))
                };
            }
        }
    }
}

/// One Picard solve at fixed radius. Errors with "radius too large" when the
/// iterate-to-iterate distance grows twice in a row.
pub fn solve_disk(
    j: &AlmostComplexStructure,
    x: &RVec,
    v: &RVec,
    rho: f64,
    tol: f64,
    max_iter: usize,
    grid_n: usize,
) -> Result<JHolDisk> {
    j.check_point(x)?;
    // the scheme is anchored at structures standard at the center
    let rep0 = j.split_at(x);
    let anchor = crate::cmat_norm_inf(&(&rep0.a - crate::CMat::from_diagonal_element(j.n, j.n, I)))
        .max(crate::cmat_norm_inf(&rep0.b));
    if anchor > 1e-6 {
        return Err(AcxError::Contract(format!(
            "J(center) differs from the standard structure by {anchor:.3e}; renormalize the chart first"
        )));
    }
    check_q_bound(j, x, 2.0 * rho * v.norm().max(1e-12))?;
    let grid = DiskGrid::new(grid_n)?;
    let solver = CauchySolver::new(&grid);
    let xc = complexify(x);
    let vc = complexify(v);
    let seed = DiskField::from_fn(&grid, j.n, |z| {
        (0..j.n).map(|c| xc[c] + rho * z * vc[c]).collect()
    });
    let mut gamma = seed.clone();
    let mut steps: Vec<f64> = vec![];
    for it in 1..=max_iter {
        let qt = q_term(j, &gamma, &dz_field(&gamma))?;
        let pq = solver.p_all(&qt)?;
        let mut next = seed.clone();
        for (vv, p) in next.values.iter_mut().zip(&pq.values) {
            *vv -= p;
        }
        let step = next
            .values
            .iter()
            .zip(&gamma.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        gamma = next;
        // non-contraction guard: two consecutive increases
        let m = steps.len();
        if m >= 2 && step > steps[m - 1] && steps[m - 1] > steps[m - 2] {
            return Err(AcxError::Numerical(
                "radius too large: Picard steps grow".into(),
            ));
        }
        steps.push(step);
        let res = residual_of(j, &gamma)?;
        if res <= tol || (v.norm() == 0.0 && step == 0.0) {
            return Ok(JHolDisk {
                center: x.clone(),
                direction: v.clone(),
                radius: rho,
                samples: gamma,
                residual: res,
                iterations: it,
                step_sizes: steps,
            });
        }
    }
    let res = residual_of(j, &gamma)?;
    // the quadrature floor may sit above tol; accept a stalled iteration
    // whose steps have collapsed to rounding scale
    if steps.last().copied().unwrap_or(f64::INFINITY) <= 1e-12 {
        return Ok(JHolDisk {
            center: x.clone(),
            direction: v.clone(),
            radius: rho,
            samples: gamma,
            residual: res,
            iterations: max_iter,
            step_sizes: steps,
        });
    }
    Err(AcxError::Numerical(format!(
        "no convergence in {max_iter} iterations (residual {res:.3e})"
    )))
}

/// Picard with adaptive radius: halve on failure, at most `MAX_HALVINGS` times.
pub fn solve_disk_adaptive(
    j: &AlmostComplexStructure,
    x: &RVec,
    v: &RVec,
    rho: f64,
    tol: f64,
    max_iter: usize,
    grid_n: usize,
) -> Result<JHolDisk> {
    let mut r = rho;
    let mut last_err = None;
    for _ in 0..=MAX_HALVINGS {
        match solve_disk(j, x, v, r, tol, max_iter, grid_n) {
            Ok(d) => return Ok(d),
            Err(e) => {
                last_err = Some(e);
                r *= 0.5;
            }
        }
    }
    Err(last_err.unwrap())
}

// ---------------------------------------------------------------------------
// Cylinder families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CylinderFamily {
    pub base: JHolDisk,
    /// transverse frame vectors (complex representation), one per extra
    /// complex coordinate.
    pub frame: Vec<CVec>,
    pub rho2: f64,
    pub grid_m: usize,
    /// (z_2 lattice point, solved slice); the base sits at z_2 = 0.
    pub slices: Vec<(Vec<C64>, JHolDisk)>,
    pub max_residual: f64,
}

/// Solve a disk family over a transverse lattice: for each lattice point z_2
/// in the (n-1)-ball of radius rho2 (grid_m nodes per real axis), the seed
/// is the base seed shifted by frame . z_2.
pub fn solve_cylinder(
    j: &AlmostComplexStructure,
    base: &JHolDisk,
    frame: &[RVec],
    rho2: f64,
    grid_m: usize,
    tol: f64,
    max_iter: usize,
    grid_n: usize,
) -> Result<CylinderFamily> {
    let n = j.n;
    if frame.len() != n - 1 {
        return Err(AcxError::Config(format!(
            "need {} transverse vectors, got {}",
            n - 1,
            frame.len()
        )));
    }
    if grid_m < 3 || grid_m % 2 == 0 {
        return Err(AcxError::Config("grid_m must be odd and >= 3".into()));
    }
    // the direction plus the frame must be a complex basis
    let mut basis = crate::CMat::zeros(n, n);
    basis.set_column(0, &complexify(&base.direction));
    let framec: Vec<CVec> = frame.iter().map(complexify).collect();
    for (a, f) in framec.iter().enumerate() {
        basis.set_column(a + 1, f);
    }
    let sv = basis.svd(false, false).singular_values;
    if sv[sv.len() - 1] <= 1e-10 * sv[0] {
        return Err(AcxError::Contract(
            "transverse frame does not complete the direction to a complex basis".into(),
        ));
    }
    let dims = 2 * (n - 1);
    let half = (grid_m / 2) as i64;
    let step = rho2 / half as f64;
    let mut slices = vec![];
    let mut failures = vec![];
    let mut max_res = base.residual;
    let mut idx = vec![-half; dims];
    'lattice: loop {
        let mut z2 = vec![C64::new(0.0, 0.0); n - 1];
        for a in 0..n - 1 {
            z2[a] = C64::new(idx[2 * a] as f64 * step, idx[2 * a + 1] as f64 * step);
        }
        // full m^{2(n-1)} lattice over the sup-norm ball of radius rho2
        {
            if idx.iter().all(|&q| q == 0) {
                slices.push((z2, base.clone()));
            } else {
                let mut xs = base.center.clone();
                let shift: CVec = framec
                    .iter()
                    .zip(&z2)
                    .map(|(f, &c)| f * c)
                    .fold(CVec::zeros(n), |acc, t| acc + t);
                xs += realify(&shift);
                match solve_disk(j, &xs, &base.direction, base.radius, tol, max_iter, grid_n) {
                    Ok(d) => {
                        max_res = max_res.max(d.residual);
                        slices.push((z2, d));
                    }
                    Err(e) => failures.push((z2.clone(), format!("{e}"))),
                }
            }
        }
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] <= half {
                break;
            }
            idx[a] = -half;
            a += 1;
            if a == dims {
                break 'lattice;
            }
        }
    }
    if !failures.is_empty() {
        return Err(AcxError::Numerical(format!(
            "{} of {} slices failed to converge; first at z2 = {:?}: {}",
            failures.len(),
            failures.len() + slices.len(),
            failures[0].0,
            failures[0].1
        )));
    }
    // sampled injectivity: pairwise distinctness on a node subsample
    let fam = CylinderFamily {
        base: base.clone(),
        frame: framec,
        rho2,
        grid_m,
        slices,
        max_residual: max_res,
    };
    check_injectivity(&fam)?;
    Ok(fam)
}

fn check_injectivity(fam: &CylinderFamily) -> Result<()> {
    let mut pts: Vec<CVec> = vec![];
    let stride = (fam.base.samples.grid.len() / 200).max(1);
    for (_, d) in &fam.slices {
        for id in (0..d.samples.grid.len()).step_by(stride) {
            pts.push(CVec::from_row_slice(d.samples.get(id)));
        }
    }
    // distinct parameter nodes must map to distinct points; the separation
    // scale is a fraction of the lattice spacing in the image
    let sep = 1e-9;
    for a in 0..pts.len() {
        for b in (a + 1)..pts.len() {
            if (&pts[a] - &pts[b]).norm() < sep {
                return Err(AcxError::Contract(format!(
                    "sampled map is not injective (subsample points {a} and {b} collide)"
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// J-flat fields
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct JFlatField {
    /// sample positions sigma(w) (real coordinates).
    pub positions: Vec<RVec>,
    /// xi at those positions.
    pub xi: Vec<RVec>,
    /// per-sample flatness defect |[xi, J xi]|.
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub min_norm: f64,
}

/// Condition-number cap for the stacked-map Jacobian.
pub const SIGMA_KAPPA_MAX: f64 = 1e8;

/// xi := (d sigma / dt) o sigma^{-1} from a cylinder family, and its
/// flatness defect |[xi, J xi]| at the interior parameter nodes. The bracket
/// is evaluated in parameter space: with F := J(sigma) d_t sigma and c the
/// solve of (D sigma) c = F, the defect is |D(F) e_t - D(d_t sigma) c|.
pub fn j_flat_field(
    j: &AlmostComplexStructure,
    fam: &CylinderFamily,
) -> Result<JFlatField> {
    let n = j.n;
    let dim = 2 * n;
    let grid = &fam.base.samples.grid;
    let ng = grid.n_cells;
    let half = (fam.grid_m / 2) as i64;
    let step2 = fam.rho2 / half as f64;
    // index the slices by lattice coordinates
    let key = |z2: &[C64]| -> Vec<i64> {
        z2.iter()
            .flat_map(|c| [
                (c.re / step2).round() as i64,
                (c.im / step2).round() as i64,
            ])
            .collect()
    };
    let mut slice_of: std::collections::HashMap<Vec<i64>, usize> = Default::default();
    for (si, (z2, _)) in fam.slices.iter().enumerate() {
        slice_of.insert(key(z2), si);
    }
    // sigma(w) for w = (it, is, lattice of z2); value at a node of a slice
    let sample = |si: usize, node: usize| -> CVec {
        CVec::from_row_slice(fam.slices[si].1.samples.get(node))
    };
    let node_at = |ix: i64, iy: i64| -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= ng as i64 || iy >= ng as i64 {
            return None;
        }
        grid.node_of_cell[(ix as usize) * ng + iy as usize]
    };
    let h1 = grid.h;
    let mut positions = vec![];
    let mut xi_out = vec![];
    let mut defects = vec![];
    // work on interior parameter nodes only: both neighbors in every
    // parameter direction must exist (disk lattice and z2 lattice)
    for (si, (z2, _)) in fam.slices.iter().enumerate() {
        let k0 = key(z2);
        // neighbor slices along each z2 real axis
        let mut nbr = vec![];
        let mut ok = true;
        for a in 0..dim - 2 {
            let mut kp = k0.clone();
            let mut km = k0.clone();
            kp[a] += 1;
            km[a] -= 1;
            match (slice_of.get(&kp), slice_of.get(&km)) {
                (Some(&p), Some(&m)) => nbr.push((p, m)),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        for (id, &(ix, iy)) in grid.nodes.iter().enumerate() {
            let (ix, iy) = (ix as i64, iy as i64);
            let around = [
                node_at(ix + 1, iy),
                node_at(ix - 1, iy),
                node_at(ix, iy + 1),
                node_at(ix, iy - 1),
            ];
            if around.iter().any(|o| o.is_none()) {
                continue;
            }
            // second ring needed for FD of d_t sigma
            if [
                node_at(ix + 2, iy),
                node_at(ix - 2, iy),
                node_at(ix + 1, iy + 1),
                node_at(ix + 1, iy - 1),
                node_at(ix - 1, iy + 1),
                node_at(ix - 1, iy - 1),
            ]
            .iter()
            .any(|o| o.is_none())
            {
                continue;
            }
            // sigma and its Jacobian over parameters (t, s, z2 axes)
            let here = sample(si, id);
            let x_here = realify(&here);
            if x_here.norm() >= j.radius {
                continue;
            }
            let mut dsigma = RMatBuilder::new(dim);
            let steps: Vec<f64> = {
                let mut v = vec![h1, h1];
                v.extend(std::iter::repeat(step2).take(dim - 2));
                v
            };
            // param-space central differences of sigma
            let neighbor = |axis: usize, sgn: i64, node: usize| -> CVec {
                match axis {
                    0 => sample(si, node_at(ix + sgn, iy).unwrap()),
                    1 => sample(si, node_at(ix, iy + sgn).unwrap()),
                    _ => {
                        let (p, m) = nbr[axis - 2];
                        sample(if sgn > 0 { p } else { m }, node)
                    }
                }
            };
            for axis in 0..dim {
                let d = (realify(&neighbor(axis, 1, id)) - realify(&neighbor(axis, -1, id)))
                    / (2.0 * steps[axis]);
                dsigma.set_col(axis, &d);
            }
            let dsig = dsigma.take();
            let xi_here = dsig.column(0).into_owned();
            // F = J(sigma) d_t sigma, and c with (D sigma) c = F
            let f_at = |si2: usize, node2: usize| -> Result<RVec> {
                // d_t sigma at a (slice, node) pair by central differences
                let (jx, jy) = grid.nodes[node2];
                let (jx, jy) = (jx as i64, jy as i64);
                let p = node_at(jx + 1, jy).ok_or_else(|| AcxError::Numerical("edge".into()))?;
                let m = node_at(jx - 1, jy).ok_or_else(|| AcxError::Numerical("edge".into()))?;
                let dt = (realify(&sample(si2, p)) - realify(&sample(si2, m))) / (2.0 * h1);
                let pos = realify(&sample(si2, node2));
                Ok(j.j_at(&pos) * dt)
            };
            let f_here = f_at(si, id)?;
            let lu = dsig.clone().lu();
            let c = lu.solve(&f_here).ok_or_else(|| {
                AcxError::Numerical(format!("singular map Jacobian at slice {si}, node {id}"))
            })?;
            if let Some(inv) = dsig.clone().try_inverse() {
                if dsig.norm() * inv.norm() > SIGMA_KAPPA_MAX {
                    return Err(AcxError::Numerical(format!(
                        "ill-conditioned map Jacobian at slice {si}, node {id}"
                    )));
                }
            }
            // D(F) e_t: FD of F along the t axis
            let df_et = (f_at(si, node_at(ix + 1, iy).unwrap())?
                - f_at(si, node_at(ix - 1, iy).unwrap())?)
                / (2.0 * h1);
            // D(d_t sigma) c: FD of d_t sigma along every axis, contracted with c
            let dts_at = |axis: usize, sgn: i64| -> RVec {
                match axis {
                    0 | 1 => {
                        let nid = if axis == 0 {
                            node_at(ix + sgn, iy).unwrap()
                        } else {
                            node_at(ix, iy + sgn).unwrap()
                        };
                        let (jx, jy) = grid.nodes[nid];
                        let (jx, jy) = (jx as i64, jy as i64);
                        let p = node_at(jx + 1, jy).unwrap();
                        let m = node_at(jx - 1, jy).unwrap();
                        (realify(&sample(si, p)) - realify(&sample(si, m))) / (2.0 * h1)
                    }
                    _ => {
                        let (p, m) = nbr[axis - 2];
                        let s2 = if sgn > 0 { p } else { m };
                        let pn = node_at(ix + 1, iy).unwrap();
                        let mn = node_at(ix - 1, iy).unwrap();
                        (realify(&sample(s2, pn)) - realify(&sample(s2, mn))) / (2.0 * h1)
                    }
                }
            };
            let mut dxi_c = RVec::zeros(dim);
            for axis in 0..dim {
                let d = (dts_at(axis, 1) - dts_at(axis, -1)) / (2.0 * steps[axis]);
                dxi_c += d * c[axis];
            }
            let defect_vec = &df_et - &dxi_c;
            positions.push(x_here);
            xi_out.push(xi_here.clone());
            defects.push(defect_vec.amax());
        }
    }
    if positions.is_empty() {
        return Err(AcxError::Config(
            "no interior parameter nodes: lattice too coarse".into(),
        ));
    }
    let max_defect = defects.iter().cloned().fold(0.0, f64::max);
    let min_norm = xi_out.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if min_norm == 0.0 {
        return Err(AcxError::Contract("field vanishes at a sample".into()));
    }
    Ok(JFlatField {
        positions,
        xi: xi_out,
        defects,
        max_defect,
        min_norm,
    })
}

/// |[xi, J xi]| at x for an arbitrary sampled field (finite differences);
/// negative-control oracle for flatness.
pub fn bracket_defect(
    j: &AlmostComplexStructure,
    x: &RVec,
    xi: &dyn Fn(&RVec) -> RVec,
) -> f64 {
    let h = 1e-5;
    let eta = |p: &RVec| -> RVec { j.j_at(p) * xi(p) };
    let dirderiv = |f: &dyn Fn(&RVec) -> RVec, dir: &RVec| -> RVec {
        let mut xp = x.clone();
        let mut xm = x.clone();
        let d = dir / dir.norm().max(1e-300);
        let s = h;
        xp += &d * s;
        xm -= &d * s;
        (f(&xp) - f(&xm)) / (2.0 * s) * dir.norm()
    };
    let xi_x = xi(x);
    let eta_x = eta(x);
    let lie = dirderiv(&eta, &xi_x) - dirderiv(&|p: &RVec| xi(p), &eta_x);
    lie.amax()
}

// small helper to build a real matrix column by column
struct RMatBuilder {
    m: crate::RMat,
}

impl RMatBuilder {
    fn new(dim: usize) -> Self {
        RMatBuilder {
            m: crate::RMat::zeros(dim, dim),
        }
    }
    fn set_col(&mut self, a: usize, v: &RVec) {
        self.m.set_column(a, v);
    }
    fn take(self) -> crate::RMat {
        self.m
    }
}
