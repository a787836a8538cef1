//! Unit-disk discretization and the Cauchy-Green transform
//!   P'f(z) = -(1/pi) int_D f(zeta) / (zeta - z) dA,   Pf(z) = P'f(z) - P'f(0),
//! which right-inverts d/dzbar. Quadrature: cell grid, singularity split at
//! the nearest node, closed-form transform of constants (P'(1)(z) = zbar on
//! the closed disk).

use crate::{AcxError, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde_json::json;
use std::sync::Arc;

const PI: f64 = std::f64::consts::PI;

/// Antiderivative of sqrt(1 - x^2).
fn circ_f(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    0.5 * (x * (1.0 - x * x).sqrt() + x.asin())
}

/// int_a^b min(y, sqrt(1 - x^2)) dx for [a, b] inside [-1, 1]. Negative y is
/// allowed (the caller pairs two of these so the signed parts combine into an
/// intersection area).
fn int_min(y: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if y <= 0.0 {
        return y * (b - a);
    }
    if y >= 1.0 {
        return circ_f(b) - circ_f(a);
    }
    let s = (1.0 - y * y).sqrt();
    let mut total = 0.0;
    let r1 = b.min(-s);
    if r1 > a {
        total += circ_f(r1) - circ_f(a);
    }
    let (l2, r2) = (a.max(-s), b.min(s));
    if r2 > l2 {
        total += y * (r2 - l2);
    }
    let l3 = a.max(s);
    if b > l3 {
        total += circ_f(b) - circ_f(l3);
    }
    total
}

/// Exact area of [a, b] x [c, d] intersected with the unit disk.
fn cell_disk_area(a: f64, b: f64, c: f64, d: f64) -> f64 {
    // restrict to the x-range where the column meets both the disk and the
    // cell's y-interval (a single interval since c < d)
    let mut lo = a.max(-1.0);
    let mut hi = b.min(1.0);
    if c > 0.0 {
        let s = (1.0 - (c * c).min(1.0)).sqrt();
        lo = lo.max(-s);
        hi = hi.min(s);
    } else if d < 0.0 {
        let s = (1.0 - (d * d).min(1.0)).sqrt();
        lo = lo.max(-s);
        hi = hi.min(s);
    }
    if hi <= lo {
        return 0.0;
    }
    (int_min(d, lo, hi) + int_min(-c, lo, hi)).max(0.0)
}

/// Cell grid over the unit disk: N x N cells on [-1, 1]^2, nodes at the cell
/// centers that fall strictly inside the disk. Weights are exact cell-disk
/// intersection areas; area from cells whose center lies outside is folded
/// into the nearest node so the weights sum to pi exactly.
#[derive(Debug, Clone)]
pub struct DiskGrid {
    pub n_cells: usize,
    pub h: f64,
    /// (ix, iy) lattice coordinates of each node, row-major order.
    pub nodes: Vec<(usize, usize)>,
    /// lattice cell -> node id (ix * N + iy indexing).
    pub node_of_cell: Vec<Option<usize>>,
    pub zeta: Vec<C64>,
    pub w: Vec<f64>,
}

impl DiskGrid {
    pub fn new(n_cells: usize) -> Result<Arc<DiskGrid>> {
        if n_cells < 16 {
            return Err(AcxError::Config("grid needs N >= 16".into()));
        }
        let n = n_cells;
        let h = 2.0 / n as f64;
        let center = |i: usize| -1.0 + (i as f64 + 0.5) * h;
        let mut nodes = vec![];
        let mut node_of_cell = vec![None; n * n];
        let mut zeta = vec![];
        let mut w = vec![];
        let mut slivers: Vec<(f64, f64, f64)> = vec![]; // (x, y, area)
        for ix in 0..n {
            for iy in 0..n {
                let (x, y) = (center(ix), center(iy));
                let area = cell_disk_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h);
                if x * x + y * y < 1.0 {
                    node_of_cell[ix * n + iy] = Some(nodes.len());
                    nodes.push((ix, iy));
                    zeta.push(C64::new(x, y));
                    w.push(area);
                } else if area > 0.0 {
                    slivers.push((x, y, area));
                }
            }
        }
        let mut grid = DiskGrid {
            n_cells: n,
            h,
            nodes,
            node_of_cell,
            zeta,
            w,
        };
        for (x, y, area) in slivers {
            let id = grid.nearest_node(C64::new(x, y));
            grid.w[id] += area;
        }
        Ok(Arc::new(grid))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node nearest to z (expanding ring search from the containing cell).
    pub fn nearest_node(&self, z: C64) -> usize {
        let n = self.n_cells as i64;
        let ci = (((z.re + 1.0) / self.h).floor() as i64).clamp(0, n - 1);
        let cj = (((z.im + 1.0) / self.h).floor() as i64).clamp(0, n - 1);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..self.n_cells as i64 {
            let mut touched = false;
            for di in -ring..=ring {
                for dj in -ring..=ring {
                    if di.abs().max(dj.abs()) != ring {
                        continue;
                    }
                    let (i, j) = (ci + di, cj + dj);
                    if i < 0 || j < 0 || i >= n || j >= n {
                        continue;
                    }
                    touched = true;
                    if let Some(id) = self.node_of_cell[(i * n + j) as usize] {
                        let d = (self.zeta[id] - z).norm();
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, id));
                        }
                    }
                }
            }
            // one extra ring after the first hit covers diagonal cases
            if let Some((bd, _)) = best {
                if bd <= (ring as f64 - 1.0) * self.h || !touched && ring > 0 {
                    break;
                }
            }
        }
        best.expect("grid has no nodes").1
    }
}

/// A complex n-vector field sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct DiskField {
    pub grid: Arc<DiskGrid>,
    pub ncomp: usize,
    /// values[node * ncomp + c], node order matching grid.nodes (row-major).
    pub values: Vec<C64>,
}

impl DiskField {
    pub fn zeros(grid: &Arc<DiskGrid>, ncomp: usize) -> Self {
        DiskField {
            grid: grid.clone(),
            ncomp,
            values: vec![C64::new(0.0, 0.0); grid.len() * ncomp],
        }
    }

    pub fn from_fn(grid: &Arc<DiskGrid>, ncomp: usize, f: impl Fn(C64) -> Vec<C64>) -> Self {
        let mut values = Vec::with_capacity(grid.len() * ncomp);
        for &z in &grid.zeta {
            let v = f(z);
            assert_eq!(v.len(), ncomp);
            values.extend(v);
        }
        DiskField {
            grid: grid.clone(),
            ncomp,
            values,
        }
    }

    pub fn scalar_from_fn(grid: &Arc<DiskGrid>, f: impl Fn(C64) -> C64) -> Self {
        DiskField::from_fn(grid, 1, |z| vec![f(z)])
    }

    pub fn get(&self, node: usize) -> &[C64] {
        &self.values[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Ok(())
        } else {
            Err(AcxError::Contract("field has non-finite samples".into()))
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Sup norm over nodes with |zeta| <= radius.
    pub fn sup_norm_within(&self, radius: f64) -> f64 {
        let mut m = 0.0f64;
        for (id, &z) in self.grid.zeta.iter().enumerate() {
            if z.norm() <= radius {
                for c in self.get(id) {
                    m = m.max(c.norm());
                }
            }
        }
        m
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "N": self.grid.n_cells,
            "n": self.ncomp,
            "values": self
                .values
                .iter()
                .map(|c| [c.re, c.im])
                .collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let bad = |m: &str| AcxError::Config(format!("bad disk field payload: {m}"));
        let n_cells = v["N"].as_u64().ok_or_else(|| bad("missing N"))? as usize;
        let ncomp = v["n"].as_u64().ok_or_else(|| bad("missing n"))? as usize;
        let grid = DiskGrid::new(n_cells)?;
        let vals = v["values"].as_array().ok_or_else(|| bad("missing values"))?;
        if vals.len() != grid.len() * ncomp {
            return Err(bad("value count does not match grid"));
        }
        let mut values = Vec::with_capacity(vals.len());
        for e in vals {
            let pair = e.as_array().filter(|a| a.len() == 2).ok_or_else(|| bad("entry"))?;
            values.push(C64::new(
                pair[0].as_f64().ok_or_else(|| bad("entry"))?,
                pair[1].as_f64().ok_or_else(|| bad("entry"))?,
            ));
        }
        let f = DiskField {
            grid,
            ncomp,
            values,
        };
        f.check_finite()?;
        Ok(f)
    }
}

/// P'(1)(z) on the closed unit disk.
fn p_prime_one(z: C64) -> C64 {
    z.conj()
}

/// P'f(z): direct row-major quadrature with the singularity split
/// f = (f - f(z*)) + f(z*) at the node z* nearest to z.
pub fn cauchy_raw(f: &DiskField, z: C64) -> Result<Vec<C64>> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(AcxError::Domain(format!("|z| = {} > 1", z.norm())));
    }
    f.check_finite()?;
    let grid = &f.grid;
    let star = grid.nearest_node(z);
    let fstar = f.get(star).to_vec();
    let mut acc = vec![C64::new(0.0, 0.0); f.ncomp];
    for id in 0..grid.len() {
        let d = grid.zeta[id] - z;
        if d.norm() == 0.0 {
            continue;
        }
        let k = grid.w[id] / d;
        let fv = f.get(id);
        for c in 0..f.ncomp {
            acc[c] += (fv[c] - fstar[c]) * k;
        }
    }
    let p1 = p_prime_one(z);
    Ok((0..f.ncomp)
        .map(|c| -acc[c] / PI + fstar[c] * p1)
        .collect())
}

/// Pf(z) = P'f(z) - P'f(0); Pf(0) = 0 exactly.
pub fn cauchy_p(f: &DiskField, z: C64) -> Result<Vec<C64>> {
    let at_z = cauchy_raw(f, z)?;
    if z.norm() == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); f.ncomp]);
    }
    let at_0 = cauchy_raw(f, C64::new(0.0, 0.0))?;
    Ok(at_z.iter().zip(&at_0).map(|(a, b)| a - b).collect())
}

// ---------------------------------------------------------------------------
// Grid-wide evaluation by FFT convolution
// ---------------------------------------------------------------------------

/// Evaluates P'f at every grid node at once. On the lattice the quadrature
/// kernel 1/(zeta_s - zeta_t) depends only on the index difference, so both
/// sums in the split formula are discrete convolutions; they are computed by
/// zero-padded 2-D FFTs of size (2N)^2. The kernel transform and the
/// convolution of the weights are cached per grid.
pub struct CauchySolver {
    grid: Arc<DiskGrid>,
    m: usize, // padded size 2N
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<C64>,
    /// sum_s w_s / (zeta_s - zeta_t) at every node t.
    conv_w: Vec<C64>,
}

impl CauchySolver {
    pub fn new(grid: &Arc<DiskGrid>) -> Self {
        let n = grid.n_cells;
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(m);
        let fft_inv = planner.plan_fft_inverse(m);
        // kernel K[di, dj] = 1 / (h di + i h dj) with wraparound signed indices
        let mut kernel = vec![C64::new(0.0, 0.0); m * m];
        for a in 0..m {
            let di = if a < n { a as i64 } else { a as i64 - m as i64 };
            for b in 0..m {
                let dj = if b < n { b as i64 } else { b as i64 - m as i64 };
                if di != 0 || dj != 0 {
                    kernel[a * m + b] =
                        1.0 / C64::new(grid.h * di as f64, grid.h * dj as f64);
                }
            }
        }
        fft2(&fft_fwd, &mut kernel, m);
        let mut solver = CauchySolver {
            grid: grid.clone(),
            m,
            fft_fwd,
            fft_inv,
            kernel_hat: kernel,
            conv_w: vec![],
        };
        // conv_w[t] = sum_s w_s K[s - t]; note K(-d) = -K(d), so convolve the
        // weights with the kernel and negate.
        let w_field: Vec<C64> = grid.w.iter().map(|&w| C64::new(w, 0.0)).collect();
        solver.conv_w = solver.convolve(&w_field).iter().map(|v| -v).collect();
        solver
    }

    /// Linear convolution out[t] = sum_s g[s] K[t - s] at every node t,
    /// where g lives on the nodes (zero off the disk).
    fn convolve(&self, g: &[C64]) -> Vec<C64> {
        let m = self.m;
        let mut buf = vec![C64::new(0.0, 0.0); m * m];
        for (id, &(ix, iy)) in self.grid.nodes.iter().enumerate() {
            buf[ix * m + iy] = g[id];
        }
        fft2(&self.fft_fwd, &mut buf, m);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        fft2(&self.fft_inv, &mut buf, m);
        let scale = 1.0 / (m * m) as f64;
        self.grid
            .nodes
            .iter()
            .map(|&(ix, iy)| buf[ix * m + iy] * scale)
            .collect()
    }

    /// P'f at every node, one component at a time.
    pub fn p_prime_all(&self, f: &DiskField) -> Result<DiskField> {
        f.check_finite()?;
        let grid = &self.grid;
        let mut out = DiskField::zeros(grid, f.ncomp);
        for c in 0..f.ncomp {
            let gw: Vec<C64> = (0..grid.len())
                .map(|id| f.values[id * f.ncomp + c] * grid.w[id])
                .collect();
            // conv_gw[t] = sum_s f_s w_s K[t - s] = -sum_s f_s w_s / (zeta_s - zeta_t)
            let conv_gw = self.convolve(&gw);
            for id in 0..grid.len() {
                let ft = f.values[id * f.ncomp + c];
                // split at z* = t: -(1/pi) sum_s (f_s - f_t) w_s / (zeta_s - zeta_t)
                //                 + f_t zbar_t
                let sum = -conv_gw[id] - ft * self.conv_w[id];
                out.values[id * f.ncomp + c] = -sum / PI + ft * p_prime_one(grid.zeta[id]);
            }
        }
        Ok(out)
    }

    /// Pf = P'f - P'f(0) at every node.
    pub fn p_all(&self, f: &DiskField) -> Result<DiskField> {
        let mut out = self.p_prime_all(f)?;
        let at0 = cauchy_raw(f, C64::new(0.0, 0.0))?;
        for id in 0..self.grid.len() {
            for c in 0..f.ncomp {
                out.values[id * f.ncomp + c] -= at0[c];
            }
        }
        Ok(out)
    }
}

fn fft2(fft: &Arc<dyn Fft<f64>>, data: &mut [C64], m: usize) {
    // rows
    for r in 0..m {
        fft.process(&mut data[r * m..(r + 1) * m]);
    }
    // columns, via transpose-process-transpose
    let mut col = vec![C64::new(0.0, 0.0); m];
    for c in 0..m {
        for r in 0..m {
            col[r] = data[r * m + c];
        }
        fft.process(&mut col);
        for r in 0..m {
            data[r * m + c] = col[r];
        }
    }
}

// ---------------------------------------------------------------------------
// dbar and Hölder seminorm
// ---------------------------------------------------------------------------

/// Central-difference dbar = (d/dt + i d/ds) / 2 of a field on the grid.
/// Valid only at nodes whose four lattice neighbors are nodes; the returned
/// mask flags those, and masked-out entries are zero.
pub struct MaskedField {
    pub field: DiskField,
    pub valid: Vec<bool>,
}

impl MaskedField {
    pub fn sup_norm_within(&self, radius: f64) -> f64 {
        let mut m = 0.0f64;
        for (id, &z) in self.field.grid.zeta.iter().enumerate() {
            if self.valid[id] && z.norm() <= radius {
                for c in self.field.get(id) {
                    m = m.max(c.norm());
                }
            }
        }
        m
    }
}

pub fn dbar(f: &DiskField) -> Result<MaskedField> {
    let grid = &f.grid;
    if grid.n_cells < 16 {
        return Err(AcxError::Config("dbar needs N >= 16".into()));
    }
    f.check_finite()?;
    let n = grid.n_cells;
    let mut out = DiskField::zeros(grid, f.ncomp);
    let mut valid = vec![false; grid.len()];
    let node = |ix: i64, iy: i64| -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= n as i64 || iy >= n as i64 {
            None
        } else {
            grid.node_of_cell[(ix as usize) * n + iy as usize]
        }
    };
    let i = C64::new(0.0, 1.0);
    for (id, &(ix, iy)) in grid.nodes.iter().enumerate() {
        let (ix, iy) = (ix as i64, iy as i64);
        let (xp, xm) = (node(ix + 1, iy), node(ix - 1, iy));
        let (yp, ym) = (node(ix, iy + 1), node(ix, iy - 1));
        if let (Some(xp), Some(xm), Some(yp), Some(ym)) = (xp, xm, yp, ym) {
            valid[id] = true;
            for c in 0..f.ncomp {
                let dt = (f.values[xp * f.ncomp + c] - f.values[xm * f.ncomp + c])
                    / (2.0 * grid.h);
                let ds = (f.values[yp * f.ncomp + c] - f.values[ym * f.ncomp + c])
                    / (2.0 * grid.h);
                out.values[id * f.ncomp + c] = 0.5 * (dt + i * ds);
            }
        }
    }
    Ok(MaskedField { field: out, valid })
}

/// Value of dbar at a single node; errors on the boundary ring.
pub fn dbar_at(f: &DiskField, node: usize) -> Result<Vec<C64>> {
    let d = dbar(f)?;
    if !d.valid[node] {
        return Err(AcxError::Domain(
            "dbar requested on the boundary ring (excluded cell)".into(),
        ));
    }
    Ok(d.field.get(node).to_vec())
}

/// Discrete Hölder seminorm: sup over `pairs` sampled node pairs of
/// |f(x) - f(y)|_inf / |x - y|^mu. Deterministic given the seed.
pub fn holder_seminorm(f: &DiskField, mu: f64, seed: u64, pairs: usize) -> Result<f64> {
    if !(0.0 < mu && mu < 1.0) {
        return Err(AcxError::Config(format!("mu = {mu} outside (0, 1)")));
    }
    let m = f.grid.len();
    if m < 2 {
        return Err(AcxError::Config("need at least 2 cells".into()));
    }
    f.check_finite()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup = 0.0f64;
    for _ in 0..pairs {
        let a = rng.gen_range(0..m);
        let b = rng.gen_range(0..m);
        if a == b {
            continue;
        }
        let dz = (f.grid.zeta[a] - f.grid.zeta[b]).norm();
        let df = f
            .get(a)
            .iter()
            .zip(f.get(b))
            .map(|(u, v)| (u - v).norm())
            .fold(0.0, f64::max);
        sup = sup.max(df / dz.powf(mu));
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_pi_and_centers_inside() {
        for n in [16usize, 37, 64, 128] {
            let g = DiskGrid::new(n).unwrap();
            let total: f64 = g.w.iter().sum();
            assert!(
                (total - PI).abs() / PI <= 1e-10,
                "N = {n}: total area {total}"
            );
            for &z in &g.zeta {
                assert!(z.norm() < 1.0);
            }
            assert!(g.w.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn cell_area_oracle_monte_carlo() {
        // a boundary cell, checked against dense sub-sampling
        let (a, b, c, d) = (0.70, 0.76, 0.62, 0.68);
        let exact = cell_disk_area(a, b, c, d);
        let k = 2000;
        let mut hits = 0usize;
        for i in 0..k {
            for j in 0..k {
                let x = a + (i as f64 + 0.5) / k as f64 * (b - a);
                let y = c + (j as f64 + 0.5) / k as f64 * (d - c);
                if x * x + y * y < 1.0 {
                    hits += 1;
                }
            }
        }
        let approx = hits as f64 / (k * k) as f64 * (b - a) * (d - c);
        assert!((exact - approx).abs() <= 1e-6, "{exact} vs {approx}");
    }

    #[test]
    fn transform_of_one_is_zbar() {
        let g = DiskGrid::new(64).unwrap();
        let f = DiskField::scalar_from_fn(&g, |_| C64::new(1.0, 0.0));
        let mut worst = 0.0f64;
        for z in [
            C64::new(0.0, 0.0),
            C64::new(0.3, -0.2),
            C64::new(-0.85, 0.1),
            C64::new(0.5, 0.7),
        ] {
            let v = cauchy_raw(&f, z).unwrap()[0];
            worst = worst.max((v - z.conj()).norm());
        }
        assert!(worst <= 5.0 / 64.0, "error {worst}");
        // and P fixes the normalization: P(1)(0) = 0 exactly
        let p0 = cauchy_p(&f, C64::new(0.0, 0.0)).unwrap()[0];
        assert_eq!(p0, C64::new(0.0, 0.0));
    }

    #[test]
    fn transform_converges_under_refinement() {
        // oracle: same quadrature at 4x resolution on f(zeta) = zeta
        let z = C64::new(0.31, -0.44);
        let coarse = {
            let g = DiskGrid::new(64).unwrap();
            cauchy_raw(&DiskField::scalar_from_fn(&g, |w| w), z).unwrap()[0]
        };
        let fine = {
            let g = DiskGrid::new(256).unwrap();
            cauchy_raw(&DiskField::scalar_from_fn(&g, |w| w), z).unwrap()[0]
        };
        assert!((coarse - fine).norm() <= 4.0 / 64.0);
    }

    #[test]
    fn fft_evaluator_matches_direct_sum() {
        let g = DiskGrid::new(32).unwrap();
        let f = DiskField::scalar_from_fn(&g, |z| z * z.conj() + C64::new(0.3, 0.1) * z);
        let solver = CauchySolver::new(&g);
        let all = solver.p_prime_all(&f).unwrap();
        for id in (0..g.len()).step_by(97) {
            let direct = cauchy_raw(&f, g.zeta[id]).unwrap()[0];
            assert!(
                (all.values[id] - direct).norm() <= 1e-11,
                "node {id}: {} vs {}",
                all.values[id],
                direct
            );
        }
    }

    #[test]
    fn linearity_and_normalization() {
        let g = DiskGrid::new(32).unwrap();
        let f1 = DiskField::scalar_from_fn(&g, |z| z);
        let f2 = DiskField::scalar_from_fn(&g, |z| (z + z.conj()).exp());
        let (al, be) = (C64::new(0.7, -0.2), C64::new(-1.1, 0.4));
        let mut combo = DiskField::zeros(&g, 1);
        for id in 0..g.len() {
            combo.values[id] = al * f1.values[id] + be * f2.values[id];
        }
        let z = C64::new(0.2, 0.55);
        let lhs = cauchy_p(&combo, z).unwrap()[0];
        let rhs = al * cauchy_p(&f1, z).unwrap()[0] + be * cauchy_p(&f2, z).unwrap()[0];
        assert!((lhs - rhs).norm() <= 1e-13);
        assert_eq!(cauchy_p(&combo, C64::new(0.0, 0.0)).unwrap()[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn dbar_stencil_examples() {
        let g = DiskGrid::new(64).unwrap();
        let tol = 1.0 / (64.0f64 * 64.0) * 8.0;
        let cases: Vec<(DiskField, Box<dyn Fn(C64) -> C64>)> = vec![
            (
                DiskField::scalar_from_fn(&g, |z| z * z),
                Box::new(|_| C64::new(0.0, 0.0)),
            ),
            (
                DiskField::scalar_from_fn(&g, |z| z.conj()),
                Box::new(|_| C64::new(1.0, 0.0)),
            ),
            (
                DiskField::scalar_from_fn(&g, |z| z * z.conj()),
                Box::new(|z| z),
            ),
        ];
        for (f, expect) in cases {
            let d = dbar(&f).unwrap();
            for (id, &z) in g.zeta.iter().enumerate() {
                if d.valid[id] {
                    assert!((d.field.values[id] - expect(z)).norm() <= tol);
                }
            }
        }
        // boundary-ring request errors
        let f = DiskField::scalar_from_fn(&g, |z| z);
        let edge = g
            .zeta
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert!(dbar_at(&f, edge).is_err());
    }

    #[test]
    fn right_inverse_error_shrinks() {
        let mut errs = vec![];
        for n in [32usize, 64] {
            let g = DiskGrid::new(n).unwrap();
            let f = DiskField::scalar_from_fn(&g, |z| z * z.conj());
            let p = CauchySolver::new(&g).p_all(&f).unwrap();
            let d = dbar(&p).unwrap();
            let mut worst = 0.0f64;
            for (id, &z) in g.zeta.iter().enumerate() {
                if d.valid[id] && z.norm() <= 0.8 {
                    worst = worst.max((d.field.values[id] - f.values[id]).norm());
                }
            }
            errs.push(worst);
        }
        assert!(
            errs[0] / errs[1] >= 1.8,
            "refinement ratio {} (errors {errs:?})",
            errs[0] / errs[1]
        );
    }

    #[test]
    fn holder_examples() {
        let g = DiskGrid::new(48).unwrap();
        let constant = DiskField::scalar_from_fn(&g, |_| C64::new(3.0, -1.0));
        assert_eq!(holder_seminorm(&constant, 0.5, 7, 4000).unwrap(), 0.0);
        let ident = DiskField::scalar_from_fn(&g, |z| z);
        let s = holder_seminorm(&ident, 0.5, 7, 20000).unwrap();
        // exact sup over the disk is 2^{1/2}; the sampled value approaches
        // from below and grows with the sample
        assert!(s <= 2.0f64.sqrt() + 1e-12 && s > 1.2, "s = {s}");
        let s_small = holder_seminorm(&ident, 0.5, 7, 500).unwrap();
        assert!(s_small <= s);
        // P(1) = zbar has the same seminorm as z
        let zbar = DiskField::scalar_from_fn(&g, |z| z.conj());
        let sb = holder_seminorm(&zbar, 0.5, 7, 20000).unwrap();
        assert!((s - sb).abs() <= 1e-12);
        // determinism
        assert_eq!(s, holder_seminorm(&ident, 0.5, 7, 20000).unwrap());
    }

    #[test]
    fn field_json_round_trip() {
        let g = DiskGrid::new(16).unwrap();
        let f = DiskField::from_fn(&g, 2, |z| vec![z, z * z.conj()]);
        let back = DiskField::from_json(&f.to_json()).unwrap();
        assert_eq!(f.values, back.values);
        assert_eq!(back.ncomp, 2);
    }
}
