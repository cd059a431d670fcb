//! Exterior-product evolution of simplex grid functions over one delay
//! interval and beyond: the direct iterated-integral formulas, the full
//! tensor-cube composition used as an independent oracle, cone membership
//! checks, and positivity certification.
//!
//! The step formula splits at each simplex point into two iterated
//! integrals whose limits are consecutive shifted coordinates.  They are
//! evaluated by axis-at-a-time prefix integration over monotone-tuple
//! tables, which is exact for the piecewise-multilinear model of the input
//! and the piecewise-linear model of the coefficient, and costs
//! O(|T_m| n_sub) per step rather than O(|T_m| n_sub^m).

use crate::dde::PeriodicCoefficient;
use crate::error::{capacity, invalid, Result};
use crate::report::CertReport;
use crate::segfun::{product_cell, Grid, SimplexIndexer, WedgeGrid};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Cone membership record: minimum over the simplex grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeReport {
    pub min_value: f64,
    pub argmin: Vec<usize>,
    pub passed: bool,
    pub tolerance: f64,
}

/// Minimum of the grid values; passes when min >= -tolerance.  Undefined
/// slots (NaN) are skipped.
pub fn cone_check(phi: &WedgeGrid, tolerance: f64) -> ConeReport {
    let idx = phi.indexer();
    let mut min_value = f64::INFINITY;
    let mut argmin = vec![0usize; phi.m()];
    idx.for_each(|r, tuple| {
        let v = phi.values()[r];
        if v.is_finite() && v < min_value {
            min_value = v;
            argmin.copy_from_slice(tuple);
        }
    });
    ConeReport {
        min_value,
        argmin,
        passed: min_value >= -tolerance,
        tolerance,
    }
}

/// Which admissible split index to take at simplex points where a
/// coordinate equals -eta exactly.  The result must not depend on the
/// choice; tests assert both agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Smallest,
    Largest,
}

/// Weight samples w[r] = b(tau + 1 + node_r) = b at step tau_step + r.
fn weight_samples(b: &PeriodicCoefficient, tau_step: i64) -> Vec<f64> {
    (0..=b.grid().n_sub() as i64)
        .map(|r| b.eval_step(tau_step + r))
        .collect()
}

/// Pins the last coordinate of a monotone-tuple table to node n.
fn pin_last(src: &[f64], src_idx: &SimplexIndexer) -> (Vec<f64>, SimplexIndexer) {
    let d = src_idx.m();
    let n = src_idx.n();
    let dst_idx = SimplexIndexer::new(d - 1, n);
    let mut dst = vec![0.0; dst_idx.count()];
    let mut buf = vec![0usize; d];
    dst_idx.for_each(|r, tuple| {
        buf[..d - 1].copy_from_slice(tuple);
        buf[d - 1] = n;
        dst[r] = src[src_idx.rank(&buf)];
    });
    (dst, dst_idx)
}

/// Integrates the coordinate at position p of `src` between two new
/// adjacent limit coordinates inserted at positions p, p+1, raising the
/// table dimension by one:
/// dst(.., lo, hi, ..) = int_{node lo}^{node hi} w(t) src(.., t, ..) dt.
fn up_integrate(
    src: &[f64],
    src_idx: &SimplexIndexer,
    p: usize,
    w: &[f64],
    h: f64,
) -> (Vec<f64>, SimplexIndexer) {
    let d = src_idx.m();
    let n = src_idx.n();
    let dst_idx = SimplexIndexer::new(d + 1, n);
    let mut dst = vec![0.0; dst_idx.count()];
    let mut prev = vec![0usize; d + 1];
    let mut buf = vec![0usize; d];
    dst_idx.for_each(|r, tuple| {
        let lo = tuple[p];
        let hi = tuple[p + 1];
        if hi == lo {
            dst[r] = 0.0;
            return;
        }
        prev.copy_from_slice(tuple);
        prev[p + 1] = hi - 1;
        let prev_r = dst_idx.rank(&prev);
        buf[..p].copy_from_slice(&tuple[..p]);
        buf[p + 1..].copy_from_slice(&tuple[p + 2..]);
        // cell [hi-1, hi]
        buf[p] = hi - 1;
        let g0 = src[src_idx.rank(&buf)];
        buf[p] = hi;
        let g1 = src[src_idx.rank(&buf)];
        dst[r] = dst[prev_r] + product_cell(h, w[hi - 1], w[hi], g0, g1);
    });
    (dst, dst_idx)
}

/// Integrates the coordinate at position p between the coordinates at
/// positions p and p+1, keeping the table dimension:
/// dst(tup) = int_{node tup[p]}^{node tup[p+1]} w(t) src(tup with [p]:=t) dt.
fn mid_integrate(src: &[f64], idx: &SimplexIndexer, p: usize, w: &[f64], h: f64) -> Vec<f64> {
    let d = idx.m();
    let mut dst = vec![0.0; idx.count()];
    let mut next = vec![0usize; d];
    let mut buf = vec![0usize; d];
    idx.for_each_desc(|r, tuple| {
        let lo = tuple[p];
        let hi = tuple[p + 1];
        if hi == lo {
            dst[r] = 0.0;
            return;
        }
        next.copy_from_slice(tuple);
        next[p] = lo + 1;
        let next_r = idx.rank(&next);
        buf.copy_from_slice(tuple);
        buf[p] = lo;
        let g0 = src[idx.rank(&buf)];
        buf[p] = lo + 1;
        let g1 = src[idx.rank(&buf)];
        dst[r] = dst[next_r] + product_cell(h, w[lo], w[lo + 1], g0, g1);
    });
    dst
}

/// Collapses the leading coordinate by integrating it from node 0 up to
/// the next coordinate, lowering the table dimension by one:
/// dst(tup) = int_{node 0}^{node tup[0]} w(t) src(t, tup) dt.
fn collapse_prepend(
    src: &[f64],
    src_idx: &SimplexIndexer,
    w: &[f64],
    h: f64,
) -> (Vec<f64>, SimplexIndexer) {
    let d = src_idx.m();
    let n = src_idx.n();
    let dst_idx = SimplexIndexer::new(d - 1, n);
    let mut dst = vec![0.0; dst_idx.count()];
    let mut buf = vec![0usize; d];
    dst_idx.for_each(|r, tuple| {
        buf[1..].copy_from_slice(tuple);
        let mut acc = 0.0;
        for j in 0..tuple[0] {
            buf[0] = j;
            let g0 = src[src_idx.rank(&buf)];
            buf[0] = j + 1;
            let g1 = src[src_idx.rank(&buf)];
            acc += product_cell(h, w[j], w[j + 1], g0, g1);
        }
        dst[r] = acc;
    });
    (dst, dst_idx)
}

/// Integrates the leading coordinate of `src` from node 0 to its own
/// value, keeping the dimension:
/// dst(tup) = int_{node 0}^{node tup[0]} w(t) src(tup with [0]:=t) dt.
fn collapse_replace(src: &[f64], idx: &SimplexIndexer, w: &[f64], h: f64) -> Vec<f64> {
    let mut dst = vec![0.0; idx.count()];
    let mut buf = vec![0usize; idx.m()];
    idx.for_each(|r, tuple| {
        buf.copy_from_slice(tuple);
        let mut acc = 0.0;
        for j in 0..tuple[0] {
            buf[0] = j;
            let g0 = src[idx.rank(&buf)];
            buf[0] = j + 1;
            let g1 = src[idx.rank(&buf)];
            acc += product_cell(h, w[j], w[j + 1], g0, g1);
        }
        dst[r] = acc;
    });
    dst
}

/// Unsigned iterated-integral tables for one split index a, both indexed
/// by monotone m-tuples (limits first, then shifted tail coordinates).
///
/// Term 1 exists for a <= m-2: the (m-a-1)-fold integral with the last
/// argument pinned to 0 and limits between consecutive shifted
/// coordinates.  Term 2 exists for a <= m-1: the (m-a)-fold integral whose
/// outermost variable starts at -1.
pub(crate) fn term_tables(
    phi: &[f64],
    m: usize,
    n: usize,
    w: &[f64],
    h: f64,
    a: usize,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let idx_m = SimplexIndexer::new(m, n);
    let term1 = if a + 2 <= m {
        let q1 = m - a - 1; // free variables
        let (pinned, pinned_idx) = pin_last(phi, &idx_m);
        let (mut cur, cur_idx) = up_integrate(&pinned, &pinned_idx, q1 - 1, w, h);
        debug_assert_eq!(cur_idx.m(), m);
        for k in (1..q1).rev() {
            cur = mid_integrate(&cur, &cur_idx, k - 1, w, h);
        }
        Some(cur)
    } else {
        None
    };
    let term2 = if a + 1 <= m {
        let q2 = m - a;
        if q2 == 1 {
            Some(collapse_replace(phi, &idx_m, w, h))
        } else {
            let (mut cur, cur_idx) = up_integrate(phi, &idx_m, q2 - 1, w, h);
            for k in (2..q2).rev() {
                cur = mid_integrate(&cur, &cur_idx, k - 1, w, h);
            }
            let (out, _) = collapse_prepend(&cur, &cur_idx, w, h);
            Some(out)
        }
    } else {
        None
    };
    (term1, term2)
}

fn parity_sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// One exterior-product evolution step of grid-aligned length eta in
/// (0, 1], with the stated choice at ambiguous split points.
pub fn wedge_step_with(
    b: &PeriodicCoefficient,
    tau: f64,
    eta: f64,
    phi: &WedgeGrid,
    choice: SplitChoice,
) -> Result<WedgeGrid> {
    let grid = b.grid();
    if phi.grid() != grid {
        return invalid("wedge grid differs from coefficient grid");
    }
    let tau_step = grid.align(tau)?;
    let eta_steps = grid.align(eta)?;
    let n = grid.n_sub();
    if eta_steps < 1 || eta_steps > n as i64 {
        return invalid(format!("eta = {eta} outside (0, 1]"));
    }
    let e = eta_steps as usize;
    let m = phi.m();
    let h = grid.h();
    let w = weight_samples(b, tau_step);
    let idx = phi.indexer();

    // tables per split index, built lazily
    let mut tables: Vec<Option<(Option<Vec<f64>>, Option<Vec<f64>>)>> = vec![None; m + 1];
    let mut out = vec![0.0; idx.count()];
    let mut readout = vec![0usize; m];
    idx.for_each(|r, tuple| {
        let a = match choice {
            SplitChoice::Smallest => tuple.iter().filter(|&&j| j + e < n).count(),
            SplitChoice::Largest => tuple.iter().filter(|&&j| j + e <= n).count(),
        };
        if a == m {
            // pure shift
            for (slot, &j) in readout.iter_mut().zip(tuple.iter()) {
                *slot = j + e - n;
            }
            out[r] = phi.values()[idx.rank(&readout)];
            return;
        }
        // limits (shifted by eta - 1), then tail (shifted by eta)
        for (i, slot) in readout.iter_mut().take(m - a).enumerate() {
            *slot = tuple[a + i] + e - n;
        }
        for (i, slot) in readout.iter_mut().skip(m - a).enumerate() {
            *slot = tuple[i] + e;
        }
        let tabs = tables[a].get_or_insert_with(|| term_tables(phi.values(), m, n, &w, h, a));
        let s1 = parity_sign(a * m);
        let s2 = parity_sign((a + 1) * m);
        let t1 = match &tabs.0 {
            Some(t) => t[idx.rank(&readout)],
            None => {
                // a = m-1: the first term degenerates to a pinned read
                let mut pin = vec![0usize; m];
                for (i, slot) in pin.iter_mut().take(m - 1).enumerate() {
                    *slot = tuple[i] + e;
                }
                pin[m - 1] = n;
                phi.values()[idx.rank(&pin)]
            }
        };
        let t2 = tabs.1.as_ref().expect("term 2 exists for a < m")[idx.rank(&readout)];
        out[r] = s1 * t1 + s2 * t2;
    });
    WedgeGrid::new(m, grid, out)
}

/// One evolution step with the smallest admissible split index.
pub fn wedge_step(
    b: &PeriodicCoefficient,
    tau: f64,
    eta: f64,
    phi: &WedgeGrid,
) -> Result<WedgeGrid> {
    wedge_step_with(b, tau, eta, phi, SplitChoice::Smallest)
}

/// Evolution over an arbitrary grid-aligned horizon: whole unit steps with
/// one remainder step applied last.
pub fn wedge_evolve(
    b: &PeriodicCoefficient,
    tau: f64,
    t_end: f64,
    phi: &WedgeGrid,
) -> Result<WedgeGrid> {
    let grid = b.grid();
    let tau_step = grid.align(tau)?;
    let end_step = grid.align(t_end)?;
    if end_step < tau_step {
        return invalid(format!("t_end = {t_end} earlier than tau = {tau}"));
    }
    let n = grid.n_sub();
    let total = (end_step - tau_step) as usize;
    let mut cur = phi.clone();
    let mut done = 0usize;
    while done < total {
        let e = (total - done).min(n);
        let tau_k = grid.time_of(tau_step + done as i64);
        let eta_k = grid.time_of(e as i64);
        cur = wedge_step(b, tau_k, eta_k, &cur)?;
        done += e;
    }
    Ok(cur)
}

/// A function of m variables sampled on the full cube grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeGrid {
    m: usize,
    grid: Grid,
    values: Vec<f64>,
}

impl CubeGrid {
    pub fn new(m: usize, grid: Grid, values: Vec<f64>) -> Result<CubeGrid> {
        let len = (grid.n_sub() + 1).pow(m as u32);
        if values.len() != len {
            return invalid(format!("cube grid needs {len} values, got {}", values.len()));
        }
        Ok(CubeGrid { m, grid, values })
    }

    pub fn from_fn(m: usize, grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<CubeGrid> {
        let n = grid.n_sub();
        let len = (n + 1).pow(m as u32);
        let mut values = Vec::with_capacity(len);
        let mut tuple = vec![0usize; m];
        let mut theta = vec![0.0; m];
        for flat in 0..len {
            let mut rem = flat;
            for d in (0..m).rev() {
                tuple[d] = rem % (n + 1);
                rem /= n + 1;
            }
            for (c, &j) in theta.iter_mut().zip(tuple.iter()) {
                *c = grid.node(j);
            }
            values.push(f(&theta));
        }
        CubeGrid::new(m, grid, values)
    }

    /// Antisymmetric extension of simplex data to the full cube: sort the
    /// indices, read, and apply the permutation sign; repeated indices
    /// give zero.
    pub fn from_wedge_antisym(phi: &WedgeGrid) -> Result<CubeGrid> {
        let m = phi.m();
        let grid = phi.grid();
        let n = grid.n_sub();
        if m > 3 {
            return capacity(format!("cube storage unsupported for m = {m} > 3"));
        }
        let idx = phi.indexer();
        let len = (n + 1).pow(m as u32);
        let mut values = Vec::with_capacity(len);
        let mut tuple = vec![0usize; m];
        for flat in 0..len {
            let mut rem = flat;
            for d in (0..m).rev() {
                tuple[d] = rem % (n + 1);
                rem /= n + 1;
            }
            let mut sorted = tuple.clone();
            let mut sign = 1.0;
            for i in 1..m {
                let mut j = i;
                while j > 0 && sorted[j - 1] > sorted[j] {
                    sorted.swap(j - 1, j);
                    sign = -sign;
                    j -= 1;
                }
            }
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                values.push(0.0);
            } else {
                values.push(sign * phi.values()[idx.rank(&sorted)]);
            }
        }
        CubeGrid::new(m, grid, values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, tuple: &[usize]) -> f64 {
        let n1 = self.grid.n_sub() + 1;
        let mut flat = 0usize;
        for &j in tuple {
            flat = flat * n1 + j;
        }
        self.values[flat]
    }

    /// Restriction to the ordered simplex grid.
    pub fn restrict_to_simplex(&self) -> Result<WedgeGrid> {
        let idx = SimplexIndexer::new(self.m, self.grid.n_sub());
        let mut values = Vec::with_capacity(idx.count());
        idx.for_each(|_, tuple| values.push(self.value_at(tuple)));
        WedgeGrid::new(self.m, self.grid, values)
    }
}

/// Applies the one-variable step operator along one coordinate of a cube
/// function, all other coordinates held fixed.
fn cube_axis_step(cube: &mut CubeGrid, axis: usize, w: &[f64], e: usize) {
    let n = cube.grid.n_sub();
    let h = cube.grid.h();
    let n1 = n + 1;
    let m = cube.m;
    let stride = n1.pow((m - 1 - axis) as u32);
    let outer = n1.pow(axis as u32);
    let inner = stride;
    let mut slice = vec![0.0f64; n1];
    let mut prefix = vec![0.0f64; e + 1];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n1 * stride + i;
            for j in 0..n1 {
                slice[j] = cube.values[base + j * stride];
            }
            for r in 0..e {
                prefix[r + 1] =
                    prefix[r] + product_cell(h, w[r], w[r + 1], slice[r], slice[r + 1]);
            }
            for j in 0..n1 {
                let v = if j + e <= n {
                    slice[j + e]
                } else {
                    slice[n] - prefix[j + e - n]
                };
                cube.values[base + j * stride] = v;
            }
        }
    }
}

/// Independent oracle for the evolution step: the one-variable operator
/// applied successively in each coordinate of the full cube (the order is
/// immaterial; a test asserts coordinate-order commutativity).
pub fn tensor_oracle_step(
    b: &PeriodicCoefficient,
    tau: f64,
    eta: f64,
    phi: &CubeGrid,
) -> Result<CubeGrid> {
    tensor_oracle_step_ordered(b, tau, eta, phi, None)
}

/// Oracle step with an explicit coordinate order (for commutativity tests).
pub fn tensor_oracle_step_ordered(
    b: &PeriodicCoefficient,
    tau: f64,
    eta: f64,
    phi: &CubeGrid,
    order: Option<&[usize]>,
) -> Result<CubeGrid> {
    let grid = b.grid();
    if phi.grid() != grid {
        return invalid("cube grid differs from coefficient grid");
    }
    if phi.m() > 3 {
        return capacity(format!("cube storage unsupported for m = {} > 3", phi.m()));
    }
    let tau_step = grid.align(tau)?;
    let eta_steps = grid.align(eta)?;
    let n = grid.n_sub();
    if eta_steps < 1 || eta_steps > n as i64 {
        return invalid(format!("eta = {eta} outside (0, 1]"));
    }
    let e = eta_steps as usize;
    let w = weight_samples(b, tau_step);
    let mut out = phi.clone();
    let axes: Vec<usize> = match order {
        Some(o) => o.to_vec(),
        None => (0..phi.m()).collect(),
    };
    for axis in axes {
        if axis >= phi.m() {
            return invalid(format!("axis {axis} out of range"));
        }
        cube_axis_step(&mut out, axis, &w, e);
    }
    Ok(out)
}

/// Direct two-term closed form of the unit step for m = 2 at one simplex
/// grid point, as an independent route through the same quadrature.
pub fn m2_closed_form(
    b: &PeriodicCoefficient,
    tau: f64,
    phi: &WedgeGrid,
    theta: &[usize],
) -> Result<f64> {
    if phi.m() != 2 {
        return invalid(format!("closed form is for m = 2, got m = {}", phi.m()));
    }
    if theta.len() != 2 || theta[0] > theta[1] || theta[1] > phi.grid().n_sub() {
        return invalid("theta must be a monotone pair of node indices");
    }
    let grid = b.grid();
    let tau_step = grid.align(tau)?;
    let n = grid.n_sub();
    let h = grid.h();
    let w = weight_samples(b, tau_step);
    let idx = phi.indexer();
    let (j1, j2) = (theta[0], theta[1]);

    // single-integral term: int over [theta1, theta2] of w(t) phi(t, 0)
    let mut term1 = 0.0;
    for j in j1..j2 {
        let g0 = phi.values()[idx.rank(&[j, n])];
        let g1 = phi.values()[idx.rank(&[j + 1, n])];
        term1 += product_cell(h, w[j], w[j + 1], g0, g1);
    }

    // double-integral term over [-1, theta1] x [theta1, theta2]
    // inner integral at each u-node is linear in u per cell
    let mut inner = vec![0.0f64; j1 + 1];
    for (uj, slot) in inner.iter_mut().enumerate() {
        let mut acc = 0.0;
        for vj in j1..j2 {
            let g0 = phi.values()[idx.rank(&[uj, vj])];
            let g1 = phi.values()[idx.rank(&[uj, vj + 1])];
            acc += product_cell(h, w[vj], w[vj + 1], g0, g1);
        }
        *slot = acc;
    }
    let mut term2 = 0.0;
    for uj in 0..j1 {
        term2 += product_cell(h, w[uj], w[uj + 1], inner[uj], inner[uj + 1]);
    }
    Ok(term1 + term2)
}

/// Draws reproducible nonnegative simplex grid functions, evolves each,
/// and checks cone membership of every output.  The tolerance scales with
/// the larger of the input and output sup norms.
#[allow(clippy::too_many_arguments)]
pub fn positivity_certificate(
    b: &PeriodicCoefficient,
    tau: f64,
    eta: f64,
    m: usize,
    trial_count: usize,
    seed: u64,
    antisym: bool,
    threads: usize,
) -> Result<CertReport> {
    let signed_ok = if m % 2 == 0 {
        b.samples().iter().all(|&v| v >= 0.0)
    } else {
        b.samples().iter().all(|&v| v <= 0.0)
    };
    if !signed_ok {
        return invalid(format!("(-1)^{m} b(t) >= 0 fails at a node"));
    }
    let grid = b.grid();
    grid.align(tau)?;
    grid.align(eta)?;
    if eta < 0.0 {
        return invalid("eta must be nonnegative");
    }
    let idx = SimplexIndexer::new(m, grid.n_sub());
    let count = idx.count();

    let run_trial = |trial: usize| -> Result<(f64, Vec<usize>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let mut values: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..1.0)).collect();
        if antisym {
            // one diagonal-vanishing projection
            idx.for_each(|r, tuple| {
                if tuple.windows(2).any(|w| w[0] == w[1]) {
                    values[r] = 0.0;
                }
            });
        }
        let phi = WedgeGrid::new(m, grid, values)?;
        let out = wedge_evolve(b, tau, tau + eta, &phi)?;
        let scale = phi.sup_norm().max(out.sup_norm()).max(f64::MIN_POSITIVE);
        let report = cone_check(&out, 0.0);
        Ok((report.min_value / scale, report.argmin))
    };

    let threads = threads.max(1).min(trial_count.max(1));
    let mut results: Vec<Option<Result<(f64, Vec<usize>)>>> = Vec::new();
    results.resize_with(trial_count, || None);
    if threads <= 1 {
        for (trial, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_trial(trial));
        }
    } else {
        let chunk = trial_count.div_ceil(threads);
        std::thread::scope(|scope| {
            for (tid, slots) in results.chunks_mut(chunk).enumerate() {
                let run_trial = &run_trial;
                scope.spawn(move || {
                    for (off, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(run_trial(tid * chunk + off));
                    }
                });
            }
        });
    }

    let mut worst = f64::INFINITY;
    let mut argmin = Vec::new();
    for slot in results {
        let (scaled_min, arg) = slot.expect("trial ran")?;
        if scaled_min < worst {
            worst = scaled_min;
            argmin = arg;
        }
    }
    let tolerance = 1e-10;
    Ok(CertReport {
        passed: worst >= -tolerance,
        min_value: worst,
        argmin: Some(argmin),
        tolerance,
        seed: Some(seed),
        config_echo: serde_json::json!({
            "tau": tau, "eta": eta, "m": m, "trials": trial_count,
            "antisym": antisym,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::{step, SignClass};
    use crate::segfun::Segment;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn u2(g: Grid) -> WedgeGrid {
        WedgeGrid::from_fn(2, g, |t| t[1] - t[0]).unwrap()
    }

    fn u3(g: Grid) -> WedgeGrid {
        WedgeGrid::from_fn(3, g, |t| {
            (t[1] - t[0]) * (t[2] - t[0]) * (t[2] - t[1]) * (1.0 + t[0] - t[1])
        })
        .unwrap()
    }

    fn random_antisym(m: usize, g: Grid, seed: u64) -> WedgeGrid {
        let idx = SimplexIndexer::new(m, g.n_sub());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..idx.count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        idx.for_each(|r, tuple| {
            if tuple.windows(2).any(|w| w[0] == w[1]) {
                values[r] = 0.0;
            }
        });
        WedgeGrid::new(m, g, values).unwrap()
    }

    #[test]
    fn wedge_step_m1_matches_dde_step() {
        let g = grid(16);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, 1.2, 0.7, 1.0).unwrap();
        let seg = Segment::from_fn(g, |t| (2.0 * t).cos() - 0.4).unwrap();
        let phi = WedgeGrid::new(1, g, seg.values().to_vec()).unwrap();
        for eta in [0.25, 0.5, 1.0] {
            let via_seg = step(&b, 0.5, eta, &seg).unwrap();
            let via_wedge = wedge_step(&b, 0.5, eta, &phi).unwrap();
            for (a, c) in via_seg.values().iter().zip(via_wedge.values()) {
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wedge_step_b_zero_is_coordinate_shift() {
        let g = grid(8);
        let b = PeriodicCoefficient::constant(g, 1.0, 0.0).unwrap();
        for m in [2usize, 3] {
            let phi = random_antisym(m, g, 42 + m as u64);
            let out = wedge_step(&b, 0.0, 0.5, &phi).unwrap();
            let e = 4usize; // 0.5 on n_sub = 8
            let idx = phi.indexer();
            let n = g.n_sub();
            idx.for_each(|r, tuple| {
                let a = tuple.iter().filter(|&&j| j + e < n).count();
                let expect = if a == m {
                    let shifted: Vec<usize> = tuple.iter().map(|&j| j + e - n).collect();
                    phi.values()[idx.rank(&shifted)]
                } else if a == m - 1 {
                    let mut pin: Vec<usize> = tuple[..m - 1].iter().map(|&j| j + e).collect();
                    pin.push(n);
                    phi.values()[idx.rank(&pin)]
                } else {
                    0.0
                };
                assert!(
                    (out.values()[r] - expect).abs() < 1e-14,
                    "mismatch at {tuple:?}"
                );
            });
        }
    }

    #[test]
    fn closed_form_example_u2() {
        // b = 1, phi = u2, theta = (-1, 0): value 1/2
        let g = grid(10);
        let b = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let phi = u2(g);
        let v = m2_closed_form(&b, 0.0, &phi, &[0, g.n_sub()]).unwrap();
        assert!((v - 0.5).abs() < 1e-13);

        // diagonal point: the single-integral term vanishes range-wise
        let vd = m2_closed_form(&b, 0.0, &phi, &[5, 5]).unwrap();
        let mut term2_only = 0.0;
        {
            // recompute the double-integral term directly: inner range empty
            // so it is exactly zero here as well
            term2_only += 0.0;
        }
        assert!((vd - term2_only).abs() < 1e-15);
        assert!(m2_closed_form(&b, 0.0, &u3(g), &[0, 1]).is_err());
    }

    #[test]
    fn wedge_step_matches_closed_form_m2() {
        let g = grid(12);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, 1.0, 0.5, 1.0).unwrap();
        for seed in 0..20 {
            let phi = random_antisym(2, g, seed);
            let out = wedge_step(&b, 0.0, 1.0, &phi).unwrap();
            let idx = phi.indexer();
            idx.for_each(|r, tuple| {
                let direct = m2_closed_form(&b, 0.0, &phi, tuple).unwrap();
                assert!(
                    (out.values()[r] - direct).abs() < 1e-10 * (1.0 + direct.abs()),
                    "disagree at {tuple:?}: {} vs {direct}",
                    out.values()[r]
                );
            });
        }
    }

    #[test]
    fn wedge_step_example_uu2() {
        let g = grid(10);
        let b = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let phi = u2(g);
        let out = wedge_step(&b, 0.0, 1.0, &phi).unwrap();
        let v = out.value_at(&[0, g.n_sub()]);
        assert!((v - 0.5).abs() < 1e-13, "got {v}");
    }

    #[test]
    fn split_choice_is_immaterial() {
        let g = grid(12);
        for m in [1usize, 2, 3] {
            let b = PeriodicCoefficient::sinusoid(g, 1.0, -1.0, 0.5, 1.0).unwrap();
            let phi = random_antisym(m, g, 7 * m as u64 + 1);
            for eta in [0.25, 0.5, 0.75] {
                let small = wedge_step_with(&b, 0.0, eta, &phi, SplitChoice::Smallest).unwrap();
                let large = wedge_step_with(&b, 0.0, eta, &phi, SplitChoice::Largest).unwrap();
                let scale = phi.sup_norm().max(1.0);
                for (x, y) in small.values().iter().zip(large.values()) {
                    assert!(
                        (x - y).abs() <= 1e-9 * scale,
                        "split choice changed the value: {x} vs {y} (m = {m}, eta = {eta})"
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_restriction_matches_wedge_step() {
        for (m, n) in [(2usize, 16usize), (3, 12)] {
            let g = grid(n);
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let b = PeriodicCoefficient::constant(g, 1.0, sign).unwrap();
            let mut worst = 0.0f64;
            for seed in 0..5 {
                let phi = random_antisym(m, g, 100 + seed);
                let direct = wedge_step(&b, 0.0, 1.0, &phi).unwrap();
                let cube = CubeGrid::from_wedge_antisym(&phi).unwrap();
                let oracle = tensor_oracle_step(&b, 0.0, 1.0, &cube)
                    .unwrap()
                    .restrict_to_simplex()
                    .unwrap();
                for (x, y) in direct.values().iter().zip(oracle.values()) {
                    worst = worst.max((x - y).abs());
                }
            }
            let h2 = g.h() * g.h();
            assert!(
                worst <= 20.0 * h2,
                "wedge/oracle gap {worst} too large for m = {m} at n = {n}"
            );
        }
    }

    #[test]
    fn oracle_coordinate_order_commutes() {
        let g = grid(10);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, 1.0, 0.3, 1.0).unwrap();
        let phi = CubeGrid::from_wedge_antisym(&random_antisym(2, g, 5)).unwrap();
        let a = tensor_oracle_step_ordered(&b, 0.0, 0.75, &phi, Some(&[0, 1])).unwrap();
        let c = tensor_oracle_step_ordered(&b, 0.0, 0.75, &phi, Some(&[1, 0])).unwrap();
        for (x, y) in a.values().iter().zip(c.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_m1_matches_step_exactly() {
        let g = grid(14);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, 0.8, 0.5, 1.0).unwrap();
        let seg = Segment::from_fn(g, |t| t * t - 0.1).unwrap();
        let cube = CubeGrid::new(1, g, seg.values().to_vec()).unwrap();
        let out = tensor_oracle_step(&b, 0.0, 0.5, &cube).unwrap();
        let direct = step(&b, 0.0, 0.5, &seg).unwrap();
        for (x, y) in out.values().iter().zip(direct.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn evolve_process_property() {
        let g = grid(16);
        let b = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let phi = random_antisym(2, g, 9);
        let direct = wedge_evolve(&b, 0.0, 1.75, &phi).unwrap();
        let mid = wedge_evolve(&b, 0.0, 0.75, &phi).unwrap();
        let composed = wedge_evolve(&b, 0.75, 1.75, &mid).unwrap();
        let scale = phi.sup_norm();
        let tol = 10.0 * g.h() * g.h() * scale;
        for (x, y) in direct.values().iter().zip(composed.values()) {
            assert!((x - y).abs() <= tol, "process property violated: {x} vs {y}");
        }
        // identity at t = tau
        let same = wedge_evolve(&b, 0.0, 0.0, &phi).unwrap();
        assert_eq!(same.values(), phi.values());
        assert!(wedge_evolve(&b, 1.0, 0.5, &phi).is_err());
    }

    #[test]
    fn cone_check_examples() {
        let g = grid(8);
        let phi = u2(g);
        let r = cone_check(&phi, 0.0);
        assert!(r.passed);
        assert_eq!(r.min_value, 0.0);
        let neg = WedgeGrid::new(2, g, phi.values().iter().map(|v| -v).collect()).unwrap();
        assert!(!cone_check(&neg, 1e-12).passed);
        assert!(cone_check(&u3(g), 0.0).passed);
    }

    #[test]
    fn positivity_certificate_small() {
        let g = grid(12);
        let b = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let cert = positivity_certificate(&b, 0.0, 1.0, 2, 10, 7, false, 1).unwrap();
        assert!(cert.passed, "worst scaled min {}", cert.min_value);

        let bneg = PeriodicCoefficient::constant(g, 1.0, -1.0).unwrap();
        let cert = positivity_certificate(&bneg, 0.0, 1.5, 3, 10, 7, false, 2).unwrap();
        assert!(cert.passed, "worst scaled min {}", cert.min_value);

        assert!(positivity_certificate(&bneg, 0.0, 1.0, 2, 5, 7, false, 1).is_err());
    }

    #[test]
    fn certificate_deterministic_across_threads() {
        let g = grid(10);
        let b = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let a = positivity_certificate(&b, 0.0, 1.0, 2, 8, 3, true, 1).unwrap();
        let c = positivity_certificate(&b, 0.0, 1.0, 2, 8, 3, true, 4).unwrap();
        assert_eq!(a.min_value, c.min_value);
        assert_eq!(a.argmin, c.argmin);
    }

    #[test]
    fn monotone_comparison_on_cone_inputs() {
        // larger signed coefficient dominates nodewise on cone inputs
        let g = grid(12);
        let b1 = PeriodicCoefficient::constant(g, 1.0, 1.5).unwrap();
        let b2 = PeriodicCoefficient::sinusoid(g, 1.0, 0.8, 0.2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let idx = SimplexIndexer::new(2, g.n_sub());
        for _ in 0..5 {
            let values: Vec<f64> = (0..idx.count()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let phi = WedgeGrid::new(2, g, values).unwrap();
            let big = wedge_evolve(&b1, 0.0, 2.0, &phi).unwrap();
            let small = wedge_evolve(&b2, 0.0, 2.0, &phi).unwrap();
            for (x, y) in big.values().iter().zip(small.values()) {
                assert!(x + 1e-12 >= *y, "dominance fails: {x} < {y}");
            }
        }
    }

    #[test]
    fn oracle_refinement_is_second_order() {
        // halving h shrinks the wedge/oracle gap by about 4
        let gap_at = |n: usize| -> f64 {
            let g = grid(n);
            let b = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
            let phi = WedgeGrid::from_fn(2, g, |t| {
                (t[1] - t[0]) * (1.0 + (3.0 * t[0]).sin() * (2.0 * t[1]).cos())
            })
            .unwrap();
            let direct = wedge_step(&b, 0.0, 1.0, &phi).unwrap();
            let oracle = tensor_oracle_step(&b, 0.0, 1.0, &CubeGrid::from_wedge_antisym(&phi).unwrap())
                .unwrap()
                .restrict_to_simplex()
                .unwrap();
            direct
                .values()
                .iter()
                .zip(oracle.values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let coarse = gap_at(16);
        let fine = gap_at(32);
        let ratio = coarse / fine;
        assert!(
            (3.0..=5.5).contains(&ratio),
            "refinement ratio {ratio} not near 4 ({coarse:.3e} vs {fine:.3e})"
        );
    }
}
