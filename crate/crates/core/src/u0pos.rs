//! The reference functions u_m and their windowed variants, the simplex
//! integral operators A = A0 + A1 and B = B0 + B1, the two-term
//! decomposition of B images with its exact 1/24 and 1/12 constants,
//! ratio certification against u_m, and iterated positivity floors.

use crate::error::{capacity, invalid, Error, Result};
use crate::report::{CertReport, RatioReport};
use crate::segfun::{
    integrate_weighted_samples, product_cell, Grid, SimplexIndexer, WedgeGrid,
};
use crate::wedge::term_tables;
use serde::{Deserialize, Serialize};

/// Capacity ceiling for the iterated integral operator.
pub const MAX_A_ORDER: usize = 5;

fn check_simplex(theta: &[f64]) -> Result<()> {
    if theta.len() < 2 {
        return invalid("need at least two coordinates");
    }
    let eps = 1e-12;
    if theta[0] < -1.0 - eps || *theta.last().unwrap() > eps {
        return invalid(format!("{theta:?} outside [-1,0]^m"));
    }
    if theta.windows(2).any(|w| w[0] > w[1] + eps) {
        return invalid(format!("{theta:?} not ordered"));
    }
    Ok(())
}

/// The reference function: the product of all pairwise differences times
/// the product of (1 + theta_i - theta_j) over i < j <= m-1.
pub fn u_m_eval(theta: &[f64]) -> Result<f64> {
    check_simplex(theta)?;
    let m = theta.len();
    let mut v = 1.0;
    for i in 0..m {
        for j in i + 1..m {
            v *= theta[j] - theta[i];
        }
    }
    for i in 0..m.saturating_sub(1) {
        for j in i + 1..m - 1 {
            v *= 1.0 + theta[i] - theta[j];
        }
    }
    Ok(v)
}

/// Windowed variant: differences over 1 <= j - i <= q and boundary factors
/// over j - i >= m - q (indices up to m-1); q = 0 gives the constant 1 and
/// q = m-1 recovers the reference function.
pub fn u_m_q_eval(theta: &[f64], q: usize) -> Result<f64> {
    check_simplex(theta)?;
    let m = theta.len();
    if q > m - 1 {
        return invalid(format!("q = {q} outside 0..={}", m - 1));
    }
    let mut v = 1.0;
    for i in 0..m {
        for j in i + 1..m {
            if j - i <= q {
                v *= theta[j] - theta[i];
            }
        }
    }
    for i in 0..m.saturating_sub(1) {
        for j in i + 1..m - 1 {
            if j - i >= m - q {
                v *= 1.0 + theta[i] - theta[j];
            }
        }
    }
    Ok(v)
}

/// Samples the reference function on the simplex grid.
pub fn u_m_grid(m: usize, grid: Grid) -> Result<WedgeGrid> {
    WedgeGrid::from_fn(m, grid, |t| u_m_eval(t).expect("grid points lie in the simplex"))
}

/// Samples the windowed variant on the simplex grid.
pub fn u_m_q_grid(m: usize, grid: Grid, q: usize) -> Result<WedgeGrid> {
    // validate q once against the order
    u_m_q_eval(&vec![0.0; m.max(2)], q.min(m.saturating_sub(1)))?;
    if q > m - 1 {
        return invalid(format!("q = {q} outside 0..={}", m - 1));
    }
    WedgeGrid::from_fn(m, grid, |t| u_m_q_eval(t, q).expect("grid points lie in the simplex"))
}

fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n + 1]
}

/// The two halves of the iterated integral operator: the inner
/// (m-1)-fold integral with the last argument pinned to 0, and the m-fold
/// integral whose leading variable starts at -1.  Exact for the
/// piecewise-multilinear model of the input.
pub fn apply_a_parts(phi: &WedgeGrid) -> Result<(WedgeGrid, WedgeGrid)> {
    let m = phi.m();
    if m > MAX_A_ORDER {
        return capacity(format!("operator order m = {m} exceeds {MAX_A_ORDER}"));
    }
    let grid = phi.grid();
    let n = grid.n_sub();
    let w = ones(n);
    let (t1, t2) = term_tables(phi.values(), m, n, &w, grid.h(), 0);
    let a0 = match t1 {
        Some(v) => WedgeGrid::new(m, grid, v)?,
        None => {
            // m = 1: the inner integral degenerates to the pinned value
            let idx = phi.indexer();
            let pin = phi.values()[idx.rank(&[n])];
            WedgeGrid::new(m, grid, vec![pin; idx.count()])?
        }
    };
    let a1 = WedgeGrid::new(m, grid, t2.expect("term 2 exists for a = 0"))?;
    Ok((a0, a1))
}

/// A = A0 + A1.
pub fn apply_a(phi: &WedgeGrid) -> Result<WedgeGrid> {
    let (a0, a1) = apply_a_parts(phi)?;
    let values = a0
        .values()
        .iter()
        .zip(a1.values())
        .map(|(x, y)| x + y)
        .collect();
    WedgeGrid::new(phi.m(), phi.grid(), values)
}

/// nu_0 and nu_1, the two bounded discontinuity shapes at the singular
/// corner (-1, 0, 0).
pub fn nu_eval(theta: &[f64]) -> Result<(f64, f64)> {
    check_simplex(theta)?;
    if theta.len() != 3 {
        return invalid("nu is defined for three coordinates");
    }
    let denom = 1.0 + theta[0] - theta[1];
    if denom <= 1e-14 {
        return invalid("nu undefined at the singular corner (-1, 0, 0)");
    }
    let nu0 = -(theta[1] + theta[2]) / denom;
    let nu1 = (1.0 + theta[0]) / denom;
    debug_assert!((-1e-12..=2.0 + 1e-12).contains(&nu0));
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&nu1));
    Ok((nu0, nu1))
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.7745966692414834, 0.5555555555555556),
    (0.0, 0.8888888888888888),
    (0.7745966692414834, 0.5555555555555556),
];

/// Integration cells of [lo, hi] clipped to the grid, as (a, b) pairs.
fn clipped_cells(grid: Grid, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let n = grid.n_sub();
    let h = grid.h();
    let mut out = Vec::new();
    if hi <= lo {
        return out;
    }
    let k0 = (((lo + 1.0) / h).floor() as usize).min(n - 1);
    let k1 = (((hi + 1.0) / h).ceil() as usize).max(1).min(n);
    for k in k0..k1 {
        let a = lo.max(grid.node(k));
        let b = hi.min(grid.node(k + 1));
        if b > a {
            out.push((a, b));
        }
    }
    out
}

/// Average of f over [lo, hi] with the degenerate convention that a
/// collapsed interval evaluates the integrand; integration is Gauss-3 per
/// clipped cell (exact for the cubic kernels against linear data).
fn avg_integral(grid: Grid, lo: f64, hi: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    if hi - lo < 1e-14 {
        return f(lo);
    }
    let mut acc = 0.0;
    for (a, b) in clipped_cells(grid, lo, hi) {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (t, wt) in GAUSS3 {
            acc += wt * half * f(mid + half * t);
        }
    }
    acc / (hi - lo)
}

/// Direct average-integral evaluation of the first half of B for m = 3 at
/// an arbitrary simplex point away from (-1, 0, 0); triple points use the
/// closed forms of the diagonal limit.
fn b0_direct_m3(phi: &WedgeGrid, theta: &[f64; 3]) -> f64 {
    let grid = phi.grid();
    let (t1l, t1h) = (theta[0], theta[1]);
    let (t2l, t2h) = (theta[1], theta[2]);
    if theta[2] - theta[0] < 1e-14 {
        // triple point: theta*^2 phi(theta*, theta*, 0) / 2
        let v = phi.interp_sorted(&[theta[0], theta[0], 0.0]);
        return theta[0] * theta[0] * v / 2.0;
    }
    let denom1 = theta[2] - theta[0];
    let denom2 = 1.0 + theta[0] - theta[1];
    let mut outer = |t1: f64| -> f64 {
        let mut inner = |t2: f64| -> f64 {
            let kernel = ((t2 - t1) / denom1) * t1 * (t2 / denom2) * (1.0 + t1 - t2);
            kernel * phi.interp_sorted(&[t1, t2, 0.0])
        };
        avg_integral(grid, t2l, t2h, &mut inner)
    };
    avg_integral(grid, t1l, t1h, &mut outer)
}

/// Direct evaluation of the second half of B for m = 3 (the bounded
/// prefactor nu_1 times a triple average integral).
fn b1_direct_m3(phi: &WedgeGrid, theta: &[f64; 3]) -> f64 {
    let grid = phi.grid();
    if theta[2] - theta[0] < 1e-14 {
        // triple point: (1 + theta*) times the diagonal limit
        let th = theta[0];
        let mut f = |t: f64| -> f64 {
            (th - t) * (th - t) * (1.0 + t - th) * phi.interp_sorted(&[t, th, th])
        };
        let avg = avg_integral(grid, -1.0, th, &mut f);
        return (1.0 + th) * avg / 2.0;
    }
    let denom1 = theta[2] - theta[0];
    let nu1 = (1.0 + theta[0]) / (1.0 + theta[0] - theta[1]);
    let mut outer = |t0: f64| -> f64 {
        let mut mid = |t1: f64| -> f64 {
            let mut inner = |t2: f64| -> f64 {
                let kernel = (t1 - t0) * ((t2 - t1) / denom1) * (t2 - t0) * (1.0 + t0 - t1);
                kernel * phi.interp_sorted(&[t0, t1, t2])
            };
            avg_integral(grid, theta[1], theta[2], &mut inner)
        };
        avg_integral(grid, theta[0], theta[1], &mut mid)
    };
    nu1 * avg_integral(grid, -1.0, theta[0], &mut outer)
}

/// Direct average-integral evaluation of both halves of B at an arbitrary
/// point of the 3-simplex; errors at the singular corner.
pub fn b_direct_eval_m3(phi: &WedgeGrid, theta: &[f64]) -> Result<(f64, f64)> {
    if phi.m() != 3 || theta.len() != 3 {
        return invalid("direct evaluation is for m = 3");
    }
    check_simplex(theta)?;
    if 1.0 + theta[0] - theta[1] < 1e-14 {
        return invalid("B undefined at the singular corner (-1, 0, 0)");
    }
    let t = [theta[0], theta[1], theta[2]];
    Ok((b0_direct_m3(phi, &t), b1_direct_m3(phi, &t)))
}

/// B for m = 2 on the diagonal theta1 = theta2 = c, where the conjugate
/// route is unavailable: B0 = -c phi(c, 0) and B1 the single integral of
/// (c - t) phi(t, c) over [-1, c].
fn b_diag_m2(phi: &WedgeGrid, j: usize) -> (f64, f64) {
    let grid = phi.grid();
    let n = grid.n_sub();
    let h = grid.h();
    let idx = phi.indexer();
    let c = grid.node(j);
    let b0 = -c * phi.values()[idx.rank(&[j, n])];
    let mut b1 = 0.0;
    for cell in 0..j {
        let w0 = c - grid.node(cell);
        let w1 = c - grid.node(cell + 1);
        let g0 = phi.values()[idx.rank(&[cell, j])];
        let g1 = phi.values()[idx.rank(&[cell + 1, j])];
        b1 += product_cell(h, w0, w1, g0, g1);
    }
    (b0, b1)
}

/// The two halves of B.  Away from the zero set of the reference function
/// the operator is evaluated through its exact conjugation with A (so the
/// conjugacy identity holds to rounding); at simplex points where the
/// reference function vanishes the degenerate average-integral forms are
/// used.  For m = 3 the singular corner (-1, 0, 0) is left unset (NaN).
pub fn apply_b_parts(phi: &WedgeGrid) -> Result<(WedgeGrid, WedgeGrid)> {
    let m = phi.m();
    if m != 2 && m != 3 {
        return Err(Error::Unsupported(format!(
            "B is implemented for m in {{2, 3}}, got {m}"
        )));
    }
    let grid = phi.grid();
    let n = grid.n_sub();
    let u = u_m_grid(m, grid)?;
    let weighted: Vec<f64> = u
        .values()
        .iter()
        .zip(phi.values())
        .map(|(uv, pv)| if *uv == 0.0 { 0.0 } else { uv * pv })
        .collect();
    let (a0, a1) = apply_a_parts(&WedgeGrid::new(m, grid, weighted)?)?;
    let idx = phi.indexer();
    let mut b0 = vec![0.0; idx.count()];
    let mut b1 = vec![0.0; idx.count()];
    let mut theta = vec![0.0; m];
    idx.for_each(|r, tuple| {
        let uv = u.values()[r];
        if uv != 0.0 {
            b0[r] = a0.values()[r] / uv;
            b1[r] = a1.values()[r] / uv;
            return;
        }
        if m == 2 {
            let (v0, v1) = b_diag_m2(phi, tuple[0]);
            b0[r] = v0;
            b1[r] = v1;
            return;
        }
        // m = 3 degenerate points
        if tuple[0] == 0 && tuple[1] == n && tuple[2] == n {
            b0[r] = f64::NAN;
            b1[r] = f64::NAN;
            return;
        }
        for (c, &j) in theta.iter_mut().zip(tuple.iter()) {
            *c = grid.node(j);
        }
        let t = [theta[0], theta[1], theta[2]];
        b0[r] = b0_direct_m3(phi, &t);
        b1[r] = b1_direct_m3(phi, &t);
    });
    Ok((
        WedgeGrid::new(m, grid, b0)?,
        WedgeGrid::new(m, grid, b1)?,
    ))
}

/// B = B0 + B1.
pub fn apply_b(phi: &WedgeGrid) -> Result<WedgeGrid> {
    let (b0, b1) = apply_b_parts(phi)?;
    let values = b0
        .values()
        .iter()
        .zip(b1.values())
        .map(|(x, y)| x + y)
        .collect();
    WedgeGrid::new(phi.m(), phi.grid(), values)
}

/// Result of splitting a B image into its bounded discontinuity shapes
/// and a continuous remainder vanishing at the singular corner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvDecomposition {
    pub q0: f64,
    pub q1: f64,
    pub n_sub: usize,
    /// Remainder values on the simplex grid; the singular corner slot
    /// holds the continuity limit 0.
    pub psi: Vec<f64>,
    /// (epsilon, psi at the probe point (-1+eps, -eps^2, 0)).
    pub probes: Vec<(f64, f64)>,
    /// Largest reconstruction error of q0 nu0 + q1 nu1 + psi against the
    /// B image over interior grid points.
    pub reconstruction_error: f64,
    pub probes_decay: bool,
}

/// Splits B phi as q0 nu0 + q1 nu1 + psi with
/// q0 = (1/2) int t^2 (1+t) phi(t,0,0) dt and
/// q1 = int t^2 (1+t) phi(-1,t,0) dt, both exact for the sampled data,
/// and checks that psi decays along the probe family approaching the
/// singular corner.
pub fn decompose_cv(phi: &WedgeGrid) -> Result<CvDecomposition> {
    if phi.m() != 3 {
        return invalid("decomposition is defined for m = 3");
    }
    let grid = phi.grid();
    let n = grid.n_sub();
    let h = grid.h();
    let idx = phi.indexer();
    // slices phi(t, 0, 0) and phi(-1, t, 0)
    let slice_top: Vec<f64> = (0..=n)
        .map(|j| phi.values()[idx.rank(&[j, n, n])])
        .collect();
    let slice_left: Vec<f64> = (0..=n)
        .map(|j| phi.values()[idx.rank(&[0, j, n])])
        .collect();
    let wfun = |t: f64| t * t * (1.0 + t);
    let q0 = 0.5 * integrate_weighted_samples(&slice_top, -1.0, h, -1.0, 0.0, wfun)?;
    let q1 = integrate_weighted_samples(&slice_left, -1.0, h, -1.0, 0.0, wfun)?;

    let b = apply_b(phi)?;
    let mut psi = vec![0.0; idx.count()];
    let mut theta = [0.0f64; 3];
    let mut reconstruction_error = 0.0f64;
    idx.for_each(|r, tuple| {
        if tuple[0] == 0 && tuple[1] == n && tuple[2] == n {
            psi[r] = 0.0; // continuity limit at the singular corner
            return;
        }
        for (c, &j) in theta.iter_mut().zip(tuple.iter()) {
            *c = grid.node(j);
        }
        let (nu0, nu1) = nu_eval(&theta).expect("nondegenerate point");
        psi[r] = b.values()[r] - q0 * nu0 - q1 * nu1;
        let recon = q0 * nu0 + q1 * nu1 + psi[r];
        reconstruction_error = reconstruction_error.max((recon - b.values()[r]).abs());
    });

    // probe the remainder along (-1+eps, -eps^2, 0) over three decades
    let mut probes = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3] {
        let t = [-1.0 + eps, -eps * eps, 0.0];
        let (b0, b1) = b_direct_eval_m3(phi, &t)?;
        let (nu0, nu1) = nu_eval(&t)?;
        probes.push((eps, b0 + b1 - q0 * nu0 - q1 * nu1));
    }
    let probes_decay = probes.windows(2).all(|w| w[1].1.abs() < w[0].1.abs() + 1e-14);
    Ok(CvDecomposition {
        q0,
        q1,
        n_sub: n,
        psi,
        probes,
        reconstruction_error,
        probes_decay,
    })
}

/// Interior simplex points for ratio reports: one cell away from every
/// coordinate-equality face and from the boundary faces, where the
/// reference function vanishes and the ratio would be pure noise.
pub fn is_interior(tuple: &[usize], n: usize) -> bool {
    tuple[0] >= 1
        && tuple[tuple.len() - 1] <= n - 1
        && tuple.windows(2).all(|w| w[1] > w[0])
}

const INTERIOR_RULE: &str = "coordinates pairwise distinct and one cell off the boundary";

/// Iterates A on a nonnegative input and reports the extremes of the
/// ratio against the reference function over interior points.  Orders
/// m >= 4 are exploratory.
pub fn u0_ratio(phi: &WedgeGrid, k: usize) -> Result<RatioReport> {
    let m = phi.m();
    if m < 2 {
        return invalid("ratio report needs m >= 2");
    }
    if phi.values().iter().any(|&v| v < 0.0) {
        return invalid("input must be nonnegative on the simplex grid");
    }
    if phi.sup_norm() == 0.0 {
        return invalid("input must not be identically zero");
    }
    if k < 1 {
        return invalid("k must be at least 1");
    }
    let warning = if k < m - 1 {
        Some(format!(
            "k = {k} below m - 1 = {}; the pointwise ceiling needs k >= m - 1",
            m - 1
        ))
    } else {
        None
    };
    let mut cur = phi.clone();
    for _ in 0..k {
        cur = apply_a(&cur)?;
    }
    let u = u_m_grid(m, phi.grid())?;
    let n = phi.grid().n_sub();
    let idx = phi.indexer();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    idx.for_each(|r, tuple| {
        if !is_interior(tuple, n) {
            return;
        }
        let ratio = cur.values()[r] / u.values()[r];
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
    });
    let passed = min_ratio > 0.0 && min_ratio <= max_ratio && max_ratio.is_finite();
    Ok(RatioReport {
        k,
        min_ratio,
        max_ratio,
        interior_rule: INTERIOR_RULE.to_string(),
        passed,
        exploratory: m >= 4,
        warning,
    })
}

/// Certifies the pointwise windows 0 <= A_i u^q <= u^{q+1} and
/// 0 <= A_i u <= u at every simplex grid point, for i in {0, 1}.
pub fn pointwise_bound_check(m: usize, q: usize, grid: Grid) -> Result<CertReport> {
    if m < 2 {
        return invalid("bound check needs m >= 2");
    }
    if q > m - 2 {
        return invalid(format!("q = {q} outside 0..={}", m - 2));
    }
    let uq = u_m_q_grid(m, grid, q)?;
    let uq1 = u_m_q_grid(m, grid, q + 1)?;
    let um = u_m_grid(m, grid)?;
    let (a0q, a1q) = apply_a_parts(&uq)?;
    let (a0m, a1m) = apply_a_parts(&um)?;
    let scale = uq1.sup_norm().max(um.sup_norm()).max(1e-300);
    let mut min_slack = f64::INFINITY;
    let mut argmin = vec![0usize; m];
    let idx = uq.indexer();
    idx.for_each(|r, tuple| {
        for part in [&a0q, &a1q] {
            let v = part.values()[r];
            let slack = v.min(uq1.values()[r] - v);
            if slack < min_slack {
                min_slack = slack;
                argmin.copy_from_slice(tuple);
            }
        }
        for part in [&a0m, &a1m] {
            let v = part.values()[r];
            let slack = v.min(um.values()[r] - v);
            if slack < min_slack {
                min_slack = slack;
                argmin.copy_from_slice(tuple);
            }
        }
    });
    let tolerance = 1e-9 * scale;
    Ok(CertReport::new(min_slack, tolerance)
        .with_argmin(argmin)
        .with_config(serde_json::json!({"m": m, "q": q, "n_sub": grid.n_sub()})))
}

/// Iterates B on a nonnegative input and certifies a strictly positive
/// floor over the simplex grid (the singular corner excluded for m = 3).
pub fn b_floor_check(phi: &WedgeGrid, k: usize) -> Result<CertReport> {
    let m = phi.m();
    if m != 2 && m != 3 {
        return Err(Error::Unsupported(format!(
            "B is implemented for m in {{2, 3}}, got {m}"
        )));
    }
    let k_min = if m == 2 { 3 } else { 5 };
    if k < k_min {
        return invalid(format!("k = {k} below the floor threshold {k_min} for m = {m}"));
    }
    if phi.values().iter().any(|&v| v < 0.0) {
        return invalid("input must be nonnegative on the simplex grid");
    }
    if phi.sup_norm() == 0.0 {
        return invalid("input must not be identically zero");
    }
    let mut cur = phi.clone();
    for _ in 0..k {
        cur = apply_b(&cur)?;
    }
    let idx = cur.indexer();
    let mut floor = f64::INFINITY;
    let mut argmin = vec![0usize; m];
    idx.for_each(|r, tuple| {
        let v = cur.values()[r];
        if v.is_finite() && v < floor {
            floor = v;
            argmin.copy_from_slice(tuple);
        }
    });
    let mut report = CertReport::new(floor, 0.0)
        .with_argmin(argmin)
        .with_config(serde_json::json!({"m": m, "k": k, "n_sub": phi.grid().n_sub()}));
    // the certified clause is strict positivity, not just nonnegativity
    report.passed = floor > 0.0;
    Ok(report)
}
