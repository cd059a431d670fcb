//! Grids on [-1,0], segment functions, antisymmetric functions on the
//! ordered simplex, and the piecewise-linear quadrature primitives that
//! every other module consumes.
//!
//! Segments are piecewise-linear interpolants of their node samples, and
//! every integral in this crate is the closed-form integral of such an
//! interpolant (optionally against a polynomial weight).  Evolution times
//! are restricted to integer multiples of the node spacing so grid nodes
//! always map to grid nodes.

use crate::error::{capacity, invalid, Result};

/// Tolerance used when checking that a real time is an integer multiple
/// of the node spacing.
const ALIGN_TOL: f64 = 1e-9;

/// Uniform grid on [-1,0] with `n_sub` subintervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_sub: usize,
}

impl Grid {
    pub fn new(n_sub: usize) -> Result<Grid> {
        if n_sub < 2 {
            return invalid(format!("n_sub must be at least 2, got {n_sub}"));
        }
        Ok(Grid { n_sub })
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    /// Node spacing h = 1/n_sub.
    pub fn h(&self) -> f64 {
        1.0 / self.n_sub as f64
    }

    /// The j-th node, -1 + j*h.  Exact at both endpoints.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_sub as f64 - 1.0
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_sub).map(|j| self.node(j)).collect()
    }

    /// Converts a time to an integer number of grid steps, rejecting
    /// misaligned values.
    pub fn align(&self, t: f64) -> Result<i64> {
        let raw = t * self.n_sub as f64;
        let rounded = raw.round();
        if (raw - rounded).abs() > ALIGN_TOL * (1.0 + raw.abs()) {
            return invalid(format!(
                "time {t} is not an integer multiple of h = 1/{}",
                self.n_sub
            ));
        }
        Ok(rounded as i64)
    }

    /// Time corresponding to an integer number of grid steps.
    pub fn time_of(&self, step: i64) -> f64 {
        step as f64 / self.n_sub as f64
    }

    /// Maps a coordinate in [-1,0] to its node index, rejecting off-grid values.
    pub fn node_index(&self, theta: f64) -> Result<usize> {
        let j = self.align(theta + 1.0)?;
        if j < 0 || j as usize > self.n_sub {
            return invalid(format!("coordinate {theta} outside [-1,0]"));
        }
        Ok(j as usize)
    }
}

/// A sampled function on [-1,0]: the phase-space element of the delay
/// equation, interpreted as the piecewise-linear interpolant of `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    grid: Grid,
    values: Vec<f64>,
}

impl Segment {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Segment> {
        if values.len() != grid.n_sub() + 1 {
            return invalid(format!(
                "segment needs {} values, got {}",
                grid.n_sub() + 1,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("segment values must be finite");
        }
        Ok(Segment { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Segment> {
        Segment::new(grid, (0..=grid.n_sub()).map(|j| f(grid.node(j))).collect())
    }

    pub fn constant(grid: Grid, c: f64) -> Segment {
        Segment {
            grid,
            values: vec![c; grid.n_sub() + 1],
        }
    }

    /// Hat segment: 1 at node `j`, 0 at every other node.
    pub fn hat(grid: Grid, j: usize) -> Segment {
        let mut values = vec![0.0; grid.n_sub() + 1];
        values[j] = 1.0;
        Segment { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear evaluation at any point of [-1,0].
    pub fn eval(&self, theta: f64) -> f64 {
        eval_linear(&self.values, -1.0, self.grid.h(), theta)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Evaluates the piecewise-linear interpolant of uniform samples starting
/// at `x0` with spacing `h`, clamping to the sampled span.
pub(crate) fn eval_linear(samples: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let n = samples.len() - 1;
    let u = (x - x0) / h;
    if u <= 0.0 {
        return samples[0];
    }
    if u >= n as f64 {
        return samples[n];
    }
    let k = (u.floor() as usize).min(n - 1);
    let frac = u - k as f64;
    samples[k] * (1.0 - frac) + samples[k + 1] * frac
}

/// Exact integral of the piecewise-linear interpolant of `samples` over
/// [a,b].  Partial end cells are included in closed form; cells are summed
/// left to right so the result does not depend on caller-side parallelism.
pub fn integrate_partial_samples(samples: &[f64], x0: f64, h: f64, a: f64, b: f64) -> Result<f64> {
    let n = samples.len() - 1;
    let hi = x0 + n as f64 * h;
    if a > b {
        return invalid(format!("integration bounds reversed: {a} > {b}"));
    }
    let tol = ALIGN_TOL * (1.0 + a.abs() + b.abs());
    if a < x0 - tol || b > hi + tol {
        return invalid(format!(
            "integration range [{a},{b}] outside sampled span [{x0},{hi}]"
        ));
    }
    let a = a.max(x0);
    let b = b.min(hi);
    let k0 = (((a - x0) / h).floor() as usize).min(n.saturating_sub(1));
    let k1 = (((b - x0) / h).ceil() as usize).max(1).min(n);
    let mut total = 0.0;
    for k in k0..k1 {
        let xl = x0 + k as f64 * h;
        let xr = x0 + (k + 1) as f64 * h;
        let aa = a.max(xl);
        let bb = b.min(xr);
        if bb <= aa {
            continue;
        }
        let va = eval_cell(samples[k], samples[k + 1], xl, h, aa);
        let vb = eval_cell(samples[k], samples[k + 1], xl, h, bb);
        total += 0.5 * (va + vb) * (bb - aa);
    }
    Ok(total)
}

fn eval_cell(v0: f64, v1: f64, xl: f64, h: f64, x: f64) -> f64 {
    let u = (x - xl) / h;
    v0 * (1.0 - u) + v1 * u
}

/// Exact integral of the piecewise-linear interpolant of a segment over [a,b].
pub fn integrate_partial(seg: &Segment, a: f64, b: f64) -> Result<f64> {
    integrate_partial_samples(seg.values(), -1.0, seg.grid().h(), a, b)
}

/// Gauss-Legendre 3-point abscissae/weights on [-1,1]; exact to degree 5,
/// which covers a cubic weight against linear sample data.
const GAUSS3: [(f64, f64); 3] = [
    (-0.7745966692414834, 0.5555555555555556),
    (0.0, 0.8888888888888888),
    (0.7745966692414834, 0.5555555555555556),
];

/// Integral of w(x) times the piecewise-linear interpolant of `samples`
/// over [a,b], exact whenever w is a polynomial of degree at most four.
pub fn integrate_weighted_samples(
    samples: &[f64],
    x0: f64,
    h: f64,
    a: f64,
    b: f64,
    w: impl Fn(f64) -> f64,
) -> Result<f64> {
    let n = samples.len() - 1;
    let hi = x0 + n as f64 * h;
    if a > b {
        return invalid(format!("integration bounds reversed: {a} > {b}"));
    }
    let tol = ALIGN_TOL * (1.0 + a.abs() + b.abs());
    if a < x0 - tol || b > hi + tol {
        return invalid(format!(
            "integration range [{a},{b}] outside sampled span [{x0},{hi}]"
        ));
    }
    let a = a.max(x0);
    let b = b.min(hi);
    let k0 = (((a - x0) / h).floor() as usize).min(n.saturating_sub(1));
    let k1 = (((b - x0) / h).ceil() as usize).max(1).min(n);
    let mut total = 0.0;
    for k in k0..k1 {
        let xl = x0 + k as f64 * h;
        let xr = x0 + (k + 1) as f64 * h;
        let aa = a.max(xl);
        let bb = b.min(xr);
        if bb <= aa {
            continue;
        }
        let mid = 0.5 * (aa + bb);
        let half = 0.5 * (bb - aa);
        let mut cell = 0.0;
        for (t, wt) in GAUSS3 {
            let x = mid + half * t;
            cell += wt * w(x) * eval_cell(samples[k], samples[k + 1], xl, h, x);
        }
        total += cell * half;
    }
    Ok(total)
}

/// Closed-form integral over one grid cell of the product of two linear
/// factors given by their endpoint values: weight (w0,w1) and data (g0,g1).
#[inline]
pub(crate) fn product_cell(h: f64, w0: f64, w1: f64, g0: f64, g1: f64) -> f64 {
    h * (w0 * (g0 / 3.0 + g1 / 6.0) + w1 * (g0 / 6.0 + g1 / 3.0))
}

/// Index map for monotone (nondecreasing) tuples over node indices
/// {0,...,n}, in lexicographic order.  These tuples are the grid points of
/// the ordered simplex, and the same machinery indexes the intermediate
/// tables of the iterated-integral cascades.
#[derive(Debug, Clone)]
pub struct SimplexIndexer {
    m: usize,
    n: usize,
    // suffix[len][v] = number of nondecreasing len-tuples with values in [v, n]
    suffix: Vec<Vec<usize>>,
}

impl SimplexIndexer {
    pub fn new(m: usize, n: usize) -> SimplexIndexer {
        let mut suffix = vec![vec![1usize; n + 2]; m + 1];
        for len in 1..=m {
            suffix[len][n + 1] = 0;
            for v in (0..=n).rev() {
                suffix[len][v] = suffix[len][v + 1] + suffix[len - 1][v];
            }
        }
        SimplexIndexer { m, n, suffix }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// binomial(n + m, m)
    pub fn count(&self) -> usize {
        self.suffix[self.m][0]
    }

    /// Lexicographic rank of a monotone tuple.
    pub fn rank(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.m);
        let mut r = 0;
        let mut prev = 0;
        for (i, &t) in tuple.iter().enumerate() {
            debug_assert!(t >= prev && t <= self.n);
            let len = self.m - i - 1;
            // tuples whose i-th coordinate is v < t, given the prefix
            r += self.suffix[len + 1][prev] - self.suffix[len + 1][t];
            prev = t;
        }
        r
    }

    pub fn unrank(&self, mut r: usize, out: &mut Vec<usize>) {
        out.clear();
        let mut prev = 0;
        for i in 0..self.m {
            let len = self.m - i - 1;
            let mut v = prev;
            loop {
                let below = self.suffix[len][v];
                if r < below {
                    break;
                }
                r -= below;
                v += 1;
            }
            out.push(v);
            prev = v;
        }
    }

    /// Iterates tuples in ascending lexicographic order.
    pub fn iter(&self) -> SimplexTupleIter<'_> {
        SimplexTupleIter {
            idx: self,
            tuple: None,
        }
    }

    /// Calls f(rank, tuple) for every tuple in ascending lexicographic
    /// order without allocating per tuple.
    pub fn for_each(&self, mut f: impl FnMut(usize, &[usize])) {
        if self.m == 0 {
            return;
        }
        let mut tuple = vec![0usize; self.m];
        let mut r = 0usize;
        loop {
            f(r, &tuple);
            r += 1;
            // successor: bump the rightmost coordinate below n
            let mut i = self.m;
            while i > 0 && tuple[i - 1] == self.n {
                i -= 1;
            }
            if i == 0 {
                return;
            }
            let v = tuple[i - 1] + 1;
            for c in tuple.iter_mut().skip(i - 1) {
                *c = v;
            }
        }
    }

    /// Calls f(rank, tuple) in descending lexicographic order.
    pub fn for_each_desc(&self, mut f: impl FnMut(usize, &[usize])) {
        if self.m == 0 {
            return;
        }
        let mut tuple = vec![self.n; self.m];
        let mut r = self.count();
        loop {
            r -= 1;
            f(r, &tuple);
            // predecessor: decrement the rightmost coordinate that can
            // drop, reset the suffix to n
            let mut i = self.m;
            loop {
                if i == 0 {
                    return;
                }
                let floor = if i >= 2 { tuple[i - 2] } else { 0 };
                if tuple[i - 1] > floor {
                    break;
                }
                i -= 1;
            }
            tuple[i - 1] -= 1;
            for c in tuple.iter_mut().skip(i) {
                *c = self.n;
            }
        }
    }
}

pub struct SimplexTupleIter<'a> {
    idx: &'a SimplexIndexer,
    tuple: Option<Vec<usize>>,
}

impl<'a> Iterator for SimplexTupleIter<'a> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        match &mut self.tuple {
            None => {
                if self.idx.m == 0 {
                    return None;
                }
                let t = vec![0; self.idx.m];
                self.tuple = Some(t.clone());
                Some(t)
            }
            Some(t) => {
                // rightmost coordinate that can still grow
                let mut i = self.idx.m;
                while i > 0 {
                    if t[i - 1] < self.idx.n {
                        break;
                    }
                    i -= 1;
                }
                if i == 0 {
                    return None;
                }
                let v = t[i - 1] + 1;
                for c in t.iter_mut().skip(i - 1) {
                    *c = v;
                }
                Some(t.clone())
            }
        }
    }
}

/// All grid points of the ordered m-simplex, in lexicographic order.
pub fn simplex_points(m: usize, grid: Grid) -> Result<Vec<Vec<usize>>> {
    if m < 1 || m > 6 {
        return invalid(format!("simplex order m = {m} outside supported range 1..=6"));
    }
    let idx = SimplexIndexer::new(m, grid.n_sub());
    Ok(idx.iter().collect())
}

/// An m-variable function represented by its values at the grid points of
/// the ordered simplex, stored in lexicographic monotone-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeGrid {
    m: usize,
    grid: Grid,
    values: Vec<f64>,
}

impl WedgeGrid {
    pub fn new(m: usize, grid: Grid, values: Vec<f64>) -> Result<WedgeGrid> {
        if m < 1 || m > 6 {
            return invalid(format!("wedge order m = {m} outside supported range 1..=6"));
        }
        let idx = SimplexIndexer::new(m, grid.n_sub());
        if values.len() != idx.count() {
            return invalid(format!(
                "wedge grid needs {} values for m = {m}, n_sub = {}, got {}",
                idx.count(),
                grid.n_sub(),
                values.len()
            ));
        }
        Ok(WedgeGrid { m, grid, values })
    }

    pub fn from_fn(m: usize, grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<WedgeGrid> {
        if m < 1 || m > 6 {
            return invalid(format!("wedge order m = {m} outside supported range 1..=6"));
        }
        let idx = SimplexIndexer::new(m, grid.n_sub());
        let mut values = Vec::with_capacity(idx.count());
        let mut theta = vec![0.0; m];
        for tuple in idx.iter() {
            for (c, &j) in theta.iter_mut().zip(tuple.iter()) {
                *c = grid.node(j);
            }
            values.push(f(&theta));
        }
        WedgeGrid::new(m, grid, values)
    }

    pub fn zeros(m: usize, grid: Grid) -> Result<WedgeGrid> {
        let idx = SimplexIndexer::new(m, grid.n_sub());
        WedgeGrid::new(m, grid, vec![0.0; idx.count()])
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

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn indexer(&self) -> SimplexIndexer {
        SimplexIndexer::new(self.m, self.grid.n_sub())
    }

    pub fn value_at(&self, tuple: &[usize]) -> f64 {
        self.values[self.indexer().rank(tuple)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Piecewise-linear (simplicial) interpolation at a sorted point of the
    /// simplex.  The containing cube cell is split along monotone lattice
    /// paths so every interpolation vertex is itself a simplex grid point.
    pub fn interp_sorted(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.m);
        let n = self.grid.n_sub();
        let h = self.grid.h();
        let idx = self.indexer();
        let mut base = vec![0usize; self.m];
        let mut frac = vec![0.0f64; self.m];
        for i in 0..self.m {
            let u = ((theta[i] + 1.0) / h).clamp(0.0, n as f64);
            let mut k = u.floor() as usize;
            if k >= n {
                k = n - 1;
            }
            base[i] = k;
            frac[i] = u - k as f64;
        }
        // order axes by descending fractional part, ties broken by
        // descending axis index so intermediate vertices stay monotone
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(b.cmp(&a)));
        let mut vertex = base.clone();
        let mut value = 0.0;
        let mut prev_frac = 1.0;
        let mut current = self.values[idx.rank(&vertex)];
        for &axis in &order {
            let f = frac[axis];
            value += current * (prev_frac - f);
            vertex[axis] += 1;
            current = self.values[idx.rank(&vertex)];
            prev_frac = f;
        }
        value + current * prev_frac
    }
}

/// Sorts a tuple of grid nodes into the simplex, evaluates there, and
/// applies the sign of the sorting permutation.  Returns 0 when two
/// coordinates coincide, as the antisymmetric extension demands.
pub fn antisym_eval(phi: &WedgeGrid, theta: &[f64]) -> Result<f64> {
    if theta.len() != phi.m() {
        return invalid(format!(
            "expected {} coordinates, got {}",
            phi.m(),
            theta.len()
        ));
    }
    let mut indices = Vec::with_capacity(theta.len());
    for &c in theta {
        indices.push(phi.grid().node_index(c)?);
    }
    let mut sign = 1.0;
    // insertion sort, counting transpositions
    for i in 1..indices.len() {
        let mut j = i;
        while j > 0 && indices[j - 1] > indices[j] {
            indices.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if indices.windows(2).any(|w| w[0] == w[1]) {
        return Ok(0.0);
    }
    Ok(sign * phi.value_at(&indices))
}

/// A sampled solution x(t) starting from time tau with history on
/// [tau-1, tau].  Sample k holds x(tau - 1 + k*h).
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    tau_step: i64,
    samples: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn from_parts(grid: Grid, tau_step: i64, samples: Vec<f64>) -> Trajectory {
        debug_assert!(samples.len() >= grid.n_sub() + 1);
        Trajectory {
            grid,
            tau_step,
            samples,
        }
    }

    /// Builds a trajectory by sampling a closed-form solution on
    /// [tau - 1, t_end].
    pub fn from_fn(grid: Grid, tau: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Result<Trajectory> {
        let tau_step = grid.align(tau)?;
        let end_step = grid.align(t_end)?;
        if end_step < tau_step {
            return invalid(format!("t_end {t_end} earlier than tau {tau}"));
        }
        let n = grid.n_sub() as i64;
        let len = (end_step - tau_step + n) as usize + 1;
        let samples = (0..len)
            .map(|k| f(grid.time_of(tau_step - n + k as i64)))
            .collect();
        Ok(Trajectory {
            grid,
            tau_step,
            samples,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Start time tau of the trajectory (history begins at tau - 1).
    pub fn tau(&self) -> f64 {
        self.grid.time_of(self.tau_step)
    }

    pub fn end_time(&self) -> f64 {
        self.grid
            .time_of(self.tau_step - self.grid.n_sub() as i64 + self.samples.len() as i64 - 1)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn value_at_step(&self, step: i64) -> Result<f64> {
        let k = step - (self.tau_step - self.grid.n_sub() as i64);
        if k < 0 || k as usize >= self.samples.len() {
            return invalid(format!("time step {step} outside trajectory span"));
        }
        Ok(self.samples[k as usize])
    }

    /// Extracts the segment at a grid-aligned time t covering [t-1, t].
    pub fn segment_at(&self, t: f64) -> Result<Segment> {
        let step = self.grid.align(t)?;
        let n = self.grid.n_sub() as i64;
        let lo = step - n - (self.tau_step - n);
        if lo < 0 || (lo + n) as usize >= self.samples.len() {
            return invalid(format!("segment at t = {t} not covered by trajectory"));
        }
        Segment::new(
            self.grid,
            self.samples[lo as usize..=(lo + n) as usize].to_vec(),
        )
    }

    /// Serializes as CSV rows `t,x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        let n = self.grid.n_sub() as i64;
        for (k, v) in self.samples.iter().enumerate() {
            let t = self.grid.time_of(self.tau_step - n + k as i64);
            out.push_str(&format!("{t:.17},{v:.17}\n"));
        }
        out
    }
}

/// Wedge-grid function built from m solution trajectories at time t: the
/// value at a simplex point is the m-by-m determinant of solution values,
/// computed by pivoted elimination.
pub fn wedge_from_solutions(trajs: &[Trajectory], t: f64) -> Result<WedgeGrid> {
    let m = trajs.len();
    if m == 0 || m > 6 {
        return invalid(format!("need between 1 and 6 trajectories, got {m}"));
    }
    let grid = trajs[0].grid();
    if trajs.iter().any(|tr| tr.grid() != grid) {
        return invalid("trajectories must share a grid");
    }
    let step = grid.align(t)?;
    let n = grid.n_sub() as i64;
    for tr in trajs {
        tr.value_at_step(step - n)?;
        tr.value_at_step(step)?;
    }
    let idx = SimplexIndexer::new(m, grid.n_sub());
    let mut values = Vec::with_capacity(idx.count());
    let mut mat = vec![0.0f64; m * m];
    for tuple in idx.iter() {
        for (col, &j) in tuple.iter().enumerate() {
            for (row, tr) in trajs.iter().enumerate() {
                mat[row * m + col] = tr.value_at_step(step - n + j as i64)?;
            }
        }
        values.push(det_in_place(&mut mat, m));
    }
    WedgeGrid::new(m, grid, values)
}

/// Determinant by Gaussian elimination with partial pivoting; the input
/// buffer is clobbered.
pub(crate) fn det_in_place(mat: &mut [f64], m: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..m {
        let mut piv = k;
        for r in k + 1..m {
            if mat[r * m + k].abs() > mat[piv * m + k].abs() {
                piv = r;
            }
        }
        if mat[piv * m + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for c in 0..m {
                mat.swap(k * m + c, piv * m + c);
            }
            det = -det;
        }
        det *= mat[k * m + k];
        for r in k + 1..m {
            let f = mat[r * m + k] / mat[k * m + k];
            for c in k..m {
                mat[r * m + c] -= f * mat[k * m + c];
            }
        }
    }
    det
}
