//! The scalar delay equation x'(t) = -alpha(t) x(t) - beta(t) x(t-1), its
//! reduction to y'(t) = -b(t) y(t-1) by an integrating factor, and the
//! method-of-steps solution operator on segments.

use crate::error::{invalid, Result};
use crate::segfun::{integrate_partial_samples, product_cell, Grid, Segment, Trajectory};
use serde::{Deserialize, Serialize};

/// Declared almost-everywhere sign of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignClass {
    NonNeg,
    NonPos,
    None,
}

/// A gamma-periodic, locally integrable coefficient, piecewise linear from
/// samples at grid spacing.  The period must be an integer multiple of h.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCoefficient {
    grid: Grid,
    period_steps: usize,
    samples: Vec<f64>,
    sign_class: SignClass,
}

impl PeriodicCoefficient {
    pub fn from_samples(
        grid: Grid,
        gamma: f64,
        samples: Vec<f64>,
        sign_class: SignClass,
    ) -> Result<PeriodicCoefficient> {
        let period_steps = grid.align(gamma)?;
        if period_steps <= 0 {
            return invalid(format!("period must be positive, got {gamma}"));
        }
        let period_steps = period_steps as usize;
        if samples.len() != period_steps {
            return invalid(format!(
                "period of {gamma} at n_sub = {} needs {period_steps} samples, got {}",
                grid.n_sub(),
                samples.len()
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return invalid("coefficient samples must be finite");
        }
        match sign_class {
            SignClass::NonNeg if samples.iter().any(|&v| v < 0.0) => {
                return invalid("sign class nonneg violated by a negative sample")
            }
            SignClass::NonPos if samples.iter().any(|&v| v > 0.0) => {
                return invalid("sign class nonpos violated by a positive sample")
            }
            _ => {}
        }
        Ok(PeriodicCoefficient {
            grid,
            period_steps,
            samples,
            sign_class,
        })
    }

    pub fn constant(grid: Grid, gamma: f64, c: f64) -> Result<PeriodicCoefficient> {
        let sign_class = if c >= 0.0 {
            SignClass::NonNeg
        } else {
            SignClass::NonPos
        };
        let steps = grid.align(gamma)?.max(0) as usize;
        PeriodicCoefficient::from_samples(grid, gamma, vec![c; steps], sign_class)
    }

    /// mean + amplitude * sin(2 pi frequency t); frequency * gamma must be
    /// an integer for periodicity.
    pub fn sinusoid(
        grid: Grid,
        gamma: f64,
        mean: f64,
        amplitude: f64,
        frequency: f64,
    ) -> Result<PeriodicCoefficient> {
        let cycles = frequency * gamma;
        if (cycles - cycles.round()).abs() > 1e-9 {
            return invalid(format!(
                "sinusoid frequency {frequency} is not periodic with period {gamma}"
            ));
        }
        let steps = grid.align(gamma)?.max(0) as usize;
        let samples: Vec<f64> = (0..steps)
            .map(|k| {
                let t = grid.time_of(k as i64);
                mean + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
            })
            .collect();
        let sign_class = if samples.iter().all(|&v| v >= 0.0) {
            SignClass::NonNeg
        } else if samples.iter().all(|&v| v <= 0.0) {
            SignClass::NonPos
        } else {
            SignClass::None
        };
        PeriodicCoefficient::from_samples(grid, gamma, samples, sign_class)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.grid.time_of(self.period_steps as i64)
    }

    pub fn period_steps(&self) -> usize {
        self.period_steps
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sign_class(&self) -> SignClass {
        self.sign_class
    }

    /// Value at an exact grid step (periodic reduction is exact integer
    /// arithmetic).
    pub fn eval_step(&self, step: i64) -> f64 {
        self.samples[step.rem_euclid(self.period_steps as i64) as usize]
    }

    /// Piecewise-linear evaluation at an arbitrary time.
    pub fn eval(&self, t: f64) -> f64 {
        let gamma = self.gamma();
        let mut r = t.rem_euclid(gamma);
        if r >= gamma {
            r = 0.0;
        }
        let u = r / self.grid.h();
        let k = (u.floor() as usize).min(self.period_steps - 1);
        let frac = u - k as f64;
        let v0 = self.samples[k];
        let v1 = self.samples[(k + 1) % self.period_steps];
        v0 * (1.0 - frac) + v1 * frac
    }

    /// Exact integral of the periodic interpolant over one period.
    pub fn integral_over_period(&self) -> f64 {
        let mut closed: Vec<f64> = self.samples.clone();
        closed.push(self.samples[0]);
        integrate_partial_samples(&closed, 0.0, self.grid.h(), 0.0, self.gamma())
            .expect("period integral is always in span")
    }

    /// Exact integral of |coefficient| over one period; requires a declared
    /// sign class so the interpolant has one sign.
    pub fn abs_integral_over_period(&self) -> Result<f64> {
        match self.sign_class {
            SignClass::NonNeg => Ok(self.integral_over_period()),
            SignClass::NonPos => Ok(-self.integral_over_period()),
            SignClass::None => invalid("absolute integral needs a declared sign class"),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (k, v) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:.17},{v:.17}\n", self.grid.time_of(k as i64)));
        }
        out
    }
}

/// The untransformed equation x'(t) = -alpha(t) x(t) - beta(t) x(t-1).
#[derive(Debug, Clone)]
pub struct DdeSystem {
    pub alpha: PeriodicCoefficient,
    pub beta: PeriodicCoefficient,
}

impl DdeSystem {
    pub fn new(alpha: PeriodicCoefficient, beta: PeriodicCoefficient) -> Result<DdeSystem> {
        if alpha.grid() != beta.grid() || alpha.period_steps() != beta.period_steps() {
            return invalid("alpha and beta must share grid and period");
        }
        Ok(DdeSystem { alpha, beta })
    }

    pub fn grid(&self) -> Grid {
        self.alpha.grid()
    }

    pub fn gamma(&self) -> f64 {
        self.alpha.gamma()
    }

    /// Checks the sign hypothesis (-1)^m beta(t) >= 0 at nodes.
    pub fn check_parity(&self, m: usize) -> Result<()> {
        let ok = if m % 2 == 0 {
            self.beta.samples().iter().all(|&v| v >= 0.0)
        } else {
            self.beta.samples().iter().all(|&v| v <= 0.0)
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("(-1)^{m} beta(t) >= 0 fails at a node"))
        }
    }
}

/// The integrating factor mu(t) = exp of the running integral of alpha,
/// evaluated exactly at grid steps through per-period cumulative sums.
#[derive(Debug, Clone)]
pub struct MuSeries {
    grid: Grid,
    period_steps: usize,
    // cum[k] = integral of alpha over [0, k*h] for k in 0..=period_steps
    cum: Vec<f64>,
}

impl MuSeries {
    fn new(alpha: &PeriodicCoefficient) -> MuSeries {
        let n = alpha.period_steps();
        let h = alpha.grid().h();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for k in 0..n {
            let v0 = alpha.samples()[k];
            let v1 = alpha.samples()[(k + 1) % n];
            cum.push(cum[k] + 0.5 * (v0 + v1) * h);
        }
        MuSeries {
            grid: alpha.grid(),
            period_steps: n,
            cum,
        }
    }

    /// Integral of alpha over [0, step*h].
    pub fn log_at_step(&self, step: i64) -> f64 {
        let n = self.period_steps as i64;
        let q = step.div_euclid(n);
        let r = step.rem_euclid(n) as usize;
        q as f64 * self.cum[self.period_steps] + self.cum[r]
    }

    pub fn eval_step(&self, step: i64) -> f64 {
        self.log_at_step(step).exp()
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.eval_step(self.grid.align(t)?))
    }
}

/// Result of the integrating-factor change of variables.
pub struct Transformed {
    pub mu: MuSeries,
    pub b: PeriodicCoefficient,
}

/// Computes mu(t) = exp(int_0^t alpha) and b(t) = beta(t) exp(int_{t-1}^t alpha).
/// b inherits beta's sign class and period.
pub fn transform(sys: &DdeSystem) -> Transformed {
    let mu = MuSeries::new(&sys.alpha);
    let n_sub = sys.grid().n_sub() as i64;
    let samples: Vec<f64> = (0..sys.beta.period_steps() as i64)
        .map(|k| {
            let window = mu.log_at_step(k) - mu.log_at_step(k - n_sub);
            sys.beta.eval_step(k) * window.exp()
        })
        .collect();
    let b = PeriodicCoefficient::from_samples(
        sys.grid(),
        sys.gamma(),
        samples,
        sys.beta.sign_class(),
    )
    .expect("transformed coefficient inherits validity");
    Transformed { mu, b }
}

/// One explicit step of length eta <= 1 for y'(t) = -b(t) y(t-1): a shift
/// on [-1,-eta] and psi(0) minus the running integral of b(tau+s) psi(s-1)
/// on [-eta,0].  Exact for the piecewise-linear models of b and psi.
pub fn step(b: &PeriodicCoefficient, tau: f64, eta: f64, psi: &Segment) -> Result<Segment> {
    let grid = b.grid();
    if psi.grid() != grid {
        return invalid("segment grid differs from coefficient grid");
    }
    let tau_step = grid.align(tau)?;
    let eta_steps = grid.align(eta)?;
    let n = grid.n_sub() as i64;
    if eta_steps < 1 || eta_steps > n {
        return invalid(format!("eta = {eta} outside (0, 1]"));
    }
    Ok(step_aligned(b, tau_step, eta_steps as usize, psi))
}

pub(crate) fn step_aligned(
    b: &PeriodicCoefficient,
    tau_step: i64,
    eta_steps: usize,
    psi: &Segment,
) -> Segment {
    let grid = b.grid();
    let n = grid.n_sub();
    let e = eta_steps;
    let h = grid.h();
    let psi_v = psi.values();
    // running integral of b(tau+s) psi(s-1) over s in [0, r*h], r = 0..=e
    let mut prefix = vec![0.0; e + 1];
    for r in 0..e {
        let w0 = b.eval_step(tau_step + r as i64);
        let w1 = b.eval_step(tau_step + r as i64 + 1);
        prefix[r + 1] = prefix[r] + product_cell(h, w0, w1, psi_v[r], psi_v[r + 1]);
    }
    let mut out = vec![0.0; n + 1];
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = if j + e <= n {
            psi_v[j + e]
        } else {
            psi_v[n] - prefix[j + e - n]
        };
    }
    Segment::new(grid, out).expect("step output has grid length")
}

/// Solves y'(t) = -b(t) y(t-1) from initial segment phi at time tau to
/// time T by composing unit steps with one remainder step applied last.
pub fn solve(b: &PeriodicCoefficient, tau: f64, t_end: f64, phi: &Segment) -> Result<Trajectory> {
    let grid = b.grid();
    if phi.grid() != grid {
        return invalid("segment grid differs from coefficient grid");
    }
    let tau_step = grid.align(tau)?;
    let end_step = grid.align(t_end)?;
    if end_step < tau_step {
        return invalid(format!("t_end = {t_end} earlier than tau = {tau}"));
    }
    let n = grid.n_sub();
    let total = (end_step - tau_step) as usize;
    let mut samples = Vec::with_capacity(n + total + 1);
    samples.extend_from_slice(phi.values());
    let mut seg = phi.clone();
    let mut done = 0usize;
    while done < total {
        let e = (total - done).min(n);
        let next = step_aligned(b, tau_step + done as i64, e, &seg);
        samples.extend_from_slice(&next.values()[n + 1 - e..]);
        seg = next;
        done += e;
    }
    Ok(Trajectory::from_parts(grid, tau_step, samples))
}

/// Solves the untransformed equation by transforming, solving, and
/// dividing by mu pointwise.
pub fn solve_untransformed(
    sys: &DdeSystem,
    tau: f64,
    t_end: f64,
    phi: &Segment,
) -> Result<Trajectory> {
    let grid = sys.grid();
    if phi.grid() != grid {
        return invalid("segment grid differs from system grid");
    }
    let tr = transform(sys);
    let tau_step = grid.align(tau)?;
    let n = grid.n_sub() as i64;
    // initial segment of the transformed equation: mu(tau+theta) phi(theta)
    let y0: Vec<f64> = (0..=grid.n_sub())
        .map(|j| tr.mu.eval_step(tau_step - n + j as i64) * phi.values()[j])
        .collect();
    let y = solve(&tr.b, tau, t_end, &Segment::new(grid, y0)?)?;
    let samples: Vec<f64> = y
        .samples()
        .iter()
        .enumerate()
        .map(|(k, v)| v / tr.mu.eval_step(tau_step - n + k as i64))
        .collect();
    Ok(Trajectory::from_parts(grid, tau_step, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn transform_examples() {
        let g = grid(100);
        // alpha = 0, beta = 1: b = 1 and mu = 1
        let sys = DdeSystem::new(
            PeriodicCoefficient::constant(g, 1.0, 0.0).unwrap(),
            PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let tr = transform(&sys);
        assert!(tr.b.samples().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((tr.mu.eval_step(37) - 1.0).abs() < 1e-15);

        // alpha = 1, beta = 1: b = e exactly (trapezoid exact on constants)
        let sys = DdeSystem::new(
            PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap(),
            PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let tr = transform(&sys);
        let e = std::f64::consts::E;
        assert!(tr.b.samples().iter().all(|&v| (v - e).abs() < 1e-6));
        assert_eq!(tr.b.sign_class(), SignClass::NonNeg);
    }

    #[test]
    fn step_shift_and_integral() {
        let g = grid(10);
        let b0 = PeriodicCoefficient::constant(g, 1.0, 0.0).unwrap();
        let psi = Segment::from_fn(g, |t| t).unwrap();
        let out = step(&b0, 0.0, 0.5, &psi).unwrap();
        for (j, &v) in out.values().iter().enumerate() {
            let theta = g.node(j);
            let expect = if theta <= -0.5 { theta + 0.5 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }

        let b1 = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let one = Segment::constant(g, 1.0);
        let out = step(&b1, 0.0, 1.0, &one).unwrap();
        for (j, &v) in out.values().iter().enumerate() {
            assert!((v + g.node(j)).abs() < 1e-14);
        }

        // psi(theta) = theta, b = 1, eta = 1: (1+theta) - (1+theta)^2/2,
        // hand integration cross-checked by a fine Riemann-sum oracle below
        let out = step(&b1, 0.0, 1.0, &psi).unwrap();
        for (j, &v) in out.values().iter().enumerate() {
            let s = 1.0 + g.node(j);
            assert!((v - (s - 0.5 * s * s)).abs() < 1e-14);
        }
        assert!((out.values()[g.n_sub()] - 0.5).abs() < 1e-14);
        // Riemann-sum oracle at theta = 0 with step 1e-6
        let steps = 1_000_000usize;
        let ds = 1.0 / steps as f64;
        let mut acc = 0.0;
        for k in 0..steps {
            let s = (k as f64 + 0.5) * ds;
            acc += (s - 1.0) * ds;
        }
        let oracle = 0.0 - acc;
        assert!((out.values()[g.n_sub()] - oracle).abs() < 1e-9);

        assert!(step(&b1, 0.05, 1.0, &one).is_err());
        assert!(step(&b1, 0.0, 1.2, &one).is_err());
    }

    #[test]
    fn step_branches_agree_at_junction() {
        // at theta = -eta the shift branch gives psi(0) and the integral
        // branch gives psi(0) minus an empty integral
        let g = grid(16);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, 1.0, 0.5, 1.0).unwrap();
        let psi = Segment::from_fn(g, |t| (3.0 * t).cos()).unwrap();
        for e in [4usize, 8, 12] {
            let eta = e as f64 * g.h();
            let out = step(&b, 0.25, eta, &psi).unwrap();
            let j = g.n_sub() - e; // node at theta = -eta
            let shift_branch = psi.values()[j + e];
            let integral_branch = psi.values()[g.n_sub()]; // minus empty prefix
            assert!((out.values()[j] - shift_branch).abs() < 1e-12);
            assert!((shift_branch - integral_branch).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_examples() {
        let g = grid(50);
        let b1 = PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap();
        let one = Segment::constant(g, 1.0);
        let tr = solve(&b1, 0.0, 2.0, &one).unwrap();
        assert!((tr.value_at_step(g.align(1.0).unwrap()).unwrap() - 0.0).abs() < 1e-13);
        assert!((tr.value_at_step(g.align(2.0).unwrap()).unwrap() + 0.5).abs() < 1e-13);

        let b0 = PeriodicCoefficient::constant(g, 1.0, 0.0).unwrap();
        let phi = Segment::from_fn(g, |t| 2.0 + t).unwrap();
        let tr = solve(&b0, 0.0, 3.0, &phi).unwrap();
        for k in 0..=150 {
            assert!((tr.value_at_step(k).unwrap() - 2.0).abs() < 1e-14);
        }

        let tr = solve(&b1, 0.0, 0.0, &phi).unwrap();
        assert_eq!(tr.samples().len(), g.n_sub() + 1);
        assert!(solve(&b1, 1.0, 0.0, &phi).is_err());
    }

    #[test]
    fn solve_untransformed_examples() {
        let g = grid(100);
        // pure decay: alpha = c, beta = 0 -> x(t) = e^{-ct}
        let c = 0.7;
        let sys = DdeSystem::new(
            PeriodicCoefficient::constant(g, 1.0, c).unwrap(),
            PeriodicCoefficient::constant(g, 1.0, 0.0).unwrap(),
        )
        .unwrap();
        let one = Segment::from_fn(g, |t| (-c * t).exp()).unwrap();
        let tr = solve_untransformed(&sys, 0.0, 2.0, &one).unwrap();
        for k in [50i64, 100, 150, 200] {
            let t = g.time_of(k);
            assert!((tr.value_at_step(k).unwrap() - (-c * t).exp()).abs() < 1e-4);
        }

        // alpha = 0 agrees with solve on b = beta exactly
        let sys = DdeSystem::new(
            PeriodicCoefficient::constant(g, 1.0, 0.0).unwrap(),
            PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let phi = Segment::from_fn(g, |t| t * t).unwrap();
        let a = solve_untransformed(&sys, 0.0, 2.0, &phi).unwrap();
        let b = solve(&sys.beta, 0.0, 2.0, &phi).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn solve_untransformed_euler_oracle() {
        // alpha = 1, beta = 1, phi = 1: compare x(1) with explicit Euler at
        // step 1e-5 on the untransformed equation
        let g = grid(100);
        let sys = DdeSystem::new(
            PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap(),
            PeriodicCoefficient::constant(g, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let one = Segment::constant(g, 1.0);
        let tr = solve_untransformed(&sys, 0.0, 1.0, &one).unwrap();
        let dt = 1e-5;
        let steps = 100_000usize;
        let mut x = 1.0f64;
        for k in 0..steps {
            let _t = k as f64 * dt;
            // x(t-1) = 1 on [0,1)
            let dx = -x - 1.0;
            x += dt * dx;
        }
        let got = tr.value_at_step(g.align(1.0).unwrap()).unwrap();
        assert!(
            (got - x).abs() < 1e-3,
            "solver {got} vs Euler oracle {x} differ too much"
        );
    }

    #[test]
    fn semigroup_property() {
        let g = grid(32);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, 1.0, 0.5, 1.0).unwrap();
        let phi = Segment::from_fn(g, |t| (2.0 * t).sin() + 0.3).unwrap();
        let whole = solve(&b, 0.0, 2.5, &phi).unwrap();
        let mid = whole.segment_at(1.25).unwrap();
        let second = solve(&b, 1.25, 2.5, &mid).unwrap();
        let end_a = whole.segment_at(2.5).unwrap();
        let end_b = second.segment_at(2.5).unwrap();
        let h2 = g.h() * g.h();
        for (x, y) in end_a.values().iter().zip(end_b.values()) {
            assert!((x - y).abs() <= 10.0 * h2);
        }
    }

    #[test]
    fn step_linearity() {
        let g = grid(20);
        let b = PeriodicCoefficient::sinusoid(g, 1.0, -1.0, 0.4, 1.0).unwrap();
        let phi = Segment::from_fn(g, |t| t * t - 0.2).unwrap();
        let psi = Segment::from_fn(g, |t| (5.0 * t).cos()).unwrap();
        let (a, c) = (1.7, -0.9);
        let combo = Segment::new(
            g,
            phi.values()
                .iter()
                .zip(psi.values())
                .map(|(x, y)| a * x + c * y)
                .collect(),
        )
        .unwrap();
        let lhs = step(&b, 0.0, 0.75, &combo).unwrap();
        let sa = step(&b, 0.0, 0.75, &phi).unwrap();
        let sc = step(&b, 0.0, 0.75, &psi).unwrap();
        for ((l, x), y) in lhs.values().iter().zip(sa.values()).zip(sc.values()) {
            assert!((l - (a * x + c * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_propagation() {
        let g = grid(24);
        let sys = DdeSystem::new(
            PeriodicCoefficient::sinusoid(g, 1.0, 0.2, 1.0, 1.0).unwrap(),
            PeriodicCoefficient::sinusoid(g, 1.0, 2.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(sys.beta.sign_class(), SignClass::NonNeg);
        let tr = transform(&sys);
        assert_eq!(tr.b.sign_class(), SignClass::NonNeg);
        assert!(tr.b.samples().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn coefficient_validation() {
        let g = grid(3);
        // misaligned period
        assert!(PeriodicCoefficient::constant(g, 0.4, 1.0).is_err());
        // declared sign violated
        assert!(
            PeriodicCoefficient::from_samples(g, 1.0, vec![1.0, -0.1, 0.5], SignClass::NonNeg)
                .is_err()
        );
    }
}
