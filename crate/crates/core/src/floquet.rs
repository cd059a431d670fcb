//! Periodic-coefficient analysis: monodromy discretization, Floquet
//! multipliers, sign changes and lap numbers, characteristic roots of the
//! constant-coefficient equation, multiplier lower bounds, the multiplier
//! structure report, and the homotopy scan to constant coefficients.

use crate::dde::{solve, solve_untransformed, transform, DdeSystem, PeriodicCoefficient};
use crate::error::{invalid, Error, Result};
use crate::segfun::{Grid, Segment};
use crate::spectra::{eigenvalues, ComplexSpectrum, DenseMatrix};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Nodal-basis matrix of the period map: column j is the solution-operator
/// image of the j-th hat segment over one period.
#[derive(Debug, Clone)]
pub struct MonodromyMatrix {
    grid: Grid,
    gamma: f64,
    tau0: f64,
    matrix: DenseMatrix,
}

impl MonodromyMatrix {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

/// Monodromy of the transformed equation y'(t) = -b(t) y(t-1).
pub fn monodromy_transformed(b: &PeriodicCoefficient, tau0: f64) -> Result<MonodromyMatrix> {
    let grid = b.grid();
    grid.align(tau0)?;
    let gamma = b.gamma();
    let n = grid.n_sub();
    let mut matrix = DenseMatrix::zeros(n + 1, n + 1);
    for j in 0..=n {
        let tr = solve(b, tau0, tau0 + gamma, &Segment::hat(grid, j))?;
        let seg = tr.segment_at(tau0 + gamma)?;
        for (i, &v) in seg.values().iter().enumerate() {
            matrix.set(i, j, v);
        }
    }
    Ok(MonodromyMatrix {
        grid,
        gamma,
        tau0,
        matrix,
    })
}

/// Monodromy of the untransformed equation
/// x'(t) = -alpha(t) x(t) - beta(t) x(t-1).
pub fn monodromy(sys: &DdeSystem, tau0: f64) -> Result<MonodromyMatrix> {
    let grid = sys.grid();
    grid.align(tau0)?;
    let gamma = sys.gamma();
    let n = grid.n_sub();
    let mut matrix = DenseMatrix::zeros(n + 1, n + 1);
    for j in 0..=n {
        let tr = solve_untransformed(sys, tau0, tau0 + gamma, &Segment::hat(grid, j))?;
        let seg = tr.segment_at(tau0 + gamma)?;
        for (i, &v) in seg.values().iter().enumerate() {
            matrix.set(i, j, v);
        }
    }
    Ok(MonodromyMatrix {
        grid,
        gamma,
        tau0,
        matrix,
    })
}

/// Multipliers below this modulus cannot be resolved by the spatial
/// discretization and are flagged unreliable.
pub fn discretization_floor(grid: Grid) -> f64 {
    10.0 * grid.h() * grid.h()
}

/// Eigenvalues of the monodromy matrix ordered by descending modulus,
/// truncated to at most k_max multipliers counted with multiplicity.
pub fn floquet_multipliers(mono: &MonodromyMatrix, k_max: usize) -> Result<ComplexSpectrum> {
    let dim = mono.matrix.rows();
    if k_max > dim {
        return invalid(format!("k_max = {k_max} exceeds matrix dimension {dim}"));
    }
    let spec = eigenvalues(&mono.matrix)?;
    Ok(truncate_spectrum(&spec, k_max))
}

fn truncate_spectrum(spec: &ComplexSpectrum, k_max: usize) -> ComplexSpectrum {
    let mut raw = Vec::new();
    for lam in spec.expanded().into_iter().take(k_max) {
        raw.push(lam);
    }
    ComplexSpectrum::from_raw(raw, 0.0)
}

/// Node values below this fraction of the sup norm count as zero when
/// sign changes are tallied.
const SIGN_ZERO_REL: f64 = 1e-12;

/// Number of strict sign alternations of the nonzero node values, zeros
/// skipped.
pub fn sign_changes(phi: &Segment) -> Result<usize> {
    let sup = phi.sup_norm();
    if sup == 0.0 {
        return invalid("sign changes undefined for the zero segment");
    }
    let tol = SIGN_ZERO_REL * sup;
    let mut count = 0usize;
    let mut last = 0.0f64;
    for &v in phi.values() {
        if v.abs() <= tol {
            continue;
        }
        if last != 0.0 && v * last < 0.0 {
            count += 1;
        }
        last = v;
    }
    Ok(count)
}

/// Parity class for the lap count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LapParity {
    /// Odd-valued count, used with negative feedback (m even).
    VMinus,
    /// Even-valued count, used with positive feedback (m odd).
    VPlus,
}

impl LapParity {
    /// Parity used for the feedback sign hypothesis with the given m.
    pub fn for_order(m: usize) -> LapParity {
        if m % 2 == 0 {
            LapParity::VMinus
        } else {
            LapParity::VPlus
        }
    }
}

/// Sign-change count rounded up to the required parity.
pub fn lap(phi: &Segment, parity: LapParity) -> Result<usize> {
    let sc = sign_changes(phi)?;
    let want_odd = parity == LapParity::VMinus;
    if (sc % 2 == 1) == want_odd {
        Ok(sc)
    } else {
        Ok(sc + 1)
    }
}

/// Roots of zeta + alpha0 + beta0 exp(-zeta) = 0, sorted by descending
/// real part, closed under conjugation, residuals below 1e-12.
///
/// Newton iteration per branch.  For beta0 > 0 the complex branches sit
/// near y = 2k pi + pi/2 and up to two real roots exist when
/// ln(beta0) + alpha0 + 1 < 0; for beta0 < 0 there is exactly one real
/// root and complex branches near y = (2k+1) pi + pi/2.
pub fn char_roots(alpha0: f64, beta0: f64, count: usize) -> Result<Vec<Complex64>> {
    if beta0 == 0.0 {
        return invalid("beta0 must be nonzero");
    }
    if count == 0 || count > 64 {
        return invalid(format!("count = {count} outside 1..=64"));
    }
    let f = |z: Complex64| z + alpha0 + beta0 * (-z).exp();
    let fp = |z: Complex64| Complex64::new(1.0, 0.0) - beta0 * (-z).exp();

    let newton = |seed: Complex64, label: &str| -> Result<Complex64> {
        let mut z = seed;
        for _ in 0..200 {
            let val = f(z);
            if val.norm() < 1e-13 {
                return Ok(z);
            }
            let dz = val / fp(z);
            z -= dz;
        }
        if f(z).norm() < 1e-12 {
            return Ok(z);
        }
        Err(Error::NumericFailure(format!(
            "Newton failed to converge on branch {label}"
        )))
    };

    let mut roots: Vec<Complex64> = Vec::new();
    let mut push_root = |z: Complex64, roots: &mut Vec<Complex64>| {
        let z = if z.im.abs() < 1e-10 {
            Complex64::new(z.re, 0.0)
        } else {
            z
        };
        if roots.iter().all(|r| (r - z).norm() > 1e-8) {
            roots.push(z);
            if z.im != 0.0 {
                roots.push(z.conj());
            }
        }
    };

    if beta0 < 0.0 {
        // strictly increasing on the reals: exactly one real root
        let real = newton(Complex64::new(0.0, 0.0), "real")?;
        push_root(real, &mut roots);
    } else if beta0.ln() + alpha0 + 1.0 < 0.0 {
        // two real roots around the minimum at zeta = ln(beta0)
        let zstar = beta0.ln();
        for seed in [zstar + 1.0, zstar - 1.0] {
            let real = newton(Complex64::new(seed, 0.0), "real pair")?;
            push_root(real, &mut roots);
        }
    }

    let mut k = 0usize;
    while roots.len() < count + 2 && k < 80 {
        let y = if beta0 > 0.0 {
            2.0 * k as f64 * std::f64::consts::PI + std::f64::consts::FRAC_PI_2
        } else {
            (2.0 * k as f64 + 1.0) * std::f64::consts::PI + std::f64::consts::FRAC_PI_2
        };
        let x = (beta0.abs() / y.max(1.0)).ln().min(2.0);
        let label = format!("k={k}");
        let root = newton(Complex64::new(x, y), &label)?;
        if root.im.abs() > 1e-10 || beta0 > 0.0 {
            push_root(root, &mut roots);
        }
        k += 1;
    }

    roots.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    roots.truncate(count);
    for (i, z) in roots.iter().enumerate() {
        if f(*z).norm() >= 1e-12 {
            return Err(Error::NumericFailure(format!(
                "root {i} residual {} above 1e-12",
                f(*z).norm()
            )));
        }
    }
    Ok(roots)
}

/// Computable lower bounds on multiplier moduli for indices k with k - m
/// even: Q^{-(k-1)} exp(-gamma alpha0 + gamma sum_{j<=k} Re zeta_j), with
/// zeta the characteristic roots for the nodewise extremal constant b0.
pub fn multiplier_lower_bounds(
    sys: &DdeSystem,
    m: usize,
    k_max: usize,
) -> Result<Vec<(usize, f64)>> {
    let tr = transform(sys);
    let samples = tr.b.samples();
    let b0 = if m % 2 == 0 {
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return invalid("(-1)^m b(t) >= (-1)^m b0 > 0 fails at a node");
        }
        min
    } else {
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max >= 0.0 {
            return invalid("(-1)^m b(t) >= (-1)^m b0 > 0 fails at a node");
        }
        max
    };
    let gamma = sys.gamma();
    let alpha0 = sys.alpha.integral_over_period() / gamma;
    let q = tr.b.abs_integral_over_period()?.exp();
    let zeta = char_roots(0.0, b0, k_max)?;
    let mut out = Vec::new();
    let mut re_sum = 0.0;
    for (k, z) in zeta.iter().enumerate().take(k_max) {
        re_sum += z.re;
        let k1 = k + 1;
        if (k1 + m) % 2 == 0 {
            let bound = q.powi(-(k1 as i32 - 1)) * (-gamma * alpha0 + gamma * re_sum).exp();
            out.push((k1, bound));
        }
    }
    Ok(out)
}

/// Real-part representative of an eigenvector of the monodromy matrix for
/// a computed multiplier, by seeded inverse iteration.  The phase is fixed
/// by making the largest-modulus component real and positive.
pub fn eigenfunction(mono: &MonodromyMatrix, lambda: Complex64) -> Result<Segment> {
    let n = mono.matrix.rows();
    let norm = mono.matrix.frobenius_norm();
    let mut shifted: Vec<Complex64> = mono
        .matrix
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    for i in 0..n {
        shifted[i * n + i] -= lambda;
    }
    let piv = crate::spectra::clu_decompose(&mut shifted, n);
    let mut rng = StdRng::seed_from_u64(0x1a9_b00c);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    crate::spectra::normalize(&mut v);
    let mut growth = 0.0;
    for _ in 0..3 {
        let x = crate::spectra::clu_solve(&shifted, &piv, n, &v);
        growth = crate::spectra::norm2(&x);
        if !growth.is_finite() || growth == 0.0 {
            return Err(Error::NumericFailure(
                "inverse iteration broke down".into(),
            ));
        }
        v = x;
        crate::spectra::normalize(&mut v);
    }
    // growth must certify that lambda is numerically in the spectrum
    if 1.0 / growth > 1e-6 * norm.max(1e-300) {
        return Err(Error::NumericFailure(format!(
            "lambda = {lambda} is not in the computed spectrum (residual proxy {:.3e})",
            1.0 / growth
        )));
    }
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
        .expect("nonempty eigenvector");
    let phase = v[imax].conj() / v[imax].norm();
    let values: Vec<f64> = v.iter().map(|z| (z * phase).re).collect();
    Segment::new(mono.grid, values)
}

/// One multiplier row of the structure report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierRow {
    pub k: usize,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    /// Lap count of the eigenfunction's real slice, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lap: Option<usize>,
    pub parity: LapParity,
    /// Sign-change count of the eigenfunction before parity rounding.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_changes: Option<usize>,
    /// Lower bound from the comparison argument, when k - m is even.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// False when the modulus sits below the discretization floor.
    pub reliable: bool,
}

/// Per-multiplier records plus the aggregated pass/fail findings of the
/// multiplier structure checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapReport {
    pub m: usize,
    pub gamma: f64,
    pub n_sub: usize,
    pub rows: Vec<MultiplierRow>,
    pub checked_k: Vec<usize>,
    pub gap_margins: Vec<(usize, f64)>,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Certifies the multiplier structure: for each k <= k_max with k - m
/// even, a strict modulus gap at k, lap counts k-1 on the two
/// eigenfunctions at positions k-1 and k, and a real positive product
/// lambda_{k-1} lambda_k; for k = 1 with m odd, a real positive leading
/// multiplier with lap 0.
pub fn theorem51_report(sys: &DdeSystem, m: usize, k_max: usize) -> Result<LapReport> {
    // uniform sign hypothesis at nodes, strict
    let samples = sys.beta.samples();
    let strict_ok = if m % 2 == 0 {
        samples.iter().all(|&v| v > 0.0)
    } else {
        samples.iter().all(|&v| v < 0.0)
    };
    if !strict_ok {
        return invalid(format!(
            "(-1)^{m} beta(t) >= (-1)^{m} beta0 > 0 fails at a node"
        ));
    }
    let mono = monodromy(sys, 0.0)?;
    let spec = floquet_multipliers(&mono, (k_max + 1).min(mono.matrix.rows()))?;
    let lambdas = spec.expanded();
    let floor = discretization_floor(sys.grid());
    let parity = LapParity::for_order(m);
    let bounds = multiplier_lower_bounds(sys, m, k_max).unwrap_or_default();

    // lap of the real eigenvector slice per distinct modulus
    let mut rows: Vec<MultiplierRow> = Vec::new();
    for (i, lam) in lambdas.iter().enumerate().take(k_max) {
        let k = i + 1;
        let reliable = lam.norm() >= floor;
        let (lap_v, sc_v) = if reliable {
            let ef = eigenfunction(&mono, *lam)?;
            (Some(lap(&ef, parity)?), Some(sign_changes(&ef)?))
        } else {
            (None, None)
        };
        rows.push(MultiplierRow {
            k,
            re: lam.re,
            im: lam.im,
            modulus: lam.norm(),
            lap: lap_v,
            parity,
            sign_changes: sc_v,
            bound: bounds.iter().find(|(bk, _)| *bk == k).map(|(_, b)| *b),
            reliable,
        });
    }

    let mut failures: Vec<String> = Vec::new();
    let mut checked_k = Vec::new();
    let mut gap_margins = Vec::new();
    for k in 1..=k_max {
        if (k + m) % 2 != 0 {
            continue;
        }
        if k == 1 {
            // m odd: leading multiplier real positive with lap 0
            if lambdas.is_empty() {
                failures.push("no multipliers computed".into());
                continue;
            }
            checked_k.push(1);
            let l1 = lambdas[0];
            if !(l1.re > 0.0 && l1.im.abs() <= 1e-6 * l1.norm().max(1.0)) {
                failures.push(format!("leading multiplier {l1} not real positive"));
            }
            if rows[0].lap != Some(0) {
                failures.push(format!("leading lap {:?} != 0", rows[0].lap));
            }
            if k < lambdas.len() {
                gap_margins.push((1, lambdas[0].norm() - lambdas[1].norm()));
            }
            continue;
        }
        if k >= lambdas.len() {
            failures.push(format!("k = {k}: not enough multipliers above the floor"));
            continue;
        }
        if lambdas[k - 1].norm() < floor || lambdas[k].norm() < floor {
            // below the resolvable floor; skip rather than certify noise
            continue;
        }
        checked_k.push(k);
        let margin = lambdas[k - 1].norm() - lambdas[k].norm();
        gap_margins.push((k, margin));
        if margin <= 0.0 {
            failures.push(format!("gap |lambda_{k}| > |lambda_{}| fails", k + 1));
        }
        let want = k - 1;
        for idx in [k - 2, k - 1] {
            if rows[idx].lap != Some(want) {
                failures.push(format!(
                    "lap of multiplier {} is {:?}, expected {want}",
                    idx + 1,
                    rows[idx].lap
                ));
            }
        }
        let prod = lambdas[k - 2] * lambdas[k - 1];
        if !(prod.re > 0.0 && prod.im.abs() <= 1e-6 * prod.norm().max(1.0)) {
            failures.push(format!(
                "product lambda_{} lambda_{k} = {prod} not real positive",
                k - 1
            ));
        }
    }

    Ok(LapReport {
        m,
        gamma: sys.gamma(),
        n_sub: sys.grid().n_sub(),
        rows,
        checked_k,
        gap_margins,
        passed: failures.is_empty(),
        failures,
    })
}

/// One homotopy point: the convex path from the signed extremal constant
/// coefficient (kappa = 0) to the full system (kappa = 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomotopyPoint {
    pub kappa: f64,
    pub report: LapReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomotopyReport {
    pub points: Vec<HomotopyPoint>,
    /// Largest modulus jump between neighboring kappa values, per k.
    pub max_jumps: Vec<(usize, f64)>,
    pub passed: bool,
}

/// Runs the structure report along beta_kappa = kappa beta + (1-kappa)
/// beta0 and alpha_kappa = kappa alpha, kappa = i/steps, and reports the
/// modulus continuity across neighboring points.
pub fn homotopy_scan(sys: &DdeSystem, m: usize, steps: usize, k_max: usize) -> Result<HomotopyReport> {
    if steps == 0 {
        return invalid("homotopy needs at least one step");
    }
    let samples = sys.beta.samples();
    let beta0 = if m % 2 == 0 {
        samples.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    let grid = sys.grid();
    let gamma = sys.gamma();
    let mut points = Vec::new();
    for i in 0..=steps {
        let kappa = i as f64 / steps as f64;
        let alpha_k: Vec<f64> = sys.alpha.samples().iter().map(|&v| kappa * v).collect();
        let beta_k: Vec<f64> = sys
            .beta
            .samples()
            .iter()
            .map(|&v| kappa * v + (1.0 - kappa) * beta0)
            .collect();
        let sys_k = DdeSystem::new(
            PeriodicCoefficient::from_samples(grid, gamma, alpha_k, crate::dde::SignClass::None)?,
            PeriodicCoefficient::from_samples(grid, gamma, beta_k, sys.beta.sign_class())?,
        )?;
        let report = theorem51_report(&sys_k, m, k_max)?;
        points.push(HomotopyPoint { kappa, report });
    }
    let mut max_jumps = Vec::new();
    for k in 1..=k_max {
        let mut jump = 0.0f64;
        for w in points.windows(2) {
            let a = w[0].report.rows.get(k - 1).map(|r| r.modulus);
            let b = w[1].report.rows.get(k - 1).map(|r| r.modulus);
            if let (Some(a), Some(b)) = (a, b) {
                jump = jump.max((a - b).abs());
            }
        }
        max_jumps.push((k, jump));
    }
    let passed = points.iter().all(|p| p.report.passed);
    Ok(HomotopyReport {
        points,
        max_jumps,
        passed,
    })
}
