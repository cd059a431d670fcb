//! Dense nonsymmetric eigenvalues: balancing, Householder reduction to
//! Hessenberg form, and Francis double-shift QR iteration, following the
//! classic EISPACK/JAMA organization.  Eigenvalues only; eigenvectors are
//! recovered elsewhere by inverse iteration.

use super::{DenseMatrix, MAX_EIGEN_DIM};
use crate::error::{capacity, invalid, Error, Result};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// One clustered eigenvalue with its algebraic multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Eigenvalues ordered by descending modulus, ties broken by descending
/// real part then descending imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    entries: Vec<SpectrumEntry>,
}

impl ComplexSpectrum {
    pub(crate) fn from_raw(mut raw: Vec<Complex64>, cluster_tol: f64) -> ComplexSpectrum {
        raw.sort_by(|a, b| {
            b.norm()
                .partial_cmp(&a.norm())
                .unwrap()
                .then(b.re.partial_cmp(&a.re).unwrap())
                .then(b.im.partial_cmp(&a.im).unwrap())
        });
        let mut entries: Vec<SpectrumEntry> = Vec::new();
        let mut used = vec![false; raw.len()];
        for i in 0..raw.len() {
            if used[i] {
                continue;
            }
            let mut members = vec![raw[i]];
            used[i] = true;
            for j in i + 1..raw.len() {
                if !used[j] && (raw[j] - raw[i]).norm() <= cluster_tol {
                    members.push(raw[j]);
                    used[j] = true;
                }
            }
            let mean = members.iter().sum::<Complex64>() / members.len() as f64;
            entries.push(SpectrumEntry {
                value: mean,
                multiplicity: members.len(),
            });
        }
        entries.sort_by(|a, b| {
            b.value
                .norm()
                .partial_cmp(&a.value.norm())
                .unwrap()
                .then(b.value.re.partial_cmp(&a.value.re).unwrap())
                .then(b.value.im.partial_cmp(&a.value.im).unwrap())
        });
        ComplexSpectrum { entries }
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    /// Eigenvalues with repetitions according to multiplicity, in order.
    pub fn expanded(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for e in &self.entries {
            for _ in 0..e.multiplicity {
                out.push(e.value);
            }
        }
        out
    }

    pub fn total_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// CSV rows `re,im,mult`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,mult\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{:.17},{:.17},{}\n",
                e.value.re, e.value.im, e.multiplicity
            ));
        }
        out
    }
}

/// All eigenvalues of a square matrix with clustered multiplicities.
///
/// Pipeline: balance, reduce to Hessenberg form, shifted QR iteration.
/// Each clustered eigenvalue is gated by a smallest-singular-value proxy of
/// (A - lambda I) computed from seeded inverse iteration.
pub fn eigenvalues(a: &DenseMatrix) -> Result<ComplexSpectrum> {
    if !a.is_square() {
        return invalid("eigenvalues need a square matrix");
    }
    let n = a.rows();
    if n > MAX_EIGEN_DIM {
        return capacity(format!("dimension {n} exceeds {MAX_EIGEN_DIM}"));
    }
    if n == 0 {
        return invalid("eigenvalues need a nonempty matrix");
    }
    let mut h: Vec<f64> = a.data().to_vec();
    balance(&mut h, n);
    hessenberg(&mut h, n);
    let raw = hqr(&mut h, n)?;

    let norm = a.frobenius_norm();
    let spectrum = ComplexSpectrum::from_raw(raw, 1e-6 * norm.max(1e-300));
    // residual gate on every cluster representative
    for entry in spectrum.entries() {
        let proxy = smallest_singular_proxy(a, entry.value);
        if proxy > 1e-8 * norm.max(1e-300) {
            return Err(Error::NumericFailure(format!(
                "eigenvalue {} fails residual gate: proxy {proxy:.3e} vs norm {norm:.3e}",
                entry.value
            )));
        }
    }
    Ok(spectrum)
}

/// Iterative row/column norm equalization by powers of the radix (the
/// diagonal-similarity phase of EISPACK balanc, without permutations).
fn balance(h: &mut [f64], n: usize) {
    const RADIX: f64 = 2.0;
    let mut done = false;
    let mut guard = 0;
    while !done && guard < 100 {
        done = true;
        guard += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += h[j * n + i].abs();
                    r += h[i * n + j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let s = c + r;
            let mut cc = c;
            let mut g = r / RADIX;
            while cc < g {
                f *= RADIX;
                cc *= RADIX * RADIX;
            }
            g = r * RADIX;
            while cc >= g {
                f /= RADIX;
                cc /= RADIX * RADIX;
            }
            if (cc + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    h[i * n + j] *= inv;
                }
                for j in 0..n {
                    h[j * n + i] *= f;
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form (JAMA orthes), with the
/// below-subdiagonal remnants cleared.
fn hessenberg(h: &mut [f64], n: usize) {
    if n < 3 {
        return;
    }
    let low = 0;
    let high = n - 1;
    let mut ort = vec![0.0f64; n];
    for m in low + 1..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[i * n + m - 1].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut hsum = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i * n + m - 1] / scale;
            hsum += ort[i] * ort[i];
        }
        let mut g = hsum.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hsum -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[i * n + j];
            }
            f /= hsum;
            for i in m..=high {
                h[i * n + j] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[i * n + j];
            }
            f /= hsum;
            for j in m..=high {
                h[i * n + j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m * n + m - 1] = scale * g;
    }
    for i in 2..n {
        for j in 0..i - 1 {
            h[i * n + j] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix; returns the
/// eigenvalues.  Fails if the total sweep count exceeds 100 n.
fn hqr(h: &mut [f64], nn: usize) -> Result<Vec<Complex64>> {
    let eps = f64::EPSILON;
    let max_sweeps = 100 * nn;
    let mut sweeps = 0usize;
    let mut out: Vec<Complex64> = Vec::with_capacity(nn);

    let low = 0isize;
    let mut n = nn as isize - 1;
    let mut exshift = 0.0f64;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut x, mut y, mut w): (f64, f64, f64);

    let mut norm = 0.0f64;
    for i in 0..nn {
        let j0 = i.saturating_sub(1);
        for j in j0..nn {
            norm += h[i * nn + j].abs();
        }
    }
    if norm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); nn]);
    }

    let mut iter = 0usize;
    while n >= low {
        // look for a single small subdiagonal element
        let mut l = n;
        while l > low {
            s = h[(l - 1) as usize * nn + (l - 1) as usize].abs()
                + h[l as usize * nn + l as usize].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[l as usize * nn + (l - 1) as usize].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // one root found
            let v = h[n as usize * nn + n as usize] + exshift;
            out.push(Complex64::new(v, 0.0));
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // two roots found
            w = h[n as usize * nn + (n - 1) as usize] * h[(n - 1) as usize * nn + n as usize];
            p = (h[(n - 1) as usize * nn + (n - 1) as usize]
                - h[n as usize * nn + n as usize])
                / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            x = h[n as usize * nn + n as usize] + exshift;
            if q >= 0.0 {
                // real pair
                z = if p >= 0.0 { p + z } else { p - z };
                let l1 = x + z;
                let l2 = if z != 0.0 { x - w / z } else { l1 };
                out.push(Complex64::new(l1, 0.0));
                out.push(Complex64::new(l2, 0.0));
            } else {
                // complex pair
                out.push(Complex64::new(x + p, z));
                out.push(Complex64::new(x + p, -z));
            }
            n -= 2;
            iter = 0;
        } else {
            // form shift
            x = h[n as usize * nn + n as usize];
            y = h[(n - 1) as usize * nn + (n - 1) as usize];
            w = h[n as usize * nn + (n - 1) as usize] * h[(n - 1) as usize * nn + n as usize];

            if iter == 10 || iter == 20 {
                // exceptional shift
                exshift += x;
                for i in low..=n {
                    h[i as usize * nn + i as usize] -= x;
                }
                s = h[n as usize * nn + (n - 1) as usize].abs()
                    + h[(n - 1) as usize * nn + (n - 2) as usize].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            iter += 1;
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(Error::NumericFailure(format!(
                    "QR iteration did not converge within {max_sweeps} sweeps"
                )));
            }

            // look for two consecutive small subdiagonal elements
            let mut m = n - 2;
            while m >= l {
                z = h[m as usize * nn + m as usize];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1) as usize * nn + m as usize]
                    + h[m as usize * nn + (m + 1) as usize];
                q = h[(m + 1) as usize * nn + (m + 1) as usize] - z - r - s;
                r = h[(m + 2) as usize * nn + (m + 1) as usize];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[m as usize * nn + (m - 1) as usize].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (h[(m - 1) as usize * nn + (m - 1) as usize].abs()
                                + z.abs()
                                + h[(m + 1) as usize * nn + (m + 1) as usize].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=n {
                h[i as usize * nn + (i - 2) as usize] = 0.0;
                if i > m + 2 {
                    h[i as usize * nn + (i - 3) as usize] = 0.0;
                }
            }

            // double QR step on rows l..=n and columns m..=n
            let mut k = m;
            let mut pv = 0.0f64;
            let mut qv = 0.0f64;
            let mut rv = 0.0f64;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    pv = h[k as usize * nn + (k - 1) as usize];
                    qv = h[(k + 1) as usize * nn + (k - 1) as usize];
                    rv = if notlast {
                        h[(k + 2) as usize * nn + (k - 1) as usize]
                    } else {
                        0.0
                    };
                    x = pv.abs() + qv.abs() + rv.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    pv /= x;
                    qv /= x;
                    rv /= x;
                } else {
                    // first column of (H - a I)(H - b I) scaled, from the m-scan
                    z = h[m as usize * nn + m as usize];
                    let rr = x - z;
                    let ss = y - z;
                    pv = (rr * ss - w) / h[(m + 1) as usize * nn + m as usize]
                        + h[m as usize * nn + (m + 1) as usize];
                    qv = h[(m + 1) as usize * nn + (m + 1) as usize] - z - rr - ss;
                    rv = h[(m + 2) as usize * nn + (m + 1) as usize];
                    let ss = pv.abs() + qv.abs() + rv.abs();
                    pv /= ss;
                    qv /= ss;
                    rv /= ss;
                    x = 1.0;
                }
                s = (pv * pv + qv * qv + rv * rv).sqrt();
                if pv < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[k as usize * nn + (k - 1) as usize] = -s * x;
                    } else if l != m {
                        h[k as usize * nn + (k - 1) as usize] =
                            -h[k as usize * nn + (k - 1) as usize];
                    }
                    pv += s;
                    x = pv / s;
                    y = qv / s;
                    z = rv / s;
                    qv /= pv;
                    rv /= pv;

                    // row modification
                    for j in k as usize..nn {
                        let mut pp = h[k as usize * nn + j] + qv * h[(k + 1) as usize * nn + j];
                        if notlast {
                            pp += rv * h[(k + 2) as usize * nn + j];
                            h[(k + 2) as usize * nn + j] -= pp * z;
                        }
                        h[k as usize * nn + j] -= pp * x;
                        h[(k + 1) as usize * nn + j] -= pp * y;
                    }
                    // column modification
                    let imax = n.min(k + 3) as usize;
                    for i in 0..=imax {
                        let mut pp =
                            x * h[i * nn + k as usize] + y * h[i * nn + (k + 1) as usize];
                        if notlast {
                            pp += z * h[i * nn + (k + 2) as usize];
                            h[i * nn + (k + 2) as usize] -= pp * rv;
                        }
                        h[i * nn + k as usize] -= pp;
                        h[i * nn + (k + 1) as usize] -= pp * qv;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Complex LU decomposition with partial pivoting, in place.  Returns the
/// pivot rows; a vanishing pivot is replaced by a tiny value so inverse
/// iteration can proceed against exactly singular shifts.
pub(crate) fn clu_decompose(a: &mut [Complex64], n: usize) -> Vec<usize> {
    let mut piv: Vec<usize> = (0..n).collect();
    let scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    for k in 0..n {
        let mut best = k;
        let mut best_mag = a[k * n + k].norm_sqr();
        for i in k + 1..n {
            let mag = a[i * n + k].norm_sqr();
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        if best != k {
            for j in 0..n {
                a.swap(k * n + j, best * n + j);
            }
            piv.swap(k, best);
        }
        if a[k * n + k].norm() == 0.0 {
            a[k * n + k] = Complex64::new(tiny, 0.0);
        }
        let inv = Complex64::new(1.0, 0.0) / a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] * inv;
            a[i * n + k] = f;
            for j in k + 1..n {
                let sub = f * a[k * n + j];
                a[i * n + j] -= sub;
            }
        }
    }
    piv
}

pub(crate) fn clu_solve(lu: &[Complex64], piv: &[usize], n: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut x: Vec<Complex64> = piv.iter().map(|&p| b[p]).collect();
    for k in 0..n {
        for i in k + 1..n {
            let sub = lu[i * n + k] * x[k];
            x[i] -= sub;
        }
    }
    for k in (0..n).rev() {
        for j in k + 1..n {
            let sub = lu[k * n + j] * x[j];
            x[k] -= sub;
        }
        x[k] /= lu[k * n + k];
    }
    x
}

/// Smallest-singular-value proxy of (A - lambda I): the reciprocal growth
/// of two seeded inverse-iteration sweeps.  Small values certify that
/// lambda is numerically in the spectrum.
fn smallest_singular_proxy(a: &DenseMatrix, lambda: Complex64) -> f64 {
    let n = a.rows();
    let mut shifted: Vec<Complex64> = a.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for i in 0..n {
        shifted[i * n + i] -= lambda;
    }
    let piv = clu_decompose(&mut shifted, n);
    let mut rng = StdRng::seed_from_u64(0x5eed_cafe);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    normalize(&mut v);
    let mut proxy = f64::INFINITY;
    for _ in 0..2 {
        let x = clu_solve(&shifted, &piv, n, &v);
        let nx = norm2(&x);
        if !nx.is_finite() || nx == 0.0 {
            return 0.0;
        }
        proxy = proxy.min(1.0 / nx);
        v = x;
        normalize(&mut v);
    }
    proxy
}

pub(crate) fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn normalize(v: &mut [Complex64]) {
    let n = norm2(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_small_spectra() {
        // companion matrix of x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let a = DenseMatrix::from_rows(&[
            vec![6.0, -11.0, 6.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let ev = eigenvalues(&a).unwrap().expanded();
        let mut reals: Vec<f64> = ev.iter().map(|l| l.re).collect();
        reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, expect) in reals.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - expect).abs() < 1e-10);
        }

        // pure rotation has eigenvalues +-i
        let rot = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let ev = eigenvalues(&rot).unwrap().expanded();
        assert!((ev[0].im.abs() - 1.0).abs() < 1e-12);
        assert!((ev[0] + ev[1]).norm() < 1e-12);
    }

    #[test]
    fn moderate_dimension_trace_check() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(99);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let ev = eigenvalues(&a).unwrap().expanded();
        assert_eq!(ev.len(), n);
        let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
        let sum: Complex64 = ev.iter().sum();
        assert!((sum.re - trace).abs() < 1e-8 * n as f64);
        assert!(sum.im.abs() < 1e-8 * n as f64);
    }

    #[test]
    fn clu_solves_small_system() {
        let n = 3;
        let mut a: Vec<Complex64> = [
            2.0, 1.0, 0.0, //
            1.0, 3.0, 1.0, //
            0.0, 1.0, 4.0,
        ]
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
        let b: Vec<Complex64> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let a0 = a.clone();
        let piv = clu_decompose(&mut a, n);
        let x = clu_solve(&a, &piv, n, &b);
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += a0[i * n + j] * x[j];
            }
            assert!((acc - b[i]).norm() < 1e-12);
        }
    }
}
