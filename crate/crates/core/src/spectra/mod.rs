//! Finite-dimensional spectral machinery: dense matrices, Kronecker
//! products, the antisymmetrizing projection, compound matrices of minors,
//! a dense nonsymmetric eigensolver, and multiplicity bookkeeping for
//! spectra of tensor and exterior products.

mod eigen;

pub use eigen::{eigenvalues, ComplexSpectrum, SpectrumEntry};
pub(crate) use eigen::{clu_decompose, clu_solve, norm2, normalize};

use crate::error::{capacity, invalid, Result};
use crate::segfun::det_in_place;
use num_complex::Complex64;

/// Hard ceiling on eigenproblem dimension.
pub const MAX_EIGEN_DIM: usize = 2048;

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DenseMatrix> {
        if rows.is_empty() {
            return invalid("matrix needs at least one row");
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return invalid("matrix rows must be nonempty and of equal length");
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("matrix entries must be finite");
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diag(entries: &[f64]) -> DenseMatrix {
        let n = entries.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return invalid("matrix product dimension mismatch");
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return invalid("matrix difference dimension mismatch");
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Numerical rank by row reduction with the given absolute tolerance.
    pub fn rank(&self, tol: f64) -> usize {
        let mut a = self.data.clone();
        let (r, c) = (self.rows, self.cols);
        let mut rank = 0;
        let mut row = 0;
        for col in 0..c {
            let mut piv = row;
            for i in row..r {
                if a[i * c + col].abs() > a[piv * c + col].abs() {
                    piv = i;
                }
            }
            if a[piv * c + col].abs() <= tol {
                continue;
            }
            for j in 0..c {
                a.swap(row * c + j, piv * c + j);
            }
            for i in row + 1..r {
                let f = a[i * c + col] / a[row * c + col];
                for j in col..c {
                    a[i * c + j] -= f * a[row * c + j];
                }
            }
            rank += 1;
            row += 1;
            if row == r {
                break;
            }
        }
        rank
    }
}

/// Kronecker product; dimensions multiply.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = a.rows() * b.rows();
    let cols = a.cols() * b.cols();
    if rows.saturating_mul(cols) > MAX_EIGEN_DIM * MAX_EIGEN_DIM {
        return capacity(format!("kronecker product size {rows}x{cols} too large"));
    }
    let mut out = DenseMatrix::zeros(rows, cols);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let av = a.get(i, j);
            if av == 0.0 {
                continue;
            }
            for p in 0..b.rows() {
                for q in 0..b.cols() {
                    out.set(i * b.rows() + p, j * b.cols() + q, av * b.get(p, q));
                }
            }
        }
    }
    Ok(out)
}

fn permutations_with_sign(m: usize) -> Vec<(Vec<usize>, f64)> {
    // Heap's algorithm; each swap flips the sign
    let mut perm: Vec<usize> = (0..m).collect();
    let mut out = vec![(perm.clone(), 1.0)];
    let mut c = vec![0usize; m];
    let mut sign = 1.0;
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            sign = -sign;
            out.push((perm.clone(), sign));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// The projection (1/m!) sum over permutations of sgn(sigma) S_sigma on
/// coordinate tensors of dimension n^m.
pub fn antisymmetrizer(n: usize, m: usize) -> Result<DenseMatrix> {
    let dim = n.checked_pow(m as u32).filter(|&d| d <= 4096);
    let dim = match dim {
        Some(d) => d,
        None => return capacity(format!("antisymmetrizer dimension {n}^{m} exceeds 4096")),
    };
    let mut p = DenseMatrix::zeros(dim, dim);
    let perms = permutations_with_sign(m);
    let fact = perms.len() as f64;
    let mut digits = vec![0usize; m];
    for col in 0..dim {
        // decode column multi-index (big-endian digits base n)
        let mut rem = col;
        for d in (0..m).rev() {
            digits[d] = rem % n;
            rem /= n;
        }
        for (perm, sign) in &perms {
            let mut row = 0usize;
            for k in 0..m {
                row = row * n + digits[perm[k]];
            }
            let v = p.get(row, col) + sign / fact;
            p.set(row, col, v);
        }
    }
    Ok(p)
}

fn strictly_increasing_tuples(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; m];
    fn rec(n: usize, m: usize, start: usize, depth: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if depth == m {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur[depth] = v;
            rec(n, m, v + 1, depth + 1, cur, out);
        }
    }
    rec(n, m, 0, 0, &mut cur, &mut out);
    out
}

/// The compound matrix of m-by-m minors, rows and columns indexed by
/// lexicographically ordered strictly increasing index sets.  Equals the
/// restriction of the m-fold Kronecker power to the antisymmetric range in
/// the induced basis.
pub fn compound_matrix(a: &DenseMatrix, m: usize) -> Result<DenseMatrix> {
    if !a.is_square() {
        return invalid("compound matrix needs a square input");
    }
    let n = a.rows();
    if m < 1 || m > n {
        return invalid(format!("compound order m = {m} outside 1..={n}"));
    }
    let sets = strictly_increasing_tuples(n, m);
    let dim = sets.len();
    let mut out = DenseMatrix::zeros(dim, dim);
    let mut minor = vec![0.0f64; m * m];
    for (ri, rset) in sets.iter().enumerate() {
        for (ci, cset) in sets.iter().enumerate() {
            for (p, &rr) in rset.iter().enumerate() {
                for (q, &cc) in cset.iter().enumerate() {
                    minor[p * m + q] = a.get(rr, cc);
                }
            }
            out.set(ri, ci, det_in_place(&mut minor, m));
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut c = 1usize;
    for i in 0..k.min(n - k) {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Multiplicity of lambda0 in the spectrum of the m-fold exterior power of
/// an operator with the given spectrum: unordered factorizations
/// lambda0 = product of m eigenvalues, each used at most its multiplicity,
/// contributing the product of binomial(multiplicity, uses).
pub fn predicted_wedge_multiplicity(
    spectrum: &[(Complex64, usize)],
    m: usize,
    lambda0: Complex64,
) -> Result<usize> {
    if lambda0.norm() == 0.0 {
        return invalid("lambda0 must be nonzero");
    }
    let tol = 1e-9 * (1.0 + lambda0.norm());
    fn rec(
        spectrum: &[(Complex64, usize)],
        idx: usize,
        remaining: usize,
        acc: Complex64,
        weight: usize,
        lambda0: Complex64,
        tol: f64,
        total: &mut usize,
    ) {
        if remaining == 0 {
            if (acc - lambda0).norm() <= tol {
                *total += weight;
            }
            return;
        }
        if idx == spectrum.len() {
            return;
        }
        let (lam, mult) = spectrum[idx];
        for uses in 0..=remaining.min(mult) {
            let w = weight * binomial(mult, uses);
            let mut prod = acc;
            for _ in 0..uses {
                prod *= lam;
            }
            rec(
                spectrum,
                idx + 1,
                remaining - uses,
                prod,
                w,
                lambda0,
                tol,
                total,
            );
        }
    }
    let mut total = 0usize;
    rec(
        spectrum,
        0,
        m,
        Complex64::new(1.0, 0.0),
        1,
        lambda0,
        tol,
        &mut total,
    );
    Ok(total)
}

/// Multiplicity of lambda0 in the spectrum of a tensor product of factors
/// with the given spectra: the sum over factorizations of the product of
/// per-factor multiplicities.
pub fn predicted_tensor_multiplicity(
    factors: &[Vec<(Complex64, usize)>],
    lambda0: Complex64,
) -> Result<usize> {
    if lambda0.norm() == 0.0 {
        return invalid("lambda0 must be nonzero");
    }
    let tol = 1e-9 * (1.0 + lambda0.norm());
    fn rec(
        factors: &[Vec<(Complex64, usize)>],
        idx: usize,
        acc: Complex64,
        weight: usize,
        lambda0: Complex64,
        tol: f64,
        total: &mut usize,
    ) {
        if idx == factors.len() {
            if (acc - lambda0).norm() <= tol {
                *total += weight;
            }
            return;
        }
        for &(lam, mult) in &factors[idx] {
            rec(factors, idx + 1, acc * lam, weight * mult, lambda0, tol, total);
        }
    }
    let mut total = 0usize;
    rec(
        factors,
        0,
        Complex64::new(1.0, 0.0),
        1,
        lambda0,
        tol,
        &mut total,
    );
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, n: usize) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        DenseMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn eigen_triangular_and_fibonacci() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let spec = eigenvalues(&a).unwrap();
        assert_eq!(spec.entries().len(), 1);
        assert_eq!(spec.entries()[0].multiplicity, 2);
        assert!((spec.entries()[0].value.re - 2.0).abs() < 1e-12);

        // roots of x^2 - x - 1 via the quadratic formula oracle
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let spec = eigenvalues(&a).unwrap();
        let expanded = spec.expanded();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((expanded[0].re - phi).abs() < 1e-12);
        assert!((expanded[1].re - (1.0 - phi)).abs() < 1e-12);

        let spec = eigenvalues(&DenseMatrix::identity(5)).unwrap();
        assert_eq!(spec.entries().len(), 1);
        assert_eq!(spec.entries()[0].multiplicity, 5);

        assert!(eigenvalues(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_conjugate_pairs_for_real_input() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 6);
            let spec = eigenvalues(&a).unwrap();
            let ev = spec.expanded();
            let mut imags: Vec<f64> = ev.iter().map(|l| l.im).filter(|i| i.abs() > 0.0).collect();
            imags.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = imags.len();
            for i in 0..k / 2 {
                assert!(
                    (imags[i] + imags[k - 1 - i]).abs() < 1e-10,
                    "imaginary parts not conjugate-paired"
                );
            }
        }
    }

    #[test]
    fn kron_examples() {
        let a = DenseMatrix::diag(&[1.0, 2.0]);
        let b = DenseMatrix::diag(&[3.0, 4.0]);
        let k = kron(&a, &b).unwrap();
        assert_eq!(k.rows(), 4);
        for (i, expect) in [3.0, 4.0, 6.0, 8.0].iter().enumerate() {
            assert_eq!(k.get(i, i), *expect);
        }
        let a = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let k = kron(&a, &DenseMatrix::identity(1)).unwrap();
        assert_eq!(k, a);
    }

    #[test]
    fn kron_spectrum_is_pairwise_products() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 3);
        let b = random_matrix(&mut rng, 2);
        let ka = kron(&a, &b).unwrap();
        let mut products: Vec<Complex64> = Vec::new();
        for la in eigenvalues(&a).unwrap().expanded() {
            for lb in eigenvalues(&b).unwrap().expanded() {
                products.push(la * lb);
            }
        }
        let mut got = eigenvalues(&ka).unwrap().expanded();
        let scale = a.frobenius_norm() * b.frobenius_norm();
        for p in products {
            let (best, dist) = got
                .iter()
                .enumerate()
                .map(|(i, g)| (i, (g - p).norm()))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            assert!(dist <= 1e-8 * scale.max(1.0), "unmatched product {p}");
            got.remove(best);
        }
        assert!(got.is_empty());
    }

    #[test]
    fn antisymmetrizer_rank_and_projection() {
        for (n, m, expected_rank) in [(2, 2, 1usize), (3, 2, 3), (2, 3, 0)] {
            let p = antisymmetrizer(n, m).unwrap();
            let p2 = p.mul(&p).unwrap();
            assert!(p2.sub(&p).unwrap().max_abs() < 1e-12, "P^2 != P");
            assert_eq!(p.rank(1e-10), expected_rank);
            // trace of a projection equals its rank
            let trace: f64 = (0..p.rows()).map(|i| p.get(i, i)).sum();
            assert!((trace - expected_rank as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn antisymmetrizer_commutes_with_kron_power() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3);
        let a2 = kron(&a, &a).unwrap();
        let p = antisymmetrizer(3, 2).unwrap();
        let lhs = p.mul(&a2).unwrap();
        let rhs = a2.mul(&p).unwrap();
        let bound = 1e-10 * a.frobenius_norm().powi(2);
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= bound);
    }

    #[test]
    fn compound_examples() {
        let rot = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let c = compound_matrix(&rot, 2).unwrap();
        assert_eq!(c.rows(), 1);
        assert!((c.get(0, 0) - 1.0).abs() < 1e-15);

        let d = compound_matrix(&DenseMatrix::diag(&[2.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(
            (d.get(0, 0), d.get(1, 1), d.get(2, 2)),
            (4.0, 6.0, 6.0)
        );

        assert!(compound_matrix(&DenseMatrix::identity(2), 3).is_err());
    }

    #[test]
    fn compound_spectrum_is_pair_products() {
        let mut rng = StdRng::seed_from_u64(21);
        let a = random_matrix(&mut rng, 4);
        let lam = eigenvalues(&a).unwrap().expanded();
        let c = compound_matrix(&a, 2).unwrap();
        let mut got = eigenvalues(&c).unwrap().expanded();
        let scale = a.frobenius_norm().powi(2).max(1.0);
        for i in 0..4 {
            for j in i + 1..4 {
                let p = lam[i] * lam[j];
                let (best, dist) = got
                    .iter()
                    .enumerate()
                    .map(|(k, g)| (k, (g - p).norm()))
                    .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                    .unwrap();
                assert!(dist <= 1e-7 * scale, "unmatched pair product {p}");
                got.remove(best);
            }
        }
        assert!(got.is_empty());
    }

    #[test]
    fn compound_contained_in_kron_power_spectrum() {
        let mut rng = StdRng::seed_from_u64(5);
        for m in [2usize, 3] {
            let a = random_matrix(&mut rng, 4);
            let c = compound_matrix(&a, m).unwrap();
            let mut power = kron(&a, &a).unwrap();
            if m == 3 {
                power = kron(&power, &a).unwrap();
            }
            let big = eigenvalues(&power).unwrap().expanded();
            let scale = a.frobenius_norm().powi(m as i32).max(1.0);
            for lam in eigenvalues(&c).unwrap().expanded() {
                let close = big.iter().any(|b| (b - lam).norm() <= 1e-6 * scale);
                assert!(close, "compound eigenvalue {lam} not in kron power spectrum");
            }
        }
    }

    #[test]
    fn compound_matches_projection_route() {
        // minors route equals restriction of the kron power to ran(P)
        let mut rng = StdRng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 3);
        let c = compound_matrix(&a, 2).unwrap();
        // basis of ran(P): e_i ^ e_j = (e_i x e_j - e_j x e_i)/sqrt(2) normalization-free
        let n = 3usize;
        let pairs = strictly_increasing_tuples(n, 2);
        let a2 = kron(&a, &a).unwrap();
        for (ri, r) in pairs.iter().enumerate() {
            for (ci, cset) in pairs.iter().enumerate() {
                // coefficient of (e_{r0}^e_{r1}) in A2 (e_{c0}^e_{c1})
                let col_p = cset[0] * n + cset[1];
                let col_q = cset[1] * n + cset[0];
                let row_p = r[0] * n + r[1];
                let v = a2.get(row_p, col_p) - a2.get(row_p, col_q);
                assert!(
                    (v - c.get(ri, ci)).abs() < 1e-12,
                    "projection route disagrees at ({ri},{ci})"
                );
            }
        }
    }

    #[test]
    fn wedge_multiplicity_examples() {
        let spec = vec![(Complex64::new(2.0, 0.0), 2), (Complex64::new(3.0, 0.0), 1)];
        assert_eq!(
            predicted_wedge_multiplicity(&spec, 2, Complex64::new(6.0, 0.0)).unwrap(),
            2
        );
        assert_eq!(
            predicted_wedge_multiplicity(&spec, 2, Complex64::new(4.0, 0.0)).unwrap(),
            1
        );
        let spec = vec![
            (Complex64::new(2.0, 0.0), 1),
            (Complex64::new(3.0, 0.0), 1),
            (Complex64::new(5.0, 0.0), 1),
        ];
        assert_eq!(
            predicted_wedge_multiplicity(&spec, 3, Complex64::new(30.0, 0.0)).unwrap(),
            1
        );
        assert_eq!(
            predicted_wedge_multiplicity(&spec, 2, Complex64::new(7.0, 0.0)).unwrap(),
            0
        );
        assert!(predicted_wedge_multiplicity(&spec, 2, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn wedge_multiplicity_matches_compound_for_integer_spectra() {
        let a = DenseMatrix::diag(&[2.0, 2.0, 3.0, 5.0]);
        let c = compound_matrix(&a, 2).unwrap();
        let spec_a = vec![
            (Complex64::new(2.0, 0.0), 2usize),
            (Complex64::new(3.0, 0.0), 1),
            (Complex64::new(5.0, 0.0), 1),
        ];
        let cspec = eigenvalues(&c).unwrap();
        for entry in cspec.entries() {
            let predicted =
                predicted_wedge_multiplicity(&spec_a, 2, entry.value).unwrap();
            assert_eq!(predicted, entry.multiplicity, "at {}", entry.value);
        }
    }

    #[test]
    fn tensor_multiplicity_counts_tuples() {
        let f1 = vec![(Complex64::new(2.0, 0.0), 2), (Complex64::new(3.0, 0.0), 1)];
        let f2 = vec![(Complex64::new(3.0, 0.0), 1), (Complex64::new(2.0, 0.0), 1)];
        // 6 = 2*3 (mult 2*1) + 3*2 (mult 1*1) = 3
        assert_eq!(
            predicted_tensor_multiplicity(&[f1, f2], Complex64::new(6.0, 0.0)).unwrap(),
            3
        );
    }
}
