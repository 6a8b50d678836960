//! Dense SVD, hard-threshold truncation and the `Σ·Vᵀ` merge.
//!
//! The decomposition is a one-sided (Hestenes) Jacobi sweep, which is
//! deterministic for a fixed input and accurate to working precision for the
//! small and medium matrices handled here.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{dot, DenseMatrix};

const MAX_SWEEPS: usize = 80;

/// `W ≈ U·diag(σ)·Vᵀ` with `u: M×k`, `v: N×k`.
///
/// Fresh from [`svd_decompose`] or [`truncate`], `sigma` is non-increasing and
/// the columns of `u` and `v` are orthonormal. Fine-tuning updates all three
/// parts freely, so a trained factor is only guaranteed to be shape-consistent.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvdFactor {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactor {
    /// Builds a factor after checking that the shapes agree.
    pub fn from_parts(u: DenseMatrix, sigma: Vec<f64>, v: DenseMatrix) -> Result<Self> {
        let f = Self { u, sigma, v };
        f.check_shapes()?;
        Ok(f)
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `(M, N)` of the matrix this factor represents.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    pub fn check_shapes(&self) -> Result<()> {
        let k = self.sigma.len();
        if self.u.cols() != k || self.v.cols() != k {
            return Err(Error::invalid(alloc::format!(
                "factor shape mismatch: u {}x{}, sigma {}, v {}x{}",
                self.u.rows(),
                self.u.cols(),
                k,
                self.v.rows(),
                self.v.cols()
            )));
        }
        if self.sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("non-finite singular value"));
        }
        Ok(())
    }

    /// Largest deviation of `UᵀU` and `VᵀV` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let eu = gram_error(&self.u);
        let ev = gram_error(&self.v);
        if eu > ev {
            eu
        } else {
            ev
        }
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n) = self.shape();
        let k = self.rank();
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..k).map(|r| self.u[(i, r)] * self.sigma[r] * self.v[(j, r)]).sum()
        })
    }
}

fn gram_error(m: &DenseMatrix) -> f64 {
    let k = m.cols();
    let cols: Vec<Vec<f64>> = (0..k).map(|c| m.column(c)).collect();
    let mut worst: f64 = 0.0;
    for a in 0..k {
        for b in a..k {
            let target = if a == b { 1.0 } else { 0.0 };
            let e = (dot(&cols[a], &cols[b]) - target).abs();
            worst = worst.max(e);
        }
    }
    worst
}

/// Full-rank SVD of `w` (`k = min(M, N)`).
///
/// `tol` is the relative Frobenius reconstruction tolerance the result must
/// meet; the Jacobi iteration runs to convergence regardless, and an error is
/// returned if the bound is missed.
///
/// Determinism: singular values are sorted with a stable sort (ties keep
/// column order) and each `u` column is signed so that its first entry with
/// magnitude above `1e-12` is non-negative.
pub fn svd_decompose(w: &DenseMatrix, tol: f64) -> Result<SvdFactor> {
    let (m, n) = w.shape();
    if m == 0 || n == 0 {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    if !w.is_finite() {
        return Err(Error::invalid("svd input contains non-finite values"));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::invalid("svd tolerance must be non-negative"));
    }
    let f = if m >= n {
        jacobi_tall(w)
    } else {
        let t = jacobi_tall(&w.transpose());
        let mut f = SvdFactor {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        fix_signs(&mut f);
        f
    };
    let norm = w.frobenius_norm();
    let err = f.reconstruct().sub(w)?.frobenius_norm();
    if err > tol * norm && err > f64::EPSILON * 16.0 {
        return Err(Error::invalid(alloc::format!(
            "svd did not reach tolerance {tol:e} (relative error {:e})",
            err / norm
        )));
    }
    Ok(f)
}

/// One-sided Jacobi for `m >= n`. Works on columns stored contiguously.
fn jacobi_tall(w: &DenseMatrix) -> SvdFactor {
    let (m, n) = w.shape();
    let mut a: Vec<Vec<f64>> = (0..n).map(|c| w.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= eps * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|col| math::sqrt(dot(col, col))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(core::cmp::Ordering::Equal));

    let smax = norms[order[0]];
    let cutoff = smax * eps * (m.max(n) as f64);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    let mut sigma = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > cutoff && s > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / s).collect());
            sigma.push(s);
        } else {
            u_cols.push(vec![0.0; m]);
            sigma.push(0.0);
            deficient.push(slot);
        }
    }
    complete_basis(&mut u_cols, &deficient);

    let mut f = SvdFactor {
        u: columns_to_matrix(m, &u_cols),
        sigma,
        v: columns_to_matrix(n, &order.iter().map(|&j| v[j].clone()).collect::<Vec<_>>()),
    };
    fix_signs(&mut f);
    f
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a = *xi;
        let b = *yi;
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the listed (zero) columns with unit vectors orthogonal to the rest,
/// by Gram–Schmidt over the standard basis.
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = cols[0].len();
    let mut candidate = 0;
    for &slot in missing {
        loop {
            let mut e = vec![0.0; m];
            e[candidate % m] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == slot {
                        continue;
                    }
                    let p = dot(&e, c);
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= p * ci;
                    }
                }
            }
            let nrm = math::sqrt(dot(&e, &e));
            if nrm > 1e-6 {
                cols[slot] = e.iter().map(|x| x / nrm).collect();
                break;
            }
            assert!(candidate < 2 * m + missing.len(), "basis completion failed");
        }
    }
}

fn columns_to_matrix(rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

fn fix_signs(f: &mut SvdFactor) {
    for r in 0..f.rank() {
        let lead = (0..f.u.rows())
            .map(|i| f.u[(i, r)])
            .find(|x| x.abs() > 1e-12)
            .unwrap_or(0.0);
        if lead < 0.0 {
            for i in 0..f.u.rows() {
                f.u[(i, r)] = -f.u[(i, r)];
            }
            for j in 0..f.v.rows() {
                f.v[(j, r)] = -f.v[(j, r)];
            }
        }
    }
}

/// `floor(d1·d2 / (d1 + d2))`: the largest rank whose factored form costs no
/// more parameters than the dense matrix. Can be 0 for thin shapes.
pub fn hard_threshold_rank(d1: usize, d2: usize) -> usize {
    if d1 == 0 || d2 == 0 {
        return 0;
    }
    ((d1 as u128 * d2 as u128) / (d1 as u128 + d2 as u128)) as usize
}

/// Hard-threshold rank clamped to `[min_rank, min(d1, d2)]`.
pub fn truncation_rank(d1: usize, d2: usize, min_rank: usize) -> usize {
    hard_threshold_rank(d1, d2).max(min_rank).min(d1.min(d2))
}

/// Keeps the leading `k` ranks.
pub fn truncate(f: &SvdFactor, k: usize) -> Result<SvdFactor> {
    let full = f.rank();
    if k == 0 || k > full {
        return Err(Error::InvalidRank { rank: k, max: full });
    }
    let keep: Vec<usize> = (0..k).collect();
    Ok(SvdFactor {
        u: f.u.select_columns(&keep),
        sigma: f.sigma[..k].to_vec(),
        v: f.v.select_columns(&keep),
    })
}

/// `sqrt(Σ_{r≥k} σ_r²)`: the Frobenius error of keeping the first `k` ranks.
pub fn tail_error(sigma: &[f64], k: usize) -> f64 {
    math::sqrt(sigma.iter().skip(k).map(|s| s * s).sum())
}

/// Splits a factor into `b = diag(σ)·Vᵀ` (`k×N`) and `u` (`M×k`).
/// Row `r` of `b` and column `r` of `u` both belong to rank `r`.
pub fn merge_sigma_vt(f: &SvdFactor) -> (DenseMatrix, DenseMatrix) {
    let k = f.rank();
    let n = f.v.rows();
    let b = DenseMatrix::from_fn(k, n, |r, j| f.sigma[r] * f.v[(j, r)]);
    (b, f.u.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut g = rng::stream(seed, 0);
        DenseMatrix::from_fn(m, n, |_, _| rng::standard_normal(&mut g))
    }

    #[test]
    fn identity_is_its_own_svd() {
        let f = svd_decompose(&DenseMatrix::identity(3), 1e-12).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0, 1.0]);
        assert_eq!(f.u, DenseMatrix::identity(3));
        assert_eq!(f.v, DenseMatrix::identity(3));
    }

    #[test]
    fn diagonal_values_come_back_sorted() {
        let f = svd_decompose(&DenseMatrix::diag(&[1.0, 3.0, 2.0]), 1e-12).unwrap();
        for (s, e) in f.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn random_8x6_reconstructs() {
        let w = random(8, 6, 42);
        let f = svd_decompose(&w, 1e-10).unwrap();
        assert_eq!(f.rank(), 6);
        let err = f.reconstruct().sub(&w).unwrap().frobenius_norm() / w.frobenius_norm();
        assert!(err <= 1e-10, "{err}");
        assert!(f.orthonormality_error() < 1e-10);
        assert!(f.sigma.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let w = random(4, 9, 1);
        let f = svd_decompose(&w, 1e-10).unwrap();
        assert_eq!((f.u.shape(), f.v.shape()), ((4, 4), (9, 4)));

        // rank 1: outer product
        let w = DenseMatrix::from_fn(5, 4, |i, j| (i + 1) as f64 * (j as f64 - 1.5));
        let f = svd_decompose(&w, 1e-10).unwrap();
        assert!(f.sigma[1] < 1e-12);
        assert!(f.orthonormality_error() < 1e-10);
    }

    #[test]
    fn sign_convention_holds() {
        let f = svd_decompose(&random(7, 5, 9), 1e-10).unwrap();
        for r in 0..f.rank() {
            let lead = f.u.column(r).into_iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(svd_decompose(&DenseMatrix::zeros(0, 3), 1e-8).is_err());
    }

    #[test]
    fn hard_threshold_examples() {
        assert_eq!(hard_threshold_rank(768, 768), 384);
        assert_eq!(hard_threshold_rank(768, 3072), 614);
        for n in 1..50 {
            assert_eq!(hard_threshold_rank(1, n), 0);
        }
        assert_eq!(truncation_rank(1, 10, 1), 1);
    }

    #[test]
    fn truncation_error_matches_tail() {
        let f = svd_decompose(&DenseMatrix::diag(&[3.0, 2.0, 1.0]), 1e-12).unwrap();
        let t = truncate(&f, 2).unwrap();
        let err = t.reconstruct().sub(&DenseMatrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert!((err.frobenius_norm() - 1.0).abs() < 1e-12);
        assert!((tail_error(&f.sigma, 2) - 1.0).abs() < 1e-15);
        assert_eq!(tail_error(&f.sigma, 3), 0.0);
        assert!(matches!(truncate(&f, 0), Err(Error::InvalidRank { .. })));
        assert!(matches!(truncate(&f, 4), Err(Error::InvalidRank { rank: 4, max: 3 })));

        let w = random(16, 16, 7);
        let f = svd_decompose(&w, 1e-10).unwrap();
        let t = truncate(&f, 4).unwrap();
        let direct = t.reconstruct().sub(&w).unwrap().frobenius_norm();
        assert!((direct - tail_error(&f.sigma, 4)).abs() < 1e-10);
    }

    #[test]
    fn merge_reconstructs() {
        let w = DenseMatrix::diag(&[3.0, 2.0, 1.0]);
        let f = svd_decompose(&w, 1e-12).unwrap();
        let (b, u) = merge_sigma_vt(&f);
        assert!(u.matmul(&b).unwrap().max_abs_diff(&w) < 1e-10);

        let f1 = truncate(&svd_decompose(&random(5, 6, 3), 1e-10).unwrap(), 1).unwrap();
        let (b, _) = merge_sigma_vt(&f1);
        assert_eq!(b.shape(), (1, 6));

        let ones = SvdFactor::from_parts(f.u.clone(), vec![1.0; 3], f.v.clone()).unwrap();
        assert_eq!(merge_sigma_vt(&ones).0, f.v.transpose());
    }
}
