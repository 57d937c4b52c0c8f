//! Truncated T-SVD regularization.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{rank_tolerance, slice_svd};
use crate::error::{Error, Result};
use crate::spectral::{from_spectral, half_len, map_half, to_spectral, SpectralTensor3};
use crate::tensor::DenseTensor3;

/// How many tubal singular components to keep in each spectral slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationSpec {
    /// The `k` largest, shared by every slice.
    Rank(usize),
    /// The fewest largest components holding this share of the slice's
    /// squared singular values.
    Energy(f64),
}

#[derive(Debug, Clone)]
pub struct TtsvdSolution {
    pub x: DenseTensor3,
    /// `k` requested beyond `min(m, n)` and clamped.
    pub clamped: bool,
}

struct SliceFactors {
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v: DMatrix<Complex64>,
    rank: usize,
}

/// Per-slice SVDs of an operator, reusable across truncation levels.
pub struct TtsvdFactorization {
    m: usize,
    n: usize,
    p: usize,
    slices: Vec<SliceFactors>,
}

impl TtsvdFactorization {
    pub fn new(a: &DenseTensor3) -> Result<Self> {
        use rayon::prelude::*;
        let (m, n, p) = a.shape();
        let sa = to_spectral(a);
        let slices = (0..half_len(p).min(p))
            .into_par_iter()
            .map(|i| {
                let (u, sigma, v) = slice_svd(sa.slice(i))?;
                let tol = rank_tolerance(m, n, sigma.first().copied().unwrap_or(0.0));
                let rank = sigma.iter().take_while(|&&s| s > tol).count();
                Ok(SliceFactors { u, sigma, v, rank })
            })
            .collect::<Result<_>>()?;
        Ok(TtsvdFactorization { m, n, p, slices })
    }

    /// Largest numerical rank over the spectral slices.
    pub fn max_rank(&self) -> usize {
        self.slices.iter().map(|s| s.rank).max().unwrap_or(0)
    }

    fn keep(&self, s: &SliceFactors, spec: TruncationSpec) -> usize {
        match spec {
            TruncationSpec::Rank(k) => k.min(s.rank),
            TruncationSpec::Energy(fraction) => {
                let total: f64 = s.sigma.iter().map(|v| v * v).sum();
                let mut acc = 0.0;
                let mut count = 0;
                for v in &s.sigma[..s.rank] {
                    if acc >= fraction * total {
                        break;
                    }
                    acc += v * v;
                    count += 1;
                }
                count
            }
        }
    }

    pub fn solve(&self, b: &DenseTensor3, spec: TruncationSpec) -> Result<TtsvdSolution> {
        let (bm, _, bp) = b.shape();
        if bm != self.m || bp != self.p {
            return Err(Error::Shape(format!(
                "observation {:?} does not match operator {}x{}x{}",
                b.shape(),
                self.m,
                self.n,
                self.p
            )));
        }
        let clamped = match spec {
            TruncationSpec::Rank(0) => return Err(Error::Invalid("k must be at least 1".into())),
            TruncationSpec::Rank(k) => k > self.m.min(self.n),
            TruncationSpec::Energy(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::Invalid(format!("energy fraction {f} outside (0, 1]")))
            }
            TruncationSpec::Energy(_) => false,
        };
        let sb = to_spectral(b);
        let slices = map_half(self.p, |i| {
            let f = &self.slices[i];
            let keep = self.keep(f, spec);
            let mut x = DMatrix::<Complex64>::zeros(self.n, b.cols());
            for d in 0..keep {
                let coeff = f.u.column(d).adjoint() * sb.slice(i) / Complex64::new(f.sigma[d], 0.0);
                x += f.v.column(d) * coeff;
            }
            x
        });
        let x = from_spectral(&SpectralTensor3::from_slices(slices)?)?;
        Ok(TtsvdSolution { x, clamped })
    }
}

/// Truncated T-SVD solution of `a * x = b`.
pub fn ttsvd_solve(a: &DenseTensor3, b: &DenseTensor3, spec: TruncationSpec) -> Result<TtsvdSolution> {
    TtsvdFactorization::new(a)?.solve(b, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{identity_tensor, tpinv, tprod, ttranspose, tsvd};

    fn sample(m: usize, n: usize, p: usize, seed: usize) -> DenseTensor3 {
        DenseTensor3::from_fn(m, n, p, |i, j, k| (((i * 37 + j * 11 + k * 23 + seed * 7) % 29) as f64) / 14.5 - 1.0)
    }

    #[test]
    fn full_rank_recovers_exact_solution() {
        let a = DenseTensor3::from_fn(4, 4, 3, |i, j, k| sample(4, 4, 3, 1).get(i, j, k) + if i == j && k == 0 { 4.0 } else { 0.0 });
        let x_true = sample(4, 2, 3, 2);
        let b = tprod(&a, &x_true).unwrap();
        let sol = ttsvd_solve(&a, &b, TruncationSpec::Rank(4)).unwrap();
        assert!((&sol.x - &x_true).fnorm() <= 1e-8 * x_true.fnorm());
        assert!(!sol.clamped);
        assert!(ttsvd_solve(&a, &b, TruncationSpec::Rank(9)).unwrap().clamped);
    }

    #[test]
    fn full_rank_equals_pseudoinverse() {
        let a = sample(5, 3, 4, 3);
        let b = sample(5, 2, 4, 4);
        let sol = ttsvd_solve(&a, &b, TruncationSpec::Rank(3)).unwrap();
        let pinv = tprod(&tpinv(&a).unwrap(), &b).unwrap();
        assert!((&sol.x - &pinv).fnorm() <= 1e-9 * pinv.fnorm());
        let energy = ttsvd_solve(&a, &b, TruncationSpec::Energy(1.0)).unwrap();
        assert!((&energy.x - &pinv).fnorm() <= 1e-9 * pinv.fnorm());
    }

    #[test]
    fn rank_one_on_identity_projects_onto_leading_component() {
        let a = identity_tensor(3, 4);
        let b = sample(3, 1, 4, 5);
        let sol = ttsvd_solve(&a, &b, TruncationSpec::Rank(1)).unwrap();
        let f = tsvd(&a).unwrap();
        let u1 = f.u.sub_block(0, 3, 0, 1).unwrap();
        let proj = tprod(&u1, &tprod(&ttranspose(&u1), &b).unwrap()).unwrap();
        assert!((&sol.x - &proj).fnorm() <= 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let a = identity_tensor(2, 2);
        let b = sample(2, 1, 2, 6);
        assert!(ttsvd_solve(&a, &b, TruncationSpec::Rank(0)).is_err());
        assert!(ttsvd_solve(&a, &b, TruncationSpec::Energy(1.5)).is_err());
        assert!(ttsvd_solve(&a, &sample(3, 1, 2, 6), TruncationSpec::Rank(1)).is_err());
    }
}
