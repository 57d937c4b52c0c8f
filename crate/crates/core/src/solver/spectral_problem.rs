//! Fourier-domain form of the fixed-point quantities.
//!
//! Only slices `0..=p/2` are stored. Sums over all `p` slices use the
//! multiplicity of each stored slice, so `||X||_F^2 = sum_i w_i ||x_i||^2 / p`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::algebra::rank_tolerance;
use crate::error::Result;
use crate::spectral::{from_spectral, half_len, to_spectral, SpectralTensor3};
use crate::tensor::{DenseTensor3, LateralSlice, Tube};

use super::{MuMode, Multiplier};

type CVec = DVector<Complex64>;
type CMat = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Operator-side data shared by every right-hand side.
pub(crate) struct SpectralProblem {
    pub n: usize,
    pub p: usize,
    pub a: Vec<CMat>,
    pub k: Vec<CMat>,
    pub ata: Vec<CMat>,
    pub ktk: Vec<CMat>,
    pub weight: Vec<f64>,
}

/// Observation-side data for one lateral slice.
pub(crate) struct SpectralRhs {
    pub b: Vec<CVec>,
    pub atb: Vec<CVec>,
    pub btb: Vec<f64>,
}

/// Everything derived from one iterate.
pub(crate) struct SliceQuantities {
    pub r: Vec<CVec>,
    pub t: Vec<f64>,
    pub lambda_k: Vec<Complex64>,
    pub lambda_i: Vec<Complex64>,
    pub mu: Multiplier,
    pub fell_back: bool,
}

fn half_slices(t: &DenseTensor3) -> Vec<CMat> {
    let p = t.depth();
    let s = to_spectral(t);
    s.into_slices().into_iter().take(half_len(p).min(p)).collect()
}

/// Expands stored slices to all `p` by conjugation.
pub(crate) fn expand(half: &[CMat], p: usize) -> Vec<CMat> {
    let mut out: Vec<CMat> = half.to_vec();
    for i in half.len()..p {
        out.push(half[p - i].map(|z| z.conj()));
    }
    out
}

impl SpectralProblem {
    pub fn new(a: &DenseTensor3, k: &DenseTensor3) -> Self {
        let (_, n, p) = a.shape();
        let a_half = half_slices(a);
        let k_half = half_slices(k);
        let ata = a_half.iter().map(|s| s.adjoint() * s).collect();
        let ktk = k_half.iter().map(|s| s.adjoint() * s).collect();
        let h = a_half.len();
        let weight = (0..h).map(|i| if i == 0 || 2 * i == p { 1.0 } else { 2.0 }).collect();
        SpectralProblem { n, p, a: a_half, k: k_half, ata, ktk, weight }
    }

    pub fn half(&self) -> usize {
        self.a.len()
    }

    pub fn rhs(&self, b: &LateralSlice) -> SpectralRhs {
        let bh: Vec<CVec> = half_slices(b).into_iter().map(|s| s.column(0).into_owned()).collect();
        let atb = self.a.iter().zip(&bh).map(|(a, b)| a.adjoint() * b).collect();
        let btb = bh.iter().map(|b| b.norm_squared()).collect();
        SpectralRhs { b: bh, atb, btb }
    }

    /// `sum_i w_i f(i) / p`, the time-domain value of a Parseval sum.
    pub fn wsum(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.half()).map(|i| self.weight[i] * f(i)).sum::<f64>() / self.p as f64
    }

    pub fn lateral(&self, xs: &[CVec]) -> Result<LateralSlice> {
        let mats: Vec<CMat> = xs.iter().map(|v| CMat::from_column_slice(v.len(), 1, v.as_slice())).collect();
        from_spectral(&SpectralTensor3::from_slices(expand(&mats, self.p))?)
    }

    pub fn tube(&self, values: &[Complex64]) -> Result<Tube> {
        let mats: Vec<CMat> = values.iter().map(|z| CMat::from_element(1, 1, *z)).collect();
        from_spectral(&SpectralTensor3::from_slices(expand(&mats, self.p))?)
    }

    pub fn quantities(&self, rhs: &SpectralRhs, xs: &[CVec], mode: MuMode) -> Result<SliceQuantities> {
        let h = self.half();
        let xx: Vec<f64> = xs.iter().map(|x| x.norm_squared()).collect();
        let r: Vec<CVec> = (0..h).map(|i| (&rhs.b[i] - &self.a[i] * &xs[i]) / c(1.0 + xx[i])).collect();
        let t: Vec<f64> = (0..h).map(|i| (&self.k[i] * &xs[i]).norm_squared()).collect();
        let target: Vec<Complex64> = (0..h).map(|i| rhs.b[i].dotc(&r[i]) - c(r[i].norm_squared())).collect();

        let scalar_mu = || {
            let num = self.wsum(|i| t[i] * target[i].re);
            let den = self.wsum(|i| t[i] * t[i]);
            if den > 0.0 { num / den } else { 0.0 }
        };
        let tmax = t.iter().copied().fold(0.0, f64::max);
        let singular = tmax == 0.0 || t.iter().any(|&v| v <= rank_tolerance(1, 1, tmax));
        let (mu_hat, mu, fell_back) = match mode {
            MuMode::Tubewise if !singular => {
                let hat: Vec<Complex64> = (0..h).map(|i| target[i] / t[i]).collect();
                let tube = self.tube(&hat)?;
                (hat, Multiplier::Tube(tube), false)
            }
            _ => {
                let s = scalar_mu();
                (vec![c(s); h], Multiplier::Scalar(s), mode == MuMode::Tubewise)
            }
        };
        let lambda_k: Vec<Complex64> = (0..h).map(|i| mu_hat[i] * (1.0 + xx[i])).collect();
        let lambda_i: Vec<Complex64> = (0..h)
            .map(|i| mu_hat[i] * t[i] - c(r[i].norm_squared() * xx[i]) - r[i].dotc(&rhs.b[i]))
            .collect();
        Ok(SliceQuantities { r, t, lambda_k, lambda_i, mu, fell_back })
    }

    /// Spectral slice `i` of `Psi`.
    pub fn psi(&self, rhs: &SpectralRhs, i: usize, lambda_k: Complex64, t: f64) -> CMat {
        let n = self.n;
        let mut psi = CMat::zeros(n + 1, n + 1);
        let top = &self.ata[i] + &self.ktk[i] * lambda_k;
        psi.view_mut((0, 0), (n, n)).copy_from(&top);
        psi.view_mut((0, n), (n, 1)).copy_from(&rhs.atb[i]);
        psi.view_mut((n, 0), (1, n)).copy_from(&rhs.atb[i].adjoint());
        psi[(n, n)] = c(rhs.btb[i]) - lambda_k * t;
        psi
    }

    /// `[x; -1]` for one slice.
    pub fn extended(x: &CVec) -> CVec {
        let n = x.len();
        let mut v = CVec::zeros(n + 1);
        v.rows_mut(0, n).copy_from(x);
        v[n] = c(-1.0);
        v
    }

    /// Relative normal-equation residual of the iterate.
    pub fn normal_equation_residual(&self, rhs: &SpectralRhs, xs: &[CVec], q: &SliceQuantities) -> f64 {
        let res = self.wsum(|i| {
            let op = &self.ata[i] * &xs[i] + &xs[i] * q.lambda_i[i] + &self.ktk[i] * &xs[i] * q.lambda_k[i];
            (op - &rhs.atb[i]).norm_squared()
        });
        let scale = self.wsum(|i| rhs.atb[i].norm_squared());
        if scale > 0.0 { (res / scale).sqrt() } else { res.sqrt() }
    }

    /// `||Psi*z + z*lambda_I||_F^2` for `z = [X; -I] / ||[X; -I]||_F`.
    pub fn rho(&self, rhs: &SpectralRhs, xs: &[CVec], q: &SliceQuantities) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.half() {
            let v = Self::extended(&xs[i]);
            let psi = self.psi(rhs, i, q.lambda_k[i], q.t[i]);
            num += self.weight[i] * (&psi * &v + &v * q.lambda_i[i]).norm_squared();
            den += self.weight[i] * v.norm_squared();
        }
        if den > 0.0 { num / den } else { 0.0 }
    }

    /// `||K*X||_F`.
    pub fn constraint_norm(&self, q: &SliceQuantities) -> f64 {
        self.wsum(|i| q.t[i]).sqrt()
    }

    pub fn norm(&self, xs: &[CVec]) -> f64 {
        self.wsum(|i| xs[i].norm_squared()).sqrt()
    }

    /// Spectral slices of `A^T*B`, scaled by the chosen start rule.
    pub fn start(&self, rhs: &SpectralRhs, rule: super::StartRule) -> Vec<CVec> {
        let x0 = rhs.atb.clone();
        let scale = match rule {
            super::StartRule::UnitNorm => {
                let nrm = self.norm(&x0);
                if nrm > 0.0 { 1.0 / nrm } else { 0.0 }
            }
            super::StartRule::LeastSquaresScaled => {
                let num = self.wsum(|i| (&self.a[i] * &x0[i]).dotc(&rhs.b[i]).re);
                let den = self.wsum(|i| (&self.a[i] * &x0[i]).norm_squared());
                if den > 0.0 { num / den } else { 0.0 }
            }
        };
        x0.into_iter().map(|v| v * c(scale)).collect()
    }
}
