use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

use super::spectral_problem::SpectralProblem;
use super::{check_problem, iterate_matrix, tensor_scheme, Scheme, SolveReport, SolverConfig};

/// Outcome for one lateral slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceStatus {
    Solved(SolveReport),
    Failed(String),
}

impl SliceStatus {
    pub fn converged(&self) -> bool {
        matches!(self, SliceStatus::Solved(r) if r.converged)
    }

    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            SliceStatus::Solved(r) => Some(r),
            SliceStatus::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiSolution {
    /// `n x s x p`; failed slices are left at zero.
    pub x: DenseTensor3,
    pub statuses: Vec<SliceStatus>,
}

impl MultiSolution {
    pub fn all_converged(&self) -> bool {
        self.statuses.iter().all(SliceStatus::converged)
    }
}

/// Solves every lateral slice of `b` independently, in parallel.
pub fn solve_multi(a: &DenseTensor3, b: &DenseTensor3, k: &DenseTensor3, config: &SolverConfig) -> Result<MultiSolution> {
    let (m, n, p) = a.shape();
    if b.rows() != m || b.depth() != p {
        return Err(Error::Shape(format!("observation {:?} does not match operator {:?}", b.shape(), a.shape())));
    }
    config.validate()?;
    let slices: Vec<_> = (0..b.cols()).map(|j| b.lateral(j)).collect::<Result<_>>()?;
    check_problem(a, &slices[0], k)?;
    let problem = match config.scheme {
        Scheme::Tensor => Some(SpectralProblem::new(a, k)),
        Scheme::Matrix => None,
    };
    let outcomes: Vec<_> = slices
        .par_iter()
        .map(|bj| match &problem {
            Some(sp) => tensor_scheme::run(sp, &sp.rhs(bj), config),
            None => iterate_matrix(a, bj, k, config),
        })
        .collect();
    let mut columns = Vec::with_capacity(outcomes.len());
    let mut statuses = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(sol) => {
                columns.push(sol.x);
                statuses.push(SliceStatus::Solved(sol.report));
            }
            Err(e) => {
                columns.push(DenseTensor3::zeros(n, 1, p));
                statuses.push(SliceStatus::Failed(e.to_string()));
            }
        }
    }
    Ok(MultiSolution { x: DenseTensor3::from_lateral_slices(&columns)?, statuses })
}
