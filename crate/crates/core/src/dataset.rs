//! Repeated-measurements datasets: per-subject covariate rows with optional
//! responses. Subjects are the unit of sample splitting; observations within
//! a subject are correlated, subjects are independent.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// One subject's observations. `covariates` is row-major `m x d`;
/// `responses`, when present, has length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub covariates: Vec<f64>,
    pub responses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedDataset {
    pub d: usize,
    pub subjects: Vec<Subject>,
}

impl RepeatedDataset {
    /// Builds a dataset, validating structural invariants: each subject's
    /// covariate count is a multiple of `d`, and response counts match the
    /// observation counts. Values themselves are not constrained here; the
    /// fitting routines require the unit cube via [`Self::check_unit_cube`].
    pub fn new(d: usize, subjects: Vec<Subject>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            if s.covariates.len() % d != 0 {
                return Err(Error::InvalidConfig(format!(
                    "subject {i}: covariate buffer length {} is not a multiple of d={d}",
                    s.covariates.len()
                )));
            }
            if let Some(r) = &s.responses {
                let m = s.covariates.len() / d;
                if r.len() != m {
                    return Err(Error::LengthMismatch {
                        left: m,
                        right: r.len(),
                    });
                }
            }
        }
        Ok(Self { d, subjects })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Observation count for subject `i`.
    pub fn m(&self, i: usize) -> usize {
        self.subjects[i].covariates.len() / self.d
    }

    /// Total observation count `N = sum m_i`.
    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(|s| s.covariates.len() / self.d).sum()
    }

    pub fn has_responses(&self) -> bool {
        !self.subjects.is_empty() && self.subjects.iter().all(|s| s.responses.is_some())
    }

    pub fn covariate_row(&self, subject: usize, obs: usize) -> &[f64] {
        let d = self.d;
        &self.subjects[subject].covariates[obs * d..(obs + 1) * d]
    }

    /// Iterates over all `(subject, obs, row)` triples in storage order.
    pub fn iter_rows(&self) -> impl Iterator<Item = (usize, usize, &[f64])> {
        let d = self.d;
        self.subjects.iter().enumerate().flat_map(move |(i, s)| {
            s.covariates
                .chunks_exact(d)
                .enumerate()
                .map(move |(j, row)| (i, j, row))
        })
    }

    /// All covariate rows flattened into an `N x d` array.
    pub fn flatten_covariates(&self) -> Array2<f64> {
        let n = self.total_observations();
        let mut out = Array2::zeros((n, self.d));
        let mut r = 0;
        for s in &self.subjects {
            for row in s.covariates.chunks_exact(self.d) {
                out.row_mut(r).assign(&ndarray::ArrayView1::from(row));
                r += 1;
            }
        }
        out
    }

    /// All responses flattened in the same order as [`Self::flatten_covariates`].
    pub fn flatten_responses(&self) -> Result<Array1<f64>> {
        if !self.has_responses() {
            return Err(Error::MissingResponses);
        }
        let mut out = Vec::with_capacity(self.total_observations());
        for s in &self.subjects {
            out.extend_from_slice(s.responses.as_ref().unwrap());
        }
        Ok(Array1::from_vec(out))
    }

    /// A copy with responses dropped.
    pub fn covariates_only(&self) -> RepeatedDataset {
        RepeatedDataset {
            d: self.d,
            subjects: self
                .subjects
                .iter()
                .map(|s| Subject {
                    covariates: s.covariates.clone(),
                    responses: None,
                })
                .collect(),
        }
    }

    /// Selects subjects by index, preserving the given order.
    pub fn select_subjects(&self, idx: &[usize]) -> RepeatedDataset {
        RepeatedDataset {
            d: self.d,
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    /// Verifies that every covariate coordinate lies in `[0,1]` and is finite.
    pub fn check_unit_cube(&self) -> Result<()> {
        for (_, _, row) in self.iter_rows() {
            for &v in row {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutsideDomain { d: self.d });
                }
            }
        }
        Ok(())
    }
}
