//! Best-of-n selection and the uncertainty aggregates measured from it.
//!
//! Candidates arrive as `(nll, length, score)` triples. Selection filters by
//! score threshold, then minimizes length-normalized nll; the aggregates
//! deliberately differ in normalization — the argmin criterion divides by
//! length, while the reported verifier uncertainty is the *total* nll of the
//! winner. Both behaviors are load-bearing and covered by tests.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("nll must be finite and nonnegative, got {nll}")]
    InvalidNll { nll: f64 },
    #[error("length must be at least 1 token")]
    ZeroLength,
    #[error("score must lie in [0, 1], got {score}")]
    InvalidScore { score: f64 },
    #[error("threshold must lie in [0, 1], got {sigma}")]
    InvalidSigma { sigma: f64 },
    #[error("candidate set must be non-empty")]
    EmptyCandidateSet,
    #[error("no candidate scores at or above the threshold {sigma}")]
    AllBelowThreshold { sigma: f64 },
    #[error("prompt {prompt_id}: no candidate scores at or above the threshold {sigma}")]
    AllBelowThresholdForPrompt { prompt_id: String, sigma: f64 },
    #[error("at least one prompt is required")]
    EmptyInput,
    #[error("nll at index {index} is not finite")]
    NonFiniteNll { index: usize },
    #[error("got {solver} solver responses but {sets} candidate sets")]
    PromptCountMismatch { solver: usize, sets: usize },
    #[error("correctness matrix needs at least one row and one column")]
    EmptyMatrix,
    #[error("correctness matrix row {row} has a different length than row 0")]
    RaggedMatrix { row: usize },
    #[error("k must lie in 1..={n}, got {k}")]
    KOutOfRange { k: usize, n: usize },
}

/// One scored response: total negative log-likelihood, token length, and a
/// verifier score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    nll: f64,
    length: u32,
    score: f64,
}

impl Candidate {
    pub fn new(nll: f64, length: u32, score: f64) -> Result<Self, SelectError> {
        if !(nll.is_finite() && nll >= 0.0) {
            return Err(SelectError::InvalidNll { nll });
        }
        if length == 0 {
            return Err(SelectError::ZeroLength);
        }
        if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
            return Err(SelectError::InvalidScore { score });
        }
        Ok(Self { nll, length, score })
    }

    pub fn nll(&self) -> f64 {
        self.nll
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Per-token nll, the quantity the selection argmin runs over.
    pub fn normalized_nll(&self) -> f64 {
        self.nll / f64::from(self.length)
    }
}

/// All candidates sampled for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    prompt_id: String,
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(
        prompt_id: impl Into<String>,
        candidates: Vec<Candidate>,
    ) -> Result<Self, SelectError> {
        if candidates.is_empty() {
            return Err(SelectError::EmptyCandidateSet);
        }
        Ok(Self {
            prompt_id: prompt_id.into(),
            candidates,
        })
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }
}

fn check_sigma(sigma: f64) -> Result<(), SelectError> {
    if sigma.is_finite() && (0.0..=1.0).contains(&sigma) {
        Ok(())
    } else {
        Err(SelectError::InvalidSigma { sigma })
    }
}

/// Index of the best-of-n winner: among candidates scoring at least `sigma`,
/// the one with minimal length-normalized nll. Ties break to the lowest
/// index, so the result is a pure function of the sequence.
pub fn select_bon(set: &CandidateSet, sigma: f64) -> Result<usize, SelectError> {
    check_sigma(sigma)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in set.candidates().iter().enumerate() {
        if c.score() < sigma {
            continue;
        }
        let norm = c.normalized_nll();
        match best {
            Some((_, current)) if norm >= current => {}
            _ => best = Some((i, norm)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or(SelectError::AllBelowThreshold { sigma })
}

/// Mean nll of the responses the solver produced directly.
pub fn solver_uncertainty(nlls: &[f64]) -> Result<f64, SelectError> {
    if nlls.is_empty() {
        return Err(SelectError::EmptyInput);
    }
    for (index, &v) in nlls.iter().enumerate() {
        if !v.is_finite() {
            return Err(SelectError::NonFiniteNll { index });
        }
    }
    Ok(nlls.iter().sum::<f64>() / nlls.len() as f64)
}

/// Mean *total* nll of each prompt's best-of-n winner. A prompt whose
/// candidates all fall below the threshold fails the whole aggregate, named.
pub fn verifier_uncertainty(sets: &[CandidateSet], sigma: f64) -> Result<f64, SelectError> {
    if sets.is_empty() {
        return Err(SelectError::EmptyInput);
    }
    let mut sum = 0.0;
    for set in sets {
        let i = select_bon(set, sigma).map_err(|e| match e {
            SelectError::AllBelowThreshold { sigma } => SelectError::AllBelowThresholdForPrompt {
                prompt_id: String::from(set.prompt_id()),
                sigma,
            },
            other => other,
        })?;
        sum += set.candidates()[i].nll();
    }
    Ok(sum / sets.len() as f64)
}

/// Solver uncertainty minus verifier uncertainty over the same prompts.
pub fn capability_gap(
    solver_nlls: &[f64],
    sets: &[CandidateSet],
    sigma: f64,
) -> Result<f64, SelectError> {
    if solver_nlls.len() != sets.len() {
        return Err(SelectError::PromptCountMismatch {
            solver: solver_nlls.len(),
            sets: sets.len(),
        });
    }
    Ok(solver_uncertainty(solver_nlls)? - verifier_uncertainty(sets, sigma)?)
}

/// Per-prompt correctness of the first, second, ... n-th sampled response.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessMatrix {
    rows: Vec<Vec<bool>>,
}

impl CorrectnessMatrix {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self, SelectError> {
        let Some(first) = rows.first() else {
            return Err(SelectError::EmptyMatrix);
        };
        if first.is_empty() {
            return Err(SelectError::EmptyMatrix);
        }
        let width = first.len();
        for (row, r) in rows.iter().enumerate().skip(1) {
            if r.len() != width {
                return Err(SelectError::RaggedMatrix { row });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn num_prompts(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }
}

/// Fraction of prompts whose first `k` responses contain a correct one —
/// the direct prefix definition, not the combinatorial estimator.
pub fn pass_at_k(matrix: &CorrectnessMatrix, k: usize) -> Result<f64, SelectError> {
    let n = matrix.width();
    if k == 0 || k > n {
        return Err(SelectError::KOutOfRange { k, n });
    }
    let hits = matrix
        .rows()
        .iter()
        .filter(|row| row[..k].iter().any(|&c| c))
        .count();
    Ok(hits as f64 / matrix.num_prompts() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn worked_set() -> CandidateSet {
        CandidateSet::new(
            "p0",
            vec![
                Candidate::new(10.0, 5, 0.9).unwrap(),
                Candidate::new(2.0, 10, 0.3).unwrap(),
                Candidate::new(6.0, 4, 0.8).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn threshold_changes_the_winner() {
        let set = worked_set();
        // At sigma 0.5 the 0.3-scored candidate (normalized nll 0.2) is
        // filtered; the remaining normalized nlls are 2.0 and 1.5.
        assert_eq!(select_bon(&set, 0.5).unwrap(), 2);
        assert_eq!(select_bon(&set, 0.0).unwrap(), 1);
        assert!(matches!(
            select_bon(&set, 0.95),
            Err(SelectError::AllBelowThreshold { .. })
        ));
    }

    #[test]
    fn single_passing_candidate_wins() {
        let set = CandidateSet::new("solo", vec![Candidate::new(3.0, 7, 0.6).unwrap()]).unwrap();
        assert_eq!(select_bon(&set, 0.5).unwrap(), 0);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let set = CandidateSet::new(
            "tie",
            vec![
                Candidate::new(4.0, 2, 1.0).unwrap(),
                Candidate::new(2.0, 1, 1.0).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(select_bon(&set, 0.0).unwrap(), 0);
    }

    #[test]
    fn candidate_validation() {
        assert!(matches!(
            Candidate::new(-1.0, 5, 0.5),
            Err(SelectError::InvalidNll { .. })
        ));
        assert!(matches!(
            Candidate::new(f64::NAN, 5, 0.5),
            Err(SelectError::InvalidNll { .. })
        ));
        assert!(matches!(
            Candidate::new(1.0, 0, 0.5),
            Err(SelectError::ZeroLength)
        ));
        assert!(matches!(
            Candidate::new(1.0, 5, 1.5),
            Err(SelectError::InvalidScore { .. })
        ));
        assert!(matches!(
            CandidateSet::new("x", vec![]),
            Err(SelectError::EmptyCandidateSet)
        ));
        assert!(matches!(
            select_bon(&worked_set(), -0.1),
            Err(SelectError::InvalidSigma { .. })
        ));
    }

    #[test]
    fn solver_uncertainty_is_the_mean() {
        assert_eq!(solver_uncertainty(&[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(solver_uncertainty(&[5.0]).unwrap(), 5.0);
        assert!(matches!(
            solver_uncertainty(&[]),
            Err(SelectError::EmptyInput)
        ));
        assert!(matches!(
            solver_uncertainty(&[1.0, f64::INFINITY]),
            Err(SelectError::NonFiniteNll { index: 1 })
        ));
    }

    #[test]
    fn verifier_uncertainty_means_selected_totals() {
        let sets = [
            CandidateSet::new(
                "a",
                vec![
                    Candidate::new(1.0, 1, 1.0).unwrap(),
                    Candidate::new(5.0, 1, 1.0).unwrap(),
                ],
            )
            .unwrap(),
            CandidateSet::new(
                "b",
                vec![
                    Candidate::new(9.0, 1, 1.0).unwrap(),
                    Candidate::new(3.0, 1, 1.0).unwrap(),
                ],
            )
            .unwrap(),
        ];
        assert_eq!(verifier_uncertainty(&sets, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn verifier_reports_totals_not_normalized() {
        // The winner under sigma 0.5 has nll 6 over 4 tokens; the aggregate
        // must report 6.0, not the 1.5 the argmin ranked by.
        let sets = [worked_set()];
        assert_eq!(verifier_uncertainty(&sets, 0.5).unwrap(), 6.0);
    }

    #[test]
    fn singleton_sets_collapse_to_solver_uncertainty() {
        let nlls = [2.5, 4.5, 1.0];
        let sets: Vec<CandidateSet> = nlls
            .iter()
            .enumerate()
            .map(|(i, &nll)| {
                CandidateSet::new(
                    alloc::format!("p{i}"),
                    vec![Candidate::new(nll, 3, 0.7).unwrap()],
                )
                .unwrap()
            })
            .collect();
        assert_eq!(
            verifier_uncertainty(&sets, 0.0).unwrap(),
            solver_uncertainty(&nlls).unwrap()
        );
    }

    #[test]
    fn filtering_the_minimum_raises_the_aggregate() {
        let sets = [CandidateSet::new(
            "p",
            vec![
                Candidate::new(1.0, 1, 0.2).unwrap(),
                Candidate::new(4.0, 1, 0.9).unwrap(),
            ],
        )
        .unwrap()];
        let unfiltered = verifier_uncertainty(&sets, 0.0).unwrap();
        let filtered = verifier_uncertainty(&sets, 0.5).unwrap();
        assert!(filtered > unfiltered);
    }

    #[test]
    fn threshold_failures_carry_the_prompt_id() {
        let sets = [CandidateSet::new(
            "needle",
            vec![Candidate::new(1.0, 1, 0.1).unwrap()],
        )
        .unwrap()];
        match verifier_uncertainty(&sets, 0.5) {
            Err(SelectError::AllBelowThresholdForPrompt { prompt_id, .. }) => {
                assert_eq!(prompt_id, "needle");
            }
            other => panic!("expected threshold failure, got {other:?}"),
        }
    }

    #[test]
    fn capability_gap_worked_example() {
        let sets = [
            CandidateSet::new("a", vec![Candidate::new(1.0, 1, 1.0).unwrap()]).unwrap(),
            CandidateSet::new("b", vec![Candidate::new(3.0, 1, 1.0).unwrap()]).unwrap(),
        ];
        assert_eq!(capability_gap(&[4.0, 6.0], &sets, 0.0).unwrap(), 3.0);
        assert!(matches!(
            capability_gap(&[4.0], &sets, 0.0),
            Err(SelectError::PromptCountMismatch { solver: 1, sets: 2 })
        ));
    }

    #[test]
    fn gap_vanishes_when_solver_is_the_only_candidate() {
        let nlls = [2.0, 5.0];
        let sets: Vec<CandidateSet> = nlls
            .iter()
            .map(|&nll| {
                CandidateSet::new("p", vec![Candidate::new(nll, 4, 0.5).unwrap()]).unwrap()
            })
            .collect();
        assert_eq!(capability_gap(&nlls, &sets, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn pass_at_k_worked_examples() {
        let m = CorrectnessMatrix::new(vec![
            vec![true, false, false],
            vec![false, false, false],
            vec![true, true, true],
        ])
        .unwrap();
        assert_eq!(pass_at_k(&m, 3).unwrap(), 2.0 / 3.0);
        assert_eq!(pass_at_k(&m, 1).unwrap(), 2.0 / 3.0);
        let all = CorrectnessMatrix::new(vec![vec![true; 4]; 3]).unwrap();
        for k in 1..=4 {
            assert_eq!(pass_at_k(&all, k).unwrap(), 1.0);
        }
        assert!(matches!(
            pass_at_k(&m, 4),
            Err(SelectError::KOutOfRange { k: 4, n: 3 })
        ));
        assert!(matches!(
            pass_at_k(&m, 0),
            Err(SelectError::KOutOfRange { k: 0, n: 3 })
        ));
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            CorrectnessMatrix::new(vec![]),
            Err(SelectError::EmptyMatrix)
        ));
        assert!(matches!(
            CorrectnessMatrix::new(vec![vec![]]),
            Err(SelectError::EmptyMatrix)
        ));
        assert!(matches!(
            CorrectnessMatrix::new(vec![vec![true], vec![true, false]]),
            Err(SelectError::RaggedMatrix { row: 1 })
        ));
    }
}
