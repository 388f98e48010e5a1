//! Adaptive search for the input window length.
//!
//! Treats performance `P(L)` as a black box over integer window lengths and
//! hill-climbs with a shrinking step:
//!
//! * probe `L + dL`; if `P` improves by more than `eta`, move up;
//! * if it degrades by more than `eta`, move down to `L - dL`;
//! * otherwise (a plateau) shrink the step, `dL <- alpha * dL`;
//! * stop on a plateau once `dL` has shrunk below `eps`, or at the
//!   iteration cap.
//!
//! Candidates are clamped to the configured bounds. Evaluations are memoized,
//! so revisiting a length is free, and the returned length is the best seen
//! across *all* evaluations, not the final resting point. If the same
//! `(L, dL)` state recurs the step is forcibly shrunk, which breaks the
//! increase/decrease oscillation that plain hill-climbing can fall into
//! around a peak.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

/// Errors from the length search.
#[derive(Debug, Error)]
pub enum SearchError {
    #[error("bad search config: {reason}")]
    BadConfig { reason: String },

    #[error("evaluator failed at L={len}: {source}")]
    Evaluator {
        len: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("evaluator returned a non-finite performance at L={len}")]
    NonFinitePerformance { len: usize },
}

/// Search hyperparameters. Defaults: start at 8 with step 8, threshold 1e-3,
/// halve the step on plateaus, stop below step 1, lengths in [2, 64], at most
/// 100 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig<F> {
    pub initial_len: usize,
    pub initial_step: usize,
    /// Performance change below which two lengths count as equivalent (eta).
    pub threshold: F,
    /// Step multiplier applied on plateaus (alpha), in (0, 1).
    pub reduction: F,
    /// Stop once the step has shrunk below this (eps).
    pub min_step: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_iterations: usize,
}

impl<F: Scalar> Default for SearchConfig<F> {
    fn default() -> Self {
        Self {
            initial_len: 8,
            initial_step: 8,
            threshold: F::lit(1e-3),
            reduction: F::lit(0.5),
            min_step: 1,
            min_len: 2,
            max_len: 64,
            max_iterations: 100,
        }
    }
}

impl<F: Scalar> SearchConfig<F> {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |reason: &str| SearchError::BadConfig { reason: reason.to_string() };
        if self.min_len == 0 {
            return Err(bad("min_len must be at least 1"));
        }
        if self.min_len > self.max_len {
            return Err(bad("min_len must not exceed max_len"));
        }
        if self.initial_len < self.min_len || self.initial_len > self.max_len {
            return Err(bad("initial_len must lie within [min_len, max_len]"));
        }
        if self.initial_step == 0 {
            return Err(bad("initial_step must be at least 1"));
        }
        if !(self.threshold > F::zero()) || !self.threshold.is_finite() {
            return Err(bad("threshold must be positive and finite"));
        }
        if !(self.reduction > F::zero()) || !(self.reduction < F::one()) {
            return Err(bad("reduction must lie strictly between 0 and 1"));
        }
        if self.min_step == 0 {
            return Err(bad("min_step must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(bad("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// What the search did at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchAction {
    Increase,
    Decrease,
    ShrinkStep,
    Stop,
}

impl fmt::Display for SearchAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SearchAction::Increase => "increase",
            SearchAction::Decrease => "decrease",
            SearchAction::ShrinkStep => "shrink-step",
            SearchAction::Stop => "stop",
        };
        f.write_str(s)
    }
}

/// State after one iteration: current length, its performance, the step
/// (post-shrink if the action shrank it), and the action taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<F> {
    pub iteration: usize,
    pub len: usize,
    pub performance: F,
    pub step: f64,
    pub action: SearchAction,
}

/// Full iteration history of one search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchTrace<F> {
    pub entries: Vec<TraceEntry<F>>,
}

impl<F: Scalar> SearchTrace<F> {
    /// `iter,L,perf,step,action` CSV for offline inspection.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,L,perf,step,action\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.iteration, e.len, e.performance, e.step, e.action
            ));
        }
        out
    }
}

/// Search result: the best length seen, its performance, how many distinct
/// lengths were evaluated, and the full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<F> {
    pub best_len: usize,
    pub best_performance: F,
    pub evaluations: usize,
    pub trace: SearchTrace<F>,
}

/// Boxed error type evaluators may return.
pub type EvalError = Box<dyn std::error::Error + Send + Sync>;

struct MemoizedEval<'a, F, E> {
    evaluate: &'a mut E,
    memo: HashMap<usize, F>,
    evaluations: usize,
    best: Option<(usize, F)>,
}

impl<F: Scalar, E> MemoizedEval<'_, F, E>
where
    E: FnMut(usize) -> Result<F, EvalError>,
{
    fn get(&mut self, len: usize) -> Result<F, SearchError> {
        if let Some(&p) = self.memo.get(&len) {
            return Ok(p);
        }
        let p = (self.evaluate)(len).map_err(|source| SearchError::Evaluator { len, source })?;
        if !p.is_finite() {
            return Err(SearchError::NonFinitePerformance { len });
        }
        self.memo.insert(len, p);
        self.evaluations += 1;
        match self.best {
            Some((_, bp)) if bp >= p => {}
            _ => self.best = Some((len, p)),
        }
        Ok(p)
    }
}

/// Runs the adaptive search and returns the best length observed.
///
/// The evaluator maps a window length to a performance score where larger is
/// better (the pipeline uses negative validation loss). It must be
/// deterministic per length; results are memoized, so it is called at most
/// once per distinct length.
pub fn search_optimal_length<F, E>(
    mut evaluate: E,
    config: &SearchConfig<F>,
) -> Result<SearchOutcome<F>, SearchError>
where
    F: Scalar,
    E: FnMut(usize) -> Result<F, EvalError>,
{
    config.validate()?;
    let mut evals = MemoizedEval {
        evaluate: &mut evaluate,
        memo: HashMap::new(),
        evaluations: 0,
        best: None,
    };

    let mut len = config.initial_len;
    let mut p_cur = evals.get(len)?;
    let mut step = config.initial_step as f64;
    let eta = config.threshold;
    let mut visited: HashSet<(usize, u64)> = HashSet::new();
    let mut trace = SearchTrace::default();

    for iteration in 1..=config.max_iterations {
        let action;
        if !visited.insert((len, step.to_bits())) {
            // Oscillation guard: the exact (L, dL) state recurred.
            step *= config.reduction.as_f64();
            action = SearchAction::ShrinkStep;
        } else {
            let step_i = (step.round() as usize).max(1);
            let up = len.saturating_add(step_i).min(config.max_len);
            let p_up = evals.get(up)?;
            let dp = p_up - p_cur;
            if dp > eta {
                len = up;
                p_cur = p_up;
                action = SearchAction::Increase;
            } else if dp < -eta {
                let down = len.saturating_sub(step_i).max(config.min_len);
                p_cur = evals.get(down)?;
                len = down;
                action = SearchAction::Decrease;
            } else if step < config.min_step as f64 {
                action = SearchAction::Stop;
            } else {
                step *= config.reduction.as_f64();
                action = SearchAction::ShrinkStep;
            }
        }
        trace.entries.push(TraceEntry {
            iteration,
            len,
            performance: p_cur,
            step,
            action,
        });
        if action == SearchAction::Stop {
            break;
        }
    }

    let (best_len, best_performance) = evals.best.expect("at least the initial length was evaluated");
    Ok(SearchOutcome {
        best_len,
        best_performance,
        evaluations: evals.evaluations,
        trace,
    })
}
