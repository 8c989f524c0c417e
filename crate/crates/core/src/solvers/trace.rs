use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    LineSearchFailure,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::LineSearchFailure => "line_search_failure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Cumulative data passes of this run.
    pub passes: u64,
    pub objective: f64,
    pub grad_norm: f64,
    /// Accepted step length leading to this iterate (0 for the start).
    pub step: f64,
    pub suboptimality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub iterates: Vec<DVector<f64>>,
}

impl ConvergenceTrace {
    pub fn empty(status: Status) -> Self {
        Self {
            records: Vec::new(),
            status,
            iterates: Vec::new(),
        }
    }

    /// Number of completed iterations.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn total_passes(&self) -> u64 {
        self.records.last().map_or(0, |r| r.passes)
    }

    /// Passes spent by each iteration after the start.
    pub fn passes_per_iteration(&self) -> Vec<u64> {
        self.records
            .windows(2)
            .map(|w| w[1].passes - w[0].passes)
            .collect()
    }

    /// First iteration whose gradient norm is at most `tol · max(1, |f|)`.
    pub fn iterations_to_tolerance(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.grad_norm <= tol * r.objective.abs().max(1.0))
            .map(|r| r.iter)
    }
}
