//! Decision variables of one slot: per (DC, class) the green and brown
//! allocated rates and service rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::ServiceClass;

/// Energy source feeding a queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueKind {
    Green,
    Brown,
}

impl QueueKind {
    pub const ALL: [QueueKind; 2] = [QueueKind::Green, QueueKind::Brown];

    pub fn as_str(self) -> &'static str {
        match self {
            QueueKind::Green => "green",
            QueueKind::Brown => "brown",
        }
    }

    fn offset(self) -> usize {
        match self {
            QueueKind::Green => 0,
            QueueKind::Brown => 2,
        }
    }
}

/// Flat layout: entry `4(i·J + j) + {0, 1, 2, 3}` holds
/// `{λ_g, μ_g, λ_b, μ_b}` of DC i, class j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    n_dc: usize,
    n_class: usize,
    values: Vec<f64>,
}

impl Allocation {
    pub fn zeros(n_dc: usize, n_class: usize) -> Self {
        Self { n_dc, n_class, values: vec![0.0; 4 * n_dc * n_class] }
    }

    pub fn from_vec(n_dc: usize, n_class: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 4 * n_dc * n_class {
            return Err(Error::invalid("allocation", format!("expected {} values", 4 * n_dc * n_class)));
        }
        Ok(Self { n_dc, n_class, values })
    }

    pub fn n_dc(&self) -> usize {
        self.n_dc
    }

    pub fn n_class(&self) -> usize {
        self.n_class
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Index of λ for queue (i, j, kind); μ sits at the next index.
    pub fn index(&self, i: usize, j: usize, kind: QueueKind) -> usize {
        debug_assert!(i < self.n_dc && j < self.n_class);
        4 * (i * self.n_class + j) + kind.offset()
    }

    /// `(λ, μ)` of one queue.
    pub fn queue(&self, i: usize, j: usize, kind: QueueKind) -> (f64, f64) {
        let k = self.index(i, j, kind);
        (self.values[k], self.values[k + 1])
    }

    pub fn set_queue(&mut self, i: usize, j: usize, kind: QueueKind, alloc_rate: f64, service_rate: f64) {
        let k = self.index(i, j, kind);
        self.values[k] = alloc_rate;
        self.values[k + 1] = service_rate;
    }

    /// Σ over DCs and kinds of λ for class j.
    pub fn class_total(&self, j: usize) -> f64 {
        (0..self.n_dc).flat_map(|i| QueueKind::ALL.map(|k| self.queue(i, j, k).0)).sum()
    }

    /// Servers switched on by one family of queues at DC i, `Σ_j μ_j/k_j`.
    pub fn servers(&self, i: usize, kind: QueueKind, classes: &[ServiceClass]) -> f64 {
        classes.iter().enumerate().map(|(j, c)| self.queue(i, j, kind).1 / c.per_server_capacity).sum()
    }

    /// Nonnegativity and `λ ≤ μ` on every queue, up to `tol` relative.
    pub fn check_queues(&self, tol: f64) -> Result<()> {
        for i in 0..self.n_dc {
            for j in 0..self.n_class {
                for kind in QueueKind::ALL {
                    let (lam, mu) = self.queue(i, j, kind);
                    let name = format!("allocation[{i}][{j}].{}", kind.as_str());
                    if !(lam >= 0.0 && mu >= 0.0) {
                        return Err(Error::invalid(name, "rates must be >= 0"));
                    }
                    if lam > mu * (1.0 + tol) + tol {
                        return Err(Error::invalid(name, "allocated rate exceeds service rate"));
                    }
                }
            }
        }
        Ok(())
    }
}
