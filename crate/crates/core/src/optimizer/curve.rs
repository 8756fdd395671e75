//! Dropped-request rate `φ(λ, μ) = λ·P_L(λ, μ)` of one queue with its first
//! and second derivatives.

use serde::{Deserialize, Serialize};

use crate::loss::LossModel;

/// Queueing model used inside the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Gaussian G/D/1 deadline-loss estimate.
    #[default]
    Gd1,
    /// M/M/1 waiting-time tail `(λ/μ)·e^{-(μ-λ)(D-d)}`.
    Mm1,
}

/// `φ` and its derivatives with respect to `(λ, μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEval {
    pub loss: f64,
    pub phi: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    /// Two lags attain the minimum exponent; `grad` is the subgradient of the
    /// smaller one.
    pub tie: bool,
}

impl PhiEval {
    const ZERO: PhiEval = PhiEval { loss: 0.0, phi: 0.0, grad: [0.0; 2], hess: [[0.0; 2]; 2], tie: false };
}

#[derive(Debug, Clone)]
pub(crate) enum QueueLossModel {
    Gd1(LossModel),
    Mm1 { slack: f64 },
}

impl QueueLossModel {
    /// Requires `0 ≤ λ ≤ μ`, `μ > 0`. `λ = 0` is the perspective limit.
    pub(crate) fn eval(&self, lam: f64, mu: f64) -> PhiEval {
        if lam <= 0.0 {
            return PhiEval::ZERO;
        }
        match self {
            QueueLossModel::Gd1(model) => gd1(model, lam, mu),
            QueueLossModel::Mm1 { slack } => mm1(*slack, lam, mu),
        }
    }
}

fn gd1(model: &LossModel, lam: f64, mu: f64) -> PhiEval {
    let cv = model.cv();
    if cv == 0.0 {
        return PhiEval::ZERO;
    }
    let r = (mu / lam).max(1.0);
    let p = model.curve(r);
    let tie = p.result.tie;
    if p.result.clamped {
        return PhiEval { loss: 1.0, phi: lam, grad: [1.0, 0.0], hess: [[0.0; 2]; 2], tie };
    }
    let g = p.result.loss_prob;
    if g == 0.0 {
        return PhiEval { tie, ..PhiEval::ZERO };
    }
    let g_r = g * p.dlog_dt / cv;
    let g_rr = g * p.d2_rel / (cv * cv);
    // perspective of g: φ = λ g(μ/λ)
    let c = g_rr / lam;
    PhiEval { loss: g, phi: lam * g, grad: [g - r * g_r, g_r], hess: [[c * r * r, -c * r], [-c * r, c]], tie }
}

fn mm1(slack: f64, lam: f64, mu: f64) -> PhiEval {
    let p = (lam / mu).min(1.0) * (-(mu - lam).max(0.0) * slack).exp();
    let phi = lam * p;
    // log-derivatives of λ²/μ · e^{-(μ-λ)D}
    let l = [2.0 / lam + slack, -1.0 / mu - slack];
    let ll = [[-2.0 / (lam * lam), 0.0], [0.0, 1.0 / (mu * mu)]];
    let mut hess = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            hess[a][b] = phi * (l[a] * l[b] + ll[a][b]);
        }
    }
    PhiEval { loss: p, phi, grad: [phi * l[0], phi * l[1]], hess, tie: false }
}

/// Nearest positive semidefinite matrix in the Frobenius norm.
pub(crate) fn psd_2x2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let (a, b, c) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (hi, lo) = (mean + rad, mean - rad);
    if lo >= 0.0 {
        return [[a, b], [b, c]];
    }
    if hi <= 0.0 {
        return [[0.0; 2]; 2];
    }
    let v = if b != 0.0 {
        [hi - c, b]
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let n2 = v[0] * v[0] + v[1] * v[1];
    let s = hi / n2;
    [[s * v[0] * v[0], s * v[0] * v[1]], [s * v[0] * v[1], s * v[1] * v[1]]]
}
