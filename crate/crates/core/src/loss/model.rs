use serde::{Deserialize, Serialize};

use super::mills::{mills_terms, INV_SQRT_2PI};
use crate::error::{Error, Result};

/// Gaussian arrival statistics of one service class during one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadStats {
    /// Mean request rate λ_j, requests/s.
    pub mean_rate: f64,
    /// Variance of the request rate, (requests/s)².
    pub variance: f64,
    /// Autocovariance at lags 0..=L (seconds); `autocov[0] == variance`.
    pub autocov: Vec<f64>,
}

impl WorkloadStats {
    /// Validates and builds the statistics. An empty `autocov` is taken to
    /// mean uncorrelated arrivals.
    ///
    /// A zero mean is accepted only together with zero variance and marks a
    /// class without demand in this slot.
    pub fn new(mean_rate: f64, variance: f64, autocov: Vec<f64>) -> Result<Self> {
        let autocov = if autocov.is_empty() { vec![variance] } else { autocov };
        let stats = WorkloadStats { mean_rate, variance, autocov };
        stats.validate()?;
        Ok(stats)
    }

    /// Uncorrelated arrivals with the given coefficient of variation.
    pub fn iid(mean_rate: f64, cv: f64) -> Result<Self> {
        let variance = (cv * mean_rate).powi(2);
        Self::new(mean_rate, variance, vec![variance])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_rate >= 0.0) || !self.mean_rate.is_finite() {
            return Err(Error::invalid("mean_rate", "must be a finite value >= 0"));
        }
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(Error::invalid("variance", "must be a finite value >= 0"));
        }
        if self.mean_rate == 0.0 && self.variance > 0.0 {
            return Err(Error::invalid("variance", "must be 0 when mean_rate is 0"));
        }
        match self.autocov.first() {
            Some(&c0) if (c0 - self.variance).abs() <= 1e-12 * self.variance.max(1e-300) => {}
            _ => return Err(Error::invalid("autocov", "lag 0 must equal the variance")),
        }
        let bound = self.variance * (1.0 + 1e-12);
        if let Some(l) = self.autocov.iter().position(|c| !c.is_finite() || c.abs() > bound) {
            return Err(Error::invalid(format!("autocov[{l}]"), "must not exceed the lag-0 value in magnitude"));
        }
        Ok(())
    }

    /// Coefficient of variation `σ/λ`; zero for an idle class.
    pub fn cv(&self) -> f64 {
        if self.mean_rate > 0.0 {
            self.variance.sqrt() / self.mean_rate
        } else {
            0.0
        }
    }

    /// Same process scaled by `c`: mean by `c`, covariances by `c²`.
    pub fn scaled(&self, c: f64) -> Self {
        WorkloadStats {
            mean_rate: self.mean_rate * c,
            variance: self.variance * c * c,
            autocov: self.autocov.iter().map(|v| v * c * c).collect(),
        }
    }
}

/// One green or brown queue as seen by the loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueSpec {
    /// Allocated mean rate λ_g or λ_b, requests/s.
    pub alloc_rate: f64,
    /// Service rate μ, requests/s.
    pub service_rate: f64,
    /// SLA deadline D_j, seconds.
    pub deadline: f64,
    /// Network delay d_i to the data center, seconds.
    pub network_delay: f64,
}

impl QueueSpec {
    pub fn new(alloc_rate: f64, service_rate: f64, deadline: f64, network_delay: f64) -> Result<Self> {
        let q = QueueSpec { alloc_rate, service_rate, deadline, network_delay };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alloc_rate >= 0.0) || !self.alloc_rate.is_finite() {
            return Err(Error::invalid("alloc_rate", "must be a finite value >= 0"));
        }
        if !(self.service_rate > 0.0) || !self.service_rate.is_finite() {
            return Err(Error::invalid("service_rate", "must be a finite value > 0"));
        }
        if self.alloc_rate > self.service_rate * (1.0 + 1e-12) {
            return Err(Error::invalid("service_rate", "must be >= alloc_rate"));
        }
        if !(self.network_delay >= 0.0) {
            return Err(Error::invalid("network_delay", "must be >= 0"));
        }
        if !(self.deadline >= self.network_delay) {
            return Err(Error::invalid("deadline", "must be >= network_delay"));
        }
        Ok(())
    }

    /// Effective deadline `D - d` in seconds.
    pub fn slack(&self) -> f64 {
        self.deadline - self.network_delay
    }

    /// `μ/λ`.
    pub fn ratio(&self) -> f64 {
        self.service_rate / self.alloc_rate
    }
}

/// Controls the search over the lag index n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Largest n examined.
    pub n_max: usize,
    /// Stop once M_n has risen this many steps in a row.
    pub patience: usize,
    /// Below this relative margin `(μ - λ)/λ` the queue is treated as
    /// critically loaded and `inf_n M_n = 0` is returned.
    pub degeneracy: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { n_max: 1000, patience: 50, degeneracy: 1e-9 }
    }
}

/// Where the minimum over n was attained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgMin {
    Index(usize),
    /// Infimum of a sequence decreasing to zero (critically loaded queue).
    AtInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossResult {
    /// Loss probability, clamped to [0, 1].
    pub loss_prob: f64,
    /// `ln(loss_prob)`.
    pub log_loss: f64,
    pub argmin: ArgMin,
    pub alpha: f64,
    /// `min_n M_n`.
    pub m_min: f64,
    /// The raw estimate exceeded 1 and was clamped.
    pub clamped: bool,
    /// The scan hit `n_max` while M_n was still decreasing, so `m_min` is an
    /// upper bound on the true minimum and `loss_prob` a lower bound.
    pub lower_bound_only: bool,
    /// A neighbouring n attains the same minimum to within 1e-12 relative.
    pub tie: bool,
}

/// Normalized `ρ_n` for one n, computed directly from the definition.
pub fn normalized_rho(n: usize, stats: &WorkloadStats) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroLag);
    }
    let lam2 = stats.mean_rate * stats.mean_rate;
    if lam2 == 0.0 {
        return Err(Error::EmptyQueue);
    }
    let mut rho = n as f64 * stats.variance / lam2;
    for l in 1..n.min(stats.autocov.len()) {
        rho += 2.0 * (n - l) as f64 * stats.autocov[l] / lam2;
    }
    Ok(rho)
}

/// `α(t) = C_v/√(2π) · (1 - h(t))`.
pub fn alpha_normalized(t: f64, cv: f64) -> Result<f64> {
    if !(cv > 0.0) {
        return Err(Error::invalid("cv", "must be > 0"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "must be >= 0"));
    }
    Ok(cv * INV_SQRT_2PI * mills_terms(t).complement)
}

/// `α(λ, μ)` for a queue of the given class.
pub fn alpha_raw(stats: &WorkloadStats, q: &QueueSpec) -> Result<f64> {
    q.validate()?;
    if q.alloc_rate == 0.0 {
        return Err(Error::EmptyQueue);
    }
    let cv = stats.cv();
    alpha_normalized((q.ratio() - 1.0).max(0.0) / cv, cv)
}

/// `M_n(λ, μ)` for a queue of the given class.
pub fn exponent_m(n: usize, stats: &WorkloadStats, q: &QueueSpec) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroLag);
    }
    q.validate()?;
    if q.alloc_rate == 0.0 {
        return Err(Error::EmptyQueue);
    }
    let rho = normalized_rho(n, stats)?;
    let slack = q.slack();
    let num = (slack + n as f64) * (q.ratio() - 1.0) + slack;
    Ok(num * num / rho)
}

/// Loss probability of one queue.
pub fn loss_probability(stats: &WorkloadStats, q: &QueueSpec, search: &SearchConfig) -> Result<LossResult> {
    q.validate()?;
    if q.alloc_rate == 0.0 {
        return Err(Error::EmptyQueue);
    }
    if search.n_max == 0 {
        return Err(Error::invalid("n_max", "must be >= 1"));
    }
    let model = LossModel::new(stats, q.slack(), *search)?;
    Ok(model.evaluate(q.ratio()))
}

/// Log-space curve data at the active lag, used for derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub result: LossResult,
    /// `ln g` where `g(t) = α(t)·e^{-M_n(t)/2}` (unclamped).
    pub log_g: f64,
    /// `g'(t)/g(t)`.
    pub dlog_dt: f64,
    /// `g''(t)/g(t)`.
    pub d2_rel: f64,
}

/// Loss model of one class at one effective deadline, with the ρ_n table
/// precomputed so that repeated evaluations cost O(scan length).
#[derive(Debug, Clone)]
pub struct LossModel {
    cv: f64,
    slack: f64,
    /// `rho[n - 1] = ρ_n`.
    rho: Vec<f64>,
    search: SearchConfig,
}

impl LossModel {
    pub fn new(stats: &WorkloadStats, slack: f64, search: SearchConfig) -> Result<Self> {
        stats.validate()?;
        if !(slack >= 0.0) {
            return Err(Error::invalid("deadline", "effective deadline must be >= 0"));
        }
        if search.n_max == 0 {
            return Err(Error::invalid("n_max", "must be >= 1"));
        }
        let cv = stats.cv();
        let mut rho = Vec::with_capacity(search.n_max);
        if stats.mean_rate > 0.0 {
            let lam2 = stats.mean_rate * stats.mean_rate;
            let cv2 = cv * cv;
            // ρ_{n+1} = ρ_n + C_v² + 2 Σ_{l=1}^{n} c_l
            let mut acc = cv2;
            let mut lag_sum = 0.0;
            for n in 1..=search.n_max {
                rho.push(acc);
                lag_sum += stats.autocov.get(n).copied().unwrap_or(0.0) / lam2;
                acc += cv2 + 2.0 * lag_sum;
            }
        }
        Ok(LossModel { cv, slack, rho, search })
    }

    pub fn cv(&self) -> f64 {
        self.cv
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn search(&self) -> &SearchConfig {
        &self.search
    }

    /// Constants that fix `g_n(t)` for one lag.
    pub fn constants(&self, n: usize) -> super::ClassConstants {
        super::ClassConstants { cv: self.cv, slack: self.slack, rho_n: self.rho[n - 1] }
    }

    /// `ρ_n` from the precomputed table (n ≥ 1).
    pub fn rho(&self, n: usize) -> f64 {
        self.rho[n - 1]
    }

    fn exponent_at(&self, n: usize, excess: f64) -> f64 {
        let rho = self.rho[n - 1];
        if rho <= 0.0 {
            return f64::INFINITY;
        }
        let num = (self.slack + n as f64) * excess + self.slack;
        num * num / rho
    }

    /// `M_n` at ratio `r = μ/λ`.
    pub fn exponent(&self, n: usize, ratio: f64) -> f64 {
        assert!(n >= 1 && n <= self.rho.len(), "n out of range");
        self.exponent_at(n, ratio - 1.0)
    }

    /// Minimum of M_n over n at margin `r - 1`.
    fn scan(&self, excess: f64) -> (ArgMin, f64, bool, bool) {
        if excess < self.search.degeneracy {
            return (ArgMin::AtInfinity, 0.0, false, false);
        }
        let n_max = self.rho.len();
        let mut best = f64::INFINITY;
        let mut best_n = 1;
        let mut prev = f64::INFINITY;
        let mut rising = 0;
        let mut last_n = 0;
        for n in 1..=n_max {
            let m = self.exponent_at(n, excess);
            last_n = n;
            if m < best {
                best = m;
                best_n = n;
            }
            if m > prev {
                rising += 1;
                if rising >= self.search.patience {
                    break;
                }
            } else {
                rising = 0;
            }
            prev = m;
        }
        let exhausted = last_n == n_max && best_n == n_max;
        let close = |n: usize| {
            n >= 1 && n <= n_max && n != best_n && {
                let m = self.exponent_at(n, excess);
                (m - best).abs() <= 1e-12 * best.abs().max(f64::MIN_POSITIVE)
            }
        };
        let tie = close(best_n + 1) || (best_n > 1 && close(best_n - 1));
        (ArgMin::Index(best_n), best, exhausted, tie)
    }

    /// Loss estimate at ratio `r = μ/λ ≥ 1`.
    pub fn evaluate(&self, ratio: f64) -> LossResult {
        self.curve(ratio).result
    }

    /// Loss estimate plus log-derivatives of `g` in `t` at the active lag.
    pub fn curve(&self, ratio: f64) -> CurvePoint {
        debug_assert!(ratio >= 1.0 - 1e-9, "ratio {ratio} below 1");
        let excess = (ratio - 1.0).max(0.0);
        if self.cv == 0.0 {
            // deterministic arrivals never overflow an underloaded queue
            let result = LossResult {
                loss_prob: 0.0,
                log_loss: f64::NEG_INFINITY,
                argmin: ArgMin::Index(1),
                alpha: 0.0,
                m_min: f64::INFINITY,
                clamped: false,
                lower_bound_only: false,
                tie: false,
            };
            return CurvePoint { result, log_g: f64::NEG_INFINITY, dlog_dt: 0.0, d2_rel: 0.0 };
        }
        let t = excess / self.cv;
        let mills = mills_terms(t);
        let c = self.cv * INV_SQRT_2PI;
        let alpha = c * mills.complement;
        let (argmin, m_min, lower_bound_only, tie) = self.scan(excess);

        // derivatives of M_n(t) = (a t + b)² / ρ_n at the active lag
        let (m1, m2) = match argmin {
            ArgMin::Index(n) => {
                let rho = self.rho[n - 1];
                let a = (self.slack + n as f64) * self.cv;
                let lin = a * t + self.slack;
                (2.0 * a * lin / rho, 2.0 * a * a / rho)
            }
            ArgMin::AtInfinity => (0.0, 0.0),
        };
        let dlog_dt = mills.dlog_alpha - 0.5 * m1;
        let d2_rel = mills.d2_alpha_rel - mills.dlog_alpha * m1 + 0.25 * m1 * m1 - 0.5 * m2;

        let log_g = c.ln() + mills.complement.ln() - 0.5 * m_min;
        let (loss_prob, log_loss, clamped) = if log_g > 0.0 { (1.0, 0.0, true) } else { (log_g.exp(), log_g, false) };
        let result = LossResult { loss_prob, log_loss, argmin, alpha, m_min, clamped, lower_bound_only, tie };
        CurvePoint { result, log_g, dlog_dt, d2_rel }
    }
}
