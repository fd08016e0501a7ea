//! Experience replay and the off-policy critic update.
//!
//! The update is a gradient flow on
//! `E(W) = 1/2 k_c Theta~^2 + 1/2 k_e sum_l Theta~_l^2`, where every replayed
//! residual is re-evaluated with the live weights. A buffer whose stacked
//! regressors have full row rank makes the flow exponentially convergent
//! without injecting probing noise into the control.

use nalgebra::{SymmetricEigen, SVD};

use crate::critic::{CriticWeights, RegressionPair};
use crate::error::{check_dim, Error, Result};
use crate::scalar::{Matrix, Real, Vector};

/// A stored `(Y_l, Theta_l)` pair.
pub type ExperiencePoint<T> = RegressionPair<T>;

/// `Theta~ = Theta + W^T Y`.
pub fn residual<T: Real>(w: &CriticWeights<T>, pair: &RegressionPair<T>) -> T {
    pair.theta + w.0.dot(&pair.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertionPolicy {
    /// Append until full, then ignore further candidates.
    SequentialFill,
    /// After filling, swap in a candidate when that strictly raises `sigma_min`.
    SigmaMinEnrich,
}

impl InsertionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            InsertionPolicy::SequentialFill => "sequential_fill",
            InsertionPolicy::SigmaMinEnrich => "sigma_min_enrich",
        }
    }
}

impl std::str::FromStr for InsertionPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential_fill" => Ok(InsertionPolicy::SequentialFill),
            "sigma_min_enrich" => Ok(InsertionPolicy::SigmaMinEnrich),
            other => Err(Error::config("learner.insertion", format!("unknown policy `{other}`"))),
        }
    }
}

/// Numerical rank and smallest singular value of the stacked regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport<T> {
    pub rank: usize,
    pub sigma_min: T,
}

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Rank and `sigma_N` of the `N x P` matrix whose columns are `ys`.
///
/// `sigma_min` is zero whenever fewer than `N` columns are present.
pub fn stacked_rank<T: Real>(n_features: usize, ys: &[&Vector<T>]) -> RankReport<T> {
    if ys.is_empty() {
        return RankReport {
            rank: 0,
            sigma_min: T::zero(),
        };
    }
    let stacked = Matrix::from_fn(n_features, ys.len(), |i, j| ys[j][i]);
    let svd = SVD::new(stacked, false, false);
    let sv = &svd.singular_values;
    let sigma_max = sv.max();
    let tol = T::lit(RANK_TOLERANCE) * sigma_max;
    let rank = sv.iter().filter(|&&s| s > tol && s > T::zero()).count();
    let sigma_min = if ys.len() >= n_features { sv.min() } else { T::zero() };
    RankReport { rank, sigma_min }
}

#[derive(Debug, Clone)]
pub struct ExperienceBuffer<T: Real> {
    capacity: usize,
    n_features: usize,
    policy: InsertionPolicy,
    points: Vec<ExperiencePoint<T>>,
}

impl<T: Real> ExperienceBuffer<T> {
    pub fn new(capacity: usize, n_features: usize, policy: InsertionPolicy) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("learner.p", "buffer capacity must be positive"));
        }
        Ok(ExperienceBuffer {
            capacity,
            n_features,
            policy,
            points: Vec::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.points.len() == self.capacity
    }

    pub fn points(&self) -> &[ExperiencePoint<T>] {
        &self.points
    }

    pub fn policy(&self) -> InsertionPolicy {
        self.policy
    }

    pub fn rank_report(&self) -> RankReport<T> {
        let ys: Vec<_> = self.points.iter().map(|p| &p.y).collect();
        stacked_rank(self.n_features, &ys)
    }

    /// Offers a candidate; returns whether it was stored and the resulting report.
    pub fn try_insert(&mut self, p: ExperiencePoint<T>) -> Result<(bool, RankReport<T>)> {
        check_dim("experience point", self.n_features, p.y.len())?;
        if !p.is_finite() {
            return Err(Error::NumericFault {
                context: "try_insert",
                message: "non-finite experience point".into(),
            });
        }
        if !self.is_full() {
            self.points.push(p);
            return Ok((true, self.rank_report()));
        }
        if self.policy == InsertionPolicy::SequentialFill {
            return Ok((false, self.rank_report()));
        }
        let current = self.rank_report();
        let mut best: Option<(usize, RankReport<T>)> = None;
        for i in 0..self.points.len() {
            let ys: Vec<_> = self
                .points
                .iter()
                .enumerate()
                .map(|(j, q)| if j == i { &p.y } else { &q.y })
                .collect();
            let r = stacked_rank(self.n_features, &ys);
            if best.as_ref().is_none_or(|(_, b)| r.sigma_min > b.sigma_min) {
                best = Some((i, r));
            }
        }
        let (idx, report) = best.expect("full buffer is non-empty");
        let margin = T::lit(1e-12) * (T::one() + current.sigma_min);
        if report.sigma_min > current.sigma_min + margin {
            self.points[idx] = p;
            Ok((true, report))
        } else {
            Ok((false, current))
        }
    }
}

/// `Gamma`, `k_c`, `k_e` of the update law.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerGains<T: Real> {
    pub gamma: Matrix<T>,
    pub k_c: T,
    pub k_e: T,
}

impl<T: Real> LearnerGains<T> {
    pub fn new(gamma: Matrix<T>, k_c: T, k_e: T) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() {
            return Err(Error::config("learner.gamma", "Gamma must be square"));
        }
        let tol = T::lit(1e-12) * (T::one() + gamma.amax());
        if (&gamma - gamma.transpose()).amax() > tol {
            return Err(Error::config("learner.gamma", "Gamma must be symmetric"));
        }
        if !(SymmetricEigen::new(gamma.clone()).eigenvalues.min() > T::zero()) {
            return Err(Error::config("learner.gamma", "Gamma must be positive definite"));
        }
        if !(k_c > T::zero()) {
            return Err(Error::config("learner.k_c", "k_c must be positive"));
        }
        if !(k_e > T::zero()) {
            return Err(Error::config("learner.k_e", "k_e must be positive"));
        }
        Ok(LearnerGains { gamma, k_c, k_e })
    }

    /// `Gamma = 1e-4 I`, `k_c = 5`, `k_e = 3`.
    pub fn benchmark(n_features: usize) -> Self {
        Self::new(Matrix::identity(n_features, n_features) * T::lit(1e-4), T::lit(5.0), T::lit(3.0))
            .expect("valid defaults")
    }
}

/// Right-hand side of the weight ODE.
///
/// `-Gamma (k_c Y Theta~ + k_e sum_l Y_l Theta~_l)` with every `Theta~_l`
/// recomputed from the stored `(Y_l, Theta_l)` and the current `w`.
pub fn weight_derivative<T: Real>(
    w: &CriticWeights<T>,
    current: &RegressionPair<T>,
    buf: &ExperienceBuffer<T>,
    gains: &LearnerGains<T>,
) -> Vector<T> {
    let mut direction = &current.y * (gains.k_c * residual(w, current));
    for p in buf.points() {
        direction += &p.y * (gains.k_e * residual(w, p));
    }
    -(&gains.gamma * direction)
}

/// Objective whose negative `Gamma`-scaled gradient is [`weight_derivative`].
pub fn replay_objective<T: Real>(
    w: &CriticWeights<T>,
    current: &RegressionPair<T>,
    buf: &ExperienceBuffer<T>,
    gains: &LearnerGains<T>,
) -> T {
    let half = T::lit(0.5);
    let c = residual(w, current);
    let replay = buf.points().iter().fold(T::zero(), |a, p| {
        let r = residual(w, p);
        a + r * r
    });
    half * gains.k_c * c * c + half * gains.k_e * replay
}

/// Explicit Euler step `w + dt * wdot`.
pub fn step_weights<T: Real>(w: &CriticWeights<T>, wdot: &Vector<T>, dt: T) -> Result<CriticWeights<T>> {
    if !(dt > T::zero()) {
        return Err(Error::config("sim.dt", "dt must be positive"));
    }
    check_dim("weight derivative", w.len(), wdot.len())?;
    let next = CriticWeights(&w.0 + wdot * dt);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NumericFault {
            context: "step_weights",
            message: "critic weights became non-finite".into(),
        })
    }
}

/// `1/2 (w - w*)^T Gamma^{-1} (w - w*)`.
pub fn weight_lyapunov<T: Real>(w: &CriticWeights<T>, w_star: &Vector<T>, gamma: &Matrix<T>) -> Option<T> {
    let err = &w.0 - w_star;
    let inv = gamma.clone().try_inverse()?;
    Some(T::lit(0.5) * err.dot(&(inv * &err)))
}

/// Live critic learner: weights, replay buffer and gains.
#[derive(Debug, Clone)]
pub struct Learner<T: Real> {
    pub weights: CriticWeights<T>,
    pub buffer: ExperienceBuffer<T>,
    pub gains: LearnerGains<T>,
}

impl<T: Real> Learner<T> {
    /// Zero initial weights.
    pub fn new(n_features: usize, capacity: usize, policy: InsertionPolicy, gains: LearnerGains<T>) -> Result<Self> {
        check_dim("learner gain matrix", n_features, gains.gamma.nrows())?;
        Ok(Learner {
            weights: CriticWeights::zeros(n_features),
            buffer: ExperienceBuffer::new(capacity, n_features, policy)?,
            gains,
        })
    }

    /// One Euler step of the update law; returns the current residual before the step.
    pub fn update(&mut self, current: &RegressionPair<T>, dt: T) -> Result<T> {
        let r = residual(&self.weights, current);
        let wdot = weight_derivative(&self.weights, current, &self.buffer, &self.gains);
        self.weights = step_weights(&self.weights, &wdot, dt)?;
        Ok(r)
    }
}
