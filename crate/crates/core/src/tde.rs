//! Time-delay estimation.
//!
//! The unknown lumped dynamics are replaced by their value one delay
//! earlier, which turns the plant into the incremental model
//! `dxdot = g_bar * du + g_bar * xi`. This module keeps the delayed history,
//! forms the increments, and reports the (diagnostic-only) residual `xi`.

use std::collections::VecDeque;

use crate::error::{check_dim, Error, Result};
use crate::scalar::{Matrix, Real, Vector};

/// Constant input-gain guess `g_bar` and its left pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalModelConfig<T: Real> {
    g_bar: Matrix<T>,
    g_bar_pinv: Matrix<T>,
}

impl<T: Real> IncrementalModelConfig<T> {
    pub fn new(g_bar: Matrix<T>) -> Result<Self> {
        let gram = g_bar.transpose() * &g_bar;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::config("tde.g_bar", "g_bar must have full column rank"))?;
        let g_bar_pinv = inv * g_bar.transpose();
        Ok(IncrementalModelConfig { g_bar, g_bar_pinv })
    }

    /// `g_bar = [0, 0.1]^T`, the benchmark choice.
    pub fn pendulum_default() -> Self {
        Self::new(Matrix::from_column_slice(2, 1, &[T::zero(), T::lit(0.1)])).expect("full column rank")
    }

    pub fn g_bar(&self) -> &Matrix<T> {
        &self.g_bar
    }

    pub fn g_bar_pinv(&self) -> &Matrix<T> {
        &self.g_bar_pinv
    }

    pub fn n(&self) -> usize {
        self.g_bar.nrows()
    }

    pub fn m(&self) -> usize {
        self.g_bar.ncols()
    }
}

/// One sampled instant of measured state, state derivative and applied input.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySample<T: Real> {
    pub t: T,
    pub x: Vector<T>,
    pub xdot: Vector<T>,
    pub u: Vector<T>,
}

/// Increments between the current sample and the sample one delay earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementRecord<T: Real> {
    pub dx_dot: Vector<T>,
    pub du: Vector<T>,
    pub u0: Vector<T>,
    pub x0dot: Vector<T>,
}

/// How the controller side obtains `xdot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XdotSource {
    /// Exact derivative supplied by the simulator.
    GroundTruth,
    /// `(x(t) - x(t - dt)) / dt` on measured states.
    BackwardDifference,
}

impl XdotSource {
    pub fn as_str(self) -> &'static str {
        match self {
            XdotSource::GroundTruth => "ground_truth",
            XdotSource::BackwardDifference => "backward_difference",
        }
    }
}

impl std::str::FromStr for XdotSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground_truth" => Ok(XdotSource::GroundTruth),
            "backward_difference" => Ok(XdotSource::BackwardDifference),
            other => Err(Error::config("sim.xdot_source", format!("unknown source `{other}`"))),
        }
    }
}

/// Fixed-rate ring buffer of samples with an integer-step delay.
#[derive(Debug, Clone)]
pub struct DelayLine<T: Real> {
    samples: VecDeque<DelaySample<T>>,
    capacity: usize,
    dt: T,
    delay_steps: usize,
}

impl<T: Real> DelayLine<T> {
    /// `delay` must be a positive integer multiple of `dt`.
    pub fn new(dt: T, delay: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::config("sim.dt", "dt must be positive"));
        }
        let ratio = delay / dt;
        let steps = ratio.round();
        let tol = T::lit(1e-9).max(T::default_epsilon() * T::lit(64.0));
        if !(steps >= T::one()) || (ratio - steps).abs() > tol * steps {
            return Err(Error::config("tde.delay", "delay must be a positive integer multiple of dt"));
        }
        let delay_steps = steps.as_f64() as usize;
        Ok(Self::with_steps(dt, delay_steps))
    }

    /// Delay of `delay_steps * dt`; capacity `delay_steps + 2`.
    pub fn with_steps(dt: T, delay_steps: usize) -> Self {
        let capacity = delay_steps + 2;
        DelayLine {
            samples: VecDeque::with_capacity(capacity),
            capacity,
            dt,
            delay_steps,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn delay(&self) -> T {
        self.dt * T::lit(self.delay_steps as f64)
    }

    pub fn latest(&self) -> Option<&DelaySample<T>> {
        self.samples.back()
    }

    pub fn oldest(&self) -> Option<&DelaySample<T>> {
        self.samples.front()
    }

    /// Slack for matching sample times; `k * dt` drifts with `|t|` in low precision.
    fn time_tolerance(&self, t: T) -> T {
        self.dt * T::lit(1e-6) + T::default_epsilon() * T::lit(16.0) * t.abs()
    }

    /// Appends a sample exactly one period after the newest one.
    pub fn push_sample(&mut self, s: DelaySample<T>) -> Result<()> {
        if let Some(last) = self.samples.back() {
            let expected = last.t + self.dt;
            if (s.t - expected).abs() > self.time_tolerance(s.t) {
                return Err(Error::Usage(format!(
                    "sample at t = {} does not follow t = {} by one period",
                    s.t, last.t
                )));
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(s);
        Ok(())
    }

    /// Stored sample at exactly `t - delay`, if present.
    pub fn delayed(&self, t: T) -> Option<&DelaySample<T>> {
        let last = self.samples.back()?;
        let target = t - self.delay();
        let back = ((last.t - target) / self.dt).round();
        if back < T::zero() {
            return None;
        }
        let back = back.as_f64() as usize;
        let idx = self.samples.len().checked_sub(back + 1)?;
        let s = &self.samples[idx];
        ((s.t - target).abs() <= self.time_tolerance(t)).then_some(s)
    }

    /// `(x_now - x(t - dt)) / dt` against the newest stored sample.
    pub fn backward_difference(&self, x_now: &Vector<T>) -> Result<Vector<T>> {
        let prev = self
            .latest()
            .ok_or(Error::WarmUp("backward difference needs a previous sample"))?;
        check_dim("backward difference state", prev.x.len(), x_now.len())?;
        Ok((x_now - &prev.x) / self.dt)
    }
}

/// Estimates `xdot` at the current instant.
///
/// `exact` is only consulted for [`XdotSource::GroundTruth`].
pub fn estimate_xdot<T: Real>(
    line: &DelayLine<T>,
    x_now: &Vector<T>,
    method: XdotSource,
    exact: impl FnOnce() -> Vector<T>,
) -> Result<Vector<T>> {
    match method {
        XdotSource::GroundTruth => Ok(exact()),
        XdotSource::BackwardDifference => line.backward_difference(x_now),
    }
}

/// Forms the increments of `now` against the delayed sample in `line`.
pub fn compute_increments<T: Real>(line: &DelayLine<T>, now: &DelaySample<T>) -> Result<IncrementRecord<T>> {
    let past = line
        .delayed(now.t)
        .ok_or(Error::WarmUp("no sample one delay in the past"))?;
    check_dim("increment state", past.xdot.len(), now.xdot.len())?;
    check_dim("increment input", past.u.len(), now.u.len())?;
    Ok(IncrementRecord {
        dx_dot: &now.xdot - &past.xdot,
        du: &now.u - &past.u,
        u0: past.u.clone(),
        x0dot: past.xdot.clone(),
    })
}

/// `xi = g_bar^+ dxdot - du`; exactly the residual that makes the
/// incremental model hold. Diagnostics only.
pub fn true_tde_error<T: Real>(rec: &IncrementRecord<T>, cfg: &IncrementalModelConfig<T>) -> Vector<T> {
    cfg.g_bar_pinv() * &rec.dx_dot - &rec.du
}

/// Least-squares line `|xi| ~ c |du| + delta1` over logged pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdeBoundFit<T> {
    pub c: T,
    pub delta1: T,
    pub residual_std: T,
}

impl<T: Real> TdeBoundFit<T> {
    /// Fraction of pairs with `|xi| <= c |du| + delta1 + k * residual_std`.
    pub fn coverage(&self, pairs: &[(T, T)], k: T) -> f64 {
        if pairs.is_empty() {
            return 1.0;
        }
        let bound = |du: T| self.c * du + self.delta1 + k * self.residual_std;
        let inside = pairs.iter().filter(|&&(xi, du)| xi <= bound(du)).count();
        inside as f64 / pairs.len() as f64
    }
}

/// Minimum number of `(|xi|, |du|)` pairs for [`fit_tde_bound`].
pub const MIN_FIT_PAIRS: usize = 100;

/// Fits `(|xi|, |du|)` pairs; falls back to an intercept-only fit when all
/// `|du|` coincide.
pub fn fit_tde_bound<T: Real>(pairs: &[(T, T)]) -> Result<TdeBoundFit<T>> {
    if pairs.len() < MIN_FIT_PAIRS {
        return Err(Error::Usage(format!(
            "TDE bound fit needs at least {MIN_FIT_PAIRS} pairs, got {}",
            pairs.len()
        )));
    }
    let n = T::lit(pairs.len() as f64);
    let mean_xi = pairs.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let mean_du = pairs.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (sxy, sxx) = pairs.iter().fold((T::zero(), T::zero()), |(sxy, sxx), &(xi, du)| {
        let dx = du - mean_du;
        (sxy + dx * (xi - mean_xi), sxx + dx * dx)
    });
    let c = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let delta1 = mean_xi - c * mean_du;
    let ss = pairs.iter().fold(T::zero(), |a, &(xi, du)| {
        let r = xi - (c * du + delta1);
        a + r * r
    });
    Ok(TdeBoundFit {
        c,
        delta1,
        residual_std: (ss / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector<f64> {
        Vector::from_column_slice(xs)
    }

    fn sample(t: f64, x: &[f64], xdot: &[f64], u: &[f64]) -> DelaySample<f64> {
        DelaySample {
            t,
            x: v(x),
            xdot: v(xdot),
            u: v(u),
        }
    }

    #[test]
    fn push_into_empty_line() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        line.push_sample(sample(0.0, &[0.0], &[0.0], &[0.0])).unwrap();
        assert_eq!(line.len(), 1);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        assert_eq!(line.capacity(), 3);
        for k in 0..4 {
            line.push_sample(sample(k as f64 * 1e-3, &[k as f64], &[0.0], &[0.0])).unwrap();
        }
        assert!(line.is_full());
        assert_eq!(line.oldest().unwrap().x[0], 1.0);
        assert_eq!(line.latest().unwrap().x[0], 3.0);
    }

    #[test]
    fn gap_is_a_usage_error() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        line.push_sample(sample(0.0, &[0.0], &[0.0], &[0.0])).unwrap();
        let err = line.push_sample(sample(2e-3, &[0.0], &[0.0], &[0.0])).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn non_integer_delay_rejected() {
        assert!(DelayLine::new(1e-3, 1.5e-3).is_err());
        assert!(DelayLine::new(1e-3, 0.0).is_err());
        assert_eq!(DelayLine::new(1e-3, 3e-3).unwrap().capacity(), 5);
    }

    #[test]
    fn backward_difference_of_constant_state() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        line.push_sample(sample(0.0, &[1.0, 1.0], &[0.0, 0.0], &[0.0])).unwrap();
        let xdot = estimate_xdot(&line, &v(&[1.0, 1.0]), XdotSource::BackwardDifference, || unreachable!()).unwrap();
        assert_eq!(xdot.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_difference_quotient() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        line.push_sample(sample(0.0, &[1.0, 0.0], &[0.0, 0.0], &[0.0])).unwrap();
        let xdot = line.backward_difference(&v(&[2.0, 0.0])).unwrap();
        assert!((xdot[0] - 1000.0).abs() < 1e-9);
        assert_eq!(xdot[1], 0.0);
    }

    #[test]
    fn backward_difference_needs_history() {
        let line = DelayLine::<f64>::new(1e-3, 1e-3).unwrap();
        assert!(line.backward_difference(&v(&[1.0])).unwrap_err().is_warm_up());
    }

    #[test]
    fn backward_difference_truncation_bound_on_sine() {
        let dt = 1e-3;
        let mut line = DelayLine::new(dt, dt).unwrap();
        let mut worst = 0.0f64;
        for k in 0..10_000 {
            let t = k as f64 * dt;
            let x = v(&[t.sin()]);
            if k > 0 {
                let est = line.backward_difference(&x).unwrap()[0];
                worst = worst.max((est - t.cos()).abs());
            }
            line.push_sample(DelaySample {
                t,
                x,
                xdot: v(&[0.0]),
                u: v(&[0.0]),
            })
            .unwrap();
        }
        assert!(worst <= dt * 1.0 / 2.0 + 1e-9, "{worst}");
    }

    #[test]
    fn ground_truth_passes_through() {
        let line = DelayLine::<f64>::new(1e-3, 1e-3).unwrap();
        let xdot = estimate_xdot(&line, &v(&[0.0]), XdotSource::GroundTruth, || v(&[4.2])).unwrap();
        assert_eq!(xdot[0], 4.2);
    }

    #[test]
    fn increments_of_identical_samples_vanish() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        line.push_sample(sample(0.0, &[1.0, 2.0], &[3.0, 4.0], &[0.5])).unwrap();
        let now = sample(1e-3, &[1.0, 2.0], &[3.0, 4.0], &[0.5]);
        let rec = compute_increments(&line, &now).unwrap();
        assert_eq!(rec.dx_dot.as_slice(), &[0.0, 0.0]);
        assert_eq!(rec.du.as_slice(), &[0.0]);
    }

    #[test]
    fn increment_of_input() {
        let mut line = DelayLine::new(1e-3, 1e-3).unwrap();
        line.push_sample(sample(0.0, &[0.0, 0.0], &[0.0, 0.0], &[0.4])).unwrap();
        let rec = compute_increments(&line, &sample(1e-3, &[0.0, 0.0], &[0.0, 0.0], &[1.0])).unwrap();
        assert!((rec.du[0] - 0.6).abs() < 1e-15);
        assert_eq!(rec.u0[0], 0.4);
    }

    #[test]
    fn scripted_two_step_trajectory() {
        // Delay of two periods; the record pairs t = 2dt with t = 0.
        let dt = 0.01;
        let mut line = DelayLine::new(dt, 2.0 * dt).unwrap();
        line.push_sample(sample(0.0, &[1.0, 0.0], &[0.5, -1.0], &[0.2])).unwrap();
        line.push_sample(sample(dt, &[1.1, 0.0], &[0.7, -0.5], &[0.3])).unwrap();
        let now = sample(2.0 * dt, &[1.2, 0.1], &[1.0, 0.25], &[-0.1]);
        let rec = compute_increments(&line, &now).unwrap();
        assert!((rec.dx_dot[0] - 0.5).abs() < 1e-15);
        assert!((rec.dx_dot[1] - 1.25).abs() < 1e-15);
        assert!((rec.du[0] + 0.3).abs() < 1e-15);
        assert_eq!(rec.u0[0], 0.2);
        assert_eq!(rec.x0dot.as_slice(), &[0.5, -1.0]);
    }

    #[test]
    fn missing_delayed_sample_is_warm_up() {
        let line = DelayLine::<f64>::new(1e-3, 1e-3).unwrap();
        let err = compute_increments(&line, &sample(0.0, &[0.0], &[0.0], &[0.0])).unwrap_err();
        assert!(err.is_warm_up());
    }

    #[test]
    fn pseudo_inverse_is_left_inverse() {
        let cfg = IncrementalModelConfig::<f64>::pendulum_default();
        let eye = cfg.g_bar_pinv() * cfg.g_bar();
        assert!((eye[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(cfg.g_bar_pinv().as_slice(), &[0.0, 10.0]);
        assert!(IncrementalModelConfig::<f64>::new(Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn tde_error_zero_on_exact_incremental_model() {
        let cfg = IncrementalModelConfig::<f64>::pendulum_default();
        let du = v(&[0.7]);
        let rec = IncrementRecord {
            dx_dot: cfg.g_bar() * &du,
            du,
            u0: v(&[0.0]),
            x0dot: v(&[0.0, 0.0]),
        };
        assert!(true_tde_error(&rec, &cfg)[0].abs() < 1e-15);
    }

    #[test]
    fn tde_error_hand_value() {
        let cfg = IncrementalModelConfig::<f64>::pendulum_default();
        let rec = IncrementRecord {
            dx_dot: v(&[0.0, 0.1]),
            du: v(&[0.0]),
            u0: v(&[0.0]),
            x0dot: v(&[0.0, 0.0]),
        };
        assert!((true_tde_error(&rec, &cfg)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let pairs: Vec<(f64, f64)> = (0..200).map(|i| {
            let du = i as f64 * 0.01;
            (0.3 * du + 0.01, du)
        }).collect();
        let fit = fit_tde_bound(&pairs).unwrap();
        assert!((fit.c - 0.3).abs() < 1e-12);
        assert!((fit.delta1 - 0.01).abs() < 1e-12);
        assert!(fit.residual_std < 1e-12);
    }

    #[test]
    fn fit_of_zero_errors() {
        let pairs = vec![(0.0, 0.0); 150];
        let fit = fit_tde_bound(&pairs).unwrap();
        assert_eq!((fit.c, fit.delta1), (0.0, 0.0));
        let pairs: Vec<(f64, f64)> = (0..150).map(|i| (0.0, i as f64)).collect();
        let fit = fit_tde_bound(&pairs).unwrap();
        assert_eq!((fit.c, fit.delta1), (0.0, 0.0));
    }

    #[test]
    fn degenerate_input_gives_intercept_only() {
        let pairs: Vec<(f64, f64)> = (0..150).map(|i| ((i % 3) as f64, 0.0)).collect();
        let fit = fit_tde_bound(&pairs).unwrap();
        assert_eq!(fit.c, 0.0);
        assert!((fit.delta1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_requires_enough_pairs() {
        assert!(fit_tde_bound(&[(0.0f64, 0.0f64); 99]).is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_identity(
            dx in proptest::collection::vec(-50.0..50.0f64, 2),
            du in -3.0..3.0f64,
            g2 in 0.05..2.0f64,
            g1 in -1.0..1.0f64,
        ) {
            let cfg = IncrementalModelConfig::new(Matrix::from_column_slice(2, 1, &[g1, g2])).unwrap();
            let rec = IncrementRecord { dx_dot: v(&dx), du: v(&[du]), u0: v(&[0.0]), x0dot: v(&[0.0, 0.0]) };
            let xi = true_tde_error(&rec, &cfg);
            // Only the range of g_bar is reconstructed; the projection of dx onto it must match.
            let rebuilt = cfg.g_bar() * (&rec.du + &xi);
            let projected = cfg.g_bar() * (cfg.g_bar_pinv() * &rec.dx_dot);
            prop_assert!((rebuilt - projected).norm() <= 1e-12 * (1.0 + dx[0].abs() + dx[1].abs()));
            let eye = cfg.g_bar_pinv() * cfg.g_bar();
            prop_assert!((eye[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }
}
