//! Fixed-step closed-loop simulation.
//!
//! One episode runs strictly sequentially: measure, differentiate, form
//! increments, act, learn, integrate, fire events. Everything random flows
//! from the episode seed, so equal configurations give bit-identical logs.

use crate::controllers::{
    Controller, ControllerKind, IadpController, TadpController, ZsadpController,
};
use crate::critic::{BasisSet, CostConfig};
use crate::error::{Error, Result};
use crate::learner::{InsertionPolicy, Learner, LearnerGains};
use crate::plant::{
    eval_dynamics, ControlAffine, Disturbances, Environment, Event, EventAction, EventSchedule, MeasurementNoise,
    NoiseSpec, Plant,
};
use crate::scalar::{Matrix, Real, Vector};
use crate::tde::{compute_increments, true_tde_error, DelayLine, DelaySample, IncrementalModelConfig, XdotSource};

/// Plant, exogenous signals and timed events of one benchmark setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T: Real> {
    pub id: String,
    pub plant: Plant<T>,
    pub disturbances: Disturbances<T>,
    pub noise: NoiseSpec<T>,
    pub events: Vec<Event<T>>,
}

/// When candidate points are offered to the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionCadence<T> {
    /// Offer one candidate every this many steps.
    pub every_steps: usize,
    /// Stop offering after this time once the buffer has full rank.
    pub collect_until: T,
    /// Flag insufficient excitation if the rank is still short here.
    pub rank_deadline: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TadpParams<T> {
    pub rho: T,
    pub d_m_coef: T,
    pub l_m_coef: T,
}

/// Fully resolved episode configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T: Real> {
    pub dt: T,
    pub t_end: T,
    pub seed: u64,
    pub xdot_source: XdotSource,
    pub delay_steps: usize,
    pub controller: ControllerKind,
    pub x0: Vector<T>,
    pub scenario: Scenario<T>,
    pub basis: BasisSet,
    pub cost: CostConfig<T>,
    pub g_bar: Matrix<T>,
    pub gains: LearnerGains<T>,
    pub buffer_capacity: usize,
    pub insertion: InsertionPolicy,
    pub cadence: CollectionCadence<T>,
    pub zsadp_gamma: T,
    pub tadp: TadpParams<T>,
    /// Give the baselines the new plant matrices after a swap (ablation).
    pub baseline_tracks_swaps: bool,
    pub divergence_threshold: T,
}

impl<T: Real> SimConfig<T> {
    /// Number of integration steps; rows in the log are `steps() + 1`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > T::zero()) {
            return Err(Error::config("sim.dt", "dt must be positive"));
        }
        if self.t_end < T::zero() {
            return Err(Error::config("sim.t_end", "t_end must be non-negative"));
        }
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > T::lit(1e-6) * (T::one() + steps) {
            return Err(Error::config("sim.t_end", "t_end must be a multiple of dt"));
        }
        Ok(steps.as_f64() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        let n = self.scenario.plant.n();
        let m = self.scenario.plant.m();
        let chk = |key: &str, ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        chk("sim.x0", self.x0.len() == n, "initial state length must match the plant")?;
        chk("critic.basis", self.basis.arity() == n, "basis arity must match the state dimension")?;
        chk("cost.q", self.cost.q.nrows() == n, "Q must be n x n")?;
        chk(
            "tde.g_bar",
            self.g_bar.nrows() == n && self.g_bar.ncols() == m,
            "g_bar must be n x m",
        )?;
        chk(
            "learner.gamma",
            self.gains.gamma.nrows() == self.basis.len(),
            "Gamma must be N x N",
        )?;
        chk("sim.delay_steps", self.delay_steps >= 1, "delay must be at least one step")?;
        chk("learner.collect_every", self.cadence.every_steps >= 1, "cadence must be positive")?;
        chk("learner.p", self.buffer_capacity >= 1, "buffer capacity must be positive")?;
        chk(
            "scenario.disturbance",
            self.scenario.disturbances.q == self.scenario.plant.q(),
            "disturbance channels must match the plant",
        )?;
        chk("zsadp.gamma", self.zsadp_gamma > T::zero(), "gamma must be positive")?;
        chk("tadp.rho", self.tadp.rho > T::zero(), "rho must be positive")?;
        chk(
            "sim.divergence_threshold",
            self.divergence_threshold > T::zero(),
            "threshold must be positive",
        )?;
        IncrementalModelConfig::new(self.g_bar.clone())?;
        EventSchedule::new(self.scenario.events.clone())?;
        Ok(())
    }

    /// Builds the controller this configuration selects.
    pub fn build_controller(&self) -> Result<Controller<T>> {
        Ok(match self.controller {
            ControllerKind::Iadp => Controller::Iadp(IadpController {
                model: IncrementalModelConfig::new(self.g_bar.clone())?,
                cost: self.cost.clone(),
                basis: self.basis.clone(),
            }),
            ControllerKind::Zsadp => Controller::Zsadp(ZsadpController {
                model: self.scenario.plant.clone(),
                gamma: self.zsadp_gamma,
                cost: self.cost.clone(),
                basis: self.basis.clone(),
            }),
            ControllerKind::Tadp => Controller::Tadp(TadpController {
                model: self.scenario.plant.clone(),
                rho: self.tadp.rho,
                d_m_coef: self.tadp.d_m_coef,
                l_m_coef: self.tadp.l_m_coef,
                cost: self.cost.clone(),
                basis: self.basis.clone(),
            }),
        })
    }
}

/// One logged instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow<T> {
    pub t: T,
    pub x_true: Vec<T>,
    pub x_meas: Vec<T>,
    pub u: Vec<T>,
    pub du: Vec<T>,
    /// Critic weights after this step's update.
    pub w: Vec<T>,
    pub theta_tilde: T,
    pub xi: Vec<T>,
    pub d: Vec<T>,
    pub e_u: T,
    pub e_x: T,
    pub rank: usize,
    pub sigma_min: T,
    pub aux: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeStatus<T> {
    Completed,
    Diverged { step: usize, t: T, reason: String },
}

/// Full record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog<T: Real> {
    pub controller: ControllerKind,
    pub scenario: String,
    pub rows: Vec<LogRow<T>>,
    pub status: EpisodeStatus<T>,
    /// Rank was still below `N` at the cadence deadline.
    pub insufficient_excitation: bool,
    /// `(time, label)` of every fired event.
    pub fired_events: Vec<(T, &'static str)>,
    /// `(time, g)` the controller's own model reports at the origin, at
    /// start and after each event; empty for the model-free controller.
    pub model_trace: Vec<(T, Matrix<T>)>,
    /// Steps where an output reached `beta - 1e-12`.
    pub saturation_violations: usize,
}

impl<T: Real> TrajectoryLog<T> {
    pub fn diverged(&self) -> bool {
        matches!(self.status, EpisodeStatus::Diverged { .. })
    }

    pub fn last(&self) -> &LogRow<T> {
        self.rows.last().expect("a log always holds the initial row")
    }

    pub fn metrics(&self) -> Metrics<T> {
        let times: Vec<T> = self.rows.iter().map(|r| r.t).collect();
        let u: Vec<&[T]> = self.rows.iter().map(|r| r.u.as_slice()).collect();
        let x: Vec<&[T]> = self.rows.iter().map(|r| r.x_true.as_slice()).collect();
        accumulate_metrics(&times, &u, &x)
    }

    pub fn max_abs_u(&self) -> T {
        self.rows
            .iter()
            .flat_map(|r| r.u.iter())
            .fold(T::zero(), |a, &u| a.max(u.abs()))
    }

    /// `sup |x_true|` over rows with `t` in `[from, to]`.
    pub fn sup_state_norm(&self, from: T, to: T) -> T {
        self.rows
            .iter()
            .filter(|r| r.t >= from && r.t <= to)
            .map(|r| r.x_true.iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Row closest to time `t`.
    pub fn row_at(&self, t: T) -> Option<&LogRow<T>> {
        self.rows.iter().min_by(|a, b| {
            (a.t - t)
                .abs()
                .partial_cmp(&(b.t - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }
}

impl<T: Real> TrajectoryLog<T> {
    /// Column names, in the order [`TrajectoryLog::write_csv`] writes them.
    pub fn csv_header(&self) -> Vec<String> {
        let Some(first) = self.rows.first() else {
            return Vec::new();
        };
        let indexed = |name: &'static str, len: usize| (1..=len).map(move |i| format!("{name}_{i}"));
        let mut cols = vec!["t".to_string()];
        cols.extend(indexed("x_true", first.x_true.len()));
        cols.extend(indexed("x_meas", first.x_meas.len()));
        cols.extend(indexed("u", first.u.len()));
        cols.extend(indexed("du", first.du.len()));
        cols.extend(indexed("w", first.w.len()));
        cols.push("theta_tilde".into());
        cols.extend(indexed("xi", first.xi.len()));
        if first.d.len() == 1 {
            cols.push("d".into());
        } else {
            cols.extend(indexed("d", first.d.len()));
        }
        cols.extend(["E_u", "E_x", "rank", "sigma_min"].map(String::from));
        cols.extend(indexed("aux", self.rows.iter().map(|r| r.aux.len()).max().unwrap_or(0)));
        cols
    }

    /// Writes the log as CSV with shortest round-trip decimals.
    ///
    /// Rows logged during warm-up carry no auxiliary signals; their `aux`
    /// cells are written as zero.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header = self.csv_header();
        writeln!(out, "{}", header.join(","))?;
        let n_aux = self.rows.iter().map(|r| r.aux.len()).max().unwrap_or(0);
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            let mut put = |v: T| {
                if !line.is_empty() {
                    line.push(',');
                }
                line.push_str(&v.as_f64().to_string());
            };
            put(r.t);
            r.x_true.iter().chain(&r.x_meas).chain(&r.u).chain(&r.du).chain(&r.w).for_each(|&v| put(v));
            put(r.theta_tilde);
            r.xi.iter().chain(&r.d).for_each(|&v| put(v));
            put(r.e_u);
            put(r.e_x);
            put(T::lit(r.rank as f64));
            put(r.sigma_min);
            (0..n_aux).for_each(|i| put(r.aux.get(i).copied().unwrap_or_else(T::zero)));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Running integrals of `|u|^2` and `|x|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T> {
    pub e_u: Vec<T>,
    pub e_x: Vec<T>,
}

impl<T: Real> Metrics<T> {
    pub fn final_e_u(&self) -> T {
        self.e_u.last().copied().unwrap_or_else(T::zero)
    }
    pub fn final_e_x(&self) -> T {
        self.e_x.last().copied().unwrap_or_else(T::zero)
    }
}

/// Trapezoidal running integrals of `|u|^2` and `|x|^2` over `times`.
pub fn accumulate_metrics<T: Real>(times: &[T], u: &[&[T]], x: &[&[T]]) -> Metrics<T> {
    let sq = |v: &[T]| v.iter().fold(T::zero(), |a, &e| a + e * e);
    let half = T::lit(0.5);
    let mut e_u = Vec::with_capacity(times.len());
    let mut e_x = Vec::with_capacity(times.len());
    let (mut acc_u, mut acc_x) = (T::zero(), T::zero());
    for k in 0..times.len() {
        if k > 0 {
            let h = times[k] - times[k - 1];
            acc_u += half * h * (sq(u[k - 1]) + sq(u[k]));
            acc_x += half * h * (sq(x[k - 1]) + sq(x[k]));
        }
        e_u.push(acc_u);
        e_x.push(acc_x);
    }
    Metrics { e_u, e_x }
}

/// Classical RK4 with `u` held over the step and `d` re-evaluated at each stage.
pub fn rk4_step<T, P, D>(plant: &P, x: &Vector<T>, u: &Vector<T>, d_fn: D, t: T, dt: T) -> Result<Vector<T>>
where
    T: Real,
    P: ControlAffine<T> + ?Sized,
    D: Fn(&Vector<T>, T) -> Vector<T>,
{
    let half = T::lit(0.5);
    let f = |xs: &Vector<T>, ts: T| eval_dynamics(plant, xs, u, &d_fn(xs, ts), ts);
    let k1 = f(x, t)?;
    let k2 = f(&(x + &k1 * (dt * half)), t + dt * half)?;
    let k3 = f(&(x + &k2 * (dt * half)), t + dt * half)?;
    let k4 = f(&(x + &k3 * dt), t + dt)?;
    let next = x + (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (dt / T::lit(6.0));
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NumericFault {
            context: "rk4_step",
            message: "non-finite state".into(),
        })
    }
}

/// Hook called once per step with the row just logged; used for tracing.
pub trait StepObserver<T: Real> {
    fn on_step(&mut self, _row: &LogRow<T>) {}
}

impl<T: Real> StepObserver<T> for () {}

/// Runs one closed-loop episode.
pub fn run_episode<T: Real>(cfg: &SimConfig<T>) -> Result<TrajectoryLog<T>> {
    run_episode_observed(cfg, &mut ())
}

pub fn run_episode_observed<T: Real, O: StepObserver<T>>(cfg: &SimConfig<T>, observer: &mut O) -> Result<TrajectoryLog<T>> {
    cfg.validate()?;
    let steps = cfg.steps()?;
    let dt = cfg.dt;
    let beta = cfg.cost.beta;
    let sat_limit = beta - T::lit(1e-12);
    let n_features = cfg.basis.len();
    let m = cfg.scenario.plant.m();
    let tde_model = IncrementalModelConfig::new(cfg.g_bar.clone())?;

    let mut controller = cfg.build_controller()?;
    let mut learner = Learner::new(n_features, cfg.buffer_capacity, cfg.insertion, cfg.gains.clone())?;
    let mut line = DelayLine::with_steps(dt, cfg.delay_steps);
    let mut schedule = EventSchedule::new(cfg.scenario.events.clone())?;
    let mut env = Environment {
        plant: cfg.scenario.plant.clone(),
        disturbances: cfg.scenario.disturbances.clone(),
        noise: MeasurementNoise::new(cfg.scenario.noise.clone(), cfg.seed),
    };

    let origin = Vector::zeros(cfg.x0.len());
    let mut log = TrajectoryLog {
        controller: cfg.controller,
        scenario: cfg.scenario.id.clone(),
        rows: Vec::with_capacity(steps + 1),
        status: EpisodeStatus::Completed,
        insufficient_excitation: false,
        fired_events: Vec::new(),
        model_trace: Vec::new(),
        saturation_violations: 0,
    };
    if let Some(model) = controller.model() {
        log.model_trace.push((T::zero(), model.input_map(&origin)));
    }

    let mut x_true = cfg.x0.clone();
    let (mut e_u, mut e_x) = (T::zero(), T::zero());
    let mut prev_sq: Option<(T, T)> = None;
    let mut rank_checked = false;
    let mut report = learner.buffer.rank_report();

    for k in 0..=steps {
        let t = T::lit(k as f64) * dt;

        for ev in schedule.apply(t, &mut env) {
            log.fired_events.push((t, ev.action.label()));
            if let EventAction::SwapPlant(p) = &ev.action {
                if cfg.baseline_tracks_swaps {
                    controller.set_model(p.clone());
                }
            }
            if let Some(model) = controller.model() {
                log.model_trace.push((t, model.input_map(&origin)));
            }
        }

        let x_meas = env.noise.apply(&x_true, t);
        let d_now = env.disturbances.value(&x_true, t);
        let warm_up = !line.is_full();
        let u0 = line
            .delayed(t)
            .map(|s| s.u.clone())
            .unwrap_or_else(|| Vector::zeros(m));

        let out = if warm_up {
            crate::controllers::ControlOutput {
                u: Vector::zeros(m),
                du: Vector::zeros(m),
                aux: Vector::zeros(0),
            }
        } else {
            controller.control(&learner.weights, &x_meas, &u0)?
        };
        if out.u.iter().any(|u| !(u.abs() <= sat_limit)) {
            log.saturation_violations += 1;
        }

        let xdot_now = match cfg.xdot_source {
            XdotSource::GroundTruth => eval_dynamics(&env.plant, &x_true, &out.u, &d_now, t)?,
            XdotSource::BackwardDifference => {
                line.backward_difference(&x_meas).unwrap_or_else(|_| Vector::zeros(x_meas.len()))
            }
        };
        let sample = DelaySample {
            t,
            x: x_meas.clone(),
            xdot: xdot_now.clone(),
            u: out.u.clone(),
        };

        let mut theta_tilde = T::zero();
        let mut xi = Vector::zeros(m);
        if !warm_up {
            let rec = compute_increments(&line, &sample)?;
            xi = true_tde_error(&rec, &tde_model);
            let pair = controller.learning_pair(&x_meas, &out, &rec)?;
            match learner.update(&pair, dt) {
                Ok(r) => theta_tilde = r,
                Err(e) => {
                    log.status = EpisodeStatus::Diverged {
                        step: k,
                        t,
                        reason: e.to_string(),
                    };
                }
            }
            let collecting = t <= cfg.cadence.collect_until || report.rank < n_features;
            if collecting && k % cfg.cadence.every_steps == 0 && pair.is_finite() {
                report = learner.buffer.try_insert(pair)?.1;
            }
        }
        if !rank_checked && t >= cfg.cadence.rank_deadline {
            rank_checked = true;
            log.insufficient_excitation = report.rank < n_features;
        }
        line.push_sample(sample)?;

        let su = out.u.norm_squared();
        let sx = x_true.norm_squared();
        if let Some((pu, px)) = prev_sq {
            e_u += T::lit(0.5) * dt * (pu + su);
            e_x += T::lit(0.5) * dt * (px + sx);
        }
        prev_sq = Some((su, sx));

        let row = LogRow {
            t,
            x_true: x_true.iter().copied().collect(),
            x_meas: x_meas.iter().copied().collect(),
            u: out.u.iter().copied().collect(),
            du: out.du.iter().copied().collect(),
            w: learner.weights.0.iter().copied().collect(),
            theta_tilde,
            xi: xi.iter().copied().collect(),
            d: d_now.iter().copied().collect(),
            e_u,
            e_x,
            rank: report.rank,
            sigma_min: report.sigma_min,
            aux: out.aux.iter().copied().collect(),
        };
        observer.on_step(&row);
        log.rows.push(row);

        if log.diverged() || k == steps {
            break;
        }

        let dist = &env.disturbances;
        match rk4_step(&env.plant, &x_true, &out.u, |xs, ts| dist.value(xs, ts), t, dt) {
            Ok(next) if next.norm() <= cfg.divergence_threshold => x_true = next,
            Ok(next) => {
                log.status = EpisodeStatus::Diverged {
                    step: k + 1,
                    t: t + dt,
                    reason: format!("state norm {} exceeds threshold", next.norm()),
                };
                break;
            }
            Err(e) => {
                log.status = EpisodeStatus::Diverged {
                    step: k + 1,
                    t: t + dt,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    Ok(log)
}
