//! Scenario presets and the flat `key = value` configuration format.
//!
//! ```text
//! # comments start with '#'
//! scenario = s2
//! controller = zsadp
//! sim.dt = 0.0005
//! cost.q = [1, 0, 0, 1]
//! ```
//!
//! The `scenario` key picks the preset that supplies defaults for every
//! plant, disturbance, noise and event key; any key given explicitly wins.
//! [`echo`] writes every key of a resolved configuration, and parsing that
//! text yields the same [`SimConfig`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::controllers::{ControllerKind, TadpController};
use crate::critic::{BasisSet, CostConfig, Monomial};
use crate::error::{Error, Result};
use crate::learner::{InsertionPolicy, LearnerGains};
use crate::plant::{DisturbanceSignal, Disturbances, Event, EventAction, NoiseSpec, Pendulum, Plant};
use crate::scalar::{Matrix, Vector};
use crate::sim::{CollectionCadence, Scenario, SimConfig, TadpParams};
use crate::tde::XdotSource;

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "scenario",
    "controller",
    "seed",
    "sim.dt",
    "sim.t_end",
    "sim.xdot_source",
    "sim.delay_steps",
    "sim.x0",
    "sim.divergence_threshold",
    "plant.pendulum",
    "disturbance.vanishing",
    "disturbance.square_wave",
    "noise.snr_db",
    "noise.window",
    "noise.power",
    "event.swap_time",
    "event.swap_pendulum",
    "critic.basis",
    "cost.q",
    "cost.beta",
    "cost.c_bar",
    "tde.g_bar",
    "learner.p",
    "learner.gamma",
    "learner.k_c",
    "learner.k_e",
    "learner.insertion",
    "learner.collect_every",
    "learner.collect_until",
    "learner.rank_deadline",
    "zsadp.gamma",
    "tadp.rho",
    "tadp.d_m",
    "tadp.l_m",
    "baseline.track_plant_swaps",
];

pub const SCENARIOS: [&str; 3] = ["s1", "s2", "s3"];

const OMEGA: (f64, f64) = (-0.3906, 1.0051);

/// Plant, disturbances, noise and events of a benchmark scenario.
pub fn scenario_preset(id: &str) -> Result<Scenario<f64>> {
    let base = DisturbanceSignal::Vanishing {
        w1: OMEGA.0,
        w2: OMEGA.1,
    };
    let (extra, noise, swap) = match id {
        "s1" => {
            return Ok(Scenario {
                id: id.into(),
                plant: Plant::Pendulum(Pendulum::nominal()),
                disturbances: Disturbances::single_channel([base]),
                noise: NoiseSpec::None,
                events: Vec::new(),
            })
        }
        "s2" => (
            DisturbanceSignal::square_wave(0.2, 5.0, 20.0, 60.0)?,
            NoiseSpec::gaussian_snr(50.0, 20.0, 60.0)?,
            Pendulum::reset_mild(),
        ),
        "s3" => (
            DisturbanceSignal::square_wave(0.5, 1.0, 20.0, 60.0)?,
            NoiseSpec::gaussian_snr(10.0, 20.0, 60.0)?,
            Pendulum::reset_inverted(),
        ),
        other => return Err(Error::config("scenario", format!("unknown scenario `{other}`"))),
    };
    Ok(Scenario {
        id: id.into(),
        plant: Plant::Pendulum(Pendulum::nominal()),
        disturbances: Disturbances::single_channel([base, extra]),
        noise,
        events: vec![Event {
            time: 20.0,
            action: EventAction::SwapPlant(Plant::Pendulum(swap)),
        }],
    })
}

/// Benchmark defaults with the given scenario and the IADP controller.
pub fn preset(id: &str) -> Result<SimConfig<f64>> {
    let scenario = scenario_preset(id)?;
    let basis = BasisSet::pendulum_default();
    let (d_m_coef, l_m_coef) = TadpController::<f64>::benchmark_bounds();
    Ok(SimConfig {
        dt: 1e-3,
        t_end: 80.0,
        seed: 0,
        xdot_source: XdotSource::BackwardDifference,
        delay_steps: 1,
        controller: ControllerKind::Iadp,
        x0: Vector::from_column_slice(&[2.0, -2.0]),
        scenario,
        gains: LearnerGains::benchmark(basis.len()),
        basis,
        cost: CostConfig::pendulum_default(),
        g_bar: Matrix::from_column_slice(2, 1, &[0.0, 0.1]),
        buffer_capacity: 8,
        insertion: InsertionPolicy::SequentialFill,
        cadence: CollectionCadence {
            every_steps: 10,
            collect_until: 2.0,
            rank_deadline: 5.0,
        },
        zsadp_gamma: 1.0,
        tadp: TadpParams {
            rho: 0.1,
            d_m_coef,
            l_m_coef,
        },
        baseline_tracks_swaps: false,
        divergence_threshold: 1e6,
    })
}

/// Unresolved key-value pairs; later assignments replace earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected `key = value`"))?;
            map.set(key.trim(), value.trim())?;
        }
        Ok(map)
    }

    /// Parses a `key=value` command-line override.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn resolve(&self) -> Result<SimConfig<f64>> {
        let scenario_id = self.get("scenario").unwrap_or("s1");
        let mut cfg = preset(scenario_id)?;
        let val = |key: &str| self.get(key);

        if let Some(v) = val("controller") {
            cfg.controller = v.parse()?;
        }
        if let Some(v) = val("seed") {
            cfg.seed = v
                .parse()
                .map_err(|_| Error::config("seed", format!("expected an unsigned integer, got `{v}`")))?;
        }
        if let Some(v) = val("sim.dt") {
            cfg.dt = number("sim.dt", v)?;
        }
        if let Some(v) = val("sim.t_end") {
            cfg.t_end = number("sim.t_end", v)?;
        }
        if let Some(v) = val("sim.xdot_source") {
            cfg.xdot_source = v.parse()?;
        }
        if let Some(v) = val("sim.delay_steps") {
            cfg.delay_steps = count("sim.delay_steps", v)?;
        }
        if let Some(v) = val("sim.x0") {
            cfg.x0 = Vector::from_vec(list("sim.x0", v)?);
        }
        if let Some(v) = val("sim.divergence_threshold") {
            cfg.divergence_threshold = number("sim.divergence_threshold", v)?;
        }

        if let Some(v) = val("plant.pendulum") {
            cfg.scenario.plant = Plant::Pendulum(pendulum("plant.pendulum", v)?);
        }
        let (mut vanishing, mut square) = split_disturbances(&cfg.scenario.disturbances);
        if let Some(v) = val("disturbance.vanishing") {
            vanishing = optional("disturbance.vanishing", v, |s| {
                let [w1, w2] = fixed::<2>("disturbance.vanishing", s)?;
                Ok(DisturbanceSignal::Vanishing { w1, w2 })
            })?;
        }
        if let Some(v) = val("disturbance.square_wave") {
            square = optional("disturbance.square_wave", v, |s| {
                let [a, period, on, off] = fixed::<4>("disturbance.square_wave", s)?;
                DisturbanceSignal::square_wave(a, period, on, off)
                    .map_err(|e| Error::config("disturbance.square_wave", e.to_string()))
            })?;
        }
        cfg.scenario.disturbances = Disturbances::single_channel(vanishing.into_iter().chain(square));

        let (mut snr, mut window, mut power) = match cfg.scenario.noise {
            NoiseSpec::None => (None, [20.0, 60.0], None),
            NoiseSpec::Gaussian {
                snr_db,
                t_on,
                t_off,
                power,
            } => (Some(snr_db), [t_on, t_off], power),
        };
        if let Some(v) = val("noise.snr_db") {
            snr = optional("noise.snr_db", v, |s| number("noise.snr_db", s))?;
        }
        if let Some(v) = val("noise.window") {
            window = fixed::<2>("noise.window", v)?;
        }
        if let Some(v) = val("noise.power") {
            power = optional("noise.power", v, |s| number("noise.power", s))?;
        }
        if power.is_some_and(|p| !(p >= 0.0)) {
            return Err(Error::config("noise.power", "variance must be non-negative"));
        }
        cfg.scenario.noise = match snr {
            None => NoiseSpec::None,
            Some(snr_db) => {
                if !(window[0] < window[1]) {
                    return Err(Error::config("noise.window", "window start must precede its end"));
                }
                NoiseSpec::Gaussian {
                    snr_db,
                    t_on: window[0],
                    t_off: window[1],
                    power,
                }
            }
        };

        let (mut swap_time, mut swap_plant) = split_swap(&cfg.scenario.events)?;
        if let Some(v) = val("event.swap_time") {
            swap_time = optional("event.swap_time", v, |s| number("event.swap_time", s))?;
        }
        if let Some(v) = val("event.swap_pendulum") {
            swap_plant = Some(pendulum("event.swap_pendulum", v)?);
        }
        cfg.scenario.events = match (swap_time, swap_plant) {
            (Some(time), Some(p)) => vec![Event {
                time,
                action: EventAction::SwapPlant(Plant::Pendulum(p)),
            }],
            (Some(_), None) => {
                return Err(Error::config("event.swap_pendulum", "a swap time needs a target plant"))
            }
            (None, _) => Vec::new(),
        };

        if let Some(v) = val("critic.basis") {
            cfg.basis = basis("critic.basis", v)?;
        }
        let n = cfg.x0.len();
        let mut q = cfg.cost.q.clone();
        let mut beta = cfg.cost.beta;
        let mut c_bar = cfg.cost.c_bar;
        if let Some(v) = val("cost.q") {
            q = square_matrix("cost.q", v)?;
        }
        if let Some(v) = val("cost.beta") {
            beta = number("cost.beta", v)?;
        }
        if let Some(v) = val("cost.c_bar") {
            c_bar = number("cost.c_bar", v)?;
        }
        cfg.cost = CostConfig::new(q, beta, c_bar)?;
        if let Some(v) = val("tde.g_bar") {
            let vals = list("tde.g_bar", v)?;
            if n == 0 || vals.is_empty() || vals.len() % n != 0 {
                return Err(Error::config("tde.g_bar", "expected n*m entries in row-major order"));
            }
            cfg.g_bar = Matrix::from_row_slice(n, vals.len() / n, &vals);
        }

        if let Some(v) = val("learner.p") {
            cfg.buffer_capacity = count("learner.p", v)?;
        }
        let n_features = cfg.basis.len();
        let mut gamma = if cfg.gains.gamma.nrows() == n_features {
            cfg.gains.gamma.clone()
        } else {
            Matrix::identity(n_features, n_features) * 1e-4
        };
        let mut k_c = cfg.gains.k_c;
        let mut k_e = cfg.gains.k_e;
        if let Some(v) = val("learner.gamma") {
            gamma = match list("learner.gamma", v) {
                Ok(vals) if vals.len() == n_features * n_features => {
                    Matrix::from_row_slice(n_features, n_features, &vals)
                }
                Ok(_) => return Err(Error::config("learner.gamma", "expected a scalar or N*N entries")),
                Err(_) => Matrix::identity(n_features, n_features) * number("learner.gamma", v)?,
            };
        }
        if let Some(v) = val("learner.k_c") {
            k_c = number("learner.k_c", v)?;
        }
        if let Some(v) = val("learner.k_e") {
            k_e = number("learner.k_e", v)?;
        }
        cfg.gains = LearnerGains::new(gamma, k_c, k_e)?;
        if let Some(v) = val("learner.insertion") {
            cfg.insertion = v.parse()?;
        }
        if let Some(v) = val("learner.collect_every") {
            cfg.cadence.every_steps = count("learner.collect_every", v)?;
        }
        if let Some(v) = val("learner.collect_until") {
            cfg.cadence.collect_until = number("learner.collect_until", v)?;
        }
        if let Some(v) = val("learner.rank_deadline") {
            cfg.cadence.rank_deadline = number("learner.rank_deadline", v)?;
        }

        if let Some(v) = val("zsadp.gamma") {
            cfg.zsadp_gamma = number("zsadp.gamma", v)?;
        }
        if let Some(v) = val("tadp.rho") {
            cfg.tadp.rho = number("tadp.rho", v)?;
        }
        if let Some(v) = val("tadp.d_m") {
            cfg.tadp.d_m_coef = number("tadp.d_m", v)?;
        }
        if let Some(v) = val("tadp.l_m") {
            cfg.tadp.l_m_coef = number("tadp.l_m", v)?;
        }
        if let Some(v) = val("baseline.track_plant_swaps") {
            cfg.baseline_tracks_swaps = match v {
                "true" => true,
                "false" => false,
                _ => return Err(Error::config("baseline.track_plant_swaps", "expected true or false")),
            };
        }

        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses config text and applies `key=value` overrides on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<SimConfig<f64>> {
    let mut map = ConfigMap::parse(text)?;
    for o in overrides {
        map.set_override(o)?;
    }
    map.resolve()
}

/// Writes every key of `cfg`; [`parse_config`] on the result gives `cfg` back.
pub fn echo(cfg: &SimConfig<f64>) -> Result<String> {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("scenario", cfg.scenario.id.clone());
    put("controller", cfg.controller.as_str().into());
    put("seed", cfg.seed.to_string());
    put("sim.dt", cfg.dt.to_string());
    put("sim.t_end", cfg.t_end.to_string());
    put("sim.xdot_source", cfg.xdot_source.as_str().into());
    put("sim.delay_steps", cfg.delay_steps.to_string());
    put("sim.x0", fmt_list(cfg.x0.iter()));
    put("sim.divergence_threshold", cfg.divergence_threshold.to_string());

    let Plant::Pendulum(p) = &cfg.scenario.plant else {
        return Err(Error::config("plant.pendulum", "only pendulum plants can be written as config"));
    };
    put("plant.pendulum", fmt_pendulum(p));
    let (vanishing, square) = split_disturbances(&cfg.scenario.disturbances);
    let extra = cfg.scenario.disturbances.terms.len() - vanishing.iter().count() - square.iter().count();
    if extra > 0 || cfg.scenario.disturbances.q != 1 {
        return Err(Error::config(
            "disturbance",
            "only one vanishing and one square-wave signal on a single channel can be written as config",
        ));
    }
    put(
        "disturbance.vanishing",
        match vanishing {
            Some(DisturbanceSignal::Vanishing { w1, w2 }) => fmt_list([w1, w2].iter()),
            _ => "none".into(),
        },
    );
    put(
        "disturbance.square_wave",
        match square {
            Some(DisturbanceSignal::SquareWave {
                amplitude,
                period,
                t_on,
                t_off,
            }) => fmt_list([amplitude, period, t_on, t_off].iter()),
            _ => "none".into(),
        },
    );
    match cfg.scenario.noise {
        NoiseSpec::None => {
            put("noise.snr_db", "none".into());
        }
        NoiseSpec::Gaussian {
            snr_db,
            t_on,
            t_off,
            power,
        } => {
            put("noise.snr_db", snr_db.to_string());
            put("noise.window", fmt_list([t_on, t_off].iter()));
            put("noise.power", power.map_or("none".into(), |p| p.to_string()));
        }
    }
    let (swap_time, swap_plant) = split_swap(&cfg.scenario.events)?;
    match (swap_time, swap_plant) {
        (Some(t), Some(p)) => {
            put("event.swap_time", t.to_string());
            put("event.swap_pendulum", fmt_pendulum(&p));
        }
        _ => put("event.swap_time", "none".into()),
    }

    put(
        "critic.basis",
        format!(
            "[{}]",
            cfg.basis
                .features()
                .iter()
                .map(|m| format!("[{}]", m.exponents.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    put("cost.q", fmt_list(cfg.cost.q.transpose().iter()));
    put("cost.beta", cfg.cost.beta.to_string());
    put("cost.c_bar", cfg.cost.c_bar.to_string());
    put("tde.g_bar", fmt_list(cfg.g_bar.transpose().iter()));
    put("learner.p", cfg.buffer_capacity.to_string());
    put("learner.gamma", fmt_list(cfg.gains.gamma.transpose().iter()));
    put("learner.k_c", cfg.gains.k_c.to_string());
    put("learner.k_e", cfg.gains.k_e.to_string());
    put("learner.insertion", cfg.insertion.as_str().into());
    put("learner.collect_every", cfg.cadence.every_steps.to_string());
    put("learner.collect_until", cfg.cadence.collect_until.to_string());
    put("learner.rank_deadline", cfg.cadence.rank_deadline.to_string());
    put("zsadp.gamma", cfg.zsadp_gamma.to_string());
    put("tadp.rho", cfg.tadp.rho.to_string());
    put("tadp.d_m", cfg.tadp.d_m_coef.to_string());
    put("tadp.l_m", cfg.tadp.l_m_coef.to_string());
    put("baseline.track_plant_swaps", cfg.baseline_tracks_swaps.to_string());
    Ok(out)
}

type SplitDisturbances = (Option<DisturbanceSignal<f64>>, Option<DisturbanceSignal<f64>>);

fn split_disturbances(d: &Disturbances<f64>) -> SplitDisturbances {
    let mut vanishing = None;
    let mut square = None;
    for term in &d.terms {
        match term.signal {
            DisturbanceSignal::Vanishing { .. } if vanishing.is_none() => vanishing = Some(term.signal.clone()),
            DisturbanceSignal::SquareWave { .. } if square.is_none() => square = Some(term.signal.clone()),
            _ => {}
        }
    }
    (vanishing, square)
}

fn split_swap(events: &[Event<f64>]) -> Result<(Option<f64>, Option<Pendulum<f64>>)> {
    match events {
        [] => Ok((None, None)),
        [Event {
            time,
            action: EventAction::SwapPlant(Plant::Pendulum(p)),
        }] => Ok((Some(*time), Some(p.clone()))),
        _ => Err(Error::config("event", "only a single pendulum swap can be written as config")),
    }
}

fn fmt_list<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    format!("[{}]", vals.map(f64::to_string).collect::<Vec<_>>().join(", "))
}

fn fmt_pendulum(p: &Pendulum<f64>) -> String {
    fmt_list(
        [
            p.velocity_coupling,
            p.gravity,
            p.friction,
            p.input_gain,
            p.disturbance_gain[0],
            p.disturbance_gain[1],
        ]
        .iter(),
    )
}

fn number(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("expected a number, got `{s}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "value must be finite"))
    }
}

fn count(key: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{s}`")))
}

fn brackets<'a>(key: &str, s: &'a str) -> Result<&'a str> {
    s.trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| Error::config(key, format!("expected a bracketed list, got `{s}`")))
}

fn list(key: &str, s: &str) -> Result<Vec<f64>> {
    let inner = brackets(key, s)?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|e| number(key, e)).collect()
}

fn fixed<const K: usize>(key: &str, s: &str) -> Result<[f64; K]> {
    let vals = list(key, s)?;
    vals.try_into()
        .map_err(|v: Vec<f64>| Error::config(key, format!("expected {K} entries, got {}", v.len())))
}

fn optional<V>(key: &str, s: &str, parse: impl FnOnce(&str) -> Result<V>) -> Result<Option<V>> {
    if s.trim() == "none" {
        Ok(None)
    } else {
        parse(s).map(Some).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config(key, other.to_string()),
        })
    }
}

fn pendulum(key: &str, s: &str) -> Result<Pendulum<f64>> {
    let [a, b, c, e, k1, k2] = fixed::<6>(key, s)?;
    Ok(Pendulum::from_f64(a, b, c, e, [k1, k2]))
}

fn square_matrix(key: &str, s: &str) -> Result<Matrix<f64>> {
    let vals = list(key, s)?;
    let n = (vals.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != vals.len() {
        return Err(Error::config(key, "expected n*n entries in row-major order"));
    }
    Ok(Matrix::from_row_slice(n, n, &vals))
}

fn basis(key: &str, s: &str) -> Result<BasisSet> {
    let inner = brackets(key, s)?;
    let mut features = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let open = rest
            .strip_prefix('[')
            .ok_or_else(|| Error::config(key, "expected a list of exponent lists"))?;
        let close = open
            .find(']')
            .ok_or_else(|| Error::config(key, "unterminated exponent list"))?;
        let exps = open[..close]
            .split(',')
            .map(|e| {
                e.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::config(key, format!("bad exponent `{}`", e.trim())))
            })
            .collect::<Result<Vec<u32>>>()?;
        features.push(Monomial::new(exps));
        rest = open[close + 1..].trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    let arity = features.first().map_or(0, |m| m.exponents.len());
    BasisSet::new(arity, features).map_err(|e| Error::config(key, e.to_string()))
}
