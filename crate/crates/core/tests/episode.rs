use iadp::config::preset;
use iadp::critic::{BasisSet, CostConfig};
use iadp::learner::LearnerGains;
use iadp::plant::{Disturbances, DisturbanceSignal, NoiseSpec, Pendulum, Plant};
use iadp::sim::{rk4_step, CollectionCadence, Scenario, SimConfig, TadpParams};
use iadp::{run_episode, ControllerKind, EpisodeStatus, Error, InsertionPolicy, Vector, XdotSource};

fn short(scenario: &str, t_end: f64) -> iadp::SimConfig {
    let mut cfg = preset(scenario).unwrap();
    cfg.t_end = t_end;
    cfg
}

#[test]
fn zero_horizon_logs_the_initial_row_only() {
    let log = run_episode(&short("s1", 0.0)).unwrap();
    assert_eq!(log.rows.len(), 1);
    assert_eq!(log.rows[0].x_true, vec![2.0, -2.0]);
    assert_eq!(log.metrics().final_e_x(), 0.0);
    assert!(!log.diverged());
}

#[test]
fn first_step_is_one_rk4_step_with_zero_input() {
    let cfg = short("s1", 0.002);
    let log = run_episode(&cfg).unwrap();
    assert_eq!(log.rows[0].u, vec![0.0]);
    let dist = &cfg.scenario.disturbances;
    let expected = rk4_step(
        &cfg.scenario.plant,
        &cfg.x0,
        &Vector::zeros(1),
        |x, t| dist.value(x, t),
        0.0,
        cfg.dt,
    )
    .unwrap();
    assert_eq!(log.rows[1].x_true, expected.iter().copied().collect::<Vec<_>>());
}

#[test]
fn same_seed_gives_identical_logs() {
    let cfg = short("s3", 21.0);
    let a = run_episode(&cfg).unwrap();
    let b = run_episode(&cfg).unwrap();
    assert_eq!(a.rows, b.rows);
}

#[test]
fn seed_only_matters_once_noise_is_on() {
    let a = run_episode(&short("s2", 21.0)).unwrap();
    let mut other = short("s2", 21.0);
    other.seed = 99;
    let b = run_episode(&other).unwrap();
    let split = a.rows.iter().position(|r| r.t >= 20.0).unwrap();
    assert_eq!(a.rows[..split], b.rows[..split]);
    assert_ne!(a.rows[split..], b.rows[split..]);
}

#[test]
fn baselines_keep_their_design_model_after_the_swap() {
    let mut cfg = short("s3", 21.0);
    cfg.controller = ControllerKind::Zsadp;
    let log = run_episode(&cfg).unwrap();
    assert_eq!(log.fired_events, vec![(20.0, "swap_plant")]);
    assert_eq!(log.model_trace.len(), 2);
    assert_eq!(log.model_trace[0].1, log.model_trace[1].1);

    cfg.baseline_tracks_swaps = true;
    let tracked = run_episode(&cfg).unwrap();
    assert_ne!(tracked.model_trace[0].1, tracked.model_trace[1].1);
    assert_eq!(tracked.model_trace[1].1[(1, 0)], -0.25);
}

#[test]
fn iadp_has_no_model_to_trace() {
    let log = run_episode(&short("s3", 21.0)).unwrap();
    assert!(log.model_trace.is_empty());
    assert_eq!(log.fired_events.len(), 1);
}

#[test]
fn metrics_are_trapezoid_sums_of_the_logged_rows() {
    let log = run_episode(&short("s1", 5.0)).unwrap();
    let (mut e_u, mut e_x) = (0.0, 0.0);
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    for pair in log.rows.windows(2) {
        let h = pair[1].t - pair[0].t;
        e_u += 0.5 * h * (sq(&pair[0].u) + sq(&pair[1].u));
        e_x += 0.5 * h * (sq(&pair[0].x_true) + sq(&pair[1].x_true));
        assert!(pair[1].e_u >= pair[0].e_u && pair[1].e_x >= pair[0].e_x);
    }
    let m = log.metrics();
    assert!((m.final_e_u() - e_u).abs() < 1e-9 * e_u.max(1.0));
    assert!((m.final_e_x() - e_x).abs() < 1e-9 * e_x.max(1.0));
}

#[test]
fn csv_rows_match_the_header() {
    let log = run_episode(&short("s2", 0.05)).unwrap();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..3], &["t", "x_true_1", "x_true_2"]);
    assert!(header.contains(&"theta_tilde") && header.contains(&"E_x"));
    let mut count = 0;
    for line in lines {
        assert_eq!(line.split(',').count(), header.len());
        count += 1;
    }
    assert_eq!(count, log.rows.len());
}

#[test]
fn crossing_the_threshold_stops_the_episode() {
    let mut cfg = short("s1", 1.0);
    cfg.divergence_threshold = 1.0;
    let log = run_episode(&cfg).unwrap();
    match log.status {
        EpisodeStatus::Diverged { step, .. } => assert_eq!(step, 1),
        EpisodeStatus::Completed => panic!("expected divergence"),
    }
    assert_eq!(log.rows.len(), 1);
}

#[test]
fn starved_buffer_is_flagged() {
    let mut cfg = short("s1", 6.0);
    cfg.cadence.every_steps = 1_000_000;
    let log = run_episode(&cfg).unwrap();
    assert!(log.insufficient_excitation);
    assert!(!log.diverged());

    let normal = run_episode(&short("s1", 6.0)).unwrap();
    assert!(!normal.insufficient_excitation);
    assert_eq!(normal.last().rank, 6);
}

#[test]
fn invalid_configuration_names_the_key() {
    let mut cfg = short("s1", 1.0);
    cfg.x0 = Vector::zeros(3);
    match run_episode(&cfg) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "sim.x0"),
        other => panic!("unexpected {other:?}"),
    }
    let mut cfg = short("s1", 1.0);
    cfg.t_end = 1.0005;
    assert!(matches!(run_episode(&cfg), Err(Error::Config { key, .. }) if key == "sim.t_end"));
}

#[test]
fn ground_truth_derivative_runs_s1() {
    let mut cfg = short("s1", 10.0);
    cfg.xdot_source = XdotSource::GroundTruth;
    let log = run_episode(&cfg).unwrap();
    assert!(!log.diverged());
    let x = &log.last().x_true;
    assert!(x[0].hypot(x[1]) < 2.0);
}

#[test]
fn single_precision_episode_tracks_double() {
    let basis = BasisSet::pendulum_default();
    let cfg32 = SimConfig::<f32> {
        dt: 1e-3,
        t_end: 10.0,
        seed: 0,
        xdot_source: XdotSource::BackwardDifference,
        delay_steps: 1,
        controller: ControllerKind::Iadp,
        x0: Vector32::from_column_slice(&[2.0, -2.0]),
        scenario: Scenario {
            id: "s1".into(),
            plant: Plant::Pendulum(Pendulum::nominal()),
            disturbances: Disturbances::single_channel([DisturbanceSignal::Vanishing { w1: -0.3906, w2: 1.0051 }]),
            noise: NoiseSpec::None,
            events: Vec::new(),
        },
        gains: LearnerGains::benchmark(basis.len()),
        basis,
        cost: CostConfig::pendulum_default(),
        g_bar: iadp::scalar::Matrix::<f32>::from_column_slice(2, 1, &[0.0, 0.1]),
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
            d_m_coef: 0.0,
            l_m_coef: 0.0,
        },
        baseline_tracks_swaps: false,
        divergence_threshold: 1e6,
    };
    let log32 = run_episode(&cfg32).unwrap();
    let log64 = run_episode(&short("s1", 10.0)).unwrap();
    assert!(!log32.diverged());
    assert_eq!(log32.rows.len(), log64.rows.len());
    let (a, b) = (&log32.last().x_true, &log64.last().x_true);
    for i in 0..2 {
        assert!((a[i] as f64 - b[i]).abs() < 1e-2, "{a:?} vs {b:?}");
    }
}

type Vector32 = iadp::scalar::Vector<f32>;
