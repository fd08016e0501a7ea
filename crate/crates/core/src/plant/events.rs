use crate::error::{Error, Result};
use crate::scalar::Real;

use super::disturbance::Disturbances;
use super::dynamics::Plant;
use super::noise::{MeasurementNoise, NoiseSpec};

/// What an event does to the environment.
#[derive(Debug, Clone, PartialEq)]
pub enum EventAction<T: Real> {
    SwapPlant(Plant<T>),
    SetDisturbance(Disturbances<T>),
    SetNoise(NoiseSpec<T>),
}

impl<T: Real> EventAction<T> {
    pub fn label(&self) -> &'static str {
        match self {
            EventAction::SwapPlant(_) => "swap_plant",
            EventAction::SetDisturbance(_) => "set_disturbance",
            EventAction::SetNoise(_) => "set_noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<T: Real> {
    pub time: T,
    pub action: EventAction<T>,
}

/// Mutable simulator-side world: the true plant and its exogenous inputs.
#[derive(Debug, Clone)]
pub struct Environment<T: Real> {
    pub plant: Plant<T>,
    pub disturbances: Disturbances<T>,
    pub noise: MeasurementNoise<T>,
}

/// Time-ordered one-shot events.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSchedule<T: Real> {
    events: Vec<Event<T>>,
    next: usize,
}

impl<T: Real> Default for EventSchedule<T> {
    fn default() -> Self {
        EventSchedule {
            events: Vec::new(),
            next: 0,
        }
    }
}

impl<T: Real> EventSchedule<T> {
    pub fn new(events: Vec<Event<T>>) -> Result<Self> {
        if events.windows(2).any(|w| !(w[0].time < w[1].time)) {
            return Err(Error::config("events", "event times must be strictly increasing"));
        }
        Ok(EventSchedule { events, next: 0 })
    }

    pub fn events(&self) -> &[Event<T>] {
        &self.events
    }

    pub fn pending(&self) -> usize {
        self.events.len() - self.next
    }

    /// Applies every not-yet-fired event with `time <= t`, in order.
    ///
    /// A relative slack of 1e-9 absorbs the rounding in `k * dt`.
    pub fn apply(&mut self, t: T, world: &mut Environment<T>) -> Vec<Event<T>> {
        let slack = T::lit(1e-9) * t.abs().max(T::one());
        let mut fired = Vec::new();
        while let Some(ev) = self.events.get(self.next) {
            if ev.time > t + slack {
                break;
            }
            match &ev.action {
                EventAction::SwapPlant(p) => world.plant = p.clone(),
                EventAction::SetDisturbance(d) => world.disturbances = d.clone(),
                EventAction::SetNoise(n) => world.noise.set_spec(n.clone()),
            }
            fired.push(ev.clone());
            self.next += 1;
        }
        fired
    }
}

/// Free-function form of [`EventSchedule::apply`].
pub fn apply_event_schedule<T: Real>(schedule: &mut EventSchedule<T>, t: T, world: &mut Environment<T>) -> Vec<Event<T>> {
    schedule.apply(t, world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Pendulum;

    fn world() -> Environment<f64> {
        Environment {
            plant: Plant::Pendulum(Pendulum::nominal()),
            disturbances: Disturbances::none(1),
            noise: MeasurementNoise::new(NoiseSpec::None, 0),
        }
    }

    fn swap_at_20() -> EventSchedule<f64> {
        EventSchedule::new(vec![Event {
            time: 20.0,
            action: EventAction::SwapPlant(Plant::Pendulum(Pendulum::reset_mild())),
        }])
        .unwrap()
    }

    #[test]
    fn nothing_fires_before_trigger() {
        let mut s = swap_at_20();
        let mut w = world();
        assert!(s.apply(19.999, &mut w).is_empty());
        assert_eq!(w.plant, Plant::Pendulum(Pendulum::nominal()));
    }

    #[test]
    fn swap_fires_once_at_trigger() {
        let mut s = swap_at_20();
        let mut w = world();
        let fired = s.apply(20.0, &mut w);
        assert_eq!(fired.len(), 1);
        assert_eq!(w.plant, Plant::Pendulum(Pendulum::reset_mild()));
        assert!(s.apply(25.0, &mut w).is_empty());
    }

    #[test]
    fn accumulated_rounding_still_fires() {
        let mut s = swap_at_20();
        let mut w = world();
        let t = (0..20_000).fold(0.0, |acc, _| acc + 1e-3);
        assert_eq!(s.apply(t, &mut w).len(), 1);
    }

    #[test]
    fn empty_schedule_fires_nothing() {
        let mut s = EventSchedule::<f64>::default();
        assert!(s.apply(100.0, &mut world()).is_empty());
    }

    #[test]
    fn rejects_unordered_times() {
        let ev = |time| Event {
            time,
            action: EventAction::SetNoise(NoiseSpec::None),
        };
        assert!(EventSchedule::new(vec![ev(2.0), ev(2.0)]).is_err());
        assert!(EventSchedule::new(vec![ev(3.0), ev(2.0)]).is_err());
    }

    #[test]
    fn late_query_fires_all_in_order() {
        let mut s = EventSchedule::new(vec![
            Event {
                time: 1.0,
                action: EventAction::SetNoise(NoiseSpec::gaussian_snr(10.0, 0.0, 5.0).unwrap()),
            },
            Event {
                time: 2.0,
                action: EventAction::SwapPlant(Plant::Pendulum(Pendulum::reset_inverted())),
            },
        ])
        .unwrap();
        let mut w = world();
        let fired = s.apply(10.0, &mut w);
        assert_eq!(fired.iter().map(|e| e.action.label()).collect::<Vec<_>>(), ["set_noise", "swap_plant"]);
        assert_eq!(s.pending(), 0);
    }
}
