use crate::error::{Error, Result};
use crate::scalar::{Real, Vector};

/// Scalar disturbance source.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal<T> {
    None,
    /// State-dependent `w1 * x1 * sin(w2 * x2)`, vanishing at `x1 = 0`.
    Vanishing { w1: T, w2: T },
    /// `+amplitude` for the first half of each period after `t_on`, then
    /// `-amplitude`; zero outside `[t_on, t_off)`.
    SquareWave {
        amplitude: T,
        period: T,
        t_on: T,
        t_off: T,
    },
}

impl<T: Real> DisturbanceSignal<T> {
    pub fn square_wave(amplitude: T, period: T, t_on: T, t_off: T) -> Result<Self> {
        if !(period > T::zero()) {
            return Err(Error::config("disturbance.period", "period must be positive"));
        }
        if !(t_on < t_off) {
            return Err(Error::config("disturbance.window", "window start must precede its end"));
        }
        Ok(DisturbanceSignal::SquareWave {
            amplitude,
            period,
            t_on,
            t_off,
        })
    }

    pub fn value(&self, x: &Vector<T>, t: T) -> T {
        match *self {
            DisturbanceSignal::None => T::zero(),
            DisturbanceSignal::Vanishing { w1, w2 } => w1 * x[0] * (w2 * x[1]).sin(),
            DisturbanceSignal::SquareWave {
                amplitude,
                period,
                t_on,
                t_off,
            } => {
                if t < t_on || t >= t_off {
                    return T::zero();
                }
                let elapsed = t - t_on;
                let phase = elapsed - (elapsed / period).floor() * period;
                if phase < period * T::lit(0.5) {
                    amplitude
                } else {
                    -amplitude
                }
            }
        }
    }
}

/// One signal routed into a disturbance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceTerm<T> {
    pub channel: usize,
    pub signal: DisturbanceSignal<T>,
}

/// Sum of signals per channel; produces the `d` vector fed through `k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbances<T> {
    pub q: usize,
    pub terms: Vec<DisturbanceTerm<T>>,
}

impl<T: Real> Disturbances<T> {
    pub fn none(q: usize) -> Self {
        Disturbances { q, terms: Vec::new() }
    }

    /// All signals summed into channel 0.
    pub fn single_channel(signals: impl IntoIterator<Item = DisturbanceSignal<T>>) -> Self {
        Disturbances {
            q: 1,
            terms: signals
                .into_iter()
                .map(|signal| DisturbanceTerm { channel: 0, signal })
                .collect(),
        }
    }

    pub fn value(&self, x: &Vector<T>, t: T) -> Vector<T> {
        let mut d = Vector::zeros(self.q);
        for term in &self.terms {
            d[term.channel] += term.signal.value(x, t);
        }
        d
    }
}

/// Evaluates one signal as a length-1 vector.
pub fn disturbance_value<T: Real>(signal: &DisturbanceSignal<T>, x: &Vector<T>, t: T) -> Vector<T> {
    Vector::from_element(1, signal.value(x, t))
}
