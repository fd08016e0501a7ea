use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{Real, Vector};

/// Measurement-noise declaration.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec<T> {
    None,
    /// White Gaussian noise active on `[t_on, t_off)`.
    ///
    /// Per-channel variance is `P_signal / 10^(snr_db / 10)`, where
    /// `P_signal` is the running mean square of that clean channel since the
    /// start of the episode. `power` replaces that with a fixed absolute
    /// variance.
    Gaussian {
        snr_db: T,
        t_on: T,
        t_off: T,
        power: Option<T>,
    },
}

impl<T: Real> NoiseSpec<T> {
    pub fn gaussian_snr(snr_db: T, t_on: T, t_off: T) -> Result<Self> {
        if !(t_on < t_off) {
            return Err(Error::config("noise.window", "window start must precede its end"));
        }
        Ok(NoiseSpec::Gaussian {
            snr_db,
            t_on,
            t_off,
            power: None,
        })
    }

    pub fn is_active(&self, t: T) -> bool {
        match *self {
            NoiseSpec::None => false,
            NoiseSpec::Gaussian { t_on, t_off, .. } => t >= t_on && t < t_off,
        }
    }
}

/// Seeded noise source owned by a single episode.
#[derive(Debug, Clone)]
pub struct MeasurementNoise<T> {
    spec: NoiseSpec<T>,
    rng: ChaCha8Rng,
    sum_sq: Vec<f64>,
    samples: u64,
}

impl<T: Real> MeasurementNoise<T> {
    pub fn new(spec: NoiseSpec<T>, seed: u64) -> Self {
        MeasurementNoise {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sum_sq: Vec::new(),
            samples: 0,
        }
    }

    pub fn spec(&self) -> &NoiseSpec<T> {
        &self.spec
    }

    pub fn set_spec(&mut self, spec: NoiseSpec<T>) {
        self.spec = spec;
    }

    /// Running mean square of each clean channel seen so far.
    pub fn signal_power(&self) -> Vec<f64> {
        if self.samples == 0 {
            return vec![0.0; self.sum_sq.len()];
        }
        self.sum_sq.iter().map(|s| s / self.samples as f64).collect()
    }

    /// Records the clean sample and returns the measured one.
    pub fn apply(&mut self, x: &Vector<T>, t: T) -> Vector<T> {
        if self.sum_sq.len() != x.len() {
            self.sum_sq = vec![0.0; x.len()];
            self.samples = 0;
        }
        for (acc, xi) in self.sum_sq.iter_mut().zip(x.iter()) {
            let v = xi.as_f64();
            *acc += v * v;
        }
        self.samples += 1;
        add_measurement_noise(x, &self.spec, t, &self.signal_power(), &mut self.rng)
    }
}

/// Adds zero-mean Gaussian noise inside the spec window.
///
/// `signal_power` holds the per-channel reference power used by the SNR
/// form; it is ignored when the spec carries an absolute `power`.
pub fn add_measurement_noise<T: Real, R: Rng + ?Sized>(
    x: &Vector<T>,
    spec: &NoiseSpec<T>,
    t: T,
    signal_power: &[f64],
    rng: &mut R,
) -> Vector<T> {
    if !spec.is_active(t) {
        return x.clone();
    }
    let NoiseSpec::Gaussian { snr_db, power, .. } = *spec else {
        return x.clone();
    };
    let ratio = 10f64.powf(snr_db.as_f64() / 10.0);
    let mut out = x.clone();
    for (i, xi) in out.iter_mut().enumerate() {
        let variance = match power {
            Some(p) => p.as_f64(),
            None => signal_power.get(i).copied().unwrap_or(0.0) / ratio,
        };
        let w: f64 = rng.sample(StandardNormal);
        *xi += T::lit(w * variance.sqrt());
    }
    out
}
