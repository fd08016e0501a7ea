use nalgebra::SVD;

use crate::error::{check_dim, Error, Result};
use crate::scalar::{Matrix, Real, Vector};

/// Continuous-time control-affine system `xdot = f(x) + g(x) u + k(x) d`.
pub trait ControlAffine<T: Real> {
    /// State dimension.
    fn n(&self) -> usize;
    /// Input dimension.
    fn m(&self) -> usize;
    /// Disturbance dimension.
    fn q(&self) -> usize;
    /// Drift `f(x)`.
    fn drift(&self, x: &Vector<T>) -> Vector<T>;
    /// Input matrix `g(x)`, `n x m`.
    fn input_map(&self, x: &Vector<T>) -> Matrix<T>;
    /// Disturbance matrix `k(x)`, `n x q`.
    fn disturbance_map(&self, x: &Vector<T>) -> Matrix<T>;
}

/// Damped pendulum family
///
/// ```text
/// x1' = a * x2                      + k1 * d
/// x2' = b * sin(x1) + c * x2 + e*u  + k2 * d
/// ```
///
/// The three benchmark instances differ only in these coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum<T> {
    pub velocity_coupling: T,
    pub gravity: T,
    pub friction: T,
    pub input_gain: T,
    pub disturbance_gain: [T; 2],
}

impl<T: Real> Pendulum<T> {
    /// `M = 1/3 kg`, `l = 3/2 m`, `f_d = 0.2`: the original benchmark pendulum.
    pub fn nominal() -> Self {
        Self::from_f64(1.0, -4.9, -0.2, 0.25, [1.0, -0.2])
    }

    /// Moderate physical change: lighter gravity term, weaker actuation.
    pub fn reset_mild() -> Self {
        Self::from_f64(1.0, -2.0, -0.1, 0.1, [1.0, -0.1])
    }

    /// Aggressive physical change: every model parameter sign-inverted.
    pub fn reset_inverted() -> Self {
        Self::from_f64(-1.0, 4.9, -0.2, -0.25, [1.0, -0.2])
    }

    pub fn from_f64(a: f64, b: f64, c: f64, e: f64, k: [f64; 2]) -> Self {
        Pendulum {
            velocity_coupling: T::lit(a),
            gravity: T::lit(b),
            friction: T::lit(c),
            input_gain: T::lit(e),
            disturbance_gain: [T::lit(k[0]), T::lit(k[1])],
        }
    }
}

impl<T: Real> ControlAffine<T> for Pendulum<T> {
    fn n(&self) -> usize {
        2
    }
    fn m(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        1
    }
    fn drift(&self, x: &Vector<T>) -> Vector<T> {
        Vector::from_vec(vec![
            self.velocity_coupling * x[1],
            self.gravity * x[0].sin() + self.friction * x[1],
        ])
    }
    fn input_map(&self, _x: &Vector<T>) -> Matrix<T> {
        Matrix::from_column_slice(2, 1, &[T::zero(), self.input_gain])
    }
    fn disturbance_map(&self, _x: &Vector<T>) -> Matrix<T> {
        Matrix::from_column_slice(2, 1, &self.disturbance_gain)
    }
}

/// Linear time-invariant plant `xdot = A x + B u + K d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant<T: Real> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub k: Matrix<T>,
}

impl<T: Real> LinearPlant<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>, k: Matrix<T>) -> Result<Self> {
        let n = a.nrows();
        check_dim("linear plant A columns", n, a.ncols())?;
        check_dim("linear plant B rows", n, b.nrows())?;
        check_dim("linear plant K rows", n, k.nrows())?;
        Ok(LinearPlant { a, b, k })
    }
}

impl<T: Real> ControlAffine<T> for LinearPlant<T> {
    fn n(&self) -> usize {
        self.a.nrows()
    }
    fn m(&self) -> usize {
        self.b.ncols()
    }
    fn q(&self) -> usize {
        self.k.ncols()
    }
    fn drift(&self, x: &Vector<T>) -> Vector<T> {
        &self.a * x
    }
    fn input_map(&self, _x: &Vector<T>) -> Matrix<T> {
        self.b.clone()
    }
    fn disturbance_map(&self, _x: &Vector<T>) -> Matrix<T> {
        self.k.clone()
    }
}

/// Plant models that can be declared in configuration and swapped by events.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant<T: Real> {
    Pendulum(Pendulum<T>),
    Linear(LinearPlant<T>),
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Plant::Pendulum($p) => $e,
            Plant::Linear($p) => $e,
        }
    };
}

impl<T: Real> ControlAffine<T> for Plant<T> {
    fn n(&self) -> usize {
        delegate!(self, p => p.n())
    }
    fn m(&self) -> usize {
        delegate!(self, p => p.m())
    }
    fn q(&self) -> usize {
        delegate!(self, p => p.q())
    }
    fn drift(&self, x: &Vector<T>) -> Vector<T> {
        delegate!(self, p => p.drift(x))
    }
    fn input_map(&self, x: &Vector<T>) -> Matrix<T> {
        delegate!(self, p => p.input_map(x))
    }
    fn disturbance_map(&self, x: &Vector<T>) -> Matrix<T> {
        delegate!(self, p => p.disturbance_map(x))
    }
}

/// Evaluates `f(x) + g(x) u + k(x) d`.
///
/// Time is accepted for interface symmetry; the supported plants are
/// autonomous and time enters only through `d`.
pub fn eval_dynamics<T: Real, P: ControlAffine<T> + ?Sized>(
    plant: &P,
    x: &Vector<T>,
    u: &Vector<T>,
    d: &Vector<T>,
    _t: T,
) -> Result<Vector<T>> {
    check_dim("state", plant.n(), x.len())?;
    check_dim("input", plant.m(), u.len())?;
    check_dim("disturbance", plant.q(), d.len())?;
    let xdot = plant.drift(x) + plant.input_map(x) * u + plant.disturbance_map(x) * d;
    if xdot.iter().all(|v| v.is_finite()) {
        Ok(xdot)
    } else {
        Err(Error::NumericFault {
            context: "eval_dynamics",
            message: "non-finite state derivative".into(),
        })
    }
}

/// Smallest singular value of `g(x)`; positive iff `g(x)` has full column rank.
pub fn input_map_sigma_min<T: Real, P: ControlAffine<T> + ?Sized>(plant: &P, x: &Vector<T>) -> T {
    let g = plant.input_map(x);
    let svd = SVD::new(g, false, false);
    svd.singular_values.min()
}

/// Checks full column rank of `g` at every probe state.
pub fn check_full_column_rank<T: Real, P: ControlAffine<T> + ?Sized>(plant: &P, probes: &[Vector<T>]) -> Result<()> {
    for x in probes {
        let s = input_map_sigma_min(plant, x);
        if !(s > T::zero()) {
            return Err(Error::config("plant.g", format!("input map rank-deficient at x = {:?}", x.as_slice())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector<f64> {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn pendulum_drift_at_initial_state() {
        let p = Pendulum::<f64>::nominal();
        let xdot = eval_dynamics(&p, &v(&[2.0, -2.0]), &v(&[0.0]), &v(&[0.0]), 0.0).unwrap();
        assert!((xdot[0] + 2.0).abs() < 1e-15);
        // -4.9 sin(2) + 0.4
        assert!((xdot[1] + 4.055_557_391).abs() < 1e-8, "{}", xdot[1]);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = Pendulum::<f64>::nominal();
        let xdot = eval_dynamics(&p, &v(&[0.0, 0.0]), &v(&[0.0]), &v(&[0.0]), 0.0).unwrap();
        assert_eq!(xdot.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn unit_input_enters_through_g() {
        let p = Pendulum::<f64>::nominal();
        let xdot = eval_dynamics(&p, &v(&[0.0, 0.0]), &v(&[1.0]), &v(&[0.0]), 0.0).unwrap();
        assert_eq!(xdot.as_slice(), &[0.0, 0.25]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = Pendulum::<f64>::nominal();
        let err = eval_dynamics(&p, &v(&[0.0, 0.0]), &v(&[1.0, 2.0]), &v(&[0.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::Dimension { context: "input", .. }));
    }

    #[test]
    fn non_finite_result_is_a_fault() {
        let p = Pendulum::<f64>::nominal();
        let err = eval_dynamics(&p, &v(&[0.0, f64::INFINITY]), &v(&[0.0]), &v(&[0.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::NumericFault { .. }));
    }

    #[test]
    fn benchmark_plants_have_full_rank_input() {
        let probes: Vec<_> = (-3..=3).map(|i| v(&[i as f64, -(i as f64)])).collect();
        for p in [Pendulum::nominal(), Pendulum::reset_mild(), Pendulum::reset_inverted()] {
            check_full_column_rank(&p, &probes).unwrap();
        }
        let degenerate = Pendulum::<f64>::from_f64(1.0, -4.9, -0.2, 0.0, [1.0, -0.2]);
        assert!(check_full_column_rank(&degenerate, &probes).is_err());
    }

    #[test]
    fn linear_plant_evaluates() {
        let lp = LinearPlant::new(
            Matrix::from_row_slice(1, 1, &[-1.0]),
            Matrix::from_row_slice(1, 1, &[2.0]),
            Matrix::from_row_slice(1, 1, &[3.0]),
        )
        .unwrap();
        let xdot = eval_dynamics(&lp, &v(&[1.0]), &v(&[1.0]), &v(&[1.0]), 0.0).unwrap();
        assert_eq!(xdot[0], 4.0);
    }

    #[test]
    fn works_in_single_precision() {
        let p = Pendulum::<f32>::nominal();
        let x = Vector::from_column_slice(&[2.0f32, -2.0]);
        let xdot = eval_dynamics(&p, &x, &Vector::zeros(1), &Vector::zeros(1), 0.0).unwrap();
        assert!((xdot[1] + 4.055_557).abs() < 1e-5);
    }
}
