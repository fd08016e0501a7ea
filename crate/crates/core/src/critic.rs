//! Polynomial value-function critic and its linear-in-parameters transform.
//!
//! The critic approximates `V(x) ~ W^T phi(x)`. Along measured motion the
//! Bellman residual is linear in `W`: with `Y = grad_phi(x) * xdot` and
//! `Theta = r(x, du)`, the ideal weights satisfy `Theta = -W^T Y`.

use nalgebra::SymmetricEigen;

use crate::error::{check_dim, Error, Result};
use crate::scalar::{Matrix, Real, Vector};

/// A monomial `prod_i x_i^{e_i}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: impl Into<Vec<u32>>) -> Self {
        Monomial {
            exponents: exponents.into(),
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn eval<T: Real>(&self, x: &Vector<T>) -> T {
        self.exponents
            .iter()
            .zip(x.iter())
            .fold(T::one(), |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }

    fn partial<T: Real>(&self, x: &Vector<T>, j: usize) -> T {
        let ej = self.exponents[j];
        if ej == 0 {
            return T::zero();
        }
        self.exponents
            .iter()
            .zip(x.iter())
            .enumerate()
            .fold(T::lit(ej as f64), |acc, (i, (&e, &xi))| {
                let e = if i == j { e - 1 } else { e };
                acc * xi.powi(e as i32)
            })
    }
}

/// Ordered list of monomial features over an `n`-dimensional state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSet {
    arity: usize,
    features: Vec<Monomial>,
}

impl BasisSet {
    pub fn new(arity: usize, features: Vec<Monomial>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::config("critic.basis", "basis needs at least one feature"));
        }
        for f in &features {
            check_dim("basis monomial arity", arity, f.exponents.len())?;
        }
        Ok(BasisSet { arity, features })
    }

    /// `[x1^2, x1 x2, x2^2, x2^3, x1 x2^2, x1^2 x2]`.
    pub fn pendulum_default() -> Self {
        let f = |a: u32, b: u32| Monomial::new([a, b]);
        BasisSet {
            arity: 2,
            features: vec![f(2, 0), f(1, 1), f(0, 2), f(0, 3), f(1, 2), f(2, 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn features(&self) -> &[Monomial] {
        &self.features
    }

    /// Every feature has degree at least two, so `phi(0) = 0` and `grad_phi(0) = 0`.
    pub fn vanishes_to_second_order(&self) -> bool {
        self.features.iter().all(|f| f.degree() >= 2)
    }

    pub fn phi<T: Real>(&self, x: &Vector<T>) -> Vector<T> {
        debug_assert_eq!(x.len(), self.arity);
        Vector::from_iterator(self.len(), self.features.iter().map(|f| f.eval(x)))
    }

    /// `N x n` Jacobian; row `i` is the gradient of feature `i`.
    pub fn grad_phi<T: Real>(&self, x: &Vector<T>) -> Matrix<T> {
        debug_assert_eq!(x.len(), self.arity);
        Matrix::from_fn(self.len(), self.arity, |i, j| self.features[i].partial(x, j))
    }
}

/// Critic weight estimate `W_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticWeights<T: Real>(pub Vector<T>);

impl<T: Real> CriticWeights<T> {
    pub fn zeros(n: usize) -> Self {
        CriticWeights(Vector::zeros(n))
    }

    pub fn as_vector(&self) -> &Vector<T> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|w| w.is_finite())
    }
}

/// `W^T phi(x)`.
pub fn value<T: Real>(w: &CriticWeights<T>, basis: &BasisSet, x: &Vector<T>) -> T {
    w.0.dot(&basis.phi(x))
}

/// Running-cost parameters shared by all controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig<T: Real> {
    pub q: Matrix<T>,
    pub beta: T,
    pub c_bar: T,
}

impl<T: Real> CostConfig<T> {
    pub fn new(q: Matrix<T>, beta: T, c_bar: T) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::config("cost.q", "Q must be square"));
        }
        let tol = T::lit(1e-12) * (T::one() + q.amax());
        if (&q - q.transpose()).amax() > tol {
            return Err(Error::config("cost.q", "Q must be symmetric"));
        }
        let eig = SymmetricEigen::new(q.clone());
        if !(eig.eigenvalues.min() > T::zero()) {
            return Err(Error::config("cost.q", "Q must be positive definite"));
        }
        if !(beta > T::zero()) {
            return Err(Error::config("cost.beta", "beta must be positive"));
        }
        if !(c_bar > T::zero()) {
            return Err(Error::config("cost.c_bar", "c_bar must be positive"));
        }
        Ok(CostConfig { q, beta, c_bar })
    }

    /// `Q = I_n`, `beta = 2`, `c_bar = 2`.
    pub fn pendulum_default() -> Self {
        Self::new(Matrix::identity(2, 2), T::lit(2.0), T::lit(2.0)).expect("valid defaults")
    }

    pub fn lambda_min_q(&self) -> T {
        SymmetricEigen::new(self.q.clone()).eigenvalues.min()
    }

    pub fn state_cost(&self, x: &Vector<T>) -> T {
        x.dot(&(&self.q * x))
    }
}

/// Largest admissible `|v| / beta` after clamping.
fn clamp_margin<T: Real>() -> T {
    T::one() - T::lit(1e-9).max(T::default_epsilon() * T::lit(4.0))
}

/// Pre-clamp excess over the saturation bound that is tolerated.
pub const SATURATION_SLACK: f64 = 1e-6;

/// Non-quadratic saturation penalty
/// `sum_j 2 beta v_j atanh(v_j / beta) + beta^2 ln(1 - v_j^2 / beta^2)`,
/// the closed form of `2 sum_j int_0^{v_j} beta atanh(s / beta) ds`.
pub fn penalty_w<T: Real>(v: &Vector<T>, beta: T) -> Result<T> {
    let limit = clamp_margin::<T>();
    let mut total = T::zero();
    for &vj in v.iter() {
        // The summand is even in v; evaluating on |v| keeps it exactly so.
        let r = (vj / beta).abs();
        if !r.is_finite() || r - T::one() > T::lit(SATURATION_SLACK) {
            return Err(Error::SaturationDomain {
                value: vj.as_f64(),
                beta: beta.as_f64(),
            });
        }
        let r = r.min(limit);
        let two = T::lit(2.0);
        total += two * beta * beta * r * r.atanh() + beta * beta * (-(r * r)).ln_1p();
    }
    Ok(total)
}

/// IADP running cost `x^T Q x + W(u0 + du) + c_bar^2 |du|^2`.
pub fn running_cost<T: Real>(x: &Vector<T>, du: &Vector<T>, u0: &Vector<T>, cfg: &CostConfig<T>) -> Result<T> {
    let u = u0 + du;
    Ok(cfg.state_cost(x) + penalty_w(&u, cfg.beta)? + cfg.c_bar * cfg.c_bar * du.norm_squared())
}

/// Regressor/target pair of the linear-in-parameters residual.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPair<T: Real> {
    pub y: Vector<T>,
    pub theta: T,
}

impl<T: Real> RegressionPair<T> {
    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.y.iter().all(|v| v.is_finite())
    }
}

/// `Y = grad_phi * (g_bar du + x0dot)`.
pub fn regressor_y<T: Real>(gphi: &Matrix<T>, g_bar: &Matrix<T>, du: &Vector<T>, x0dot: &Vector<T>) -> Result<Vector<T>> {
    check_dim("regressor g_bar columns", g_bar.ncols(), du.len())?;
    check_dim("regressor x0dot", g_bar.nrows(), x0dot.len())?;
    check_dim("regressor grad_phi columns", gphi.ncols(), x0dot.len())?;
    Ok(gphi * (g_bar * du + x0dot))
}

/// `Y = grad_phi * xdot_meas`, used by the model-based baselines.
pub fn baseline_regressor_y<T: Real>(gphi: &Matrix<T>, xdot_meas: &Vector<T>) -> Result<Vector<T>> {
    check_dim("baseline regressor xdot", gphi.ncols(), xdot_meas.len())?;
    Ok(gphi * xdot_meas)
}
