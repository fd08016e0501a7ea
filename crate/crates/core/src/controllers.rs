//! Saturated control laws and the running costs that train their critics.
//!
//! All three laws share the form `u = -beta tanh(B^T grad_phi^T W / (2 beta))`
//! and differ in the input matrix `B` they trust: IADP uses only the
//! constant guess `g_bar`, while the two model-based baselines read the
//! plant's `g(x)` and `k(x)`.

use crate::critic::{
    baseline_regressor_y, penalty_w, regressor_y, running_cost, BasisSet, CostConfig, CriticWeights, RegressionPair,
};
use crate::error::{check_dim, Error, Result};
use crate::plant::{ControlAffine, Plant};
use crate::scalar::{Matrix, Real, Vector};
use crate::tde::{IncrementRecord, IncrementalModelConfig};

/// Output of one control evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput<T: Real> {
    pub u: Vector<T>,
    /// `u - u0`; zero for the baselines.
    pub du: Vector<T>,
    /// Worst-case disturbance (ZSADP) or pseudo control (TADP).
    pub aux: Vector<T>,
}

/// `-beta tanh(arg / (2 beta))` per channel, kept strictly inside `(-beta, beta)`.
///
/// `tanh` rounds to exactly 1 for large arguments; the output is capped at
/// `beta (1 - 1e-12)` so the strict bound survives floating point.
pub fn saturated_law<T: Real>(arg: &Vector<T>, beta: T) -> Vector<T> {
    let cap = T::one() - T::lit(1e-12).max(T::default_epsilon() * T::lit(4.0));
    let two_beta = T::lit(2.0) * beta;
    arg.map(|a| {
        let s = (a / two_beta).tanh();
        -beta * s.max(-cap).min(cap)
    })
}

/// `grad_phi(x)^T W`: the critic's value gradient.
pub fn value_gradient<T: Real>(basis: &BasisSet, w: &CriticWeights<T>, x: &Vector<T>) -> Vector<T> {
    basis.grad_phi(x).transpose() * &w.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Iadp,
    Zsadp,
    Tadp,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Iadp, ControllerKind::Zsadp, ControllerKind::Tadp];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Iadp => "iadp",
            ControllerKind::Zsadp => "zsadp",
            ControllerKind::Tadp => "tadp",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iadp" => Ok(ControllerKind::Iadp),
            "zsadp" => Ok(ControllerKind::Zsadp),
            "tadp" => Ok(ControllerKind::Tadp),
            other => Err(Error::config("controller", format!("unknown controller `{other}`"))),
        }
    }
}

/// Model-free incremental controller; knows only `g_bar`.
#[derive(Debug, Clone)]
pub struct IadpController<T: Real> {
    pub model: IncrementalModelConfig<T>,
    pub cost: CostConfig<T>,
    pub basis: BasisSet,
}

/// `u = -beta tanh(g_bar^T grad_phi^T W / (2 beta))`, `du = u - u0`.
pub fn iadp_control<T: Real>(
    ctrl: &IadpController<T>,
    w: &CriticWeights<T>,
    x: &Vector<T>,
    u0: &Vector<T>,
) -> ControlOutput<T> {
    let grad_v = value_gradient(&ctrl.basis, w, x);
    let u = saturated_law(&(ctrl.model.g_bar().transpose() * grad_v), ctrl.cost.beta);
    let du = &u - u0;
    ControlOutput {
        u,
        du,
        aux: Vector::zeros(0),
    }
}

/// Alias of the IADP running cost.
pub fn iadp_cost<T: Real>(x: &Vector<T>, du: &Vector<T>, u0: &Vector<T>, cfg: &CostConfig<T>) -> Result<T> {
    running_cost(x, du, u0, cfg)
}

/// Zero-sum-game baseline; reads the plant's `g` and `k` from its model.
#[derive(Debug, Clone)]
pub struct ZsadpController<T: Real> {
    pub model: Plant<T>,
    pub gamma: T,
    pub cost: CostConfig<T>,
    pub basis: BasisSet,
}

impl<T: Real> ZsadpController<T> {
    /// `x^T Q x + W(u) - gamma |d_hat|^2`.
    pub fn cost(&self, x: &Vector<T>, u: &Vector<T>, d_hat: &Vector<T>) -> Result<T> {
        zsadp_cost(x, u, d_hat, &self.cost, self.gamma)
    }
}

pub fn zsadp_cost<T: Real>(x: &Vector<T>, u: &Vector<T>, d_hat: &Vector<T>, cfg: &CostConfig<T>, gamma: T) -> Result<T> {
    Ok(cfg.state_cost(x) + penalty_w(u, cfg.beta)? - gamma * d_hat.norm_squared())
}

/// Returns `u_Z` with `aux = d_hat = k^T grad_phi^T W / (2 gamma^2)`.
pub fn zsadp_control<T: Real>(ctrl: &ZsadpController<T>, w: &CriticWeights<T>, x: &Vector<T>) -> ControlOutput<T> {
    let grad_v = value_gradient(&ctrl.basis, w, x);
    let g = ctrl.model.input_map(x);
    let k = ctrl.model.disturbance_map(x);
    let u = saturated_law(&(g.transpose() * &grad_v), ctrl.cost.beta);
    let d_hat = k.transpose() * &grad_v / (T::lit(2.0) * ctrl.gamma * ctrl.gamma);
    let m = u.len();
    ControlOutput {
        u,
        du: Vector::zeros(m),
        aux: d_hat,
    }
}

/// Transformed-optimal-control baseline.
#[derive(Debug, Clone)]
pub struct TadpController<T: Real> {
    pub model: Plant<T>,
    pub rho: T,
    /// `d_M = d_m_coef * |x|`.
    pub d_m_coef: T,
    /// `l_M = l_m_coef * |x|`.
    pub l_m_coef: T,
    pub cost: CostConfig<T>,
    pub basis: BasisSet,
}

impl<T: Real> TadpController<T> {
    /// `d_M = sqrt(2)/2 |x|`, `l_M = 0.4 sqrt(2) |x|`.
    pub fn benchmark_bounds() -> (T, T) {
        let r2 = T::lit(2.0).sqrt();
        (r2 / T::lit(2.0), T::lit(0.4) * r2)
    }

    /// `h = (I - g g^+) k` at `x`, from the controller's model.
    pub fn h(&self, x: &Vector<T>) -> Result<Matrix<T>> {
        unmatched_projection(&self.model.input_map(x), &self.model.disturbance_map(x))
    }

    /// `x^T Q x + W(u) + rho |v_hat|^2 + l_M^2 + d_M^2`.
    pub fn cost(&self, x: &Vector<T>, u: &Vector<T>, v_hat: &Vector<T>) -> Result<T> {
        tadp_cost(x, u, v_hat, &self.cost, self.rho, self.l_m_coef, self.d_m_coef)
    }
}

/// `(I - g g^+) k`, the part of `k` outside the range of `g`.
pub fn unmatched_projection<T: Real>(g: &Matrix<T>, k: &Matrix<T>) -> Result<Matrix<T>> {
    let pinv = (g.transpose() * g)
        .try_inverse()
        .ok_or_else(|| Error::config("plant.g", "g must have full column rank"))?
        * g.transpose();
    let n = g.nrows();
    Ok((Matrix::identity(n, n) - g * pinv) * k)
}

pub fn tadp_cost<T: Real>(
    x: &Vector<T>,
    u: &Vector<T>,
    v_hat: &Vector<T>,
    cfg: &CostConfig<T>,
    rho: T,
    l_m_coef: T,
    d_m_coef: T,
) -> Result<T> {
    let xx = x.norm_squared();
    Ok(cfg.state_cost(x)
        + penalty_w(u, cfg.beta)?
        + rho * v_hat.norm_squared()
        + l_m_coef * l_m_coef * xx
        + d_m_coef * d_m_coef * xx)
}

/// Returns `u_T` with `aux = v_hat = -h^T grad_phi^T W / (2 rho)`.
pub fn tadp_control<T: Real>(ctrl: &TadpController<T>, w: &CriticWeights<T>, x: &Vector<T>) -> Result<ControlOutput<T>> {
    let grad_v = value_gradient(&ctrl.basis, w, x);
    let g = ctrl.model.input_map(x);
    let u = saturated_law(&(g.transpose() * &grad_v), ctrl.cost.beta);
    let v_hat = -(ctrl.h(x)?.transpose() * &grad_v) / (T::lit(2.0) * ctrl.rho);
    let m = u.len();
    Ok(ControlOutput {
        u,
        du: Vector::zeros(m),
        aux: v_hat,
    })
}

/// Any of the three controllers, behind one interface for the simulator.
#[derive(Debug, Clone)]
pub enum Controller<T: Real> {
    Iadp(IadpController<T>),
    Zsadp(ZsadpController<T>),
    Tadp(TadpController<T>),
}

impl<T: Real> Controller<T> {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Iadp(_) => ControllerKind::Iadp,
            Controller::Zsadp(_) => ControllerKind::Zsadp,
            Controller::Tadp(_) => ControllerKind::Tadp,
        }
    }

    pub fn basis(&self) -> &BasisSet {
        match self {
            Controller::Iadp(c) => &c.basis,
            Controller::Zsadp(c) => &c.basis,
            Controller::Tadp(c) => &c.basis,
        }
    }

    pub fn cost_config(&self) -> &CostConfig<T> {
        match self {
            Controller::Iadp(c) => &c.cost,
            Controller::Zsadp(c) => &c.cost,
            Controller::Tadp(c) => &c.cost,
        }
    }

    /// Plant model the controller believes in; `None` for the model-free law.
    pub fn model(&self) -> Option<&Plant<T>> {
        match self {
            Controller::Iadp(_) => None,
            Controller::Zsadp(c) => Some(&c.model),
            Controller::Tadp(c) => Some(&c.model),
        }
    }

    /// Replaces the baseline's model; no-op for IADP.
    pub fn set_model(&mut self, plant: Plant<T>) {
        match self {
            Controller::Iadp(_) => {}
            Controller::Zsadp(c) => c.model = plant,
            Controller::Tadp(c) => c.model = plant,
        }
    }

    pub fn control(&self, w: &CriticWeights<T>, x: &Vector<T>, u0: &Vector<T>) -> Result<ControlOutput<T>> {
        match self {
            Controller::Iadp(c) => Ok(iadp_control(c, w, x, u0)),
            Controller::Zsadp(c) => Ok(zsadp_control(c, w, x)),
            Controller::Tadp(c) => tadp_control(c, w, x),
        }
    }

    /// Builds the `(Y, Theta)` pair used to train this controller's critic.
    ///
    /// IADP uses the incremental regressor `grad_phi (g_bar du + x0dot)`
    /// built from measurements only. The baselines evaluate their own model
    /// along the policy pair they optimize: `grad_phi (f + g u + k d_hat)`
    /// for ZSADP and `grad_phi (f + g u + h v_hat)` for TADP.
    pub fn learning_pair(&self, x: &Vector<T>, out: &ControlOutput<T>, rec: &IncrementRecord<T>) -> Result<RegressionPair<T>> {
        let gphi = self.basis().grad_phi(x);
        match self {
            Controller::Iadp(c) => Ok(RegressionPair {
                y: regressor_y(&gphi, c.model.g_bar(), &rec.du, &rec.x0dot)?,
                theta: iadp_cost(x, &rec.du, &rec.u0, &c.cost)?,
            }),
            Controller::Zsadp(c) => {
                let xdot = model_rate(&c.model, x, &out.u, &c.model.disturbance_map(x), &out.aux)?;
                Ok(RegressionPair {
                    y: baseline_regressor_y(&gphi, &xdot)?,
                    theta: c.cost(x, &out.u, &out.aux)?,
                })
            }
            Controller::Tadp(c) => {
                let xdot = model_rate(&c.model, x, &out.u, &c.h(x)?, &out.aux)?;
                Ok(RegressionPair {
                    y: baseline_regressor_y(&gphi, &xdot)?,
                    theta: c.cost(x, &out.u, &out.aux)?,
                })
            }
        }
    }
}

/// `f(x) + g(x) u + e w` under a baseline's model.
fn model_rate<T: Real>(model: &Plant<T>, x: &Vector<T>, u: &Vector<T>, e: &Matrix<T>, w: &Vector<T>) -> Result<Vector<T>> {
    check_dim("model auxiliary signal", e.ncols(), w.len())?;
    Ok(model.drift(x) + model.input_map(x) * u + e * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Pendulum;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector<f64> {
        Vector::from_column_slice(xs)
    }

    fn iadp() -> IadpController<f64> {
        IadpController {
            model: IncrementalModelConfig::pendulum_default(),
            cost: CostConfig::pendulum_default(),
            basis: BasisSet::pendulum_default(),
        }
    }

    fn zsadp() -> ZsadpController<f64> {
        ZsadpController {
            model: Plant::Pendulum(Pendulum::nominal()),
            gamma: 1.0,
            cost: CostConfig::pendulum_default(),
            basis: BasisSet::pendulum_default(),
        }
    }

    fn tadp() -> TadpController<f64> {
        let (d_m_coef, l_m_coef) = TadpController::benchmark_bounds();
        TadpController {
            model: Plant::Pendulum(Pendulum::nominal()),
            rho: 0.1,
            d_m_coef,
            l_m_coef,
            cost: CostConfig::pendulum_default(),
            basis: BasisSet::pendulum_default(),
        }
    }

    fn w3() -> CriticWeights<f64> {
        CriticWeights(v(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]))
    }

    #[test]
    fn iadp_zero_weights_give_zero_control() {
        let out = iadp_control(&iadp(), &CriticWeights::zeros(6), &v(&[1.5, -0.7]), &v(&[0.5]));
        assert_eq!(out.u[0], 0.0);
        assert_eq!(out.du[0], -0.5);
    }

    #[test]
    fn iadp_origin_gives_zero_control() {
        let w = CriticWeights(v(&[3.0, -1.0, 2.0, 7.0, 0.5, -4.0]));
        assert_eq!(iadp_control(&iadp(), &w, &v(&[0.0, 0.0]), &v(&[0.0])).u[0], 0.0);
    }

    #[test]
    fn iadp_hand_value() {
        // g_bar^T grad_phi^T W = 0.1 * 2 = 0.2, u = -2 tanh(0.05)
        let out = iadp_control(&iadp(), &w3(), &v(&[0.0, 1.0]), &v(&[0.0]));
        assert!((out.u[0] + 0.099_916_749_915_76).abs() < 1e-12, "{}", out.u[0]);
    }

    #[test]
    fn zsadp_values() {
        let c = zsadp();
        let out = zsadp_control(&c, &CriticWeights::zeros(6), &v(&[1.0, 1.0]));
        assert_eq!((out.u[0], out.aux[0]), (0.0, 0.0));
        let out = zsadp_control(&c, &w3(), &v(&[0.0, 0.0]));
        assert_eq!((out.u[0], out.aux[0]), (0.0, 0.0));
        let out = zsadp_control(&c, &w3(), &v(&[0.0, 1.0]));
        // u = -2 tanh(0.5 / 4); d_hat = 0.5 * (1 * 0 + (-0.2) * 2)
        assert!((out.u[0] + 0.248_706_003_543_19).abs() < 1e-12, "{}", out.u[0]);
        assert!((out.aux[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn zsadp_cost_values() {
        let c = zsadp();
        assert_eq!(c.cost(&v(&[0.0, 0.0]), &v(&[0.0]), &v(&[0.0])).unwrap(), 0.0);
        assert_eq!(c.cost(&v(&[1.0, 0.0]), &v(&[0.0]), &v(&[1.0])).unwrap(), 0.0);
        let r = c.cost(&v(&[1.0, 0.0]), &v(&[1.0]), &v(&[0.0])).unwrap();
        assert!((r - 2.046_496_287_529).abs() < 1e-9);
    }

    #[test]
    fn tadp_projection_and_values() {
        let c = tadp();
        let h = c.h(&v(&[0.3, 0.1])).unwrap();
        assert!((h - Matrix::from_column_slice(2, 1, &[1.0, 0.0])).amax() < 1e-15);
        let out = tadp_control(&c, &CriticWeights::zeros(6), &v(&[1.0, 1.0])).unwrap();
        assert_eq!((out.u[0], out.aux[0]), (0.0, 0.0));
        let w = CriticWeights(v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let out = tadp_control(&c, &w, &v(&[1.0, 0.0])).unwrap();
        assert!((out.aux[0] + 10.0).abs() < 1e-12);
        assert_eq!(out.u[0], 0.0);
    }

    #[test]
    fn tadp_cost_values() {
        let c = tadp();
        assert_eq!(c.cost(&v(&[0.0, 0.0]), &v(&[0.0]), &v(&[0.0])).unwrap(), 0.0);
        let r = c.cost(&v(&[1.0, 0.0]), &v(&[0.0]), &v(&[0.0])).unwrap();
        assert!((r - 1.82).abs() < 1e-12, "{r}");
        let r = c.cost(&v(&[0.0, 0.0]), &v(&[0.0]), &v(&[1.0])).unwrap();
        assert!((r - 0.1).abs() < 1e-15);
    }

    #[test]
    fn iadp_cost_delegates() {
        let cfg = CostConfig::pendulum_default();
        let (x, du, u0) = (v(&[0.4, -1.0]), v(&[0.3]), v(&[-0.2]));
        assert_eq!(iadp_cost(&x, &du, &u0, &cfg).unwrap(), running_cost(&x, &du, &u0, &cfg).unwrap());
    }

    #[test]
    fn saturation_survives_huge_arguments() {
        let u = saturated_law(&v(&[1e6, -1e300, 0.0]), 2.0);
        assert!(u.iter().all(|&ui| ui.abs() <= 2.0 - 1e-12));
        assert!(u[0] < 0.0 && u[1] > 0.0);
    }

    #[test]
    fn kinds_parse() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("pid".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn baseline_model_is_replaceable() {
        let mut c = Controller::Tadp(tadp());
        c.set_model(Plant::Pendulum(Pendulum::reset_mild()));
        let g = c.model().unwrap().input_map(&v(&[0.0, 0.0]));
        assert_eq!(g[(1, 0)], 0.1);
        let mut i = Controller::Iadp(iadp());
        i.set_model(Plant::Pendulum(Pendulum::reset_mild()));
        assert!(i.model().is_none());
    }

    proptest! {
        #[test]
        fn all_controllers_respect_saturation(
            w in proptest::collection::vec(-1e4..1e4f64, 6),
            x1 in -50.0..50.0f64, x2 in -50.0..50.0f64,
        ) {
            let w = CriticWeights(v(&w));
            let x = v(&[x1, x2]);
            for c in [Controller::Iadp(iadp()), Controller::Zsadp(zsadp()), Controller::Tadp(tadp())] {
                let out = c.control(&w, &x, &v(&[0.0])).unwrap();
                prop_assert!(out.u.iter().all(|&u| u.abs() <= 2.0 - 1e-12));
            }
        }

        #[test]
        fn iadp_odd_in_weights_and_consistent(
            w in proptest::collection::vec(-100.0..100.0f64, 6),
            x1 in -3.0..3.0f64, x2 in -3.0..3.0f64, u0 in -1.9..1.9f64,
        ) {
            let c = iadp();
            let x = v(&[x1, x2]);
            let pos = iadp_control(&c, &CriticWeights(v(&w)), &x, &v(&[0.0]));
            let neg = iadp_control(&c, &CriticWeights(-v(&w)), &x, &v(&[0.0]));
            prop_assert_eq!(pos.u[0], -neg.u[0]);
            let out = iadp_control(&c, &CriticWeights(v(&w)), &x, &v(&[u0]));
            prop_assert_eq!(&out.u - v(&[u0]), out.du);
        }
    }
}
