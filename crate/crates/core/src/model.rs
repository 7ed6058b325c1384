//! Parameter-affine control systems
//!
//! ```text
//! ẋ = f(x) + g(x) u + φ(x, u) θ,      φ(x, u) = [F(x)  G(x) diag(u)]
//! ```
//!
//! with `θ = (θ_f, θ_g) ∈ ℝ^{p+m}`.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::uncertainty::ParameterBox;
use crate::{Error, Result};

/// Closed-form evaluators of an uncertain control-affine model.
pub trait ControlAffineModel: Debug + Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Number of drift parameters `p`.
    fn drift_param_dim(&self) -> usize;

    /// `p + m`.
    fn param_dim(&self) -> usize {
        self.drift_param_dim() + self.input_dim()
    }

    /// Known drift `f(x)`.
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Known input matrix `g(x)`, `n × m`.
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Drift regressor `F(x)`, `n × p`.
    fn drift_regressor(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Input-gain regressor `G(x)`, `n × m`.
    fn input_regressor(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Jacobian of the known drift, `∂f/∂x`.
    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Input constraint set; `None` means unbounded.
    fn input_bounds(&self) -> Option<&ParameterBox> {
        None
    }
}

fn check_state(model: &dyn ControlAffineModel, x: &DVector<f64>) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::dim("state", model.state_dim(), x.len()));
    }
    Ok(())
}

fn check_input(model: &dyn ControlAffineModel, u: &DVector<f64>) -> Result<()> {
    if u.len() != model.input_dim() {
        return Err(Error::dim("input", model.input_dim(), u.len()));
    }
    Ok(())
}

/// `φ(x, u) = [F(x)  G(x) diag(u)]`.
pub fn regressor(model: &dyn ControlAffineModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_state(model, x)?;
    check_input(model, u)?;
    let n = model.state_dim();
    let p = model.drift_param_dim();
    let m = model.input_dim();
    let f_reg = model.drift_regressor(x);
    let g_reg = model.input_regressor(x);
    let mut phi = DMatrix::zeros(n, p + m);
    phi.columns_mut(0, p).copy_from(&f_reg);
    for i in 0..m {
        phi.column_mut(p + i).copy_from(&(g_reg.column(i) * u[i]));
    }
    Ok(phi)
}

/// `f(x) + g(x) u + φ(x, u) θ`.
pub fn dynamics(
    model: &dyn ControlAffineModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if theta.len() != model.param_dim() {
        return Err(Error::dim("parameter vector", model.param_dim(), theta.len()));
    }
    let phi = regressor(model, x, u)?;
    let xdot = model.drift(x) + model.input_matrix(x) * u + phi * theta;
    if xdot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model dynamics"));
    }
    Ok(xdot)
}

/// Two-state polynomial system with all terms uncertain:
///
/// ```text
/// ẋ₁ = θ₁ x₁ + θ₂ x₂
/// ẋ₂ = θ₃ x₁³ + θ₄ x₂ u
/// ```
#[derive(Debug, Clone, Default)]
pub struct Nonlinear2d {
    pub input_bounds: Option<ParameterBox>,
}

impl ControlAffineModel for Nonlinear2d {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn drift_param_dim(&self) -> usize {
        3
    }
    fn drift(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 1)
    }
    fn drift_regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[x[0], x[1], 0.0, 0.0, 0.0, x[0].powi(3)])
    }
    fn input_regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 1, &[0.0, x[1]])
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn input_bounds(&self) -> Option<&ParameterBox> {
        self.input_bounds.as_ref()
    }
}

/// Planar double integrator with uncertain mass and viscous friction.
///
/// State `(x, y, vx, vy)`, input is a force; `θ = (c₁/m, c₂/m, 1/m, 1/m)`.
#[derive(Debug, Clone, Default)]
pub struct PlanarRobot {
    pub input_bounds: Option<ParameterBox>,
}

impl ControlAffineModel for PlanarRobot {
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn drift_param_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[2], x[3], 0.0, 0.0])
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(4, 2)
    }
    fn drift_regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, -x[2], 0.0, 0.0, -x[3]])
    }
    fn input_regressor(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        j
    }
    fn input_bounds(&self) -> Option<&ParameterBox> {
        self.input_bounds.as_ref()
    }
}

/// Ground-truth parameter vector. Only the simulator and tests read it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters(pub DVector<f64>);

/// Robot mass and friction used as ground truth (not identified from data).
pub const ROBOT_MASS: f64 = 1.2;
pub const ROBOT_FRICTION: [f64; 2] = [1.0, 0.8];

/// Nonlinear example: model, truth `(-0.6, -1, 1, 1)` and initial box.
pub fn scenario_nonlinear2d() -> (Nonlinear2d, TrueParameters, ParameterBox) {
    let truth = TrueParameters(DVector::from_vec(vec![-0.6, -1.0, 1.0, 1.0]));
    let theta0 = ParameterBox::new(vec![-1.2, -2.0, 0.5, 0.8], vec![-0.2, -0.1, 1.4, 1.2])
        .expect("static box");
    (Nonlinear2d::default(), truth, theta0)
}

/// Circular obstacle in the robot's position plane.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Robot example: model, truth, initial box and obstacle.
pub fn scenario_planar_robot() -> (PlanarRobot, TrueParameters, ParameterBox, Obstacle) {
    let m = ROBOT_MASS;
    let [c1, c2] = ROBOT_FRICTION;
    let truth = TrueParameters(DVector::from_vec(vec![c1 / m, c2 / m, 1.0 / m, 1.0 / m]));
    let theta0 =
        ParameterBox::new(vec![0.0, 0.0, 0.1, 0.1], vec![5.0, 5.0, 2.0, 2.0]).expect("static box");
    let obstacle = Obstacle {
        center: [-2.5, 2.5],
        radius: 1.5,
    };
    (PlanarRobot::default(), truth, theta0, obstacle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn nonlinear_regressor_at_unit_x1() {
        let (model, _, _) = scenario_nonlinear2d();
        let phi = regressor(&model, &v(&[1.0, 0.0]), &v(&[0.0])).unwrap();
        assert_eq!(phi, DMatrix::from_row_slice(2, 4, &[1., 0., 0., 0., 0., 0., 1., 0.]));
    }

    #[test]
    fn zero_input_clears_gain_block() {
        let (model, _, _, _) = scenario_planar_robot();
        let phi = regressor(&model, &v(&[0.3, -1.0, 2.0, 0.5]), &v(&[0.0, 0.0])).unwrap();
        assert!(phi.columns(2, 2).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn robot_regressor_rows() {
        let (model, _, _, _) = scenario_planar_robot();
        let phi = regressor(&model, &v(&[0.0, 0.0, 1.0, 2.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(phi.fixed_view::<2, 2>(2, 0), DMatrix::from_row_slice(2, 2, &[-1., 0., 0., -2.]));
        assert_eq!(phi.fixed_view::<2, 2>(2, 2), DMatrix::from_row_slice(2, 2, &[1., 0., 0., 1.]));
    }

    #[test]
    fn nonlinear_dynamics_with_truth() {
        let (model, truth, _) = scenario_nonlinear2d();
        let xdot = dynamics(&model, &v(&[1.0, 0.0]), &v(&[0.0]), &truth.0).unwrap();
        assert_relative_eq!(xdot, v(&[-0.6, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_and_unit_acceleration() {
        let (model, _, _, _) = scenario_planar_robot();
        let zero = dynamics(&model, &DVector::zeros(4), &DVector::zeros(2), &DVector::zeros(4)).unwrap();
        assert_eq!(zero, DVector::zeros(4));

        let m = ROBOT_MASS;
        let theta = v(&[0.0, 0.0, 1.0 / m, 1.0 / m]);
        let xdot = dynamics(&model, &DVector::zeros(4), &v(&[m, 0.0]), &theta).unwrap();
        assert_relative_eq!(xdot, v(&[0.0, 0.0, 1.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let (model, truth, _) = scenario_nonlinear2d();
        assert!(dynamics(&model, &v(&[1.0]), &v(&[0.0]), &truth.0).is_err());
        assert!(dynamics(&model, &v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &truth.0).is_err());
        assert!(dynamics(&model, &v(&[1.0, 0.0]), &v(&[0.0]), &v(&[1.0])).is_err());
    }

    #[test]
    fn scenario_constants() {
        let (_, truth, theta0) = scenario_nonlinear2d();
        assert_eq!(truth.0, v(&[-0.6, -1.0, 1.0, 1.0]));
        assert_eq!(theta0.lower(), &v(&[-1.2, -2.0, 0.5, 0.8]));
        assert!(theta0.contains(&truth.0).unwrap());

        let (_, truth, theta0, obs) = scenario_planar_robot();
        assert_eq!(obs.center, [-2.5, 2.5]);
        assert_eq!(obs.radius, 1.5);
        assert_eq!(theta0.upper(), &v(&[5.0, 5.0, 2.0, 2.0]));
        assert_eq!(truth.0[2], truth.0[3]);
        assert!(theta0.contains(&truth.0).unwrap());
    }

    #[test]
    fn drift_jacobian_matches_finite_differences() {
        let (robot, _, _, _) = scenario_planar_robot();
        let x = v(&[0.4, -1.3, 0.7, 2.2]);
        let jac = robot.drift_jacobian(&x);
        let h = 1e-6;
        for j in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (robot.drift(&xp) - robot.drift(&xm)) / (2.0 * h);
            assert_relative_eq!(jac.column(j).into_owned(), col, epsilon = 1e-8);
        }
    }

    proptest! {
        #[test]
        fn affine_in_theta_and_linear_in_u(
            x in prop::collection::vec(-3.0..3.0f64, 4),
            u1 in prop::collection::vec(-5.0..5.0f64, 2),
            u2 in prop::collection::vec(-5.0..5.0f64, 2),
            t1 in prop::collection::vec(-2.0..2.0f64, 4),
            t2 in prop::collection::vec(-2.0..2.0f64, 4),
            a in 0.0..1.0f64,
        ) {
            let robot = PlanarRobot::default();
            let nl = Nonlinear2d::default();
            let models: [(&dyn ControlAffineModel, usize, usize); 2] = [(&robot, 4, 2), (&nl, 2, 1)];
            for (model, n, m) in models {
                let x = v(&x[..n]);
                let ua = v(&u1[..m]);
                let ub = v(&u2[..m]);
                let ta = v(&t1[..4]);
                let tb = v(&t2[..4]);
                let zero = DVector::zeros(m);
                let base = dynamics(model, &x, &zero, &ta).unwrap();
                let da = dynamics(model, &x, &ua, &ta).unwrap() - &base;
                let db = dynamics(model, &x, &ub, &ta).unwrap() - &base;
                let dab = dynamics(model, &x, &(&ua + &ub), &ta).unwrap() - &base;
                prop_assert!((dab - (da + db)).amax() <= 1e-10 * (1.0 + base.amax()));

                let mix = &ta * a + &tb * (1.0 - a);
                let lhs = dynamics(model, &x, &ua, &mix).unwrap();
                let rhs = dynamics(model, &x, &ua, &ta).unwrap() * a
                    + dynamics(model, &x, &ua, &tb).unwrap() * (1.0 - a);
                prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + base.amax()));
            }
        }
    }
}
