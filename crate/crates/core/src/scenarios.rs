//! Reference closed-loop scenarios: the polynomial system with a parabolic
//! safe set, and the planar robot with a circular obstacle.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    BarrierCandidate, BarrierOrder, ClassKappa, DiskExclusion, DoubleIntegratorLyapunov, LyapunovCandidate,
    ParabolicBarrier, QuarticLyapunov,
};
use crate::model::{scenario_nonlinear2d, scenario_planar_robot, ControlAffineModel, Obstacle, TrueParameters};
use crate::smid::SmidConfig;
use crate::uncertainty::ParameterBox;
use crate::{Error, Result};

pub const SCENARIO_NAMES: [&str; 2] = ["nonlinear2d", "planar-robot"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioName {
    #[serde(rename = "nonlinear2d")]
    Nonlinear2d,
    #[serde(rename = "planar-robot")]
    PlanarRobot,
}

impl ScenarioName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::Nonlinear2d => "nonlinear2d",
            ScenarioName::PlanarRobot => "planar-robot",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear2d" => Ok(ScenarioName::Nonlinear2d),
            "planar-robot" => Ok(ScenarioName::PlanarRobot),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Everything needed to run one closed-loop experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: ScenarioName,
    pub model: Arc<dyn ControlAffineModel>,
    pub truth: TrueParameters,
    pub theta0: ParameterBox,
    pub x0: DVector<f64>,
    pub barriers: Vec<BarrierCandidate>,
    pub lyapunov: LyapunovCandidate,
    pub obstacle: Option<Obstacle>,
    pub smid: SmidConfig,
    pub dt: f64,
    pub horizon: f64,
    /// Leading state components that are positions.
    pub position_dim: usize,
}

impl Scenario {
    pub fn by_name(name: ScenarioName) -> Scenario {
        match name {
            ScenarioName::Nonlinear2d => nonlinear2d(),
            ScenarioName::PlanarRobot => planar_robot(),
        }
    }

    pub fn lookup(name: &str) -> Result<Scenario> {
        Ok(Self::by_name(name.parse()?))
    }

    pub fn describe(&self) -> ScenarioDescription {
        let barriers = self
            .barriers
            .iter()
            .map(|b| BarrierDescription {
                relative_degree: b.relative_degree(),
                alpha: b.alpha,
                alpha1: match b.order {
                    BarrierOrder::First => None,
                    BarrierOrder::Second { alpha1 } => Some(alpha1),
                },
                formula: match self.name {
                    ScenarioName::Nonlinear2d => "1 - x1 - x2^2".into(),
                    ScenarioName::PlanarRobot => "(x1 - xo)^2 + (x2 - yo)^2 - r^2".into(),
                },
            })
            .collect();
        ScenarioDescription {
            name: self.name,
            state_dim: self.model.state_dim(),
            input_dim: self.model.input_dim(),
            drift_param_dim: self.model.drift_param_dim(),
            theta0: self.theta0.clone(),
            truth: self.truth.0.as_slice().to_vec(),
            x0: self.x0.as_slice().to_vec(),
            obstacle: self.obstacle,
            barriers,
            lyapunov: LyapunovDescription {
                formula: match self.name {
                    ScenarioName::Nonlinear2d => "x1^4/4 + x2^2/2".into(),
                    ScenarioName::PlanarRobot => "|p|^2/2 + |p + v|^2/2".into(),
                },
                gamma: self.lyapunov.gamma,
            },
            smid: self.smid,
            dt: self.dt,
            horizon: self.horizon,
            position_dim: self.position_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierDescription {
    pub formula: String,
    pub relative_degree: u8,
    pub alpha: ClassKappa,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<ClassKappa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovDescription {
    pub formula: String,
    pub gamma: ClassKappa,
}

/// Serializable summary of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescription {
    pub name: ScenarioName,
    pub state_dim: usize,
    pub input_dim: usize,
    pub drift_param_dim: usize,
    pub theta0: ParameterBox,
    pub truth: Vec<f64>,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<Obstacle>,
    pub barriers: Vec<BarrierDescription>,
    pub lyapunov: LyapunovDescription,
    pub smid: SmidConfig,
    pub dt: f64,
    pub horizon: f64,
    pub position_dim: usize,
}

fn nonlinear2d() -> Scenario {
    let (model, truth, theta0) = scenario_nonlinear2d();
    Scenario {
        name: ScenarioName::Nonlinear2d,
        model: Arc::new(model),
        truth,
        theta0,
        x0: DVector::from_vec(vec![-3.0, 1.5]),
        barriers: vec![BarrierCandidate::first_order(Arc::new(ParabolicBarrier), ClassKappa::power(1.0, 3))],
        lyapunov: LyapunovCandidate::new(Arc::new(QuarticLyapunov), ClassKappa::linear(0.5)),
        obstacle: None,
        smid: SmidConfig::new(0.3, 0.1, 20).expect("static config"),
        dt: 0.01,
        horizon: 20.0,
        position_dim: 2,
    }
}

fn planar_robot() -> Scenario {
    let (model, truth, theta0, obstacle) = scenario_planar_robot();
    let disk = DiskExclusion {
        center: obstacle.center,
        radius: obstacle.radius,
        state_dim: 4,
    };
    let cube = ClassKappa::power(1.0, 3);
    Scenario {
        name: ScenarioName::PlanarRobot,
        model: Arc::new(model),
        truth,
        theta0,
        x0: DVector::from_vec(vec![-5.0, 4.5, 0.0, 0.0]),
        barriers: vec![BarrierCandidate::second_order(Arc::new(disk), cube, cube)],
        lyapunov: LyapunovCandidate::new(Arc::new(DoubleIntegratorLyapunov), ClassKappa::linear(1.0)),
        obstacle: Some(obstacle),
        smid: SmidConfig::new(0.1, 1.0, 20).expect("static config"),
        dt: 0.01,
        horizon: 15.0,
        position_dim: 2,
    }
}
