//! Reservoir and arm bundled together: activation signal in, drawing out.

use crate::canvas::{ArmConfig, EnvState, Observation};
use crate::error::Result;
use crate::reservoir::{self, ActionSequence, ReservoirConfig, ReservoirWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct MotorSystem {
    pub reservoir: ReservoirConfig,
    pub weights: ReservoirWeights,
    pub arm: ArmConfig,
}

impl MotorSystem {
    /// Sample weights from `reservoir.seed`.
    pub fn new(reservoir: ReservoirConfig, arm: ArmConfig) -> Result<Self> {
        arm.validate()?;
        let weights = reservoir::init_weights(&reservoir)?;
        Ok(Self {
            reservoir,
            weights,
            arm,
        })
    }

    pub fn with_weights(
        reservoir: ReservoirConfig,
        weights: ReservoirWeights,
        arm: ArmConfig,
    ) -> Self {
        Self {
            reservoir,
            weights,
            arm,
        }
    }

    pub fn n_r(&self) -> usize {
        self.weights.n_r()
    }

    pub fn actions(&self, x: &[f64]) -> Result<ActionSequence> {
        reservoir::run(x, &self.weights, &self.reservoir)
    }

    /// Execute one primitive on `env`.
    pub fn draw(&self, x: &[f64], env: &mut EnvState) -> Result<()> {
        let actions = self.actions(x)?;
        env.apply_actions(&actions, &self.arm)
    }

    /// Observation after drawing one primitive on a fresh environment.
    pub fn observe_primitive(&self, x: &[f64]) -> Result<Observation> {
        let mut env = EnvState::new(&self.arm);
        self.draw(x, &mut env)?;
        Ok(env.observe())
    }
}
