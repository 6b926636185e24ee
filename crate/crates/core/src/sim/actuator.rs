//! Reduced actuator dynamics: command latency FIFO, backlash deadband,
//! rate limits, and a first-order lag per joint.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Per-joint actuator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActuatorModel {
    /// First-order lag time constant (s); 0 disables the lag.
    pub time_constant: f64,
    /// Command latency (s); must be an integer multiple of the plant period.
    pub latency: f64,
    /// Backlash half-width (rad).
    pub backlash: f64,
    /// Symmetric joint velocity limit (rad/s).
    pub rate_limit: f64,
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self { time_constant: 0.04, latency: 0.0, backlash: 0.0, rate_limit: 12.0 }
    }
}

impl ActuatorModel {
    pub fn ideal() -> Self {
        Self { time_constant: 0.0, latency: 0.0, backlash: 0.0, rate_limit: f64::INFINITY }
    }

    pub fn validate(&self, dt: f64) -> Result<(), String> {
        if self.backlash < 0.0 {
            return Err("backlash must be non-negative".into());
        }
        let steps = self.latency / dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(format!(
                "latency {} is not an integer multiple of the plant period {}",
                self.latency, dt
            ));
        }
        Ok(())
    }
}

/// One joint's actuator state.
#[derive(Debug, Clone)]
pub struct ActuatorChannel {
    model: ActuatorModel,
    /// Delay line of pending commands.
    fifo: VecDeque<f64>,
    /// Backlash output (follows the delayed command within the deadband).
    backlash_out: f64,
    /// Joint position after the lag.
    position: f64,
    velocity: f64,
    /// Asymmetric velocity limits (negative-going, positive-going); default
    /// symmetric from the model.
    rate_limits: (f64, f64),
    /// Constant bias added to the realized position (models gravity sag).
    pub bias: f64,
}

impl ActuatorChannel {
    pub fn new(model: ActuatorModel, dt: f64, initial: f64) -> Self {
        let delay_steps = (model.latency / dt).round() as usize;
        let fifo = VecDeque::from(vec![initial; delay_steps]);
        let limit = model.rate_limit;
        Self {
            model,
            fifo,
            backlash_out: initial,
            position: initial,
            velocity: 0.0,
            rate_limits: (limit, limit),
            bias: 0.0,
        }
    }

    /// Override the (negative-going, positive-going) rate limits.
    pub fn set_rate_limits(&mut self, negative: f64, positive: f64) {
        self.rate_limits = (negative, positive);
    }

    pub fn position(&self) -> f64 {
        self.position + self.bias
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// One plant period: push the command through latency, backlash, lag and
    /// the rate limiters.
    pub fn step(&mut self, command: f64, dt: f64) {
        // Latency FIFO.
        self.fifo.push_back(command);
        let delayed = self.fifo.pop_front().unwrap_or(command);

        // Backlash: the output only moves once the input takes up the slack.
        let b = self.model.backlash;
        self.backlash_out = self.backlash_out.clamp(delayed - b, delayed + b);

        // First-order lag toward the backlash output.
        let target = self.backlash_out;
        let raw_step = if self.model.time_constant <= 0.0 {
            target - self.position
        } else {
            (dt / self.model.time_constant) * (target - self.position)
        };

        // Asymmetric rate limiting.
        let max_up = self.rate_limits.1 * dt;
        let max_down = self.rate_limits.0 * dt;
        let step = raw_step.clamp(-max_down, max_up);

        self.position += step;
        self.velocity = step / dt;
    }
}
