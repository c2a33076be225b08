use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::VehicleState;
use crate::math::exp_so3;

use super::SimConfig;

/// What the outer loop sees of the vehicle.
pub type Measurement = VehicleState;

/// Additive Gaussian noise on position and attitude (a body-frame rotation
/// vector); rates are passed through.
pub fn inject_noise_delay(m: &Measurement, config: &SimConfig, rng: &mut ChaCha8Rng) -> Measurement {
    let mut sample = |std: f64| -> Vector3<f64> {
        if std == 0.0 {
            return Vector3::zeros();
        }
        let n = Normal::new(0.0, std).expect("std is finite and non-negative");
        Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
    };
    let dp = sample(config.noise_position);
    let dr = sample(config.noise_attitude);
    Measurement {
        p: m.p + dp,
        rotation: m.rotation * exp_so3(&dr),
        ..*m
    }
}

/// Seeded measurement source.
#[derive(Debug, Clone)]
pub struct Sensor {
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn measure(&mut self, truth: &VehicleState, config: &SimConfig) -> Measurement {
        inject_noise_delay(truth, config, &mut self.rng)
    }
}

/// Fixed-length FIFO: a command pushed at tick k comes out at tick
/// k + `ticks`. Until then the initial value is returned.
#[derive(Debug, Clone)]
pub struct CommandDelay<T> {
    queue: VecDeque<T>,
}

impl<T: Clone> CommandDelay<T> {
    pub fn new(ticks: usize, initial: T) -> Self {
        Self {
            queue: std::iter::repeat_n(initial, ticks).collect(),
        }
    }

    pub fn push(&mut self, cmd: T) -> T {
        self.queue.push_back(cmd);
        self.queue.pop_front().expect("queue holds at least the pushed command")
    }
}
