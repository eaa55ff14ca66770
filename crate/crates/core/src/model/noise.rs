use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Supplies the standard-normal draws used by every reparameterized sample.
pub trait NoiseSource {
    fn fill(&mut self, out: &mut [f64]);
}

/// All-zero noise: samples collapse to posterior means.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Standard-normal draws from any RNG.
#[derive(Debug)]
pub struct GaussianNoise<R>(pub R);

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = StandardNormal.sample(&mut self.0);
        }
    }
}

/// Replays a fixed sequence of draws, cycling when exhausted.
#[derive(Clone, Debug)]
pub struct ReplayNoise {
    values: Vec<f64>,
    pos: usize,
}

impl ReplayNoise {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }
}

impl NoiseSource for ReplayNoise {
    fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = if self.values.is_empty() {
                0.0
            } else {
                self.values[self.pos % self.values.len()]
            };
            self.pos += 1;
        }
    }
}
