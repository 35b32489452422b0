use nalgebra::Vector3;

use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// Position and velocity of one drone at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DroneSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// State of every drone in the fleet at one sample instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSample {
    pub drones: Vec<DroneSample>,
}

/// Sampled fleet trajectory on a [`TimeGrid`].
///
/// Storage is flat and sample-major: entry `k * drone_count + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    grid: TimeGrid,
    drone_count: usize,
    positions: Vec<Vector3<f64>>,
    velocities: Vec<Vector3<f64>>,
}

impl Trace {
    pub fn new(grid: TimeGrid, samples: Vec<FleetSample>) -> Result<Self> {
        if samples.len() != grid.count() {
            return Err(Error::invalid(format!(
                "trace has {} samples, grid expects {}",
                samples.len(),
                grid.count()
            )));
        }
        let drone_count = samples.first().map(|s| s.drones.len()).unwrap_or(0);
        if drone_count == 0 {
            return Err(Error::invalid("trace needs at least one drone"));
        }
        let mut positions = Vec::with_capacity(samples.len() * drone_count);
        let mut velocities = Vec::with_capacity(samples.len() * drone_count);
        for (k, s) in samples.iter().enumerate() {
            if s.drones.len() != drone_count {
                return Err(Error::invalid(format!("sample {k} has a different drone count")));
            }
            for d in &s.drones {
                positions.push(d.position);
                velocities.push(d.velocity);
            }
        }
        Trace::from_parts(grid, drone_count, positions, velocities)
    }

    /// Flat sample-major storage, as produced by the planner.
    pub fn from_parts(
        grid: TimeGrid,
        drone_count: usize,
        positions: Vec<Vector3<f64>>,
        velocities: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let n = grid.count() * drone_count;
        if drone_count == 0 || positions.len() != n || velocities.len() != n {
            return Err(Error::invalid("trace storage does not match grid and drone count"));
        }
        if positions.iter().chain(&velocities).any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("trace contains non-finite entries"));
        }
        Ok(Trace {
            grid,
            drone_count,
            positions,
            velocities,
        })
    }

    /// Every drone hovering at a fixed position for the whole horizon.
    pub fn constant(grid: TimeGrid, positions: &[Vector3<f64>]) -> Self {
        let q = positions.len();
        let p: Vec<_> = (0..grid.count()).flat_map(|_| positions.iter().copied()).collect();
        Trace {
            grid,
            drone_count: q,
            velocities: vec![Vector3::zeros(); p.len()],
            positions: p,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn drone_count(&self) -> usize {
        self.drone_count
    }

    pub fn len(&self) -> usize {
        self.grid.count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn position(&self, k: usize, drone: usize) -> Vector3<f64> {
        self.positions[k * self.drone_count + drone]
    }

    #[inline]
    pub fn velocity(&self, k: usize, drone: usize) -> Vector3<f64> {
        self.velocities[k * self.drone_count + drone]
    }

    pub fn positions_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.positions
    }

    pub(crate) fn columns_mut(&mut self) -> (&mut [Vector3<f64>], &mut [Vector3<f64>]) {
        (&mut self.positions, &mut self.velocities)
    }

    pub fn velocities_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.velocities
    }

    pub fn sample(&self, k: usize) -> FleetSample {
        FleetSample {
            drones: (0..self.drone_count)
                .map(|d| DroneSample {
                    position: self.position(k, d),
                    velocity: self.velocity(k, d),
                })
                .collect(),
        }
    }
}

/// Gradient of a scalar with respect to every position and velocity entry of a [`Trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGradient {
    drone_count: usize,
    pub(crate) d_position: Vec<Vector3<f64>>,
    pub(crate) d_velocity: Vec<Vector3<f64>>,
}

impl TraceGradient {
    pub fn zeros(trace: &Trace) -> Self {
        let n = trace.len() * trace.drone_count();
        TraceGradient {
            drone_count: trace.drone_count(),
            d_position: vec![Vector3::zeros(); n],
            d_velocity: vec![Vector3::zeros(); n],
        }
    }

    pub(crate) fn reset(&mut self) {
        self.d_position.iter_mut().for_each(|v| *v = Vector3::zeros());
        self.d_velocity.iter_mut().for_each(|v| *v = Vector3::zeros());
    }

    #[inline]
    pub fn position(&self, k: usize, drone: usize) -> Vector3<f64> {
        self.d_position[k * self.drone_count + drone]
    }

    #[inline]
    pub fn velocity(&self, k: usize, drone: usize) -> Vector3<f64> {
        self.d_velocity[k * self.drone_count + drone]
    }

    #[inline]
    pub(crate) fn add_position(&mut self, k: usize, drone: usize, g: Vector3<f64>) {
        self.d_position[k * self.drone_count + drone] += g;
    }

    #[inline]
    pub(crate) fn add_velocity(&mut self, k: usize, drone: usize, g: Vector3<f64>) {
        self.d_velocity[k * self.drone_count + drone] += g;
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.d_position
            .iter()
            .chain(&self.d_velocity)
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }
}
