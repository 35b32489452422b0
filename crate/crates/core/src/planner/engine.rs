//! Knot-space ascent shared by the planner and the replanner.

use crate::error::Result;
use crate::optim::{self, AscentOptions, Bounds};
use crate::primitives::{self, AxisState};
use crate::stl::{self, Formula, Trace, TraceGradient};

/// Knot states indexed `[drone][axis][knot]`.
pub type FleetKnots = Vec<[Vec<AxisState>; 3]>;

/// Scalar objective of a sampled trace with its trace gradient.
pub(crate) trait TraceObjective: Sync {
    fn eval(&self, trace: &Trace, grad: &mut TraceGradient) -> Result<f64>;
}

pub(crate) struct SmoothRobustness<'a> {
    pub formula: &'a Formula,
    pub c: f64,
}

impl TraceObjective for SmoothRobustness<'_> {
    fn eval(&self, trace: &Trace, grad: &mut TraceGradient) -> Result<f64> {
        stl::smooth_value_and_gradient_unchecked(self.formula, trace, self.c, grad)
    }
}

/// Initial weight of the intra-segment peak penalty.
const PENALTY_WEIGHT: f64 = 50.0;

pub(crate) struct Engine<'a> {
    pub knot_period: f64,
    /// Samples per segment.
    pub per: usize,
    pub segments: usize,
    pub nodes: &'a [(usize, usize)],
    pub terminal_fixed: bool,
    pub v_max: f64,
    pub a_max: f64,
    /// Relative tightening of the bounds seen by the optimiser.
    pub margin: f64,
    pub energy_weight: f64,
    pub rounds: usize,
    pub options: AscentOptions,
    /// Sensitivities of the in-segment samples to the segment boundary.
    pub basis: Vec<[[f64; 6]; 3]>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct RunOutcome {
    pub iterations: usize,
    /// Last round stopped on the tolerance rather than the iteration cap.
    pub converged: bool,
    pub histories: Vec<Vec<f64>>,
}

pub(crate) fn sample_basis(knot_period: f64, per: usize) -> Vec<[[f64; 6]; 3]> {
    let step = knot_period / per as f64;
    (0..per)
        .map(|i| primitives::boundary_basis(knot_period, i as f64 * step))
        .collect()
}

impl Engine<'_> {
    fn free_knots(&self) -> usize {
        if self.terminal_fixed {
            self.segments - 1
        } else {
            self.segments
        }
    }

    pub fn variable_count(&self) -> usize {
        self.nodes.len() * self.free_knots() * 3
    }

    pub fn pack(&self, knots: &FleetKnots) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.variable_count());
        for &(d, ax) in self.nodes {
            for k in 1..=self.free_knots() {
                let s = knots[d][ax][k];
                x.extend_from_slice(&[s.p, s.v, s.a]);
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64], knots: &mut FleetKnots) {
        let kf = self.free_knots();
        for (n, &(d, ax)) in self.nodes.iter().enumerate() {
            for k in 1..=kf {
                let i = (n * kf + k - 1) * 3;
                knots[d][ax][k] = AxisState::new(x[i], x[i + 1], x[i + 2]);
            }
        }
    }

    fn bounds(&self) -> Bounds {
        let n = self.variable_count();
        let mut b = Bounds::unbounded(n);
        let (vl, al) = (self.v_max * (1.0 - self.margin), self.a_max * (1.0 - self.margin));
        for i in (0..n).step_by(3) {
            b.lower[i + 1] = -vl;
            b.upper[i + 1] = vl;
            b.lower[i + 2] = -al;
            b.upper[i + 2] = al;
        }
        b
    }

    /// Writes the samples of one `(drone, axis)` into the trace.
    pub fn resample(&self, knots: &[AxisState], drone: usize, axis: usize, trace: &mut Trace) {
        let q = trace.drone_count();
        let count = self.segments * self.per + 1;
        let (pos, vel) = trace.columns_mut();
        for s in 0..count {
            let (k, i) = (s / self.per, s % self.per);
            let (p, v) = if i == 0 {
                (knots[k].p, knots[k].v)
            } else {
                let b = &self.basis[i];
                let (a, c) = (knots[k], knots[k + 1]);
                let x = [a.p, a.v, a.a, c.p, c.v, c.a];
                (dot6(&b[0], &x), dot6(&b[1], &x))
            };
            pos[s * q + drone][axis] = p;
            vel[s * q + drone][axis] = v;
        }
    }

    /// Sampled acceleration energy `sum a_s^2 T_s` of one `(drone, axis)`;
    /// subtracts `energy_weight` times its gradient from `dk`.
    fn energy(&self, knots: &[AxisState], dk: &mut [[f64; 3]]) -> f64 {
        let ts = self.knot_period / self.per as f64;
        let w = 2.0 * self.energy_weight * ts;
        let mut total = 0.0;
        for s in 0..=self.segments * self.per {
            let (k, i) = (s / self.per, s % self.per);
            if i == 0 {
                let a = knots[k].a;
                total += a * a * ts;
                dk[k][2] -= w * a;
            } else {
                let b = &self.basis[i][2];
                let (l, r) = (knots[k], knots[k + 1]);
                let a = dot6(b, &[l.p, l.v, l.a, r.p, r.v, r.a]);
                total += a * a * ts;
                for j in 0..6 {
                    dk[k + j / 3][j % 3] -= w * a * b[j];
                }
            }
        }
        total
    }

    /// Quadratic overshoot penalty of one `(drone, axis)` against the tightened
    /// bounds, summed over the in-segment samples (weight `1/per` each).
    /// From the second round on, closed-form peaks above the true bounds are
    /// penalised as well, which catches overshoot between samples.
    fn peak_penalty(&self, knots: &[AxisState], round: usize, dk: &mut [[f64; 3]]) -> f64 {
        let (vl, al) = (self.v_max * (1.0 - self.margin), self.a_max * (1.0 - self.margin));
        let w = 1.0 / self.per as f64;
        let mut total = 0.0;
        for s in 0..=self.segments * self.per {
            let (k, i) = (s / self.per, s % self.per);
            let (l, r) = if i == 0 { (knots[k], knots[k]) } else { (knots[k], knots[k + 1]) };
            let x = [l.p, l.v, l.a, r.p, r.v, r.a];
            for (row, lim) in [(1, vl), (2, al)] {
                let value = if i == 0 { x[row] } else { dot6(&self.basis[i][row], &x) };
                let excess = value.abs() - lim;
                if excess <= 0.0 {
                    continue;
                }
                total += w * excess * excess;
                let g = 2.0 * w * excess * value.signum();
                if i == 0 {
                    dk[k][row] += g;
                } else {
                    for j in 0..6 {
                        dk[k + j / 3][j % 3] += g * self.basis[i][row][j];
                    }
                }
            }
        }
        if round == 0 {
            return total;
        }
        for k in 0..self.segments {
            let Ok(seg) = primitives::solve_boundary(knots[k], knots[k + 1], self.knot_period) else {
                continue;
            };
            let peaks = seg.peaks();
            for (row, peak, at, lim) in [
                (1, peaks.velocity, peaks.velocity_at, self.v_max),
                (2, peaks.acceleration, peaks.acceleration_at, self.a_max),
            ] {
                let excess = peak - lim * (1.0 - self.margin / 2.0);
                if peak <= lim || excess <= 0.0 {
                    continue;
                }
                total += excess * excess;
                let s = seg.eval_unchecked(at);
                let sign = if row == 1 { s.v.signum() } else { s.a.signum() };
                let basis = primitives::boundary_basis(self.knot_period, at);
                for j in 0..6 {
                    dk[k + j / 3][j % 3] += 2.0 * excess * sign * basis[row][j];
                }
            }
        }
        total
    }

    /// Hard check of every segment against the true bounds.
    pub fn peaks_ok(&self, knots: &FleetKnots) -> bool {
        self.nodes.iter().all(|&(d, ax)| {
            knots[d][ax].windows(2).all(|w| {
                primitives::solve_boundary(w[0], w[1], self.knot_period)
                    .map(|s| {
                        let p = s.peaks();
                        p.velocity <= self.v_max && p.acceleration <= self.a_max
                    })
                    .unwrap_or(false)
            })
        })
    }

    /// Penalised ascent from `knots`, which is updated in place together with `trace`.
    pub fn run(&self, objective: &dyn TraceObjective, knots: &mut FleetKnots, trace: &mut Trace) -> Result<RunOutcome> {
        let bounds = self.bounds();
        let mut x = self.pack(knots);
        let mut out = RunOutcome::default();
        let mut weight = PENALTY_WEIGHT;
        let kf = self.free_knots();
        let mut grad = TraceGradient::zeros(trace);
        let mut dk = vec![[0.0; 3]; self.segments + 1];
        for round in 0..self.rounds.max(1) {
            let mut work = knots.clone();
            let result = optim::maximize(&x, &bounds, &self.options, |x, g| {
                self.unpack(x, &mut work);
                for &(d, ax) in self.nodes {
                    self.resample(&work[d][ax], d, ax, trace);
                }
                let mut value = objective.eval(trace, &mut grad)?;
                let q = trace.drone_count();
                for (n, &(d, ax)) in self.nodes.iter().enumerate() {
                    dk.iter_mut().for_each(|v| *v = [0.0; 3]);
                    for s in 0..=self.segments * self.per {
                        let gp = grad.d_position[s * q + d][ax];
                        let gv = grad.d_velocity[s * q + d][ax];
                        if gp == 0.0 && gv == 0.0 {
                            continue;
                        }
                        let (k, i) = (s / self.per, s % self.per);
                        if i == 0 {
                            dk[k][0] += gp;
                            dk[k][1] += gv;
                        } else {
                            let b = &self.basis[i];
                            for j in 0..6 {
                                dk[k + j / 3][j % 3] += gp * b[0][j] + gv * b[1][j];
                            }
                        }
                    }
                    let ks = &work[d][ax];
                    if self.energy_weight > 0.0 {
                        value -= self.energy_weight * self.energy(ks, &mut dk);
                    }
                    let mut pen = vec![[0.0; 3]; self.segments + 1];
                    let p = self.peak_penalty(ks, round, &mut pen);
                    value -= weight * p;
                    for k in 1..=kf {
                        let i = (n * kf + k - 1) * 3;
                        for c in 0..3 {
                            g[i + c] = dk[k][c] - weight * pen[k][c];
                        }
                    }
                }
                Ok(value)
            })?;
            x = result.x;
            out.iterations += result.iterations;
            out.converged = result.converged;
            out.histories.push(result.history);
            self.unpack(&x, knots);
            if self.peaks_ok(knots) {
                break;
            }
            weight *= 2.0;
        }
        for &(d, ax) in self.nodes {
            self.resample(&knots[d][ax], d, ax, trace);
        }
        Ok(out)
    }
}

#[inline]
fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4] + a[5] * b[5]
}
