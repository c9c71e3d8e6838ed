//! Trajectory interpolation: Catmull-Rom for joint channels, slerp for
//! orientations.

use thiserror::Error;

use crate::math::{quat_slerp, Pose, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("a trajectory needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot times must increase strictly (knot {0})")]
    NonMonotonic(usize),
    #[error("knot {index} has {got} values, expected {expected}")]
    Width { index: usize, expected: usize, got: usize },
    #[error("rate must be positive")]
    BadRate,
}

/// Value carried by a knot.
pub trait Knot: Clone {
    fn catmull_rom(p: &[&Self; 4], t: [f64; 4], s: f64) -> Self;
    fn width(&self) -> usize {
        0
    }
}

impl Knot for Vec<f64> {
    fn catmull_rom(p: &[&Self; 4], t: [f64; 4], s: f64) -> Self {
        (0..p[1].len())
            .map(|i| hermite([p[0][i], p[1][i], p[2][i], p[3][i]], t, s))
            .collect()
    }

    fn width(&self) -> usize {
        self.len()
    }
}

/// Position by Catmull-Rom, orientation by slerp within the segment.
impl Knot for Pose {
    fn catmull_rom(p: &[&Self; 4], t: [f64; 4], s: f64) -> Self {
        let c = |f: fn(Vec3) -> f64| {
            hermite(
                [
                    f(p[0].translation),
                    f(p[1].translation),
                    f(p[2].translation),
                    f(p[3].translation),
                ],
                t,
                s,
            )
        };
        Pose::new(
            Vec3::new(c(|v| v.x), c(|v| v.y), c(|v| v.z)),
            quat_slerp(p[1].rotation, p[2].rotation, s),
        )
    }
}

/// Cubic Hermite on segment [t1, t2] with finite-difference (Catmull-Rom)
/// tangents that account for non-uniform knot spacing. At the ends `p0`/`p3`
/// duplicate the boundary knot, which yields one-sided differences.
fn hermite(p: [f64; 4], t: [f64; 4], s: f64) -> f64 {
    let tangent = |a: f64, b: f64, ta: f64, tb: f64| if tb > ta { (b - a) / (tb - ta) } else { 0.0 };
    let h = t[2] - t[1];
    let m1 = tangent(p[0], p[2], t[0], t[2]) * h;
    let m2 = tangent(p[1], p[3], t[1], t[3]) * h;
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * p[1] + (s3 - 2.0 * s2 + s) * m1 + (-2.0 * s3 + 3.0 * s2) * p[2] + (s3 - s2) * m2
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    times: Vec<f64>,
    values: Vec<T>,
}

impl<T: Knot> Trajectory<T> {
    pub fn new(knots: Vec<(f64, T)>) -> Result<Self, TrajectoryError> {
        if knots.len() < 2 {
            return Err(TrajectoryError::TooFewKnots(knots.len()));
        }
        let width = knots[0].1.width();
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(TrajectoryError::NonMonotonic(i + 1));
            }
        }
        for (index, (_, v)) in knots.iter().enumerate() {
            if v.width() != width {
                return Err(TrajectoryError::Width {
                    index,
                    expected: width,
                    got: v.width(),
                });
            }
        }
        let (times, values) = knots.into_iter().unzip();
        Ok(Self { times, values })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, &T)> {
        self.times.iter().copied().zip(&self.values)
    }

    /// Sample at `t`; clamped to the end values outside the knot span.
    pub fn interp(&self, t: f64) -> T {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        if t == self.times[k] {
            return self.values[k].clone();
        }
        let i0 = k.saturating_sub(1);
        let i3 = (k + 2).min(n - 1);
        let tt = [self.times[i0], self.times[k], self.times[k + 1], self.times[i3]];
        let s = (t - tt[1]) / (tt[2] - tt[1]);
        T::catmull_rom(
            &[&self.values[i0], &self.values[k], &self.values[k + 1], &self.values[i3]],
            tt,
            s,
        )
    }

    /// Samples every `1/rate` s from the first knot, always including the last.
    pub fn resample(&self, rate: f64) -> Result<Vec<(f64, T)>, TrajectoryError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(TrajectoryError::BadRate);
        }
        let span = self.end() - self.start();
        // tolerate rounding when the span is a whole number of periods
        let n = (span * rate + 1e-9).floor() as usize;
        let mut out: Vec<(f64, T)> = (0..=n)
            .map(|k| {
                let t = self.start() + k as f64 / rate;
                (t, self.interp(t))
            })
            .collect();
        let last = out.last().unwrap().0;
        if (self.end() - last).abs() > 1e-9 {
            out.push((self.end(), self.interp(self.end())));
        } else {
            let end = self.end();
            *out.last_mut().unwrap() = (end, self.interp(end));
        }
        Ok(out)
    }
}
