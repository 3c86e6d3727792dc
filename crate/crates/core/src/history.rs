//! Uniform time grids and sampled histories with cubic Hermite dense output.

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub h: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// `steps = ⌈T/h⌉`; the last node may overshoot `T` by less than one step.
    pub fn new(t_end: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Parameter(format!("time step must be positive, got {h}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Parameter(format!("time horizon must be positive, got {t_end}")));
        }
        let steps = (t_end / h - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { t_end, h, steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }
}

/// Values of `n` components on the nodes `t_k = k h`, time-major, with slopes
/// estimated by fourth-order differences. Before `t = 0` the history is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    h: f64,
    n: usize,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl History {
    pub fn new(h: f64, n: usize) -> Self {
        Self {
            h,
            n,
            values: Vec::new(),
            slopes: Vec::new(),
        }
    }

    pub fn components(&self) -> usize {
        self.n
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn latest_time(&self) -> f64 {
        (self.len() as f64 - 1.0) * self.h
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn value(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n + j]
    }

    fn at(&self, k: isize, j: usize) -> f64 {
        if k < 0 {
            0.0
        } else {
            self.values[k as usize * self.n + j]
        }
    }

    /// Appends the next node and refreshes the slopes that the new value affects.
    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n, "history row has the wrong width");
        self.values.extend_from_slice(row);
        self.slopes.extend(std::iter::repeat_n(0.0, self.n));
        let last = self.len() - 1;
        for k in last.saturating_sub(2)..=last {
            for j in 0..self.n {
                self.slopes[k * self.n + j] = self.slope_estimate(k, j);
            }
        }
    }

    /// Fourth-order derivative estimate at node `k`: centred where two later
    /// nodes exist, lopsided near the newest node.
    fn slope_estimate(&self, k: usize, j: usize) -> f64 {
        let last = self.len() - 1;
        let k = k as isize;
        let a = |o: isize| self.at(k + o, j);
        let num = if k as usize + 2 <= last {
            a(-2) - 8.0 * a(-1) + 8.0 * a(1) - a(2)
        } else if (k as usize) < last {
            -a(-3) + 6.0 * a(-2) - 18.0 * a(-1) + 10.0 * a(0) + 3.0 * a(1)
        } else {
            3.0 * a(-4) - 16.0 * a(-3) + 36.0 * a(-2) - 48.0 * a(-1) + 25.0 * a(0)
        };
        num / (12.0 * self.h)
    }

    pub fn slope(&self, k: usize, j: usize) -> f64 {
        self.slopes[k * self.n + j]
    }

    /// Cubic Hermite interpolant of component `j` at time `t`.
    pub fn eval(&self, j: usize, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let latest = self.latest_time();
        let s = t / self.h;
        let k = s.floor();
        if t > latest * (1.0 + 1e-12) || self.is_empty() {
            return Err(Error::HistoryGap { t, recorded: latest });
        }
        let k = (k as usize).min(self.len().saturating_sub(2));
        if self.len() == 1 {
            return Ok(self.value(0, j));
        }
        let theta = s - k as f64;
        Ok(hermite(
            theta,
            self.h,
            self.value(k, j),
            self.value(k + 1, j),
            self.slope(k, j),
            self.slope(k + 1, j),
        ))
    }
}

/// Cubic Hermite on `[0, h]` with endpoint values `y0, y1` and slopes `m0, m1`,
/// evaluated at the fraction `theta`.
pub fn hermite(theta: f64, h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + theta) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1
}
