//! Method-of-steps integrator for neutral delay systems of the form
//!
//! ```text
//! m_i y_i''(t) + y_i(t) + Σ_{j≠i} a_ij y_j''(t − τ_ij) = f_i(t),   y(0) = y'(0) = 0.
//! ```
//!
//! Both the point-scatterer system and the discretized effective equation have
//! this shape. Classical RK4 advances `(y, y')`; delayed accelerations come from
//! the recorded history, which is exact (zero) before `t = 0`.

use std::io::Write;

use rayon::prelude::*;

use crate::history::{hermite, History, TimeGrid};
use crate::{Error, Result};

/// Forcing `f_i(t)` by component.
pub type Forcing<'a> = dyn Fn(usize, f64) -> f64 + Sync + 'a;

/// What to do when a solvability condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditionPolicy {
    #[default]
    Strict,
    WarnOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeutralDelaySystem {
    pub mass: Vec<f64>,
    /// Row-major `n × n`, zero diagonal.
    pub coupling: Vec<f64>,
    /// Row-major `n × n`, zero diagonal.
    pub delays: Vec<f64>,
}

const DIVERGENCE_LIMIT: f64 = 1e150;

impl NeutralDelaySystem {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Smallest delay among coupled pairs; infinite if nothing is coupled.
    pub fn min_delay(&self) -> f64 {
        self.coupling
            .iter()
            .zip(&self.delays)
            .filter(|(a, _)| **a != 0.0)
            .map(|(_, tau)| *tau)
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_i Σ_j |a_ij| / m_i`; below one the neutral part is a contraction.
    pub fn neutral_ratio(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| self.coupling[i * n..(i + 1) * n].iter().map(|a| a.abs()).sum::<f64>() / self.mass[i])
            .fold(0.0, f64::max)
    }

    /// `Σ_j a_ij y_j''(t − τ_ij)` from the recorded history.
    pub fn delayed_sum(&self, i: usize, t: f64, history: &History) -> Result<f64> {
        let n = self.len();
        let mut sum = 0.0;
        for j in 0..n {
            let a = self.coupling[i * n + j];
            if a != 0.0 {
                sum += a * history.eval(j, t - self.delays[i * n + j])?;
            }
        }
        Ok(sum)
    }

    fn delayed_sums(&self, t: f64, history: &History) -> Result<Vec<f64>> {
        (0..self.len())
            .into_par_iter()
            .map(|i| self.delayed_sum(i, t, history))
            .collect()
    }

    /// `y_i''(t) = (f_i(t) − y_i − Σ_j a_ij y_j''(t − τ_ij)) / m_i`.
    pub fn acceleration(&self, i: usize, t: f64, y_i: f64, history: &History, forcing: &Forcing) -> Result<f64> {
        Ok((forcing(i, t) - y_i - self.delayed_sum(i, t, history)?) / self.mass[i])
    }
}

/// Node values of `y, y', y''` with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTraces {
    pub grid: TimeGrid,
    pub n: usize,
    y: Vec<f64>,
    v: Vec<f64>,
    acc: History,
}

impl DelayTraces {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn y(&self, k: usize, j: usize) -> f64 {
        self.y[k * self.n + j]
    }

    pub fn dy(&self, k: usize, j: usize) -> f64 {
        self.v[k * self.n + j]
    }

    pub fn ddy(&self, k: usize, j: usize) -> f64 {
        self.acc.value(k, j)
    }

    /// Time series of one component: `(y, y', y'')` on the grid nodes.
    pub fn series(&self, j: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nodes = 0..=self.grid.steps;
        (
            nodes.clone().map(|k| self.y(k, j)).collect(),
            nodes.clone().map(|k| self.dy(k, j)).collect(),
            nodes.map(|k| self.ddy(k, j)).collect(),
        )
    }

    /// Dense `y_j(t)`: Hermite on nodal values and exact nodal slopes.
    pub fn eval_y(&self, j: usize, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let h = self.grid.h;
        let horizon = self.grid.horizon();
        if t > horizon * (1.0 + 1e-12) {
            return Err(Error::HistoryGap { t, recorded: horizon });
        }
        let k = ((t / h).floor() as usize).min(self.grid.steps - 1);
        let theta = t / h - k as f64;
        Ok(hermite(
            theta,
            h,
            self.y(k, j),
            self.y(k + 1, j),
            self.dy(k, j),
            self.dy(k + 1, j),
        ))
    }

    /// Dense `y_j''(t)`.
    pub fn eval_ddy(&self, j: usize, t: f64) -> Result<f64> {
        self.acc.eval(j, t)
    }

    pub fn zero_like(&self) -> bool {
        self.y.iter().chain(&self.v).all(|&x| x == 0.0)
            && (0..=self.grid.steps).all(|k| self.acc.node(k).iter().all(|&x| x == 0.0))
    }

    /// Long-format CSV: `time, <id_column>, <names...>`.
    pub fn write_csv<W: Write>(&self, writer: W, id_column: &str, names: [&str; 3]) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["time", id_column, names[0], names[1], names[2]])?;
        for k in 0..=self.grid.steps {
            let t = self.grid.time(k).to_string();
            for j in 0..self.n {
                out.write_record([
                    t.clone(),
                    j.to_string(),
                    self.y(k, j).to_string(),
                    self.dy(k, j).to_string(),
                    self.ddy(k, j).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Integrates the system from rest on `grid`.
///
/// Requires `h ≤ τ_min / 2`, so every delayed query made by an RK4 stage lands at
/// least one full step inside the recorded past.
pub fn solve(system: &NeutralDelaySystem, grid: &TimeGrid, forcing: &Forcing) -> Result<DelayTraces> {
    let n = system.len();
    if n == 0 {
        return Err(Error::Parameter("empty delay system".into()));
    }
    if system.mass.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
        return Err(Error::Parameter("delay system masses must be positive".into()));
    }
    let h = grid.h;
    let tau_min = system.min_delay();
    if h > 0.5 * tau_min {
        return Err(Error::Resolution(format!(
            "time step {h} exceeds half the smallest delay {tau_min}"
        )));
    }
    let rows = grid.steps + 1;
    let mut y = Vec::with_capacity(rows * n);
    let mut v = Vec::with_capacity(rows * n);
    let mut acc = History::new(h, n);
    y.extend(std::iter::repeat_n(0.0, n));
    v.extend(std::iter::repeat_n(0.0, n));
    let a0: Vec<f64> = (0..n).map(|i| forcing(i, 0.0) / system.mass[i]).collect();
    acc.push(&a0);

    let mut d_start = vec![0.0; n];
    for step in 0..grid.steps {
        let t = grid.time(step);
        let d_mid = system.delayed_sums(t + 0.5 * h, &acc)?;
        let d_end = system.delayed_sums(t + h, &acc)?;
        let base = step * n;
        let mut y_new = vec![0.0; n];
        let mut v_new = vec![0.0; n];
        let mut a_new = vec![0.0; n];
        for i in 0..n {
            let m = system.mass[i];
            let (y0, v0) = (y[base + i], v[base + i]);
            let f_start = forcing(i, t);
            let f_mid = forcing(i, t + 0.5 * h);
            let f_end = forcing(i, t + h);
            let k1y = v0;
            let k1v = (f_start - y0 - d_start[i]) / m;
            let k2y = v0 + 0.5 * h * k1v;
            let k2v = (f_mid - (y0 + 0.5 * h * k1y) - d_mid[i]) / m;
            let k3y = v0 + 0.5 * h * k2v;
            let k3v = (f_mid - (y0 + 0.5 * h * k2y) - d_mid[i]) / m;
            let k4y = v0 + h * k3v;
            let k4v = (f_end - (y0 + h * k3y) - d_end[i]) / m;
            y_new[i] = y0 + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            v_new[i] = v0 + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            a_new[i] = (f_end - y_new[i] - d_end[i]) / m;
            if ![y_new[i], v_new[i], a_new[i]]
                .iter()
                .all(|x| x.is_finite() && x.abs() < DIVERGENCE_LIMIT)
            {
                return Err(Error::Divergence {
                    step: step + 1,
                    detail: format!("component {i} left the finite range at t = {}", t + h),
                });
            }
        }
        y.extend_from_slice(&y_new);
        v.extend_from_slice(&v_new);
        acc.push(&a_new);
        d_start = d_end;
    }
    Ok(DelayTraces {
        grid: *grid,
        n,
        y,
        v,
        acc,
    })
}
