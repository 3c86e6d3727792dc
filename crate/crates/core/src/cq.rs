//! Frequency-domain solves of the effective equation and BDF2 convolution
//! quadrature back to the time domain.
//!
//! With the causal transform `ŷ(ω) = ∫ e^{iωt} y(t) dt`, `Im ω > 0`, write
//! `s = −iω` (so `Re s > 0`). Time derivatives become multiplication by `s` and
//! a delay `τ` becomes `e^{−sτ} = e^{iωτ}`, so the `Y`-form of the effective
//! equation turns into
//!
//! ```text
//! ((ℏ s² + 1) I + s² Ŝ(s)) Ŷ = s² û^in,     Ŝ(s)_ij = w_j ρ_j C̄ e^{−s r_ij} / (4π r_ij),
//! ```
//!
//! with the diagonal `C̄ ρ_i r_i / 2` (unit phase), `ℏ = ω_M²`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::effective::{retarded_layer, QuadratureRule};
use crate::history::{History, TimeGrid};
use crate::model::PhysicalParams;
use crate::signal::PointSource;
use crate::{Error, Result, Vec3};

/// `s = −iω`.
pub fn laplace_variable(omega: Complex64) -> Complex64 {
    Complex64::new(0.0, -1.0) * omega
}

/// `(Ŝ(s) v)_i` without the material factor `C̄ρ`: the plain discrete single layer.
fn plain_single_layer(rule: &QuadratureRule, s: Complex64) -> DMatrix<Complex64> {
    let n = rule.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::from(rule.self_terms[i])
        } else {
            let r = (rule.nodes[i] - rule.nodes[j]).norm();
            (-s * r).exp() * (rule.weights[j] / (4.0 * PI * r))
        }
    })
}

/// System matrix `(ℏ s² + 1) I + s² Ŝ(s)` including the density `C̄ρ`.
pub fn system_matrix(rule: &QuadratureRule, params: &PhysicalParams, s: Complex64) -> DMatrix<Complex64> {
    let n = rule.len();
    let s2 = s * s;
    let mut a = plain_single_layer(rule, s);
    for j in 0..n {
        let scale = s2 * (rule.density[j] as f64 * params.c_bar);
        for i in 0..n {
            a[(i, j)] *= scale;
        }
    }
    for i in 0..n {
        a[(i, i)] += s2 * params.omega_m_sq + 1.0;
    }
    a
}

/// Norm of `L²(Γ)` under the rule: `(Σ_i w_i |v_i|²)^{1/2}`.
pub fn weighted_norm(rule: &QuadratureRule, v: &[Complex64]) -> f64 {
    v.iter()
        .zip(&rule.weights)
        .map(|(z, w)| w * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceSolution {
    #[serde(skip)]
    pub y: Vec<Complex64>,
    pub norm_y: f64,
    /// `(|ω| / Im ω) ‖û^in‖`.
    pub bound: f64,
    pub margin: f64,
    pub relative_residual: f64,
}

impl LaplaceSolution {
    pub fn within_bound(&self) -> bool {
        self.margin >= 0.0
    }
}

fn solve_dense(a: DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular frequency-domain matrix (theory predicts invertibility)".into()))?;
    let b_norm = b.norm();
    if b_norm > 0.0 {
        let rel = (&a * &x - b).norm() / b_norm;
        if !(rel < 1e-8) {
            return Err(Error::Numerical(format!(
                "frequency-domain residual {rel:.3e} too large"
            )));
        }
    }
    Ok(x)
}

/// Solves `((ℏ s² + 1) I + s² Ŝ(s)) Ŷ = s² û` at `s = −iω` and reports the
/// resolvent bound `‖Ŷ‖ ≤ (|ω|/σ) ‖û‖`, `σ = Im ω`.
pub fn laplace_solve(
    rule: &QuadratureRule,
    params: &PhysicalParams,
    omega: Complex64,
    rhs: &[Complex64],
) -> Result<LaplaceSolution> {
    if !(omega.im > 0.0) {
        return Err(Error::Parameter(format!(
            "frequency {omega} must lie in the upper half-plane"
        )));
    }
    if rhs.len() != rule.len() {
        return Err(Error::Usage(
            "right-hand side length differs from the node count".into(),
        ));
    }
    let s = laplace_variable(omega);
    let b = DVector::from_iterator(rhs.len(), rhs.iter().map(|u| s * s * u));
    let x = solve_dense(system_matrix(rule, params, s), &b)?;
    let y: Vec<Complex64> = x.iter().copied().collect();
    let a = system_matrix(rule, params, s);
    let relative_residual = if b.norm() > 0.0 {
        (&a * &x - &b).norm() / b.norm()
    } else {
        0.0
    };
    let norm_y = weighted_norm(rule, &y);
    let bound = omega.norm() / omega.im * weighted_norm(rule, rhs);
    Ok(LaplaceSolution {
        y,
        norm_y,
        bound,
        margin: bound - norm_y,
        relative_residual,
    })
}

/// `min Re(s ⟨Ŝ(s) v, v⟩) / ‖v‖²` over `samples` random vectors, for the plain
/// single layer (no material factor), weighted inner product.
pub fn coercivity_ratio(rule: &QuadratureRule, omega: Complex64, samples: usize, seed: u64) -> f64 {
    let s = laplace_variable(omega);
    let sl = plain_single_layer(rule, s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rule.len();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let sv = &sl * &v;
        let inner: Complex64 = (0..n).map(|i| rule.weights[i] * sv[i] * v[i].conj()).sum();
        let norm2: f64 = (0..n).map(|i| rule.weights[i] * v[i].norm_sqr()).sum();
        worst = worst.min((s * inner).re / norm2);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub omega_re: f64,
    pub omega_im: f64,
    pub norm_y: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Solves at every frequency with the same right-hand side.
pub fn frequency_sweep(
    rule: &QuadratureRule,
    params: &PhysicalParams,
    omegas: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<FrequencyRow>> {
    omegas
        .par_iter()
        .map(|&omega| {
            let sol = laplace_solve(rule, params, omega, rhs)?;
            Ok(FrequencyRow {
                omega_re: omega.re,
                omega_im: omega.im,
                norm_y: sol.norm_y,
                bound: sol.bound,
                margin: sol.margin,
            })
        })
        .collect()
}

pub fn write_frequency_csv<W: Write>(rows: &[FrequencyRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// BDF2 convolution quadrature on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CqScheme {
    pub grid: TimeGrid,
    /// Radius of the contour used to extract the weights; `None` picks
    /// `ε_mach^{1/(2L)}`, `L = N + 1`.
    pub radius: Option<f64>,
}

impl CqScheme {
    pub fn new(grid: TimeGrid) -> Self {
        Self { grid, radius: None }
    }

    fn contour_points(&self) -> usize {
        self.grid.steps + 1
    }

    pub fn contour_radius(&self) -> f64 {
        self.radius
            .unwrap_or_else(|| f64::EPSILON.powf(0.5 / self.contour_points() as f64))
    }

    /// `γ(ζ) = (1 − ζ) + (1 − ζ)²/2`.
    pub fn gamma(zeta: Complex64) -> Complex64 {
        let d = Complex64::from(1.0) - zeta;
        d + 0.5 * d * d
    }
}

/// `Y` on the grid nodes with Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct CqSolution {
    pub grid: TimeGrid,
    history: History,
}

impl CqSolution {
    pub fn len(&self) -> usize {
        self.history.components()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn y(&self, k: usize, i: usize) -> f64 {
        self.history.value(k, i)
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        (0..=self.grid.steps).map(|k| self.y(k, i)).collect()
    }

    pub fn eval(&self, i: usize, t: f64) -> Result<f64> {
        self.history.eval(i, t)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["time", "node_id", "Y"])?;
        for k in 0..=self.grid.steps {
            for i in 0..self.len() {
                out.write_record([self.grid.time(k).to_string(), i.to_string(), self.y(k, i).to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// All-at-once CQ: `Y = A(∂_t)^{-1} ∂_t² u^in` with BDF2 as the underlying
/// multistep method.
///
/// The data are scaled by `ρ^j`, transformed with one FFT per node, solved at the
/// `L` contour frequencies `s_l = γ(ρ e^{−2πil/L}) / h` (half of them by
/// conjugate symmetry), and transformed back.
pub fn cq_solve(
    rule: &QuadratureRule,
    params: &PhysicalParams,
    scheme: &CqScheme,
    source: &PointSource,
) -> Result<CqSolution> {
    let n = rule.len();
    let steps = scheme.grid.steps;
    let h = scheme.grid.h;
    let big_l = scheme.contour_points();
    let rho = scheme.contour_radius();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Accuracy(format!("contour radius {rho} must lie in (0, 1)")));
    }
    let amplification = rho.powi(-(steps as i32));
    if !(amplification * f64::EPSILON < 1e-4) {
        return Err(Error::Accuracy(format!(
            "contour radius {rho} amplifies rounding by {amplification:.3e} over {steps} steps"
        )));
    }
    if rule.nodes.contains(&source.x0) {
        return Err(Error::Singularity("source coincides with a quadrature node".into()));
    }

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(big_l);
    let inverse = planner.plan_fft_inverse(big_l);

    // per-node spectra of ρ^j g_j, g = ∂_t² u^in
    let spectra: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut buf: Vec<Complex64> = (0..big_l)
                .map(|j| {
                    let g = source
                        .eval(&rule.nodes[i], j as f64 * h, 2)
                        .expect("source checked against nodes");
                    Complex64::from(rho.powi(j as i32) * g)
                })
                .collect();
            forward.process(&mut buf);
            buf
        })
        .collect();

    let half = big_l / 2;
    let solved: Vec<Vec<Complex64>> = (0..=half)
        .into_par_iter()
        .map(|l| {
            let zeta = Complex64::from_polar(rho, -2.0 * PI * l as f64 / big_l as f64);
            let s = CqScheme::gamma(zeta) / h;
            let b = DVector::from_fn(n, |i, _| spectra[i][l]);
            let a = system_matrix(rule, params, s);
            // A(s) Ŷ = s² Û  ⇔  A(s) Ŷ = Ĝ with Ĝ the transform of ∂_t² u^in
            solve_dense(a, &b).map(|x| x.iter().copied().collect())
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; (steps + 1) * n];
    for i in 0..n {
        let mut buf: Vec<Complex64> = (0..big_l)
            .map(|l| {
                if l <= half {
                    solved[l][i]
                } else {
                    solved[big_l - l][i].conj()
                }
            })
            .collect();
        inverse.process(&mut buf);
        for k in 0..=steps {
            values[k * n + i] = buf[k].re / (big_l as f64 * rho.powi(k as i32));
        }
    }
    let mut history = History::new(h, n);
    for k in 0..=steps {
        history.push(&values[k * n..(k + 1) * n]);
    }
    Ok(CqSolution {
        grid: scheme.grid,
        history,
    })
}

/// `W^sc` from a CQ solution, `−Σ_i w_i ρ_i C̄ /(4π|x − x_i|) Y_i(t − |x − x_i|/c0)`.
pub fn cq_scattered(
    rule: &QuadratureRule,
    solution: &CqSolution,
    params: &PhysicalParams,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    crate::effective::check_standoff(rule, x)?;
    retarded_layer(rule, params, x, t, &|i, s| solution.eval(i, s))
}

/// Total field `u^in + W^sc` from a CQ solution, without the stand-off guard.
pub fn cq_total_unchecked(
    rule: &QuadratureRule,
    solution: &CqSolution,
    params: &PhysicalParams,
    source: &PointSource,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    Ok(source.eval(x, t, 0)? + retarded_layer(rule, params, x, t, &|i, s| solution.eval(i, s))?)
}
