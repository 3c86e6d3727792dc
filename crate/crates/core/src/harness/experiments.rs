//! End-to-end runs: point-scatterer vs effective comparisons, the ε sweep and
//! the resonance-regime sweep.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{to_vec3, ExperimentConfig};
use crate::cq::{cq_solve, CqScheme, CqSolution};
use crate::delay::ConditionPolicy;
use crate::effective::{build_rule_from_cluster, retarded_layer, solve_effective, QuadratureRule, SurfaceTrace};
use crate::foldy::{self, BubbleTraces};
use crate::geometry::{minimum_separation, partition, place_bubbles, BubbleCluster, Patchwork, SurfaceDescriptor};
use crate::history::TimeGrid;
use crate::model::{derive_params, PhysicalParams, RawMaterials, ShapeDescriptor};
use crate::signal::PointSource;
use crate::{Error, Result, Vec3};

/// Everything a single-ε run needs.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub params: PhysicalParams,
    pub surface: SurfaceDescriptor,
    pub patchwork: Patchwork,
    pub cluster: BubbleCluster,
    pub rule: QuadratureRule,
    pub source: PointSource,
    pub grid: TimeGrid,
}

pub fn policy(config: &ExperimentConfig) -> ConditionPolicy {
    if config.warn_only {
        ConditionPolicy::WarnOnly
    } else {
        ConditionPolicy::Strict
    }
}

/// Builds geometry, cluster, rule and time grid at scale `eps` with `d = √eps`.
pub fn setup(config: &ExperimentConfig, eps: f64) -> Result<RunSetup> {
    let raw = RawMaterials {
        eps,
        ..config.materials
    };
    let params = derive_params(&raw, &ShapeDescriptor::default())?;
    let surface = config.surface()?;
    let d = eps.sqrt();
    let patchwork = partition(&surface, d)?;
    let cluster = place_bubbles(&patchwork, &config.k, eps, config.seed)?;
    let rule = build_rule_from_cluster(&patchwork, &cluster)?;
    let source = PointSource::new(config.source_position(), config.pulse, params.rho_c, params.c0)?;
    source.check_standoff(&surface, d)?;
    let node_sep = minimum_separation(&rule.nodes)?;
    let min_delay = cluster.d_min.min(node_sep) / params.c0;
    let h = config.time.max_step.min(config.time.safety * min_delay);
    let grid = TimeGrid::new(config.time.t_end, h)?;
    Ok(RunSetup {
        params,
        surface,
        patchwork,
        cluster,
        rule,
        source,
        grid,
    })
}

/// Field values on a (points × times) lattice, point-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSamples {
    pub points: Vec<Vec3>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FieldSamples {
    pub fn sample(points: &[Vec3], times: &[f64], field: impl Fn(&Vec3, f64) -> Result<f64> + Sync) -> Result<Self> {
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|x| times.iter().map(|&t| field(x, t)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(Self {
            points: points.to_vec(),
            times: times.to_vec(),
            values: rows.concat(),
        })
    }

    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.values[p * self.times.len() + k]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["point_id", "x", "y", "z", "time", "value"])?;
        for (p, x) in self.points.iter().enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                out.write_record([
                    p.to_string(),
                    x.x.to_string(),
                    x.y.to_string(),
                    x.z.to_string(),
                    t.to_string(),
                    self.value(p, k).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Uniform observation times `0, Δ, 2Δ, … ≤ T`.
pub fn sample_times(config: &ExperimentConfig) -> Vec<f64> {
    let dt = config.time.sample_dt;
    let n = (config.time.t_end / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

pub fn run_foldy(setup: &RunSetup, config: &ExperimentConfig) -> Result<(BubbleTraces, FieldSamples)> {
    let system = foldy::assemble(&setup.cluster, &setup.params, &setup.source, policy(config))?;
    let traces = foldy::solve(&system, &setup.grid)?;
    let samples = FieldSamples::sample(&config.observation_points(), &sample_times(config), |x, t| {
        foldy::scattered_field(&traces, &setup.cluster, &setup.params, x, t)
    })?;
    Ok((traces, samples))
}

pub fn run_effective(setup: &RunSetup, config: &ExperimentConfig) -> Result<(SurfaceTrace, FieldSamples)> {
    let trace = solve_effective(&setup.rule, &setup.params, &setup.source, &setup.grid, policy(config))?;
    let samples = FieldSamples::sample(&config.observation_points(), &sample_times(config), |x, t| {
        crate::effective::effective_scattered(&setup.rule, &trace, &setup.params, x, t)
    })?;
    Ok((trace, samples))
}

pub fn run_cq(setup: &RunSetup, config: &ExperimentConfig) -> Result<(CqSolution, FieldSamples)> {
    let solution = cq_solve(&setup.rule, &setup.params, &CqScheme::new(setup.grid), &setup.source)?;
    let samples = FieldSamples::sample(&config.observation_points(), &sample_times(config), |x, t| {
        crate::cq::cq_scattered(&setup.rule, &solution, &setup.params, x, t)
    })?;
    Ok((solution, samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub sup: f64,
    /// `(Σ_points Σ_times Δt |u − w|²)^{1/2}`.
    pub l2: f64,
    /// `l2` divided by the same norm of `u`.
    pub rel_l2: f64,
}

/// Sup and discrete-L² distances between two samplings of the same lattice.
pub fn compare_fields(u: &FieldSamples, w: &FieldSamples) -> Result<ErrorSummary> {
    if u.points != w.points || u.times != w.times || u.values.len() != w.values.len() {
        return Err(Error::Usage("field samples live on different lattices".into()));
    }
    let dt = if u.times.len() > 1 {
        u.times[1] - u.times[0]
    } else {
        1.0
    };
    let mut sup: f64 = 0.0;
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    for (a, b) in u.values.iter().zip(&w.values) {
        sup = sup.max((a - b).abs());
        diff2 += dt * (a - b) * (a - b);
        ref2 += dt * a * a;
    }
    let l2 = diff2.sqrt();
    Ok(ErrorSummary {
        sup,
        l2,
        rel_l2: if ref2 > 0.0 { l2 / ref2.sqrt() } else { l2 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub eps: f64,
    pub d: f64,
    pub bubbles: usize,
    pub step: f64,
    pub sup_error: f64,
    pub l2_error: f64,
    pub rel_l2_error: f64,
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub rows: Vec<ComparisonRow>,
    /// Least-squares slope of `log(l2_error)` against `log(eps)`.
    pub slope_l2: f64,
    pub residual_l2: f64,
    pub slope_sup: f64,
    pub residual_sup: f64,
}

impl ComparisonResult {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].l2_error < w[0].l2_error && w[1].sup_error < w[0].sup_error)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Point-scatterer vs effective field at one scale.
pub fn compare_at(config: &ExperimentConfig, eps: f64) -> Result<ComparisonRow> {
    let start = std::time::Instant::now();
    let tag = |stage: &str| format!("{stage} (eps = {eps})");
    let setup = setup(config, eps).map_err(|e| e.in_stage(tag("setup")))?;
    let (_, u) = run_foldy(&setup, config).map_err(|e| e.in_stage(tag("point scatterers")))?;
    let (_, w) = run_effective(&setup, config).map_err(|e| e.in_stage(tag("effective")))?;
    let err = compare_fields(&u, &w)?;
    Ok(ComparisonRow {
        eps,
        d: eps.sqrt(),
        bubbles: setup.cluster.len(),
        step: setup.grid.h,
        sup_error: err.sup,
        l2_error: err.l2,
        rel_l2_error: err.rel_l2,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs [`compare_at`] for every ε of the sweep and fits the log-log slope.
pub fn convergence_sweep(config: &ExperimentConfig) -> Result<ComparisonResult> {
    let eps = &config.sweep.eps;
    if eps.len() < 3 {
        return Err(Error::Usage(format!(
            "the sweep needs at least 3 values of eps, got {}",
            eps.len()
        )));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Usage("sweep eps values must be strictly decreasing".into()));
    }
    let rows: Vec<ComparisonRow> = eps.par_iter().map(|&e| compare_at(config, e)).collect::<Result<_>>()?;
    let log_eps: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let (slope_l2, _, residual_l2) = fit_line(&log_eps, &rows.iter().map(|r| r.l2_error.ln()).collect::<Vec<_>>());
    let (slope_sup, _, residual_sup) = fit_line(&log_eps, &rows.iter().map(|r| r.sup_error.ln()).collect::<Vec<_>>());
    Ok(ComparisonResult {
        rows,
        slope_l2,
        residual_l2,
        slope_sup,
        residual_sup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeRow {
    pub omega_factor: f64,
    pub cbar_factor: f64,
    pub omega_m: f64,
    pub c_bar: f64,
    /// `sup |W^sc|` over observation points and times.
    pub sup_scattered: f64,
    /// Discrete `L²` in time of the total field at the far-side probes.
    pub transmitted_energy: f64,
    pub sup_ratio: f64,
    pub energy_ratio: f64,
}

/// Effective-screen response for scaled `(ω_M, C̄)`, relative to the first row.
///
/// Uses the convolution-quadrature solver: for small `ω_M` with large `C̄` the
/// delayed coupling dominates the mass and explicit stepping of the neutral
/// system is unstable, whereas the BDF2 quadrature is A-stable.
pub fn regime_sweep(config: &ExperimentConfig, factors: &[[f64; 2]]) -> Result<Vec<RegimeRow>> {
    if factors.is_empty() {
        return Err(Error::Usage("no regime factors given".into()));
    }
    let omegas: Vec<f64> = factors.iter().map(|f| f[0]).collect();
    let lo = omegas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omegas.iter().copied().fold(0.0, f64::max);
    if factors.iter().flatten().any(|&f| !(f > 0.0)) {
        return Err(Error::Usage("regime factors must be positive".into()));
    }
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Usage("ω_M factors must span at least two decades".into()));
    }
    let base = setup(config, config.regimes.eps).map_err(|e| e.in_stage("regime setup"))?;
    let points = config.observation_points();
    let probes: Vec<Vec3> = config.regimes.probes.iter().map(to_vec3).collect();
    let times = sample_times(config);
    let dt = config.time.sample_dt;
    let measured: Vec<(PhysicalParams, f64, f64)> = factors
        .par_iter()
        .map(|f| {
            let params = base.params.scaled(f[0], f[1]);
            let stage = format!("regime (ω×{}, C̄×{})", f[0], f[1]);
            let solution = cq_solve(&base.rule, &params, &CqScheme::new(base.grid), &base.source)
                .map_err(|e| e.in_stage(stage.clone()))?;
            let scattered = FieldSamples::sample(&points, &times, |x, t| {
                crate::cq::cq_scattered(&base.rule, &solution, &params, x, t)
            })?;
            let total =
                FieldSamples::sample(&probes, &times, |x, t| {
                    Ok(base.source.eval(x, t, 0)?
                        + retarded_layer(&base.rule, &params, x, t, &|i, s| solution.eval(i, s))?)
                })?;
            let sup = scattered.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let energy = (total.values.iter().map(|v| dt * v * v).sum::<f64>()).sqrt();
            Ok((params, sup, energy))
        })
        .collect::<Result<_>>()?;
    let (sup0, energy0) = (measured[0].1, measured[0].2);
    Ok(factors
        .iter()
        .zip(&measured)
        .map(|(f, (params, sup, energy))| RegimeRow {
            omega_factor: f[0],
            cbar_factor: f[1],
            omega_m: params.omega_m(),
            c_bar: params.c_bar,
            sup_scattered: *sup,
            transmitted_energy: *energy,
            sup_ratio: sup / sup0,
            energy_ratio: energy / energy0,
        })
        .collect())
}

pub fn write_rows<W: std::io::Write, T: Serialize>(rows: &[T], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
