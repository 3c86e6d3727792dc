//! Effective screen model.
//!
//! The cluster is replaced by a density on Γ. With `ρ = ⌊K + 1⌋`, the unknown `U`
//! solves the retarded surface equation
//!
//! ```text
//! ω_M² U'' + U + ∫_Γ ρ(y) C̄ / (4π|x − y|) U''(y, t − |x − y|/c0) dσ_y = u^in   on Γ,
//! ```
//!
//! and the field `W = u^in − ∫_Γ ρ C̄ /(4π|x − y|) U''(y, t − |x − y|/c0) dσ_y` is
//! continuous across Γ while its normal derivative jumps by `C̄ρ` times the
//! sinusoidal memory transform of `W`.
//!
//! The surface integral is discretized with one node per patch; the self-patch
//! contribution uses the closed form `r/2` for a disk of the patch's area and is
//! folded into the mass.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use serde::Serialize;

use crate::delay::{self, ConditionPolicy, DelayTraces, NeutralDelaySystem};
use crate::geometry::{BubbleCluster, KFunction, Patchwork, SurfaceDescriptor};
use crate::history::TimeGrid;
use crate::model::PhysicalParams;
use crate::signal::PointSource;
use crate::{Error, Result, Vec3};

/// `U` (values), `U'` and `U'' = Y` on the time grid.
pub type SurfaceTrace = DelayTraces;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    pub surface: SurfaceDescriptor,
    pub spacing: f64,
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub density: Vec<usize>,
    /// `∫_patch dσ_y / (4π|x − y|)` for the equal-area disk: `r/2`, `r = √(w/π)`.
    pub self_terms: Vec<f64>,
}

pub fn self_term(weight: f64) -> f64 {
    0.5 * (weight / PI).sqrt()
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Builds a rule from explicit nodes; used for degenerate and synthetic setups.
    pub fn from_nodes(
        surface: SurfaceDescriptor,
        spacing: f64,
        nodes: Vec<Vec3>,
        weights: Vec<f64>,
        density: Vec<usize>,
    ) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() != density.len() || nodes.is_empty() {
            return Err(Error::Parameter(
                "rule nodes, weights and densities must have equal, nonzero length".into(),
            ));
        }
        if density.contains(&0) || weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Parameter(
                "rule densities must be ≥ 1 and weights positive".into(),
            ));
        }
        let normals = nodes.iter().map(|x| surface.normal_at(x)).collect();
        let self_terms = weights.iter().map(|&w| self_term(w)).collect();
        Ok(Self {
            surface,
            spacing,
            nodes,
            normals,
            weights,
            density,
            self_terms,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["node_id", "x", "y", "z", "weight", "density", "self_term"])?;
        for i in 0..self.len() {
            let x = self.nodes[i];
            out.write_record([
                i.to_string(),
                x.x.to_string(),
                x.y.to_string(),
                x.z.to_string(),
                self.weights[i].to_string(),
                self.density[i].to_string(),
                self.self_terms[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One node per patch at the patch centre, weight = patch area, density `⌊K + 1⌋`.
pub fn build_rule(patchwork: &Patchwork, k: &KFunction) -> Result<QuadratureRule> {
    let density = patchwork
        .patches
        .iter()
        .map(|p| k.count_at(&p.center))
        .collect::<Result<Vec<_>>>()?;
    rule_with_density(patchwork, density)
}

/// Same as [`build_rule`] but taking the per-patch counts of an existing cluster.
pub fn build_rule_from_cluster(patchwork: &Patchwork, cluster: &BubbleCluster) -> Result<QuadratureRule> {
    if cluster.counts.len() != patchwork.len() {
        return Err(Error::Geometry(
            "cluster and patchwork disagree on the patch count".into(),
        ));
    }
    rule_with_density(patchwork, cluster.counts.clone())
}

fn rule_with_density(patchwork: &Patchwork, density: Vec<usize>) -> Result<QuadratureRule> {
    QuadratureRule::from_nodes(
        patchwork.surface,
        patchwork.d,
        patchwork.patches.iter().map(|p| p.center).collect(),
        patchwork.patches.iter().map(|p| p.area).collect(),
        density,
    )
}

/// Delay system of the discretized effective equation.
pub fn assemble_effective(rule: &QuadratureRule, params: &PhysicalParams) -> NeutralDelaySystem {
    let n = rule.len();
    let mut coupling = vec![0.0; n * n];
    let mut delays = vec![0.0; n * n];
    let strength: Vec<f64> = (0..n)
        .map(|j| rule.weights[j] * rule.density[j] as f64 * params.c_bar)
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = (rule.nodes[i] - rule.nodes[j]).norm();
                coupling[i * n + j] = strength[j] / (4.0 * PI * r);
                delays[i * n + j] = r / params.c0;
            }
        }
    }
    let mass = (0..n)
        .map(|i| params.omega_m_sq + params.c_bar * rule.density[i] as f64 * rule.self_terms[i])
        .collect();
    NeutralDelaySystem { mass, coupling, delays }
}

/// Solves for `U` from rest. The delayed accelerations enter as a neutral term,
/// so the coupling must not dominate the mass (`Σ_j |a_ij| < m_i`).
pub fn solve_effective(
    rule: &QuadratureRule,
    params: &PhysicalParams,
    source: &PointSource,
    grid: &TimeGrid,
    policy: ConditionPolicy,
) -> Result<SurfaceTrace> {
    let system = assemble_effective(rule, params);
    let ratio = system.neutral_ratio();
    if ratio >= 1.0 {
        let msg = format!("neutral coupling ratio {ratio:.4} is not below 1; time stepping is unstable");
        match policy {
            ConditionPolicy::Strict => return Err(Error::Solvability(msg)),
            ConditionPolicy::WarnOnly => warn!("{msg}"),
        }
    }
    if rule.nodes.contains(&source.x0) {
        return Err(Error::Singularity("source coincides with a quadrature node".into()));
    }
    let forcing = |i: usize, t: f64| source.eval(&rule.nodes[i], t, 0).expect("source checked against nodes");
    delay::solve(&system, grid, &forcing)
}

/// `−Σ_i w_i ρ_i C̄ /(4π|x − x_i|) Y_i(t − |x − x_i|/c0)` for any dense `Y`.
pub fn retarded_layer(
    rule: &QuadratureRule,
    params: &PhysicalParams,
    x: &Vec3,
    t: f64,
    y: &dyn Fn(usize, f64) -> Result<f64>,
) -> Result<f64> {
    let mut sum = 0.0;
    for i in 0..rule.len() {
        let r = (x - rule.nodes[i]).norm();
        if r == 0.0 {
            return Err(Error::Singularity("field evaluated at a quadrature node".into()));
        }
        sum += rule.weights[i] * rule.density[i] as f64 * y(i, t - r / params.c0)? / r;
    }
    Ok(-params.c_bar / (4.0 * PI) * sum)
}

fn scattered_sum(
    rule: &QuadratureRule,
    trace: &SurfaceTrace,
    params: &PhysicalParams,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    retarded_layer(rule, params, x, t, &|i, s| trace.eval_ddy(i, s))
}

/// Rejects observation points within twice the node spacing of Γ.
pub fn check_standoff(rule: &QuadratureRule, x: &Vec3) -> Result<()> {
    let dist = rule.surface.distance_to(x);
    if dist < 2.0 * rule.spacing {
        return Err(Error::EvaluationPoint(format!(
            "{x:?} lies {dist:.3e} from the surface, inside 2 × spacing"
        )));
    }
    Ok(())
}

/// `W^sc(x, t) = −Σ_i w_i ρ_i C̄ /(4π|x − x_i|) U''(x_i, t − |x − x_i|/c0)`.
pub fn effective_scattered(
    rule: &QuadratureRule,
    trace: &SurfaceTrace,
    params: &PhysicalParams,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    check_standoff(rule, x)?;
    scattered_sum(rule, trace, params, x, t)
}

/// Total effective field `W = u^in + W^sc` off the surface, without the stand-off
/// guard (near-surface probes are the caller's responsibility).
pub fn effective_total_unchecked(
    rule: &QuadratureRule,
    trace: &SurfaceTrace,
    params: &PhysicalParams,
    source: &PointSource,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    Ok(source.eval(x, t, 0)? + scattered_sum(rule, trace, params, x, t)?)
}

/// `W = U + ω_M² U''` at node `i`, on every grid node.
pub fn surface_values(trace: &SurfaceTrace, params: &PhysicalParams, i: usize) -> Vec<f64> {
    (0..=trace.grid.steps)
        .map(|k| trace.y(k, i) + params.omega_m_sq * trace.ddy(k, i))
        .collect()
}

/// `∫_0^{t_n} sin(a (t_n − τ)) g(τ) dτ` on every node by the trapezoid rule with
/// the Euler–Maclaurin endpoint correction. The sine kernel is split with the
/// addition formula so the whole series costs O(N).
fn sine_convolution(g: &[f64], a: f64, h: f64) -> Vec<f64> {
    let n = g.len();
    if n == 0 {
        return Vec::new();
    }
    let g0_slope = if n >= 4 {
        (-11.0 * g[0] + 18.0 * g[1] - 9.0 * g[2] + 2.0 * g[3]) / (6.0 * h)
    } else if n >= 2 {
        (g[1] - g[0]) / h
    } else {
        0.0
    };
    let mut c_sum = 0.0;
    let mut s_sum = 0.0;
    let mut out = Vec::with_capacity(n);
    for (k, &gk) in g.iter().enumerate() {
        let t = k as f64 * h;
        let (s, c) = (a * t).sin_cos();
        c_sum += c * gk;
        s_sum += s * gk;
        let trapezoid = h * (s * c_sum - c * s_sum - 0.5 * g[0] * s);
        // F(τ) = sin(a(t − τ)) g(τ): F'(t) = −a g(t), F'(0) = −a cos(at) g(0) + sin(at) g'(0)
        let correction = h * h / 12.0 * (-a * gk + a * c * g[0] - s * g0_slope);
        out.push(trapezoid - correction);
    }
    out
}

/// Memory term `ω_M⁻¹ ∫_0^t sin(ω_M⁻¹(t − τ)) f''(τ) dτ` from samples of `f''`.
pub fn memory_convolution(f_dd: &[f64], omega_m: f64, h: f64) -> Vec<f64> {
    let a = 1.0 / omega_m;
    sine_convolution(f_dd, a, h).into_iter().map(|v| a * v).collect()
}

/// The same memory term from samples of `f` itself, via
/// `ω_M⁻² f − ω_M⁻³ ∫_0^t sin(ω_M⁻¹(t − τ)) f(τ) dτ` (valid when `f(0) = f'(0) = 0`).
pub fn memory_from_values(f: &[f64], omega_m: f64, h: f64) -> Vec<f64> {
    let a = 1.0 / omega_m;
    sine_convolution(f, a, h)
        .into_iter()
        .zip(f)
        .map(|(conv, &fv)| a * a * fv - a * a * a * conv)
        .collect()
}

/// Largest gap between the two forms of the memory term over the grid.
pub fn kernel_identity_residual(f: &[f64], f_dd: &[f64], omega_m: f64, h: f64) -> Result<f64> {
    if f.len() != f_dd.len() {
        return Err(Error::Usage("f and f'' must share the time grid".into()));
    }
    if f.len() >= 3 {
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let horizon = h * (f.len() - 1) as f64;
        let slope0 = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
        if f[0].abs() > 1e-12 * scale || slope0.abs() > 1e-4 * scale / horizon {
            return Err(Error::Precondition(format!(
                "memory identity needs f(0) = f'(0) = 0, got f(0) = {:.3e}, f'(0) ≈ {slope0:.3e}",
                f[0]
            )));
        }
    }
    let lhs = memory_from_values(f, omega_m, h);
    let rhs = memory_convolution(f_dd, omega_m, h);
    Ok(lhs.iter().zip(&rhs).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpReport {
    /// `sup |[∂_ν W]_fd − C̄ρ · memory(W)| / sup |C̄ρ · memory(W)|`.
    pub relative_residual: f64,
    pub jump_scale: f64,
    /// `sup |W(x + δν) − W(x − δν)|` over the same probes and times.
    pub value_jump: f64,
}

/// Compares the finite-difference jump of `∂_ν W` at the given nodes with the
/// memory transmission term.
///
/// Normal derivatives are one-sided, extrapolated from `x ± δν, ±2δν, ±3δν`, so
/// the on-surface value is never needed on the left side. The memory term is
/// computed from the nodal values `W = U + ω_M² U''` over the grid nodes in
/// `node_steps`.
pub fn jump_residual(
    rule: &QuadratureRule,
    trace: &SurfaceTrace,
    params: &PhysicalParams,
    source: &PointSource,
    probes: &[usize],
    delta: f64,
    node_steps: &[usize],
) -> Result<JumpReport> {
    if !(delta > 0.0) {
        return Err(Error::Parameter("probe offset must be positive".into()));
    }
    if delta < 5.0 * rule.spacing {
        warn!("probe offset {delta} is below 5 × spacing; near-singular quadrature may dominate");
    }
    let h = trace.grid.h;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut value_jump: f64 = 0.0;
    for &i in probes {
        let x = rule.nodes[i];
        let nu = rule.normals[i];
        let memory = memory_from_values(&surface_values(trace, params, i), params.omega_m(), h);
        let strength = params.c_bar * rule.density[i] as f64;
        for &k in node_steps {
            let t = trace.grid.time(k);
            let field = |s: f64| effective_total_unchecked(rule, trace, params, source, &(x + nu * (s * delta)), t);
            let (p1, p2, p3) = (field(1.0)?, field(2.0)?, field(3.0)?);
            let (m1, m2, m3) = (field(-1.0)?, field(-2.0)?, field(-3.0)?);
            let d_plus = (-5.0 * p1 + 8.0 * p2 - 3.0 * p3) / (2.0 * delta);
            let d_minus = (5.0 * m1 - 8.0 * m2 + 3.0 * m3) / (2.0 * delta);
            let expected = strength * memory[k];
            worst = worst.max((d_plus - d_minus - expected).abs());
            scale = scale.max(expected.abs());
            value_jump = value_jump.max((p1 - m1).abs());
        }
    }
    Ok(JumpReport {
        relative_residual: if scale > 0.0 { worst / scale } else { worst },
        jump_scale: scale,
        value_jump,
    })
}

pub fn export_trace<W: Write>(trace: &SurfaceTrace, writer: W) -> Result<()> {
    trace.write_csv(writer, "node_id", ["U", "Up", "Upp"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_surface, partition, SurfaceKind};
    use crate::model::{derive_params, RawMaterials, ShapeDescriptor};
    use crate::signal::SourcePulse;

    fn params() -> PhysicalParams {
        derive_params(&RawMaterials::default(), &ShapeDescriptor::default()).unwrap()
    }

    #[test]
    fn rule_weights_and_self_terms() {
        let surface = build_surface(SurfaceKind::Disk, 1.0).unwrap();
        let pw = partition(&surface, 0.1).unwrap();
        let rule = build_rule(&pw, &KFunction::default()).unwrap();
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(rule.density.iter().all(|&d| d == 1));
        assert!((self_term(0.01) - 0.028209479177387815).abs() < 1e-15);
    }

    #[test]
    fn t_squared_memory_closed_form() {
        let h = 1e-3;
        let n = (PI / h).round() as usize;
        let h = PI / n as f64;
        let f: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powi(2)).collect();
        let f_dd = vec![2.0; n + 1];
        let mem = memory_convolution(&f_dd, 1.0, h);
        assert!((mem[n] - 4.0).abs() < 1e-9, "{}", mem[n]);
        assert!(kernel_identity_residual(&f, &f_dd, 1.0, h).unwrap() < 1e-9);
        assert!(memory_convolution(&[0.0; 10], 1.0, h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_rejects_nonzero_start() {
        let f = vec![1.0; 20];
        assert!(matches!(
            kernel_identity_residual(&f, &[0.0; 20], 1.0, 0.1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn single_node_oscillator_mass() {
        let p = params();
        let surface = build_surface(SurfaceKind::Disk, 1.0).unwrap();
        let rule = QuadratureRule::from_nodes(surface, 0.1, vec![Vec3::zeros()], vec![0.01], vec![2]).unwrap();
        let sys = assemble_effective(&rule, &p);
        assert!((sys.mass[0] - (p.omega_m_sq + p.c_bar * 2.0 * self_term(0.01))).abs() < 1e-15);
    }

    #[test]
    fn scattered_field_guards_and_causality() {
        let p = params();
        let surface = build_surface(SurfaceKind::Disk, 1.0).unwrap();
        let pw = partition(&surface, 0.2).unwrap();
        let rule = build_rule(&pw, &KFunction::default()).unwrap();
        let src = PointSource::new(Vec3::new(0.0, 0.0, 1.0), SourcePulse::default(), 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(3.0, 0.01).unwrap();
        let trace = solve_effective(&rule, &p, &src, &grid, ConditionPolicy::Strict).unwrap();
        let x = Vec3::new(0.0, 0.0, -0.6);
        // the incident front reaches Γ at t = 1, the observer no earlier than t = 1.6
        assert_eq!(effective_scattered(&rule, &trace, &p, &x, 1.55).unwrap(), 0.0);
        assert!(effective_scattered(&rule, &trace, &p, &x, 2.9).unwrap() != 0.0);
        assert!(matches!(
            effective_scattered(&rule, &trace, &p, &Vec3::new(0.0, 0.0, 0.1), 2.0),
            Err(Error::EvaluationPoint(_))
        ));
    }
}
