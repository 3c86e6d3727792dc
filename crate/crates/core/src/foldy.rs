//! Point-scatterer model: each bubble carries an amplitude `Y_m` solving
//!
//! ```text
//! ω_M² Y_m'' + Y_m + Σ_{j≠m} C/(4π|z_m − z_j|) Y_j''(t − |z_m − z_j|/c0) = ∂_t² u^in(z_m, t)
//! ```
//!
//! and radiates `−C Y_m(t − r/c0) / (4π r)`.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;

pub use crate::delay::ConditionPolicy;
use crate::delay::{self, DelayTraces, NeutralDelaySystem};
use crate::geometry::BubbleCluster;
use crate::history::TimeGrid;
use crate::model::{validate_conditions, PhysicalParams};
use crate::signal::PointSource;
use crate::{Error, Result, Vec3};

pub type BubbleTraces = DelayTraces;

#[derive(Debug, Clone)]
pub struct DelaySystem {
    pub positions: Vec<Vec3>,
    pub inner: NeutralDelaySystem,
    pub source: PointSource,
}

impl DelaySystem {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn coupling(&self, m: usize, j: usize) -> f64 {
        self.inner.coupling[m * self.len() + j]
    }

    pub fn delay(&self, m: usize, j: usize) -> f64 {
        self.inner.delays[m * self.len() + j]
    }

    /// `∂_t² u^in(z_m, t)`; the source never coincides with a bubble after `assemble`.
    pub fn forcing(&self, m: usize, t: f64) -> f64 {
        self.source
            .eval(&self.positions[m], t, 2)
            .expect("source checked against bubble positions")
    }
}

pub fn assemble(
    cluster: &BubbleCluster,
    params: &PhysicalParams,
    source: &PointSource,
    policy: ConditionPolicy,
) -> Result<DelaySystem> {
    let report = validate_conditions(params, cluster)?;
    if !report.pass_resonance {
        let msg = format!(
            "√K_max · interaction sum = {:.4e} is not below ω_M² = {:.4e}",
            report.k_max.sqrt() * report.cond_resonance_lhs,
            params.omega_m_sq
        );
        match policy {
            ConditionPolicy::Strict => return Err(Error::Solvability(msg)),
            ConditionPolicy::WarnOnly => warn!("{msg}"),
        }
    }
    let positions = cluster.positions();
    if positions.contains(&source.x0) {
        return Err(Error::Singularity("source coincides with a bubble".into()));
    }
    let n = positions.len();
    let mut coupling = vec![0.0; n * n];
    let mut delays = vec![0.0; n * n];
    for m in 0..n {
        for j in 0..n {
            if m != j {
                let r = (positions[m] - positions[j]).norm();
                coupling[m * n + j] = params.c_eps / (4.0 * PI * r);
                delays[m * n + j] = r / params.c0;
            }
        }
    }
    Ok(DelaySystem {
        positions,
        inner: NeutralDelaySystem {
            mass: vec![params.omega_m_sq; n],
            coupling,
            delays,
        },
        source: *source,
    })
}

pub fn acceleration(
    system: &DelaySystem,
    m: usize,
    t: f64,
    y_m: f64,
    history: &crate::history::History,
) -> Result<f64> {
    system
        .inner
        .acceleration(m, t, y_m, history, &|i, s| system.forcing(i, s))
}

pub fn solve(system: &DelaySystem, grid: &TimeGrid) -> Result<BubbleTraces> {
    delay::solve(&system.inner, grid, &|i, t| system.forcing(i, t))
}

/// `u^sc(x, t) = −Σ_m C/(4π|x − z_m|) Y_m(t − |x − z_m|/c0)`.
pub fn scattered_field(
    traces: &BubbleTraces,
    cluster: &BubbleCluster,
    params: &PhysicalParams,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (m, b) in cluster.bubbles.iter().enumerate() {
        let r = (x - b.position).norm();
        if r < 2.0 * params.eps {
            return Err(Error::EvaluationPoint(format!("{x:?} is within 2ε of bubble {m}")));
        }
        sum += traces.eval_y(m, t - r / params.c0)? / r;
    }
    Ok(-params.c_eps / (4.0 * PI) * sum)
}

pub fn export_traces(traces: &BubbleTraces, path: &Path) -> Result<()> {
    traces.write_csv(std::fs::File::create(path)?, "bubble_id", ["Y", "Yp", "Ypp"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_params, RawMaterials, ShapeDescriptor};
    use crate::signal::SourcePulse;

    fn params() -> PhysicalParams {
        derive_params(&RawMaterials::default(), &ShapeDescriptor::default()).unwrap()
    }

    fn source(x0: Vec3) -> PointSource {
        PointSource::new(x0, SourcePulse::default(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn pair_coupling_and_delay() {
        let p = params();
        let r = 0.25;
        let cluster = BubbleCluster::from_positions(&[Vec3::zeros(), Vec3::new(r, 0.0, 0.0)], p.eps, r).unwrap();
        let sys = assemble(&cluster, &p, &source(Vec3::new(0.0, 0.0, 1.0)), ConditionPolicy::Strict).unwrap();
        assert!((sys.coupling(0, 1) - p.c_eps / (4.0 * PI * r)).abs() < 1e-15);
        assert_eq!(sys.coupling(0, 1), sys.coupling(1, 0));
        assert!((sys.delay(0, 1) - r).abs() < 1e-15);
        assert_eq!(sys.coupling(0, 0), 0.0);
    }

    #[test]
    fn single_bubble_acceleration_formula() {
        let p = params();
        let cluster = BubbleCluster::from_positions(&[Vec3::zeros()], p.eps, 0.1).unwrap();
        let sys = assemble(&cluster, &p, &source(Vec3::new(0.0, 0.0, 1.0)), ConditionPolicy::Strict).unwrap();
        let history = crate::history::History::new(0.01, 1);
        let t = 3.2;
        let g = sys.forcing(0, t);
        let a = acceleration(&sys, 0, t, 0.4, &history).unwrap();
        assert!((a - (g - 0.4) / p.omega_m_sq).abs() < 1e-15);
    }

    #[test]
    fn strong_interaction_is_rejected_unless_warned() {
        let p = params().scaled(0.1, 1.0);
        let pts: Vec<Vec3> = (0..4).map(|i| Vec3::new(0.05 * i as f64, 0.0, 0.0)).collect();
        let cluster = BubbleCluster::from_positions(&pts, 0.5, 0.05).unwrap();
        let src = source(Vec3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            assemble(&cluster, &p, &src, ConditionPolicy::Strict),
            Err(Error::Solvability(_))
        ));
        assert!(assemble(&cluster, &p, &src, ConditionPolicy::WarnOnly).is_ok());
    }

    #[test]
    fn field_is_zero_at_start_and_guarded_near_bubbles() {
        let p = params();
        let cluster = BubbleCluster::from_positions(&[Vec3::zeros()], p.eps, 0.1).unwrap();
        let sys = assemble(&cluster, &p, &source(Vec3::new(0.0, 0.0, 1.0)), ConditionPolicy::Strict).unwrap();
        let traces = solve(&sys, &TimeGrid::new(4.0, 0.01).unwrap()).unwrap();
        let x = Vec3::new(0.0, 0.0, -0.5);
        assert_eq!(scattered_field(&traces, &cluster, &p, &x, 0.0).unwrap(), 0.0);
        let t = 3.0;
        let one_term = -p.c_eps / (4.0 * PI * 0.5) * traces.eval_y(0, t - 0.5).unwrap();
        assert!((scattered_field(&traces, &cluster, &p, &x, t).unwrap() - one_term).abs() < 1e-15);
        let close = Vec3::new(0.0, 0.0, p.eps);
        assert!(matches!(
            scattered_field(&traces, &cluster, &p, &close, t),
            Err(Error::EvaluationPoint(_))
        ));
    }
}
