//! Material constants, the Minnaert resonance and the solvability checks.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::geometry::BubbleCluster;
use crate::{Error, Result, Vec3};

/// Raw material data before any derived quantity is formed.
///
/// The bubble constants are the ε-independent prefactors: the physical values are
/// `kappa_b = eps² * kappa_b_bar` and `rho_b = eps² * rho_b_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawMaterials {
    pub rho_c: f64,
    pub kappa_c: f64,
    pub rho_b_bar: f64,
    pub kappa_b_bar: f64,
    pub eps: f64,
    /// Smallest relevant eigenvalue of the magnetization operator of the reference shape.
    pub lambda1_mag: f64,
}

impl Default for RawMaterials {
    /// Nondimensional defaults: unit background, and a bubble bulk modulus chosen so
    /// that a unit ball has `omega_M = 1`.
    fn default() -> Self {
        Self {
            rho_c: 1.0,
            kappa_c: 1.0,
            rho_b_bar: 1.0,
            kappa_b_bar: 4.0 * PI / 3.0,
            eps: 1.0 / 64.0,
            lambda1_mag: 1.0 / 3.0,
        }
    }
}

impl RawMaterials {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rho_c", self.rho_c),
            ("kappa_c", self.kappa_c),
            ("rho_b_bar", self.rho_b_bar),
            ("kappa_b_bar", self.kappa_b_bar),
            ("eps", self.eps),
            ("lambda1_mag", self.lambda1_mag),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {value}")));
            }
        }
        if self.eps >= 1.0 {
            warn!("eps = {} is outside the small-bubble regime", self.eps);
        }
        Ok(())
    }
}

/// Reference bubble shape `B`; a bubble is `z + eps * B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeDescriptor {
    Sphere { radius: f64 },
}

impl Default for ShapeDescriptor {
    fn default() -> Self {
        ShapeDescriptor::Sphere { radius: 1.0 }
    }
}

impl ShapeDescriptor {
    pub fn volume(&self) -> f64 {
        match *self {
            ShapeDescriptor::Sphere { radius } => 4.0 * PI * radius.powi(3) / 3.0,
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            ShapeDescriptor::Sphere { radius } => 4.0 * PI * radius * radius,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ShapeDescriptor::Sphere { radius } if radius.is_finite() && radius > 0.0 => Ok(()),
            ShapeDescriptor::Sphere { radius } => Err(Error::Parameter(format!(
                "reference sphere radius must be positive, got {radius}"
            ))),
        }
    }
}

/// Derived constants shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalParams {
    pub rho_c: f64,
    pub c0: f64,
    pub cb: f64,
    pub a_db: f64,
    /// Square of the Minnaert frequency; multiplies `Y''` in the bubble equations.
    pub omega_m_sq: f64,
    pub c_bar: f64,
    /// Per-bubble coupling strength `c_bar * eps`.
    pub c_eps: f64,
    pub vol_b: f64,
    pub eps: f64,
    pub lambda1_mag: f64,
}

impl PhysicalParams {
    pub fn omega_m(&self) -> f64 {
        self.omega_m_sq.sqrt()
    }

    /// Rescales the Minnaert frequency by `omega_factor` and the coupling constant by
    /// `cbar_factor`; used to move between resonance regimes at fixed geometry.
    pub fn scaled(&self, omega_factor: f64, cbar_factor: f64) -> Self {
        Self {
            omega_m_sq: self.omega_m_sq * omega_factor * omega_factor,
            c_bar: self.c_bar * cbar_factor,
            c_eps: self.c_eps * cbar_factor,
            ..*self
        }
    }
}

pub fn derive_params(raw: &RawMaterials, shape: &ShapeDescriptor) -> Result<PhysicalParams> {
    raw.validate()?;
    shape.validate()?;
    let a_db = geometric_constant(shape, 8)?;
    let vol_b = shape.volume();
    let c_bar = vol_b * raw.rho_c / raw.kappa_b_bar;
    Ok(PhysicalParams {
        rho_c: raw.rho_c,
        c0: (raw.rho_c / raw.kappa_c).sqrt(),
        cb: (raw.rho_b_bar / raw.kappa_b_bar).sqrt(),
        a_db,
        omega_m_sq: raw.rho_c * a_db / (2.0 * raw.kappa_b_bar),
        c_bar,
        c_eps: c_bar * raw.eps,
        vol_b,
        eps: raw.eps,
        lambda1_mag: raw.lambda1_mag,
    })
}

const GEOMETRIC_TOL: f64 = 1e-12;
const GEOMETRIC_MAX_ORDER: usize = 128;

/// `(1/|∂B|) ∫∫ (x−y)·ν_x / |x−y| dσ_x dσ_y`, refined by doubling `order` until the
/// relative change drops below 1e-12.
///
/// Both surface integrals use tensor Gauss–Legendre rules in spherical angles. The
/// inner rule is laid out around the pole `x`, so the coincidence `y = x` sits on
/// the (never sampled) boundary `θ' = 0` and the integrand is smooth in the inner
/// variables.
pub fn geometric_constant(shape: &ShapeDescriptor, order: usize) -> Result<f64> {
    shape.validate()?;
    if order == 0 {
        return Err(Error::Accuracy("quadrature order must be at least 1".into()));
    }
    let mut n = order;
    let mut previous = geometric_constant_at(shape, n);
    while n < GEOMETRIC_MAX_ORDER {
        n *= 2;
        let current = geometric_constant_at(shape, n);
        if ((current - previous) / current).abs() < GEOMETRIC_TOL {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Accuracy(format!(
        "geometric constant not converged after order {GEOMETRIC_MAX_ORDER}"
    )))
}

fn geometric_constant_at(shape: &ShapeDescriptor, n: usize) -> f64 {
    let ShapeDescriptor::Sphere { radius: a } = *shape;
    let (theta_nodes, theta_weights) = gauss_legendre_on(n, 0.0, PI);
    let (phi_nodes, phi_weights) = gauss_legendre_on(2 * n, 0.0, 2.0 * PI);

    let sphere_point = |theta: f64, phi: f64, e1: &Vec3, e2: &Vec3, e3: &Vec3| -> Vec3 {
        (e1 * (theta.sin() * phi.cos()) + e2 * (theta.sin() * phi.sin()) + e3 * theta.cos()) * a
    };
    let (gx, gy, gz) = (Vec3::x(), Vec3::y(), Vec3::z());

    let mut total = 0.0;
    for (&theta, &wt) in theta_nodes.iter().zip(&theta_weights) {
        for (&phi, &wp) in phi_nodes.iter().zip(&phi_weights) {
            let x = sphere_point(theta, phi, &gx, &gy, &gz);
            let normal = x / a;
            let (e1, e2) = tangent_frame(&normal);
            let mut inner = 0.0;
            for (&tp, &wtp) in theta_nodes.iter().zip(&theta_weights) {
                for (&pp, &wpp) in phi_nodes.iter().zip(&phi_weights) {
                    let y = sphere_point(tp, pp, &e1, &e2, &normal);
                    let diff = x - y;
                    let dist = diff.norm();
                    if dist > 1e-14 * a {
                        inner += wtp * wpp * a * a * tp.sin() * diff.dot(&normal) / dist;
                    }
                }
            }
            total += wt * wp * a * a * theta.sin() * inner;
        }
    }
    total / shape.surface_area()
}

/// Orthonormal pair spanning the plane orthogonal to the unit vector `normal`.
pub(crate) fn tangent_frame(normal: &Vec3) -> (Vec3, Vec3) {
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - normal * helper.dot(normal)).normalize();
    let e2 = normal.cross(&e1);
    (e1, e2)
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        nodes.iter().map(|x| mid + half * x).collect(),
        weights.iter().map(|w| w * half).collect(),
    )
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    pub cond_inversion_lhs: f64,
    pub cond_resonance_lhs: f64,
    pub omega_m_sq: f64,
    pub k_max: f64,
    pub pass_inversion: bool,
    pub pass_resonance: bool,
}

impl ValidationReport {
    pub fn to_key_value(&self) -> String {
        format!(
            "cond_inversion_lhs={:e}\ncond_resonance_lhs={:e}\nomega_m_sq={:e}\nk_max={}\npass_inversion={}\npass_resonance={}\n",
            self.cond_inversion_lhs,
            self.cond_resonance_lhs,
            self.omega_m_sq,
            self.k_max,
            self.pass_inversion,
            self.pass_resonance
        )
    }

    pub const CSV_HEADER: &'static str =
        "cond_inversion_lhs,cond_resonance_lhs,omega_m_sq,k_max,pass_inversion,pass_resonance";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{},{},{}",
            self.cond_inversion_lhs,
            self.cond_resonance_lhs,
            self.omega_m_sq,
            self.k_max,
            self.pass_inversion,
            self.pass_resonance
        )
    }
}

/// Evaluates the two smallness conditions under which the point-scatterer model is
/// solvable.
///
/// The interaction sum is taken over every other bubble, maximized over anchors.
pub fn validate_conditions(params: &PhysicalParams, cluster: &BubbleCluster) -> Result<ValidationReport> {
    let positions = cluster.positions();
    if positions.is_empty() {
        return Err(Error::Geometry("empty bubble cluster".into()));
    }
    let mut worst: f64 = 0.0;
    let mut d_min = f64::INFINITY;
    for (i, zi) in positions.iter().enumerate() {
        let mut sum = 0.0;
        for (j, zj) in positions.iter().enumerate() {
            if i == j {
                continue;
            }
            let r = (zi - zj).norm();
            if r <= 0.0 {
                return Err(Error::Geometry(format!("bubbles {i} and {j} coincide")));
            }
            d_min = d_min.min(r);
            sum += params.c_eps / (4.0 * PI * r);
        }
        worst = worst.max(sum);
    }
    let cond_inversion_lhs = if d_min.is_finite() {
        params.rho_c / (4.0 * PI) * params.vol_b * (params.eps / d_min).powi(6)
            / (params.lambda1_mag * params.lambda1_mag)
    } else {
        0.0
    };
    let k_max = cluster.counts.iter().copied().max().unwrap_or(1) as f64;
    Ok(ValidationReport {
        cond_inversion_lhs,
        cond_resonance_lhs: worst,
        omega_m_sq: params.omega_m_sq,
        k_max,
        pass_inversion: cond_inversion_lhs < 1.0,
        pass_resonance: k_max.sqrt() * worst < params.omega_m_sq,
    })
}
