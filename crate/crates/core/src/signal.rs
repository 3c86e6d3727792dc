//! Causal source pulse and the incident spherical wave it radiates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::SurfaceDescriptor;
use crate::{Error, Result, Vec3};

/// Truncated Taylor expansion `Σ c_k (t − t0)^k`, `k ≤ 3`.
///
/// Enough arithmetic to push exact third derivatives through the pulse formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3(pub [f64; 4]);

impl Jet3 {
    pub fn constant(c: f64) -> Self {
        Jet3([c, 0.0, 0.0, 0.0])
    }

    /// The independent variable expanded around `t`.
    pub fn variable(t: f64) -> Self {
        Jet3([t, 1.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `k`-th derivative, `k ≤ 3`.
    pub fn derivative(&self, k: usize) -> f64 {
        const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
        self.0[k] * FACT[k]
    }

    pub fn scale(self, s: f64) -> Self {
        Jet3(self.0.map(|c| c * s))
    }

    pub fn exp(self) -> Self {
        let a = self.0;
        let mut e = [a[0].exp(), 0.0, 0.0, 0.0];
        for k in 1..4 {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * a[j] * e[k - j];
            }
            e[k] = acc / k as f64;
        }
        Jet3(e)
    }

    pub fn sin_cos(self) -> (Self, Self) {
        let a = self.0;
        let mut s = [a[0].sin(), 0.0, 0.0, 0.0];
        let mut c = [a[0].cos(), 0.0, 0.0, 0.0];
        for k in 1..4 {
            let (mut ds, mut dc) = (0.0, 0.0);
            for j in 1..=k {
                ds += j as f64 * a[j] * c[k - j];
                dc -= j as f64 * a[j] * s[k - j];
            }
            s[k] = ds / k as f64;
            c[k] = dc / k as f64;
        }
        (Jet3(s), Jet3(c))
    }
}

impl std::ops::Add for Jet3 {
    type Output = Jet3;

    fn add(self, o: Jet3) -> Jet3 {
        Jet3([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }
}

impl std::ops::Mul for Jet3 {
    type Output = Jet3;

    fn mul(self, other: Jet3) -> Jet3 {
        let (a, b) = (self.0, other.0);
        let mut c = [0.0; 4];
        for k in 0..4 {
            for i in 0..=k {
                c[k] += a[i] * b[k - i];
            }
        }
        Jet3(c)
    }
}

impl std::ops::Div for Jet3 {
    type Output = Jet3;

    fn div(self, other: Jet3) -> Jet3 {
        let (a, b) = (self.0, other.0);
        let mut q = [0.0; 4];
        for k in 0..4 {
            let mut acc = a[k];
            for i in 1..=k {
                acc -= b[i] * q[k - i];
            }
            q[k] = acc / b[0];
        }
        Jet3(q)
    }
}

/// `λ(t) = amplitude · χ(t/t_rise) · sin(omega0 t)` with a C^∞ switch-on `χ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcePulse {
    pub omega0: f64,
    pub t_rise: f64,
    pub amplitude: f64,
}

impl Default for SourcePulse {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            t_rise: 2.0,
            amplitude: 1.0,
        }
    }
}

impl SourcePulse {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::Parameter(format!(
                "pulse omega0 must be positive, got {}",
                self.omega0
            )));
        }
        if !(self.t_rise.is_finite() && self.t_rise > 0.0) {
            return Err(Error::Parameter(format!(
                "pulse t_rise must be positive, got {}",
                self.t_rise
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Parameter("pulse amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Jet of `λ` at `t`. Exactly zero for `t ≤ 0`.
    pub fn jet(&self, t: f64) -> Jet3 {
        if t <= 0.0 {
            return Jet3([0.0; 4]);
        }
        let (phase, _) = Jet3::variable(t).scale(self.omega0).sin_cos();
        let carrier = phase.scale(self.amplitude);
        if t >= self.t_rise {
            return carrier;
        }
        smooth_step(Jet3::variable(t).scale(1.0 / self.t_rise)) * carrier
    }
}

/// `e^{-1/x}` for `x > 0`, zero otherwise, as a jet.
fn flat_exp(x: Jet3) -> Jet3 {
    if x.value() <= 0.0 {
        return Jet3([0.0; 4]);
    }
    (Jet3::constant(-1.0) / x).exp()
}

/// `φ(s) / (φ(s) + φ(1 − s))`: 0 for `s ≤ 0`, 1 for `s ≥ 1`, smooth in between.
fn smooth_step(s: Jet3) -> Jet3 {
    let rising = flat_exp(s);
    let falling = flat_exp(Jet3::constant(1.0) + s.scale(-1.0));
    rising / (rising + falling)
}

/// `d^k λ / dt^k` at `t` for `k ≤ 3`.
pub fn pulse_eval(pulse: &SourcePulse, t: f64, deriv_order: usize) -> Result<f64> {
    if deriv_order > 3 {
        return Err(Error::Parameter(format!(
            "pulse derivatives are available up to order 3, got {deriv_order}"
        )));
    }
    Ok(pulse.jet(t).derivative(deriv_order))
}

/// Samples `λ, λ', λ'', λ'''` on `n + 1` equispaced points of `[0, t_end]`.
pub fn write_pulse_csv<W: Write>(pulse: &SourcePulse, t_end: f64, n: usize, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["t", "lambda", "d1", "d2", "d3"])?;
    for i in 0..=n {
        let t = t_end * i as f64 / n.max(1) as f64;
        let jet = pulse.jet(t);
        out.write_record(
            [
                t,
                jet.derivative(0),
                jet.derivative(1),
                jet.derivative(2),
                jet.derivative(3),
            ]
            .map(|v| v.to_string()),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Point source radiating `u^in(x, t) = ρ_c λ(t − |x − x0|/c0) / |x − x0|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointSource {
    pub x0: Vec3,
    pub pulse: SourcePulse,
    pub rho_c: f64,
    pub c0: f64,
}

impl PointSource {
    pub fn new(x0: Vec3, pulse: SourcePulse, rho_c: f64, c0: f64) -> Result<Self> {
        pulse.validate()?;
        if !(rho_c > 0.0 && c0 > 0.0) {
            return Err(Error::Parameter("source needs positive rho_c and c0".into()));
        }
        Ok(Self { x0, pulse, rho_c, c0 })
    }

    /// Rejects sources closer than `5 d` to the surface they illuminate.
    pub fn check_standoff(&self, surface: &SurfaceDescriptor, d: f64) -> Result<()> {
        let dist = surface.distance_to(&self.x0);
        if dist < 5.0 * d {
            return Err(Error::Geometry(format!(
                "source lies {dist:.3e} from the surface, closer than 5d = {:.3e}",
                5.0 * d
            )));
        }
        Ok(())
    }

    /// Time derivative of order `time_deriv ≤ 3` of the incident field.
    pub fn eval(&self, x: &Vec3, t: f64, time_deriv: usize) -> Result<f64> {
        let r = (x - self.x0).norm();
        if r == 0.0 {
            return Err(Error::Singularity(
                "incident field evaluated at the source point".into(),
            ));
        }
        Ok(self.rho_c * pulse_eval(&self.pulse, t - r / self.c0, time_deriv)? / r)
    }
}

pub fn incident_eval(source: &PointSource, x: &Vec3, t: f64, time_deriv: usize) -> Result<f64> {
    source.eval(x, t, time_deriv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> SourcePulse {
        SourcePulse::default()
    }

    #[test]
    fn causal_and_switched_on() {
        for k in 0..=3 {
            assert_eq!(pulse_eval(&pulse(), -0.1, k).unwrap(), 0.0);
            assert_eq!(pulse_eval(&pulse(), 0.0, k).unwrap(), 0.0);
        }
        assert!(pulse_eval(&pulse(), 0.0, 4).is_err());
    }

    #[test]
    fn plain_carrier_after_rise() {
        let p = SourcePulse {
            omega0: 1.7,
            t_rise: 1.5,
            amplitude: 0.8,
        };
        let t = 2.0 * p.t_rise;
        let d1 = pulse_eval(&p, t, 1).unwrap();
        assert!((d1 - 0.8 * 1.7 * (1.7 * t).cos()).abs() < 1e-14);
        let h = 1e-5;
        let fd = (pulse_eval(&p, t + h, 0).unwrap() - pulse_eval(&p, t - h, 0).unwrap()) / (2.0 * h);
        assert!((fd - d1).abs() < 1e-6 * d1.abs());
    }

    #[test]
    fn derivatives_match_finite_differences_inside_ramp() {
        let p = pulse();
        let h = 1e-4;
        for &t in &[0.3, 0.9, 1.4, 1.9] {
            for k in 1..=3 {
                let f = |s: f64| pulse_eval(&p, s, k - 1).unwrap();
                let fd = (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h);
                let exact = pulse_eval(&p, t, k).unwrap();
                let scale = exact.abs().max(1e-3);
                assert!((fd - exact).abs() < 1e-6 * scale, "t={t} k={k}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn jet_quotient_and_exponential() {
        // (1 + t)^{-1} at t = 0 → 1, −1, 2, −6
        let q = Jet3::constant(1.0) / (Jet3::constant(1.0) + Jet3::variable(0.0));
        assert_eq!([0, 1, 2, 3].map(|k| q.derivative(k)), [1.0, -1.0, 2.0, -6.0]);
        let e = Jet3::variable(0.5).scale(2.0).exp();
        for k in 0..4 {
            assert!((e.derivative(k) - 2f64.powi(k as i32) * 1f64.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn incident_wave_decay_and_causality() {
        let src = PointSource::new(Vec3::new(0.0, 0.0, 1.0), pulse(), 1.0, 1.0).unwrap();
        let near = Vec3::new(0.0, 0.0, 0.0);
        let far = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(src.eval(&near, 0.99, 0).unwrap(), 0.0);
        let a = src.eval(&near, 3.7, 0).unwrap();
        let b = src.eval(&far, 4.7, 0).unwrap();
        assert!((b / a - 0.5).abs() < 1e-14);
        assert!(matches!(src.eval(&src.x0, 1.0, 0), Err(Error::Singularity(_))));
    }

    #[test]
    fn second_time_derivative_matches_differences() {
        let src = PointSource::new(Vec3::new(0.0, 0.0, 1.0), pulse(), 1.0, 1.0).unwrap();
        let x = Vec3::new(0.2, -0.1, 0.0);
        let h = 1e-3;
        for &t in &[2.0, 2.6, 4.0] {
            let f = |s: f64| src.eval(&x, s, 0).unwrap();
            let fd =
                (-f(t - 2.0 * h) + 16.0 * f(t - h) - 30.0 * f(t) + 16.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h * h);
            let exact = src.eval(&x, t, 2).unwrap();
            assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1e-2), "t={t}");
        }
    }

    #[test]
    fn pulse_csv_has_header() {
        let mut buf = Vec::new();
        write_pulse_csv(&pulse(), 4.0, 8, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,lambda,d1,d2,d3\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
