//! Arc-length profile of the truncated ellipsoid of revolution
//! `x² + y² = a²(1 − z²)`, `|z| ≤ b`.
//!
//! The generating curve `r ↦ (c1(r), c2(r))` is obtained by integrating
//!
//! ```text
//! c1' = -a² c2 / S,   c2' = c1 / S,   S = sqrt(c1² + a⁴ c2²)
//! ```
//!
//! from `(a, 0)` with a fixed-step RK4 scheme, stored densely, and
//! evaluated through quintic Hermite interpolation. Derivatives at a query
//! point are always recomputed from the right-hand side at the interpolated
//! state, never differenced.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::quadrature::{integrate, QuadratureOptions};

/// Radicands of ε² above this (negative) value are roundoff and clamp to 0.
pub const EPSILON_CLAMP: f64 = 1e-12;
/// Radicands below `-EPSILON_ERROR` signal a broken profile.
pub const EPSILON_ERROR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    /// Equatorial radius.
    pub a: f64,
    /// Truncation height in z.
    pub b: f64,
}

impl SurfaceSpec {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let spec = Self { a, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "a = {} must satisfy a >= 1",
                self.a
            )));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "b = {} must satisfy 0 < b < 1",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSettings {
    /// RK4 step and sample spacing in arc length.
    pub step: f64,
    /// Bracket width at which the `c2 = b` event bisection stops.
    pub event_tol: f64,
    /// Allowed drift of the unit-speed and on-ellipse invariants.
    pub invariant_tol: f64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            step: 1e-3,
            event_tol: 1e-12,
            invariant_tol: 1e-8,
        }
    }
}

/// Geometric data of the profile at one arc-length value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub dc1: f64,
    pub dc2: f64,
    pub ddc1: f64,
    pub ddc2: f64,
    pub dddc1: f64,
}

impl ProfilePoint {
    /// `ċ1 / c1`.
    pub fn log_slope(&self) -> f64 {
        self.dc1 / self.c1
    }

    /// Jet of `c1` at this point.
    pub fn c1_jet(&self) -> Jet {
        Jet::new(self.c1, self.dc1, self.ddc1, self.dddc1)
    }

    /// `ċ1² − c1 c̈1 − 1`, the radicand of ε.
    pub fn epsilon_radicand(&self) -> f64 {
        self.dc1 * self.dc1 - self.c1 * self.ddc1 - 1.0
    }
}

/// Right-hand side and its analytic derivatives at the state `(c1, c2)`.
fn derivatives_at(a: f64, r: f64, c1: f64, c2: f64) -> ProfilePoint {
    let a2 = a * a;
    let a4 = a2 * a2;
    let s = (c1 * c1 + a4 * c2 * c2).sqrt();
    let dc1 = -a2 * c2 / s;
    let dc2 = c1 / s;
    let ds = (c1 * dc1 + a4 * c2 * dc2) / s;
    let num1 = dc2 * s - c2 * ds;
    let ddc1 = -a2 * num1 / (s * s);
    let ddc2 = (dc1 * s - c1 * ds) / (s * s);
    let dds = (dc1 * dc1 + c1 * ddc1 + a4 * (dc2 * dc2 + c2 * ddc2) - ds * ds) / s;
    let dddc1 = -a2 * ((ddc2 * s - c2 * dds) / (s * s) - 2.0 * ds * num1 / (s * s * s));
    ProfilePoint {
        r,
        c1,
        c2,
        dc1,
        dc2,
        ddc1,
        ddc2,
        dddc1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionCoefficients {
    /// Γ^r_{θθ} = −c1 ċ1.
    pub gamma_r_thetatheta: f64,
    /// Γ^θ_{rθ} = Γ^θ_{θr} = ċ1 / c1.
    pub gamma_theta_rtheta: f64,
}

/// Worst-case invariant residuals over the stored samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantResiduals {
    pub unit_speed: f64,
    pub on_ellipse: f64,
    pub boundary: f64,
}

/// The arc-length profile curve of `M_a^b`. Immutable once built.
#[derive(Debug, Clone)]
pub struct ProfileCurve {
    spec: SurfaceSpec,
    r_b: f64,
    step: f64,
    /// Samples at `r = i * step`, `i = 0..`, covering at least `[0, r_b]`.
    samples: Vec<ProfilePoint>,
}

/// Integrate the profile ODE and locate the boundary radius `r_b`.
pub fn solve_profile(spec: SurfaceSpec, settings: &ProfileSettings) -> Result<ProfileCurve> {
    spec.validate()?;
    if !(settings.step > 0.0 && settings.event_tol > 0.0 && settings.invariant_tol > 0.0) {
        return Err(Error::InvalidParameter(
            "step, event_tol and invariant_tol must be positive".into(),
        ));
    }
    let a = spec.a;
    let h = settings.step;
    // Quarter-ellipse arc length is below (π/2)·max(a, 1).
    let max_steps = ((std::f64::consts::FRAC_PI_2 * a.max(1.0) + 1.0) / h).ceil() as usize + 16;
    const EXTRA_STEPS: usize = 8;

    let rhs = |c1: f64, c2: f64| -> (f64, f64) {
        let s = (c1 * c1 + a.powi(4) * c2 * c2).sqrt();
        (-a * a * c2 / s, c1 / s)
    };

    let mut samples = vec![derivatives_at(a, 0.0, a, 0.0)];
    let mut crossing: Option<usize> = None;
    let (mut c1, mut c2) = (a, 0.0);
    for i in 1..=max_steps {
        let (k1a, k1b) = rhs(c1, c2);
        let (k2a, k2b) = rhs(c1 + 0.5 * h * k1a, c2 + 0.5 * h * k1b);
        let (k3a, k3b) = rhs(c1 + 0.5 * h * k2a, c2 + 0.5 * h * k2b);
        let (k4a, k4b) = rhs(c1 + h * k3a, c2 + h * k3b);
        let n1 = c1 + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        let n2 = c2 + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        if !(n1.is_finite() && n2.is_finite()) || n1 <= 0.0 {
            break;
        }
        c1 = n1;
        c2 = n2;
        samples.push(derivatives_at(a, i as f64 * h, c1, c2));
        match crossing {
            None if c2 >= spec.b => crossing = Some(i),
            Some(k) if i >= k + EXTRA_STEPS => break,
            _ => {}
        }
        // keep well away from the pole, where c1 -> 0
        if crossing.is_some() && c1 < 1e-2 * a {
            break;
        }
    }
    let Some(k) = crossing else {
        let last = samples.last().expect("at least one sample");
        return Err(Error::EventNotReached {
            r: last.r,
            c2: last.c2,
            target: spec.b,
        });
    };

    let mut curve = ProfileCurve {
        spec,
        r_b: f64::NAN,
        step: h,
        samples,
    };
    // Bisection for c2(r) = b on the dense output, bracket [r_{k-1}, r_k].
    let (mut lo, mut hi) = ((k - 1) as f64 * h, k as f64 * h);
    while hi - lo > settings.event_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if curve.interpolate_state(mid).1 < spec.b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    curve.r_b = 0.5 * (lo + hi);

    let res = curve.invariant_residuals();
    if res.on_ellipse > settings.invariant_tol {
        return Err(Error::ToleranceFailure {
            invariant: "on-ellipse",
            drift: res.on_ellipse,
            limit: settings.invariant_tol,
        });
    }
    if res.unit_speed > settings.invariant_tol {
        return Err(Error::ToleranceFailure {
            invariant: "unit-speed",
            drift: res.unit_speed,
            limit: settings.invariant_tol,
        });
    }
    Ok(curve)
}

impl ProfileCurve {
    pub fn spec(&self) -> SurfaceSpec {
        self.spec
    }

    /// Boundary arc-length radius: `c2(±r_b) = ±b`.
    pub fn r_b(&self) -> f64 {
        self.r_b
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Stored samples on `r ≥ 0`.
    pub fn samples(&self) -> &[ProfilePoint] {
        &self.samples
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        if r.is_finite() && r.abs() <= self.r_b * (1.0 + 1e-12) + 1e-14 {
            Ok(())
        } else {
            Err(Error::OutOfDomain { r, r_b: self.r_b })
        }
    }

    /// Interpolated `(c1, c2)` at `r ≥ 0`.
    fn interpolate_state(&self, r: f64) -> (f64, f64) {
        let h = self.step;
        let last = self.samples.len() - 1;
        let i = ((r / h).floor() as usize).min(last - 1);
        let p0 = &self.samples[i];
        let p1 = &self.samples[i + 1];
        let t = (r - p0.r) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h3 = 0.5 * (t3 - 2.0 * t4 + t5);
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let hh = h * h;
        let c1 = h0 * p0.c1
            + h1 * h * p0.dc1
            + h2 * hh * p0.ddc1
            + h3 * hh * p1.ddc1
            + h4 * h * p1.dc1
            + h5 * p1.c1;
        let c2 = h0 * p0.c2
            + h1 * h * p0.dc2
            + h2 * hh * p0.ddc2
            + h3 * hh * p1.ddc2
            + h4 * h * p1.dc2
            + h5 * p1.c2;
        (c1, c2)
    }

    /// Full geometric data at `r`, using `c1` even and `c2` odd for `r < 0`.
    pub fn point(&self, r: f64) -> Result<ProfilePoint> {
        self.check_domain(r)?;
        Ok(self.point_unchecked(r.clamp(-self.r_b, self.r_b)))
    }

    fn point_unchecked(&self, r: f64) -> ProfilePoint {
        let (c1, c2) = self.interpolate_state(r.abs());
        derivatives_at(self.spec.a, r, c1, if r < 0.0 { -c2 } else { c2 })
    }

    /// Jet `(c1, ċ1, c̈1, c⃛1)` at `r`.
    pub fn c1_jet(&self, r: f64) -> Result<Jet> {
        Ok(self.point(r)?.c1_jet())
    }

    /// `ċ1/c1` from its closed form in terms of `c1`, `c2`.
    pub fn log_slope(&self, r: f64) -> Result<f64> {
        let p = self.point(r)?;
        let a2 = self.spec.a * self.spec.a;
        Ok(-a2 * p.c2 / (p.c1 * (p.c1 * p.c1 + a2 * a2 * p.c2 * p.c2).sqrt()))
    }

    /// Uniform grid of `n` points on `[-r_b, r_b]`; for odd `n` the middle
    /// node is exactly `r = 0`.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2);
        let rb = self.r_b;
        (0..n)
            .map(|i| {
                let x = rb * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
                if i == n - 1 {
                    rb
                } else {
                    x
                }
            })
            .collect()
    }

    pub fn invariant_residuals(&self) -> InvariantResiduals {
        let a2 = self.spec.a * self.spec.a;
        let mut unit_speed: f64 = 0.0;
        let mut on_ellipse: f64 = 0.0;
        let limit = self.r_b + self.step;
        for p in self.samples.iter().filter(|p| p.r <= limit) {
            unit_speed = unit_speed.max((p.dc1 * p.dc1 + p.dc2 * p.dc2 - 1.0).abs());
            on_ellipse = on_ellipse.max((p.c1 * p.c1 - a2 * (1.0 - p.c2 * p.c2)).abs());
        }
        let boundary = if self.r_b.is_finite() {
            (self.interpolate_state(self.r_b).1 - self.spec.b).abs()
        } else {
            f64::NAN
        };
        InvariantResiduals {
            unit_speed,
            on_ellipse,
            boundary,
        }
    }
}

/// Arc length `∫₀^z sqrt(1 + a² t²/(1 − t²)) dt` of the generating ellipse,
/// computed by adaptive quadrature directly from the closed-form integrand.
pub fn arc_length_oracle(a: f64, z: f64, tol: f64) -> Result<f64> {
    if z.is_nan() || z.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "|z| = {} must be < 1",
            z.abs()
        )));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let opts = QuadratureOptions {
        rel_tol: tol,
        abs_tol: tol * 1e-3,
        ..QuadratureOptions::default()
    };
    let zz = z.abs();
    let res = integrate(
        |t| (1.0 + a * a * t * t / (1.0 - t * t)).sqrt(),
        0.0,
        zz,
        &[],
        &opts,
    )?;
    if res.error > tol {
        return Err(Error::QuadratureFailure {
            estimate: res.error,
            tolerance: tol,
        });
    }
    Ok(res.value.copysign(z))
}

/// `ε²(r) = ċ1² − c1 c̈1 − 1`, with roundoff-sized negatives clamped to 0.
pub fn epsilon_squared(profile: &ProfileCurve, r: f64) -> Result<f64> {
    let p = profile.point(r)?;
    clamp_radicand(r, p.epsilon_radicand())
}

pub(crate) fn clamp_radicand(r: f64, value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -EPSILON_ERROR {
        Ok(0.0)
    } else {
        Err(Error::NegativeRadicand { r, value })
    }
}

/// `ε(r) = sqrt(ċ1² − c1 c̈1 − 1)`.
pub fn epsilon(profile: &ProfileCurve, r: f64) -> Result<f64> {
    Ok(epsilon_squared(profile, r)?.sqrt())
}

/// Nonzero Levi-Civita coefficients of `dr² + c1² dθ²`.
pub fn connection(profile: &ProfileCurve, r: f64) -> Result<ConnectionCoefficients> {
    let p = profile.point(r)?;
    Ok(connection_at(&p))
}

pub(crate) fn connection_at(p: &ProfilePoint) -> ConnectionCoefficients {
    ConnectionCoefficients {
        gamma_r_thetatheta: -p.c1 * p.dc1,
        gamma_theta_rtheta: p.dc1 / p.c1,
    }
}

/// CSV table `r,c1,c2,dc1,dc2,ddc1,epsilon` on `n` uniform points of
/// `[-r_b, r_b]`, 17 significant digits.
pub fn profile_csv(profile: &ProfileCurve, n: usize) -> Result<String> {
    let mut out = String::from("r,c1,c2,dc1,dc2,ddc1,epsilon\n");
    for r in profile.grid(n) {
        let p = profile.point(r)?;
        let eps = clamp_radicand(r, p.epsilon_radicand())?.sqrt();
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r, p.c1, p.c2, p.dc1, p.dc2, p.ddc1, eps
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}
