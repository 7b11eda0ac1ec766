//! Radial profile functions, axisymmetric stream functions and vector
//! fields in the coordinate frame `(∂r, ∂θ)` of the metric `dr² + c1² dθ²`.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ProfileCurve;
use crate::jet::Jet;
use crate::quadrature::{derivative_in_interval, integrate, QuadratureOptions};

/// Denominators smaller than this are rejected rather than divided by.
pub const DENOMINATOR_FLOOR: f64 = 1e-14;

/// A smooth function of the arc-length coordinate with exact derivatives up
/// to third order.
pub trait RadialFn: Send + Sync + fmt::Debug {
    fn jet(&self, r: f64) -> Result<Jet>;

    /// Points where a derivative of order ≤ 3 may jump (piecewise definitions).
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn value(&self, r: f64) -> Result<f64> {
        Ok(self.jet(r)?.v)
    }
}

pub type SharedRadial = Arc<dyn RadialFn>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl RadialFn for Constant {
    fn jet(&self, _r: f64) -> Result<Jet> {
        Ok(Jet::constant(self.0))
    }
}

/// `Σ coeffs[k] r^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Polynomial::new(Vec::new());
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Polynomial::new(c)
    }
}

impl RadialFn for Polynomial {
    fn jet(&self, r: f64) -> Result<Jet> {
        // Horner on value and derivatives simultaneously.
        let mut j = Jet::constant(0.0);
        let x = Jet::variable(r);
        for &c in self.coeffs.iter().rev() {
            j = j * x + Jet::constant(c);
        }
        Ok(j)
    }
}

/// `δ + (1 − δ) exp(−κ r²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub delta: f64,
    pub kappa: f64,
}

impl RadialFn for Gaussian {
    fn jet(&self, r: f64) -> Result<Jet> {
        let x = Jet::variable(r);
        let g = (x * x).scale(-self.kappa).exp();
        Ok(g.scale(1.0 - self.delta) + Jet::constant(self.delta))
    }
}

/// `δ + (1 − δ) (c1(r)/a)^p`.
#[derive(Debug, Clone)]
pub struct PowerOfC1 {
    pub profile: Arc<ProfileCurve>,
    pub delta: f64,
    pub p: f64,
}

impl RadialFn for PowerOfC1 {
    fn jet(&self, r: f64) -> Result<Jet> {
        let c = self.profile.c1_jet(r)?.scale(1.0 / self.profile.spec().a);
        Ok(c.powf(self.p).scale(1.0 - self.delta) + Jet::constant(self.delta))
    }
}

/// `amplitude · cos(k r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub amplitude: f64,
    pub k: f64,
}

impl RadialFn for Cosine {
    fn jet(&self, r: f64) -> Result<Jet> {
        Ok(Jet::variable(r).scale(self.k).cos().scale(self.amplitude))
    }
}

/// The profile function `c1` itself.
#[derive(Debug, Clone)]
pub struct ProfileC1 {
    pub profile: Arc<ProfileCurve>,
}

impl RadialFn for ProfileC1 {
    fn jet(&self, r: f64) -> Result<Jet> {
        self.profile.c1_jet(r)
    }
}

#[derive(Debug, Clone)]
pub struct Sum(pub SharedRadial, pub SharedRadial);

impl RadialFn for Sum {
    fn jet(&self, r: f64) -> Result<Jet> {
        Ok(self.0.jet(r)? + self.1.jet(r)?)
    }
    fn breakpoints(&self) -> Vec<f64> {
        merge_breakpoints(&self.0, &self.1)
    }
}

#[derive(Debug, Clone)]
pub struct Product(pub SharedRadial, pub SharedRadial);

impl RadialFn for Product {
    fn jet(&self, r: f64) -> Result<Jet> {
        Ok(self.0.jet(r)? * self.1.jet(r)?)
    }
    fn breakpoints(&self) -> Vec<f64> {
        merge_breakpoints(&self.0, &self.1)
    }
}

#[derive(Debug, Clone)]
pub struct Scaled(pub f64, pub SharedRadial);

impl RadialFn for Scaled {
    fn jet(&self, r: f64) -> Result<Jet> {
        Ok(self.1.jet(r)?.scale(self.0))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.1.breakpoints()
    }
}

fn merge_breakpoints(a: &SharedRadial, b: &SharedRadial) -> Vec<f64> {
    let mut v = a.breakpoints();
    v.extend(b.breakpoints());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// The zonal profile `F = −f / c1²` of `u_f = ⋆grad ψ_f`.
#[derive(Debug, Clone)]
pub struct ZonalProfile {
    pub f: SharedRadial,
    pub profile: Arc<ProfileCurve>,
}

impl RadialFn for ZonalProfile {
    fn jet(&self, r: f64) -> Result<Jet> {
        let c = self.profile.c1_jet(r)?;
        Ok(-(self.f.jet(r)? * c.powf(-2.0)))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.f.breakpoints()
    }
}

/// Axisymmetric stream function with `ψ̇ = f / c1` and `ψ(0) = 0`.
#[derive(Debug, Clone)]
pub struct StreamFunction {
    pub f: SharedRadial,
    pub profile: Arc<ProfileCurve>,
}

impl StreamFunction {
    pub fn new(f: SharedRadial, profile: Arc<ProfileCurve>) -> Self {
        Self { f, profile }
    }

    /// Jet of `ψ̇`: `(ψ̇, ψ̈, ψ⃛, ψ⁗)` by quotient-rule expansion of `f / c1`.
    pub fn velocity_jet(&self, r: f64) -> Result<Jet> {
        let c = self.profile.c1_jet(r)?;
        Ok(self.f.jet(r)?.quotient(c))
    }

    /// `ψ(r) = ∫₀^r f/c1`.
    pub fn value(&self, r: f64, opts: &QuadratureOptions) -> Result<f64> {
        let mut err = None;
        let res = integrate(
            |x| match self.velocity_jet(x) {
                Ok(j) => j.v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            r,
            &self.f.breakpoints(),
            opts,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(res.value),
        }
    }

    /// Vorticity `ω = Δψ = ψ̈ + (ċ1/c1) ψ̇`.
    pub fn vorticity(&self, r: f64) -> Result<f64> {
        let p = self.profile.point(r)?;
        let v = self.velocity_jet(r)?;
        Ok(v.d1 + p.log_slope() * v.v)
    }

    /// The velocity field `u = ⋆grad ψ = −(f/c1²) ∂θ` as a zonal field.
    pub fn velocity_field(&self) -> ZonalField {
        zonal_from_f(self.f.clone(), self.profile.clone())
    }
}

/// Coefficients of the Hodge star in the frame `(∂r, ∂θ)` and coframe `(dr, dθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HodgeCoefficients {
    /// ⋆∂r = (−1/c1) ∂θ
    pub dr_to_dtheta: f64,
    /// ⋆∂θ = c1 ∂r
    pub dtheta_to_dr: f64,
    /// ⋆dr = (−c1) dθ
    pub form_dr: f64,
    /// ⋆dθ = (1/c1) dr
    pub form_dtheta: f64,
}

impl HodgeCoefficients {
    /// ⋆ applied to the vector `u¹ ∂r + u² ∂θ`.
    pub fn apply(&self, u: [f64; 2]) -> [f64; 2] {
        [self.dtheta_to_dr * u[1], self.dr_to_dtheta * u[0]]
    }
}

pub fn hodge_star_basis(profile: &ProfileCurve, r: f64) -> Result<HodgeCoefficients> {
    let c1 = profile.point(r)?.c1;
    Ok(hodge_from_c1(c1))
}

fn hodge_from_c1(c1: f64) -> HodgeCoefficients {
    HodgeCoefficients {
        dr_to_dtheta: -1.0 / c1,
        dtheta_to_dr: c1,
        form_dr: -c1,
        form_dtheta: 1.0 / c1,
    }
}

/// `grad φ` for φ given by its partials `(∂rφ, ∂θφ)`: components `(∂rφ, ∂θφ / c1²)`.
pub fn grad(profile: &ProfileCurve, r: f64, partials: [f64; 2]) -> Result<[f64; 2]> {
    let c1 = profile.point(r)?.c1;
    Ok([partials[0], partials[1] / (c1 * c1)])
}

/// `∂r`-coefficient of the gradient of a radial function.
pub fn grad_axisym(phi: &dyn RadialFn, profile: &ProfileCurve, r: f64) -> Result<f64> {
    profile.point(r)?;
    Ok(phi.jet(r)?.d1)
}

/// `Δφ = φ̈ + (ċ1/c1) φ̇` for radial φ.
pub fn laplacian_axisym(phi: &dyn RadialFn, profile: &ProfileCurve, r: f64) -> Result<f64> {
    let p = profile.point(r)?;
    let j = phi.jet(r)?;
    Ok(j.d2 + p.log_slope() * j.d1)
}

/// `Df = f̈ − (ċ1/c1) ḟ` with `ċ1/c1 = −a² c2 / (c1 sqrt(c1² + a⁴ c2²))`.
pub fn d_operator(f: &dyn RadialFn, profile: &ProfileCurve, r: f64) -> Result<f64> {
    let j = f.jet(r)?;
    Ok(j.d2 - profile.log_slope(r)? * j.d1)
}

/// `F'(ψ) = Df / f`.
pub fn fprime_from_f(f: &dyn RadialFn, profile: &ProfileCurve, r: f64) -> Result<f64> {
    let v = f.value(r)?;
    if v.abs() < DENOMINATOR_FLOOR {
        return Err(Error::DivisionNearZero { r, value: v });
    }
    Ok(d_operator(f, profile, r)? / v)
}

/// `F'(ψ) = ψ⃛/ψ̇ + (ċ1/c1) ψ̈/ψ̇ + (c̈1 c1 − ċ1²)/c1²`.
pub fn fprime_from_psi(psi: &StreamFunction, r: f64) -> Result<f64> {
    let p = psi.profile.point(r)?;
    let v = psi.velocity_jet(r)?;
    if v.v.abs() < DENOMINATOR_FLOOR {
        return Err(Error::DivisionNearZero { r, value: v.v });
    }
    let c1 = p.c1;
    Ok(v.d2 / v.v + p.dc1 / c1 * v.d1 / v.v + (p.ddc1 * c1 - p.dc1 * p.dc1) / (c1 * c1))
}

/// `F'(ψ) = |grad ω| / |grad ψ| = ω̇ / ψ̇`, with `ω̇` from the jet of
/// `ω = ψ̈ + (ċ1/c1) ψ̇`.
pub fn fprime_ratio(psi: &StreamFunction, r: f64) -> Result<f64> {
    let c = psi.profile.c1_jet(r)?;
    let v = psi.velocity_jet(r)?;
    if v.v.abs() < DENOMINATOR_FLOOR {
        return Err(Error::DivisionNearZero { r, value: v.v });
    }
    let log_slope = c.derivative().quotient(c);
    let omega = v.derivative() + log_slope * v;
    Ok(omega.d1 / v.v)
}

/// Values and partial derivatives of a vector field's components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldJet {
    pub w1: f64,
    pub w2: f64,
    pub w1_r: f64,
    pub w1_t: f64,
    pub w1_tt: f64,
    pub w2_r: f64,
    pub w2_t: f64,
    pub w2_tt: f64,
}

impl FieldJet {
    pub fn scale(self, c: f64) -> Self {
        Self {
            w1: c * self.w1,
            w2: c * self.w2,
            w1_r: c * self.w1_r,
            w1_t: c * self.w1_t,
            w1_tt: c * self.w1_tt,
            w2_r: c * self.w2_r,
            w2_t: c * self.w2_t,
            w2_tt: c * self.w2_tt,
        }
    }
}

/// A vector field `W¹ ∂r + W² ∂θ` on the band.
pub trait VectorField: Send + Sync {
    fn components(&self, r: f64, theta: f64) -> Result<[f64; 2]>;

    /// Analytic partial derivatives, when the field knows them.
    fn jet(&self, _r: f64, _theta: f64) -> Result<Option<FieldJet>> {
        Ok(None)
    }

    /// Jets on a ring of angles at fixed `r`; fields that separate in `r`
    /// and `θ` override this to evaluate their radial part once.
    fn ring(&self, r: f64, thetas: &[f64]) -> Result<Option<Vec<FieldJet>>> {
        let mut out = Vec::with_capacity(thetas.len());
        for &t in thetas {
            match self.jet(r, t)? {
                Some(j) => out.push(j),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// Breakpoints in `r` of piecewise-smooth fields.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `Z = F(r) ∂θ`.
#[derive(Debug, Clone)]
pub struct ZonalField {
    pub profile_fn: SharedRadial,
}

impl ZonalField {
    pub fn new(profile_fn: SharedRadial) -> Self {
        Self { profile_fn }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(Arc::new(Scaled(c, self.profile_fn.clone())))
    }
}

impl VectorField for ZonalField {
    fn components(&self, r: f64, _theta: f64) -> Result<[f64; 2]> {
        Ok([0.0, self.profile_fn.value(r)?])
    }

    fn jet(&self, r: f64, _theta: f64) -> Result<Option<FieldJet>> {
        let j = self.profile_fn.jet(r)?;
        Ok(Some(FieldJet {
            w2: j.v,
            w2_r: j.d1,
            ..FieldJet::default()
        }))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.profile_fn.breakpoints()
    }
}

/// `u_f = −(f/c1²) ∂θ`, the zonal flow with stream function `ψ̇ = f/c1`.
pub fn zonal_from_f(f: SharedRadial, profile: Arc<ProfileCurve>) -> ZonalField {
    ZonalField::new(Arc::new(ZonalProfile { f, profile }))
}

type ComponentFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;

/// A field given only by its component functions; derivatives are numeric.
pub struct FnField {
    f: Box<ComponentFn>,
}

impl FnField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    {
        Self { f: Box::new(f) }
    }
}

impl VectorField for FnField {
    fn components(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        Ok((self.f)(r, theta))
    }
}

/// `c · W`.
pub struct ScaledField<'a> {
    pub factor: f64,
    pub inner: &'a dyn VectorField,
}

impl VectorField for ScaledField<'_> {
    fn components(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        let w = self.inner.components(r, theta)?;
        Ok([self.factor * w[0], self.factor * w[1]])
    }
    fn jet(&self, r: f64, theta: f64) -> Result<Option<FieldJet>> {
        Ok(self.inner.jet(r, theta)?.map(|j| j.scale(self.factor)))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}

/// Hides the analytic jet of a field so consumers take their numerical paths.
pub struct Opaque<'a>(pub &'a dyn VectorField);

impl VectorField for Opaque<'_> {
    fn components(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        self.0.components(r, theta)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

const FD_STEP_R: f64 = 1e-3;
const FD_STEP_THETA: f64 = 1e-2;

/// `∂r W¹` and `∂θ W²`, analytic when available, otherwise by 6th-order
/// finite differences kept inside `[-r_b, r_b]`.
pub(crate) fn divergence_partials(
    w: &dyn VectorField,
    profile: &ProfileCurve,
    r: f64,
    theta: f64,
) -> Result<(f64, f64, f64)> {
    if let Some(j) = w.jet(r, theta)? {
        return Ok((j.w1, j.w1_r, j.w2_t));
    }
    let rb = profile.r_b();
    let mut err = None;
    let w1_r = derivative_in_interval(
        |x| match w.components(x, theta) {
            Ok(c) => c[0],
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        r,
        FD_STEP_R.min(rb / 8.0),
        -rb,
        rb,
    );
    let w2_t = derivative_in_interval(
        |t| match w.components(r, t) {
            Ok(c) => c[1],
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        theta,
        FD_STEP_THETA,
        f64::NEG_INFINITY,
        f64::INFINITY,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok((w.components(r, theta)?[0], w1_r, w2_t))
}

/// `div W = (∂r + ċ1/c1) W¹ + ∂θ W²`.
pub fn div_field(w: &dyn VectorField, profile: &ProfileCurve, r: f64, theta: f64) -> Result<f64> {
    let p = profile.point(r)?;
    let (w1, w1_r, w2_t) = divergence_partials(w, profile, r, theta)?;
    Ok(w1_r + p.log_slope() * w1 + w2_t)
}

/// CSV table `r,value,d1,d2,d3` of a radial function on `n` grid points.
pub fn radial_table_csv(f: &dyn RadialFn, profile: &ProfileCurve, n: usize) -> Result<String> {
    let mut out = String::from("r,value,d1,d2,d3\n");
    for r in profile.grid(n) {
        let j = f.jet(r)?;
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r, j.v, j.d1, j.d2, j.d3
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}
