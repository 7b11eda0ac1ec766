//! Misiołek curvature `MC_{Z,W} = ∫ g(∇_Z[Z,W] + ∇_{[Z,W]}Z, W) μ` of a zonal
//! flow, by a 1-D formula for the `W_h` family, the reduced 2-D integrand,
//! and direct evaluation of the covariant derivatives.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    divergence_partials, Constant, Cosine, FieldJet, Polynomial, Product, ProfileC1, RadialFn,
    Scaled, SharedRadial, VectorField, ZonalField,
};
use crate::geometry::{clamp_radicand, connection_at, ProfileCurve};
use crate::jet::Jet;
use crate::quadrature::{
    derivative_in_interval, integrate_with_aux, periodic_nodes, QuadratureOptions,
};

pub const BOUNDARY_TOL: f64 = 1e-12;
pub const TANGENCY_TOL: f64 = 1e-10;
pub const DIVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HShape {
    Zero,
    /// `h = 1` on `|r| ≤ (1 − w) r_b`, quintic smoothstep descent to 0 at `±r_b`.
    Plateau {
        w: f64,
    },
    /// `cos(π r / (2 r_b))`.
    Cosine,
}

#[derive(Debug, Clone)]
enum HInner {
    Shape(HShape),
    Custom(SharedRadial),
}

/// A radial bump `h` with `h(±r_b) = 0`.
#[derive(Debug, Clone)]
pub struct PerturbationH {
    inner: HInner,
    r_b: f64,
}

impl PerturbationH {
    pub fn zero(profile: &ProfileCurve) -> Self {
        Self {
            inner: HInner::Shape(HShape::Zero),
            r_b: profile.r_b(),
        }
    }

    pub fn plateau(profile: &ProfileCurve, w: f64) -> Result<Self> {
        Self::from_shape(HShape::Plateau { w }, profile)
    }

    pub fn cosine(profile: &ProfileCurve) -> Result<Self> {
        Self::from_shape(HShape::Cosine, profile)
    }

    pub fn from_shape(shape: HShape, profile: &ProfileCurve) -> Result<Self> {
        if let HShape::Plateau { w } = shape {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "plateau width {w} not in (0, 1)"
                )));
            }
        }
        Self::checked(HInner::Shape(shape), profile.r_b())
    }

    /// Any radial function; rejected unless it vanishes at `±r_b`.
    pub fn custom(h: SharedRadial, profile: &ProfileCurve) -> Result<Self> {
        Self::checked(HInner::Custom(h), profile.r_b())
    }

    fn checked(inner: HInner, r_b: f64) -> Result<Self> {
        let h = Self { inner, r_b };
        for r in [-r_b, r_b] {
            let v = h.jet(r)?.v;
            if v.abs() > BOUNDARY_TOL {
                return Err(Error::BoundaryViolation { value: v });
            }
        }
        Ok(h)
    }

    pub fn shape(&self) -> Option<HShape> {
        match self.inner {
            HInner::Shape(s) => Some(s),
            HInner::Custom(_) => None,
        }
    }

    pub fn r_b(&self) -> f64 {
        self.r_b
    }
}

fn smoothstep(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        t3 * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - 3.0 * t + 2.0 * t2),
        60.0 - 360.0 * t + 360.0 * t2,
    ]
}

impl RadialFn for PerturbationH {
    fn jet(&self, r: f64) -> Result<Jet> {
        match &self.inner {
            HInner::Custom(f) => f.jet(r),
            HInner::Shape(HShape::Zero) => Ok(Jet::constant(0.0)),
            HInner::Shape(HShape::Cosine) => Cosine {
                amplitude: 1.0,
                k: PI / (2.0 * self.r_b),
            }
            .jet(r),
            HInner::Shape(HShape::Plateau { w }) => {
                let s = r.abs();
                let width = w * self.r_b;
                let r0 = self.r_b - width;
                if s <= r0 {
                    return Ok(Jet::constant(1.0));
                }
                if s >= self.r_b {
                    return Ok(Jet::constant(0.0));
                }
                let [v, d1, d2, d3] = smoothstep((s - r0) / width);
                let sign = if r < 0.0 { -1.0 } else { 1.0 };
                Ok(Jet::new(
                    1.0 - v,
                    -sign * d1 / width,
                    -d2 / (width * width),
                    -sign * d3 / (width * width * width),
                ))
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.inner {
            HInner::Custom(f) => f.breakpoints(),
            HInner::Shape(HShape::Plateau { w }) => {
                let r0 = (1.0 - w) * self.r_b;
                vec![-r0, r0]
            }
            HInner::Shape(_) => Vec::new(),
        }
    }
}

/// `W_h = h sinθ ∂r + (ḣ + h ċ1/c1) cosθ ∂θ`.
#[derive(Debug, Clone)]
pub struct WhField {
    pub h: PerturbationH,
    pub profile: Arc<ProfileCurve>,
}

pub fn build_wh(h: PerturbationH, profile: Arc<ProfileCurve>) -> Result<WhField> {
    for r in [-profile.r_b(), profile.r_b()] {
        let v = h.jet(r)?.v;
        if v.abs() > BOUNDARY_TOL {
            return Err(Error::BoundaryViolation { value: v });
        }
    }
    Ok(WhField { h, profile })
}

impl WhField {
    /// `(h, ḣ, ḧ, q, q̇)` with `q = ḣ + h ċ1/c1`.
    fn radial(&self, r: f64) -> Result<[f64; 4]> {
        let p = self.profile.point(r)?;
        let h = self.h.jet(r)?;
        let l = p.log_slope();
        let dl = (p.ddc1 * p.c1 - p.dc1 * p.dc1) / (p.c1 * p.c1);
        Ok([h.v, h.d1, h.d1 + h.v * l, h.d2 + h.d1 * l + h.v * dl])
    }

    fn at(radial: [f64; 4], theta: f64) -> FieldJet {
        let [h, dh, q, dq] = radial;
        let (s, c) = theta.sin_cos();
        FieldJet {
            w1: h * s,
            w2: q * c,
            w1_r: dh * s,
            w1_t: h * c,
            w1_tt: -h * s,
            w2_r: dq * c,
            w2_t: -q * s,
            w2_tt: -q * c,
        }
    }
}

impl VectorField for WhField {
    fn components(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        let j = Self::at(self.radial(r)?, theta);
        Ok([j.w1, j.w2])
    }

    fn jet(&self, r: f64, theta: f64) -> Result<Option<FieldJet>> {
        Ok(Some(Self::at(self.radial(r)?, theta)))
    }

    fn ring(&self, r: f64, thetas: &[f64]) -> Result<Option<Vec<FieldJet>>> {
        let radial = self.radial(r)?;
        Ok(Some(thetas.iter().map(|&t| Self::at(radial, t)).collect()))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.h.breakpoints()
    }
}

/// Partial derivatives of a stream potential `φ(r, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PotentialJet {
    pub p: f64,
    pub p_r: f64,
    pub p_t: f64,
    pub p_rr: f64,
    pub p_rt: f64,
    pub p_tt: f64,
    pub p_rtt: f64,
    pub p_ttt: f64,
}

impl PotentialJet {
    fn add_assign(&mut self, o: PotentialJet) {
        self.p += o.p;
        self.p_r += o.p_r;
        self.p_t += o.p_t;
        self.p_rr += o.p_rr;
        self.p_rt += o.p_rt;
        self.p_tt += o.p_tt;
        self.p_rtt += o.p_rtt;
        self.p_ttt += o.p_ttt;
    }
}

pub trait StreamPotential: Send + Sync {
    fn jet(&self, r: f64, theta: f64) -> Result<PotentialJet>;

    fn ring(&self, r: f64, thetas: &[f64]) -> Result<Vec<PotentialJet>> {
        thetas.iter().map(|&t| self.jet(r, t)).collect()
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// One Fourier mode `A(r) cos(kϑ) + B(r) sin(kϑ)` with `ϑ = θ + θ0`.
#[derive(Debug, Clone)]
pub struct FourierMode {
    pub k: u32,
    pub cos: Option<SharedRadial>,
    pub sin: Option<SharedRadial>,
}

#[derive(Debug, Clone)]
pub struct FourierPotential {
    pub modes: Vec<FourierMode>,
    pub phase: f64,
}

impl FourierPotential {
    pub fn new(modes: Vec<FourierMode>) -> Self {
        Self { modes, phase: 0.0 }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    /// Modes whose radial coefficients are `(r_b² − r²) · poly(r)`, so that
    /// the potential is flat on the boundary. Each entry is
    /// `(k, cos polynomial, sin polynomial)` in ascending powers.
    pub fn vanishing_at_boundary(r_b: f64, modes: &[(u32, Vec<f64>, Vec<f64>)]) -> Self {
        let bump = Polynomial::new(vec![r_b * r_b, 0.0, -1.0]);
        let wrap = |c: &Vec<f64>| -> Option<SharedRadial> {
            if c.is_empty() {
                None
            } else {
                Some(Arc::new(bump.mul(&Polynomial::new(c.clone()))))
            }
        };
        Self::new(
            modes
                .iter()
                .map(|(k, a, b)| FourierMode {
                    k: *k,
                    cos: wrap(a),
                    sin: wrap(b),
                })
                .collect(),
        )
    }

    fn radial_jets(&self, r: f64) -> Result<Vec<(f64, Jet, Jet)>> {
        self.modes
            .iter()
            .map(|m| {
                let a = m
                    .cos
                    .as_ref()
                    .map(|f| f.jet(r))
                    .transpose()?
                    .unwrap_or_default();
                let b = m
                    .sin
                    .as_ref()
                    .map(|f| f.jet(r))
                    .transpose()?
                    .unwrap_or_default();
                Ok((m.k as f64, a, b))
            })
            .collect()
    }

    fn combine(&self, radial: &[(f64, Jet, Jet)], theta: f64) -> PotentialJet {
        let mut out = PotentialJet::default();
        for &(k, a, b) in radial {
            let (s, c) = (k * (theta + self.phase)).sin_cos();
            let k2 = k * k;
            out.add_assign(PotentialJet {
                p: a.v * c + b.v * s,
                p_r: a.d1 * c + b.d1 * s,
                p_t: k * (-a.v * s + b.v * c),
                p_rr: a.d2 * c + b.d2 * s,
                p_rt: k * (-a.d1 * s + b.d1 * c),
                p_tt: -k2 * (a.v * c + b.v * s),
                p_rtt: -k2 * (a.d1 * c + b.d1 * s),
                p_ttt: k2 * k * (a.v * s - b.v * c),
            });
        }
        out
    }
}

impl StreamPotential for FourierPotential {
    fn jet(&self, r: f64, theta: f64) -> Result<PotentialJet> {
        Ok(self.combine(&self.radial_jets(r)?, theta))
    }

    fn ring(&self, r: f64, thetas: &[f64]) -> Result<Vec<PotentialJet>> {
        let radial = self.radial_jets(r)?;
        Ok(thetas.iter().map(|&t| self.combine(&radial, t)).collect())
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .modes
            .iter()
            .flat_map(|m| {
                m.cos
                    .iter()
                    .chain(m.sin.iter())
                    .flat_map(|f| f.breakpoints())
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// The potential `−c1 h cosθ` whose `⋆grad` is `W_h`.
pub fn wh_potential(h: PerturbationH, profile: Arc<ProfileCurve>) -> FourierPotential {
    let c1: SharedRadial = Arc::new(ProfileC1 { profile });
    let a: SharedRadial = Arc::new(Scaled(-1.0, Arc::new(Product(c1, Arc::new(h)))));
    FourierPotential::new(vec![FourierMode {
        k: 1,
        cos: Some(a),
        sin: None,
    }])
}

/// A radial potential `φ(r)`.
pub fn radial_potential(phi: SharedRadial) -> FourierPotential {
    FourierPotential::new(vec![FourierMode {
        k: 0,
        cos: Some(phi),
        sin: Some(Arc::new(Constant(0.0))),
    }])
}

/// `W = ⋆grad φ = (∂θφ / c1) ∂r − (∂rφ / c1) ∂θ`.
#[derive(Clone)]
pub struct StreamField {
    pub potential: Arc<dyn StreamPotential>,
    pub profile: Arc<ProfileCurve>,
}

pub fn divfree_from_stream(
    potential: Arc<dyn StreamPotential>,
    profile: Arc<ProfileCurve>,
) -> Result<StreamField> {
    let thetas = periodic_nodes(32);
    for r in [-profile.r_b(), profile.r_b()] {
        for (j, t) in potential.ring(r, &thetas)?.iter().zip(&thetas) {
            if j.p_t.abs() > TANGENCY_TOL {
                return Err(Error::TangencyViolation {
                    r,
                    theta: *t,
                    value: j.p_t,
                });
            }
        }
    }
    Ok(StreamField { potential, profile })
}

impl StreamField {
    fn convert(c1: f64, dc1: f64, j: &PotentialJet) -> FieldJet {
        let ic = 1.0 / c1;
        let l = dc1 * ic * ic;
        FieldJet {
            w1: j.p_t * ic,
            w2: -j.p_r * ic,
            w1_r: j.p_rt * ic - j.p_t * l,
            w1_t: j.p_tt * ic,
            w1_tt: j.p_ttt * ic,
            w2_r: -j.p_rr * ic + j.p_r * l,
            w2_t: -j.p_rt * ic,
            w2_tt: -j.p_rtt * ic,
        }
    }
}

impl VectorField for StreamField {
    fn components(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        let j = self.jet(r, theta)?.expect("stream fields are analytic");
        Ok([j.w1, j.w2])
    }

    fn jet(&self, r: f64, theta: f64) -> Result<Option<FieldJet>> {
        let p = self.profile.point(r)?;
        Ok(Some(Self::convert(
            p.c1,
            p.dc1,
            &self.potential.jet(r, theta)?,
        )))
    }

    fn ring(&self, r: f64, thetas: &[f64]) -> Result<Option<Vec<FieldJet>>> {
        let p = self.profile.point(r)?;
        let jets = self.potential.ring(r, thetas)?;
        Ok(Some(
            jets.iter().map(|j| Self::convert(p.c1, p.dc1, j)).collect(),
        ))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.potential.breakpoints()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MCMethod {
    #[serde(rename = "formula-1d")]
    Formula1d,
    #[serde(rename = "reduced-2d")]
    Reduced2d,
    DirectGeometric,
}

impl MCMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MCMethod::Formula1d => "formula-1d",
            MCMethod::Reduced2d => "reduced-2d",
            MCMethod::DirectGeometric => "direct-geometric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub value: f64,
    pub method: MCMethod,
    pub error_estimate: f64,
    pub n_nodes: usize,
    /// `|value| > 10 × error_estimate`.
    pub meaningful: bool,
    /// Radial integrand samples `(r, ∫ integrand dθ)`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub integrand: Option<Vec<[f64; 2]>>,
}

impl MCResult {
    fn new(value: f64, error: f64, method: MCMethod, n_nodes: usize) -> Self {
        Self {
            value,
            method,
            error_estimate: error,
            n_nodes,
            meaningful: value.abs() > 10.0 * error,
            integrand: None,
        }
    }

    pub fn integrand_csv(&self) -> Option<String> {
        let rows = self.integrand.as_ref()?;
        let mut out = String::from("r,integrand\n");
        for [r, v] in rows {
            writeln!(out, "{r:.16e},{v:.16e}").expect("writing to a String cannot fail");
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCOptions {
    pub quadrature: QuadratureOptions,
    pub theta_nodes: usize,
    /// Number of radial integrand samples to keep (0 keeps none).
    pub integrand_samples: usize,
}

impl Default for MCOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureOptions::default(),
            theta_nodes: 256,
            integrand_samples: 0,
        }
    }
}

fn sample_integrand<G>(profile: &ProfileCurve, n: usize, mut g: G) -> Result<Option<Vec<[f64; 2]>>>
where
    G: FnMut(f64) -> Result<f64>,
{
    if n < 2 {
        return Ok(None);
    }
    let mut rows = Vec::with_capacity(n);
    for r in profile.grid(n) {
        rows.push([r, g(r)?]);
    }
    Ok(Some(rows))
}

fn merged_breakpoints(parts: &[Vec<f64>]) -> Vec<f64> {
    let mut v: Vec<f64> = parts.iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `π ∫ F² c1 (h² ε² − c1² ḣ²) dr` over `[-r_b, r_b]`.
pub fn mc_formula_wh(
    f: &dyn RadialFn,
    h: &PerturbationH,
    profile: &ProfileCurve,
    opts: &MCOptions,
) -> Result<MCResult> {
    let integrand = |r: f64| -> Result<f64> {
        let p = profile.point(r)?;
        let e2 = clamp_radicand(r, p.epsilon_radicand())?;
        let fv = f.value(r)?;
        let hj = h.jet(r)?;
        Ok(PI * fv * fv * p.c1 * (hj.v * hj.v * e2 - p.c1 * p.c1 * hj.d1 * hj.d1))
    };
    let rb = profile.r_b();
    let bps = merged_breakpoints(&[f.breakpoints(), h.breakpoints()]);
    let mut err = None;
    let res = integrate_with_aux(
        |r| match integrand(r) {
            Ok(v) => (v, 0.0),
            Err(e) => {
                err.get_or_insert(e);
                (0.0, 0.0)
            }
        },
        -rb,
        rb,
        &bps,
        &opts.quadrature,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let res = res?;
    let mut out = MCResult::new(res.value, res.error, MCMethod::Formula1d, res.evaluations);
    out.integrand = sample_integrand(profile, opts.integrand_samples, integrand)?;
    Ok(out)
}

/// Spectral θ-differentiation on the uniform periodic grid.
struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// First and second derivatives of real periodic samples.
    fn derivatives(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let mut d1 = buf.clone();
        let mut d2 = buf;
        for j in 0..n {
            let k = if j <= n / 2 {
                j as f64
            } else {
                j as f64 - n as f64
            };
            let nyquist = n.is_multiple_of(2) && j == n / 2;
            d1[j] = if nyquist {
                Complex::new(0.0, 0.0)
            } else {
                d1[j] * Complex::new(0.0, k)
            };
            d2[j] *= -k * k;
        }
        self.inverse.process(&mut d1);
        self.inverse.process(&mut d2);
        let scale = 1.0 / n as f64;
        (
            d1.iter().map(|c| c.re * scale).collect(),
            d2.iter().map(|c| c.re * scale).collect(),
        )
    }
}

const FD_STEP_R: f64 = 1e-3;

/// Jets of `W` on the ring `r = const`: analytic when the field provides
/// them, otherwise spectral in θ and 6th-order differences in `r`.
fn ring_jets(
    w: &dyn VectorField,
    profile: &ProfileCurve,
    r: f64,
    thetas: &[f64],
    spectral: &Spectral,
    need_r: bool,
) -> Result<Vec<FieldJet>> {
    if let Some(j) = w.ring(r, thetas)? {
        return Ok(j);
    }
    let mut w1 = Vec::with_capacity(thetas.len());
    let mut w2 = Vec::with_capacity(thetas.len());
    for &t in thetas {
        let c = w.components(r, t)?;
        w1.push(c[0]);
        w2.push(c[1]);
    }
    let (w1_t, w1_tt) = spectral.derivatives(&w1);
    let (w2_t, w2_tt) = spectral.derivatives(&w2);
    let rb = profile.r_b();
    let mut out = Vec::with_capacity(thetas.len());
    for (j, &t) in thetas.iter().enumerate() {
        let (mut w1_r, mut w2_r) = (0.0, 0.0);
        if need_r {
            let mut err = None;
            let mut comp = |x: f64, i: usize| match w.components(x, t) {
                Ok(c) => c[i],
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
            w1_r = derivative_in_interval(|x| comp(x, 0), r, FD_STEP_R.min(rb / 8.0), -rb, rb);
            w2_r = derivative_in_interval(|x| comp(x, 1), r, FD_STEP_R.min(rb / 8.0), -rb, rb);
            if let Some(e) = err {
                return Err(e);
            }
        }
        out.push(FieldJet {
            w1: w1[j],
            w2: w2[j],
            w1_r,
            w1_t: w1_t[j],
            w1_tt: w1_tt[j],
            w2_r,
            w2_t: w2_t[j],
            w2_tt: w2_tt[j],
        });
    }
    Ok(out)
}

/// Rejects fields that are not tangent at `±r_b` or not divergence-free.
pub fn check_admissible(w: &dyn VectorField, profile: &ProfileCurve) -> Result<()> {
    let rb = profile.r_b();
    let thetas = periodic_nodes(16);
    let mut scale: f64 = 1.0;
    for r in profile.grid(9) {
        for &t in &thetas {
            let c = w.components(r, t)?;
            scale = scale.max(c[0].abs()).max(c[1].abs());
        }
    }
    for r in [-rb, rb] {
        for &t in &thetas {
            let v = w.components(r, t)?[0];
            if v.abs() > TANGENCY_TOL * scale {
                return Err(Error::TangencyViolation {
                    r,
                    theta: t,
                    value: v,
                });
            }
        }
    }
    for r in profile.grid(7) {
        for &t in thetas.iter().step_by(2) {
            let p = profile.point(r)?;
            let (w1, w1_r, w2_t) = divergence_partials(w, profile, r, t)?;
            let d = w1_r + p.log_slope() * w1 + w2_t;
            if d.abs() > DIVERGENCE_TOL * scale {
                return Err(Error::NotDivergenceFree {
                    r,
                    theta: t,
                    value: d,
                });
            }
        }
    }
    Ok(())
}

/// Trapezoid sums of `g` over the full ring and over its even-indexed half.
fn ring_sums(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let full: f64 = values.iter().sum::<f64>() * 2.0 * PI / n as f64;
    let half: f64 = values.iter().step_by(2).sum::<f64>() * 4.0 * PI / n as f64;
    (full, half)
}

fn integrate_rings<G>(
    profile: &ProfileCurve,
    bps: &[f64],
    opts: &MCOptions,
    method: MCMethod,
    ring: G,
) -> Result<MCResult>
where
    G: Fn(f64) -> Result<(f64, f64)>,
{
    if opts.theta_nodes < 8 || !opts.theta_nodes.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "theta_nodes = {} must be even and ≥ 8",
            opts.theta_nodes
        )));
    }
    let rb = profile.r_b();
    let mut err = None;
    let res = integrate_with_aux(
        |r| match ring(r) {
            Ok((full, half)) => (full, (full - half).abs()),
            Err(e) => {
                err.get_or_insert(e);
                (0.0, 0.0)
            }
        },
        -rb,
        rb,
        bps,
        &opts.quadrature,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let res = res?;
    let mut out = MCResult::new(
        res.value,
        res.error + res.aux.abs(),
        method,
        res.evaluations * opts.theta_nodes,
    );
    out.integrand = sample_integrand(profile, opts.integrand_samples, |r| Ok(ring(r)?.0))?;
    Ok(out)
}

/// `∫∫ F² c1 (−(∂θW¹)² − c1² (∂rW¹)² + (ċ1² − c1 c̈1) (W¹)²) dθ dr`.
pub fn mc_reduced(
    f: &dyn RadialFn,
    w: &dyn VectorField,
    profile: &ProfileCurve,
    opts: &MCOptions,
) -> Result<MCResult> {
    check_admissible(w, profile)?;
    let thetas = periodic_nodes(opts.theta_nodes);
    let spectral = Spectral::new(opts.theta_nodes);
    let bps = merged_breakpoints(&[f.breakpoints(), w.breakpoints()]);
    integrate_rings(profile, &bps, opts, MCMethod::Reduced2d, |r| {
        let p = profile.point(r)?;
        let fv = f.value(r)?;
        let kappa = p.dc1 * p.dc1 - p.c1 * p.ddc1;
        let jets = ring_jets(w, profile, r, &thetas, &spectral, true)?;
        let vals: Vec<f64> = jets
            .iter()
            .map(|j| -j.w1_t * j.w1_t - p.c1 * p.c1 * j.w1_r * j.w1_r + kappa * j.w1 * j.w1)
            .collect();
        let (full, half) = ring_sums(&vals);
        let weight = fv * fv * p.c1;
        Ok((weight * full, weight * half))
    })
}

/// Definition-level evaluation: Lie bracket `B = [Z, W]`, covariant
/// derivatives from the Levi-Civita coefficients, pairing with
/// `g = diag(1, c1²)` and integration against `μ = c1 dr dθ`.
pub fn mc_direct(
    z: &ZonalField,
    w: &dyn VectorField,
    profile: &ProfileCurve,
    opts: &MCOptions,
) -> Result<MCResult> {
    let thetas = periodic_nodes(opts.theta_nodes);
    let spectral = Spectral::new(opts.theta_nodes);
    let bps = merged_breakpoints(&[z.breakpoints(), w.breakpoints()]);
    integrate_rings(profile, &bps, opts, MCMethod::DirectGeometric, |r| {
        let p = profile.point(r)?;
        let gamma = connection_at(&p);
        let (g, hc) = (gamma.gamma_r_thetatheta, gamma.gamma_theta_rtheta);
        let fz = z.profile_fn.jet(r)?;
        let (f, df) = (fz.v, fz.d1);
        let jets = ring_jets(w, profile, r, &thetas, &spectral, false)?;
        let vals: Vec<f64> = jets
            .iter()
            .map(|j| {
                let b1 = f * j.w1_t;
                let b2 = f * j.w2_t - j.w1 * df;
                let db1 = f * j.w1_tt;
                let db2 = f * j.w2_tt - j.w1_t * df;
                let x1 = f * (db1 + g * b2) + g * f * b2;
                let x2 = f * (db2 + hc * b1) + b1 * (df + hc * f);
                (x1 * j.w1 + p.c1 * p.c1 * x2 * j.w2) * p.c1
            })
            .collect();
        Ok(ring_sums(&vals))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{
        div_field, zonal_from_f, FnField, Gaussian, Opaque, PowerOfC1, ScaledField,
    };
    use crate::geometry::{solve_profile, ProfileSettings, SurfaceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(a: f64, b: f64) -> Arc<ProfileCurve> {
        Arc::new(
            solve_profile(SurfaceSpec::new(a, b).unwrap(), &ProfileSettings::default()).unwrap(),
        )
    }

    fn close(x: f64, y: f64, rel: f64) -> bool {
        (x - y).abs() <= 1e-8f64.max(rel * x.abs().max(y.abs()))
    }

    #[test]
    fn plateau_shape() {
        let p = profile(2.0, 0.5);
        let h = PerturbationH::plateau(&p, 0.3).unwrap();
        let rb = p.r_b();
        assert_eq!(h.jet(rb).unwrap().v, 0.0);
        assert_eq!(h.jet(-rb).unwrap().v, 0.0);
        assert_eq!(h.jet(0.0).unwrap(), Jet::constant(1.0));
        assert_eq!(h.jet(0.6 * rb).unwrap().d1, 0.0);
        let eps = 1e-6;
        for r in [0.75 * rb, -0.9 * rb, 0.95 * rb] {
            let j = h.jet(r).unwrap();
            assert!(
                ((h.jet(r + eps).unwrap().v - h.jet(r - eps).unwrap().v) / (2.0 * eps) - j.d1)
                    .abs()
                    < 1e-6
            );
            assert!(
                ((h.jet(r + eps).unwrap().d1 - h.jet(r - eps).unwrap().d1) / (2.0 * eps) - j.d2)
                    .abs()
                    < 1e-5
            );
            assert!(
                ((h.jet(r + eps).unwrap().d2 - h.jet(r - eps).unwrap().d2) / (2.0 * eps) - j.d3)
                    .abs()
                    < 1e-3
            );
        }
        assert!(PerturbationH::plateau(&p, 1.0).is_err());
        let bad: SharedRadial = Arc::new(Constant(1.0));
        assert!(matches!(
            PerturbationH::custom(bad, &p),
            Err(Error::BoundaryViolation { .. })
        ));
    }

    #[test]
    fn wh_is_divergence_free_and_tangent() {
        let p = profile(2.0, 0.5);
        let w = build_wh(PerturbationH::plateau(&p, 0.4).unwrap(), p.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r = rng.gen_range(-p.r_b()..p.r_b());
            let t = rng.gen_range(-PI..PI);
            assert!(div_field(&w, &p, r, t).unwrap().abs() < 1e-12);
            assert!(div_field(&Opaque(&w), &p, r, t).unwrap().abs() < 1e-7);
        }
        for t in periodic_nodes(8) {
            assert_eq!(w.components(p.r_b(), t).unwrap()[0], 0.0);
        }
        let z = build_wh(PerturbationH::zero(&p), p.clone()).unwrap();
        assert_eq!(z.components(0.2, 0.3).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn wh_matches_stream_potential() {
        let p = profile(1.5, 0.7);
        let h = PerturbationH::cosine(&p).unwrap();
        let w = build_wh(h.clone(), p.clone()).unwrap();
        let s = divfree_from_stream(Arc::new(wh_potential(h, p.clone())), p.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let r = rng.gen_range(-p.r_b()..p.r_b());
            let t = rng.gen_range(-PI..PI);
            let a = w.jet(r, t).unwrap().unwrap();
            let b = s.jet(r, t).unwrap().unwrap();
            for (x, y) in [
                (a.w1, b.w1),
                (a.w2, b.w2),
                (a.w1_r, b.w1_r),
                (a.w1_t, b.w1_t),
                (a.w1_tt, b.w1_tt),
                (a.w2_r, b.w2_r),
                (a.w2_t, b.w2_t),
                (a.w2_tt, b.w2_tt),
            ] {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    fn random_potential(rng: &mut ChaCha8Rng, rb: f64) -> FourierPotential {
        let modes: Vec<(u32, Vec<f64>, Vec<f64>)> = (1..=3)
            .map(|k| {
                let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (k, c, s)
            })
            .collect();
        FourierPotential::vanishing_at_boundary(rb, &modes)
    }

    #[test]
    fn stream_fields() {
        let p = profile(2.0, 0.5);
        let radial = divfree_from_stream(
            Arc::new(radial_potential(Arc::new(Gaussian {
                delta: 0.0,
                kappa: 1.0,
            }))),
            p.clone(),
        )
        .unwrap();
        assert_eq!(radial.components(0.1, 0.5).unwrap()[0], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s =
            divfree_from_stream(Arc::new(random_potential(&mut rng, p.r_b())), p.clone()).unwrap();
        for _ in 0..50 {
            let r = rng.gen_range(-p.r_b()..p.r_b());
            let t = rng.gen_range(-PI..PI);
            assert!(div_field(&s, &p, r, t).unwrap().abs() < 1e-8);
        }
        let tilted = FourierPotential::new(vec![FourierMode {
            k: 1,
            cos: Some(Arc::new(Constant(1.0))),
            sin: None,
        }]);
        assert!(matches!(
            divfree_from_stream(Arc::new(tilted), p.clone()),
            Err(Error::TangencyViolation { .. })
        ));
    }

    #[test]
    fn spectral_derivatives() {
        let s = Spectral::new(64);
        let th = periodic_nodes(64);
        let v: Vec<f64> = th.iter().map(|t| (3.0 * t).sin() + 0.5 * t.cos()).collect();
        let (d1, d2) = s.derivatives(&v);
        for (j, t) in th.iter().enumerate() {
            assert!((d1[j] - (3.0 * (3.0 * t).cos() - 0.5 * t.sin())).abs() < 1e-12);
            assert!((d2[j] - (-9.0 * (3.0 * t).sin() - 0.5 * t.cos())).abs() < 1e-11);
        }
    }

    #[test]
    fn three_methods_agree_on_wh() {
        let opts = MCOptions::default();
        for (a, b) in [(2.0, 0.5), (1.5, 0.3)] {
            let p = profile(a, b);
            let f: SharedRadial = Arc::new(PowerOfC1 {
                profile: p.clone(),
                delta: 1e-2,
                p: 6.0,
            });
            let z = zonal_from_f(f, p.clone());
            for h in [
                PerturbationH::cosine(&p).unwrap(),
                PerturbationH::plateau(&p, 0.35).unwrap(),
            ] {
                let w = build_wh(h.clone(), p.clone()).unwrap();
                let m1 = mc_formula_wh(z.profile_fn.as_ref(), &h, &p, &opts).unwrap();
                let m2 = mc_reduced(z.profile_fn.as_ref(), &w, &p, &opts).unwrap();
                let m3 = mc_direct(&z, &w, &p, &opts).unwrap();
                assert!(close(m1.value, m2.value, 1e-6), "{} {}", m1.value, m2.value);
                assert!(close(m2.value, m3.value, 1e-5), "{} {}", m2.value, m3.value);
                assert!(m1.meaningful && m2.meaningful && m3.meaningful);
            }
        }
    }

    #[test]
    fn constant_profile_cosine_h_example() {
        let p = profile(2.0, 0.5);
        let one: SharedRadial = Arc::new(Constant(1.0));
        let h = PerturbationH::cosine(&p).unwrap();
        let w = build_wh(h.clone(), p.clone()).unwrap();
        let opts = MCOptions::default();
        let m1 = mc_formula_wh(one.as_ref(), &h, &p, &opts).unwrap();
        let m2 = mc_reduced(one.as_ref(), &w, &p, &opts).unwrap();
        let m3 = mc_direct(&ZonalField::new(one), &w, &p, &opts).unwrap();
        assert!(close(m1.value, m2.value, 1e-6));
        assert!(close(m1.value, m3.value, 1e-5));
    }

    #[test]
    fn random_stream_fields_reduced_vs_direct() {
        let p = profile(2.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: SharedRadial = Arc::new(Gaussian {
            delta: 0.1,
            kappa: 3.0,
        });
        let z = zonal_from_f(f, p.clone());
        let opts = MCOptions::default();
        for _ in 0..3 {
            let s = divfree_from_stream(Arc::new(random_potential(&mut rng, p.r_b())), p.clone())
                .unwrap();
            let m2 = mc_reduced(z.profile_fn.as_ref(), &s, &p, &opts).unwrap();
            let m3 = mc_direct(&z, &s, &p, &opts).unwrap();
            assert!(close(m2.value, m3.value, 1e-5), "{} {}", m2.value, m3.value);
        }
    }

    #[test]
    fn numerical_paths_match_analytic() {
        let p = profile(2.0, 0.5);
        let one: SharedRadial = Arc::new(Gaussian {
            delta: 0.2,
            kappa: 2.0,
        });
        let z = ZonalField::new(one.clone());
        let w = build_wh(PerturbationH::cosine(&p).unwrap(), p.clone()).unwrap();
        let opts = MCOptions {
            theta_nodes: 32,
            ..MCOptions::default()
        };
        let a = mc_reduced(one.as_ref(), &w, &p, &opts).unwrap();
        let b = mc_reduced(one.as_ref(), &Opaque(&w), &p, &opts).unwrap();
        assert!(close(a.value, b.value, 1e-7), "{} {}", a.value, b.value);
        let c = mc_direct(&z, &w, &p, &opts).unwrap();
        let d = mc_direct(&z, &Opaque(&w), &p, &opts).unwrap();
        assert!(close(c.value, d.value, 1e-10), "{} {}", c.value, d.value);
    }

    #[test]
    fn trivial_cases() {
        let p = profile(2.0, 0.5);
        let opts = MCOptions::default();
        let f: SharedRadial = Arc::new(Gaussian {
            delta: 0.1,
            kappa: 3.0,
        });
        let z = zonal_from_f(f.clone(), p.clone());
        let zero = PerturbationH::zero(&p);
        assert_eq!(
            mc_formula_wh(f.as_ref(), &zero, &p, &opts).unwrap().value,
            0.0
        );
        assert_eq!(mc_direct(&z, &z, &p, &opts).unwrap().value, 0.0);
        assert_eq!(
            mc_reduced(z.profile_fn.as_ref(), &z, &p, &opts)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn sphere_formula_is_nonpositive() {
        let p = profile(1.0, 0.5);
        let f: SharedRadial = Arc::new(Constant(1.0));
        let opts = MCOptions::default();
        for w in [0.1, 0.5, 0.9] {
            let h = PerturbationH::plateau(&p, w).unwrap();
            assert!(mc_formula_wh(f.as_ref(), &h, &p, &opts).unwrap().value < 0.0);
        }
    }

    #[test]
    fn reduced_refuses_inadmissible_fields() {
        let p = profile(2.0, 0.5);
        let f: SharedRadial = Arc::new(Constant(1.0));
        let opts = MCOptions::default();
        let radial = FnField::new(|_r, _t| [1.0, 0.0]);
        assert!(matches!(
            mc_reduced(f.as_ref(), &radial, &p, &opts),
            Err(Error::TangencyViolation { .. })
        ));
        let rb = p.r_b();
        let squeezed = FnField::new(move |r, t| [(rb * rb - r * r) * t.sin(), 0.0]);
        assert!(matches!(
            mc_reduced(f.as_ref(), &squeezed, &p, &opts),
            Err(Error::NotDivergenceFree { .. })
        ));
    }

    #[test]
    fn scaling_properties() {
        let p = profile(2.0, 0.5);
        let f: SharedRadial = Arc::new(Gaussian {
            delta: 0.1,
            kappa: 3.0,
        });
        let z = zonal_from_f(f, p.clone());
        let w = build_wh(PerturbationH::plateau(&p, 0.5).unwrap(), p.clone()).unwrap();
        let opts = MCOptions::default();
        let base = mc_direct(&z, &w, &p, &opts).unwrap().value;
        for c in [2.0, -1.0] {
            let cw = ScaledField {
                factor: c,
                inner: &w,
            };
            assert!(close(
                mc_direct(&z, &cw, &p, &opts).unwrap().value,
                c * c * base,
                1e-10
            ));
            assert!(close(
                mc_direct(&z.scaled(c), &w, &p, &opts).unwrap().value,
                c * c * base,
                1e-10
            ));
        }
    }

    #[test]
    fn rotation_invariance() {
        let p = profile(1.5, 0.5);
        let f: SharedRadial = Arc::new(Gaussian {
            delta: 0.1,
            kappa: 2.0,
        });
        let z = zonal_from_f(f, p.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pot = random_potential(&mut rng, p.r_b());
        let opts = MCOptions::default();
        let s0 = divfree_from_stream(Arc::new(pot.clone()), p.clone()).unwrap();
        let s1 = divfree_from_stream(Arc::new(pot.with_phase(0.7)), p.clone()).unwrap();
        let a = mc_direct(&z, &s0, &p, &opts).unwrap().value;
        let b = mc_direct(&z, &s1, &p, &opts).unwrap().value;
        assert!(close(a, b, 1e-9));
        let a = mc_reduced(z.profile_fn.as_ref(), &s0, &p, &opts)
            .unwrap()
            .value;
        let b = mc_reduced(z.profile_fn.as_ref(), &s1, &p, &opts)
            .unwrap()
            .value;
        assert!(close(a, b, 1e-9));
    }

    #[test]
    fn integrand_export() {
        let p = profile(2.0, 0.5);
        let f: SharedRadial = Arc::new(Constant(1.0));
        let h = PerturbationH::cosine(&p).unwrap();
        let opts = MCOptions {
            integrand_samples: 5,
            ..MCOptions::default()
        };
        let m = mc_formula_wh(f.as_ref(), &h, &p, &opts).unwrap();
        let csv = m.integrand_csv().unwrap();
        assert_eq!(csv.lines().count(), 6);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"method\":\"formula-1d\""));
    }
}
