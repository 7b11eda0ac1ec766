//! Arnold stability: the first Dirichlet eigenvalue of `−Δ` and the sign
//! conditions on `F'(ψ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{fprime_from_f, RadialFn};
use crate::geometry::ProfileCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    #[default]
    Dirichlet,
    /// Natural boundary condition; the constant mode is excluded.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda1Settings {
    /// Coarse grid size; the fine grid is `2n`.
    pub n: usize,
    pub min_modes: u32,
    pub max_modes: u32,
    pub boundary: BoundaryCondition,
}

impl Default for Lambda1Settings {
    fn default() -> Self {
        Self {
            n: 512,
            min_modes: 4,
            max_modes: 256,
            boundary: BoundaryCondition::Dirichlet,
        }
    }
}

/// First eigenvalue of one Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub mode: u32,
    /// Richardson-extrapolated eigenvalue.
    pub value: f64,
    pub grids: [usize; 2],
    pub coarse: f64,
    pub fine: f64,
}

impl EigenEstimate {
    pub fn error(&self) -> f64 {
        (self.value - self.fine).abs()
    }

    pub fn relative_change(&self) -> f64 {
        ((self.fine - self.coarse) / self.fine).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda1 {
    pub value: f64,
    pub error: f64,
    pub modes: Vec<EigenEstimate>,
}

/// Smallest eigenvalue of `−(c1 φ')' + (m²/c1) φ = λ c1 φ` on `[-r_b, r_b]`
/// with a lumped-mass three-point discretization on `n` intervals.
pub fn sturm_liouville_eigenvalue(
    profile: &ProfileCurve,
    m: u32,
    n: usize,
    bc: BoundaryCondition,
) -> Result<f64> {
    let rb = profile.r_b();
    let h = 2.0 * rb / n as f64;
    let node = |i: usize| -rb + h * i as f64;
    let mut c_node = Vec::with_capacity(n + 1);
    for i in 0..=n {
        c_node.push(profile.point(node(i).clamp(-rb, rb))?.c1);
    }
    let mut c_mid = Vec::with_capacity(n);
    for i in 0..n {
        c_mid.push(profile.point(node(i) + 0.5 * h)?.c1);
    }
    let m2 = (m as f64) * (m as f64);
    let (first, last) = match bc {
        BoundaryCondition::Dirichlet => (1, n - 1),
        BoundaryCondition::Neumann => (0, n),
    };
    let size = last - first + 1;
    let mut diag = Vec::with_capacity(size);
    let mut off = Vec::with_capacity(size.saturating_sub(1));
    let mut mass = Vec::with_capacity(size);
    for i in first..=last {
        let weight = if i == 0 || i == n { 0.5 * h } else { h };
        let left = if i > 0 { c_mid[i - 1] } else { 0.0 };
        let right = if i < n { c_mid[i] } else { 0.0 };
        diag.push((left + right) / h + m2 / c_node[i] * weight);
        mass.push(c_node[i] * weight);
    }
    off.extend(c_mid[first..last].iter().map(|c| -c / h));
    for (k, d) in diag.iter_mut().enumerate() {
        *d /= mass[k];
    }
    for (k, e) in off.iter_mut().enumerate() {
        *e /= (mass[k] * mass[k + 1]).sqrt();
    }
    let index = if bc == BoundaryCondition::Neumann && m == 0 {
        1
    } else {
        0
    };
    tridiagonal_eigenvalue(&diag, &off, index)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, d) in diag.iter().enumerate() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = d - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::MIN_POSITIVE;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `index`-th smallest eigenvalue (0-based) by Sturm bisection.
fn tridiagonal_eigenvalue(diag: &[f64], off: &[f64], index: usize) -> Result<f64> {
    if index >= diag.len() {
        return Err(Error::ConvergenceFailure(format!(
            "eigenvalue {index} requested from a matrix of order {}",
            diag.len()
        )));
    }
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i < off.len() { off[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = (0..diag.len())
        .map(|i| diag[i] - radius(i))
        .fold(f64::INFINITY, f64::min);
    let mut hi = (0..diag.len())
        .map(|i| diag[i] + radius(i))
        .fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::ConvergenceFailure(
            "non-finite matrix entries".into(),
        ));
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    let width = hi - lo;
    if width > 1e-10 * hi.abs().max(1.0) {
        return Err(Error::ConvergenceFailure(format!(
            "bisection bracket width {width}"
        )));
    }
    Ok(0.5 * (lo + hi))
}

/// Mode-`m` eigenvalue on grids `n` and `2n` with Richardson extrapolation.
pub fn lambda1_mode(profile: &ProfileCurve, m: u32, n: usize) -> Result<EigenEstimate> {
    lambda1_mode_with(profile, m, n, BoundaryCondition::Dirichlet)
}

pub fn lambda1_mode_with(
    profile: &ProfileCurve,
    m: u32,
    n: usize,
    bc: BoundaryCondition,
) -> Result<EigenEstimate> {
    if n < 32 {
        return Err(Error::InvalidParameter(format!("grid size {n} < 32")));
    }
    let coarse = sturm_liouville_eigenvalue(profile, m, n, bc)?;
    let fine = sturm_liouville_eigenvalue(profile, m, 2 * n, bc)?;
    Ok(EigenEstimate {
        mode: m,
        value: (4.0 * fine - coarse) / 3.0,
        grids: [n, 2 * n],
        coarse,
        fine,
    })
}

/// `λ1 = min_m λ1(m)`, scanning modes in batches until a mode exceeds the
/// running minimum.
pub fn lambda1(profile: &ProfileCurve) -> Result<Lambda1> {
    lambda1_with(profile, &Lambda1Settings::default())
}

pub fn lambda1_with(profile: &ProfileCurve, settings: &Lambda1Settings) -> Result<Lambda1> {
    let batch = settings.min_modes.max(1);
    let mut modes: Vec<EigenEstimate> = Vec::new();
    let mut next = 0u32;
    loop {
        let end = (next + batch).min(settings.max_modes);
        if next >= end {
            return Err(Error::ConvergenceFailure(format!(
                "mode scan did not terminate within {} modes",
                settings.max_modes
            )));
        }
        let computed: Vec<EigenEstimate> = (next..end)
            .into_par_iter()
            .map(|m| lambda1_mode_with(profile, m, settings.n, settings.boundary))
            .collect::<Result<_>>()?;
        modes.extend(computed);
        next = end;
        let best = modes.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        if modes.last().is_some_and(|e| e.value > best) {
            let arg = modes
                .iter()
                .find(|e| e.value == best)
                .expect("minimum is attained");
            return Ok(Lambda1 {
                value: best,
                error: arg.error(),
                modes,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PositiveBranch,
    NegativeBranch,
    Undetermined,
}

impl Verdict {
    pub fn is_stable(self) -> bool {
        self != Verdict::Undetermined
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::PositiveBranch => "positive-branch",
            Verdict::NegativeBranch => "negative-branch",
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArnoldSettings {
    pub grid: usize,
    pub safety: f64,
    pub lambda: Lambda1Settings,
}

impl Default for ArnoldSettings {
    fn default() -> Self {
        Self {
            grid: 1024,
            safety: 0.05,
            lambda: Lambda1Settings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub a: f64,
    pub b: f64,
    pub grid_points: usize,
    pub fprime_min: f64,
    pub fprime_max: f64,
    pub r_at_min: f64,
    pub r_at_max: f64,
    pub lambda1: f64,
    pub lambda1_error: f64,
    pub safety: f64,
    pub verdict: Verdict,
    /// Signed distance to the nearest admissible branch; positive iff stable.
    pub margin: f64,
    pub modes: Vec<EigenEstimate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conditions: Option<FConditions>,
}

/// Extremes of `F'(ψ) = Df/f` over a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FprimeScan {
    pub min: f64,
    pub max: f64,
    pub r_at_min: f64,
    pub r_at_max: f64,
}

pub fn scan_fprime(f: &dyn RadialFn, profile: &ProfileCurve, grid: usize) -> Result<FprimeScan> {
    let mut s = FprimeScan {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        r_at_min: 0.0,
        r_at_max: 0.0,
    };
    for r in profile.grid(grid) {
        let v = fprime_from_f(f, profile, r)?;
        if v < s.min {
            s.min = v;
            s.r_at_min = r;
        }
        if v > s.max {
            s.max = v;
            s.r_at_max = r;
        }
    }
    Ok(s)
}

/// Classifies `fprime_min`, `fprime_max` against `(−λ1(1 − safety), 0)` and `(0, ∞)`.
pub fn classify(fprime_min: f64, fprime_max: f64, lambda1: f64, safety: f64) -> (Verdict, f64) {
    let bound = lambda1 * (1.0 - safety);
    let positive = fprime_min;
    let negative = (-fprime_max).min(fprime_min + bound);
    let verdict = if positive > 0.0 {
        Verdict::PositiveBranch
    } else if negative > 0.0 {
        Verdict::NegativeBranch
    } else {
        Verdict::Undetermined
    };
    (verdict, positive.max(negative))
}

pub fn check_arnold(f: &dyn RadialFn, profile: &ProfileCurve) -> Result<StabilityReport> {
    let settings = ArnoldSettings::default();
    let lambda = lambda1_with(profile, &settings.lambda)?;
    check_arnold_with(f, profile, &lambda, &settings)
}

/// As [`check_arnold`] with a precomputed eigenvalue.
pub fn check_arnold_with(
    f: &dyn RadialFn,
    profile: &ProfileCurve,
    lambda: &Lambda1,
    settings: &ArnoldSettings,
) -> Result<StabilityReport> {
    let scan = scan_fprime(f, profile, settings.grid)?;
    let (verdict, margin) = classify(scan.min, scan.max, lambda.value, settings.safety);
    let spec = profile.spec();
    Ok(StabilityReport {
        a: spec.a,
        b: spec.b,
        grid_points: settings.grid,
        fprime_min: scan.min,
        fprime_max: scan.max,
        r_at_min: scan.r_at_min,
        r_at_max: scan.r_at_max,
        lambda1: lambda.value,
        lambda1_error: lambda.error,
        safety: settings.safety,
        verdict,
        margin,
        modes: lambda.modes.clone(),
        conditions: None,
    })
}

pub const MONOTONE_SLACK: f64 = 1e-12;
pub const EVENNESS_TOL: f64 = 1e-8;
pub const CONDITION_GRID: usize = 1024;

/// The five shape conditions on `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FConditions {
    pub positive: bool,
    pub even: bool,
    pub decreasing: bool,
    pub small_at_boundary: bool,
    pub f2_over_c1_4_decreasing: bool,
}

impl FConditions {
    pub fn all(&self) -> bool {
        self.as_array().iter().all(|&c| c)
    }

    pub fn as_array(&self) -> [bool; 5] {
        [
            self.positive,
            self.even,
            self.decreasing,
            self.small_at_boundary,
            self.f2_over_c1_4_decreasing,
        ]
    }
}

pub fn check_f_conditions(
    f: &dyn RadialFn,
    profile: &ProfileCurve,
    rho: f64,
) -> Result<FConditions> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "smallness {rho} not in (0, 1)"
        )));
    }
    let rb = profile.r_b();
    let n = CONDITION_GRID;
    let rs: Vec<f64> = (0..n).map(|i| rb * i as f64 / (n - 1) as f64).collect();
    let mut fp = Vec::with_capacity(n);
    let mut fm = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for &r in &rs {
        let v = f.value(r)?;
        let c1 = profile.point(r)?.c1;
        fp.push(v);
        fm.push(f.value(-r)?);
        g.push(v * v / c1.powi(4));
    }
    let strictly_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0] - MONOTONE_SLACK);
    Ok(FConditions {
        positive: fp.iter().chain(fm.iter()).all(|&v| v > 0.0),
        even: fp
            .iter()
            .zip(&fm)
            .all(|(p, m)| (p - m).abs() <= EVENNESS_TOL),
        decreasing: strictly_decreasing(&fp),
        small_at_boundary: fp[n - 1] <= rho * fp[0] && fm[n - 1] <= rho * fp[0],
        f2_over_c1_4_decreasing: strictly_decreasing(&g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Constant, Gaussian, PowerOfC1};
    use crate::geometry::{solve_profile, ProfileSettings, SurfaceSpec};
    use crate::jet::Jet;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn profile(a: f64, b: f64) -> Arc<ProfileCurve> {
        Arc::new(
            solve_profile(SurfaceSpec::new(a, b).unwrap(), &ProfileSettings::default()).unwrap(),
        )
    }

    #[test]
    fn tridiagonal_eigenvalues() {
        // 1-D Laplacian: 2 - 2cos(kπ/(n+1)).
        let n = 50;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        for k in 0..3 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((tridiagonal_eigenvalue(&diag, &off, k).unwrap() - exact).abs() < 1e-13);
        }
        assert!(tridiagonal_eigenvalue(&diag, &off, n).is_err());
    }

    #[test]
    fn sphere_band_zonal_mode() {
        // On the sphere, m=0 Dirichlet modes of the band |r| < π/6 are
        // Legendre functions; compare with a fine-grid self-check instead.
        let p = profile(1.0, 0.5);
        let e = lambda1_mode(&p, 0, 256).unwrap();
        let f = lambda1_mode(&p, 0, 1024).unwrap();
        assert!((e.value - f.value).abs() < 1e-6 * f.value);
    }

    #[test]
    fn grid_size_floor() {
        let p = profile(2.0, 0.5);
        assert!(matches!(
            lambda1_mode(&p, 0, 16),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn thin_band_matches_flat_cylinder() {
        let p = profile(2.0, 0.05);
        let e = lambda1_mode(&p, 0, 512).unwrap();
        let flat = (PI / (2.0 * p.r_b())).powi(2);
        assert!((e.value / flat - 1.0).abs() < 0.05);
    }

    #[test]
    fn mode_monotonicity_and_convergence() {
        let p = profile(2.0, 0.5);
        let l = lambda1(&p).unwrap();
        assert!(l.modes.len() >= 4);
        for w in l.modes.windows(2) {
            assert!(w[1].value > w[0].value);
        }
        assert!(l.modes[0].relative_change() < 1e-4);
        assert_eq!(l.value, l.modes[0].value);
        assert!(l.value > 0.0 && l.error < 1e-4 * l.value);
    }

    #[test]
    fn neumann_excludes_constant_mode() {
        let p = profile(2.0, 0.5);
        let d = lambda1_mode_with(&p, 0, 256, BoundaryCondition::Dirichlet).unwrap();
        let n = lambda1_mode_with(&p, 0, 256, BoundaryCondition::Neumann).unwrap();
        assert!(n.value > 0.0);
        assert!(n.value < d.value * 4.5);
        let n1 = lambda1_mode_with(&p, 1, 256, BoundaryCondition::Neumann).unwrap();
        assert!(n1.value > 0.0 && n1.value < d.value);
    }

    #[test]
    fn classification() {
        assert_eq!(classify(0.5, 2.0, 10.0, 0.05).0, Verdict::PositiveBranch);
        assert_eq!(classify(-3.0, -1.0, 10.0, 0.05).0, Verdict::NegativeBranch);
        assert_eq!(classify(-9.6, -1.0, 10.0, 0.05).0, Verdict::Undetermined);
        assert_eq!(classify(0.0, 0.0, 10.0, 0.05).0, Verdict::Undetermined);
        assert_eq!(classify(-1.0, 1.0, 10.0, 0.05).0, Verdict::Undetermined);
        let (_, m) = classify(-3.0, -1.0, 10.0, 0.05);
        assert!((m - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_f_is_undetermined() {
        let p = profile(2.0, 0.5);
        let r = check_arnold(&Constant(1.0), &p).unwrap();
        assert_eq!(r.verdict, Verdict::Undetermined);
        assert_eq!(r.fprime_min, 0.0);
        assert_eq!(r.fprime_max, 0.0);
    }

    #[test]
    fn increasing_derivative_gives_positive_branch() {
        #[derive(Debug)]
        struct Cosh;
        impl RadialFn for Cosh {
            fn jet(&self, r: f64) -> Result<Jet> {
                Ok(Jet::new(r.cosh(), r.sinh(), r.cosh(), r.sinh()))
            }
        }
        let p = profile(1.5, 0.7);
        let r = check_arnold(&Cosh, &p).unwrap();
        assert_eq!(r.verdict, Verdict::PositiveBranch);
        assert!(r.margin > 0.0);
    }

    #[test]
    fn mild_gaussian_is_negative_branch() {
        let p = profile(2.0, 0.5);
        let g = Gaussian {
            delta: 0.5,
            kappa: 1.0,
        };
        let r = check_arnold(&g, &p).unwrap();
        assert_eq!(r.verdict, Verdict::NegativeBranch);
        assert!(r.fprime_max < 0.0 && -r.fprime_min < 0.95 * r.lambda1);
    }

    #[test]
    fn conditions_for_power_family() {
        let p = profile(2.0, 0.5);
        let f = PowerOfC1 {
            profile: p.clone(),
            delta: 1e-3,
            p: 16.0,
        };
        let c = check_f_conditions(&f, &p, 0.1).unwrap();
        assert!(c.positive && c.even && c.decreasing && c.f2_over_c1_4_decreasing);
        // f(r_b) = 1e-3 + 0.999 · 0.75⁸ ≈ 0.10101 exceeds 0.1 · f(0).
        assert!(!c.small_at_boundary);
        let c = check_f_conditions(&f, &p, 0.11).unwrap();
        assert!(c.all());
    }

    #[test]
    fn conditions_for_constant_and_odd_perturbation() {
        let p = profile(2.0, 0.5);
        let c = check_f_conditions(&Constant(1.0), &p, 0.1).unwrap();
        assert!(c.positive && c.even && !c.decreasing && !c.f2_over_c1_4_decreasing);
        #[derive(Debug)]
        struct Tilted(Gaussian);
        impl RadialFn for Tilted {
            fn jet(&self, r: f64) -> Result<Jet> {
                Ok(self.0.jet(r)? + Jet::new(1e-3 * r, 1e-3, 0.0, 0.0))
            }
        }
        let t = Tilted(Gaussian {
            delta: 0.01,
            kappa: 5.0,
        });
        assert!(!check_f_conditions(&t, &p, 0.1).unwrap().even);
        assert!(check_f_conditions(&t, &p, 1.5).is_err());
    }
}
