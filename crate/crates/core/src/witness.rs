//! Family-restricted search for a stable zonal flow `u_f` and a bump `h`
//! with `MC_{u_f, W_h} > 0`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{
    Gaussian, PowerOfC1, RadialFn, Scaled, SharedRadial, ZonalField, ZonalProfile,
};
use crate::geometry::{solve_profile, ProfileCurve, ProfileSettings, SurfaceSpec};
use crate::misiolek::{
    build_wh, mc_direct, mc_formula_wh, mc_reduced, HShape, MCOptions, MCResult, PerturbationH,
};
use crate::stability::{
    check_arnold_with, check_f_conditions, lambda1_with, ArnoldSettings, FConditions, Lambda1,
    StabilityReport, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FFamily {
    /// `δ + (1 − δ)(c1/a)^p`
    Power { p: f64, delta: f64 },
    /// `δ + (1 − δ) exp(−κ r²)`
    Gaussian { kappa: f64, delta: f64 },
}

impl FFamily {
    pub fn p_or_kappa(&self) -> f64 {
        match *self {
            FFamily::Power { p, .. } => p,
            FFamily::Gaussian { kappa, .. } => kappa,
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            FFamily::Power { delta, .. } | FFamily::Gaussian { delta, .. } => delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FParams {
    #[serde(flatten)]
    pub family: FFamily,
    pub amplitude: f64,
}

impl FParams {
    pub fn build(&self, profile: Arc<ProfileCurve>) -> SharedRadial {
        let base: SharedRadial = match self.family {
            FFamily::Power { p, delta } => Arc::new(PowerOfC1 { profile, delta, p }),
            FFamily::Gaussian { kappa, delta } => Arc::new(Gaussian { delta, kappa }),
        };
        Arc::new(Scaled(self.amplitude, base))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub powers: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Gaussian widths chosen so that `exp(−κ r_b²)` takes these values.
    pub gaussian_decays: Vec<f64>,
    pub amplitude: f64,
    pub w_points: usize,
    pub w_min: f64,
    pub w_max: f64,
    pub golden_tol: f64,
    pub rho: f64,
    pub arnold: ArnoldSettings,
    pub mc: MCOptions,
    pub profile: ProfileSettings,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            powers: vec![3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0],
            deltas: vec![1e-3, 1e-2],
            gaussian_decays: vec![0.05, 0.1, 0.3],
            amplitude: 1.0,
            w_points: 12,
            w_min: 0.05,
            w_max: 0.9,
            golden_tol: 1e-4,
            rho: 0.1,
            arnold: ArnoldSettings::default(),
            mc: MCOptions::default(),
            profile: ProfileSettings::default(),
        }
    }
}

impl SearchConfig {
    /// Candidates in their fixed evaluation order.
    pub fn candidates(&self, r_b: f64) -> Vec<FParams> {
        let mut out = Vec::new();
        for &p in &self.powers {
            for &delta in &self.deltas {
                out.push(FFamily::Power { p, delta });
            }
        }
        for &decay in &self.gaussian_decays {
            let kappa = -decay.ln() / (r_b * r_b);
            for &delta in &self.deltas {
                out.push(FFamily::Gaussian { kappa, delta });
            }
        }
        out.into_iter()
            .map(|family| FParams {
                family,
                amplitude: self.amplitude,
            })
            .collect()
    }

    pub fn w_grid(&self) -> Vec<f64> {
        match self.w_points {
            0 => Vec::new(),
            1 => vec![0.5 * (self.w_min + self.w_max)],
            n => (0..n)
                .map(|i| self.w_min + (self.w_max - self.w_min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessVerdict {
    Certified,
    NotFound,
}

impl WitnessVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            WitnessVerdict::Certified => "certified",
            WitnessVerdict::NotFound => "not-found",
        }
    }
}

/// Why a search failed, or how close it came.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub candidates_examined: usize,
    pub stable_candidates: usize,
    /// Largest Arnold margin over all candidates.
    pub best_margin: Option<f64>,
    /// Largest 1-D MC among stable candidates.
    pub max_mc_stable: Option<f64>,
    /// Largest 1-D MC over all candidates, with the parameters attaining it.
    pub max_mc_overall: Option<f64>,
    pub max_mc_overall_params: Option<FParams>,
    pub max_mc_overall_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessResult {
    pub spec: SurfaceSpec,
    pub verdict: WitnessVerdict,
    pub branch: Verdict,
    pub f: Option<FParams>,
    pub h: Option<HShape>,
    pub stability: Option<StabilityReport>,
    pub conditions: Option<FConditions>,
    /// Formula, reduced and direct values for the reported pair.
    pub mc: Vec<MCResult>,
    pub methods_agree: bool,
    pub diagnostics: Diagnostics,
    pub implication: String,
}

const IMPLIES: &str = "MC > 0 for an Arnold-stable zonal flow; by the Misiolek criterion its geodesic has a conjugate point (implied, not computed)";
const NO_CLAIM: &str = "no certified pair in the searched families; nothing is implied";

#[derive(Debug, Clone)]
struct Candidate {
    params: FParams,
    report: StabilityReport,
    conditions: FConditions,
    w: f64,
    mc: MCResult,
}

fn mc_for_w(
    f: &dyn RadialFn,
    profile: &ProfileCurve,
    w: f64,
    opts: &MCOptions,
) -> Result<MCResult> {
    let h = PerturbationH::plateau(profile, w)?;
    mc_formula_wh(f, &h, profile, opts)
}

/// Grid search over `w` followed by golden-section refinement around the
/// best grid point.
fn maximize_over_w(
    f: &dyn RadialFn,
    profile: &ProfileCurve,
    cfg: &SearchConfig,
) -> Result<Option<(f64, MCResult)>> {
    let grid = cfg.w_grid();
    if grid.is_empty() {
        return Ok(None);
    }
    let mut values = Vec::with_capacity(grid.len());
    for &w in &grid {
        values.push(mc_for_w(f, profile, w, &cfg.mc)?);
    }
    let mut best = 0;
    for i in 1..grid.len() {
        if values[i].value > values[best].value {
            best = i;
        }
    }
    let mut best_w = grid[best];
    let mut best_mc = values[best].clone();
    if grid.len() > 1 {
        let mut lo = grid[best.saturating_sub(1)];
        let mut hi = grid[(best + 1).min(grid.len() - 1)];
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut m1 = mc_for_w(f, profile, x1, &cfg.mc)?;
        let mut m2 = mc_for_w(f, profile, x2, &cfg.mc)?;
        while hi - lo > cfg.golden_tol {
            if m1.value >= m2.value {
                hi = x2;
                x2 = x1;
                m2 = m1;
                x1 = hi - g * (hi - lo);
                m1 = mc_for_w(f, profile, x1, &cfg.mc)?;
            } else {
                lo = x1;
                x1 = x2;
                m1 = m2;
                x2 = lo + g * (hi - lo);
                m2 = mc_for_w(f, profile, x2, &cfg.mc)?;
            }
        }
        for (x, m) in [(x1, m1), (x2, m2)] {
            if m.value > best_mc.value {
                best_w = x;
                best_mc = m;
            }
        }
    }
    Ok(Some((best_w, best_mc)))
}

fn evaluate(
    params: FParams,
    profile: &Arc<ProfileCurve>,
    lambda: &Lambda1,
    cfg: &SearchConfig,
) -> Result<Option<Candidate>> {
    let f = params.build(profile.clone());
    let report = check_arnold_with(f.as_ref(), profile, lambda, &cfg.arnold)?;
    let conditions = check_f_conditions(f.as_ref(), profile, cfg.rho)?;
    let zonal = ZonalProfile {
        f,
        profile: profile.clone(),
    };
    Ok(
        maximize_over_w(&zonal, profile, cfg)?.map(|(w, mc)| Candidate {
            params,
            report,
            conditions,
            w,
            mc,
        }),
    )
}

/// `|x − y| ≤ max(1e-8, 1e-5 |y|)`.
pub fn methods_agree(mc: &[MCResult]) -> bool {
    mc.windows(2)
        .all(|p| (p[0].value - p[1].value).abs() <= 1e-8f64.max(1e-5 * p[1].value.abs()))
}

/// Certified iff stable on either branch, MC above ten times its error,
/// and all three methods agree.
pub fn is_certified(report: &StabilityReport, mc: &[MCResult]) -> bool {
    report.verdict.is_stable()
        && mc.len() == 3
        && mc.iter().all(|m| m.value > 10.0 * m.error_estimate)
        && methods_agree(mc)
}

/// Formula, reduced and direct MC of `(u_f, W_h)` with a plateau `h`.
pub fn three_methods(
    f: SharedRadial,
    profile: &Arc<ProfileCurve>,
    w: f64,
    opts: &MCOptions,
) -> Result<Vec<MCResult>> {
    let zonal = ZonalField::new(Arc::new(ZonalProfile {
        f,
        profile: profile.clone(),
    }));
    let h = PerturbationH::plateau(profile, w)?;
    let wh = build_wh(h.clone(), profile.clone())?;
    Ok(vec![
        mc_formula_wh(zonal.profile_fn.as_ref(), &h, profile, opts)?,
        mc_reduced(zonal.profile_fn.as_ref(), &wh, profile, opts)?,
        mc_direct(&zonal, &wh, profile, opts)?,
    ])
}

pub fn find_witness(spec: SurfaceSpec, cfg: &SearchConfig) -> Result<WitnessResult> {
    spec.validate()?;
    let profile = Arc::new(solve_profile(spec, &cfg.profile)?);
    let params = cfg.candidates(profile.r_b());
    let mut diagnostics = Diagnostics {
        candidates_examined: 0,
        stable_candidates: 0,
        best_margin: None,
        max_mc_stable: None,
        max_mc_overall: None,
        max_mc_overall_params: None,
        max_mc_overall_w: None,
    };
    let empty = |diagnostics: Diagnostics| WitnessResult {
        spec,
        verdict: WitnessVerdict::NotFound,
        branch: Verdict::Undetermined,
        f: None,
        h: None,
        stability: None,
        conditions: None,
        mc: Vec::new(),
        methods_agree: false,
        diagnostics,
        implication: NO_CLAIM.to_string(),
    };
    if params.is_empty() {
        return Ok(empty(diagnostics));
    }
    let lambda = lambda1_with(&profile, &cfg.arnold.lambda)?;
    let evaluated: Vec<Option<Candidate>> = params
        .par_iter()
        .map(|&p| evaluate(p, &profile, &lambda, cfg))
        .collect::<Result<_>>()?;
    let candidates: Vec<Candidate> = evaluated.into_iter().flatten().collect();

    diagnostics.candidates_examined = params.len();
    diagnostics.stable_candidates = candidates
        .iter()
        .filter(|c| c.report.verdict.is_stable())
        .count();
    diagnostics.best_margin = candidates.iter().map(|c| c.report.margin).reduce(f64::max);
    diagnostics.max_mc_stable = candidates
        .iter()
        .filter(|c| c.report.verdict.is_stable())
        .map(|c| c.mc.value)
        .reduce(f64::max);
    if let Some(top) = first_max_by(&candidates, |c| c.mc.value) {
        diagnostics.max_mc_overall = Some(top.mc.value);
        diagnostics.max_mc_overall_params = Some(top.params);
        diagnostics.max_mc_overall_w = Some(top.w);
    }
    if candidates.is_empty() {
        return Ok(empty(diagnostics));
    }

    // Certification attempts, best 1-D value first.
    let mut order: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            let c = &candidates[i];
            c.report.verdict.is_stable() && c.mc.value > 10.0 * c.mc.error_estimate
        })
        .collect();
    order.sort_by(|&i, &j| {
        candidates[j]
            .mc
            .value
            .total_cmp(&candidates[i].mc.value)
            .then(i.cmp(&j))
    });
    for &i in &order {
        let c = &candidates[i];
        let mc = three_methods(c.params.build(profile.clone()), &profile, c.w, &cfg.mc)?;
        if is_certified(&c.report, &mc) {
            return Ok(report_for(
                spec,
                c,
                mc,
                WitnessVerdict::Certified,
                diagnostics,
            ));
        }
    }

    // Near miss: the stable candidate with the largest MC, otherwise the
    // candidate closest to a stable branch.
    let stable: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.report.verdict.is_stable())
        .collect();
    let pick = if stable.is_empty() {
        first_max_by(&candidates, |c| c.report.margin).expect("nonempty")
    } else {
        *first_max_by(&stable, |c| c.mc.value).expect("nonempty")
    };
    let mc = three_methods(
        pick.params.build(profile.clone()),
        &profile,
        pick.w,
        &cfg.mc,
    )?;
    Ok(report_for(
        spec,
        pick,
        mc,
        WitnessVerdict::NotFound,
        diagnostics,
    ))
}

fn first_max_by<T, K: Fn(&T) -> f64>(items: &[T], key: K) -> Option<&T> {
    let mut best: Option<&T> = None;
    for it in items {
        if best.is_none_or(|b| key(it) > key(b)) {
            best = Some(it);
        }
    }
    best
}

fn report_for(
    spec: SurfaceSpec,
    c: &Candidate,
    mc: Vec<MCResult>,
    verdict: WitnessVerdict,
    diagnostics: Diagnostics,
) -> WitnessResult {
    let agree = methods_agree(&mc);
    WitnessResult {
        spec,
        verdict,
        branch: c.report.verdict,
        f: Some(c.params),
        h: Some(HShape::Plateau { w: c.w }),
        stability: Some(c.report.clone()),
        conditions: Some(c.conditions),
        mc,
        methods_agree: agree,
        diagnostics,
        implication: if verdict == WitnessVerdict::Certified {
            IMPLIES
        } else {
            NO_CLAIM
        }
        .to_string(),
    }
}

/// Re-runs the stability check and all three MC methods from the stored
/// parameters; true iff the pair certifies again.
pub fn recheck(result: &WitnessResult, cfg: &SearchConfig) -> Result<bool> {
    let (Some(params), Some(HShape::Plateau { w })) = (result.f, result.h) else {
        return Ok(false);
    };
    let profile = Arc::new(solve_profile(result.spec, &cfg.profile)?);
    let lambda = lambda1_with(&profile, &cfg.arnold.lambda)?;
    let f = params.build(profile.clone());
    let report = check_arnold_with(f.as_ref(), &profile, &lambda, &cfg.arnold)?;
    let mc = three_methods(f, &profile, w, &cfg.mc)?;
    Ok(is_certified(&report, &mc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub b: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<WitnessResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// `find_witness` over the grid `a_list × b_list`, rows in a-major order.
pub fn sweep(a_list: &[f64], b_list: &[f64], cfg: &SearchConfig) -> Vec<SweepRow> {
    let cells: Vec<(f64, f64)> = a_list
        .iter()
        .flat_map(|&a| b_list.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(
            |&(a, b)| match SurfaceSpec::new(a, b).and_then(|spec| find_witness(spec, cfg)) {
                Ok(r) => SweepRow {
                    a,
                    b,
                    result: Some(r),
                    error: None,
                },
                Err(e) => SweepRow {
                    a,
                    b,
                    result: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect()
}

pub const SWEEP_HEADER: &str =
    "a,b,verdict,branch,fprime_min,fprime_max,lambda1,mc_value,mc_error,p_or_kappa,delta,w";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    let num = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for row in rows {
        let line = match &row.result {
            None => format!("{},{},error,,,,,,,,,", row.a, row.b),
            Some(r) => {
                let st = r.stability.as_ref();
                let mc = r.mc.first();
                let w = match r.h {
                    Some(HShape::Plateau { w }) => Some(w),
                    _ => None,
                };
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    row.a,
                    row.b,
                    r.verdict.as_str(),
                    r.branch.as_str(),
                    num(st.map(|s| s.fprime_min)),
                    num(st.map(|s| s.fprime_max)),
                    num(st.map(|s| s.lambda1)),
                    num(mc.map(|m| m.value)),
                    num(mc.map(|m| m.error_estimate)),
                    num(r.f.map(|f| f.family.p_or_kappa())),
                    num(r.f.map(|f| f.family.delta())),
                    num(w),
                )
            }
        };
        writeln!(out, "{line}").expect("writing to a String cannot fail");
    }
    out
}
