//! Command-line front end: resolved run configuration, provenance headers
//! and one function per subcommand returning the rendered artifact.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use zonalflow::fields::{
    radial_table_csv, Constant, Gaussian, PowerOfC1, Scaled, SharedRadial, ZonalField, ZonalProfile,
};
use zonalflow::geometry::{profile_csv, solve_profile, ProfileCurve, ProfileSettings, SurfaceSpec};
use zonalflow::misiolek::{
    build_wh, mc_direct, mc_formula_wh, mc_reduced, HShape, MCOptions, PerturbationH,
};
use zonalflow::stability::{check_arnold_with, check_f_conditions, lambda1_with, ArnoldSettings};
use zonalflow::witness::{
    find_witness, methods_agree, sweep, sweep_csv, SearchConfig, SweepRow, SWEEP_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Power,
    Gaussian,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HKind {
    Zero,
    Plateau,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Formula,
    Reduced,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Profile,
    Stability,
    Mc,
    Witness,
    Sweep,
}

/// Parameters of `f` for the stability and mc commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub p: f64,
    pub delta: f64,
    /// Gaussian width; when absent it is set from `decay = exp(−κ r_b²)`.
    pub kappa: Option<f64>,
    pub decay: f64,
    pub amplitude: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            kind: FamilyKind::Power,
            p: 16.0,
            delta: 1e-3,
            kappa: None,
            decay: 0.1,
            amplitude: 1.0,
        }
    }
}

impl FamilyConfig {
    pub fn build(&self, profile: &Arc<ProfileCurve>) -> SharedRadial {
        let base: SharedRadial = match self.kind {
            FamilyKind::Power => Arc::new(PowerOfC1 {
                profile: profile.clone(),
                delta: self.delta,
                p: self.p,
            }),
            FamilyKind::Gaussian => {
                let rb = profile.r_b();
                Arc::new(Gaussian {
                    delta: self.delta,
                    kappa: self.kappa.unwrap_or(-self.decay.ln() / (rb * rb)),
                })
            }
            FamilyKind::Constant => Arc::new(Constant(1.0)),
        };
        Arc::new(Scaled(self.amplitude, base))
    }
}

/// Fully resolved configuration; echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Command,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub tol: f64,
    pub format: Option<Format>,
    pub profile: ProfileSettings,
    pub profile_points: usize,
    pub family: FamilyConfig,
    pub h: HKind,
    pub w: f64,
    pub methods: Vec<Method>,
    pub integrand_samples: usize,
    pub rho: f64,
    pub arnold: ArnoldSettings,
    pub theta_nodes: usize,
    pub lambda1_only: bool,
    pub f_table: bool,
    pub search: SearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Profile,
            a: vec![2.0],
            b: vec![0.5],
            tol: 1e-8,
            format: None,
            profile: ProfileSettings::default(),
            profile_points: 201,
            family: FamilyConfig::default(),
            h: HKind::Plateau,
            w: 0.3,
            methods: vec![Method::Formula, Method::Reduced, Method::Direct],
            integrand_samples: 0,
            rho: 0.1,
            arnold: ArnoldSettings::default(),
            theta_nodes: 256,
            lambda1_only: false,
            f_table: false,
            search: SearchConfig::default(),
        }
    }
}

impl RunConfig {
    fn single_spec(&self) -> anyhow::Result<SurfaceSpec> {
        match (self.a.as_slice(), self.b.as_slice()) {
            ([a], [b]) => Ok(SurfaceSpec::new(*a, *b)?),
            _ => bail!("{:?} takes exactly one value for --a and --b", self.command),
        }
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(match self.command {
            Command::Profile | Command::Sweep => Format::Csv,
            _ => Format::Json,
        })
    }

    fn mc_options(&self) -> MCOptions {
        let mut m = MCOptions {
            theta_nodes: self.theta_nodes,
            integrand_samples: self.integrand_samples,
            ..MCOptions::default()
        };
        m.quadrature.rel_tol = self.tol;
        m
    }

    fn search_config(&self) -> SearchConfig {
        let mut s = self.search.clone();
        s.mc.quadrature.rel_tol = self.tol;
        s
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zonalflow",
    version,
    about = "Zonal flows on truncated ellipsoids: stability and Misiolek curvature"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Profile curve samples as CSV.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Number of sample rows.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Arnold stability report for one f.
    Stability {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        rho: Option<f64>,
        /// Grid size of the F' scan.
        #[arg(long)]
        grid: Option<usize>,
        /// Only the eigenvalue and its per-mode table.
        #[arg(long)]
        lambda1_only: bool,
        /// Include the radial table of f.
        #[arg(long)]
        f_table: bool,
    },
    /// Misiolek curvature of (u_f, W_h).
    Mc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, value_enum)]
        h: Option<HKind>,
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        theta_nodes: Option<usize>,
        /// Radial integrand samples to include.
        #[arg(long)]
        integrand: Option<usize>,
    },
    /// Witness search on one surface.
    Witness {
        #[command(flatten)]
        common: Common,
    },
    /// Witness search over a grid of surfaces.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Equatorial radius (comma-separated list for sweep).
    #[arg(long, value_delimiter = ',')]
    pub a: Option<Vec<f64>>,
    /// Truncation height (comma-separated list for sweep).
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    /// Relative quadrature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with configuration values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve(cli: Cli) -> anyhow::Result<(RunConfig, Option<PathBuf>)> {
    let (command, common) = match &cli.command {
        Sub::Profile { common, .. } => (Command::Profile, common),
        Sub::Stability { common, .. } => (Command::Stability, common),
        Sub::Mc { common, .. } => (Command::Mc, common),
        Sub::Witness { common } => (Command::Witness, common),
        Sub::Sweep { common } => (Command::Sweep, common),
    };
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    cfg.command = command;
    if let Some(a) = &common.a {
        cfg.a = a.clone();
    }
    if let Some(b) = &common.b {
        cfg.b = b.clone();
    }
    if let Some(t) = common.tol {
        cfg.tol = t;
    }
    if common.format.is_some() {
        cfg.format = common.format;
    }
    let out = common.out.clone();
    let apply_family = |cfg: &mut RunConfig, f: &FamilyArgs| {
        if let Some(k) = f.family {
            cfg.family.kind = k;
        }
        if let Some(p) = f.p {
            cfg.family.p = p;
        }
        if let Some(d) = f.delta {
            cfg.family.delta = d;
        }
        if f.kappa.is_some() {
            cfg.family.kappa = f.kappa;
        }
        if let Some(d) = f.decay {
            cfg.family.decay = d;
        }
        if let Some(c) = f.amplitude {
            cfg.family.amplitude = c;
        }
    };
    match cli.command {
        Sub::Profile { points, .. } => {
            if let Some(n) = points {
                cfg.profile_points = n;
            }
        }
        Sub::Stability {
            family,
            rho,
            grid,
            lambda1_only,
            f_table,
            ..
        } => {
            apply_family(&mut cfg, &family);
            if let Some(r) = rho {
                cfg.rho = r;
            }
            if let Some(g) = grid {
                cfg.arnold.grid = g;
            }
            cfg.lambda1_only |= lambda1_only;
            cfg.f_table |= f_table;
        }
        Sub::Mc {
            family,
            h,
            w,
            methods,
            theta_nodes,
            integrand,
            ..
        } => {
            apply_family(&mut cfg, &family);
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(w) = w {
                cfg.w = w;
            }
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if let Some(n) = theta_nodes {
                cfg.theta_nodes = n;
            }
            if let Some(n) = integrand {
                cfg.integrand_samples = n;
            }
        }
        Sub::Witness { .. } | Sub::Sweep { .. } => {}
    }
    Ok((cfg, out))
}

pub fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let over: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut base = serde_json::to_value(RunConfig::default())?;
    merge(&mut base, over);
    Ok(serde_json::from_value(base)?)
}

fn csv_header(cfg: &RunConfig) -> String {
    format!(
        "# zonalflow {}\n# config-sha256: {}\n# config: {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        serde_json::to_string(cfg).expect("config serializes")
    )
}

fn json_document(cfg: &RunConfig, result: Value) -> anyhow::Result<String> {
    let doc = json!({
        "provenance": {
            "tool": "zonalflow",
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": cfg.hash(),
            "config": cfg,
        },
        "result": result,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Strips the provenance header, leaving the data body.
pub fn body(artifact: &str) -> String {
    if artifact.starts_with('{') {
        let v: Value = serde_json::from_str(artifact).expect("artifact is JSON");
        serde_json::to_string(&v["result"]).expect("serializes")
    } else {
        artifact
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn csv_table(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|c| c.parse().expect("numeric cell"))
                .collect()
        })
        .collect()
}

pub fn cmd_profile(cfg: &RunConfig) -> anyhow::Result<String> {
    let spec = cfg.single_spec()?;
    let profile = solve_profile(spec, &cfg.profile)?;
    let table = profile_csv(&profile, cfg.profile_points)?;
    match cfg.format() {
        Format::Csv => Ok(csv_header(cfg) + &table),
        Format::Json => {
            let columns: Vec<&str> = table
                .lines()
                .next()
                .unwrap_or_default()
                .split(',')
                .collect();
            json_document(
                cfg,
                json!({ "spec": spec, "r_b": profile.r_b(), "columns": columns, "rows": parse_csv_rows(&table) }),
            )
        }
    }
}

pub fn cmd_stability(cfg: &RunConfig) -> anyhow::Result<String> {
    let spec = cfg.single_spec()?;
    let profile = Arc::new(solve_profile(spec, &cfg.profile)?);
    let lambda = lambda1_with(&profile, &cfg.arnold.lambda)?;
    if cfg.lambda1_only {
        let rows: Vec<Vec<f64>> = lambda
            .modes
            .iter()
            .map(|m| vec![m.mode as f64, m.value, m.coarse, m.fine])
            .collect();
        return match cfg.format() {
            Format::Csv => Ok(csv_header(cfg) + &csv_table("mode,value,coarse,fine", &rows)),
            Format::Json => json_document(cfg, serde_json::to_value(&lambda)?),
        };
    }
    let f = cfg.family.build(&profile);
    let mut report = check_arnold_with(f.as_ref(), &profile, &lambda, &cfg.arnold)?;
    report.conditions = Some(check_f_conditions(f.as_ref(), &profile, cfg.rho)?);
    let table = if cfg.f_table {
        Some(radial_table_csv(f.as_ref(), &profile, cfg.profile_points)?)
    } else {
        None
    };
    match cfg.format() {
        Format::Json => {
            let mut v = serde_json::to_value(&report)?;
            v["verdict_string"] = json!(report.verdict.as_str());
            if let Some(t) = &table {
                v["f_table"] = json!({ "columns": ["r", "value", "d1", "d2", "d3"], "rows": parse_csv_rows(t) });
            }
            json_document(cfg, v)
        }
        Format::Csv => {
            if let Some(t) = table {
                return Ok(csv_header(cfg) + &t);
            }
            let c = report.conditions.expect("conditions computed");
            let mut out = csv_header(cfg) + "quantity,value\n";
            for (k, v) in [
                ("fprime_min", format!("{:.16e}", report.fprime_min)),
                ("fprime_max", format!("{:.16e}", report.fprime_max)),
                ("lambda1", format!("{:.16e}", report.lambda1)),
                ("lambda1_error", format!("{:.16e}", report.lambda1_error)),
                ("margin", format!("{:.16e}", report.margin)),
                ("verdict", report.verdict.as_str().to_string()),
                ("positive", c.positive.to_string()),
                ("even", c.even.to_string()),
                ("decreasing", c.decreasing.to_string()),
                ("small_at_boundary", c.small_at_boundary.to_string()),
                (
                    "f2_over_c1_4_decreasing",
                    c.f2_over_c1_4_decreasing.to_string(),
                ),
            ] {
                out.push_str(&format!("{k},{v}\n"));
            }
            Ok(out)
        }
    }
}

pub fn cmd_mc(cfg: &RunConfig) -> anyhow::Result<String> {
    let spec = cfg.single_spec()?;
    let profile = Arc::new(solve_profile(spec, &cfg.profile)?);
    let f = cfg.family.build(&profile);
    let zonal = ZonalField::new(Arc::new(ZonalProfile {
        f,
        profile: profile.clone(),
    }));
    let shape = match cfg.h {
        HKind::Zero => HShape::Zero,
        HKind::Plateau => HShape::Plateau { w: cfg.w },
        HKind::Cosine => HShape::Cosine,
    };
    let h = PerturbationH::from_shape(shape, &profile)?;
    let wh = build_wh(h.clone(), profile.clone())?;
    let opts = cfg.mc_options();
    let mut results = Vec::new();
    for m in &cfg.methods {
        results.push(match m {
            Method::Formula => mc_formula_wh(zonal.profile_fn.as_ref(), &h, &profile, &opts)?,
            Method::Reduced => mc_reduced(zonal.profile_fn.as_ref(), &wh, &profile, &opts)?,
            Method::Direct => mc_direct(&zonal, &wh, &profile, &opts)?,
        });
    }
    let agree = methods_agree(&results);
    match cfg.format() {
        Format::Json => json_document(
            cfg,
            json!({ "spec": spec, "h": shape, "results": results, "methods_agree": agree }),
        ),
        Format::Csv => {
            let mut out = csv_header(cfg) + "method,value,error_estimate,n_nodes,meaningful\n";
            for r in &results {
                out.push_str(&format!(
                    "{},{:.16e},{:.16e},{},{}\n",
                    r.method.as_str(),
                    r.value,
                    r.error_estimate,
                    r.n_nodes,
                    r.meaningful
                ));
            }
            if let Some(csv) = results.first().and_then(|r| r.integrand_csv()) {
                out.push_str(&csv);
            }
            Ok(out)
        }
    }
}

pub fn cmd_witness(cfg: &RunConfig) -> anyhow::Result<String> {
    let spec = cfg.single_spec()?;
    let result = find_witness(spec, &cfg.search_config())?;
    match cfg.format() {
        Format::Json => json_document(cfg, serde_json::to_value(&result)?),
        Format::Csv => {
            let row = SweepRow {
                a: spec.a,
                b: spec.b,
                result: Some(result),
                error: None,
            };
            Ok(csv_header(cfg) + &sweep_csv(&[row]))
        }
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> anyhow::Result<String> {
    let rows = sweep(&cfg.a, &cfg.b, &cfg.search_config());
    match cfg.format() {
        Format::Csv => Ok(csv_header(cfg) + &sweep_csv(&rows)),
        Format::Json => json_document(
            cfg,
            json!({ "columns": SWEEP_HEADER.split(',').collect::<Vec<_>>(), "rows": rows }),
        ),
    }
}

pub fn execute(cfg: &RunConfig) -> anyhow::Result<String> {
    match cfg.command {
        Command::Profile => cmd_profile(cfg),
        Command::Stability => cmd_stability(cfg),
        Command::Mc => cmd_mc(cfg),
        Command::Witness => cmd_witness(cfg),
        Command::Sweep => cmd_sweep(cfg),
    }
}

/// Parses arguments, runs the command and writes the artifact.
pub fn run<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let (cfg, out) = resolve(cli)?;
    let text = execute(&cfg)?;
    match out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}
