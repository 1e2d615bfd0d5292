//! Command-line front end: configuration, presets and artifact emission.
//!
//! Every artifact carries the config fingerprint (SHA-256 of the canonical
//! config with `output` and `threads` removed) and the seed. Outputs contain
//! no timings or paths, so reruns are byte-identical.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amenable::{boundary_count, certify_visibility, folner_set, AmenableSubgroup, CertificateMode, VisibilityCertificate};
use crate::construction::{
    stream_rng, AlphaRule, Checkpoint, ConstructionBudgets, ConstructionState, EntrySpec, VisibilityCatalogue, CERTIFY_RADIUS, PATH_STREAM,
};
use crate::diagnostics::{control_experiment, nondisjointness_report, tv_curves, Control, CurveOptions, TvReport, Verdict};
use crate::error::{Error, Result};
use crate::group::{FiniteSet, Group};
use crate::measure::{write_measure, Exact, Mode, SparseMeasure, Weight};
use crate::walk::{estimate_m, write_trajectory_csv, DecompositionReport, Walker};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;
pub const EXIT_FAIL: u8 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Atom cap per convolution.
    pub atoms: usize,
    pub power_cap: usize,
    pub folner_cap: usize,
    pub trials: u64,
    pub horizon: u64,
    pub n_max: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        let c = ConstructionBudgets::default();
        Budgets {
            atoms: 2_000_000,
            power_cap: c.power_cap,
            folner_cap: c.folner_cap,
            trials: 10_000,
            horizon: 100_000,
            n_max: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// `S`; defaults to the first catalogue set.
    pub set: Option<Vec<String>>,
    /// `μ = δ_mu`; the identity when absent.
    pub mu: Option<String>,
    pub slack: f64,
    pub stop_on_pass: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            set: None,
            mu: None,
            slack: 0.5,
            stop_on_pass: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleConfig {
    /// Target set; defaults to the first catalogue set.
    pub target: Option<Vec<String>>,
    pub n: u64,
    pub eps: f64,
    /// Length of the sample trajectory written to CSV (0 for none).
    pub path_len: usize,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        CoupleConfig {
            target: None,
            n: 4,
            eps: 0.25,
            path_len: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolnerConfig {
    pub subgroup: String,
    pub set: Vec<String>,
    /// `"n/d"` or an integer reciprocal such as `"1/4"`.
    pub eps: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group: String,
    #[serde(default)]
    pub catalogue: Vec<EntrySpec>,
    #[serde(default)]
    pub alpha: AlphaRule,
    pub seed: Option<u64>,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub couple: CoupleConfig,
    #[serde(default)]
    pub folner: Option<FolnerConfig>,
    #[serde(default)]
    pub control: Option<Control>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_stages() -> usize {
    16
}

fn default_mode() -> Mode {
    Mode::Float
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the config without `output` and `threads`.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        canonical.threads = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Invalid("a seed is required for this command (--seed)".into()))
    }

    fn construction_budgets(&self) -> ConstructionBudgets {
        ConstructionBudgets {
            power_cap: self.budgets.power_cap,
            folner_cap: self.budgets.folner_cap,
        }
    }
}

fn entry(set: &[&str], subgroup: &str) -> EntrySpec {
    EntrySpec {
        set: set.iter().map(|s| s.to_string()).collect(),
        subgroup: subgroup.into(),
        weight: 1,
    }
}

pub const PRESETS: [&str; 3] = ["f2xz", "z-amenable", "f2-control"];

pub fn preset(name: &str) -> Result<RunConfig> {
    let base = |group: &str, catalogue: Vec<EntrySpec>| RunConfig {
        group: group.into(),
        catalogue,
        alpha: AlphaRule::Harmonic,
        seed: Some(1),
        stages: 16,
        mode: Mode::Float,
        budgets: Budgets::default(),
        report: ReportConfig::default(),
        couple: CoupleConfig::default(),
        folner: None,
        control: None,
        output: None,
        threads: None,
    };
    match name {
        "f2xz" => {
            let mut c = base("product(free(2), free-abelian(1))", vec![entry(&["<e;(1)>"], "center")]);
            c.stages = 40;
            c.folner = Some(FolnerConfig {
                subgroup: "center".into(),
                set: vec!["<e;(1)>".into(), "<e;(-1)>".into()],
                eps: "1/4".into(),
            });
            Ok(c)
        }
        "z-amenable" => {
            let mut c = base("free-abelian(1)", vec![entry(&["(1)"], "whole")]);
            c.stages = 32;
            c.mode = Mode::Exact;
            c.budgets.n_max = 50;
            c.report.slack = 0.2;
            c.control = Some(Control::AmenableSanity);
            c.folner = Some(FolnerConfig {
                subgroup: "whole".into(),
                set: vec!["(1)".into(), "(-1)".into()],
                eps: "1/4".into(),
            });
            Ok(c)
        }
        "f2-control" => {
            let mut c = base("free(2)", vec![entry(&["e"], "trivial")]);
            c.stages = 8;
            c.mode = Mode::Exact;
            c.budgets.n_max = 10;
            c.control = Some(Control::FreeGroupSrw);
            Ok(c)
        }
        other => Err(Error::Invalid(format!(
            "unknown preset {other:?}; known: {}",
            PRESETS.join(", ")
        ))),
    }
}

#[derive(Debug, Parser)]
#[command(name = "amenvis", version, about = "Random-walk measures whose boundary stabilizers meet amenably-visible sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config file.
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in config: f2xz, z-amenable or f2-control.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub budget_atoms: Option<usize>,
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub stages: Option<usize>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Clone, PartialEq)]
pub enum Command {
    /// Build ν_k; writes the measure file and a state checkpoint.
    Construct {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// One Følner-set query.
    Folner,
    /// Visibility certificates for the catalogue.
    Certify,
    /// TV curves d_n for every t in S.
    TvCurve,
    /// The non-disjointness report with its verdict.
    Report,
    /// A control experiment.
    Control,
    /// Monte Carlo estimate of M for the decomposition event.
    Couple,
    /// Print the resolved config as TOML.
    ShowConfig,
}

/// Resolves the config from file/preset and command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => RunConfig::from_toml(&fs::read_to_string(path)?)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Error::Invalid("pass --config <file> or --preset <name>".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(b) = cli.budget_atoms {
        cfg.budgets.atoms = b;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(k) = cli.stages {
        cfg.stages = k;
    }
    if let Some(n) = cli.n_max {
        cfg.budgets.n_max = n;
    }
    if let Some(o) = &cli.output {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

/// What a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit_code: u8,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Ctx<'c> {
    cfg: &'c RunConfig,
    fingerprint: String,
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn header(&self) -> Vec<String> {
        vec![
            format!("fingerprint {}", self.fingerprint),
            format!("seed {}", self.cfg.seed.map_or("none".into(), |s| s.to_string())),
        ]
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        self.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let fingerprint = self.fingerprint.clone();
        let stamped = Stamped {
            fingerprint: &fingerprint,
            seed: self.cfg.seed,
            body: value,
        };
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, &stamped)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    fn write_commented(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let header = self.header();
        self.write(name, |buf| {
            for line in header {
                writeln!(buf, "# {line}")?;
            }
            body(buf)
        })
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    fingerprint: &'a str,
    seed: Option<u64>,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct CheckpointFile {
    checkpoint: Checkpoint,
}

#[derive(Serialize)]
struct CheckpointBody<'a> {
    checkpoint: &'a Checkpoint,
}

/// Runs `command` under `cfg` inside a pool of `cfg.threads` workers.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(command, cfg))
}

fn run_in_pool(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    if *command != Command::ShowConfig {
        fs::create_dir_all(&dir)?;
    }
    let mut ctx = Ctx {
        cfg,
        fingerprint: cfg.fingerprint(),
        dir,
        files: Vec::new(),
    };
    let (exit_code, summary) = match command {
        Command::ShowConfig => (EXIT_OK, cfg.to_toml()),
        Command::Construct { resume } => construct(&mut ctx, resume.as_deref())?,
        Command::Folner => folner(&mut ctx)?,
        Command::Certify => certify(&mut ctx)?,
        Command::TvCurve => tv_curve_cmd(&mut ctx)?,
        Command::Report => report(&mut ctx)?,
        Command::Control => control(&mut ctx)?,
        Command::Couple => couple(&mut ctx)?,
    };
    Ok(Outcome {
        exit_code,
        files: ctx.files,
        summary,
    })
}

/// Runs the construction described by `cfg`, optionally from a checkpoint file.
pub fn build_state(cfg: &RunConfig, resume: Option<&Path>) -> Result<(Group, ConstructionState)> {
    let group = Group::parse(&cfg.group)?;
    let seed = cfg.seed()?;
    let mut state = match resume {
        Some(path) => {
            let file: CheckpointFile = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
            let cp = file.checkpoint;
            if cp.group != group.name()
                || cp.seed != seed
                || cp.alpha != cfg.alpha
                || cp.catalogue != cfg.catalogue
                || cp.budgets != cfg.construction_budgets()
            {
                return Err(Error::Invalid("checkpoint was written under a different config".into()));
            }
            if cp.stages.len() > cfg.stages {
                return Err(Error::Invalid(format!(
                    "checkpoint has {} stages, more than the {} requested",
                    cp.stages.len(),
                    cfg.stages
                )));
            }
            ConstructionState::resume(&cp)?
        }
        None => {
            let cat = VisibilityCatalogue::new(&group, &cfg.catalogue, seed)?;
            ConstructionState::new(&group, cat, cfg.alpha, cfg.construction_budgets())
        }
    };
    state.run_to(cfg.stages)?;
    Ok((group, state))
}

#[derive(Serialize)]
struct ConstructSummary {
    group: String,
    stages: usize,
    mode: Mode,
    atoms: usize,
    total_mass: String,
    lost_mass: String,
    symmetric: bool,
    honest_stages: usize,
    structural_certificates: bool,
    folner_sizes: Vec<usize>,
}

fn construct(ctx: &mut Ctx, resume: Option<&Path>) -> Result<(u8, String)> {
    let (group, state) = build_state(ctx.cfg, resume)?;
    state.verify()?;
    let summary = match ctx.cfg.mode {
        Mode::Exact => emit_measure::<Exact>(ctx, &group, &state)?,
        Mode::Float => emit_measure::<f64>(ctx, &group, &state)?,
    };
    let cp = state.checkpoint();
    ctx.write_json("checkpoint.json", &CheckpointBody { checkpoint: &cp })?;
    let text = format!(
        "built {} stages: {} atoms, total mass {}, lost {}",
        summary.stages, summary.atoms, summary.total_mass, summary.lost_mass
    );
    ctx.write_json("construct.json", &summary)?;
    Ok((EXIT_OK, text))
}

fn emit_measure<W: Weight>(ctx: &mut Ctx, group: &Group, state: &ConstructionState) -> Result<ConstructSummary> {
    let nu: SparseMeasure<W> = state.build_measure()?;
    let mut header = ctx.header();
    header.push(format!("group {}", group.name()));
    header.push(format!("stages {}", state.stage_count()));
    header.push(format!("mode {}", W::MODE));
    ctx.write("measure.txt", |buf| write_measure(buf, group, &nu, &header))?;
    Ok(ConstructSummary {
        group: group.name().to_string(),
        stages: state.stage_count(),
        mode: W::MODE,
        atoms: nu.len(),
        total_mass: nu.total_mass().format(),
        lost_mass: nu.lost_mass().format(),
        symmetric: nu.is_symmetric(group),
        honest_stages: state.honest_stages(),
        structural_certificates: state.catalogue().fully_certified(),
        folner_sizes: state.stages().iter().map(|s| s.f.len()).collect(),
    })
}

fn parse_eps(text: &str) -> Result<Ratio<u64>> {
    let bad = || Error::Parse(format!("bad tolerance {text:?}; expected n/d"));
    let (n, d) = text.split_once('/').unwrap_or((text, "1"));
    let n: u64 = n.trim().parse().map_err(|_| bad())?;
    let d: u64 = d.trim().parse().map_err(|_| bad())?;
    if n == 0 || d == 0 {
        return Err(bad());
    }
    Ok(Ratio::new(n, d))
}

#[derive(Serialize)]
struct FolnerSummary<'a> {
    group: &'a str,
    subgroup: &'a str,
    set: &'a [String],
    eps: String,
    size: usize,
    boundary: usize,
    folner: Vec<String>,
}

fn folner(ctx: &mut Ctx) -> Result<(u8, String)> {
    let fc = ctx
        .cfg
        .folner
        .as_ref()
        .ok_or_else(|| Error::Invalid("config has no [folner] section".into()))?;
    let group = Group::parse(&ctx.cfg.group)?;
    let h = AmenableSubgroup::new(&group, &fc.subgroup)?;
    let b = group.parse_set(&fc.set)?;
    let eps = parse_eps(&fc.eps)?;
    let f = folner_set(&h, &b, eps, ctx.cfg.budgets.folner_cap)?;
    let summary = FolnerSummary {
        group: group.name(),
        subgroup: &fc.subgroup,
        set: &fc.set,
        eps: eps.to_string(),
        size: f.len(),
        boundary: boundary_count(&group, &b, &f),
        folner: f.iter().map(|x| group.format(x)).collect(),
    };
    ctx.write_json("folner.json", &summary)?;
    Ok((EXIT_OK, format!("Følner set of size {} (boundary {})", summary.size, summary.boundary)))
}

#[derive(Serialize)]
struct CertifySummary {
    radius: u64,
    certificates: Vec<VisibilityCertificate>,
}

fn certify(ctx: &mut Ctx) -> Result<(u8, String)> {
    let group = Group::parse(&ctx.cfg.group)?;
    if ctx.cfg.catalogue.is_empty() {
        return Err(Error::Invalid("catalogue is empty".into()));
    }
    let mut certificates = Vec::new();
    for e in &ctx.cfg.catalogue {
        let s = group.parse_set(&e.set)?;
        let h = AmenableSubgroup::new(&group, &e.subgroup)?;
        certificates.push(certify_visibility(&s, &h, CERTIFY_RADIUS)?);
    }
    let passed = certificates.iter().filter(|c| c.passed()).count();
    let text = certificates
        .iter()
        .map(|c| {
            let mode = match c.mode {
                CertificateMode::Structural => "structural".to_string(),
                CertificateMode::RadiusChecked { radius } => format!("checked to radius {radius}"),
            };
            format!("{{{}}} via {}: {} ({mode})", c.set.join(", "), c.subgroup, if c.passed() { "PASS" } else { "REFUTED" })
        })
        .collect::<Vec<_>>()
        .join("\n");
    let all = passed == certificates.len();
    ctx.write_json("certificates.json", &CertifySummary { radius: CERTIFY_RADIUS, certificates })?;
    Ok((if all { EXIT_OK } else { EXIT_FAIL }, text))
}

fn report_set(cfg: &RunConfig, group: &Group) -> Result<FiniteSet> {
    match (&cfg.report.set, cfg.catalogue.first()) {
        (Some(s), _) => group.parse_set(s),
        (None, Some(e)) => group.parse_set(&e.set),
        (None, None) => Err(Error::Invalid("no report set and an empty catalogue".into())),
    }
}

fn curve_inputs<W: Weight>(cfg: &RunConfig) -> Result<(Group, SparseMeasure<W>, FiniteSet, SparseMeasure<W>)> {
    let (group, state) = build_state(cfg, None)?;
    let nu: SparseMeasure<W> = state.build_measure()?;
    let x = match &cfg.report.mu {
        Some(text) => group.parse_element(text)?,
        None => group.identity(),
    };
    let mu = SparseMeasure::delta(x);
    let s = report_set(cfg, &group)?;
    Ok((group, mu, s, nu))
}

fn curve_options(cfg: &RunConfig) -> CurveOptions {
    CurveOptions {
        n_max: cfg.budgets.n_max,
        budget: cfg.budgets.atoms,
        stop_below: None,
    }
}

fn tv_curve_cmd(ctx: &mut Ctx) -> Result<(u8, String)> {
    match ctx.cfg.mode {
        Mode::Exact => tv_curve_typed::<Exact>(ctx),
        Mode::Float => tv_curve_typed::<f64>(ctx),
    }
}

fn tv_curve_typed<W: Weight>(ctx: &mut Ctx) -> Result<(u8, String)> {
    let (group, mu, s, nu) = curve_inputs::<W>(ctx.cfg)?;
    let curves = tv_curves(&group, &mu, s.as_slice(), &nu, curve_options(ctx.cfg))?;
    ctx.write_commented("tv_curve.csv", |buf| curves.write_csv(buf, &group))?;
    let (n, j, best) = curves.best();
    let text = format!(
        "{} steps; smallest d_n = {} ± {} at n = {n}, t = {}{}",
        curves.last_n(),
        best.value.format(),
        best.bracket.format(),
        group.format(&curves.ts[j]),
        if curves.exhausted { " (brackets exhausted)" } else { "" }
    );
    Ok((EXIT_OK, text))
}

fn emit_report(ctx: &mut Ctx, mut report: TvReport, name: &str) -> Result<(u8, String)> {
    report.fingerprint = ctx.fingerprint.clone();
    report.seed = ctx.cfg.seed;
    let rows = report.curves.clone();
    ctx.write_commented(&format!("{name}.csv"), |buf| {
        writeln!(buf, "t,n,value,bracket")?;
        for c in &rows {
            for p in &c.points {
                writeln!(buf, "\"{}\",{},{},{}", c.t, p.n, p.value, p.bracket)?;
            }
        }
        Ok(())
    })?;
    let path = ctx.dir.join(format!("{name}.json"));
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    fs::write(&path, json)?;
    ctx.files.push(path);
    let code = match report.verdict {
        Verdict::Pass => EXIT_OK,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        Verdict::Fail => EXIT_FAIL,
    };
    let text = format!(
        "{}: min d_n = {:.6} ± {:.6} at n = {} (t = {}), bound {} + slack {}",
        report.verdict, report.best.value, report.best.bracket, report.best.n, report.best.t, report.bound_text, report.slack
    );
    Ok((code, text))
}

fn report(ctx: &mut Ctx) -> Result<(u8, String)> {
    let r = match ctx.cfg.mode {
        Mode::Exact => report_typed::<Exact>(ctx.cfg)?,
        Mode::Float => report_typed::<f64>(ctx.cfg)?,
    };
    emit_report(ctx, r, "report")
}

fn report_typed<W: Weight>(cfg: &RunConfig) -> Result<TvReport> {
    let (group, mu, s, nu) = curve_inputs::<W>(cfg)?;
    nondisjointness_report(&group, &mu, &s, &nu, curve_options(cfg), cfg.report.slack, cfg.report.stop_on_pass)
}

fn control(ctx: &mut Ctx) -> Result<(u8, String)> {
    let which = ctx
        .cfg
        .control
        .ok_or_else(|| Error::Invalid("config names no control experiment".into()))?;
    let mut params = which.default_params();
    params.n_max = ctx.cfg.budgets.n_max;
    if which == Control::AmenableSanity {
        params.stages = ctx.cfg.stages;
    }
    let r = control_experiment(which, params, ctx.cfg.seed()?)?;
    emit_report(ctx, r, "control")
}

fn couple(ctx: &mut Ctx) -> Result<(u8, String)> {
    let cfg = ctx.cfg;
    let seed = cfg.seed()?;
    let (group, state) = build_state(cfg, None)?;
    let target = match &cfg.couple.target {
        Some(t) => group.parse_set(t)?,
        None => report_set(cfg, &group)?,
    };
    let r: DecompositionReport = estimate_m(
        &state,
        &target,
        cfg.couple.n,
        cfg.couple.eps,
        cfg.budgets.trials,
        cfg.budgets.horizon,
        seed,
    )?;
    ctx.write_json("couple.json", &r)?;
    if cfg.couple.path_len > 0 {
        let walker = Walker::new(&state)?;
        let mut rng = stream_rng(seed, PATH_STREAM);
        let path = walker.sample_path(cfg.couple.path_len, &mut rng);
        ctx.write_commented("trajectory.csv", |buf| write_trajectory_csv(buf, &group, &path))?;
    }
    let text = match r.m {
        Some(m) => format!(
            "M = {m}: hit probability {:.4} (95% Wilson [{:.4}, {:.4}])",
            r.hit_probability, r.ci.0, r.ci.1
        ),
        None => format!("no M ≤ {} reached 1 − eps; raise the horizon", r.horizon),
    };
    Ok((if r.m.is_some() { EXIT_OK } else { EXIT_BUDGET }, text))
}

/// Exit status for an error.
pub fn exit_code_for(err: &Error) -> u8 {
    if err.is_budget() {
        EXIT_BUDGET
    } else {
        EXIT_USAGE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c, "{name}");
            assert_eq!(back.fingerprint(), c.fingerprint());
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn fingerprint_ignores_output_and_threads() {
        let mut a = preset("f2xz").unwrap();
        let f = a.fingerprint();
        a.output = Some("elsewhere".into());
        a.threads = Some(8);
        assert_eq!(a.fingerprint(), f);
        a.seed = Some(2);
        assert_ne!(a.fingerprint(), f);
        assert_eq!(f.len(), 64);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml(
            r#"
group = "free-abelian(1)"
seed = 3
[[catalogue]]
set = ["(1)"]
subgroup = "whole"
"#,
        )
        .unwrap();
        assert_eq!(c.stages, 16);
        assert_eq!(c.mode, Mode::Float);
        assert_eq!(c.catalogue[0].weight, 1);
        assert!(RunConfig::from_toml("group = 3").is_err());
        assert!(RunConfig::from_toml("group = \"free(1)\"\nbogus = 1").is_err());
    }

    #[test]
    fn tolerance_parsing() {
        assert_eq!(parse_eps("1/4").unwrap(), Ratio::new(1, 4));
        assert_eq!(parse_eps("2").unwrap(), Ratio::new(2, 1));
        assert!(parse_eps("0/3").is_err());
        assert!(parse_eps("x").is_err());
    }
}
