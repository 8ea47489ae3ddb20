//! The `spoofchain` commands. `main` only parses arguments and turns
//! errors into exit codes; the commands live here so tests can call them
//! with the same inputs the binary sees.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use spoofchain_core::chain::{run_batch, ChainError, ChainReport, Scenario};
use spoofchain_core::config::{ConfigError, HarnessConfig, CONFIG_ENV};
use spoofchain_core::corpus::{
    case_bindings, combine, default_bindings, export_corpus, generate, generate_all, read_manifest, AttackCase,
    AttackId, Bindings, CombineError, ExportError, GenError, GenOptions, Manifest, UnknownAttack, CASE1, CASE2,
};
use spoofchain_core::report::{advise, aggregate, emit, parse_matrix, Format, LiveAttempt, ResultMatrix, UnknownFormat};
use spoofchain_live::{deliver_repeated, to_attempt, Channel, LiveEnv, TargetConfig, TargetError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_ENVIRONMENT: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags or values.
    Usage,
    /// Files, configuration, network.
    Environment,
    Internal,
}

impl ErrorKind {
    pub fn code(self) -> u8 {
        match self {
            ErrorKind::Usage => EXIT_USAGE,
            ErrorKind::Environment => EXIT_ENVIRONMENT,
            ErrorKind::Internal => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn env(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Environment, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Internal, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::UnknownProfile(_) | ConfigError::UnknownScenario(_) => Self::usage(e.to_string()),
            _ => Self::env(e.to_string()),
        }
    }
}

macro_rules! kind_from {
    ($kind:ident: $($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::$kind(e.to_string())
            }
        })*
    };
}

kind_from!(usage: GenError, CombineError, UnknownAttack, UnknownFormat);
kind_from!(env: ExportError, TargetError, ChainError);

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::env(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::env(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize + ?Sized>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::internal(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "spoofchain", version, about = "Generate, simulate and deliver email sender-spoofing test cases")]
pub struct Cli {
    /// Harness config file (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Directory of extra profile files; overrides the config.
    #[arg(long, global = true)]
    pub profiles_dir: Option<PathBuf>,
    /// DNS zone file replacing the shipped zone; overrides the config.
    #[arg(long, global = true)]
    pub zone_file: Option<PathBuf>,
    /// Directory of DKIM signing keys; overrides the config.
    #[arg(long, global = true)]
    pub key_dir: Option<PathBuf>,
    /// Directory of extra scenario files; overrides the config.
    #[arg(long, global = true)]
    pub scenario_dir: Option<PathBuf>,
    /// Where command output goes by default; overrides the config.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write cases as .eml files plus a manifest.
    Gen(GenArgs),
    /// Run cases through scenarios and write the result matrix.
    Simulate(SimulateArgs),
    /// Deliver cases to a server you operate.
    Live(LiveArgs),
    /// Render a matrix from simulate output.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    /// Attack id (A1..A14), a combination joined with `+` such as A2+A4,
    /// or `all`. Repeatable and comma-separated.
    #[arg(long = "attack", visible_alias = "case", value_delimiter = ',', required = true)]
    pub attacks: Vec<String>,
    /// Payload variant; every id has variant 0.
    #[arg(long)]
    pub variant: Option<u32>,
    /// Seeds the Message-ID.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Address the victim should believe sent the message.
    #[arg(long)]
    pub spoof: Option<String>,
    /// Address the attacker controls.
    #[arg(long)]
    pub attacker: Option<String>,
    /// Recipient address.
    #[arg(long)]
    pub victim: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub cases: CaseArgs,
    /// Corpus directory; defaults to `<output-dir>/corpus`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario names, or `all`; defaults to the configured default.
    #[arg(long, value_delimiter = ',')]
    pub scenario: Vec<String>,
    /// Corpus directory or manifest written by `gen`; generated on the fly
    /// when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Seed for the generated corpus.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// reports.json, matrix.json and matrix.txt go here; defaults to the output dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// What to print: `text` or `json`.
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(Debug, Clone, Args)]
pub struct LiveArgs {
    /// Target config (TOML) for a server you operate.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub cases: CaseArgs,
    /// Deliveries per case, spaced by the target interval.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeat: u32,
    /// Place messages with IMAP APPEND instead of SMTP.
    #[arg(long)]
    pub imap: bool,
    /// Transcripts and live.json go here; defaults to `<output-dir>/live`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// `reports.json` or `matrix.json` files from simulate. Reports from
    /// several files are aggregated together.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// `live.json` from a live run to attach.
    #[arg(long)]
    pub live: Option<PathBuf>,
    /// `text` or `json`.
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Also list mitigation advice for each success. Needs reports input.
    #[arg(long)]
    pub advise: bool,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Cli {
    /// The config file if one is named, with flags applied on top.
    pub fn harness_config(&self) -> Result<HarnessConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => HarnessConfig::load(p)?,
            None => HarnessConfig::default(),
        };
        let set = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        };
        set(&mut c.profiles_dir, &self.profiles_dir);
        set(&mut c.zone_file, &self.zone_file);
        set(&mut c.key_dir, &self.key_dir);
        set(&mut c.scenario_dir, &self.scenario_dir);
        if let Some(o) = &self.output_dir {
            c.output_dir.clone_from(o);
        }
        c.check_paths()?;
        Ok(c)
    }
}

/// Case 1 and Case 2 alongside every variant of every id.
pub fn full_corpus(seed: u64) -> Vec<AttackCase> {
    let mut cases = generate_all(seed);
    for ids in [&CASE1[..], &CASE2[..]] {
        let b = case_bindings(ids).expect("named combinations have bindings");
        cases.push(combine(ids, &b, &GenOptions { variant: 0, seed }).expect("named combinations are compatible"));
    }
    cases
}

fn bindings_for(ids: &[AttackId], a: &CaseArgs) -> Bindings {
    let mut b = case_bindings(ids).unwrap_or_else(|| default_bindings(ids[0]));
    if let Some(s) = &a.spoof {
        b.spoof.clone_from(s);
    }
    if let Some(s) = &a.attacker {
        b.attacker.clone_from(s);
    }
    if let Some(s) = &a.victim {
        b.target.clone_from(s);
    }
    b
}

/// Resolve selectors to cases, in the order given.
pub fn select_cases(a: &CaseArgs) -> Result<Vec<AttackCase>, CliError> {
    let mut out = Vec::new();
    for sel in &a.attacks {
        let sel = sel.trim();
        if sel.eq_ignore_ascii_case("all") {
            if a.variant.is_some() {
                return Err(CliError::usage("--variant cannot be combined with `all`"));
            }
            if a.spoof.is_none() && a.attacker.is_none() && a.victim.is_none() {
                out.extend(full_corpus(a.seed));
                continue;
            }
            for id in AttackId::ALL {
                for variant in 0..id.variants() {
                    out.push(generate(id, &bindings_for(&[id], a), &GenOptions { variant, seed: a.seed })?);
                }
            }
            continue;
        }
        let ids = sel.split('+').map(str::parse).collect::<Result<Vec<AttackId>, _>>()?;
        let opts = GenOptions { variant: a.variant.unwrap_or(0), seed: a.seed };
        let b = bindings_for(&ids, a);
        out.push(match ids.as_slice() {
            [id] => generate(*id, &b, &opts)?,
            _ => combine(&ids, &b, &opts)?,
        });
    }
    Ok(out)
}

pub struct GenOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

pub fn cmd_gen(cfg: &HarnessConfig, a: &GenArgs) -> Result<GenOutput, CliError> {
    let cases = select_cases(&a.cases)?;
    let dir = a.out.clone().unwrap_or_else(|| cfg.output_dir.join("corpus"));
    let manifest = export_corpus(&cases, &dir)?;
    Ok(GenOutput { dir, manifest })
}

pub struct SimulateOutput {
    pub dir: PathBuf,
    pub reports: Vec<ChainReport>,
    pub matrix: ResultMatrix,
}

pub const REPORTS_FILE: &str = "reports.json";
pub const MATRIX_JSON: &str = "matrix.json";
pub const MATRIX_TEXT: &str = "matrix.txt";
pub const LIVE_FILE: &str = "live.json";

fn scenarios_named(cfg: &HarnessConfig, names: &[String]) -> Result<Vec<Scenario>, CliError> {
    if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
        return Ok(cfg.scenarios()?);
    }
    if names.is_empty() {
        return Ok(vec![cfg.scenario(&cfg.default_scenario)?]);
    }
    names.iter().map(|n| cfg.scenario(n).map_err(CliError::from)).collect()
}

/// Run every case under every named scenario. Successful attacks are
/// findings, not errors.
pub fn cmd_simulate(cfg: &HarnessConfig, a: &SimulateArgs) -> Result<SimulateOutput, CliError> {
    a.format.parse::<Format>()?;
    let scenarios = scenarios_named(cfg, &a.scenario)?;
    let cases = match &a.corpus {
        Some(p) => read_manifest(p)?.cases(),
        None => full_corpus(a.seed),
    };
    let mut reports = Vec::with_capacity(cases.len() * scenarios.len());
    for s in &scenarios {
        for r in run_batch(&cases, s) {
            reports.push(r?);
        }
    }
    let matrix = aggregate(&reports);
    let dir = a.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    write_file(&dir.join(REPORTS_FILE), &to_json(&reports)?)?;
    write_file(&dir.join(MATRIX_JSON), &emit(&matrix, Format::Json))?;
    write_file(&dir.join(MATRIX_TEXT), &emit(&matrix, Format::TextTable))?;
    Ok(SimulateOutput { dir, reports, matrix })
}

pub struct LiveOutput {
    pub dir: PathBuf,
    pub attempts: Vec<LiveAttempt>,
    /// Error text of each failed attempt.
    pub failures: Vec<String>,
}

/// Deliver each selected case `repeat` times. Transcripts are written for
/// every attempt that opened a connection.
pub fn cmd_live(cfg: &HarnessConfig, a: &LiveArgs, env: &LiveEnv) -> Result<LiveOutput, CliError> {
    let target = TargetConfig::load(&a.target)?;
    let cases = select_cases(&a.cases)?;
    if !target.consent_ack {
        return Err(CliError::env(format!(
            "{}: consent_ack is not set; refusing to send anything",
            a.target.display()
        )));
    }
    let (channel, tag, key) = if a.imap {
        let imap = target.imap.as_ref().ok_or_else(|| CliError::env("target has no [imap] section"))?;
        (Channel::Imap, "imap", imap.key())
    } else {
        (Channel::Smtp, "smtp", target.smtp_key())
    };
    let dir = a.out.clone().unwrap_or_else(|| cfg.output_dir.join("live"));
    let mut out = LiveOutput { dir: dir.clone(), attempts: Vec::new(), failures: Vec::new() };
    for case in &cases {
        for (i, r) in deliver_repeated(case, &target, env, channel, a.repeat).iter().enumerate() {
            let n = i as u32 + 1;
            let transcript = match r {
                Ok(t) => Some(t),
                Err(f) => Some(&f.transcript).filter(|t| !t.entries.is_empty()),
            };
            let path = match transcript {
                Some(t) => {
                    let p = dir.join("transcripts").join(format!("{}_{tag}_{n}.log", case.slug()));
                    write_file(&p, t.to_text().as_bytes())?;
                    Some(p.display().to_string())
                }
                None => None,
            };
            if let Err(f) = r {
                out.failures.push(format!("{} attempt {n}: {f}", case.label()));
            }
            out.attempts.push(to_attempt(case, &key, n, r, path));
        }
    }
    write_file(&dir.join(LIVE_FILE), &to_json(&out.attempts)?)?;
    Ok(out)
}

enum Input {
    Reports(Vec<ChainReport>),
    Matrix(ResultMatrix),
}

fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::env(format!("{}: {e}", path.display())))?;
    if let Ok(r) = serde_json::from_slice::<Vec<ChainReport>>(&bytes) {
        return Ok(Input::Reports(r));
    }
    parse_matrix(&bytes)
        .map(Input::Matrix)
        .map_err(|e| CliError::env(format!("{}: neither reports nor a matrix: {e}", path.display())))
}

/// Render matrix and advice bytes for `report`.
pub fn cmd_report(a: &ReportArgs) -> Result<Vec<u8>, CliError> {
    let format: Format = a.format.parse()?;
    let mut reports = Vec::new();
    let mut matrix = None;
    for p in &a.input {
        match read_input(p)? {
            Input::Reports(mut r) => reports.append(&mut r),
            Input::Matrix(m) if a.input.len() == 1 => matrix = Some(m),
            Input::Matrix(_) => {
                return Err(CliError::usage("a matrix file cannot be merged with other inputs; pass reports.json files"))
            }
        }
    }
    if a.advise && matrix.is_some() {
        return Err(CliError::usage("--advise needs reports.json input"));
    }
    let mut m = matrix.unwrap_or_else(|| aggregate(&reports));
    if let Some(p) = &a.live {
        let bytes = fs::read(p).map_err(|e| CliError::env(format!("{}: {e}", p.display())))?;
        let live: Vec<LiveAttempt> =
            serde_json::from_slice(&bytes).map_err(|e| CliError::env(format!("{}: {e}", p.display())))?;
        m = m.with_live(live);
    }
    let mut out = emit(&m, format);
    if a.advise && format == Format::TextTable {
        let mut advised: Vec<(String, Vec<String>)> = reports
            .iter()
            .filter(|r| r.success)
            .map(|r| (format!("{} [{}]", r.case_id, r.scenario), advise(r)))
            .collect();
        advised.sort();
        out.extend_from_slice(b"\nAdvisories\n");
        for (head, lines) in advised {
            out.extend_from_slice(format!("{head}\n").as_bytes());
            for l in lines {
                out.extend_from_slice(format!("  - {l}\n").as_bytes());
            }
        }
    }
    Ok(out)
}

fn say(stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    stdout.write_all(bytes).map_err(|e| CliError::env(format!("stdout: {e}")))
}

/// Run one parsed command line.
pub fn run(cli: &Cli, env: &LiveEnv, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Report(a) => {
            let bytes = cmd_report(a)?;
            match &a.out {
                Some(p) => write_file(p, &bytes),
                None => say(stdout, &bytes),
            }
        }
        Command::Gen(a) => {
            let g = cmd_gen(&cli.harness_config()?, a)?;
            let files: usize = g.manifest.entries.iter().map(|e| e.files.len()).sum();
            say(stdout, format!("wrote {files} files for {} cases to {}\n", g.manifest.entries.len(), g.dir.display()).as_bytes())
        }
        Command::Simulate(a) => {
            let s = cmd_simulate(&cli.harness_config()?, a)?;
            say(stdout, &emit(&s.matrix, a.format.parse()?))
        }
        Command::Live(a) => {
            let l = cmd_live(&cli.harness_config()?, a, env)?;
            for at in &l.attempts {
                let t = at.transcript.as_deref().unwrap_or("no transcript");
                say(stdout, format!("{} attempt {}: {} ({t})\n", at.case_id, at.attempt, at.outcome).as_bytes())?;
            }
            match l.failures.first() {
                None => Ok(()),
                Some(first) => Err(CliError::env(format!("{} of {} attempts failed; first: {first}", l.failures.len(), l.attempts.len()))),
            }
        }
    }
}
