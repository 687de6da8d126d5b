//! Command-line surface for the torus linearization toolkit: run the modified
//! iteration on a perturbation archive, check nonresonance conditions by
//! brute force, probe a scheme's envelope series, and run the randomized
//! inequality suite.
//!
//! Every artifact embeds the digest of its run manifest (the resolved
//! parameters and input digests), so identical invocations produce
//! byte-identical outputs and any artifact can be traced back to the exact
//! command that made it. Files are written through a temporary sibling and an
//! atomic rename.
//!
//! Exit codes: `0` success, `1` a verdict failed (a nonresonance scan, the
//! inequality suite, or a scheme's boundedness heuristics report failure),
//! `2` usage or input-parse errors, `3` numeric precondition or runtime
//! errors (resonant data, resource caps, violated smallness hypotheses). An
//! iteration run that aborts mid-way still writes its partial artifacts
//! before exiting `3`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use torlin::io::{atomic_write, field_from_json, to_json, trace_csv, FieldDto, Manifest};
use torlin::iterate::{kam_iterate, IterationConfig};
use torlin::lemmas::{run_suite, SuiteReport};
use torlin::nonres::{diophantine_verify, DioCondition};
use torlin::schemes::{series_scan, weight_ratio_scan, RhoReport, Scheme, SeriesReport};
use torlin::{Error, Frequency, IndexNorm, Result, Weight, Window};

#[derive(Parser)]
#[command(
    name = "torlin",
    version,
    about = "Linearize perturbed constant vector fields on the torus",
    after_help = "The KAM_THREADS environment variable caps the worker count \
                  for lattice scans (default: all cores). All file paths are \
                  taken literally; there is no implicit configuration."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the iteration: compute the modifying term and the conjugating
    /// transformation for a perturbation archive, writing a stage trace CSV
    /// and a summary JSON plus the transformation archive.
    RunKam(RunKamArgs),
    /// Brute-force a nonresonance condition over all modes with norm value
    /// up to a cap, reporting the worst margin.
    CheckNonresonance(CheckArgs),
    /// Probe a scheme's envelope series and shell-weight ratios over a
    /// finite horizon and report the tables with boundedness verdicts.
    SchemeReport(SchemeArgs),
    /// Run the randomized inequality suite over seeded instances and report
    /// the worst relative slack per check.
    VerifyLemmas(LemmaArgs),
}

#[derive(Args)]
struct RunKamArgs {
    /// Unperturbed frequency: comma-separated numbers (the token `phi`
    /// denotes the golden ratio) or a path to a JSON number array.
    #[arg(long)]
    omega: String,
    /// Perturbation field archive (JSON).
    #[arg(long)]
    perturbation: PathBuf,
    /// Scheme spec: `dio:<b>:<beta>`, `gevrey:<b>:<eta>:<eta'>:<theta>`,
    /// `cinf:<b>:<a>:<A>:<kappa>[:<fn>]`, `subexp:<b>:<zeta>:<zeta'>`,
    /// or `logpow:<b>:<a>:<kappa>`.
    #[arg(long)]
    scheme: String,
    /// Override the truncation growth base of the scheme geometry.
    #[arg(long)]
    b: Option<f64>,
    /// Base analyticity width.
    #[arg(long)]
    r: f64,
    /// Envelope contraction ratio; defaults to half the scheme's admissible
    /// upper bound.
    #[arg(long)]
    q: Option<f64>,
    /// Index of the last stage; the run performs `nu-max + 1` steps.
    #[arg(long)]
    nu_max: u32,
    /// Fixed-point tolerance per step; default scales with the defect norm.
    #[arg(long)]
    tol: Option<f64>,
    /// Abort when a step's sufficient smallness conditions fail instead of
    /// recording them as warnings.
    #[arg(long)]
    enforce_smallness: bool,
    /// Entry bound on the weighted perturbation norm; exceeding it is a
    /// hard error.
    #[arg(long)]
    threshold: Option<f64>,
    /// Defect-grid points per coordinate; 0 keeps the 64-point default.
    #[arg(long, default_value_t = 0)]
    grid: usize,
    /// Stage trace CSV output path.
    #[arg(long)]
    trace: PathBuf,
    /// Summary JSON output path; the transformation archive is written next
    /// to it as `<stem>.psi.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Frequency: comma-separated numbers (`phi` allowed) or a JSON file.
    #[arg(long)]
    omega: String,
    /// Condition spec: `product:<gamma*>:<mu>` or `ratio:<fn>:<gamma*>`
    /// with `<fn>` one of `poly:L`, `exppow:z`, `logpow:[kappa:]a`.
    #[arg(long)]
    spec: String,
    /// Scan every mode with norm value in (0, kmax].
    #[arg(long)]
    kmax: f64,
    /// Index norm spec: `sup`, `eta:<e>`, or `w:<fn>`.
    #[arg(long, default_value = "sup")]
    norm: String,
    /// Window coordinate labels, comma-separated; defaults to `1..=d`.
    #[arg(long)]
    coords: Option<String>,
    /// Report JSON output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SchemeArgs {
    /// Scheme spec; same grammar as `run-kam --scheme`.
    #[arg(long)]
    scheme: String,
    /// Frequency: comma-separated numbers (`phi` allowed) or a JSON file.
    #[arg(long)]
    omega: String,
    /// Override the scheme's coefficient-decay majorant, e.g.
    /// `weight:poly:2` or `weight:gevrey:0.5`.
    #[arg(long)]
    weight: Option<String>,
    /// Number of stages to scan beyond the first.
    #[arg(long, default_value_t = 12)]
    horizon: u32,
    /// Envelope contraction ratio; defaults to half the scheme's admissible
    /// upper bound.
    #[arg(long)]
    q: Option<f64>,
    /// Window coordinate labels, comma-separated; defaults to `1..=d`.
    #[arg(long)]
    coords: Option<String>,
    /// Report JSON output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LemmaArgs {
    /// Seed for the instance generator.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of random instances per check.
    #[arg(long, default_value_t = 200)]
    cases: usize,
    /// Report JSON output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Summary artifact of an iteration run.
#[derive(Serialize)]
struct RunSummary {
    manifest_digest: String,
    manifest: Manifest,
    /// Accumulated modifying term.
    omega_tilde: Vec<f64>,
    /// File name of the transformation archive next to this summary.
    psi_hat: String,
    /// Grid-sampled conjugacy defect of the final state.
    final_defect: f64,
    stages: usize,
    envelope_c: f64,
    p_weighted_norm: f64,
    warnings: Vec<String>,
    aborted: Option<String>,
}

/// Nonresonance report artifact.
#[derive(Serialize)]
struct CheckSummary {
    manifest_digest: String,
    manifest: Manifest,
    pass: bool,
    worst_margin: f64,
    worst_k: Vec<i64>,
    delta: Option<f64>,
    modes_checked: u64,
}

/// Boundedness verdicts of a scheme report. These are trailing-window
/// stabilization tests over the scanned horizon, not asymptotic proofs.
#[derive(Serialize)]
struct SchemeVerdicts {
    series_bounded_finite_horizon: bool,
    weight_ratios_bounded_finite_horizon: bool,
    note: &'static str,
}

/// Scheme report artifact.
#[derive(Serialize)]
struct SchemeSummary {
    manifest_digest: String,
    manifest: Manifest,
    scheme: Scheme,
    q: f64,
    horizon: u32,
    series: SeriesReport,
    weight_ratios: RhoReport,
    verdicts: SchemeVerdicts,
}

/// Inequality suite artifact.
#[derive(Serialize)]
struct LemmaSummary {
    manifest_digest: String,
    manifest: Manifest,
    suite: SuiteReport,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::RunKam(a) => run_kam(a),
        Command::CheckNonresonance(a) => check_nonresonance(a),
        Command::SchemeReport(a) => scheme_report(a),
        Command::VerifyLemmas(a) => verify_lemmas(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}

/// Usage and input-parse failures exit 2; numeric precondition and runtime
/// failures exit 3.
fn exit_class(e: &Error) -> u8 {
    match e {
        Error::Parse(_)
        | Error::Parameter(_)
        | Error::WindowMismatch(_)
        | Error::ShapeMismatch(_) => 2,
        _ => 3,
    }
}

/// Comma-separated frequency entries (`phi` names the golden ratio) or a
/// path to a JSON number array; file bytes are returned for manifest
/// digesting when a file was read.
fn parse_omega(spec: &str) -> Result<(Vec<f64>, Option<Vec<u8>>)> {
    let path = Path::new(spec);
    if path.is_file() {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Parse(format!("cannot read `{spec}`: {e}")))?;
        let values: Vec<f64> = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Parse(format!("`{spec}` is not a JSON number array: {e}")))?;
        Ok((values, Some(bytes)))
    } else {
        let mut values = Vec::new();
        for tok in spec.split(',') {
            let t = tok.trim();
            values.push(match t {
                "phi" => 0.5 * (1.0 + 5f64.sqrt()),
                _ => t
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad frequency entry `{t}`")))?,
            });
        }
        Ok((values, None))
    }
}

/// Window labels from `--coords`, defaulting to `1..=d`.
fn parse_window(coords: &Option<String>, d: usize) -> Result<Arc<Window>> {
    match coords {
        Some(list) => {
            let mut labels = Vec::new();
            for tok in list.split(',') {
                let t = tok.trim();
                labels.push(
                    t.parse::<i64>()
                        .map_err(|_| Error::Parse(format!("bad coordinate label `{t}`")))?,
                );
            }
            Window::new(labels)
        }
        None => Window::new((1..=d as i64).collect()),
    }
}

/// Reports go to stdout by default, or atomically to `--out`.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, text.as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run_kam(args: RunKamArgs) -> Result<u8> {
    let pert_text = std::fs::read_to_string(&args.perturbation).map_err(|e| {
        Error::Parse(format!("cannot read `{}`: {e}", args.perturbation.display()))
    })?;
    let p = field_from_json(&pert_text)?;
    let (values, omega_bytes) = parse_omega(&args.omega)?;
    let omega = Frequency::new(p.window().clone(), values)?;
    let scheme = Scheme::parse(&args.scheme)?;
    let mut cfg = IterationConfig::for_scheme(&scheme, args.r, args.q, args.nu_max);
    if let Some(b) = args.b {
        cfg.b = b;
    }
    cfg.step_tol = args.tol;
    cfg.enforce_smallness = args.enforce_smallness;
    cfg.smallness_threshold = args.threshold;
    cfg.grid_per_dim = args.grid;
    let norm = scheme.index_norm(p.window())?;

    let mut manifest = Manifest::new("run-kam");
    manifest
        .param("omega", &args.omega)
        .param("scheme", &args.scheme)
        .param("b", cfg.b)
        .param("r", cfg.r)
        .param("q", cfg.q)
        .param("nu_max", cfg.nu_max)
        .param("enforce_smallness", cfg.enforce_smallness)
        .param("grid", cfg.grid_per_dim)
        .input("perturbation", pert_text.as_bytes());
    if let Some(t) = args.tol {
        manifest.param("tol", t);
    }
    if let Some(t) = args.threshold {
        manifest.param("threshold", t);
    }
    if let Some(bytes) = &omega_bytes {
        manifest.input("omega", bytes);
    }
    let digest = manifest.digest();

    let run = kam_iterate(&p, &omega, &cfg, &scheme.weight, &norm)?;

    atomic_write(&args.trace, trace_csv(&run.trace, &digest).as_bytes())?;
    let psi_path = args.out.with_extension("psi.json");
    let mut dto = FieldDto::from_field(&run.psi_hat);
    dto.manifest_digest = Some(digest.clone());
    atomic_write(&psi_path, to_json(&dto)?.as_bytes())?;
    let psi_name = psi_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let summary = RunSummary {
        manifest_digest: digest,
        manifest,
        omega_tilde: run.omega_tilde.clone(),
        psi_hat: psi_name,
        final_defect: run.final_defect,
        stages: run.trace.len(),
        envelope_c: run.envelope_c,
        p_weighted_norm: run.p_weighted_norm,
        warnings: run.warnings.clone(),
        aborted: run.aborted.clone(),
    };
    atomic_write(&args.out, to_json(&summary)?.as_bytes())?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(reason) = &run.aborted {
        eprintln!("aborted: {reason}");
        return Ok(3);
    }
    Ok(0)
}

fn check_nonresonance(args: CheckArgs) -> Result<u8> {
    let (values, omega_bytes) = parse_omega(&args.omega)?;
    let window = parse_window(&args.coords, values.len())?;
    let omega = Frequency::new(window.clone(), values)?;
    let cond = DioCondition::parse(&args.spec)?;
    let norm = IndexNorm::parse(&args.norm, window)?;
    let mut manifest = Manifest::new("check-nonresonance");
    manifest
        .param("omega", &args.omega)
        .param("spec", &args.spec)
        .param("kmax", args.kmax)
        .param("norm", &args.norm);
    if let Some(c) = &args.coords {
        manifest.param("coords", c);
    }
    if let Some(bytes) = &omega_bytes {
        manifest.input("omega", bytes);
    }
    let report = diophantine_verify(&omega, &cond, args.kmax, &norm)?;
    // the condition is symmetric under k -> -k; report the representative
    // of the worst pair whose first nonzero entry is positive
    let mut worst_k = report.worst_k.clone();
    if worst_k.iter().find(|v| **v != 0).is_some_and(|v| *v < 0) {
        for v in &mut worst_k {
            *v = -*v;
        }
    }
    let summary = CheckSummary {
        manifest_digest: manifest.digest(),
        manifest,
        pass: report.pass,
        worst_margin: report.worst_margin,
        worst_k,
        delta: report.delta,
        modes_checked: report.modes_checked,
    };
    emit(&args.out, &to_json(&summary)?)?;
    Ok(if report.pass { 0 } else { 1 })
}

fn scheme_report(args: SchemeArgs) -> Result<u8> {
    let (values, omega_bytes) = parse_omega(&args.omega)?;
    let window = parse_window(&args.coords, values.len())?;
    let omega = Frequency::new(window, values)?;
    let mut scheme = Scheme::parse(&args.scheme)?;
    if let Some(w) = &args.weight {
        scheme.weight = Weight::parse(w)?;
    }
    let q = args.q.unwrap_or_else(|| scheme.q_default());
    let mut manifest = Manifest::new("scheme-report");
    manifest
        .param("scheme", &args.scheme)
        .param("omega", &args.omega)
        .param("q", q)
        .param("horizon", args.horizon);
    if let Some(w) = &args.weight {
        manifest.param("weight", w);
    }
    if let Some(c) = &args.coords {
        manifest.param("coords", c);
    }
    if let Some(bytes) = &omega_bytes {
        manifest.input("omega", bytes);
    }
    let series = series_scan(&scheme, &omega, q, args.horizon)?;
    let weight_ratios = weight_ratio_scan(&scheme, q, args.horizon)?;
    let pass = series.bounded_so_far && weight_ratios.bounded;
    let summary = SchemeSummary {
        manifest_digest: manifest.digest(),
        manifest,
        scheme,
        q,
        horizon: args.horizon,
        verdicts: SchemeVerdicts {
            series_bounded_finite_horizon: series.bounded_so_far,
            weight_ratios_bounded_finite_horizon: weight_ratios.bounded,
            note: "trailing-window stabilization tests over the scanned \
                   horizon, not asymptotic proofs",
        },
        series,
        weight_ratios,
    };
    emit(&args.out, &to_json(&summary)?)?;
    Ok(if pass { 0 } else { 1 })
}

fn verify_lemmas(args: LemmaArgs) -> Result<u8> {
    let mut manifest = Manifest::new("verify-lemmas");
    manifest.param("cases", args.cases);
    manifest.seed = Some(args.seed);
    let suite = run_suite(args.seed, args.cases)?;
    let pass = suite.pass;
    let summary = LemmaSummary {
        manifest_digest: manifest.digest(),
        manifest,
        suite,
    };
    emit(&args.out, &to_json(&summary)?)?;
    Ok(if pass { 0 } else { 1 })
}
