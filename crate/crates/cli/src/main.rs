use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use semitoric::fibration::{bifurcation_diagram, develop_affine, DevelopOptions};
use semitoric::invariants::{default_window, semitoric_invariants, InvariantOptions, MonteCarloOptions};
use semitoric::models::builtin::BUILTINS;
use semitoric::models::{builtin, SystemDescriptor, SystemModel, ValueWindow};
use semitoric::polygons::Pt;
use semitoric::polygons::svg::{polygon_svg, side_by_side, Canvas, SvgStyle};
use semitoric::quantum::convergence_study;
use semitoric::singularities::{find_critical_points, is_semitoric, SearchRegion};

const DEFAULT_SEED: u64 = 20_240_611;
const FORMATS: [&str; 3] = ["csv", "json", "svg"];

#[derive(Parser)]
#[command(name = "semitoric", version, about = "Singularities, invariants and joint spectra of integrable systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the builtin systems.
    Systems,
    /// Critical points and the bifurcation diagram.
    Analyze(RunArgs),
    /// The semitoric invariants and the polygon.
    Invariants(RunArgs),
    /// Joint spectra of the quantum spin-oscillator and polygon recovery.
    Spectrum(RunArgs),
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    /// JSON config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin id or path to a JSON system descriptor.
    #[arg(long)]
    system: Option<String>,
    /// Value window j0,j1,h0,h1.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Planck constant; repeatable (spectrum only).
    #[arg(long, allow_hyphen_values = true)]
    hbar: Vec<f64>,
    /// Oscillator basis size (spectrum only).
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats, comma separated subset of csv,json,svg.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override KEY=VAL; repeatable.
    #[arg(long)]
    tol: Vec<String>,
}

#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    system: Option<String>,
    window: Option<[f64; 4]>,
    resolution: Option<usize>,
    tolerances: Option<BTreeMap<String, f64>>,
    output_dir: Option<PathBuf>,
    formats: Option<Vec<String>>,
    seed: Option<u64>,
    hbar: Option<Vec<f64>>,
    truncation: Option<usize>,
}

#[derive(Serialize, Clone, Debug)]
struct RunConfig {
    command: String,
    system: String,
    window: Option<[f64; 4]>,
    resolution: usize,
    tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    output_dir: PathBuf,
    formats: Vec<String>,
    seed: u64,
    hbar: Vec<f64>,
    truncation: usize,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    kind: String,
    message: String,
    details: Option<Value>,
}

impl From<semitoric::Error> for CliError {
    fn from(e: semitoric::Error) -> Self {
        CliError {
            code: e.exit_code() as u8,
            kind: e.kind().to_string(),
            message: e.to_string(),
            details: None,
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        kind: "config".into(),
        message: msg.into(),
        details: None,
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: 3,
        kind: "io".into(),
        message: format!("{}: {e}", path.display()),
        details: None,
    }
}

fn parse_window(s: &str) -> Result<[f64; 4], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_error(format!("window `{s}` is not four comma-separated numbers")))?;
    <[f64; 4]>::try_from(v).map_err(|_| config_error(format!("window `{s}` needs exactly four numbers")))
}

fn resolve(command: &str, args: &RunArgs) -> Result<RunConfig, CliError> {
    let file: FileConfig = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError { code: 2, ..io_error(p, e) })?;
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let window = match &args.window {
        Some(s) => Some(parse_window(s)?),
        None => file.window,
    };
    if let Some(w) = window {
        ValueWindow::new(w[0], w[1], w[2], w[3])?;
    }
    let resolution = args.resolution.or(file.resolution).unwrap_or(64);
    if resolution < 8 {
        return Err(config_error(format!("resolution must be at least 8, got {resolution}")));
    }
    let mut tolerances = file.tolerances.unwrap_or_default();
    for t in &args.tol {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| config_error(format!("tolerance `{t}` is not KEY=VAL")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| config_error(format!("tolerance `{t}` has a non-numeric value")))?;
        tolerances.insert(k.to_string(), v);
    }
    let formats: Vec<String> = match &args.format {
        Some(f) => f.split(',').map(|s| s.trim().to_string()).collect(),
        None => file.formats.unwrap_or_else(|| FORMATS.iter().map(|s| s.to_string()).collect()),
    };
    if let Some(bad) = formats.iter().find(|f| !FORMATS.contains(&f.as_str())) {
        return Err(config_error(format!("unknown format `{bad}`")));
    }
    let hbar = if args.hbar.is_empty() {
        file.hbar.unwrap_or_else(|| vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0])
    } else {
        args.hbar.clone()
    };
    if let Some(h) = hbar.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(config_error(format!("ħ must be positive, got {h}")));
    }
    Ok(RunConfig {
        command: command.to_string(),
        system: args
            .system
            .clone()
            .or(file.system)
            .unwrap_or_else(|| "spin-oscillator".into()),
        window,
        resolution,
        tolerances,
        output_dir: args.out.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        formats,
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        hbar,
        truncation: args.truncation.or(file.truncation).unwrap_or(128),
    })
}

fn load_system(cfg: &RunConfig) -> Result<SystemModel, CliError> {
    let mut system = match builtin(&cfg.system) {
        Some(s) => s,
        None => {
            let p = Path::new(&cfg.system);
            if !p.exists() {
                return Err(config_error(format!("`{}` is neither a builtin id nor a file", cfg.system)));
            }
            let text = fs::read_to_string(p).map_err(|e| CliError { code: 2, ..io_error(p, e) })?;
            let desc: SystemDescriptor =
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            SystemModel::from_descriptor(&desc)?
        }
    };
    for (k, v) in &cfg.tolerances {
        system.tolerances.set(k, *v)?;
    }
    Ok(system)
}

fn window_for(cfg: &RunConfig, system: &SystemModel) -> Result<ValueWindow, CliError> {
    match cfg.window {
        Some(w) => Ok(ValueWindow::new(w[0], w[1], w[2], w[3])?),
        None => Ok(default_window(system).or_else(|_| ValueWindow::new(-2.0, 2.0, -2.0, 2.0))?),
    }
}

struct Output<'a> {
    cfg: &'a RunConfig,
    meta: Value,
    written: Vec<String>,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let canonical = serde_json::to_string(cfg).expect("config serializes");
        let hash: String = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
        Ok(Output {
            cfg,
            meta: json!({
                "tool": "semitoric",
                "version": env!("CARGO_PKG_VERSION"),
                "config_hash": hash,
                "seed": cfg.seed,
                "config": cfg,
            }),
            written: Vec::new(),
        })
    }

    fn wants(&self, format: &str) -> bool {
        self.cfg.formats.iter().any(|f| f == format)
    }

    fn header(&self) -> String {
        format!(
            "tool=semitoric version={} config_hash={} seed={}",
            env!("CARGO_PKG_VERSION"),
            self.meta["config_hash"].as_str().unwrap_or(""),
            self.cfg.seed
        )
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.cfg.output_dir.join(name);
        fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, result: Value) -> Result<(), CliError> {
        if !self.wants("json") {
            return Ok(());
        }
        let doc = json!({ "meta": self.meta, "result": result });
        let text = serde_json::to_string_pretty(&doc).expect("json serializes") + "\n";
        self.write(name, &text)
    }

    fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        if !self.wants("csv") {
            return Ok(());
        }
        let text = format!("# {}\n{body}", self.header());
        self.write(name, &text)
    }

    fn svg(&mut self, name: &str, make: impl FnOnce(&str) -> String) -> Result<(), CliError> {
        if !self.wants("svg") {
            return Ok(());
        }
        let text = make(&self.header());
        self.write(name, &text)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn cmd_systems() {
    println!("{:<20} {:<18} {:<8} {:<10} note", "id", "manifold", "J proper", "semitoric");
    for b in BUILTINS.iter() {
        println!(
            "{:<20} {:<18} {:<8} {:<10} {}",
            b.id,
            b.manifold.id(),
            if b.j_is_proper { "yes" } else { "no" },
            if b.semitoric { "yes" } else { "no" },
            b.note
        );
    }
}

fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let system = load_system(cfg)?;
    let window = window_for(cfg, &system)?;
    let search = find_critical_points(&system, SearchRegion::from_window(window), 8, 1e-12)?;
    let diagram = bifurcation_diagram(&system, window, cfg.resolution)?;
    let (rank0, rank1): (Vec<_>, Vec<_>) = search.points.iter().partition(|p| p.rank == 0);
    let mut out = Output::new(cfg)?;
    out.json(
        "critical_points.json",
        json!({
            "system": system.name,
            "window": window,
            "critical_points": rank0,
            "rank1_samples": rank1,
            "diagnostics": search.diagnostics,
        }),
    )?;
    out.csv("bifurcation.csv", &diagram.to_csv())?;
    out.svg("bifurcation.svg", |h| diagram.to_svg(h))?;
    println!(
        "{}: {} rank-0 critical points, {} rank-1 samples",
        system.name,
        rank0.len(),
        rank1.len()
    );
    for p in &rank0 {
        println!("  {} at ({:.6}, {:.6})", p.type_name(), p.value.0, p.value.1);
    }
    for f in &out.written {
        println!("wrote {f}");
    }
    Ok(())
}

fn cmd_invariants(cfg: &RunConfig) -> Result<(), CliError> {
    let system = load_system(cfg)?;
    let window = window_for(cfg, &system)?;
    let verdict = is_semitoric(&system, SearchRegion::from_window(window))?;
    if !verdict.semitoric {
        return Err(CliError {
            code: 4,
            kind: "precondition".into(),
            message: format!("{} is not semitoric: {}", system.name, verdict.reasons.join("; ")),
            details: Some(to_value(&verdict)),
        });
    }
    let opts = InvariantOptions {
        window: Some(window),
        resolution: cfg.resolution,
        monte_carlo: MonteCarloOptions {
            seed: cfg.seed,
            ..MonteCarloOptions::default()
        },
        ..InvariantOptions::default()
    };
    let inv = semitoric_invariants(&system, &opts)?;
    let rep = &inv.polygon_class.representative;
    let mut out = Output::new(cfg)?;
    out.json("invariants.json", to_value(&inv))?;
    out.json("polygon.json", to_value(rep))?;
    let origins: Vec<f64> = rep
        .cuts
        .iter()
        .zip(&inv.heights)
        .map(|(c, h)| {
            let lo = rep.polygon.vertical_section(&c.x).map(|s| Pt::new(c.x.clone(), s.0).to_f64().1);
            lo.unwrap_or(0.0) + h
        })
        .collect();
    let pts: Vec<(f64, f64)> = rep.polygon.vertices().iter().map(|p| p.to_f64()).collect();
    let (x0, x1) = (window.j.0, window.j.1);
    let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - 0.5;
    let y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + 0.5;
    out.svg("polygon.svg", |h| polygon_svg(rep, &origins, SvgStyle::new((x0, x1), (y0, y1)), h))?;
    println!("{}: m_f = {}", system.name, inv.m_f);
    for (i, t) in inv.taylor_linear.iter().enumerate() {
        println!(
            "  focus {i} at ({:.6}, {:.6}): taylor ({:.6}, {:.6}), height {:.6}, twisting {}",
            inv.focus_values[i].0, inv.focus_values[i].1, t.0, t.1, inv.heights[i], inv.twisting[i]
        );
    }
    println!("  polygon vertices: {:?}", pts);
    for f in &out.written {
        println!("wrote {f}");
    }
    Ok(())
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<(), CliError> {
    let system = load_system(cfg)?;
    if builtin(&cfg.system).is_none() || cfg.system != "spin-oscillator" {
        return Err(semitoric::Error::Unsupported("the quantum model exists for the spin-oscillator only".into()).into());
    }
    let classical_window = window_for(cfg, &system)?;
    let diagram = bifurcation_diagram(&system, classical_window, cfg.resolution)?;
    let cuts: Vec<(f64, i8)> = diagram.focus_focus_values().iter().map(|v| (v.0, 1)).collect();
    let signs: Vec<i8> = cuts.iter().map(|c| c.1).collect();
    let dev = develop_affine(&system, &diagram, &signs, DevelopOptions::default())?;
    let w = classical_window;
    // the spectrum window keeps whole columns: widen H
    let hspan = w.h.0.abs().max(w.h.1.abs()) * 1.5;
    let qwindow = ValueWindow::new(w.j.0, w.j.1, -hspan, hspan)?;
    let (report, runs) = convergence_study(&cfg.hbar, cfg.truncation, qwindow, &dev.polygon.polygon, &cuts)?;
    let mut out = Output::new(cfg)?;
    for (i, (spec, rec)) in runs.iter().enumerate() {
        out.csv(&format!("spectrum_{i}.csv"), &spec.to_csv())?;
        out.json(
            &format!("recovered_{i}.json"),
            json!({
                "hbar": spec.hbar,
                "spin_dim": spec.spin_dim,
                "polygon": rec.polygon,
                "counts_in": rec.counts_in,
                "counts_out": rec.counts_out,
                "counts_preserved": rec.counts_in == rec.counts_out,
            }),
        )?;
    }
    out.json(
        "convergence.json",
        json!({
            "classical_polygon": dev.polygon,
            "window": qwindow,
            "report": report,
            "counts_preserved": report.entries.iter().all(|e| e.counts_preserved),
        }),
    )?;
    if let Some((spec, rec)) = runs.last() {
        let ys = |p: &[(f64, f64)]| {
            let lo = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
            let hi = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
            (lo - 0.2, hi + 0.2)
        };
        let mut raw = Canvas::new(SvgStyle::new(qwindow.j, ys(&spec.points)));
        for &p in &spec.points {
            raw.dot(p, 1.2, "black");
        }
        let mut dvl = Canvas::new(SvgStyle::new(qwindow.j, ys(&rec.developed)));
        let reach = 2.0 * (qwindow.j.1 - qwindow.j.0);
        let target = semitoric::quantum::clip_to_strip(&dev.polygon.polygon, qwindow.j.0, qwindow.j.1, reach);
        dvl.polygon(&target, "#8fb3d9");
        for &p in &rec.developed {
            dvl.dot(p, 1.2, "black");
        }
        out.svg("comparison.svg", |h| side_by_side(raw, dvl, h))?;
    }
    println!("{:>10} {:>9} {:>8} {:>12} {:>12} {:>8}", "hbar", "spin_dim", "points", "hausdorff", "commutator", "counts");
    for e in &report.entries {
        println!(
            "{:>10.6} {:>9} {:>8} {:>12.6} {:>12.2e} {:>8}",
            e.hbar,
            e.spin_dim,
            e.points,
            e.hausdorff,
            e.commutator,
            if e.counts_preserved { "kept" } else { "CHANGED" }
        );
    }
    println!(
        "monotone: {}, final hausdorff/hbar: {:.3}",
        report.monotone, report.final_ratio
    );
    for f in &out.written {
        println!("wrote {f}");
    }
    Ok(())
}

fn report_error(e: &CliError, out_dir: Option<&Path>) {
    let doc = json!({
        "error": {
            "kind": e.kind,
            "message": e.message,
            "exit_code": e.code,
            "details": e.details,
        }
    });
    let text = serde_json::to_string_pretty(&doc).expect("json serializes");
    eprintln!("{text}");
    if let Some(dir) = out_dir {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join("error.json"), text + "\n");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.cmd {
        Cmd::Systems => {
            cmd_systems();
            return ExitCode::SUCCESS;
        }
        Cmd::Analyze(a) => ("analyze", a),
        Cmd::Invariants(a) => ("invariants", a),
        Cmd::Spectrum(a) => ("spectrum", a),
    };
    let cfg = match resolve(name, args) {
        Ok(c) => c,
        Err(e) => {
            report_error(&e, args.out.as_deref());
            return ExitCode::from(e.code);
        }
    };
    let result = match name {
        "analyze" => cmd_analyze(&cfg),
        "invariants" => cmd_invariants(&cfg),
        _ => cmd_spectrum(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e, Some(&cfg.output_dir));
            ExitCode::from(e.code)
        }
    }
}
