//! dwfs: simulate phase screens, wrap, unwrap, evaluate and compare methods.

mod heatmap;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dwfs::io::{read_grid, write_atomic, write_grid};
use dwfs::metrics::evaluate;
use dwfs::optics::wrap_phase;
use dwfs::pipeline::{run_method, Case, Protocol, PROTOCOL};
use dwfs::sim::apply_noise;
use dwfs::{DwfsError, MetricReport, PhaseGrid, RunConfig, UnwrapReport};
use rayon::prelude::*;

const METRICS_NOTE: &str = "# metrics on piston-aligned phases; ssim and ms_ssim on the aperture bounding box scaled by the truth range";

/// Failure classes, mapped to the process exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Numerical(m) => m,
        }
    }

    /// Classify a library error raised while computing.
    fn run(e: DwfsError) -> Self {
        match e {
            DwfsError::Validation(_) => Failure::Numerical(e.to_string()),
            DwfsError::Format(_) | DwfsError::Io(_) => Failure::Io(e.to_string()),
        }
    }

    /// Classify a library error raised while interpreting parameters.
    fn param(e: DwfsError) -> Self {
        match e {
            DwfsError::Validation(_) => Failure::Usage(e.to_string()),
            other => Failure::run(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_at(path: &Path) -> CliResult<PhaseGrid> {
    read_grid(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_at(path: &Path, g: &PhaseGrid) -> CliResult<()> {
    write_grid(path, g).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes()).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

#[derive(Parser)]
#[command(name = "dwfs", version, about = "Phase unwrapping with digital wavefront sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate truth, wrapped and noisy wrapped grids for a range of seeds
    Simulate(SimulateArgs),
    /// Wrap a grid into (-pi, pi], optionally adding noise
    Wrap(WrapArgs),
    /// Unwrap a wrapped grid with the selected method
    Unwrap(UnwrapArgs),
    /// Compare a reconstruction against ground truth
    Evaluate(EvaluateArgs),
    /// Run several methods over several seeds and tabulate the metrics
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory
    #[arg(long)]
    output: PathBuf,
    /// Grid size
    #[arg(long, default_value_t = PROTOCOL.n)]
    n: usize,
    /// Turbulence strength in pixels (smaller is stronger)
    #[arg(long, default_value_t = PROTOCOL.r0_px)]
    r0: f64,
    /// Noise level relative to the wrapped-phase RMS
    #[arg(long, default_value_t = PROTOCOL.noise)]
    noise: f64,
    /// First seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Also write a heatmap of the first noisy grid
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct WrapArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Noise level relative to the wrapped-phase RMS
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    png: Option<PathBuf>,
}

/// Method parameters shared by `unwrap` and `compare`; unset flags keep the
/// configured or default value.
#[derive(Args, Default)]
struct ParamArgs {
    /// Subapertures per axis for sh (default N / 8)
    #[arg(long)]
    n_sub: Option<String>,
    /// Shape-function scale
    #[arg(long)]
    c: Option<String>,
    /// Preconditioner exponent
    #[arg(long)]
    s: Option<String>,
    /// Nonlinear start: zero | linear
    #[arg(long)]
    start: Option<String>,
    /// Modulation radius in diffraction widths (0 disables modulation)
    #[arg(long)]
    mod_radius: Option<String>,
    #[arg(long)]
    mod_steps: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    /// Gradient-norm tolerance
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ParamArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        let pairs = [
            ("n_sub", &self.n_sub),
            ("c", &self.c),
            ("s", &self.s),
            ("start", &self.start),
            ("mod_radius", &self.mod_radius),
            ("mod_steps", &self.mod_steps),
            ("max_iters", &self.max_iters),
            ("tol", &self.tol),
            ("seed", &self.seed),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v).map_err(Failure::param)?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct UnwrapArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ground truth; adds metrics to the report
    #[arg(long)]
    truth: Option<PathBuf>,
    /// sh | p4_linear | p4_nope | fourier:<kind> | columnwise | mrp | pe
    #[arg(long)]
    method: Option<String>,
    /// key = value configuration file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    png: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reconstruction
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Wrapped input, for the residue count
    #[arg(long)]
    wrapped: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Methods to run (repeatable or comma separated); "tie" is listed as external
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Configuration files, one method setup each (repeatable)
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Seeds (repeatable or comma separated)
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Directory written by `simulate`; otherwise cases are generated in memory
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = PROTOCOL.n)]
    n: usize,
    #[arg(long, default_value_t = PROTOCOL.r0_px)]
    r0: f64,
    #[arg(long, default_value_t = PROTOCOL.noise)]
    noise: f64,
    /// Also write the table here
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write every reconstruction here as <label>_seed<k>.pgrid
    #[arg(long)]
    cell_dir: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

fn case_paths(dir: &Path, seed: u64) -> [PathBuf; 3] {
    ["truth", "wrapped", "noisy"].map(|k| dir.join(format!("seed{seed}_{k}.pgrid")))
}

fn write_png(path: &Path, g: &PhaseGrid) -> CliResult<()> {
    let (bytes, side) = heatmap::render(g).map_err(|e| Failure::Io(format!("png encoding: {e}")))?;
    write_atomic(path, &bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    write_text(&path.with_extension("txt"), &side)
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.count == 0 {
        return Err(Failure::Usage("--count must be >= 1".into()));
    }
    fs::create_dir_all(&a.output).map_err(|e| Failure::Io(format!("{}: {e}", a.output.display())))?;
    let protocol = Protocol { n: a.n, r0_px: a.r0, noise: a.noise };
    let mut manifest = format!("n = {}\nr0 = {}\nnoise = {}\naperture = disc\nseeds = {}..{}\n", a.n, a.r0, a.noise, a.seed, a.seed + a.count);
    for seed in a.seed..a.seed + a.count {
        let Case { truth, wrapped, noisy } = protocol.case(seed).map_err(Failure::param)?;
        let paths = case_paths(&a.output, seed);
        for (p, g) in paths.iter().zip([&truth, &wrapped, &noisy]) {
            write_at(p, g)?;
            writeln!(manifest, "file = {}", p.file_name().unwrap().to_string_lossy()).unwrap();
        }
        if seed == a.seed {
            if let Some(png) = &a.png {
                write_png(png, &noisy)?;
            }
        }
    }
    write_text(&a.output.join("manifest.txt"), &manifest)?;
    print!("{manifest}");
    Ok(())
}

fn cmd_wrap(a: &WrapArgs) -> CliResult<()> {
    let g = read_at(&a.input)?;
    let mut w = wrap_phase(&g).map_err(Failure::run)?;
    if a.noise != 0.0 {
        w = apply_noise(&w, a.noise, a.seed).map_err(Failure::param)?;
    }
    write_at(&a.output, &w)?;
    if let Some(png) = &a.png {
        write_png(png, &w)?;
    }
    Ok(())
}

fn metric_lines(m: &MetricReport) -> String {
    let mut s = format!("{METRICS_NOTE}\nrel_error = {}\nssim = {}\nms_ssim = {}\nresidues = {}\n", m.rel_error, m.ssim, m.ms_ssim, m.residues);
    for w in &m.warnings {
        writeln!(s, "warning = {w}").unwrap();
    }
    s
}

/// Deterministic report text (no timing).
fn report_lines(r: &UnwrapReport, n: usize) -> String {
    let mut s = format!("method = {}\nn = {n}\niterations = {}\nconverged = {}\n", r.method, r.iterations, r.converged);
    if let Some(j) = r.history.last() {
        writeln!(s, "final_objective = {j}").unwrap();
    }
    for (k, v) in &r.diagnostics {
        writeln!(s, "{k} = {v}").unwrap();
    }
    if let Some(res) = &r.slope_residuals {
        writeln!(s, "slope_residual_max = {}", res.iter().fold(0.0f64, |a, &b| a.max(b))).unwrap();
    }
    for w in &r.warnings {
        writeln!(s, "warning = {w}").unwrap();
    }
    s
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
        cfg.apply_text(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    }
    Ok(cfg)
}

fn cmd_unwrap(a: &UnwrapArgs) -> CliResult<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = &a.method {
        cfg.set("method", m).map_err(Failure::param)?;
    }
    a.params.apply(&mut cfg)?;
    for (slot, flag) in [(&mut cfg.input, &a.input), (&mut cfg.output, &a.output), (&mut cfg.truth, &a.truth), (&mut cfg.png, &a.png)] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    cfg.validate().map_err(Failure::param)?;
    let input = cfg.input.clone().ok_or_else(|| Failure::Usage("missing --input".into()))?;
    let output = cfg.output.clone().ok_or_else(|| Failure::Usage("missing --output".into()))?;
    let pw = read_at(&input)?;
    let truth = cfg.truth.as_deref().map(read_at).transpose()?;
    cfg.check_grid(pw.n()).map_err(Failure::param)?;

    let rep = run_method(&pw, &cfg).map_err(Failure::run)?;
    let mut text = report_lines(&rep, pw.n());
    if let Some(t) = &truth {
        let m = evaluate(&rep.phase, t, Some(&pw), rep.runtime_ms).map_err(Failure::run)?;
        text.push_str(&metric_lines(&m));
    }
    write_at(&output, &rep.phase)?;
    let name = output.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_text(&output.with_file_name(format!("{name}.report.txt")), &text)?;
    if let Some(png) = &cfg.png {
        write_png(png, &rep.phase)?;
    }
    print!("{text}runtime_ms = {:.3}\n", rep.runtime_ms);
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let rec = read_at(&a.input)?;
    let truth = read_at(&a.truth)?;
    let wrapped = a.wrapped.as_deref().map(read_at).transpose()?;
    let m = evaluate(&rec, &truth, wrapped.as_ref(), 0.0).map_err(Failure::run)?;
    print!("{}", metric_lines(&m));
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mu, var.sqrt())
}

enum Entry {
    Run(String, RunConfig),
    External(String),
}

fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let mut entries = Vec::new();
    for p in &a.config {
        let mut cfg = load_config(Some(p))?;
        a.params.apply(&mut cfg)?;
        entries.push(Entry::Run(cfg.method.to_string(), cfg));
    }
    for m in a.method.iter().map(|m| m.trim()).filter(|m| !m.is_empty()) {
        if m == "tie" {
            entries.push(Entry::External(m.to_string()));
            continue;
        }
        let mut cfg = RunConfig::default();
        cfg.set("method", m).map_err(Failure::param)?;
        a.params.apply(&mut cfg)?;
        entries.push(Entry::Run(m.to_string(), cfg));
    }
    if entries.is_empty() {
        return Err(Failure::Usage("compare needs at least one --method or --config".into()));
    }
    if a.seeds.is_empty() {
        return Err(Failure::Usage("compare needs at least one seed".into()));
    }

    let cases: Vec<(PhaseGrid, PhaseGrid)> = match &a.data {
        Some(dir) => a
            .seeds
            .iter()
            .map(|&s| {
                let [t, _, noisy] = case_paths(dir, s);
                Ok((read_at(&noisy)?, read_at(&t)?))
            })
            .collect::<CliResult<_>>()?,
        None => {
            let p = Protocol { n: a.n, r0_px: a.r0, noise: a.noise };
            a.seeds.iter().map(|&s| p.case(s).map(|c| (c.noisy, c.truth)).map_err(Failure::param)).collect::<CliResult<_>>()?
        }
    };
    let runs: Vec<(usize, &str, &RunConfig)> = entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e {
            Entry::Run(l, c) => Some((i, l.as_str(), c)),
            Entry::External(_) => None,
        })
        .collect();
    for (_, label, cfg) in &runs {
        cfg.validate().map_err(|e| Failure::Usage(format!("{label}: {e}")))?;
        for (pw, _) in &cases {
            cfg.check_grid(pw.n()).map_err(|e| Failure::Usage(format!("{label}: {e}")))?;
        }
    }
    if let Some(d) = &a.cell_dir {
        fs::create_dir_all(d).map_err(|e| Failure::Io(format!("{}: {e}", d.display())))?;
    }

    let cells: Vec<(usize, usize)> = runs.iter().flat_map(|&(i, _, _)| (0..cases.len()).map(move |k| (i, k))).collect();
    let results: Vec<MetricReport> = cells
        .par_iter()
        .map(|&(i, k)| {
            let Entry::Run(label, cfg) = &entries[i] else { unreachable!() };
            let (pw, truth) = &cases[k];
            let rep = run_method(pw, cfg).map_err(Failure::run)?;
            if let Some(d) = &a.cell_dir {
                let name = format!("{}_{}_seed{}.pgrid", i, label.replace(':', "-"), a.seeds[k]);
                write_at(&d.join(name), &rep.phase)?;
            }
            evaluate(&rep.phase, truth, Some(pw), rep.runtime_ms).map_err(Failure::run)
        })
        .collect::<CliResult<_>>()?;

    let mut table = format!("{METRICS_NOTE}\nmethod\truns\trel_error_mean\trel_error_std\tssim_mean\tssim_std\tms_ssim_mean\tms_ssim_std\truntime_ms_mean\n");
    let mut at = 0;
    for e in &entries {
        match e {
            Entry::External(l) => writeln!(table, "{l}\texternal\t-\t-\t-\t-\t-\t-\t-").unwrap(),
            Entry::Run(l, _) => {
                let rs = &results[at..at + cases.len()];
                at += cases.len();
                let col = |f: fn(&MetricReport) -> f64| mean_std(&rs.iter().map(f).collect::<Vec<_>>());
                let (e0, e1) = col(|m| m.rel_error);
                let (s0, s1) = col(|m| m.ssim);
                let (m0, m1) = col(|m| m.ms_ssim);
                let (t0, _) = col(|m| m.runtime_ms);
                writeln!(table, "{l}\t{}\t{e0:.4}\t{e1:.4}\t{s0:.4}\t{s1:.4}\t{m0:.4}\t{m1:.4}\t{t0:.1}", rs.len()).unwrap();
            }
        }
    }
    if let Some(p) = &a.output {
        write_text(p, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("DWFS_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure::Usage(format!("DWFS_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = init_threads().and_then(|_| match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Wrap(a) => cmd_wrap(a),
        Command::Unwrap(a) => cmd_unwrap(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
