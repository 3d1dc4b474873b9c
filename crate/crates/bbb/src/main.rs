//! Command-line front end: solve, exact sampling, convergence ladders,
//! baseline time stepping, and tensor decomposition inspection.

use bbb::anisotropy::{decompose_field, selling_decompose, TensorDecomposition};
use bbb::baseline::{run_theta, ThetaScheme};
use bbb::exact::{
    barenblatt_dual, barenblatt_u, hopf_cole_u, mapped_anisotropic, BarenblattParams,
    HopfColeParams,
};
use bbb::grid::{Field, GridSpec, StaggerTag, TimeTag};
use bbb::io::{write_error_table, write_field, write_summary, RunSummary};
use bbb::newton::{solve_newton, NewtonConfig, NewtonProblem};
use bbb::pd_solver::{solve_pd, PdConfig, PdProblem};
use bbb::problem::{three_spike, BurgersHopfCole, QpmeBarenblatt, QpmeMapped, SolveResult};
use bbb::recovery::{rho_floor_estimate, u_errors, ErrorRow, ErrorTable};
use bbb::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "bbb", version, about = "Space-time convex solver for QPME and viscous Burgers")]
struct Cli {
    /// Directory for generated files (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a variational instance and write fields + summary.
    Solve {
        #[command(subcommand)]
        which: SolveCmd,
    },
    /// Sample a closed-form solution onto a grid (field CSV on stdout).
    Exact {
        #[command(subcommand)]
        which: ExactCmd,
    },
    /// Run a refinement ladder and report errors and fitted slopes.
    Convergence {
        #[command(subcommand)]
        which: ConvCmd,
    },
    /// March a theta-scheme time stepper and write the trajectory.
    Baseline {
        #[command(subcommand)]
        which: BaselineCmd,
    },
    /// Decompose a constant SPD matrix into lattice offsets and weights.
    Selling {
        /// Upper-triangular entries d11 d12 d22.
        #[arg(long, num_args = 3, allow_negative_numbers = true)]
        matrix: Vec<f64>,
    },
}

#[derive(Args)]
struct GridArgs {
    /// Number of staggered time steps.
    #[arg(long)]
    nt: usize,
    /// Spatial resolution per axis.
    #[arg(long)]
    nx: usize,
    #[arg(long)]
    t0: f64,
    #[arg(long)]
    t1: f64,
}

#[derive(Subcommand)]
enum SolveCmd {
    Qpme {
        /// Spatial dimension (1 or 2).
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[command(flatten)]
        grid: GridArgs,
        /// Initial condition: barenblatt:gamma=G or file:PATH.
        #[arg(long)]
        init: String,
        /// newton or pd.
        #[arg(long, default_value = "newton")]
        solver: String,
        /// Diffusion tensor: mapped:eps=E (2D) or file:PATH; isotropic if absent.
        #[arg(long)]
        aniso: Option<String>,
    },
    Burgers {
        #[command(flatten)]
        grid: GridArgs,
        /// Viscosity.
        #[arg(long)]
        nu: f64,
        /// Initial condition: hopfcole:re=R[,lo=A,hi=B] or file:PATH.
        #[arg(long)]
        init: String,
        #[arg(long, default_value = "newton")]
        solver: String,
    },
}

#[derive(Subcommand)]
enum ExactCmd {
    Barenblatt {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    BarenblattDual {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    Hopfcole {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        re: f64,
        /// Physical window [lo, hi] mapped onto the unit torus.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    Mapped {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.035)]
        eps: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
}

#[derive(Subcommand)]
enum ConvCmd {
    Qpme {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1e-4)]
        t0: f64,
        #[arg(long, default_value_t = 1e-3)]
        t1: f64,
        /// Comma-separated n_tau ladder.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        /// n_h = ratio * n_tau.
        #[arg(long, default_value_t = 5)]
        nx_ratio: usize,
        #[arg(long, default_value = "newton")]
        solver: String,
    },
    Burgers {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        re: f64,
        #[arg(long, default_value_t = 0.1)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
        #[arg(long, default_value_t = -0.6, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 0.9)]
        hi: f64,
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        nx_ratio: usize,
        #[arg(long, default_value = "newton")]
        solver: String,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    Explicit(BaselineArgs),
    Implicit(BaselineArgs),
    Midpoint(BaselineArgs),
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// three-spike, barenblatt:gamma=G, or file:PATH.
    #[arg(long, default_value = "three-spike")]
    init: String,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests print and exit 0; real usage errors exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => {}
        Err(e) => {
            let (code, kind) = match e {
                Error::Numerical(_) => (2, "numerical"),
                _ => (1, "usage"),
            };
            eprintln!("error: kind={kind} message=\"{e}\"");
            std::process::exit(code);
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Solve { which } => run_solve(which, &cli.out),
        Cmd::Exact { which } => run_exact(which),
        Cmd::Convergence { which } => run_convergence(which, &cli.out),
        Cmd::Baseline { which } => run_baseline(which, &cli.out),
        Cmd::Selling { matrix } => run_selling(matrix),
    }
}

/// Parse "name:key=v,key=v" into (name, pairs); a bare "name" has no pairs.
fn parse_tagged(s: &str) -> (String, Vec<(String, String)>) {
    match s.split_once(':') {
        None => (s.to_string(), Vec::new()),
        Some((name, rest)) => {
            let pairs = rest
                .split(',')
                .filter(|p| !p.is_empty())
                .map(|p| match p.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => (p.to_string(), String::new()),
                })
                .collect();
            (name.to_string(), pairs)
        }
    }
}

fn lookup_f64(pairs: &[(String, String)], key: &str) -> Option<Result<f64>> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| {
        v.parse::<f64>()
            .map_err(|_| Error::Invalid(format!("bad value for {key}: {v}")))
    })
}

fn read_field_file(path: &str, spec: GridSpec) -> Result<Field> {
    let f = File::open(path)
        .map_err(|e| Error::Invalid(format!("cannot open {path}: {e}")))?;
    bbb::io::read_u0(&mut BufReader::new(f), spec)
}

/// Read a sampled diffusion tensor. Rows are "x1[,x2],d11[,d12,d22]" at
/// points of the half-step lattice (spacing h); every lattice point the
/// decomposition samples must be present.
fn read_tensor_file(path: &str, spec: GridSpec) -> Result<TensorDecomposition> {
    use std::io::BufRead;
    let f = File::open(path)
        .map_err(|e| Error::Invalid(format!("cannot open {path}: {e}")))?;
    let h = spec.h();
    let n = 2 * spec.n_h;
    let idx = |x: f64| -> usize {
        (((x / h).round() as i64).rem_euclid(n as i64)) as usize
    };
    let mut table: Vec<Option<[[f64; 2]; 2]>> = vec![None; n * n];
    for line in BufReader::new(f).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('x') {
            continue;
        }
        let cols: Vec<f64> = t
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Invalid(format!("malformed tensor record: {line}")))?;
        let (key, d) = match (spec.d, cols.len()) {
            (1, 2) => (idx(cols[0]), [[cols[1], 0.0], [0.0, 0.0]]),
            (2, 5) => (
                idx(cols[0]) * n + idx(cols[1]),
                [[cols[2], cols[3]], [cols[3], cols[4]]],
            ),
            _ => return Err(Error::Invalid(format!("wrong tensor column count: {line}"))),
        };
        table[key] = Some(d);
    }
    decompose_field(spec, &|x| {
        let key = if spec.d == 1 { idx(x[0]) } else { idx(x[0]) * n + idx(x[1]) };
        table[key].unwrap_or_else(|| panic!("tensor file misses lattice point ({}, {})", x[0], x[1]))
    })
}

fn run_instance(
    solver: &str,
    qpme: Option<&TensorDecomposition>,
    nu: f64,
    u0: &Field,
) -> Result<SolveResult> {
    match solver {
        "newton" => {
            let prob = match qpme {
                Some(dec) => NewtonProblem::Qpme { dec },
                None => NewtonProblem::Burgers { nu },
            };
            let mut cfg = NewtonConfig::default();
            cfg.direct_cap = 40000;
            solve_newton(&prob, u0, &cfg, None)
        }
        "pd" => {
            let prob = match qpme {
                Some(dec) => PdProblem::Qpme { dec },
                None => PdProblem::Burgers { nu },
            };
            solve_pd(&prob, u0, &PdConfig::default())
        }
        other => Err(Error::Invalid(format!("unknown solver: {other}"))),
    }
}

fn out_writer(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Re-stamp a field with physical times (values already rescaled by caller).
fn retime(f: &Field, phys: GridSpec) -> Field {
    let mut out = f.clone();
    out.spec = phys;
    out
}

fn emit_solution(
    dir: &Path,
    phys_spec: GridSpec,
    solver: &str,
    r: &SolveResult,
    u_phys: Field,
    rho_floor: Option<(f64, f64)>,
) -> Result<()> {
    write_field(&mut out_writer(dir, "u.csv")?, &u_phys)?;
    write_field(&mut out_writer(dir, "phi.csv")?, &retime(&r.phi.phi, phys_spec))?;
    write_field(&mut out_writer(dir, "rho.csv")?, &retime(&r.rho, phys_spec))?;
    let summary = RunSummary { spec: phys_spec, solver, result: r, rho_floor };
    write_summary(&mut out_writer(dir, "summary.txt")?, &summary)?;
    write_summary(&mut std::io::stdout().lock(), &summary)?;
    Ok(())
}

fn run_solve(cmd: &SolveCmd, out: &Path) -> Result<()> {
    match cmd {
        SolveCmd::Qpme { d, grid, init, solver, aniso } => {
            let (name, pairs) = parse_tagged(init);
            match (name.as_str(), aniso.as_deref()) {
                ("barenblatt", None) => {
                    let gamma = lookup_f64(&pairs, "gamma").transpose()?.unwrap_or(1.0);
                    let p = QpmeBarenblatt::new(gamma, *d, grid.t0, grid.t1, grid.nt, grid.nx)?;
                    let dec = TensorDecomposition::isotropic(p.spec);
                    let mut r = run_instance(solver, Some(&dec), 0.0, &p.u0)?;
                    r.energy *= p.amp;
                    let phys = GridSpec::new(grid.t0, grid.t1, *d, grid.nt, grid.nx)?;
                    let u_phys = retime(&p.physical_u(&r.u), phys);
                    emit_solution(out, phys, solver, &r, u_phys, None)
                }
                ("barenblatt", Some(a)) => {
                    let (aname, apairs) = parse_tagged(a);
                    if aname != "mapped" {
                        return Err(Error::Invalid(format!(
                            "barenblatt init supports only --aniso mapped, got {aname}"
                        )));
                    }
                    let gamma = lookup_f64(&pairs, "gamma").transpose()?.unwrap_or(1.0);
                    let eps = lookup_f64(&apairs, "eps").transpose()?.unwrap_or(0.035);
                    let p = QpmeMapped::new(gamma, grid.t0, grid.t1, eps, grid.nt, grid.nx)?;
                    let mut r = run_instance(solver, Some(&p.dec), 0.0, &p.u0)?;
                    r.energy *= p.amp;
                    let phys = GridSpec::new(grid.t0, grid.t1, 2, grid.nt, grid.nx)?;
                    let u_phys = retime(&p.physical_u(&r.u), phys);
                    emit_solution(out, phys, solver, &r, u_phys, None)
                }
                ("file", _) => {
                    let path = pairs
                        .first()
                        .map(|(k, _)| k.clone())
                        .ok_or_else(|| Error::Invalid("file: needs a path".into()))?;
                    let spec = GridSpec::new(grid.t0, grid.t1, *d, grid.nt, grid.nx)?;
                    let u0 = read_field_file(&path, spec)?;
                    let dec = match aniso.as_deref() {
                        None => TensorDecomposition::isotropic(spec),
                        Some(a) => {
                            let (aname, apairs) = parse_tagged(a);
                            match aname.as_str() {
                                "file" => {
                                    let tp = apairs
                                        .first()
                                        .map(|(k, _)| k.clone())
                                        .ok_or_else(|| {
                                            Error::Invalid("aniso file: needs a path".into())
                                        })?;
                                    read_tensor_file(&tp, spec)?
                                }
                                other => {
                                    return Err(Error::Invalid(format!(
                                        "file init supports --aniso file, got {other}"
                                    )))
                                }
                            }
                        }
                    };
                    let r = run_instance(solver, Some(&dec), 0.0, &u0)?;
                    let u = r.u.clone();
                    emit_solution(out, spec, solver, &r, u, None)
                }
                (other, _) => Err(Error::Invalid(format!("unknown qpme init: {other}"))),
            }
        }
        SolveCmd::Burgers { grid, nu, init, solver } => {
            let (name, pairs) = parse_tagged(init);
            match name.as_str() {
                "hopfcole" => {
                    let re = lookup_f64(&pairs, "re")
                        .transpose()?
                        .ok_or_else(|| Error::Invalid("hopfcole init needs re=".into()))?;
                    let lo = lookup_f64(&pairs, "lo").transpose()?.unwrap_or(-0.6);
                    let hi = lookup_f64(&pairs, "hi").transpose()?.unwrap_or(0.9);
                    let p =
                        BurgersHopfCole::new(*nu, re, grid.t0, grid.t1, lo, hi, grid.nt, grid.nx)?;
                    let r = run_instance(solver, None, p.nu_eff, &p.u0)?;
                    let floor = rho_floor_estimate(&p.u0, p.nu_eff, grid.t1 - grid.t0);
                    let u_phys = p.physical_u(&r.u);
                    emit_solution(out, p.spec, solver, &r, u_phys, Some(floor))
                }
                "file" => {
                    let path = pairs
                        .first()
                        .map(|(k, _)| k.clone())
                        .ok_or_else(|| Error::Invalid("file: needs a path".into()))?;
                    let spec = GridSpec::new(grid.t0, grid.t1, 1, grid.nt, grid.nx)?;
                    let u0 = read_field_file(&path, spec)?;
                    let r = run_instance(solver, None, *nu, &u0)?;
                    let floor = rho_floor_estimate(&u0, *nu, grid.t1 - grid.t0);
                    let u = r.u.clone();
                    emit_solution(out, spec, solver, &r, u, Some(floor))
                }
                other => Err(Error::Invalid(format!("unknown burgers init: {other}"))),
            }
        }
    }
}

fn run_exact(cmd: &ExactCmd) -> Result<()> {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match cmd {
        ExactCmd::Barenblatt { gamma, d, grid } => {
            let p = BarenblattParams::new(*gamma, *d, grid.t0, grid.t1)?;
            let spec = GridSpec::new(grid.t0, grid.t1, *d, grid.nt, grid.nx)?;
            let f = Field::from_fn(spec, StaggerTag::centered(TimeTag::Staggered), |k, x| {
                barenblatt_u(spec.t_staggered(k), [x[0] - 0.5, x[1] - 0.5], &p)
            });
            write_field(&mut w, &f)
        }
        ExactCmd::BarenblattDual { gamma, d, grid } => {
            let p = BarenblattParams::new(*gamma, *d, grid.t0, grid.t1)?;
            let spec = GridSpec::new(grid.t0, grid.t1, *d, grid.nt, grid.nx)?;
            let f = Field::from_fn(spec, StaggerTag::centered(TimeTag::Centered), |k, x| {
                barenblatt_dual(spec.t_centered(k), [x[0] - 0.5, x[1] - 0.5], &p).0
            });
            write_field(&mut w, &f)
        }
        ExactCmd::Hopfcole { nu, re, lo, hi, grid } => {
            let p = HopfColeParams::new(*nu, *re)?;
            let a = hi - lo;
            if a <= 0.0 {
                return Err(Error::Invalid("window must have positive width".into()));
            }
            let spec = GridSpec::new(grid.t0, grid.t1, 1, grid.nt, grid.nx)?;
            let f = Field::from_fn(spec, StaggerTag::centered(TimeTag::Staggered), |k, x| {
                hopf_cole_u(spec.t_staggered(k), a * x[0] + lo, &p)
            });
            write_field(&mut w, &f)
        }
        ExactCmd::Mapped { gamma, eps, grid } => {
            let p = BarenblattParams::new(*gamma, 2, grid.t0, grid.t1)?;
            let spec = GridSpec::new(grid.t0, grid.t1, 2, grid.nt, grid.nx)?;
            let f = Field::from_fn(spec, StaggerTag::centered(TimeTag::Staggered), |k, x| {
                mapped_anisotropic(spec.t_staggered(k), [x[0] - 0.5, x[1] - 0.5], &p, *eps).0
            });
            write_field(&mut w, &f)
        }
    }
}

fn emit_table(out: &Path, table: &ErrorTable) -> Result<()> {
    write_error_table(&mut out_writer(out, "errors.csv")?, table)?;
    write_error_table(&mut std::io::stdout().lock(), table)
}

fn run_convergence(cmd: &ConvCmd, out: &Path) -> Result<()> {
    match cmd {
        ConvCmd::Qpme { gamma, d, t0, t1, levels, nx_ratio, solver } => {
            if levels.is_empty() {
                return Err(Error::Invalid("--levels must be nonempty".into()));
            }
            let mut table = ErrorTable::default();
            for &nt in levels {
                let p = QpmeBarenblatt::new(*gamma, *d, *t0, *t1, nt, nx_ratio * nt)?;
                let dec = TensorDecomposition::isotropic(p.spec);
                let start = Instant::now();
                let r = run_instance(solver, Some(&dec), 0.0, &p.u0)?;
                let runtime = start.elapsed().as_secs_f64();
                let (l1, linf) = u_errors(&p.physical_u(&r.u), &p.reference());
                table.push(ErrorRow {
                    n_tau: nt,
                    n_h: nx_ratio * nt,
                    error_l1: l1,
                    error_linf: linf,
                    runtime,
                });
            }
            emit_table(out, &table)
        }
        ConvCmd::Burgers { nu, re, t0, t1, lo, hi, levels, nx_ratio, solver } => {
            if levels.is_empty() {
                return Err(Error::Invalid("--levels must be nonempty".into()));
            }
            let mut table = ErrorTable::default();
            for &nt in levels {
                let p = BurgersHopfCole::new(*nu, *re, *t0, *t1, *lo, *hi, nt, nx_ratio * nt)?;
                let start = Instant::now();
                let r = run_instance(solver, None, p.nu_eff, &p.u0)?;
                let runtime = start.elapsed().as_secs_f64();
                let (l1, linf) = u_errors(&p.physical_u(&r.u), &p.reference());
                table.push(ErrorRow {
                    n_tau: nt,
                    n_h: nx_ratio * nt,
                    error_l1: l1,
                    error_linf: linf,
                    runtime,
                });
            }
            emit_table(out, &table)
        }
    }
}

fn run_baseline(cmd: &BaselineCmd, out: &Path) -> Result<()> {
    let (theta, args, name) = match cmd {
        BaselineCmd::Explicit(a) => (1.0, a, "explicit"),
        BaselineCmd::Implicit(a) => (0.0, a, "implicit"),
        BaselineCmd::Midpoint(a) => (0.5, a, "midpoint"),
    };
    let grid = &args.grid;
    let spec = GridSpec::new(grid.t0, grid.t1, 1, grid.nt, grid.nx)?;
    let (name_init, pairs) = parse_tagged(&args.init);
    let u0 = match name_init.as_str() {
        "three-spike" => three_spike(spec),
        "barenblatt" => {
            let gamma = lookup_f64(&pairs, "gamma").transpose()?.unwrap_or(1.0);
            let p = BarenblattParams::new(gamma, 1, grid.t0, grid.t1)?;
            Field::from_fn(spec, StaggerTag::centered(TimeTag::Single), |_, x| {
                barenblatt_u(grid.t0, [x[0] - 0.5, 0.0], &p)
            })
        }
        "file" => {
            let path = pairs
                .first()
                .map(|(k, _)| k.clone())
                .ok_or_else(|| Error::Invalid("file: needs a path".into()))?;
            read_field_file(&path, spec)?
        }
        other => return Err(Error::Invalid(format!("unknown baseline init: {other}"))),
    };
    let dec = TensorDecomposition::isotropic(spec);
    let run = run_theta(&u0, &ThetaScheme::new(theta)?, &dec)?;
    write_field(&mut out_writer(out, "u.csv")?, &run.u)?;
    let mut w = std::io::stdout().lock();
    writeln!(w, "scheme: {name}")?;
    writeln!(w, "tau: {:.6e}", spec.tau())?;
    writeln!(w, "cfl_bound: {:.6e}", run.cfl)?;
    writeln!(w, "cfl_exceeded: {}", run.cfl_exceeded)?;
    if run.cfl_exceeded && theta > 0.5 {
        writeln!(w, "warning: explicit half-step exceeds the CFL bound")?;
    }
    Ok(())
}

fn run_selling(matrix: &[f64]) -> Result<()> {
    if matrix.len() != 3 {
        return Err(Error::Invalid("--matrix needs d11 d12 d22".into()));
    }
    let d = [[matrix[0], matrix[1]], [matrix[1], matrix[2]]];
    let parts = selling_decompose(&d)?;
    let mut w = std::io::stdout().lock();
    for (e, weight) in parts {
        writeln!(w, "{} {} {:.12e}", e[0], e[1], weight)?;
    }
    Ok(())
}
