//! `stairlab`: build and verify staircase laminates, realize them as
//! piecewise affine fields and verify the fields.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use laminate_core::staircase::StaircaseDocument;
use laminate_core::{AfsParams, AfsStaircase, DiscreteMeasure, Vec2};
use laminate_geometry::ConvexPolygon;
use laminate_realize::{
    io, realize_staircase, restart_iteration, svg, Field, RealizeConfig, RoundRecord, Tag,
};
use laminate_verify::structure::STRUCTURE_TOL;
use laminate_verify::{
    check_membership, check_structure, compare_distribution, field_tail, holder_estimate,
    sup_distance, tail_grid, verify_staircase, weak_residual, DistributionComparison,
    FieldTailReport, GradientDistribution, LaminateReport, MembershipReport, ResidualReport,
    StructureReport, SupReport,
};
use serde::{Deserialize, Serialize};

pub use config::{Opts, RunConfig};

/// Points of the superlevel grid in field reports.
pub const FIELD_TAIL_POINTS: usize = 40;
/// Upper limit on polygons drawn in an SVG.
pub const SVG_ELEMENTS: usize = 20_000;

#[derive(Parser, Debug)]
#[command(
    name = "stairlab",
    version,
    about = "Staircase laminates and their piecewise affine realizations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    #[command(subcommand)]
    Laminate(LaminateCmd),
    #[command(subcommand)]
    Field(FieldCmd),
}

#[derive(Subcommand, Debug)]
pub enum LaminateCmd {
    /// Build the truncated staircase and write it as JSON.
    Build {
        #[command(flatten)]
        opts: Opts,
        #[arg(long, default_value = "staircase.json")]
        out: PathBuf,
    },
    /// Check a staircase file; writes a JSON report and tail CSVs.
    Verify {
        path: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum FieldCmd {
    /// Realize the staircase on the unit square, then run the restart rounds.
    Realize {
        #[command(flatten)]
        opts: Opts,
        #[arg(long, default_value = "field.json")]
        out: PathBuf,
        /// Also render the field as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Check a field file against the configuration it was realized with.
    Verify {
        path: PathBuf,
        #[command(flatten)]
        opts: Opts,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

/// Why a command stopped: bad input (exit 2) or a failed construction or
/// check (exit 1).
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Failed(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

trait OrFail<T> {
    fn usage(self) -> Result<T, Failure>;
    fn failed(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn failed(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Failed(e.into()))
    }
}

/// Runs one command; `Ok(false)` means the checks ran and some failed.
pub fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Laminate(LaminateCmd::Build { opts, out }) => {
            laminate_build(&opts, &out).map(|_| true)
        }
        Command::Laminate(LaminateCmd::Verify { path, out_dir }) => {
            laminate_verify(&path, &out_dir)
        }
        Command::Field(FieldCmd::Realize { opts, out, svg }) => {
            field_realize(&opts, &out, svg.as_deref()).map(|_| true)
        }
        Command::Field(FieldCmd::Verify {
            path,
            opts,
            out_dir,
        }) => field_verify(&path, &opts, &out_dir),
    }
}

/// Contents of `staircase.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseFile {
    pub params: AfsParams,
    #[serde(flatten)]
    pub doc: StaircaseDocument,
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .usage()?;
    }
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .usage()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).failed()
}

pub fn laminate_build(opts: &Opts, out: &Path) -> Result<StaircaseFile, Failure> {
    let cfg = RunConfig::resolve(opts).usage()?;
    let st = AfsStaircase::build(cfg.x0, &cfg.params, cfg.depth).failed()?;
    let doc = st.trunc.to_document().failed()?;
    let drift = st.trunc.nu.barycenter().distance(&cfg.x0);
    let file = StaircaseFile {
        params: cfg.params,
        doc,
    };
    write(out, &to_json(&file)?)?;
    println!(
        "atoms {} beta_N {:e} barycenter drift {:e} -> {}",
        file.doc.atoms.len(),
        st.trunc.beta_last(),
        drift,
        out.display()
    );
    Ok(file)
}

pub fn read_staircase(path: &Path) -> Result<StaircaseFile, Failure> {
    let text = config::read(path).usage()?;
    let file: StaircaseFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .usage()?;
    file.params.validate().usage()?;
    Ok(file)
}

pub fn laminate_verify(path: &Path, out_dir: &Path) -> Result<bool, Failure> {
    let file = read_staircase(path)?;
    let r: LaminateReport = verify_staircase(&file.doc, &file.params).usage()?;
    write(&out_dir.join("laminate_report.json"), &to_json(&r)?)?;
    write(&out_dir.join("tail_upper.csv"), &r.upper.to_csv())?;
    write(&out_dir.join("tail_lower.csv"), &r.lower.to_csv())?;
    let mark = |b: bool| if b { "ok" } else { "FAIL" };
    println!("atoms {} stages {}", r.atoms, r.stages);
    println!("replay      {}", mark(r.replay_ok));
    println!(
        "mass        {} (defect {:e})",
        mark(r.mass_ok),
        r.mass_defect
    );
    println!(
        "barycenter  {} (drift {:e} <= {:e})",
        mark(r.barycenter_ok),
        r.barycenter_drift,
        r.drift_tol
    );
    println!(
        "support     {} ({} atoms outside K)",
        mark(r.outside_k.is_empty()),
        r.outside_k.len()
    );
    println!(
        "steps in U  {} ({} of {} outside)",
        mark(r.steps_outside_u.is_empty()),
        r.steps_outside_u.len(),
        r.construction_steps
    );
    println!(
        "upper tail  {} (M = {:e})",
        mark(r.upper_ok),
        r.upper.upper_fit
    );
    println!(
        "lower tail  {} (m = {:e})",
        mark(r.lower_ok),
        r.lower.lower_fit
    );
    if let Some(s) = r.slope {
        println!("slope {s:.4} against -p = {:.4}", -r.p);
    }
    Ok(r.pass)
}

/// Error budget after round `k`: `η|Ω|(1 − 2^{−N})` for the first
/// realization and `2^{−k}|Ω|` after restart `k`.
pub fn round_budget(cfg: &RealizeConfig, area: f64, round: u32) -> f64 {
    if round == 0 {
        cfg.eta * area * (1.0 - 0.5f64.powi(cfg.depth as i32))
    } else {
        0.5f64.powi(round as i32) * area
    }
}

pub fn budget_table(field: &Field, cfg: &RealizeConfig) -> String {
    let area = field.domain.area();
    let mut s = format!(
        "{:>5} {:>14} {:>14} {:>12} {:>12} {:>12} {:>10} {:>12}\n",
        "round",
        "err_integral",
        "budget",
        "err_area",
        "k_area",
        "active_area",
        "log10_cells",
        "sup_bound"
    );
    for r in &field.history {
        let RoundRecord {
            round,
            error_integral,
            error_area,
            k_area,
            active_area,
            log10_cells,
            sup_bound,
        } = *r;
        s.push_str(&format!(
            "{round:>5} {error_integral:>14.6e} {:>14.6e} {error_area:>12.4e} {k_area:>12.6} {active_area:>12.4e} {log10_cells:>10.3} {sup_bound:>12.4e}\n",
            round_budget(cfg, area, round)
        ));
    }
    s
}

/// Realization on the unit square with boundary values `X₀x`, followed by
/// `cfg.realize.rounds` restart rounds.
pub fn realize(cfg: &RunConfig) -> anyhow::Result<Field> {
    let domain = ConvexPolygon::unit_square();
    if cfg.depth == 0 {
        let mut f = Field::affine(domain, cfg.x0, Vec2::ZERO, Tag::Active);
        f.q = cfg.realize.q;
        let r = f.record(0)?;
        f.history.push(r);
        return Ok(f);
    }
    let st = AfsStaircase::build(cfg.x0, &cfg.params, cfg.depth)?;
    let mut field = realize_staircase(&st.trunc, &cfg.realize, Vec2::ZERO, &domain, &cfg.params)?;
    for _ in 0..cfg.realize.rounds {
        field = restart_iteration(&field, &cfg.params, &cfg.realize)?;
    }
    Ok(field)
}

pub fn field_realize(opts: &Opts, out: &Path, svg_out: Option<&Path>) -> Result<Field, Failure> {
    let cfg = RunConfig::resolve(opts).usage()?;
    let field = realize(&cfg).failed()?;
    write(out, &io::to_json(&field).failed()?)?;
    if let Some(p) = svg_out {
        write(p, &svg::render(&field, SVG_ELEMENTS))?;
    }
    print!("{}", budget_table(&field, &cfg.realize));
    let stats = field.stats();
    println!(
        "patches {} local cells {} log10 cells {:.3} -> {}",
        stats.patches,
        stats.local_cells,
        stats.log10_cells,
        out.display()
    );
    Ok(field)
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldReport {
    pub structure: StructureReport,
    pub membership: MembershipReport,
    pub distribution: DistributionComparison,
    pub residual: ResidualReport,
    pub tail: FieldTailReport,
    pub tail_ok: bool,
    pub sup: SupReport,
    pub sup_ok: bool,
    pub holder: f64,
    pub history: Vec<RoundRecord>,
    pub pass: bool,
}

/// Round-0 non-error cells against `ν^N` with factor `e^η`. Restarts
/// replace only error cells, so the comparison holds after any number of
/// rounds.
pub fn distribution_check(
    field: &Field,
    cfg: &RunConfig,
) -> anyhow::Result<DistributionComparison> {
    let area = field.domain.area();
    let emp = GradientDistribution::from_census(&field.census(), area, |e| {
        e.round == 0 && !e.tag.is_error()
    });
    let reference = if cfg.depth == 0 {
        DiscreteMeasure::dirac(field.x0)
    } else {
        AfsStaircase::build(field.x0, &cfg.params, cfg.depth)?
            .trunc
            .nu
    };
    Ok(compare_distribution(
        &emp,
        &reference,
        cfg.realize.eta.exp(),
    )?)
}

pub fn verify_field(field: &Field, cfg: &RunConfig) -> anyhow::Result<FieldReport> {
    if !cfg.params.in_u(&field.x0) {
        return Err(anyhow!("boundary gradient {:?} is not in U", field.x0));
    }
    let structure = check_structure(field, STRUCTURE_TOL)?;
    let membership = check_membership(field, &cfg.params);
    let distribution = distribution_check(field, cfg)?;
    let residual = weak_residual(field, cfg.params.lambda, cfg.tests, cfg.seed)?;
    let p = laminate_core::afs::exponent(cfg.params.lambda);
    let tail = field_tail(field, &tail_grid(field, FIELD_TAIL_POINTS), p);
    // A single gradient norm leaves no range to check.
    let tail_ok = tail.t_grid.len() < 2 || (tail.c_lower > 0.0 && tail.c_upper.is_finite());
    let sup = sup_distance(field)?;
    let sup_ok = sup.value <= cfg.realize.closeness_delta;
    let holder = holder_estimate(field, cfg.realize.alpha, sup.value);
    let pass = structure.pass
        && membership.pass
        && distribution.pass
        && residual.pass
        && tail_ok
        && sup_ok;
    Ok(FieldReport {
        structure,
        membership,
        distribution,
        residual,
        tail,
        tail_ok,
        sup,
        sup_ok,
        holder,
        history: field.history.clone(),
        pass,
    })
}

pub fn read_field(path: &Path) -> Result<Field, Failure> {
    let text = config::read(path).usage()?;
    io::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .usage()
}

pub fn field_verify(path: &Path, opts: &Opts, out_dir: &Path) -> Result<bool, Failure> {
    let mut cfg = RunConfig::resolve(opts).usage()?;
    let field = read_field(path)?;
    cfg.x0 = field.x0;
    let r = verify_field(&field, &cfg).failed()?;
    write(&out_dir.join("report.json"), &to_json(&r)?)?;
    write(&out_dir.join("tails.csv"), &r.tail.to_csv())?;
    write(&out_dir.join("residuals.csv"), &r.residual.to_csv())?;
    let mark = |b: bool| if b { "ok" } else { "FAIL" };
    let s = &r.structure;
    println!(
        "structure    {} (patches {}, continuity {:e}, boundary {:e})",
        mark(s.pass),
        s.patches,
        s.continuity_gap,
        s.boundary_gap
    );
    for f in &s.failures {
        println!("  {f}");
    }
    println!("membership   {}", mark(r.membership.pass));
    println!(
        "distribution {} ({} atoms, factor {:.4})",
        mark(r.distribution.pass),
        r.distribution.rows.len(),
        r.distribution.factor
    );
    println!(
        "residual     {} (max {:e} <= {:e}, curl {:e})",
        mark(r.residual.pass),
        r.residual.max_abs_residual,
        r.residual.bound,
        r.residual.max_abs_curl
    );
    println!(
        "tail         {} (slope {:.4}, c {:e}, C {:e})",
        mark(r.tail_ok),
        r.tail.fitted_slope,
        r.tail.c_lower,
        r.tail.c_upper
    );
    println!(
        "closeness    {} (sup {:e}, holder {:e})",
        mark(r.sup_ok),
        r.sup.value,
        r.holder
    );
    Ok(r.pass)
}
