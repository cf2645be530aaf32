//! Subcommand dispatch for the `fixray` binary.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 a region
//! verdict is a violation (or a count mismatch), 4 incomplete results
//! (unresolved rays or points). Errors are printed to stderr as JSON.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use fixray::fixed_points::{find_periodic_points, records_to_csv, FixedPointError, SeedStrategy};
use fixray::geom::Rect;
use fixray::map::BranchLabel;
use fixray::rays::{default_t_grid, fixed_rays, landing_point, trace_ray_unchecked, Ray, RayStatus};
use fixray::separation::{
    counting_contour, global_count_check, region_of, separation_report, CountingContour, ReportOptions,
    SeparationError, SeparationReport,
};
use fixray::structure::{structural_setup, StructuralSetup, StructureError};
use serde::Serialize;

use crate::config::{Cli, Command, Scenario, ScenarioConfig};
use crate::svg;

#[derive(Debug)]
enum Failure {
    Config(String),
    Violation(String),
    Incomplete(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Violation(_) => 3,
            Failure::Incomplete(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Violation(_) => "violation",
            Failure::Incomplete(_) => "incomplete",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Violation(m) | Failure::Incomplete(m) => m,
        }
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: &'a str,
    exit_code: u8,
}

fn report_failure(f: &Failure) -> ExitCode {
    let body = ErrorJson {
        error: f.kind(),
        message: f.message(),
        exit_code: f.code(),
    };
    eprintln!("{}", serde_json::to_string(&body).expect("error serializes"));
    ExitCode::from(f.code())
}

/// Refuses output paths whose directory is missing or read-only.
fn check_writable(path: &Path) -> Result<(), Failure> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let meta = fs::metadata(parent)
        .map_err(|e| Failure::Config(format!("output directory {}: {e}", parent.display())))?;
    if !meta.is_dir() {
        return Err(Failure::Config(format!("{} is not a directory", parent.display())));
    }
    if meta.permissions().readonly() {
        return Err(Failure::Config(format!("output directory {} is read-only", parent.display())));
    }
    if path.is_dir() {
        return Err(Failure::Config(format!("{} is a directory", path.display())));
    }
    Ok(())
}

fn write_artifact(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Config(format!("writing {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Config(format!("writing stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn has_extension(path: Option<&Path>, ext: &str) -> bool {
    path.and_then(|p| p.extension()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn build_setup(sc: &Scenario) -> Result<StructuralSetup, Failure> {
    structural_setup(&sc.spec, sc.bbox, sc.resolution).map_err(|e| match e {
        StructureError::InvalidArgument(_) | StructureError::DeltaBlocked { .. } => Failure::Config(e.to_string()),
        other => Failure::Incomplete(other.to_string()),
    })
}

fn domains_of(sc: &Scenario, setup: &StructuralSetup) -> Vec<BranchLabel> {
    sc.domains.clone().unwrap_or_else(|| setup.untruncated_labels())
}

fn separation_failure(e: SeparationError) -> Failure {
    match e {
        SeparationError::InvalidArgument(_)
        | SeparationError::NotFullComplete(_)
        | SeparationError::ConnectorBlocked(_)
        | SeparationError::ExpansionNotValidated(_)
        | SeparationError::ResolutionTooCoarse { .. } => Failure::Config(e.to_string()),
        other => Failure::Incomplete(other.to_string()),
    }
}

fn cmd_setup(sc: &Scenario) -> Result<(), Failure> {
    let setup = build_setup(sc)?;
    write_artifact(sc.out.as_deref(), &to_json(&setup))?;
    if let Some(p) = &sc.svg {
        write_artifact(Some(p), &svg::render(&setup, setup.bbox, &svg::Overlay::default()))?;
    }
    Ok(())
}

fn cmd_rays(sc: &Scenario) -> Result<(), Failure> {
    let setup = build_setup(sc)?;
    let t_grid = default_t_grid(&setup);
    let rays: Vec<Ray> = if sc.addresses.is_empty() {
        fixed_rays(&setup, &domains_of(sc, &setup), sc.period, sc.depth, &t_grid, &sc.schedule)
    } else {
        let mut out = Vec::new();
        for a in &sc.addresses {
            let ray = trace_ray_unchecked(&setup, a, sc.depth, &t_grid).map_err(|e| Failure::Config(e.to_string()))?;
            let ray = if matches!(ray.status, RayStatus::Broken { .. }) || !a.is_periodic() {
                ray
            } else {
                landing_point(&setup, &ray, &sc.schedule).unwrap_or(ray)
            };
            out.push(ray);
        }
        out
    };
    let text = if has_extension(sc.out.as_deref(), "csv") {
        let mut s = String::from("address,t,re,im\n");
        for r in &rays {
            for (t, z) in &r.samples {
                s.push_str(&format!("\"{}\",{t},{},{}\n", r.address, z.re, z.im));
            }
        }
        s
    } else {
        to_json(&rays)
    };
    write_artifact(sc.out.as_deref(), &text)?;
    if let Some(p) = &sc.svg {
        let overlay = svg::Overlay {
            rays: rays.iter().map(|r| (ray_polyline(r), 0)).collect(),
            ..Default::default()
        };
        write_artifact(Some(p), &svg::render(&setup, setup.bbox, &overlay))?;
    }
    let open: Vec<String> = rays
        .iter()
        .filter(|r| r.landing().is_none() && r.address.is_periodic())
        .map(|r| r.address.to_string())
        .collect();
    if open.is_empty() {
        Ok(())
    } else {
        Err(Failure::Incomplete(format!("rays without landing: {}", open.join(" "))))
    }
}

fn ray_polyline(r: &Ray) -> Vec<num_complex::Complex64> {
    let mut pts = r.points();
    if let Some(z) = r.landing() {
        pts.push(z);
    }
    pts
}

fn cmd_fixedpoints(sc: &Scenario) -> Result<(), Failure> {
    let setup = build_setup(sc)?;
    let seeds = SeedStrategy::for_setup(&setup, sc.period as u32);
    let search = find_periodic_points(&setup.spec, sc.window, sc.period as u32, &seeds).map_err(|e| match e {
        FixedPointError::InvalidRegion | FixedPointError::PeriodTooLarge(_) | FixedPointError::BoundaryRoot { .. } => {
            Failure::Config(e.to_string())
        }
        other => Failure::Incomplete(other.to_string()),
    })?;
    let text = if has_extension(sc.out.as_deref(), "json") {
        to_json(&search)
    } else {
        records_to_csv(&search.records)
    };
    write_artifact(sc.out.as_deref(), &text)?;
    if let Some(p) = &sc.svg {
        let overlay = svg::Overlay {
            points: search.records.iter().map(|r| (r.location, r.classification)).collect(),
            ..Default::default()
        };
        write_artifact(Some(p), &svg::render(&setup, setup.bbox, &overlay))?;
    }
    if let Some(b) = search.boundary_count {
        if b != search.count_with_multiplicity() {
            return Err(Failure::Incomplete(format!(
                "found {} solutions, boundary count {b}",
                search.count_with_multiplicity()
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CountResult {
    map: String,
    domains: Vec<String>,
    n: usize,
    expected: i64,
    measured: i64,
    check: bool,
    radius: f64,
    warnings: Vec<String>,
}

fn contour_overlay(contour: &CountingContour) -> Vec<(Vec<num_complex::Complex64>, u8)> {
    contour
        .pieces
        .iter()
        .map(|p| (p.curve.points().to_vec(), p.tag.arc_type()))
        .collect()
}

fn cmd_count(sc: &Scenario) -> Result<(), Failure> {
    let setup = build_setup(sc)?;
    let domains = domains_of(sc, &setup);
    let evidence = fixed_rays(
        &setup,
        &setup.untruncated_labels(),
        1,
        sc.depth,
        &default_t_grid(&setup),
        &sc.schedule,
    );
    let contour = counting_contour(&setup, &domains, sc.radius, &evidence).map_err(separation_failure)?;
    let counts = global_count_check(&setup, &contour).map_err(separation_failure)?;
    let result = CountResult {
        map: setup.spec.to_shorthand(),
        domains: domains.iter().map(|d| d.to_string()).collect(),
        n: counts.n,
        expected: contour.expected_count,
        measured: counts.fixed_points_found,
        check: counts.n_plus_1_check,
        radius: contour.radius,
        warnings: contour.warnings.clone(),
    };
    write_artifact(sc.out.as_deref(), &to_json(&result))?;
    if let Some(p) = &sc.svg {
        let overlay = svg::Overlay {
            rays: evidence.iter().map(|r| (ray_polyline(r), 0)).collect(),
            pieces: contour_overlay(&contour),
            ..Default::default()
        };
        write_artifact(Some(p), &svg::render(&setup, setup.bbox, &overlay))?;
    }
    if result.check {
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "measured {} fixed points, expected {}",
            result.measured, result.expected
        )))
    }
}

fn verdict_status(report: &SeparationReport) -> Result<(), Failure> {
    if report.has_violation() {
        let n = report.verdicts.iter().filter(|v| v.is_violation()).count();
        return Err(Failure::Violation(format!("{n} region(s) violate the one-occupant rule")));
    }
    if report.is_incomplete() {
        return Err(Failure::Incomplete(report.incomplete.join("; ")));
    }
    Ok(())
}

fn report_svg(setup: &StructuralSetup, report: &SeparationReport) -> String {
    let mut overlay = svg::Overlay::default();
    if let Some(graph) = &report.graph {
        for ray in &graph.rays {
            let color = report
                .regions
                .iter()
                .position(|r| r.boundary_rays.contains(&ray.address))
                .or_else(|| {
                    ray.samples
                        .get(ray.samples.len() / 2)
                        .and_then(|s| region_of(graph, &report.regions, s.1))
                })
                .unwrap_or(0);
            overlay.rays.push((ray_polyline(ray), color));
        }
    }
    overlay.points = report
        .points
        .iter()
        .map(|p| (p.record.location, p.record.classification))
        .collect();
    let view: Rect = setup.bbox.union(&report.window);
    svg::render(setup, view, &overlay)
}

fn run_report(sc: &Scenario) -> Result<(StructuralSetup, SeparationReport), Failure> {
    let setup = build_setup(sc)?;
    let options = ReportOptions {
        domains: sc.domains.clone(),
        depth: sc.depth,
        schedule: sc.schedule.clone(),
        resolution: sc.resolution,
        ..Default::default()
    };
    let report = separation_report(&setup, sc.period, sc.window, &options).map_err(separation_failure)?;
    Ok((setup, report))
}

fn cmd_verify(sc: &Scenario) -> Result<(), Failure> {
    let (setup, report) = run_report(sc)?;
    write_artifact(sc.out.as_deref(), &to_json(&report))?;
    if let Some(p) = &sc.svg {
        write_artifact(Some(p), &report_svg(&setup, &report))?;
    }
    verdict_status(&report)
}

fn cmd_plot(sc: &Scenario) -> Result<(), Failure> {
    let (setup, report) = run_report(sc)?;
    let text = report_svg(&setup, &report);
    let target = sc.out.as_deref().or(sc.svg.as_deref());
    write_artifact(target, &text)?;
    if let (Some(out), Some(extra)) = (sc.out.as_deref(), sc.svg.as_deref()) {
        if out != extra {
            write_artifact(Some(extra), &text)?;
        }
    }
    verdict_status(&report)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.flags.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str::<ScenarioConfig>(&text)
                .map_err(|e| Failure::Config(format!("config {}: {e}", p.display())))?
        }
        None => ScenarioConfig::default(),
    };
    cfg.apply(&cli.flags);
    let sc = cfg.resolve().map_err(Failure::Config)?;
    for p in [&sc.out, &sc.svg].into_iter().flatten() {
        check_writable(p)?;
    }
    match cli.command {
        Command::Setup => cmd_setup(&sc),
        Command::Rays => cmd_rays(&sc),
        Command::Fixedpoints => cmd_fixedpoints(&sc),
        Command::Count => cmd_count(&sc),
        Command::Verify => cmd_verify(&sc),
        Command::Plot => cmd_plot(&sc),
    }
}

/// Parses the command line, runs the subcommand and maps the outcome to
/// an exit code.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report_failure(&Failure::Config(e.to_string().trim().to_string()));
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(&f),
    }
}
