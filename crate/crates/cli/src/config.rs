//! Command-line flags and the scenario configuration they mirror.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fixray::fixed_points::MAX_PERIOD;
use fixray::geom::Rect;
use fixray::map::{BranchLabel, MapSpec};
use fixray::rays::{default_schedule, Address};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "fixray",
    version,
    about = "Fixed rays, fixed points and basic regions of exponential maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Tracts, fundamental domains and the cut, as JSON.
    Setup,
    /// Traced rays as JSON (or CSV when --out ends in .csv).
    Rays,
    /// Periodic points in the window as a CSV table (JSON for .json).
    Fixedpoints,
    /// Global counting contour: expected against measured fixed points.
    Count,
    /// Basic regions and their verdicts as JSON.
    Verify,
    /// SVG overlay of rays, regions, points and the counting contour.
    Plot,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Map shorthand, e.g. `exp(0.3)` or `exp(1,-1)`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub map: Option<String>,
    /// Period p of the points and rays (1 to 4).
    #[arg(long, global = true)]
    pub period: Option<usize>,
    /// Structure bbox `x0,x1,y0,y1`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub bbox: Option<String>,
    /// Search window for periodic points `x0,x1,y0,y1`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Grid resolution of the structure sampling.
    #[arg(long, global = true)]
    pub res: Option<f64>,
    /// Pullback depth of ray tracing.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Expansion radius or `auto`.
    #[arg(long, global = true)]
    pub radius: Option<String>,
    /// Band range `a..b` (or a single band).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub domains: Option<String>,
    /// Ray address `pre|per`; repeatable.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub address: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write an SVG overlay here (`plot` writes it to --out or --svg).
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
}

/// Scenario settings; the JSON form mirrors the flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: Option<String>,
    pub bbox: String,
    pub window: String,
    pub resolution: f64,
    pub period: usize,
    pub addresses: Vec<String>,
    pub depth: usize,
    pub schedule: Vec<usize>,
    pub radius: String,
    pub domains: Option<String>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            map: None,
            bbox: "-10,20,-20,20".into(),
            window: "-3,3,-3,3".into(),
            resolution: 0.1,
            period: 1,
            addresses: Vec::new(),
            depth: 320,
            schedule: default_schedule(),
            radius: "auto".into(),
            domains: None,
            out: None,
            svg: None,
        }
    }
}

/// Validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: MapSpec,
    pub bbox: Rect,
    pub window: Rect,
    pub resolution: f64,
    pub period: usize,
    pub addresses: Vec<Address>,
    pub depth: usize,
    pub schedule: Vec<usize>,
    pub radius: Option<f64>,
    pub domains: Option<Vec<BranchLabel>>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn format_rect(r: &Rect) -> String {
    format!("{},{},{},{}", r.x0, r.x1, r.y0, r.y1)
}

/// Parses `a..b` or a single band index.
pub fn parse_domains(text: &str) -> Result<Vec<BranchLabel>, String> {
    let text = text.trim();
    let (a, b) = match text.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (text, text),
    };
    let a: i64 = a.parse().map_err(|_| format!("bad domain range {text:?}"))?;
    let b: i64 = b.parse().map_err(|_| format!("bad domain range {text:?}"))?;
    if a > b {
        return Err(format!("empty domain range {text:?}"));
    }
    Ok((a..=b).map(BranchLabel::band).collect())
}

impl ScenarioConfig {
    /// Overrides fields with the flags that were given.
    pub fn apply(&mut self, flags: &Flags) {
        if let Some(v) = &flags.map {
            self.map = Some(v.clone());
        }
        if let Some(v) = flags.period {
            self.period = v;
        }
        if let Some(v) = &flags.bbox {
            self.bbox = v.clone();
        }
        if let Some(v) = &flags.window {
            self.window = v.clone();
        }
        if let Some(v) = flags.res {
            self.resolution = v;
        }
        if let Some(v) = flags.depth {
            self.depth = v;
        }
        if let Some(v) = &flags.radius {
            self.radius = v.clone();
        }
        if let Some(v) = &flags.domains {
            self.domains = Some(v.clone());
        }
        if !flags.address.is_empty() {
            self.addresses = flags.address.clone();
        }
        if let Some(v) = &flags.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = &flags.svg {
            self.svg = Some(v.clone());
        }
    }

    pub fn resolve(&self) -> Result<Scenario, String> {
        let map = self.map.as_deref().ok_or("no map given (use --map)")?;
        let spec = MapSpec::parse(map).map_err(|e| e.to_string())?;
        let bbox = Rect::parse(&self.bbox).ok_or_else(|| format!("bad bbox {:?}", self.bbox))?;
        let window = Rect::parse(&self.window).ok_or_else(|| format!("bad window {:?}", self.window))?;
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err("resolution must be positive".into());
        }
        if self.period == 0 || self.period > MAX_PERIOD as usize {
            return Err(format!("period must lie in 1..={MAX_PERIOD}"));
        }
        if self.depth < 10 {
            return Err("depth must be at least 10".into());
        }
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err("schedule must be increasing and nonempty".into());
        }
        let radius = match self.radius.trim() {
            "auto" => None,
            r => {
                let v: f64 = r.parse().map_err(|_| format!("bad radius {r:?}"))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err("radius must be positive".into());
                }
                Some(v)
            }
        };
        let addresses = self
            .addresses
            .iter()
            .map(|a| a.parse::<Address>().map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let domains = self.domains.as_deref().map(parse_domains).transpose()?;
        Ok(Scenario {
            spec,
            bbox,
            window,
            resolution: self.resolution,
            period: self.period,
            addresses,
            depth: self.depth,
            schedule: self.schedule.clone(),
            radius,
            domains,
            out: self.out.clone(),
            svg: self.svg.clone(),
        })
    }

    /// Canonical form: map shorthand, rectangles and addresses as printed
    /// by the library.
    pub fn canonical(&self) -> Result<ScenarioConfig, String> {
        let s = self.resolve()?;
        Ok(ScenarioConfig {
            map: Some(s.spec.to_shorthand()),
            bbox: format_rect(&s.bbox),
            window: format_rect(&s.window),
            resolution: s.resolution,
            period: s.period,
            addresses: s.addresses.iter().map(|a| a.to_string()).collect(),
            depth: s.depth,
            schedule: s.schedule,
            radius: s.radius.map_or_else(|| "auto".into(), |r| r.to_string()),
            domains: s.domains.map(|d| {
                let (a, b) = (d[0].j, d[d.len() - 1].j);
                format!("{a}..{b}")
            }),
            out: s.out,
            svg: s.svg,
        })
    }
}
