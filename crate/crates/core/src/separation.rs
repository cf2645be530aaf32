//! Ray graphs, basic regions, the global counting contour, boundary
//! modification near fixed points, and the per-region report.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::curves::{argument_principle_count, check_simple, CountMode, CurveError, ParamCurve};
use crate::fixed_points::{
    classify_multiplier, find_periodic_points, petal_directions, Classification, FixedPointError,
    FixedPointRecord, SeedStrategy,
};
use crate::geom::{cserde, point_polyline_distance, point_segment_distance, Rect};
use crate::map::{BranchLabel, CutRay, Edge, HolomorphicMap, MapError};
use crate::rays::{
    default_schedule, default_t_grid, fixed_rays, landing_groups, landing_point, trace_ray_unchecked,
    Address, Ray, RayError, RayPair, RayStatus,
};
use crate::structure::{auto_expansion_radius, validate_expansion_radius, StructuralSetup, StructureError};

/// Landing points closer than this are identified.
pub const LANDING_DEDUP_TOL: f64 = 1e-6;
/// Required margin of the side checks after boundary modification.
pub const SIDE_MARGIN: f64 = 1e-9;
/// A virtual-point probe counts as converged within this distance.
const PROBE_TOL: f64 = 1e-3;
const PROBE_ITERATIONS: usize = 50_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeparationError {
    #[error("ray {0} has not landed")]
    UnlandedRay(String),
    #[error("region count changed from {coarse} to {fine} when the resolution was halved")]
    ResolutionTooCoarse { coarse: usize, fine: usize },
    #[error("collection is not full and complete: {0}")]
    NotFullComplete(String),
    #[error("no connector with clearance: {0}")]
    ConnectorBlocked(String),
    #[error("modification zone too large: {0}")]
    EpsTooLarge(String),
    #[error("side check failed at {at}: margin {margin}")]
    SideCheckFailed { margin: f64, at: C64 },
    #[error("point is not the landing point of two boundary rays of the region")]
    NotOnBoundary,
    #[error("a virtual point of the parabolic point lies in the region (probe {0})")]
    VirtualPointInRegion(C64),
    #[error("ray {0} does not reach the modification zone")]
    RayMissesZone(String),
    #[error("expansion radius {0} is not validated for the collection")]
    ExpansionNotValidated(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// Even-odd point-in-polygon test for a closed polyline.
fn inside_polygon(pts: &[C64], p: C64) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if p.re < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// The graph of landed rays of one period together with their landing
/// points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayGraph {
    pub period: usize,
    pub rays: Vec<Ray>,
    #[serde(with = "cserde::vec")]
    pub landing_points: Vec<C64>,
    /// Index into `landing_points` for each ray.
    pub ray_landing: Vec<usize>,
    pub pairs: Vec<RayPair>,
    /// Ray indices of each pair.
    pub pair_rays: Vec<[usize; 2]>,
    /// Closed separators: ray, landing point, ray, closed by a far arc.
    pub separators: Vec<ParamCurve>,
    /// Radius of the arcs closing the separators.
    pub far_radius: f64,
}

impl RayGraph {
    /// Side of `z` with respect to each pair separator.
    pub fn signature(&self, z: C64) -> Vec<bool> {
        // Beyond the samples the separators are radial, so points far out
        // are pulled in along their radius.
        let inner = 0.5 * (self.far_radius + self.extent());
        let z = if z.norm() > inner { z * (inner / z.norm()) } else { z };
        self.separators
            .iter()
            .map(|c| inside_polygon(&c.points()[..c.len() - 1], z))
            .collect()
    }

    /// Distance from `z` to the rays that belong to some pair.
    pub fn pair_distance(&self, z: C64) -> f64 {
        let mut used = BTreeSet::new();
        for p in &self.pair_rays {
            used.extend(p.iter().copied());
        }
        used.into_iter()
            .map(|i| self.ray_distance(i, z))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `z` to ray `i` including its landing point.
    pub fn ray_distance(&self, i: usize, z: C64) -> f64 {
        let mut pts = self.rays[i].points();
        pts.push(self.landing_points[self.ray_landing[i]]);
        point_polyline_distance(z, &pts)
    }

    /// Largest modulus of any ray sample or landing point.
    fn extent(&self) -> f64 {
        self.rays
            .iter()
            .flat_map(|r| r.samples.iter().map(|s| s.1.norm()))
            .chain(self.landing_points.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }
}

/// Bounding box of a run of consecutive segments.
struct Chunk {
    lo: C64,
    hi: C64,
    start: usize,
    end: usize,
}

const CHUNK: usize = 16;

fn chunks_of(segs: &[(C64, C64)]) -> Vec<Chunk> {
    (0..segs.len())
        .step_by(CHUNK)
        .map(|start| {
            let end = (start + CHUNK).min(segs.len());
            let mut lo = C64::new(f64::INFINITY, f64::INFINITY);
            let mut hi = C64::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &(a, b) in &segs[start..end] {
                for p in [a, b] {
                    lo = C64::new(lo.re.min(p.re), lo.im.min(p.im));
                    hi = C64::new(hi.re.max(p.re), hi.im.max(p.im));
                }
            }
            Chunk { lo, hi, start, end }
        })
        .collect()
}

/// Pair-ray segments in chunks, for exact nearest-distance queries.
struct SegmentIndex {
    segs: Vec<(C64, C64)>,
    chunks: Vec<Chunk>,
}

impl SegmentIndex {
    fn new(segs: Vec<(C64, C64)>) -> Self {
        let chunks = chunks_of(&segs);
        SegmentIndex { segs, chunks }
    }

    fn distance(&self, z: C64) -> f64 {
        let bound = |c: &Chunk| {
            let dx = (c.lo.re - z.re).max(z.re - c.hi.re).max(0.0);
            let dy = (c.lo.im - z.im).max(z.im - c.hi.im).max(0.0);
            dx.hypot(dy)
        };
        let scan = |c: &Chunk, best: f64| {
            self.segs[c.start..c.end]
                .iter()
                .map(|&(a, b)| point_segment_distance(z, a, b).0)
                .fold(best, f64::min)
        };
        let bounds: Vec<f64> = self.chunks.iter().map(bound).collect();
        let Some(first) = (0..bounds.len()).min_by(|&i, &j| bounds[i].total_cmp(&bounds[j])) else {
            return f64::INFINITY;
        };
        let mut best = scan(&self.chunks[first], f64::INFINITY);
        for (k, c) in self.chunks.iter().enumerate() {
            if k != first && bounds[k] < best {
                best = scan(c, best);
            }
        }
        best
    }
}

/// Edges of one closed separator in chunks, for parity tests.
struct ParityIndex {
    edges: Vec<(C64, C64)>,
    chunks: Vec<Chunk>,
}

impl ParityIndex {
    fn new(pts: &[C64]) -> Self {
        // Same edge orientation as `inside_polygon`, so crossings agree.
        let n = pts.len();
        let edges: Vec<(C64, C64)> = (0..n).map(|i| (pts[i], pts[(i + n - 1) % n])).collect();
        let chunks = chunks_of(&edges);
        ParityIndex { edges, chunks }
    }

    fn inside(&self, p: C64) -> bool {
        let above = |q: C64| q.im > p.im;
        let mut inside = false;
        for c in &self.chunks {
            if p.im < c.lo.im || p.im >= c.hi.im || p.re >= c.hi.re {
                continue;
            }
            if p.re < c.lo.re {
                // The run is a path lying to the right of p: it crosses
                // the horizontal line an odd number of times iff its ends
                // are on opposite sides.
                let (first, last) = (self.edges[c.start].1, self.edges[c.end - 1].0);
                inside ^= above(first) != above(last);
                continue;
            }
            for &(a, b) in &self.edges[c.start..c.end] {
                if above(a) != above(b) {
                    let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
                    if p.re < x {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

/// Indexed form of `RayGraph::pair_distance` and `RayGraph::signature`
/// for the many queries of region sampling.
struct Locator<'a> {
    graph: &'a RayGraph,
    inner: f64,
    pairs: SegmentIndex,
    separators: Vec<ParityIndex>,
}

impl<'a> Locator<'a> {
    fn new(graph: &'a RayGraph) -> Self {
        let mut used = BTreeSet::new();
        for p in &graph.pair_rays {
            used.extend(p.iter().copied());
        }
        let mut segs = Vec::new();
        for i in used {
            let mut pts = graph.rays[i].points();
            pts.push(graph.landing_points[graph.ray_landing[i]]);
            if pts.len() == 1 {
                segs.push((pts[0], pts[0]));
            }
            segs.extend(pts.windows(2).map(|w| (w[0], w[1])));
        }
        Locator {
            graph,
            inner: 0.5 * (graph.far_radius + graph.extent()),
            pairs: SegmentIndex::new(segs),
            separators: graph
                .separators
                .iter()
                .map(|c| ParityIndex::new(&c.points()[..c.len() - 1]))
                .collect(),
        }
    }

    fn pair_distance(&self, z: C64) -> f64 {
        self.pairs.distance(z)
    }

    fn signature(&self, z: C64) -> Vec<bool> {
        let z = if z.norm() > self.inner { z * (self.inner / z.norm()) } else { z };
        self.separators.iter().map(|r| r.inside(z)).collect()
    }

    fn region_of(&self, regions: &[BasicRegion], z: C64) -> Option<usize> {
        let s = self.signature(z);
        regions.iter().position(|r| r.signature == s)
    }
}

/// Separator of a pair: ray `a` from far to the landing point, then ray
/// `b` back out; both far ends are extended radially to `big_r` and joined
/// by a counterclockwise arc.
fn pair_separator(a: &Ray, b: &Ray, z0: C64, big_r: f64) -> Result<ParamCurve, CurveError> {
    let mut pts: Vec<C64> = Vec::new();
    let radial = |p: C64| {
        if p.norm() > 0.0 {
            p * (big_r / p.norm())
        } else {
            C64::new(big_r, 0.0)
        }
    };
    let a_pts = a.points();
    let b_pts = b.points();
    let a_far = a_pts.first().copied().unwrap_or(z0);
    let b_far = b_pts.first().copied().unwrap_or(z0);
    pts.push(radial(a_far));
    pts.extend(a_pts.iter().copied());
    pts.push(z0);
    pts.extend(b_pts.iter().rev().copied());
    let end = radial(b_far);
    pts.push(end);
    let (t0, t1) = (end.arg(), radial(a_far).arg());
    let mut sweep = (t1 - t0).rem_euclid(TAU);
    if sweep == 0.0 {
        sweep = TAU;
    }
    let n = ((sweep / (PI / 90.0)).ceil() as usize).max(2);
    for k in 1..n {
        pts.push(C64::from_polar(big_r, t0 + sweep * k as f64 / n as f64));
    }
    pts.dedup_by(|p, q| (*p - *q).norm() == 0.0);
    ParamCurve::polyline(&pts, true)
}

/// Builds the graph of landed rays of period `period`. Landing points are
/// identified at `1e-6`; every pair of rays sharing a landing point is a
/// ray pair.
pub fn build_ray_graph(rays: Vec<Ray>, period: usize) -> Result<RayGraph, SeparationError> {
    for r in &rays {
        if r.landing().is_none() {
            return Err(SeparationError::UnlandedRay(r.address.to_string()));
        }
        if r.address.period_len() != period {
            return Err(SeparationError::InvalidArgument(format!(
                "ray {} does not have period {period}",
                r.address
            )));
        }
    }
    let groups = landing_groups(&rays, LANDING_DEDUP_TOL)?;
    let mut landing_points = Vec::with_capacity(groups.len());
    let mut ray_landing = vec![0; rays.len()];
    let mut pair_rays = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        landing_points.push(rays[members[0]].landing().expect("checked above"));
        for &i in members {
            ray_landing[i] = g;
        }
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                pair_rays.push([members[a], members[b]]);
            }
        }
    }
    let mut graph = RayGraph {
        period,
        rays,
        landing_points,
        ray_landing,
        pairs: Vec::new(),
        pair_rays,
        separators: Vec::new(),
        far_radius: 0.0,
    };
    let big_r = 2.0 * graph.extent() + 10.0;
    graph.far_radius = big_r;
    for &[a, b] in &graph.pair_rays {
        let z0 = graph.landing_points[graph.ray_landing[a]];
        let (ra, rb) = (&graph.rays[a], &graph.rays[b]);
        graph.separators.push(pair_separator(ra, rb, z0, big_r)?);
        graph.pairs.push(RayPair {
            rays: [ra.clone(), rb.clone()],
            common_landing: z0,
        });
    }
    Ok(graph)
}

/// A parabolic basin counted as a virtual point: the attracting
/// direction, the probe and the iterations it took to come close.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualPoint {
    #[serde(with = "cserde")]
    pub at: C64,
    #[serde(with = "cserde")]
    pub direction: C64,
    #[serde(with = "cserde")]
    pub probe: C64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionContents {
    pub interior_points: Vec<FixedPointRecord>,
    pub virtual_points: Vec<VirtualPoint>,
    #[serde(with = "cserde::vec")]
    pub landing_points_on_boundary: Vec<C64>,
}

/// A connected component of the complement of the ray graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicRegion {
    pub id: usize,
    /// Side with respect to each pair separator.
    pub signature: Vec<bool>,
    pub boundary_rays: Vec<Address>,
    #[serde(with = "cserde")]
    pub sample_interior_point: C64,
    pub contents: RegionContents,
}

/// Index of the region containing `z`, by separator parity.
pub fn region_of(graph: &RayGraph, regions: &[BasicRegion], z: C64) -> Option<usize> {
    let s = graph.signature(z);
    regions.iter().position(|r| r.signature == s)
}

/// Region signatures on a grid of the bbox with the given step plus
/// probes on a far circle, skipping points within `step` of pair rays.
/// Each signature keeps the sample with the largest clearance.
fn signature_samples(loc: &Locator, bbox: &Rect, step: f64) -> BTreeMap<Vec<bool>, (C64, f64)> {
    let graph = loc.graph;
    let mut out: BTreeMap<Vec<bool>, (C64, f64)> = BTreeMap::new();
    let add = |z: C64, out: &mut BTreeMap<Vec<bool>, (C64, f64)>| {
        let d = loc.pair_distance(z);
        if d <= step {
            return;
        }
        let s = loc.signature(z);
        let e = out.entry(s).or_insert((z, d));
        if d > e.1 {
            *e = (z, d);
        }
    };
    let nx = (bbox.width() / step).floor() as usize;
    let ny = (bbox.height() / step).floor() as usize;
    for i in 0..nx {
        for k in 0..ny {
            let z = C64::new(
                bbox.x0 + (i as f64 + 0.5) * step,
                bbox.y0 + (k as f64 + 0.5) * step,
            );
            add(z, &mut out);
        }
    }
    let far = 1.5 * graph.extent().max(bbox.diagonal());
    for k in 0..1440 {
        add(C64::from_polar(far, TAU * k as f64 / 1440.0), &mut out);
    }
    out
}

/// Basic regions of the graph. Membership is decided by parity against
/// each pair separator, so regions leaving the bbox are not split. The
/// signature set must be the same at the grid step and at half of it.
pub fn basic_regions(graph: &RayGraph, bbox: Rect, resolution: f64) -> Result<Vec<BasicRegion>, SeparationError> {
    if !bbox.is_valid() || !(resolution > 0.0) {
        return Err(SeparationError::InvalidArgument("bbox and resolution must be valid".into()));
    }
    if graph.pair_rays.is_empty() {
        let mut z = C64::new(0.5 * (bbox.x0 + bbox.x1), 0.5 * (bbox.y0 + bbox.y1));
        let mut k = 0;
        while (0..graph.rays.len()).any(|i| graph.ray_distance(i, z) <= 1e-6) && k < 64 {
            z += C64::from_polar(0.01 * bbox.diagonal(), 0.7 * k as f64);
            k += 1;
        }
        return Ok(vec![BasicRegion {
            id: 0,
            signature: Vec::new(),
            boundary_rays: Vec::new(),
            sample_interior_point: z,
            contents: RegionContents {
                landing_points_on_boundary: graph.landing_points.clone(),
                ..Default::default()
            },
        }]);
    }
    let step = resolution.max(bbox.width().max(bbox.height()) / 250.0);
    let loc = Locator::new(graph);
    let coarse = signature_samples(&loc, &bbox, step);
    let fine = signature_samples(&loc, &bbox, 0.5 * step);
    if coarse.keys().ne(fine.keys()) {
        return Err(SeparationError::ResolutionTooCoarse {
            coarse: coarse.len(),
            fine: fine.len(),
        });
    }
    let mut regions: Vec<BasicRegion> = coarse
        .into_iter()
        .enumerate()
        .map(|(id, (signature, (z, _)))| BasicRegion {
            id,
            signature,
            boundary_rays: Vec::new(),
            sample_interior_point: z,
            contents: RegionContents::default(),
        })
        .collect();
    let mut in_pair = BTreeSet::new();
    for p in &graph.pair_rays {
        in_pair.extend(p.iter().copied());
    }
    for &i in &in_pair {
        let pts = graph.rays[i].points();
        for w in pts.windows(2) {
            let d = w[1] - w[0];
            if d.norm() == 0.0 {
                continue;
            }
            let n = d * C64::new(0.0, 1.0) / d.norm();
            let mid = 0.5 * (w[0] + w[1]);
            for side in [-1.0, 1.0] {
                let q = mid + n * (side * 2.0 * step);
                if loc.pair_distance(q) <= step {
                    continue;
                }
                if let Some(r) = loc.region_of(&regions, q) {
                    let a = &graph.rays[i].address;
                    if !regions[r].boundary_rays.contains(a) {
                        regions[r].boundary_rays.push(a.clone());
                    }
                }
            }
        }
    }
    for r in &mut regions {
        r.boundary_rays.sort();
        for (i, ray) in graph.rays.iter().enumerate() {
            if r.boundary_rays.contains(&ray.address) {
                let z = graph.landing_points[graph.ray_landing[i]];
                if !r.contents.landing_points_on_boundary.contains(&z) {
                    r.contents.landing_points_on_boundary.push(z);
                }
            }
        }
    }
    Ok(regions)
}

/// Which part of the counting contour a piece is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceTag {
    /// Preimage of `C_R` in the tract, covering it `n` times under `f`.
    RAlpha { alpha: i64, n: usize },
    /// Boundary of the tract side: the two lifts of `δ` and the connector.
    GammaAlpha { alpha: i64, part: GammaPart },
    /// Arc of a modified region boundary, with its type 0–3.
    S { arc_type: u8 },
}

impl PieceTag {
    /// Arc type used for coloring: `r_α` pieces are type 2, `Γ_α` pieces
    /// type 3.
    pub fn arc_type(&self) -> u8 {
        match self {
            PieceTag::RAlpha { .. } => 2,
            PieceTag::GammaAlpha { .. } => 3,
            PieceTag::S { arc_type } => *arc_type,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPart {
    DeltaMinus,
    DeltaPlus,
    Connector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourPiece {
    pub tag: PieceTag,
    pub curve: ParamCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingContour {
    pub pieces: Vec<ContourPiece>,
    pub closed_curve: ParamCurve,
    pub expected_count: i64,
    pub radius: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalCounts {
    pub n: usize,
    pub fixed_points_found: i64,
    pub n_plus_1_check: bool,
}

/// Parameter `s ≥ 0` where the cut meets `|z| = big_r`.
fn cut_circle_crossing(cut: &CutRay, big_r: f64) -> Option<f64> {
    let d = cut.direction();
    let b = 2.0 * (cut.start * d.conj()).re;
    let c = cut.start.norm_sqr() - big_r * big_r;
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return None;
    }
    let s = 0.5 * (-b + disc.sqrt());
    (s >= 0.0).then_some(s)
}

/// Checks fullness (one tract, consecutive domains) and completeness
/// (every domain meeting the disk is included; every other domain of the
/// tract has a fixed ray landing alone at a repelling point). Returns the
/// labels in cyclic order and warnings for missing evidence.
fn check_collection(
    setup: &StructuralSetup,
    domains: &[BranchLabel],
    evidence: &[Ray],
) -> Result<(i64, Vec<BranchLabel>, Vec<String>), SeparationError> {
    if domains.is_empty() {
        return Err(SeparationError::InvalidArgument("empty collection".into()));
    }
    let mut chosen = Vec::new();
    for l in domains {
        let d = setup
            .domain(l)
            .ok_or_else(|| SeparationError::NotFullComplete(format!("domain {l} is not in the setup")))?;
        chosen.push(d);
    }
    let alpha = chosen[0].tract;
    if chosen.iter().any(|d| d.tract != alpha) {
        return Err(SeparationError::InvalidArgument(
            "collections spanning several tracts are not supported".into(),
        ));
    }
    let mut tract: Vec<_> = setup.domains.iter().filter(|d| d.tract == alpha).collect();
    tract.sort_by_key(|d| d.order_key);
    let pos: Vec<usize> = {
        let mut v: Vec<usize> = chosen
            .iter()
            .map(|c| tract.iter().position(|d| d.label == c.label).expect("domain of tract"))
            .collect();
        v.sort();
        v.dedup();
        v
    };
    if pos.len() != chosen.len() {
        return Err(SeparationError::InvalidArgument("repeated domain in collection".into()));
    }
    if pos.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(SeparationError::NotFullComplete("domains are not consecutive in their tract".into()));
    }
    for d in &setup.domains {
        if d.meets_disk && !domains.contains(&d.label) {
            return Err(SeparationError::NotFullComplete(format!("domain {} meets the disk", d.label)));
        }
    }
    let mut warnings = Vec::new();
    for d in tract.iter().filter(|d| !d.truncated && !domains.contains(&d.label)) {
        let addr = Address::periodic(vec![d.label.clone()]);
        let Some(ray) = evidence.iter().find(|r| r.address == addr) else {
            warnings.push(format!("no traced evidence for domain {}", d.label));
            continue;
        };
        let Some(z) = ray.landing() else {
            return Err(SeparationError::NotFullComplete(format!("ray {addr} has not landed")));
        };
        if evidence
            .iter()
            .any(|r| r.address != addr && r.landing().is_some_and(|w| (w - z).norm() < LANDING_DEDUP_TOL))
        {
            return Err(SeparationError::NotFullComplete(format!("ray {addr} does not land alone")));
        }
        let (_, m) = setup.spec.eval(z)?;
        if classify_multiplier(m).0 != Classification::Repelling {
            return Err(SeparationError::NotFullComplete(format!(
                "ray {addr} lands at a non-repelling point"
            )));
        }
    }
    let labels = pos.iter().map(|&k| tract[k].label.clone()).collect();
    Ok((alpha, labels, warnings))
}

/// Grid on the bbox for the connector search.
struct Grid {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
}

impl Grid {
    fn point(&self, n: usize) -> C64 {
        C64::new(self.x0 + (n % self.nx) as f64 * self.h, self.y0 + (n / self.nx) as f64 * self.h)
    }

    fn neighbors(&self, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (i, k) = ((n % self.nx) as i64, (n / self.nx) as i64);
        let h = self.h;
        [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)]
            .into_iter()
            .filter_map(move |(di, dk)| {
                let (a, b) = (i + di, k + dk);
                (a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny).then(|| {
                    let len = if di != 0 && dk != 0 { h * std::f64::consts::SQRT_2 } else { h };
                    (b as usize * self.nx + a as usize, len)
                })
            })
    }

    /// Marks nodes within `r` of the segment `[a, b]`.
    fn mark_segment(&self, blocked: &mut [bool], a: C64, b: C64, r: f64) {
        let (lo_x, hi_x) = (a.re.min(b.re) - r, a.re.max(b.re) + r);
        let (lo_y, hi_y) = (a.im.min(b.im) - r, a.im.max(b.im) + r);
        let i0 = ((lo_x - self.x0) / self.h).floor().max(0.0) as usize;
        let k0 = ((lo_y - self.y0) / self.h).floor().max(0.0) as usize;
        let i1 = (((hi_x - self.x0) / self.h).ceil().max(0.0) as usize).min(self.nx.saturating_sub(1));
        let k1 = (((hi_y - self.y0) / self.h).ceil().max(0.0) as usize).min(self.ny.saturating_sub(1));
        for k in k0..=k1 {
            for i in i0..=i1 {
                let n = k * self.nx + i;
                if n < blocked.len() && point_segment_distance(self.point(n), a, b).0 <= r {
                    blocked[n] = true;
                }
            }
        }
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source distance from the blocked nodes.
fn clearance(grid: &Grid, blocked: &[bool]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; blocked.len()];
    let mut heap = BinaryHeap::new();
    for (n, &b) in blocked.iter().enumerate() {
        if b {
            dist[n] = 0.0;
            heap.push(HeapItem(0.0, n));
        }
    }
    while let Some(HeapItem(d, n)) = heap.pop() {
        if d > dist[n] {
            continue;
        }
        for (m, len) in grid.neighbors(n) {
            if d + len < dist[m] {
                dist[m] = d + len;
                heap.push(HeapItem(d + len, m));
            }
        }
    }
    dist
}

/// Shortest paths from `src` over free nodes with cost
/// `length · (1 + 4 / clearance)`.
fn dijkstra(grid: &Grid, blocked: &[bool], clear: &[f64], src: usize) -> (Vec<f64>, Vec<usize>) {
    let mut dist = vec![f64::INFINITY; blocked.len()];
    let mut prev = vec![usize::MAX; blocked.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapItem(0.0, src));
    while let Some(HeapItem(d, n)) = heap.pop() {
        if d > dist[n] {
            continue;
        }
        for (m, len) in grid.neighbors(n) {
            if blocked[m] {
                continue;
            }
            let c = (0.5 * (clear[n] + clear[m])).max(0.5 * grid.h);
            let nd = d + len * (1.0 + 4.0 / c);
            if nd < dist[m] {
                dist[m] = nd;
                prev[m] = n;
                heap.push(HeapItem(nd, m));
            }
        }
    }
    (dist, prev)
}

fn path_to(prev: &[usize], src: usize, dst: usize) -> Vec<usize> {
    let mut out = vec![dst];
    let mut n = dst;
    while n != src {
        n = prev[n];
        out.push(n);
    }
    out.reverse();
    out
}

/// Nearest free node to `p` within `12h`.
fn snap(grid: &Grid, blocked: &[bool], p: C64) -> Option<usize> {
    let ci = ((p.re - grid.x0) / grid.h).round() as i64;
    let ck = ((p.im - grid.y0) / grid.h).round() as i64;
    let mut best: Option<(f64, usize)> = None;
    for dk in -12..=12i64 {
        for di in -12..=12i64 {
            let (i, k) = (ci + di, ck + dk);
            if i < 0 || k < 0 || i as usize >= grid.nx || k as usize >= grid.ny {
                continue;
            }
            let n = k as usize * grid.nx + i as usize;
            if blocked[n] {
                continue;
            }
            let d = (grid.point(n) - p).norm();
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, n));
            }
        }
    }
    best.map(|b| b.1)
}

fn dedup_points(pts: &mut Vec<C64>) {
    pts.dedup_by(|p, q| (*p - *q).norm() <= 1e-12 * (1.0 + q.norm()));
}

/// The global counting contour for a full and complete collection of
/// fundamental domains of one tract. `evidence` are traced fixed rays:
/// they certify completeness and are avoided by the connector.
pub fn counting_contour(
    setup: &StructuralSetup,
    domains: &[BranchLabel],
    big_r: Option<f64>,
    evidence: &[Ray],
) -> Result<CountingContour, SeparationError> {
    let (alpha, labels, mut warnings) = check_collection(setup, domains, evidence)?;
    let n = labels.len();
    let big_r = match big_r {
        Some(r) => r,
        None => auto_expansion_radius(setup, &labels)?,
    };
    if !validate_expansion_radius(setup, &labels, big_r).valid {
        return Err(SeparationError::ExpansionNotValidated(big_r));
    }
    let spec = &setup.spec;
    let cut = setup.cut;
    let s_p = cut_circle_crossing(&cut, big_r)
        .ok_or_else(|| SeparationError::InvalidArgument("cut does not meet C_R".into()))?;
    let p = cut.point_at(s_p);
    let theta_p = p.arg();

    // r: the pulled circle, one full turn per domain.
    const PER_TURN: usize = 256;
    let mut r_pts: Vec<C64> = Vec::with_capacity(n * PER_TURN + 1);
    for (k, l) in labels.iter().enumerate() {
        let mut piece = Vec::with_capacity(PER_TURN + 1);
        for i in 0..=PER_TURN {
            let w = C64::from_polar(big_r, theta_p + TAU * i as f64 / PER_TURN as f64);
            let edge = match i {
                0 => Some(Edge::Lower),
                i if i == PER_TURN => Some(Edge::Upper),
                _ => None,
            };
            let w = if edge.is_some() { p } else { w };
            piece.push(spec.pull(w, l, &cut, edge)?);
        }
        if let Some(&last) = r_pts.last() {
            let gap: f64 = (last - piece[0]).norm();
            if gap > 1e-9 * (1.0 + last.norm()) {
                return Err(SeparationError::NotFullComplete(format!(
                    "preimage arcs of domains {} and {} do not join",
                    labels[k - 1],
                    l
                )));
            }
            r_pts.extend(piece.into_iter().skip(1));
        } else {
            r_pts.extend(piece);
        }
    }
    let mut turns = 0.0;
    let mut prev: Option<C64> = None;
    for &z in &r_pts {
        let v = spec.eval(z)?.0;
        if let Some(u) = prev {
            turns += (v / u).arg();
        }
        prev = Some(v);
    }
    let covering = (turns / TAU).round();
    if (turns / TAU - n as f64).abs() > 1e-6 {
        return Err(SeparationError::NotFullComplete(format!(
            "f(r) winds {covering} times about 0, expected {n}"
        )));
    }

    // δ±: lifts of δ from P back to the start of the cut.
    const DELTA_SAMPLES: usize = 128;
    let lo = &labels[0];
    let hi = &labels[n - 1];
    let mut delta_minus = Vec::with_capacity(DELTA_SAMPLES + 1);
    let mut delta_plus = Vec::with_capacity(DELTA_SAMPLES + 1);
    for i in 0..=DELTA_SAMPLES {
        let s = s_p * i as f64 / DELTA_SAMPLES as f64;
        delta_minus.push(spec.pull(cut.point_at(s), lo, &cut, Some(Edge::Lower))?);
        let s = s_p * (DELTA_SAMPLES - i) as f64 / DELTA_SAMPLES as f64;
        delta_plus.push(spec.pull(cut.point_at(s), hi, &cut, Some(Edge::Upper))?);
    }
    let e_minus = delta_minus[0];
    let e_plus = delta_plus[DELTA_SAMPLES];
    if setup.disk.contains_closed(e_minus) || setup.disk.contains_closed(e_plus) {
        return Err(SeparationError::ConnectorBlocked("tract boundary point lies in the disk".into()));
    }

    // γ: connector outside tract, disk, δ and the evidence rays.
    let bbox = setup.bbox;
    let h = (bbox.width().max(bbox.height()) / 400.0).clamp(0.02, 0.25);
    let grid = Grid {
        x0: bbox.x0,
        y0: bbox.y0,
        h,
        nx: (bbox.width() / h).floor() as usize + 1,
        ny: (bbox.height() / h).floor() as usize + 1,
    };
    let total = grid.nx * grid.ny;
    let r_disk = setup.disk.radius;
    let ln_r = r_disk.ln();
    let mut blocked = vec![false; total];
    for (node, b) in blocked.iter_mut().enumerate() {
        let z = grid.point(node);
        if (z - setup.disk.center).norm() <= r_disk + h || cut.distance(z) <= h {
            *b = true;
            continue;
        }
        *b = match spec.eval(z) {
            Ok((v, d)) => {
                let lv = v.norm().ln();
                let rate = (d / v).norm();
                !lv.is_finite() || lv >= ln_r - h * rate
            }
            Err(_) => true,
        };
    }
    for ray in evidence {
        let mut pts = ray.points();
        if let Some(z) = ray.landing() {
            pts.push(z);
        }
        for w in pts.windows(2) {
            grid.mark_segment(&mut blocked, w[0], w[1], h);
        }
    }
    let clear = clearance(&grid, &blocked);
    let d = cut.direction();
    let far_in_box = {
        let mut s = 0.0;
        while bbox.inset_distance(cut.point_at(s + h)) > 3.0 * h {
            s += h;
        }
        s
    };
    let s_cross = {
        let target = cut_circle_crossing(&cut, 1.1 * big_r + 2.0 * h).unwrap_or(0.0);
        target.min(far_in_box)
    };
    if cut.point_at(s_cross).norm() <= r_disk + 3.0 * h {
        return Err(SeparationError::ConnectorBlocked(
            "no room to cross the cut inside the bbox; enlarge the bbox".into(),
        ));
    }
    let normal = -C64::new(0.0, 1.0) * d;
    let q_a = cut.point_at(s_cross) + normal * (2.0 * h);
    let q_b = cut.point_at(s_cross) - normal * (2.0 * h);
    let blocked_err = |what: &str| SeparationError::ConnectorBlocked(format!("{what}; enlarge the bbox"));
    let n_plus = snap(&grid, &blocked, e_plus).ok_or_else(|| blocked_err("no free node near E+"))?;
    let n_minus = snap(&grid, &blocked, e_minus).ok_or_else(|| blocked_err("no free node near E-"))?;
    let n_a = snap(&grid, &blocked, q_a).ok_or_else(|| blocked_err("no free node beside the cut"))?;
    let n_b = snap(&grid, &blocked, q_b).ok_or_else(|| blocked_err("no free node beside the cut"))?;
    let (dist_p, prev_p) = dijkstra(&grid, &blocked, &clear, n_plus);
    let (dist_m, prev_m) = dijkstra(&grid, &blocked, &clear, n_minus);
    let ab = dist_p[n_a] + dist_m[n_b];
    let ba = dist_p[n_b] + dist_m[n_a];
    let ((n_in, q_in), (n_out, q_out)) = if ab.is_finite() && (ab <= ba || !ba.is_finite()) {
        ((n_a, q_a), (n_b, q_b))
    } else if ba.is_finite() {
        ((n_b, q_b), (n_a, q_a))
    } else {
        return Err(blocked_err("no path around the disk"));
    };
    let mut gamma = vec![e_plus];
    gamma.extend(path_to(&prev_p, n_plus, n_in).into_iter().map(|k| grid.point(k)));
    gamma.push(q_in);
    gamma.push(q_out);
    let mut back: Vec<C64> = path_to(&prev_m, n_minus, n_out).into_iter().map(|k| grid.point(k)).collect();
    back.reverse();
    gamma.extend(back);
    gamma.push(e_minus);
    dedup_points(&mut gamma);

    let mut closed: Vec<C64> = Vec::new();
    for piece in [&delta_minus, &r_pts, &delta_plus, &gamma] {
        closed.extend(piece.iter().copied());
    }
    dedup_points(&mut closed);
    let closed_curve = ParamCurve::polyline(&closed, true)?;
    check_simple(&closed_curve)
        .map_err(|e| SeparationError::ConnectorBlocked(format!("contour is not simple ({e})")))?;
    if !evidence.is_empty() && evidence.iter().all(|r| r.landing().is_none()) {
        warnings.push("no evidence ray has landed".into());
    }
    let piece = |pts: &[C64]| {
        let mut v = pts.to_vec();
        dedup_points(&mut v);
        ParamCurve::polyline(&v, false)
    };
    let tag_gamma = |part| PieceTag::GammaAlpha { alpha, part };
    Ok(CountingContour {
        pieces: vec![
            ContourPiece {
                tag: tag_gamma(GammaPart::DeltaMinus),
                curve: piece(&delta_minus)?,
            },
            ContourPiece {
                tag: PieceTag::RAlpha { alpha, n },
                curve: piece(&r_pts)?,
            },
            ContourPiece {
                tag: tag_gamma(GammaPart::DeltaPlus),
                curve: piece(&delta_plus)?,
            },
            ContourPiece {
                tag: tag_gamma(GammaPart::Connector),
                curve: piece(&gamma)?,
            },
        ],
        closed_curve,
        expected_count: n as i64 + 1,
        radius: big_r,
        warnings,
    })
}

/// Fixed points counted over the contour against the expected `N + 1`.
pub fn global_count_check(setup: &StructuralSetup, contour: &CountingContour) -> Result<GlobalCounts, SeparationError> {
    let found = argument_principle_count(&setup.spec, &contour.closed_curve, CountMode::FixedPoints, 1)?;
    Ok(GlobalCounts {
        n: (contour.expected_count - 1) as usize,
        fixed_points_found: found,
        n_plus_1_check: found == contour.expected_count,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationKind {
    /// Repelling point: the region is enlarged by a disk and absorbs it.
    Enlarged,
    /// Parabolic point: a repelling petal is removed from the region.
    Shrunk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModifiedRegion {
    pub region: BasicRegion,
    #[serde(with = "cserde")]
    pub at: C64,
    pub kind: ModificationKind,
    /// The replacing arc and its image.
    pub zeta: ParamCurve,
    pub image: ParamCurve,
    /// Smallest distance of the image to the forbidden side.
    pub margin: f64,
    /// A boundary ray leaves the zone again after first entering it.
    pub wiggles: bool,
}

/// First crossing of a ray, walked from far out towards its landing
/// point, into the zone `{g < 0}`. Returns the crossing and whether a
/// later sample leaves the zone again.
fn first_entry<G: Fn(C64) -> f64>(ray: &Ray, z0: C64, g: G) -> Option<(C64, bool)> {
    let mut pts = ray.points();
    pts.push(z0);
    let k = pts.iter().position(|&z| z == z0 || g(z) < 0.0)?;
    if k == 0 {
        return None;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let z = a + (b - a) * mid;
        if z != z0 && g(z) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = a + (b - a) * lo;
    let wiggles = pts[k..pts.len() - 1].iter().any(|&z| g(z) > 0.0);
    Some((x, wiggles))
}

/// Distance from `z` to the boundary rays of `region`.
fn boundary_distance(graph: &RayGraph, region: &BasicRegion, z: C64) -> f64 {
    (0..graph.rays.len())
        .filter(|&i| region.boundary_rays.contains(&graph.rays[i].address))
        .map(|i| graph.ray_distance(i, z))
        .fold(f64::INFINITY, f64::min)
}

/// Replaces the boundary of `region` near the fixed point `record` (a
/// common landing point of two boundary rays). A repelling point is
/// absorbed by adding the disk of radius `eps`; a parabolic point is cut
/// away with a repelling petal of size `eps`. The containment of `f(ζ)`
/// is then checked on samples. `known_fixed` lists other fixed points
/// that must stay outside the modification zone.
pub fn modify_boundary_near_fixed_point<M: HolomorphicMap + ?Sized>(
    map: &M,
    graph: &RayGraph,
    region: &BasicRegion,
    record: &FixedPointRecord,
    eps: f64,
    known_fixed: &[C64],
) -> Result<ModifiedRegion, SeparationError> {
    if !(eps > 0.0) {
        return Err(SeparationError::InvalidArgument("eps must be positive".into()));
    }
    let z0 = record.location;
    let rays: Vec<&Ray> = graph
        .rays
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            region.boundary_rays.contains(&r.address)
                && (graph.landing_points[graph.ray_landing[*i]] - z0).norm() < LANDING_DEDUP_TOL
        })
        .map(|(_, r)| r)
        .collect();
    if rays.len() < 2 {
        return Err(SeparationError::NotOnBoundary);
    }
    let others: Vec<C64> = known_fixed
        .iter()
        .copied()
        .filter(|p| (p - z0).norm() > LANDING_DEDUP_TOL)
        .collect();
    let in_region = |z: C64| graph.signature(z) == region.signature;
    const ARC_SAMPLES: usize = 128;

    let parabolic = record.classification == Classification::Parabolic;
    if !parabolic {
        if let Some(p) = others.iter().find(|p| (*p - z0).norm() <= eps) {
            return Err(SeparationError::EpsTooLarge(format!("fixed point {p} lies in the disk")));
        }
        for k in 0..256 {
            let s = z0 + C64::from_polar(eps, TAU * k as f64 / 256.0);
            if (map.eval(s)?.0 - z0).norm() <= eps {
                return Err(SeparationError::EpsTooLarge(format!("f does not expand the circle at {s}")));
            }
        }
        let g = |z: C64| (z - z0).norm() - eps;
        let mut entries = Vec::new();
        for r in &rays {
            let (x, w) = first_entry(r, z0, g).ok_or_else(|| SeparationError::RayMissesZone(r.address.to_string()))?;
            entries.push(((x - z0).arg(), x, w));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Sector of V between consecutive entries, by a probe at half radius.
        let m = entries.len();
        let mut chosen = None;
        for i in 0..m {
            let (ta, tb) = (entries[i].0, entries[(i + 1) % m].0);
            let sweep = (tb - ta).rem_euclid(TAU);
            let probe = z0 + C64::from_polar(0.5 * eps, ta + 0.5 * sweep);
            if in_region(probe) {
                chosen = Some((i, (i + 1) % m));
                break;
            }
        }
        let (ia, ib) = chosen.ok_or(SeparationError::NotOnBoundary)?;
        let (ta, tb) = (entries[ia].0, entries[ib].0);
        let wiggles = entries[ia].2 || entries[ib].2;
        // ζ runs from x_b counterclockwise to x_a, outside V.
        let sweep = (ta - tb).rem_euclid(TAU);
        let zeta_pts: Vec<C64> = (0..=ARC_SAMPLES)
            .map(|k| z0 + C64::from_polar(eps, tb + sweep * k as f64 / ARC_SAMPLES as f64))
            .collect();
        let mut image = Vec::with_capacity(zeta_pts.len());
        let mut margin = f64::INFINITY;
        let mut worst = zeta_pts[0];
        for (k, &s) in zeta_pts.iter().enumerate() {
            let fs = map.eval(s)?.0;
            image.push(fs);
            if k == 0 || k == ARC_SAMPLES {
                continue;
            }
            let d = boundary_distance(graph, region, fs);
            let side = if in_region(fs) { -d } else { d };
            let mk = side.min((fs - z0).norm() - eps);
            if mk < margin {
                margin = mk;
                worst = s;
            }
        }
        if !(margin > SIDE_MARGIN) {
            return Err(SeparationError::SideCheckFailed { margin, at: worst });
        }
        let mut out = region.clone();
        out.contents.landing_points_on_boundary.retain(|p| (p - z0).norm() >= LANDING_DEDUP_TOL);
        out.contents.interior_points.push(record.clone());
        return Ok(ModifiedRegion {
            region: out,
            at: z0,
            kind: ModificationKind::Enlarged,
            zeta: ParamCurve::polyline(&zeta_pts, false)?,
            image: ParamCurve::polyline(&image, false)?,
            margin,
            wiggles,
        });
    }

    let q = classify_multiplier(record.multiplier).1.unwrap_or(1);
    let fan = petal_directions(map, z0, record.period * q)?;
    let m = fan.m as i32;
    let a = fan.leading_coeff;
    for dir in &fan.attracting_dirs {
        let probe = z0 + dir * (0.5 * eps);
        if in_region(probe) {
            return Err(SeparationError::VirtualPointInRegion(probe));
        }
    }
    // Repelling direction the boundary rays approach along.
    let approach: C64 = rays
        .iter()
        .filter_map(|r| r.samples.last().map(|s| s.1 - z0))
        .filter(|u| u.norm() > 0.0)
        .map(|u| u / u.norm())
        .sum();
    let v = fan
        .repelling_dirs
        .iter()
        .copied()
        .max_by(|x, y| (x.conj() * approach).re.total_cmp(&(y.conj() * approach).re))
        .ok_or(SeparationError::NotOnBoundary)?;
    let big_k = 1.0 / (m as f64 * a.norm() * eps.powi(m));
    let fatou = |u: C64| -1.0 / (a * m as f64 * u.powi(m));
    let in_sector = |u: C64| (u / v).arg().abs() < PI / m as f64;
    // Negative inside the petal W.
    let g = |z: C64| {
        let u = z - z0;
        if u.norm() == 0.0 {
            return -1.0;
        }
        if !in_sector(u) {
            return 1.0;
        }
        fatou(u).re + big_k
    };
    if let Some(p) = others.iter().find(|p| g(**p) < 0.0) {
        return Err(SeparationError::EpsTooLarge(format!("fixed point {p} lies in the petal")));
    }
    let mut ys = Vec::new();
    let mut wiggles = false;
    for r in &rays {
        let (x, w) = first_entry(r, z0, g).ok_or_else(|| SeparationError::RayMissesZone(r.address.to_string()))?;
        ys.push(fatou(x - z0).im);
        wiggles |= w;
    }
    ys.sort_by(|x, y| x.total_cmp(y));
    // Rays adjacent through V: consecutive in the Fatou coordinate with a
    // midpoint probe just outside the petal inside V.
    let from_w = |w: C64| {
        let base = (-1.0 / (a * m as f64 * w)).powf(1.0 / m as f64);
        (0..m)
            .map(|k| base * C64::from_polar(1.0, TAU * k as f64 / m as f64))
            .max_by(|x, y| (x.conj() * v).re.total_cmp(&(y.conj() * v).re))
            .expect("m >= 1")
    };
    let mut span = None;
    for k in 0..ys.len() - 1 {
        let mid = C64::new(-big_k * 0.95, 0.5 * (ys[k] + ys[k + 1]));
        if in_region(z0 + from_w(mid)) {
            span = Some((ys[k], ys[k + 1]));
            break;
        }
    }
    let (y0, y1) = span.ok_or(SeparationError::NotOnBoundary)?;
    let zeta_pts: Vec<C64> = (0..=ARC_SAMPLES)
        .map(|k| z0 + from_w(C64::new(-big_k, y0 + (y1 - y0) * k as f64 / ARC_SAMPLES as f64)))
        .collect();
    let mut image = Vec::with_capacity(zeta_pts.len());
    let mut margin = f64::INFINITY;
    let mut worst = zeta_pts[0];
    for (k, &s) in zeta_pts.iter().enumerate() {
        let fs = map.eval(s)?.0;
        image.push(fs);
        if k == 0 || k == ARC_SAMPLES {
            continue;
        }
        let d = boundary_distance(graph, region, fs);
        let side = if in_region(fs) { d } else { -d };
        let u = fs - z0;
        let petal = if in_sector(u) {
            (fatou(u).re + big_k) * a.norm() * u.norm().powi(m + 1)
        } else {
            f64::INFINITY
        };
        let mk = side.min(petal);
        if mk < margin {
            margin = mk;
            worst = s;
        }
    }
    if !(margin > SIDE_MARGIN) {
        return Err(SeparationError::SideCheckFailed { margin, at: worst });
    }
    let mut out = region.clone();
    out.contents.landing_points_on_boundary.retain(|p| (p - z0).norm() >= LANDING_DEDUP_TOL);
    Ok(ModifiedRegion {
        region: out,
        at: z0,
        kind: ModificationKind::Shrunk,
        zeta: ParamCurve::polyline(&zeta_pts, false)?,
        image: ParamCurve::polyline(&image, false)?,
        margin,
        wiggles,
    })
}

/// Verdict for one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    ExactlyOneInterior,
    ExactlyOneVirtual,
    Violation {
        details: String,
        #[serde(with = "cserde::vec")]
        interior: Vec<C64>,
        #[serde(with = "cserde::vec")]
        virtual_points: Vec<C64>,
    },
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }
}

/// Role of a periodic point in the report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRole {
    Interior,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPoint {
    pub record: FixedPointRecord,
    pub role: PointRole,
    /// Region of an interior point.
    pub region: Option<usize>,
}

/// Address and landing point of a ray in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySummary {
    pub address: Address,
    #[serde(with = "cserde::opt")]
    pub landing: Option<C64>,
    /// The ray was found from the itinerary of a periodic point.
    pub from_itinerary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub map: String,
    pub period: usize,
    pub window: Rect,
    pub rays: Vec<RaySummary>,
    pub pairs: Vec<[Address; 2]>,
    pub regions: Vec<BasicRegion>,
    pub verdicts: Vec<Verdict>,
    pub points: Vec<ClassifiedPoint>,
    pub global_counts: Option<GlobalCounts>,
    /// Unresolved rays and periodic points without a certified role.
    pub incomplete: Vec<String>,
    pub warnings: Vec<String>,
    /// The landed rays with their samples, for drawing.
    #[serde(skip)]
    pub graph: Option<RayGraph>,
}

impl SeparationReport {
    pub fn has_violation(&self) -> bool {
        self.verdicts.iter().any(Verdict::is_violation)
    }

    pub fn is_incomplete(&self) -> bool {
        !self.incomplete.is_empty()
    }

    pub fn interior_count(&self) -> usize {
        self.points.iter().filter(|p| p.role == PointRole::Interior).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOptions {
    /// Domains whose period-`p` rays are traced; the untruncated domains
    /// when absent.
    pub domains: Option<Vec<BranchLabel>>,
    pub depth: usize,
    pub schedule: Vec<usize>,
    pub t_grid: Option<Vec<f64>>,
    /// Grid resolution for region sampling.
    pub resolution: f64,
    /// Also build the counting contour over the domains (period 1 only).
    pub global_check: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            domains: None,
            depth: 320,
            schedule: default_schedule(),
            t_grid: None,
            resolution: 0.02,
            global_check: true,
        }
    }
}

/// Candidate labels `L` with `ψ_L(f(z)) = z`, from the domain of `z` and
/// its neighbors, trying both sides when `z` is on a lift of `δ`.
fn itinerary_labels(setup: &StructuralSetup, z: C64, fz: C64) -> Vec<BranchLabel> {
    let mut base = Vec::new();
    if let Some(l) = setup.label_of(z) {
        base.push(l);
    }
    let j0 = base.first().map_or_else(
        || {
            let outer = setup.spec.outer();
            outer.band_of(setup.cut.dir, z.im)
        },
        |l| l.j,
    );
    let alpha = base.first().map_or(0, |l| l.alpha);
    let inner = base.first().map(|l| l.inner.clone()).unwrap_or_default();
    let mut cands: Vec<BranchLabel> = Vec::new();
    for dj in [0, -1, 1] {
        let l = BranchLabel {
            alpha,
            j: j0 + dj,
            inner: inner.clone(),
        };
        cands.push(l);
    }
    let mut out: Vec<BranchLabel> = Vec::new();
    for l in cands {
        let ok = [None, Some(Edge::Lower), Some(Edge::Upper)].into_iter().any(|e| {
            setup
                .spec
                .pull(fz, &l, &setup.cut, e)
                .is_ok_and(|w| (w - z).norm() < 1e-7 * (1.0 + z.norm()))
        });
        if ok && !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

/// Addresses of period `p` read off the orbit of `z`.
fn itinerary_addresses(setup: &StructuralSetup, z: C64, p: usize) -> Vec<Address> {
    let mut orbit = vec![z];
    for _ in 0..p {
        match setup.spec.eval(*orbit.last().expect("nonempty")) {
            Ok((w, _)) => orbit.push(w),
            Err(_) => return Vec::new(),
        }
    }
    let mut words: Vec<Vec<BranchLabel>> = vec![Vec::new()];
    for k in 0..p {
        let labels = itinerary_labels(setup, orbit[k], orbit[k + 1]);
        words = words
            .into_iter()
            .flat_map(|w| {
                labels.iter().map(move |l| {
                    let mut v = w.clone();
                    v.push(l.clone());
                    v
                })
            })
            .take(16)
            .collect();
    }
    words.into_iter().filter(|w| w.len() == p).map(Address::periodic).collect()
}

/// Probes the attracting directions of a parabolic point and returns the
/// directions whose probe orbit converges to it.
fn probe_virtual_points<M: HolomorphicMap + ?Sized>(
    map: &M,
    record: &FixedPointRecord,
) -> Result<Vec<VirtualPoint>, SeparationError> {
    let q = classify_multiplier(record.multiplier).1.unwrap_or(1);
    let iterate = record.period * q;
    let fan = petal_directions(map, record.location, iterate)?;
    let mut out = Vec::new();
    for &dir in &fan.attracting_dirs {
        let probe = record.location + dir * 0.1;
        let mut z = probe;
        for k in 1..=PROBE_ITERATIONS {
            z = match map.iterate(z, iterate) {
                Ok((w, _)) => w,
                Err(_) => break,
            };
            if (z - record.location).norm() < PROBE_TOL {
                out.push(VirtualPoint {
                    at: record.location,
                    direction: dir,
                    probe,
                    iterations: k,
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Builds the ray graph of period `period`, the basic regions, the
/// periodic points in `window` and the verdict for every region.
pub fn separation_report(
    setup: &StructuralSetup,
    period: usize,
    window: Rect,
    options: &ReportOptions,
) -> Result<SeparationReport, SeparationError> {
    if period == 0 {
        return Err(SeparationError::InvalidArgument("period must be positive".into()));
    }
    let spec = &setup.spec;
    let domains = options.domains.clone().unwrap_or_else(|| setup.untruncated_labels());
    let t_grid = options.t_grid.clone().unwrap_or_else(|| default_t_grid(setup));
    let mut warnings = Vec::new();
    let mut incomplete = Vec::new();

    let mut rays = fixed_rays(setup, &domains, period, options.depth, &t_grid, &options.schedule);
    let mut from_itinerary = vec![false; rays.len()];

    // Periodic points in the window.
    let seeds = SeedStrategy::for_setup(setup, period as u32);
    let mut region = window;
    let mut search = None;
    for _ in 0..4 {
        match find_periodic_points(spec, region, period as u32, &seeds) {
            Ok(s) => {
                search = Some(s);
                break;
            }
            Err(FixedPointError::BoundaryRoot { .. }) => region = region.expand(1e-3 * region.diagonal()),
            Err(e) => return Err(e.into()),
        }
    }
    let search = search.ok_or_else(|| SeparationError::InvalidArgument("window boundary meets a root".into()))?;
    warnings.extend(search.warnings.iter().cloned());
    let records = search.records;

    // Rays read off itineraries for repelling and parabolic points that
    // no traced ray reaches yet.
    let landed = |rays: &[Ray], z: C64| {
        rays.iter()
            .any(|r| r.landing().is_some_and(|w| (w - z).norm() < LANDING_DEDUP_TOL))
    };
    for rec in &records {
        let relevant = matches!(rec.classification, Classification::Repelling | Classification::Parabolic);
        if !relevant || landed(&rays, rec.location) {
            continue;
        }
        for addr in itinerary_addresses(setup, rec.location, period) {
            if rays.iter().any(|r| r.address == addr) {
                continue;
            }
            let Ok(ray) = trace_ray_unchecked(setup, &addr, options.depth, &t_grid) else {
                continue;
            };
            if matches!(ray.status, RayStatus::Broken { .. }) {
                continue;
            }
            let Ok(ray) = landing_point(setup, &ray, &options.schedule) else {
                continue;
            };
            if ray.landing().is_some_and(|w| (w - rec.location).norm() < LANDING_DEDUP_TOL) {
                rays.push(ray);
                from_itinerary.push(true);
                break;
            }
        }
    }

    let mut landed_rays = Vec::new();
    let mut summaries = Vec::new();
    for (r, it) in rays.iter().zip(&from_itinerary) {
        summaries.push(RaySummary {
            address: r.address.clone(),
            landing: r.landing(),
            from_itinerary: *it,
        });
        if r.landing().is_some() {
            landed_rays.push(r.clone());
        } else {
            incomplete.push(format!("ray {} did not land", r.address));
        }
    }
    let graph = build_ray_graph(landed_rays, period)?;
    let bbox = setup.bbox.union(&window);
    let mut regions = basic_regions(&graph, bbox, options.resolution)?;

    // Classification of the periodic points.
    let mut points = Vec::new();
    for rec in &records {
        let mut rec = rec.clone();
        let incident: Vec<Address> = graph
            .rays
            .iter()
            .filter(|r| r.landing().is_some_and(|w| (w - rec.location).norm() < LANDING_DEDUP_TOL))
            .map(|r| r.address.clone())
            .collect();
        rec.incident_ray_addresses = incident.clone();
        if rec.classification == Classification::Parabolic {
            for vp in probe_virtual_points(spec, &rec)? {
                match region_of(&graph, &regions, vp.probe) {
                    Some(r) => regions[r].contents.virtual_points.push(vp),
                    None => warnings.push(format!("virtual point probe {} is in no region", vp.probe)),
                }
            }
        }
        if !incident.is_empty() {
            points.push(ClassifiedPoint {
                record: rec,
                role: PointRole::Boundary,
                region: None,
            });
            continue;
        }
        if matches!(rec.classification, Classification::Repelling | Classification::Parabolic) {
            incomplete.push(format!("no ray found landing at {}", rec.location));
        }
        if rec.classification == Classification::Parabolic {
            points.push(ClassifiedPoint {
                record: rec,
                role: PointRole::Boundary,
                region: None,
            });
            continue;
        }
        let r = region_of(&graph, &regions, rec.location);
        match r {
            Some(r) => regions[r].contents.interior_points.push(rec.clone()),
            None => warnings.push(format!("point {} is in no region", rec.location)),
        }
        points.push(ClassifiedPoint {
            record: rec,
            role: PointRole::Interior,
            region: r,
        });
    }

    let verdicts = regions
        .iter()
        .map(|r| {
            let i = r.contents.interior_points.len();
            let v = r.contents.virtual_points.len();
            match (i, v) {
                (1, 0) => Verdict::ExactlyOneInterior,
                (0, 1) => Verdict::ExactlyOneVirtual,
                _ => Verdict::Violation {
                    details: format!("region {} has {i} interior and {v} virtual points", r.id),
                    interior: r.contents.interior_points.iter().map(|p| p.location).collect(),
                    virtual_points: r.contents.virtual_points.iter().map(|p| p.at).collect(),
                },
            }
        })
        .collect();

    let global_counts = if period == 1 && options.global_check {
        match counting_contour(setup, &domains, None, &rays).and_then(|c| global_count_check(setup, &c)) {
            Ok(g) => Some(g),
            Err(e) => {
                warnings.push(format!("global count skipped: {e}"));
                None
            }
        }
    } else {
        None
    };

    Ok(SeparationReport {
        map: spec.to_shorthand(),
        period,
        window,
        rays: summaries,
        pairs: graph
            .pair_rays
            .iter()
            .map(|&[a, b]| [graph.rays[a].address.clone(), graph.rays[b].address.clone()])
            .collect(),
        regions,
        verdicts,
        points,
        global_counts,
        incomplete,
        warnings,
        graph: Some(graph),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{MapSpec, Polynomial};
    use crate::rays::default_schedule;
    use crate::structure::structural_setup;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn synthetic_ray(address: &str, pts: Vec<C64>, landing: C64) -> Ray {
        let n = pts.len();
        Ray {
            address: address.parse().unwrap(),
            samples: pts
                .into_iter()
                .enumerate()
                .map(|(k, z)| ((n - k) as f64, z))
                .collect(),
            status: RayStatus::LandsAt { z: landing },
            radius: 1.0,
            unconverged: Vec::new(),
        }
    }

    /// Rays along the positive and negative real axis landing at 0.
    fn axis_graph() -> RayGraph {
        let pos: Vec<C64> = (0..200).map(|k| c(10.0 * 0.96f64.powi(k), 0.0)).collect();
        let neg: Vec<C64> = pos.iter().map(|z| -z).collect();
        build_ray_graph(
            vec![synthetic_ray("0|", pos, c(0.0, 0.0)), synthetic_ray("1|", neg, c(0.0, 0.0))],
            1,
        )
        .unwrap()
    }

    /// Rays `x ± i·x²` tangent to the positive axis, landing at 0.
    fn cusp_graph() -> RayGraph {
        let xs: Vec<f64> = (0..700).map(|k| 2.0 * 0.985f64.powi(k)).collect();
        let up = xs.iter().map(|&x| c(x, x * x)).collect();
        let down = xs.iter().map(|&x| c(x, -x * x)).collect();
        build_ray_graph(
            vec![synthetic_ray("0|", up, c(0.0, 0.0)), synthetic_ray("1|", down, c(0.0, 0.0))],
            1,
        )
        .unwrap()
    }

    fn exp03() -> MapSpec {
        MapSpec::exp_affine(c(0.3, 0.0), c(0.0, 0.0))
    }

    #[test]
    fn graph_of_single_rays_has_no_pairs() {
        let s = structural_setup(&exp03(), Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1).unwrap();
        let labels: Vec<BranchLabel> = (-2..=2).map(BranchLabel::band).collect();
        let rays = fixed_rays(&s, &labels, 1, 160, &default_t_grid(&s), &default_schedule());
        let g = build_ray_graph(rays, 1).unwrap();
        assert_eq!(g.landing_points.len(), 5);
        for (i, a) in g.landing_points.iter().enumerate() {
            for b in &g.landing_points[i + 1..] {
                assert!((a - b).norm() > 1.0);
            }
        }
        assert!(g.pairs.is_empty());
        let regions = basic_regions(&g, s.bbox, 0.1).unwrap();
        assert_eq!(regions.len(), 1);
    }

    #[test]
    fn empty_graph_is_one_region() {
        let g = build_ray_graph(Vec::new(), 1).unwrap();
        assert!(g.landing_points.is_empty());
        let r = basic_regions(&g, Rect::centered(3.0), 0.1).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].boundary_rays.is_empty());
    }

    #[test]
    fn unlanded_ray_is_rejected() {
        let mut r = synthetic_ray("0|", vec![c(1.0, 0.0), c(0.5, 0.0)], c(0.0, 0.0));
        r.status = RayStatus::Unresolved;
        assert_eq!(build_ray_graph(vec![r], 1), Err(SeparationError::UnlandedRay("0|".into())));
    }

    #[test]
    fn pair_splits_plane() {
        let g = axis_graph();
        assert_eq!(g.pairs.len(), 1);
        let regions = basic_regions(&g, Rect::centered(3.0), 0.05).unwrap();
        assert_eq!(regions.len(), 2);
        let up = region_of(&g, &regions, c(0.3, 1.0)).unwrap();
        let down = region_of(&g, &regions, c(-2.0, -0.1)).unwrap();
        assert_ne!(up, down);
        for r in &regions {
            assert_eq!(r.boundary_rays.len(), 2);
            assert!(g.pair_distance(r.sample_interior_point) > 1e-6);
            assert_eq!(r.contents.landing_points_on_boundary, vec![c(0.0, 0.0)]);
        }
        // Far away the separator closes without splitting a region.
        assert_eq!(region_of(&g, &regions, c(40.0, 30.0)), Some(up));
        assert_eq!(region_of(&g, &regions, c(-40.0, -30.0)), Some(down));
    }

    fn upper_region(g: &RayGraph) -> BasicRegion {
        let regions = basic_regions(g, Rect::centered(3.0), 0.05).unwrap();
        let k = region_of(g, &regions, c(0.0, 1.0)).unwrap();
        regions[k].clone()
    }

    #[test]
    fn locator_agrees_with_graph_queries() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for g in [axis_graph(), cusp_graph()] {
            let loc = Locator::new(&g);
            for _ in 0..2000 {
                let r: f64 = 10f64.powf(rng.gen_range(-4.0..3.0));
                let z = C64::from_polar(r, rng.gen_range(0.0..TAU));
                assert_eq!(loc.pair_distance(z), g.pair_distance(z));
                assert_eq!(loc.signature(z), g.signature(z));
            }
        }
    }

    #[test]
    fn enlarging_at_repelling_point() {
        let f = Polynomial::real(&[0.0, 2.0]);
        let g = axis_graph();
        let v = upper_region(&g);
        let rec = FixedPointRecord::at(&f, c(0.0, 0.0), 1, 1).unwrap();
        let m = modify_boundary_near_fixed_point(&f, &g, &v, &rec, 0.1, &[]).unwrap();
        assert_eq!(m.kind, ModificationKind::Enlarged);
        assert!(m.margin > SIDE_MARGIN);
        assert!(!m.wiggles);
        for z in m.zeta.points() {
            assert!((z.norm() - 0.1).abs() < 1e-12);
            assert!(z.im <= 1e-12);
        }
        for w in m.image.points() {
            assert!((w.norm() - 0.2).abs() < 1e-12);
        }
        assert_eq!(m.region.contents.interior_points.len(), 1);
    }

    #[test]
    fn eps_guard() {
        let f = Polynomial::real(&[0.0, 2.0]);
        let g = axis_graph();
        let v = upper_region(&g);
        let rec = FixedPointRecord::at(&f, c(0.0, 0.0), 1, 1).unwrap();
        let r = modify_boundary_near_fixed_point(&f, &g, &v, &rec, 10.0, &[c(5.0, 0.0)]);
        assert!(matches!(r, Err(SeparationError::EpsTooLarge(_))));
        let not_landing = FixedPointRecord::at(&f, c(0.0, 0.0), 1, 1)
            .map(|mut r| {
                r.location = c(1.0, 1.0);
                r
            })
            .unwrap();
        assert_eq!(
            modify_boundary_near_fixed_point(&f, &g, &v, &not_landing, 0.1, &[]),
            Err(SeparationError::NotOnBoundary)
        );
    }

    #[test]
    fn shrinking_at_parabolic_point() {
        let f = Polynomial::real(&[0.0, 1.0, 1.0]);
        let g = cusp_graph();
        let regions = basic_regions(&g, Rect::centered(3.0), 0.05).unwrap();
        assert_eq!(regions.len(), 2);
        let v = regions[region_of(&g, &regions, c(1.0, 0.0)).unwrap()].clone();
        let rec = FixedPointRecord::at(&f, c(0.0, 0.0), 1, 2).unwrap();
        assert_eq!(rec.classification, Classification::Parabolic);
        let m = modify_boundary_near_fixed_point(&f, &g, &v, &rec, 0.1, &[]).unwrap();
        assert_eq!(m.kind, ModificationKind::Shrunk);
        assert!(m.margin > SIDE_MARGIN, "{}", m.margin);
        // ζ lies on the circle bounding the petal and avoids the point.
        for z in m.zeta.points() {
            assert!(((z - 0.05).norm() - 0.05).abs() < 1e-9);
            assert!(z.re > 0.09);
        }
        // The complementary region holds the attracting direction.
        let w = regions[region_of(&g, &regions, c(-1.0, 0.0)).unwrap()].clone();
        assert!(matches!(
            modify_boundary_near_fixed_point(&f, &g, &w, &rec, 0.1, &[]),
            Err(SeparationError::VirtualPointInRegion(_))
        ));
    }

    fn count_setup() -> StructuralSetup {
        structural_setup(&exp03(), Rect::new(-45.0, 12.0, -24.0, 24.0), 0.1).unwrap()
    }

    #[test]
    fn counting_contour_counts_n_plus_one() {
        let s = count_setup();
        for (lo, hi) in [(0, 0), (-1, 1), (-2, 2)] {
            let labels: Vec<BranchLabel> = (lo..=hi).map(BranchLabel::band).collect();
            let rays = fixed_rays(&s, &labels, 1, 160, &default_t_grid(&s), &default_schedule());
            let contour = counting_contour(&s, &labels, None, &rays).unwrap();
            assert_eq!(contour.expected_count, labels.len() as i64 + 1);
            let g = global_count_check(&s, &contour).unwrap();
            assert_eq!(g.fixed_points_found, contour.expected_count, "{lo}..{hi}");
            assert!(g.n_plus_1_check);
            // Every landing point is enclosed.
            for r in &rays {
                let z = r.landing().unwrap();
                let pts = contour.closed_curve.points();
                assert!(inside_polygon(&pts[..pts.len() - 1], z));
            }
        }
    }

    #[test]
    fn gaps_are_not_full() {
        let s = count_setup();
        let labels = vec![BranchLabel::band(-1), BranchLabel::band(1)];
        assert!(matches!(
            counting_contour(&s, &labels, None, &[]),
            Err(SeparationError::NotFullComplete(_))
        ));
    }

    #[test]
    fn report_attracting_case() {
        let s = structural_setup(&exp03(), Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1).unwrap();
        let rep = separation_report(&s, 1, Rect::centered(3.0), &ReportOptions::default()).unwrap();
        assert_eq!(rep.regions.len(), 1);
        assert_eq!(rep.verdicts, vec![Verdict::ExactlyOneInterior]);
        assert!(rep.incomplete.is_empty(), "{:?}", rep.incomplete);
        let interior: Vec<_> = rep.points.iter().filter(|p| p.role == PointRole::Interior).collect();
        assert_eq!(interior.len(), 1);
        assert_eq!(interior[0].record.classification, Classification::Attracting);
        let g = rep.global_counts.unwrap();
        assert!(g.n_plus_1_check, "{g:?}");
    }

    #[test]
    fn report_parabolic_case() {
        let f = MapSpec::exp_affine(c((-1.0f64).exp(), 0.0), c(0.0, 0.0));
        let s = structural_setup(&f, Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1).unwrap();
        let rep = separation_report(&s, 1, Rect::centered(3.0), &ReportOptions::default()).unwrap();
        assert_eq!(rep.regions.len(), 1);
        assert_eq!(rep.verdicts, vec![Verdict::ExactlyOneVirtual]);
        assert_eq!(rep.interior_count(), 0);
        let vp = &rep.regions[0].contents.virtual_points;
        assert_eq!(vp.len(), 1);
        assert!((vp[0].direction + 1.0).norm() < 1e-6);
        let p = rep.points.iter().find(|p| (p.record.location - 1.0).norm() < 1e-6).unwrap();
        assert_eq!(p.record.multiplicity, 2);
        assert_eq!(p.record.incident_ray_addresses, vec![Address::constant(0)]);
    }

    #[test]
    fn report_is_deterministic() {
        let s = structural_setup(&exp03(), Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1).unwrap();
        let opts = ReportOptions {
            global_check: false,
            ..Default::default()
        };
        let a = serde_json::to_string(&separation_report(&s, 1, Rect::centered(2.0), &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&separation_report(&s, 1, Rect::centered(2.0), &opts).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
