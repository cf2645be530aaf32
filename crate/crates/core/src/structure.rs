//! Structural decomposition of the plane for a map of the family: the disk
//! `D`, the cut `δ`, tracts (components of `f⁻¹(ℂ ∖ D̄)`), fundamental
//! domains (the pieces of the tracts cut along `f⁻¹(δ)`), the logarithmic
//! lift, symbolic addresses, and validation of an expansion radius `R`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::curves::ParamCurve;
use crate::geom::{cserde, point_segment_distance, Rect};
use crate::map::{BranchLabel, CutRay, Edge, HolomorphicMap, MapError, MapSpec};

/// Tract boundary points are refined to this tolerance.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Upper limit for the automatic expansion radius.
pub const EXPANSION_CAP: f64 = 1e6;
/// Number of candidate directions tried for `δ`.
const DELTA_CANDIDATES: usize = 720;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("no cut with clearance above the resolution (best {clearance}); enlarge the bbox")]
    DeltaBlocked { clearance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is not in the tract of the label")]
    OutsideTract,
    #[error("orbit left the tracts: iterate {0} lies in the closed disk")]
    OrbitLeftTracts(usize),
    #[error("orbit overflowed at iterate {0}")]
    Overflow(usize),
    #[error("no valid expansion radius up to {cap}")]
    ExpansionRadiusCap { cap: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Round disk about `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDisk {
    #[serde(with = "cserde")]
    pub center: C64,
    pub radius: f64,
}

impl DomainDisk {
    /// Disk about 0 containing the singular values, 0 and `f(0)`, scaled by
    /// 1.25 and never smaller than the unit disk.
    pub fn for_map(spec: &MapSpec) -> Result<Self, MapError> {
        let f0 = spec.eval(C64::new(0.0, 0.0))?.0;
        let m = spec
            .singular_values()
            .into_iter()
            .chain([f0])
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if !m.is_finite() {
            return Err(MapError::Overflow { iterate: 1 });
        }
        Ok(DomainDisk {
            center: C64::new(0.0, 0.0),
            radius: (1.25 * m).max(1.0),
        })
    }

    pub fn contains_closed(&self, z: C64) -> bool {
        (z - self.center).norm() <= self.radius
    }
}

/// A connected component of `{|f| > radius}` inside the bbox.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tract {
    pub alpha: i64,
    /// Pieces of the level set `|f| = radius`, oriented with the tract on
    /// the left.
    pub boundary: Vec<ParamCurve>,
    #[serde(with = "cserde")]
    pub anchor: C64,
    /// The component reaches the bbox edge (always true for unbounded
    /// tracts; kept so callers can see truncation).
    pub touches_box: bool,
}

/// A piece of a tract on which `f` is univalent onto `ℂ ∖ (D̄ ∪ δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDomain {
    pub label: BranchLabel,
    pub tract: i64,
    /// Preimages of `δ` bounding the domain: lower and upper side.
    pub side_curves: [ParamCurve; 2],
    #[serde(with = "cserde")]
    pub anchor: C64,
    /// Position in the cyclic order at infinity, read off at the right
    /// edge of the bbox.
    pub order_key: i64,
    /// One of the side curves lies outside the bbox.
    pub truncated: bool,
    /// The closure of the domain meets the closed disk.
    pub meets_disk: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralSetup {
    pub spec: MapSpec,
    pub bbox: Rect,
    pub resolution: f64,
    pub disk: DomainDisk,
    pub cut: CutRay,
    /// `δ` from `∂D` to the bbox edge.
    pub delta: ParamCurve,
    /// Distance from `δ` to the tracts inside the bbox.
    pub delta_clearance: f64,
    pub tracts: Vec<Tract>,
    pub domains: Vec<FundamentalDomain>,
    /// Expansion radius validated for the untruncated domains.
    pub expansion_radius: f64,
    pub expansion_validated: bool,
    pub warnings: Vec<String>,
}

impl StructuralSetup {
    pub fn domain(&self, label: &BranchLabel) -> Option<&FundamentalDomain> {
        self.domains.iter().find(|d| &d.label == label)
    }

    /// Labels of domains whose two side curves both meet the bbox.
    pub fn untruncated_labels(&self) -> Vec<BranchLabel> {
        self.domains
            .iter()
            .filter(|d| !d.truncated)
            .map(|d| d.label.clone())
            .collect()
    }

    /// Number of distinct preimage lines of `δ` that enter the bbox.
    pub fn cut_lines_in_box(&self) -> usize {
        let mut keys = BTreeSet::new();
        for d in &self.domains {
            for (k, c) in d.side_curves.iter().enumerate() {
                if c.points().iter().any(|&z| self.bbox.contains(z)) {
                    // The upper side of band j is the lower side of band j+1.
                    let j = d.label.j + k as i64;
                    keys.insert((d.label.alpha, d.label.inner.clone(), j));
                }
            }
        }
        keys.len()
    }

    /// Whether `z` lies in the closure of a tract, `|f(z)| ≥ radius`.
    pub fn in_tract_closure(&self, z: C64) -> bool {
        match self.spec.eval(z) {
            Ok((w, _)) => !(w.norm() < self.disk.radius),
            Err(_) => true,
        }
    }

    /// The fundamental domain containing `z`, for `z` in a tract.
    pub fn label_of(&self, z: C64) -> Option<BranchLabel> {
        label_of(&self.spec, &self.cut, self.disk.radius, z).map(|mut l| {
            if self.tracts.len() > 1 {
                l.alpha = self.tract_of(z).unwrap_or(0);
            }
            l
        })
    }

    fn tract_of(&self, z: C64) -> Option<i64> {
        // Nearest anchor among tracts whose boundary does not separate it;
        // only used for multi-tract composites.
        self.tracts
            .iter()
            .min_by(|a, b| {
                (a.anchor - z)
                    .norm()
                    .total_cmp(&(b.anchor - z).norm())
            })
            .map(|t| t.alpha)
    }
}

/// The label `(j, inner bands)` of a point `z` with `|f(z)| > radius`,
/// computed by comparing each intermediate value with the band-0 branch.
pub fn label_of(spec: &MapSpec, cut: &CutRay, radius: f64, z: C64) -> Option<BranchLabel> {
    let factors = spec.factors();
    let m = factors.len();
    // xs[i] is the value after applying factors[i..] to z; xs[m] = z.
    let mut xs = vec![C64::new(0.0, 0.0); m + 1];
    xs[m] = z;
    for i in (0..m).rev() {
        xs[i] = factors[i].apply(xs[i + 1]).0;
        if !xs[i].is_finite() {
            return None;
        }
    }
    let w = xs[0];
    if !(w.norm() > radius) {
        return None;
    }
    let zero = BranchLabel::band(0);
    let base = MapSpec::new(vec![factors[0]], 1).ok()?.pull(w, &zero, cut, None).ok()?;
    let j = ((xs[1].im - base.im) / TAU).round() as i64;
    let mut inner = Vec::new();
    for i in 1..m {
        let f = factors[i];
        let single = MapSpec::new(vec![f], 1).ok()?;
        let principal = CutRay {
            start: f.b,
            dir: (-f.a).arg(),
        };
        let b0 = single.pull(xs[i], &zero, &principal, None).ok()?;
        inner.push(((xs[i + 1].im - b0.im) / TAU).round() as i64);
    }
    while inner.last() == Some(&0) {
        inner.pop();
    }
    Some(BranchLabel { alpha: 0, j, inner })
}

/// Sampled level function `ln|f| − ln r` on a regular grid.
struct LevelGrid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
    val: Vec<f64>,
}

fn level(spec: &MapSpec, ln_r: f64, z: C64) -> f64 {
    match spec.eval(z) {
        Ok((w, _)) if w.is_finite() => w.norm().ln() - ln_r,
        _ => f64::INFINITY,
    }
}

impl LevelGrid {
    fn new(spec: &MapSpec, bbox: &Rect, res: f64, ln_r: f64) -> Self {
        let nx = (bbox.width() / res).ceil() as usize + 1;
        let ny = (bbox.height() / res).ceil() as usize + 1;
        let hx = bbox.width() / (nx - 1) as f64;
        let hy = bbox.height() / (ny - 1) as f64;
        let mut val = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let z = C64::new(bbox.x0 + i as f64 * hx, bbox.y0 + j as f64 * hy);
                val.push(level(spec, ln_r, z));
            }
        }
        LevelGrid {
            nx,
            ny,
            x0: bbox.x0,
            y0: bbox.y0,
            hx,
            hy,
            val,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.val[i + self.nx * j]
    }

    fn node(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Grid edge: (vertical?, i, j) for the edge leaving node (i, j) to the
/// right or upwards.
type EdgeKey = (bool, usize, usize);

struct TractExtraction {
    tracts: Vec<Tract>,
    /// All refined level-set points, for clearance queries.
    boundary_points: Vec<C64>,
}

fn extract_tracts(spec: &MapSpec, grid: &LevelGrid, ln_r: f64) -> TractExtraction {
    let (nx, ny) = (grid.nx, grid.ny);
    let pos = |i: usize, j: usize| grid.at(i, j) > 0.0;
    let mut uf = UnionFind::new(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if !pos(i, j) {
                continue;
            }
            if i + 1 < nx && pos(i + 1, j) {
                uf.union(i + nx * j, i + 1 + nx * j);
            }
            if j + 1 < ny && pos(i, j + 1) {
                uf.union(i + nx * j, i + nx * (j + 1));
            }
        }
    }
    // Saddle cells whose center is positive connect their diagonal corners.
    let mut centers: HashMap<(usize, usize), f64> = HashMap::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let p = [pos(i, j), pos(i + 1, j), pos(i + 1, j + 1), pos(i, j + 1)];
            let saddle = p[0] == p[2] && p[1] == p[3] && p[0] != p[1];
            if saddle {
                let zc = grid.node(i, j) + C64::new(0.5 * grid.hx, 0.5 * grid.hy);
                let vc = level(spec, ln_r, zc);
                centers.insert((i, j), vc);
                if vc > 0.0 {
                    if p[0] {
                        uf.union(i + nx * j, i + 1 + nx * (j + 1));
                    } else {
                        uf.union(i + 1 + nx * j, i + nx * (j + 1));
                    }
                }
            }
        }
    }

    let mut crossing: HashMap<EdgeKey, C64> = HashMap::new();
    let mut edge_point = |key: EdgeKey| -> C64 {
        *crossing.entry(key).or_insert_with(|| {
            let (vert, i, j) = key;
            let (a, b) = if vert {
                (grid.node(i, j), grid.node(i, j + 1))
            } else {
                (grid.node(i, j), grid.node(i + 1, j))
            };
            let (mut lo, mut hi) = (a, b);
            let lo_pos = level(spec, ln_r, lo) > 0.0;
            while (hi - lo).norm() > BOUNDARY_TOL {
                let mid = (lo + hi) * 0.5;
                if (level(spec, ln_r, mid) > 0.0) == lo_pos {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo + hi) * 0.5
        })
    };

    // Oriented segments, tract on the left; each tagged with a positive node.
    let mut next: BTreeMap<EdgeKey, (EdgeKey, usize)> = BTreeMap::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let p: Vec<bool> = corners.iter().map(|&(a, b)| pos(a, b)).collect();
            // Edge k runs from corner k to corner k+1.
            let edges: [EdgeKey; 4] = [(false, i, j), (true, i + 1, j), (false, i, j + 1), (true, i, j)];
            let crossed: Vec<usize> = (0..4).filter(|&k| p[k] != p[(k + 1) % 4]).collect();
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            match crossed.len() {
                2 => pairs.push((crossed[0], crossed[1])),
                4 => {
                    let center_pos = centers.get(&(i, j)).copied().unwrap_or(0.0) > 0.0;
                    for k in 0..4 {
                        // Corner k sits between edges k-1 and k; cut off the
                        // corners of the minority sign.
                        if p[k] != center_pos {
                            pairs.push(((k + 3) % 4, k));
                        }
                    }
                }
                _ => {}
            }
            for (ea, eb) in pairs {
                let (pa, pb) = (edge_point(edges[ea]), edge_point(edges[eb]));
                let shared = if (ea + 1) % 4 == eb {
                    Some((ea + 1) % 4)
                } else if (eb + 1) % 4 == ea {
                    Some((eb + 1) % 4)
                } else {
                    None
                };
                let rc = shared.unwrap_or(ea);
                let c = grid.node(corners[rc].0, corners[rc].1);
                let mid = (pa + pb) * 0.5;
                let d = pb - pa;
                let cr = d.re * (c - mid).im - d.im * (c - mid).re;
                let want_left = p[rc];
                let (from, to) = if (cr > 0.0) == want_left {
                    (edges[ea], edges[eb])
                } else {
                    (edges[eb], edges[ea])
                };
                let pk = (0..4).find(|&k| p[k]).expect("crossed cell has a positive corner");
                let node = corners[pk].0 + nx * corners[pk].1;
                next.insert(from, (to, node));
            }
        }
    }

    let targets: BTreeSet<EdgeKey> = next.values().map(|v| v.0).collect();
    let mut visited: BTreeSet<EdgeKey> = BTreeSet::new();
    let mut chains: Vec<(Vec<EdgeKey>, usize)> = Vec::new();
    let starts: Vec<EdgeKey> = next
        .keys()
        .filter(|k| !targets.contains(k))
        .copied()
        .chain(next.keys().copied())
        .collect();
    for s in starts {
        if visited.contains(&s) {
            continue;
        }
        let mut chain = vec![s];
        visited.insert(s);
        let node = next[&s].1;
        let mut cur = s;
        while let Some(&(to, _)) = next.get(&cur) {
            chain.push(to);
            if visited.contains(&to) {
                break;
            }
            visited.insert(to);
            cur = to;
        }
        chains.push((chain, node));
    }

    let mut roots: BTreeMap<usize, i64> = BTreeMap::new();
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..ny {
        for i in 0..nx {
            if pos(i, j) {
                let r = uf.find(i + nx * j);
                members.entry(r).or_default().push(i + nx * j);
            }
        }
    }
    for (k, r) in members.keys().enumerate() {
        roots.insert(*r, k as i64);
    }
    let mut tracts: Vec<Tract> = members
        .iter()
        .map(|(r, nodes)| {
            let on_edge = |n: usize| {
                let (i, j) = (n % nx, n / nx);
                i == 0 || j == 0 || i == nx - 1 || j == ny - 1
            };
            let best = nodes
                .iter()
                .copied()
                .filter(|&n| !on_edge(n))
                .max_by(|&a, &b| grid.val[a].total_cmp(&grid.val[b]).then(b.cmp(&a)))
                .unwrap_or(nodes[0]);
            Tract {
                alpha: roots[r],
                boundary: Vec::new(),
                anchor: grid.node(best % nx, best / nx),
                touches_box: nodes.iter().any(|&n| on_edge(n)),
            }
        })
        .collect();

    let mut boundary_points = Vec::new();
    for (chain, node) in chains {
        let mut pts: Vec<C64> = Vec::with_capacity(chain.len());
        for k in &chain {
            let p = crossing[k];
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        boundary_points.extend(pts.iter().copied());
        if pts.len() < 2 {
            continue;
        }
        let mut t = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        t.push(0.0);
        for w in pts.windows(2) {
            acc += (w[1] - w[0]).norm();
            t.push(acc);
        }
        let closed = chain.first() == chain.last() && chain.len() > 2;
        if let Ok(c) = ParamCurve::new(t, pts, closed) {
            let alpha = roots[&uf.find(node)];
            tracts[alpha as usize].boundary.push(c);
        }
    }
    TractExtraction {
        tracts,
        boundary_points,
    }
}

/// Distance along the ray from `start` in direction `d` to the bbox edge.
fn exit_distance(bbox: &Rect, start: C64, d: C64) -> f64 {
    let mut s = f64::INFINITY;
    if d.re > 0.0 {
        s = s.min((bbox.x1 - start.re) / d.re);
    } else if d.re < 0.0 {
        s = s.min((bbox.x0 - start.re) / d.re);
    }
    if d.im > 0.0 {
        s = s.min((bbox.y1 - start.im) / d.im);
    } else if d.im < 0.0 {
        s = s.min((bbox.y0 - start.im) / d.im);
    }
    s.max(0.0)
}

fn choose_cut(
    spec: &MapSpec,
    bbox: &Rect,
    radius: f64,
    ln_r: f64,
    res: f64,
    boundary: &[C64],
) -> (CutRay, f64, f64) {
    let mut cands: Vec<(f64, usize, CutRay, f64)> = (0..DELTA_CANDIDATES)
        .map(|k| {
            let theta = PI + TAU * k as f64 / DELTA_CANDIDATES as f64;
            let cut = CutRay::radial(radius, theta);
            let len = exit_distance(bbox, cut.start, cut.direction());
            let end = cut.point_at(len);
            let clearance = boundary
                .iter()
                .map(|&p| point_segment_distance(p, cut.start, end).0)
                .fold(f64::INFINITY, f64::min);
            (clearance, k, cut, len)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (clearance, _, cut, len) in &cands {
        let n = (len / (0.5 * res)).ceil() as usize + 1;
        let clear = (0..=n).all(|k| level(spec, ln_r, cut.point_at(len * k as f64 / n as f64)) < 0.0);
        if clear {
            return (*cut, *len, clearance.min(1e300));
        }
    }
    (cands[0].2, cands[0].3, 0.0)
}

/// Samples of `δ` from its start out to modulus `far` (geometric spacing).
fn cut_samples(cut: &CutRay, far: f64) -> Vec<C64> {
    let umax = (far - cut.disk_radius()).max(1.0).ln_1p();
    let n = (umax / 0.01).ceil() as usize;
    (0..=n)
        .map(|k| cut.point_at((umax * k as f64 / n as f64).exp_m1()))
        .collect()
}

fn side_curve(spec: &MapSpec, cut: &CutRay, label: &BranchLabel, edge: Edge, samples: &[C64]) -> Option<ParamCurve> {
    let mut t = Vec::with_capacity(samples.len());
    let mut z = Vec::with_capacity(samples.len());
    for (k, &w) in samples.iter().enumerate() {
        if let Ok(p) = spec.pull(w, label, cut, Some(edge)) {
            if z.last().is_none_or(|&q: &C64| (q - p).norm() > 0.0) {
                t.push(k as f64);
                z.push(p);
            }
        }
    }
    ParamCurve::new(t, z, false).ok()
}

/// Builds disk, cut, tracts and fundamental domains inside `bbox`.
pub fn structural_setup(
    spec: &MapSpec,
    bbox: Rect,
    resolution: f64,
) -> Result<StructuralSetup, StructureError> {
    if !bbox.is_valid() {
        return Err(StructureError::InvalidArgument("bbox must be a nonempty finite rectangle".into()));
    }
    if !(resolution > 0.0 && resolution <= 0.05 * bbox.diagonal()) {
        return Err(StructureError::InvalidArgument(format!(
            "resolution must lie in (0, {}]",
            0.05 * bbox.diagonal()
        )));
    }
    let disk = DomainDisk::for_map(spec)?;
    let r = disk.radius;
    if bbox.inset_distance(disk.center) < r + resolution {
        return Err(StructureError::InvalidArgument(format!(
            "bbox must contain the disk of radius {r} with margin"
        )));
    }
    let ln_r = r.ln();
    let grid = LevelGrid::new(spec, &bbox, resolution, ln_r);
    let TractExtraction {
        tracts,
        boundary_points,
    } = extract_tracts(spec, &grid, ln_r);
    let (cut, len, clearance) = choose_cut(spec, &bbox, r, ln_r, resolution, &boundary_points);
    if clearance <= resolution {
        return Err(StructureError::DeltaBlocked { clearance });
    }
    let delta = ParamCurve::new(vec![0.0, len], vec![cut.start, cut.point_at(len)], false)
        .expect("cut leaves the disk");

    // Labels of every tract grid node, with the tract they were seen in.
    let mut seen: BTreeMap<BranchLabel, i64> = BTreeMap::new();
    let mut tract_of_node: HashMap<usize, i64> = HashMap::new();
    {
        let mut uf_alpha: Vec<(C64, i64)> = Vec::new();
        for t in &tracts {
            uf_alpha.push((t.anchor, t.alpha));
        }
        let single = tracts.len() <= 1;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.at(i, j) <= 0.0 {
                    continue;
                }
                let z = grid.node(i, j);
                if let Some(l) = label_of(spec, &cut, r, z) {
                    let alpha = if single {
                        0
                    } else {
                        uf_alpha
                            .iter()
                            .min_by(|a, b| (a.0 - z).norm().total_cmp(&(b.0 - z).norm()))
                            .map(|a| a.1)
                            .unwrap_or(0)
                    };
                    tract_of_node.insert(i + grid.nx * j, alpha);
                    seen.entry(l).or_insert(alpha);
                }
            }
        }
    }

    let outer = spec.outer();
    let far = (outer.a.norm() * (bbox.x1.max(bbox.x0.abs()) + 1.0).min(690.0).exp() + outer.b.norm() + r)
        .max(2.0 * bbox.diagonal() + r);
    let samples = cut_samples(&cut, far);
    let opposite = -cut.direction();
    let anchor_w = opposite * (2.0 * r);
    let order_w = opposite * far;

    // Sample of D̄ ∩ closure(tracts) used to flag domains meeting the disk.
    let mut disk_labels: BTreeSet<BranchLabel> = BTreeSet::new();
    for ri in 0..=64 {
        for ti in 0..512 {
            let z = C64::from_polar(r * ri as f64 / 64.0, TAU * ti as f64 / 512.0);
            if let Some(l) = label_of(spec, &cut, r * (1.0 - 1e-9), z) {
                disk_labels.insert(l);
            }
        }
    }

    let mut domains = Vec::new();
    let mut warnings = Vec::new();
    for (label, alpha) in &seen {
        let mut label = label.clone();
        label.alpha = *alpha;
        let pull_label = BranchLabel {
            alpha: 0,
            ..label.clone()
        };
        let lower = side_curve(spec, &cut, &pull_label, Edge::Lower, &samples);
        let upper = side_curve(spec, &cut, &pull_label, Edge::Upper, &samples);
        let (Some(lower), Some(upper)) = (lower, upper) else {
            warnings.push(format!("domain {label}: side curves could not be traced"));
            continue;
        };
        let visible = |c: &ParamCurve| c.points().iter().any(|&z| bbox.contains(z));
        let truncated = !(visible(&lower) && visible(&upper));
        let anchor = spec.pull(anchor_w, &pull_label, &cut, None)?;
        let intercept = spec.pull(order_w, &pull_label, &cut, None)?.im;
        let meets_disk = disk_labels.contains(&pull_label)
            || lower.points().iter().chain(upper.points()).any(|&z| disk.contains_closed(z));
        domains.push((
            (label.alpha, intercept),
            FundamentalDomain {
                label,
                tract: *alpha,
                side_curves: [lower, upper],
                anchor,
                order_key: 0,
                truncated,
                meets_disk,
            },
        ));
    }
    domains.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
    let domains: Vec<FundamentalDomain> = domains
        .into_iter()
        .enumerate()
        .map(|(k, (_, mut d))| {
            d.order_key = k as i64;
            d
        })
        .collect();
    for t in &tracts {
        if t.touches_box {
            warnings.push(format!("tract {} is truncated by the bbox", t.alpha));
        }
    }

    let mut setup = StructuralSetup {
        spec: spec.clone(),
        bbox,
        resolution,
        disk,
        cut,
        delta,
        delta_clearance: clearance,
        tracts,
        domains,
        expansion_radius: 2.0 * r,
        expansion_validated: false,
        warnings,
    };
    let labels = setup.untruncated_labels();
    match auto_expansion_radius(&setup, &labels) {
        Ok(big_r) => {
            setup.expansion_radius = big_r;
            setup.expansion_validated = true;
        }
        Err(_) => {
            setup.expansion_radius = EXPANSION_CAP;
            setup
                .warnings
                .push(format!("expansion radius not validated up to {EXPANSION_CAP}"));
        }
    }
    Ok(setup)
}

/// The 2πi-periodic logarithmic lift `f̃` with `exp ∘ f̃ = f ∘ exp`, with
/// imaginary part normalized into log-band `j` of the label (the strip of
/// width 2π ending at the cut direction).
pub fn lift_evaluate(
    setup: &StructuralSetup,
    w_log: C64,
    label: &BranchLabel,
) -> Result<C64, StructureError> {
    let spec = &setup.spec;
    let u = w_log.exp();
    if !u.is_finite() {
        return Err(MapError::Overflow { iterate: 0 }.into());
    }
    let factors = spec.factors();
    let mut v = u;
    for f in factors[1..].iter().rev() {
        v = f.apply(v).0;
    }
    if !v.is_finite() {
        return Err(MapError::Overflow { iterate: 1 }.into());
    }
    let g = factors[0];
    // log(a e^v + b) = log a + v + log(1 + b e^{-v} / a)
    let corr = g.b * (-v).exp() / g.a;
    let mut l = if corr.is_finite() {
        g.a.ln() + v + (C64::new(1.0, 0.0) + corr).ln()
    } else {
        (g.a * v.exp() + g.b).ln()
    };
    if !l.is_finite() || !(l.re > setup.disk.radius.ln()) {
        return Err(StructureError::OutsideTract);
    }
    if setup.tracts.len() <= 1 && label.alpha != 0 {
        return Err(StructureError::OutsideTract);
    }
    let hi = setup.cut.dir + TAU * label.j as f64;
    let k = ((hi - l.im) / TAU).floor();
    l.im += TAU * k;
    if l.im <= hi - TAU {
        l.im += TAU;
    }
    Ok(l)
}

/// Labels of `z, f(z), …, f^{n-1}(z)`.
///
/// `OrbitLeftTracts(k)` names the first iterate `f^k(z)` that lies in the
/// closed disk, i.e. `f^{k-1}(z)` is not in a tract.
pub fn address_of_orbit(
    setup: &StructuralSetup,
    z: C64,
    n: usize,
) -> Result<Vec<BranchLabel>, StructureError> {
    let spec = &setup.spec;
    let mut out = Vec::with_capacity(n);
    let mut cur = z;
    for k in 0..n {
        let w = match spec.eval(cur) {
            Ok((w, _)) if w.is_finite() && w.norm() <= crate::map::OVERFLOW_GUARD => w,
            _ => return Err(StructureError::Overflow(k + 1)),
        };
        if w.norm() <= setup.disk.radius {
            return Err(StructureError::OrbitLeftTracts(k + 1));
        }
        let label = setup
            .label_of(cur)
            .ok_or(StructureError::OrbitLeftTracts(k + 1))?;
        out.push(label);
        cur = w;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub valid: bool,
    /// `R − max |preimage|`.
    pub margin: f64,
    /// The sample of `C_R` whose preimage is farthest out, with that
    /// preimage and its label.
    #[serde(with = "cserde::opt")]
    pub worst_sample: Option<C64>,
    #[serde(with = "cserde::opt")]
    pub worst_preimage: Option<C64>,
    pub worst_label: Option<BranchLabel>,
}

/// Parameter `s ≥ 0` where the cut meets the circle `|z| = big_r`.
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

/// Checks that every preimage of `C_R` in the given domains has modulus
/// below `R`.
pub fn validate_expansion_radius(
    setup: &StructuralSetup,
    domains: &[BranchLabel],
    big_r: f64,
) -> ExpansionReport {
    let mut report = ExpansionReport {
        valid: true,
        margin: big_r,
        worst_sample: None,
        worst_preimage: None,
        worst_label: None,
    };
    if domains.is_empty() {
        return report;
    }
    if !(big_r > setup.disk.radius) {
        report.valid = false;
        report.margin = big_r - setup.disk.radius;
        return report;
    }
    let spec = &setup.spec;
    let cut = &setup.cut;
    let Some(s) = cut_circle_crossing(cut, big_r) else {
        report.valid = false;
        report.margin = f64::NEG_INFINITY;
        return report;
    };
    let wc = cut.point_at(s);
    let theta_c = wc.arg();
    const N: usize = 4096;
    let mut worst = (f64::NEG_INFINITY, C64::new(0.0, 0.0), C64::new(0.0, 0.0), None::<BranchLabel>);
    let consider = |w: C64, z: C64, l: &BranchLabel, worst: &mut (f64, C64, C64, Option<BranchLabel>)| {
        let m = z.norm();
        if m > worst.0 || !m.is_finite() {
            *worst = (if m.is_finite() { m } else { f64::INFINITY }, w, z, Some(l.clone()));
        }
    };
    for l in domains {
        let pl = BranchLabel {
            alpha: 0,
            ..l.clone()
        };
        for edge in [Edge::Lower, Edge::Upper] {
            if let Ok(z) = spec.pull(wc, &pl, cut, Some(edge)) {
                consider(wc, z, l, &mut worst);
            }
        }
        let at = |k: f64| -> Option<(C64, C64)> {
            let w = C64::from_polar(big_r, theta_c + TAU * k / N as f64);
            spec.pull(w, &pl, cut, None).ok().map(|z| (w, z))
        };
        let mut best_k = None;
        let mut best_m = f64::NEG_INFINITY;
        for k in 0..N {
            if let Some((w, z)) = at(k as f64 + 0.5) {
                consider(w, z, l, &mut worst);
                if z.norm() > best_m {
                    best_m = z.norm();
                    best_k = Some(k);
                }
            }
        }
        // Golden-section refinement around the sampled maximum.
        if let Some(k) = best_k {
            let (mut a, mut b) = ((k as f64 - 0.5).max(1e-9), (k as f64 + 1.5).min(N as f64 - 1e-9));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let f = |x: f64| at(x).map_or(f64::NEG_INFINITY, |(_, z)| z.norm());
            let mut c = b - g * (b - a);
            let mut d = a + g * (b - a);
            let (mut fc, mut fd) = (f(c), f(d));
            let tol = 1e-6 / big_r * N as f64 / TAU;
            while b - a > tol {
                if fc > fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = f(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = f(d);
                }
            }
            if let Some((w, z)) = at(0.5 * (a + b)) {
                consider(w, z, l, &mut worst);
            }
        }
    }
    report.margin = big_r - worst.0;
    report.valid = worst.0 < big_r;
    report.worst_sample = Some(worst.1);
    report.worst_preimage = Some(worst.2);
    report.worst_label = worst.3;
    report
}

/// Smallest `R = 2^k · 2·radius` passing `validate_expansion_radius`.
pub fn auto_expansion_radius(
    setup: &StructuralSetup,
    domains: &[BranchLabel],
) -> Result<f64, StructureError> {
    let mut big_r = 2.0 * setup.disk.radius;
    while big_r <= EXPANSION_CAP {
        if validate_expansion_radius(setup, domains, big_r).valid {
            return Ok(big_r);
        }
        big_r *= 2.0;
    }
    Err(StructureError::ExpansionRadiusCap { cap: EXPANSION_CAP })
}
