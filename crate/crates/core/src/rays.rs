//! Dynamic rays traced by nested inverse-branch pullback.
//!
//! For an address `s = s0 s1 s2 …` and potential `t > 0` the ray point is
//!
//! `g_s(t) = lim_k ψ_{s0} ∘ … ∘ ψ_{s(k-1)}(R + F^k(t) + i·c(s_k))`,
//!
//! where `ψ_s` is the inverse branch into the fundamental domain `s`,
//! `c(s)` the imaginary part of the center line of that domain, `R` a
//! validated expansion radius, and `F(t) = e^t − 1` the model escape. With
//! this choice `f(g_s(t)) = g_{σs}(F(t))` holds exactly in the limit.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::curves::ParamCurve;
use crate::fixed_points::{classify_multiplier, newton_polish, polish_multiple_root, Classification};
use crate::map::{BranchLabel, HolomorphicMap, MapError};
use crate::structure::{auto_expansion_radius, validate_expansion_radius, StructuralSetup};

/// Successive approximations closer than this count as converged.
pub const RAY_TOL: f64 = 1e-10;
/// Pullback arguments closer than this to a singular value or to `δ`
/// break the ray.
pub const BROKEN_TOL: f64 = 1e-8;
/// Landing points of periodic rays must satisfy `|f^p(z0) − z0|` below this.
pub const LANDING_RESIDUAL: f64 = 1e-8;
/// Model potentials above this stop the pullback (the next one overflows).
const POTENTIAL_CAP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RayError {
    #[error("ray {address} is broken at t = {t} (pullback depth {depth})")]
    Broken { address: String, t: f64, depth: usize },
    #[error("no valid expansion radius for the symbols of {0}")]
    ExpansionNotValidated(String),
    #[error("landing did not converge within depth {budget}")]
    NoConvergence { budget: usize },
    #[error("rays have different periods")]
    MixedPeriods,
    #[error("ray {0} has not landed")]
    NotLanded(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("address parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Eventually periodic symbol sequence `pre · per · per · …`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    pub preperiod: Vec<BranchLabel>,
    pub period: Vec<BranchLabel>,
}

impl Address {
    pub fn periodic(period: Vec<BranchLabel>) -> Self {
        assert!(!period.is_empty(), "period must be nonempty");
        Address {
            preperiod: Vec::new(),
            period,
        }
    }

    /// Constant address of band `j`.
    pub fn constant(j: i64) -> Self {
        Address::periodic(vec![BranchLabel::band(j)])
    }

    pub fn is_periodic(&self) -> bool {
        self.preperiod.is_empty()
    }

    pub fn period_len(&self) -> usize {
        self.period.len()
    }

    /// Symbol at position `k`.
    pub fn symbol(&self, k: usize) -> &BranchLabel {
        if k < self.preperiod.len() {
            &self.preperiod[k]
        } else {
            &self.period[(k - self.preperiod.len()) % self.period.len()]
        }
    }

    /// The shifted address `σs`.
    pub fn shift(&self) -> Address {
        if let Some((_, rest)) = self.preperiod.split_first() {
            Address {
                preperiod: rest.to_vec(),
                period: self.period.clone(),
            }
        } else {
            let mut p = self.period.clone();
            p.rotate_left(1);
            Address::periodic(p)
        }
    }

    /// Distinct symbols used.
    pub fn symbols(&self) -> Vec<BranchLabel> {
        let mut v: Vec<BranchLabel> = self.preperiod.iter().chain(&self.period).cloned().collect();
        v.sort();
        v.dedup();
        v
    }
}

impl fmt::Display for Address {
    /// `pre|per`, or `per|` when there is no preperiod.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[BranchLabel]| v.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
        if self.preperiod.is_empty() {
            write!(f, "{}|", join(&self.period))
        } else {
            write!(f, "{}|{}", join(&self.preperiod), join(&self.period))
        }
    }
}

impl FromStr for Address {
    type Err = RayError;

    /// `pre|per` with comma-separated symbols `j` or `alpha:j`. An empty
    /// period part makes the first part the period, so `"0|"` is the
    /// constant address 0 and `"0,1|"` has period `0 1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_list = |part: &str| -> Result<Vec<BranchLabel>, RayError> {
            let part = part.trim();
            if part.is_empty() {
                return Ok(Vec::new());
            }
            part.split(',')
                .map(|p| p.parse::<BranchLabel>().map_err(|e| RayError::Parse(e.to_string())))
                .collect()
        };
        let (pre, per) = match s.split_once('|') {
            Some((a, b)) => (parse_list(a)?, parse_list(b)?),
            None => (Vec::new(), parse_list(s)?),
        };
        let (pre, per) = if per.is_empty() { (Vec::new(), pre) } else { (pre, per) };
        if per.is_empty() {
            return Err(RayError::Parse(format!("address {s:?} has no periodic part")));
        }
        Ok(Address {
            preperiod: pre,
            period: per,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RayStatus {
    LandsAt {
        #[serde(with = "crate::geom::cserde")]
        z: C64,
    },
    Broken {
        t: f64,
        depth: usize,
    },
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub address: Address,
    /// `(t, g(t))` with `t` decreasing.
    #[serde(with = "sample_serde")]
    pub samples: Vec<(f64, C64)>,
    pub status: RayStatus,
    /// Expansion radius used for the anchors.
    pub radius: f64,
    /// Potentials whose pullback did not settle within the depth.
    pub unconverged: Vec<f64>,
}

mod sample_serde {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[(f64, C64)], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|(t, z)| [*t, z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, C64)>, D::Error> {
        Ok(Vec::<[f64; 3]>::deserialize(d)?
            .into_iter()
            .map(|[t, re, im]| (t, C64::new(re, im)))
            .collect())
    }
}

impl Ray {
    pub fn landing(&self) -> Option<C64> {
        match self.status {
            RayStatus::LandsAt { z } => Some(z),
            _ => None,
        }
    }

    pub fn points(&self) -> Vec<C64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// The samples as a curve from the landing point (if any) outwards.
    pub fn to_curve(&self) -> Option<ParamCurve> {
        let mut pts: Vec<(f64, C64)> = Vec::new();
        if let Some(z) = self.landing() {
            pts.push((0.0, z));
        }
        for &(t, z) in self.samples.iter().rev() {
            if pts.last().is_none_or(|p| t > p.0 && z != p.1) {
                pts.push((t, z));
            }
        }
        ParamCurve::from_samples(&pts, false).ok()
    }

    /// CSV with header `t,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im\n");
        for (t, z) in &self.samples {
            out.push_str(&format!("{t},{},{}\n", z.re, z.im));
        }
        out
    }
}

/// Two rays of equal period landing together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayPair {
    pub rays: [Ray; 2],
    #[serde(with = "crate::geom::cserde")]
    pub common_landing: C64,
}

/// Model escape `F(t) = e^t − 1`.
pub fn model_escape(t: f64) -> f64 {
    t.exp_m1()
}

/// Default potentials: 96 geometric samples from `max(x1 + 5, 6)` down to
/// `1e-3`.
pub fn default_t_grid(setup: &StructuralSetup) -> Vec<f64> {
    let t_max = (setup.bbox.x1 + 5.0).max(6.0);
    let t_min: f64 = 1e-3;
    let n = 96;
    (0..n)
        .map(|k| (t_max.ln() + (t_min.ln() - t_max.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Landing depths 10, 20, 40, …, 640.
pub fn default_schedule() -> Vec<usize> {
    (0..7).map(|k| 10usize << k).collect()
}

/// Point on the center line of domain `label` with real part about `x`.
fn anchor_point(setup: &StructuralSetup, label: &BranchLabel, x: f64) -> Result<C64, MapError> {
    let spec = &setup.spec;
    let outer = spec.outer();
    if spec.is_single() {
        let phi = outer.cut_phase(setup.cut.dir);
        Ok(C64::new(x, phi - std::f64::consts::PI + std::f64::consts::TAU * label.j as f64))
    } else {
        let w = -setup.cut.direction() * (outer.a.norm() * x.min(POTENTIAL_CAP).exp());
        spec.pull(w, &strip_alpha(label), &setup.cut, None)
    }
}

fn strip_alpha(l: &BranchLabel) -> BranchLabel {
    BranchLabel {
        alpha: 0,
        ..l.clone()
    }
}

enum Pull {
    Point(C64),
    Broken,
}

/// `ψ_{s0} ∘ … ∘ ψ_{s(k-1)}(z)`.
///
/// Once the chain has settled on the periodic cycle (a point repeats after
/// one period to within rounding), the remaining pulls are read off the
/// cycle instead of being applied: further pulls only add rounding noise,
/// and a landing point on a branch cut would otherwise flip branches.
fn pull_chain(setup: &StructuralSetup, address: &Address, k: usize, anchor: C64) -> Result<Pull, MapError> {
    let sing = setup.spec.singular_values();
    let radius = setup.disk.radius;
    let pre = address.preperiod.len();
    let p = address.period_len();
    let mut trail = vec![C64::new(0.0, 0.0); k + 1];
    trail[k] = anchor;
    let mut i = k;
    while i > 0 {
        let z = trail[i];
        if sing.iter().any(|v| (z - v).norm() < BROKEN_TOL)
            || (z.norm() > radius && setup.cut.distance(z) < BROKEN_TOL)
        {
            return Ok(Pull::Broken);
        }
        i -= 1;
        trail[i] = setup.spec.pull(z, &strip_alpha(address.symbol(i)), &setup.cut, None)?;
        if i > pre && i + p < k && (trail[i] - trail[i + p]).norm() < 1e-14 * (1.0 + trail[i].norm()) {
            let phase = (p - (i - pre) % p) % p;
            trail[pre] = trail[i + phase];
            i = pre;
        }
    }
    Ok(Pull::Point(trail[0]))
}

enum SampleOutcome {
    Converged(C64),
    Unconverged(C64),
    Broken(usize),
}

fn trace_point(
    setup: &StructuralSetup,
    address: &Address,
    big_r: f64,
    t: f64,
    depth: usize,
) -> Result<SampleOutcome, MapError> {
    let mut prev: Option<C64> = None;
    let mut pot = t;
    for k in 1..=depth {
        pot = model_escape(pot);
        let anchor = anchor_point(setup, address.symbol(k), big_r + pot)?;
        let z = match pull_chain(setup, address, k, anchor)? {
            Pull::Point(z) => z,
            Pull::Broken => return Ok(SampleOutcome::Broken(k)),
        };
        if let Some(p) = prev {
            if (z - p).norm() < RAY_TOL {
                return Ok(SampleOutcome::Converged(z));
            }
        }
        if pot > POTENTIAL_CAP {
            return Ok(SampleOutcome::Converged(z));
        }
        prev = Some(z);
    }
    Ok(SampleOutcome::Unconverged(prev.expect("depth is at least 1")))
}

/// Expansion radius for the symbols of `address`: the setup's radius when
/// it validates, else the automatic choice.
pub fn radius_for(setup: &StructuralSetup, address: &Address) -> Result<f64, RayError> {
    let symbols = address.symbols();
    if validate_expansion_radius(setup, &symbols, setup.expansion_radius).valid {
        return Ok(setup.expansion_radius);
    }
    auto_expansion_radius(setup, &symbols).map_err(|_| RayError::ExpansionNotValidated(address.to_string()))
}

/// Traces the ray of `address` at the potentials `t_grid`, keeping the
/// samples up to the first broken one.
pub fn trace_ray_unchecked(
    setup: &StructuralSetup,
    address: &Address,
    depth: usize,
    t_grid: &[f64],
) -> Result<Ray, RayError> {
    if depth < 10 {
        return Err(RayError::InvalidArgument("depth must be at least 10".into()));
    }
    if t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RayError::InvalidArgument("t_grid must be positive and decreasing".into()));
    }
    let big_r = radius_for(setup, address)?;
    let mut ray = Ray {
        address: address.clone(),
        samples: Vec::with_capacity(t_grid.len()),
        status: RayStatus::Unresolved,
        radius: big_r,
        unconverged: Vec::new(),
    };
    for &t in t_grid {
        match trace_point(setup, address, big_r, t, depth)? {
            SampleOutcome::Converged(z) => ray.samples.push((t, z)),
            SampleOutcome::Unconverged(z) => {
                ray.samples.push((t, z));
                ray.unconverged.push(t);
            }
            SampleOutcome::Broken(k) => {
                ray.status = RayStatus::Broken { t, depth: k };
                break;
            }
        }
    }
    Ok(ray)
}

/// Traces a ray; a broken ray is reported as an error.
pub fn trace_ray(
    setup: &StructuralSetup,
    address: &Address,
    depth: usize,
    t_grid: &[f64],
) -> Result<Ray, RayError> {
    let ray = trace_ray_unchecked(setup, address, depth, t_grid)?;
    if let RayStatus::Broken { t, depth } = ray.status {
        return Err(RayError::Broken {
            address: address.to_string(),
            t,
            depth,
        });
    }
    Ok(ray)
}

/// The ray point at a single potential.
pub fn ray_point(setup: &StructuralSetup, address: &Address, t: f64, depth: usize) -> Result<Option<C64>, RayError> {
    let big_r = radius_for(setup, address)?;
    Ok(match trace_point(setup, address, big_r, t, depth)? {
        SampleOutcome::Converged(z) | SampleOutcome::Unconverged(z) => Some(z),
        SampleOutcome::Broken(_) => None,
    })
}

/// Deepens the pullback at the smallest potential along `schedule` and
/// decides landing.
pub fn landing_point(setup: &StructuralSetup, ray: &Ray, schedule: &[usize]) -> Result<Ray, RayError> {
    let mut out = ray.clone();
    if matches!(ray.status, RayStatus::Broken { .. }) {
        return Err(RayError::Broken {
            address: ray.address.to_string(),
            t: 0.0,
            depth: 0,
        });
    }
    let t_min = ray.samples.last().map_or(1e-3, |s| s.0);
    let spec = &setup.spec;
    let p = ray.address.period_len() as u32;
    let mut ends: Vec<C64> = Vec::new();
    let mut landed: Option<C64> = None;
    for &d in schedule {
        let anchor = anchor_point(setup, ray.address.symbol(d), ray.radius + t_min)?;
        let z = match pull_chain(setup, &ray.address, d, anchor)? {
            Pull::Point(z) => z,
            Pull::Broken => {
                out.status = RayStatus::Broken { t: 0.0, depth: d };
                return Ok(out);
            }
        };
        if let Some(&prev) = ends.last() {
            if (z - prev).norm() < RAY_TOL && z.is_finite() {
                landed = Some(z);
                ends.push(z);
                break;
            }
        }
        ends.push(z);
    }
    let budget = schedule.last().copied().unwrap_or(0);
    if let Some(z) = landed {
        let z0 = if ray.address.is_periodic() {
            let z0 = newton_polish(spec, z, p).unwrap_or(z);
            let r = spec.iterate(z0, p).map(|v| (v.0 - z0).norm()).unwrap_or(f64::INFINITY);
            if r >= LANDING_RESIDUAL {
                return Err(RayError::NoConvergence { budget });
            }
            z0
        } else {
            z
        };
        out.status = RayStatus::LandsAt { z: z0 };
        return Ok(out);
    }
    if ray.address.is_periodic() {
        if let Some(z0) = parabolic_landing(spec, &ends, p) {
            out.status = RayStatus::LandsAt { z: z0 };
            return Ok(out);
        }
    }
    Err(RayError::NoConvergence { budget })
}

/// Slow algebraic convergence toward a parabolic point: accept the Newton
/// limit of the deepest endpoint if it is a parabolic periodic point and
/// the endpoints approach it geometrically over the last four depths.
fn parabolic_landing<M: HolomorphicMap + ?Sized>(map: &M, ends: &[C64], p: u32) -> Option<C64> {
    let last = *ends.last()?;
    let mut z = newton_polish(map, last, p)?;
    let (_, mult) = map.iterate(z, p).ok()?;
    let (class, _) = classify_multiplier(mult);
    if class != Classification::Parabolic {
        return None;
    }
    if let Ok(polished) = polish_multiple_root(map, z, p) {
        z = polished;
    }
    let residual = (map.iterate(z, p).ok()?.0 - z).norm();
    if residual >= LANDING_RESIDUAL || ends.len() < 4 {
        return None;
    }
    let dists: Vec<f64> = ends[ends.len() - 4..].iter().map(|e| (e - z).norm()).collect();
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let ratio = dists[3] / dists[2];
    (decreasing && ratio <= 0.75).then_some(z)
}

/// Traces and lands the rays of all period-`p` words over `domains`.
/// Broken or unresolved rays are returned with that status.
pub fn fixed_rays(
    setup: &StructuralSetup,
    domains: &[BranchLabel],
    period: usize,
    depth: usize,
    t_grid: &[f64],
    schedule: &[usize],
) -> Vec<Ray> {
    let mut words: Vec<Vec<BranchLabel>> = vec![Vec::new()];
    for _ in 0..period {
        words = words
            .into_iter()
            .flat_map(|w| {
                domains.iter().map(move |d| {
                    let mut v = w.clone();
                    v.push(d.clone());
                    v
                })
            })
            .collect();
    }
    words
        .into_iter()
        .filter(|w| !w.is_empty())
        .map(|w| {
            let address = Address::periodic(w);
            match trace_ray_unchecked(setup, &address, depth, t_grid) {
                Ok(ray) => {
                    if matches!(ray.status, RayStatus::Broken { .. }) {
                        return ray;
                    }
                    landing_point(setup, &ray, schedule).unwrap_or(ray)
                }
                Err(_) => Ray {
                    address,
                    samples: Vec::new(),
                    status: RayStatus::Unresolved,
                    radius: f64::NAN,
                    unconverged: Vec::new(),
                },
            }
        })
        .collect()
}

/// Groups landed rays whose landing points are within `tol` (transitively)
/// and returns the index groups in order of first member.
pub fn landing_groups(rays: &[Ray], tol: f64) -> Result<Vec<Vec<usize>>, RayError> {
    let pts: Vec<C64> = rays
        .iter()
        .map(|r| r.landing().ok_or_else(|| RayError::NotLanded(r.address.to_string())))
        .collect::<Result<_, _>>()?;
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for i in 0..n {
        for j in i + 1..n {
            if (pts[i] - pts[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root: std::collections::BTreeMap<usize, usize> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = *index_of_root.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    Ok(groups)
}

/// One pair per unordered pair of equal-period rays landing together.
pub fn detect_ray_pairs(rays: &[Ray], tol: f64) -> Result<Vec<RayPair>, RayError> {
    if let Some(first) = rays.first() {
        if rays.iter().any(|r| r.address.period_len() != first.address.period_len()) {
            return Err(RayError::MixedPeriods);
        }
    }
    let groups = landing_groups(rays, tol)?;
    let mut pairs = Vec::new();
    for g in groups {
        for a in 0..g.len() {
            for b in a + 1..g.len() {
                let (ra, rb) = (&rays[g[a]], &rays[g[b]]);
                let za = ra.landing().expect("grouped rays landed");
                let zb = rb.landing().expect("grouped rays landed");
                pairs.push(RayPair {
                    rays: [ra.clone(), rb.clone()],
                    common_landing: (za + zb) * 0.5,
                });
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::map::MapSpec;
    use crate::structure::structural_setup;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn setup03() -> StructuralSetup {
        let f = MapSpec::exp_affine(c(0.3, 0.0), c(0.0, 0.0));
        structural_setup(&f, Rect::new(-4.0, 12.0, -12.0, 12.0), 0.05).unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn address_text() {
        let a: Address = "0|".parse().unwrap();
        assert_eq!(a, Address::constant(0));
        let b: Address = "0,-1|".parse().unwrap();
        assert_eq!(b.period, vec![BranchLabel::band(0), BranchLabel::band(-1)]);
        let c2: Address = "1|0".parse().unwrap();
        assert_eq!(c2.preperiod, vec![BranchLabel::band(1)]);
        for s in ["0|", "0,-1|", "1|0", "2:1,0|"] {
            let a: Address = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        assert_eq!(b.shift().period, vec![BranchLabel::band(-1), BranchLabel::band(0)]);
        assert_eq!(c2.shift(), Address::constant(0));
        assert!("|".parse::<Address>().is_err());
    }

    #[test]
    fn real_ray_lands_at_repelling_point() {
        let s = setup03();
        let grid = default_t_grid(&s);
        let ray = trace_ray(&s, &Address::constant(0), 320, &grid).unwrap();
        for (_, z) in &ray.samples {
            assert!(z.im.abs() < 1e-8);
        }
        let landed = landing_point(&s, &ray, &default_schedule()).unwrap();
        let oracle = bisect(|x| 0.3 * x.exp() - x, 1.0, 2.0);
        assert!((landed.landing().unwrap() - oracle).norm() < 1e-9);
    }

    #[test]
    fn band_one_ray() {
        let s = setup03();
        let grid = default_t_grid(&s);
        let ray = trace_ray(&s, &Address::constant(1), 320, &grid).unwrap();
        for (t, z) in &ray.samples {
            if *t > 1.0 {
                assert!(z.im > PI && z.im < 3.0 * PI, "{t} {z}");
            }
        }
        let landed = landing_point(&s, &ray, &default_schedule()).unwrap();
        // Oracle: iterate z ← log(z/0.3) + 2πi.
        let mut z = c(3.0, 7.0);
        for _ in 0..200 {
            z = (z / 0.3).ln() + c(0.0, 2.0 * PI);
        }
        assert!((landed.landing().unwrap() - z).norm() < 1e-9);
    }

    #[test]
    fn shift_consistency() {
        let s = setup03();
        let a: Address = "1,0|".parse().unwrap();
        for t in [0.05, 0.5, 2.0] {
            let z = ray_point(&s, &a, t, 320).unwrap().unwrap();
            let fz = s.spec.eval(z).unwrap().0;
            let w = ray_point(&s, &a.shift(), model_escape(t), 320).unwrap().unwrap();
            assert!((fz - w).norm() < 1e-6 * (1.0 + w.norm()), "{t}: {fz} vs {w}");
        }
    }

    #[test]
    fn asymptotic_containment_and_monotone_escape() {
        let s = setup03();
        let grid = default_t_grid(&s);
        for j in -1..=1 {
            let ray = trace_ray(&s, &Address::constant(j), 320, &grid).unwrap();
            let half = ray.samples.len() / 2;
            for (_, z) in &ray.samples[..half] {
                assert_eq!(s.label_of(*z), Some(BranchLabel::band(j)));
            }
            let z = ray.samples[0].1;
            let mut m = z.norm();
            for k in 1..=5 {
                // Past the float range the orbit has escaped for good.
                let Ok((w, _)) = s.spec.iterate(z, k) else { break };
                assert!(w.norm() > m);
                m = w.norm();
            }
        }
    }

    #[test]
    fn fixed_rays_and_pairs() {
        let s = setup03();
        let grid = default_t_grid(&s);
        let labels: Vec<BranchLabel> = (-1..=1).map(BranchLabel::band).collect();
        let rays = fixed_rays(&s, &labels, 1, 320, &grid, &default_schedule());
        assert_eq!(rays.len(), 3);
        for r in &rays {
            let z = r.landing().unwrap();
            let m = s.spec.eval(z).unwrap().1;
            assert!(m.norm() > 1.0);
        }
        assert!(detect_ray_pairs(&rays, 1e-6).unwrap().is_empty());
        let mut twin = rays[0].clone();
        twin.address = Address::constant(5);
        let pairs = detect_ray_pairs(&[rays[0].clone(), twin], 1e-6).unwrap();
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn parabolic_landing_through_repelling_direction() {
        let f = MapSpec::exp_affine(c((-1.0f64).exp(), 0.0), c(0.0, 0.0));
        let s = structural_setup(&f, Rect::new(-4.0, 12.0, -12.0, 12.0), 0.05).unwrap();
        let ray = trace_ray(&s, &Address::constant(0), 320, &default_t_grid(&s)).unwrap();
        let landed = landing_point(&s, &ray, &default_schedule()).unwrap();
        let z0 = landed.landing().unwrap();
        assert!((z0 - 1.0).norm() < 1e-9, "{z0}");
        let (_, last) = *ray.samples.last().unwrap();
        assert!(last.re > 1.0 && last.im.abs() < 1e-8);
        assert!((last - z0).arg().abs() < 0.1);
    }

    #[test]
    fn period_two_rays_of_minus_five_exp() {
        let f = MapSpec::exp_affine(c(-5.0, 0.0), c(0.0, 0.0));
        let s = structural_setup(&f, Rect::new(-10.0, 14.0, -14.0, 14.0), 0.05).unwrap();
        let labels: Vec<BranchLabel> = (-1..=1).map(BranchLabel::band).collect();
        let rays = fixed_rays(&s, &labels, 2, 320, &default_t_grid(&s), &default_schedule());
        assert_eq!(rays.len(), 9);
        for r in &rays {
            let z = r.landing().unwrap_or_else(|| panic!("{} {:?}", r.address, r.status));
            assert!((f.iterate(z, 2).unwrap().0 - z).norm() < 1e-8);
        }
    }

    #[test]
    fn pair_tolerance_and_periods() {
        let mk = |z: C64, a: &str| Ray {
            address: a.parse().unwrap(),
            samples: vec![],
            status: RayStatus::LandsAt { z },
            radius: 1.0,
            unconverged: vec![],
        };
        let r1 = mk(c(0.0, 0.0), "0|");
        let r2 = mk(c(0.01, 0.0), "1|");
        assert_eq!(detect_ray_pairs(&[r1.clone(), r2.clone()], 0.02).unwrap().len(), 1);
        assert_eq!(detect_ray_pairs(&[r1.clone(), r2], 0.005).unwrap().len(), 0);
        let r3 = mk(c(0.0, 0.0), "0,1|");
        assert_eq!(detect_ray_pairs(&[r1, r3], 0.1), Err(RayError::MixedPeriods));
    }
}
