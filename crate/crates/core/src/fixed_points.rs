//! Periodic points: Newton search, inverse-branch contraction, multiplier
//! classification, multiplicity and parabolic petals.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::curves::{argument_principle_count, multiplicity_at, CountMode, CurveError, ParamCurve};
use crate::geom::Rect;
use crate::map::{BranchLabel, HolomorphicMap, MapError, MapSpec};
use crate::rays::Address;
use crate::structure::StructuralSetup;

/// Band around `|m| = 1` (and around roots of unity) treated as neutral.
pub const NEUTRAL_TOL: f64 = 1e-6;
/// Largest root-of-unity order recognized as parabolic.
pub const MAX_ROOT_ORDER: u32 = 12;
/// Roots closer than this are the same point.
pub const DEDUP_TOL: f64 = 1e-7;
/// Roots closer than this to the search region boundary are rejected.
pub const BOUNDARY_ROOT_TOL: f64 = 1e-9;
/// Largest supported period for searches.
pub const MAX_PERIOD: u32 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixedPointError {
    #[error("period {0} exceeds the supported maximum of 4")]
    PeriodTooLarge(u32),
    #[error("invalid region")]
    InvalidRegion,
    #[error("periodic point {z} lies on the region boundary")]
    BoundaryRoot { z: C64 },
    #[error("domain {0} meets the disk D")]
    DomainMeetsDisk(BranchLabel),
    #[error("domain {0} is not part of the setup")]
    UnknownDomain(BranchLabel),
    #[error("fixed point of domain {label} has multiplier {multiplier}, not repelling")]
    NotRepelling { label: BranchLabel, multiplier: C64 },
    #[error("iteration did not converge")]
    NoConvergence,
    #[error("multiplier {0} is not within 1e-6 of 1")]
    NotParabolic(C64),
    #[error("all normal-form coefficients up to order 8 are negligible")]
    DegenerateExpansion,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Attracting,
    Repelling,
    Parabolic,
    IrrationallyIndifferent,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Attracting => "attracting",
            Classification::Repelling => "repelling",
            Classification::Parabolic => "parabolic",
            Classification::IrrationallyIndifferent => "irrationally_indifferent",
        })
    }
}

/// Classification of a multiplier, with the root-of-unity order when
/// parabolic.
pub fn classify_multiplier(m: C64) -> (Classification, Option<u32>) {
    let r = m.norm();
    if r < 1.0 - NEUTRAL_TOL {
        return (Classification::Attracting, None);
    }
    if r > 1.0 + NEUTRAL_TOL {
        return (Classification::Repelling, None);
    }
    for q in 1..=MAX_ROOT_ORDER {
        let k = (m.arg() / TAU * q as f64).round();
        let root = C64::from_polar(1.0, TAU * k / q as f64);
        if (m - root).norm() < NEUTRAL_TOL {
            return (Classification::Parabolic, Some(q));
        }
    }
    (Classification::IrrationallyIndifferent, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    #[serde(with = "crate::geom::cserde")]
    pub location: C64,
    /// Exact period.
    pub period: u32,
    /// `(f^period)'` at the location.
    #[serde(with = "crate::geom::cserde")]
    pub multiplier: C64,
    pub classification: Classification,
    /// Order of the location as a root of `f^p(z) − z` for the search
    /// period `p`.
    pub multiplicity: u32,
    pub incident_ray_addresses: Vec<Address>,
}

impl FixedPointRecord {
    /// Builds a classified record at an already polished location.
    pub fn at<M: HolomorphicMap + ?Sized>(
        map: &M,
        location: C64,
        search_period: u32,
        multiplicity: u32,
    ) -> Result<Self, MapError> {
        let period = exact_period(map, location, search_period)?;
        let (_, multiplier) = map.iterate(location, period)?;
        Ok(FixedPointRecord {
            location,
            period,
            multiplier,
            classification: classify_multiplier(multiplier).0,
            multiplicity,
            incident_ray_addresses: Vec::new(),
        })
    }
}

/// CSV table `re,im,period,abs_multiplier,class,multiplicity`.
pub fn records_to_csv(records: &[FixedPointRecord]) -> String {
    let mut out = String::from("re,im,period,abs_multiplier,class,multiplicity\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.location.re,
            r.location.im,
            r.period,
            r.multiplier.norm(),
            r.classification,
            r.multiplicity
        ));
    }
    out
}

/// Smallest divisor `k` of `period` with `f^k(z) ≈ z`.
pub fn exact_period<M: HolomorphicMap + ?Sized>(map: &M, z: C64, period: u32) -> Result<u32, MapError> {
    for k in 1..period {
        if period.is_multiple_of(k) && (map.iterate(z, k)?.0 - z).norm() < DEDUP_TOL * (1.0 + z.norm()) {
            return Ok(k);
        }
    }
    Ok(period)
}

/// Newton iteration on `f^p(z) − z` with step length capped at 2.
/// Returns the limit if the residual is below `1e-9·(1 + |z|)`.
pub fn newton_polish<M: HolomorphicMap + ?Sized>(map: &M, z0: C64, period: u32) -> Option<C64> {
    let mut z = z0;
    for _ in 0..120 {
        let (w, d) = map.iterate(z, period).ok()?;
        let g = w - z;
        let dg = d - 1.0;
        if g == C64::new(0.0, 0.0) {
            break;
        }
        if dg.norm() == 0.0 || !dg.is_finite() {
            return None;
        }
        let mut step = g / dg;
        if step.norm() > 2.0 {
            step *= 2.0 / step.norm();
        }
        z -= step;
        if !z.is_finite() {
            return None;
        }
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    let (w, _) = map.iterate(z, period).ok()?;
    ((w - z).norm() < 1e-9 * (1.0 + z.norm())).then_some(z)
}

/// Centroid of the solutions of `f^p(z) = z` inside the circle of the
/// given radius about `z0`, via `(1/2πi)∮ z g'/g dz` over `(1/2πi)∮ g'/g dz`.
pub fn root_centroid<M: HolomorphicMap + ?Sized>(
    map: &M,
    z0: C64,
    radius: f64,
    period: u32,
) -> Result<C64, FixedPointError> {
    const N: usize = 256;
    let mut num = C64::new(0.0, 0.0);
    let mut den = C64::new(0.0, 0.0);
    for n in 0..N {
        let u = C64::from_polar(radius, TAU * n as f64 / N as f64);
        let z = z0 + u;
        let (w, d) = map.iterate(z, period)?;
        let g = w - z;
        if g.norm() == 0.0 {
            return Err(CurveError::ZeroOnContour { z }.into());
        }
        let q = (d - 1.0) / g * u;
        num += q * u;
        den += q;
    }
    if den.norm() < 0.5 {
        return Err(FixedPointError::NoConvergence);
    }
    Ok(z0 + num / den)
}

/// Locates a multiple root near `z` by the root centroid on a circle of
/// radius `1e-3`.
pub fn polish_multiple_root<M: HolomorphicMap + ?Sized>(map: &M, z: C64, period: u32) -> Result<C64, FixedPointError> {
    let mut c = z;
    for _ in 0..3 {
        let next = root_centroid(map, c, 1e-3, period)?;
        let moved = (next - c).norm();
        c = next;
        if moved < 1e-14 {
            break;
        }
    }
    Ok(c)
}

/// Seed placement for `find_periodic_points`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedStrategy {
    /// Grid divisions per side; the step is about `diagonal / grid`.
    pub grid: usize,
    /// Additional seeds (inverse-branch words, singular orbits).
    pub extra: Vec<C64>,
}

impl Default for SeedStrategy {
    fn default() -> Self {
        SeedStrategy {
            grid: 64,
            extra: Vec::new(),
        }
    }
}

impl SeedStrategy {
    /// Grid plus inverse-branch and singular-orbit seeds for `setup`.
    pub fn for_setup(setup: &StructuralSetup, period: u32) -> Self {
        let mut extra = branch_seeds(setup, period);
        extra.extend(singular_orbit_seeds(&setup.spec, 2000));
        SeedStrategy { grid: 64, extra }
    }
}

/// Fixed points of `ψ_{w0} ∘ … ∘ ψ_{w(p-1)}` for every word of length
/// `period` over the setup's domains.
pub fn branch_seeds(setup: &StructuralSetup, period: u32) -> Vec<C64> {
    let labels: Vec<BranchLabel> = setup
        .domains
        .iter()
        .map(|d| BranchLabel {
            alpha: 0,
            ..d.label.clone()
        })
        .collect();
    let mut words: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..period {
        words = words
            .into_iter()
            .flat_map(|w| {
                (0..labels.len()).map(move |i| {
                    let mut v = w.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    'words: for w in words {
        let mut z = setup.domains[w[0]].anchor;
        for _ in 0..200 {
            let prev = z;
            for &i in w.iter().rev() {
                match setup.spec.pull(z, &labels[i], &setup.cut, None) {
                    Ok(v) if v.is_finite() => z = v,
                    _ => continue 'words,
                }
            }
            if (z - prev).norm() < 1e-13 {
                break;
            }
        }
        out.push(z);
    }
    out
}

/// The tail of the forward orbits of the singular values, where attracting
/// and parabolic cycles are found.
pub fn singular_orbit_seeds(spec: &MapSpec, iterates: usize) -> Vec<C64> {
    let mut out = Vec::new();
    for v in spec.singular_values() {
        let mut z = v;
        let mut orbit = Vec::with_capacity(iterates);
        for _ in 0..iterates {
            match spec.eval(z) {
                Ok((w, _)) if w.is_finite() && w.norm() < 1e12 => {
                    z = w;
                    orbit.push(z);
                }
                _ => break,
            }
        }
        let keep = orbit.len().min(16);
        out.extend_from_slice(&orbit[orbit.len() - keep..]);
    }
    out
}

/// Result of a periodic-point search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSearch {
    pub records: Vec<FixedPointRecord>,
    /// Argument-principle count over the region boundary, if computable.
    pub boundary_count: Option<i64>,
    pub warnings: Vec<String>,
}

impl PeriodicSearch {
    /// Number of solutions of `f^p(z) = z` found, with multiplicity.
    pub fn count_with_multiplicity(&self) -> i64 {
        self.records.iter().map(|r| r.multiplicity as i64).sum()
    }
}

/// All solutions of `f^p(z) = z` in `region`.
pub fn find_periodic_points<M: HolomorphicMap + ?Sized>(
    map: &M,
    region: Rect,
    period: u32,
    seeds: &SeedStrategy,
) -> Result<PeriodicSearch, FixedPointError> {
    if period == 0 {
        return Err(MapError::ZeroPeriod.into());
    }
    if period > MAX_PERIOD {
        return Err(FixedPointError::PeriodTooLarge(period));
    }
    if !region.is_valid() {
        return Err(FixedPointError::InvalidRegion);
    }
    let mut candidates: Vec<C64> = Vec::new();
    let n = seeds.grid.max(1);
    for i in 0..=n {
        for k in 0..=n {
            candidates.push(C64::new(
                region.x0 + region.width() * i as f64 / n as f64,
                region.y0 + region.height() * k as f64 / n as f64,
            ));
        }
    }
    candidates.extend(seeds.extra.iter().copied());

    let mut roots: Vec<(C64, u32)> = Vec::new();
    let mut warnings = Vec::new();
    for seed in candidates {
        let Some(z) = newton_polish(map, seed, period) else { continue };
        if region.inset_distance(z) >= -BOUNDARY_ROOT_TOL {
            add_root(map, z, period, &mut roots, &mut warnings)?;
        }
    }
    let boundary_count = match rect_count(map, &region, period) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("boundary count failed: {e}"));
            None
        }
    };
    if let Some(c) = boundary_count {
        if c > weight_inside(&roots, &region) {
            complete_by_subdivision(map, region, period, &mut roots, &mut warnings, 0)?;
        }
    }
    for (z, _) in &roots {
        if region.inset_distance(*z).abs() <= BOUNDARY_ROOT_TOL {
            return Err(FixedPointError::BoundaryRoot { z: *z });
        }
    }
    roots.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let records = roots
        .iter()
        .map(|&(z, m)| FixedPointRecord::at(map, z, period, m))
        .collect::<Result<Vec<_>, _>>()?;
    let search = PeriodicSearch {
        records,
        boundary_count,
        warnings,
    };
    let mut search = search;
    if let Some(c) = search.boundary_count {
        let found = search.count_with_multiplicity();
        if c != found {
            search
                .warnings
                .push(format!("boundary count {c} differs from {found} points found"));
        }
    }
    Ok(search)
}

fn rect_count<M: HolomorphicMap + ?Sized>(map: &M, rect: &Rect, period: u32) -> Result<i64, CurveError> {
    let boundary = ParamCurve::polyline(&rect.corners(), true)?;
    argument_principle_count(map, &boundary, CountMode::FixedPoints, period)
}

fn weight_inside(roots: &[(C64, u32)], rect: &Rect) -> i64 {
    roots
        .iter()
        .filter(|(z, _)| rect.inset_distance(*z) > 0.0)
        .map(|(_, m)| *m as i64)
        .sum()
}

/// Records a new root with its multiplicity; near-parabolic roots get a
/// contour multiplicity and a centroid location.
fn add_root<M: HolomorphicMap + ?Sized>(
    map: &M,
    z: C64,
    period: u32,
    roots: &mut Vec<(C64, u32)>,
    warnings: &mut Vec<String>,
) -> Result<(), FixedPointError> {
    if roots.iter().any(|(r, _)| (r - z).norm() < DEDUP_TOL) {
        return Ok(());
    }
    let (_, d) = map.iterate(z, period)?;
    let mut location = z;
    let mut multiplicity = 1u32;
    if (d - 1.0).norm() < NEUTRAL_TOL {
        let nearest = roots.iter().map(|(r, _)| (r - z).norm()).fold(f64::INFINITY, f64::min);
        let radius = (0.4 * nearest).min(1e-3);
        match multiplicity_at(map, z, radius, period) {
            Ok(m) if m >= 1 => {
                multiplicity = m as u32;
                if m >= 2 {
                    location = root_centroid(map, z, radius, period).unwrap_or(z);
                }
            }
            Ok(m) => warnings.push(format!("multiplicity {m} at {z}")),
            Err(e) => warnings.push(format!("multiplicity at {z}: {e}")),
        }
    }
    roots.push((location, multiplicity));
    Ok(())
}

/// Finds roots missed by the seeds: cells whose argument-principle count
/// exceeds the known roots inside are searched by Newton from their center
/// and then split into quarters.
fn complete_by_subdivision<M: HolomorphicMap + ?Sized>(
    map: &M,
    cell: Rect,
    period: u32,
    roots: &mut Vec<(C64, u32)>,
    warnings: &mut Vec<String>,
    level: usize,
) -> Result<(), FixedPointError> {
    let count = match rect_count(map, &cell, period) {
        Ok(c) => c,
        Err(e) => {
            warnings.push(format!("cell count failed on {cell:?}: {e}"));
            return Ok(());
        }
    };
    if count <= weight_inside(roots, &cell) {
        return Ok(());
    }
    let center = C64::new(0.5 * (cell.x0 + cell.x1), 0.5 * (cell.y0 + cell.y1));
    if let Some(z) = newton_polish(map, center, period) {
        if cell.inset_distance(z) > 0.0 {
            add_root(map, z, period, roots, warnings)?;
            if count <= weight_inside(roots, &cell) {
                return Ok(());
            }
        }
    }
    if level >= 30 {
        warnings.push(format!("unresolved roots in {cell:?}"));
        return Ok(());
    }
    // Off-center split lines avoid symmetric roots landing on them.
    let xm = cell.x0 + 0.4871 * cell.width();
    let ym = cell.y0 + 0.5129 * cell.height();
    for sub in [
        Rect::new(cell.x0, xm, cell.y0, ym),
        Rect::new(xm, cell.x1, cell.y0, ym),
        Rect::new(cell.x0, xm, ym, cell.y1),
        Rect::new(xm, cell.x1, ym, cell.y1),
    ] {
        complete_by_subdivision(map, sub, period, roots, warnings, level + 1)?;
    }
    Ok(())
}

/// The repelling fixed point of a fundamental domain off `D`, by iterating
/// the domain's inverse branch.
pub fn find_fixed_in_domain(setup: &StructuralSetup, label: &BranchLabel) -> Result<FixedPointRecord, FixedPointError> {
    let domain = setup
        .domain(label)
        .ok_or_else(|| FixedPointError::UnknownDomain(label.clone()))?;
    if domain.meets_disk {
        return Err(FixedPointError::DomainMeetsDisk(label.clone()));
    }
    let pl = BranchLabel {
        alpha: 0,
        ..label.clone()
    };
    let mut z = domain.anchor;
    let mut converged = false;
    for _ in 0..10_000 {
        let next = setup.spec.pull(z, &pl, &setup.cut, None)?;
        let step = (next - z).norm();
        z = next;
        if step < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FixedPointError::NoConvergence);
    }
    let record = FixedPointRecord::at(&setup.spec, z, 1, 1)?;
    if record.classification != Classification::Repelling {
        return Err(FixedPointError::NotRepelling {
            label: label.clone(),
            multiplier: record.multiplier,
        });
    }
    Ok(record)
}

/// Attracting and repelling directions of a parabolic point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PetalFan {
    #[serde(with = "crate::geom::cserde")]
    pub at: C64,
    pub m: u32,
    #[serde(with = "crate::geom::cserde::vec")]
    pub attracting_dirs: Vec<C64>,
    #[serde(with = "crate::geom::cserde::vec")]
    pub repelling_dirs: Vec<C64>,
    /// `a` in `f^p(z) = z + a(z − z0)^(m+1) + …`.
    #[serde(with = "crate::geom::cserde")]
    pub leading_coeff: C64,
}

/// Taylor coefficients `c_0 … c_max` of `f^p(z0 + u) − (z0 + u)` by the
/// trapezoid rule on a circle of radius `rho`, with per-order noise floors.
fn taylor_coefficients<M: HolomorphicMap + ?Sized>(
    map: &M,
    z0: C64,
    period: u32,
    rho: f64,
    max: usize,
) -> Result<(Vec<C64>, Vec<f64>), MapError> {
    const N: usize = 256;
    let mut values = Vec::with_capacity(N);
    let mut scale: f64 = 0.0;
    for n in 0..N {
        let u = C64::from_polar(rho, TAU * n as f64 / N as f64);
        let z = z0 + u;
        let (w, _) = map.iterate(z, period)?;
        scale = scale.max(w.norm()).max(z.norm());
        values.push(w - z);
    }
    let mut coeffs = Vec::with_capacity(max + 1);
    let mut floors = Vec::with_capacity(max + 1);
    for k in 0..=max {
        let mut s = C64::new(0.0, 0.0);
        for (n, v) in values.iter().enumerate() {
            s += v * C64::from_polar(1.0, -TAU * (n * k) as f64 / N as f64);
        }
        let rk = rho.powi(k as i32);
        coeffs.push(s / (N as f64 * rk));
        floors.push((1e3 * f64::EPSILON * scale / rk).max(1e-8));
    }
    Ok((coeffs, floors))
}

/// Petal directions of `f^p` at a point with multiplier within `1e-6` of 1.
pub fn petal_directions<M: HolomorphicMap + ?Sized>(map: &M, at: C64, period: u32) -> Result<PetalFan, FixedPointError> {
    let (_, d) = map.iterate(at, period)?;
    if (d - 1.0).norm() >= NEUTRAL_TOL {
        return Err(FixedPointError::NotParabolic(d));
    }
    let (coeffs, floors) = taylor_coefficients(map, at, period, 1e-2, 8)?;
    let k = (2..=8)
        .find(|&k| coeffs[k].norm() > floors[k])
        .ok_or(FixedPointError::DegenerateExpansion)?;
    let m = (k - 1) as u32;
    let a = coeffs[k];
    let mf = m as f64;
    let attracting_dirs = (0..m)
        .map(|j| C64::from_polar(1.0, (PI - a.arg() + TAU * j as f64) / mf))
        .collect();
    let repelling_dirs = (0..m)
        .map(|j| C64::from_polar(1.0, (-a.arg() + TAU * j as f64) / mf))
        .collect();
    Ok(PetalFan {
        at,
        m,
        attracting_dirs,
        repelling_dirs,
        leading_coeff: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Polynomial;
    use crate::structure::structural_setup;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
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
    fn classification_bands() {
        assert_eq!(classify_multiplier(c(0.5, 0.0)).0, Classification::Attracting);
        assert_eq!(classify_multiplier(c(1.5, 0.0)).0, Classification::Repelling);
        assert_eq!(classify_multiplier(c(1.0, 0.0)), (Classification::Parabolic, Some(1)));
        assert_eq!(classify_multiplier(c(-1.0, 0.0)), (Classification::Parabolic, Some(2)));
        assert_eq!(classify_multiplier(C64::from_polar(1.0, TAU / 5.0)).1, Some(5));
        let golden = C64::from_polar(1.0, TAU * 0.5 * (5f64.sqrt() - 1.0));
        assert_eq!(classify_multiplier(golden).0, Classification::IrrationallyIndifferent);
    }

    #[test]
    fn two_fixed_points_of_exp03() {
        let f = MapSpec::exp_affine(c(0.3, 0.0), c(0.0, 0.0));
        let s = find_periodic_points(&f, Rect::new(-1.0, 3.0, -2.0, 2.0), 1, &SeedStrategy::default()).unwrap();
        assert_eq!(s.records.len(), 2);
        assert_eq!(s.boundary_count, Some(2));
        assert!(s.warnings.is_empty());
        let a = bisect(|x| 0.3 * x.exp() - x, 0.0, 1.0);
        let r = bisect(|x| 0.3 * x.exp() - x, 1.0, 2.0);
        assert!((s.records[0].location - a).norm() < 1e-10);
        assert_eq!(s.records[0].classification, Classification::Attracting);
        assert!((s.records[0].multiplier - a).norm() < 1e-9);
        assert!((s.records[1].location - r).norm() < 1e-10);
        assert_eq!(s.records[1].classification, Classification::Repelling);
    }

    #[test]
    fn parabolic_point_of_exp_shift() {
        let f = MapSpec::exp_affine(c((-1.0f64).exp(), 0.0), c(0.0, 0.0));
        let s = find_periodic_points(&f, Rect::new(0.0, 2.0, -1.0, 1.0), 1, &SeedStrategy::default()).unwrap();
        assert_eq!(s.records.len(), 1);
        let rec = &s.records[0];
        assert!((rec.location - 1.0).norm() < 1e-9);
        assert!((rec.multiplier - 1.0).norm() < 1e-9);
        assert_eq!(rec.multiplicity, 2);
        assert_eq!(rec.classification, Classification::Parabolic);
        assert_eq!(s.boundary_count, Some(2));
    }

    #[test]
    fn attracting_two_cycle() {
        let f = MapSpec::exp_affine(c(-5.0, 0.0), c(0.0, 0.0));
        let seeds = SeedStrategy {
            grid: 64,
            extra: singular_orbit_seeds(&f, 2000),
        };
        let s = find_periodic_points(&f, Rect::new(-6.0, 3.0, -4.0, 4.0), 2, &seeds).unwrap();
        let cycle: Vec<&FixedPointRecord> = s
            .records
            .iter()
            .filter(|r| r.period == 2 && r.classification == Classification::Attracting)
            .collect();
        assert_eq!(cycle.len(), 2);
        let (z1, z2) = (cycle[0].location, cycle[1].location);
        assert!((f.eval(z1).unwrap().0 - z2).norm() < 1e-8);
        assert!((cycle[0].multiplier - z1 * z2).norm() < 1e-6 * z1.norm() * z2.norm());
        assert!((cycle[0].multiplier - cycle[1].multiplier).norm() < 1e-9);
        assert_eq!(s.boundary_count, Some(s.count_with_multiplicity()));
    }

    #[test]
    fn region_must_avoid_roots_on_boundary() {
        let f = Polynomial::real(&[0.0, 0.0, 1.0]);
        let err = find_periodic_points(&f, Rect::new(1.0, 2.0, -1.0, 1.0), 1, &SeedStrategy::default());
        assert!(matches!(err, Err(FixedPointError::BoundaryRoot { .. })));
        assert!(matches!(
            find_periodic_points(&f, Rect::new(-1.0, 2.0, -1.0, 1.0), 5, &SeedStrategy::default()),
            Err(FixedPointError::PeriodTooLarge(5))
        ));
    }

    #[test]
    fn inverse_branch_fixed_points() {
        let f = MapSpec::exp_affine(c(0.3, 0.0), c(0.0, 0.0));
        let setup = structural_setup(&f, Rect::new(-4.0, 12.0, -16.0, 16.0), 0.05).unwrap();
        let p1 = find_fixed_in_domain(&setup, &BranchLabel::band(1)).unwrap();
        let mut z = c(3.0, 7.0);
        for _ in 0..200 {
            z = (z / 0.3).ln() + c(0.0, TAU);
        }
        assert!((p1.location - z).norm() < 1e-10);
        assert_eq!(p1.classification, Classification::Repelling);
        let m1 = find_fixed_in_domain(&setup, &BranchLabel::band(-1)).unwrap();
        assert!((m1.location - p1.location.conj()).norm() < 1e-10);
        let p0 = find_fixed_in_domain(&setup, &BranchLabel::band(0)).unwrap();
        assert!((p0.location - bisect(|x| 0.3 * x.exp() - x, 1.0, 2.0)).norm() < 1e-10);
    }

    #[test]
    fn petals() {
        let f = MapSpec::exp_affine(c((-1.0f64).exp(), 0.0), c(0.0, 0.0));
        let fan = petal_directions(&f, c(1.0, 0.0), 1).unwrap();
        assert_eq!(fan.m, 1);
        assert!((fan.leading_coeff - 0.5).norm() < 1e-8);
        assert!((fan.attracting_dirs[0] + 1.0).norm() < 1e-12);
        assert!((fan.repelling_dirs[0] - 1.0).norm() < 1e-12);

        let cubic = Polynomial::real(&[0.0, 1.0, 0.0, 1.0]);
        let fan = petal_directions(&cubic, c(0.0, 0.0), 1).unwrap();
        assert_eq!(fan.m, 2);
        let mut att: Vec<f64> = fan.attracting_dirs.iter().map(|d| d.im).collect();
        att.sort_by(f64::total_cmp);
        assert!((att[0] + 1.0).abs() < 1e-12 && (att[1] - 1.0).abs() < 1e-12);
        for d in &fan.repelling_dirs {
            assert!((d.re.abs() - 1.0).abs() < 1e-12);
        }

        let doubling = Polynomial::real(&[0.0, 2.0]);
        assert!(matches!(
            petal_directions(&doubling, c(0.0, 0.0), 1),
            Err(FixedPointError::NotParabolic(_))
        ));
        let identity = Polynomial::real(&[0.0, 1.0]);
        assert_eq!(
            petal_directions(&identity, c(0.0, 0.0), 1),
            Err(FixedPointError::DegenerateExpansion)
        );
    }

    fn shared_search() -> &'static (MapSpec, PeriodicSearch) {
        static SEARCH: std::sync::OnceLock<(MapSpec, PeriodicSearch)> = std::sync::OnceLock::new();
        SEARCH.get_or_init(|| {
            let f = MapSpec::exp_affine(c(-5.0, 0.0), c(0.0, 0.0));
            let seeds = SeedStrategy {
                grid: 64,
                extra: singular_orbit_seeds(&f, 2000),
            };
            let s = find_periodic_points(&f, Rect::new(-6.0, 3.0, -4.0, 4.0), 2, &seeds).unwrap();
            (f, s)
        })
    }

    proptest::proptest! {
        #[test]
        fn perturbed_newton_returns_to_the_record(k in 0usize..64, angle in 0.0f64..std::f64::consts::TAU) {
            let (f, s) = shared_search();
            let rec = &s.records[k % s.records.len()];
            let seed = rec.location + C64::from_polar(1e-4, angle);
            let z = newton_polish(f, seed, 2).unwrap();
            proptest::prop_assert!((z - rec.location).norm() < 1e-7);
            let again = FixedPointRecord::at(f, z, 2, rec.multiplicity).unwrap();
            proptest::prop_assert_eq!(again.classification, rec.classification);
        }

        #[test]
        fn cycles_close_and_multipliers_are_products(k in 0usize..64) {
            let (f, s) = shared_search();
            let rec = &s.records[k % s.records.len()];
            let mut z = rec.location;
            let mut product = C64::new(1.0, 0.0);
            for _ in 0..rec.period {
                let (w, d) = f.eval(z).unwrap();
                product *= d;
                z = w;
            }
            proptest::prop_assert!((z - rec.location).norm() < 1e-8);
            proptest::prop_assert!((rec.multiplier - product).norm() <= 1e-6 * product.norm());
        }
    }
}
