//! Discretized curves, winding numbers and argument-principle counting.
//!
//! Curves are piecewise linear. The index of a piecewise-linear curve about
//! a point off the curve is computed exactly (up to rounding) as the sum of
//! principal argument increments, because a straight segment subtends an
//! angle strictly smaller than π. Counting zeros of a holomorphic function
//! along a contour needs refinement instead: the image of a segment is not
//! a segment, so samples are inserted until every argument increment of
//! the integrand is small.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::geom::{point_segment_distance, segments_intersect, signed_area2};
use crate::map::{HolomorphicMap, MapError};

/// A point is "on" a curve when it is closer than this.
pub const HIT_TOL: f64 = 1e-12;
/// Closed curves must repeat their first point to this precision.
pub const CLOSE_TOL: f64 = 1e-12;
/// Distance to the nearest integer below which an index is snapped.
pub const SNAP_TOL: f64 = 1e-6;
/// Hard cap on the number of samples produced by refinement.
pub const MAX_REFINED_SAMPLES: usize = 1 << 22;
/// Segments shorter than this that still need refinement indicate a zero
/// of the integrand within about `1e-9` of the contour.
const MIN_SEGMENT: f64 = 5e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error("a curve needs at least two samples")]
    TooFewSamples,
    #[error("curve parameters must be strictly increasing (sample {0})")]
    NonMonotone(usize),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("closed curve endpoints differ by {0:e}")]
    EndpointsDiffer(f64),
    #[error("point lies on the curve (segment {segment})")]
    CurveHitsPoint { segment: usize },
    #[error("curves collide at t = {t}")]
    CurvesCollide { t: f64 },
    #[error("integrand vanishes within tolerance of the contour near ({}, {})", .z.re, .z.im)]
    ZeroOnContour { z: C64 },
    #[error("refinement budget of {budget} samples exceeded")]
    RefinementBudgetExceeded { budget: usize },
    #[error("integrand vanishes at t = {t}")]
    ZeroIntegrand { t: f64 },
    #[error("contour is not closed")]
    NotClosed,
    #[error("contour is not simple: segments {0} and {1} intersect")]
    NotSimple(usize, usize),
    #[error("count {outer} at the given radius differs from count {inner} at half the radius")]
    InconsistentRadius { outer: i64, inner: i64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("curve parse error: {0}")]
    Parse(String),
}

/// Index of a curve about a point, in turns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexValue {
    pub value: f64,
    /// Present iff `value` is within `1e-6` of an integer.
    pub integer_snap: Option<i64>,
}

impl IndexValue {
    pub fn from_turns(value: f64) -> Self {
        let r = value.round();
        let integer_snap = ((value - r).abs() < SNAP_TOL).then_some(r as i64);
        IndexValue {
            value,
            integer_snap,
        }
    }
}

/// A sampled parametrized curve `t ↦ z(t)`, linear between samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCurve {
    t: Vec<f64>,
    z: Vec<C64>,
    closed: bool,
}

impl ParamCurve {
    pub fn new(t: Vec<f64>, z: Vec<C64>, closed: bool) -> Result<Self, CurveError> {
        if t.len() != z.len() {
            return Err(CurveError::InvalidArgument(
                "parameter and point counts differ".into(),
            ));
        }
        if z.len() < 2 {
            return Err(CurveError::TooFewSamples);
        }
        if t.iter().any(|v| !v.is_finite()) || z.iter().any(|p| !p.is_finite()) {
            return Err(CurveError::NonFiniteInput);
        }
        if let Some(i) = (1..t.len()).find(|&i| t[i] <= t[i - 1]) {
            return Err(CurveError::NonMonotone(i));
        }
        if closed {
            let gap = (z[0] - z[z.len() - 1]).norm();
            if gap > CLOSE_TOL {
                return Err(CurveError::EndpointsDiffer(gap));
            }
        }
        Ok(ParamCurve { t, z, closed })
    }

    pub fn from_samples(samples: &[(f64, C64)], closed: bool) -> Result<Self, CurveError> {
        let (t, z) = samples.iter().copied().unzip();
        ParamCurve::new(t, z, closed)
    }

    /// Polyline through `points` with parameter `0, 1, 2, …`. A closed
    /// polyline gets its first point appended if it is not already repeated.
    pub fn polyline(points: &[C64], closed: bool) -> Result<Self, CurveError> {
        let mut pts = points.to_vec();
        if closed && pts.len() >= 2 && (pts[0] - pts[pts.len() - 1]).norm() > CLOSE_TOL {
            pts.push(pts[0]);
        }
        if closed && pts.len() >= 2 {
            let last = pts.len() - 1;
            pts[last] = pts[0];
        }
        let t = (0..pts.len()).map(|k| k as f64).collect();
        ParamCurve::new(t, pts, closed)
    }

    /// Circle about `center`, traversed `turns` times counterclockwise
    /// (clockwise if negative), `n` segments, parameter in `[0, 1]`.
    pub fn circle(center: C64, radius: f64, n: usize, turns: i32) -> Self {
        let n = n.max(3);
        let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut z: Vec<C64> = t
            .iter()
            .map(|&s| center + C64::from_polar(radius, TAU * turns as f64 * s))
            .collect();
        z[n] = z[0];
        ParamCurve {
            t,
            z,
            closed: true,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn params(&self) -> &[f64] {
        &self.t
    }

    pub fn points(&self) -> &[C64] {
        &self.z
    }

    pub fn start(&self) -> C64 {
        self.z[0]
    }

    pub fn end(&self) -> C64 {
        self.z[self.z.len() - 1]
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, C64)> + '_ {
        self.t.iter().copied().zip(self.z.iter().copied())
    }

    /// Same points traversed backwards, parameters kept increasing.
    pub fn reversed(&self) -> Self {
        let (a, b) = (self.t[0], self.t[self.t.len() - 1]);
        let t = self.t.iter().rev().map(|&s| a + b - s).collect();
        let z = self.z.iter().rev().copied().collect();
        ParamCurve {
            t,
            z,
            closed: self.closed,
        }
    }

    /// Rescales the parameter onto `[0, 1]`.
    pub fn normalized(&self) -> Self {
        let (a, b) = (self.t[0], self.t[self.t.len() - 1]);
        let t = self.t.iter().map(|&s| (s - a) / (b - a)).collect();
        ParamCurve {
            t,
            z: self.z.clone(),
            closed: self.closed,
        }
    }

    /// Point at parameter `s` by linear interpolation (clamped to the ends).
    pub fn at(&self, s: f64) -> C64 {
        let n = self.t.len();
        if s <= self.t[0] {
            return self.z[0];
        }
        if s >= self.t[n - 1] {
            return self.z[n - 1];
        }
        let i = self.t.partition_point(|&v| v <= s) - 1;
        let w = (s - self.t[i]) / (self.t[i + 1] - self.t[i]);
        self.z[i] + (self.z[i + 1] - self.z[i]) * w
    }

    /// Appends `other`, whose start must coincide with this curve's end.
    /// The result is open unless `close` is requested and the ends match.
    pub fn concat(&self, other: &ParamCurve) -> Result<Self, CurveError> {
        let gap = (self.end() - other.start()).norm();
        if gap > 1e-9 * (1.0 + self.end().norm()) {
            return Err(CurveError::InvalidArgument(format!(
                "arcs do not join (gap {gap:e})"
            )));
        }
        let mut t = self.t.clone();
        let mut z = self.z.clone();
        let shift = t[t.len() - 1] - other.t[0];
        for (s, p) in other.samples().skip(1) {
            t.push(s + shift);
            z.push(p);
        }
        ParamCurve::new(t, z, false)
    }

    /// Marks the curve as closed, snapping the last point onto the first.
    pub fn into_closed(mut self) -> Result<Self, CurveError> {
        let n = self.z.len();
        let gap = (self.z[0] - self.z[n - 1]).norm();
        if gap > 1e-9 * (1.0 + self.z[0].norm()) {
            return Err(CurveError::EndpointsDiffer(gap));
        }
        self.z[n - 1] = self.z[0];
        self.closed = true;
        Ok(self)
    }

    /// Applies `f` pointwise, keeping parameters.
    pub fn map_points<F: Fn(C64) -> C64>(&self, f: F) -> Result<Self, CurveError> {
        let z: Vec<C64> = self.z.iter().map(|&p| f(p)).collect();
        let closed = self.closed && (z[0] - z[z.len() - 1]).norm() <= CLOSE_TOL;
        ParamCurve::new(self.t.clone(), z, closed)
    }

    /// Serializes as CSV with header `t,re,im`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "re", "im"]).expect("in-memory write");
        for (s, p) in self.samples() {
            w.write_record([s.to_string(), p.re.to_string(), p.im.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Parses CSV with header `t,re,im`; closedness is inferred from the
    /// endpoints.
    pub fn from_csv(text: &str) -> Result<Self, CurveError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut t = Vec::new();
        let mut z = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CurveError::Parse(e.to_string()))?;
            let field = |k: usize| -> Result<f64, CurveError> {
                rec.get(k)
                    .ok_or_else(|| CurveError::Parse("expected columns t,re,im".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| CurveError::Parse(e.to_string()))
            };
            t.push(field(0)?);
            z.push(C64::new(field(1)?, field(2)?));
        }
        let closed = z.len() > 2 && (z[0] - z[z.len() - 1]).norm() <= CLOSE_TOL;
        ParamCurve::new(t, z, closed)
    }

}

#[derive(Serialize, Deserialize)]
struct RawCurve {
    closed: bool,
    samples: Vec<[f64; 3]>,
}

impl Serialize for ParamCurve {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawCurve {
            closed: self.closed,
            samples: self.samples().map(|(t, p)| [t, p.re, p.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawCurve::deserialize(d)?;
        let (t, z) = raw
            .samples
            .iter()
            .map(|[t, re, im]| (*t, C64::new(*re, *im)))
            .unzip();
        ParamCurve::new(t, z, raw.closed).map_err(serde::de::Error::custom)
    }
}

/// Principal argument of `b / a`, in `(-π, π]`.
fn arg_step(a: C64, b: C64) -> f64 {
    (b * a.conj()).arg()
}

/// Index of `curve` about `p` in turns.
pub fn winding_number(curve: &ParamCurve, p: C64) -> Result<IndexValue, CurveError> {
    if !p.is_finite() {
        return Err(CurveError::NonFiniteInput);
    }
    let z = curve.points();
    let mut total = 0.0;
    for (k, w) in z.windows(2).enumerate() {
        if point_segment_distance(p, w[0], w[1]).0 < HIT_TOL {
            return Err(CurveError::CurveHitsPoint { segment: k });
        }
        total += arg_step(w[0] - p, w[1] - p);
    }
    Ok(IndexValue::from_turns(total / TAU))
}

/// Index about 0 of the subtraction curve `σ(t) − γ(t)`.
///
/// Both curves are rescaled to the parameter interval `[0, 1]` and
/// resampled on the union of their parameter grids; on that grid the
/// difference of the two piecewise-linear curves is again piecewise linear,
/// so its index is exact.
pub fn subtraction_index(gamma: &ParamCurve, sigma: &ParamCurve) -> Result<IndexValue, CurveError> {
    let g = gamma.normalized();
    let s = sigma.normalized();
    let mut grid: Vec<f64> = g.params().iter().chain(s.params()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let diff: Vec<C64> = grid.iter().map(|&t| s.at(t) - g.at(t)).collect();
    for (k, d) in diff.iter().enumerate() {
        if d.norm() < HIT_TOL {
            return Err(CurveError::CurvesCollide { t: grid[k] });
        }
    }
    let mut total = 0.0;
    for k in 0..diff.len() - 1 {
        let (dist, w) = point_segment_distance(C64::new(0.0, 0.0), diff[k], diff[k + 1]);
        if dist < HIT_TOL {
            return Err(CurveError::CurvesCollide {
                t: grid[k] + w * (grid[k + 1] - grid[k]),
            });
        }
        total += arg_step(diff[k], diff[k + 1]);
    }
    Ok(IndexValue::from_turns(total / TAU))
}

/// Inserts samples until consecutive integrand values differ in argument
/// by less than `max_step`. Original samples are kept; every accepted
/// segment is also checked at its midpoint so that a full turn hidden
/// between two samples is not mistaken for a small step.
pub fn refine_for_argument<F>(
    curve: &ParamCurve,
    integrand: F,
    max_step: f64,
) -> Result<ParamCurve, CurveError>
where
    F: Fn(C64) -> Result<C64, CurveError>,
{
    let with_rate = |z: C64| integrand(z).map(|g| (g, None));
    refine_with_values(curve, &with_rate, max_step).map(|(c, _)| c)
}

/// Integrand value and, when the derivative is known, the local rate of
/// argument change `|g'/g|`.
fn eval_nonzero<F>(integrand: &F, t: f64, z: C64) -> Result<(C64, f64), CurveError>
where
    F: Fn(C64) -> Result<(C64, Option<C64>), CurveError>,
{
    let (g, dg) = integrand(z)?;
    if !g.is_finite() {
        return Err(CurveError::NonFiniteInput);
    }
    if g.norm() == 0.0 {
        return Err(CurveError::ZeroIntegrand { t });
    }
    let rate = dg.map_or(0.0, |d| (d / g).norm());
    Ok((g, if rate.is_finite() { rate } else { f64::INFINITY }))
}

/// With derivatives available, a segment is also split while the
/// linearized argument change `|g'/g|·|Δz|` at its ends or midpoint
/// reaches `max_step`, which keeps fast rotation from aliasing.
fn refine_with_values<F>(
    curve: &ParamCurve,
    integrand: &F,
    max_step: f64,
) -> Result<(ParamCurve, Vec<C64>), CurveError>
where
    F: Fn(C64) -> Result<(C64, Option<C64>), CurveError>,
{
    if !(max_step > 0.0 && max_step < PI) {
        return Err(CurveError::InvalidArgument(format!(
            "max_step {max_step} outside (0, π)"
        )));
    }
    let t = curve.params();
    let z = curve.points();
    let mut vals = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        vals.push(eval_nonzero(integrand, t[k], z[k])?);
    }
    let mut out_t = vec![t[0]];
    let mut out_z = vec![z[0]];
    let mut out_g = vec![vals[0].0];
    let budget = MAX_REFINED_SAMPLES;
    for k in 0..z.len() - 1 {
        let mut cur = (t[k], z[k], vals[k]);
        let mut stack = vec![(t[k + 1], z[k + 1], vals[k + 1])];
        while let Some(&(tb, zb, (gb, rb))) = stack.last() {
            if out_t.len() + stack.len() > budget {
                return Err(CurveError::RefinementBudgetExceeded { budget });
            }
            let tm = 0.5 * (cur.0 + tb);
            let zm = (cur.1 + zb) * 0.5;
            let (gm, rm) = eval_nonzero(integrand, tm, zm)?;
            let whole = arg_step(cur.2 .0, gb);
            let left = arg_step(cur.2 .0, gm);
            let right = arg_step(gm, gb);
            let h = (zb - cur.1).norm();
            let fine = cur.2 .1.max(rm).max(rb) * h < max_step
                && whole.abs() < max_step
                && left.abs() < max_step
                && right.abs() < max_step
                && (left + right - whole).abs() < 1e-9;
            if fine {
                if tm > cur.0 && tm < tb {
                    out_t.push(tm);
                    out_z.push(zm);
                    out_g.push(gm);
                }
                out_t.push(tb);
                out_z.push(zb);
                out_g.push(gb);
                cur = (tb, zb, (gb, rb));
                stack.pop();
            } else {
                if (zb - cur.1).norm() < MIN_SEGMENT || !(tm > cur.0 && tm < tb) {
                    return Err(CurveError::ZeroIntegrand { t: tm });
                }
                stack.push((tm, zm, (gm, rm)));
            }
        }
    }
    let refined = ParamCurve::new(out_t, out_z, curve.is_closed())?;
    Ok((refined, out_g))
}

/// What `argument_principle_count` counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Zeros of `f^p`.
    Zeros,
    /// Solutions of `f^p(z) = z`.
    FixedPoints,
}

/// Rejects closed polylines with intersecting non-adjacent segments.
pub fn check_simple(curve: &ParamCurve) -> Result<(), CurveError> {
    let mut pts: Vec<C64> = Vec::with_capacity(curve.len());
    for &p in curve.points() {
        if pts.last().is_none_or(|&q: &C64| q != p) {
            pts.push(p);
        }
    }
    let nseg = pts.len().saturating_sub(1);
    if nseg < 3 {
        return Ok(());
    }
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in &pts {
        lo = C64::new(lo.re.min(p.re), lo.im.min(p.im));
        hi = C64::new(hi.re.max(p.re), hi.im.max(p.im));
    }
    let span = (hi.re - lo.re).max(hi.im - lo.im).max(1e-300);
    let cells_per_side = ((nseg as f64).sqrt().ceil() as usize).clamp(1, 2048);
    let cell = span / cells_per_side as f64;
    let idx = |v: f64, o: f64| (((v - o) / cell).floor().max(0.0) as usize).min(cells_per_side - 1);
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for s in 0..nseg {
        let (a, b) = (pts[s], pts[s + 1]);
        let (i0, i1) = (idx(a.re.min(b.re), lo.re), idx(a.re.max(b.re), lo.re));
        let (j0, j1) = (idx(a.im.min(b.im), lo.im), idx(a.im.max(b.im), lo.im));
        for i in i0..=i1 {
            for j in j0..=j1 {
                buckets.entry((i, j)).or_default().push(s);
            }
        }
    }
    let closed = curve.is_closed();
    let adjacent = |a: usize, b: usize| {
        b == a + 1 || (closed && a == 0 && b == nseg - 1)
    };
    let mut keys: Vec<_> = buckets.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let segs = &buckets[&key];
        for x in 0..segs.len() {
            for y in x + 1..segs.len() {
                let (a, b) = (segs[x].min(segs[y]), segs[x].max(segs[y]));
                if a == b || adjacent(a, b) {
                    continue;
                }
                if segments_intersect(pts[a], pts[a + 1], pts[b], pts[b + 1]) {
                    return Err(CurveError::NotSimple(a, b));
                }
            }
        }
    }
    Ok(())
}

/// Number of zeros of `f^p` (or of `f^p(z) − z`) enclosed by a simple
/// closed contour, counted with multiplicity. A clockwise contour is
/// traversed in reverse.
pub fn argument_principle_count<M: HolomorphicMap + ?Sized>(
    map: &M,
    contour: &ParamCurve,
    mode: CountMode,
    period: u32,
) -> Result<i64, CurveError> {
    if !contour.is_closed() {
        return Err(CurveError::NotClosed);
    }
    if period == 0 {
        return Err(CurveError::InvalidArgument("period must be positive".into()));
    }
    check_simple(contour)?;
    let pts = contour.points();
    let oriented = if signed_area2(&pts[..pts.len() - 1]) < 0.0 {
        contour.reversed()
    } else {
        contour.clone()
    };
    let integrand = |z: C64| -> Result<(C64, Option<C64>), CurveError> {
        let (v, d) = map.iterate(z, period)?;
        Ok(match mode {
            CountMode::Zeros => (v, Some(d)),
            CountMode::FixedPoints => (v - z, Some(d - 1.0)),
        })
    };
    let (refined, vals) = match refine_with_values(&oriented, &integrand, PI / 4.0) {
        Ok(r) => r,
        Err(CurveError::ZeroIntegrand { t }) => {
            return Err(CurveError::ZeroOnContour { z: oriented.at(t) })
        }
        Err(e) => return Err(e),
    };
    debug_assert_eq!(refined.len(), vals.len());
    let total: f64 = vals.windows(2).map(|w| arg_step(w[0], w[1])).sum();
    let turns = total / TAU;
    let n = turns.round();
    if (turns - n).abs() > SNAP_TOL {
        return Err(CurveError::InvalidArgument(format!(
            "argument total {turns} is not an integer number of turns"
        )));
    }
    Ok(n as i64)
}

/// Local multiplicity of a solution of `f^p(z) = z` at `z0`, from the
/// fixed-point count on circles of radius `radius` and `radius / 2`.
pub fn multiplicity_at<M: HolomorphicMap + ?Sized>(
    map: &M,
    z0: C64,
    radius: f64,
    period: u32,
) -> Result<i64, CurveError> {
    let outer = argument_principle_count(
        map,
        &ParamCurve::circle(z0, radius, 64, 1),
        CountMode::FixedPoints,
        period,
    )?;
    let inner = argument_principle_count(
        map,
        &ParamCurve::circle(z0, 0.5 * radius, 64, 1),
        CountMode::FixedPoints,
        period,
    )?;
    if outer != inner {
        return Err(CurveError::InconsistentRadius { outer, inner });
    }
    Ok(outer)
}
