//! The supported map family: finite compositions `g1 ∘ g2 ∘ … ∘ gk` of
//! exponential-affine factors `g(z) = a·e^z + b`, together with the
//! labeled inverse branches used for pullback.
//!
//! Inverse branches of the outermost factor are taken on the slit domain
//! `ℂ ∖ (D̄ ∪ δ)`, where `D` is a round disk about the origin and `δ` a
//! straight cut from `∂D` to infinity. Inner factors use the principal cut
//! from their asymptotic value `b` in the direction of `−a`, so that a
//! positive real factor has its cut along `(−∞, b]`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::curves::ParamCurve;
use crate::geom::{cserde, point_segment_distance};

/// Moduli above this are reported as overflow.
pub const OVERFLOW_GUARD: f64 = 1e300;
/// Points closer than this to `δ` or `D̄` have no well-defined branch.
pub const CUT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("orbit overflowed at iterate {iterate}")]
    Overflow { iterate: u32 },
    #[error("point lies on the cut or in the closed disk")]
    OnCut,
    #[error("branch band is ambiguous at tolerance")]
    BranchResolutionFailure,
    #[error("period must be positive")]
    ZeroPeriod,
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("map parse error: {0}")]
    Parse(String),
}

/// An entire map that can be evaluated together with its derivative.
pub trait HolomorphicMap {
    /// `(f(z), f'(z))`.
    fn eval(&self, z: C64) -> Result<(C64, C64), MapError>;

    /// `(f^p(z), (f^p)'(z))` by the chain rule.
    fn iterate(&self, z: C64, period: u32) -> Result<(C64, C64), MapError> {
        if period == 0 {
            return Err(MapError::ZeroPeriod);
        }
        let mut v = z;
        let mut d = C64::new(1.0, 0.0);
        for k in 1..=period {
            let (nv, nd) = self.eval(v)?;
            d *= nd;
            v = nv;
            if !v.is_finite() || !d.is_finite() || v.norm() > OVERFLOW_GUARD || d.norm() > OVERFLOW_GUARD {
                return Err(MapError::Overflow { iterate: k });
            }
        }
        Ok((v, d))
    }
}

/// `z ↦ a·e^z + b` with `a ≠ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpAffine {
    #[serde(with = "cserde")]
    pub a: C64,
    #[serde(with = "cserde")]
    pub b: C64,
}

impl ExpAffine {
    pub fn new(a: C64, b: C64) -> Self {
        ExpAffine { a, b }
    }

    pub fn apply(&self, z: C64) -> (C64, C64) {
        let e = self.a * z.exp();
        (e + self.b, e)
    }

    /// Argument of the cut direction seen in logarithmic coordinates,
    /// normalized to `(0, 2π]`. Band `j` of this factor is the horizontal
    /// strip `φ − 2π + 2πj < Im z < φ + 2πj`.
    pub fn cut_phase(&self, dir: f64) -> f64 {
        let mut phi = (dir - self.a.arg()).rem_euclid(TAU);
        if phi <= 0.0 {
            phi += TAU;
        }
        phi
    }

    /// The strip `(lo, hi)` of imaginary parts belonging to band `j`.
    pub fn band_interval(&self, dir: f64, j: i64) -> (f64, f64) {
        let phi = self.cut_phase(dir);
        (phi - TAU + TAU * j as f64, phi + TAU * j as f64)
    }

    /// The band containing imaginary part `y` (upper edge exclusive).
    pub fn band_of(&self, dir: f64, y: f64) -> i64 {
        let phi = self.cut_phase(dir);
        ((y - phi) / TAU).floor() as i64 + 1
    }

    /// Logarithmic branch `z` with `a·e^z + b = w`, in band `j` relative to
    /// the cut starting at `start` in direction `dir`. With `edge` set, `w`
    /// is taken to lie on the cut and the limit from that side is returned.
    /// The flag reports whether `w` is within tolerance of the cut line.
    fn log_branch(
        &self,
        w: C64,
        start: C64,
        dir: f64,
        j: i64,
        edge: Option<Edge>,
    ) -> Result<(C64, bool), MapError> {
        let zeta = (w - self.b) / self.a;
        if zeta.norm() == 0.0 || !zeta.is_finite() {
            return Err(MapError::OnCut);
        }
        let phi = self.cut_phase(dir);
        let rot = C64::from_polar(1.0, -phi);
        let eta = zeta * rot;
        let cp = (start - self.b) / self.a * rot;
        let h = cp.im;
        let mut theta = eta.im.atan2(eta.re);
        if theta < 0.0 {
            theta += TAU;
        }
        let scale = 1.0 + eta.norm();
        let near_cut = (eta.im - h).abs() <= CUT_TOL * scale && eta.re >= cp.re - CUT_TOL * scale;
        match edge {
            Some(e) => {
                let lower = if h < 0.0 { theta - TAU } else { theta };
                // Points on the cut right at the positive axis read theta ≈ 2π.
                let lower = if h >= 0.0 && lower > PI { lower - TAU } else { lower };
                theta = match e {
                    Edge::Lower => lower,
                    Edge::Upper => lower + TAU,
                };
            }
            None => {
                let right_of = |y: f64| {
                    if h == 0.0 {
                        true
                    } else {
                        eta.re > cp.re * y / h
                    }
                };
                if h > 0.0 && eta.im > 0.0 && eta.im < h && right_of(eta.im) {
                    theta += TAU;
                } else if h < 0.0 && eta.im < 0.0 && eta.im > h && right_of(eta.im) {
                    theta -= TAU;
                }
            }
        }
        let im = theta + phi - TAU + TAU * j as f64;
        Ok((C64::new(zeta.norm().ln(), im), near_cut))
    }
}

/// Which side of the cut a boundary point is approached from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    /// Lower edge of the band in logarithmic coordinates.
    Lower,
    /// Upper edge of the band.
    Upper,
}

/// A straight cut `{start + s·e^{i·dir} : s ≥ 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRay {
    #[serde(with = "cserde")]
    pub start: C64,
    pub dir: f64,
}

impl CutRay {
    /// Radial cut leaving the circle of the given radius about 0 at angle
    /// `theta`.
    pub fn radial(radius: f64, theta: f64) -> Self {
        CutRay {
            start: C64::from_polar(radius, theta),
            dir: theta,
        }
    }

    pub fn direction(&self) -> C64 {
        C64::from_polar(1.0, self.dir)
    }

    /// Radius of the disk about 0 the cut starts on.
    pub fn disk_radius(&self) -> f64 {
        self.start.norm()
    }

    pub fn point_at(&self, s: f64) -> C64 {
        self.start + self.direction() * s
    }

    /// Distance from `w` to the cut.
    pub fn distance(&self, w: C64) -> f64 {
        let d = self.direction();
        let s = ((w - self.start) * d.conj()).re;
        if s <= 0.0 {
            (w - self.start).norm()
        } else {
            ((w - self.start) * d.conj()).im.abs()
        }
    }

    /// The portion from `start` out to modulus `far`, as a two-point curve.
    pub fn to_curve(&self, far: f64) -> ParamCurve {
        let len = (far - self.disk_radius()).max(1.0);
        ParamCurve::new(vec![0.0, len], vec![self.start, self.point_at(len)], false)
            .expect("cut endpoints are distinct")
    }

    /// Reads a straight cut back from a curve: the first sample is the
    /// start, the last fixes the direction.
    pub fn from_curve(curve: &ParamCurve) -> Result<Self, MapError> {
        let (p, q) = (curve.start(), curve.end());
        if (q - p).norm() == 0.0 {
            return Err(MapError::Invalid("degenerate cut".into()));
        }
        for w in curve.points() {
            if point_segment_distance(*w, p, q).0 > 1e-9 * (1.0 + q.norm()) {
                return Err(MapError::Invalid("cut must be a straight ray".into()));
            }
        }
        Ok(CutRay {
            start: p,
            dir: (q - p).arg(),
        })
    }
}

/// Label of a fundamental domain: tract `alpha`, band `j` of the outermost
/// factor, and for compositions the principal bands of the inner factors
/// (missing entries count as band 0).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchLabel {
    pub alpha: i64,
    pub j: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner: Vec<i64>,
}

impl BranchLabel {
    pub fn new(alpha: i64, j: i64) -> Self {
        BranchLabel {
            alpha,
            j,
            inner: Vec::new(),
        }
    }

    /// Band `j` of the single tract.
    pub fn band(j: i64) -> Self {
        BranchLabel::new(0, j)
    }

    pub fn inner_band(&self, k: usize) -> i64 {
        self.inner.get(k).copied().unwrap_or(0)
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.alpha != 0 || !self.inner.is_empty() {
            write!(f, "{}:", self.alpha)?;
        }
        write!(f, "{}", self.j)?;
        for k in &self.inner {
            write!(f, "/{k}")?;
        }
        Ok(())
    }
}

impl FromStr for BranchLabel {
    type Err = MapError;

    /// `j`, `alpha:j`, or `alpha:j/i1/i2…`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MapError::Parse(format!("bad branch label {s:?}"));
        let s = s.trim();
        let (alpha, rest) = match s.split_once(':') {
            Some((a, r)) => (a.trim().parse().map_err(|_| bad())?, r),
            None => (0, s),
        };
        let mut parts = rest.split('/');
        let j = parts
            .next()
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let inner = parts
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        Ok(BranchLabel { alpha, j, inner })
    }
}

/// Composition `g1 ∘ … ∘ gk` listed outermost first.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSpec {
    factors: Vec<ExpAffine>,
    period_hint: u32,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    factors: Vec<ExpAffine>,
    #[serde(default = "one")]
    period_hint: u32,
}

fn one() -> u32 {
    1
}

impl Serialize for MapSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawSpec {
            factors: self.factors.clone(),
            period_hint: self.period_hint,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MapSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        MapSpec::new(raw.factors, raw.period_hint).map_err(serde::de::Error::custom)
    }
}

impl MapSpec {
    pub fn new(factors: Vec<ExpAffine>, period_hint: u32) -> Result<Self, MapError> {
        if factors.is_empty() {
            return Err(MapError::Invalid("at least one factor is required".into()));
        }
        for f in &factors {
            if !f.a.is_finite() || !f.b.is_finite() {
                return Err(MapError::Invalid("non-finite coefficient".into()));
            }
            if f.a.norm() == 0.0 {
                return Err(MapError::Invalid("factor with a = 0".into()));
            }
        }
        if period_hint == 0 {
            return Err(MapError::ZeroPeriod);
        }
        Ok(MapSpec {
            factors,
            period_hint,
        })
    }

    /// The single factor `a·e^z + b`.
    ///
    /// # Panics
    /// If `a` is zero or either coefficient is not finite.
    pub fn exp_affine(a: C64, b: C64) -> Self {
        MapSpec::new(vec![ExpAffine::new(a, b)], 1).expect("valid exp-affine factor")
    }

    pub fn factors(&self) -> &[ExpAffine] {
        &self.factors
    }

    pub fn outer(&self) -> &ExpAffine {
        &self.factors[0]
    }

    pub fn is_single(&self) -> bool {
        self.factors.len() == 1
    }

    pub fn period_hint(&self) -> u32 {
        self.period_hint
    }

    pub fn with_period_hint(mut self, p: u32) -> Self {
        self.period_hint = p.max(1);
        self
    }

    /// Parses the shorthand `exp(A)` / `exp(A,B)` (composition with `∘` or
    /// `o`), or the JSON form.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let text = text.trim();
        if text.starts_with('{') {
            return serde_json::from_str(text).map_err(|e| MapError::Parse(e.to_string()));
        }
        let mut pieces = Vec::new();
        let mut depth = 0i32;
        let mut cur = String::new();
        for ch in text.chars() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
            if depth == 0 && (ch == '∘' || ch == 'o') {
                pieces.push(std::mem::take(&mut cur));
            } else {
                cur.push(ch);
            }
        }
        pieces.push(cur);
        let factors = pieces
            .iter()
            .map(|p| parse_factor(p.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        MapSpec::new(factors, 1)
    }

    /// Canonical shorthand; `MapSpec::parse` inverts it exactly.
    pub fn to_shorthand(&self) -> String {
        self.factors
            .iter()
            .map(|f| {
                if f.b == C64::new(0.0, 0.0) {
                    format!("exp({})", format_complex(f.a))
                } else {
                    format!("exp({},{})", format_complex(f.a), format_complex(f.b))
                }
            })
            .collect::<Vec<_>>()
            .join(" o ")
    }

    /// Finite singular set: each factor's asymptotic value pushed through
    /// the factors outside it.
    pub fn singular_values(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for i in 0..self.factors.len() {
            let mut v = self.factors[i].b;
            for f in self.factors[..i].iter().rev() {
                v = f.apply(v).0;
            }
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    /// Inverse branch without the on-cut checks. `edge` selects the side
    /// for points lying on `δ`.
    pub fn pull(
        &self,
        w: C64,
        label: &BranchLabel,
        cut: &CutRay,
        edge: Option<Edge>,
    ) -> Result<C64, MapError> {
        self.pull_checked(w, label, cut, edge).map(|(z, _)| z)
    }

    fn pull_checked(
        &self,
        w: C64,
        label: &BranchLabel,
        cut: &CutRay,
        edge: Option<Edge>,
    ) -> Result<(C64, bool), MapError> {
        let (mut z, _) = self.factors[0].log_branch(w, cut.start, cut.dir, label.j, edge)?;
        let mut ambiguous = false;
        for (k, f) in self.factors[1..].iter().enumerate() {
            let dir = (-f.a).arg();
            let (nz, near) = f.log_branch(z, f.b, dir, label.inner_band(k), None)?;
            ambiguous |= near;
            z = nz;
        }
        Ok((z, ambiguous))
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_shorthand())
    }
}

impl HolomorphicMap for MapSpec {
    fn eval(&self, z: C64) -> Result<(C64, C64), MapError> {
        let mut v = z;
        let mut d = C64::new(1.0, 0.0);
        for f in self.factors.iter().rev() {
            let (nv, nd) = f.apply(v);
            d *= nd;
            v = nv;
        }
        Ok((v, d))
    }
}

/// Polynomial with ascending coefficients, used for synthetic test maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    #[serde(with = "cserde::vec")]
    coeffs: Vec<C64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Polynomial { coeffs }
    }

    /// Real coefficients, ascending.
    pub fn real(coeffs: &[f64]) -> Self {
        Polynomial::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    /// `∏ (z − r)` for the given roots.
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut c = vec![C64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (k, &ck) in c.iter().enumerate() {
                next[k + 1] += ck;
                next[k] -= ck * r;
            }
            c = next;
        }
        Polynomial::new(c)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }
}

impl HolomorphicMap for Polynomial {
    fn eval(&self, z: C64) -> Result<(C64, C64), MapError> {
        let mut v = C64::new(0.0, 0.0);
        let mut d = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        Ok((v, d))
    }
}

/// `(f^p(z), (f^p)'(z))`.
pub fn evaluate<M: HolomorphicMap + ?Sized>(
    map: &M,
    z: C64,
    period: u32,
) -> Result<(C64, C64), MapError> {
    if !z.is_finite() {
        return Err(MapError::Invalid("non-finite argument".into()));
    }
    map.iterate(z, period)
}

pub fn singular_values(spec: &MapSpec) -> Vec<C64> {
    spec.singular_values()
}

/// The unique preimage of `w` in the fundamental domain `label`, relative
/// to the cut `cut` leaving the disk `|z| ≤ |cut.start|`.
pub fn inverse_branch(
    spec: &MapSpec,
    w: C64,
    label: &BranchLabel,
    cut: &CutRay,
) -> Result<C64, MapError> {
    if !w.is_finite() {
        return Err(MapError::Invalid("non-finite argument".into()));
    }
    if w.norm() <= cut.disk_radius() + CUT_TOL || cut.distance(w) <= CUT_TOL {
        return Err(MapError::OnCut);
    }
    let (z, ambiguous) = spec.pull_checked(w, label, cut, None)?;
    if ambiguous {
        return Err(MapError::BranchResolutionFailure);
    }
    Ok(z)
}

fn parse_factor(s: &str) -> Result<ExpAffine, MapError> {
    let inner = s
        .strip_prefix("exp(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| MapError::Parse(format!("expected exp(A) or exp(A,B), got {s:?}")))?;
    let mut args = inner.split(',');
    let a = parse_complex(args.next().unwrap_or(""))?;
    let b = match args.next() {
        Some(t) => parse_complex(t)?,
        None => C64::new(0.0, 0.0),
    };
    if args.next().is_some() {
        return Err(MapError::Parse(format!("too many arguments in {s:?}")));
    }
    Ok(ExpAffine::new(a, b))
}

fn parse_real(s: &str) -> Result<f64, MapError> {
    let s = s.trim();
    let (sign, body) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r.trim()),
        None => (1.0, s.strip_prefix('+').unwrap_or(s).trim()),
    };
    let v = match body {
        "e" => std::f64::consts::E,
        "1/e" => (-1.0f64).exp(),
        "pi" => PI,
        "" => 1.0,
        _ => body
            .parse::<f64>()
            .map_err(|_| MapError::Parse(format!("bad number {s:?}")))?,
    };
    Ok(sign * v)
}

/// Parses `x`, `yi`, `x+yi`, `x-yi`; real parts may be `e`, `1/e`, `pi`.
pub fn parse_complex(s: &str) -> Result<C64, MapError> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(MapError::Parse("empty number".into()));
    }
    let bytes = s.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        if bytes[k] == b'+' || bytes[k] == b'-' {
            let prev = bytes[k - 1];
            let exponent = (prev == b'e' || prev == b'E')
                && k >= 2
                && (bytes[k - 2].is_ascii_digit() || bytes[k - 2] == b'.');
            if !exponent {
                split = Some(k);
                break;
            }
        }
    }
    let imag = |t: &str| -> Result<f64, MapError> {
        let body = t
            .strip_suffix('i')
            .ok_or_else(|| MapError::Parse(format!("bad imaginary part {t:?}")))?;
        parse_real(body)
    };
    let z = match split {
        Some(k) if s.ends_with('i') => C64::new(parse_real(&s[..k])?, imag(&s[k..])?),
        _ if s.ends_with('i') => C64::new(0.0, imag(&s)?),
        _ => C64::new(parse_real(&s)?, 0.0),
    };
    if !z.is_finite() {
        return Err(MapError::Parse(format!("non-finite number {s:?}")));
    }
    Ok(z)
}

/// Round-trippable text form of a complex number.
pub fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn exp03() -> MapSpec {
        MapSpec::exp_affine(c(0.3, 0.0), c(0.0, 0.0))
    }

    fn neg_axis_cut() -> CutRay {
        CutRay::radial(1.0, PI)
    }

    #[test]
    fn evaluation_examples() {
        let (v, d) = evaluate(&exp03(), c(0.0, 0.0), 1).unwrap();
        assert!((v - 0.3).norm() < 1e-15 && (d - 0.3).norm() < 1e-15);
        let f = MapSpec::parse("exp(1/e)").unwrap();
        let (v, d) = evaluate(&f, c(1.0, 0.0), 1).unwrap();
        assert!((v - 1.0).norm() < 1e-15 && (d - 1.0).norm() < 1e-15);
        let x = bisect(|x| 0.3 * x.exp() - x, 0.0, 1.0);
        let (v, d) = evaluate(&exp03(), c(x, 0.0), 1).unwrap();
        assert!((v - x).norm() < 1e-12);
        assert!((d.re - x).abs() < 1e-12 && (x - 0.489).abs() < 1e-3);
    }

    #[test]
    fn overflow_is_reported() {
        assert_eq!(
            evaluate(&exp03(), c(5.0, 0.0), 5),
            Err(MapError::Overflow { iterate: 3 })
        );
        assert_eq!(evaluate(&exp03(), c(0.0, 0.0), 0), Err(MapError::ZeroPeriod));
    }

    #[test]
    fn singular_value_examples() {
        assert_eq!(exp03().singular_values(), vec![c(0.0, 0.0)]);
        let f = MapSpec::parse("exp(1,1) o exp(1)").unwrap();
        let s = f.singular_values();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 1.0).norm() < 1e-15 && (s[1] - 2.0).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = c(rng.gen_range(0.1..3.0), rng.gen_range(-3.0..3.0));
            let b = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            assert_eq!(MapSpec::exp_affine(a, b).singular_values(), vec![b]);
        }
    }

    #[test]
    fn inverse_branch_examples() {
        let f = exp03();
        let cut = neg_axis_cut();
        let z0 = inverse_branch(&f, c(3.0, 0.0), &BranchLabel::band(0), &cut).unwrap();
        assert!((z0 - c(10f64.ln(), 0.0)).norm() < 1e-14);
        let z1 = inverse_branch(&f, c(3.0, 0.0), &BranchLabel::band(1), &cut).unwrap();
        assert!((z1 - c(10f64.ln(), TAU)).norm() < 1e-14);

        let oracle = bisect(|x| 0.3 * x.exp() - x, 1.0, 2.0);
        let mut z = c(3.0, 0.0);
        for _ in 0..200 {
            z = inverse_branch(&f, z, &BranchLabel::band(0), &cut).unwrap();
        }
        assert!((z - oracle).norm() < 1e-12);
        assert!((oracle - 1.7813).abs() < 1e-4);
    }

    #[test]
    fn on_cut_is_rejected() {
        let f = exp03();
        let cut = neg_axis_cut();
        for w in [c(-3.0, 0.0), c(0.5, 0.0), c(-1.0, 0.0)] {
            assert_eq!(
                inverse_branch(&f, w, &BranchLabel::band(0), &cut),
                Err(MapError::OnCut)
            );
        }
    }

    #[test]
    fn edges_bound_the_band() {
        let f = exp03();
        let cut = neg_axis_cut();
        let w = c(-4.0, 0.0);
        let lo = f.pull(w, &BranchLabel::band(0), &cut, Some(Edge::Lower)).unwrap();
        let hi = f.pull(w, &BranchLabel::band(0), &cut, Some(Edge::Upper)).unwrap();
        assert!((lo.im + PI).abs() < 1e-14 && (hi.im - PI).abs() < 1e-14);
        let above = f.pull(c(-4.0, 1e-9), &BranchLabel::band(0), &cut, None).unwrap();
        let below = f.pull(c(-4.0, -1e-9), &BranchLabel::band(0), &cut, None).unwrap();
        assert!((above - hi).norm() < 1e-8 && (below - lo).norm() < 1e-8);
    }

    #[test]
    fn tilted_cut_bands_are_continuous_off_the_cut() {
        // Cut leaving the unit disk at angle 2, factor with complex a.
        let f = MapSpec::exp_affine(c(0.2, 0.25), c(0.1, -0.2));
        let cut = CutRay::radial(1.0, 2.0);
        let label = BranchLabel::band(0);
        let n = 2000;
        let mut prev: Option<C64> = None;
        let mut jumps = 0;
        for k in 0..=n {
            let w = C64::from_polar(3.0, 2.0 + 1e-3 + (TAU - 2e-3) * k as f64 / n as f64);
            let z = inverse_branch(&f, w, &label, &cut).unwrap();
            if let Some(p) = prev {
                if (z - p).norm() > 0.1 {
                    jumps += 1;
                }
            }
            prev = Some(z);
        }
        assert_eq!(jumps, 0);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let maps = [
            exp03(),
            MapSpec::exp_affine(c(-5.0, 0.0), c(0.0, 0.0)),
            MapSpec::parse("exp(0.5+0.2i,0.1) o exp(0.3,-0.2i)").unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in &maps {
            for _ in 0..1000 {
                let z = c(rng.gen_range(-3.0..1.5), rng.gen_range(-4.0..4.0));
                let h = 1e-6;
                let (_, d) = evaluate(f, z, 1).unwrap();
                let fp = evaluate(f, z + h, 1).unwrap().0;
                let fm = evaluate(f, z - h, 1).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - d).norm() <= 1e-5 * d.norm().max(1e-3), "{z} {fd} {d}");
            }
        }
    }

    #[test]
    fn distinct_labels_give_distinct_preimages() {
        let f = exp03();
        let cut = neg_axis_cut();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = C64::from_polar(rng.gen_range(1.5..30.0), rng.gen_range(-3.1..3.1));
            let zs: Vec<C64> = (-3..=3)
                .map(|j| inverse_branch(&f, w, &BranchLabel::band(j), &cut).unwrap())
                .collect();
            for a in 0..zs.len() {
                for b in a + 1..zs.len() {
                    assert!((zs[a] - zs[b]).norm() > 1e-6);
                }
            }
        }
    }

    #[test]
    fn shorthand_and_json_round_trip() {
        for text in ["exp(0.3)", "exp(1/e)", "exp(-5)", "exp(1,1) o exp(1)", "exp(0.5-2i,3i)∘exp(2e-3+1i)"] {
            let f = MapSpec::parse(text).unwrap();
            assert_eq!(MapSpec::parse(&f.to_shorthand()).unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(MapSpec::parse(&json).unwrap(), f);
        }
        let f = MapSpec::parse("exp(0.3)").unwrap();
        assert_eq!(
            serde_json::to_string(&f).unwrap(),
            r#"{"factors":[{"a":[0.3,0.0],"b":[0.0,0.0]}],"period_hint":1}"#
        );
        assert!(MapSpec::parse("exp(0)").is_err());
        assert!(MapSpec::parse("sin(1)").is_err());
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1e-3-2i").unwrap(), c(1e-3, -2.0));
    }

    #[test]
    fn label_text_round_trip() {
        for s in ["0", "-3", "2:5", "1:-1/0/2"] {
            let l: BranchLabel = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
    }

    #[test]
    fn polynomial_from_roots() {
        let p = Polynomial::from_roots(&[c(1.0, 0.0), c(0.0, 2.0)]);
        assert!(p.eval(c(1.0, 0.0)).unwrap().0.norm() < 1e-15);
        assert!(p.eval(c(0.0, 2.0)).unwrap().0.norm() < 1e-15);
        let (v, d) = Polynomial::real(&[0.0, 1.0, 1.0]).eval(c(2.0, 0.0)).unwrap();
        assert_eq!((v, d), (c(6.0, 0.0), c(5.0, 0.0)));
    }

    proptest! {
        #[test]
        fn round_trip_off_the_cut(
            r in 1.01f64..200.0,
            t in -3.1f64..3.1,
            j in -4i64..=4,
            ar in 0.05f64..4.0,
            ai in -2.0f64..2.0,
        ) {
            let f = MapSpec::exp_affine(c(ar, ai), c(0.0, 0.0));
            let cut = neg_axis_cut();
            let w = C64::from_polar(r, t);
            let z = inverse_branch(&f, w, &BranchLabel::band(j), &cut).unwrap();
            let back = evaluate(&f, z, 1).unwrap().0;
            prop_assert!((back - w).norm() <= 1e-9 * w.norm().max(1.0));
            let (lo, hi) = f.outer().band_interval(cut.dir, j);
            // Only the cut passes through the slit strip edges.
            prop_assert!(z.im > lo - PI && z.im < hi + PI);
        }

        #[test]
        fn composite_round_trip(r in 3.0f64..50.0, t in -3.0f64..3.0, j in -2i64..=2, i1 in -1i64..=1) {
            let f = MapSpec::parse("exp(0.5,0.2) o exp(0.7)").unwrap();
            let cut = CutRay::radial(2.0, PI);
            let w = C64::from_polar(r, t);
            let label = BranchLabel { alpha: 0, j, inner: vec![i1] };
            match inverse_branch(&f, w, &label, &cut) {
                Ok(z) => {
                    let back = evaluate(&f, z, 1).unwrap().0;
                    prop_assert!((back - w).norm() <= 1e-9 * w.norm());
                }
                Err(MapError::BranchResolutionFailure) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
