//! Small planar geometry helpers shared by the curve, structure and
//! separation modules.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// Square of half-width `h` about the origin.
    pub fn centered(h: f64) -> Self {
        Rect::new(-h, h, -h, h)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite())
            && self.x1 > self.x0
            && self.y1 > self.y0
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.x0 && z.re <= self.x1 && z.im >= self.y0 && z.im <= self.y1
    }

    /// Distance from an interior point to the rectangle boundary
    /// (negative outside).
    pub fn inset_distance(&self, z: C64) -> f64 {
        (z.re - self.x0)
            .min(self.x1 - z.re)
            .min(z.im - self.y0)
            .min(self.y1 - z.im)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.min(other.x0),
            self.x1.max(other.x1),
            self.y0.min(other.y0),
            self.y1.max(other.y1),
        )
    }

    pub fn expand(&self, m: f64) -> Rect {
        Rect::new(self.x0 - m, self.x1 + m, self.y0 - m, self.y1 + m)
    }

    pub fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.x0, self.y0),
            C64::new(self.x1, self.y0),
            C64::new(self.x1, self.y1),
            C64::new(self.x0, self.y1),
        ]
    }

    /// Counterclockwise boundary polygon with `per_side` samples per edge.
    pub fn boundary_points(&self, per_side: usize) -> Vec<C64> {
        let n = per_side.max(1);
        let c = self.corners();
        let mut pts = Vec::with_capacity(4 * n + 1);
        for k in 0..4 {
            let (p, q) = (c[k], c[(k + 1) % 4]);
            for i in 0..n {
                pts.push(p + (q - p) * (i as f64 / n as f64));
            }
        }
        pts.push(c[0]);
        pts
    }

    /// Parses `x0,x1,y0,y1`.
    pub fn parse(s: &str) -> Option<Rect> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .ok()?;
        if v.len() != 4 {
            return None;
        }
        let r = Rect::new(v[0], v[1], v[2], v[3]);
        r.is_valid().then_some(r)
    }
}

/// Euclidean distance from `p` to the segment `[a, b]`, together with the
/// segment parameter in `[0, 1]` of the nearest point.
pub fn point_segment_distance(p: C64, a: C64, b: C64) -> (f64, f64) {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return ((p - a).norm(), 0.0);
    }
    let s = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    ((p - (a + d * s)).norm(), s)
}

/// Distance from `p` to a polyline.
pub fn point_polyline_distance(p: C64, pts: &[C64]) -> f64 {
    match pts.len() {
        0 => f64::INFINITY,
        1 => (p - pts[0]).norm(),
        _ => pts
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]).0)
            .fold(f64::INFINITY, f64::min),
    }
}

fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Whether the closed segments `[p1, p2]` and `[q1, q2]` share a point.
pub fn segments_intersect(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: C64, b: C64, c: C64| {
        c.re >= a.re.min(b.re)
            && c.re <= a.re.max(b.re)
            && c.im >= a.im.min(b.im)
            && c.im <= a.im.max(b.im)
    };
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// Twice the signed area enclosed by a closed polygon (positive when
/// counterclockwise).
pub fn signed_area2(pts: &[C64]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| cross(pts[i], pts[(i + 1) % n]))
        .sum::<f64>()
}

/// Serde helper storing a complex number as `[re, im]`.
pub mod cserde {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }

    /// Same layout for vectors of complex numbers.
    pub mod vec {
        use num_complex::Complex64 as C64;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|z| [z.re, z.im])
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
            let raw = Vec::<[f64; 2]>::deserialize(d)?;
            Ok(raw.into_iter().map(|[re, im]| C64::new(re, im)).collect())
        }
    }

    /// Same layout for optional complex numbers.
    pub mod opt {
        use num_complex::Complex64 as C64;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(|z| [z.re, z.im]).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<C64>, D::Error> {
            Ok(Option::<[f64; 2]>::deserialize(d)?.map(|[re, im]| C64::new(re, im)))
        }
    }
}
