//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use fixray::curves::{
    argument_principle_count, multiplicity_at, subtraction_index, winding_number, CountMode, ParamCurve,
};
use fixray::fixed_points::{find_fixed_in_domain, Classification, FixedPointRecord};
use fixray::geom::{point_segment_distance, Rect};
use fixray::map::{BranchLabel, HolomorphicMap, MapSpec, Polynomial};
use fixray::rays::{default_schedule, default_t_grid, fixed_rays, Address, Ray, RayStatus};
use fixray::separation::{
    basic_regions, build_ray_graph, counting_contour, global_count_check, modify_boundary_near_fixed_point,
    region_of, separation_report, ReportOptions, Verdict,
};
use fixray::structure::structural_setup;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Signed crossings of the rightward horizontal ray from `p`.
fn crossing_winding(pts: &[C64], p: C64) -> i64 {
    let mut w = 0;
    for e in pts.windows(2) {
        let (a, b) = (e[0], e[1]);
        let side = (b.re - a.re) * (p.im - a.im) - (p.re - a.re) * (b.im - a.im);
        if a.im <= p.im && b.im > p.im && side > 0.0 {
            w += 1;
        } else if b.im <= p.im && a.im > p.im && side < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Root of `0.3·e^x = x` in `(lo, hi)` by bisection.
fn bisect_exp03(mut lo: f64, mut hi: f64) -> f64 {
    let g = |x: f64| 0.3 * x.exp() - x;
    let glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (glo > 0.0) {
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

fn labels(lo: i64, hi: i64) -> Vec<BranchLabel> {
    (lo..=hi).map(BranchLabel::band).collect()
}

fn index_integrality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut trials = 0;
    while trials < 1000 {
        let n = rng.gen_range(3..40);
        let mut pts: Vec<C64> = (0..n).map(|_| c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect();
        pts.push(pts[0]);
        let p = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        if pts.windows(2).any(|e| point_segment_distance(p, e[0], e[1]).0 < 1e-6) {
            continue;
        }
        let curve = ok(ParamCurve::polyline(&pts, true))?;
        let idx = ok(winding_number(&curve, p))?;
        let expected = crossing_winding(&pts, p);
        ensure!(idx.integer_snap == Some(expected), "trial {trials}: {idx:?} vs {expected}");
        trials += 1;
    }
    Ok(format!("{trials} curves"))
}

fn planted_roots() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trials = 0;
    let mut total = 0;
    while trials < 1000 {
        let deg = rng.gen_range(1..=6);
        let roots: Vec<C64> = (0..deg).map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let center = c(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let r = rng.gen_range(0.2..2.5);
        if roots.iter().any(|z| ((z - center).norm() - r).abs() < 1e-3) {
            continue;
        }
        let planted = roots.iter().filter(|z| (*z - center).norm() < r).count() as i64;
        // Chords of the 1024-gon stay within 1e-5 of the circle.
        let poly = Polynomial::from_roots(&roots);
        let count = ok(argument_principle_count(
            &poly,
            &ParamCurve::circle(center, r, 1024, 1),
            CountMode::Zeros,
            1,
        ))?;
        ensure!(count == planted, "trial {trials}: counted {count}, planted {planted}");
        total += planted;
        trials += 1;
    }
    Ok(format!("{trials} polynomials, {total} enclosed roots"))
}

fn subtraction_index_offset() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..=3i32 {
        for trial in 0..100 {
            let center = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let r = rng.gen_range(0.5..3.0);
            let k = rng.gen_range(2..16);
            // γ stays in a convex piece of one complementary component:
            // the inner disk for N ≥ 1, a half-plane beyond σ for N = 0.
            let gamma_pts: Vec<C64> = (0..k)
                .map(|_| {
                    let (u, v): (f64, f64) = (rng.gen(), rng.gen());
                    if n == 0 {
                        center + r * c(1.2 + 2.0 * u, 4.0 * v - 2.0)
                    } else {
                        center + C64::from_polar(0.8 * r * u, TAU * v)
                    }
                })
                .collect();
            let turns = n.max(1);
            let sigma = ParamCurve::circle(center, r, 64 * turns as usize, turns);
            let gamma = ok(ParamCurve::polyline(&gamma_pts, false))?;
            let lhs = ok(subtraction_index(&gamma, &sigma))?.value;
            let ind = ok(winding_number(&gamma, sigma.start()))?.value;
            let diff = lhs - ind;
            ensure!(
                (diff - n as f64).abs() < 1e-9 && diff.round() as i32 == n,
                "N={n}, trial {trial}: Ind(σ−γ,0) − Ind(γ,P) = {diff}"
            );
        }
    }
    Ok("4 × 100 configurations".into())
}

fn global_counting() -> Outcome {
    let s = ok(structural_setup(&exp03(), Rect::new(-45.0, 12.0, -24.0, 24.0), 0.1))?;
    let evidence = fixed_rays(&s, &s.untruncated_labels(), 1, 320, &default_t_grid(&s), &default_schedule());
    let mut out = Vec::new();
    for (lo, hi) in [(0, 0), (-1, 1), (-2, 2)] {
        let domains = labels(lo, hi);
        let n = domains.len() as i64;
        let contour = ok(counting_contour(&s, &domains, None, &evidence))?;
        let g = ok(global_count_check(&s, &contour))?;
        ensure!(
            g.fixed_points_found == n + 1 && g.n_plus_1_check,
            "N={n}: measured {} (R={})",
            g.fixed_points_found,
            contour.radius
        );
        out.push(format!("N={n}: {}", g.fixed_points_found));
    }
    Ok(out.join(", "))
}

fn forced_landing() -> Outcome {
    let s = ok(structural_setup(&exp03(), Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1))?;
    let domains: Vec<BranchLabel> = [-2, -1, 1, 2].into_iter().map(BranchLabel::band).collect();
    let rays = fixed_rays(&s, &domains, 1, 320, &default_t_grid(&s), &default_schedule());
    let mut worst: f64 = 0.0;
    for (label, ray) in domains.iter().zip(&rays) {
        let rec = ok(find_fixed_in_domain(&s, label))?;
        let z = ray.landing().ok_or_else(|| format!("ray {} did not land", ray.address))?;
        let d = (z - rec.location).norm();
        ensure!(d < 1e-6, "domain {}: landing {z} vs fixed point {}", label.j, rec.location);
        ensure!(rec.classification == Classification::Repelling, "domain {} not repelling", label.j);
        worst = worst.max(d);
    }
    Ok(format!("max distance {worst:.1e}"))
}

fn attracting_case() -> Outcome {
    let s = ok(structural_setup(&exp03(), Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1))?;
    let rep = ok(separation_report(&s, 1, Rect::centered(3.0), &ReportOptions::default()))?;
    ensure!(!rep.has_violation() && !rep.is_incomplete(), "report would not exit 0");
    ensure!(rep.regions.len() == 1, "{} regions", rep.regions.len());
    ensure!(rep.interior_count() == 1, "{} interior points", rep.interior_count());
    let oracle = bisect_exp03(0.0, 1.0);
    let p = rep
        .points
        .iter()
        .find(|p| p.record.classification == Classification::Attracting)
        .ok_or("no attracting point")?;
    let err = (p.record.location - oracle).norm();
    ensure!(err < 1e-8, "attracting point {} vs oracle {oracle}", p.record.location);
    Ok(format!("interior point {:.10} (error {err:.1e})", p.record.location.re))
}

fn parabolic_case() -> Outcome {
    let f = MapSpec::exp_affine(c((-1.0f64).exp(), 0.0), c(0.0, 0.0));
    let z0 = c(1.0, 0.0);
    let s = ok(structural_setup(&f, Rect::new(-2.0, 20.0, -20.0, 20.0), 0.1))?;
    let rep = ok(separation_report(&s, 1, Rect::centered(3.0), &ReportOptions::default()))?;
    let rec = &rep
        .points
        .iter()
        .find(|p| (p.record.location - z0).norm() < 1e-6)
        .ok_or("no fixed point found near 1")?
        .record;
    ensure!((rec.multiplier - 1.0).norm() < 1e-9, "multiplier {}", rec.multiplier);
    ensure!(rec.classification == Classification::Parabolic, "class {:?}", rec.classification);
    let mult = ok(multiplicity_at(&f, rec.location, 0.2, 1))?;
    ensure!(mult == 2, "multiplicity {mult}");
    ensure!(rep.regions.len() == 1, "{} regions", rep.regions.len());
    ensure!(rep.interior_count() == 0, "{} interior points", rep.interior_count());
    let virtuals: usize = rep.regions.iter().map(|r| r.contents.virtual_points.len()).sum();
    ensure!(virtuals == 1, "{virtuals} virtual points");
    ensure!(rep.verdicts == vec![Verdict::ExactlyOneVirtual], "verdicts {:?}", rep.verdicts);
    let graph = rep.graph.as_ref().ok_or("report without ray graph")?;
    let ray = graph
        .rays
        .iter()
        .find(|r| r.address == Address::constant(0))
        .ok_or("no ray of address 0")?;
    let landing = ray.landing().ok_or("ray 0 did not land")?;
    ensure!((landing - z0).norm() < 1e-6, "ray 0 lands at {landing}");
    let (_, last) = *ray.samples.last().ok_or("empty ray")?;
    let angle = (last - z0).arg().abs();
    ensure!(angle < 0.1, "approach angle {angle}");
    Ok(format!(
        "fixed point {:.1e} from 1, multiplier {:.1e} off 1, approach angle {angle:.1e}",
        (rec.location - z0).norm(),
        (rec.multiplier - 1.0).norm()
    ))
}

fn period_two() -> Outcome {
    let f = MapSpec::exp_affine(c(-5.0, 0.0), c(0.0, 0.0));
    let s = ok(structural_setup(&f, Rect::new(-10.0, 14.0, -14.0, 14.0), 0.05))?;
    let options = ReportOptions {
        domains: Some(labels(-1, 1)),
        ..Default::default()
    };
    let rep = ok(separation_report(&s, 2, Rect::new(-6.0, 3.0, -4.0, 4.0), &options))?;
    ensure!(!rep.has_violation(), "violation: {:?}", rep.verdicts);
    for v in &rep.verdicts {
        ensure!(
            matches!(v, Verdict::ExactlyOneInterior | Verdict::ExactlyOneVirtual),
            "verdict {v:?}"
        );
    }
    // Attracting 2-cycle by Newton from the orbit of the singular value 0.
    let mut z = c(0.0, 0.0);
    for _ in 0..2000 {
        z = ok(f.eval(z))?.0;
    }
    for _ in 0..50 {
        let (v, d) = ok(f.iterate(z, 2))?;
        z -= (v - z) / (d - 1.0);
    }
    let cycle = [z, ok(f.eval(z))?.0];
    for w in cycle {
        let hit = rep.points.iter().any(|p| {
            (p.record.location - w).norm() < 1e-8 && p.role == fixray::separation::PointRole::Interior
        });
        ensure!(hit, "cycle point {w} is not an interior point");
    }
    let virtual_free = rep.regions.iter().filter(|r| r.contents.virtual_points.is_empty()).count();
    ensure!(
        rep.interior_count() == virtual_free,
        "{} interior points, {virtual_free} virtual-free regions",
        rep.interior_count()
    );
    Ok(format!(
        "{} regions, {} interior, {} points",
        rep.regions.len(),
        rep.interior_count(),
        rep.points.len()
    ))
}

fn synthetic_ray(address: &str, pts: Vec<C64>, landing: C64) -> Ray {
    let n = pts.len();
    Ray {
        address: address.parse().unwrap(),
        samples: pts.into_iter().enumerate().map(|(k, z)| ((n - k) as f64, z)).collect(),
        status: RayStatus::LandsAt { z: landing },
        radius: 1.0,
        unconverged: Vec::new(),
    }
}

fn boundary_modification() -> Outcome {
    const MARGIN: f64 = 1e-9;
    let zero = c(0.0, 0.0);

    // f(z) = 2z, V the upper half-plane bounded by rays along ±ℝ.
    let pos: Vec<C64> = (0..200).map(|k| c(10.0 * 0.96f64.powi(k), 0.0)).collect();
    let neg: Vec<C64> = pos.iter().map(|z| -z).collect();
    let g = ok(build_ray_graph(
        vec![synthetic_ray("0|", pos, zero), synthetic_ray("1|", neg, zero)],
        1,
    ))?;
    let regions = ok(basic_regions(&g, Rect::centered(3.0), 0.05))?;
    let v = &regions[region_of(&g, &regions, c(0.0, 1.0)).ok_or("no upper region")?];
    let doubling = Polynomial::real(&[0.0, 2.0]);
    let rec = ok(FixedPointRecord::at(&doubling, zero, 1, 1))?;
    let m1 = ok(modify_boundary_near_fixed_point(&doubling, &g, v, &rec, 0.1, &[]))?;
    ensure!(m1.margin > MARGIN, "repelling margin {}", m1.margin);

    // f(z) = z + z², V the cusp between x ± i·x².
    let xs: Vec<f64> = (0..700).map(|k| 2.0 * 0.985f64.powi(k)).collect();
    let up = xs.iter().map(|&x| c(x, x * x)).collect();
    let down = xs.iter().map(|&x| c(x, -x * x)).collect();
    let g = ok(build_ray_graph(
        vec![synthetic_ray("0|", up, zero), synthetic_ray("1|", down, zero)],
        1,
    ))?;
    let regions = ok(basic_regions(&g, Rect::centered(3.0), 0.05))?;
    let v = &regions[region_of(&g, &regions, c(1.0, 0.0)).ok_or("no cusp region")?];
    let para = Polynomial::real(&[0.0, 1.0, 1.0]);
    let rec = ok(FixedPointRecord::at(&para, zero, 1, 2))?;
    let m2 = ok(modify_boundary_near_fixed_point(&para, &g, v, &rec, 0.1, &[]))?;
    ensure!(m2.margin > MARGIN, "parabolic margin {}", m2.margin);
    Ok(format!("margins {:.2e}, {:.2e}", m1.margin, m2.margin))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("index integrality vs crossing oracle", index_integrality, Duration::from_secs(5)),
        ("argument principle vs planted roots", planted_roots, Duration::from_secs(10)),
        ("subtraction index = winding + N", subtraction_index_offset, Duration::from_secs(5)),
        ("global counting, 0.3e^z, N = 1, 3, 5", global_counting, Duration::from_secs(60)),
        ("forced landing, 0.3e^z, j = ±1, ±2", forced_landing, Duration::from_secs(30)),
        ("attracting case, 0.3e^z", attracting_case, Duration::from_secs(30)),
        ("parabolic case, e^(z-1)", parabolic_case, Duration::from_secs(60)),
        ("period 2, -5e^z", period_two, Duration::from_secs(300)),
        ("boundary modification side checks", boundary_modification, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let result = match outcome {
            Ok(detail) if elapsed <= *budget => Ok(detail),
            Ok(detail) => Err(format!("{detail}; over budget {budget:?}")),
            Err(e) => Err(e),
        };
        match result {
            Ok(detail) => println!("PASS [{}] {name} ({:.2}s): {detail}", k + 1, elapsed.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL [{}] {name} ({:.2}s): {e}", k + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
