//! Planar sections of spheroids: support function, exact body/box hit test,
//! intersection ellipses and the edge rules of a planar observation window.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simulate::{BoxWindow, Spheroid};

const FRAME_TOL: f64 = 1e-12;

/// Plane `{x : x . normal = offset}` with an in-plane orthonormal frame
/// `(e1, e2)`; `e1` is the reference direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub e1: [f64; 3],
    pub e2: [f64; 3],
}

impl SectionPlane {
    /// Plane with normal `normal` through `offset`, reference direction
    /// `e1`, and `e2 = e1 x normal`.
    pub fn new(normal: [f64; 3], offset: f64, e1: [f64; 3]) -> Result<Self> {
        let v = Vector3::from(normal);
        let u = Vector3::from(e1);
        if (v.norm() - 1.0).abs() > FRAME_TOL || (u.norm() - 1.0).abs() > FRAME_TOL {
            return Err(invalid("plane normal and reference direction must be unit vectors"));
        }
        if v.dot(&u).abs() > FRAME_TOL {
            return Err(invalid("plane normal must be perpendicular to the reference direction"));
        }
        if !offset.is_finite() {
            return Err(invalid("plane offset must be finite"));
        }
        let e2 = u.cross(&v);
        Ok(Self {
            normal,
            offset,
            e1,
            e2: [e2.x, e2.y, e2.z],
        })
    }

    /// The plane `x = 0` with reference axis `z`; in-plane coordinates are
    /// `(z, y)`.
    pub fn vertical() -> Self {
        Self {
            normal: [1.0, 0.0, 0.0],
            offset: 0.0,
            e1: [0.0, 0.0, 1.0],
            e2: [0.0, 1.0, 0.0],
        }
    }

    /// In-plane coordinates of the orthogonal projection of `x`.
    pub fn project(&self, x: &[f64; 3]) -> [f64; 2] {
        [dot(x, &self.e1), dot(x, &self.e2)]
    }

    /// Point of the plane with in-plane coordinates `p`.
    pub fn embed(&self, p: [f64; 2]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for k in 0..3 {
            x[k] = self.offset * self.normal[k] + p[0] * self.e1[k] + p[1] * self.e2[k];
        }
        x
    }
}

/// Axis-aligned rectangle in plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsWindow {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl ObsWindow {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let w = Self { min, max };
        w.validate()?;
        Ok(w)
    }

    pub fn square(side: f64) -> Self {
        Self {
            min: [0.0, 0.0],
            max: [side, side],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..2 {
            if !(self.min[k].is_finite() && self.max[k].is_finite() && self.min[k] <= self.max[k]) {
                return Err(invalid("observation window needs finite min <= max"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &[f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// Which section ellipses are kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum EdgeRule {
    /// Ellipse centre inside the window.
    CentersIn,
    /// Bounding box inside the window eroded by `margin`.
    MinusSampling { margin: f64 },
}

/// Ellipse of intersection, described by its centre in plane coordinates,
/// semi-axes `A >= C`, shape `S = C/A` and folded angle `alpha` between the
/// major axis and the reference direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionEllipse {
    pub center: [f64; 2],
    pub major: f64,
    pub minor: f64,
    pub shape: f64,
    pub alpha: f64,
}

impl SectionEllipse {
    /// Builds an ellipse from measured attributes, validating their ranges.
    pub fn new(center: [f64; 2], major: f64, minor: f64, alpha: f64) -> Result<Self> {
        if !(minor > 0.0 && major >= minor && major.is_finite()) {
            return Err(invalid(format!("ellipse needs A >= C > 0, got A={major}, C={minor}")));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
            return Err(invalid(format!("ellipse alpha must be in [0, pi/2], got {alpha}")));
        }
        Ok(Self {
            center,
            major,
            minor,
            shape: minor / major,
            alpha,
        })
    }

    /// Half extents of the axis-aligned bounding box along `(e1, e2)`.
    /// The box is symmetric in the sign of the angle, so the folded
    /// `alpha` is enough.
    pub fn half_extents(&self) -> [f64; 2] {
        let (s, c) = self.alpha.sin_cos();
        let a2 = self.major * self.major;
        let c2 = self.minor * self.minor;
        [(a2 * c * c + c2 * s * s).sqrt(), (a2 * s * s + c2 * c * c).sqrt()]
    }
}

#[inline]
fn dot(x: &[f64; 3], y: &[f64; 3]) -> f64 {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

/// Support half-width of a centred spheroid in direction `direction`.
pub fn half_width(spheroid: &Spheroid, direction: &[f64; 3]) -> f64 {
    let w = dot(&spheroid.axis, direction);
    let (a, c) = (spheroid.a, spheroid.c);
    (c * c + (a * a - c * c) * w * w).sqrt()
}

/// Whether the spheroid body meets the (possibly flat) box. Minimises the
/// quadric form over the box exactly by enumerating which face (lower,
/// upper, or none) each coordinate rests on.
pub fn hits_box(spheroid: &Spheroid, window: &BoxWindow) -> bool {
    let d2 = window.distance_squared(&spheroid.center);
    if d2 > spheroid.a * spheroid.a {
        return false;
    }
    if d2 < spheroid.c * spheroid.c {
        return true;
    }
    min_quadric_over_box(&spheroid.quadric(), &spheroid.center, window) < 1.0
}

/// `min over x in W of (x - x0)^T Q (x - x0)` for positive definite `Q`.
pub(crate) fn min_quadric_over_box(q: &Matrix3<f64>, x0: &[f64; 3], window: &BoxWindow) -> f64 {
    let lo = window.min_corner();
    let hi = window.max_corner();
    let mut best = f64::INFINITY;
    // pattern digit per coordinate: 0 = lower face, 1 = upper face, 2 = free
    for code in 0..27usize {
        let pat = [code % 3, (code / 3) % 3, code / 9];
        if (0..3).any(|k| pat[k] == 1 && hi[k] == lo[k]) {
            continue;
        }
        let mut y = [0.0; 3];
        let mut free = [0usize; 3];
        let mut nf = 0;
        for k in 0..3 {
            match pat[k] {
                0 => y[k] = lo[k] - x0[k],
                1 => y[k] = hi[k] - x0[k],
                _ => {
                    free[nf] = k;
                    nf += 1;
                }
            }
        }
        if nf > 0 && !solve_free(q, &mut y, &free[..nf]) {
            continue;
        }
        if free[..nf]
            .iter()
            .any(|&k| y[k] + x0[k] < lo[k] - 1e-12 * (1.0 + lo[k].abs()) || y[k] + x0[k] > hi[k] + 1e-12 * (1.0 + hi[k].abs()))
        {
            continue;
        }
        let v = Vector3::from(y);
        best = best.min(v.dot(&(q * v)));
    }
    best
}

/// Sets the free components of `y` so the gradient of `y^T Q y` vanishes in
/// those coordinates, with the remaining components held fixed.
fn solve_free(q: &Matrix3<f64>, y: &mut [f64; 3], free: &[usize]) -> bool {
    let fixed: Vec<usize> = (0..3).filter(|k| !free.contains(k)).collect();
    let rhs = |i: usize| -> f64 { -fixed.iter().map(|&j| q[(i, j)] * y[j]).sum::<f64>() };
    match free.len() {
        1 => {
            let i = free[0];
            y[i] = rhs(i) / q[(i, i)];
            true
        }
        2 => {
            let (i, j) = (free[0], free[1]);
            let m = Matrix2::new(q[(i, i)], q[(i, j)], q[(j, i)], q[(j, j)]);
            match m.lu().solve(&Vector2::new(rhs(i), rhs(j))) {
                Some(s) => {
                    y[i] = s.x;
                    y[j] = s.y;
                    true
                }
                None => false,
            }
        }
        _ => {
            *y = [0.0; 3];
            true
        }
    }
}

/// Exact intersection ellipse, or `None` when the plane misses or only
/// touches the spheroid.
pub fn intersect(spheroid: &Spheroid, plane: &SectionPlane) -> Option<SectionEllipse> {
    let hw = half_width(spheroid, &plane.normal);
    let t = plane.offset - dot(&spheroid.center, &plane.normal);
    if hw - t.abs() <= FRAME_TOL * hw {
        return None;
    }
    let q = spheroid.quadric();
    let e1 = Vector3::from(plane.e1);
    let e2 = Vector3::from(plane.e2);
    let v = Vector3::from(plane.normal);
    let qe1 = q * e1;
    let qe2 = q * e2;
    let m = Matrix2::new(e1.dot(&qe1), e1.dot(&qe2), e2.dot(&qe1), e2.dot(&qe2));
    let b = Vector2::new(qe1.dot(&v), qe2.dot(&v)) * t;
    let r0 = -m.try_inverse()? * b;
    // level of the centred conic: 1 - (t / hw)^2
    let level = (1.0 - (t / hw) * (t / hw)).max(0.0);
    if level <= 0.0 {
        return None;
    }

    let (p, off, r) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + off * off).sqrt();
    let lam_big = mean + rad;
    let lam_small = (mean - rad).max(f64::MIN_POSITIVE);
    let major = (level / lam_small).sqrt();
    let minor = (level / lam_big).sqrt().min(major);
    // direction of the larger eigenvalue, rotated a quarter turn
    let psi = 0.5 * (2.0 * off).atan2(p - r) + std::f64::consts::FRAC_PI_2;
    let alpha = fold_axis_angle(psi);

    let c0 = [dot(&spheroid.center, &plane.e1), dot(&spheroid.center, &plane.e2)];
    Some(SectionEllipse {
        center: [c0[0] + r0.x, c0[1] + r0.y],
        major,
        minor,
        shape: minor / major,
        alpha,
    })
}

/// Folds the angle of an undirected axis into `[0, pi/2]`.
fn fold_axis_angle(psi: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut x = psi.rem_euclid(pi);
    if x > 0.5 * pi {
        x = pi - x;
    }
    x.clamp(0.0, 0.5 * pi)
}

/// Whether an ellipse is kept by `rule` in `window`.
pub fn keep(ellipse: &SectionEllipse, window: &ObsWindow, rule: EdgeRule) -> bool {
    match rule {
        EdgeRule::CentersIn => window.contains(&ellipse.center),
        EdgeRule::MinusSampling { margin } => {
            let h = ellipse.half_extents();
            (0..2).all(|k| {
                ellipse.center[k] - h[k] >= window.min[k] + margin && ellipse.center[k] + h[k] <= window.max[k] - margin
            })
        }
    }
}

/// Sections every spheroid and keeps the ellipses selected by `rule`.
pub fn section_process(
    spheroids: &[Spheroid],
    plane: &SectionPlane,
    window: &ObsWindow,
    rule: EdgeRule,
) -> Vec<SectionEllipse> {
    spheroids
        .iter()
        .filter_map(|s| intersect(s, plane))
        .filter(|e| keep(e, window, rule))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = dot(&v, &v).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
        loop {
            let v = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let n = dot(&v, &v);
            if n > 1e-4 && n <= 1.0 {
                return unit(v);
            }
        }
    }

    fn random_spheroid<R: Rng>(rng: &mut R) -> Spheroid {
        let a = 0.2 + 2.0 * rng.random::<f64>();
        let c = a * (0.05 + 0.95 * rng.random::<f64>());
        let center = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
        Spheroid::new(center, random_unit(rng), a, c).unwrap()
    }

    /// Point on the surface of the spheroid from spherical parameters of the
    /// reference body.
    fn surface_point(s: &Spheroid, u: f64, phi: f64) -> [f64; 3] {
        let w = Vector3::from(s.axis);
        let helper = if w.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let p1 = w.cross(&helper).normalize();
        let p2 = w.cross(&p1);
        let st = (1.0 - u * u).sqrt();
        let x = Vector3::from(s.center) + w * (s.a * u) + p1 * (s.c * st * phi.cos()) + p2 * (s.c * st * phi.sin());
        [x.x, x.y, x.z]
    }

    #[test]
    fn half_width_examples() {
        let s = Spheroid::new([0.0; 3], [0.0, 0.0, 1.0], 2.0, 0.5).unwrap();
        assert!((half_width(&s, &[1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((half_width(&s, &[0.0, 0.0, 1.0]) - 2.0).abs() < 1e-15);
        let ball = Spheroid::new([1.0; 3], [0.0, 1.0, 0.0], 0.7, 0.7).unwrap();
        assert!((half_width(&ball, &unit([1.0, 2.0, 3.0])) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn half_width_matches_surface_maximum() {
        let mut rng = rng_from_seed(3);
        for _ in 0..5 {
            let s = Spheroid::new([0.0; 3], random_unit(&mut rng), 1.3, 0.4).unwrap();
            let d = random_unit(&mut rng);
            // maximise x . d over the surface parametrisation, then refine
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for _ in 0..100_000 {
                let u = rng.random::<f64>() * 2.0 - 1.0;
                let phi = rng.random::<f64>() * 2.0 * PI;
                let v = dot(&surface_point(&s, u, phi), &d);
                if v > best.0 {
                    best = (v, u, phi);
                }
            }
            let (mut u, mut phi) = (best.1, best.2);
            let mut step = 0.01;
            while step > 1e-12 {
                let mut improved = false;
                for (du, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    let nu = (u + du).clamp(-1.0, 1.0);
                    let v = dot(&surface_point(&s, nu, phi + dp), &d);
                    if v > best.0 {
                        best.0 = v;
                        u = nu;
                        phi += dp;
                        improved = true;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            assert!((best.0 - half_width(&s, &d)).abs() < 1e-6, "{} vs {}", best.0, half_width(&s, &d));
        }
    }

    #[test]
    fn meridian_section() {
        let theta = 0.6f64;
        // axis in the plane x = 0, tilted from z towards y
        let s = Spheroid::new([0.0, 1.0, 2.0], [0.0, theta.sin(), theta.cos()], 1.5, 0.5).unwrap();
        let e = intersect(&s, &SectionPlane::vertical()).unwrap();
        assert!((e.major - 1.5).abs() < 1e-12);
        assert!((e.minor - 0.5).abs() < 1e-12);
        assert!((e.alpha - theta).abs() < 1e-9);
        assert!((e.center[0] - 2.0).abs() < 1e-12 && (e.center[1] - 1.0).abs() < 1e-12);
        let obtuse = Spheroid::new([0.0; 3], [0.0, -theta.sin(), theta.cos()], 1.5, 0.5).unwrap();
        assert!((intersect(&obtuse, &SectionPlane::vertical()).unwrap().alpha - theta).abs() < 1e-9);
    }

    #[test]
    fn sphere_section_is_circle() {
        let s = Spheroid::new([0.3, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0, 1.0).unwrap();
        let e = intersect(&s, &SectionPlane::vertical()).unwrap();
        let want = (1.0f64 - 0.09).sqrt();
        assert!((e.major - want).abs() < 1e-12 && (e.minor - want).abs() < 1e-12);
        assert_eq!(e.shape, 1.0);
    }

    #[test]
    fn tangent_plane_misses() {
        let s = Spheroid::new([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 2.0, 1.0).unwrap();
        assert!(intersect(&s, &SectionPlane::vertical()).is_none());
        let s = Spheroid::new([1.5, 0.0, 0.0], [0.0, 0.0, 1.0], 2.0, 1.0).unwrap();
        assert!(intersect(&s, &SectionPlane::vertical()).is_none());
    }

    #[test]
    fn ellipse_points_lie_on_surface() {
        let mut rng = rng_from_seed(5);
        let plane = SectionPlane::new(unit([1.0, 1.0, 0.0]), 0.2, [0.0, 0.0, 1.0]).unwrap();
        let mut checked = 0;
        while checked < 50 {
            let s = random_spheroid(&mut rng);
            let Some(e) = intersect(&s, &plane) else { continue };
            checked += 1;
            // recover the unfolded major direction from the conic
            let q = s.quadric();
            for k in 0..64 {
                let t = 2.0 * PI * k as f64 / 64.0;
                let mut ok = false;
                for sign in [1.0, -1.0] {
                    let ang = sign * e.alpha;
                    let (sa, ca) = ang.sin_cos();
                    let (st, ct) = t.sin_cos();
                    let p = [
                        e.center[0] + e.major * ct * ca - e.minor * st * sa,
                        e.center[1] + e.major * ct * sa + e.minor * st * ca,
                    ];
                    let x = Vector3::from(plane.embed(p)) - Vector3::from(s.center);
                    if (x.dot(&(q * x)) - 1.0).abs() < 1e-9 {
                        ok = true;
                    }
                }
                assert!(ok, "point {k} off the surface");
            }
        }
    }

    #[test]
    fn intersects_iff_within_half_width() {
        let mut rng = rng_from_seed(6);
        let plane = SectionPlane::vertical();
        for _ in 0..100_000 {
            let s = random_spheroid(&mut rng);
            let dist = (dot(&s.center, &plane.normal) - plane.offset).abs();
            assert_eq!(intersect(&s, &plane).is_some(), dist < half_width(&s, &plane.normal));
        }
    }

    #[test]
    fn sections_bounded_by_axes() {
        let mut rng = rng_from_seed(7);
        let plane = SectionPlane::vertical();
        for _ in 0..20_000 {
            let s = random_spheroid(&mut rng);
            if let Some(e) = intersect(&s, &plane) {
                assert!(e.minor <= s.c + 1e-9 && e.major <= s.a + 1e-9);
                assert!(e.minor <= e.major && (0.0..=FRAC_PI_2).contains(&e.alpha));
                assert!((e.shape - e.minor / e.major).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_about_reference_axis() {
        let mut rng = rng_from_seed(8);
        let rot = |v: [f64; 3], g: f64| {
            let (s, c) = g.sin_cos();
            [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
        };
        let plane = SectionPlane::vertical();
        for _ in 0..1000 {
            let s = random_spheroid(&mut rng);
            let Some(e) = intersect(&s, &plane) else { continue };
            let g = rng.random::<f64>() * 2.0 * PI;
            let s2 = Spheroid { center: rot(s.center, g), axis: rot(s.axis, g), ..s };
            let p2 = SectionPlane::new(rot(plane.normal, g), 0.0, [0.0, 0.0, 1.0]).unwrap();
            let e2 = intersect(&s2, &p2).unwrap();
            assert!((e.major - e2.major).abs() < 1e-9);
            assert!((e.minor - e2.minor).abs() < 1e-9);
            assert!((e.alpha - e2.alpha).abs() < 1e-9);
        }
    }

    /// Projected gradient descent with exact line search on the box.
    fn min_by_projection(q: &Matrix3<f64>, x0: &[f64; 3], w: &BoxWindow) -> f64 {
        let lo = Vector3::from(w.min_corner());
        let hi = Vector3::from(w.max_corner());
        let c = Vector3::from(*x0);
        let proj = |x: Vector3<f64>| Vector3::new(x.x.clamp(lo.x, hi.x), x.y.clamp(lo.y, hi.y), x.z.clamp(lo.z, hi.z));
        let f = |x: &Vector3<f64>| (x - c).dot(&(q * (x - c)));
        let mut x = proj(c);
        let lmax = q.symmetric_eigenvalues().max();
        for _ in 0..20_000 {
            let g = q * (x - c) * 2.0;
            x = proj(x - g / (2.0 * lmax));
        }
        f(&x)
    }

    #[test]
    fn box_hit_matches_projection_oracle() {
        let mut rng = rng_from_seed(9);
        let windows = [
            BoxWindow::unit_cube(),
            BoxWindow::new([0.0, 2.0, 1.0], [0.0, -1.0, -0.5]).unwrap(),
            BoxWindow::new([1.0, 0.0, 0.0], [-0.5, 0.0, 0.0]).unwrap(),
        ];
        for w in &windows {
            for _ in 0..300 {
                let s = random_spheroid(&mut rng);
                let exact = min_quadric_over_box(&s.quadric(), &s.center, w);
                let oracle = min_by_projection(&s.quadric(), &s.center, w);
                assert!((exact - oracle).abs() < 1e-6 * (1.0 + oracle), "{exact} vs {oracle}");
            }
        }
    }

    #[test]
    fn plate_hit_agrees_with_section_geometry() {
        // A spheroid hits the plate x = 0 iff its section meets the square.
        let w = BoxWindow::vertical_plate(1.0);
        let mut rng = rng_from_seed(10);
        for _ in 0..2000 {
            let s = random_spheroid(&mut rng);
            let hit = hits_box(&s, &w);
            match intersect(&s, &SectionPlane::vertical()) {
                None => assert!(!hit),
                Some(e) => {
                    if ObsWindow::square(1.0).contains(&e.center) {
                        assert!(hit);
                    }
                    let h = e.half_extents();
                    let apart = (0..2).any(|k| e.center[k] + h[k] < 0.0 || e.center[k] - h[k] > 1.0);
                    if apart {
                        assert!(!hit);
                    }
                }
            }
        }
    }

    #[test]
    fn edge_rules() {
        let win = ObsWindow::square(10.0);
        let ball = Spheroid::new([0.0, 5.0, 5.0], [0.0, 0.0, 1.0], 1.0, 1.0).unwrap();
        let plane = SectionPlane::vertical();
        assert!(section_process(&[], &plane, &win, EdgeRule::CentersIn).is_empty());
        assert_eq!(section_process(&[ball], &plane, &win, EdgeRule::CentersIn).len(), 1);
        assert_eq!(section_process(&[ball], &plane, &win, EdgeRule::MinusSampling { margin: 0.1 }).len(), 1);
        let edge = Spheroid { center: [0.0, 0.5, 5.0], ..ball };
        assert_eq!(section_process(&[edge], &plane, &win, EdgeRule::CentersIn).len(), 1);
        assert!(section_process(&[edge], &plane, &win, EdgeRule::MinusSampling { margin: 0.0 }).is_empty());
    }

    #[test]
    fn bounding_box_of_tilted_ellipse() {
        let e = SectionEllipse::new([0.0, 0.0], 2.0, 1.0, PI / 4.0).unwrap();
        let h = e.half_extents();
        assert!((h[0] - 2.5f64.sqrt()).abs() < 1e-12 && (h[1] - 2.5f64.sqrt()).abs() < 1e-12);
    }
}
