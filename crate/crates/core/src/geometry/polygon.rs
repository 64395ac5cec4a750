use super::{Aabb, GeometryError, Vec2};
use crate::Scalar;

/// Closed half-plane `{q : normal · q <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane<T> {
    normal: Vec2<T>,
    offset: T,
}

impl<T: Scalar> HalfPlane<T> {
    /// Builds `{q : a · q <= b}`, normalizing `a` to unit length.
    ///
    /// Returns `None` when `a` is (numerically) zero.
    pub fn new(a: Vec2<T>, b: T) -> Option<Self> {
        let len = a.norm();
        if !(len > T::zero()) || !len.is_finite() || !b.is_finite() {
            return None;
        }
        Some(Self {
            normal: a / len,
            offset: b / len,
        })
    }

    pub fn normal(&self) -> Vec2<T> {
        self.normal
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    /// Signed distance: negative inside, positive outside.
    #[inline]
    pub fn signed_distance(&self, q: Vec2<T>) -> T {
        self.normal.dot(q) - self.offset
    }

    /// Points at least as close to `keep` as to `other` (perpendicular bisector side).
    pub fn bisector(keep: Vec2<T>, other: Vec2<T>) -> Option<Self> {
        Self::radical(keep, T::zero(), other, T::zero())
    }

    /// Points whose power distance to `(keep, rho_keep)` does not exceed the one to
    /// `(other, rho_other)`: `2 (other - keep) · q <= |other|² - |keep|² - rho_other² + rho_keep²`.
    pub fn radical(keep: Vec2<T>, rho_keep: T, other: Vec2<T>, rho_other: T) -> Option<Self> {
        let d = other - keep;
        let mid = (keep + other) * T::lit(0.5);
        // Written around the midpoint: (d · (keep + other)) / 2 == d · mid.
        let rhs = d.dot(mid) + (rho_keep * rho_keep - rho_other * rho_other) * T::lit(0.5);
        Self::new(d, rhs)
    }
}

/// Counter-clockwise strictly convex polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Vec2<T>>,
}

impl<T: Scalar> ConvexPolygon<T> {
    /// Validates a vertex list. Clockwise input is reversed to counter-clockwise.
    pub fn new(mut vertices: Vec<Vec2<T>>) -> Result<Self, GeometryError> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolygon("non-finite vertex".into()));
        }
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let eps = T::geo_eps();
        let n = vertices.len();
        for i in 0..n {
            if vertices[i].dist(vertices[(i + 1) % n]) <= eps {
                return Err(GeometryError::InvalidPolygon(format!(
                    "duplicate consecutive vertices at index {i}"
                )));
            }
        }
        if signed_area(&vertices) < T::zero() {
            vertices.reverse();
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < -eps {
                return Err(GeometryError::InvalidPolygon(format!(
                    "not convex at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        if signed_area(&vertices) <= eps * eps {
            return Err(GeometryError::InvalidPolygon("zero area".into()));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: T, y0: T, x1: T, y1: T) -> Result<Self, GeometryError> {
        Self::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(T::zero(), T::zero(), T::one(), T::one()).expect("unit square is valid")
    }

    /// Inscribed regular `segments`-gon of the ellipse `center + axes.0·cos t·u + axes.1·sin t·v`
    /// where `(u, v)` is the frame rotated by `angle`.
    pub fn ellipse(
        center: Vec2<T>,
        semi_axes: (T, T),
        angle: T,
        segments: usize,
    ) -> Result<Self, GeometryError> {
        let segments = segments.max(3);
        let step = T::lit(std::f64::consts::TAU) / T::from_usize_lossy(segments);
        let vertices = (0..segments)
            .map(|k| {
                let t = step * T::from_usize_lossy(k);
                let local = Vec2::new(semi_axes.0 * t.cos(), semi_axes.1 * t.sin());
                center + local.rotate(angle)
            })
            .collect();
        Self::new(vertices)
    }

    pub(crate) fn from_raw(vertices: Vec<Vec2<T>>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2<T>, Vec2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices)
    }

    /// Exact shoelace area and centroid.
    pub fn moments(&self) -> (T, Vec2<T>) {
        polygon_moments(self)
    }

    pub fn centroid(&self) -> Vec2<T> {
        self.moments().1
    }

    pub fn bounding_box(&self) -> Aabb<T> {
        Aabb::from_points(&self.vertices).expect("polygon has vertices")
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> T {
        let mut d = T::zero();
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.dist(*b));
            }
        }
        d
    }

    /// Closed containment with tolerance `geo_eps`.
    pub fn contains(&self, q: Vec2<T>) -> bool {
        self.contains_with(q, T::geo_eps())
    }

    pub fn contains_with(&self, q: Vec2<T>, tol: T) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            e.cross(q - a) >= -tol * e.norm()
        })
    }

    /// Nearest point of the polygon (identity for interior points).
    pub fn project(&self, q: Vec2<T>) -> Vec2<T> {
        if self.contains_with(q, T::zero()) {
            return q;
        }
        let mut best = self.vertices[0];
        let mut best_d = T::infinity();
        for (a, b) in self.edges() {
            let e = b - a;
            let t = ((q - a).dot(e) / e.norm_sq()).max(T::zero()).min(T::one());
            let c = a + e * t;
            let d = c.dist_sq(q);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    /// Fan triangulation around the vertex centroid.
    pub fn fan_triangles(&self) -> impl Iterator<Item = [Vec2<T>; 3]> + '_ {
        let n = T::from_usize_lossy(self.vertices.len());
        let c = self
            .vertices
            .iter()
            .fold(Vec2::zero(), |acc, v| acc + *v)
            / n;
        self.edges().map(move |(a, b)| [c, a, b])
    }

    pub fn translate(&self, d: Vec2<T>) -> Self {
        Self::from_raw(self.vertices.iter().map(|v| *v + d).collect())
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_raw(self.vertices.iter().map(|v| *v * s).collect())
    }

    /// `self ∩ h`, or `None` when the intersection has zero area.
    pub fn clip(&self, h: &HalfPlane<T>) -> Option<Self> {
        clip(self, h)
    }

    pub fn clip_all<'a, I>(&self, planes: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a HalfPlane<T>>,
    {
        let mut poly = self.clone();
        for h in planes {
            poly = clip(&poly, h)?;
        }
        Some(poly)
    }

    /// Intersection of two convex polygons.
    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let mut poly = self.clone();
        for (a, b) in other.edges() {
            let e = b - a;
            // interior lies to the left of each CCW edge
            let h = HalfPlane::new(Vec2::new(e.y, -e.x), Vec2::new(e.y, -e.x).dot(a))?;
            poly = clip(&poly, &h)?;
        }
        Some(poly)
    }
}

fn signed_area<T: Scalar>(v: &[Vec2<T>]) -> T {
    let n = v.len();
    if n < 3 {
        return T::zero();
    }
    let o = v[0];
    let mut twice = T::zero();
    for i in 1..n - 1 {
        twice += (v[i] - o).cross(v[i + 1] - o);
    }
    twice * T::lit(0.5)
}

/// Exact area and centroid by the shoelace formula (computed relative to the first
/// vertex to limit cancellation).
pub fn polygon_moments<T: Scalar>(poly: &ConvexPolygon<T>) -> (T, Vec2<T>) {
    let v = poly.vertices();
    let o = v[0];
    let mut twice_area = T::zero();
    let mut acc = Vec2::zero();
    for i in 1..v.len() - 1 {
        let a = v[i] - o;
        let b = v[i + 1] - o;
        let cr = a.cross(b);
        twice_area += cr;
        acc += (a + b) * cr;
    }
    let area = twice_area * T::lit(0.5);
    if twice_area == T::zero() {
        return (area, o);
    }
    (area, o + acc / (T::lit(3.0) * twice_area))
}

/// Sutherland–Hodgman clip of a convex polygon by one half-plane.
///
/// Vertices within `geo_eps` of the boundary count as inside, which makes the
/// operation idempotent. Zero-area results (slivers thinner than `geo_eps`) are `None`.
pub fn clip<T: Scalar>(poly: &ConvexPolygon<T>, h: &HalfPlane<T>) -> Option<ConvexPolygon<T>> {
    let eps = T::geo_eps();
    let v = poly.vertices();
    let n = v.len();
    let s: Vec<T> = v.iter().map(|p| h.signed_distance(*p)).collect();
    if s.iter().all(|&d| d <= eps) {
        return Some(poly.clone());
    }
    if s.iter().all(|&d| d >= -eps) {
        return None;
    }
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (v[i], v[j]);
        let (sa, sb) = (s[i], s[j]);
        let a_in = sa <= eps;
        let b_in = sb <= eps;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (sa / (sa - sb)).max(T::zero()).min(T::one());
            out.push(a.lerp(b, t));
        }
    }
    sanitize(out)
}

/// Drops near-duplicate consecutive vertices and rejects degenerate slivers.
fn sanitize<T: Scalar>(mut pts: Vec<Vec2<T>>) -> Option<ConvexPolygon<T>> {
    let eps = T::geo_eps();
    let mut out: Vec<Vec2<T>> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if out.last().is_none_or(|q: &Vec2<T>| q.dist(p) > eps) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(*out.last().unwrap()) <= eps {
        out.pop();
    }
    if out.len() < 3 {
        return None;
    }
    let area = signed_area(&out);
    let mut longest = T::zero();
    for i in 0..out.len() {
        longest = longest.max(out[i].dist(out[(i + 1) % out.len()]));
    }
    // 2·area / longest edge bounds the polygon's width from below
    if !(area > T::zero()) || T::lit(2.0) * area / longest <= eps {
        return None;
    }
    Some(ConvexPolygon::from_raw(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Vec2<f64>;

    fn sq() -> ConvexPolygon<f64> {
        ConvexPolygon::unit_square()
    }

    fn x_le(c: f64) -> HalfPlane<f64> {
        HalfPlane::new(P::new(1.0, 0.0), c).unwrap()
    }

    #[test]
    fn clip_axis_aligned_cut() {
        let r = sq().clip(&x_le(0.5)).unwrap();
        let (a, c) = r.moments();
        assert!((a - 0.5).abs() < 1e-12);
        assert!((c.x - 0.25).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
        let bb = r.bounding_box();
        assert_eq!(bb.max.x, 0.5);
    }

    #[test]
    fn clip_non_binding_is_identity() {
        assert_eq!(sq().clip(&x_le(2.0)).unwrap(), sq());
    }

    #[test]
    fn clip_disjoint_is_empty() {
        assert!(sq().clip(&x_le(-1.0)).is_none());
        // touching the boundary only: zero area
        assert!(sq().clip(&x_le(0.0)).is_none());
    }

    #[test]
    fn clip_is_idempotent_on_oblique_cut() {
        let h = HalfPlane::new(P::new(1.0, 2.0), 1.1).unwrap();
        let once = sq().clip(&h).unwrap();
        let twice = once.clip(&h).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn moments_reference_shapes() {
        let (a, c) = sq().moments();
        assert_eq!(a, 1.0);
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);

        let tri = ConvexPolygon::<f64>::new(vec![P::new(0.0, 0.0), P::new(1.0, 0.0), P::new(0.0, 1.0)])
            .unwrap();
        let (a, c) = tri.moments();
        assert!((a - 0.5).abs() < 1e-15);
        assert!((c.x - 1.0 / 3.0).abs() < 1e-15 && (c.y - 1.0 / 3.0).abs() < 1e-15);

        let rect = ConvexPolygon::<f64>::rectangle(0.0, 0.0, 0.5, 1.0).unwrap();
        let (a, c) = rect.moments();
        assert!((a - 0.5).abs() < 1e-15);
        assert!((c.x - 0.25).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let cw = ConvexPolygon::new(vec![
            P::new(0.0, 0.0),
            P::new(0.0, 1.0),
            P::new(1.0, 1.0),
            P::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.area() > 0.0);
    }

    #[test]
    fn rejects_invalid_polygons() {
        assert!(ConvexPolygon::new(vec![P::new(0.0, 0.0), P::new(1.0, 0.0)]).is_err());
        assert!(ConvexPolygon::new(vec![
            P::new(0.0, 0.0),
            P::new(0.0, 0.0),
            P::new(1.0, 0.0),
            P::new(0.0, 1.0)
        ])
        .is_err());
        // dart (non-convex)
        assert!(ConvexPolygon::new(vec![
            P::new(0.0, 0.0),
            P::new(2.0, 1.0),
            P::new(0.0, 2.0),
            P::new(1.0, 1.0)
        ])
        .is_err());
        assert!(ConvexPolygon::new(vec![P::new(0.0, 0.0), P::new(1.0, 0.0), P::new(2.0, 0.0)])
            .is_err());
    }

    #[test]
    fn sliver_collapses_to_empty() {
        let h = HalfPlane::new(P::new(1.0, 0.0), 1e-12).unwrap();
        assert!(sq().clip(&h).is_none());
    }

    #[test]
    fn project_onto_boundary() {
        let p = sq().project(P::new(2.0, 0.5));
        assert!((p.x - 1.0).abs() < 1e-15 && (p.y - 0.5).abs() < 1e-15);
        let inside = P::new(0.3, 0.7);
        assert_eq!(sq().project(inside), inside);
    }

    #[test]
    fn intersect_overlapping_squares() {
        let other = sq().translate(P::new(0.5, 0.5));
        let r = sq().intersect(&other).unwrap();
        assert!((r.area() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ellipse_area_approaches_pi_ab() {
        let e = ConvexPolygon::ellipse(P::new(0.0, 0.0), (2.0, 1.0), 0.3, 512).unwrap();
        let exact = std::f64::consts::PI * 2.0;
        assert!((e.area() - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn radical_axis_matches_hand_solution() {
        let h = HalfPlane::radical(P::new(0.25, 0.5), 0.5, P::new(0.75, 0.5), 0.1).unwrap();
        // boundary is x = 0.74
        assert!(h.signed_distance(P::new(0.74, 0.3)).abs() < 1e-12);
        assert!(h.signed_distance(P::new(0.5, 0.3)) < 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let sq = ConvexPolygon::<f32>::unit_square();
        let h = HalfPlane::new(Vec2::new(1.0f32, 0.0), 0.5).unwrap();
        let r = sq.clip(&h).unwrap();
        assert!((r.area() - 0.5).abs() < 1e-6);
    }
}
