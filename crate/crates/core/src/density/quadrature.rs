use crate::geometry::{ConvexPolygon, Vec2};
use crate::Scalar;

/// 12-point symmetric triangle rule, exact for polynomials of degree 6.
///
/// Each row: (weight, barycentric a, b, c); the orbit of every row under coordinate
/// permutation is taken.
const DEG6_ORBIT3: [(f64, f64, f64); 2] = [
    (0.116_786_275_726_379, 0.501_426_509_658_179, 0.249_286_745_170_910),
    (0.050_844_906_370_207, 0.873_821_971_016_996, 0.063_089_014_491_502),
];
const DEG6_ORBIT6: (f64, f64, f64, f64) = (
    0.082_851_075_618_374,
    0.053_145_049_844_817,
    0.310_352_451_033_784,
    0.636_502_499_121_399,
);

/// Triangle quadrature with uniform midpoint refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    /// Levels of 1→4 midpoint subdivision applied to each triangle.
    pub refinements: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { refinements: 2 }
    }
}

impl Quadrature {
    pub fn new(refinements: u32) -> Self {
        Self { refinements }
    }

    /// Calls `visit(point, weight)` for every node of the rule on `tri`; weights sum
    /// to the triangle's area.
    pub fn triangle<T: Scalar, F: FnMut(Vec2<T>, T)>(&self, tri: [Vec2<T>; 3], visit: &mut F) {
        refine(tri, self.refinements, visit);
    }

    /// Visits quadrature nodes over a convex polygon (fan triangulation about the
    /// vertex centroid, then refinement).
    pub fn polygon<T: Scalar, F: FnMut(Vec2<T>, T)>(&self, poly: &ConvexPolygon<T>, visit: &mut F) {
        for tri in poly.fan_triangles() {
            self.triangle(tri, visit);
        }
    }

    /// Number of nodes used per triangle.
    pub fn nodes_per_triangle(&self) -> usize {
        12 * 4usize.pow(self.refinements)
    }
}

fn refine<T: Scalar, F: FnMut(Vec2<T>, T)>(tri: [Vec2<T>; 3], level: u32, visit: &mut F) {
    if level == 0 {
        base_rule(tri, visit);
        return;
    }
    let [a, b, c] = tri;
    let half = T::lit(0.5);
    let ab = a.lerp(b, half);
    let bc = b.lerp(c, half);
    let ca = c.lerp(a, half);
    refine([a, ab, ca], level - 1, visit);
    refine([ab, b, bc], level - 1, visit);
    refine([ca, bc, c], level - 1, visit);
    refine([ab, bc, ca], level - 1, visit);
}

fn base_rule<T: Scalar, F: FnMut(Vec2<T>, T)>(tri: [Vec2<T>; 3], visit: &mut F) {
    let [a, b, c] = tri;
    let area = ((b - a).cross(c - a) * T::lit(0.5)).abs();
    if area == T::zero() {
        return;
    }
    let at = |l0: f64, l1: f64, l2: f64| a * T::lit(l0) + b * T::lit(l1) + c * T::lit(l2);
    for &(w, p, q) in &DEG6_ORBIT3 {
        let w = area * T::lit(w);
        visit(at(p, q, q), w);
        visit(at(q, p, q), w);
        visit(at(q, q, p), w);
    }
    let (w, p, q, r) = DEG6_ORBIT6;
    let w = area * T::lit(w);
    for (l0, l1, l2) in [(p, q, r), (p, r, q), (q, p, r), (q, r, p), (r, p, q), (r, q, p)] {
        visit(at(l0, l1, l2), w);
    }
}
