use rayon::prelude::*;

use super::{ConvexPolygon, GeometryError, HalfPlane, Vec2};
use crate::Scalar;

fn validate_sites<T: Scalar>(
    workspace: &ConvexPolygon<T>,
    sites: &[Vec2<T>],
) -> Result<(), GeometryError> {
    if sites.is_empty() {
        return Err(GeometryError::NoSites);
    }
    for (i, p) in sites.iter().enumerate() {
        if !p.is_finite() || !workspace.contains(*p) {
            return Err(GeometryError::SiteOutsideWorkspace {
                index: i,
                x: p.x.to_f64_lossy(),
                y: p.y.to_f64_lossy(),
            });
        }
    }
    let eps = T::geo_eps();
    // sort by x so only a narrow window needs pairwise checks
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| sites[a].x.partial_cmp(&sites[b].x).unwrap());
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if sites[j].x - sites[i].x > eps {
                break;
            }
            if sites[i].dist(sites[j]) <= eps {
                return Err(GeometryError::DuplicateSites {
                    first: i.min(j),
                    second: i.max(j),
                });
            }
        }
    }
    Ok(())
}

/// Voronoi cell of `sites[i]` inside the workspace.
///
/// Bisectors are applied nearest-first and the loop stops once the next site is
/// farther than twice the cell's circumradius about the site (no bisector beyond that
/// can cut the cell).
fn voronoi_cell<T: Scalar>(
    workspace: &ConvexPolygon<T>,
    sites: &[Vec2<T>],
    i: usize,
) -> Option<ConvexPolygon<T>> {
    let p = sites[i];
    let mut others: Vec<(T, usize)> = sites
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, q)| (q.dist_sq(p), j))
        .collect();
    others.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cell = workspace.clone();
    let four = T::lit(4.0);
    let mut reach_sq = cell
        .vertices()
        .iter()
        .fold(T::zero(), |m, v| m.max(v.dist_sq(p)));
    for (d_sq, j) in others {
        if d_sq > four * reach_sq * (T::one() + T::geo_eps()) {
            break;
        }
        let h = HalfPlane::bisector(p, sites[j])?;
        cell = cell.clip(&h)?;
        reach_sq = cell
            .vertices()
            .iter()
            .fold(T::zero(), |m, v| m.max(v.dist_sq(p)));
    }
    Some(cell)
}

/// Voronoi partition of `workspace` generated by `sites`.
///
/// Every site lies inside its own cell, so cells are never empty for valid input.
pub fn voronoi_cells<T: Scalar>(
    workspace: &ConvexPolygon<T>,
    sites: &[Vec2<T>],
) -> Result<Vec<ConvexPolygon<T>>, GeometryError> {
    validate_sites(workspace, sites)?;
    (0..sites.len())
        .into_par_iter()
        .map(|i| voronoi_cell(workspace, sites, i).ok_or(GeometryError::DegenerateCell { index: i }))
        .collect()
}

/// Power (Laguerre) partition. A dominated site gets `None`.
pub fn power_cells<T: Scalar>(
    workspace: &ConvexPolygon<T>,
    sites: &[Vec2<T>],
    radii: &[T],
) -> Result<Vec<Option<ConvexPolygon<T>>>, GeometryError> {
    if radii.len() != sites.len() {
        return Err(GeometryError::RadiiLength {
            sites: sites.len(),
            radii: radii.len(),
        });
    }
    if let Some(i) = radii.iter().position(|r| !(*r >= T::zero()) || !r.is_finite()) {
        return Err(GeometryError::NegativeRadius { index: i });
    }
    validate_sites(workspace, sites)?;
    let cells = (0..sites.len())
        .into_par_iter()
        .map(|i| {
            let mut cell = workspace.clone();
            for j in 0..sites.len() {
                if j == i {
                    continue;
                }
                let h = HalfPlane::radical(sites[i], radii[i], sites[j], radii[j])?;
                cell = cell.clip(&h)?;
            }
            Some(cell)
        })
        .collect();
    Ok(cells)
}

/// Index of the site whose (power) distance to `q` is smallest; ties go to the lower index.
pub fn nearest_site<T: Scalar>(sites: &[Vec2<T>], radii: Option<&[T]>, q: Vec2<T>) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, p) in sites.iter().enumerate() {
        let rho = radii.map_or(T::zero(), |r| r[i]);
        let d = p.dist_sq(q) - rho * rho;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Length of the boundary segment shared by two cells lying on their separating line,
/// or zero when the cells only touch at a point (or not at all).
pub fn shared_boundary_length<T: Scalar>(
    a: &ConvexPolygon<T>,
    line: &HalfPlane<T>,
    b: &ConvexPolygon<T>,
) -> T {
    let tol = T::lit(1e3) * T::geo_eps();
    let on_line = |poly: &ConvexPolygon<T>| -> Vec<Vec2<T>> {
        poly.vertices()
            .iter()
            .copied()
            .filter(|v| line.signed_distance(*v).abs() <= tol)
            .collect()
    };
    let (pa, pb) = (on_line(a), on_line(b));
    if pa.len() < 2 || pb.len() < 2 {
        return T::zero();
    }
    // parametrize along the line direction
    let n = line.normal();
    let dir = Vec2::new(-n.y, n.x);
    let span = |pts: &[Vec2<T>]| {
        pts.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
            let t = dir.dot(*v);
            (lo.min(t), hi.max(t))
        })
    };
    let (alo, ahi) = span(&pa);
    let (blo, bhi) = span(&pb);
    (ahi.min(bhi) - alo.max(blo)).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Vec2<f64>;

    fn sq() -> ConvexPolygon<f64> {
        ConvexPolygon::unit_square()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_sites_split_in_halves() {
        let cells = voronoi_cells(&sq(), &[P::new(0.25, 0.5), P::new(0.75, 0.5)]).unwrap();
        assert_eq!(cells.len(), 2);
        let (a0, c0) = cells[0].moments();
        let (a1, c1) = cells[1].moments();
        assert!(close(a0, 0.5, 1e-12) && close(a1, 0.5, 1e-12));
        assert!(close(c0.x, 0.25, 1e-12) && close(c1.x, 0.75, 1e-12));
    }

    #[test]
    fn single_site_owns_workspace() {
        let cells = voronoi_cells(&sq(), &[P::new(0.1, 0.9)]).unwrap();
        assert_eq!(cells[0], sq());
    }

    #[test]
    fn four_quadrants() {
        let sites = [
            P::new(0.25, 0.25),
            P::new(0.75, 0.25),
            P::new(0.25, 0.75),
            P::new(0.75, 0.75),
        ];
        let cells = voronoi_cells(&sq(), &sites).unwrap();
        for (cell, s) in cells.iter().zip(&sites) {
            let (a, c) = cell.moments();
            assert!(close(a, 0.25, 1e-12));
            assert!(c.dist(*s) < 1e-12);
        }
    }

    #[test]
    fn duplicate_and_outside_sites_are_rejected() {
        let err = voronoi_cells(&sq(), &[P::new(0.5, 0.5), P::new(0.5, 0.5)]).unwrap_err();
        assert!(matches!(err, GeometryError::DuplicateSites { first: 0, second: 1 }));
        let err = voronoi_cells(&sq(), &[P::new(0.5, 0.5), P::new(1.5, 0.5)]).unwrap_err();
        assert!(matches!(err, GeometryError::SiteOutsideWorkspace { index: 1, .. }));
    }

    #[test]
    fn equal_radii_reproduce_voronoi() {
        let sites = [P::new(0.2, 0.3), P::new(0.7, 0.6), P::new(0.4, 0.85)];
        let vor = voronoi_cells(&sq(), &sites).unwrap();
        let pow = power_cells(&sq(), &sites, &[0.3, 0.3, 0.3]).unwrap();
        for (v, p) in vor.iter().zip(&pow) {
            let p = p.as_ref().unwrap();
            assert_eq!(v.len(), p.len());
            for a in v.vertices() {
                assert!(p.vertices().iter().any(|b| a.dist(*b) < 1e-9));
            }
        }
    }

    /// Labels a dense grid by nearest power distance and returns the smallest x labeled 1.
    fn grid_split_x(sites: &[P], radii: &[f64], n: usize) -> f64 {
        let mut min_x = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let q = P::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                if nearest_site(sites, Some(radii), q) == 1 {
                    min_x = min_x.min(q.x);
                }
            }
        }
        min_x
    }

    #[test]
    fn power_split_line_at_074() {
        let sites = [P::new(0.25, 0.5), P::new(0.75, 0.5)];
        let radii = [0.5, 0.1];
        let cells = power_cells(&sq(), &sites, &radii).unwrap();
        let left = cells[0].as_ref().unwrap().bounding_box();
        let right = cells[1].as_ref().unwrap().bounding_box();
        assert!(close(left.max.x, 0.74, 1e-12));
        assert!(close(right.min.x, 0.74, 1e-12));
        // grid oracle at 1000² resolution: first labeled-1 column center is within half a cell
        let oracle = grid_split_x(&sites, &radii, 1000);
        assert!((oracle - 0.74).abs() <= 1e-3);
    }

    #[test]
    fn dominated_site_has_empty_cell() {
        let sites = [P::new(0.25, 0.5), P::new(0.75, 0.5)];
        let radii = [10.0, 0.0];
        let cells = power_cells(&sq(), &sites, &radii).unwrap();
        assert!(cells[1].is_none());
        assert!((cells[0].as_ref().unwrap().area() - 1.0).abs() < 1e-12);
        // oracle agrees: nobody on a 200² grid is labeled 1
        assert!(grid_split_x(&sites, &radii, 200).is_infinite());
    }

    #[test]
    fn radii_length_mismatch() {
        let err = power_cells(&sq(), &[P::new(0.5, 0.5)], &[]).unwrap_err();
        assert!(matches!(err, GeometryError::RadiiLength { .. }));
    }

    #[test]
    fn shared_edges_of_quadrants() {
        let sites = [
            P::new(0.25, 0.25),
            P::new(0.75, 0.25),
            P::new(0.25, 0.75),
            P::new(0.75, 0.75),
        ];
        let cells = voronoi_cells(&sq(), &sites).unwrap();
        let l01 = HalfPlane::bisector(sites[0], sites[1]).unwrap();
        let l03 = HalfPlane::bisector(sites[0], sites[3]).unwrap();
        assert!(close(shared_boundary_length(&cells[0], &l01, &cells[1]), 0.5, 1e-12));
        // diagonal neighbors touch at a single corner
        assert_eq!(shared_boundary_length(&cells[0], &l03, &cells[3]), 0.0);
    }
}
