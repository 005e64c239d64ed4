//! Points, squared distances, clustering costs and nearest-facility assignment.
//!
//! Everything here works in squared Euclidean distance. Accumulations run in
//! index order so repeated runs are bit-identical, and every nearest-point
//! query breaks ties toward the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};

/// A point in `R^d` with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(GeoError::InvalidParameter(
                "points need at least one coordinate".into(),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeoError::NonFinite { index: 0 });
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Bitwise coordinate equality, used for set semantics on net points.
    pub fn same_location(&self, other: &Point) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits() || a == b)
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = GeoError;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Point::new(coords)
    }
}

/// An ordered collection of points sharing one dimension.
///
/// Indices are stable: point `i` stays point `i` for the life of the set.
/// Duplicate points are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PointSet {
    dim: usize,
    points: Vec<Point>,
}

impl PointSet {
    /// An empty set of the given dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
        }
    }

    pub fn new(points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(GeoError::EmptyPointSet);
        };
        let dim = first.dim();
        for p in &points {
            if p.dim() != dim {
                return Err(GeoError::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        Ok(Self { dim, points })
    }

    /// Build a set with an explicit dimension; `points` may be empty.
    pub fn with_points(dim: usize, points: Vec<Point>) -> Result<Self> {
        for p in &points {
            if p.dim() != dim {
                return Err(GeoError::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        Ok(Self { dim, points })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(index, row)| {
                Point::new(row).map_err(|e| match e {
                    GeoError::NonFinite { .. } => GeoError::NonFinite { index },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_rows(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn push(&mut self, p: Point) -> Result<()> {
        if p.dim() != self.dim {
            return Err(GeoError::DimensionMismatch {
                expected: self.dim,
                got: p.dim(),
            });
        }
        self.points.push(p);
        Ok(())
    }

    /// Push without the dimension check; callers guarantee it.
    pub(crate) fn push_unchecked(&mut self, p: Point) {
        debug_assert_eq!(p.dim(), self.dim);
        self.points.push(p);
    }

    /// Add `p` unless a point at the same location is already present.
    pub(crate) fn push_unique(&mut self, p: Point) -> bool {
        if self.points.iter().any(|q| q.same_location(&p)) {
            return false;
        }
        self.push_unchecked(p);
        true
    }

    /// The subset at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        PointSet {
            dim: self.dim,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.coords().to_vec()).collect()
    }

    /// Axis-aligned bounding box as `(lo, hi)`.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.points.first()?;
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for p in &self.points[1..] {
            for (j, &c) in p.coords().iter().enumerate() {
                lo[j] = lo[j].min(c);
                hi[j] = hi[j].max(c);
            }
        }
        Some((lo, hi))
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(GeoError::DimensionMismatch {
                expected: self.dim,
                got: dim,
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for PointSet {
    type Error = GeoError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        PointSet::from_rows(rows)
    }
}

impl From<PointSet> for Vec<Vec<f64>> {
    fn from(set: PointSet) -> Self {
        set.to_rows()
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Opening cost, connection cost and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    #[serde(rename = "open")]
    pub facility_open_cost: f64,
    #[serde(rename = "connection")]
    pub connection_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(facility_open_cost: f64, connection_cost: f64) -> Self {
        Self {
            facility_open_cost,
            connection_cost,
            total: facility_open_cost + connection_cost,
        }
    }
}

/// Squared distance between raw coordinate slices of equal length.
#[inline]
pub fn sq_dist_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub fn sq_dist(p: &Point, q: &Point) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(GeoError::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(sq_dist_slices(p.coords(), q.coords()))
}

/// Index of the nearest point of `set` and its squared distance.
pub fn nearest(p: &Point, set: &PointSet) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(GeoError::EmptyReferenceSet);
    }
    set.check_dim(p.dim())?;
    Ok(nearest_unchecked(p.coords(), set.points()))
}

pub(crate) fn nearest_unchecked(p: &[f64], set: &[Point]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, q) in set.iter().enumerate() {
        let d = sq_dist_slices(p, q.coords());
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn connection_cost(clients: &PointSet, centers: &PointSet) -> Result<f64> {
    if centers.is_empty() {
        return Err(GeoError::EmptyReferenceSet);
    }
    if !clients.is_empty() {
        clients.check_dim(centers.dim())?;
    }
    Ok(clients
        .iter()
        .map(|c| nearest_unchecked(c.coords(), centers.points()).1)
        .sum())
}

/// `f * |F| + sum_c min_q ||c - q||^2`.
pub fn sosfl_cost(clients: &PointSet, facilities: &PointSet, f: f64) -> Result<CostBreakdown> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(GeoError::InvalidParameter(format!(
            "facility cost must be positive and finite, got {f}"
        )));
    }
    let conn = connection_cost(clients, facilities)?;
    Ok(CostBreakdown::new(f * facilities.len() as f64, conn))
}

/// `sum_p min_q ||p - q||^2`.
pub fn kmeans_cost(points: &PointSet, centers: &PointSet) -> Result<f64> {
    connection_cost(points, centers)
}

/// Coordinate-wise mean.
pub fn centroid(set: &PointSet) -> Result<Point> {
    if set.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    Ok(Point(centroid_of(set.points().iter().map(|p| p.coords()), set.dim())))
}

pub(crate) fn centroid_of<'a>(coords: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for c in coords {
        for (s, x) in sum.iter_mut().zip(c) {
            *s += x;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    sum
}

/// Sum of squared distances from each point to `center`.
pub fn sse_about(set: &PointSet, center: &Point) -> f64 {
    set.iter()
        .map(|p| sq_dist_slices(p.coords(), center.coords()))
        .sum()
}

/// Client indices grouped by nearest facility; `cells[r]` lists the clients of facility `r`.
pub fn voronoi_assign(clients: &PointSet, facilities: &PointSet) -> Result<Vec<Vec<usize>>> {
    if facilities.is_empty() {
        return Err(GeoError::EmptyReferenceSet);
    }
    if !clients.is_empty() {
        clients.check_dim(facilities.dim())?;
    }
    let mut cells = vec![Vec::new(); facilities.len()];
    for (ci, c) in clients.iter().enumerate() {
        let (r, _) = nearest_unchecked(c.coords(), facilities.points());
        cells[r].push(ci);
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn sq_dist_examples() {
        assert_eq!(sq_dist(&pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(), 25.0);
        let p = pt(&[1.5, -2.0]);
        assert_eq!(sq_dist(&p, &p).unwrap(), 0.0);
        assert_eq!(sq_dist(&pt(&[0.0]), &pt(&[1.0])).unwrap(), 1.0);
        assert!(matches!(
            sq_dist(&pt(&[0.0]), &pt(&[1.0, 2.0])),
            Err(GeoError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(matches!(
            PointSet::from_rows(vec![vec![0.0], vec![f64::INFINITY]]),
            Err(GeoError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn nearest_examples() {
        let s = PointSet::from_rows(vec![vec![3.0, 4.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(nearest(&pt(&[0.0, 0.0]), &s).unwrap(), (1, 2.0));
        assert_eq!(nearest(&pt(&[3.0, 4.0]), &s).unwrap(), (0, 0.0));
        let s = PointSet::from_scalars(&[-1.0, 1.0]).unwrap();
        assert_eq!(nearest(&pt(&[0.0]), &s).unwrap(), (0, 1.0));
        assert!(matches!(
            nearest(&pt(&[0.0]), &PointSet::empty(1)),
            Err(GeoError::EmptyReferenceSet)
        ));
    }

    #[test]
    fn sosfl_cost_examples() {
        let c = PointSet::from_scalars(&[0.0, 1.0]).unwrap();
        let cost = sosfl_cost(&c, &PointSet::from_scalars(&[0.5]).unwrap(), 1.0).unwrap();
        assert_eq!(cost.total, 1.5);
        assert_eq!(cost.facility_open_cost, 1.0);
        assert_eq!(cost.connection_cost, 0.5);

        let single = PointSet::from_rows(vec![vec![2.0, 3.0]]).unwrap();
        assert_eq!(sosfl_cost(&single, &single, 0.7).unwrap().total, 0.7);

        let cost = sosfl_cost(&c, &c, 0.3).unwrap();
        assert!((cost.total - 0.6).abs() < 1e-15);

        assert!(sosfl_cost(&c, &PointSet::empty(1), 1.0).is_err());
        assert!(sosfl_cost(&c, &c, 0.0).is_err());
        assert!(sosfl_cost(&c, &c, -1.0).is_err());
    }

    #[test]
    fn kmeans_cost_examples() {
        let p = PointSet::from_rows(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let k = PointSet::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(kmeans_cost(&p, &k).unwrap(), 2.0);
        assert_eq!(kmeans_cost(&p, &p).unwrap(), 0.0);
        let p = PointSet::from_scalars(&[0.0, 2.0, 3.0, 5.0]).unwrap();
        let k = PointSet::from_scalars(&[1.0, 4.0]).unwrap();
        assert_eq!(kmeans_cost(&p, &k).unwrap(), 4.0);
        assert!(kmeans_cost(&p, &PointSet::empty(1)).is_err());
    }

    #[test]
    fn centroid_examples() {
        let s = PointSet::from_rows(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(centroid(&s).unwrap(), pt(&[1.0, 1.0]));
        let single = PointSet::from_rows(vec![vec![4.0, -1.0]]).unwrap();
        assert_eq!(centroid(&single).unwrap(), pt(&[4.0, -1.0]));
        let s = PointSet::from_scalars(&[0.0, 2.0]).unwrap();
        let c = centroid(&s).unwrap();
        assert_eq!(c, pt(&[1.0]));
        assert_eq!(sse_about(&s, &c), 2.0);
        assert_eq!(sse_about(&s, &pt(&[0.0])), 4.0);
        assert!(centroid(&PointSet::empty(2)).is_err());
    }

    #[test]
    fn voronoi_examples() {
        let c = PointSet::from_scalars(&[0.0, 1.0, 10.0]).unwrap();
        let r = PointSet::from_scalars(&[0.0, 9.0]).unwrap();
        assert_eq!(voronoi_assign(&c, &r).unwrap(), vec![vec![0, 1], vec![2]]);
        let single = PointSet::from_scalars(&[3.0]).unwrap();
        assert_eq!(voronoi_assign(&c, &single).unwrap(), vec![vec![0, 1, 2]]);
        let tie = PointSet::from_scalars(&[4.5]).unwrap();
        assert_eq!(voronoi_assign(&tie, &r).unwrap(), vec![vec![0], vec![]]);
        assert!(voronoi_assign(&c, &PointSet::empty(1)).is_err());
    }

    #[test]
    fn serde_round_trip_as_rows() {
        let s = PointSet::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "[[1.0,2.0],[3.0,4.5]]");
        let back: PointSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    fn point_set(dim: usize, max_len: usize) -> impl Strategy<Value = PointSet> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 1..max_len)
            .prop_map(|rows| PointSet::from_rows(rows).unwrap())
    }

    proptest! {
        #[test]
        fn sq_dist_symmetric(a in prop::collection::vec(-1e3f64..1e3, 3), b in prop::collection::vec(-1e3f64..1e3, 3)) {
            let (p, q) = (pt(&a), pt(&b));
            prop_assert_eq!(sq_dist(&p, &q).unwrap(), sq_dist(&q, &p).unwrap());
            prop_assert!(sq_dist(&p, &q).unwrap() >= 0.0);
            prop_assert_eq!(sq_dist(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn adding_a_center_never_increases_cost(clients in point_set(2, 12), centers in point_set(2, 4), pick in 0usize..12) {
            let before = kmeans_cost(&clients, &centers).unwrap();
            let mut more = centers.clone();
            more.push(clients.get(pick % clients.len()).clone()).unwrap();
            prop_assert!(kmeans_cost(&clients, &more).unwrap() <= before);
            let f = 0.5;
            let b = sosfl_cost(&clients, &centers, f).unwrap().connection_cost;
            let a = sosfl_cost(&clients, &more, f).unwrap().connection_cost;
            prop_assert!(a <= b);
        }

        #[test]
        fn voronoi_cells_partition_clients(clients in point_set(2, 20), centers in point_set(2, 5)) {
            let cells = voronoi_assign(&clients, &centers).unwrap();
            let mut seen: Vec<usize> = cells.iter().flatten().copied().collect();
            prop_assert_eq!(seen.len(), clients.len());
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), clients.len());
        }

        #[test]
        fn centroid_minimizes_sse(set in point_set(3, 15), shift in prop::collection::vec(-2.0f64..2.0, 3)) {
            let c = centroid(&set).unwrap();
            let x = pt(&c.coords().iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>());
            prop_assert!(sse_about(&set, &c) <= sse_about(&set, &x) * (1.0 + 1e-12) + 1e-12);
        }
    }
}
