use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Unit directions for support tables: `±e_i` first, then seeded random ones.
/// A line has only the two axis directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    dim: usize,
    directions: Vec<Vec<f64>>,
}

impl DirectionSet {
    pub fn axes(dim: usize) -> Self {
        Self::seeded(dim, 0, 0)
    }

    pub fn seeded(dim: usize, extra: usize, seed: u64) -> Self {
        let mut directions = Vec::with_capacity(2 * dim + extra);
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut g = vec![0.0; dim];
                g[i] = sign;
                directions.push(g);
            }
        }
        let extra = if dim > 1 { extra } else { 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while directions.len() < 2 * dim + extra {
            let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-9 {
                directions.push(g.into_iter().map(|c| c / norm).collect());
            }
        }
        DirectionSet { dim, directions }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Support value `max <g, p>` of a finite point set.
pub fn support_of(points: impl IntoIterator<Item = impl AsRef<[f64]>>, g: &[f64]) -> f64 {
    points
        .into_iter()
        .map(|p| dot(p.as_ref(), g))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Convex hull summary of a finite point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexHull {
    Interval { lo: f64, hi: f64 },
    /// Counter-clockwise vertices without collinear points.
    Polygon { vertices: Vec<[f64; 2]> },
    SupportTable { directions: DirectionSet, values: Vec<f64> },
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn monotone_chain(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p[0] - a[0] - s * dx).powi(2) + (p[1] - a[1] - s * dy).powi(2)).sqrt()
}

impl ConvexHull {
    /// Hull of `points`: interval in one dimension, polygon in two, support
    /// table over `directions` otherwise.
    pub fn build(points: &[Vec<f64>], directions: &DirectionSet) -> Option<Self> {
        let first = points.first()?;
        Some(match first.len() {
            1 => ConvexHull::Interval {
                lo: points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
                hi: points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
            },
            2 => ConvexHull::Polygon {
                vertices: monotone_chain(points.iter().map(|p| [p[0], p[1]]).collect()),
            },
            _ => ConvexHull::SupportTable {
                directions: directions.clone(),
                values: directions
                    .directions()
                    .iter()
                    .map(|g| support_of(points, g))
                    .collect(),
            },
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexHull::Interval { .. } => 1,
            ConvexHull::Polygon { .. } => 2,
            ConvexHull::SupportTable { directions, .. } => directions.dim(),
        }
    }

    /// Support value in direction `g`. Exact for intervals and polygons; for
    /// tables only tabled directions are known, others return the bound
    /// implied by the axis entries.
    pub fn support(&self, g: &[f64]) -> f64 {
        match self {
            ConvexHull::Interval { lo, hi } => (g[0] * lo).max(g[0] * hi),
            ConvexHull::Polygon { vertices } => support_of(vertices.iter(), g),
            ConvexHull::SupportTable { directions, values } => {
                if let Some(k) = directions.directions().iter().position(|d| d.as_slice() == g) {
                    return values[k];
                }
                // box bound from the axis rows
                g.iter()
                    .enumerate()
                    .map(|(i, &c)| if c >= 0.0 { c * values[2 * i] } else { -c * values[2 * i + 1] })
                    .sum()
            }
        }
    }

    /// True iff `q` is within `tol` of the hull (support test for tables).
    pub fn contains(&self, q: &[f64], tol: f64) -> bool {
        match self {
            ConvexHull::Interval { lo, hi } => q[0] >= lo - tol && q[0] <= hi + tol,
            ConvexHull::Polygon { vertices } => {
                let p = [q[0], q[1]];
                match vertices.len() {
                    0 => false,
                    1 => segment_distance(p, vertices[0], vertices[0]) <= tol,
                    2 => segment_distance(p, vertices[0], vertices[1]) <= tol,
                    k => {
                        let inside = (0..k).all(|i| cross(vertices[i], vertices[(i + 1) % k], p) >= 0.0);
                        inside
                            || (0..k).any(|i| segment_distance(p, vertices[i], vertices[(i + 1) % k]) <= tol)
                    }
                }
            }
            ConvexHull::SupportTable { directions, values } => directions
                .directions()
                .iter()
                .zip(values)
                .all(|(g, h)| dot(g, q) <= h + tol),
        }
    }

    /// Per-axis extent `[lo, hi]`.
    pub fn extent(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|i| {
                let mut g = vec![0.0; self.dim()];
                g[i] = 1.0;
                let hi = self.support(&g);
                g[i] = -1.0;
                (-self.support(&g), hi)
            })
            .collect()
    }
}
