//! Opinion spaces, Chebyshev centers, diameters and the `Z_c` potential.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Norm, Opinion, OpinionState};

/// Bounded convex set initial opinions are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpinionSpace {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Euclidean ball, whatever norm the model measures distances in.
    Ball { center: Vec<f64>, radius: f64 },
    /// Finite sample; "uniform" means a uniform choice among the points.
    PointCloud { points: Vec<Vec<f64>> },
}

/// Initial-opinion distribution over a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Uniform,
}

/// Center and radius of the smallest enclosing ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Opinion,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, p: &[f64], norm: Norm, tol: f64) -> bool {
        norm.distance(self.center.as_slice(), p) <= self.radius + tol
    }
}

impl OpinionSpace {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            OpinionSpace::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::config(format!("interval needs a < b, got [{a}, {b}]")));
                }
            }
            OpinionSpace::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::config("box bounds must be nonempty and of equal length"));
                }
                if !(finite(lo) && finite(hi)) || lo.iter().zip(hi).any(|(l, h)| l >= h) {
                    return Err(Error::config("box needs finite lo < hi on every axis"));
                }
            }
            OpinionSpace::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return Err(Error::config("ball center must be a finite nonempty vector"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::config(format!("ball radius must be positive, got {radius}")));
                }
            }
            OpinionSpace::PointCloud { points } => {
                let Some(first) = points.first() else {
                    return Err(Error::Input("point cloud is empty".into()));
                };
                let d = first.len();
                if d == 0 || points.iter().any(|p| p.len() != d || !finite(p)) {
                    return Err(Error::Input(
                        "point cloud points must be finite and share one dimension".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            OpinionSpace::Interval { .. } => 1,
            OpinionSpace::Box { lo, .. } => lo.len(),
            OpinionSpace::Ball { center, .. } => center.len(),
            OpinionSpace::PointCloud { points } => points.first().map_or(0, Vec::len),
        }
    }

    /// Draws `n` i.i.d. uniform opinions as a time-0 state.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<OpinionState> {
        self.validate()?;
        let d = self.dimension();
        let mut coords = Vec::with_capacity(n * d);
        for _ in 0..n {
            self.sample_into(rng, &mut coords);
        }
        OpinionState::from_flat(d, coords)
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            OpinionSpace::Interval { a, b } => out.push(rng.random_range(*a..*b)),
            OpinionSpace::Box { lo, hi } => {
                out.extend(lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)))
            }
            OpinionSpace::Ball { center, radius } => {
                let d = center.len();
                let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let len = Norm::Euclidean.length(&dir);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                if len == 0.0 {
                    out.extend_from_slice(center);
                } else {
                    out.extend(center.iter().zip(&dir).map(|(c, u)| c + r * u / len));
                }
            }
            OpinionSpace::PointCloud { points } => {
                out.extend_from_slice(points.choose(rng).expect("validated nonempty"))
            }
        }
    }

    /// Diameter of the space in `norm`.
    pub fn diameter(&self, norm: Norm) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            OpinionSpace::Interval { a, b } => b - a,
            OpinionSpace::Box { lo, hi } => {
                let diag: Vec<f64> = hi.iter().zip(lo).map(|(h, l)| h - l).collect();
                norm.length(&diag)
            }
            OpinionSpace::Ball { center, radius } => 2.0 * ball_radius_in(norm, *radius, center.len()),
            OpinionSpace::PointCloud { points } => diameter(points, norm),
        })
    }
}

/// Largest `norm` distance from the center of a Euclidean ball of `radius`.
fn ball_radius_in(norm: Norm, radius: f64, d: usize) -> f64 {
    match norm {
        Norm::Euclidean | Norm::Linf => radius,
        Norm::L1 => radius * (d as f64).sqrt(),
    }
}

/// Max pairwise distance; zero for a single point.
pub fn diameter<P: AsRef<[f64]>>(points: &[P], norm: Norm) -> f64 {
    let mut best = 0.0f64;
    for (k, p) in points.iter().enumerate() {
        for q in &points[k + 1..] {
            best = best.max(norm.distance(p.as_ref(), q.as_ref()));
        }
    }
    best
}

/// `Z_c = sum_i |x_i - c|`.
pub fn z_potential(state: &OpinionState, c: &Opinion, norm: Norm) -> Result<f64> {
    if c.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: c.dim(),
        });
    }
    Ok(z_potential_unchecked(state, c.as_slice(), norm))
}

#[inline]
pub(crate) fn z_potential_unchecked(state: &OpinionState, c: &[f64], norm: Norm) -> f64 {
    state.opinions().map(|x| norm.distance(x, c)).sum()
}

/// Chebyshev center and radius of `space`.
///
/// Point clouds under the Euclidean norm get an exact minimum enclosing ball
/// for `d <= 3` and an iterative approximation above that. Under `l1`/`linf`
/// the bounding-box midpoint is used (exact for `linf`).
pub fn chebyshev_center(space: &OpinionSpace, norm: Norm) -> Result<Ball> {
    space.validate()?;
    Ok(match space {
        OpinionSpace::Interval { a, b } => Ball {
            center: Opinion::new(vec![(a + b) / 2.0]),
            radius: (b - a) / 2.0,
        },
        OpinionSpace::Box { lo, hi } => {
            let center = lo.iter().zip(hi).map(|(l, h)| (l + h) / 2.0).collect();
            let half: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| (h - l) / 2.0).collect();
            Ball {
                center: Opinion::new(center),
                radius: norm.length(&half),
            }
        }
        OpinionSpace::Ball { center, radius } => Ball {
            center: Opinion::new(center.clone()),
            radius: ball_radius_in(norm, *radius, center.len()),
        },
        OpinionSpace::PointCloud { points } => match norm {
            Norm::Euclidean if points[0].len() <= 3 => min_enclosing_ball(points),
            Norm::Euclidean => approx_enclosing_ball(points, APPROX_TOL, APPROX_MAX_ITERS),
            Norm::L1 | Norm::Linf => {
                if norm == Norm::L1 {
                    log::warn!("l1 Chebyshev center of a point cloud uses the bounding-box midpoint (approximate)");
                }
                bounding_box_center(points, norm)
            }
        },
    })
}

const APPROX_TOL: f64 = 1e-7;
const APPROX_MAX_ITERS: usize = 100_000;

fn covering_radius(points: &[Vec<f64>], center: &[f64], norm: Norm) -> f64 {
    points
        .iter()
        .map(|p| norm.distance(p, center))
        .fold(0.0, f64::max)
}

fn bounding_box_center(points: &[Vec<f64>], norm: Norm) -> Ball {
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (l + h) / 2.0).collect();
    let radius = covering_radius(points, &center, norm);
    Ball {
        center: Opinion::new(center),
        radius,
    }
}

/// Exact Euclidean minimum enclosing ball by move-to-front Welzl recursion.
/// The recursion depth is bounded by the support size, not the point count.
pub fn min_enclosing_ball(points: &[Vec<f64>]) -> Ball {
    use rand::SeedableRng;
    let d = points[0].len();
    let mut order: Vec<usize> = (0..points.len()).collect();
    // Fixed shuffle: expected linear time without giving up determinism.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);

    let mut solver = Welzl {
        points,
        order,
        d,
        support: Vec::with_capacity(d + 1),
        center: vec![0.0; d],
        radius_sq: -1.0,
    };
    solver.recurse(solver.order.len());
    let center = solver.center;
    let radius = covering_radius(points, &center, Norm::Euclidean);
    Ball {
        center: Opinion::new(center),
        radius,
    }
}

struct Welzl<'a> {
    points: &'a [Vec<f64>],
    order: Vec<usize>,
    d: usize,
    support: Vec<usize>,
    center: Vec<f64>,
    radius_sq: f64,
}

impl Welzl<'_> {
    fn outside(&self, p: &[f64]) -> bool {
        if self.radius_sq < 0.0 {
            return true;
        }
        let dist_sq: f64 = p.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        let r = self.radius_sq.sqrt();
        dist_sq.sqrt() > r + 1e-12 * (1.0 + r)
    }

    fn recurse(&mut self, end: usize) {
        self.set_circumball();
        if self.support.len() == self.d + 1 {
            return;
        }
        for k in 0..end {
            let idx = self.order[k];
            if self.outside(&self.points[idx]) {
                self.support.push(idx);
                if circumball(self.points, &self.support).is_some() {
                    self.recurse(k);
                }
                self.support.pop();
                // move to front
                self.order[..=k].rotate_right(1);
            }
        }
    }

    fn set_circumball(&mut self) {
        match circumball(self.points, &self.support) {
            Some((c, r2)) => {
                self.center = c;
                self.radius_sq = r2;
            }
            None if self.support.is_empty() => self.radius_sq = -1.0,
            None => {}
        }
    }
}

/// Smallest ball with every support point on its boundary, centered in their
/// affine hull. `None` for an empty or affinely dependent support.
fn circumball(points: &[Vec<f64>], support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let (&first, rest) = support.split_first()?;
    let p0 = &points[first];
    let d = p0.len();
    if rest.is_empty() {
        return Some((p0.clone(), 0.0));
    }
    let q: Vec<Vec<f64>> = rest
        .iter()
        .map(|&i| points[i].iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    let m = q.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // Solve 2 Q Q^T lambda = |q|^2.
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut row: Vec<f64> = (0..m).map(|c| 2.0 * dot(&q[r], &q[c])).collect();
            row.push(dot(&q[r], &q[r]));
            row
        })
        .collect();
    let scale = a.iter().map(|r| r[r.len() - 1]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let lambda: Vec<f64> = (0..m).map(|r| a[r][m] / a[r][r]).collect();
    let mut center = p0.clone();
    for (l, qv) in lambda.iter().zip(&q) {
        for k in 0..d {
            center[k] += l * qv[k];
        }
    }
    let r2 = p0.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
    Some((center, r2))
}

/// Iterative farthest-point pushing (Badoiu-Clarkson) for high dimensions.
pub fn approx_enclosing_ball(points: &[Vec<f64>], tol: f64, max_iters: usize) -> Ball {
    let norm = Norm::Euclidean;
    let mut center = points[0].clone();
    let mut best_center = center.clone();
    let mut best_radius = covering_radius(points, &center, norm);
    for k in 1..=max_iters {
        let far = points
            .iter()
            .max_by(|a, b| norm.distance(a, &center).total_cmp(&norm.distance(b, &center)))
            .expect("nonempty");
        let r = norm.distance(far, &center);
        if r < best_radius {
            best_radius = r;
            best_center.clone_from(&center);
        }
        let step = 1.0 / (k as f64 + 1.0);
        if r * step <= tol * best_radius.max(f64::MIN_POSITIVE) {
            break;
        }
        for (c, f) in center.iter_mut().zip(far) {
            *c += (f - *c) * step;
        }
    }
    let r = covering_radius(points, &center, norm);
    if r < best_radius {
        best_radius = r;
        best_center = center;
    }
    Ball {
        center: Opinion::new(best_center),
        radius: best_radius,
    }
}

/// Outcome of checking `d/2 <= r <= (sqrt 3 / 2) d` for a space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusBounds {
    pub diameter: f64,
    pub radius: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// Checks the radius bounds at tolerance `1e-9`. Upper-bound failures are
/// logged, not returned as errors.
pub fn check_radius_bounds(ball: &Ball, diameter: f64) -> RadiusBounds {
    const TOL: f64 = 1e-9;
    let lower_holds = diameter / 2.0 <= ball.radius + TOL;
    let upper_holds = ball.radius <= 3f64.sqrt() / 2.0 * diameter + TOL;
    if !upper_holds {
        log::warn!(
            "radius {} exceeds sqrt(3)/2 * diameter {} for this space",
            ball.radius,
            diameter
        );
    }
    RadiusBounds {
        diameter,
        radius: ball.radius,
        lower_holds,
        upper_holds,
    }
}

/// Estimate of `E|X - center|` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CenterDistance {
    pub estimate: f64,
    pub std_error: f64,
}

/// `E|X - center|` for `X` drawn from `distribution` on `space`.
///
/// Intervals and point clouds are computed exactly; boxes and balls fall back
/// to a Monte Carlo mean over `n_samples` draws.
pub fn expected_center_distance<R: Rng + ?Sized>(
    space: &OpinionSpace,
    distribution: Distribution,
    center: &Opinion,
    norm: Norm,
    n_samples: usize,
    rng: &mut R,
) -> Result<CenterDistance> {
    space.validate()?;
    let Distribution::Uniform = distribution;
    if center.dim() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: center.dim(),
        });
    }
    match space {
        OpinionSpace::Interval { a, b } => {
            let c = center.as_slice()[0];
            let estimate = if c <= *a || c >= *b {
                ((a + b) / 2.0 - c).abs()
            } else {
                ((c - a).powi(2) + (b - c).powi(2)) / (2.0 * (b - a))
            };
            Ok(CenterDistance {
                estimate,
                std_error: 0.0,
            })
        }
        OpinionSpace::PointCloud { points } => {
            let estimate = points
                .iter()
                .map(|p| norm.distance(p, center.as_slice()))
                .sum::<f64>()
                / points.len() as f64;
            Ok(CenterDistance {
                estimate,
                std_error: 0.0,
            })
        }
        OpinionSpace::Box { .. } | OpinionSpace::Ball { .. } => {
            if n_samples < 2 {
                return Err(Error::Input(format!(
                    "Monte Carlo estimate needs at least 2 samples, got {n_samples}"
                )));
            }
            let mut buf = Vec::with_capacity(space.dimension());
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n_samples {
                buf.clear();
                space.sample_into(rng, &mut buf);
                let x = norm.distance(&buf, center.as_slice());
                sum += x;
                sum_sq += x * x;
            }
            let m = n_samples as f64;
            let mean = sum / m;
            let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
            Ok(CenterDistance {
                estimate: mean,
                std_error: (var / m).sqrt(),
            })
        }
    }
}
