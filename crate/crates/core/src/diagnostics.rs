//! Boundary curves, distance to the boundary, cell anisotropy and the mass
//! of points lying well inside their cells.

use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::projection_estimate;
use crate::error::{GasketError, Result};
use crate::gasket::{
    self, branch, cell_diameter_bound, check_depth, code_to_point, dist_point_segment,
    dist_point_triangle, rank_of, AffineMap, Symbol, Word, DEFAULT_MAX_DEPTH, TRIANGLE_INRADIUS,
};
use crate::linalg::{CompensatedSum, Mat2, Vec2};
use crate::measure::{rng_for, sample_extension, sample_word};

/// Vertex pairs of the three sides, in the order AB, BC, AC.
pub const SIDES: [(Symbol, Symbol); 3] = [
    (Symbol::One, Symbol::Two),
    (Symbol::Two, Symbol::Three),
    (Symbol::One, Symbol::Three),
];

/// Depth of the cells whose centroids stand in for points when estimating θ₀.
pub const THETA0_CENTROID_DEPTH: usize = 8;

/// The three boundary curves, each drawn through the cells coded by words
/// over its two end symbols.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryApprox {
    pub depth: usize,
    pub sides: [Vec<Vec2>; 3],
}

impl BoundaryApprox {
    /// Hausdorff-distance bound between the polylines and the true curves.
    pub fn error_bar(&self) -> f64 {
        cell_diameter_bound(self.depth)
    }
}

pub fn boundary_polyline(depth: usize) -> Result<BoundaryApprox> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    let sides = SIDES.map(|(i, j)| side_chain(i, j, depth));
    Ok(BoundaryApprox { depth, sides })
}

fn side_chain(i: Symbol, j: Symbol, depth: usize) -> Vec<Vec2> {
    let mut pts = Vec::with_capacity((1 << depth) + 1);
    fn rec(i: Symbol, j: Symbol, map: AffineMap, remaining: usize, pts: &mut Vec<Vec2>) {
        if remaining == 0 {
            pts.push(map.apply(i.fixed_point()));
            return;
        }
        for s in [i, j] {
            rec(i, j, map.compose(&branch(s)), remaining - 1, pts);
        }
    }
    rec(i, j, AffineMap::IDENTITY, depth, &mut pts);
    pts.push(j.fixed_point());
    pts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub distance: f64,
    /// The distance to the true boundary lies within `distance ± error_bar`.
    pub error_bar: f64,
}

impl DistanceEstimate {
    pub fn lower(&self) -> f64 {
        (self.distance - self.error_bar).max(0.0)
    }
}

/// Distance from `p` to the boundary polylines of the given depth.
///
/// Each polyline segment lies in the triangle of its cell, so a search over
/// the cell tree that skips triangles farther than the best segment found
/// gives the same answer as scanning every segment.
pub fn dist_to_m(p: Vec2, depth: usize) -> DistanceEstimate {
    let mut best = f64::INFINITY;
    for (i, j) in SIDES {
        search_side(p, i, j, AffineMap::IDENTITY, depth, &mut best);
    }
    DistanceEstimate {
        distance: best,
        error_bar: cell_diameter_bound(depth),
    }
}

fn search_side(p: Vec2, i: Symbol, j: Symbol, map: AffineMap, remaining: usize, best: &mut f64) {
    if remaining == 0 {
        let d = dist_point_segment(p, map.apply(i.fixed_point()), map.apply(j.fixed_point()));
        *best = best.min(d);
        return;
    }
    let mut children = [i, j].map(|s| {
        let m = map.compose(&branch(s));
        (dist_point_triangle(p, &m.triangle()), m)
    });
    if children[1].0 < children[0].0 {
        children.swap(0, 1);
    }
    for (bound, m) in children {
        if bound < *best {
            search_side(p, i, j, m, remaining - 1, best);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaMembership {
    pub member: bool,
    /// Set when θ exceeds the inradius of the triangle, where no point can qualify.
    pub flagged: bool,
}

/// Whether `p` is at distance at least θ from the boundary, deciding on the
/// conservative side of the approximation error.
pub fn in_s_theta(p: Vec2, theta: f64, depth: usize) -> Result<ThetaMembership> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(GasketError::domain(format!(
            "theta must be positive, got {theta}"
        )));
    }
    if theta > TRIANGLE_INRADIUS {
        return Ok(ThetaMembership {
            member: false,
            flagged: true,
        });
    }
    let d = dist_to_m(p, depth);
    Ok(ThetaMembership {
        member: d.distance - d.error_bar >= theta,
        flagged: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnisotropyRecord {
    pub word: String,
    pub n: usize,
    pub v: Vec2,
    /// Cell vertices relabeled as (A, B, C) with AB the longest side along `v`.
    pub labeled_vertices: [Vec2; 3],
    pub shape_ratio: f64,
    /// Alignment of the coded point with A and B, computed when it lies θ-deep in the cell.
    pub vertex_alignment: Option<f64>,
    pub theta_member: bool,
    /// Set when the longest projection vanishes and `shape_ratio` is infinite.
    pub flagged: bool,
}

/// Relabel the triangle so that AB has the longest projection on `v`
/// (ties go to the earlier pair among 01, 12, 20) and return the ratio of
/// the longest orthogonal side component to that projection.
pub fn shape_ratio(vertices: &[Vec2; 3], v: Vec2) -> ([Vec2; 3], f64) {
    let pairs = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
    let proj = |a: usize, b: usize| (vertices[a] - vertices[b]).dot(v).abs();
    let mut pick = pairs[0];
    for &cand in &pairs[1..] {
        if proj(cand.0, cand.1) > proj(pick.0, pick.1) {
            pick = cand;
        }
    }
    let along = proj(pick.0, pick.1);
    let perp = v.perp();
    let across = pairs
        .iter()
        .map(|&(a, b, _)| (vertices[a] - vertices[b]).dot(perp).abs())
        .fold(0.0, f64::max);
    let labeled = [vertices[pick.0], vertices[pick.1], vertices[pick.2]];
    let ratio = if along > 0.0 {
        across / along
    } else {
        f64::INFINITY
    };
    (labeled, ratio)
}

/// Largest of the two ratios `‖P⊥(x−X)‖/‖P(x−X)‖` for `X` in {A, B}.
pub fn vertex_alignment(x: Vec2, a: Vec2, b: Vec2, v: Vec2) -> f64 {
    let perp = v.perp();
    [a, b]
        .iter()
        .map(|&y| {
            let d = x - y;
            let along = d.dot(v).abs();
            if along > 0.0 {
                d.dot(perp).abs() / along
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

pub fn anisotropy(w: &Word, n: usize) -> Result<AnisotropyRecord> {
    anisotropy_with_theta(w, n, None)
}

/// Anisotropy of the level-`n` cell along `w`, with `v` estimated from all of `w`.
///
/// With `theta = Some((θ, boundary_depth))` the coded point is pulled back
/// to the reference triangle and, if it lies in `S_θ`, `vertex_alignment` is filled in.
pub fn anisotropy_with_theta(
    w: &Word,
    n: usize,
    theta: Option<(f64, usize)>,
) -> Result<AnisotropyRecord> {
    if n > w.len() {
        return Err(GasketError::domain(format!(
            "cell level {n} exceeds the word length {}",
            w.len()
        )));
    }
    let v = projection_estimate(w)?.v;
    let vertices = w.prefix(n).map().triangle();
    let (labeled, ratio) = shape_ratio(&vertices, v);
    let mut theta_member = false;
    let mut alignment = None;
    if let Some((theta, boundary_depth)) = theta {
        let pulled_back = code_to_point(&w.suffix_from(n)).0;
        theta_member = in_s_theta(pulled_back, theta, boundary_depth)?.member;
        if theta_member {
            let x = code_to_point(w).0;
            alignment = Some(vertex_alignment(x, labeled[0], labeled[1], v));
        }
    }
    Ok(AnisotropyRecord {
        word: w.to_string(),
        n,
        v,
        labeled_vertices: labeled,
        shape_ratio: ratio,
        vertex_alignment: alignment,
        theta_member,
        flagged: !ratio.is_finite(),
    })
}

/// Distances to the boundary of the centroids of every cell at one depth,
/// indexed by word rank. Membership tests against the table replace
/// repeated tree searches in the Monte Carlo loops.
#[derive(Clone, Debug)]
pub struct CentroidDistances {
    pub depth: usize,
    pub boundary_depth: usize,
    pub distances: Vec<f64>,
    pub error_bar: f64,
}

impl CentroidDistances {
    pub fn new(depth: usize, boundary_depth: usize) -> Result<Self> {
        check_depth(depth, DEFAULT_MAX_DEPTH)?;
        check_depth(boundary_depth, DEFAULT_MAX_DEPTH)?;
        let distances = gasket::fold_cells(depth, Vec::new, |acc: &mut Vec<f64>, _, map| {
            let c = gasket::triangle_centroid(&map.triangle());
            acc.push(dist_to_m(c, boundary_depth).distance);
        })
        .into_iter()
        .flatten()
        .collect();
        Ok(CentroidDistances {
            depth,
            boundary_depth,
            distances,
            error_bar: cell_diameter_bound(boundary_depth),
        })
    }

    /// Conservative distance of the centroid of the cell `symbols` (of length `depth`).
    pub fn lower(&self, symbols: &[Symbol]) -> f64 {
        self.distances[rank_of(symbols)] - self.error_bar
    }

    /// Largest θ for which some tabulated centroid is certified to lie in `S_θ`.
    pub fn theta0(&self) -> f64 {
        self.distances
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            - self.error_bar
    }
}

/// Empirical θ₀: the largest certified distance to the boundary over
/// centroids of the cells at [`THETA0_CENTROID_DEPTH`].
pub fn theta0_estimate(boundary_depth: usize) -> Result<f64> {
    Ok(CentroidDistances::new(THETA0_CENTROID_DEPTH, boundary_depth)?.theta0())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaConfig {
    pub theta: f64,
    /// Cell level at which mass ratios are measured.
    pub n: usize,
    /// Number of κ-sampled points (and hence cells).
    pub samples: usize,
    pub seed: u64,
    /// Conditional draws per cell when estimating its mass ratio.
    pub per_cell: usize,
    /// Resolution, in symbols below the cell, of the pulled-back test points.
    pub inner_depth: usize,
    pub boundary_depth: usize,
    /// The `F_θ` condition is searched over levels `n..=n + f_range`.
    pub f_range: usize,
}

impl ThetaConfig {
    pub fn new(theta: f64, n: usize, samples: usize, seed: u64) -> Self {
        ThetaConfig {
            theta,
            n,
            samples,
            seed,
            per_cell: 100,
            inner_depth: 10,
            boundary_depth: 12,
            f_range: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaReport {
    pub theta: f64,
    pub n: usize,
    pub samples: usize,
    /// Estimate of `Σ_{|w|=n} κ(ψ_w(S_θ))`, the κ-weighted mean cell ratio.
    pub ratio_mass: f64,
    pub ratio_mass_se: f64,
    /// `1 −` the smallest sampled cell ratio.
    pub delta_hat: f64,
    pub empirical_f_theta_mass: f64,
    pub f_theta_se: f64,
    pub theta0: f64,
}

pub fn theta_mass_report(cfg: &ThetaConfig) -> Result<ThetaReport> {
    let table = CentroidDistances::new(cfg.inner_depth, cfg.boundary_depth)?;
    theta_mass_report_with(&table, cfg)
}

/// Mass ratios of `S_θ` inside level-`n` cells and the empirical mass of `F_θ`.
///
/// Sample `i` draws a κ-distributed word of length `n + f_range + inner_depth`
/// from `rng_for(seed, i)`; its cells at levels `n..=n+f_range` get their ratios
/// from `per_cell` conditional draws from a second generator
/// `rng_for(seed ^ MIX, i)`. A point is pulled back into the reference
/// triangle as the centroid of the next `inner_depth` symbols of its word.
pub fn theta_mass_report_with(table: &CentroidDistances, cfg: &ThetaConfig) -> Result<ThetaReport> {
    const MIX: u64 = 0x9e37_79b9_7f4a_7c15;
    if cfg.theta.is_nan() || cfg.theta <= 0.0 {
        return Err(GasketError::domain(format!(
            "theta must be positive, got {}",
            cfg.theta
        )));
    }
    if cfg.samples == 0 || cfg.per_cell == 0 {
        return Err(GasketError::domain(
            "samples and per_cell must be at least 1",
        ));
    }
    if table.boundary_depth != cfg.boundary_depth || table.depth != cfg.inner_depth {
        return Err(GasketError::domain(
            "distance table does not match the configuration",
        ));
    }
    let theta0 = table.theta0();
    if cfg.theta > theta0 {
        return Err(GasketError::EmptySTheta {
            theta: cfg.theta,
            theta0,
        });
    }
    let levels = cfg.f_range + 1;
    let total = cfg.n + cfg.f_range + cfg.inner_depth;
    check_depth(cfg.n + cfg.f_range, DEFAULT_MAX_DEPTH)?;

    // Per sample: the cell ratio at each level and whether the point is θ-deep there.
    let per_sample: Vec<(Vec<f64>, Vec<bool>)> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let word = sample_word(&mut rng_for(cfg.seed, i), total);
            let symbols = word.symbols();
            let mut inner_rng = rng_for(cfg.seed ^ MIX, i);
            let mut ratios = Vec::with_capacity(levels);
            let mut deep = Vec::with_capacity(levels);
            let mut linear = Mat2::IDENTITY;
            for s in &symbols[..cfg.n] {
                linear = (linear * s.linear()).scale(1.0 / 0.6);
            }
            for m in cfg.n..cfg.n + levels {
                if m > cfg.n {
                    linear = (linear * symbols[m - 1].linear()).scale(1.0 / 0.6);
                }
                let hits = (0..cfg.per_cell)
                    .filter(|_| {
                        let u = sample_extension(&mut inner_rng, &linear, cfg.inner_depth);
                        table.lower(u.symbols()) >= cfg.theta
                    })
                    .count();
                ratios.push(hits as f64 / cfg.per_cell as f64);
                deep.push(table.lower(&symbols[m..m + cfg.inner_depth]) >= cfg.theta);
            }
            (ratios, deep)
        })
        .collect();

    let count = cfg.samples as f64;
    let base: Vec<f64> = per_sample.iter().map(|(r, _)| r[0]).collect();
    let mean = base.iter().copied().collect::<CompensatedSum>().value() / count;
    let var = if cfg.samples > 1 {
        base.iter()
            .map(|r| (r - mean).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / (count - 1.0)
    } else {
        0.0
    };
    let delta_hat = 1.0 - base.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = 1.0 - 2.0 * delta_hat;
    let in_f = per_sample
        .iter()
        .filter(|(ratios, deep)| ratios.iter().zip(deep).any(|(&r, &d)| d && r >= threshold))
        .count() as f64;
    let f_mass = in_f / count;
    Ok(ThetaReport {
        theta: cfg.theta,
        n: cfg.n,
        samples: cfg.samples,
        ratio_mass: mean,
        ratio_mass_se: (var / count).sqrt(),
        delta_hat,
        empirical_f_theta_mass: f_mass,
        f_theta_se: (f_mass * (1.0 - f_mass) / count).sqrt(),
        theta0,
    })
}
