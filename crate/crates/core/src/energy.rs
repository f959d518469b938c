//! Cell quadratures of the Dirichlet form, the local Lipschitz estimator
//! and the comparison of the pre-Cheeger energy with half the energy.

use serde::Serialize;

use crate::cocycle::projection_from_linear;
use crate::error::{GasketError, Result};
use crate::fields::{Composed, ScalarField};
use crate::gasket::{
    self, branch, check_depth, triangle_centroid, AffineMap, Symbol, Word, DEFAULT_MAX_DEPTH,
};
use crate::linalg::{CompensatedSum, Vec2};
use crate::measure::{tau_from_linear, TauNormalization, BETA};

/// Denominator floor for relative quantities.
pub const ENERGY_FLOOR: f64 = 1e-12;

/// Share of flagged projection estimates above which a warning is raised.
pub const FLAGGED_WARNING_SHARE: f64 = 0.01;

/// Relative slack of the pointwise lower bound on the local Lipschitz constant.
pub const POINTWISE_TOL: f64 = 1e-9;

fn sum_cells<F>(depth: usize, per_cell: F) -> f64
where
    F: Fn(&[Symbol], &AffineMap) -> f64 + Sync,
{
    gasket::fold_cells(depth, CompensatedSum::new, |acc, w, m| {
        acc.add(per_cell(w, m))
    })
    .iter()
    .map(CompensatedSum::value)
    .collect::<CompensatedSum>()
    .value()
}

/// `Σ_{|w|=depth} ⟨∇f(x_w), τ[w]·∇g(x_w)⟩` with `x_w` the centroid of the cell.
pub fn dirichlet_matrix(
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    depth: usize,
    norm: TauNormalization,
) -> Result<f64> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    Ok(sum_cells(depth, |_, m| {
        let x = triangle_centroid(&m.triangle());
        let tau = tau_from_linear(&m.linear, depth, norm);
        f.gradient(x).dot(tau.apply(g.gradient(x)))
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VFieldEnergy {
    pub value: f64,
    pub evaluated: usize,
    /// Cells skipped because their projection estimate was degenerate.
    pub flagged: usize,
    pub warning: bool,
}

/// `Σ_w κ[w]·⟨∇f(x_w), P_{v̂(w)}·∇g(x_w)⟩`, skipping cells whose `v̂` is degenerate.
pub fn dirichlet_vfield(
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    depth: usize,
    norm: TauNormalization,
) -> Result<VFieldEnergy> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    let parts = gasket::fold_cells(
        depth,
        || (CompensatedSum::new(), 0usize, 0usize),
        |(sum, evaluated, flagged), _, m| {
            let est = projection_from_linear(&m.linear);
            if est.isotropic {
                *flagged += 1;
                return;
            }
            *evaluated += 1;
            let x = triangle_centroid(&m.triangle());
            let kappa = tau_from_linear(&m.linear, depth, norm).trace();
            sum.add(kappa * f.gradient(x).dot(est.v) * g.gradient(x).dot(est.v));
        },
    );
    let mut total = CompensatedSum::new();
    let (mut evaluated, mut flagged) = (0, 0);
    for (s, e, fl) in parts {
        total.add(s.value());
        evaluated += e;
        flagged += fl;
    }
    let cells = (evaluated + flagged) as f64;
    Ok(VFieldEnergy {
        value: total.value(),
        evaluated,
        flagged,
        warning: flagged as f64 > FLAGGED_WARNING_SHARE * cells,
    })
}

/// Relative defect of `ℰ_d(f) = (1/β)·Σᵢ ℰ_d(f∘ψᵢ)`.
///
/// The right side is assembled from the composed fields, so it equals the
/// depth `d + 1` quadrature and the residual is pure quadrature error.
pub fn self_similarity_residual(
    f: &dyn ScalarField,
    depth: usize,
    norm: TauNormalization,
) -> Result<f64> {
    let lhs = dirichlet_matrix(f, f, depth, norm)?;
    let mut rhs = CompensatedSum::new();
    for s in Symbol::ALL {
        let composed = Composed::new(f, branch(s));
        rhs.add(dirichlet_matrix(&composed, &composed, depth, norm)?);
    }
    let rhs = rhs.value() / BETA;
    Ok((lhs - rhs).abs() / lhs.max(ENERGY_FLOOR))
}

/// Distinct vertices of the `3^sub_depth` sub-cells of the reference triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SubVertices {
    pub sub_depth: usize,
    pub points: Vec<Vec2>,
}

impl SubVertices {
    pub fn new(sub_depth: usize) -> Result<Self> {
        if sub_depth == 0 {
            return Err(GasketError::domain("sub_depth must be at least 1"));
        }
        check_depth(sub_depth, DEFAULT_MAX_DEPTH)?;
        let mut points: Vec<Vec2> = Vec::new();
        gasket::for_each_cell(sub_depth, |_, m| {
            for v in m.triangle() {
                // Junction vertices are shared by two sub-cells.
                if !points.iter().any(|q| q.distance(v) <= 1e-12) {
                    points.push(v);
                }
            }
        });
        Ok(SubVertices { sub_depth, points })
    }
}

/// Largest difference quotient of `f` over pairs of distinct points.
pub fn max_chord_slope(f: &dyn ScalarField, points: &[Vec2]) -> f64 {
    let values: Vec<f64> = points.iter().map(|&p| f.value(p)).collect();
    let mut best: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].distance(points[j]);
            if d > 0.0 {
                best = best.max((values[i] - values[j]).abs() / d);
            }
        }
    }
    best
}

fn lip_in_cell(f: &dyn ScalarField, map: &AffineMap, sub: &SubVertices) -> f64 {
    let mapped: Vec<Vec2> = sub.points.iter().map(|&p| map.apply(p)).collect();
    max_chord_slope(f, &mapped)
}

/// Local Lipschitz estimate on the cell `ψ_w(S)` from chords between
/// vertices of its sub-cells `sub_depth` levels down.
pub fn lip_a_estimate(f: &dyn ScalarField, w: &Word, sub_depth: usize) -> Result<f64> {
    check_depth(w.len() + sub_depth, DEFAULT_MAX_DEPTH)?;
    let sub = SubVertices::new(sub_depth)?;
    Ok(lip_in_cell(f, &w.map(), &sub))
}

/// `½·Σ_{|w|=depth} κ[w]·lip_a_estimate(f, w, sub_depth)²`.
pub fn cheeger_pre(
    f: &dyn ScalarField,
    depth: usize,
    sub_depth: usize,
    norm: TauNormalization,
) -> Result<f64> {
    check_depth(depth + sub_depth, DEFAULT_MAX_DEPTH)?;
    let sub = SubVertices::new(sub_depth)?;
    Ok(0.5
        * sum_cells(depth, |_, m| {
            let kappa = tau_from_linear(&m.linear, depth, norm).trace();
            let lip = lip_in_cell(f, m, &sub);
            kappa * lip * lip
        }))
}

/// Per-cell pair for the one-sided check `lip ≥ |⟨∇f, v̂⟩|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwisePair {
    pub word: String,
    pub lip: f64,
    pub directional: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointwiseSummary {
    pub evaluated: usize,
    pub violations: usize,
    /// Smallest `lip − |⟨∇f, v̂⟩|` over evaluated cells.
    pub min_margin: f64,
    /// Tolerance applied: `POINTWISE_TOL·max |∇f(x_w)|`.
    pub tolerance: f64,
}

impl PointwiseSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub field: String,
    pub depth: usize,
    pub sub_depth: usize,
    pub c: f64,
    pub dirichlet_matrix: f64,
    pub dirichlet_vfield: f64,
    pub vfield_flagged: usize,
    pub cheeger_pre: f64,
    pub half_dirichlet: f64,
    pub relative_gap: f64,
    pub pointwise: PointwiseSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PointwisePair>>,
}

#[derive(Default)]
struct CellTotals {
    matrix: CompensatedSum,
    vfield: CompensatedSum,
    cheeger: CompensatedSum,
    flagged: usize,
    // (lip − |⟨∇f, v̂⟩|, |∇f|) per evaluated cell
    margins: Vec<(f64, f64)>,
    pairs: Vec<PointwisePair>,
}

/// All estimators in one pass over the cells at `depth`.
pub fn energy_report(
    f: &dyn ScalarField,
    depth: usize,
    sub_depth: usize,
    norm: TauNormalization,
    keep_pairs: bool,
) -> Result<EnergyReport> {
    check_depth(depth + sub_depth, DEFAULT_MAX_DEPTH)?;
    let sub = SubVertices::new(sub_depth)?;
    let parts = gasket::fold_cells(depth, CellTotals::default, |acc, w, m| {
        let x = triangle_centroid(&m.triangle());
        let grad = f.gradient(x);
        let tau = tau_from_linear(&m.linear, depth, norm);
        let kappa = tau.trace();
        let lip = lip_in_cell(f, m, &sub);
        acc.matrix.add(grad.dot(tau.apply(grad)));
        acc.cheeger.add(kappa * lip * lip);
        let est = projection_from_linear(&m.linear);
        if est.isotropic {
            acc.flagged += 1;
            return;
        }
        let directional = grad.dot(est.v).abs();
        acc.vfield.add(kappa * directional * directional);
        acc.margins.push((lip - directional, grad.norm()));
        if keep_pairs {
            acc.pairs.push(PointwisePair {
                word: Word::new(w.to_vec()).to_string(),
                lip,
                directional,
            });
        }
    });

    let mut matrix = CompensatedSum::new();
    let mut vfield = CompensatedSum::new();
    let mut cheeger = CompensatedSum::new();
    let mut flagged = 0;
    let mut margins = Vec::new();
    let mut pairs = Vec::new();
    for part in parts {
        matrix.add(part.matrix.value());
        vfield.add(part.vfield.value());
        cheeger.add(part.cheeger.value());
        flagged += part.flagged;
        margins.extend(part.margins);
        pairs.extend(part.pairs);
    }
    let grad_sup = margins.iter().map(|&(_, g)| g).fold(0.0, f64::max);
    let tolerance = POINTWISE_TOL * grad_sup;
    let pointwise = PointwiseSummary {
        evaluated: margins.len(),
        violations: margins.iter().filter(|&&(m, _)| m < -tolerance).count(),
        min_margin: margins
            .iter()
            .map(|&(m, _)| m)
            .fold(f64::INFINITY, f64::min),
        tolerance,
    };
    let dirichlet = matrix.value();
    let half = 0.5 * dirichlet;
    let pch = 0.5 * cheeger.value();
    Ok(EnergyReport {
        field: f.name().to_string(),
        depth,
        sub_depth,
        c: norm.c(),
        dirichlet_matrix: dirichlet,
        dirichlet_vfield: vfield.value(),
        vfield_flagged: flagged,
        cheeger_pre: pch,
        half_dirichlet: half,
        relative_gap: (pch - half).abs() / half.max(ENERGY_FLOOR),
        pointwise,
        pairs: keep_pairs.then_some(pairs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::projection_estimate;
    use crate::fields::{battery, battery_field, FnField, LinearField};
    use crate::gasket::SQRT_3;
    use crate::measure::sample_kappa;
    use proptest::prelude::*;

    fn n() -> TauNormalization {
        TauNormalization::default()
    }

    #[test]
    fn linear_exactness() {
        let dirs = [Vec2::E1, Vec2::E2, Vec2::new(1.0, 1.0)];
        for depth in 1..=12 {
            for a in dirs {
                for b in dirs {
                    let fa = LinearField::new("a", a);
                    let fb = LinearField::new("b", b);
                    let e = dirichlet_matrix(&fa, &fb, depth, n()).unwrap();
                    assert!((e - 0.5 * a.dot(b)).abs() <= 1e-12, "depth {depth}");
                }
            }
        }
    }

    #[test]
    fn constant_field_has_no_energy() {
        let c = battery_field("const").unwrap();
        assert_eq!(
            dirichlet_matrix(c.as_ref(), c.as_ref(), 5, n()).unwrap(),
            0.0
        );
        assert_eq!(
            dirichlet_vfield(c.as_ref(), c.as_ref(), 5, n())
                .unwrap()
                .value,
            0.0
        );
        assert_eq!(self_similarity_residual(c.as_ref(), 5, n()).unwrap(), 0.0);
        assert_eq!(cheeger_pre(c.as_ref(), 5, 2, n()).unwrap(), 0.0);
        assert_eq!(
            lip_a_estimate(c.as_ref(), &"12".parse().unwrap(), 2).unwrap(),
            0.0
        );
        let r = energy_report(c.as_ref(), 5, 2, n(), false).unwrap();
        assert_eq!(r.relative_gap, 0.0);
        assert_eq!(r.pointwise.violations, 0);
    }

    #[test]
    fn vfield_approaches_matrix_energy() {
        let sq = battery_field("x1_sq").unwrap();
        let f = sq.as_ref();
        let gaps: Vec<f64> = [4, 8, 12]
            .iter()
            .map(|&d| {
                let m = dirichlet_matrix(f, f, d, n()).unwrap();
                let v = dirichlet_vfield(f, f, d, n()).unwrap();
                assert_eq!(v.flagged, 0);
                (v.value - m).abs()
            })
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }

    #[test]
    fn vfield_is_exact_for_linear_fields() {
        // The trace-free parts s₂²·(P_{u₁} − P_{u₂}) of the cells cancel level by level.
        for a in [Vec2::E1, Vec2::E2, Vec2::new(1.0, 1.0)] {
            let fa = LinearField::new("a", a);
            for d in [1, 4, 8, 12] {
                let v = dirichlet_vfield(&fa, &fa, d, n()).unwrap().value;
                assert!((v - 0.5 * a.norm_sq()).abs() <= 1e-12, "{a} depth {d}: {v}");
            }
        }
    }

    #[test]
    fn root_cell_is_flagged_in_vfield() {
        let x1 = battery_field("x1").unwrap();
        let v = dirichlet_vfield(x1.as_ref(), x1.as_ref(), 0, n()).unwrap();
        assert_eq!((v.flagged, v.evaluated), (1, 0));
        assert!(v.warning);
    }

    #[test]
    fn self_similarity() {
        for name in ["x1", "x2"] {
            let f = battery_field(name).unwrap();
            for d in [1, 4, 8] {
                assert!(self_similarity_residual(f.as_ref(), d, n()).unwrap() <= 1e-12);
            }
        }
        for name in ["x1_sq", "sin_cos"] {
            let f = battery_field(name).unwrap();
            let r6 = self_similarity_residual(f.as_ref(), 6, n()).unwrap();
            let r10 = self_similarity_residual(f.as_ref(), 10, n()).unwrap();
            assert!(r10 <= r6, "{name}: {r6} {r10}");
        }
    }

    #[test]
    fn self_similarity_equals_next_depth() {
        let f = battery_field("sin_cos").unwrap();
        let e5 = dirichlet_matrix(f.as_ref(), f.as_ref(), 5, n()).unwrap();
        let e6 = dirichlet_matrix(f.as_ref(), f.as_ref(), 6, n()).unwrap();
        let r = self_similarity_residual(f.as_ref(), 5, n()).unwrap();
        assert!((r - (e5 - e6).abs() / e5).abs() <= 1e-12);
    }

    #[test]
    fn sub_vertex_counts() {
        assert_eq!(SubVertices::new(1).unwrap().points.len(), 6);
        assert_eq!(SubVertices::new(2).unwrap().points.len(), 15);
        assert!(SubVertices::new(0).is_err());
    }

    #[test]
    fn chord_slopes_on_reference_triangle() {
        let x1 = battery_field("x1").unwrap();
        let corners = gasket::BOUNDARY.to_vec();
        assert!((max_chord_slope(x1.as_ref(), &corners) - SQRT_3 / 2.0).abs() < 1e-15);
        // Ā and the junction (4/5, 0) lie on a horizontal chord.
        let lip = lip_a_estimate(x1.as_ref(), &Word::empty(), 1).unwrap();
        assert!((lip - 1.0).abs() < 1e-15);
        assert!(lip_a_estimate(x1.as_ref(), &Word::repeat(Symbol::One, 19), 2).is_err());
    }

    #[test]
    fn lip_matches_directional_derivative_on_deep_cells() {
        // Shares frozen from a calibration run with these seeds: 562 of 1000
        // cells at depth 10 and 959 at depth 18.
        let a = Vec2::E1;
        let f = LinearField::new("x1", a);
        let share_within = |depth: usize| {
            let words = sample_kappa(31, depth, 1000).unwrap();
            words
                .iter()
                .filter(|w| {
                    let lip = lip_a_estimate(&f, w, 2).unwrap();
                    let target = a.dot(projection_estimate(w).unwrap().v).abs();
                    (lip - target).abs() <= 0.05 * target
                })
                .count()
        };
        let shares = [
            share_within(6),
            share_within(10),
            share_within(14),
            share_within(18),
        ];
        assert!(shares.windows(2).all(|p| p[1] > p[0]), "{shares:?}");
        assert!(shares[1] >= 500, "{shares:?}");
        assert!(shares[3] >= 900, "{shares:?}");
    }

    #[test]
    fn linear_cheeger_energy_trends_to_quarter() {
        let x1 = battery_field("x1").unwrap();
        let vals: Vec<f64> = [4, 8, 12]
            .iter()
            .map(|&d| cheeger_pre(x1.as_ref(), d, 2, n()).unwrap())
            .collect();
        for p in vals.windows(2) {
            assert!((p[1] - 0.25).abs() < (p[0] - 0.25).abs(), "{vals:?}");
        }
    }

    #[test]
    fn report_examples() {
        let x1 = battery_field("x1").unwrap();
        let r = energy_report(x1.as_ref(), 6, 2, n(), true).unwrap();
        assert!((r.half_dirichlet - 0.25).abs() <= 1e-12);
        assert!((r.cheeger_pre - cheeger_pre(x1.as_ref(), 6, 2, n()).unwrap()).abs() <= 1e-13);
        let v = dirichlet_vfield(x1.as_ref(), x1.as_ref(), 6, n()).unwrap();
        assert!((r.dirichlet_vfield - v.value).abs() <= 1e-13);
        let pairs = r.pairs.unwrap();
        assert_eq!(pairs.len(), 729);
        assert_eq!(pairs[0].word, "111111");
        assert_eq!(r.pointwise.evaluated, 729);
    }

    #[test]
    fn relative_gaps_shrink() {
        for f in battery() {
            if f.name() == "const" {
                continue;
            }
            let g: Vec<f64> = [4, 6, 8]
                .iter()
                .map(|&d| {
                    energy_report(f.as_ref(), d, 2, n(), false)
                        .unwrap()
                        .relative_gap
                })
                .collect();
            assert!(g[1] < g[0] && g[2] < g[1], "{}: {g:?}", f.name());
        }
    }

    #[test]
    fn positivity() {
        for f in battery() {
            assert!(dirichlet_matrix(f.as_ref(), f.as_ref(), 5, n()).unwrap() >= 0.0);
            assert!(cheeger_pre(f.as_ref(), 5, 2, n()).unwrap() >= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dirichlet_is_symmetric(p in proptest::array::uniform6(-2.0..2.0f64), q in proptest::array::uniform6(-2.0..2.0f64), depth in 1usize..7) {
            let poly = |c: [f64; 6]| FnField::new(
                "poly",
                move |x: Vec2| c[0] + c[1] * x.x1 + c[2] * x.x2 + c[3] * x.x1 * x.x1 + c[4] * x.x1 * x.x2 + c[5] * x.x2 * x.x2,
                move |x: Vec2| Vec2::new(c[1] + 2.0 * c[3] * x.x1 + c[4] * x.x2, c[2] + c[4] * x.x1 + 2.0 * c[5] * x.x2),
            );
            let f = poly(p);
            let g = poly(q);
            let fg = dirichlet_matrix(&f, &g, depth, n()).unwrap();
            let gf = dirichlet_matrix(&g, &f, depth, n()).unwrap();
            prop_assert!((fg - gf).abs() <= 1e-12);
            prop_assert!(dirichlet_matrix(&f, &f, depth, n()).unwrap() >= 0.0);
        }
    }
}
