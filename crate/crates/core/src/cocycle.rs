//! Derivative cocycle along words, the projection field it collapses onto,
//! and the two Lyapunov exponents.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GasketError, Result};
use crate::gasket::{code_to_point, Symbol, Word};
use crate::linalg::{CompensatedSum, Mat2, Svd2, Vec2};

/// Relative gap below which the two singular values count as equal.
const ISOTROPY_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct CocycleProduct {
    pub word: Word,
    pub h: Mat2,
    pub svd: Svd2,
}

/// `H = Dψ_w` and its singular value decomposition.
pub fn cocycle(w: &Word) -> Result<CocycleProduct> {
    if w.is_empty() {
        return Err(GasketError::domain("the cocycle needs a nonempty word"));
    }
    let h = w.linear();
    Ok(CocycleProduct {
        word: w.clone(),
        svd: h.svd(),
        h,
    })
}

/// `Dψ_w` rescaled to unit HS norm at every step, with the accumulated log scale.
///
/// The returned pair satisfies `Dψ_w = exp(log_scale)·p` and never underflows.
pub fn normalized_linear(w: &Word) -> (Mat2, f64) {
    let mut p = Mat2::IDENTITY;
    let mut log_scale = CompensatedSum::new();
    for s in w.symbols() {
        p = p * s.linear();
        let n = p.hs_norm();
        p = p.scale(1.0 / n);
        log_scale.add(n.ln());
    }
    (p, log_scale.value())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectionEstimate {
    pub v: Vec2,
    pub vl: Vec2,
    /// `H·ᵗH/‖H‖²_HS`.
    pub m: Mat2,
    pub residual_proj: f64,
    pub residual_rank1: f64,
    /// Set when `H` is (numerically) conformal and `v` is arbitrary.
    pub isotropic: bool,
}

impl ProjectionEstimate {
    pub fn projection(&self) -> Mat2 {
        Mat2::projection(self.v)
    }
}

/// Finite-depth estimate of `v` at the points coded by extensions of `w`.
pub fn projection_estimate(w: &Word) -> Result<ProjectionEstimate> {
    if w.is_empty() {
        return Err(GasketError::domain(
            "the projection estimate needs a nonempty word",
        ));
    }
    Ok(projection_from_linear(&normalized_linear(w).0))
}

/// Projection estimate for an arbitrary nonzero matrix; invariant under scaling of `h`.
pub fn projection_from_linear(h: &Mat2) -> ProjectionEstimate {
    let h = h.scale(1.0 / h.hs_norm());
    let svd = h.svd();
    let energy = svd.s1 * svd.s1 + svd.s2 * svd.s2;
    let isotropic = svd.s1 - svd.s2 <= ISOTROPY_TOL * svd.s1;
    let v = if isotropic {
        Vec2::E1
    } else {
        svd.u1.sign_normalized()
    };
    let hs = energy.sqrt();
    let vl = h.transpose().apply(v).scale(1.0 / hs);
    let residual_proj = if isotropic {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        std::f64::consts::SQRT_2 * svd.s2 * svd.s2 / energy
    };
    ProjectionEstimate {
        v,
        vl,
        m: (h * h.transpose()).scale(1.0 / energy),
        residual_proj,
        residual_rank1: if isotropic {
            (h.scale(1.0 / hs) - Mat2::outer(v, vl)).hs_norm()
        } else {
            svd.s2 / hs
        },
        isotropic,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VFieldRow {
    pub word: String,
    pub point: Vec2,
    pub v: Vec2,
    pub vl_norm: f64,
    pub residual_proj: f64,
    pub residual_rank1: f64,
    pub isotropic: bool,
}

/// One row per word: the representative point and the projection estimate there.
pub fn v_field_table(depth: usize, sample: &[Word]) -> Result<Vec<VFieldRow>> {
    if let Some(bad) = sample.iter().find(|w| w.len() != depth) {
        return Err(GasketError::domain(format!(
            "word {bad} has length {} but the table depth is {depth}",
            bad.len()
        )));
    }
    sample
        .par_iter()
        .map(|w| {
            let e = projection_estimate(w)?;
            Ok(VFieldRow {
                word: w.to_string(),
                point: code_to_point(w).0,
                v: e.v,
                vl_norm: e.vl.norm(),
                residual_proj: e.residual_proj,
                residual_rank1: e.residual_rank1,
                isotropic: e.isotropic,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap: f64,
    pub depth: usize,
    /// Set when the gap is not positive.
    pub flagged: bool,
}

/// Per-symbol log growth rates of the singular values of `Dψ_w`, for `|w| ≥ 2`.
pub fn lyapunov(w: &Word) -> Result<LyapunovReport> {
    let l = w.len();
    if l < 2 {
        return Err(GasketError::domain(format!(
            "Lyapunov exponents need a word of length at least 2, got {l}"
        )));
    }
    let (p, log_scale) = normalized_linear(w);
    let log_s1 = log_scale + p.svd().s1.ln();
    let counts = w.symbol_counts();
    let log_det: f64 = Symbol::ALL
        .iter()
        .map(|s| counts[s.index()] as f64 * s.linear().det().abs().ln())
        .sum();
    let log_s2 = log_det - log_s1;
    let lambda1 = log_s1 / l as f64;
    let lambda2 = log_s2 / l as f64;
    let gap = lambda1 - lambda2;
    Ok(LyapunovReport {
        lambda1,
        lambda2,
        gap,
        depth: l,
        flagged: gap.is_nan() || gap <= 0.0,
    })
}
