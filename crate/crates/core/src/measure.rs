//! Transfer operator on constant matrix fields, the matrix measure `τ` on
//! cells, its trace `κ`, and exact sampling of `κ`-distributed words.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GasketError, Result};
use crate::gasket::{self, check_depth, Symbol, Word, DEFAULT_MAX_DEPTH};
use crate::linalg::{CompensatedSum, Mat2};

/// Principal eigenvalue of the transfer operator, `Σ ᵗTᵢ·Tᵢ = (3/5)·Id`.
pub const BETA: f64 = 0.6;

/// Scale of the total matrix mass: `τ(S) = c·Id`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauNormalization {
    c: f64,
}

impl TauNormalization {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(GasketError::config(
                "c",
                format!("must be a positive number, got {c}"),
            ));
        }
        Ok(TauNormalization { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Total scalar mass `κ(S) = 2c`.
    pub fn total_kappa(&self) -> f64 {
        2.0 * self.c
    }
}

impl Default for TauNormalization {
    fn default() -> Self {
        TauNormalization { c: 0.5 }
    }
}

/// `A ↦ Σᵢ ᵗTᵢ·A·Tᵢ`.
pub fn ruelle_apply(a: &Mat2) -> Mat2 {
    Symbol::ALL.iter().fold(Mat2::ZERO, |acc, s| {
        let t = s.linear();
        acc + t.transpose() * *a * t
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenResult {
    pub beta: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Eigenmatrix scaled to trace 2, so that it reads `Id` when it is the identity.
    pub eigenmatrix: Mat2,
}

/// Power iteration started from the identity.
pub fn principal_eigenvalue(tol: f64, max_iter: usize) -> Result<EigenResult> {
    principal_eigenvalue_from(Mat2::IDENTITY, tol, max_iter)
}

/// Power iteration on symmetric matrices from an arbitrary symmetric start.
pub fn principal_eigenvalue_from(start: Mat2, tol: f64, max_iter: usize) -> Result<EigenResult> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(GasketError::domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let norm = start.hs_norm();
    if !(norm > 0.0 && start.is_finite()) {
        return Err(GasketError::domain(
            "start matrix must be finite and nonzero",
        ));
    }
    let mut q = start.scale(1.0 / norm);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter.max(1) {
        let lq = ruelle_apply(&q);
        // The operator is self-adjoint for the Hilbert-Schmidt pairing.
        let beta = q.hs_dot(&lq);
        residual = (lq - q.scale(beta)).hs_norm();
        if residual <= tol {
            let trace = q.trace();
            let eigenmatrix = if trace != 0.0 {
                q.scale(2.0 / trace)
            } else {
                q
            };
            return Ok(EigenResult {
                beta,
                iterations: it,
                residual,
                eigenmatrix,
            });
        }
        q = lq.scale(1.0 / lq.hs_norm());
    }
    Err(GasketError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellMeasure {
    pub word: Word,
    pub tau: Mat2,
    pub kappa: f64,
}

/// `β^{−l}·D·(c·Id)·ᵗD` for a word of length `len` with linear part `d`.
pub fn tau_from_linear(d: &Mat2, len: usize, norm: TauNormalization) -> Mat2 {
    (*d * d.transpose()).scale(norm.c() * BETA.powi(-(len as i32)))
}

pub fn tau_cell(w: &Word, norm: TauNormalization) -> Result<CellMeasure> {
    check_depth(w.len(), DEFAULT_MAX_DEPTH)?;
    let tau = tau_from_linear(&w.linear(), w.len(), norm);
    Ok(CellMeasure {
        word: w.clone(),
        kappa: tau.trace(),
        tau,
    })
}

/// Largest HS residual of `τ[u] = βⁿ·D⁻¹·τ[w·u]·ᵗD⁻¹` over the test words, with `D = Dψ_w`.
pub fn verify_pushforward(w: &Word, test_words: &[Word]) -> Result<f64> {
    let norm = TauNormalization::default();
    let inv = w
        .linear()
        .inverse()
        .ok_or_else(|| GasketError::domain("Dψ_w is singular"))?;
    let scale = BETA.powi(w.len() as i32);
    let mut worst: f64 = 0.0;
    for u in test_words {
        let direct = tau_cell(u, norm)?.tau;
        let pushed = inv
            .congruence(&tau_cell(&w.concat(u), norm)?.tau)
            .scale(scale);
        worst = worst.max((direct - pushed).hs_norm());
    }
    Ok(worst)
}

/// Totals over every cell at one depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthMass {
    pub depth: usize,
    pub tau_sum: Mat2,
    pub kappa_sum: f64,
    pub max_kappa: f64,
}

pub fn depth_mass(depth: usize, norm: TauNormalization) -> Result<DepthMass> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    let parts = gasket::fold_cells(
        depth,
        || ([CompensatedSum::new(); 4], CompensatedSum::new(), 0.0f64),
        |(tau, kappa, max), _, map| {
            let t = tau_from_linear(&map.linear, depth, norm);
            tau[0].add(t.a11);
            tau[1].add(t.a12);
            tau[2].add(t.a21);
            tau[3].add(t.a22);
            kappa.add(t.trace());
            *max = max.max(t.trace());
        },
    );
    let mut tau = [CompensatedSum::new(); 4];
    let mut kappa = CompensatedSum::new();
    let mut max_kappa: f64 = 0.0;
    for (t, k, m) in parts {
        for (acc, part) in tau.iter_mut().zip(t.iter()) {
            acc.add(part.value());
        }
        kappa.add(k.value());
        max_kappa = max_kappa.max(m);
    }
    Ok(DepthMass {
        depth,
        tau_sum: Mat2::new(
            tau[0].value(),
            tau[1].value(),
            tau[2].value(),
            tau[3].value(),
        ),
        kappa_sum: kappa.value(),
        max_kappa,
    })
}

/// Every cell measure at one depth, in lexicographic order.
pub fn cell_measures(depth: usize, norm: TauNormalization) -> Result<Vec<CellMeasure>> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    let parts = gasket::fold_cells(depth, Vec::new, |rows: &mut Vec<CellMeasure>, w, map| {
        let tau = tau_from_linear(&map.linear, depth, norm);
        rows.push(CellMeasure {
            word: Word::new(w.to_vec()),
            kappa: tau.trace(),
            tau,
        });
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Conditional probabilities `κ[w·j]/κ[w]` given the linear part `d` of `ψ_w`.
///
/// Only the direction of `d` matters, so callers may pass a rescaled product.
pub fn child_probabilities(d: &Mat2) -> [f64; 3] {
    let weights = Symbol::ALL.map(|s| (*d * s.linear()).hs_norm_sq());
    let total: f64 = weights.iter().sum();
    weights.map(|w| w / total)
}

/// Generator for the `index`-th draw of a seeded batch.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw one word of the given length with probability `κ[w]/κ(S)`.
///
/// No depth guard: the running product is renormalized at every step.
pub fn sample_word<R: Rng + ?Sized>(rng: &mut R, depth: usize) -> Word {
    sample_extension(rng, &Mat2::IDENTITY, depth)
}

/// Draw a suffix `u` with probability `κ[w·u]/κ[w]`, where `prefix_linear` is
/// (any positive multiple of) `Dψ_w`.
pub fn sample_extension<R: Rng + ?Sized>(rng: &mut R, prefix_linear: &Mat2, depth: usize) -> Word {
    let mut d = prefix_linear.scale(1.0 / prefix_linear.hs_norm());
    let mut symbols = Vec::with_capacity(depth);
    for _ in 0..depth {
        let p = child_probabilities(&d);
        let u: f64 = rng.gen();
        let s = if u < p[0] {
            Symbol::One
        } else if u < p[0] + p[1] {
            Symbol::Two
        } else {
            Symbol::Three
        };
        symbols.push(s);
        d = d * s.linear();
        d = d.scale(1.0 / d.hs_norm());
    }
    Word::new(symbols)
}

/// `count` independent `κ`-distributed words; draw `i` uses `rng_for(seed, i)`.
pub fn sample_kappa(seed: u64, depth: usize, count: usize) -> Result<Vec<Word>> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    sample_words(seed, depth, count)
}

/// Same as [`sample_kappa`] without the depth guard.
pub fn sample_words(seed: u64, depth: usize, count: usize) -> Result<Vec<Word>> {
    if count == 0 {
        return Err(GasketError::domain("sample count must be at least 1"));
    }
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| sample_word(&mut rng_for(seed, i), depth))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::{apply_f, code_to_point, point_to_code, words_at_depth};
    use crate::linalg::Vec2;
    use proptest::prelude::*;

    const S3: f64 = gasket::SQRT_3;

    #[test]
    fn ruelle_of_identity_by_hand() {
        // ᵗTᵢTᵢ written out by hand.
        let t1 = Mat2::diag(9.0 / 25.0, 1.0 / 25.0);
        let t2 = Mat2::new(3.0 / 25.0, 2.0 * S3 / 25.0, 2.0 * S3 / 25.0, 7.0 / 25.0);
        let t3 = Mat2::new(3.0 / 25.0, -2.0 * S3 / 25.0, -2.0 * S3 / 25.0, 7.0 / 25.0);
        let oracle = t1 + t2 + t3;
        assert!(oracle.max_abs_diff(&Mat2::diag(0.6, 0.6)) < 1e-15);
        assert!(ruelle_apply(&Mat2::IDENTITY).max_abs_diff(&oracle) < 1e-14);
        assert_eq!(ruelle_apply(&Mat2::ZERO), Mat2::ZERO);
    }

    #[test]
    fn power_iteration_from_identity() {
        let e = principal_eigenvalue(1e-12, 100).unwrap();
        assert!((e.beta - 0.6).abs() <= 1e-12);
        assert!(e.residual <= 1e-12);
        assert!(e.eigenmatrix.max_abs_diff(&Mat2::IDENTITY) <= 1e-12);
        assert_eq!(e.iterations, 1);
    }

    #[test]
    fn power_iteration_from_generic_start() {
        let start = Mat2::new(2.0, 0.3, 0.3, 0.1);
        let e = principal_eigenvalue_from(start, 1e-12, 1000).unwrap();
        assert!((e.beta - BETA).abs() <= 1e-12);
        assert!(e.eigenmatrix.max_abs_diff(&Mat2::IDENTITY) <= 1e-10);
        assert!(matches!(
            principal_eigenvalue_from(start, 1e-12, 3),
            Err(GasketError::NoConvergence { .. })
        ));
        assert!(principal_eigenvalue(0.0, 10).is_err());
    }

    #[test]
    fn normalization_validation() {
        assert!(TauNormalization::new(0.0).is_err());
        assert!(TauNormalization::new(f64::NAN).is_err());
        assert_eq!(TauNormalization::default().c(), 0.5);
    }

    #[test]
    fn tau_examples() {
        let n = TauNormalization::default();
        let root = tau_cell(&Word::empty(), n).unwrap();
        assert!(root.tau.max_abs_diff(&Mat2::diag(0.5, 0.5)) < 1e-15);
        assert!((root.kappa - 1.0).abs() < 1e-15);
        for s in Symbol::ALL {
            let k = tau_cell(&Word::new(vec![s]), n).unwrap().kappa;
            assert!((k - 1.0 / 3.0).abs() < 1e-15);
        }
        let k = |w: &str| tau_cell(&w.parse().unwrap(), n).unwrap().kappa;
        assert!((k("11") - 41.0 / 225.0).abs() < 1e-15);
        assert!((k("12") - 17.0 / 225.0).abs() < 1e-15);
        assert!((k("13") - 17.0 / 225.0).abs() < 1e-15);
        assert!((k("11") + k("12") + k("13") - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pushforward_examples() {
        assert_eq!(
            verify_pushforward(&Word::empty(), &words_at_depth(3)).unwrap(),
            0.0
        );
        assert!(verify_pushforward(&"1".parse().unwrap(), &words_at_depth(3)).unwrap() <= 1e-12);
        assert!(verify_pushforward(&"23".parse().unwrap(), &words_at_depth(2)).unwrap() <= 1e-12);
    }

    #[test]
    fn telescoping() {
        for c in [0.5, 1.0] {
            let n = TauNormalization::new(c).unwrap();
            for l in 0..=10 {
                let m = depth_mass(l, n).unwrap();
                assert!(
                    (m.tau_sum - Mat2::diag(c, c)).hs_norm() <= 1e-10,
                    "depth {l}"
                );
                assert!((m.kappa_sum - 2.0 * c).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cell_measures_match_tau_cell() {
        let n = TauNormalization::default();
        let rows = cell_measures(4, n).unwrap();
        assert_eq!(rows.len(), 81);
        for r in rows.iter().step_by(7) {
            let direct = tau_cell(&r.word, n).unwrap();
            assert!(direct.tau.max_abs_diff(&r.tau) < 1e-15);
        }
        assert!(rows.iter().all(|r| r.tau.is_psd(1e-14)));
    }

    #[test]
    fn max_cell_mass_decreases() {
        let n = TauNormalization::default();
        let maxima: Vec<f64> = (0..=12)
            .map(|l| depth_mass(l, n).unwrap().max_kappa)
            .collect();
        assert!(maxima.windows(2).all(|p| p[1] < p[0]), "{maxima:?}");
    }

    #[test]
    fn root_child_probabilities() {
        let p = child_probabilities(&Mat2::IDENTITY);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_guarded() {
        let a = sample_kappa(7, 10, 50).unwrap();
        let b = sample_kappa(7, 10, 50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_kappa(8, 10, 50).unwrap());
        assert!(a.iter().all(|w| w.len() == 10));
        assert!(sample_kappa(0, 21, 1).is_err());
        assert!(sample_kappa(0, 2, 0).is_err());
        assert_eq!(sample_words(0, 40, 3).unwrap()[0].len(), 40);
    }

    #[test]
    fn depth_two_frequencies() {
        let n = TauNormalization::default();
        let draws = 1_000_000usize;
        let words = sample_kappa(2024, 2, draws).unwrap();
        let mut counts = [0usize; 9];
        for w in &words {
            let s = w.symbols();
            counts[s[0].index() * 3 + s[1].index()] += 1;
        }
        for (i, u) in words_at_depth(2).iter().enumerate() {
            let p = tau_cell(u, n).unwrap().kappa;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = counts[i] as f64 / draws as f64;
            assert!((freq - p).abs() <= 4.0 * se, "{u}: {freq} vs {p}");
        }
    }

    #[test]
    fn orbit_visit_frequencies() {
        // F-invariance: the k-th iterate of a κ-distributed point is again κ-distributed.
        let n = TauNormalization::default();
        let samples = 100_000usize;
        let target: Word = "12".parse().unwrap();
        let p = tau_cell(&target, n).unwrap().kappa;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        let words = sample_kappa(99, 20, samples).unwrap();
        let points: Vec<Vec2> = words.iter().map(|w| code_to_point(w).0).collect();
        for k in 0..=3 {
            let hits = points
                .iter()
                .filter(|&&x| {
                    let mut y = x;
                    for _ in 0..k {
                        y = apply_f(y).unwrap();
                    }
                    point_to_code(y, 2).unwrap() == target
                })
                .count();
            let freq = hits as f64 / samples as f64;
            assert!((freq - p).abs() <= 4.0 * se, "iterate {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn conditional_frequencies() {
        let n = TauNormalization::default();
        let prefix: Word = "13".parse().unwrap();
        let parent = tau_cell(&prefix, n).unwrap().kappa;
        let draws = 200_000usize;
        let mut rng = rng_for(1, 0);
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[sample_extension(&mut rng, &prefix.linear(), 1).symbols()[0].index()] += 1;
        }
        for s in Symbol::ALL {
            let p = tau_cell(&prefix.child(s), n).unwrap().kappa / parent;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = counts[s.index()] as f64 / draws as f64;
            assert!((freq - p).abs() <= 4.0 * se, "{s}: {freq} vs {p}");
        }
    }

    fn word(max: usize) -> impl Strategy<Value = Word> {
        proptest::collection::vec(0usize..3, 0..=max)
            .prop_map(|v| Word::new(v.into_iter().map(Symbol::from_index).collect()))
    }

    proptest! {
        #[test]
        fn ruelle_is_linear(a in proptest::array::uniform4(-5.0..5.0f64), b in proptest::array::uniform4(-5.0..5.0f64)) {
            let a = Mat2::new(a[0], a[1], a[2], a[3]);
            let b = Mat2::new(b[0], b[1], b[2], b[3]);
            let lhs = ruelle_apply(&(a + b));
            let rhs = ruelle_apply(&a) + ruelle_apply(&b);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        }

        #[test]
        fn children_sum(w in word(15)) {
            let n = TauNormalization::default();
            let parent = tau_cell(&w, n).unwrap();
            let sum = Symbol::ALL.iter().fold(Mat2::ZERO, |acc, &s| acc + tau_cell(&w.child(s), n).unwrap().tau);
            prop_assert!((parent.tau - sum).max_abs() <= 1e-12);
            prop_assert!(parent.tau.is_symmetric(1e-15));
            prop_assert!(parent.tau.sym_eigenvalues().0 >= -1e-14);
            prop_assert!((parent.kappa - parent.tau.trace()).abs() == 0.0);
        }

        #[test]
        fn child_probabilities_sum_to_one(w in word(30)) {
            let d = w.linear();
            let d = d.scale(1.0 / d.hs_norm());
            let p = child_probabilities(&d);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }
    }
}
