//! The three affine contractions, words, cells, coding and the expanding map.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GasketError, Result};
use crate::linalg::{Mat2, Vec2};

pub const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Common Lipschitz constant of the three branches.
pub const ETA: f64 = 0.6;

/// Default resource guard on word length for operations that build cells.
pub const DEFAULT_MAX_DEPTH: usize = 20;

pub const VERTEX_A: Vec2 = Vec2::new(0.0, 0.0);
pub const VERTEX_B: Vec2 = Vec2::new(1.0, 1.0 / SQRT_3);
pub const VERTEX_C: Vec2 = Vec2::new(1.0, -1.0 / SQRT_3);
pub const BOUNDARY: [Vec2; 3] = [VERTEX_A, VERTEX_B, VERTEX_C];

/// Diameter of the reference triangle.
pub const TRIANGLE_DIAMETER: f64 = 2.0 / SQRT_3;

/// Inradius of the reference triangle.
pub const TRIANGLE_INRADIUS: f64 = 1.0 / 3.0;

/// Slack for point-in-triangle tests.
pub const TRIANGLE_TOL: f64 = 1e-12;

const TIE_TOL: f64 = 1e-12;

const T1: Mat2 = Mat2::new(0.6, 0.0, 0.0, 0.2);
const T2: Mat2 = Mat2::new(0.3, SQRT_3 / 10.0, SQRT_3 / 10.0, 0.5);
const T3: Mat2 = Mat2::new(0.3, -SQRT_3 / 10.0, -SQRT_3 / 10.0, 0.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Symbol {
    One = 1,
    Two = 2,
    Three = 3,
}

impl Symbol {
    pub const ALL: [Symbol; 3] = [Symbol::One, Symbol::Two, Symbol::Three];

    pub fn value(self) -> u8 {
        self as u8
    }

    /// Zero-based index, handy for array lookups.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Symbol {
        Symbol::ALL[i]
    }

    /// Linear part `Tᵢ` of the branch.
    pub fn linear(self) -> Mat2 {
        match self {
            Symbol::One => T1,
            Symbol::Two => T2,
            Symbol::Three => T3,
        }
    }

    /// The boundary vertex fixed by the branch.
    pub fn fixed_point(self) -> Vec2 {
        BOUNDARY[self.index()]
    }
}

impl TryFrom<u8> for Symbol {
    type Error = GasketError;

    fn try_from(v: u8) -> Result<Symbol> {
        match v {
            1 => Ok(Symbol::One),
            2 => Ok(Symbol::Two),
            3 => Ok(Symbol::Three),
            other => Err(GasketError::InvalidSymbol(other)),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A finite word over {1, 2, 3}; the empty word addresses the whole gasket.
///
/// Ordering is lexicographic, which is also the row order of every table.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(symbols: Vec<Symbol>) -> Self {
        Word(symbols)
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        digits
            .iter()
            .map(|&d| Symbol::try_from(d))
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    pub fn repeat(symbol: Symbol, len: usize) -> Self {
        Word(vec![symbol; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn first(&self) -> Option<Symbol> {
        self.0.first().copied()
    }

    pub fn child(&self, s: Symbol) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(s);
        Word(v)
    }

    pub fn concat(&self, suffix: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&suffix.0);
        Word(v)
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn suffix_from(&self, n: usize) -> Word {
        Word(self.0[n.min(self.0.len())..].to_vec())
    }

    /// Counts of symbols 1, 2, 3.
    pub fn symbol_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.0 {
            c[s.index()] += 1;
        }
        c
    }

    /// Position of the word among all words of its length in lexicographic order.
    pub fn rank(&self) -> usize {
        rank_of(&self.0)
    }

    /// Linear part of `ψ_w`, i.e. the product `T_{w₀}·…·T_{w_{l−1}}`.
    pub fn linear(&self) -> Mat2 {
        self.0
            .iter()
            .fold(Mat2::IDENTITY, |acc, s| acc * s.linear())
    }

    /// The full affine map `ψ_w`, without the depth guard.
    pub fn map(&self) -> AffineMap {
        self.0
            .iter()
            .fold(AffineMap::IDENTITY, |acc, &s| acc.compose(&branch(s)))
    }
}

impl From<Vec<Symbol>> for Word {
    fn from(v: Vec<Symbol>) -> Self {
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = GasketError;

    fn from_str(s: &str) -> Result<Word> {
        let digits = s
            .trim()
            .bytes()
            .map(|b| {
                if b.is_ascii_digit() {
                    Ok(b - b'0')
                } else {
                    Err(GasketError::domain(format!(
                        "`{s}` is not a word over 1, 2, 3"
                    )))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Word::from_digits(&digits)
    }
}

/// `x ↦ linear·x + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Mat2,
    pub translation: Vec2,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        linear: Mat2::IDENTITY,
        translation: Vec2::ZERO,
    };

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.linear.apply(p) + self.translation
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            linear: self.linear * inner.linear,
            translation: self.linear.apply(inner.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Option<AffineMap> {
        let inv = self.linear.inverse()?;
        Some(AffineMap {
            linear: inv,
            translation: -inv.apply(self.translation),
        })
    }

    pub fn triangle(&self) -> [Vec2; 3] {
        BOUNDARY.map(|p| self.apply(p))
    }
}

/// `ψᵢ(x) = Pᵢ + Tᵢ(x − Pᵢ)`.
pub fn branch(i: Symbol) -> AffineMap {
    let t = i.linear();
    let p = i.fixed_point();
    AffineMap {
        linear: t,
        translation: p - t.apply(p),
    }
}

/// Lexicographic rank of a word among the words of the same length.
pub fn rank_of(symbols: &[Symbol]) -> usize {
    symbols.iter().fold(0, |acc, s| acc * 3 + s.index())
}

pub fn check_depth(depth: usize, max_depth: usize) -> Result<()> {
    if depth > max_depth {
        Err(GasketError::DepthGuard {
            depth,
            max: max_depth,
        })
    } else {
        Ok(())
    }
}

/// `ψ_{w₀} ∘ … ∘ ψ_{w_{l−1}}` under the default depth guard.
pub fn compose_word(w: &Word) -> Result<AffineMap> {
    compose_word_within(w, DEFAULT_MAX_DEPTH)
}

pub fn compose_word_within(w: &Word, max_depth: usize) -> Result<AffineMap> {
    check_depth(w.len(), max_depth)?;
    Ok(w.map())
}

/// Upper bound `(2/√3)·η^len` on the diameter of a cell addressed by a word of length `len`.
pub fn cell_diameter_bound(len: usize) -> f64 {
    TRIANGLE_DIAMETER * ETA.powi(len as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub word: Word,
    pub map: AffineMap,
    pub vertices: [Vec2; 3],
}

impl Cell {
    pub fn from_map(word: Word, map: AffineMap) -> Cell {
        Cell {
            vertices: map.triangle(),
            word,
            map,
        }
    }

    pub fn centroid(&self) -> Vec2 {
        triangle_centroid(&self.vertices)
    }

    pub fn diameter(&self) -> f64 {
        triangle_diameter(&self.vertices)
    }

    pub fn contains_triangle(&self, inner: &[Vec2; 3], tol: f64) -> bool {
        inner
            .iter()
            .all(|&p| dist_point_triangle(p, &self.vertices) <= tol)
    }
}

pub fn cell(w: &Word) -> Result<Cell> {
    let map = compose_word(w)?;
    Ok(Cell::from_map(w.clone(), map))
}

/// Representative point of the cylinder `[w]` together with a guaranteed
/// bound on its distance to the coded point of any infinite extension of `w`.
pub fn code_to_point(w: &Word) -> (Vec2, f64) {
    let tri = w.map().triangle();
    (triangle_centroid(&tri), cell_diameter_bound(w.len()))
}

/// Address of a cell of the given depth containing `p`.
///
/// At each level the child triangle nearest to `p` is selected; points lying
/// on several children (the junctions) go to the smallest symbol. Points of
/// the triangle that are not in the gasket get the nearest cell.
pub fn point_to_code(p: Vec2, depth: usize) -> Result<Word> {
    check_depth(depth, DEFAULT_MAX_DEPTH)?;
    ensure_in_triangle(p)?;
    let mut map = AffineMap::IDENTITY;
    let mut symbols = Vec::with_capacity(depth);
    for _ in 0..depth {
        let candidates = Symbol::ALL.map(|s| {
            let child = map.compose(&branch(s));
            (dist_point_triangle(p, &child.triangle()), child)
        });
        let best = candidates
            .iter()
            .map(|(d, _)| *d)
            .fold(f64::INFINITY, f64::min);
        let pick = candidates
            .iter()
            .position(|(d, _)| *d <= best + TIE_TOL)
            .unwrap_or(0);
        symbols.push(Symbol::from_index(pick));
        map = candidates[pick].1;
    }
    Ok(Word::new(symbols))
}

/// The expanding map: `F(x) = ψᵢ⁻¹(x)` on the `i`-th branch.
pub fn apply_f(p: Vec2) -> Result<Vec2> {
    let w = point_to_code(p, 1)?;
    let s = w.symbols()[0];
    let inv = branch(s).inverse().expect("branches are invertible");
    Ok(inv.apply(p))
}

/// One-sided shift: drop the leading symbol.
pub fn shift(w: &Word) -> Result<Word> {
    if w.is_empty() {
        return Err(GasketError::domain("cannot shift the empty word"));
    }
    Ok(w.suffix_from(1))
}

fn ensure_in_triangle(p: Vec2) -> Result<()> {
    if !p.is_finite() || dist_point_triangle(p, &BOUNDARY) > TRIANGLE_TOL {
        return Err(GasketError::domain(format!(
            "point {p} lies outside the triangle ABC"
        )));
    }
    Ok(())
}

/// All words of the given length, in lexicographic order.
pub fn words_at_depth(depth: usize) -> Vec<Word> {
    let mut out = Vec::with_capacity(3usize.pow(depth as u32));
    let mut buf = Vec::with_capacity(depth);
    fn rec(depth: usize, buf: &mut Vec<Symbol>, out: &mut Vec<Word>) {
        if buf.len() == depth {
            out.push(Word::new(buf.clone()));
            return;
        }
        for s in Symbol::ALL {
            buf.push(s);
            rec(depth, buf, out);
            buf.pop();
        }
    }
    rec(depth, &mut buf, &mut out);
    out
}

const SPLIT_DEPTH: usize = 5;

/// Visit every cell at `depth` in lexicographic order, sequentially.
pub fn for_each_cell<F>(depth: usize, mut visit: F)
where
    F: FnMut(&[Symbol], &AffineMap),
{
    let mut buf = Vec::with_capacity(depth);
    walk(&mut buf, AffineMap::IDENTITY, depth, &mut visit);
}

fn walk<F>(buf: &mut Vec<Symbol>, map: AffineMap, remaining: usize, visit: &mut F)
where
    F: FnMut(&[Symbol], &AffineMap),
{
    if remaining == 0 {
        visit(buf, &map);
        return;
    }
    for s in Symbol::ALL {
        buf.push(s);
        walk(buf, map.compose(&branch(s)), remaining - 1, visit);
        buf.pop();
    }
}

/// Fold over every cell at `depth`, in parallel over word prefixes.
///
/// Returns one accumulator per prefix in lexicographic order, so a sequential
/// merge of the result is deterministic regardless of scheduling.
pub fn fold_cells<A, I, S>(depth: usize, init: I, step: S) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    S: Fn(&mut A, &[Symbol], &AffineMap) + Sync,
{
    let split = depth.min(SPLIT_DEPTH);
    words_at_depth(split)
        .into_par_iter()
        .map(|prefix| {
            let mut acc = init();
            let mut buf = prefix.symbols().to_vec();
            buf.reserve(depth - split);
            walk(
                &mut buf,
                prefix.map(),
                depth - split,
                &mut |w: &[Symbol], m: &AffineMap| step(&mut acc, w, m),
            );
            acc
        })
        .collect()
}

pub fn triangle_centroid(t: &[Vec2; 3]) -> Vec2 {
    (t[0] + t[1] + t[2]).scale(1.0 / 3.0)
}

pub fn triangle_diameter(t: &[Vec2; 3]) -> f64 {
    t[0].distance(t[1])
        .max(t[1].distance(t[2]))
        .max(t[2].distance(t[0]))
}

pub fn dist_point_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab.scale(t))
}

/// Euclidean distance from `p` to the closed triangle (zero inside).
pub fn dist_point_triangle(p: Vec2, t: &[Vec2; 3]) -> f64 {
    let c0 = (t[1] - t[0]).cross(p - t[0]);
    let c1 = (t[2] - t[1]).cross(p - t[1]);
    let c2 = (t[0] - t[2]).cross(p - t[2]);
    let inside = (c0 >= 0.0 && c1 >= 0.0 && c2 >= 0.0) || (c0 <= 0.0 && c1 <= 0.0 && c2 <= 0.0);
    if inside {
        return 0.0;
    }
    dist_point_segment(p, t[0], t[1])
        .min(dist_point_segment(p, t[1], t[2]))
        .min(dist_point_segment(p, t[2], t[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXACT: f64 = 1e-14;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn fixed_points() {
        assert!(close(branch(Symbol::One).apply(VERTEX_A), VERTEX_A, EXACT));
        assert!(close(branch(Symbol::Two).apply(VERTEX_B), VERTEX_B, EXACT));
        assert!(close(
            branch(Symbol::Three).apply(VERTEX_C),
            VERTEX_C,
            EXACT
        ));
    }

    #[test]
    fn junction_c() {
        let expected = Vec2::new(0.6, 1.0 / (5.0 * SQRT_3));
        let from1 = branch(Symbol::One).apply(VERTEX_B);
        let from2 = branch(Symbol::Two).apply(VERTEX_A);
        assert!(close(from1, expected, EXACT));
        assert!(close(from2, Vec2::new(0.6, SQRT_3 / 15.0), EXACT));
        assert!(close(from1, from2, EXACT));
    }

    #[test]
    fn junction_identities() {
        let b1 = branch(Symbol::One);
        let b2 = branch(Symbol::Two);
        let b3 = branch(Symbol::Three);
        assert!(close(b1.apply(VERTEX_C), b3.apply(VERTEX_A), EXACT));
        assert!(close(b2.apply(VERTEX_C), b3.apply(VERTEX_B), EXACT));
        assert!(close(b2.apply(VERTEX_C), Vec2::new(0.8, 0.0), EXACT));
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose_word(&Word::empty()).unwrap(), AffineMap::IDENTITY);
        let m = compose_word(&"11".parse().unwrap()).unwrap();
        assert!(m.linear.max_abs_diff(&Mat2::diag(9.0 / 25.0, 1.0 / 25.0)) < EXACT);
        let one = compose_word(&"1".parse().unwrap()).unwrap();
        assert_eq!(one, branch(Symbol::One));
    }

    #[test]
    fn depth_guard() {
        let w = Word::repeat(Symbol::Two, DEFAULT_MAX_DEPTH + 1);
        assert!(matches!(
            compose_word(&w),
            Err(GasketError::DepthGuard { .. })
        ));
        assert!(compose_word_within(&w, 30).is_ok());
        assert!(cell(&w).is_err());
    }

    #[test]
    fn root_cell_and_junction_a() {
        let root = cell(&Word::empty()).unwrap();
        assert_eq!(root.vertices, BOUNDARY);
        let c2 = cell(&"2".parse().unwrap()).unwrap();
        assert!(c2
            .vertices
            .iter()
            .any(|&v| close(v, Vec2::new(0.8, 0.0), EXACT)));
    }

    #[test]
    fn diameter_bound_depth_three() {
        let c = cell(&"111".parse().unwrap()).unwrap();
        assert!(c.diameter() <= TRIANGLE_DIAMETER * 0.6f64.powi(3) + EXACT);
    }

    #[test]
    fn error_bound_depth_ten() {
        let (_, bound) = code_to_point(&Word::repeat(Symbol::Three, 10));
        assert!((bound - 6.98e-3).abs() < 5e-6);
    }

    #[test]
    fn coding_of_fixed_points() {
        for l in [1, 5, 15] {
            let (p, bound) = code_to_point(&Word::repeat(Symbol::One, l));
            assert!(p.distance(VERTEX_A) <= bound);
            let (q, bound) = code_to_point(&Word::repeat(Symbol::Two, l));
            assert!(q.distance(VERTEX_B) <= bound);
        }
    }

    #[test]
    fn point_to_code_examples() {
        assert_eq!(
            point_to_code(VERTEX_A, 5).unwrap(),
            Word::repeat(Symbol::One, 5)
        );
        assert_eq!(
            point_to_code(Vec2::new(0.8, 0.0), 1).unwrap(),
            "2".parse().unwrap()
        );
        assert!(point_to_code(Vec2::new(-0.1, 0.0), 3).is_err());
    }

    #[test]
    fn f_examples() {
        assert!(close(apply_f(VERTEX_A).unwrap(), VERTEX_A, EXACT));
        assert!(apply_f(Vec2::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn shift_examples() {
        assert_eq!(
            shift(&"123".parse().unwrap()).unwrap(),
            "23".parse().unwrap()
        );
        assert_eq!(shift(&"2".parse().unwrap()).unwrap(), Word::empty());
        assert!(shift(&Word::empty()).is_err());
    }

    #[test]
    fn word_parsing() {
        assert!("124".parse::<Word>().is_err());
        assert!("1a".parse::<Word>().is_err());
        assert_eq!("".parse::<Word>().unwrap(), Word::empty());
        assert_eq!(Word::from_digits(&[3, 1]).unwrap().to_string(), "31");
        assert!(matches!(
            Symbol::try_from(0),
            Err(GasketError::InvalidSymbol(0))
        ));
    }

    #[test]
    fn enumeration_orders_and_counts() {
        let words = words_at_depth(3);
        assert_eq!(words.len(), 27);
        assert!(words.windows(2).all(|p| p[0] < p[1]));
        let mut seen = Vec::new();
        for_each_cell(3, |w, m| {
            seen.push(Word::new(w.to_vec()));
            assert_eq!(*m, Word::new(w.to_vec()).map());
        });
        assert_eq!(seen, words);
        assert!(words.iter().enumerate().all(|(i, w)| w.rank() == i));
        let counts: Vec<usize> = fold_cells(7, || 0usize, |n, _, _| *n += 1);
        assert_eq!(counts.iter().sum::<usize>(), 3usize.pow(7));
    }

    #[test]
    fn triangle_distance() {
        let t = BOUNDARY;
        assert_eq!(dist_point_triangle(Vec2::new(0.5, 0.0), &t), 0.0);
        assert!((dist_point_triangle(Vec2::new(2.0, 0.0), &t) - 1.0).abs() < EXACT);
    }

    fn triangle_point() -> impl Strategy<Value = Vec2> {
        (0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| {
            let (a, b) = if a + b > 1.0 {
                (1.0 - a, 1.0 - b)
            } else {
                (a, b)
            };
            VERTEX_A + (VERTEX_B - VERTEX_A).scale(a) + (VERTEX_C - VERTEX_A).scale(b)
        })
    }

    fn word(max: usize) -> impl Strategy<Value = Word> {
        proptest::collection::vec(0usize..3, 0..=max)
            .prop_map(|v| Word::new(v.into_iter().map(Symbol::from_index).collect()))
    }

    proptest! {
        #[test]
        fn branches_contract(p in triangle_point(), q in triangle_point(), i in 0usize..3) {
            let b = branch(Symbol::from_index(i));
            prop_assert!(b.apply(p).distance(b.apply(q)) <= 0.6 * p.distance(q) + 1e-15);
        }

        #[test]
        fn composed_maps_contract(w in word(12)) {
            prop_assert!(w.linear().op_norm() <= 0.6f64.powi(w.len() as i32) + 1e-14);
        }

        #[test]
        fn cells_nest(w in word(10), j in 0usize..3) {
            let parent = cell(&w).unwrap();
            let child = cell(&w.child(Symbol::from_index(j))).unwrap();
            prop_assert!(parent.contains_triangle(&child.vertices, 1e-13));
            prop_assert!(child.diameter() <= cell_diameter_bound(w.len() + 1) + 1e-14);
        }

        #[test]
        fn f_inverts_branches(p in triangle_point(), i in 0usize..3) {
            let s = Symbol::from_index(i);
            let img = branch(s).apply(p);
            // junction points are excluded: they are assigned to a single branch.
            let junction = BOUNDARY.iter().any(|&v| v != s.fixed_point() && p.distance(v) < 1e-9);
            prop_assume!(!junction);
            prop_assert!(apply_f(img).unwrap().distance(p) < 1e-12);
        }

        #[test]
        fn conjugacy(w in word(14)) {
            prop_assume!(!w.is_empty());
            let (p, bound) = code_to_point(&w);
            let (q, bound_shift) = code_to_point(&shift(&w).unwrap());
            let fp = apply_f(p).unwrap();
            prop_assert!(fp.distance(q) <= bound + bound_shift);
        }

        #[test]
        fn coding_roundtrip(w in word(14), l in 1usize..12) {
            // centroids of cells at least l deep lie in the gasket's level-l cell
            prop_assume!(w.len() >= l);
            let (p, _) = code_to_point(&w);
            let code = point_to_code(p, l).unwrap();
            prop_assert_eq!(code, w.prefix(l));
        }
    }
}
