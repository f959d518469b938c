//! Scalar test functions on the plane together with their gradients.

use rand::Rng;

use crate::error::{GasketError, Result};
use crate::gasket::{AffineMap, VERTEX_A, VERTEX_B, VERTEX_C};
use crate::linalg::Vec2;
use crate::measure::rng_for;

/// A C¹ function on a neighborhood of the triangle with its exact gradient.
///
/// Evaluation may happen concurrently from several threads, so both methods
/// must be pure.
pub trait ScalarField: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, p: Vec2) -> f64;
    fn gradient(&self, p: Vec2) -> Vec2;
}

/// Field built from a pair of closures.
pub struct FnField<F, G> {
    name: String,
    value: F,
    gradient: G,
}

impl<F, G> FnField<F, G>
where
    F: Fn(Vec2) -> f64 + Send + Sync,
    G: Fn(Vec2) -> Vec2 + Send + Sync,
{
    pub fn new(name: impl Into<String>, value: F, gradient: G) -> Self {
        FnField {
            name: name.into(),
            value,
            gradient,
        }
    }
}

impl<F, G> ScalarField for FnField<F, G>
where
    F: Fn(Vec2) -> f64 + Send + Sync,
    G: Fn(Vec2) -> Vec2 + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: Vec2) -> f64 {
        (self.value)(p)
    }

    fn gradient(&self, p: Vec2) -> Vec2 {
        (self.gradient)(p)
    }
}

/// `x ↦ ⟨a, x⟩`.
pub struct LinearField {
    name: String,
    a: Vec2,
}

impl LinearField {
    pub fn new(name: impl Into<String>, a: Vec2) -> Self {
        LinearField {
            name: name.into(),
            a,
        }
    }
}

impl ScalarField for LinearField {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: Vec2) -> f64 {
        self.a.dot(p)
    }

    fn gradient(&self, _p: Vec2) -> Vec2 {
        self.a
    }
}

/// `f ∘ ψ` for an affine `ψ`, with `∇(f∘ψ)(x) = ᵗL·∇f(ψ(x))`.
pub struct Composed<'a> {
    inner: &'a dyn ScalarField,
    map: AffineMap,
}

impl<'a> Composed<'a> {
    pub fn new(inner: &'a dyn ScalarField, map: AffineMap) -> Self {
        Composed { inner, map }
    }
}

impl ScalarField for Composed<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn value(&self, p: Vec2) -> f64 {
        self.inner.value(self.map.apply(p))
    }

    fn gradient(&self, p: Vec2) -> Vec2 {
        self.map
            .linear
            .transpose()
            .apply(self.inner.gradient(self.map.apply(p)))
    }
}

const CHECK_POINTS: usize = 100;
const CHECK_STEP: f64 = 1e-5;
const CHECK_TOL: f64 = 1e-6;

/// Compare the gradient with central differences at seeded random points of
/// the triangle. Discrepancies are measured relative to `max(1, |∇f|)`.
pub fn check_gradient(field: &dyn ScalarField, seed: u64) -> Result<()> {
    let mut rng = rng_for(seed, 0);
    for _ in 0..CHECK_POINTS {
        let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        let p = VERTEX_A + (VERTEX_B - VERTEX_A).scale(a) + (VERTEX_C - VERTEX_A).scale(b);
        let h = CHECK_STEP;
        let fd = Vec2::new(
            (field.value(p + Vec2::new(h, 0.0)) - field.value(p - Vec2::new(h, 0.0))) / (2.0 * h),
            (field.value(p + Vec2::new(0.0, h)) - field.value(p - Vec2::new(0.0, h))) / (2.0 * h),
        );
        let g = field.gradient(p);
        let discrepancy = (fd - g).norm();
        if discrepancy.is_nan() || discrepancy > CHECK_TOL * g.norm().max(1.0) {
            return Err(GasketError::InconsistentGradient {
                name: field.name().to_string(),
                discrepancy,
                point: p,
            });
        }
    }
    Ok(())
}

/// Box a field after checking its gradient.
pub fn register<F: ScalarField + 'static>(field: F) -> Result<Box<dyn ScalarField>> {
    check_gradient(&field, 0)?;
    Ok(Box::new(field))
}

pub const BATTERY_NAMES: [&str; 6] = ["const", "x1", "x2", "x1_sq", "x1_x2", "sin_cos"];

/// The fixed test battery: a constant, both coordinates, `x₁²`, `x₁x₂` and
/// `sin(πx₁)cos(πx₂)`.
pub fn battery() -> Vec<Box<dyn ScalarField>> {
    BATTERY_NAMES
        .iter()
        .map(|n| battery_field(n).expect("battery names are known"))
        .collect()
}

pub fn battery_field(name: &str) -> Option<Box<dyn ScalarField>> {
    use std::f64::consts::PI;
    let field: Box<dyn ScalarField> = match name {
        "const" => Box::new(FnField::new(name, |_| 1.0, |_| Vec2::ZERO)),
        "x1" => Box::new(LinearField::new(name, Vec2::E1)),
        "x2" => Box::new(LinearField::new(name, Vec2::E2)),
        "x1_sq" => Box::new(FnField::new(
            name,
            |p: Vec2| p.x1 * p.x1,
            |p: Vec2| Vec2::new(2.0 * p.x1, 0.0),
        )),
        "x1_x2" => Box::new(FnField::new(
            name,
            |p: Vec2| p.x1 * p.x2,
            |p: Vec2| Vec2::new(p.x2, p.x1),
        )),
        "sin_cos" => Box::new(FnField::new(
            name,
            |p: Vec2| (PI * p.x1).sin() * (PI * p.x2).cos(),
            |p: Vec2| {
                Vec2::new(
                    PI * (PI * p.x1).cos() * (PI * p.x2).cos(),
                    -PI * (PI * p.x1).sin() * (PI * p.x2).sin(),
                )
            },
        )),
        _ => return None,
    };
    Some(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::{branch, Symbol};

    #[test]
    fn battery_gradients_are_consistent() {
        for f in battery() {
            check_gradient(f.as_ref(), 0).unwrap();
            check_gradient(f.as_ref(), 1).unwrap();
        }
        assert!(battery_field("nope").is_none());
    }

    #[test]
    fn wrong_gradient_is_rejected() {
        let bad = FnField::new("bad", |p: Vec2| p.x1 * p.x1, |_| Vec2::E1);
        let err = register(bad)
            .err()
            .expect("gradient mismatch must be rejected");
        assert!(matches!(err, GasketError::InconsistentGradient { ref name, .. } if name == "bad"));
    }

    #[test]
    fn composed_field_gradient() {
        let f = battery_field("sin_cos").unwrap();
        for s in Symbol::ALL {
            let g = Composed::new(f.as_ref(), branch(s));
            check_gradient(&g, 3).unwrap();
        }
    }
}
