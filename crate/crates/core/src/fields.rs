//! Generating pairs and the coordinate-wise switched vector field.
//!
//! A generating pair is two scalar maps `(u, v)` applied to the objective
//! value, `f1(x) = u(J(x))`, `f2(x) = v(J(x))`. The switched field `g_k`
//! cycles through `+f1, +f2, -f1, -f2` along one unit coordinate, then moves
//! on to the next coordinate, giving a period of `4n` steps.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NcmapError, Result};
use crate::objective::Cost;
use crate::oracle;

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which descent condition a pair satisfies, i.e. whether the drift of the
/// Euler resp. Heun macro-step equals `-grad J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairValidity {
    pub valid_for_euler: bool,
    pub valid_for_heun: bool,
}

#[derive(Clone)]
pub struct GeneratingPair {
    label: String,
    u: ScalarMap,
    v: ScalarMap,
    validity: PairValidity,
}

impl fmt::Debug for GeneratingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratingPair")
            .field("label", &self.label)
            .field("validity", &self.validity)
            .finish()
    }
}

/// `f1 = J`, `f2 = 1`. Bracket is `-grad J`, but the Euler drift picks up an
/// extra `-grad J * J` term.
pub fn pair_simple() -> GeneratingPair {
    GeneratingPair {
        label: "simple".into(),
        u: Arc::new(|j| j),
        v: Arc::new(|_| 1.0),
        validity: PairValidity {
            valid_for_euler: false,
            valid_for_heun: true,
        },
    }
}

/// `f1 = sin J`, `f2 = cos J`. The Euler correction terms cancel, so both
/// methods approximate gradient descent.
pub fn pair_sincos() -> GeneratingPair {
    GeneratingPair {
        label: "sincos".into(),
        u: Arc::new(f64::sin),
        v: Arc::new(f64::cos),
        validity: PairValidity {
            valid_for_euler: true,
            valid_for_heun: true,
        },
    }
}

impl GeneratingPair {
    /// Build a pair from user-supplied scalar maps. The validity flags are
    /// measured with [`oracle::classify_pair`], not taken on trust.
    pub fn custom<U, V>(label: impl Into<String>, u: U, v: V) -> Result<Self>
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
        V: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut pair = GeneratingPair {
            label: label.into(),
            u: Arc::new(u),
            v: Arc::new(v),
            validity: PairValidity {
                valid_for_euler: false,
                valid_for_heun: false,
            },
        };
        pair.validity = oracle::classify_pair(&pair)?;
        Ok(pair)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn validity(&self) -> PairValidity {
        self.validity
    }

    /// `u(j)`, the first map applied to an objective value.
    pub fn first(&self, j: f64) -> f64 {
        (self.u)(j)
    }

    /// `v(j)`, the second map applied to an objective value.
    pub fn second(&self, j: f64) -> f64 {
        (self.v)(j)
    }

    /// Noise-free `f1(x)` (uncounted).
    pub fn f1(&self, obj: &dyn Cost, x: &[f64]) -> f64 {
        self.first(obj.peek(x))
    }

    /// Noise-free `f2(x)` (uncounted).
    pub fn f2(&self, obj: &dyn Cost, x: &[f64]) -> f64 {
        self.second(obj.peek(x))
    }
}

/// Named pairs selectable by identifier. Starts with `simple` and `sincos`.
#[derive(Debug, Clone)]
pub struct PairRegistry {
    pairs: BTreeMap<String, GeneratingPair>,
}

impl Default for PairRegistry {
    fn default() -> Self {
        let mut pairs = BTreeMap::new();
        for p in [pair_simple(), pair_sincos()] {
            pairs.insert(p.label.clone(), p);
        }
        Self { pairs }
    }
}

impl PairRegistry {
    pub fn get(&self, id: &str) -> Result<GeneratingPair> {
        self.pairs.get(id).cloned().ok_or_else(|| {
            let known: Vec<&str> = self.pairs.keys().map(String::as_str).collect();
            NcmapError::param(format!("unknown pair '{id}' (known: {})", known.join(", ")))
        })
    }

    pub fn register(&mut self, pair: GeneratingPair) -> Result<()> {
        if self.pairs.contains_key(&pair.label) {
            return Err(NcmapError::param(format!("pair '{}' already registered", pair.label)));
        }
        self.pairs.insert(pair.label.clone(), pair);
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.pairs.keys().map(String::as_str)
    }
}

/// Resolve a built-in pair by identifier.
pub fn pair_by_id(id: &str) -> Result<GeneratingPair> {
    PairRegistry::default().get(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    PlusF1,
    PlusF2,
    MinusF1,
    MinusF2,
}

impl Phase {
    pub fn from_step(k: usize) -> Self {
        match k % 4 {
            0 => Phase::PlusF1,
            1 => Phase::PlusF2,
            2 => Phase::MinusF1,
            _ => Phase::MinusF2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PlusF1 => "+f1",
            Phase::PlusF2 => "+f2",
            Phase::MinusF1 => "-f1",
            Phase::MinusF2 => "-f2",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Phase and active (0-based) coordinate of step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepLabel {
    pub phase: Phase,
    pub coord: usize,
}

/// The switching rule: phase `k mod 4`, coordinate `floor(k / 4) mod n`.
pub fn schedule(k: usize, n: usize) -> StepLabel {
    StepLabel {
        phase: Phase::from_step(k),
        coord: (k / 4) % n,
    }
}

#[derive(Debug, Clone)]
pub struct SwitchedField {
    pair: GeneratingPair,
    dim: usize,
}

pub fn switched_field(pair: GeneratingPair, dim: usize) -> Result<SwitchedField> {
    if dim == 0 {
        return Err(NcmapError::InvalidDimension { expected: 1, got: 0 });
    }
    Ok(SwitchedField { pair, dim })
}

impl SwitchedField {
    pub fn pair(&self) -> &GeneratingPair {
        &self.pair
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Steps in one full coordinate sweep.
    pub fn period(&self) -> usize {
        4 * self.dim
    }

    pub fn label(&self, k: usize) -> StepLabel {
        schedule(k, self.dim)
    }

    /// Active coordinate and signed value of `g_k(x)`. Consumes exactly one
    /// counted objective evaluation.
    pub fn component(&self, obj: &mut dyn Cost, k: usize, x: &[f64]) -> Result<(usize, f64)> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, obj.dim())?;
        let StepLabel { phase, coord } = self.label(k);
        let j = obj.eval(x);
        let value = match phase {
            Phase::PlusF1 => self.pair.first(j),
            Phase::PlusF2 => self.pair.second(j),
            Phase::MinusF1 => -self.pair.first(j),
            Phase::MinusF2 => -self.pair.second(j),
        };
        Ok((coord, value))
    }

    /// `g_k(x)` as a full vector.
    pub fn field_at(&self, obj: &mut dyn Cost, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let (coord, value) = self.component(obj, k, x)?;
        let mut g = vec![0.0; self.dim];
        g[coord] = value;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{make_constant, make_quadratic};
    use proptest::prelude::*;

    #[test]
    fn simple_pair_on_setup() {
        let j = make_quadratic(&[2.0], 6.0).unwrap();
        let p = pair_simple();
        assert_eq!(p.f1(&j, &[0.5]), 8.25);
        assert_eq!(p.f2(&j, &[0.5]), 1.0);
        assert_eq!(
            p.validity(),
            PairValidity {
                valid_for_euler: false,
                valid_for_heun: true
            }
        );
        assert!(pair_sincos().validity().valid_for_euler);
    }

    #[test]
    fn schedule_examples() {
        let f = switched_field(pair_sincos(), 2).unwrap();
        let mut j = make_quadratic(&[2.0, 2.0], 6.0).unwrap();
        let x = [0.3, -1.2];
        let jx = j.peek(&x);
        assert_eq!(f.field_at(&mut j, 0, &x).unwrap(), vec![jx.sin(), 0.0]);
        assert_eq!(f.field_at(&mut j, 5, &x).unwrap(), vec![0.0, jx.cos()]);
        assert_eq!(f.field_at(&mut j, 16, &x).unwrap(), vec![jx.sin(), 0.0]);
        assert_eq!(f.field_at(&mut j, 7, &x).unwrap(), vec![0.0, -jx.cos()]);
        assert_eq!(j.eval_count(), 4);
    }

    #[test]
    fn dimension_mismatch() {
        let f = switched_field(pair_simple(), 2).unwrap();
        let mut j = make_quadratic(&[2.0, 2.0], 6.0).unwrap();
        assert!(matches!(
            f.field_at(&mut j, 0, &[1.0]),
            Err(NcmapError::InvalidDimension { expected: 2, got: 1 })
        ));
        let mut j1 = make_quadratic(&[2.0], 6.0).unwrap();
        assert!(f.field_at(&mut j1, 0, &[1.0, 1.0]).is_err());
        assert!(switched_field(pair_simple(), 0).is_err());
    }

    #[test]
    fn registry_lookup() {
        let mut reg = PairRegistry::default();
        assert_eq!(reg.get("simple").unwrap().label(), "simple");
        assert!(reg.get("nope").is_err());
        assert!(reg.register(pair_sincos()).is_err());
        let p = GeneratingPair::custom("swapped", f64::cos, |j: f64| -j.sin()).unwrap();
        reg.register(p).unwrap();
        assert_eq!(reg.ids().count(), 3);
    }

    #[test]
    fn constant_objective_phases_cancel() {
        let f = switched_field(pair_sincos(), 1).unwrap();
        let mut j = make_constant(1, 3.7).unwrap();
        let total: f64 = (0..4).map(|k| f.component(&mut j, k, &[0.0]).unwrap().1).sum();
        assert!(total.abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sincos_unit_norm(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let j = make_quadratic(&[2.0, -1.0], 6.0).unwrap();
            let p = pair_sincos();
            let s = p.f1(&j, &[x, y]).powi(2) + p.f2(&j, &[x, y]).powi(2);
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn field_is_scaled_unit_vector_with_period(k in 0usize..10_000, n in 1usize..6, seed in -3.0f64..3.0) {
            let f = switched_field(pair_simple(), n).unwrap();
            let center = vec![0.25; n];
            let mut j = make_quadratic(&center, 1.0).unwrap();
            let x: Vec<f64> = (0..n).map(|i| seed + i as f64).collect();
            let g = f.field_at(&mut j, k, &x).unwrap();
            let nonzero = g.iter().filter(|v| **v != 0.0).count();
            prop_assert_eq!(nonzero, 1);
            prop_assert_eq!(g[(k / 4) % n] != 0.0, true);
            let g2 = f.field_at(&mut j, k + 4 * n, &x).unwrap();
            prop_assert_eq!(g, g2);
        }

        #[test]
        fn each_coordinate_gets_one_block(n in 1usize..8, start in 0usize..50) {
            let k0 = start * 4 * n;
            let mut hits = vec![0usize; n];
            for block in 0..n {
                let labels: Vec<StepLabel> = (0..4).map(|p| schedule(k0 + 4 * block + p, n)).collect();
                let phases: Vec<Phase> = labels.iter().map(|l| l.phase).collect();
                prop_assert_eq!(phases, vec![Phase::PlusF1, Phase::PlusF2, Phase::MinusF1, Phase::MinusF2]);
                prop_assert!(labels.iter().all(|l| l.coord == labels[0].coord));
                hits[labels[0].coord] += 1;
            }
            prop_assert!(hits.iter().all(|&h| h == 1));
        }
    }
}
