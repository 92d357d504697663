//! Parameter vectors with bounds and the structural/friction partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval bound for one parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bound { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Parameter vector θ with per-coordinate bounds and the (θ₁, θ₂) partition,
/// θ₂ being the friction block (θ₂ = 0 recovers the frictionless benchmark).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    bounds: Vec<Bound>,
    /// Indices of the friction block θ₂; the complement is θ₁.
    friction_block: Vec<usize>,
    names: Vec<String>,
}

impl ParamVector {
    /// Builds a parameter vector, checking bounds and the partition.
    pub fn new(
        values: Vec<f64>,
        bounds: Vec<Bound>,
        friction_block: Vec<usize>,
        names: Vec<String>,
    ) -> Result<Self> {
        if values.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector",
                expected: format!("{} bounds", values.len()),
                got: format!("{}", bounds.len()),
            });
        }
        if !names.is_empty() && names.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector names",
                expected: format!("{}", values.len()),
                got: format!("{}", names.len()),
            });
        }
        for (i, (&v, b)) in values.iter().zip(&bounds).enumerate() {
            if !v.is_finite() || b.lo > b.hi {
                return Err(Error::InvalidInput(format!(
                    "parameter {i}: value {v} with bound [{}, {}]",
                    b.lo, b.hi
                )));
            }
            if !b.contains(v) {
                return Err(Error::ParameterOutOfBounds {
                    index: i,
                    value: v,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        let mut seen = vec![false; values.len()];
        for &i in &friction_block {
            if i >= values.len() || seen[i] {
                return Err(Error::InvalidInput(format!(
                    "friction block index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        Ok(ParamVector {
            values,
            bounds,
            friction_block,
            names,
        })
    }

    /// Unnamed, unpartitioned convenience constructor.
    pub fn unnamed(values: Vec<f64>, bounds: Vec<Bound>) -> Result<Self> {
        ParamVector::new(values, bounds, Vec::new(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> String {
        if i < self.names.len() {
            self.names[i].clone()
        } else {
            format!("theta_{i}")
        }
    }

    /// Index set of the friction block θ₂.
    pub fn friction_block(&self) -> &[usize] {
        &self.friction_block
    }

    /// Index set of the structural block θ₁ (complement of θ₂).
    pub fn structural_block(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|i| !self.friction_block.contains(i))
            .collect()
    }

    pub fn in_bounds(&self, candidate: &[f64]) -> bool {
        candidate.len() == self.bounds.len()
            && candidate
                .iter()
                .zip(&self.bounds)
                .all(|(&v, b)| b.contains(v))
    }

    /// Same bounds and partition, new values. Fails outside bounds.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(
            values,
            self.bounds.clone(),
            self.friction_block.clone(),
            self.names.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_bounds_value() {
        let err = ParamVector::unnamed(vec![2.0], vec![Bound::new(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::ParameterOutOfBounds { index: 0, .. }));
    }

    #[test]
    fn partition_covers_and_is_disjoint() {
        let pv = ParamVector::new(
            vec![0.5, 0.1],
            vec![Bound::new(0.0, 1.0), Bound::new(0.0, 1.0)],
            vec![1],
            vec!["mu".into(), "kappa".into()],
        )
        .unwrap();
        assert_eq!(pv.structural_block(), vec![0]);
        assert_eq!(pv.friction_block(), &[1]);

        let dup = ParamVector::new(
            vec![0.5, 0.1],
            vec![Bound::new(0.0, 1.0), Bound::new(0.0, 1.0)],
            vec![1, 1],
            vec![],
        );
        assert!(dup.is_err());
    }
}
