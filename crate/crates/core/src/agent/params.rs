use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which objective a parameter array serves. Policy arrays are moved up the
/// gradient, value arrays down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Policy,
    Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// Adam first moment.
    pub m: Vec<f64>,
    /// Adam second moment.
    pub v: Vec<f64>,
}

impl ParamArray {
    pub fn new(name: &str, group: Group, shape: Vec<usize>, values: Vec<f64>) -> Self {
        let n = values.len();
        assert_eq!(shape.iter().product::<usize>(), n, "{name}: shape/data mismatch");
        ParamArray {
            name: name.to_string(),
            group,
            shape,
            values,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All trainable arrays of policy and value function plus optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub arrays: Vec<ParamArray>,
    /// Number of optimizer steps taken.
    pub step: u64,
}

impl ParamSet {
    pub fn zero_grads(&self) -> Grads {
        Grads {
            arrays: self.arrays.iter().map(|a| vec![0.0; a.len()]).collect(),
        }
    }

    pub fn array(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn array_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.arrays.iter_mut().find(|a| a.name == name)
    }

    pub fn n_params(&self) -> usize {
        self.arrays.iter().map(ParamArray::len).sum()
    }

    pub(crate) fn check_grads(&self, grads: &Grads) -> Result<()> {
        let ok = self.arrays.len() == grads.arrays.len()
            && self
                .arrays
                .iter()
                .zip(&grads.arrays)
                .all(|(p, g)| p.len() == g.len() && p.m.len() == p.len() && p.v.len() == p.len());
        if ok {
            Ok(())
        } else {
            Err(Error::domain("gradient shapes do not match the parameter set"))
        }
    }
}

/// Gradients laid out like the arrays of a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub arrays: Vec<Vec<f64>>,
}

impl Grads {
    pub fn scale(&mut self, factor: f64) {
        self.arrays.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.iter().flatten().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.arrays.iter().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

impl AddAssign<&Grads> for Grads {
    fn add_assign(&mut self, rhs: &Grads) {
        assert_eq!(self.arrays.len(), rhs.arrays.len());
        for (a, b) in self.arrays.iter_mut().zip(&rhs.arrays) {
            assert_eq!(a.len(), b.len());
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Entropy bonus weight.
    pub eta: f64,
    pub hidden_units: usize,
    pub n_workers: usize,
    pub context: usize,
    pub normalize_advantage: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.9,
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eta: 0.01,
            hidden_units: 128,
            n_workers: 8,
            context: crate::features::DEFAULT_CONTEXT,
            normalize_advantage: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::domain(msg.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return fail("eta must be >= 0");
        }
        if self.hidden_units < 4 {
            return fail("hidden_units must be at least 4");
        }
        if self.n_workers == 0 {
            return fail("n_workers must be at least 1");
        }
        Ok(())
    }
}
