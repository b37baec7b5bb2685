use std::collections::HashMap;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named array. Non-trainable parameters hold state such as batch-norm
/// running statistics: they are checkpointed but never receive gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
    pub trainable: bool,
}

impl<T: Real> Parameter<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Registry of every parameter of a model, in creation order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        values: Vec<T>,
        trainable: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(Error::shape(format!(
                "parameter {name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        if self.by_name.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            shape: shape.to_vec(),
            grad: vec![T::zero(); numel],
            values,
            trainable,
        });
        Ok(id)
    }

    /// He-normal initialised trainable parameter.
    pub fn add_he(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut Rng,
    ) -> Result<ParamId> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
        self.add(name, shape, values, true)
    }

    pub fn add_const(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        value: f64,
        trainable: bool,
    ) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        self.add(name, shape, vec![T::from_f64(value); n], trainable)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[T] {
        &self.params[id.0].values
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.values.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds a backward pass's gradients into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (p, g) in self.params.iter_mut().zip(&grads.by_param) {
            if let Some(g) = g {
                for (a, &b) in p.grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }

    /// Folds batch statistics into running mean/variance:
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn apply_running_stats(&mut self, updates: &[StatsUpdate<T>], momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::one() - m;
        for u in updates {
            for (id, batch) in [(u.mean, &u.batch_mean), (u.var, &u.batch_var)] {
                let p = &mut self.params[id.0];
                for (r, &b) in p.values.iter_mut().zip(batch) {
                    *r = keep * *r + m * b;
                }
            }
        }
    }

    pub fn to_f64(&self) -> ParamStore<f64> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|v| v.as_f64()).collect(),
                    grad: p.grad.iter().map(|v| v.as_f64()).collect(),
                    trainable: p.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Per-parameter gradients from one backward pass (`None` where no gradient
/// reached the parameter).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub by_param: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.by_param.get(id.0).and_then(|g| g.as_deref())
    }
}

/// Batch statistics observed by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct StatsUpdate<T> {
    pub mean: ParamId,
    pub var: ParamId,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}
