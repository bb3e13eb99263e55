use crate::error::{Error, Result};
use crate::numerics::{Parameter, Rng, Tape, Tensor, Var};
use std::collections::BTreeMap;

/// Ordered, named parameter collection. BTreeMap keeps iteration order
/// deterministic, which the optimizer and checkpoints rely on.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Parameter) {
        debug_assert!(!self.map.contains_key(&p.name), "duplicate param {}", p.name);
        self.map.insert(p.name.clone(), p);
    }

    /// Normal(0, sigma) init on a stream derived from the parameter name, so
    /// adding one parameter never perturbs the init of another.
    pub fn add_randn(&mut self, name: &str, shape: Vec<usize>, sigma: f64, rng: &Rng) {
        let mut stream = rng.derive(name);
        self.insert(Parameter::new(name, Tensor::randn(shape, sigma, &mut stream)));
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.insert(Parameter::new(name, Tensor::zeros(shape)));
    }

    pub fn add_ones(&mut self, name: &str, len: usize) {
        self.insert(Parameter::new(
            name,
            Tensor::new(vec![len], vec![1.0; len]).expect("ones"),
        ));
    }

    pub fn get(&self, name: &str) -> Result<&Parameter> {
        self.map
            .get(name)
            .ok_or_else(|| Error::data(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::data(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Parameter)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn freeze_all(&mut self) {
        for p in self.map.values_mut() {
            p.trainable = false;
        }
    }

    pub fn scalar_count(&self, trainable_only: bool) -> usize {
        self.map
            .values()
            .filter(|p| !trainable_only || p.trainable)
            .map(|p| p.value.len())
            .sum()
    }
}

/// Parameters materialized on a tape for one forward/backward pass.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn bind(store: &ParamStore, tape: &mut Tape) -> Bound {
        let mut vars = BTreeMap::new();
        for (name, p) in store.iter() {
            vars.insert(name.clone(), tape.leaf(p.value.clone()));
        }
        Bound { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::data(format!("unbound parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}
