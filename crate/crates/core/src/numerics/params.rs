use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::norm::RunningStats;
use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Optimized by the trainer.
    Trainable,
    /// State carried alongside parameters (batch-norm running statistics).
    Buffer,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub value: Rc<Tensor>,
    pub grad: Option<Tensor>,
    pub kind: ParamKind,
}

/// Named parameters of one or more networks, keyed by dotted path
/// (`<net>.<stageK>.<block>.<param>`). Iteration order is lexicographic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, kind: ParamKind) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::config(format!("parameter {name} registered twice")));
        }
        self.entries.insert(name.to_string(), Param { value: Rc::new(value), grad: None, kind });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries.get(name).map(|p| &*p.value).ok_or_else(|| Error::config(format!("unknown parameter {name}")))
    }

    /// Replaces the value of an existing entry, keeping its kind.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self.entries.get_mut(name).ok_or_else(|| Error::config(format!("unknown parameter {name}")))?;
        if p.value.dims() != value.dims() {
            return Err(Error::shape(format!("{name}: {:?} replaced by {:?}", p.value.dims(), value.dims())));
        }
        p.value = Rc::new(value);
        Ok(())
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|p| Rc::make_mut(&mut p.value))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of scalar trainable values.
    pub fn num_trainable(&self) -> usize {
        self.entries.values().filter(|p| p.kind == ParamKind::Trainable).map(|p| p.value.numel()).sum()
    }

    /// Registers every entry on `tape`. Trainable entries become
    /// differentiable leaves unless `frozen` is set.
    pub fn bind<'t>(&self, tape: &'t Tape, frozen: bool) -> Bound<'t> {
        let mut vars = BTreeMap::new();
        let mut stats = BTreeMap::new();
        for (name, p) in &self.entries {
            match p.kind {
                ParamKind::Trainable => {
                    vars.insert(name.clone(), tape.leaf_shared(Rc::clone(&p.value), !frozen));
                }
                ParamKind::Buffer => {
                    if let Some(prefix) = name.strip_suffix(".running_mean") {
                        let var_name = format!("{prefix}.running_var");
                        if let Some(v) = self.entries.get(&var_name) {
                            stats.insert(
                                prefix.to_string(),
                                RunningStats { mean: (*p.value).clone(), var: (*v.value).clone() },
                            );
                        }
                    }
                }
            }
        }
        Bound { vars, stats: RefCell::new(stats) }
    }

    /// Stores gradients of every trainable entry (zeros where unreachable).
    pub fn set_grads(&mut self, bound: &Bound<'_>, grads: &Gradients) {
        for (name, p) in self.entries.iter_mut() {
            if let Some(var) = bound.vars.get(name) {
                p.grad = Some(grads.wrt(*var));
            }
        }
    }

    /// Writes batch-norm statistics updated during a training forward pass.
    pub fn commit_stats(&mut self, bound: &Bound<'_>) {
        for (prefix, s) in bound.stats.borrow().iter() {
            if let Some(p) = self.entries.get_mut(&format!("{prefix}.running_mean")) {
                p.value = Rc::new(s.mean.clone());
            }
            if let Some(p) = self.entries.get_mut(&format!("{prefix}.running_var")) {
                p.value = Rc::new(s.var.clone());
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad = None;
        }
    }

    /// Entries whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Copies every entry of `other` into `self`, which must contain the same
    /// names with the same dims. Mismatches are reported together.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        for (name, p) in &self.entries {
            match other.entries.get(name) {
                None => bad.push(format!("{name} (missing)")),
                Some(o) if o.value.dims() != p.value.dims() => {
                    bad.push(format!("{name} (expected {:?}, found {:?})", p.value.dims(), o.value.dims()))
                }
                _ => {}
            }
        }
        for name in other.entries.keys() {
            if !self.entries.contains_key(name) {
                bad.push(format!("{name} (unexpected)"));
            }
        }
        if !bad.is_empty() {
            return Err(Error::Load { names: bad });
        }
        for (name, p) in self.entries.iter_mut() {
            p.value = Rc::clone(&other.entries[name].value);
        }
        Ok(())
    }
}

/// Parameters registered on one tape for one forward pass.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
    stats: RefCell<BTreeMap<String, RunningStats>>,
}

impl<'t> Bound<'t> {
    pub fn var(&self, name: &str) -> Result<Var<'t>> {
        self.vars.get(name).copied().ok_or_else(|| Error::config(format!("parameter {name} is not bound")))
    }

    pub(crate) fn with_stats<R>(&self, prefix: &str, f: impl FnOnce(&mut RunningStats) -> Result<R>) -> Result<R> {
        let mut stats = self.stats.borrow_mut();
        let s = stats
            .get_mut(prefix)
            .ok_or_else(|| Error::config(format!("batch-norm statistics {prefix} are not bound")))?;
        f(s)
    }
}
