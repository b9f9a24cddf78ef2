use std::collections::HashMap;

use glob::Pattern;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub usize);

/// Shape metadata of one parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKind {
    /// `din * dout` weights (input-major) followed by `dout` biases.
    Linear { din: usize, dout: usize },
    /// `dim` scales followed by `dim` shifts.
    Norm { dim: usize },
}

impl GroupKind {
    pub fn len(&self) -> usize {
        match *self {
            GroupKind::Linear { din, dout } => din * dout + dout,
            GroupKind::Norm { dim } => 2 * dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup<T> {
    pub name: String,
    pub kind: GroupKind,
    pub data: Vec<T>,
    pub trainable: bool,
}

impl<T: Real> ParamGroup<T> {
    /// Weight and bias views of a linear group.
    pub fn linear(&self) -> (&[T], &[T]) {
        match self.kind {
            GroupKind::Linear { din, dout } => self.data.split_at(din * dout),
            GroupKind::Norm { .. } => panic!("group {} is not linear", self.name),
        }
    }

    pub fn norm(&self) -> (&[T], &[T]) {
        match self.kind {
            GroupKind::Norm { dim } => self.data.split_at(dim),
            GroupKind::Linear { .. } => panic!("group {} is not a norm", self.name),
        }
    }
}

/// Named parameter groups in insertion order, each with a trainable flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    groups: Vec<ParamGroup<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            groups: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, kind: GroupKind, data: Vec<T>) -> Result<GroupId> {
        if self.index.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter group {name}")));
        }
        if data.len() != kind.len() {
            return Err(Error::Shape {
                context: "parameter group data",
                expected: kind.len(),
                actual: data.len(),
            });
        }
        let id = self.groups.len();
        self.groups.push(ParamGroup {
            name: name.to_string(),
            kind,
            data,
            trainable: true,
        });
        self.index.insert(name.to_string(), id);
        Ok(GroupId(id))
    }

    /// Xavier-uniform weights, zero bias.
    pub fn add_linear(
        &mut self,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut impl Rng,
    ) -> Result<GroupId> {
        let limit = (6.0 / (din + dout) as f64).sqrt();
        let mut data: Vec<T> = (0..din * dout)
            .map(|_| T::of(rng.gen_range(-limit..limit)))
            .collect();
        data.extend(std::iter::repeat(T::zero()).take(dout));
        self.insert(name, GroupKind::Linear { din, dout }, data)
    }

    pub fn add_norm(&mut self, name: &str, dim: usize) -> Result<GroupId> {
        let mut data = vec![T::one(); dim];
        data.extend(std::iter::repeat(T::zero()).take(dim));
        self.insert(name, GroupKind::Norm { dim }, data)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<GroupId> {
        self.index.get(name).map(|&i| GroupId(i))
    }

    pub fn require(&self, name: &str) -> Result<GroupId> {
        self.id(name)
            .ok_or_else(|| Error::Invalid(format!("missing parameter group {name}")))
    }

    #[inline]
    pub fn get(&self, id: GroupId) -> &ParamGroup<T> {
        &self.groups[id.0]
    }

    pub fn get_mut(&mut self, id: GroupId) -> &mut ParamGroup<T> {
        &mut self.groups[id.0]
    }

    pub fn groups(&self) -> &[ParamGroup<T>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup<T>] {
        &mut self.groups
    }

    /// Group ids ordered by name, the on-disk order.
    pub fn sorted_ids(&self) -> Vec<GroupId> {
        let mut ids: Vec<GroupId> = (0..self.groups.len()).map(GroupId).collect();
        ids.sort_by(|a, b| self.groups[a.0].name.cmp(&self.groups[b.0].name));
        ids
    }

    pub fn n_params(&self) -> usize {
        self.groups.iter().map(|g| g.data.len()).sum()
    }

    pub fn n_params_matching(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.groups
            .iter()
            .filter(|g| pred(&g.name))
            .map(|g| g.data.len())
            .sum()
    }

    pub fn n_trainable(&self) -> usize {
        self.groups
            .iter()
            .filter(|g| g.trainable)
            .map(|g| g.data.len())
            .sum()
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for g in &mut self.groups {
            g.trainable = trainable;
        }
    }

    /// Marks exactly the groups matching any of `globs` trainable and freezes
    /// the rest. Fails, leaving the store untouched, when nothing matches.
    pub fn set_trainable_globs<S: AsRef<str>>(&mut self, globs: &[S]) -> Result<usize> {
        let patterns = globs
            .iter()
            .map(|g| {
                Pattern::new(g.as_ref())
                    .map_err(|e| Error::config("mask", format!("{}: {e}", g.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        let hits: Vec<bool> = self
            .groups
            .iter()
            .map(|g| patterns.iter().any(|p| p.matches(&g.name)))
            .collect();
        let matched = hits.iter().filter(|h| **h).count();
        if matched == 0 {
            let shown: Vec<&str> = globs.iter().map(|g| g.as_ref()).collect();
            return Err(Error::config(
                "mask",
                format!("{shown:?} matches no parameter group"),
            ));
        }
        for (g, hit) in self.groups.iter_mut().zip(hits) {
            g.trainable = hit;
        }
        Ok(matched)
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            groups: self
                .groups
                .iter()
                .map(|g| ParamGroup {
                    name: g.name.clone(),
                    kind: g.kind,
                    data: g.data.iter().map(|v| U::of(v.f64())).collect(),
                    trainable: g.trainable,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Concatenation of all trainable values, in group order.
    pub fn trainable_values(&self) -> Vec<T> {
        self.groups
            .iter()
            .filter(|g| g.trainable)
            .flat_map(|g| g.data.iter().copied())
            .collect()
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub data: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            data: store
                .groups()
                .iter()
                .map(|g| vec![T::zero(); g.data.len()])
                .collect(),
        }
    }

    #[inline]
    pub fn get_mut(&mut self, id: GroupId) -> &mut Vec<T> {
        &mut self.data[id.0]
    }

    pub fn get(&self, id: GroupId) -> &[T] {
        &self.data[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.data {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }

    /// Zeroes the gradient of every frozen group.
    pub fn apply_mask(&mut self, store: &ParamStore<T>) {
        for (g, p) in self.data.iter_mut().zip(store.groups()) {
            if !p.trainable {
                g.iter_mut().for_each(|x| *x = T::zero());
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }
}
