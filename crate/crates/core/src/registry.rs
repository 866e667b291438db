//! Name-keyed registries of interchangeable strategies.
//!
//! Each algorithm family (dense eigensolvers, weight initializers, PAC-Bayes
//! basis variants, posterior step rules) implements a common trait and is
//! registered under a stable name so that configuration files and the CLI can
//! select it at runtime.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

type Factory<T> = fn() -> Box<T>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => Ok(factory()),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.names())
            .finish()
    }
}
