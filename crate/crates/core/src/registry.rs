//! Name-keyed collections of interchangeable strategies.
//!
//! Every pluggable numerical choice (noise kernel families, rotation-vector
//! methods, gradient routes) implements [`Named`] and is looked up at run
//! time by the name that appears in configuration files.

use thiserror::Error;

pub trait Named {
    fn name(&self) -> &str;
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown {kind} '{name}'; available: {}", available.join(", "))]
pub struct UnknownEntry {
    pub kind: &'static str,
    pub name: String,
    pub available: Vec<String>,
}

/// Insertion-ordered registry; re-registering a name replaces the entry.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Box<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry { kind, entries: Vec::new() }
    }

    pub fn register(&mut self, entry: Box<T>) {
        if let Some(slot) = self.entries.iter_mut().find(|e| e.name() == entry.name()) {
            *slot = entry;
        } else {
            self.entries.push(entry);
        }
    }

    pub fn get(&self, name: &str) -> Result<&T, UnknownEntry> {
        self.entries.iter().find(|e| e.name() == name).map(|b| b.as_ref()).ok_or_else(|| UnknownEntry {
            kind: self.kind,
            name: name.to_string(),
            available: self.names(),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name() == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name().to_string()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|b| b.as_ref())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
