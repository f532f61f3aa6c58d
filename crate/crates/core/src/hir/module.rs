use std::collections::BTreeMap;

use super::ast::{Expr, HFunction};
use super::build::HirError;
use crate::types::HType;

/// A module-level buffer. Globals are zero-initialized unless `init` lists
/// literal element values.
#[derive(Debug, Clone, PartialEq)]
pub struct Global {
    pub name: String,
    pub ty: HType,
    pub init: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HModule {
    pub name: String,
    /// Functions in insertion order; names are unique.
    pub functions: Vec<HFunction>,
    pub type_defs: BTreeMap<String, HType>,
    pub globals: Vec<Global>,
}

impl HModule {
    pub fn new(name: impl Into<String>) -> HModule {
        HModule { name: name.into(), ..Default::default() }
    }

    /// Adds a function; fails if the name is taken.
    pub fn add(&mut self, f: HFunction) -> Result<(), HirError> {
        if self.function(&f.name).is_some() {
            return Err(HirError::DuplicateFunction(f.name));
        }
        self.functions.push(f);
        Ok(())
    }

    /// Adds a function, replacing any existing one with the same name in place.
    pub fn add_or_replace(&mut self, f: HFunction) {
        match self.functions.iter_mut().find(|g| g.name == f.name) {
            Some(slot) => *slot = f,
            None => self.functions.push(f),
        }
    }

    /// Builder-style `add`.
    pub fn with(mut self, f: HFunction) -> Result<HModule, HirError> {
        self.add(f)?;
        Ok(self)
    }

    pub fn function(&self, name: &str) -> Option<&HFunction> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut HFunction> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn remove_function(&mut self, name: &str) -> Option<HFunction> {
        let i = self.functions.iter().position(|f| f.name == name)?;
        Some(self.functions.remove(i))
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn add_global(&mut self, g: Global) -> Result<(), HirError> {
        if self.global(&g.name).is_some() {
            return Err(HirError::DuplicateGlobal(g.name));
        }
        self.globals.push(g);
        Ok(())
    }

    pub fn add_type_def(&mut self, name: impl Into<String>, t: HType) {
        self.type_defs.insert(name.into(), t);
    }
}
