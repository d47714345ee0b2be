//! Named parameter collections shared by the models, the optimizer, and the
//! checkpoint format.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// One named parameter tensor. Values are reference-counted so forward
/// passes can alias them into a tape without copying.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Arc<Tensor>,
    pub trainable: bool,
}

/// Ordered collection of parameters. The ordering is part of the contract:
/// optimizer state and gradient vectors align with it by index.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> usize {
        self.params.push(Param {
            name: name.into(),
            value: Arc::new(value),
            trainable,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.params[index]
    }

    /// Mutable access to one parameter's values. Clones the backing buffer
    /// only if a tape still aliases it.
    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        Arc::make_mut(&mut self.params[index].value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Exact count of learnable scalars.
    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Replace values from another set with identical layout.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Dimension(format!(
                "parameter count mismatch: {} vs {}",
                other.len(),
                self.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(other.iter()) {
            if dst.value.shape() != src.value.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {} shape {:?} vs {:?}",
                    dst.name,
                    dst.value.shape(),
                    src.value.shape()
                )));
            }
            dst.value = Arc::clone(&src.value);
        }
        Ok(())
    }
}
