use std::collections::BTreeSet;

use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Puts named parameter tensors on a tape, either as differentiable leaves or
/// as constants, and remembers which variable each name went to.
pub struct Binder<'a, T> {
    tape: &'a mut Tape<T>,
    trainable: bool,
    frozen: Option<&'a BTreeSet<String>>,
    bound: Vec<(String, Var)>,
}

impl<'a, T: Scalar> Binder<'a, T> {
    /// Every bound tensor becomes a parameter, except names listed in `frozen`.
    pub fn params(tape: &'a mut Tape<T>, frozen: Option<&'a BTreeSet<String>>) -> Self {
        Self {
            tape,
            trainable: true,
            frozen,
            bound: Vec::new(),
        }
    }

    pub fn constants(tape: &'a mut Tape<T>) -> Self {
        Self {
            tape,
            trainable: false,
            frozen: None,
            bound: Vec::new(),
        }
    }

    pub fn bind(&mut self, name: String, value: &Tensor<T>) -> Var {
        let frozen = self.frozen.is_some_and(|f| f.contains(&name));
        let v = if self.trainable && !frozen {
            self.tape.param(value.clone())
        } else {
            self.tape.constant(value.clone())
        };
        self.bound.push((name, v));
        v
    }

    pub fn tape(&mut self) -> &mut Tape<T> {
        self.tape
    }

    pub fn finish(self) -> Vec<(String, Var)> {
        self.bound
    }
}
