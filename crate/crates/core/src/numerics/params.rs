use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{config_err, Result};

/// Anything that owns named blocks of trainable reals.
///
/// Gradients are stored in a value of the same type, so two values of one
/// type always enumerate blocks in the same order with the same lengths.
pub trait Parameterized {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>);

    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(config_err!("expected {expected} parameters, got {}", values.len()));
        }
        let mut offset = 0;
        for (_, block) in self.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    fn fill_zero(&mut self) {
        for (_, block) in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    let mut s = String::with_capacity(prefix.len() + name.len() + 1);
    if !prefix.is_empty() {
        s.push_str(prefix);
        s.push('.');
    }
    s.push_str(name);
    s
}
