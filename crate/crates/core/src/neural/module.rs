use super::Tensor;

/// A collection of named trainable tensors. Gradients are stored in a value
/// of the same type, so `params()` of a model and of its gradient line up
/// one to one.
pub trait Module {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_(&mut self) {
        for (_, t) in self.params_mut() {
            t.fill(0.0);
        }
    }
}

/// A zeroed copy, suitable as a gradient buffer.
pub fn zeros_like<M: Module + Clone>(m: &M) -> M {
    let mut z = m.clone();
    z.zero_();
    z
}

/// `dst += src`, parameter by parameter.
pub fn accumulate<M: Module>(dst: &mut M, src: &M) {
    for ((_, d), (_, s)) in dst.params_mut().into_iter().zip(src.params()) {
        d.add_assign(s);
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, items: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

pub(crate) fn prefixed_mut<'a>(prefix: &str, items: Vec<(String, &'a mut Tensor)>) -> Vec<(String, &'a mut Tensor)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}
