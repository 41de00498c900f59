use crate::var::Var;

/// A container of named trainable leaves.
///
/// Implementors list their parameters once, mutably; read-only access and
/// parameter counting fall out of that. Cloning a module is cheap because
/// [`Var`] is reference counted.
pub trait Module: Clone {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)>;

    fn params(&self) -> Vec<(String, Var)> {
        let mut copy = self.clone();
        copy.params_mut().into_iter().map(|(n, v)| (n, v.clone())).collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, v)| v.value().numel()).sum()
    }
}

/// Prepends `prefix.` to every parameter name.
pub fn prefixed<'a>(prefix: &str, params: Vec<(String, &'a mut Var)>) -> Vec<(String, &'a mut Var)> {
    params.into_iter().map(|(n, v)| (format!("{prefix}.{n}"), v)).collect()
}
