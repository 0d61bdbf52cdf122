use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Ordered, named collection of trainable tensors.
///
/// A network and its target copy are two `ParamSet`s with identical names,
/// shapes and ordering.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// The tape handles of a `ParamSet` recorded for one forward pass.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    /// Tape handles in parameter order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.numel()];
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter on `tape`, gradient-bearing iff `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Binding { vars }
    }

    /// Adds the gradients of a backward pass into each parameter's `grad`.
    pub fn accumulate_grads(&mut self, binding: &Binding, grads: &Gradients) {
        for (p, &v) in self.params.iter_mut().zip(&binding.vars) {
            if let Some(g) = grads.get(v) {
                p.grad.iter_mut().zip(g).for_each(|(acc, gi)| *acc += gi);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Contract(format!(
                "parameter sets differ in length: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Contract(format!(
                    "parameter mismatch: `{}` {:?} vs `{}` {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }

    /// Polyak averaging: `self ← tau·main + (1 − tau)·self`.
    pub fn soft_update(&mut self, main: &ParamSet, tau: f64) -> Result<()> {
        self.check_compatible(main)?;
        for (t, m) in self.params.iter_mut().zip(&main.params) {
            for (tv, mv) in t.value.data_mut().iter_mut().zip(m.value.data()) {
                *tv = tau * mv + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }

    /// Hard copy of every value from `main`.
    pub fn copy_from(&mut self, main: &ParamSet) -> Result<()> {
        self.check_compatible(main)?;
        for (t, m) in self.params.iter_mut().zip(&main.params) {
            t.value.data_mut().copy_from_slice(m.value.data());
        }
        Ok(())
    }
}

/// Draws `rows×cols` weights uniformly from `±sqrt(1/fan_in)`.
pub fn uniform_weights<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(main: Vec<f64>, target: Vec<f64>) -> (ParamSet, ParamSet) {
        let mut m = ParamSet::new();
        m.add("w", Tensor::vector(main));
        let mut t = ParamSet::new();
        t.add("w", Tensor::vector(target));
        (m, t)
    }

    #[test]
    fn soft_update_endpoints() {
        let (m, mut t) = pair(vec![1.0, -2.0], vec![5.0, 7.0]);
        t.soft_update(&m, 0.0).unwrap();
        assert_eq!(t.iter().next().unwrap().value.data(), &[5.0, 7.0]);
        t.soft_update(&m, 1.0).unwrap();
        assert_eq!(t.iter().next().unwrap().value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn soft_update_default_rate() {
        let (m, mut t) = pair(vec![1.0], vec![0.0]);
        t.soft_update(&m, 0.005).unwrap();
        assert_eq!(t.iter().next().unwrap().value.data(), &[0.005]);
    }

    #[test]
    fn soft_update_rejects_mismatched_sets() {
        let (m, _) = pair(vec![1.0], vec![0.0]);
        let mut other = ParamSet::new();
        other.add("w", Tensor::vector(vec![0.0, 0.0]));
        assert!(matches!(
            other.soft_update(&m, 0.5),
            Err(Error::Contract(_))
        ));
        let mut renamed = ParamSet::new();
        renamed.add("v", Tensor::vector(vec![0.0]));
        assert!(renamed.soft_update(&m, 0.5).is_err());
    }

    #[test]
    fn uniform_weights_respect_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = uniform_weights(50, 100, 100, &mut rng);
        assert!(w.data().iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn uniform_weights_mean_is_centred() {
        // U(-b, b) has std b/sqrt(3); the sample mean of n draws has std b/sqrt(3n).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w = uniform_weights(100, 100, 100, &mut rng);
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let sigma_mean = 0.1 / (3.0 * n).sqrt();
        assert!(mean.abs() <= 3.0 * sigma_mean, "mean {mean}");
    }

    #[test]
    fn accumulate_is_additive() {
        let mut ps = ParamSet::new();
        let id = ps.add("p", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape, true);
        let s = tape.sum(b.var(id));
        let g = tape.backward(s).unwrap();
        ps.accumulate_grads(&b, &g);
        let g2 = tape.backward(s).unwrap();
        ps.accumulate_grads(&b, &g2);
        assert_eq!(ps.get(id).grad, vec![2.0, 2.0]);
    }

    proptest! {
        #[test]
        fn soft_update_is_convex(
            vals in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..20),
            tau in 0.0f64..=1.0,
        ) {
            let (main, target): (Vec<f64>, Vec<f64>) = vals.iter().cloned().unzip();
            let (m, mut t) = pair(main.clone(), target.clone());
            t.soft_update(&m, tau).unwrap();
            for ((v, lo), hi) in t.iter().next().unwrap().value.data().iter().zip(&main).zip(&target) {
                let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
                prop_assert!(*v >= a - 1e-12 && *v <= b + 1e-12);
            }
        }
    }
}
