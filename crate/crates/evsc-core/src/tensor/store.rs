//! Named parameter storage with deterministic initialization.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tensor, TensorError, TensorResult};

/// FNV-1a 64-bit hash; used to derive a per-parameter RNG stream from the
/// parameter name so initialization does not depend on registration order.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// All trainable tensors of a model, keyed by name.
///
/// Iteration order is the sorted name order, so serialization and optimizer
/// sweeps are deterministic.
#[derive(Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> TensorResult<&Tensor> {
        self.params.get(name).ok_or_else(|| TensorError::UnknownParam {
            name: name.to_string(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> TensorResult<&mut Tensor> {
        self.params.get_mut(name).ok_or_else(|| TensorError::UnknownParam {
            name: name.to_string(),
        })
    }

    /// Registers a tensor under `name`. Names are unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> TensorResult<()> {
        if self.params.contains_key(name) {
            return Err(TensorError::DuplicateParam {
                name: name.to_string(),
            });
        }
        self.params.insert(name.to_string(), tensor);
        Ok(())
    }

    fn stream(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(fnv1a64(name.as_bytes()) ^ self.seed)
    }

    /// Xavier-uniform matrix `[rows, cols]`: U(-l, l), l = sqrt(6/(rows+cols)).
    /// The stream is derived from the name alone, so the values do not depend
    /// on how many parameters were registered before this one.
    pub fn init_xavier(&mut self, name: &str, rows: usize, cols: usize) -> TensorResult<()> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = self.stream(name);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Tensor::new(vec![rows, cols], data)?)
    }

    /// Uniform vector in (-limit, limit) from the per-name stream.
    pub fn init_uniform_vec(&mut self, name: &str, len: usize, limit: f64) -> TensorResult<()> {
        let mut rng = self.stream(name);
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Tensor::new(vec![len], data)?)
    }

    pub fn init_zeros(&mut self, name: &str, shape: Vec<usize>) -> TensorResult<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn init_ones(&mut self, name: &str, len: usize) -> TensorResult<()> {
        self.insert(name, Tensor::new(vec![len], vec![1.0; len])?)
    }

    /// Clears the gradient buffer of every parameter.
    pub fn zero_grads(&mut self) {
        for tensor in self.params.values_mut() {
            tensor.zero_grad();
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_order_independent() {
        let mut a = ParamStore::new(7);
        a.init_xavier("w1", 4, 3).unwrap();
        a.init_xavier("w2", 4, 3).unwrap();
        let mut b = ParamStore::new(7);
        b.init_xavier("w2", 4, 3).unwrap();
        b.init_xavier("w1", 4, 3).unwrap();
        assert_eq!(a.get("w1").unwrap().data, b.get("w1").unwrap().data);
        assert_eq!(a.get("w2").unwrap().data, b.get("w2").unwrap().data);
    }

    #[test]
    fn init_differs_across_seeds_and_names() {
        let mut a = ParamStore::new(1);
        a.init_xavier("w", 4, 4).unwrap();
        let mut b = ParamStore::new(2);
        b.init_xavier("w", 4, 4).unwrap();
        assert_ne!(a.get("w").unwrap().data, b.get("w").unwrap().data);

        let mut c = ParamStore::new(1);
        c.init_xavier("v", 4, 4).unwrap();
        assert_ne!(a.get("w").unwrap().data, c.get("v").unwrap().data);
    }

    #[test]
    fn xavier_respects_limit() {
        let mut s = ParamStore::new(3);
        s.init_xavier("w", 10, 14).unwrap();
        let limit = (6.0 / 24.0f64).sqrt();
        for &v in &s.get("w").unwrap().data {
            assert!(v.abs() < limit);
        }
    }

    #[test]
    fn duplicate_registration_is_an_error() {
        let mut s = ParamStore::new(0);
        s.init_zeros("b", vec![3]).unwrap();
        assert!(matches!(
            s.init_zeros("b", vec![3]),
            Err(TensorError::DuplicateParam { .. })
        ));
    }

    #[test]
    fn unknown_name_is_an_error() {
        let s = ParamStore::new(0);
        let err = s.get("nope").unwrap_err();
        assert!(err.to_string().contains("nope"));
    }
}
