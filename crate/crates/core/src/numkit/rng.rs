use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seeded, splittable random stream.
///
/// The generator state is a pure function of `(seed, path)`, so a child
/// obtained through [`RngStream::fork`] does not depend on how many values
/// the parent has already produced.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path: Vec<String>,
    rng: ChaCha8Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // length terminator keeps "ab"+"c" apart from "a"+"bc"
    h ^= label.len() as u64;
    h.wrapping_mul(0x0000_0100_0000_01b3)
}

fn derive_key(seed: u64, path: &[String]) -> [u8; 32] {
    let mut h = splitmix(seed);
    for label in path {
        h = splitmix(h ^ fnv1a(label));
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, Vec::new())
    }

    fn at(seed: u64, path: Vec<String>) -> Self {
        let rng = ChaCha8Rng::from_seed(derive_key(seed, &path));
        Self { seed, path, rng }
    }

    pub fn fork(&self, label: &str) -> Self {
        let mut path = self.path.clone();
        path.push(label.to_owned());
        Self::at(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i + 1);
            idx.swap(i, j);
        }
        idx
    }

    /// Uniform direction on the unit sphere in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let n = super::norm2(&v);
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(s: &mut RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn same_label_same_sequence() {
        let s = RngStream::new(7);
        assert_eq!(draws(&mut s.fork("a"), 100), draws(&mut s.fork("a"), 100));
    }

    #[test]
    fn different_labels_differ() {
        let s = RngStream::new(7);
        let a = draws(&mut s.fork("a"), 1000);
        let b = draws(&mut s.fork("b"), 1000);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn nested_path_recomputed_from_seed() {
        let mut parent = RngStream::new(11);
        let first = parent.fork("a").fork("b");
        // drawing from the parent must not affect its children
        let _ = draws(&mut parent, 17);
        let again = RngStream::new(11).fork("a").fork("b");
        assert_eq!(first.path(), &["a".to_string(), "b".to_string()]);
        assert_eq!(draws(&mut first.clone(), 50), draws(&mut again.clone(), 50));
    }

    #[test]
    fn fork_leaves_parent_untouched() {
        let s = RngStream::new(3);
        let before = draws(&mut s.clone(), 10);
        let _child = s.fork("x");
        assert_eq!(draws(&mut s.clone(), 10), before);
        assert!(s.path().is_empty());
    }

    #[test]
    fn label_concatenation_is_not_ambiguous() {
        let s = RngStream::new(0);
        let a = draws(&mut s.fork("ab").fork("c"), 10);
        let b = draws(&mut s.fork("a").fork("bc"), 10);
        assert_ne!(a, b);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = RngStream::new(5).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
