use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-trajectory random stream: ChaCha8 keyed by the master seed, with the
/// trajectory index selecting one of its 2^64 independent streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let xs: Vec<f64> = {
            let mut r = RngStream::new(7, 0);
            (0..8).map(|_| r.uniform()).collect()
        };
        let ys: Vec<f64> = {
            let mut r = RngStream::new(7, 1);
            (0..8).map(|_| r.uniform()).collect()
        };
        assert_ne!(xs, ys);
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 20_000;
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 1);
        let mut cov = 0.0;
        for _ in 0..n {
            cov += (a.uniform() - 0.5) * (b.uniform() - 0.5);
        }
        cov /= n as f64;
        // Var of the product of two centred U(0,1) is 1/144.
        let se = (1.0f64 / 144.0 / n as f64).sqrt();
        assert!(cov.abs() < 4.0 * se, "cov {cov}");
    }

    #[test]
    fn draws_in_unit_interval() {
        let mut r = RngStream::new(0, 0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
