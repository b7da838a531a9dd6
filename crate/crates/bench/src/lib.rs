//! Seeded fixtures shared by the benchmarks.

use psearch_core::matcher::PooledTable;
use psearch_core::types::{normalize, Container, ContainerLabel, EmbeddingRecord, Orientation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&raw).expect("gaussian draw is non-zero")
}

/// Gallery with every orientation slot of every identity filled.
pub fn full_table(rng: &mut impl Rng, ids: usize, dim: usize) -> PooledTable {
    let mut t = PooledTable::new(dim, None);
    for _ in 0..ids {
        let id = t.init_identity(&unit(rng, dim), Orientation::Front).unwrap();
        t.update(id, Orientation::Back, &unit(rng, dim)).unwrap();
        t.update(id, Orientation::Side, &unit(rng, dim)).unwrap();
    }
    t
}

pub fn containers(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Container> {
    (0..n)
        .map(|i| {
            let r = EmbeddingRecord::with_orientation(&unit(rng, dim), Orientation::ALL[i % 3]).unwrap();
            Container::spawn(ContainerLabel(i as u64), &r, 0)
        })
        .collect()
}

/// Each container's feature plus noise of norm `sigma`.
pub fn probes(rng: &mut impl Rng, containers: &[Container], sigma: f64) -> Vec<EmbeddingRecord> {
    containers
        .iter()
        .map(|c| {
            let n = unit(rng, c.fea.len());
            let raw: Vec<f64> = c.fea.iter().zip(&n).map(|(a, b)| a + sigma * b).collect();
            EmbeddingRecord::with_orientation(&raw, c.ori).unwrap()
        })
        .collect()
}
