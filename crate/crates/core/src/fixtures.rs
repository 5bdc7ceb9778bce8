//! Reference chains shared by tests, the benchmark harness and the CLI.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::StochasticMatrix;

/// The non-reversible three-state chain `0 -> 1 -> 2 -> {0, 2}` with
/// stationary distribution `(1/4, 1/4, 1/2)`.
///
/// Its reversible dilation splits into two communicating classes, which makes
/// it the standard stress case for dilation-based gaps.
pub fn skewed_cycle() -> StochasticMatrix {
    StochasticMatrix::from_rows(&[
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![0.5, 0.0, 0.5],
    ])
    .expect("valid fixture")
}

/// A random ergodic chain. Each off-cycle entry is nonzero with probability
/// `density`; the cycle `x -> x+1` is always present so the chain is
/// irreducible, and draws are repeated until the chain is aperiodic.
pub fn random_ergodic_chain(n: usize, density: f64, seed: u64) -> StochasticMatrix {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                if y == (x + 1) % n || rng.random::<f64>() < density {
                    a[(x, y)] = rng.random_range(0.05..1.0);
                }
            }
        }
        let p = normalize_rows(a);
        if p.is_ergodic() {
            return p;
        }
    }
}

/// A random reversible ergodic chain built from a symmetric weight matrix
/// with a positive diagonal.
pub fn random_reversible_chain(n: usize, seed: u64) -> StochasticMatrix {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        w[(x, x)] = rng.random_range(0.05..1.0);
        for y in (x + 1)..n {
            if y == x + 1 || rng.random::<f64>() < 0.6 {
                let v = rng.random_range(0.05..1.0);
                w[(x, y)] = v;
                w[(y, x)] = v;
            }
        }
    }
    normalize_rows(w)
}

fn normalize_rows(mut a: DMatrix<f64>) -> StochasticMatrix {
    for mut row in a.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
    }
    StochasticMatrix::new(a).expect("normalized rows")
}

/// Canned fixtures used by the benchmark harness and the acceptance suite:
/// two sparse five-state chains and one dense, fast-mixing three-state chain.
pub fn canned_chains() -> Vec<(&'static str, StochasticMatrix)> {
    vec![
        ("random5a", random_ergodic_chain(5, 0.5, 20_240_501)),
        ("random5b", random_ergodic_chain(5, 0.5, 20_240_502)),
        ("fast3", random_ergodic_chain(3, 1.0, 20_240_503)),
    ]
}

/// Looks up a fixture by name (`skewed-cycle` or one of [`canned_chains`]).
pub fn by_name(name: &str) -> Option<StochasticMatrix> {
    if name == "skewed-cycle" {
        return Some(skewed_cycle());
    }
    canned_chains()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_ergodic_and_deterministic() {
        for seed in 0..20 {
            let p = random_ergodic_chain(6, 0.3, seed);
            assert!(p.is_ergodic());
            assert_eq!(p, random_ergodic_chain(6, 0.3, seed));
            let r = random_reversible_chain(6, seed);
            assert!(r.is_ergodic());
            assert!(r.is_reversible(1e-12).unwrap());
        }
    }

    #[test]
    fn fixtures_resolve_by_name() {
        assert_eq!(by_name("skewed-cycle").unwrap(), skewed_cycle());
        assert!(by_name("fast3").is_some());
        assert!(by_name("nope").is_none());
    }
}
