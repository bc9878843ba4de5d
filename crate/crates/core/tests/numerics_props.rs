use conef::numerics::{purpose, HashFamily, RngStream};
use proptest::prelude::*;

proptest! {
    #[test]
    fn streams_are_functions_of_seed_stream_and_counter(seed in any::<u64>(), stream in any::<u64>(), skip in 0u64..500) {
        let mut a = RngStream::new(seed, stream);
        for _ in 0..skip {
            a.next_u64();
        }
        let mut b = RngStream::at(seed, stream, skip);
        for _ in 0..20 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        prop_assert_eq!(a.counter(), skip + 20);
    }

    #[test]
    fn peek_does_not_advance(seed in any::<u64>(), counter in any::<u64>()) {
        let s = RngStream::new(seed, 7);
        prop_assert_eq!(s.peek_u64(counter), s.peek_u64(counter));
        prop_assert_eq!(s.counter(), 0);
        prop_assert_eq!(RngStream::at(seed, 7, counter).next_u64(), s.peek_u64(counter));
    }

    #[test]
    fn distinct_streams_differ(seed in any::<u64>(), a in 0u64..64, b in 0u64..64) {
        prop_assume!(a != b);
        let mut x = RngStream::new(seed, purpose::stream(purpose::DATA, a));
        let mut y = RngStream::new(seed, purpose::stream(purpose::DATA, b));
        let same = (0..16).filter(|_| x.next_u64() == y.next_u64()).count();
        prop_assert_eq!(same, 0);
    }

    #[test]
    fn bounded_draws_stay_in_range(seed in any::<u64>(), n in 1u64..1_000_000) {
        let mut s = RngStream::new(seed, 1);
        for _ in 0..50 {
            prop_assert!(s.next_below(n) < n);
            let u = s.next_uniform();
            prop_assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn hashes_are_deterministic_and_in_range(seed in any::<u64>(), rows in 1usize..6, width in 1usize..300, coord in 0usize..100_000) {
        let f = HashFamily::new(seed, rows, width);
        let g = HashFamily::new(seed, rows, width);
        for r in 0..rows {
            prop_assert!(f.hash_index(r, coord) < width);
            prop_assert_eq!(f.hash_index(r, coord), g.hash_index(r, coord));
            let s = f.hash_sign(r, coord);
            prop_assert!(s == 1.0 || s == -1.0);
        }
    }

    #[test]
    fn injective_family_is_a_permutation(seed in any::<u64>(), width in 1usize..200) {
        let f = HashFamily::injective(seed, 2, width);
        for r in 0..2 {
            let mut seen = vec![false; width];
            for c in 0..width {
                let h = f.hash_index(r, c);
                prop_assert!(!seen[h]);
                seen[h] = true;
            }
        }
    }
}

#[test]
fn uniforms_have_the_right_moments() {
    let mut s = RngStream::new(123, 4);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| s.next_gaussian()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.02, "variance {var}");
    let signs: f64 = (0..n).map(|_| s.next_sign()).sum();
    assert!(signs.abs() / (n as f64) < 0.01);
}
