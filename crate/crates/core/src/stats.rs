//! Paired significance testing.

/// Exact two-sided sign test over the discordant pairs of a paired
/// comparison: `wins` pairs favor one side, `losses` the other.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    let ln2 = std::f64::consts::LN_2;
    // ln C(n, i) built incrementally.
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose - n as f64 * ln2).exp();
    }
    (2.0 * tail).min(1.0)
}

/// Counts of pairs where `a` beats `b` and vice versa.
pub fn paired_counts<T>(a: &[T], b: &[T], better: impl Fn(&T, &T) -> bool) -> (usize, usize) {
    a.iter().zip(b).fold((0, 0), |(w, l), (x, y)| {
        (w + better(x, y) as usize, l + better(y, x) as usize)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        // 6 wins, 0 losses: 2 · 0.5^6 = 0.03125.
        assert!((sign_test_p_value(6, 0) - 0.03125).abs() < 1e-12);
        // 5 vs 1: 2 · (1 + 6) / 64 = 0.21875.
        assert!((sign_test_p_value(5, 1) - 0.21875).abs() < 1e-12);
        assert_eq!(sign_test_p_value(3, 3), 1.0);
        assert_eq!(sign_test_p_value(0, 0), 1.0);
    }

    #[test]
    fn large_counts_stay_finite() {
        let p = sign_test_p_value(60, 20);
        assert!(p > 0.0 && p < 1e-4);
    }

    #[test]
    fn counts_pairs() {
        let a = [1, 2, 3, 4];
        let b = [0, 2, 5, 1];
        assert_eq!(paired_counts(&a, &b, |x, y| x > y), (2, 1));
    }
}
