//! Exact paired sign test.

/// Outcome of a one-sided sign test on paired differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// P(X ≥ wins) for X ~ Binomial(wins + losses, 1/2).
    pub p_value: f64,
}

/// Tests whether `a[i] < b[i]` more often than chance (ties dropped).
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = wins + losses;
    // upper tail in log space to stay exact-ish for n in the hundreds
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0; // ln C(n, 0)
    let mut terms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            terms.push(ln_c + ln_half_n);
        }
    }
    let p_value = terms.iter().map(|t| t.exp()).sum::<f64>().min(1.0);
    SignTest { wins, losses, ties, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_binomial() {
        // 5 wins of 5: 1/32
        let t = sign_test(&[0.0; 5], &[1.0; 5]);
        assert!((t.p_value - 1.0 / 32.0).abs() < 1e-15);
        // 4 wins, 1 loss: 6/32
        let t = sign_test(&[0.0, 0.0, 0.0, 0.0, 2.0], &[1.0; 5]);
        assert!((t.p_value - 6.0 / 32.0).abs() < 1e-15);
        let t = sign_test(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!((t.ties, t.p_value), (2, 1.0));
    }
}
