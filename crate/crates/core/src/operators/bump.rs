/// Smooth radial cutoff used for all Littlewood–Paley pieces.
///
/// `χ(ξ) = ψ(|ξ|)` with `ψ(r) = h(2−r) / (h(2−r) + h(r−1))` and
/// `h(s) = e^{−1/s}` for `s > 0`, zero otherwise. `χ = 1` on `|ξ| ≤ 1`,
/// `χ = 0` on `|ξ| ≥ 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LpBump;

#[inline]
fn h(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

impl LpBump {
    #[inline]
    pub fn psi(r: f64) -> f64 {
        if r <= 1.0 {
            return 1.0;
        }
        if r >= 2.0 {
            return 0.0;
        }
        let a = h(2.0 - r);
        a / (a + h(r - 1.0))
    }

    #[inline]
    pub fn chi(xi: [f64; 2]) -> f64 {
        Self::psi(xi[0].hypot(xi[1]))
    }

    /// `χ_L(ξ) = χ(ξ/L) − χ(2ξ/L)`, supported in `L/2 ≤ |ξ| ≤ 2L`.
    #[inline]
    pub fn annulus(xi: [f64; 2], scale: f64) -> f64 {
        let r = xi[0].hypot(xi[1]) / scale;
        Self::psi(r) - Self::psi(2.0 * r)
    }

    /// Inhomogeneous piece: `ρ₁ = χ`, `ρ_N = χ_N` for `N ≥ 2`.
    #[inline]
    pub fn rho(xi: [f64; 2], n: f64) -> f64 {
        if n <= 1.0 {
            Self::chi(xi)
        } else {
            Self::annulus(xi, n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plateau_and_support() {
        assert_eq!(LpBump::psi(0.0), 1.0);
        assert_eq!(LpBump::psi(1.0), 1.0);
        assert_eq!(LpBump::psi(2.0), 0.0);
        assert_eq!(LpBump::psi(7.0), 0.0);
        assert!((LpBump::psi(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_on_transition() {
        let mut prev = 1.0;
        for k in 0..=1000 {
            let r = 1.0 + k as f64 / 1000.0;
            let v = LpBump::psi(r);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn partition_telescopes(x in -40.0f64..40.0, y in -40.0f64..40.0, m in 1u32..6) {
            let xi = [x, y];
            let top = 2f64.powi(m as i32);
            let mut sum = LpBump::chi(xi);
            let mut n = 2.0;
            while n <= top {
                sum += LpBump::annulus(xi, n);
                n *= 2.0;
            }
            let target = LpBump::chi([x / top, y / top]);
            prop_assert!((sum - target).abs() < 1e-14);
        }

        #[test]
        fn annulus_support(r in 0.0f64..50.0, k in -3i32..4) {
            let l = 2f64.powi(k);
            let v = LpBump::annulus([r, 0.0], l);
            prop_assert!((0.0..=1.0).contains(&v));
            if r <= l / 2.0 || r >= 2.0 * l {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
