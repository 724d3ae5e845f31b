//! Stable scalar kernels for the standard normal distribution.
//!
//! Everything the likelihood needs funnels through three functions:
//! `log_phi_cdf` (log of the normal CDF), `mills_g` (the inverse Mills
//! ratio φ/Φ), and `mills_h` (its negated derivative). All three stay
//! finite and correctly signed far into the tails, where naive
//! `ln(Φ(a))` underflows long before the solver stops caring.

/// 1/sqrt(2π).
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_68;

/// sqrt(2/π) = g(0).
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Smallest positive double (subnormal); used to saturate strict-sign
/// postconditions where the true value underflows.
const TINY_POS: f64 = f64::from_bits(1);

/// Clamp bounds for `mills_h`: the open unit interval with a hard floor.
const H_MIN: f64 = 1e-300;
/// Largest double strictly below 1.
const H_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Standard normal density φ(a).
#[must_use]
pub fn normal_pdf(a: f64) -> f64 {
    (-0.5 * a * a).exp() * FRAC_1_SQRT_2PI
}

/// Standard normal CDF Φ(a), accurate in the left tail via erfc.
#[must_use]
pub fn normal_cdf(a: f64) -> f64 {
    0.5 * libm::erfc(-a * FRAC_1_SQRT_2)
}

/// Scaled complementary error function erfcx(t) = exp(t²)·erfc(t), t ≥ 0.
///
/// Moderate arguments use the defining product (exp(t²) is still finite and
/// erfc(t) still normal for t ≤ 25); beyond that the asymptotic expansion
/// erfcx(t) = (1/(t√π))·Σ (−1)^k (2k−1)!! / (2t²)^k is summed to
/// convergence, which keeps the function finite and smooth for every
/// representable t.
fn erfcx(t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if t <= 25.0 {
        (t * t).exp() * libm::erfc(t)
    } else {
        let inv2t2 = 1.0 / (2.0 * t * t);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=12u32 {
            term *= -(2.0 * f64::from(k) - 1.0) * inv2t2;
            sum += term;
            if term.abs() < f64::EPSILON * sum.abs() {
                break;
            }
        }
        sum / (t * SQRT_PI)
    }
}

/// log Φ(a), finite and strictly negative for every finite input.
///
/// Left tail: log(erfcx(|a|/√2)/2) − a²/2, which never underflows.
/// Right of −1: log1p against the complementary CDF, so the result keeps
/// full absolute accuracy as Φ(a) → 1. Where the true value is closer to
/// zero than the smallest subnormal (a ≳ 38.6) the result saturates at
/// −4.9e−324 to preserve the strict sign.
#[must_use]
pub fn log_phi_cdf(a: f64) -> f64 {
    if a < -1.0 {
        let t = -a * FRAC_1_SQRT_2;
        (0.5 * erfcx(t)).ln() - 0.5 * a * a
    } else if a < 0.0 {
        normal_cdf(a).ln()
    } else {
        let v = (-0.5 * libm::erfc(a * FRAC_1_SQRT_2)).ln_1p();
        if v == 0.0 {
            -TINY_POS
        } else {
            v
        }
    }
}

/// Inverse Mills ratio g(a) = φ(a)/Φ(a), strictly positive and decreasing.
///
/// For a ≤ 0 the erfcx form √(2/π)/erfcx(−a/√2) is exact-cancellation-free
/// all the way to a = −∞ (g(a) ~ −a). For a > 0 the plain ratio is stable
/// because Φ(a) ≥ ½; once φ(a) underflows (a ≳ 38.6) the result saturates
/// at the smallest positive subnormal.
#[must_use]
pub fn mills_g(a: f64) -> f64 {
    let v = if a <= 0.0 {
        SQRT_2_OVER_PI / erfcx(-a * FRAC_1_SQRT_2)
    } else {
        normal_pdf(a) / normal_cdf(a)
    };
    if v > 0.0 || v.is_nan() {
        v
    } else {
        TINY_POS
    }
}

/// h(a) = g(a)·(a + g(a)) = −g′(a), clamped into the open interval (0, 1).
///
/// Direct evaluation is accurate on the whole working range; far in the
/// left tail (a ≤ −1000) the term a + g(a) cancels catastrophically and the
/// series h(−x) = 1 − x⁻² + 6x⁻⁴ − 50x⁻⁶ takes over. Floating-point results
/// that exit (0, 1) are clamped to [1e−300, 1 − ulp/2] as documented.
#[must_use]
pub fn mills_h(a: f64) -> f64 {
    let v = if a <= -1000.0 {
        let u = 1.0 / (a * a);
        1.0 + u * (-1.0 + u * (6.0 - 50.0 * u))
    } else if a >= 40.0 {
        // True value ≈ a·φ(a) < 1e-300 on this whole range; evaluating the
        // product with a saturated g would overflow toward 1 for huge a.
        H_MIN
    } else {
        let g = mills_g(a);
        g * (a + g)
    };
    v.clamp(H_MIN, H_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 60-digit arithmetic (mpmath), frozen
    // before the implementation was written. Columns: a, log Φ(a), g(a), h(a).
    const TABLE: [(f64, f64, f64, f64); 25] = [
        (-40.00, -804.60844201375379, 40.024968847207264, 0.99937733162140861),
        (-30.00, -454.32124395634320, 30.033259667433677, 0.99889622848810991),
        (-20.00, -203.91715537109726, 20.049753068527851, 0.99753673838494784),
        (-12.50, -81.575967870743883, 12.579007304406976, 0.99383345923685770),
        (-10.00, -53.231285150512471, 10.098093233962512, 0.99055462217434374),
        (-8.00, -35.013437159914550, 8.1213681122361127, 0.98567511655665909),
        (-5.00, -15.064998393988726, 5.1865039671258421, 0.96730356538288777),
        (-3.00, -6.6077262215103495, 3.2830986549304365, 0.92944081321473188),
        (-2.00, -3.7831843336820319, 2.3732155328228409, 0.88572089958591874),
        (-1.50, -2.7059444008238898, 1.9386771666225432, 0.85045340644979730),
        (-1.00, -1.8410216450092635, 1.5251352761609812, 0.80090233442965121),
        (-0.50, -1.1759117615936186, 1.1410777703680645, 0.73151959284412105),
        (-0.25, -0.91306176481113506, 0.96355397941640391, 0.68754777639508675),
        (0.00, -0.69314718055994531, 0.79788456080286536, 0.63661977236758134),
        (0.25, -0.51298407540943043, 0.64583937101681727, 0.57856833590960246),
        (0.50, -0.36894641528865639, 0.50916043383703349, 0.51382456430363290),
        (1.00, -0.17275377902344989, 0.28759997093917836, 0.37031371422339460),
        (2.00, -0.023012909328963488, 0.055247862678989959, 0.11354805168857645),
        (3.00, -0.0013508099647481938, 0.0044378390421256638, 0.013333211541740806),
        (5.00, -2.8665161296376359e-7, 1.4867199409049057e-6, 7.4336019148607112e-6),
        (8.00, -6.2209605742717861e-16, 5.0522710835368954e-15, 4.0418168668295189e-14),
        (12.00, -1.7764821120776790e-33, 2.1463837356630603e-32, 2.5756604827956724e-31),
        (20.00, -2.7536241186062337e-89, 5.5209483621597632e-88, 1.1041896724319526e-86),
        (30.00, -4.9067139271481871e-198, 1.4736461348785475e-196, 4.4209384046356426e-195),
        (37.00, -5.7255712225245768e-300, 2.1200065515246056e-298, 7.8440242406410408e-297),
    ];

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn log_phi_cdf_matches_reference_table() {
        for &(a, want, _, _) in &TABLE {
            let got = log_phi_cdf(a);
            let ok = (got - want).abs() <= 1e-12 || rel_err(got, want) <= 1e-13;
            assert!(ok, "log_phi_cdf({a}) = {got:e}, want {want:e}");
        }
    }

    #[test]
    fn mills_g_matches_reference_table() {
        for &(a, _, want, _) in &TABLE {
            let got = mills_g(a);
            assert!(
                rel_err(got, want) <= 1e-10,
                "mills_g({a}) = {got:e}, want {want:e} (rel {:e})",
                rel_err(got, want)
            );
        }
    }

    #[test]
    fn mills_h_matches_reference_table() {
        for &(a, _, _, want) in &TABLE {
            let got = mills_h(a);
            let ok = (got - want).abs() <= 1e-9 || rel_err(got, want) <= 1e-9;
            assert!(ok, "mills_h({a}) = {got:e}, want {want:e}");
        }
    }

    #[test]
    fn exact_anchor_values() {
        // log Φ(0) = −log 2, g(0) = sqrt(2/π), h(0) = 2/π.
        assert!((log_phi_cdf(0.0) - (-0.693_147_180_559_945_3)).abs() < 1e-15);
        assert!((mills_g(0.0) - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((mills_h(0.0) - 0.636_619_772_367_581_4).abs() < 1e-15);
    }

    #[test]
    fn deep_left_tail_is_finite_and_ordered() {
        let v = log_phi_cdf(-10.0);
        assert!((v - (-53.231_285_150_512_47)).abs() < 1e-11);
        // No -inf anywhere on the supported range, strictly decreasing.
        let mut prev = f64::INFINITY;
        let mut a = 40.0;
        while a >= -40.0 {
            let lv = log_phi_cdf(a);
            assert!(lv.is_finite() && lv < 0.0, "log_phi_cdf({a}) = {lv}");
            assert!(lv < prev || (prev - lv).abs() < 1e-300, "not decreasing at {a}");
            prev = lv;
            a -= 0.37;
        }
    }

    #[test]
    fn saturation_beyond_the_double_range() {
        // True values underflow past a ≈ 38.6; strict signs are preserved.
        for a in [39.0, 40.0, 41.0, 100.0, 1e6] {
            assert!(mills_g(a) > 0.0, "g({a}) must stay positive");
            let lp = log_phi_cdf(a);
            assert!(lp < 0.0 && lp > -1e-300, "log_phi_cdf({a}) = {lp:e}");
        }
        // Far left: g grows like −a without overflow, h approaches 1 from below.
        assert!((mills_g(-1e6) / 1e6 - 1.0).abs() < 1e-9);
        assert!(mills_g(-1e154).is_finite());
        let h = mills_h(-1e6);
        assert!(h < 1.0 && (h - (1.0 - 1e-12)).abs() < 1e-15);
        assert_eq!(mills_h(1e6), 1e-300);
        assert_eq!(mills_h(f64::INFINITY), 1e-300);
        assert!(mills_h(-1e300) < 1.0);
        assert!(mills_h(f64::NEG_INFINITY) < 1.0);
    }

    #[test]
    fn non_finite_inputs_take_their_limits() {
        // Infinite arguments arise transiently from overflowing inner
        // products on divergent solver steps; the kernels return the
        // mathematical limits so the objective goes non-finite and the
        // solver can report divergence instead of crashing.
        assert_eq!(mills_g(f64::NEG_INFINITY), f64::INFINITY);
        assert!(mills_g(f64::INFINITY) > 0.0);
        assert_eq!(log_phi_cdf(f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert!(log_phi_cdf(f64::INFINITY) < 0.0);
        assert!(mills_g(f64::NAN).is_nan());
        assert!(log_phi_cdf(f64::NAN).is_nan());
        assert!(mills_h(f64::NAN).is_nan());
    }

    #[test]
    fn h_stays_in_the_open_unit_interval() {
        let mut a = -40.0;
        while a <= 40.0 {
            let h = mills_h(a);
            assert!(h > 0.0 && h < 1.0, "h({a}) = {h}");
            a += 0.173;
        }
    }

    #[test]
    fn h_matches_negated_derivative_of_g_at_spot_points() {
        // Central finite difference of g; step tuned for ~1e−8 truncation.
        for a in [-7.3, -2.0, -0.4, 0.0, 1.3, 4.1] {
            let eps = 1e-5;
            let fd = -(mills_g(a + eps) - mills_g(a - eps)) / (2.0 * eps);
            assert!(
                (fd - mills_h(a)).abs() < 1e-6,
                "h({a}) = {} vs fd {fd}",
                mills_h(a)
            );
        }
    }
}
