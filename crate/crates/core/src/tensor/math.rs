//! Branch-free `exp`, `sigmoid` and `tanh` over slices.
//!
//! libm evaluates these one element at a time; the activations of a
//! recurrent critic call them millions of times per update. The versions
//! here vectorize and stay within a few ulp of libm.

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// `1.5·2^52`: adding it rounds to an integer held in the low mantissa bits.
const SHIFT: f64 = 6_755_399_441_055_744.0;

/// `1/k!` for `k = 0..=12`.
const INV_FACT: [f64; 13] = [
    1.0,
    1.0,
    0.5,
    1.666_666_666_666_666_6e-1,
    4.166_666_666_666_666_4e-2,
    8.333_333_333_333_333e-3,
    1.388_888_888_888_889e-3,
    1.984_126_984_126_984e-4,
    2.480_158_730_158_730_2e-5,
    2.755_731_922_398_589e-6,
    2.755_731_922_398_589_3e-7,
    2.505_210_838_544_172e-8,
    2.087_675_698_786_81e-9,
];

#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    // Beyond these bounds the result under/overflows anyway.
    let x = x.clamp(-708.0, 709.0);
    let v = x * LOG2_E + SHIFT;
    let k = v - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = INV_FACT[12];
    for c in INV_FACT[..12].iter().rev() {
        p = p * r + c;
    }
    let scale = f64::from_bits(v.to_bits().wrapping_add(1023) << 52);
    p * scale
}

#[inline(always)]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[inline(always)]
pub(crate) fn tanh(x: f64) -> f64 {
    let t = exp(-2.0 * x.abs());
    ((1.0 - t) / (1.0 + t)).copysign(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn exp_matches_libm() {
        for i in -70_000..=70_000 {
            let x = i as f64 * 0.01;
            assert!(rel(exp(x), x.exp()) < 4e-15, "exp({x})");
        }
        assert_eq!(exp(0.0), 1.0);
        assert!(exp(f64::NAN).is_nan());
    }

    #[test]
    fn activations_match_libm() {
        for i in -40_000..=40_000 {
            let x = i as f64 * 1e-3;
            assert!((tanh(x) - x.tanh()).abs() < 1e-15, "tanh({x})");
            assert!(
                (sigmoid(x) - 1.0 / (1.0 + (-x).exp())).abs() < 1e-15,
                "sigmoid({x})"
            );
        }
        assert_eq!(tanh(1e3), 1.0);
        assert_eq!(tanh(-1e3), -1.0);
        assert!(sigmoid(-1e3) < 1e-300);
        assert!(tanh(0.0) == 0.0 && tanh(-0.0).is_sign_negative());
    }
}
