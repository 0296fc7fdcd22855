//! Standard normal helpers evaluated in double precision.

#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

use crate::scalar::Scalar;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::lit((-0.5 * x * x).exp() * FRAC_1_SQRT_2PI)
}

pub fn cdf<T: Scalar>(x: T) -> T {
    T::lit(cody(x.as_f64()).0)
}

/// Inverse CDF; `p` in (0, 1).
pub fn quantile<T: Scalar>(p: T) -> T {
    T::lit(as241(p.as_f64()))
}

/// `(Φ(x), 1 - Φ(x))` by Cody's rational Chebyshev approximations.
fn cody(x: f64) -> (f64, f64) {
    const A: [f64; 5] = [
        2.2352520354606839287,
        161.02823106855587881,
        1067.6894854603709582,
        18154.981253343561249,
        0.065682337918207449113,
    ];
    const B: [f64; 4] = [
        47.20258190468824187,
        976.09855173777669322,
        10260.932208618978205,
        45507.789335026729956,
    ];
    const C: [f64; 9] = [
        0.39894151208813466764,
        8.8831497943883759412,
        93.506656132177855979,
        597.27027639480026226,
        2494.5375852903726711,
        6848.1904505362823326,
        11602.651437647350124,
        9842.7148383839780218,
        1.0765576773720192317e-8,
    ];
    const D: [f64; 8] = [
        22.266688044328115691,
        235.38790178262499861,
        1519.377599407554805,
        6485.558298266760755,
        18615.571640885098091,
        34900.952721145977266,
        38912.003286093271411,
        19685.429676859990727,
    ];
    const P: [f64; 6] = [
        0.21589853405795699,
        0.1274011611602473639,
        0.022235277870649807,
        0.001421619193227893466,
        2.9112874951168792e-5,
        0.02307344176494017303,
    ];
    const Q: [f64; 5] = [
        1.28426009614491121,
        0.468238212480865118,
        0.0659881378689285515,
        0.00378239633202758244,
        7.29751555083966205e-5,
    ];
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    let y = x.abs();
    if y <= 0.67448975 {
        let (mut num, mut den) = (0.0, 0.0);
        if y > f64::EPSILON * 0.5 {
            let xsq = x * x;
            num = A[4] * xsq;
            den = xsq;
            for i in 0..3 {
                num = (num + A[i]) * xsq;
                den = (den + B[i]) * xsq;
            }
        }
        let t = x * (num + A[3]) / (den + B[3]);
        return (0.5 + t, 0.5 - t);
    }
    let tail = if y <= 32f64.sqrt() {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        let t = (num + C[7]) / (den + D[7]);
        let xsq = (y * 16.0).trunc() / 16.0;
        let del = (y - xsq) * (y + xsq);
        (-xsq * xsq * 0.5).exp() * (-del * 0.5).exp() * t
    } else if y < 50.0 {
        let xsq = 1.0 / (x * x);
        let mut num = P[5] * xsq;
        let mut den = xsq;
        for i in 0..4 {
            num = (num + P[i]) * xsq;
            den = (den + Q[i]) * xsq;
        }
        let t = xsq * (num + P[4]) / (den + Q[4]);
        let t = (FRAC_1_SQRT_2PI - t) / y;
        let xsq = (y * 16.0).trunc() / 16.0;
        let del = (y - xsq) * (y + xsq);
        (-xsq * xsq * 0.5).exp() * (-del * 0.5).exp() * t
    } else {
        0.0
    };
    if x > 0.0 {
        (1.0 - tail, tail)
    } else {
        (tail, 1.0 - tail)
    }
}

/// Wichura's AS 241 (PPND16) normal quantile.
fn as241(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Mills ratio `(1 - Φ(t)) / φ(t)` for large positive `t` by continued fraction.
fn mills(t: f64) -> f64 {
    let mut f = t;
    for k in (1..=80).rev() {
        f = t + k as f64 / f;
    }
    1.0 / f
}

const TAIL: f64 = -20.0;

pub fn log_cdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    if x == f64::INFINITY {
        return T::zero();
    }
    if x < TAIL {
        T::lit(-0.5 * x * x - 0.5 * (2.0 * PI).ln() + mills(-x).ln())
    } else {
        T::lit(cody(x).0.ln())
    }
}

/// Inverse Mills ratio `φ(x) / Φ(x)`.
pub fn inv_mills<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    if x == f64::INFINITY {
        return T::zero();
    }
    if x < TAIL {
        T::lit(1.0 / mills(-x))
    } else {
        T::lit((-0.5 * x * x).exp() * FRAC_1_SQRT_2PI / cody(x).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_high_precision_reference() {
        // (x, Φ(x)) from 30-digit arithmetic.
        let table = [
            (-8.0, 6.22096057427178412352e-16),
            (-3.0, 1.34989803163009452665e-3),
            (-1.0, 0.158655253931457051415),
            (0.1, 0.539827837277028981465),
            (0.5, 0.691462461274013103637),
            (1.959963984540054, 0.974999999999999986235),
            (4.0, 0.999968328758166880079),
        ];
        for (x, p) in table {
            let got: f64 = cdf(x);
            assert!((got - p).abs() < 1e-15, "cdf({x})");
            assert!((got - p).abs() / p < 1e-13, "relative cdf({x})");
            if p < 0.99999 {
                let back: f64 = quantile(p);
                assert!((back - x).abs() < 1e-12 * x.abs().max(1.0), "quantile({p})");
            }
        }
        assert_eq!(cdf(0.0f64), 0.5);
        assert!((quantile(1e-300f64) + 37.047096299361199).abs() < 1e-9);
    }

    #[test]
    fn tails_are_continuous() {
        let a: f64 = log_cdf(TAIL + 1e-9);
        let b: f64 = log_cdf(TAIL - 1e-9);
        assert!((a - b).abs() < 1e-7);
        let a: f64 = inv_mills(TAIL + 1e-9);
        let b: f64 = inv_mills(TAIL - 1e-9);
        assert!((a - b).abs() / a < 1e-8);
        let far: f64 = log_cdf(-100.0);
        assert!(far.is_finite() && far < -5000.0);
    }
}
