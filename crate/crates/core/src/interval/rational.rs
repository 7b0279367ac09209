//! Exact rational helpers on top of `num_rational::Ratio<i128>`.

use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational number, always kept in lowest terms with a positive denominator.
pub type Rational = num_rational::Ratio<i128>;

pub fn rat(numer: i128, denom: i128) -> Rational {
    Rational::new(numer, denom)
}

pub fn int(n: i128) -> Rational {
    Rational::from_integer(n)
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::ParseRational(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i128 = p.trim().parse().map_err(|_| bad())?;
            let q: i128 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(int(s.parse().map_err(|_| bad())?)),
    }
}

/// Always renders as `p/q`, including integers.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn to_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn ceil(r: &Rational) -> i128 {
    r.ceil().to_integer()
}

pub fn floor(r: &Rational) -> i128 {
    r.floor().to_integer()
}

pub fn lcm_all<I: IntoIterator<Item = i128>>(values: I) -> i128 {
    values.into_iter().fold(1, |acc, v| acc.lcm(&v))
}

/// Best rational approximation of `x` with denominator at most `max_den`, accepted only
/// when it lies within `tol` of `x`.
pub fn recover(x: f64, max_den: i128, tol: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    // continued fraction convergents
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut rem = x;
    for _ in 0..64 {
        let a = rem.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i128;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > max_den {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let approx = h1 as f64 / k1 as f64;
        if (approx - x).abs() <= tol {
            return Some(Rational::new(h1, k1));
        }
        let frac = rem - rem.floor();
        if frac.abs() < 1e-300 {
            break;
        }
        rem = 1.0 / frac;
    }
    if k1 > 0 && ((h1 as f64 / k1 as f64) - x).abs() <= tol {
        Some(Rational::new(h1, k1))
    } else {
        None
    }
}

/// The rational with the smallest denominator in the closed interval `[lo, hi]`
/// (Stern-Brocot descent). Requires `0 <= lo <= hi`.
pub fn simplest_in(lo: &Rational, hi: &Rational) -> Option<Rational> {
    if lo > hi || lo.is_negative() {
        return None;
    }
    let fl = lo.floor();
    if fl == *lo {
        return Some(fl);
    }
    if fl + Rational::one() <= *hi {
        return Some(fl + Rational::one());
    }
    // lo and hi share the integer part and lo is not an integer.
    let lo_frac = lo - fl;
    let hi_frac = hi - fl;
    if hi_frac.is_zero() {
        return Some(fl);
    }
    // 1/x maps [lo_frac, hi_frac] to [1/hi_frac, 1/lo_frac]
    let inner = simplest_in(&hi_frac.recip(), &lo_frac.recip())?;
    Some(fl + inner.recip())
}

pub mod serde_rational {
    //! Serializes a [`Rational`] as a `"p/q"` string.
    use super::{format_rational, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_rational_vec {
    //! Serializes a `Vec<Rational>` as a list of `"p/q"` strings.
    use super::{format_rational, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats() {
        assert_eq!(parse_rational("6/8").unwrap(), rat(3, 4));
        assert_eq!(parse_rational(" 2 ").unwrap(), int(2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
        assert_eq!(format_rational(&int(1)), "1/1");
    }

    #[test]
    fn recovers_short_fractions() {
        assert_eq!(recover(0.75, 1000, 1e-12), Some(rat(3, 4)));
        assert_eq!(recover(0.7, 1000, 1e-12), Some(rat(7, 10)));
        assert_eq!(recover(1.0 / 3.0, 1000, 1e-12), Some(rat(1, 3)));
        assert_eq!(recover(0.0, 1000, 1e-12), Some(int(0)));
        assert_eq!(recover(std::f64::consts::PI - 3.0, 100, 1e-12), None);
    }

    #[test]
    fn simplest_rational_in_interval() {
        assert_eq!(simplest_in(&rat(1, 3), &rat(1, 2)), Some(rat(1, 2)));
        assert_eq!(simplest_in(&rat(3, 10), &rat(7, 20)), Some(rat(1, 3)));
        assert_eq!(simplest_in(&rat(2, 5), &rat(2, 5)), Some(rat(2, 5)));
        assert_eq!(simplest_in(&rat(1, 2), &rat(1, 3)), None);
        // brute force on a small range
        for q1 in 1..12i128 {
            for p1 in 0..q1 {
                for q2 in 1..12i128 {
                    for p2 in 0..=q2 {
                        let lo = rat(p1, q1);
                        let hi = rat(p2, q2);
                        if lo > hi {
                            continue;
                        }
                        let best = (1..30i128)
                            .find_map(|q| {
                                (0..=q).map(|p| rat(p, q)).find(|r| *r >= lo && *r <= hi)
                            })
                            .unwrap();
                        let got = simplest_in(&lo, &hi).unwrap();
                        assert_eq!(got.denom(), best.denom(), "[{lo}, {hi}]");
                    }
                }
            }
        }
    }
}
