//! Clebsch–Gordan coefficients and Wigner 6j symbols (Racah formulas).
//!
//! All arguments are twice the angular momentum / projection so that
//! half-integer values are exact. Invalid combinations return 0.

use super::factorial;

fn is_triangle(ta: i64, tb: i64, tc: i64) -> bool {
    ta >= 0
        && tb >= 0
        && tc >= 0
        && tc <= ta + tb
        && tc >= (ta - tb).abs()
        && (ta + tb + tc) % 2 == 0
}

fn valid_projection(tj: i64, tm: i64) -> bool {
    tm.abs() <= tj && (tj + tm) % 2 == 0
}

/// `⟨j1 m1; j2 m2 | J M⟩`, arguments given as twice their value.
pub fn clebsch_gordan(tj1: i64, tm1: i64, tj2: i64, tm2: i64, tj: i64, tm: i64) -> f64 {
    if tm != tm1 + tm2
        || !is_triangle(tj1, tj2, tj)
        || !valid_projection(tj1, tm1)
        || !valid_projection(tj2, tm2)
        || !valid_projection(tj, tm)
    {
        return 0.0;
    }
    // Work in ordinary integers from here: every combination below is even.
    let h = |x: i64| x / 2;
    let a = h(tj1 + tj2 - tj);
    let b = h(tj1 - tj2 + tj);
    let c = h(-tj1 + tj2 + tj);
    let d = h(tj1 + tj2 + tj) + 1;
    let norm = ((tj + 1) as f64 * factorial(a) * factorial(b) * factorial(c) / factorial(d)).sqrt();
    let proj = (factorial(h(tj1 + tm1))
        * factorial(h(tj1 - tm1))
        * factorial(h(tj2 + tm2))
        * factorial(h(tj2 - tm2))
        * factorial(h(tj + tm))
        * factorial(h(tj - tm)))
    .sqrt();

    let e1 = h(tj1 - tm1);
    let e2 = h(tj2 + tm2);
    let e3 = h(tj - tj2 + tm1);
    let e4 = h(tj - tj1 - tm2);
    let k_min = 0.max(-e3).max(-e4);
    let k_max = a.min(e1).min(e2);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(a - k)
            * factorial(e1 - k)
            * factorial(e2 - k)
            * factorial(e3 + k)
            * factorial(e4 + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    norm * proj * sum
}

fn triangle_coefficient(ta: i64, tb: i64, tc: i64) -> f64 {
    let h = |x: i64| x / 2;
    (factorial(h(ta + tb - tc)) * factorial(h(ta - tb + tc)) * factorial(h(-ta + tb + tc))
        / factorial(h(ta + tb + tc) + 1))
    .sqrt()
}

/// Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}`, arguments given as twice their value.
pub fn six_j(tj1: i64, tj2: i64, tj3: i64, tj4: i64, tj5: i64, tj6: i64) -> f64 {
    if !is_triangle(tj1, tj2, tj3)
        || !is_triangle(tj1, tj5, tj6)
        || !is_triangle(tj4, tj2, tj6)
        || !is_triangle(tj4, tj5, tj3)
    {
        return 0.0;
    }
    let h = |x: i64| x / 2;
    let a = [
        h(tj1 + tj2 + tj3),
        h(tj1 + tj5 + tj6),
        h(tj4 + tj2 + tj6),
        h(tj4 + tj5 + tj3),
    ];
    let b = [
        h(tj1 + tj2 + tj4 + tj5),
        h(tj2 + tj3 + tj5 + tj6),
        h(tj3 + tj1 + tj6 + tj4),
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let mut sum = 0.0;
    for t in t_min..=t_max {
        let mut denom = 1.0;
        for &ai in &a {
            denom *= factorial(t - ai);
        }
        for &bi in &b {
            denom *= factorial(bi - t);
        }
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * factorial(t + 1) / denom;
    }
    triangle_coefficient(tj1, tj2, tj3)
        * triangle_coefficient(tj1, tj5, tj6)
        * triangle_coefficient(tj4, tj2, tj6)
        * triangle_coefficient(tj4, tj5, tj3)
        * sum
}
