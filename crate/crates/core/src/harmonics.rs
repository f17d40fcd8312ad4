//! Real, orthonormal spherical harmonics without the Condon–Shortley phase.
//!
//! `Y_l0 = N_l0 P_l(cos θ)`, `Y_lm = √2 N_lm P_l^m(cos θ) cos(mφ)` for m > 0 and
//! `Y_l,-m = √2 N_lm P_l^m(cos θ) sin(mφ)`, with
//! `N_lm = √((2l+1)/(4π) · (l−m)!/(l+m)!)`. Each satisfies
//! `∫ Y_lm Y_l'm' dΩ = δ_ll' δ_mm'` over the unit sphere.
//!
//! The normalised Legendre factors are generated by the standard stable
//! recurrences, so no factorials are ever formed.

use nalgebra::Vector3;

use crate::scalar::Real;

/// Number of harmonics of degree `0..=max_degree`.
pub fn harmonic_count(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 1)
}

/// Flat index of `(l, m)` in the ordering used everywhere in this crate:
/// by degree, then `m = −l..=l`.
pub fn harmonic_index(l: usize, m: i64) -> usize {
    l * l + (m + l as i64) as usize
}

/// `N_lm P_l^m(x)` for `0 ≤ m ≤ l ≤ max_degree`, stored at `l * (l + 1) / 2 + m`.
pub fn normalized_legendre<T: Real>(max_degree: usize, x: T) -> Vec<T> {
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut out = vec![T::zero(); (max_degree + 1) * (max_degree + 2) / 2];
    let s = (T::one() - x * x).max(T::zero()).sqrt();
    out[0] = T::one() / (T::lit(4.0) * T::pi()).sqrt();
    for m in 1..=max_degree {
        let mf = T::of_usize(m);
        let prev = out[idx(m - 1, m - 1)];
        out[idx(m, m)] = ((T::lit(2.0) * mf + T::one()) / (T::lit(2.0) * mf)).sqrt() * s * prev;
    }
    for m in 0..max_degree {
        let mf = T::of_usize(m);
        out[idx(m + 1, m)] = (T::lit(2.0) * mf + T::lit(3.0)).sqrt() * x * out[idx(m, m)];
    }
    for m in 0..=max_degree {
        let m2 = T::of_usize(m * m);
        for l in (m + 2)..=max_degree {
            let lf = T::of_usize(l);
            let l1 = T::of_usize(l - 1);
            let a = ((T::lit(4.0) * lf * lf - T::one()) / (lf * lf - m2)).sqrt();
            let b = ((l1 * l1 - m2) / (T::lit(4.0) * l1 * l1 - T::one())).sqrt();
            out[idx(l, m)] = a * (x * out[idx(l - 1, m)] - b * out[idx(l - 2, m)]);
        }
    }
    out
}

/// All real harmonics up to `max_degree` at a unit direction, in
/// [`harmonic_index`] order.
pub fn real_harmonics<T: Real>(max_degree: usize, dir: &Vector3<T>) -> Vec<T> {
    let legendre = normalized_legendre(max_degree, dir.z.clamp(-T::one(), T::one()));
    let phi = dir.y.atan2(dir.x);
    let sqrt2 = T::lit(2.0).sqrt();
    let mut out = vec![T::zero(); harmonic_count(max_degree)];
    for l in 0..=max_degree {
        let base = l * (l + 1) / 2;
        out[harmonic_index(l, 0)] = legendre[base];
        for m in 1..=l {
            let p = sqrt2 * legendre[base + m];
            let mphi = T::of_usize(m) * phi;
            out[harmonic_index(l, m as i64)] = p * mphi.cos();
            out[harmonic_index(l, -(m as i64))] = p * mphi.sin();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Closed forms for l ≤ 2 in Cartesian coordinates.
    fn closed_form(dir: &Vector3<f64>) -> Vec<f64> {
        let (x, y, z) = (dir.x, dir.y, dir.z);
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        let c2 = 0.5 * (15.0 / PI).sqrt();
        vec![
            0.5 / PI.sqrt(),
            c1 * y,
            c1 * z,
            c1 * x,
            c2 * x * y,
            c2 * y * z,
            0.25 * (5.0 / PI).sqrt() * (3.0 * z * z - 1.0),
            c2 * x * z,
            0.5 * c2 * (x * x - y * y),
        ]
    }

    #[test]
    fn matches_closed_forms() {
        for dir in [
            Vector3::new(0.3, -0.5, 0.81),
            Vector3::new(-0.9, 0.1, -0.2),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 1.0, 0.0),
        ] {
            let d = dir.normalize();
            let got = real_harmonics(2, &d);
            for (g, e) in got.iter().zip(closed_form(&d)) {
                assert!((g - e).abs() < 1e-14, "{g} vs {e}");
            }
        }
    }

    /// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on
    /// the three-term recurrence for the unnormalised polynomials.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                loop {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let step = p1 / dp;
                    x -= step;
                    if step.abs() < 1e-15 {
                        return (x, 2.0 / ((1.0 - x * x) * dp * dp));
                    }
                }
            })
            .collect()
    }

    #[test]
    fn orthonormal_under_quadrature() {
        // Products have degree ≤ 2·lmax, integrated exactly by 16 Gauss nodes
        // in cos θ and 32 uniform nodes in φ.
        let (np, lmax) = (32, 6);
        let k = harmonic_count(lmax);
        let mut gram = vec![0.0; k * k];
        for (x, wx) in gauss_legendre(16) {
            let s = (1.0 - x * x).sqrt();
            for ip in 0..np {
                let phi = ip as f64 * 2.0 * PI / np as f64;
                let y = real_harmonics(lmax, &Vector3::new(s * phi.cos(), s * phi.sin(), x));
                let w = wx * (2.0 * PI / np as f64);
                for a in 0..k {
                    for b in 0..k {
                        gram[a * k + b] += w * y[a] * y[b];
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram[a * k + b] - target).abs() < 1e-12,
                    "({a},{b}) {}",
                    gram[a * k + b]
                );
            }
        }
    }

    #[test]
    fn degree_zero_is_constant() {
        let y = real_harmonics(0, &Vector3::new(0.0f64, 0.6, 0.8));
        assert_eq!(y.len(), 1);
        assert_relative_eq!(y[0], 1.0 / (4.0 * PI).sqrt(), max_relative = 1e-15);
        assert_eq!(harmonic_count(6), 49);
    }
}
