//! Whole-space Green function from the periodic one.
//!
//! On the torus `(Z/M)^d` the Green function with the zero mode removed is
//! `G_M = IFFT[1 / (1 - φ)]`. It solves `(I - P) G_M = δ_0 - M^{-d}`, so
//! adding the quadratic `q(x) = xᵀΣ⁻¹x / (d M^d)` removes the uniform
//! background, and the periodic images contribute a near-constant `h(M)`
//! close to the origin, fitted from the periods `M`, `M/2` and `M/4`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{StepDistribution, WalkError};
use crate::lattice::{cube_range, LatticePoint};

pub(super) struct SpectralGreen {
    d: usize,
    radius: i64,
    pub estimate: Vec<f64>,
    pub std_err: Vec<f64>,
    pub image_constant: f64,
}

impl SpectralGreen {
    pub fn lookup(&self, x: &LatticePoint) -> Option<(f64, f64)> {
        let side = 2 * self.radius + 1;
        let mut idx = 0i64;
        for &c in x.coords().iter().rev() {
            if c.abs() > self.radius {
                return None;
            }
            idx = idx * side + c + self.radius;
        }
        debug_assert_eq!(x.dim(), self.d);
        Some((self.estimate[idx as usize], self.std_err[idx as usize]))
    }
}

/// In-place multidimensional FFT of an `m^d` array, first axis fastest.
fn fft_nd(data: &mut [Complex<f64>], m: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    fft.process(data);
    const BATCH: usize = 64;
    let mut buf = vec![Complex::new(0.0, 0.0); BATCH * m];
    for axis in 1..d {
        let stride = m.pow(axis as u32);
        let block = stride * m;
        for base in (0..data.len()).step_by(block) {
            for j0 in (0..stride).step_by(BATCH) {
                let width = BATCH.min(stride - j0);
                for t in 0..m {
                    for jj in 0..width {
                        buf[jj * m + t] = data[base + j0 + jj + t * stride];
                    }
                }
                fft.process(&mut buf[..width * m]);
                for t in 0..m {
                    for jj in 0..width {
                        data[base + j0 + jj + t * stride] = buf[jj * m + t];
                    }
                }
            }
        }
    }
}

fn invert(mat: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut a = mat.to_vec();
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        inv[i * d + i] = 1.0;
    }
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))?;
        if a[piv * d + col].abs() < 1e-14 {
            return None;
        }
        for k in 0..d {
            a.swap(col * d + k, piv * d + k);
            inv.swap(col * d + k, piv * d + k);
        }
        let s = a[col * d + col];
        for k in 0..d {
            a[col * d + k] /= s;
            inv[col * d + k] /= s;
        }
        for r in 0..d {
            if r != col {
                let f = a[r * d + col];
                for k in 0..d {
                    a[r * d + k] -= f * a[col * d + k];
                    inv[r * d + k] -= f * inv[col * d + k];
                }
            }
        }
    }
    Some(inv)
}

/// `G_M(x)` on the whole torus, real part, zero mode removed.
fn periodic_green(dist: &StepDistribution, m: usize) -> Result<Vec<f64>, WalkError> {
    let d = dist.dim();
    let len = m.pow(d as u32);
    let mut a = vec![Complex::new(0.0, 0.0); len];
    for (s, w) in dist.support() {
        let mut idx = 0usize;
        for &c in s.coords().iter().rev() {
            idx = idx * m + c.rem_euclid(m as i64) as usize;
        }
        a[idx].re += w;
    }
    fft_nd(&mut a, m, d, false);
    a[0] = Complex::new(0.0, 0.0);
    for v in a.iter_mut().skip(1) {
        let den = Complex::new(1.0, 0.0) - *v;
        if den.norm() < 1e-12 {
            return Err(WalkError::DegenerateSymbol);
        }
        *v = den.inv();
    }
    fft_nd(&mut a, m, d, true);
    let scale = 1.0 / len as f64;
    Ok(a.into_iter().map(|z| z.re * scale).collect())
}

fn torus_index(x: &LatticePoint, m: usize) -> usize {
    let mut idx = 0usize;
    for &c in x.coords().iter().rev() {
        idx = idx * m + c.rem_euclid(m as i64) as usize;
    }
    idx
}

pub(super) fn spectral_green(dist: &StepDistribution, m: usize, radius: i64) -> Result<SpectralGreen, WalkError> {
    let d = dist.dim();
    if d < 3 {
        return Err(WalkError::BadParameter("the spectral method needs d >= 3".into()));
    }
    if m < 32 || m % 8 != 0 {
        return Err(WalkError::BadParameter(format!("period {m} must be a multiple of 8, at least 32")));
    }
    if radius > (m / 4) as i64 {
        return Err(WalkError::BadParameter(format!("table radius {radius} exceeds period/4 = {}", m / 4)));
    }
    if 2 * dist.max_step() >= (m / 4) as i64 {
        return Err(WalkError::BadParameter("steps are too long for the period".into()));
    }
    if m.pow(d as u32) > 1 << 25 {
        return Err(WalkError::BadParameter(format!("period {m} is too large in dimension {d}")));
    }
    let sigma_inv = invert(dist.covariance(), d)
        .ok_or_else(|| WalkError::BadParameter("singular step covariance".into()))?;
    let quad = |x: &LatticePoint| -> f64 {
        let c = x.coords();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += c[i] as f64 * sigma_inv[i * d + j] * c[j] as f64;
            }
        }
        s / d as f64
    };

    let big = periodic_green(dist, m)?;
    let small = periodic_green(dist, m / 2)?;
    let tiny = periodic_green(dist, m / 4)?;
    let origin = LatticePoint::origin(d)?;
    // h(P) = a P^(2-d) + b P^(-d), fitted on P = M, M/2, M/4.
    let u = |p: f64| p.powi(2 - d as i32);
    let v = |p: f64| p.powi(-(d as i32));
    let ps = [m as f64, m as f64 / 2.0, m as f64 / 4.0];
    let (d1, d2) = (big[0] - small[0], small[0] - tiny[0]);
    let (a11, a12) = (u(ps[0]) - u(ps[1]), v(ps[0]) - v(ps[1]));
    let (a21, a22) = (u(ps[1]) - u(ps[2]), v(ps[1]) - v(ps[2]));
    let det = a11 * a22 - a12 * a21;
    let a = (d1 * a22 - d2 * a12) / det;
    let b = (a11 * d2 - a21 * d1) / det;
    let h_big = a * u(ps[0]) + b * v(ps[0]);
    let h_small = a * u(ps[1]) + b * v(ps[1]);
    // The one-term fit, kept only to size the uncertainty of the constant.
    let h_one = d1 / (1.0 - 2f64.powi(d as i32 - 2));
    let constant_err = (h_big - h_one).abs();
    let vol_big = (m as f64).powi(d as i32);
    let vol_small = vol_big / 2f64.powi(d as i32);
    let g_big = |x: &LatticePoint| big[torus_index(x, m)] - quad(x) / vol_big - h_big;
    let g_small = |x: &LatticePoint| small[torus_index(x, m / 2)] - quad(x) / vol_small - h_small;
    debug_assert!(g_big(&origin) >= 1.0);

    // The leading x-dependent image correction is quartic in x/M, so
    // halving M multiplies it by 2^(d+2).
    let shrink = 2f64.powi(d as i32 + 2) - 1.0;
    let inner = (m / 8) as i64;
    let mut edge_err = 0.0f64;
    for x in cube_range(d, -inner, inner + 1) {
        if x.norm_inf() == inner {
            edge_err = edge_err.max((g_big(&x) - g_small(&x)).abs() / shrink);
        }
    }
    let side = 2 * radius + 1;
    let n = (side as usize).pow(d as u32);
    let mut estimate = vec![0.0; n];
    let mut std_err = vec![0.0; n];
    for x in cube_range(d, -radius, radius + 1) {
        let mut idx = 0i64;
        for &c in x.coords().iter().rev() {
            idx = idx * side + c + radius;
        }
        let i = idx as usize;
        estimate[i] = g_big(&x);
        let r = x.norm_inf();
        std_err[i] = constant_err
            + if r <= inner {
                (g_big(&x) - g_small(&x)).abs() / shrink
            } else {
                edge_err * ((r as f64) / inner as f64).powi(4)
            };
    }
    Ok(SpectralGreen { d, radius, estimate, std_err, image_constant: h_big })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let m = 8;
        let d = 3;
        let orig: Vec<Complex<f64>> = (0..m * m * m).map(|i| Complex::new((i % 7) as f64, (i % 3) as f64)).collect();
        let mut a = orig.clone();
        fft_nd(&mut a, m, d, false);
        fft_nd(&mut a, m, d, true);
        for (x, y) in a.iter().zip(&orig) {
            assert!((x / (m * m * m) as f64 - y).norm() < 1e-10);
        }
    }

    #[test]
    fn fft_matches_direct_dft() {
        let m = 4;
        let d = 2;
        let orig: Vec<Complex<f64>> = (0..m * m).map(|i| Complex::new((i * i % 5) as f64, 0.0)).collect();
        let mut a = orig.clone();
        fft_nd(&mut a, m, d, false);
        for k1 in 0..m {
            for k0 in 0..m {
                let mut s = Complex::new(0.0, 0.0);
                for x1 in 0..m {
                    for x0 in 0..m {
                        let ang = -2.0 * std::f64::consts::PI * ((k0 * x0 + k1 * x1) as f64) / m as f64;
                        s += orig[x1 * m + x0] * Complex::new(ang.cos(), ang.sin());
                    }
                }
                assert!((a[k1 * m + k0] - s).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn srw3_origin_value() {
        let s = StepDistribution::srw(3).unwrap();
        let g = spectral_green(&s, 64, 16).unwrap();
        let origin = LatticePoint::origin(3).unwrap();
        let (g0, e0) = g.lookup(&origin).unwrap();
        // Watson's constant for the cubic lattice.
        assert!((g0 - 1.516_386_059).abs() < 1e-3, "{g0}");
        assert!(e0 < 1e-3);
        let (g1, _) = g.lookup(&LatticePoint::new(&[1, 0, 0]).unwrap()).unwrap();
        assert!((g0 - g1 - 1.0).abs() < 1e-9, "harmonic at the origin: {g0} {g1}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = StepDistribution::srw(3).unwrap();
        assert!(spectral_green(&s, 64, 17).is_err());
        assert!(spectral_green(&s, 12, 2).is_err());
        let e = LatticePoint::new(&[2, 0, 0]).unwrap();
        let f = LatticePoint::new(&[0, 2, 0]).unwrap();
        let g = LatticePoint::new(&[0, 0, 2]).unwrap();
        let sub = StepDistribution::from_support(
            3,
            vec![(e, 1.0 / 6.0), (-e, 1.0 / 6.0), (f, 1.0 / 6.0), (-f, 1.0 / 6.0), (g, 1.0 / 6.0), (-g, 1.0 / 6.0)],
        )
        .unwrap();
        assert!(matches!(spectral_green(&sub, 64, 8), Err(WalkError::DegenerateSymbol)));
    }
}
