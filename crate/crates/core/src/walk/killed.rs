//! Green function of the walk killed on leaving a box, by conjugate gradients.

use super::{StepDistribution, WalkError};
use crate::lattice::LatticePoint;

pub(super) struct KilledGreen {
    d: usize,
    b: i64,
    pad: i64,
    side: i64,
    values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl KilledGreen {
    fn index(&self, x: &LatticePoint) -> Option<usize> {
        let mut idx = 0i64;
        for &c in x.coords().iter().rev() {
            if c < -self.b || c > self.b {
                return None;
            }
            idx = idx * self.side + (c + self.b + self.pad);
        }
        Some(idx as usize)
    }

    /// `g_B(0, x)`; zero outside the box.
    pub fn at(&self, x: &LatticePoint) -> f64 {
        debug_assert_eq!(x.dim(), self.d);
        self.index(x).map_or(0.0, |i| self.values[i])
    }
}

/// Solves `(I - P_B) g = δ_0` on `[-b, b]^d` for a symmetric law.
pub(super) fn killed_green(
    dist: &StepDistribution,
    b: i64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<KilledGreen, WalkError> {
    if !dist.is_symmetric() {
        return Err(WalkError::BadParameter("the killed-box solver needs a symmetric law".into()));
    }
    if b < 1 {
        return Err(WalkError::BadParameter(format!("box radius {b} is too small")));
    }
    let d = dist.dim();
    let n = 2 * b + 1;
    let pad = dist.max_step().min(n);
    let side = n + 2 * pad;
    let total = (side as usize).pow(d as u32);
    if total > 400_000_000 {
        return Err(WalkError::BadParameter(format!("killed box of radius {b} is too large")));
    }
    let stride: Vec<i64> = (0..d).map(|i| side.pow(i as u32)).collect();
    let offsets: Vec<(isize, f64)> = dist
        .support()
        .iter()
        .filter(|(s, _)| s.norm_inf() <= pad)
        .map(|(s, w)| (s.coords().iter().zip(&stride).map(|(c, st)| c * st).sum::<i64>() as isize, *w))
        .collect();

    let mut interior = Vec::with_capacity((n as usize).pow(d as u32));
    let mut cur = vec![0i64; d];
    loop {
        let idx: i64 = cur.iter().zip(&stride).map(|(c, st)| (c + pad) * st).sum();
        interior.push(idx as usize);
        let mut i = 0;
        loop {
            if i == d {
                break;
            }
            cur[i] += 1;
            if cur[i] < n {
                break;
            }
            cur[i] = 0;
            i += 1;
        }
        if i == d {
            break;
        }
    }

    let apply = |u: &[f64], out: &mut [f64]| {
        for &i in &interior {
            out[i] = u[i];
        }
        for &(off, w) in &offsets {
            for &i in &interior {
                out[i] -= w * u[(i as isize + off) as usize];
            }
        }
    };
    let dot = |a: &[f64], c: &[f64]| -> f64 { interior.iter().map(|&i| a[i] * c[i]).sum() };

    let origin: usize = stride.iter().map(|st| (b + pad) * st).sum::<i64>() as usize;
    let mut x = vec![0.0; total];
    let mut r = vec![0.0; total];
    r[origin] = 1.0;
    let mut p = r.clone();
    let mut ap = vec![0.0; total];
    let mut rs = 1.0f64;
    let mut iterations = 0;
    while rs.sqrt() > tolerance && iterations < max_iterations {
        apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for &i in &interior {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for &i in &interior {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iterations += 1;
    }
    // True residual, not the recurrence's.
    apply(&x, &mut ap);
    ap[origin] -= 1.0;
    let relative_residual = dot(&ap, &ap).sqrt();
    if relative_residual > tolerance.max(1e-14) * 100.0 {
        return Err(WalkError::NoConvergence(relative_residual));
    }
    Ok(KilledGreen { d, b, pad, side, values: x, iterations, relative_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_gambler() {
        // Nearest-neighbour walk killed outside [-b, b]: g(0, x) = b + 1 - |x|.
        let e = LatticePoint::new(&[1]).unwrap();
        let s = StepDistribution::from_support(1, vec![(e, 0.5), (-e, 0.5)]).unwrap();
        let b = 10;
        let k = killed_green(&s, b, 1e-12, 10_000).unwrap();
        for x in -b..=b {
            let exact = (b + 1 - x.abs()) as f64;
            let got = k.at(&LatticePoint::new(&[x]).unwrap());
            assert!((got - exact).abs() < 1e-8, "{x}: {got} vs {exact}");
        }
        assert_eq!(k.at(&LatticePoint::new(&[b + 1]).unwrap()), 0.0);
    }
}
