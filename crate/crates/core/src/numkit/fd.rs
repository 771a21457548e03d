use crate::error::{Error, Result};

use super::linf;

/// Default central-difference step `1e-4 * (1 + |x|_inf)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + linf(x))
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(crate::error::invalid(format!("finite-difference step {h}")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() {
            return Err(Error::NonFiniteProbe { index: 2 * i });
        }
        if !fm.is_finite() {
            return Err(Error::NonFiniteProbe { index: 2 * i + 1 });
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_gradient() {
        let g = central_diff_grad(|_| 4.2, &[1.0, -3.0, 2.0], 1e-4).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn squared_norm() {
        let g = central_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn bilinear() {
        let g = central_diff_grad(|x| x[0] * x[1], &[3.0, 5.0], 1e-4).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn halving_step_shrinks_error() {
        // smooth non-polynomial function, so truncation error is visible
        let f = |x: &[f64]| (x[0] * 1.3).sin() * x[1].exp();
        let x = [0.7, 0.4];
        let exact = [1.3 * (0.91f64).cos() * 0.4f64.exp(), (0.91f64).sin() * 0.4f64.exp()];
        let err = |h: f64| {
            let g = central_diff_grad(f, &x, h).unwrap();
            ((g[0] - exact[0]).powi(2) + (g[1] - exact[1]).powi(2)).sqrt()
        };
        let e1 = err(1e-2);
        let e2 = err(5e-3);
        assert!(e1 / e2 >= 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn non_finite_probe_is_reported() {
        let r = central_diff_grad(|x| if x[1] > 1.0 { f64::NAN } else { 0.0 }, &[0.0, 1.0], 0.1);
        assert!(matches!(r, Err(Error::NonFiniteProbe { index: 2 })));
    }
}
