//! One-dimensional quadrature rules used by the coefficient computations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cos, PI};

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the local error estimates of the accepted panels.
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
}

/// Adaptive Simpson quadrature on `[a, b]`.
///
/// The interval is first cut into `initial_panels` equal panels; every panel is
/// then bisected until the Richardson error estimate meets its share of
/// `max(abs_tol, rel_tol * |I|)`, where `|I|` comes from the initial mesh.
pub fn adaptive_simpson<F>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    initial_panels: usize,
    max_evals: usize,
) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(abs_tol > 0.0 && rel_tol > 0.0) {
        return Err(Error::invalid("quadrature tolerances must be positive"));
    }
    if b <= a {
        return Ok(Integral { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let panels = initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let evals = core::cell::Cell::new(0usize);
    let eval = |x: f64| {
        evals.set(evals.get() + 1);
        f(x)
    };

    let mut stack: Vec<Panel> = Vec::with_capacity(2 * panels + 64);
    let mut f_left = eval(a);
    let mut coarse = 0.0;
    for i in 0..panels {
        let pa = a + width * i as f64;
        let pb = if i + 1 == panels { b } else { a + width * (i + 1) as f64 };
        let fm = eval(0.5 * (pa + pb));
        let fb = eval(pb);
        let whole = (pb - pa) / 6.0 * (f_left + 4.0 * fm + fb);
        coarse += whole;
        stack.push(Panel { a: pa, b: pb, fa: f_left, fm, fb, whole, tol: 0.0 });
        f_left = fb;
    }
    let tol = abs_tol.max(rel_tol * coarse.abs());
    for p in stack.iter_mut() {
        p.tol = tol * (p.b - p.a) / (b - a);
    }

    let mut value = 0.0;
    let mut error = 0.0;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let flm = eval(0.5 * (p.a + m));
        let frm = eval(0.5 * (m + p.b));
        let h = p.b - p.a;
        let left = h / 12.0 * (p.fa + 4.0 * flm + p.fm);
        let right = h / 12.0 * (p.fm + 4.0 * frm + p.fb);
        let delta = left + right - p.whole;
        // bisection stalls once the panel is at the resolution of f64
        let unresolvable = h <= 4.0 * f64::EPSILON * (p.a.abs() + p.b.abs());
        if delta.abs() <= 15.0 * p.tol || unresolvable {
            value += left + right + delta / 15.0;
            error += delta.abs() / 15.0;
        } else {
            if evals.get() > max_evals {
                return Err(Error::NonConvergedQuadrature { evaluations: evals.get(), estimate: value + left + right });
            }
            let half = 0.5 * p.tol;
            stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol: half });
            stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol: half });
        }
    }
    Ok(Integral { value, error, evaluations: evals.get() })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be at least 1");
    let n = order;
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule with `panels` equal panels of the given order.
pub fn composite_gauss_legendre<F>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let (nodes, weights) = gauss_legendre(order);
    composite_with_rule(&f, a, b, panels, &nodes, &weights)
}

pub(crate) fn composite_with_rule<F>(f: &F, a: f64, b: f64, panels: usize, nodes: &[f64], weights: &[f64]) -> f64
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + h * (p as f64 + 0.5);
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Trapezoid rule for the mean of a `2π`-periodic function over one period.
pub fn periodic_mean<F>(f: F, points: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = 2.0 * PI / points as f64;
    (0..points).map(|i| f(h * i as f64)).sum::<f64>() / points as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{exp, sin, sqrt};

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for order in 1..12 {
            let (x, w) = gauss_legendre(order);
            for deg in 0..(2 * order) {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "order {order} deg {deg}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn simpson_meets_tolerance_on_kinked_integrand() {
        // |sin(s/2)|^(4/3) over two periods against dense Gauss-Legendre with
        // panel edges on the kinks.
        let f = |s: f64| sin(0.5 * s).abs().powf(4.0 / 3.0);
        let r = adaptive_simpson(f, 0.0, 4.0 * PI, 1e-12, 1e-10, 8, 1_000_000).unwrap();
        let reference = composite_gauss_legendre(f, 0.0, 4.0 * PI, 4000, 20);
        assert!((r.value - reference).abs() < 1e-9, "{} vs {}", r.value, reference);
    }

    #[test]
    fn simpson_reports_budget_exhaustion() {
        let f = |x: f64| 1.0 / sqrt(x.abs() + 1e-300);
        let r = adaptive_simpson(f, -1.0, 1.0, 1e-14, 1e-14, 1, 1000);
        assert!(matches!(r, Err(Error::NonConvergedQuadrature { .. })));
    }

    #[test]
    fn periodic_mean_is_spectrally_accurate() {
        let f = |t: f64| exp(cos(t));
        // mean of exp(cos t) is I_0(1)
        let i0 = 1.266_065_877_752_008_4;
        assert!((periodic_mean(f, 32) - i0).abs() < 1e-15);
    }
}
