use serde::{Deserialize, Serialize};

use super::OptimizeError;

/// A differentiable function of a real vector.
pub trait SmoothFunction {
    fn dim(&self) -> usize;

    /// Value and gradient at `x`.
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), OptimizeError>;

    /// Extra numbers stored with each accepted step (about the point most
    /// recently passed to `evaluate`).
    fn aux(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    /// Stop when `‖P(x − ∇f) − x‖∞` falls to this.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iter: usize,
    pub value: f64,
    pub step_norm: f64,
    pub aux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Starting point (iteration 0) and every accepted step.
    pub trace: Vec<StepRecord>,
}

pub(crate) fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len()).map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Monotone spectral projected gradient on the box `[lo, hi]`.
///
/// Each iteration takes the projected Barzilai–Borwein direction and
/// backtracks along it until the Armijo condition holds, so accepted values
/// never increase.
pub fn projected_descent<F: SmoothFunction + ?Sized>(
    f: &mut F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &DescentOptions,
) -> Result<DescentOutcome, OptimizeError> {
    let n = f.dim();
    for len in [x0.len(), lo.len(), hi.len()] {
        if len != n {
            return Err(OptimizeError::Dimension { expected: n, found: len });
        }
    }
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f.evaluate(&x)?;
    let mut evaluations = 1;
    let mut trace = vec![StepRecord { iter: 0, value: fx, step_norm: 0.0, aux: f.aux() }];
    let mut pgn = projected_gradient_norm(&x, &g, lo, hi);
    let (alpha_min, alpha_max) = (1e-12, 1e12);
    let mut alpha = (1.0 / pgn.max(1e-300)).clamp(alpha_min, alpha_max);
    let mut iterations = 0;
    let mut converged = pgn <= opts.tol;

    while !converged && iterations < opts.max_iter {
        let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
        project(&mut trial, lo, hi);
        let d: Vec<f64> = trial.iter().zip(&x).map(|(t, xi)| t - xi).collect();
        let gd = dot(&g, &d);
        if !(gd < 0.0) {
            // no descent along the projected path at this step length
            alpha = alpha_max.min(alpha * 1e3);
            if inf_norm(&d) == 0.0 {
                break;
            }
            continue;
        }

        let mut lambda = 1.0;
        let accepted = loop {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + lambda * di).collect();
            let (fn_, gn) = f.evaluate(&xn)?;
            evaluations += 1;
            if fn_ <= fx + opts.armijo * lambda * gd {
                break Some((xn, fn_, gn));
            }
            // safeguarded quadratic interpolation
            let denom = 2.0 * (fn_ - fx - lambda * gd);
            let next = if denom > 0.0 { -gd * lambda * lambda / denom } else { 0.5 * lambda };
            lambda = next.clamp(0.1 * lambda, 0.5 * lambda);
            if lambda * inf_norm(&d) < 1e-15 * (1.0 + inf_norm(&x)) {
                break None;
            }
        };
        let Some((xn, fn_, gn)) = accepted else { break };

        iterations += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(alpha_min, alpha_max) } else { alpha_max };
        trace.push(StepRecord { iter: iterations, value: fn_, step_norm: dot(&s, &s).sqrt(), aux: f.aux() });
        x = xn;
        fx = fn_;
        g = gn;
        pgn = projected_gradient_norm(&x, &g, lo, hi);
        converged = pgn <= opts.tol;
    }

    Ok(DescentOutcome { x, value: fx, gradient: g, projected_gradient_norm: pgn, iterations, evaluations, converged, trace })
}

/// `f` with every coordinate outside `free` held at `base`.
pub struct Restricted<'a, F: ?Sized> {
    inner: &'a mut F,
    base: Vec<f64>,
    free: Vec<usize>,
}

impl<'a, F: SmoothFunction + ?Sized> Restricted<'a, F> {
    pub fn new(inner: &'a mut F, base: Vec<f64>, free: Vec<usize>) -> Self {
        Self { inner, base, free }
    }

    /// Full-length point with the free coordinates replaced by `z`.
    pub fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = z[k];
        }
        x
    }
}

impl<F: SmoothFunction + ?Sized> SmoothFunction for Restricted<'_, F> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn evaluate(&mut self, z: &[f64]) -> Result<(f64, Vec<f64>), OptimizeError> {
        let x = self.expand(z);
        let (v, g) = self.inner.evaluate(&x)?;
        Ok((v, self.free.iter().map(|&i| g[i]).collect()))
    }

    fn aux(&self) -> Vec<f64> {
        self.inner.aux()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// `½ xᵀ A x − bᵀ x`.
    pub(crate) struct Quadratic {
        pub a: Vec<Vec<f64>>,
        pub b: Vec<f64>,
        pub calls: usize,
    }

    impl SmoothFunction for Quadratic {
        fn dim(&self) -> usize {
            self.b.len()
        }

        fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), OptimizeError> {
            self.calls += 1;
            let ax: Vec<f64> = self.a.iter().map(|row| dot(row, x)).collect();
            Ok((0.5 * dot(x, &ax) - dot(&self.b, x), ax.iter().zip(&self.b).map(|(p, q)| p - q).collect()))
        }
    }

    #[test]
    fn unconstrained_quadratic_minimum() {
        let mut f = Quadratic { a: vec![vec![4.0, 1.0], vec![1.0, 3.0]], b: vec![1.0, 2.0], calls: 0 };
        let out = projected_descent(&mut f, &[0.0, 0.0], &[-10.0; 2], &[10.0; 2], &DescentOptions {
            tol: 1e-7,
            ..Default::default()
        })
        .unwrap();
        // A⁻¹ b = (1/11)(3·1 − 1·2, −1·1 + 4·2)
        assert!((out.x[0] - 1.0 / 11.0).abs() < 1e-7);
        assert!((out.x[1] - 7.0 / 11.0).abs() < 1e-7);
        assert!(out.converged);
        assert!(out.trace.windows(2).all(|w| w[1].value <= w[0].value));
    }

    #[test]
    fn active_bound() {
        let mut f = Quadratic { a: vec![vec![1.0]], b: vec![5.0], calls: 0 };
        let out = projected_descent(&mut f, &[0.0], &[0.0], &[2.0], &DescentOptions::default()).unwrap();
        assert_eq!(out.x, vec![2.0]);
        assert!(out.converged);
    }

    #[test]
    fn already_optimal_needs_one_evaluation() {
        let mut f = Quadratic { a: vec![vec![1.0]], b: vec![0.0], calls: 0 };
        let out = projected_descent(&mut f, &[0.0], &[-1.0], &[1.0], &DescentOptions::default()).unwrap();
        assert_eq!((out.iterations, f.calls), (0, 1));
    }

    #[test]
    fn restriction_freezes_coordinates() {
        let mut f = Quadratic { a: vec![vec![2.0, 1.0], vec![1.0, 2.0]], b: vec![0.0, 0.0], calls: 0 };
        let mut r = Restricted::new(&mut f, vec![0.2, 0.0], vec![1]);
        let out = projected_descent(&mut r, &[0.0], &[-1.0], &[1.0], &DescentOptions {
            tol: 1e-12,
            ..Default::default()
        })
        .unwrap();
        assert!((out.x[0] + 0.1).abs() < 1e-12);
    }
}
