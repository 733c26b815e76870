//! Derivative-free simplex minimizer.

/// Reflection, expansion, contraction and shrink coefficients are fixed at
/// 1, 2, 1/2 and 1/2.
const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Stop once every vertex lies within this Euclidean distance of the best.
    pub tol: f64,
    pub max_iter: usize,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn diameter(simplex: &[Vertex]) -> f64 {
    let best = &simplex[0].x;
    simplex[1..]
        .iter()
        .map(|v| v.x.iter().zip(best).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Minimizes `f` from `x0`. Non-finite values (including NaN) are treated as
/// `+inf`, so such vertices are always the first to be replaced.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let n = x0.len();
    let mut simplex: Vec<Vertex> = Vec::with_capacity(n + 1);
    simplex.push(Vertex { x: x0.to_vec(), f: sanitize(f(x0)) });
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = sanitize(f(&x));
        simplex.push(Vertex { x, f: fx });
    }

    let mut iterations = 0;
    let mut centroid = vec![0.0; n];
    let point = |c: &[f64], w: &[f64], coef: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + coef * (ci - wi)).collect()
    };

    loop {
        // stable sort keeps earlier vertices first among ties
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        if diameter(&simplex) < opts.tol {
            let best = simplex.swap_remove(0);
            return SimplexResult { x: best.x, value: best.f, iterations, converged: true };
        }
        if iterations >= opts.max_iter {
            let best = simplex.swap_remove(0);
            return SimplexResult { x: best.x, value: best.f, iterations, converged: false };
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(&v.x) {
                *c += xi / n as f64;
            }
        }

        let f_best = simplex[0].f;
        let f_second = simplex[n - 1].f;
        let f_worst = simplex[n].f;

        let xr = point(&centroid, &simplex[n].x, REFLECT);
        let fr = sanitize(f(&xr));

        if fr < f_best {
            let xe = point(&centroid, &simplex[n].x, REFLECT * EXPAND);
            let fe = sanitize(f(&xe));
            simplex[n] = if fe < fr { Vertex { x: xe, f: fe } } else { Vertex { x: xr, f: fr } };
            continue;
        }
        if fr < f_second {
            simplex[n] = Vertex { x: xr, f: fr };
            continue;
        }

        if fr < f_worst {
            // outside contraction
            let xc = point(&centroid, &simplex[n].x, REFLECT * CONTRACT);
            let fc = sanitize(f(&xc));
            if fc <= fr {
                simplex[n] = Vertex { x: xc, f: fc };
                continue;
            }
        } else {
            // inside contraction
            let xc = point(&centroid, &simplex[n].x, -CONTRACT);
            let fc = sanitize(f(&xc));
            if fc < f_worst {
                simplex[n] = Vertex { x: xc, f: fc };
                continue;
            }
        }

        let best = simplex[0].x.clone();
        for v in simplex.iter_mut().skip(1) {
            for (xi, bi) in v.x.iter_mut().zip(&best) {
                *xi = bi + SHRINK * (*xi - bi);
            }
            v.f = sanitize(f(&v.x));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions { tol: 1e-8, max_iter: 2000, initial_step: 0.5 }
    }

    #[test]
    fn rosenbrock() {
        let r = minimize(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0], &opts());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn quadratic_bowl_3d() {
        let r = minimize(
            |x| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + 0.5 * (x[2] - 3.0).powi(2),
            &[0.0; 3],
            &opts(),
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-7 && (r.x[1] + 0.5).abs() < 1e-7 && (r.x[2] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // minimum of the unconstrained bowl lies in the infeasible half-plane
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] + 1.0).powi(2) + x[1] * x[1] };
        let r = minimize(f, &[1.0, 1.0], &opts());
        assert!(r.value.is_finite());
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let r = minimize(|x| x[0] * x[0] + x[1] * x[1], &[5.0, 5.0], &SimplexOptions { max_iter: 3, ..opts() });
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn more_iterations_never_worse() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let mut prev = f64::INFINITY;
        for cap in [5, 20, 50, 200, 2000] {
            let r = minimize(f, &[-1.2, 1.0], &SimplexOptions { max_iter: cap, ..opts() });
            assert!(r.value <= prev);
            prev = r.value;
        }
    }
}
