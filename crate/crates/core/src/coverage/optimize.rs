//! Derivative-free maximisation in two dimensions.

#[derive(Debug, Clone, Copy)]
pub struct Optimum {
    pub x: [f64; 2],
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex search maximising `f`, started from `start` with edge `step`.
///
/// Stops when the spread of objective values across the simplex falls below `ftol`.
pub fn nelder_mead_max(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2], step: f64, ftol: f64, max_iter: usize) -> Optimum {
    let neg = |x: [f64; 2]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut values = simplex.map(neg);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for iter in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if (values[2] - values[0]).abs() < ftol && values[0].is_finite() {
            return Optimum { x: simplex[0], value: -values[0], iterations: iter, converged: true };
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = neg(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = neg(expanded);
            (simplex[2], values[2]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] { lerp(centroid, reflected, 0.5) } else { lerp(centroid, simplex[2], 0.5) };
            let fc = neg(contracted);
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = neg(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    Optimum { x: simplex[best], value: -values[best], iterations: max_iter, converged: false }
}

/// Central-difference gradient.
pub fn gradient(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [f64; 2] {
    let d = |i: usize| {
        let (mut lo, mut hi) = (x, x);
        lo[i] -= h;
        hi[i] += h;
        (f(hi) - f(lo)) / (2.0 * h)
    };
    [d(0), d(1)]
}

fn hessian(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let at = |dx: f64, dy: f64| f([x[0] + dx, x[1] + dy]);
    let f0 = at(0.0, 0.0);
    let hxx = (at(h, 0.0) - 2.0 * f0 + at(-h, 0.0)) / (h * h);
    let hyy = (at(0.0, h) - 2.0 * f0 + at(0.0, -h)) / (h * h);
    let hxy = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    [[hxx, hxy], [hxy, hyy]]
}

/// Newton refinement of a maximum from finite-difference derivatives. Steps that do not
/// improve `f`, or a Hessian that is not negative definite, end the refinement.
pub fn newton_polish(f: &impl Fn([f64; 2]) -> f64, mut opt: Optimum, rounds: usize) -> Optimum {
    for _ in 0..rounds {
        let g = gradient(f, opt.x, 1e-5);
        let h = hessian(f, opt.x, 1e-4);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if !(h[0][0] < 0.0 && det > 0.0) {
            break;
        }
        let step = [(h[1][1] * g[0] - h[0][1] * g[1]) / det, (h[0][0] * g[1] - h[1][0] * g[0]) / det];
        let candidate = [opt.x[0] - step[0], opt.x[1] - step[1]];
        let value = f(candidate);
        if !(value >= opt.value) {
            break;
        }
        let moved = step[0].abs().max(step[1].abs());
        opt.x = candidate;
        opt.value = value;
        if moved < 1e-12 {
            break;
        }
    }
    opt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_peak() {
        let f = |x: [f64; 2]| -(x[0] - 1.5).powi(2) - 3.0 * (x[1] + 0.5).powi(2) - 0.5 * x[0] * x[1];
        let opt = newton_polish(&f, nelder_mead_max(&f, [0.0, 0.0], 0.5, 1e-12, 5000), 5);
        assert!(opt.converged);
        let g = gradient(&f, opt.x, 1e-6);
        assert!(g[0].abs() < 1e-7 && g[1].abs() < 1e-7, "{g:?}");
    }

    #[test]
    fn rosenbrock_valley() {
        let f = |x: [f64; 2]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opt = nelder_mead_max(&f, [-1.2, 1.0], 0.5, 1e-14, 10_000);
        assert!((opt.x[0] - 1.0).abs() < 1e-4 && (opt.x[1] - 1.0).abs() < 1e-4, "{:?}", opt.x);
    }
}
