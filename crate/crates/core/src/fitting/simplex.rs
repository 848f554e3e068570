//! Box-constrained Nelder-Mead. Trial points are projected onto the box.

use crate::num::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome<T> {
    pub x: Vec<T>,
    pub f: T,
    pub evaluations: usize,
    pub exhausted: bool,
}

fn clamp<T: Scalar>(x: &mut [T], lower: &[T], upper: &[T]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(lo).min(hi);
    }
}

fn sanitize<T: Scalar>(f: T) -> T {
    if f.is_nan() {
        T::infinity()
    } else {
        f
    }
}

/// Minimizes `objective` starting from `x0` (with known value `f0`).
///
/// The initial simplex offsets each coordinate by `step[i]`, flipping the
/// sign when that would leave the box. Stops when the spread of simplex
/// values drops to `ftol`, when the simplex collapses, or when `budget`
/// evaluations have been spent.
#[allow(clippy::too_many_arguments)]
pub(crate) fn nelder_mead<T: Scalar>(
    mut objective: impl FnMut(&[T]) -> T,
    x0: &[T],
    f0: T,
    step: &[T],
    lower: &[T],
    upper: &[T],
    ftol: T,
    budget: usize,
) -> SimplexOutcome<T> {
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[T], evaluations: &mut usize| {
        *evaluations += 1;
        sanitize(objective(x))
    };

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), sanitize(f0)));
    for i in 0..n {
        if evaluations >= budget {
            break;
        }
        let mut x = x0.to_vec();
        x[i] = if x0[i] + step[i] <= upper[i] {
            x0[i] + step[i]
        } else {
            x0[i] - step[i]
        };
        clamp(&mut x, lower, upper);
        let f = eval(&x, &mut evaluations);
        simplex.push((x, f));
    }
    if simplex.len() < n + 1 {
        let best = simplex.swap_remove(0);
        return SimplexOutcome {
            x: best.0,
            f: best.1,
            evaluations,
            exhausted: true,
        };
    }

    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let scale: Vec<T> = lower.iter().zip(upper).map(|(&l, &u)| u - l).collect();
    let collapse = T::lit(1e-12);
    let mut exhausted = false;

    loop {
        // stable sort keeps earlier (lexicographically preferred) vertices first on ties
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        if (f_worst - f_best).abs() <= ftol {
            break;
        }
        let extent = simplex[1..]
            .iter()
            .flat_map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .zip(&scale)
                    .map(|((&a, &b), &s)| (a - b).abs() / s)
            })
            .fold(T::zero(), T::max);
        if extent <= collapse {
            break;
        }
        if evaluations + 2 > budget {
            exhausted = true;
            break;
        }

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &v) in centroid.iter_mut().zip(x) {
                *c = *c + v;
            }
        }
        let nt = T::from_count(n);
        centroid.iter_mut().for_each(|c| *c = *c / nt);

        let along = |coef: T, from: &[T]| -> Vec<T> {
            let mut p: Vec<T> = centroid
                .iter()
                .zip(from)
                .map(|(&c, &w)| c + coef * (c - w))
                .collect();
            clamp(&mut p, lower, upper);
            p
        };

        let worst = simplex[n].0.clone();
        let xr = along(alpha, &worst);
        let fr = eval(&xr, &mut evaluations);
        if fr < simplex[0].1 {
            let xe = along(gamma, &worst);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(rho, &worst);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        } else {
            let xc = along(-rho, &worst);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evaluations >= budget {
                exhausted = true;
                break;
            }
            let mut x: Vec<T> = best
                .iter()
                .zip(&vertex.0)
                .map(|(&b, &v)| b + sigma * (v - b))
                .collect();
            clamp(&mut x, lower, upper);
            let f = eval(&x, &mut evaluations);
            *vertex = (x, f);
        }
        if exhausted {
            break;
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, f) = simplex.swap_remove(0);
    SimplexOutcome {
        x,
        f,
        evaluations,
        exhausted,
    }
}
