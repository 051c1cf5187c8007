/// Outcome of one Nelder–Mead search.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
}

fn project(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Nelder–Mead over the unit box `[0, 1]^n`; trial points are projected back
/// into the box before evaluation. Non-finite objective values count as +∞.
///
/// Stops after `max_evals` evaluations or when the simplex's value spread
/// and diameter both fall below `tol`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    project(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut x = start.clone();
        x[i] = if x[i] + step <= 1.0 { x[i] + step } else { x[i] - step };
        project(&mut x);
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| a.0.iter().zip(&b.0).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
        })
    };

    while evals < max_evals {
        order(&mut simplex);
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() <= tol && diameter <= tol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut x);
            x
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(0.5);
            let fx = eval(&x, &mut evals);
            (x, fx)
        } else {
            let x = along(-0.5);
            let fx = eval(&x, &mut evals);
            (x, fx)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *fx = eval(x, &mut evals);
        }
    }
    order(&mut simplex);
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        fx,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let r = nelder_mead(
            |x| (x[0] - 0.3).powi(2) + 10.0 * (x[1] - 0.7).powi(2),
            &[0.9, 0.1],
            0.1,
            2000,
            1e-12,
        );
        assert!((r.x[0] - 0.3).abs() < 1e-5 && (r.x[1] - 0.7).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn respects_the_box() {
        let r = nelder_mead(|x| -x[0] - x[1], &[0.5, 0.5], 0.2, 500, 1e-12);
        assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.fx <= -1.99);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 0.2).abs() };
        let start = [0.45];
        let r = nelder_mead(f, &start, 0.3, 200, 1e-12);
        assert!(r.fx <= f(&start));
    }
}
