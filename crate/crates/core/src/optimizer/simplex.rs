//! Nelder-Mead downhill simplex with the standard coefficients.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from an axis-aligned simplex of edge `step` around `x0`.
/// Converges when the spread of objective values across the simplex drops to
/// `ftol`; gives up after `max_evals` evaluations.
pub(crate) fn nelder_mead<F>(mut f: F, x0: &[f64], step: f64, ftol: f64, max_evals: usize) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        f(x)
    };

    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
    simplex.push((eval(x0, &mut evaluations), x0.to_vec()));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push((eval(&x, &mut evaluations), x));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let best = simplex[0].0;
        let worst = simplex[dim].0;
        if worst - best <= ftol {
            converged = true;
            break;
        }
        if evaluations >= max_evals {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (_, x) in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].1)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let f_reflected = eval(&reflected, &mut evaluations);
        let second_worst = simplex[dim - 1].0;

        if f_reflected < best {
            let expanded = along(EXPAND);
            let f_expanded = eval(&expanded, &mut evaluations);
            simplex[dim] = if f_expanded < f_reflected {
                (f_expanded, expanded)
            } else {
                (f_reflected, reflected)
            };
            continue;
        }
        if f_reflected < second_worst {
            simplex[dim] = (f_reflected, reflected);
            continue;
        }

        let (contracted, f_contracted) = if f_reflected < worst {
            let x = along(CONTRACT);
            let fx = eval(&x, &mut evaluations);
            (x, fx)
        } else {
            let x = along(-CONTRACT);
            let fx = eval(&x, &mut evaluations);
            (x, fx)
        };
        if f_contracted < worst.min(f_reflected) {
            simplex[dim] = (f_contracted, contracted);
            continue;
        }

        let anchor = simplex[0].1.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> =
                anchor.iter().zip(&vertex.1).map(|(a, v)| a + SHRINK * (v - a)).collect();
            *vertex = (eval(&x, &mut evaluations), x);
        }
    }

    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (f, x) = simplex.swap_remove(0);
    SimplexOutcome { x, f, evaluations, converged }
}
