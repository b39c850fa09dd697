//! Box-bounded Nelder-Mead maximization used for kernel hyperparameter fitting.

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iters: usize,
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_iters: 200, initial_step: 1.0, f_tol: 1e-10, x_tol: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl NelderMead {
    /// Maximizes `f` over the box `bounds` starting from `start`. Trial points
    /// are projected onto the box; `f` returning NaN is treated as -inf.
    pub fn maximize<F>(&self, mut f: F, start: &[f64], bounds: &[(f64, f64)]) -> Maximum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let dim = start.len();
        assert_eq!(dim, bounds.len(), "one bound per coordinate");
        let project = |x: &mut Vec<f64>| {
            for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
                *xi = xi.clamp(lo, hi);
            }
        };
        // Minimize the negation internally.
        let mut eval = |x: &[f64]| {
            let v = -f(x);
            if v.is_nan() { f64::INFINITY } else { v }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        let mut origin = start.to_vec();
        project(&mut origin);
        simplex.push(origin.clone());
        for i in 0..dim {
            let mut v = origin.clone();
            let (lo, hi) = bounds[i];
            // Step away from the nearer wall so the vertex is distinct.
            v[i] = if v[i] + self.initial_step <= hi { v[i] + self.initial_step } else { v[i] - self.initial_step };
            project(&mut v);
            if v[i] == origin[i] {
                v[i] = 0.5 * (lo + hi);
            }
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

        let mut iterations = 0;
        while iterations < self.max_iters {
            iterations += 1;
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[dim] - values[0];
            let diameter = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread.abs() <= self.f_tol && diameter <= self.x_tol {
                break;
            }

            let centroid: Vec<f64> =
                (0..dim).map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64).collect();
            let toward = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (c - w)).collect();
                project(&mut p);
                p
            };

            let reflected = toward(1.0);
            let fr = eval(&reflected);
            if fr < values[0] {
                let expanded = toward(2.0);
                let fe = eval(&expanded);
                if fe < fr {
                    simplex[dim] = expanded;
                    values[dim] = fe;
                } else {
                    simplex[dim] = reflected;
                    values[dim] = fr;
                }
                continue;
            }
            if fr < values[dim - 1] {
                simplex[dim] = reflected;
                values[dim] = fr;
                continue;
            }
            let (contracted, fc) = if fr < values[dim] {
                let p = toward(0.5);
                let v = eval(&p);
                (p, v)
            } else {
                let p = toward(-0.5);
                let v = eval(&p);
                (p, v)
            };
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
                continue;
            }
            // Shrink toward the best vertex.
            for i in 1..=dim {
                let shrunk: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                values[i] = eval(&shrunk);
                simplex[i] = shrunk;
            }
        }

        let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        Maximum { x: simplex[best].clone(), value: -values[best], iterations }
    }
}
