use std::f64::consts::PI;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Evaluation, Objective, ObjectiveError};
use crate::space::{Configuration, Level, ParamSpec, SearchSpace};

/// Synthetic problems. Each one reads the encoded unit coordinates of the
/// outer (`theta`) and inner (`phi`) parameters of whatever space it is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `G = Σ (phi_j - mean(theta))²`, `F = -[Σ (theta_i - 0.5)² + Σ (phi_j - 0.5)²]`.
    QuadraticBilevel,
    /// Training loss is minimized at `phi = 0.2`, the validation metric peaks
    /// at `phi = 0.8` and `theta = 0.7`.
    Misaligned,
    /// Negated Branin over the first two encoded coordinates, mapped to
    /// `[-5, 10] x [0, 15]`. The training loss is the Branin value itself.
    Branin,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::QuadraticBilevel, Builtin::Misaligned, Builtin::Branin];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::QuadraticBilevel => "quadratic-bilevel",
            Builtin::Misaligned => "misaligned",
            Builtin::Branin => "branin",
        }
    }

    pub fn default_space(self) -> SearchSpace {
        match self {
            Builtin::QuadraticBilevel | Builtin::Misaligned => SearchSpace::new(vec![
                ParamSpec::uniform("theta", 0.0, 1.0, Level::Outer),
                ParamSpec::uniform("phi", 0.0, 1.0, Level::Inner),
            ]),
            Builtin::Branin => SearchSpace::new(vec![
                ParamSpec::uniform("x1", -5.0, 10.0, Level::Outer),
                ParamSpec::uniform("x2", 0.0, 15.0, Level::Inner),
            ]),
        }
    }

    /// Evaluates on encoded coordinates.
    pub fn evaluate_unit(self, theta: &[f64], phi: &[f64], all: &[f64]) -> Evaluation {
        let sq = |xs: &[f64], c: f64| xs.iter().map(|x| (x - c).powi(2)).sum::<f64>();
        match self {
            Builtin::QuadraticBilevel => {
                let target = if theta.is_empty() { 0.5 } else { theta.iter().sum::<f64>() / theta.len() as f64 };
                Evaluation::new(sq(phi, target), -(sq(theta, 0.5) + sq(phi, 0.5)))
            }
            Builtin::Misaligned => Evaluation::new(sq(phi, 0.2), -(4.0 * sq(theta, 0.7) + sq(phi, 0.8))),
            Builtin::Branin => {
                let value = branin(-5.0 + 15.0 * all[0], 15.0 * all[1]);
                Evaluation::new(value, -value)
            }
        }
    }
}

impl FromStr for Builtin {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Builtin::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| ObjectiveError::UnknownBuiltin(s.to_owned()))
    }
}

/// Branin-Hoo on its usual domain; global minimum 0.397887 at (-π, 12.275),
/// (π, 2.275) and (9.42478, 2.475).
pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

#[derive(Debug, Clone)]
pub struct BuiltinObjective {
    problem: Builtin,
    space: SearchSpace,
    noise_std: f64,
    seed: u64,
}

impl BuiltinObjective {
    pub fn new(problem: Builtin, space: SearchSpace) -> Result<Self, ObjectiveError> {
        if problem == Builtin::Branin && space.params().len() != 2 {
            return Err(ObjectiveError::UnsupportedSpace { name: "branin", expected: "exactly two parameters" });
        }
        Ok(Self { problem, space, noise_std: 0.0, seed: 0 })
    }

    /// Adds Gaussian noise with this standard deviation to both outputs.
    pub fn with_noise(mut self, noise_std: f64, seed: u64) -> Self {
        self.noise_std = noise_std;
        self.seed = seed;
        self
    }

    pub fn problem(&self) -> Builtin {
        self.problem
    }

    /// FNV-1a over the configuration in space order, mixed with the study seed.
    fn noise_seed(&self, config: &Configuration) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for p in self.space.params() {
            feed(p.name.as_bytes());
            if let Some(v) = config.get(&p.name) {
                feed(v.to_string().as_bytes());
            }
            feed(&[0xff]);
        }
        h ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

impl Objective for BuiltinObjective {
    fn evaluate(&mut self, config: &Configuration) -> Result<Evaluation, ObjectiveError> {
        let theta = self.space.encode(config, Level::Outer.into())?;
        let phi = self.space.encode(config, Level::Inner.into())?;
        let all = self.space.encode(config, crate::space::LevelFilter::All)?;
        let mut eval = self.problem.evaluate_unit(&theta, &phi, &all);
        if self.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed(config));
            let normal = Normal::new(0.0, self.noise_std).expect("validated noise std");
            eval.train_loss += normal.sample(&mut rng);
            eval.val_metric += normal.sample(&mut rng);
        }
        Ok(eval)
    }

    fn reports_wall_time(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(problem: Builtin, pairs: &[(&str, f64)]) -> Evaluation {
        let mut obj = BuiltinObjective::new(problem, problem.default_space()).unwrap();
        obj.evaluate(&pairs.iter().map(|&(k, v)| (k, v)).collect()).unwrap()
    }

    #[test]
    fn quadratic_optimum() {
        let e = eval(Builtin::QuadraticBilevel, &[("theta", 0.5), ("phi", 0.5)]);
        assert_eq!((e.train_loss, e.val_metric), (0.0, 0.0));
        let e = eval(Builtin::QuadraticBilevel, &[("theta", 0.7), ("phi", 0.2)]);
        assert!((e.train_loss - 0.25).abs() < 1e-15);
        assert!((e.val_metric + 0.13).abs() < 1e-15);
    }

    #[test]
    fn quadratic_inner_argmin_tracks_theta() {
        let obj = Builtin::QuadraticBilevel;
        for i in 0..=20 {
            let theta = i as f64 / 20.0;
            let argmin = (0..=1000)
                .map(|j| j as f64 / 1000.0)
                .min_by(|a, b| {
                    let ga = obj.evaluate_unit(&[theta], &[*a], &[]).train_loss;
                    let gb = obj.evaluate_unit(&[theta], &[*b], &[]).train_loss;
                    ga.total_cmp(&gb)
                })
                .unwrap();
            assert!((argmin - theta).abs() <= 1e-3);
        }
    }

    #[test]
    fn branin_minimizers() {
        // Independent transcription: a(x2 - b x1² + c x1 - r)² + s(1 - t)cos(x1) + s.
        let reference = |x1: f64, x2: f64| {
            let (a, r, s) = (1.0, 6.0, 10.0);
            let b = 5.1 / (4.0 * std::f64::consts::PI.powi(2));
            let c = 5.0 / std::f64::consts::PI;
            let t = 1.0 / (8.0 * std::f64::consts::PI);
            a * (x2 - b * x1.powi(2) + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
        };
        for (x1, x2) in [(-PI, 12.275), (PI, 2.275), (9.42478, 2.475), (0.0, 0.0), (3.3, 7.1)] {
            assert!((branin(x1, x2) - reference(x1, x2)).abs() < 1e-12);
        }
        let e = eval(Builtin::Branin, &[("x1", PI), ("x2", 2.275)]);
        assert!((e.val_metric + 0.397887).abs() < 1e-6, "{}", e.val_metric);
    }

    #[test]
    fn misaligned_gap_on_inner_slice() {
        let obj = Builtin::Misaligned;
        let grid: Vec<f64> = (0..=1000).map(|j| j as f64 / 1000.0).collect();
        let best_val = grid
            .iter()
            .flat_map(|&t| grid.iter().step_by(10).map(move |&p| (t, p)))
            .map(|(t, p)| obj.evaluate_unit(&[t], &[p], &[]).val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        for &theta in &grid {
            let phi_star = *grid
                .iter()
                .min_by(|a, b| {
                    let ga = obj.evaluate_unit(&[theta], &[**a], &[]).train_loss;
                    let gb = obj.evaluate_unit(&[theta], &[**b], &[]).train_loss;
                    ga.total_cmp(&gb)
                })
                .unwrap();
            assert!((phi_star - 0.2).abs() <= 1e-3);
            let at_argmin = obj.evaluate_unit(&[theta], &[phi_star], &[]).val_metric;
            assert!(best_val - at_argmin >= 0.2);
        }
    }

    #[test]
    fn noise_is_deterministic_per_config_and_seed() {
        let space = Builtin::QuadraticBilevel.default_space();
        let mut a = BuiltinObjective::new(Builtin::QuadraticBilevel, space.clone()).unwrap().with_noise(0.1, 7);
        let mut b = BuiltinObjective::new(Builtin::QuadraticBilevel, space.clone()).unwrap().with_noise(0.1, 7);
        let mut c = BuiltinObjective::new(Builtin::QuadraticBilevel, space).unwrap().with_noise(0.1, 8);
        let cfg: Configuration = [("theta", 0.3), ("phi", 0.6)].into_iter().collect();
        let (ea, eb, ec) = (a.evaluate(&cfg).unwrap(), b.evaluate(&cfg).unwrap(), c.evaluate(&cfg).unwrap());
        assert_eq!(ea, eb);
        assert_eq!(ea, a.evaluate(&cfg).unwrap());
        assert_ne!(ea, ec);
        assert_ne!(ea.val_metric, -0.05);
    }

    #[test]
    fn works_on_fine_tuning_space() {
        let mut obj = BuiltinObjective::new(Builtin::QuadraticBilevel, SearchSpace::fine_tuning_default()).unwrap();
        let cfg = Configuration::new().with("learning_rate", 1e-6).with("batch_size", 8i64).with("weight_decay", 0.05);
        let e = obj.evaluate(&cfg).unwrap();
        // theta = 0.25, phi = (0, 0.5)
        assert!((e.train_loss - (0.0625 + 0.0625)).abs() < 1e-12);
        assert!((e.val_metric + (0.0625 + 0.25)).abs() < 1e-12);
        assert!(BuiltinObjective::new(Builtin::Branin, SearchSpace::fine_tuning_default()).is_err());
    }

    #[test]
    fn unknown_name() {
        assert!("rosenbrock".parse::<Builtin>().is_err());
        for b in Builtin::ALL {
            assert_eq!(b.name().parse::<Builtin>().unwrap(), b);
        }
    }
}
