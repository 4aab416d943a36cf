//! Bounded particle swarm minimizer.
//!
//! Standard global-best swarm: each particle keeps its personal best, the
//! swarm shares one global best, and velocities follow
//!
//! ```text
//! v ← w·v + c1·r1·(p_best − x) + c2·r2·(g_best − x),   x ← x + v
//! ```
//!
//! with fresh r1, r2 ~ U(0, 1) per particle and dimension. Velocities are
//! clamped to a fraction of each dimension's range; a position leaving the
//! box is clamped onto the face and that velocity component is zeroed.
//! Objective evaluations within an iteration may run on the rayon pool; the
//! random stream is consumed sequentially so results do not depend on the
//! number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub n_iterations: usize,
    /// Cognitive coefficient.
    pub c1: f64,
    /// Social coefficient.
    pub c2: f64,
    /// Inertia weight.
    pub w: f64,
    /// Velocity limit as a fraction of each dimension's range.
    pub v_max_fraction: f64,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    /// Evaluate the objective for all particles on the rayon pool.
    pub parallel: bool,
}

/// Stop once the global best improved by less than `tol` over `window`
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub tol: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { window: 20, tol: 1e-10 }
    }
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 30,
            n_iterations: 100,
            c1: 0.4,
            c2: 0.4,
            w: 0.5,
            v_max_fraction: 0.2,
            seed: 0,
            early_stop: None,
            parallel: false,
        }
    }
}

impl PsoConfig {
    pub fn new(n_particles: usize, n_iterations: usize) -> Self {
        Self { n_particles, n_iterations, ..Self::default() }
    }

    /// Clerc–Kennedy constriction coefficients (w = 0.7298, c1 = c2 = 1.49618),
    /// which explore longer before collapsing than the defaults.
    pub fn constriction(n_particles: usize, n_iterations: usize) -> Self {
        Self { n_particles, n_iterations, w: 0.7298, c1: 1.49618, c2: 1.49618, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_particles < 2 {
            return Err(ConfigError::Pso("n_particles must be at least 2".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(ConfigError::Pso("c1 and c2 must be non-negative".into()));
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(ConfigError::Pso(format!("inertia weight {} outside (0, 1)", self.w)));
        }
        if !(self.v_max_fraction > 0.0) {
            return Err(ConfigError::Pso("v_max_fraction must be positive".into()));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || !(es.tol >= 0.0) {
                return Err(ConfigError::Pso("early stop needs a window and a tolerance".into()));
            }
        }
        Ok(())
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T = f64> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, ConfigError> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// Same interval in every one of `dim` dimensions.
    pub fn uniform(dim: usize, lower: T, upper: T) -> Result<Self, ConfigError> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(ConfigError::Bounds("lower and upper must have the same non-zero length".into()));
        }
        for (d, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ConfigError::Bounds(format!("dimension {d}: [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, x: &mut [T]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(*lo).min(*hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome<T = f64> {
    pub x_best: Vec<T>,
    pub f_best: T,
    /// Global best value after initialization and after each iteration.
    pub trace: Vec<T>,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Swarm state between iterations.
#[derive(Debug, Clone)]
pub struct SwarmState<T = f64> {
    pub positions: Vec<Vec<T>>,
    pub velocities: Vec<Vec<T>>,
    pub p_best: Vec<(Vec<T>, T)>,
    pub g_best: (Vec<T>, T),
    pub iteration: usize,
}

pub struct Swarm<'a, T: Scalar> {
    bounds: &'a Bounds<T>,
    cfg: &'a PsoConfig,
    v_max: Vec<T>,
    rng: ChaCha8Rng,
    state: SwarmState<T>,
    trace: Vec<T>,
    evaluations: usize,
}

fn sanitize<T: Scalar>(f: T) -> T {
    if f.is_nan() {
        T::infinity()
    } else {
        f
    }
}

fn evaluate_all<T, F>(objective: &F, xs: &[Vec<T>], parallel: bool) -> Vec<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
{
    if parallel {
        xs.par_iter().map(|x| sanitize(objective(x))).collect()
    } else {
        xs.iter().map(|x| sanitize(objective(x))).collect()
    }
}

impl<'a, T: Scalar> Swarm<'a, T> {
    /// Uniform random initialization; `seeds` replace the first particles.
    pub fn new<F>(
        objective: &F,
        bounds: &'a Bounds<T>,
        cfg: &'a PsoConfig,
        seeds: &[Vec<T>],
    ) -> Result<Self, ConfigError>
    where
        F: Fn(&[T]) -> T + Sync,
    {
        cfg.validate()?;
        bounds.validate()?;
        let dim = bounds.dim();
        if let Some(s) = seeds.iter().find(|s| s.len() != dim) {
            return Err(ConfigError::Bounds(format!(
                "seed particle has {} coordinates, expected {dim}",
                s.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let frac = T::lit(cfg.v_max_fraction);
        let v_max: Vec<T> =
            bounds.lower.iter().zip(&bounds.upper).map(|(lo, hi)| (*hi - *lo) * frac).collect();

        let mut positions = Vec::with_capacity(cfg.n_particles);
        let mut velocities = Vec::with_capacity(cfg.n_particles);
        for k in 0..cfg.n_particles {
            let mut x: Vec<T> = (0..dim)
                .map(|d| {
                    let r = T::lit(rng.random::<f64>());
                    bounds.lower[d] + r * (bounds.upper[d] - bounds.lower[d])
                })
                .collect();
            let v: Vec<T> = (0..dim)
                .map(|d| T::lit(2.0 * rng.random::<f64>() - 1.0) * v_max[d])
                .collect();
            if let Some(seed) = seeds.get(k) {
                x.clone_from(seed);
                bounds.clamp(&mut x);
            }
            positions.push(x);
            velocities.push(v);
        }
        let values = evaluate_all(objective, &positions, cfg.parallel);
        let p_best: Vec<(Vec<T>, T)> =
            positions.iter().cloned().zip(values.iter().copied()).collect();
        let g_best = p_best
            .iter()
            .fold(None::<&(Vec<T>, T)>, |best, cand| match best {
                Some(b) if b.1 <= cand.1 => Some(b),
                _ => Some(cand),
            })
            .cloned()
            .expect("at least two particles");
        let trace = vec![g_best.1];
        Ok(Self {
            bounds,
            cfg,
            v_max,
            rng,
            state: SwarmState { positions, velocities, p_best, g_best, iteration: 0 },
            trace,
            evaluations: cfg.n_particles,
        })
    }

    pub fn state(&self) -> &SwarmState<T> {
        &self.state
    }

    /// One synchronous velocity/position update followed by evaluation.
    pub fn step<F>(&mut self, objective: &F)
    where
        F: Fn(&[T]) -> T + Sync,
    {
        let c1 = T::lit(self.cfg.c1);
        let c2 = T::lit(self.cfg.c2);
        let w = T::lit(self.cfg.w);
        let st = &mut self.state;
        for k in 0..st.positions.len() {
            let x = &mut st.positions[k];
            let v = &mut st.velocities[k];
            let pb = &st.p_best[k].0;
            for d in 0..x.len() {
                let r1 = T::lit(self.rng.random::<f64>());
                let r2 = T::lit(self.rng.random::<f64>());
                let mut vel = w * v[d] + c1 * r1 * (pb[d] - x[d]) + c2 * r2 * (st.g_best.0[d] - x[d]);
                vel = vel.max(-self.v_max[d]).min(self.v_max[d]);
                let mut pos = x[d] + vel;
                if pos < self.bounds.lower[d] {
                    pos = self.bounds.lower[d];
                    vel = T::zero();
                } else if pos > self.bounds.upper[d] {
                    pos = self.bounds.upper[d];
                    vel = T::zero();
                }
                x[d] = pos;
                v[d] = vel;
            }
        }
        let values = evaluate_all(objective, &st.positions, self.cfg.parallel);
        self.evaluations += values.len();
        for (k, f) in values.into_iter().enumerate() {
            if f < st.p_best[k].1 {
                st.p_best[k] = (st.positions[k].clone(), f);
            }
            if f < st.g_best.1 {
                st.g_best = (st.positions[k].clone(), f);
            }
        }
        st.iteration += 1;
        self.trace.push(st.g_best.1);
    }

    fn stalled(&self) -> bool {
        match self.cfg.early_stop {
            Some(es) if self.trace.len() > es.window => {
                let n = self.trace.len();
                let old = self.trace[n - 1 - es.window];
                let new = self.trace[n - 1];
                old.is_finite() && (old - new) < T::lit(es.tol)
            }
            _ => false,
        }
    }

    pub fn run<F>(mut self, objective: &F) -> PsoOutcome<T>
    where
        F: Fn(&[T]) -> T + Sync,
    {
        for _ in 0..self.cfg.n_iterations {
            self.step(objective);
            if self.stalled() {
                break;
            }
        }
        PsoOutcome {
            x_best: self.state.g_best.0,
            f_best: self.state.g_best.1,
            trace: self.trace,
            iterations: self.state.iteration,
            evaluations: self.evaluations,
        }
    }
}

/// Independent child seed for sub-stream `stream` of `seed` (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Minimizes `objective` over `bounds`.
pub fn minimize<T, F>(objective: F, bounds: &Bounds<T>, cfg: &PsoConfig) -> Result<PsoOutcome<T>, ConfigError>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
{
    minimize_seeded(objective, bounds, cfg, &[])
}

/// Like [`minimize`], with the given positions injected as initial particles.
pub fn minimize_seeded<T, F>(
    objective: F,
    bounds: &Bounds<T>,
    cfg: &PsoConfig,
    seeds: &[Vec<T>],
) -> Result<PsoOutcome<T>, ConfigError>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
{
    let swarm = Swarm::new(&objective, bounds, cfg, seeds)?;
    Ok(swarm.run(&objective))
}
