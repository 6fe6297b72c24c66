//! Multinomial No-U-Turn sampler with a diagonal metric.
//!
//! Trajectories are built by repeated doubling. Within each subtree the
//! proposal is drawn multinomially in proportion to `exp(-H)`; at the top
//! level the new subtree's proposal replaces the current one with
//! probability `min(1, w_new / w_old)`. Termination uses the generalized
//! U-turn criterion on summed momenta, including the checks across the
//! boundary between the two halves of every merged tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adapt::{DualAveraging, Welford, WindowSchedule};
use crate::math::log_add_exp;
use crate::{Error, Result};

/// A differentiable log density over `R^dim`.
///
/// Implementations return a non-finite value when the density is undefined
/// at `theta`; the sampler treats that as a divergence.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn logp_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NutsConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    /// Initial coordinates are drawn from `Uniform(-init_radius, init_radius)`.
    pub init_radius: f64,
    /// Energy error that marks a transition divergent.
    pub max_delta_h: f64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 2000,
            draws: 2000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            init_radius: 0.5,
            max_delta_h: 1000.0,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 {
            return Err(Error::Config("chains and draws must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 30 {
            return Err(Error::Config("max_tree_depth must be in 1..=30".into()));
        }
        if !(self.init_radius >= 0.0) {
            return Err(Error::Config("init_radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-chain sampler statistics for post-warm-up iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub tree_depth: Vec<u8>,
    pub n_leapfrog: Vec<u32>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub warmup_divergences: usize,
}

impl ChainStats {
    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }
}

/// Raw unconstrained draws, `chain`-major then `draw`, `dim` values each.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub dim: usize,
    pub n_draws: usize,
    pub draws: Vec<Vec<f64>>,
    pub stats: Vec<ChainStats>,
}

impl ChainOutput {
    pub fn draw(&self, chain: usize, s: usize) -> &[f64] {
        &self.draws[chain][s * self.dim..(s + 1) * self.dim]
    }

    pub fn total_divergences(&self) -> usize {
        self.stats.iter().map(ChainStats::divergences).sum()
    }

    pub fn divergence_fraction(&self) -> f64 {
        let total = (self.n_draws * self.stats.len()).max(1);
        self.total_divergences() as f64 / total as f64
    }
}

#[derive(Debug, Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Integrator<'a, D: LogDensity> {
    target: &'a D,
    inv_metric: Vec<f64>,
    step: f64,
}

impl<D: LogDensity> Integrator<'_, D> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64], out: &mut [f64]) {
        for ((o, p), m) in out.iter_mut().zip(p).zip(&self.inv_metric) {
            *o = p * m;
        }
    }

    fn leapfrog(&self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.logp = self.target.logp_and_grad(&z.q, &mut z.grad);
        if !z.logp.is_finite() {
            z.logp = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }

    fn resample_momentum(&self, z: &mut Point, rng: &mut ChaCha8Rng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Endpoint summaries of a subtree, oriented in its direction of growth.
struct Subtree {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    rho: Vec<f64>,
    log_weight: f64,
    proposal: Point,
}

struct Builder<'a, 'b, D: LogDensity> {
    int: &'a Integrator<'b, D>,
    rng: &'a mut ChaCha8Rng,
    h0: f64,
    max_delta_h: f64,
    n_leapfrog: u32,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<D: LogDensity> Builder<'_, '_, D> {
    /// Extend the trajectory from `z` by `2^depth` steps of signed size `eps`.
    /// `z` is left at the new end. `None` signals a divergence or U-turn.
    fn build(&mut self, z: &mut Point, depth: usize, eps: f64) -> Option<Subtree> {
        if depth == 0 {
            self.int.leapfrog(z, eps);
            self.n_leapfrog += 1;
            let h = self.int.hamiltonian(z);
            if h - self.h0 > self.max_delta_h || !h.is_finite() {
                self.divergent = true;
                return None;
            }
            let lw = self.h0 - h;
            self.sum_metro_prob += if lw > 0.0 { 1.0 } else { lw.exp() };
            let mut ps = vec![0.0; z.p.len()];
            self.int.p_sharp(&z.p, &mut ps);
            return Some(Subtree {
                p_sharp_beg: ps.clone(),
                p_sharp_end: ps,
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
                rho: z.p.clone(),
                log_weight: lw,
                proposal: z.clone(),
            });
        }

        let init = self.build(z, depth - 1, eps)?;
        let fin = self.build(z, depth - 1, eps)?;

        let log_weight = log_add_exp(init.log_weight, fin.log_weight);
        let take_final = fin.log_weight > log_weight
            || self.rng.random::<f64>() < (fin.log_weight - log_weight).exp();
        let rho = add(&init.rho, &fin.rho);

        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho);
        let rho_ext = add(&init.rho, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&fin.rho, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);
        if !persist {
            return None;
        }

        Some(Subtree {
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
            p_beg: init.p_beg,
            p_end: fin.p_end,
            rho,
            log_weight,
            proposal: if take_final { fin.proposal } else { init.proposal },
        })
    }
}

struct TransitionInfo {
    depth: usize,
    n_leapfrog: u32,
    accept_stat: f64,
    divergent: bool,
}

/// Both ends of the trajectory: backward end first.
struct Ends {
    q: [Point; 2],
    p: [Vec<f64>; 2],
    p_sharp: [Vec<f64>; 2],
}

fn transition<D: LogDensity>(
    int: &Integrator<'_, D>,
    current: &mut Point,
    rng: &mut ChaCha8Rng,
    max_depth: usize,
    max_delta_h: f64,
) -> TransitionInfo {
    int.resample_momentum(current, rng);
    let h0 = int.hamiltonian(current);
    let mut ps = vec![0.0; current.p.len()];
    int.p_sharp(&current.p, &mut ps);

    let mut ends = Ends {
        q: [current.clone(), current.clone()],
        p: [current.p.clone(), current.p.clone()],
        p_sharp: [ps.clone(), ps],
    };
    let mut rho = current.p.clone();
    let mut sample = current.clone();
    let mut log_weight = 0.0;

    let mut b = Builder { int, rng, h0, max_delta_h, n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
    let mut depth = 0;
    while depth < max_depth {
        let forward = b.rng.random::<f64>() > 0.5;
        let side = usize::from(forward);
        let eps = if forward { int.step } else { -int.step };
        let mut z = ends.q[side].clone();
        let Some(sub) = b.build(&mut z, depth, eps) else { break };
        ends.q[side] = z;
        depth += 1;

        if sub.log_weight > log_weight || b.rng.random::<f64>() < (sub.log_weight - log_weight).exp() {
            sample = sub.proposal;
        }
        log_weight = log_add_exp(log_weight, sub.log_weight);

        // Orient the new subtree's endpoints from backward to forward.
        let (new_inner_p, new_inner_ps, new_outer_ps) = (sub.p_beg, sub.p_sharp_beg, sub.p_sharp_end);
        let old_inner_p = ends.p[side].clone();
        let old_inner_ps = ends.p_sharp[side].clone();
        let rho_old = rho.clone();
        rho = add(&rho_old, &sub.rho);
        ends.p[side] = sub.p_end;
        ends.p_sharp[side] = new_outer_ps;

        let (ps_minus, ps_plus) = (&ends.p_sharp[0], &ends.p_sharp[1]);
        let mut persist = no_u_turn(ps_minus, ps_plus, &rho);
        // Old tree extended by the first point of the new subtree, and the
        // new subtree extended by the adjacent end of the old tree.
        let rho_ext = add(&rho_old, &new_inner_p);
        let rho_ext2 = add(&sub.rho, &old_inner_p);
        if forward {
            persist &= no_u_turn(ps_minus, &new_inner_ps, &rho_ext);
            persist &= no_u_turn(&old_inner_ps, ps_plus, &rho_ext2);
        } else {
            persist &= no_u_turn(&new_inner_ps, ps_plus, &rho_ext);
            persist &= no_u_turn(ps_minus, &old_inner_ps, &rho_ext2);
        }
        if !persist {
            break;
        }
    }

    let info = TransitionInfo {
        depth,
        n_leapfrog: b.n_leapfrog,
        accept_stat: if b.n_leapfrog > 0 { b.sum_metro_prob / f64::from(b.n_leapfrog) } else { 0.0 },
        divergent: b.divergent,
    };
    *current = sample;
    info
}

/// Heuristic initial step: double or halve until the one-step acceptance
/// crosses 0.8.
fn find_initial_step<D: LogDensity>(int: &mut Integrator<'_, D>, z0: &Point, rng: &mut ChaCha8Rng) {
    let target = 0.8f64.ln();
    let mut z = z0.clone();
    int.resample_momentum(&mut z, rng);
    let h0 = int.hamiltonian(&z);
    int.leapfrog(&mut z, int.step);
    let dh = h0 - int.hamiltonian(&z);
    let up = dh > target;
    for _ in 0..100 {
        let mut z = z0.clone();
        int.resample_momentum(&mut z, rng);
        let h0 = int.hamiltonian(&z);
        int.leapfrog(&mut z, int.step);
        let dh = h0 - int.hamiltonian(&z);
        if (up && !(dh > target)) || (!up && !(dh < target)) {
            break;
        }
        int.step = if up { 2.0 * int.step } else { 0.5 * int.step };
        if int.step > 1e7 || int.step < 1e-10 {
            break;
        }
    }
}

fn init_point<D: LogDensity>(target: &D, rng: &mut ChaCha8Rng, radius: f64, init: Option<&[f64]>) -> Result<Point> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    for _ in 0..100 {
        let q: Vec<f64> = match init {
            Some(v) => v.to_vec(),
            None => (0..dim)
                .map(|_| if radius > 0.0 { rng.random_range(-radius..radius) } else { 0.0 })
                .collect(),
        };
        let logp = target.logp_and_grad(&q, &mut grad);
        if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(Point { q, p: vec![0.0; dim], grad, logp });
        }
        if init.is_some() {
            break;
        }
    }
    Err(Error::InvalidInput("log density is not finite at the initial point".into()))
}

fn run_chain<D: LogDensity>(target: &D, cfg: &NutsConfig, chain: usize, init: Option<&[f64]>) -> Result<(Vec<f64>, ChainStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64 + 1);
    let dim = target.dim();
    let mut z = init_point(target, &mut rng, cfg.init_radius, init)?;
    let mut int = Integrator { target, inv_metric: vec![1.0; dim], step: 1.0 };

    find_initial_step(&mut int, &z, &mut rng);
    let mut da = DualAveraging::new(cfg.target_accept, int.step);
    let mut windows = WindowSchedule::new(cfg.warmup);
    let mut est = Welford::new(dim);
    let mut warmup_divergences = 0;

    for _ in 0..cfg.warmup {
        let info = transition(&int, &mut z, &mut rng, cfg.max_tree_depth, cfg.max_delta_h);
        warmup_divergences += usize::from(info.divergent);
        int.step = da.update(info.accept_stat);
        if let Some(var) = windows.observe(&z.q, &mut est) {
            int.inv_metric = var;
            find_initial_step(&mut int, &z, &mut rng);
            da.restart(int.step);
        }
    }
    if cfg.warmup > 0 {
        int.step = da.final_step();
    }

    let mut out = Vec::with_capacity(cfg.draws * dim);
    let mut stats = ChainStats {
        step_size: int.step,
        inv_metric: Vec::new(),
        tree_depth: Vec::with_capacity(cfg.draws),
        n_leapfrog: Vec::with_capacity(cfg.draws),
        accept_stat: Vec::with_capacity(cfg.draws),
        divergent: Vec::with_capacity(cfg.draws),
        warmup_divergences,
    };
    for _ in 0..cfg.draws {
        let info = transition(&int, &mut z, &mut rng, cfg.max_tree_depth, cfg.max_delta_h);
        out.extend_from_slice(&z.q);
        stats.tree_depth.push(info.depth as u8);
        stats.n_leapfrog.push(info.n_leapfrog);
        stats.accept_stat.push(info.accept_stat);
        stats.divergent.push(info.divergent);
    }
    stats.inv_metric = int.inv_metric;
    Ok((out, stats))
}

/// Runs `cfg.chains` independent chains, in parallel threads when more than
/// one is requested. Chain `c` uses stream `c + 1` of a ChaCha8 generator
/// seeded with `cfg.seed`, so output does not depend on scheduling.
pub fn sample<D: LogDensity>(target: &D, cfg: &NutsConfig, init: Option<&[f64]>) -> Result<ChainOutput> {
    cfg.validate()?;
    if let Some(v) = init {
        if v.len() != target.dim() {
            return Err(Error::InvalidInput(format!(
                "initial point has length {}, target dimension is {}",
                v.len(),
                target.dim()
            )));
        }
    }
    let results: Vec<Result<(Vec<f64>, ChainStats)>> = if cfg.chains == 1 {
        vec![run_chain(target, cfg, 0, init)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..cfg.chains)
                .map(|c| s.spawn(move || run_chain(target, cfg, c, init)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
        })
    };
    let mut draws = Vec::with_capacity(cfg.chains);
    let mut stats = Vec::with_capacity(cfg.chains);
    for r in results {
        let (d, s) = r?;
        draws.push(d);
        stats.push(s);
    }
    Ok(ChainOutput { dim: target.dim(), n_draws: cfg.draws, draws, stats })
}
