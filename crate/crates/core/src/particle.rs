//! Stochastic particle system whose mean-field limit is the breakage equation.
//!
//! Every ordered pair `(i, j)`, `i ≠ j`, collides at rate `a(x_i, x_j) / V`;
//! particle `i` then breaks according to `b(·, x_i, x_j)` while `j` is left
//! unchanged. For product kernels the total rate is
//! `A₀ (S² - Σ ω_i²) / V` with `S = Σ ω_i`, and the pair is drawn as breaker
//! `∝ ω_i`, partner `∝ ω_j` with `j = i` rejected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::daughter::DaughterSpec;
use crate::density::InitialDensity;
use crate::error::{invalid, Error, Result};
use crate::kernel::KernelSpec;
use crate::quadrature::exact_sum;

/// Events between exact recomputations of the running sums.
pub const RESYNC_INTERVAL: u64 = 1 << 16;

/// Prefix sums over non-negative weights with `O(log N)` update and search.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn build(values: &[f64], capacity: usize) -> Self {
        let cap = capacity.max(values.len()).next_power_of_two();
        let mut tree = vec![0.0; cap + 1];
        tree[1..=values.len()].copy_from_slice(values);
        for i in 1..=cap {
            let parent = i + (i & i.wrapping_neg());
            if parent <= cap {
                tree[parent] += tree[i];
            }
        }
        Fenwick { tree }
    }

    fn capacity(&self) -> usize {
        self.tree.len() - 1
    }

    fn add(&mut self, index: usize, delta: f64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let cap = self.capacity();
        let mut pos = 0;
        let mut step = cap;
        while step > 0 {
            let next = pos + step;
            if next <= cap && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }
}

/// How the system volume `V` is chosen at initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeNormalization {
    /// `V = N / M₀(f^in)`: the empirical number density matches `f^in`.
    Number,
    /// `V = Σ m / M₁(f^in)`: the empirical mass matches `M₁(f^in)` exactly,
    /// so the mass snapshot is the same constant in every replica.
    Mass,
}

#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub masses: Vec<f64>,
    pub volume: f64,
    pub t: f64,
    pub rng_seed: u64,
    pub events: u64,
    omega: Vec<f64>,
    tree: Fenwick,
    sum_omega: f64,
    sum_omega_sq: f64,
    positive: usize,
    /// Exact `Σ m` at initialisation.
    initial_mass_sum: f64,
    /// Mass snapshot reported for `Σ m = initial_mass_sum`.
    mass_level: f64,
}

/// One collision: after `waiting_time`, particle `breaker` fragments on
/// contact with `partner`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub waiting_time: f64,
    pub breaker: usize,
    pub partner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub particles: usize,
}

impl ParticleSystem {
    /// Builds a system from explicit masses.
    pub fn from_masses(masses: Vec<f64>, volume: f64, kernel: &KernelSpec, rng_seed: u64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(invalid("particle_count", "need at least 2 particles"));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(invalid("volume", format!("must be positive, got {volume}")));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Domain("particle masses must be positive".into()));
        }
        if !kernel.is_product() {
            return Err(Error::Unsupported(format!(
                "the particle system needs a product kernel, family {} is not",
                kernel.family.label()
            )));
        }
        let initial_mass_sum = exact_sum(masses.iter().copied());
        let omega: Vec<f64> = masses.iter().map(|&m| kernel.omega_truncated(m)).collect();
        let tree = Fenwick::build(&omega, omega.len() * 2);
        let mut sys = ParticleSystem {
            mass_level: initial_mass_sum / volume,
            masses,
            volume,
            t: 0.0,
            rng_seed,
            events: 0,
            omega,
            tree,
            sum_omega: 0.0,
            sum_omega_sq: 0.0,
            positive: 0,
            initial_mass_sum,
        };
        sys.resync();
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Exact recomputation of the running sums and the prefix tree.
    pub fn resync(&mut self) {
        self.sum_omega = exact_sum(self.omega.iter().copied());
        self.sum_omega_sq = exact_sum(self.omega.iter().map(|w| w * w));
        self.positive = self.omega.iter().filter(|&&w| w > 0.0).count();
        let cap = self.tree.capacity().max(self.omega.len());
        self.tree = Fenwick::build(&self.omega, cap);
    }

    /// `A₀ (S² - Σ ω²) / V`.
    pub fn total_rate(&self, kernel: &KernelSpec) -> f64 {
        if self.positive < 2 {
            return 0.0;
        }
        let pairs = (self.sum_omega * self.sum_omega - self.sum_omega_sq).max(0.0);
        kernel.a0 * pairs / self.volume
    }

    pub fn snapshot(&self) -> Snapshot {
        let n = self.masses.len();
        let mass_sum = exact_sum(self.masses.iter().copied());
        Snapshot {
            t: self.t,
            m0: n as f64 / self.volume,
            m1: self.mass_level * (mass_sum / self.initial_mass_sum),
            m2: exact_sum(self.masses.iter().map(|m| m * m)) / self.volume,
            particles: n,
        }
    }

    fn draw_weighted<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        loop {
            let target = rng.random::<f64>() * self.sum_omega;
            let i = self.tree.find(target);
            // drift in the tree can point past the end or at an empty slot
            if i < self.omega.len() && self.omega[i] > 0.0 {
                return i;
            }
        }
    }

    fn push(&mut self, mass: f64, kernel: &KernelSpec) {
        let w = kernel.omega_truncated(mass);
        self.masses.push(mass);
        self.omega.push(w);
        if self.omega.len() > self.tree.capacity() {
            self.tree = Fenwick::build(&self.omega, self.omega.len() * 2);
        } else {
            self.tree.add(self.omega.len() - 1, w);
        }
        self.sum_omega += w;
        self.sum_omega_sq += w * w;
        if w > 0.0 {
            self.positive += 1;
        }
    }

    fn replace(&mut self, index: usize, mass: f64, kernel: &KernelSpec) {
        let old = self.omega[index];
        let w = kernel.omega_truncated(mass);
        self.masses[index] = mass;
        self.omega[index] = w;
        self.tree.add(index, w - old);
        self.sum_omega += w - old;
        self.sum_omega_sq += w * w - old * old;
        if old > 0.0 {
            self.positive -= 1;
        }
        if w > 0.0 {
            self.positive += 1;
        }
    }
}

/// Draws `N` masses i.i.d. from `f^in` restricted to `(lo, hi)`.
pub fn init_from_density<R: Rng + ?Sized>(
    f_in: &InitialDensity,
    window: (f64, f64),
    particle_count: usize,
    normalization: VolumeNormalization,
    kernel: &KernelSpec,
    rng: &mut R,
) -> Result<ParticleSystem> {
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid("window", format!("need 0 <= lo < hi, got ({lo}, {hi})")));
    }
    f_in.validate()?;
    let number = f_in.integral(lo, hi)?;
    if !(number.is_finite() && number > 0.0) {
        return Err(Error::Domain(format!(
            "initial density is not normalisable on ({lo}, {hi}): integral {number}"
        )));
    }
    if particle_count < 2 {
        return Err(invalid("particle_count", "need at least 2 particles"));
    }
    let mut masses = Vec::with_capacity(particle_count);
    for _ in 0..particle_count {
        masses.push(f_in.sample(lo, hi, rng)?);
    }
    let volume = match normalization {
        VolumeNormalization::Number => particle_count as f64 / number,
        VolumeNormalization::Mass => exact_sum(masses.iter().copied()) / f_in.first_moment(lo, hi)?,
    };
    let mut sys = ParticleSystem::from_masses(masses, volume, kernel, 0)?;
    if normalization == VolumeNormalization::Mass {
        sys.mass_level = f_in.first_moment(lo, hi)?;
    }
    Ok(sys)
}

/// Waiting time and colliding pair of the next event; `None` once no pair
/// can collide.
pub fn sample_event<R: Rng + ?Sized>(sys: &ParticleSystem, kernel: &KernelSpec, rng: &mut R) -> Option<Event> {
    let rate = sys.total_rate(kernel);
    if !(rate > 0.0) {
        return None;
    }
    let e: f64 = 1.0 - rng.random::<f64>();
    let waiting_time = -e.ln() / rate;
    let breaker = sys.draw_weighted(rng);
    let partner = loop {
        let j = sys.draw_weighted(rng);
        if j != breaker {
            break j;
        }
    };
    Some(Event {
        waiting_time,
        breaker,
        partner,
    })
}

/// Advances time and replaces the breaker with its fragments.
pub fn apply_event<R: Rng + ?Sized>(
    sys: &mut ParticleSystem,
    event: &Event,
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    rng: &mut R,
) -> Result<()> {
    let y = sys.masses[event.breaker];
    let z = sys.masses[event.partner];
    let fragments = daughter.sample_fragments(y, z, rng)?;
    let (first, rest) = fragments
        .split_first()
        .ok_or_else(|| Error::Inconsistent("breakage produced no fragments".into()))?;
    sys.replace(event.breaker, *first, kernel);
    for &m in rest {
        sys.push(m, kernel);
    }
    sys.t += event.waiting_time;
    sys.events += 1;
    if sys.events.is_multiple_of(RESYNC_INTERVAL) {
        sys.resync();
    }
    Ok(())
}

pub fn gillespie_step<R: Rng + ?Sized>(
    sys: &mut ParticleSystem,
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    rng: &mut R,
) -> Result<Option<Event>> {
    match sample_event(sys, kernel, rng) {
        Some(event) => {
            apply_event(sys, &event, kernel, daughter, rng)?;
            Ok(Some(event))
        }
        None => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub snapshots: Vec<Snapshot>,
    /// The event cap was hit before `t_end`.
    pub aborted: bool,
    /// No pair could collide any more.
    pub absorbed: bool,
    pub events: u64,
}

/// Runs the Gillespie loop to `t_end`, recording a snapshot at `t = 0` (if
/// listed) and at every checkpoint.
pub fn run<R: Rng + ?Sized>(
    sys: &mut ParticleSystem,
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    t_end: f64,
    checkpoints: &[f64],
    max_events: u64,
    rng: &mut R,
) -> Result<RunRecord> {
    if !daughter.samplable {
        return Err(Error::Unsupported(format!(
            "daughter family {} has no exact fragment sampler",
            daughter.family.name()
        )));
    }
    let mut times: Vec<f64> = checkpoints.iter().copied().filter(|&t| t >= sys.t && t <= t_end).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut aborted = false;
    let mut absorbed = false;
    while next < times.len() {
        if sys.events >= max_events {
            aborted = true;
            break;
        }
        let Some(event) = sample_event(sys, kernel, rng) else {
            absorbed = true;
            break;
        };
        let t_new = sys.t + event.waiting_time;
        while next < times.len() && times[next] < t_new {
            let mut snap = sys.snapshot();
            snap.t = times[next];
            snapshots.push(snap);
            next += 1;
        }
        if next == times.len() {
            break;
        }
        apply_event(sys, &event, kernel, daughter, rng)?;
    }
    if absorbed {
        // nothing changes any more
        while next < times.len() {
            let mut snap = sys.snapshot();
            snap.t = times[next];
            snapshots.push(snap);
            next += 1;
        }
    }
    Ok(RunRecord {
        snapshots,
        aborted,
        absorbed,
        events: sys.events,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub particle_count: usize,
    pub replicas: usize,
    pub t_end: f64,
    pub checkpoint_times: Vec<f64>,
    pub seed: u64,
    pub max_events: u64,
    pub normalization: VolumeNormalization,
    /// Sampling window for the initial masses.
    pub window: (f64, f64),
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particle_count < 2 {
            return Err(invalid("particle_count", "need at least 2 particles"));
        }
        if self.replicas < 1 {
            return Err(invalid("replicas", "need at least 1 replica"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(invalid("t_end", format!("must be finite and >= 0, got {}", self.t_end)));
        }
        if self.max_events == 0 {
            return Err(invalid("max_events", "must be positive"));
        }
        Ok(())
    }
}

/// The generator for replica `r` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCStats {
    pub times: Vec<f64>,
    pub m0_mean: Vec<f64>,
    /// `None` when fewer than two replicas are available.
    pub m0_stderr: Vec<Option<f64>>,
    pub m1_mean: Vec<f64>,
    pub m1_stderr: Vec<Option<f64>>,
    pub m2_mean: Vec<f64>,
    pub m2_stderr: Vec<Option<f64>>,
    pub replicas: usize,
    pub aborted_replicas: usize,
    pub absorbed_replicas: usize,
}

/// Mean and standard error, shifted by the first sample so identical samples
/// give exactly zero spread.
pub fn mean_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let shift = values[0];
    let dev: Vec<f64> = values.iter().map(|v| v - shift).collect();
    let dm = dev.iter().sum::<f64>() / n as f64;
    let mean = shift + dm;
    if n < 2 {
        return (mean, None);
    }
    let ss: f64 = dev.iter().map(|d| (d - dm) * (d - dm)).sum();
    (mean, Some((ss / (n - 1) as f64 / n as f64).sqrt()))
}

/// Runs `config.replicas` independent replicas in parallel.
pub fn ensemble_stats(
    f_in: &InitialDensity,
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    config: &MCConfig,
) -> Result<MCStats> {
    config.validate()?;
    if !daughter.samplable {
        return Err(Error::Unsupported(format!(
            "daughter family {} has no exact fragment sampler",
            daughter.family.name()
        )));
    }
    let mut times: Vec<f64> = config
        .checkpoint_times
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t <= config.t_end)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let records: Vec<RunRecord> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(config.seed, r);
            let mut sys = init_from_density(
                f_in,
                config.window,
                config.particle_count,
                config.normalization,
                kernel,
                &mut rng,
            )?;
            sys.rng_seed = config.seed;
            run(&mut sys, kernel, daughter, config.t_end, &times, config.max_events, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let aborted_replicas = records.iter().filter(|r| r.aborted).count();
    let absorbed_replicas = records.iter().filter(|r| r.absorbed).count();
    // aborted replicas stop early; statistics use only the checkpoints every replica reached
    let reached = records.iter().map(|r| r.snapshots.len()).min().unwrap_or(0);
    let mut stats = MCStats {
        times: times[..reached].to_vec(),
        m0_mean: Vec::new(),
        m0_stderr: Vec::new(),
        m1_mean: Vec::new(),
        m1_stderr: Vec::new(),
        m2_mean: Vec::new(),
        m2_stderr: Vec::new(),
        replicas: config.replicas,
        aborted_replicas,
        absorbed_replicas,
    };
    for k in 0..reached {
        let col = |f: fn(&Snapshot) -> f64| -> Vec<f64> { records.iter().map(|r| f(&r.snapshots[k])).collect() };
        let (m, s) = mean_stderr(&col(|s| s.m0));
        stats.m0_mean.push(m);
        stats.m0_stderr.push(s);
        let (m, s) = mean_stderr(&col(|s| s.m1));
        stats.m1_mean.push(m);
        stats.m1_stderr.push(s);
        let (m, s) = mean_stderr(&col(|s| s.m2));
        stats.m2_mean.push(m);
        stats.m2_stderr.push(s);
    }
    Ok(stats)
}
