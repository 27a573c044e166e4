use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::{NodeRecord, SimConfig, SimError, SimOutcome, PENDING_FACTOR};
use crate::dist::{ImproperLaw, Lifetime, LifetimeLaw, OffspringLaw, QuadratureOptions, DEFAULT_HORIZON_MEDIANS};
use crate::fpe::ProcessSpec;
use crate::trial_rng;

/// Which of a node's potential children are admitted.
enum Rule {
    All,
    /// X <= the parent's contagious period.
    Contagious(LifetimeLaw),
    /// X >= the parent's incubation period.
    Incubation(LifetimeLaw),
}

/// A prepared simulation: backward specs get their thinned lifetime law once.
pub struct Simulator {
    offspring: OffspringLaw,
    lifetime: LifetimeLaw,
    thinned: Option<ImproperLaw>,
    rule: Rule,
    horizon: f64,
    cap: u64,
    seed: u64,
}

/// The not-yet-born children of one parent, produced lazily in birth order.
///
/// Children live in U-space: a child with uniform U has lifetime L^{-1}(U), so
/// the admitted children before the horizon are the uniforms in [lo, hi] and the
/// earliest one is the smallest of `left` uniforms there.
struct Brood {
    next_time: f64,
    seq: u64,
    parent_time: f64,
    lo: f64,
    hi: f64,
    left: u64,
    generation: u32,
}

impl PartialEq for Brood {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Brood {}
impl PartialOrd for Brood {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Brood {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.next_time.total_cmp(&self.next_time).then(other.seq.cmp(&self.seq))
    }
}

pub(crate) fn binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
    }
}

impl Simulator {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let spec = &config.spec;
        let thinned = if spec.is_backward() {
            let q = config.quadrature;
            let reach = q.horizon.unwrap_or(DEFAULT_HORIZON_MEDIANS * spec.lifetime().median()).max(config.horizon);
            spec.thinned_law(&QuadratureOptions { dt: q.dt, horizon: Some(reach) })
        } else {
            None
        };
        let rule = match spec {
            ProcessSpec::ForwardContagious { contagious, .. } => Rule::Contagious(contagious.clone()),
            ProcessSpec::ForwardIncubation { incubation, .. } => Rule::Incubation(incubation.clone()),
            _ => Rule::All,
        };
        Ok(Simulator {
            offspring: spec.offspring().clone(),
            lifetime: spec.lifetime().clone(),
            thinned,
            rule,
            horizon: config.horizon,
            cap: config.cap,
            seed: config.master_seed,
        })
    }

    fn law(&self) -> &dyn Lifetime {
        match &self.thinned {
            Some(l) => l,
            None => &self.lifetime,
        }
    }

    pub fn run(&self, trial: u64) -> Result<SimOutcome, SimError> {
        self.run_inner(trial, None)
    }

    fn run_inner(&self, trial: u64, mut trace: Option<&mut Vec<NodeRecord>>) -> Result<SimOutcome, SimError> {
        let mut rng = trial_rng(self.seed, trial);
        let law = self.law();
        let mut out = SimOutcome {
            exploded_proxy: false,
            proxy_time: f64::INFINITY,
            births: 0,
            generation_sizes: Vec::new(),
            candidate_children: 0.0,
            admitted_children: 0.0,
        };
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let limit = PENDING_FACTOR.saturating_mul(self.cap);

        // (birth time, generation) of the node being born
        let mut birth = Some((0.0_f64, 0_u32));
        while let Some((t, generation)) = birth.take() {
            out.births += 1;
            let g = generation as usize;
            if out.generation_sizes.len() <= g {
                out.generation_sizes.resize(g + 1, 0);
            }
            out.generation_sizes[g] += 1;
            if out.births >= self.cap {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(NodeRecord { birth_time: t, offspring_count: 0, period: None, generation });
                }
                out.exploded_proxy = true;
                out.proxy_time = t;
                return Ok(out);
            }

            let d = self.offspring.sample(&mut rng);
            // every node draws exactly one period uniform, so the rules consume
            // randomness identically
            let u: f64 = rng.random();
            let (lo, hi, period) = match &self.rule {
                Rule::All => (0.0, law.total_mass(), None),
                Rule::Contagious(c) => {
                    let tau = c.inv_cdf(u);
                    (0.0, law.cdf(tau), Some(tau))
                }
                Rule::Incubation(i) => {
                    let tau = i.inv_cdf(u);
                    (law.cdf_left(tau), 1.0, Some(tau))
                }
            };
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(NodeRecord { birth_time: t, offspring_count: d, period, generation });
            }
            let admitted = binomial(d, hi - lo, &mut rng);
            out.candidate_children += d as f64;
            out.admitted_children += admitted as f64;
            let top = hi.min(law.cdf(self.horizon - t));
            let in_time = if top > lo { binomial(admitted, ((top - lo) / (hi - lo)).min(1.0), &mut rng) } else { 0 };
            if in_time > 0 {
                let brood = Brood { next_time: 0.0, seq, parent_time: t, lo, hi: top, left: in_time, generation: generation + 1 };
                seq += 1;
                if let Some(b) = self.advance(brood, &mut rng) {
                    heap.push(b);
                }
            }
            if heap.len() as u64 > limit {
                return Err(SimError::CapMemoryExceeded { pending: heap.len(), limit });
            }

            if let Some(brood) = heap.pop() {
                birth = Some((brood.next_time, brood.generation));
                if let Some(b) = self.advance(brood, &mut rng) {
                    heap.push(b);
                }
            }
        }
        Ok(out)
    }

    /// Draws the next child of a brood, or None when it is exhausted.
    fn advance(&self, mut b: Brood, rng: &mut ChaCha8Rng) -> Option<Brood> {
        if b.left == 0 {
            return None;
        }
        // smallest of `left` uniforms on [lo, hi]
        let v = 1.0 - rng.random::<f64>();
        let u = b.lo + (b.hi - b.lo) * -(v.ln() / b.left as f64).exp_m1();
        b.left -= 1;
        b.lo = u;
        b.next_time = b.parent_time + self.law().inv_cdf(u);
        // rounding can push the last admissible child past the horizon
        (b.next_time <= self.horizon).then_some(b)
    }
}

/// One trial of a classical or forward spec.
pub fn simulate_forward(config: &SimConfig, trial: u64) -> Result<SimOutcome, SimError> {
    if config.spec.is_backward() {
        return Err(SimError::InvalidConfig(format!("{} is a backward spec", config.spec.name())));
    }
    Simulator::new(config)?.run(trial)
}

/// One trial of a backward spec, simulated as the classical process with the thinned law.
pub fn simulate_backward(config: &SimConfig, trial: u64) -> Result<SimOutcome, SimError> {
    if !config.spec.is_backward() {
        return Err(SimError::InvalidConfig(format!("{} is not a backward spec", config.spec.name())));
    }
    Simulator::new(config)?.run(trial)
}

/// A trial together with every processed birth, in processing order.
pub fn simulate_traced(config: &SimConfig, trial: u64) -> Result<(SimOutcome, Vec<NodeRecord>), SimError> {
    let mut trace = Vec::new();
    let out = Simulator::new(config)?.run_inner(trial, Some(&mut trace))?;
    Ok((out, trace))
}
