//! Deterministic discrete-event simulation of asynchronous federated
//! learning.
//!
//! Clients run a closed loop: snapshot the global model, train locally,
//! then deliver their update after a simulated compute-plus-network delay.
//! The server aggregates each update the moment it arrives, weighted by the
//! staleness it measures against its snapshot history. A virtual clock
//! replaces wall time, so a (config, seed) pair fixes every bit of the run.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::model::{self, Batch, ModelSpec};
use crate::params::ParamVector;
use crate::rng::{self, Domain};
use crate::staleness::{self, StalenessConfig};

/// A versioned global model: the server's state at one point in virtual
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub version: u64,
    pub params: ParamVector,
    pub vtime: f64,
}

/// A client's finished round, in flight until `deliver_at`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    /// Version of the snapshot the client trained from.
    pub base_version: u64,
    /// Final local parameters minus the base snapshot.
    pub delta: ParamVector,
    pub local_epochs: u32,
    pub deliver_at: f64,
}

/// Delay regime names, also used as config and CSV tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioName {
    Low,
    Medium,
    High,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [ScenarioName::Low, ScenarioName::Medium, ScenarioName::High];

    pub fn token(&self) -> &'static str {
        match self {
            ScenarioName::Low => "low",
            ScenarioName::Medium => "medium",
            ScenarioName::High => "high",
        }
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .iter()
            .copied()
            .find(|n| n.token() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario {s:?}; valid scenarios are low, medium, high"
                ))
            })
    }
}

/// Clipped-normal delay parameters for one asynchrony regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsynchronyScenario {
    pub name: ScenarioName,
    pub mu: f64,
    pub sigma: f64,
    pub max_delay: f64,
}

impl AsynchronyScenario {
    pub fn low() -> Self {
        Self { name: ScenarioName::Low, mu: 1.0, sigma: 0.5, max_delay: 3.0 }
    }

    pub fn medium() -> Self {
        Self { name: ScenarioName::Medium, mu: 3.0, sigma: 1.0, max_delay: 6.0 }
    }

    pub fn high() -> Self {
        Self { name: ScenarioName::High, mu: 5.0, sigma: 2.5, max_delay: 10.0 }
    }

    pub fn named(name: ScenarioName) -> Self {
        match name {
            ScenarioName::Low => Self::low(),
            ScenarioName::Medium => Self::medium(),
            ScenarioName::High => Self::high(),
        }
    }

    /// Zero values are allowed; a scenario with `max_delay = 0` delivers
    /// every update instantly, which the sequential-equivalence tests use.
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("mu", self.mu), ("sigma", self.sigma), ("max_delay", self.max_delay)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "scenario {field} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One delay draw: N(μ, σ²) clipped to [0, max_delay].
pub fn sample_delay(scenario: &AsynchronyScenario, rng: &mut ChaCha8Rng) -> f64 {
    let raw = scenario.mu + scenario.sigma * rng::standard_normal(rng);
    raw.clamp(0.0, scenario.max_delay)
}

/// Virtual seconds one round of local training takes: speed factor times
/// epochs times shard size.
pub fn training_cost(speed: f64, k: u32, shard_size: usize) -> f64 {
    speed * k as f64 * shard_size as f64
}

struct QueuedUpdate {
    update: ClientUpdate,
    seq: u64,
}

impl PartialEq for QueuedUpdate {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl Eq for QueuedUpdate {}

impl PartialOrd for QueuedUpdate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedUpdate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.update
            .deliver_at
            .total_cmp(&other.update.deliver_at)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Min-heap of in-flight updates ordered by (deliver_at, sequence number).
/// The sequence number makes simultaneous deliveries pop in push order.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<QueuedUpdate>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, update: ClientUpdate) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(QueuedUpdate { update, seq }));
        seq
    }

    pub fn pop(&mut self) -> Option<(u64, ClientUpdate)> {
        self.heap.pop().map(|Reverse(q)| (q.seq, q.update))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// What one aggregation did, for the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationEvent {
    /// Version after applying the update.
    pub version: u64,
    pub vtime: f64,
    pub client_id: usize,
    pub base_version: u64,
    /// Aggregations between snapshot and delivery.
    pub tau: u64,
    pub gamma: f64,
    pub eta: f64,
    pub delta: ParamVector,
}

/// Global model quality at one sampling tick.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub vtime: f64,
    pub version: u64,
    /// τ, γ, η of the latest aggregation at or before this tick; zeros
    /// before the first aggregation.
    pub tau: u64,
    pub gamma: f64,
    pub eta: f64,
    pub accuracy: f64,
    pub loss: f64,
}

/// Everything a run produced: every global model version, every
/// aggregation, and the periodic evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub snapshots: Vec<ModelSnapshot>,
    pub events: Vec<AggregationEvent>,
    pub evals: Vec<EvalPoint>,
}

impl RunTrace {
    /// Accuracy at the last sampling tick.
    pub fn final_accuracy(&self) -> f64 {
        self.evals.last().map_or(0.0, |e| e.accuracy)
    }

    /// Mean staleness over all aggregations; 0 for an empty run.
    pub fn mean_gamma(&self) -> f64 {
        if self.events.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for e in &self.events {
            acc += e.gamma;
        }
        acc / self.events.len() as f64
    }
}

/// The aggregating server: current model, full snapshot history, and each
/// client's most recent staleness.
pub struct Server {
    cfg: StalenessConfig,
    history: Vec<ModelSnapshot>,
    client_gamma: Vec<f64>,
}

impl Server {
    pub fn new(initial: ParamVector, cfg: StalenessConfig, n_clients: usize) -> Self {
        Self {
            cfg,
            history: vec![ModelSnapshot { version: 0, params: initial, vtime: 0.0 }],
            client_gamma: vec![0.0; n_clients],
        }
    }

    pub fn current(&self) -> &ModelSnapshot {
        self.history.last().expect("history always holds the initial model")
    }

    /// The stored snapshot for a version, or an error if retention did not
    /// cover it.
    pub fn snapshot_at(&self, version: u64) -> Result<&ModelSnapshot> {
        self.history.get(version as usize).ok_or_else(|| {
            Error::Simulation(format!(
                "snapshot history does not cover version {version} (current {})",
                self.current().version
            ))
        })
    }

    /// Staleness the server last measured for this client; 0 before its
    /// first delivery.
    pub fn last_gamma(&self, client_id: usize) -> f64 {
        self.client_gamma[client_id]
    }

    /// Applies one delivered update: measures staleness against the
    /// client's base snapshot, scales the update by the adaptive learning
    /// rate, and advances the version.
    pub fn on_update(&mut self, update: &ClientUpdate) -> Result<AggregationEvent> {
        let current = self.current();
        if update.base_version > current.version {
            return Err(Error::Simulation(format!(
                "update from client {} is based on future version {}",
                update.client_id, update.base_version
            )));
        }
        if update.deliver_at < current.vtime {
            return Err(Error::Simulation(format!(
                "update delivered at {} but virtual time is already {}",
                update.deliver_at, current.vtime
            )));
        }
        let base = self.snapshot_at(update.base_version)?;
        let gamma = staleness::compute_staleness(&self.cfg, self.current(), base, &update.delta)?;
        let eta = staleness::adaptive_lr(&self.cfg, gamma);
        let current = self.current();
        let params = current.params.add(&update.delta.scale(eta)?)?;
        let event = AggregationEvent {
            version: current.version + 1,
            vtime: update.deliver_at,
            client_id: update.client_id,
            base_version: update.base_version,
            tau: current.version - update.base_version,
            gamma,
            eta,
            delta: update.delta.clone(),
        };
        self.history.push(ModelSnapshot {
            version: event.version,
            params,
            vtime: update.deliver_at,
        });
        self.client_gamma[update.client_id] = gamma;
        Ok(event)
    }

    fn into_history(self) -> Vec<ModelSnapshot> {
        self.history
    }
}

/// Full configuration of a single simulated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ModelSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: Partition,
    pub scenario: AsynchronyScenario,
    pub staleness: StalenessConfig,
    /// Virtual seconds to simulate.
    pub budget: f64,
    /// Virtual seconds between evaluations.
    pub eval_interval: f64,
    pub batch_size: usize,
    pub local_lr: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.scenario.validate()?;
        self.staleness.validate()?;
        self.partition.validate(self.train.len())?;
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::Config(format!(
                "budget must be non-negative and finite, got {}",
                self.budget
            )));
        }
        if !(self.eval_interval > 0.0) || !self.eval_interval.is_finite() {
            return Err(Error::Config(format!(
                "eval interval must be positive and finite, got {}",
                self.eval_interval
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !self.local_lr.is_finite() || self.local_lr < 0.0 {
            return Err(Error::Config(format!(
                "local learning rate must be >= 0, got {}",
                self.local_lr
            )));
        }
        if self.train.width() != self.spec.d_in() {
            return Err(Error::Consistency(format!(
                "training data width {} does not match model input {}",
                self.train.width(),
                self.spec.d_in()
            )));
        }
        if self.test.width() != self.spec.d_in() {
            return Err(Error::Consistency(format!(
                "test data width {} does not match model input {}",
                self.test.width(),
                self.spec.d_in()
            )));
        }
        if self.train.n_classes() != self.spec.n_classes() {
            return Err(Error::Consistency(format!(
                "dataset has {} classes but the model outputs {}",
                self.train.n_classes(),
                self.spec.n_classes()
            )));
        }
        if self.test.n_classes() != self.train.n_classes() {
            return Err(Error::Consistency(format!(
                "test data has {} classes but training data has {}",
                self.test.n_classes(),
                self.train.n_classes()
            )));
        }
        Ok(())
    }
}

struct ClientState {
    shard: Batch,
    speed: f64,
    delay_rng: ChaCha8Rng,
    /// Rounds launched so far; keys the shuffle stream of the next round.
    rounds: u64,
}

/// Runs the event loop until virtual time exceeds the budget.
///
/// Each client loops: snapshot the global model, pick an epoch count from
/// its last staleness, train, then deliver after compute time plus a
/// sampled delay. Deliveries apply in (time, sequence) order, and the
/// client immediately starts its next round from the fresh global model.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let n_clients = cfg.partition.n_clients();

    let initial = model::init_params(&cfg.spec, cfg.seed)?;
    let mut server = Server::new(initial, cfg.staleness.clone(), n_clients);
    let mut queue = EventQueue::new();

    let mut clients = Vec::with_capacity(n_clients);
    for id in 0..n_clients {
        let mut speed_rng = rng::stream(cfg.seed, Domain::Speed, id as u64, 0);
        clients.push(ClientState {
            shard: cfg.train.gather(cfg.partition.client(id))?,
            speed: rng::uniform_in(&mut speed_rng, 0.8, 1.2),
            delay_rng: rng::stream(cfg.seed, Domain::Delay, id as u64, 0),
            rounds: 0,
        });
    }

    let launch = |server: &Server,
                  state: &mut ClientState,
                  id: usize,
                  now: f64,
                  queue: &mut EventQueue|
     -> Result<()> {
        let base = server.current();
        let k = staleness::adjust_local_epochs(&cfg.staleness.epoch_rule, server.last_gamma(id));
        let local_seed = rng::mix(cfg.seed, Domain::Shuffle, id as u64, state.rounds);
        let local = model::local_train(
            &cfg.spec,
            &base.params,
            &state.shard,
            k,
            cfg.batch_size,
            cfg.local_lr,
            local_seed,
        )?;
        let delta = local.sub(&base.params)?;
        let cost = training_cost(state.speed, k, state.shard.len());
        let delay = sample_delay(&cfg.scenario, &mut state.delay_rng);
        state.rounds += 1;
        queue.push(ClientUpdate {
            client_id: id,
            base_version: base.version,
            delta,
            local_epochs: k,
            deliver_at: now + cost + delay,
        });
        Ok(())
    };

    for id in 0..n_clients {
        launch(&server, &mut clients[id], id, 0.0, &mut queue)?;
    }

    let mut events: Vec<AggregationEvent> = Vec::new();
    let mut evals: Vec<EvalPoint> = Vec::new();
    let mut tick_index: u64 = 0;
    let mut next_tick = 0.0;
    let mut last_summary = (0u64, 0.0f64, 0.0f64);

    let test_batch = cfg.test.to_batch()?;
    let eval_at = |t: f64, server: &Server, last: (u64, f64, f64), evals: &mut Vec<EvalPoint>| -> Result<()> {
        let current = server.current();
        let (accuracy, loss) = model::evaluate(&cfg.spec, &current.params, &test_batch)?;
        evals.push(EvalPoint {
            vtime: t,
            version: current.version,
            tau: last.0,
            gamma: last.1,
            eta: last.2,
            accuracy,
            loss,
        });
        Ok(())
    };

    while let Some((_, update)) = queue.pop() {
        if update.deliver_at > cfg.budget {
            break;
        }
        // Ticks strictly before this delivery see the pre-update model; a
        // tick exactly at the delivery time sees the post-update model.
        while next_tick < update.deliver_at {
            eval_at(next_tick, &server, last_summary, &mut evals)?;
            tick_index += 1;
            next_tick = tick_index as f64 * cfg.eval_interval;
        }
        let event = server.on_update(&update)?;
        last_summary = (event.tau, event.gamma, event.eta);
        let id = event.client_id;
        events.push(event);
        launch(&server, &mut clients[id], id, update.deliver_at, &mut queue)?;
    }

    while next_tick <= cfg.budget {
        eval_at(next_tick, &server, last_summary, &mut evals)?;
        tick_index += 1;
        next_tick = tick_index as f64 * cfg.eval_interval;
    }

    Ok(RunTrace { snapshots: server.into_history(), events, evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::metrics::MetricKind;
    use crate::staleness::EpochRule;

    #[test]
    fn scenario_presets_match_the_table() {
        let low = AsynchronyScenario::low();
        assert_eq!((low.mu, low.sigma, low.max_delay), (1.0, 0.5, 3.0));
        let medium = AsynchronyScenario::medium();
        assert_eq!((medium.mu, medium.sigma, medium.max_delay), (3.0, 1.0, 6.0));
        let high = AsynchronyScenario::high();
        assert_eq!((high.mu, high.sigma, high.max_delay), (5.0, 2.5, 10.0));
    }

    #[test]
    fn scenario_tokens_round_trip() {
        for name in ScenarioName::ALL {
            assert_eq!(name.token().parse::<ScenarioName>().unwrap(), name);
        }
        assert!("extreme".parse::<ScenarioName>().is_err());
    }

    #[test]
    fn delays_are_clipped_to_the_scenario_range() {
        for scenario in [
            AsynchronyScenario::low(),
            AsynchronyScenario::medium(),
            AsynchronyScenario::high(),
        ] {
            let mut rng = rng::stream(1, Domain::Delay, 0, 0);
            let mut clipped_low = false;
            let mut clipped_high = false;
            for _ in 0..100_000 {
                let d = sample_delay(&scenario, &mut rng);
                assert!((0.0..=scenario.max_delay).contains(&d));
                clipped_low |= d == 0.0;
                clipped_high |= d == scenario.max_delay;
            }
            // both clip boundaries are two sigma from the mean for High,
            // so 1e5 draws hit them essentially surely
            if scenario.name == ScenarioName::High {
                assert!(clipped_low && clipped_high);
            }
        }
    }

    #[test]
    fn queue_pops_by_time_then_sequence() {
        let mk = |deliver_at: f64| ClientUpdate {
            client_id: 0,
            base_version: 0,
            delta: ParamVector::new(vec![1.0]).unwrap(),
            local_epochs: 1,
            deliver_at,
        };
        let mut q = EventQueue::new();
        let a = q.push(mk(5.0));
        let b = q.push(mk(3.0));
        let c = q.push(mk(5.0));
        assert_eq!(q.len(), 3);
        assert_eq!(q.pop().unwrap().0, b);
        assert_eq!(q.pop().unwrap().0, a);
        assert_eq!(q.pop().unwrap().0, c);
        assert!(q.is_empty());
    }

    #[test]
    fn training_cost_is_linear_in_epochs() {
        let one = training_cost(1.1, 1, 10);
        let two = training_cost(1.1, 2, 10);
        assert!(one > 0.0);
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    fn small_staleness(metric: MetricKind) -> StalenessConfig {
        let mut cfg = StalenessConfig::new(metric, 1.0, 0.5).unwrap();
        cfg.epoch_rule = EpochRule::Fixed(1);
        cfg
    }

    #[test]
    fn fresh_update_gets_maximal_trust() {
        let cfg = small_staleness(MetricKind::Euclidean);
        let mut server = Server::new(ParamVector::zeros(2).unwrap(), cfg.clone(), 1);
        let update = ClientUpdate {
            client_id: 0,
            base_version: 0,
            delta: ParamVector::new(vec![1.0, -1.0]).unwrap(),
            local_epochs: 1,
            deliver_at: 2.0,
        };
        let event = server.on_update(&update).unwrap();
        assert_eq!(event.version, 1);
        assert_eq!(event.tau, 0);
        assert!(event.gamma <= 1e-12);
        let eta = cfg.lambda / cfg.epsilon;
        assert!((event.eta - eta).abs() < 1e-12);
        assert_eq!(server.current().params.values(), &[eta * 1.0, eta * -1.0]);
        assert_eq!(server.last_gamma(0), event.gamma);
    }

    #[test]
    fn stale_update_measures_against_its_base() {
        let cfg = small_staleness(MetricKind::Euclidean);
        let mut server = Server::new(ParamVector::zeros(1).unwrap(), cfg, 2);
        let fresh = ClientUpdate {
            client_id: 0,
            base_version: 0,
            delta: ParamVector::new(vec![1.0]).unwrap(),
            local_epochs: 1,
            deliver_at: 1.0,
        };
        server.on_update(&fresh).unwrap();
        let drift = server.current().params.values()[0];

        let stale = ClientUpdate {
            client_id: 1,
            base_version: 0,
            delta: ParamVector::new(vec![2.0]).unwrap(),
            local_epochs: 1,
            deliver_at: 1.5,
        };
        let event = server.on_update(&stale).unwrap();
        assert_eq!(event.tau, 1);
        assert!((event.gamma - drift / 2.0).abs() < 1e-12);
    }

    #[test]
    fn server_rejects_future_bases_and_time_travel() {
        let cfg = small_staleness(MetricKind::Euclidean);
        let mut server = Server::new(ParamVector::zeros(1).unwrap(), cfg, 1);
        let from_future = ClientUpdate {
            client_id: 0,
            base_version: 3,
            delta: ParamVector::new(vec![1.0]).unwrap(),
            local_epochs: 1,
            deliver_at: 1.0,
        };
        assert!(server.on_update(&from_future).is_err());

        let ok = ClientUpdate { base_version: 0, ..from_future.clone() };
        server.on_update(&ok).unwrap();
        let backwards = ClientUpdate { deliver_at: 0.5, ..ok };
        assert!(server.on_update(&backwards).is_err());
    }

    fn tiny_run_config(metric: MetricKind, seed: u64) -> RunConfig {
        let train = data::synth_blobs(10, 4, 2, 0.8, seed).unwrap();
        let test = data::synth_blobs(5, 4, 2, 0.8, seed + 1000).unwrap();
        let partition = data::dirichlet_partition(train.labels(), 3, 0.5, seed, 2).unwrap();
        RunConfig {
            spec: ModelSpec::Logistic { d_in: 4, n_classes: 2 },
            train,
            test,
            partition,
            scenario: AsynchronyScenario::low(),
            staleness: small_staleness(metric),
            budget: 60.0,
            eval_interval: 5.0,
            batch_size: 4,
            local_lr: 0.05,
            seed,
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = tiny_run_config(MetricKind::Euclidean, 3);
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.events.is_empty());

        let c = run_simulation(&tiny_run_config(MetricKind::Euclidean, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_budget_runs_contain_only_the_initial_model() {
        let mut cfg = tiny_run_config(MetricKind::Euclidean, 5);
        cfg.budget = 0.0;
        let trace = run_simulation(&cfg).unwrap();
        assert_eq!(trace.snapshots.len(), 1);
        assert_eq!(trace.snapshots[0].version, 0);
        assert!(trace.events.is_empty());
        assert_eq!(trace.evals.len(), 1);
        assert_eq!(trace.evals[0].vtime, 0.0);
    }

    #[test]
    fn trace_invariants_hold() {
        let trace = run_simulation(&tiny_run_config(MetricKind::Euclidean, 7)).unwrap();

        // versions advance one by one, virtual time never runs backwards
        for (i, snap) in trace.snapshots.iter().enumerate() {
            assert_eq!(snap.version, i as u64);
        }
        for pair in trace.snapshots.windows(2) {
            assert!(pair[0].vtime <= pair[1].vtime);
        }
        for (i, event) in trace.events.iter().enumerate() {
            assert_eq!(event.version, i as u64 + 1);
            assert!(event.gamma >= 0.0);
            assert!(event.eta > 0.0);
            if event.tau == 0 {
                assert!(event.gamma <= 1e-12);
            }
        }

        // evaluations cover 0, 5, ..., 60
        assert_eq!(trace.evals.len(), 13);
        assert_eq!(trace.evals[0].vtime, 0.0);
        assert_eq!(trace.evals.last().unwrap().vtime, 60.0);
        for pair in trace.evals.windows(2) {
            assert!(pair[0].version <= pair[1].version);
        }
    }

    #[test]
    fn single_client_sees_no_staleness() {
        let train = data::synth_blobs(10, 4, 2, 0.8, 11).unwrap();
        let test = data::synth_blobs(5, 4, 2, 0.8, 12).unwrap();
        let partition = data::dirichlet_partition(train.labels(), 1, 0.5, 11, 2).unwrap();
        let cfg = RunConfig {
            spec: ModelSpec::Logistic { d_in: 4, n_classes: 2 },
            train,
            test,
            partition,
            scenario: AsynchronyScenario::high(),
            staleness: small_staleness(MetricKind::Euclidean),
            budget: 200.0,
            eval_interval: 10.0,
            batch_size: 4,
            local_lr: 0.05,
            seed: 11,
        };
        let trace = run_simulation(&cfg).unwrap();
        assert!(!trace.events.is_empty());
        for event in &trace.events {
            assert_eq!(event.tau, 0);
            assert!(event.gamma <= 1e-12);
        }
    }

    #[test]
    fn invalid_configs_fail_before_any_event() {
        let mut cfg = tiny_run_config(MetricKind::Euclidean, 1);
        cfg.eval_interval = 0.0;
        assert!(run_simulation(&cfg).is_err());

        let mut cfg = tiny_run_config(MetricKind::Euclidean, 1);
        cfg.budget = f64::NAN;
        assert!(run_simulation(&cfg).is_err());

        let mut cfg = tiny_run_config(MetricKind::Euclidean, 1);
        cfg.staleness.lambda = -1.0;
        assert!(run_simulation(&cfg).is_err());

        let mut cfg = tiny_run_config(MetricKind::Euclidean, 1);
        cfg.spec = ModelSpec::Logistic { d_in: 9, n_classes: 2 };
        assert!(run_simulation(&cfg).is_err());
    }
}
