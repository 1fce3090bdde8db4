//! Message schedules and the outer message-passing loop.
//!
//! One outer iteration sends every message family of the schedule in order.
//! Updates are sequential: each message reads the live store, so a family
//! sees everything sent earlier in the same iteration. After each iteration
//! the beliefs of all variables are extracted and the total leakage of those
//! beliefs is recorded.

use std::fmt;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{build_graph, ChannelSet, FactorGraph, NodeId};
use crate::linalg::{
    random_gaussian_matrix, seeded_stream, HermitianPsd, SimRng, TruncatedUnitary, PSD_TOL,
};
use crate::messages::{
    extract_belief, fn_to_other_var_message, fn_to_own_var_message, update_rule, var_to_fn_message,
    InnerLoopConfig, MessageStore, PsdMessage, UpdateRule,
};
use crate::metrics::{check_feasibility, total_leakage};

/// Stream id (under the run seed) feeding initialization and every message
/// computation.
pub const MESSAGE_STREAM: u64 = 0;
/// Stream id feeding belief extraction, kept apart so diagnostics never
/// shift the message stream.
pub const BELIEF_STREAM: u64 = 1;

/// A directed message family. Within a family, sends are ordered by
/// destination index, then source index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageFamily {
    /// `g_j → V_j`
    GToV,
    /// `f_i → V_j`, `i ≠ j`
    FToV,
    /// `V_j → f_i`, `i ≠ j`
    VToF,
    /// `V_j → g_j`
    VToG,
    /// `f_i → U_i`
    FToU,
    /// `g_j → U_i`, `i ≠ j`
    GToU,
    /// `U_i → g_j`, `i ≠ j`
    UToG,
    /// `U_i → f_i`
    UToF,
}

impl MessageFamily {
    pub const ALL: [MessageFamily; 8] = [
        MessageFamily::GToV,
        MessageFamily::FToV,
        MessageFamily::VToF,
        MessageFamily::VToG,
        MessageFamily::FToU,
        MessageFamily::GToU,
        MessageFamily::UToG,
        MessageFamily::UToF,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MessageFamily::GToV => "g->V",
            MessageFamily::FToV => "f->V",
            MessageFamily::VToF => "V->f",
            MessageFamily::VToG => "V->g",
            MessageFamily::FToU => "f->U",
            MessageFamily::GToU => "g->U",
            MessageFamily::UToG => "U->g",
            MessageFamily::UToF => "U->f",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        MessageFamily::ALL.into_iter().find(|f| f.label() == label)
    }

    /// Families that connect a transmitter-side node to a receiver-side node.
    pub fn is_cross(self) -> bool {
        matches!(
            self,
            MessageFamily::FToV | MessageFamily::VToF | MessageFamily::GToU | MessageFamily::UToG
        )
    }

    pub fn sends(self, graph: &FactorGraph) -> Vec<(NodeId, NodeId)> {
        let k = graph.users();
        let mut out = Vec::new();
        let mut push = |from: NodeId, to: NodeId| {
            if graph.has_edge(from, to) {
                out.push((from, to));
            }
        };
        for dst in 0..k {
            for src in 0..k {
                match self {
                    MessageFamily::GToV if src == dst => push(NodeId::g(dst), NodeId::v(dst)),
                    MessageFamily::VToG if src == dst => push(NodeId::v(dst), NodeId::g(dst)),
                    MessageFamily::FToU if src == dst => push(NodeId::f(dst), NodeId::u(dst)),
                    MessageFamily::UToF if src == dst => push(NodeId::u(dst), NodeId::f(dst)),
                    MessageFamily::FToV if src != dst => push(NodeId::f(src), NodeId::v(dst)),
                    MessageFamily::VToF if src != dst => push(NodeId::v(src), NodeId::f(dst)),
                    MessageFamily::GToU if src != dst => push(NodeId::g(src), NodeId::u(dst)),
                    MessageFamily::UToG if src != dst => push(NodeId::u(src), NodeId::g(dst)),
                    _ => {}
                }
            }
        }
        out
    }
}

impl fmt::Display for MessageFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Ordered list of message families making up one outer iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    families: Vec<MessageFamily>,
}

impl Schedule {
    /// All eight families: g→V, f→V, V→f, V→g, f→U, g→U, U→g, U→f.
    pub fn regular() -> Self {
        Schedule {
            families: MessageFamily::ALL.to_vec(),
        }
    }

    /// g→V, V→f, f→U, U→g. Started from all-zero messages this reproduces
    /// iterative leakage minimization; the other four families are never sent.
    pub fn ilm() -> Self {
        Schedule {
            families: vec![
                MessageFamily::GToV,
                MessageFamily::VToF,
                MessageFamily::FToU,
                MessageFamily::UToG,
            ],
        }
    }

    pub fn custom(families: Vec<MessageFamily>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::Config(
                "a schedule needs at least one message family".into(),
            ));
        }
        Ok(Schedule { families })
    }

    /// One family label per line (`g->V`, `f->V`, ...); `#` starts a comment.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut families = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let family = MessageFamily::from_label(line).ok_or_else(|| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                msg: format!("unknown message family {line:?}"),
            })?;
            families.push(family);
        }
        Schedule::custom(families)
    }

    pub fn families(&self) -> &[MessageFamily] {
        &self.families
    }

    pub fn is_ilm(&self) -> bool {
        *self == Schedule::ilm()
    }

    /// Every directed send of one outer iteration, in execution order.
    pub fn sends(&self, graph: &FactorGraph) -> Vec<(NodeId, NodeId)> {
        self.families.iter().flat_map(|f| f.sends(graph)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Every message starts at the zero matrix.
    Zero,
    /// Every message starts at `A Aᴴ` for a Gaussian `n × d` draw `A`.
    Random,
}

impl InitMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(InitMode::Zero),
            "random" => Some(InitMode::Random),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InitMode::Zero => "zero",
            InitMode::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub max_outer_iters: usize,
    /// Stop once total leakage of the beliefs is at or below this.
    pub leakage_tol: f64,
    pub init_mode: InitMode,
    pub inner: InnerLoopConfig,
    pub seed: u64,
    /// Collect per-message invariant statistics into [`IterationState::audit`].
    pub audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_outer_iters: 1000,
            leakage_tol: 1e-10,
            init_mode: InitMode::Random,
            inner: InnerLoopConfig::default(),
            seed: 0,
            audit: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be at least 1".into()));
        }
        if self.leakage_tol.is_nan() || self.leakage_tol < 0.0 {
            return Err(Error::Config("leakage_tol must be non-negative".into()));
        }
        self.inner.validate()
    }
}

/// Invariant statistics over every message produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageAudit {
    pub messages: usize,
    pub inner_loops: usize,
    /// Largest increase of the inner objective between consecutive steps.
    pub max_inner_increase: f64,
    /// Largest `‖Q − Qᴴ‖_F / max(1, ‖Q‖_F)`.
    pub max_asymmetry: f64,
    /// Smallest eigenvalue relative to `max(1, λ_max)`.
    pub min_relative_eigenvalue: f64,
    /// Largest numerical rank (eigenvalues above 1e−9·‖Q‖_F) among
    /// function-to-cross-variable messages.
    pub max_cross_rank: usize,
    /// Same for function-to-own-variable messages.
    pub max_own_rank: usize,
}

impl Default for MessageAudit {
    fn default() -> Self {
        MessageAudit {
            messages: 0,
            inner_loops: 0,
            max_inner_increase: 0.0,
            max_asymmetry: 0.0,
            min_relative_eigenvalue: f64::INFINITY,
            max_cross_rank: 0,
            max_own_rank: 0,
        }
    }
}

impl MessageAudit {
    pub const RANK_TOL: f64 = 1e-9;

    pub fn merge(&mut self, other: &MessageAudit) {
        self.messages += other.messages;
        self.inner_loops += other.inner_loops;
        self.max_inner_increase = self.max_inner_increase.max(other.max_inner_increase);
        self.max_asymmetry = self.max_asymmetry.max(other.max_asymmetry);
        self.min_relative_eigenvalue = self
            .min_relative_eigenvalue
            .min(other.min_relative_eigenvalue);
        self.max_cross_rank = self.max_cross_rank.max(other.max_cross_rank);
        self.max_own_rank = self.max_own_rank.max(other.max_own_rank);
    }

    fn record(&mut self, rule: UpdateRule, q: &HermitianPsd) {
        self.messages += 1;
        let m = q.as_matrix();
        self.max_asymmetry = self
            .max_asymmetry
            .max((m - m.adjoint()).norm() / q.frobenius_norm().max(1.0));
        self.min_relative_eigenvalue = self
            .min_relative_eigenvalue
            .min(q.min_relative_eigenvalue());
        match rule {
            UpdateRule::FunctionToCrossVariable => {
                self.max_cross_rank = self.max_cross_rank.max(q.numerical_rank(Self::RANK_TOL))
            }
            UpdateRule::FunctionToOwnVariable => {
                self.max_own_rank = self.max_own_rank.max(q.numerical_rank(Self::RANK_TOL))
            }
            UpdateRule::VariableToFunction => {}
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationState {
    pub store: MessageStore,
    /// Belief of each `U_i` after the last iteration (empty before the first).
    pub filters: Vec<TruncatedUnitary>,
    /// Belief of each `V_j` after the last iteration (empty before the first).
    pub precoders: Vec<TruncatedUnitary>,
    /// Total leakage of the beliefs, one entry per completed iteration.
    pub leakage_history: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Messages whose smallest eigenvalue fell below −1e−9 relative.
    pub psd_warnings: usize,
    pub audit: Option<MessageAudit>,
}

/// Initial message store: one entry per direction of every graph edge.
pub fn initialize<R: Rng + ?Sized>(
    graph: &FactorGraph,
    mode: InitMode,
    rng: &mut R,
) -> Result<MessageStore> {
    let d = graph.streams();
    let mut store = MessageStore::new();
    for (var, func) in graph.edges() {
        let n = graph.message_dim(var)?;
        for (from, to) in [(var, func), (func, var)] {
            let q = match mode {
                InitMode::Zero => HermitianPsd::zeros(n),
                InitMode::Random => HermitianPsd::gram(&random_gaussian_matrix(n, d, rng)?),
            };
            store.insert(PsdMessage { from, to, q });
        }
    }
    Ok(store)
}

/// Stepwise driver for one message-passing run.
pub struct MessagePassing<'a> {
    channels: &'a ChannelSet,
    graph: FactorGraph,
    sends: Vec<(NodeId, NodeId)>,
    cfg: RunConfig,
    message_rng: SimRng,
    belief_rng: SimRng,
    state: IterationState,
}

impl<'a> MessagePassing<'a> {
    pub fn new(channels: &'a ChannelSet, schedule: &Schedule, cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (k, n, m, d) = (
            channels.users(),
            channels.rx_antennas(),
            channels.tx_antennas(),
            channels.streams(),
        );
        if !check_feasibility(k, n, m, d) {
            warn!("(K, N, M, d) = ({k}, {n}, {m}, {d}) fails M + N >= d(K + 1); alignment may be infeasible");
        }
        if schedule.is_ilm() && cfg.init_mode != InitMode::Zero {
            warn!("ILM schedule started from non-zero messages does not reproduce leakage minimization");
        }
        let graph = build_graph(channels);
        let sends = schedule.sends(&graph);
        let mut message_rng = seeded_stream(cfg.seed, MESSAGE_STREAM);
        let store = initialize(&graph, cfg.init_mode, &mut message_rng)?;
        let state = IterationState {
            store,
            filters: Vec::new(),
            precoders: Vec::new(),
            leakage_history: Vec::new(),
            iterations_run: 0,
            converged: false,
            psd_warnings: 0,
            audit: cfg.audit.then(MessageAudit::default),
        };
        Ok(MessagePassing {
            channels,
            graph,
            sends,
            cfg,
            message_rng,
            belief_rng: seeded_stream(cfg.seed, BELIEF_STREAM),
            state,
        })
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn state(&self) -> &IterationState {
        &self.state
    }

    pub fn into_state(self) -> IterationState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.converged || self.state.iterations_run >= self.cfg.max_outer_iters
    }

    fn compute(&mut self, from: NodeId, to: NodeId) -> Result<(PsdMessage, UpdateRule)> {
        let rule = update_rule(from, to);
        let store = &self.state.store;
        let msg = match rule {
            UpdateRule::VariableToFunction => var_to_fn_message(store, &self.graph, from, to)?,
            UpdateRule::FunctionToOwnVariable => fn_to_own_var_message(
                store,
                &self.graph,
                self.channels,
                from,
                &mut self.message_rng,
            )?,
            UpdateRule::FunctionToCrossVariable => {
                let own = crate::messages::own_variable(from).ok_or(Error::UnknownNode(from))?;
                let beliefs = if own.kind == crate::graph::NodeKind::U {
                    &self.state.filters
                } else {
                    &self.state.precoders
                };
                let warm = beliefs.get(own.index);
                let (msg, trace) = fn_to_other_var_message(
                    store,
                    &self.graph,
                    self.channels,
                    from,
                    to,
                    &self.cfg.inner,
                    warm,
                    &mut self.message_rng,
                )?;
                if let Some(audit) = self.state.audit.as_mut() {
                    audit.inner_loops += 1;
                    audit.max_inner_increase = audit.max_inner_increase.max(trace.max_increase());
                }
                msg
            }
        };
        Ok((msg, rule))
    }

    /// Runs one outer iteration and returns the leakage of the new beliefs.
    pub fn step(&mut self) -> Result<f64> {
        for idx in 0..self.sends.len() {
            let (from, to) = self.sends[idx];
            let (msg, rule) = self.compute(from, to)?;
            let rel = msg.q.min_relative_eigenvalue();
            if rel < -PSD_TOL {
                self.state.psd_warnings += 1;
                warn!("message {from} -> {to} has relative eigenvalue {rel:e}");
            }
            if let Some(audit) = self.state.audit.as_mut() {
                audit.record(rule, &msg.q);
            }
            self.state.store.insert(msg);
        }

        let k = self.graph.users();
        let filters = (0..k)
            .map(|i| {
                extract_belief(
                    &self.state.store,
                    &self.graph,
                    NodeId::u(i),
                    &mut self.belief_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let precoders = (0..k)
            .map(|j| {
                extract_belief(
                    &self.state.store,
                    &self.graph,
                    NodeId::v(j),
                    &mut self.belief_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let leak = total_leakage(self.channels, &filters, &precoders)?;

        self.state.filters = filters;
        self.state.precoders = precoders;
        self.state.leakage_history.push(leak);
        self.state.iterations_run += 1;
        self.state.converged = leak <= self.cfg.leakage_tol;
        Ok(leak)
    }
}

/// Runs `schedule` until the belief leakage reaches `cfg.leakage_tol` or
/// `cfg.max_outer_iters` iterations have been executed.
pub fn run(channels: &ChannelSet, schedule: &Schedule, cfg: RunConfig) -> Result<IterationState> {
    let mut mp = MessagePassing::new(channels, schedule, cfg)?;
    while !mp.is_done() {
        mp.step()?;
    }
    Ok(mp.into_state())
}
