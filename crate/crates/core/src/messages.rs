//! Quadratic-form messages and their update rules.
//!
//! Every message on an edge between a variable `X` and a function node is the
//! map `X ↦ tr(XᴴQX)` for one Hermitian PSD matrix `Q`, so the store only
//! keeps the matrices. Terms proportional to the identity add a constant to
//! such a message and never move any minimizer; they are left out of every
//! rule here.
//!
//! Function nodes are handled symmetrically through a coupling matrix `A`:
//! the interference term between a function node's own variable `O` and one
//! of its cross variables `X` is always `‖Oᴴ A X‖²_F`, with `A = H_ik` for
//! `f_i` (own `U_i`, cross `V_k`) and `A = H_kjᴴ` for `g_j` (own `V_j`,
//! cross `U_k`).

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{ChannelSet, FactorGraph, NodeId, NodeKind};
use crate::linalg::{
    nu_min, projected_covariance, random_truncated_unitary, CMat, HermitianPsd, TruncatedUnitary,
};

/// One directed message `Q_{from→to}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMessage {
    pub from: NodeId,
    pub to: NodeId,
    pub q: HermitianPsd,
}

/// Current value of every directed message in the graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageStore {
    map: BTreeMap<(NodeId, NodeId), HermitianPsd>,
}

impl MessageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Result<&HermitianPsd> {
        self.map
            .get(&(from, to))
            .ok_or(Error::MissingMessage(from, to))
    }

    pub fn insert(&mut self, msg: PsdMessage) {
        self.map.insert((msg.from, msg.to), msg.q);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId, &HermitianPsd)> {
        self.map.iter().map(|(&(a, b), q)| (a, b, q))
    }

    /// True when the store holds exactly the two directions of every edge
    /// of `graph`, each with the edge's message dimension.
    pub fn covers(&self, graph: &FactorGraph) -> bool {
        let edges = graph.edges();
        self.map.len() == 2 * edges.len()
            && edges.iter().all(|&(var, func)| {
                let dim = graph.message_dim(var).unwrap_or(0);
                [(var, func), (func, var)]
                    .iter()
                    .all(|key| self.map.get(key).is_some_and(|q| q.dim() == dim))
            })
    }
}

/// Stopping rule and initialization of the alternating minimization that
/// produces function-to-cross-variable messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoopConfig {
    pub max_inner_iters: usize,
    /// Stop once the objective decreases by less than this (absolute).
    pub inner_tol: f64,
    /// Start from the current belief of the function node's own variable
    /// instead of a Haar-random point.
    pub warm_start: bool,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        InnerLoopConfig {
            max_inner_iters: 50,
            inner_tol: 1e-10,
            warm_start: true,
        }
    }
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_inner_iters == 0 {
            return Err(Error::Config("max_inner_iters must be at least 1".into()));
        }
        if self.inner_tol.is_nan() || self.inner_tol < 0.0 {
            return Err(Error::Config("inner_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Objective value after each full alternating step of one inner loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerTrace {
    pub objective: Vec<f64>,
}

impl InnerTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    /// Largest step-to-step increase (0 when the sequence never goes up).
    pub fn max_increase(&self) -> f64 {
        self.objective
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// The three shapes of update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// Sum of the other incoming messages at a variable.
    VariableToFunction,
    /// `f_i → U_i` or `g_j → V_j`.
    FunctionToOwnVariable,
    /// `f_i → V_j` or `g_j → U_i`, via the inner alternating loop.
    FunctionToCrossVariable,
}

pub fn update_rule(from: NodeId, to: NodeId) -> UpdateRule {
    if from.is_variable() {
        UpdateRule::VariableToFunction
    } else if own_variable(from) == Some(to) {
        UpdateRule::FunctionToOwnVariable
    } else {
        UpdateRule::FunctionToCrossVariable
    }
}

/// `U_i` for `f_i`, `V_j` for `g_j`.
pub fn own_variable(func: NodeId) -> Option<NodeId> {
    match func.kind {
        NodeKind::F => Some(NodeId::u(func.index)),
        NodeKind::G => Some(NodeId::v(func.index)),
        _ => None,
    }
}

/// Coupling `A` such that the leakage term between `func`'s own variable `O`
/// and the cross variable `cross` is `‖Oᴴ A X‖²`.
fn coupling(channels: &ChannelSet, func: NodeId, cross: NodeId) -> Result<CMat> {
    match (func.kind, cross.kind) {
        (NodeKind::F, NodeKind::V) => Ok(channels.h(func.index, cross.index).clone()),
        (NodeKind::G, NodeKind::U) => Ok(channels.h(cross.index, func.index).adjoint()),
        _ => Err(Error::UnknownEdge(func, cross)),
    }
}

fn require_edge(graph: &FactorGraph, a: NodeId, b: NodeId) -> Result<()> {
    if graph.has_edge(a, b) {
        Ok(())
    } else {
        Err(Error::UnknownEdge(a, b))
    }
}

/// `Q_{var→func} = Σ_{a ∈ N(var) \ func} Q_{a→var}`.
pub fn var_to_fn_message(
    store: &MessageStore,
    graph: &FactorGraph,
    var: NodeId,
    func: NodeId,
) -> Result<PsdMessage> {
    if !var.is_variable() {
        return Err(Error::UnknownEdge(var, func));
    }
    require_edge(graph, var, func)?;
    let mut q = HermitianPsd::zeros(graph.message_dim(var)?);
    for &a in graph.neighbors(var)? {
        if a != func {
            q.add_assign(store.get(a, var)?);
        }
    }
    Ok(PsdMessage {
        from: var,
        to: func,
        q,
    })
}

/// `Q_{f_i→U_i} = Σ_j H_ij V_j⁰ V_j⁰ᴴ H_ijᴴ` with `V_j⁰ = ν_min(Q_{V_j→f_i})`,
/// and symmetrically `Q_{g_j→V_j}`. Cross variables are visited in
/// ascending index order, which fixes the random-stream consumption when
/// some `ν_min` argument is zero.
pub fn fn_to_own_var_message<R: Rng + ?Sized>(
    store: &MessageStore,
    graph: &FactorGraph,
    channels: &ChannelSet,
    func: NodeId,
    rng: &mut R,
) -> Result<PsdMessage> {
    let own = own_variable(func).ok_or(Error::UnknownNode(func))?;
    require_edge(graph, func, own)?;
    let d = graph.streams();
    let dim = graph.message_dim(own)?;
    let mut acc = CMat::zeros(dim, dim);
    for &cross in graph.neighbors(func)? {
        if cross == own {
            continue;
        }
        let x0 = nu_min(store.get(cross, func)?, d, rng)?;
        acc += projected_covariance(&coupling(channels, func, cross)?, x0.as_matrix());
    }
    Ok(PsdMessage {
        from: func,
        to: own,
        q: HermitianPsd::from_hermitian_part(&acc),
    })
}

/// `Q_{f_i→V_j} = H_ijᴴ U_i* U_i*ᴴ H_ij` (and symmetrically `Q_{g_j→U_i}`),
/// where `U_i*` is the end point of the alternating minimization
///
/// ```text
/// V_k ← ν_min(Q_{V_k→f_i} + ½ H_ikᴴ U_i U_iᴴ H_ik)      for every k ≠ i, j
/// U_i ← ν_min(Q_{U_i→f_i} + ½ Σ_k H_ik V_k V_kᴴ H_ikᴴ)
/// ```
///
/// Each half step is the exact block minimizer of
/// `tr(U_iᴴ Q_U U_i) + Σ_k tr(V_kᴴ Q_k V_k) + ½ Σ_k ‖U_iᴴ H_ik V_k‖²`, so this
/// objective, recorded in the returned trace, never increases.
#[allow(clippy::too_many_arguments)]
pub fn fn_to_other_var_message<R: Rng + ?Sized>(
    store: &MessageStore,
    graph: &FactorGraph,
    channels: &ChannelSet,
    func: NodeId,
    target: NodeId,
    cfg: &InnerLoopConfig,
    warm_start: Option<&TruncatedUnitary>,
    rng: &mut R,
) -> Result<(PsdMessage, InnerTrace)> {
    cfg.validate()?;
    let own = own_variable(func).ok_or(Error::UnknownNode(func))?;
    if target == own {
        return Err(Error::UnknownEdge(func, target));
    }
    require_edge(graph, func, target)?;
    let d = graph.streams();
    let own_dim = graph.message_dim(own)?;

    let q_own = store.get(own, func)?;
    let others = graph
        .neighbors(func)?
        .iter()
        .filter(|&&c| c != own && c != target)
        .map(|&c| Ok((store.get(c, func)?, coupling(channels, func, c)?)))
        .collect::<Result<Vec<(&HermitianPsd, CMat)>>>()?;

    let mut own_point = match warm_start {
        Some(w) if cfg.warm_start => {
            if w.ambient_dim() != own_dim || w.subspace_dim() != d {
                return Err(Error::Dimension(format!(
                    "warm start is {}x{}, expected {own_dim}x{d}",
                    w.ambient_dim(),
                    w.subspace_dim()
                )));
            }
            w.clone()
        }
        _ => random_truncated_unitary(own_dim, d, rng)?,
    };

    let mut trace = InnerTrace::default();
    let mut cross_points: Vec<TruncatedUnitary> = Vec::with_capacity(others.len());
    for _ in 0..cfg.max_inner_iters {
        cross_points.clear();
        for (q_c, a) in &others {
            let s = q_c.add_matrix(
                &(projected_covariance(&a.adjoint(), own_point.as_matrix()).scale(0.5)),
            );
            cross_points.push(nu_min(&s, d, rng)?);
        }
        let mut interference = CMat::zeros(own_dim, own_dim);
        for ((_, a), x) in others.iter().zip(&cross_points) {
            interference += projected_covariance(a, x.as_matrix());
        }
        own_point = nu_min(&q_own.add_matrix(&interference.scale(0.5)), d, rng)?;

        let mut objective = q_own.quadratic_form(own_point.as_matrix());
        for ((q_c, a), x) in others.iter().zip(&cross_points) {
            objective += q_c.quadratic_form(x.as_matrix());
            objective += 0.5 * (own_point.as_matrix().adjoint() * a * x.as_matrix()).norm_squared();
        }
        let previous = trace.objective.last().copied();
        trace.objective.push(objective);

        if others.is_empty() {
            break;
        }
        if let Some(prev) = previous {
            if prev - objective < cfg.inner_tol {
                break;
            }
        }
    }

    let a_target = coupling(channels, func, target)?;
    let q = HermitianPsd::from_hermitian_part(&projected_covariance(
        &a_target.adjoint(),
        own_point.as_matrix(),
    ));
    Ok((
        PsdMessage {
            from: func,
            to: target,
            q,
        },
        trace,
    ))
}

/// Sum of all messages arriving at `var`.
pub fn belief_matrix(
    store: &MessageStore,
    graph: &FactorGraph,
    var: NodeId,
) -> Result<HermitianPsd> {
    if !var.is_variable() {
        return Err(Error::UnknownNode(var));
    }
    let mut q = HermitianPsd::zeros(graph.message_dim(var)?);
    for &a in graph.neighbors(var)? {
        q.add_assign(store.get(a, var)?);
    }
    Ok(q)
}

/// Minimizer over the Stiefel manifold of the summed incoming messages.
pub fn extract_belief<R: Rng + ?Sized>(
    store: &MessageStore,
    graph: &FactorGraph,
    var: NodeId,
    rng: &mut R,
) -> Result<TruncatedUnitary> {
    nu_min(&belief_matrix(store, graph, var)?, graph.streams(), rng)
}
