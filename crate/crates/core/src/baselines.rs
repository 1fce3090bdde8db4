//! Iterative leakage minimization (ILM), the alternating baseline.
//!
//! ```text
//! U_i ← ν_min(Σ_{j≠i} H_ij V_j V_jᴴ H_ijᴴ)
//! V_j ← ν_min(Σ_{i≠j} H_ijᴴ U_i U_iᴴ H_ij)
//! ```
//!
//! The starting precoders are drawn the way message passing on the ILM
//! schedule draws them from all-zero messages: for every transmitter `j`
//! (ascending) and every receiver `i ≠ j` it interferes with (ascending), a
//! Haar `N × d` point `W_ij` is drawn and `V_j⁰ = ν_min(Σ_i H_ijᴴ W_ij W_ijᴴ H_ij)`.
//! Given the same random stream the two algorithms then walk through the
//! same iterates.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::ChannelSet;
use crate::linalg::{
    nu_min, projected_covariance, random_truncated_unitary, CMat, HermitianPsd, TruncatedUnitary,
};
use crate::metrics::total_leakage;

/// Stepwise ILM driver.
#[derive(Debug, Clone)]
pub struct IterativeLeakageMin<'a> {
    channels: &'a ChannelSet,
    filters: Vec<TruncatedUnitary>,
    precoders: Vec<TruncatedUnitary>,
    iterations_run: usize,
}

impl<'a> IterativeLeakageMin<'a> {
    /// Draws the starting precoders from `rng`.
    pub fn new<R: Rng + ?Sized>(channels: &'a ChannelSet, rng: &mut R) -> Result<Self> {
        let k = channels.users();
        let (n, m, d) = (
            channels.rx_antennas(),
            channels.tx_antennas(),
            channels.streams(),
        );
        let mut precoders = Vec::with_capacity(k);
        for j in 0..k {
            let interfered: Vec<usize> = (0..k)
                .filter(|&i| i != j && channels.mask().is_connected(i, j))
                .collect();
            if interfered.is_empty() {
                precoders.push(TruncatedUnitary::canonical(m, d)?);
                continue;
            }
            let mut acc = CMat::zeros(m, m);
            for i in interfered {
                let w = random_truncated_unitary(n, d, rng)?;
                acc += projected_covariance(&channels.h(i, j).adjoint(), w.as_matrix());
            }
            precoders.push(nu_min(&HermitianPsd::from_hermitian_part(&acc), d, rng)?);
        }
        let filters = (0..k)
            .map(|_| TruncatedUnitary::canonical(n, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(IterativeLeakageMin {
            channels,
            filters,
            precoders,
            iterations_run: 0,
        })
    }

    pub fn filters(&self) -> &[TruncatedUnitary] {
        &self.filters
    }

    pub fn precoders(&self) -> &[TruncatedUnitary] {
        &self.precoders
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    /// Receiver half step. Returns the leakage with the new filters and the
    /// precoders they were computed from.
    pub fn update_filters<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let ch = self.channels;
        let (k, n, d) = (ch.users(), ch.rx_antennas(), ch.streams());
        let mut filters = Vec::with_capacity(k);
        for i in 0..k {
            let sources: Vec<usize> = (0..k)
                .filter(|&j| j != i && ch.mask().is_connected(i, j))
                .collect();
            if sources.is_empty() {
                filters.push(TruncatedUnitary::canonical(n, d)?);
                continue;
            }
            let mut acc = CMat::zeros(n, n);
            for j in sources {
                acc += projected_covariance(ch.h(i, j), self.precoders[j].as_matrix());
            }
            filters.push(nu_min(&HermitianPsd::from_hermitian_part(&acc), d, rng)?);
        }
        self.filters = filters;
        total_leakage(ch, &self.filters, &self.precoders)
    }

    /// Transmitter half step. Returns the leakage of the updated pair.
    pub fn update_precoders<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let ch = self.channels;
        let (k, m, d) = (ch.users(), ch.tx_antennas(), ch.streams());
        let mut precoders = Vec::with_capacity(k);
        for j in 0..k {
            let targets: Vec<usize> = (0..k)
                .filter(|&i| i != j && ch.mask().is_connected(i, j))
                .collect();
            if targets.is_empty() {
                precoders.push(TruncatedUnitary::canonical(m, d)?);
                continue;
            }
            let mut acc = CMat::zeros(m, m);
            for i in targets {
                acc += projected_covariance(&ch.h(i, j).adjoint(), self.filters[i].as_matrix());
            }
            precoders.push(nu_min(&HermitianPsd::from_hermitian_part(&acc), d, rng)?);
        }
        self.precoders = precoders;
        self.iterations_run += 1;
        total_leakage(ch, &self.filters, &self.precoders)
    }

    /// One full iteration; returns `(half-step leakage, full leakage)`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(f64, f64)> {
        let half = self.update_filters(rng)?;
        let full = self.update_precoders(rng)?;
        Ok((half, full))
    }
}

/// Complete ILM trajectory.
#[derive(Debug, Clone)]
pub struct IlmState {
    /// `filters[t]` holds `U^(t+1)`.
    pub filters: Vec<Vec<TruncatedUnitary>>,
    /// `precoders[t]` holds `V^(t)`; index 0 is the starting point.
    pub precoders: Vec<Vec<TruncatedUnitary>>,
    /// `L(U^(t), V^(t−1))` for `t = 1..=iterations`.
    pub half_step_leakage: Vec<f64>,
    /// `L(U^(t), V^(t))` for `t = 1..=iterations`.
    pub leakage: Vec<f64>,
}

/// Runs `iterations` ILM iterations and keeps every iterate.
pub fn reference_ilm<R: Rng + ?Sized>(
    channels: &ChannelSet,
    iterations: usize,
    rng: &mut R,
) -> Result<IlmState> {
    if iterations == 0 {
        return Err(Error::Config("ILM needs at least one iteration".into()));
    }
    let mut ilm = IterativeLeakageMin::new(channels, rng)?;
    let mut state = IlmState {
        filters: Vec::with_capacity(iterations),
        precoders: vec![ilm.precoders().to_vec()],
        half_step_leakage: Vec::with_capacity(iterations),
        leakage: Vec::with_capacity(iterations),
    };
    for _ in 0..iterations {
        let (half, full) = ilm.step(rng)?;
        state.filters.push(ilm.filters().to_vec());
        state.precoders.push(ilm.precoders().to_vec());
        state.half_step_leakage.push(half);
        state.leakage.push(full);
    }
    Ok(state)
}

/// Summary of an ILM run stopped on a leakage tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct IlmOutcome {
    pub leakage_history: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Iterates until the full-iteration leakage is at or below `leakage_tol`
/// or `max_iters` iterations have run.
pub fn run_ilm<R: Rng + ?Sized>(
    channels: &ChannelSet,
    max_iters: usize,
    leakage_tol: f64,
    rng: &mut R,
) -> Result<IlmOutcome> {
    if max_iters == 0 {
        return Err(Error::Config("ILM needs at least one iteration".into()));
    }
    let mut ilm = IterativeLeakageMin::new(channels, rng)?;
    let mut history = Vec::new();
    let mut converged = false;
    while !converged && ilm.iterations_run() < max_iters {
        let (_, full) = ilm.step(rng)?;
        history.push(full);
        converged = full <= leakage_tol;
    }
    Ok(IlmOutcome {
        iterations_run: ilm.iterations_run(),
        leakage_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Connectivity;
    use crate::linalg::seeded_stream;
    use crate::schedule::{run, InitMode, RunConfig, Schedule, MESSAGE_STREAM};

    fn channels(seed: u64, mask: Connectivity) -> ChannelSet {
        ChannelSet::sample(mask.users(), 4, 4, 2, mask, &mut seeded_stream(seed, 0)).unwrap()
    }

    #[test]
    fn leakage_never_increases() {
        for seed in 0..10 {
            let ch = channels(seed, Connectivity::full(3));
            let s = reference_ilm(&ch, 40, &mut seeded_stream(seed, 5)).unwrap();
            let mut prev = f64::INFINITY;
            for (&half, &full) in s.half_step_leakage.iter().zip(&s.leakage) {
                assert!(half <= prev * (1.0 + 1e-12) + 1e-14);
                assert!(full <= half * (1.0 + 1e-12) + 1e-14);
                prev = full;
            }
        }
    }

    #[test]
    fn history_shapes() {
        let ch = channels(1, Connectivity::full(3));
        let s = reference_ilm(&ch, 5, &mut seeded_stream(1, 0)).unwrap();
        assert_eq!(s.filters.len(), 5);
        assert_eq!(s.precoders.len(), 6);
        assert_eq!(s.leakage.len(), 5);
        let l = total_leakage(&ch, &s.filters[4], &s.precoders[5]).unwrap();
        assert_eq!(l, s.leakage[4]);
        let h = total_leakage(&ch, &s.filters[2], &s.precoders[2]).unwrap();
        assert_eq!(h, s.half_step_leakage[2]);
        assert!(reference_ilm(&ch, 0, &mut seeded_stream(1, 0)).is_err());
    }

    #[test]
    fn matches_message_passing_on_ilm_schedule() {
        for seed in 0..5 {
            let ch = channels(seed + 100, Connectivity::full(3));
            let cfg = RunConfig {
                max_outer_iters: 20,
                leakage_tol: 0.0,
                init_mode: InitMode::Zero,
                seed,
                ..RunConfig::default()
            };
            let mp = run(&ch, &Schedule::ilm(), cfg).unwrap();
            let ilm = reference_ilm(&ch, 20, &mut seeded_stream(seed, MESSAGE_STREAM)).unwrap();
            for (a, b) in mp.leakage_history.iter().zip(&ilm.half_step_leakage) {
                assert!((a - b).abs() <= 1e-10 * b.max(1.0), "{a} vs {b}");
            }
            let proj_gap = (mp.filters[0].projector() - ilm.filters[19][0].projector()).norm();
            assert!(proj_gap <= 1e-10);
        }
    }

    #[test]
    fn isolated_users_keep_canonical_points() {
        let mut mask = Connectivity::full(2);
        mask.disconnect(0, 1);
        mask.disconnect(1, 0);
        let ch = channels(3, mask);
        let mut rng = seeded_stream(3, 0);
        let out = run_ilm(&ch, 10, 0.0, &mut rng).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations_run, 1);
        assert_eq!(out.leakage_history, vec![0.0]);
    }

    #[test]
    fn run_ilm_stops_at_tolerance() {
        let ch = channels(9, Connectivity::full(3));
        let out = run_ilm(&ch, 2000, 1e-6, &mut seeded_stream(9, 0)).unwrap();
        assert_eq!(out.leakage_history.len(), out.iterations_run);
        if out.converged {
            assert!(*out.leakage_history.last().unwrap() <= 1e-6);
            assert!(out.leakage_history[..out.iterations_run - 1]
                .iter()
                .all(|&l| l > 1e-6));
        }
        assert!(run_ilm(&ch, 0, 1e-6, &mut seeded_stream(9, 0)).is_err());
    }
}
