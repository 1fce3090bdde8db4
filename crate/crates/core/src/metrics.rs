//! Interference leakage and alignment residuals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ChannelSet;
use crate::linalg::TruncatedUnitary;

/// Leakage broken down per link and per graph function node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    /// `f_i`: interference power left in receiver `i`'s filter output.
    pub per_receiver: Vec<f64>,
    /// `g_j`: interference power transmitter `j` leaks into other receivers,
    /// evaluated through its own expression `‖V_jᴴ H_ijᴴ U_i‖²`.
    pub per_transmitter: Vec<f64>,
    /// `[i][j] = ‖U_iᴴ H_ij V_j‖²_F`; zero on the diagonal and on masked links.
    pub per_link: Vec<Vec<f64>>,
    /// `Σ_i f_i`.
    pub total: f64,
}

fn check_shapes(
    channels: &ChannelSet,
    filters: &[TruncatedUnitary],
    precoders: &[TruncatedUnitary],
) -> Result<()> {
    let k = channels.users();
    let d = channels.streams();
    if filters.len() != k || precoders.len() != k {
        return Err(Error::Dimension(format!(
            "expected {k} filters and precoders, got {} and {}",
            filters.len(),
            precoders.len()
        )));
    }
    for u in filters {
        if (u.ambient_dim(), u.subspace_dim()) != (channels.rx_antennas(), d) {
            return Err(Error::Dimension(format!(
                "filter is {}x{}, expected {}x{d}",
                u.ambient_dim(),
                u.subspace_dim(),
                channels.rx_antennas()
            )));
        }
    }
    for v in precoders {
        if (v.ambient_dim(), v.subspace_dim()) != (channels.tx_antennas(), d) {
            return Err(Error::Dimension(format!(
                "precoder is {}x{}, expected {}x{d}",
                v.ambient_dim(),
                v.subspace_dim(),
                channels.tx_antennas()
            )));
        }
    }
    Ok(())
}

pub fn leakage(
    channels: &ChannelSet,
    filters: &[TruncatedUnitary],
    precoders: &[TruncatedUnitary],
) -> Result<LeakageReport> {
    check_shapes(channels, filters, precoders)?;
    let k = channels.users();
    let mut per_link = vec![vec![0.0; k]; k];
    let mut per_transmitter = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            if i == j || !channels.mask().is_connected(i, j) {
                continue;
            }
            let h = channels.h(i, j);
            let u = filters[i].as_matrix();
            let v = precoders[j].as_matrix();
            per_link[i][j] = (u.adjoint() * h * v).norm_squared();
            per_transmitter[j] += (v.adjoint() * h.adjoint() * u).norm_squared();
        }
    }
    let per_receiver: Vec<f64> = per_link.iter().map(|row| row.iter().sum()).collect();
    let total = per_receiver.iter().sum();
    Ok(LeakageReport {
        per_receiver,
        per_transmitter,
        per_link,
        total,
    })
}

pub fn total_leakage(
    channels: &ChannelSet,
    filters: &[TruncatedUnitary],
    precoders: &[TruncatedUnitary],
) -> Result<f64> {
    leakage(channels, filters, precoders).map(|r| r.total)
}

/// Largest `‖U_iᴴ H_ij V_j‖_F` over connected cross links; zero exactly at an
/// alignment solution.
pub fn ia_residual(
    channels: &ChannelSet,
    filters: &[TruncatedUnitary],
    precoders: &[TruncatedUnitary],
) -> Result<f64> {
    check_shapes(channels, filters, precoders)?;
    let k = channels.users();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j && channels.mask().is_connected(i, j) {
                let r = (filters[i].as_matrix().adjoint()
                    * channels.h(i, j)
                    * precoders[j].as_matrix())
                .norm();
                worst = worst.max(r);
            }
        }
    }
    Ok(worst)
}

/// Symmetric-system properness heuristic `M + N ≥ d(K + 1)`. Advisory only.
pub fn check_feasibility(
    users: usize,
    rx_antennas: usize,
    tx_antennas: usize,
    streams: usize,
) -> bool {
    rx_antennas + tx_antennas >= streams * (users + 1)
}
