//! Traffic accounting for a distributed deployment of the factor graph.
//!
//! Each node lives on one physical device. A message between nodes on the
//! same device is local; anything else has to go over the air. Message size
//! is modelled as the full `n × n` matrix in doubles, `8n²` bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{FactorGraph, NodeId};
use crate::schedule::Schedule;

pub const BYTES_PER_SCALAR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Device {
    Receiver(usize),
    Transmitter(usize),
}

impl Device {
    pub fn role(self) -> &'static str {
        match self {
            Device::Receiver(_) => "receiver",
            Device::Transmitter(_) => "transmitter",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Device::Receiver(i) => write!(f, "receiver_{}", i + 1),
            Device::Transmitter(j) => write!(f, "transmitter_{}", j + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkClass {
    OverTheAir,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceMapping {
    assignment: BTreeMap<NodeId, Device>,
}

impl DeviceMapping {
    /// `U_i, f_i` on receiver `i`; `V_j, g_j` on transmitter `j`.
    pub fn default_mapping(users: usize) -> Result<Self> {
        if users < 2 {
            return Err(Error::Config(format!(
                "device mapping needs K >= 2, got {users}"
            )));
        }
        let mut assignment = BTreeMap::new();
        for k in 0..users {
            assignment.insert(NodeId::u(k), Device::Receiver(k));
            assignment.insert(NodeId::f(k), Device::Receiver(k));
            assignment.insert(NodeId::v(k), Device::Transmitter(k));
            assignment.insert(NodeId::g(k), Device::Transmitter(k));
        }
        Ok(DeviceMapping { assignment })
    }

    pub fn from_assignment(assignment: BTreeMap<NodeId, Device>) -> Self {
        DeviceMapping { assignment }
    }

    pub fn device_of(&self, node: NodeId) -> Result<Device> {
        self.assignment
            .get(&node)
            .copied()
            .ok_or(Error::UnknownNode(node))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.assignment.keys().copied()
    }

    /// Distinct devices in order.
    pub fn devices(&self) -> Vec<Device> {
        let mut d: Vec<Device> = self.assignment.values().copied().collect();
        d.sort();
        d.dedup();
        d
    }

    pub fn classify(&self, from: NodeId, to: NodeId) -> Result<LinkClass> {
        if self.device_of(from)? == self.device_of(to)? {
            Ok(LinkClass::Local)
        } else {
            Ok(LinkClass::OverTheAir)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DeviceTraffic {
    pub messages_ota: u64,
    pub bytes_ota: u64,
    pub messages_local: u64,
}

impl DeviceTraffic {
    fn add(&mut self, other: &DeviceTraffic) {
        self.messages_ota += other.messages_ota;
        self.bytes_ota += other.bytes_ota;
        self.messages_local += other.messages_local;
    }

    fn scaled(&self, factor: u64) -> DeviceTraffic {
        DeviceTraffic {
            messages_ota: self.messages_ota * factor,
            bytes_ota: self.bytes_ota * factor,
            messages_local: self.messages_local * factor,
        }
    }
}

/// Traffic attributed to the sending device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrafficReport {
    pub iterations: u64,
    /// Cumulative traffic per device over all iterations.
    pub per_device: BTreeMap<Device, DeviceTraffic>,
    /// Traffic per device in a single iteration.
    pub per_iteration: BTreeMap<Device, DeviceTraffic>,
    pub totals: DeviceTraffic,
}

impl TrafficReport {
    pub fn per_iteration_totals(&self) -> DeviceTraffic {
        let mut t = DeviceTraffic::default();
        for d in self.per_iteration.values() {
            t.add(d);
        }
        t
    }

    /// Columns `device, role, messages_ota, bytes_ota, messages_local`, one
    /// row per device.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "device",
            "role",
            "messages_ota",
            "bytes_ota",
            "messages_local",
        ])?;
        for (device, t) in &self.per_device {
            w.write_record([
                device.to_string(),
                device.role().to_string(),
                t.messages_ota.to_string(),
                t.bytes_ota.to_string(),
                t.messages_local.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Size of one message on the edge `from`-`to`.
pub fn message_bytes(graph: &FactorGraph, from: NodeId, to: NodeId) -> Result<u64> {
    let n = graph.edge_dim(from, to)?;
    Ok((n * n * BYTES_PER_SCALAR) as u64)
}

pub fn account(
    schedule: &Schedule,
    graph: &FactorGraph,
    mapping: &DeviceMapping,
    iterations: u64,
) -> Result<TrafficReport> {
    let mut per_iteration: BTreeMap<Device, DeviceTraffic> = mapping
        .devices()
        .into_iter()
        .map(|d| (d, DeviceTraffic::default()))
        .collect();
    for (from, to) in schedule.sends(graph) {
        let entry = per_iteration.entry(mapping.device_of(from)?).or_default();
        match mapping.classify(from, to)? {
            LinkClass::Local => entry.messages_local += 1,
            LinkClass::OverTheAir => {
                entry.messages_ota += 1;
                entry.bytes_ota += message_bytes(graph, from, to)?;
            }
        }
    }
    let per_device: BTreeMap<Device, DeviceTraffic> = per_iteration
        .iter()
        .map(|(d, t)| (*d, t.scaled(iterations)))
        .collect();
    let mut totals = DeviceTraffic::default();
    for t in per_device.values() {
        totals.add(t);
    }
    Ok(TrafficReport {
        iterations,
        per_device,
        per_iteration,
        totals,
    })
}
