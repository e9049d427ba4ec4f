//! Slotted saturation-mode simulator of Wi-Fi and NR-U nodes on one channel.
//!
//! Time advances in backoff slots. A node whose counter is zero transmits;
//! counters of the other nodes decrease by one at the end of every idle slot
//! and are frozen while the channel is busy. One transmitter is a success and
//! resets to stage 0; several transmitters collide, keep the channel busy for
//! the longest of their occupancies, and each moves one stage up (capped at
//! the last stage). Every node always has a frame queued.
//!
//! An observation window ends after a fixed number of idle slots, so the
//! simulated wall time varies with the TXOP in use.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::access::AccessConfig;
use crate::{rng, Error, Result};

/// Smallest accepted observation window, in idle slots.
pub const MIN_WINDOW_SLOTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_wifi: usize,
    pub n_nru: usize,
    pub wifi: AccessConfig<f64>,
    pub nru: AccessConfig<f64>,
    /// Idle-slot budget of one observation window.
    pub window_slots: u64,
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.wifi.violations("wifi");
        v.extend(self.nru.violations("nru"));
        if self.window_slots < MIN_WINDOW_SLOTS {
            v.push(format!(
                "sim.window_slots must be >= {MIN_WINDOW_SLOTS} (got {})",
                self.window_slots
            ));
        }
        if self.n_wifi > 0 && self.n_nru > 0 && self.wifi.slot_us != self.nru.slot_us {
            v.push(format!(
                "wifi.slot_us ({}) and nru.slot_us ({}) must match on a shared channel",
                self.wifi.slot_us, self.nru.slot_us
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Slot duration of the shared channel.
    pub fn slot_us(&self) -> f64 {
        if self.n_wifi > 0 || self.n_nru == 0 {
            self.wifi.slot_us
        } else {
            self.nru.slot_us
        }
    }
}

/// Copy of `cfg` with a different seed.
pub fn reseed(cfg: &SimConfig, new_seed: u64) -> SimConfig {
    SimConfig {
        rng_seed: new_seed,
        ..cfg.clone()
    }
}

/// Measurements over one observation window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EpisodeMetrics {
    /// NR-U throughput, Mb/s.
    pub gamma_nr: f64,
    /// Wi-Fi throughput, Mb/s.
    pub gamma_wf: f64,
    pub wifi_success_count: u64,
    pub nru_success_count: u64,
    pub collision_count: u64,
    pub idle_slot_count: u64,
    pub transmission_events: u64,
    pub wifi_airtime_us: f64,
    pub nru_airtime_us: f64,
    pub collision_airtime_us: f64,
    /// Simulated time covered by the window, microseconds.
    pub elapsed_us: f64,
    /// Payload delivered per success, bits.
    pub wifi_payload_bits: f64,
    pub nru_payload_bits: f64,
}

impl EpisodeMetrics {
    pub fn elapsed_seconds(&self) -> f64 {
        self.elapsed_us * 1e-6
    }

    pub fn aggregate_throughput(&self) -> f64 {
        self.gamma_nr + self.gamma_wf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Technology {
    WiFi,
    Nru,
}

struct Node {
    tech: Technology,
    stage: u32,
    /// Idle-slot index at which the backoff counter reaches zero. Counters
    /// only advance in idle slots, so storing the deadline instead of the
    /// counter makes idle runs O(1) per node.
    deadline: u64,
    rng: ChaCha8Rng,
}

impl Node {
    fn redraw(&mut self, cfg: &AccessConfig<f64>, now: u64) {
        self.deadline = now + self.rng.gen_range(0..cfg.window(self.stage)) as u64;
    }
}

/// Simulate one observation window with the NR-U TXOP set to `t_nr_override`
/// microseconds. Deterministic in `(cfg, t_nr_override)`.
pub fn run_window(cfg: &SimConfig, t_nr_override: f64) -> EpisodeMetrics {
    let wifi = cfg.wifi;
    let nru = cfg.nru.with_txop(t_nr_override);
    let occ_wf = wifi.occupancy_us();
    let occ_nr = nru.occupancy_us();
    let slot = cfg.slot_us();
    let window = cfg.window_slots;

    let mut nodes: Vec<Node> = (0..cfg.n_wifi + cfg.n_nru)
        .map(|i| {
            let tech = if i < cfg.n_wifi {
                Technology::WiFi
            } else {
                Technology::Nru
            };
            let mut node = Node {
                tech,
                stage: 0,
                deadline: 0,
                rng: rng::stream(cfg.rng_seed, i as u64),
            };
            node.redraw(if tech == Technology::WiFi { &wifi } else { &nru }, 0);
            node
        })
        .collect();

    let mut m = EpisodeMetrics {
        wifi_payload_bits: wifi.payload_bits(),
        nru_payload_bits: nru.payload_bits(),
        ..EpisodeMetrics::default()
    };
    if nodes.is_empty() {
        m.idle_slot_count = window;
    }

    while m.idle_slot_count < window && !nodes.is_empty() {
        let next = nodes.iter().map(|n| n.deadline).min().unwrap_or(u64::MAX);
        if next > m.idle_slot_count {
            // Run of idle slots until the next counter expires.
            m.idle_slot_count = next.min(window);
            continue;
        }

        let now = m.idle_slot_count;
        m.transmission_events += 1;
        let (mut n_tx, mut any_wf, mut any_nr, mut last) = (0usize, false, false, 0usize);
        for (i, n) in nodes.iter().enumerate() {
            if n.deadline == now {
                n_tx += 1;
                last = i;
                match n.tech {
                    Technology::WiFi => any_wf = true,
                    Technology::Nru => any_nr = true,
                }
            }
        }
        if n_tx == 1 {
            let node = &mut nodes[last];
            match node.tech {
                Technology::WiFi => {
                    m.wifi_success_count += 1;
                    m.wifi_airtime_us += occ_wf;
                }
                Technology::Nru => {
                    m.nru_success_count += 1;
                    m.nru_airtime_us += occ_nr;
                }
            }
            node.stage = 0;
            let access = if node.tech == Technology::WiFi { &wifi } else { &nru };
            node.redraw(access, now);
        } else {
            m.collision_count += 1;
            m.collision_airtime_us += match (any_wf, any_nr) {
                (true, true) => occ_wf.max(occ_nr),
                (true, false) => occ_wf,
                _ => occ_nr,
            };
            for node in nodes.iter_mut().filter(|n| n.deadline == now) {
                let access = if node.tech == Technology::WiFi { &wifi } else { &nru };
                node.stage = (node.stage + 1).min(access.max_stage);
                node.redraw(access, now);
            }
        }
    }

    m.elapsed_us = m.idle_slot_count as f64 * slot + m.wifi_airtime_us + m.nru_airtime_us + m.collision_airtime_us;
    if m.elapsed_us > 0.0 {
        m.gamma_wf = m.wifi_success_count as f64 * m.wifi_payload_bits / m.elapsed_us;
        m.gamma_nr = m.nru_success_count as f64 * m.nru_payload_bits / m.elapsed_us;
    }
    m
}
