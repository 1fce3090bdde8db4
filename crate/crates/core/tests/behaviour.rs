//! End-to-end behaviour on the standard 3-user 4×4, d = 2 system.

use mpia::baselines::run_ilm;
use mpia::graph::{ChannelSet, Connectivity};
use mpia::linalg::seeded_stream;
use mpia::schedule::{RunConfig, Schedule, MESSAGE_STREAM};

fn channels(seed: u64) -> ChannelSet {
    ChannelSet::sample(
        3,
        4,
        4,
        2,
        Connectivity::full(3),
        &mut seeded_stream(seed, 0),
    )
    .unwrap()
}

#[test]
fn regular_schedule_reduces_leakage_by_two_orders() {
    let seeds = 40;
    let mut good = 0;
    for seed in 0..seeds {
        let cfg = RunConfig {
            max_outer_iters: 100,
            leakage_tol: 0.0,
            seed,
            ..RunConfig::default()
        };
        let state = mpia::run(&channels(500 + seed), &Schedule::regular(), cfg).unwrap();
        let h = &state.leakage_history;
        if h[99] <= 1e-2 * h[0] {
            good += 1;
        }
    }
    assert!(good as f64 >= 0.95 * seeds as f64, "{good}/{seeds}");
}

#[test]
fn mpia_reaches_tight_leakage_first_on_most_channels() {
    let seeds = 21;
    let mut mpia_first = 0;
    for seed in 0..seeds {
        let ch = channels(700 + seed);
        let cfg = RunConfig {
            max_outer_iters: 1000,
            leakage_tol: 1e-8,
            seed,
            ..RunConfig::default()
        };
        let m = mpia::run(&ch, &Schedule::regular(), cfg).unwrap();
        let i = run_ilm(&ch, 1000, 1e-8, &mut seeded_stream(seed, MESSAGE_STREAM)).unwrap();
        let m_iters = if m.converged {
            m.iterations_run
        } else {
            usize::MAX
        };
        let i_iters = if i.converged {
            i.iterations_run
        } else {
            usize::MAX
        };
        if m_iters < i_iters {
            mpia_first += 1;
        }
    }
    assert!(2 * mpia_first > seeds, "{mpia_first}/{seeds}");
}

#[test]
fn partial_connectivity_runs() {
    let mut mask = Connectivity::full(3);
    mask.disconnect(0, 1);
    mask.disconnect(2, 0);
    let ch = ChannelSet::sample(3, 4, 4, 2, mask, &mut seeded_stream(4, 0)).unwrap();
    let cfg = RunConfig {
        max_outer_iters: 300,
        leakage_tol: 1e-8,
        ..RunConfig::default()
    };
    let state = mpia::run(&ch, &Schedule::regular(), cfg).unwrap();
    assert!(*state.leakage_history.last().unwrap() < state.leakage_history[0]);
}
