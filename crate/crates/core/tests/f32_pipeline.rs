use std::sync::Arc;

use agrisense_core::adc::AdcFrontend;
use agrisense_core::channel::{ChannelStore, Durability, LocalTransport, ManualClock, NewChannel, StoreConfig};
use agrisense_core::env_sim::{bundled, load_scenario, ScenarioSpec};
use agrisense_core::gateway::{Gateway, GatewayConfig, Publisher, RetryPolicy};
use agrisense_core::pipeline::{run_scenario, RunOptions};
use chrono::{TimeDelta, TimeZone, Utc};

#[test]
fn paper_hour_runs_in_single_precision() {
    let t0 = Utc.with_ymd_and_hms(2024, 12, 15, 10, 0, 0).unwrap();
    let spec: ScenarioSpec<f32> = load_scenario(bundled("paper_hour").unwrap()).unwrap();
    let cfg = StoreConfig { rate_limit: TimeDelta::zero(), durability: Durability::Buffered };
    let store = Arc::new(ChannelStore::in_memory(cfg, Arc::new(ManualClock::new(t0))));
    let meta = store.create_channel(NewChannel::sensors("farm")).unwrap();
    let transport = LocalTransport { store: store.clone(), write_key: meta.write_key };
    let mut publisher = Publisher::new(transport, RetryPolicy::default(), 1000);
    let gateway = Gateway::new(GatewayConfig::<f32>::default(), AdcFrontend::default()).unwrap();
    let report = run_scenario(&spec, &gateway, &mut publisher, &RunOptions::new(t0), |_| {}).unwrap();
    assert_eq!(report.acknowledged.len(), 361);

    let temps: Vec<f32> = report.readings.iter().filter_map(|r| r.temperature).collect();
    let max = temps.iter().copied().fold(f32::MIN, f32::max);
    let min = temps.iter().copied().fold(f32::MAX, f32::min);
    assert!((max - 37.72).abs() <= 0.081, "{max}");
    assert!((min - 22.04).abs() <= 0.081, "{min}");
}
