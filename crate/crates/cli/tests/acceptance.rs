//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use agrisense_cli::ServiceClient;
use agrisense_core::adc::{decode, parse_frame, quantize, spi_transaction, AdcCode};
use agrisense_core::analytics::{
    evaluate_alerts, irrigation_decide, moving_average, DutyCycleConfig, ForecastConfig, IrrigationAction, PowerState,
};
use agrisense_core::channel::{
    ChannelStore, Durability, LocalTransport, ManualClock, NewChannel, StoreConfig, SystemClock,
};
use agrisense_core::env_sim::{Ranges, ScriptRow};
use agrisense_core::gateway::{Publisher, RetryPolicy, UpdateRequest};
use agrisense_core::pipeline::{run_scenario, RunOptions};
use agrisense_core::{
    AdcFrontend, AlertRule, AlertRuleSet, Gateway, GatewayConfig, Reading, ScenarioSpec, Sensor,
};
use axum::body::Body;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEY: &str = "ACCEPTANCE000KEY";
const HEAT_TEXT: &[u8] = b"Temperature is high, consider cooling measures";

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 12, 15, 10, 0, 0).unwrap()
}

#[derive(Default)]
struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn ensure(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}

fn criterion(n: u32, name: &str, limit: Option<Duration>, body: impl FnOnce(&mut Check)) -> bool {
    let mut check = Check::default();
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| body(&mut check)));
    let elapsed = started.elapsed();
    if let Err(panic) = result {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        check.failures.push(format!("panicked: {msg}"));
    }
    if let Some(limit) = limit {
        check.ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"));
    }
    let pass = check.failures.is_empty();
    println!(
        "criterion {n} {name}: {} ({elapsed:.2?}){}{}",
        if pass { "PASS" } else { "FAIL" },
        if check.notes.is_empty() { String::new() } else { format!(" {}", check.notes.join("; ")) },
        if pass { String::new() } else { format!(" -- {}", check.failures.join("; ")) },
    );
    pass
}

fn durable_store(dir: &Path) -> Arc<ChannelStore> {
    let cfg = StoreConfig { rate_limit: TimeDelta::zero(), durability: Durability::Sync };
    let store = ChannelStore::open(dir, cfg, Arc::new(SystemClock)).unwrap();
    store.create_channel(NewChannel { write_key: Some(KEY.into()), ..NewChannel::sensors("farm") }).unwrap();
    Arc::new(store)
}

fn manual_store(rate_limit_s: i64) -> (Arc<ChannelStore>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(t0()));
    let cfg = StoreConfig { rate_limit: TimeDelta::seconds(rate_limit_s), durability: Durability::Buffered };
    let store = ChannelStore::in_memory(cfg, clock.clone());
    store.create_channel(NewChannel { write_key: Some(KEY.into()), ..NewChannel::sensors("farm") }).unwrap();
    (Arc::new(store), clock)
}

fn http_get(url: &str) -> (u16, String, String) {
    let response = reqwest::blocking::get(url).unwrap();
    let status = response.status().as_u16();
    let content_type = response
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    (status, content_type, response.text().unwrap())
}

fn stats(values: &[f64]) -> (f64, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max, values.iter().sum::<f64>() / values.len() as f64)
}

fn c1_paper_hour(c: &mut Check) {
    let dir = tempfile::tempdir().unwrap();
    let server = agrisense_service::spawn("127.0.0.1:0".parse().unwrap(), durable_store(dir.path())).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_agrisense"))
        .args(["run", "--scenario", "paper_hour", "--speed", "max", "--start", "2024-12-15T10:00:00Z"])
        .args(["--endpoint", &server.base_url(), "--write-key", KEY])
        .output()
        .unwrap();
    c.ensure(output.status.success(), || {
        format!("run exited {:?}: {}", output.status.code(), String::from_utf8_lossy(&output.stderr))
    });

    let page = ServiceClient::new(&server.base_url()).unwrap().feeds(1, 8000, None).unwrap();
    c.ensure(page.feeds.len() == 361, || format!("{} entries stored, expected 361", page.feeds.len()));
    let column = |sensor: Sensor| -> Vec<f64> {
        page.feeds
            .iter()
            .filter_map(|e| e.field(usize::from(sensor.field())))
            .map(|v| v.parse().unwrap())
            .collect()
    };
    let (tmin, tmax, _) = stats(&column(Sensor::Temperature));
    let (pmin, pmax, pmean) = stats(&column(Sensor::Pressure));
    let (mmin, mmax, mmean) = stats(&column(Sensor::Moisture));
    let anchors = [
        ("temperature max", tmax, 37.72, 0.081),
        ("temperature min", tmin, 22.04, 0.081),
        ("pressure min", pmin, 1010.63, 0.025),
        ("pressure max", pmax, 1024.81, 0.025),
        ("pressure mean", pmean, 1018.14, 0.025 + 0.01),
        ("moisture min", mmin, 12.67, 0.025),
        ("moisture max", mmax, 48.34, 0.025),
        ("moisture mean", mmean, 29.24, 0.025 + 0.01),
    ];
    for (name, got, want, tol) in anchors {
        c.ensure((got - want).abs() <= tol, || format!("{name} {got:.4} vs {want} +/- {tol}"));
    }
    c.note(format!(
        "T {tmin:.2}..{tmax:.2}, P {pmin:.2}..{pmax:.2} mean {pmean:.3}, M {mmin:.2}..{mmax:.2} mean {mmean:.3}"
    ));
    server.shutdown().unwrap();
}

fn c2_ranges(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut outside = 0usize;
    let mut samples = 0usize;
    for _ in 0..20 {
        let spec = ScenarioSpec::stochastic(rng.random());
        c.ensure(spec.duration_s == 3600, || format!("duration {}", spec.duration_s));
        let gateway = Gateway::new(GatewayConfig::default(), AdcFrontend::default()).unwrap();
        for (i, s) in spec.samples().enumerate() {
            samples += 1;
            let ok = (20.0..=40.0).contains(&s.temperature)
                && (1010.0..=1025.0).contains(&s.pressure)
                && (10.0..=50.0).contains(&s.moisture);
            let reading = gateway.acquire_cycle(t0() + TimeDelta::seconds(10 * i as i64), &s).unwrap();
            let rain = reading.to_fields()[usize::from(Sensor::Rain.field()) - 1].clone();
            if !ok || !matches!(rain.as_deref(), Some("0" | "1")) {
                outside += 1;
            }
        }
    }
    c.ensure(samples == 20 * 361, || format!("{samples} samples"));
    c.ensure(outside == 0, || format!("{outside} samples out of range"));
    c.note(format!("{samples} samples, {outside} outside"));
}

fn c3_adc(c: &mut Check) {
    let vref = 3.3f64;
    let tolerance = vref / 8192.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut volts: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..=vref)).collect();
    volts.extend([0.0, vref, vref / 2.0]);
    let mut worst = 0.0f64;
    for &v in &volts {
        let err = (decode(quantize(v, vref), vref) - v).abs();
        worst = worst.max(err);
    }
    // allow one rounding step of the float arithmetic at the exact bin edge
    c.ensure(worst <= tolerance * (1.0 + 1e-12), || format!("round-trip error {worst:e} > {tolerance:e}"));

    volts.sort_by(f64::total_cmp);
    let codes: Vec<u16> = volts.iter().map(|&v| quantize(v, vref).value()).collect();
    c.ensure(codes.windows(2).all(|w| w[0] <= w[1]), || "quantize is not monotone".into());
    let decoded: Vec<f64> = (0..4096u16).map(|k| decode(AdcCode::new(k).unwrap(), vref)).collect();
    c.ensure(decoded.windows(2).all(|w| w[0] < w[1]), || "decode is not strictly increasing".into());

    let mut frames = HashSet::new();
    let mut bad = 0;
    for channel in 0..8u8 {
        for code in 0..4096u16 {
            let frame = spi_transaction(channel, AdcCode::new(code).unwrap()).unwrap();
            match parse_frame(&frame) {
                Ok((ch, k)) if ch == channel && k.value() == code => {}
                _ => bad += 1,
            }
            frames.insert((frame.request, frame.response));
        }
    }
    c.ensure(bad == 0, || format!("{bad} frames did not parse back"));
    c.ensure(frames.len() == 8 * 4096, || format!("{} distinct frames", frames.len()));
    c.note(format!("worst error {worst:.3e} V (bound {tolerance:.3e})"));
}

fn naive_mean(values: &[f64]) -> f64 {
    let mut total = 0.0;
    for v in values {
        total += v;
    }
    total / values.len() as f64
}

fn c4_moving_average(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0usize;
    for _ in 0..1000 {
        let len = rng.random_range(3..=100);
        let series: Vec<f64> = (0..len).map(|_| rng.random_range(-1500.0..1500.0)).collect();
        for window in 1..=5 {
            let cfg = ForecastConfig::new(window, 6).unwrap();
            let got = moving_average(&series, &cfg);
            let expected: Vec<f64> = if len < window {
                Vec::new()
            } else {
                (0..=len - window).map(|i| naive_mean(&series[i..i + window])).collect()
            };
            compared += expected.len();
            c.ensure(got.smoothed == expected, || format!("len {len} window {window} differs from naive"));
            c.ensure(got.horizon == vec![expected.last().copied().unwrap_or_default(); if expected.is_empty() { 0 } else { 6 }], || {
                format!("len {len} window {window}: horizon is not the last mean repeated")
            });
        }
    }

    type Q = Ratio<i64>;
    let q = |rng: &mut ChaCha8Rng| Q::new(rng.random_range(-5000..5000), rng.random_range(1..=12));
    for _ in 0..1000 {
        let len = rng.random_range(3..=100);
        let window = rng.random_range(1..=5);
        let cfg = ForecastConfig::new(window, 1).unwrap();
        let constant = q(&mut rng);
        let flat = moving_average(&vec![constant; len], &cfg);
        c.ensure(flat.smoothed.iter().all(|&m| m == constant), || "constant series not preserved".into());

        let series: Vec<Q> = (0..len).map(|_| q(&mut rng)).collect();
        let shift = q(&mut rng);
        let shifted: Vec<Q> = series.iter().map(|&x| x + shift).collect();
        let base = moving_average(&series, &cfg).smoothed;
        let moved = moving_average(&shifted, &cfg).smoothed;
        c.ensure(base.iter().zip(&moved).all(|(&a, &b)| a + shift == b) && base.len() == moved.len(), || {
            "shift invariance violated".into()
        });
    }
    c.note(format!("{compared} window means compared"));
}

fn run_oracle(stream: &[bool], k: usize) -> Vec<usize> {
    // index of the k-th sample of every maximal run of trues lasting >= k
    let mut fired = Vec::new();
    let mut run = 0;
    for (i, &v) in stream.iter().enumerate() {
        run = if v { run + 1 } else { 0 };
        if run == k {
            fired.push(i);
        }
    }
    fired
}

fn c5_alerts(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut events_seen = 0;
    for _ in 0..1000 {
        let len = rng.random_range(0..=200);
        let p = rng.random_range(0.2..0.9);
        let stream: Vec<bool> = (0..len).map(|_| rng.random_bool(p)).collect();
        let readings: Vec<Reading> = stream
            .iter()
            .enumerate()
            .map(|(i, &hot)| {
                let mut r = Reading::empty(t0() + TimeDelta::seconds(10 * i as i64));
                r.temperature = Some(if hot { 36.0 } else { 30.0 });
                r
            })
            .collect();
        for k in [1, 2, 3, 5] {
            let rules = AlertRuleSet::new(vec![AlertRule { sustain: k, ..AlertRule::heat() }]).unwrap();
            let events = evaluate_alerts(&readings, &rules);
            let expected = run_oracle(&stream, k);
            events_seen += events.len();
            let times: Vec<DateTime<Utc>> = events.iter().map(|e| e.triggered_at).collect();
            let expected_times: Vec<DateTime<Utc>> = expected.iter().map(|&i| readings[i].timestamp).collect();
            c.ensure(times == expected_times, || {
                format!("k={k}: {} events, oracle {}", events.len(), expected.len())
            });
        }
    }
    let hot: Vec<Reading> = (0..5)
        .map(|i| {
            let mut r = Reading::empty(t0() + TimeDelta::seconds(10 * i));
            r.temperature = Some(36.0);
            r
        })
        .collect();
    let events = evaluate_alerts(&hot, &AlertRuleSet::default());
    c.ensure(events.len() == 1, || format!("{} heat events for a sustained 36 C stream", events.len()));
    c.ensure(events.first().is_some_and(|e| e.message.as_bytes() == HEAT_TEXT), || {
        format!("message {:?}", events.first().map(|e| &e.message))
    });
    c.note(format!("{events_seen} events matched the run-length oracle"));
}

fn c6_irrigation(c: &mut Check) {
    use IrrigationAction::*;
    let table = [
        (true, 10.0, Pause),
        (true, 30.0, Pause),
        (true, 45.0, Pause),
        (false, 10.0, Activate),
        (false, 19.99, Activate),
        (false, 20.0, Hold),
        (false, 30.0, Hold),
        (false, 40.0, Pause),
        (false, 45.0, Pause),
    ];
    for (rain, moisture, want) in table {
        let got = irrigation_decide(rain, moisture, 20.0, 40.0, t0()).unwrap().action;
        c.ensure(got == want, || format!("rain={rain} moisture={moisture}: {got:?}, expected {want:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut activate_with_rain = 0;
    for _ in 0..10_000 {
        let floor: f64 = rng.random_range(0.0..60.0);
        let ceiling = floor + rng.random_range(0.01..40.0);
        let moisture = rng.random_range(0.0..100.0);
        let rain = rng.random_bool(0.5);
        let got = irrigation_decide(rain, moisture, floor, ceiling, t0()).unwrap().action;
        let want = if rain {
            Pause
        } else if moisture < floor {
            Activate
        } else if moisture >= ceiling {
            Pause
        } else {
            Hold
        };
        activate_with_rain += (rain && got == Activate) as usize;
        c.ensure(got == want, || format!("rain={rain} m={moisture} [{floor},{ceiling}): {got:?}"));
    }
    c.ensure(activate_with_rain == 0, || format!("{activate_with_rain} Activate commands while raining"));
}

fn flat_scenario(p_start: f64, p_end: f64) -> ScenarioSpec {
    let row = |t, pressure| ScriptRow { t, temperature: 28.0, pressure, moisture: 30.0, rain: false };
    ScenarioSpec::scripted(vec![row(0, p_start), row(3600, p_end)], 10, Ranges::default()).unwrap()
}

/// Per cycle: time, cumulative rain-sensor on-time, whether rain was read.
type CycleTrace = Vec<(DateTime<Utc>, u64, bool)>;

fn duty_run(spec: &ScenarioSpec) -> (agrisense_core::pipeline::RunReport<f64>, CycleTrace) {
    let (store, _) = manual_store(0);
    let transport = LocalTransport { store, write_key: KEY.into() };
    let mut publisher = Publisher::new(transport, RetryPolicy::default(), 1000).with_sleeper(|_| {});
    let gateway = Gateway::new(GatewayConfig::default(), AdcFrontend::default()).unwrap();
    let opts = RunOptions { duty_cycle: Some(DutyCycleConfig::default()), ..RunOptions::new(t0()) };
    let mut cycles = Vec::new();
    let report = run_scenario(spec, &gateway, &mut publisher, &opts, |cy| {
        let rain_read = cy.reading.as_ref().is_some_and(|r| r.rain.is_some());
        cycles.push((cy.at, cy.ledger.on_time_s(Sensor::Rain), rain_read));
    })
    .unwrap();
    (report, cycles)
}

fn c7_duty_cycle(c: &mut Check) {
    let (report, cycles) = duty_run(&flat_scenario(1020.0, 1020.0));
    let used = report.ledger.total_energy_mj();
    c.ensure(used < report.always_on_energy_mj, || {
        format!("planned energy {used} mJ is not below always-on {} mJ", report.always_on_energy_mj)
    });
    let mut off_cycles = 0;
    let mut previous = 0;
    for &(at, on_time, rain_read) in &cycles {
        let off = report.plans.iter().any(|p| {
            p.schedule.intervals(Sensor::Rain).iter().any(|iv| iv.state == PowerState::Off && iv.contains(at))
        });
        if off {
            off_cycles += 1;
            c.ensure(on_time == previous && !rain_read, || format!("rain sensor drew power at {at} while scheduled off"));
        }
        previous = on_time;
    }
    c.ensure(off_cycles > 0, || "fair-weather plan never switched the rain sensor off".into());
    c.note(format!("energy {used:.0} vs {:.0} mJ, {off_cycles} rain-off cycles", report.always_on_energy_mj));

    let (report, cycles) = duty_run(&flat_scenario(1016.0, 1010.5));
    let threshold = DutyCycleConfig::<f64>::default().fair_weather_hpa;
    let mut low_steps = 0;
    for plan in &report.plans {
        for (i, &p) in plan.pressure_forecast.iter().enumerate() {
            if p >= threshold {
                continue;
            }
            low_steps += 1;
            let at = plan.at + TimeDelta::seconds(10 * i as i64);
            c.ensure(plan.schedule.state_at(Sensor::Rain, at) == PowerState::On, || {
                format!("rain sensor scheduled off at {at} with forecast {p:.2} hPa")
            });
            if let Some(&(_, _, rain_read)) = cycles.iter().find(|cy| cy.0 == at) {
                c.ensure(rain_read, || format!("no rain reading at {at} with forecast {p:.2} hPa"));
            }
        }
    }
    c.ensure(low_steps > 0, || "low-pressure scenario produced no below-threshold forecast step".into());
    c.note(format!("{low_steps} below-threshold steps kept on"));
}

struct ServeProcess {
    child: Child,
    base: String,
    write_key: Option<String>,
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_serve(data_dir: &Path) -> ServeProcess {
    let child = Command::new(env!("CARGO_BIN_EXE_agrisense"))
        .args(["serve", "--bind", "127.0.0.1:0", "--rate-limit", "0", "--data-dir"])
        .arg(data_dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut process = ServeProcess { child, base: String::new(), write_key: None };
    let mut lines = BufReader::new(process.child.stdout.take().unwrap()).lines();
    loop {
        let line = lines.next().expect("serve exited before listening").unwrap();
        if let Some(rest) = line.split("write key ").nth(1) {
            process.write_key = Some(rest.trim().to_string());
        }
        if let Some(url) = line.strip_prefix("listening on ") {
            process.base = url.trim().to_string();
            return process;
        }
    }
}

fn update_request(i: i64) -> UpdateRequest {
    let mut fields: [Option<String>; 8] = Default::default();
    fields[0] = Some(format!("{}.{:02}", 20 + i % 15, i % 100));
    UpdateRequest { fields, created_at: Some(t0() + TimeDelta::seconds(10 * i)) }
}

fn c8a_crash_recovery(c: &mut Check) {
    let dir = tempfile::tempdir().unwrap();
    let mut first = start_serve(dir.path());
    let key = first.write_key.clone().expect("serve created a channel");
    let client = ServiceClient::new(&first.base).unwrap().with_write_key(key.clone());
    let mut acked = Vec::new();
    for i in 0..50 {
        match client.update(&update_request(i)).unwrap() {
            agrisense_core::gateway::UpdateReply::Accepted(id) => acked.push((id, update_request(i))),
            other => panic!("write {i} answered {other:?}"),
        }
    }
    // SIGKILL: no shutdown path runs
    first.child.kill().unwrap();
    first.child.wait().unwrap();
    // and a record torn halfway through its append
    let log = dir.path().join("channel-1.log");
    let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(&[200, 0, 0, 0, 0xde, 0xad, 0xbe, 0xef, b'{', b'"']).unwrap();
    drop(f);

    let second = start_serve(dir.path());
    let client = ServiceClient::new(&second.base).unwrap().with_write_key(key);
    let page = client.feeds(1, 8000, None).unwrap();
    let ids: Vec<u64> = page.feeds.iter().map(|e| e.entry_id).collect();
    c.ensure(ids == (1..=50).collect::<Vec<_>>(), || format!("recovered ids {ids:?}"));
    for (entry, (id, req)) in page.feeds.iter().zip(&acked) {
        c.ensure(entry.entry_id == *id && entry.fields[0] == req.fields[0], || format!("entry {id} changed"));
    }
    let next = client.update(&update_request(50)).unwrap();
    c.ensure(next == agrisense_core::gateway::UpdateReply::Accepted(51), || format!("next write answered {next:?}"));
    drop(second);
}

fn c8b_rate_limit(c: &mut Check) {
    let (store, clock) = manual_store(15);
    let server = agrisense_service::spawn("127.0.0.1:0".parse().unwrap(), store).unwrap();
    let url = format!("{}/update?api_key={KEY}&field1=22.04", server.base_url());
    let first = http_get(&url);
    clock.advance(TimeDelta::seconds(5));
    let second = http_get(&url);
    clock.advance(TimeDelta::seconds(10));
    let third = http_get(&url);
    c.ensure(first.0 == 200 && first.2 == "1", || format!("first write {first:?}"));
    c.ensure(second.0 == 200 && second.2 == "0", || format!("write after 5 s answered {second:?}"));
    c.ensure(third.2 == "2", || format!("write after 15 s answered {third:?}"));
}

fn c8c_concurrency(c: &mut Check) {
    let dir = tempfile::tempdir().unwrap();
    let server = agrisense_service::spawn("127.0.0.1:0".parse().unwrap(), durable_store(dir.path())).unwrap();
    let base = server.base_url();
    let threads: Vec<_> = (0..8)
        .map(|w| {
            let base = base.clone();
            std::thread::spawn(move || {
                let client = ServiceClient::new(&base).unwrap().with_write_key(KEY);
                let mut ids = Vec::with_capacity(100);
                for i in 0..100 {
                    let mut fields: [Option<String>; 8] = Default::default();
                    fields[0] = Some(format!("{w}.{i:03}"));
                    match client.update(&UpdateRequest { fields, created_at: None }).unwrap() {
                        agrisense_core::gateway::UpdateReply::Accepted(id) => ids.push(id),
                        other => panic!("writer {w} got {other:?}"),
                    }
                }
                ids
            })
        })
        .collect();
    let per_writer: Vec<Vec<u64>> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    for ids in &per_writer {
        c.ensure(ids.windows(2).all(|w| w[0] < w[1]), || "a writer saw ids go backwards".into());
    }
    let mut all: Vec<u64> = per_writer.concat();
    all.sort_unstable();
    let unique = all.iter().collect::<HashSet<_>>().len();
    c.ensure(all == (1..=800).collect::<Vec<_>>(), || format!("{} ids, {unique} unique", all.len()));
    let page = ServiceClient::new(&base).unwrap().feeds(1, 8000, None).unwrap();
    let stored: Vec<u64> = page.feeds.iter().map(|e| e.entry_id).collect();
    c.ensure(stored == (1..=800).collect::<Vec<_>>(), || format!("service holds {} entries", stored.len()));
}

fn c8d_golden(c: &mut Check) {
    let (store, _) = manual_store(0);
    let server = agrisense_service::spawn("127.0.0.1:0".parse().unwrap(), store).unwrap();
    let base = server.base_url();
    http_get(&format!(
        "{base}/update?api_key={KEY}&field1=22.04&field2=1018.14&field3=29.24&field4=0&created_at=2024-12-15T10:00:00Z"
    ));
    http_get(&format!(
        "{base}/update?api_key={KEY}&field1=37.72&field3=12.67&field4=1&created_at=2024-12-15T10:00:10Z"
    ));
    let (status, content_type, body) = http_get(&format!("{base}/channels/1/feeds.json?results=10"));
    c.ensure(status == 200, || format!("status {status}"));
    c.ensure(content_type.starts_with("application/json"), || format!("content type {content_type:?}"));
    let golden = include_str!("fixtures/feeds_golden.json");
    c.ensure(body == golden, || format!("body differs from fixture:\n{body}\n{golden}"));
}

/// Fails the first delivery attempt of every third distinct update.
#[derive(Default)]
struct Faults {
    state: Mutex<(Option<axum::body::Bytes>, usize)>,
    injected: AtomicUsize,
}

async fn drop_every_third(State(faults): State<Arc<Faults>>, req: Request, next: Next) -> Response {
    if req.uri().path() != "/update" {
        return next.run(req).await;
    }
    let (parts, body) = req.into_parts();
    let bytes = axum::body::to_bytes(body, 1 << 20).await.unwrap();
    let drop = {
        let mut state = faults.state.lock().unwrap();
        let first_attempt = state.0.as_ref() != Some(&bytes);
        if first_attempt {
            state.0 = Some(bytes.clone());
            state.1 += 1;
        }
        first_attempt && state.1 % 3 == 0
    };
    if drop {
        faults.injected.fetch_add(1, Ordering::SeqCst);
        return (StatusCode::SERVICE_UNAVAILABLE, "dropped").into_response();
    }
    next.run(Request::from_parts(parts, Body::from(bytes))).await
}

fn faulty_server(store: Arc<ChannelStore>) -> (SocketAddr, Arc<Faults>) {
    let faults = Arc::new(Faults::default());
    let app = agrisense_service::router(store)
        .layer(axum::middleware::from_fn_with_state(faults.clone(), drop_every_third));
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || runtime.block_on(async { axum::serve(listener, app).await }));
    (addr, faults)
}

type StoredRow = (DateTime<Utc>, [Option<String>; 8]);

fn c9_order(c: &mut Check) {
    let spec = agrisense_cli::load_spec("paper_hour").unwrap();
    for (label, attempts) in [("retry", 5u32), ("backlog", 1u32)] {
        let (store, _) = manual_store(0);
        let (addr, faults) = faulty_server(store.clone());
        let client = ServiceClient::new(&format!("http://{addr}")).unwrap().with_write_key(KEY);
        let retry = RetryPolicy { max_attempts: attempts, ..RetryPolicy::default() };
        let mut publisher = Publisher::new(client, retry, 1000).with_sleeper(|_| {});
        let gateway = Gateway::new(GatewayConfig::default(), AdcFrontend::default()).unwrap();
        let report = run_scenario(&spec, &gateway, &mut publisher, &RunOptions::new(t0()), |_| {}).unwrap();

        let injected = faults.injected.load(Ordering::SeqCst);
        c.ensure(injected >= 120, || format!("{label}: only {injected} faults injected"));
        c.ensure(report.backlog_left == 0 && report.overflow_drops == 0 && report.rejected == 0, || {
            format!("{label}: backlog {} drops {} rejected {}", report.backlog_left, report.overflow_drops, report.rejected)
        });
        c.ensure(report.acknowledged == (1..=361).collect::<Vec<_>>(), || format!("{label}: acks out of order"));

        let page = ServiceClient::new(&format!("http://{addr}")).unwrap().feeds(1, 8000, None).unwrap();
        let stored: Vec<StoredRow> = page.feeds.iter().map(|e| (e.created_at, e.fields.clone())).collect();
        let acquired: Vec<StoredRow> =
            report.readings.iter().map(|r| (r.timestamp, r.to_fields())).collect();
        c.ensure(stored.len() == 361, || format!("{label}: {} entries stored", stored.len()));
        c.ensure(stored == acquired, || format!("{label}: stored sequence differs from acquisition order"));
        c.note(format!("{label}: {injected} faults, {} transport calls", publisher.attempts()));
    }
}

fn main() {
    let results = [
        criterion(1, "paper-hour replay", Some(Duration::from_secs(10)), c1_paper_hour),
        criterion(2, "range conformance", Some(Duration::from_secs(5)), c2_ranges),
        criterion(3, "ADC properties", Some(Duration::from_secs(5)), c3_adc),
        criterion(4, "moving-average oracle", Some(Duration::from_secs(2)), c4_moving_average),
        criterion(5, "alert exactness", None, c5_alerts),
        criterion(6, "irrigation truth table", None, c6_irrigation),
        criterion(7, "duty-cycle energy", None, c7_duty_cycle),
        criterion(8, "service contract", None, |c| {
            for (part, f) in [
                ("a", c8a_crash_recovery as fn(&mut Check)),
                ("b", c8b_rate_limit),
                ("c", c8c_concurrency),
                ("d", c8d_golden),
            ] {
                let before = c.failures.len();
                let outcome = catch_unwind(AssertUnwindSafe(|| f(c)));
                if let Err(e) = outcome {
                    let msg = e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panic".into());
                    c.failures.push(format!("({part}) panicked: {msg}"));
                }
                let ok = c.failures.len() == before;
                c.note(format!("({part}) {}", if ok { "ok" } else { "failed" }));
            }
        }),
        criterion(9, "end-to-end order preservation", None, c9_order),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
