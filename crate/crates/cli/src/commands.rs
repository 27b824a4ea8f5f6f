use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use agrisense_core::analytics::{DutyCycleConfig, ForecastConfig, IrrigationAction};
use agrisense_core::channel::{parse_timestamp, ChannelStore, Durability, LocalTransport, NewChannel, StoreConfig, SystemClock};
use agrisense_core::env_sim::{bundled, load_scenario};
use agrisense_core::gateway::{ChannelTransport, Publisher};
use agrisense_core::pipeline::{run_scenario, RunOptions, RunReport};
use agrisense_core::{AdcFrontend, AlertRuleSet, Gateway, GatewayConfig, ScenarioSpec};
use agrisense_service::{ensure_channels, ServiceConfig};
use chrono::{DurationRound, TimeDelta, Utc};

use crate::plot::PlotSeries;
use crate::table::TableView;
use crate::watch::{alert_line, watch, WatchOptions};
use crate::{Cli, CliError, Command, GlobalArgs, PlotArgs, RunArgs, ServeArgs, ServiceClient, WatchArgs, DEFAULT_ENDPOINT};

pub(crate) fn dispatch(cli: Cli, out: &mut impl Write, err: &mut impl Write) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Run(ref args) => run(g, args, out, err),
        Command::Serve(ref args) => serve(args, out),
        Command::Table => table(g, out),
        Command::Plot(ref args) => plot(g, args, out, err),
        Command::WatchAlerts(ref args) => watch_alerts(g, args, out, err),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn load_rules(path: Option<&Path>) -> Result<AlertRuleSet, CliError> {
    let Some(path) = path else { return Ok(AlertRuleSet::default()) };
    let rules: AlertRuleSet = toml::from_str(&read_file(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    rules.validate().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(rules)
}

pub fn load_spec(name_or_path: &str) -> Result<ScenarioSpec, CliError> {
    let text = match bundled(name_or_path) {
        Some(text) => text.to_string(),
        None => {
            let path = Path::new(name_or_path);
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "no bundled scenario or file named {name_or_path:?}"
                )));
            }
            read_file(path)?
        }
    };
    load_scenario(&text).map_err(|e| CliError::Data(format!("scenario {name_or_path}: {e}")))
}

fn client(g: &GlobalArgs) -> Result<ServiceClient, CliError> {
    let endpoint = g.endpoint.as_deref().unwrap_or(DEFAULT_ENDPOINT);
    Ok(ServiceClient::new(endpoint)?.with_read_key(g.read_key.clone()))
}

fn run(g: &GlobalArgs, args: &RunArgs, out: &mut impl Write, err: &mut impl Write) -> Result<(), CliError> {
    let spec = load_spec(&g.scenario)?;
    let rules = load_rules(g.rules.as_deref())?;
    let start = match &args.start {
        Some(text) => parse_timestamp(text).ok_or_else(|| CliError::Usage(format!("bad --start {text:?}")))?,
        None => Utc::now().duration_trunc(TimeDelta::seconds(1)).expect("whole seconds"),
    };
    let config = GatewayConfig {
        sample_interval_s: spec.tick_s,
        endpoint: g.endpoint.clone(),
        write_key: args.write_key.clone().unwrap_or_default(),
        ..GatewayConfig::default()
    };
    let gateway = Gateway::new(config.clone(), AdcFrontend::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = RunOptions {
        pace: g.speed,
        forecast: ForecastConfig::default(),
        duty_cycle: args
            .duty_cycle
            .then(|| DutyCycleConfig { fair_weather_hpa: args.fair_hpa, ..DutyCycleConfig::default() }),
        rules,
        moisture_floor: args.moisture_floor,
        moisture_ceiling: args.moisture_ceiling,
        ..RunOptions::new(start)
    };
    if opts.moisture_floor.partial_cmp(&opts.moisture_ceiling) != Some(std::cmp::Ordering::Less) {
        return Err(CliError::Usage("--moisture-floor must be below --moisture-ceiling".into()));
    }

    let report = match &g.endpoint {
        Some(endpoint) => {
            let key = args
                .write_key
                .clone()
                .ok_or_else(|| CliError::Usage("--write-key is required with --endpoint".into()))?;
            let transport = ServiceClient::new(endpoint)?.with_write_key(key);
            drive(&spec, &gateway, transport, &config, &opts, args.verbose, out)?
        }
        None => {
            let store_cfg = StoreConfig { rate_limit: TimeDelta::zero(), durability: Durability::Sync };
            let store = match &args.data_dir {
                Some(dir) => ChannelStore::open(dir, store_cfg, Arc::new(SystemClock)),
                None => Ok(ChannelStore::in_memory(store_cfg, Arc::new(SystemClock))),
            }
            .map_err(|e| CliError::Data(e.to_string()))?;
            let store = Arc::new(store);
            let meta = match store.channel(g.channel) {
                Some(meta) => meta,
                None => store
                    .create_channel(NewChannel { id: Some(g.channel), ..NewChannel::sensors("farm") })
                    .map_err(|e| CliError::Data(e.to_string()))?,
            };
            let transport = LocalTransport { store, write_key: meta.write_key };
            drive(&spec, &gateway, transport, &config, &opts, args.verbose, out)?
        }
    };

    let _ = writeln!(
        out,
        "cycles {}  published {}  skipped {}  backlog {}  dropped {}  rejected {}",
        report.cycles,
        report.acknowledged.len(),
        report.skipped_cycles,
        report.backlog_left,
        report.overflow_drops,
        report.rejected
    );
    let _ = writeln!(
        out,
        "sensor energy {:.1} mJ (always on {:.1} mJ)",
        report.ledger.total_energy_mj(),
        report.always_on_energy_mj
    );
    if report.backlog_left > 0 {
        let _ = writeln!(err, "{} readings could not be delivered", report.backlog_left);
        return Err(CliError::Network(format!("{} readings left undelivered", report.backlog_left)));
    }
    Ok(())
}

fn drive<C: ChannelTransport>(
    spec: &ScenarioSpec,
    gateway: &Gateway,
    transport: C,
    config: &GatewayConfig,
    opts: &RunOptions<f64>,
    verbose: bool,
    out: &mut impl Write,
) -> Result<RunReport<f64>, CliError> {
    let mut publisher = Publisher::new(transport, config.retry, config.backlog_capacity);
    let mut last_action: Option<IrrigationAction> = None;
    run_scenario(spec, gateway, &mut publisher, opts, |cycle| {
        if verbose {
            if let Some(lcd) = &cycle.lcd {
                let [a, b] = lcd.lines();
                let _ = writeln!(out, "{}  |{a}|{b}|", agrisense_core::channel::format_timestamp(&cycle.at));
            }
        }
        for event in &cycle.alerts {
            let _ = writeln!(out, "{}", alert_line(event));
        }
        if let Some(cmd) = &cycle.irrigation {
            if cmd.action != IrrigationAction::Hold && last_action != Some(cmd.action) {
                let _ = writeln!(
                    out,
                    "{}  irrigation {:?}: {}",
                    agrisense_core::channel::format_timestamp(&cmd.timestamp),
                    cmd.action,
                    cmd.reason
                );
                last_action = Some(cmd.action);
            }
        }
    })
    .map_err(|e| CliError::Usage(e.to_string()))
}

fn serve(args: &ServeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => ServiceConfig::from_toml(&read_file(path)?).map_err(|e| CliError::Data(e.to_string()))?,
        None => ServiceConfig::default(),
    };
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    if args.data_dir.is_some() {
        config.data_dir = args.data_dir.clone();
    }
    if let Some(s) = args.rate_limit {
        config.rate_limit_s = s;
    }
    let store = match &config.data_dir {
        Some(dir) => ChannelStore::open(dir, config.store_config(), Arc::new(SystemClock)),
        None => Ok(ChannelStore::in_memory(config.store_config(), Arc::new(SystemClock))),
    }
    .map_err(|e| CliError::Data(e.to_string()))?;
    let mut created = ensure_channels(&store, &config.channels).map_err(|e| CliError::Data(e.to_string()))?;
    if store.channel_ids().is_empty() {
        created.push(store.create_channel(NewChannel::sensors("farm")).map_err(|e| CliError::Data(e.to_string()))?);
    }
    for meta in &created {
        let _ = writeln!(out, "created channel {} {:?} write key {}", meta.id, meta.name, meta.write_key);
    }

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Network(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .map_err(|e| CliError::Network(format!("cannot bind {}: {e}", config.bind)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Network(e.to_string()))?;
        let _ = writeln!(out, "listening on http://{addr}");
        let _ = out.flush();
        agrisense_service::serve(listener, Arc::new(store), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Network(e.to_string()))
    })
}

fn table(g: &GlobalArgs, out: &mut impl Write) -> Result<(), CliError> {
    let page = client(g)?.feeds(g.channel, g.results, None)?;
    let _ = write!(out, "{}", TableView::from_page(&page, g.results));
    Ok(())
}

fn plot(g: &GlobalArgs, args: &PlotArgs, out: &mut impl Write, err: &mut impl Write) -> Result<(), CliError> {
    if !(1..=8).contains(&args.field) {
        return Err(CliError::Usage(format!("--field must be between 1 and 8, got {}", args.field)));
    }
    let forecast = if args.forecast {
        Some(ForecastConfig::new(args.window, 1).ok_or_else(|| CliError::Usage("--window must be positive".into()))?)
    } else {
        None
    };
    let page = client(g)?.feeds(g.channel, g.results, Some(args.field))?;
    let series =
        PlotSeries::from_page(&page, args.field, forecast.as_ref()).map_err(|e| CliError::Data(e.to_string()))?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
            series.write_csv(file).map_err(|e| CliError::Data(e.to_string()))?;
            if let Some(line) = series.sparkline() {
                let _ = writeln!(out, "{line}");
            }
        }
        None => {
            series.write_csv(&mut *out).map_err(|e| CliError::Data(e.to_string()))?;
            // keep stdout a clean CSV stream
            if let Some(line) = series.sparkline() {
                let _ = writeln!(err, "{line}");
            }
        }
    }
    Ok(())
}

fn watch_alerts(g: &GlobalArgs, args: &WatchArgs, out: &mut impl Write, err: &mut impl Write) -> Result<(), CliError> {
    let rules = load_rules(g.rules.as_deref())?;
    if !(args.interval > 0.0 && args.interval.is_finite()) {
        return Err(CliError::Usage("--interval must be positive".into()));
    }
    let opts = WatchOptions {
        channel: g.channel,
        results: g.results,
        interval: Duration::from_secs_f64(args.interval),
        polls: args.polls,
    };
    watch(&client(g)?, rules, &opts, out, err, std::thread::sleep)?;
    Ok(())
}
