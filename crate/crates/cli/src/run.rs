//! Subcommand execution: seeded deterministic runs that leave their
//! results on disk.
//!
//! Every command writes one JSON document (an envelope carrying the
//! library version, the config hash, and the master seed around the
//! command's payload) plus CSV side-files for plotting. Identical config
//! hash and seed reproduce every artifact byte for byte: all randomness
//! flows from the master seed through fixed substreams, floats are printed
//! in shortest round-trip form, and parallel sweep results are collected
//! and sorted on a deterministic key before anything is written.

use std::path::{Path, PathBuf};

use metasim_core::channel::{
    self, broadside_cut_direction, farfield_steering, generate_user_channels, ChannelSet,
    GeometryContext,
};
use metasim_core::framework::{
    build_effective_matrix, ArchKind, ArchitectureSpec, BasebandProcessor, FeedingMatrix,
    ReconfigState,
};
use metasim_core::metrics::{beam_pattern, sum_rate, BeamPoint, ScenarioResult};
use metasim_core::optimize::{
    alternating_optimize_with_feeds, compute_isac_references, gradient_ascent, ObjectiveKind,
    OptimizerConfig, OptimizationTrace,
};
use metasim_core::{CMatrix, CVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    build_architecture, config_hash, CliError, ScenarioConfig, WaveformConfig,
};
use crate::plotdata::{emit_plotdata, PlotKind, PlotRecord};

/// The subcommands the binary exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Metrics for the unoptimized (all elements at phase zero) state.
    Simulate,
    /// Tune the surface (and, for waveguide-fed kinds, the precoder).
    Optimize,
    /// Pilot-based channel recovery against a known ground truth.
    Estimate,
    /// Design a periodic element modulation splitting carrier and harmonic.
    Waveform,
    /// Rate versus elements-per-layer and layer count, across seeds.
    Sweep,
    /// Communication/sensing trade-off across the weight grid.
    Pareto,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::Estimate => "estimate",
            Command::Waveform => "waveform",
            Command::Sweep => "sweep",
            Command::Pareto => "pareto",
        }
    }
}

/// Flags that override or complete the config for one invocation.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's seed list with a single seed.
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
    /// Size of the worker pool for sweeps; library default when absent.
    pub threads: Option<usize>,
    /// Refuse implicit fallbacks: the seed, the output directory, and the
    /// section a command consumes must all be stated explicitly.
    pub strict: bool,
}

/// What a command left on disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    data: T,
}

#[derive(Serialize)]
struct EstimateRow {
    slots: usize,
    nmse: f64,
    condition_number: f64,
}

#[derive(Serialize)]
struct WaveformReport {
    slots: usize,
    sense_weight: f64,
    comm_alignment: f64,
    sense_gain: f64,
    c0: Vec<[f64; 2]>,
    c1: Vec<[f64; 2]>,
}

#[derive(Serialize, Clone)]
struct SweepRow {
    layers: usize,
    elements_per_layer: usize,
    seed: u64,
    sum_rate: f64,
}

/// Execute one subcommand against a validated config. Artifacts land in
/// the resolved output directory; the returned outcome lists them.
pub fn run(cmd: Command, cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let hash = config_hash(cfg);
    let seed = resolve_seed(cfg, opts)?;
    let out = resolve_out_dir(cfg, opts)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io {
        path: out.clone(),
        detail: e.to_string(),
    })?;
    let ctx = RunContext {
        cfg,
        opts,
        hash,
        seed,
        out,
    };
    match cmd {
        Command::Simulate => simulate(&ctx),
        Command::Optimize => optimize(&ctx),
        Command::Estimate => estimate(&ctx),
        Command::Waveform => waveform(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::Pareto => pareto(&ctx),
    }
}

struct RunContext<'a> {
    cfg: &'a ScenarioConfig,
    opts: &'a RunOptions,
    hash: String,
    seed: u64,
    out: PathBuf,
}

fn resolve_seed(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<u64, CliError> {
    if let Some(s) = opts.seed {
        return Ok(s);
    }
    if let Some(s) = cfg.seeds.first() {
        return Ok(*s);
    }
    if opts.strict {
        return Err(CliError::Validation {
            issues: vec!["seeds: strict mode requires an explicit seed (config `seeds` or --seed)".into()],
        });
    }
    Ok(0)
}

fn resolve_out_dir(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<PathBuf, CliError> {
    if let Some(dir) = &opts.out {
        return Ok(dir.clone());
    }
    if let Some(dir) = &cfg.output_dir {
        return Ok(dir.clone());
    }
    if opts.strict {
        return Err(CliError::Validation {
            issues: vec![
                "output_dir: strict mode requires an explicit output directory (config `output_dir` or --out)".into(),
            ],
        });
    }
    Ok(PathBuf::from("out"))
}

/// Seeds used by the sweep grid: the full config list, overridden by a
/// single --seed, defaulting to seed 0 alone.
fn resolve_seed_list(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<u64>, CliError> {
    if let Some(s) = opts.seed {
        return Ok(vec![s]);
    }
    if !cfg.seeds.is_empty() {
        return Ok(cfg.seeds.clone());
    }
    if opts.strict {
        return Err(CliError::Validation {
            issues: vec!["seeds: strict mode requires an explicit seed list for sweeps".into()],
        });
    }
    Ok(vec![0])
}

impl RunContext<'_> {
    /// The optimizer section, or the communication default outside strict
    /// mode.
    fn optimizer_config(&self, command: &str) -> Result<OptimizerConfig, CliError> {
        match &self.cfg.optimizer {
            Some(c) => Ok(c.clone()),
            None if self.opts.strict => Err(CliError::Validation {
                issues: vec![format!(
                    "optimizer: strict mode requires the section `{command}` consumes to be explicit"
                )],
            }),
            None => Ok(OptimizerConfig::new(ObjectiveKind::SumRate)),
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, command: &str, data: T) -> Result<PathBuf, CliError> {
        let envelope = Envelope {
            version: metasim_core::VERSION,
            command,
            config_hash: &self.hash,
            seed: self.seed,
            data,
        };
        let mut text = serde_json::to_string_pretty(&envelope).expect("artifact serializes");
        text.push('\n');
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Io {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        Ok(path)
    }
}

/// Channel realizations plus sensing steering for the configured scenario.
fn build_channels(
    spec: &ArchitectureSpec,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<ChannelSet, CliError> {
    let ch = &cfg.channel;
    let model = ch
        .model
        .ok_or_else(|| CliError::Validation {
            issues: vec!["channel.model: required field is missing".into()],
        })?
        .to_core();
    let noise = ch.noise_power.ok_or_else(|| CliError::Validation {
        issues: vec!["channel.noise_power: required field is missing".into()],
    })?;
    if ch.users.is_empty() {
        return Err(CliError::Validation {
            issues: vec!["channel.users: this command needs at least one user".into()],
        });
    }
    let geom = GeometryContext::from_spec(spec)?;
    let mut channels = generate_user_channels(&geom, &ch.users, model, noise, seed)?;
    if !ch.targets.is_empty() {
        let lambda = spec.wavelength();
        let positions = spec.radiating_positions();
        let steering = ch
            .targets
            .iter()
            .map(|t| {
                farfield_steering(
                    positions,
                    t.azimuth_deg.to_radians(),
                    t.elevation_deg.to_radians(),
                    lambda,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        channels = channels.with_targets(steering);
    }
    Ok(channels)
}

/// The power-split baseband used when a command does not optimize it:
/// a scalar feed for single-chain surfaces, an equal-power diagonal map
/// otherwise.
fn default_baseband(spec: &ArchitectureSpec, power: f64) -> BasebandProcessor {
    if spec.num_rf_chains == 1 && spec.num_streams == 1 {
        BasebandProcessor::scalar_power(power)
    } else {
        BasebandProcessor::equal_power_diag(spec.num_rf_chains, spec.num_streams, power)
    }
}

/// stream -> user assignment: the config's map, or streams assigned to
/// users in order.
fn resolve_map(
    spec: &ArchitectureSpec,
    channels: &ChannelSet,
    cfg: &OptimizerConfig,
) -> Result<Vec<usize>, CliError> {
    if let Some(map) = &cfg.stream_map {
        return Ok(map.clone());
    }
    let users = channels.h.nrows();
    if spec.num_streams > users {
        return Err(CliError::Validation {
            issues: vec![format!(
                "optimizer.stream_map: {} streams cannot map onto {} users without an explicit assignment",
                spec.num_streams, users
            )],
        });
    }
    Ok((0..spec.num_streams).collect())
}

/// Broadside-cut beam pattern of an effective matrix: -90..=90 degrees in
/// one-degree steps.
fn beampattern_cut(
    spec: &ArchitectureSpec,
    e: &CMatrix,
    label: &str,
) -> Result<(Vec<BeamPoint>, Vec<PlotRecord>), CliError> {
    let lambda = spec.wavelength();
    let positions = spec.radiating_positions();
    let mut points = Vec::with_capacity(181);
    let mut records = Vec::with_capacity(181);
    for deg in -90..=90 {
        let theta = (deg as f64).to_radians();
        let (az, el) = broadside_cut_direction(theta);
        let a = farfield_steering(positions, az, el, lambda)?;
        let power = beam_pattern(e, &a)?;
        points.push(BeamPoint {
            angle_deg: deg as f64,
            power,
        });
        records.push(PlotRecord::Beampattern {
            angle_deg: deg as f64,
            power,
            label: label.to_string(),
        });
    }
    Ok((points, records))
}

fn target_powers(e: &CMatrix, channels: &ChannelSet) -> Result<Vec<f64>, CliError> {
    channels
        .target_steering
        .iter()
        .map(|a| beam_pattern(e, a).map_err(CliError::from))
        .collect()
}

fn scenario_result(
    ctx: &RunContext<'_>,
    spec: &ArchitectureSpec,
    channels: &ChannelSet,
    e: &CMatrix,
    stream_map: &[usize],
    objective_trace: Vec<f64>,
    label: &str,
) -> Result<(ScenarioResult, Vec<PlotRecord>), CliError> {
    let (rate, sinrs) = sum_rate(&channels.h, e, channels.noise_power, stream_map)?;
    let (beampattern, records) = beampattern_cut(spec, e, label)?;
    let target_power = target_powers(e, channels)?;
    Ok((
        ScenarioResult {
            sum_rate: rate,
            per_user_sinr: sinrs,
            beampattern,
            target_power,
            objective_trace,
            seed: ctx.seed,
            config_hash: ctx.hash.clone(),
        },
        records,
    ))
}

fn simulate(ctx: &RunContext<'_>) -> Result<RunOutcome, CliError> {
    let spec = build_architecture(&ctx.cfg.architecture)?;
    let channels = build_channels(&spec, ctx.cfg, ctx.seed)?;
    let opt = ctx.optimizer_config("simulate")?;
    let feeds = channel::build_feeds(&spec, 1.0)?;
    let baseband = default_baseband(&spec, opt.transmit_power);
    let state = ReconfigState::zero_phase(&spec);
    let e = build_effective_matrix(&spec, &baseband, &feeds, &state)?;
    let map = resolve_map(&spec, &channels, &opt)?;
    let (result, records) =
        scenario_result(ctx, &spec, &channels, &e.matrix, &map, Vec::new(), "simulate")?;
    let json = ctx.write_json("simulate.json", "simulate", &result)?;
    let csv = ctx.out.join("beampattern.csv");
    emit_plotdata(&records, PlotKind::Beampattern, &csv)?;
    Ok(RunOutcome {
        artifacts: vec![json, csv],
    })
}

fn run_optimizer(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    baseband: &BasebandProcessor,
    channels: &ChannelSet,
    opt: &OptimizerConfig,
) -> Result<OptimizationTrace, CliError> {
    let mut opt = opt.clone();
    if matches!(opt.objective, ObjectiveKind::WeightedIsac { .. }) && opt.references.is_none() {
        opt.references = Some(compute_isac_references(spec, baseband, feeds, channels, &opt)?);
    }
    let trace = if matches!(spec.kind, ArchKind::Dma | ArchKind::Rhs) {
        alternating_optimize_with_feeds(spec, feeds, channels, &opt)?
    } else {
        let state0 = ReconfigState::zero_phase(spec);
        gradient_ascent(spec, baseband, feeds, &state0, channels, &opt)?
    };
    Ok(trace)
}

fn optimize(ctx: &RunContext<'_>) -> Result<RunOutcome, CliError> {
    let spec = build_architecture(&ctx.cfg.architecture)?;
    let channels = build_channels(&spec, ctx.cfg, ctx.seed)?;
    let mut opt = ctx.optimizer_config("optimize")?;
    // The run's master seed governs every random draw, the start points
    // included; the section's own seed field only matters to library users.
    opt.seed = ctx.seed;
    let feeds = channel::build_feeds(&spec, 1.0)?;
    let baseband = default_baseband(&spec, opt.transmit_power);
    let trace = run_optimizer(&spec, &feeds, &baseband, &channels, &opt)?;
    let e = build_effective_matrix(&spec, &trace.final_baseband, &feeds, &trace.final_state)?;
    let map = resolve_map(&spec, &channels, &opt)?;
    let (result, records) = scenario_result(
        ctx,
        &spec,
        &channels,
        &e.matrix,
        &map,
        trace.objective.clone(),
        "optimize",
    )?;
    let json = ctx.write_json("optimize.json", "optimize", &result)?;
    let csv = ctx.out.join("beampattern.csv");
    emit_plotdata(&records, PlotKind::Beampattern, &csv)?;
    let trace_csv = ctx.out.join("trace.csv");
    write_trace_csv(&trace_csv, &trace.objective)?;
    Ok(RunOutcome {
        artifacts: vec![json, csv, trace_csv],
    })
}

/// Accepted objective value per iteration, `iteration,objective` with the
/// initial point as iteration 0.
fn write_trace_csv(path: &Path, objective: &[f64]) -> Result<(), CliError> {
    let mut text = String::from("iteration,objective\n");
    for (i, v) in objective.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn estimate(ctx: &RunContext<'_>) -> Result<RunOutcome, CliError> {
    let spec = build_architecture(&ctx.cfg.architecture)?;
    let est = match &ctx.cfg.estimation {
        Some(e) => e.clone(),
        None if ctx.opts.strict => {
            return Err(CliError::Validation {
                issues: vec!["estimation: strict mode requires the section `estimate` consumes to be explicit".into()],
            })
        }
        None => crate::config::EstimationConfig {
            slots: None,
            slots_list: Vec::new(),
            noise_power: None,
            ridge: 0.0,
        },
    };
    let channels = build_channels(&spec, ctx.cfg, ctx.seed)?;
    // Ground truth: the first user's channel row, as a column vector.
    let truth: CVector = channels.h.row(0).transpose();
    let noise = est
        .noise_power
        .or(ctx.cfg.channel.noise_power)
        .expect("channel noise validated in build_channels");
    let n = spec.radiating_elements();
    let k = spec.num_rf_chains;
    let default_slots = n.div_ceil(k) + 2;
    let slot_counts: Vec<usize> = if est.slots_list.is_empty() {
        vec![est.slots.unwrap_or(default_slots)]
    } else {
        est.slots_list.clone()
    };
    let feeds = channel::build_feeds(&spec, 1.0)?;
    let mut rows = Vec::with_capacity(slot_counts.len());
    let mut records = Vec::with_capacity(slot_counts.len());
    for &slots in &slot_counts {
        let report = metasim_core::estimate::estimate_channel(
            &spec, &feeds, &truth, slots, noise, est.ridge, ctx.seed,
        )?;
        let nmse = report.nmse.unwrap_or(f64::NAN);
        rows.push(EstimateRow {
            slots,
            nmse,
            condition_number: report.condition_number,
        });
        records.push(PlotRecord::NmseVsT {
            slots,
            nmse,
            seed: ctx.seed,
        });
    }
    let json = ctx.write_json("estimate.json", "estimate", &rows)?;
    let csv = ctx.out.join("nmse_vs_T.csv");
    emit_plotdata(&records, PlotKind::NmseVsT, &csv)?;
    Ok(RunOutcome {
        artifacts: vec![json, csv],
    })
}

fn waveform(ctx: &RunContext<'_>) -> Result<RunOutcome, CliError> {
    let spec = build_architecture(&ctx.cfg.architecture)?;
    let wf = match &ctx.cfg.waveform {
        Some(w) => w.clone(),
        None if ctx.opts.strict => {
            return Err(CliError::Validation {
                issues: vec!["waveform: strict mode requires the section `waveform` consumes to be explicit".into()],
            })
        }
        None => WaveformConfig {
            slots: None,
            sense_weight: None,
            comm_magnitude: None,
            sense_azimuth_deg: None,
            sense_elevation_deg: None,
            comm_phases: None,
        },
    };
    let n = spec.radiating_elements();
    let slots = wf.slots.unwrap_or(4);
    let weight = wf.sense_weight.unwrap_or(0.5);
    let phases = wf.comm_phases.clone().unwrap_or_else(|| vec![0.0; n]);
    if phases.len() != n {
        return Err(CliError::Validation {
            issues: vec![format!(
                "waveform.comm_phases: expected {n} entries (one per radiating element), got {}",
                phases.len()
            )],
        });
    }
    // Sensing direction: explicit angles win, then the first channel
    // target, then broadside.
    let (az_deg, el_deg) = match (wf.sense_azimuth_deg, wf.sense_elevation_deg) {
        (Some(a), Some(e)) => (a, e),
        (a, e) => {
            let fallback = ctx
                .cfg
                .channel
                .targets
                .first()
                .map(|t| (t.azimuth_deg, t.elevation_deg))
                .unwrap_or((0.0, 90.0));
            (a.unwrap_or(fallback.0), e.unwrap_or(fallback.1))
        }
    };
    let design = metasim_core::waveform::design_split_pattern(
        &spec,
        &phases,
        az_deg.to_radians(),
        el_deg.to_radians(),
        slots,
        ctx.seed,
        weight,
        wf.comm_magnitude,
    )?;
    let report = WaveformReport {
        slots,
        sense_weight: weight,
        comm_alignment: design.comm_alignment,
        sense_gain: design.sense_gain,
        c0: design.c0.iter().map(|z| [z.re, z.im]).collect(),
        c1: design.c1.iter().map(|z| [z.re, z.im]).collect(),
    };
    // Beam cuts of the carrier (k = 0) and first-harmonic (k = 1)
    // patterns, distinguished by the label column.
    let feeds = channel::build_feeds(&spec, 1.0)?;
    let power = ctx
        .cfg
        .optimizer
        .as_ref()
        .map(|o| o.transmit_power)
        .unwrap_or(1.0);
    let baseband = default_baseband(&spec, power);
    let static_state = ReconfigState::zero_phase(&spec);
    let decomp = metasim_core::waveform::harmonic_coefficients(&design.pattern);
    let lambda = spec.wavelength();
    let positions = spec.radiating_positions();
    let mut records = Vec::with_capacity(2 * 181);
    for k in 0..=1usize {
        for deg in -90..=90 {
            let theta = (deg as f64).to_radians();
            let (az, el) = broadside_cut_direction(theta);
            let a = farfield_steering(positions, az, el, lambda)?;
            let power = metasim_core::waveform::harmonic_beam_pattern(
                &spec,
                &feeds,
                &baseband,
                &static_state,
                &decomp,
                k,
                &a,
            )?;
            records.push(PlotRecord::Beampattern {
                angle_deg: deg as f64,
                power,
                label: format!("k={k}"),
            });
        }
    }
    let json = ctx.write_json("waveform.json", "waveform", &report)?;
    let csv = ctx.out.join("waveform_beampattern.csv");
    emit_plotdata(&records, PlotKind::Beampattern, &csv)?;
    Ok(RunOutcome {
        artifacts: vec![json, csv],
    })
}

fn sweep(ctx: &RunContext<'_>) -> Result<RunOutcome, CliError> {
    let sw = ctx.cfg.sweep.as_ref().ok_or_else(|| CliError::Validation {
        issues: vec!["sweep: the sweep command needs a `sweep` section".into()],
    })?;
    if sw.layers.is_empty() || sw.elements_per_layer.is_empty() {
        return Err(CliError::Validation {
            issues: vec![
                "sweep.layers / sweep.elements_per_layer: sweep axes must be nonempty".into(),
            ],
        });
    }
    // The sweep regenerates the architecture per grid point, so it needs
    // the parametric stacked preset, not a frozen custom spec.
    let base = match &ctx.cfg.architecture {
        crate::config::ArchitectureConfig::Sim {
            rf_chains,
            streams,
            spacing_wl,
            layer_gap_wl,
            carrier_frequency,
            ..
        } => (
            rf_chains.unwrap_or(2),
            *streams,
            *spacing_wl,
            *layer_gap_wl,
            carrier_frequency.ok_or_else(|| CliError::Validation {
                issues: vec!["architecture.carrier_frequency: required field is missing".into()],
            })?,
        ),
        _ => {
            return Err(CliError::Validation {
                issues: vec![
                    "architecture.kind: the sweep command varies layers, so it needs the `sim` preset".into(),
                ],
            })
        }
    };
    let seeds = resolve_seed_list(ctx.cfg, ctx.opts)?;
    let opt = ctx.optimizer_config("sweep")?;
    let mut grid = Vec::new();
    for &l in &sw.layers {
        for &n in &sw.elements_per_layer {
            for &seed in &seeds {
                grid.push((l, n, seed));
            }
        }
    }
    let worker = |&(l, n, seed): &(usize, usize, u64)| -> Result<SweepRow, CliError> {
        let (k, s, spacing, gap_wl, freq) = base;
        let lambda = metasim_core::SPEED_OF_LIGHT / freq;
        let spec = ArchitectureSpec::sim(
            l,
            n,
            k,
            s.unwrap_or(k),
            spacing.unwrap_or(crate::config::DEFAULT_SPACING_WL),
            gap_wl.unwrap_or(crate::config::DEFAULT_LAYER_GAP_WL) * lambda,
            freq,
        );
        let channels = build_channels(&spec, ctx.cfg, seed)?;
        let mut opt = opt.clone();
        opt.seed = seed;
        let feeds = channel::build_feeds(&spec, 1.0)?;
        let baseband = default_baseband(&spec, opt.transmit_power);
        let trace = run_optimizer(&spec, &feeds, &baseband, &channels, &opt)?;
        let e = build_effective_matrix(&spec, &trace.final_baseband, &feeds, &trace.final_state)?;
        let map = resolve_map(&spec, &channels, &opt)?;
        let (rate, _) = sum_rate(&channels.h, &e.matrix, channels.noise_power, &map)?;
        Ok(SweepRow {
            layers: l,
            elements_per_layer: n,
            seed,
            sum_rate: rate,
        })
    };
    // Grid points are independent; run them on the worker pool and
    // collect through one sorted vector so output order never depends on
    // scheduling.
    let mut rows: Vec<SweepRow> = match ctx.opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Validation {
                issues: vec![format!("--threads: {e}")],
            })?
            .install(|| grid.par_iter().map(worker).collect::<Result<_, _>>())?,
        None => grid.par_iter().map(worker).collect::<Result<_, _>>()?,
    };
    rows.sort_by_key(|r| (r.layers, r.elements_per_layer, r.seed));
    let records: Vec<PlotRecord> = rows
        .iter()
        .map(|r| PlotRecord::SeVsElements {
            elements_per_layer: r.elements_per_layer,
            layers: r.layers,
            seed: r.seed,
            sum_rate: r.sum_rate,
        })
        .collect();
    let json = ctx.write_json("sweep.json", "sweep", &rows)?;
    let csv = ctx.out.join("se_vs_elements.csv");
    emit_plotdata(&records, PlotKind::SeVsElements, &csv)?;
    Ok(RunOutcome {
        artifacts: vec![json, csv],
    })
}

fn pareto(ctx: &RunContext<'_>) -> Result<RunOutcome, CliError> {
    let par = ctx.cfg.pareto.as_ref().ok_or_else(|| CliError::Validation {
        issues: vec!["pareto: the pareto command needs a `pareto` section".into()],
    })?;
    if par.omegas.is_empty() {
        return Err(CliError::Validation {
            issues: vec!["pareto.omegas: the weight grid must be nonempty".into()],
        });
    }
    let spec = build_architecture(&ctx.cfg.architecture)?;
    let channels = build_channels(&spec, ctx.cfg, ctx.seed)?;
    if channels.target_steering.is_empty() {
        return Err(CliError::Validation {
            issues: vec!["channel.targets: the trade-off sweep needs at least one sensing target".into()],
        });
    }
    let mut opt = ctx.optimizer_config("pareto")?;
    opt.seed = ctx.seed;
    let feeds = channel::build_feeds(&spec, 1.0)?;
    let baseband = default_baseband(&spec, opt.transmit_power);
    let points = metasim_core::optimize::pareto_sweep(
        &spec, &baseband, &feeds, &channels, &par.omegas, &opt,
    )?;
    let records: Vec<PlotRecord> = points
        .iter()
        .map(|p| PlotRecord::Pareto {
            omega: p.omega,
            sum_rate: p.rate,
            worst_target_power: p.worst_target_power,
        })
        .collect();
    let json = ctx.write_json("pareto.json", "pareto", &points)?;
    let csv = ctx.out.join("pareto.csv");
    emit_plotdata(&records, PlotKind::Pareto, &csv)?;
    Ok(RunOutcome {
        artifacts: vec![json, csv],
    })
}
