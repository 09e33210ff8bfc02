use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use crate::drafter::{AdaptiveDrafter, NgramIndex};
use crate::mab::{BegMab, MabStateDump};
use crate::rng::{mix_labels, RngStream};
use crate::rollout::{
    generate_workload, plan_captures, run_rollout, sd_speedup, trace_records, vanilla_plan,
    BucketSpec, DrafterKind, DrafterSnapshot, Drafters, MemoryModel, RolloutOutcome, TraceRecord,
};
use crate::spec::{spec_generate, DecodeMode, DraftSource, SpecStrategy};
use crate::spot::{
    pack_sequences, spot_train_loop, Action, AsyncCheckpointer, Coordinator, DataBuffer,
    IterationBudget, MessageKind, TrainingSession, WorkerState,
};
use crate::target::{generate_autoregressive, MarkovTargetModel, NextTokenModel};
use crate::token::TokenId;

const LABEL_TARGET: u64 = 1;
const LABEL_WARMUP: u64 = 2;
const LABEL_DRIFT: u64 = 3;
const LABEL_WORKLOAD: u64 = 4;
const LABEL_ENGINE: u64 = 5;
const LABEL_CALIBRATION: u64 = 6;

/// Batch sizes of the speedup sweep.
pub const SWEEP_BATCHES: [usize; 6] = [1, 2, 4, 8, 16, 32];

pub fn strategy_label(s: &SpecStrategy) -> String {
    format!("d{}k{}v{}", s.draft_depth, s.top_k, s.tokens_to_verify)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub baseline_time: f64,
    pub tlt_time: f64,
    pub speedup: f64,
    pub requests: usize,
    pub tokens: usize,
    pub mean_len: f64,
    pub p50_len: usize,
    pub p75_len: usize,
    pub p99_len: usize,
    pub max_len: usize,
    pub sd_steps: usize,
    pub sd_request_steps: usize,
    /// Mean accepted draft tokens per speculative request-step.
    pub mean_accept: Option<f64>,
    pub drafter: Option<DrafterKind>,
    pub drafter_version: u64,
    pub greedy_match_rate: f64,
    pub training_iterations: u64,
    pub training_tokens: u64,
    pub checkpoints: usize,
    pub state_changes: usize,
    pub start_training: usize,
    pub join_training: usize,
    pub preempts: usize,
    pub checkpoint_requests: usize,
    pub responses_identical: bool,
    #[serde(skip)]
    pub mab_selections: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub step: u64,
    pub strategy: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionRate {
    pub position: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSpeedup {
    pub batch: usize,
    pub strategy: String,
    pub tokens_to_verify: usize,
    pub mean_emitted: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptureMemory {
    pub plan: String,
    pub entries: usize,
    pub memory_units: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub bucket_low: usize,
    pub strategy: String,
    pub slot: usize,
    pub reward: f64,
}

/// One engine step of the TLT arm, tagged with its RL step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineTraceRow {
    pub rl_step: u64,
    pub step: u64,
    pub clock: f64,
    pub active: usize,
    pub sd_active: bool,
    pub draft_depth: Option<usize>,
    pub top_k: Option<usize>,
    pub tokens_to_verify: Option<usize>,
    pub drafter: Option<DrafterKind>,
    pub mean_accept: Option<f64>,
}

impl EngineTraceRow {
    fn new(rl_step: u64, r: TraceRecord) -> Self {
        Self {
            rl_step,
            step: r.step,
            clock: r.clock,
            active: r.active,
            sd_active: r.sd_active,
            draft_depth: r.draft_depth,
            top_k: r.top_k,
            tokens_to_verify: r.tokens_to_verify,
            drafter: r.drafter,
            mean_accept: r.mean_accept,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub selections: Vec<SelectionRow>,
    pub baseline_total: f64,
    pub tlt_total: f64,
    pub aggregate_speedup: f64,
    pub accept_by_position: Vec<PositionRate>,
    pub speedup_vs_batch: Vec<BatchSpeedup>,
    pub capture_memory: Vec<CaptureMemory>,
    pub mab_rewards: Vec<RewardRow>,
    pub mab_state: Option<MabStateDump>,
    #[serde(skip)]
    pub engine_trace: Vec<EngineTraceRow>,
}

fn percentile(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Share of positions where the drafter's and the target's most likely next
/// tokens agree, over the first `limit` positions of `responses`.
pub fn greedy_match_rate<D>(
    drafter: &D,
    target: &MarkovTargetModel,
    prompts: &[Vec<TokenId>],
    responses: &[Vec<TokenId>],
    limit: usize,
) -> f64
where
    D: NextTokenModel + ?Sized,
{
    let mut seen = 0usize;
    let mut hits = 0usize;
    let mut ctx = Vec::new();
    'outer: for (prompt, resp) in prompts.iter().zip(responses) {
        ctx.clear();
        ctx.extend_from_slice(prompt);
        for &t in resp {
            if seen == limit {
                break 'outer;
            }
            if drafter.next_dist(&ctx).argmax() == target.argmax(&ctx) {
                hits += 1;
            }
            seen += 1;
            ctx.push(t);
        }
    }
    if seen == 0 {
        0.0
    } else {
        hits as f64 / seen as f64
    }
}

/// The starting target and the drafter warmed on its samples.
pub fn initial_models(cfg: &ExperimentConfig) -> (MarkovTargetModel, AdaptiveDrafter) {
    let root = RngStream::new(cfg.seed, 0);
    let target = MarkovTargetModel::random(cfg.target_shape(), &mut root.substream(LABEL_TARGET))
        .expect("validated shape")
        .with_temperature(cfg.target.temperature)
        .expect("validated temperature");
    let mut drafter = AdaptiveDrafter::new(cfg.drafter_config()).expect("validated drafter");
    if cfg.drafter.warmup_tokens > 0 {
        let warm = generate_autoregressive(
            &target,
            &[],
            cfg.drafter.warmup_tokens,
            &mut root.substream(LABEL_WARMUP),
        );
        drafter.train_on_batch(&pack_sequences(&[warm], cfg.drafter.warmup_tokens));
    }
    (target, drafter)
}

/// Mean tokens emitted per speculative step for each strategy, measured on
/// the initial target with the warmed drafter over `tokens` generated tokens.
pub fn calibration_sweep(
    cfg: &ExperimentConfig,
    strategies: &[SpecStrategy],
    tokens: usize,
) -> Vec<(SpecStrategy, f64)> {
    let (target, drafter) = initial_models(cfg);
    let root = RngStream::new(cfg.seed, 0);
    strategies
        .iter()
        .map(|s| {
            let out = spec_generate(
                &target,
                DraftSource::Model(&drafter),
                &[],
                tokens,
                s,
                DecodeMode::GreedyTree,
                &mut root.substream(LABEL_CALIBRATION),
            );
            (
                *s,
                out.tokens.len() as f64 / out.accept_lengths.len() as f64,
            )
        })
        .collect()
}

/// Speedup of every strategy at every sweep batch size.
pub fn speedup_grid(cfg: &ExperimentConfig, emitted: &[(SpecStrategy, f64)]) -> Vec<BatchSpeedup> {
    let mut rows = Vec::new();
    for &batch in &SWEEP_BATCHES {
        for (s, e) in emitted {
            rows.push(BatchSpeedup {
                batch,
                strategy: strategy_label(s),
                tokens_to_verify: s.tokens_to_verify,
                mean_emitted: *e,
                speedup: sd_speedup(&cfg.cost, batch, s, *e),
            });
        }
    }
    rows
}

struct SpotResult {
    iterations: u64,
    tokens: u64,
    checkpoints: usize,
    session_start: Option<f64>,
    coordinator: Coordinator,
    trained: Option<AdaptiveDrafter>,
}

/// Replays worker completions through the coordinator and, if a session
/// forms, trains until the rollout ends.
fn spot_phase(
    cfg: &ExperimentConfig,
    step: u64,
    outcome: &RolloutOutcome,
    drafter: &AdaptiveDrafter,
    buffer: &mut DataBuffer,
) -> SpotResult {
    let s = &cfg.spot;
    let workers = s.workers;
    let mut coord = Coordinator::new(
        (0..workers).map(|w| (w, w * s.dp_groups / workers)),
        s.idle_threshold,
    )
    .expect("unique worker ids");
    let mut idle_at = vec![0.0f64; workers as usize];
    for (i, &t) in outcome.finish_times.iter().enumerate() {
        let w = i % workers as usize;
        idle_at[w] = idle_at[w].max(t);
    }
    let mut events: Vec<(f64, u32)> = idle_at
        .iter()
        .enumerate()
        .map(|(w, &t)| (t, w as u32))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut session: Option<(f64, TrainingSession)> = None;
    for (t, w) in events {
        let actions = coord
            .transition(w, WorkerState::Idle)
            .expect("legal BUSY -> IDLE");
        for a in actions {
            match a {
                Action::StartTraining { .. } => {
                    let sess = coord.session().expect("session just started").clone();
                    for &m in &sess.members {
                        coord
                            .transition(m, WorkerState::Training)
                            .expect("member is idle");
                    }
                    session = Some((t, sess));
                }
                Action::JoinTraining { worker_id, .. } => {
                    if coord.worker(worker_id).map(|r| r.state) == Some(WorkerState::Idle) {
                        coord
                            .transition(worker_id, WorkerState::Training)
                            .expect("member is idle");
                    }
                }
                _ => {}
            }
        }
    }
    coord.rollout_complete();

    let Some((start, sess)) = session else {
        return SpotResult {
            iterations: 0,
            tokens: 0,
            checkpoints: 0,
            session_start: None,
            coordinator: coord,
            trained: None,
        };
    };
    let finished: Vec<Vec<TokenId>> = outcome
        .responses
        .iter()
        .zip(&outcome.finish_times)
        .filter(|(_, &t)| t <= start)
        .map(|(r, _)| r.clone())
        .collect();
    buffer.insert(step, finished);
    let budget = ((outcome.total_time - start) / s.iteration_time)
        .floor()
        .max(0.0) as u64;
    let mut trained = drafter.clone();
    let out = spot_train_loop(
        &sess,
        &mut trained,
        buffer,
        &s.train,
        &IterationBudget::new(budget),
        &mut AsyncCheckpointer::in_memory(),
    )
    .expect("in-memory checkpoints do not fail");
    let restored = AdaptiveDrafter::restore_checkpoint(
        out.last_checkpoint().expect("every exit checkpoints"),
        trained.config(),
    )
    .expect("fresh checkpoint restores");
    debug_assert_eq!(restored, trained);
    SpotResult {
        iterations: out.log.iterations,
        tokens: out.log.tokens_trained,
        checkpoints: out.checkpoints.len(),
        session_start: Some(start),
        coordinator: coord,
        trained: Some(restored),
    }
}

/// Runs `rl_steps` simulated RL steps. Each step draws a workload, rolls it
/// out without speculation (baseline) and with it (TLT) on identical request
/// streams, lets idle workers train the drafter during the TLT long tail,
/// publishes the trained drafter for the next step, then drifts the target.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, 0);
    let (mut target, warm) = initial_models(cfg);
    let mut published = warm;
    let mut published_at = 0u64;
    let mut ngram = NgramIndex::new(cfg.drafter.ngram_n, cfg.drafter.ngram_continuation);
    let mut buffer = DataBuffer::new(cfg.spot.retention);
    let mut mab = cfg.tuner()?;
    let mut drift_rng = root.substream(LABEL_DRIFT);
    let rollout_cfg = cfg.rollout_config();
    let wl = cfg.workload_config();

    let mut steps = Vec::new();
    let mut selections = Vec::new();
    let mut engine_trace = Vec::new();
    let mut accept_hist: Vec<usize> = Vec::new();
    let mut sd_request_steps_total = 0usize;
    let mut emitted: BTreeMap<SpecStrategy, (usize, usize)> = BTreeMap::new();

    for step in 0..cfg.rl_steps {
        let requests = generate_workload(
            &wl,
            cfg.target.vocab,
            &mut root.substream(mix_labels(LABEL_WORKLOAD, step)),
        );
        let prompts: Vec<Vec<TokenId>> = requests.iter().map(|r| r.prompt.clone()).collect();
        let engine_rng = root.substream(mix_labels(LABEL_ENGINE, step));
        let baseline = run_rollout(
            requests.clone(),
            &target,
            Drafters::none(),
            None,
            &cfg.cost,
            &rollout_cfg,
            &mut engine_rng.clone(),
        );
        let before: BTreeMap<SpecStrategy, u64> = mab
            .strategies()
            .iter()
            .map(|s| (*s, mab.selections(s).expect("own strategy")))
            .collect();
        let tlt = if cfg.rollout.speculate {
            let drafters = Drafters {
                adaptive: Some(DrafterSnapshot {
                    drafter: &published,
                    trained_at_step: published_at,
                }),
                ngram: Some(&ngram),
                current_step: step,
            };
            run_rollout(
                requests,
                &target,
                drafters,
                Some(&mut mab),
                &cfg.cost,
                &rollout_cfg,
                &mut engine_rng.clone(),
            )
        } else {
            baseline.clone()
        };

        let mut mab_selections = BTreeMap::new();
        for s in mab.strategies() {
            let n = mab.selections(s).expect("own strategy") - before[s];
            if n > 0 {
                mab_selections.insert(strategy_label(s), n);
                selections.push(SelectionRow {
                    step,
                    strategy: strategy_label(s),
                    count: n,
                });
            }
        }

        engine_trace.extend(
            trace_records(&tlt.trace)
                .into_iter()
                .map(|r| EngineTraceRow::new(step, r)),
        );
        let mut sd_steps = 0;
        let mut sd_request_steps = 0;
        let mut accept_sum = 0usize;
        let mut drafter_used = None;
        for m in tlt.trace.iter().filter(|m| m.sd_active) {
            sd_steps += 1;
            drafter_used = drafter_used.or(m.drafter);
            let s = m.strategy.expect("speculative step has a strategy");
            let e = emitted.entry(s).or_insert((0, 0));
            for &a in &m.accept_lens {
                sd_request_steps += 1;
                accept_sum += a;
                e.0 += a + 1;
                e.1 += 1;
                if accept_hist.len() <= a {
                    accept_hist.resize(a + 1, 0);
                }
                accept_hist[a] += 1;
            }
        }
        sd_request_steps_total += sd_request_steps;

        let match_rate = greedy_match_rate(&published, &target, &prompts, &tlt.responses, 20_000);
        let used_version = published.version();

        let spot = if cfg.drafter.adapt && cfg.rollout.speculate {
            Some(spot_phase(cfg, step, &tlt, &published, &mut buffer))
        } else {
            None
        };
        let session_start = spot.as_ref().and_then(|s| s.session_start);
        let late: Vec<Vec<TokenId>> = tlt
            .responses
            .iter()
            .zip(&tlt.finish_times)
            .filter(|(_, &t)| session_start.is_none_or(|s| t > s))
            .map(|(r, _)| r.clone())
            .collect();
        buffer.insert(step, late);
        for r in &tlt.responses {
            ngram.insert(r, step);
        }

        let mut lens: Vec<usize> = tlt.responses.iter().map(Vec::len).collect();
        lens.sort_unstable();
        let tokens: usize = lens.iter().sum();
        let count = |kind: MessageKind| {
            spot.as_ref()
                .map(|s| {
                    s.coordinator
                        .log()
                        .iter()
                        .filter(|m| m.kind == kind)
                        .count()
                })
                .unwrap_or(0)
        };
        steps.push(StepReport {
            step,
            baseline_time: baseline.total_time,
            tlt_time: tlt.total_time,
            speedup: baseline.total_time / tlt.total_time,
            requests: lens.len(),
            tokens,
            mean_len: tokens as f64 / lens.len() as f64,
            p50_len: percentile(&lens, 0.5),
            p75_len: percentile(&lens, 0.75),
            p99_len: percentile(&lens, 0.99),
            max_len: lens.last().copied().unwrap_or(0),
            sd_steps,
            sd_request_steps,
            mean_accept: (sd_request_steps > 0)
                .then(|| accept_sum as f64 / sd_request_steps as f64),
            drafter: drafter_used,
            drafter_version: used_version,
            greedy_match_rate: match_rate,
            training_iterations: spot.as_ref().map_or(0, |s| s.iterations),
            training_tokens: spot.as_ref().map_or(0, |s| s.tokens),
            checkpoints: spot.as_ref().map_or(0, |s| s.checkpoints),
            state_changes: count(MessageKind::StateChange),
            start_training: count(MessageKind::StartTraining),
            join_training: count(MessageKind::JoinTraining),
            preempts: count(MessageKind::Preempt),
            checkpoint_requests: count(MessageKind::CheckpointRequest),
            responses_identical: tlt.responses == baseline.responses,
            mab_selections,
        });

        if let Some(trained) = spot.and_then(|s| s.trained) {
            published = trained;
            published_at = step;
        }
        target = target.apply_drift(cfg.target.drift_lambda, &mut drift_rng);
    }

    let baseline_total: f64 = steps.iter().map(|s| s.baseline_time).sum();
    let tlt_total: f64 = steps.iter().map(|s| s.tlt_time).sum();
    let max_depth = cfg
        .tuner
        .strategies
        .iter()
        .map(|s| s.draft_depth)
        .max()
        .unwrap_or(0);
    let accept_by_position = (1..=max_depth)
        .map(|position| PositionRate {
            position,
            rate: if sd_request_steps_total == 0 {
                0.0
            } else {
                accept_hist.iter().skip(position).sum::<usize>() as f64
                    / sd_request_steps_total as f64
            },
        })
        .collect();
    let measured: Vec<(SpecStrategy, f64)> = emitted
        .iter()
        .map(|(s, &(tokens, n))| (*s, tokens as f64 / n as f64))
        .collect();
    Ok(RunReport {
        seed: cfg.seed,
        steps,
        selections,
        baseline_total,
        tlt_total,
        aggregate_speedup: baseline_total / tlt_total,
        accept_by_position,
        speedup_vs_batch: speedup_grid(cfg, &measured),
        capture_memory: capture_memory(cfg),
        mab_rewards: reward_rows(&mab),
        mab_state: Some(mab.dump()),
        engine_trace,
    })
}

pub fn capture_memory(cfg: &ExperimentConfig) -> Vec<CaptureMemory> {
    let buckets = BucketSpec {
        thresholds: cfg.tuner.thresholds.clone(),
        max_batch: cfg.rollout.elastic_threshold,
    };
    let memory = MemoryModel::default();
    let vanilla = vanilla_plan(&cfg.tuner.strategies, &buckets, &memory);
    let bucketed =
        plan_captures(&cfg.tuner.strategies, &buckets, &memory).expect("validated tuner");
    vec![
        CaptureMemory {
            plan: "vanilla".into(),
            entries: vanilla.entries.len(),
            memory_units: vanilla.total_memory_units,
        },
        CaptureMemory {
            plan: "bucketed".into(),
            entries: bucketed.entries.len(),
            memory_units: bucketed.total_memory_units,
        },
    ]
}

fn reward_rows(mab: &BegMab) -> Vec<RewardRow> {
    let mut rows = Vec::new();
    for b in mab.dump().buckets {
        for arm in b.strategies {
            for (slot, &reward) in arm.rewards.iter().enumerate() {
                rows.push(RewardRow {
                    bucket_low: b.low,
                    strategy: strategy_label(&arm.strategy),
                    slot,
                    reward,
                });
            }
        }
    }
    rows
}
