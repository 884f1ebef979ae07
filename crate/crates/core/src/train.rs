//! REINFORCE with a greedy rollout baseline.
//!
//! Each step samples a batch of instances from one problem class, samples a
//! tour per instance under the current parameters, scores it against a
//! greedy rollout under the frozen baseline parameters, and descends the
//! baseline-normalized policy gradient: the sampled tour's log-probability
//! weighted by `(L - b) / b`. After every epoch the baseline is re-evaluated
//! on a fresh instance set and replaced only when a one-sided paired t-test
//! says the candidate decodes shorter tours.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::policy::{
    decode, forward, sequence_log_prob, DecodeMode, ModelConfig, PolicyParameters,
};
use crate::tensor::{adam_step, AdamConfig, GradientMap, Tape};
use crate::warehouse::{generate_instance, GeometrySpec, Instance, ProblemClass};
use crate::{Error, Result};

/// Training budget, problem mix, and model/optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// One-sided significance level for the baseline gate.
    pub significance: f64,
    pub classes: Vec<ProblemClass>,
    pub simplified: bool,
    /// Instances in the per-epoch evaluation set used by the gate.
    pub eval_instances: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub model: ModelConfig,
    pub geometry: GeometrySpec,
}

impl TrainConfig {
    /// The full-budget preset: 100 epochs of 100 batches of 16 instances
    /// over all 30 problem classes.
    pub fn standard(seed: u64) -> Self {
        let geometry = GeometrySpec::default();
        TrainConfig {
            epochs: 100,
            steps_per_epoch: 100,
            batch_size: 16,
            significance: 0.05,
            classes: ProblemClass::standard_grid(crate::warehouse::DistributionMode::normal()),
            simplified: false,
            eval_instances: 256,
            seed,
            adam: AdamConfig::default(),
            model: ModelConfig::standard(geometry.slots_per_aisle),
            geometry,
        }
    }

    /// The simplified-tour preset: gap masked everywhere, trained on the
    /// wide warehouses only (25 or 30 aisles), 150 epochs of 200 batches —
    /// the same total step count as the standard preset.
    pub fn simplified(seed: u64) -> Self {
        let mut cfg = TrainConfig::standard(seed);
        cfg.epochs = 150;
        cfg.steps_per_epoch = 200;
        cfg.classes.retain(|c| c.n_aisles >= 25);
        cfg.simplified = true;
        cfg.model.simplified = true;
        cfg
    }

    /// A desk-scale preset that learns in minutes: one problem class, a
    /// narrow model, and a learning rate sized for the short budget.
    pub fn desk(seed: u64) -> Self {
        let mut cfg = TrainConfig::standard(seed);
        cfg.epochs = 20;
        cfg.steps_per_epoch = 50;
        cfg.classes = vec![ProblemClass::new(
            5,
            30,
            crate::warehouse::DistributionMode::normal(),
        )];
        cfg.eval_instances = 128;
        cfg.model = ModelConfig::sized(cfg.geometry.slots_per_aisle, 64, 8, 3);
        cfg.adam = AdamConfig::with_learning_rate(1e-3);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.classes.is_empty() {
            return Err(Error::Domain("training needs at least one class".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be positive".into()));
        }
        if self.model.slot_dim != self.geometry.slots_per_aisle {
            return Err(Error::Domain(format!(
                "model slot_dim {} does not match geometry slots_per_aisle {}",
                self.model.slot_dim, self.geometry.slots_per_aisle
            )));
        }
        Ok(())
    }
}

/// Per-step log line.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub mean_len: f64,
    pub mean_baseline: f64,
    pub mean_advantage: f64,
    pub grad_norm: f64,
    pub gate_updates: usize,
}

/// Per-epoch gate outcome on that epoch's evaluation set.
#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub candidate_eval_mean: f64,
    pub baseline_eval_mean: f64,
    pub gate_passed: bool,
    pub gate_updates: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

pub const HISTORY_CSV_HEADER: &str =
    "epoch,step,mean_len,mean_baseline,mean_advantage,grad_norm,gate_updates";

fn step_csv_line(rec: &StepRecord) -> String {
    format!(
        "{},{},{:.6},{:.6},{:.8},{:.8},{}",
        rec.epoch,
        rec.step,
        rec.mean_len,
        rec.mean_baseline,
        rec.mean_advantage,
        rec.grad_norm,
        rec.gate_updates
    )
}

/// Where training artifacts go; everything is optional.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Append-only CSV of step records.
    pub history_path: Option<PathBuf>,
    /// Directory receiving one weights checkpoint per epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

pub struct BatchStats {
    pub mean_len: f64,
    pub mean_baseline: f64,
    pub mean_advantage: f64,
}

/// Policy gradient of one batch. Per instance the loss term is
/// `(L - b) / b * log p(tour)` with `L` the sampled tour length under the
/// candidate and `b` the greedy length under the baseline; descending it
/// shrinks the probability of tours longer than the baseline. Terms are
/// averaged over the batch. Baselines below one length unit are clamped so
/// depot-adjacent degenerate tours cannot blow up the normalization.
pub fn reinforce_gradient<R: Rng>(
    batch: &[Instance],
    params: &PolicyParameters,
    baseline: &PolicyParameters,
    rng: &mut R,
) -> Result<(GradientMap, BatchStats)> {
    assert!(!batch.is_empty(), "empty training batch");
    let mut tape = Tape::new();
    let mut loss: Option<crate::tensor::NodeId> = None;
    let mut sum_len = 0.0;
    let mut sum_baseline = 0.0;
    let mut sum_advantage = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for inst in batch {
        let seq = inst.aisle_sequence();
        let logits = forward(&mut tape, params, &seq);
        let sampled = {
            let values = crate::policy::Logits(tape.value(logits).clone());
            crate::policy::decode_with_logits(
                &values,
                params.config.simplified,
                &seq,
                DecodeMode::Sample,
                rng,
            )
        };
        let greedy = decode(baseline, &seq, DecodeMode::Greedy, rng);
        let sampled_len = sampled.total_length as f64;
        let baseline_len = (greedy.total_length as f64).max(1.0);
        let advantage = (sampled_len - baseline_len) / baseline_len;
        sum_len += sampled_len;
        sum_baseline += greedy.total_length as f64;
        sum_advantage += advantage;

        let log_prob = sequence_log_prob(
            &mut tape,
            logits,
            &seq,
            &sampled.actions,
            params.config.simplified,
        );
        let term = tape.scale(log_prob, advantage * scale);
        loss = Some(match loss {
            Some(acc) => tape.add(acc, term),
            None => term,
        });
    }
    let grads = tape.backward(loss.expect("non-empty batch"))?;
    Ok((
        grads,
        BatchStats {
            mean_len: sum_len * scale,
            mean_baseline: sum_baseline * scale,
            mean_advantage: sum_advantage * scale,
        },
    ))
}

/// One-sided paired t-test that the candidate's tour lengths are shorter on
/// average: returns true when `p < alpha` for `mean(candidate - baseline) < 0`.
/// A zero-variance difference counts as certain: p is 0 when the constant
/// difference is negative, 1 otherwise.
pub fn baseline_gate(candidate: &[f64], baseline: &[f64], alpha: f64) -> Result<bool> {
    if candidate.len() != baseline.len() {
        return Err(Error::Contract(format!(
            "paired test needs equal lengths, got {} and {}",
            candidate.len(),
            baseline.len()
        )));
    }
    let n = candidate.len();
    if n < 2 {
        return Err(Error::Contract(
            "paired test needs at least two pairs".into(),
        ));
    }
    let diffs: Vec<f64> = candidate.iter().zip(baseline).map(|(c, b)| c - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let p_value = if var == 0.0 {
        if mean < 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let t = mean / (var / n as f64).sqrt();
        let dist =
            StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid t distribution parameters");
        dist.cdf(t)
    };
    Ok(p_value < alpha)
}

fn generate_eval_set(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Instance>> {
    let mut set = Vec::with_capacity(cfg.eval_instances);
    for _ in 0..cfg.eval_instances {
        let class = cfg.classes[rng.random_range(0..cfg.classes.len())];
        set.push(generate_instance(&class, &cfg.geometry, rng.random())?);
    }
    Ok(set)
}

fn greedy_lengths(params: &PolicyParameters, instances: &[Instance]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    instances
        .iter()
        .map(|inst| {
            decode(params, &inst.aisle_sequence(), DecodeMode::Greedy, &mut rng).total_length as f64
        })
        .collect()
}

/// Runs the training loop; fully deterministic for a given configuration.
pub fn train(
    cfg: &TrainConfig,
    options: &TrainOptions,
) -> Result<(PolicyParameters, TrainHistory)> {
    cfg.validate()?;
    let mut params = PolicyParameters::init(cfg.model.clone(), cfg.seed);
    let mut baseline = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();
    let mut gate_updates = 0usize;

    let mut history_file = match &options.history_path {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            writeln!(file, "{HISTORY_CSV_HEADER}")?;
            Some(file)
        }
        None => None,
    };

    for epoch in 1..=cfg.epochs {
        for step in 1..=cfg.steps_per_epoch {
            let class = cfg.classes[rng.random_range(0..cfg.classes.len())];
            let mut batch = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                batch.push(generate_instance(&class, &cfg.geometry, rng.random())?);
            }
            let (grads, stats) = reinforce_gradient(&batch, &params, &baseline, &mut rng)?;
            let grad_norm = grads.norm();
            if !grad_norm.is_finite() || !stats.mean_len.is_finite() {
                return Err(Error::Contract(format!(
                    "non-finite gradient at epoch {epoch} step {step}: \
                     grad_norm {grad_norm}, mean_len {}, mean_baseline {}",
                    stats.mean_len, stats.mean_baseline
                )));
            }
            adam_step(&mut params.set, &grads, &cfg.adam);
            let record = StepRecord {
                epoch,
                step,
                mean_len: stats.mean_len,
                mean_baseline: stats.mean_baseline,
                mean_advantage: stats.mean_advantage,
                grad_norm,
                gate_updates,
            };
            if let Some(file) = &mut history_file {
                writeln!(file, "{}", step_csv_line(&record))?;
            }
            history.steps.push(record);
        }

        let eval_set = generate_eval_set(cfg, &mut rng)?;
        let candidate_lens = greedy_lengths(&params, &eval_set);
        let baseline_lens = greedy_lengths(&baseline, &eval_set);
        let passed = baseline_gate(&candidate_lens, &baseline_lens, cfg.significance)?;
        if passed {
            baseline = params.clone();
            gate_updates += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            candidate_eval_mean: mean(&candidate_lens),
            baseline_eval_mean: mean(&baseline_lens),
            gate_passed: passed,
            gate_updates,
        });

        if let Some(dir) = &options.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            params.save(&dir.join(format!("epoch_{epoch:03}.weights")))?;
        }
    }
    Ok((params, history))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Writes the full step history as CSV to `path`.
pub fn write_history_csv(history: &TrainHistory, path: &Path) -> Result<()> {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for rec in &history.steps {
        out.push_str(&step_csv_line(rec));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warehouse::DistributionMode;

    fn tiny_config() -> TrainConfig {
        let geometry = GeometrySpec {
            slots_per_aisle: 10,
            slot_pitch: 1,
            cross_aisle_offset: 1,
            aisle_pitch: 5,
        };
        TrainConfig {
            epochs: 1,
            steps_per_epoch: 2,
            batch_size: 4,
            significance: 0.05,
            classes: vec![ProblemClass::new(3, 4, DistributionMode::Uniform)],
            simplified: false,
            eval_instances: 8,
            seed: 5,
            adam: AdamConfig::with_learning_rate(1e-3),
            model: ModelConfig::sized(10, 8, 2, 1),
            geometry,
        }
    }

    #[test]
    fn gate_rejects_identical_arrays() {
        let lens = vec![100.0, 120.0, 90.0];
        assert!(!baseline_gate(&lens, &lens, 0.05).unwrap());
    }

    #[test]
    fn gate_accepts_uniform_improvement() {
        let baseline: Vec<f64> = (0..256).map(|i| 100.0 + (i % 7) as f64).collect();
        let candidate: Vec<f64> = baseline.iter().map(|b| b - 1.0).collect();
        assert!(baseline_gate(&candidate, &baseline, 1e-6).unwrap());
    }

    #[test]
    fn gate_rejects_regression() {
        let baseline = vec![100.0, 100.0, 100.0, 100.0];
        let candidate = vec![101.0, 102.0, 100.5, 101.5];
        assert!(!baseline_gate(&candidate, &baseline, 0.05).unwrap());
    }

    #[test]
    fn gate_needs_pairs() {
        assert!(baseline_gate(&[1.0], &[1.0], 0.05).is_err());
        assert!(baseline_gate(&[1.0, 2.0], &[1.0], 0.05).is_err());
    }

    #[test]
    fn zero_epoch_run_returns_initial_parameters() {
        let mut cfg = tiny_config();
        cfg.epochs = 0;
        let (params, history) = train(&cfg, &TrainOptions::default()).unwrap();
        let fresh = PolicyParameters::init(cfg.model.clone(), cfg.seed);
        for (a, b) in params.set.iter().zip(fresh.set.iter()) {
            assert_eq!(a.value, b.value, "{} changed", a.name);
        }
        assert!(history.steps.is_empty());
    }

    #[test]
    fn identical_lengths_give_zero_gradient() {
        let cfg = tiny_config();
        let params = PolicyParameters::init(cfg.model.clone(), 1);
        let inst = generate_instance(&cfg.classes[0], &cfg.geometry, 3).unwrap();
        // baseline == candidate parameters and a deterministic environment:
        // sampled tours that happen to match the greedy baseline contribute
        // zero advantage, so filter a batch where that holds
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let greedy = decode(
            &params,
            &inst.aisle_sequence(),
            DecodeMode::Greedy,
            &mut rng,
        );
        let mut found = false;
        for attempt in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(attempt);
            let sampled = decode(
                &params,
                &inst.aisle_sequence(),
                DecodeMode::Sample,
                &mut rng,
            );
            if sampled.total_length == greedy.total_length && sampled.actions == greedy.actions {
                let mut rng = ChaCha8Rng::seed_from_u64(attempt);
                let (grads, stats) =
                    reinforce_gradient(std::slice::from_ref(&inst), &params, &params, &mut rng)
                        .unwrap();
                if stats.mean_advantage == 0.0 {
                    assert!(grads.norm() < 1e-30, "norm {}", grads.norm());
                    found = true;
                    break;
                }
            }
        }
        assert!(found, "no zero-advantage sample found");
    }

    #[test]
    fn advantage_normalization_is_exact() {
        // L = 110, b = 100 must log advantage 0.1
        let advantage: f64 = (110.0 - 100.0) / 100.0;
        assert!((advantage - 0.1).abs() < 1e-12);
        let cfg = tiny_config();
        let params = PolicyParameters::init(cfg.model.clone(), 2);
        let baseline = PolicyParameters::init(cfg.model.clone(), 3);
        let batch: Vec<Instance> = (0..4)
            .map(|s| generate_instance(&cfg.classes[0], &cfg.geometry, s).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, stats) = reinforce_gradient(&batch, &params, &baseline, &mut rng).unwrap();
        // recompute the advantage from the logged means is only possible per
        // instance, so check the recorded mean is finite and bounded instead
        assert!(stats.mean_advantage.is_finite());
    }

    #[test]
    fn training_runs_and_logs() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let history_path = dir.path().join("history.csv");
        let options = TrainOptions {
            history_path: Some(history_path.clone()),
            checkpoint_dir: Some(dir.path().join("ckpt")),
        };
        let (_, history) = train(&cfg, &options).unwrap();
        assert_eq!(history.steps.len(), cfg.epochs * cfg.steps_per_epoch);
        assert_eq!(history.epochs.len(), cfg.epochs);
        let text = std::fs::read_to_string(&history_path).unwrap();
        assert!(text.starts_with(HISTORY_CSV_HEADER));
        assert_eq!(text.lines().count(), 1 + history.steps.len());
        assert!(dir.path().join("ckpt/epoch_001.weights").exists());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_config();
        let (a, _) = train(&cfg, &TrainOptions::default()).unwrap();
        let (b, _) = train(&cfg, &TrainOptions::default()).unwrap();
        for (pa, pb) in a.set.iter().zip(b.set.iter()) {
            assert_eq!(pa.value, pb.value, "{} diverged", pa.name);
        }
    }

    #[test]
    fn simplified_training_never_touches_gap() {
        let mut cfg = tiny_config();
        cfg.simplified = true;
        cfg.model.simplified = true;
        cfg.classes = vec![ProblemClass::new(3, 6, DistributionMode::Uniform)];
        let (params, _) = train(&cfg, &TrainOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..100u64 {
            let inst = generate_instance(&cfg.classes[0], &cfg.geometry, seed).unwrap();
            let rollout = decode(
                &params,
                &inst.aisle_sequence(),
                DecodeMode::Sample,
                &mut rng,
            );
            assert!(rollout
                .actions
                .iter()
                .all(|p| p.vertical != crate::tourgraph::VerticalAction::Gap));
        }
    }

    #[test]
    fn gate_soundness_baseline_changes_only_on_pass() {
        let mut cfg = tiny_config();
        cfg.epochs = 3;
        let (_, history) = train(&cfg, &TrainOptions::default()).unwrap();
        let mut updates = 0;
        for rec in &history.epochs {
            if rec.gate_passed {
                updates += 1;
                assert!(
                    rec.candidate_eval_mean < rec.baseline_eval_mean,
                    "gate passed without improvement on its eval set"
                );
            }
            assert_eq!(rec.gate_updates, updates);
        }
    }
}
