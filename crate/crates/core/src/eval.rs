//! Benchmark orchestration: per-class average optimality gaps for the
//! heuristics and the learned policy, with CSV and markdown reporting.
//!
//! Instances are generated deterministically per (class, master seed), the
//! optimum is computed once per instance, and every method is measured
//! against it. Instances are evaluated in parallel but aggregated in a fixed
//! order, so reports are byte-identical across runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exact::solve_optimal;
use crate::heuristics::{solve_heuristic, HeuristicKind};
use crate::policy::{decode, DecodeMode, PolicyParameters};
use crate::warehouse::{generate_instance, GeometrySpec, Length, ProblemClass};
use crate::{Error, Result};

/// A solving method under benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Optimal,
    SShape,
    Return,
    LargestGap,
    Composite,
    /// Greedy decoding of trained policy weights.
    Model,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Optimal,
        Method::SShape,
        Method::Return,
        Method::LargestGap,
        Method::Composite,
        Method::Model,
    ];

    pub fn parse(text: &str) -> Result<Method> {
        match text.trim().to_ascii_lowercase().as_str() {
            "optimal" => Ok(Method::Optimal),
            "sshape" => Ok(Method::SShape),
            "return" => Ok(Method::Return),
            "largestgap" => Ok(Method::LargestGap),
            "composite" => Ok(Method::Composite),
            "model" => Ok(Method::Model),
            other => Err(Error::Config(format!(
                "unknown method {other}; expected one of \
                 optimal|sshape|return|largestgap|composite|model"
            ))),
        }
    }

    fn heuristic(self) -> Option<HeuristicKind> {
        match self {
            Method::SShape => Some(HeuristicKind::SShape),
            Method::Return => Some(HeuristicKind::Return),
            Method::LargestGap => Some(HeuristicKind::LargestGap),
            Method::Composite => Some(HeuristicKind::Composite),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            Method::Optimal => "optimal",
            Method::SShape => "sshape",
            Method::Return => "return",
            Method::LargestGap => "largestgap",
            Method::Composite => "composite",
            Method::Model => "model",
        };
        f.write_str(label)
    }
}

/// Percentage by which a tour exceeds the optimum. A length below the
/// optimum can only mean a solver bug and is reported as such.
pub fn optimality_gap(length: Length, optimal: Length) -> Result<f64> {
    if optimal <= 0 {
        return Err(Error::Contract(format!(
            "optimal length must be positive, got {optimal}"
        )));
    }
    if length < optimal {
        return Err(Error::Contract(format!(
            "internal error: tour of length {length} beats the optimum {optimal}"
        )));
    }
    Ok(100.0 * (length - optimal) as f64 / optimal as f64)
}

/// Aggregated result for one (class, method) cell.
#[derive(Clone, Debug)]
pub struct GapCell {
    pub class: ProblemClass,
    pub method: Method,
    pub instances: usize,
    pub mean_gap: f64,
    pub std_err: f64,
    pub mean_runtime_ms: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GapReport {
    pub cells: Vec<GapCell>,
}

impl GapReport {
    /// Deterministic CSV: one row per (class, method), no timing columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("aisles,items,method,instances,mean_gap_pct,std_err\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4}\n",
                cell.class.n_aisles,
                cell.class.items,
                cell.method,
                cell.instances,
                cell.mean_gap,
                cell.std_err
            ));
        }
        out
    }

    /// Markdown table including mean per-instance runtimes.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Aisles | Items | Method | Instances | Mean gap (%) | Std err | Mean ms |\n\
             |-------:|------:|--------|----------:|-------------:|--------:|--------:|\n",
        );
        for cell in &self.cells {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {:.2} | {:.2} | {:.3} |\n",
                cell.class.n_aisles,
                cell.class.items,
                cell.method,
                cell.instances,
                cell.mean_gap,
                cell.std_err,
                cell.mean_runtime_ms
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub instances_per_class: usize,
    pub seed: u64,
    pub geometry: GeometrySpec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            instances_per_class: 100,
            seed: 0,
            geometry: GeometrySpec::default(),
        }
    }
}

/// Benchmarks every method on every class. Model methods need weights.
pub fn evaluate(
    methods: &[Method],
    classes: &[ProblemClass],
    cfg: &EvalConfig,
    weights: Option<&PolicyParameters>,
) -> Result<GapReport> {
    if methods.contains(&Method::Model) {
        match weights {
            None => {
                return Err(Error::Config(
                    "the model method needs trained weights".into(),
                ))
            }
            Some(params) => {
                if params.config.slot_dim != cfg.geometry.slots_per_aisle {
                    return Err(Error::Config(format!(
                        "weights expect {} slots per aisle, geometry has {}",
                        params.config.slot_dim, cfg.geometry.slots_per_aisle
                    )));
                }
            }
        }
    }

    let mut report = GapReport::default();
    for (class_index, class) in classes.iter().enumerate() {
        // one deterministic seed stream per class
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(class_index as u64 + 1);
        let seeds: Vec<u64> = (0..cfg.instances_per_class).map(|_| rng.random()).collect();

        let per_instance: Vec<Vec<(f64, f64)>> = seeds
            .par_iter()
            .map(|&seed| -> Result<Vec<(f64, f64)>> {
                let inst = generate_instance(class, &cfg.geometry, seed)?;
                let seq = inst.aisle_sequence();
                let (optimal, _) = solve_optimal(&inst);
                methods
                    .iter()
                    .map(|&method| {
                        let start = std::time::Instant::now();
                        let length = match method {
                            Method::Optimal => optimal,
                            Method::Model => {
                                let params = weights.expect("checked above");
                                let mut decode_rng = ChaCha8Rng::seed_from_u64(seed);
                                decode(params, &seq, DecodeMode::Greedy, &mut decode_rng)
                                    .total_length
                            }
                            _ => {
                                let kind = method.heuristic().expect("heuristic method");
                                solve_heuristic(kind, &seq).total_length
                            }
                        };
                        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
                        let gap = optimality_gap(length, optimal).map_err(|e| {
                            Error::Contract(format!(
                                "{e} ({method} on class {} seed {seed})",
                                class.label()
                            ))
                        })?;
                        Ok((gap, elapsed_ms))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        for (m, &method) in methods.iter().enumerate() {
            let gaps: Vec<f64> = per_instance.iter().map(|row| row[m].0).collect();
            let runtimes: Vec<f64> = per_instance.iter().map(|row| row[m].1).collect();
            let n = gaps.len() as f64;
            let mean_gap = gaps.iter().sum::<f64>() / n;
            let var = gaps
                .iter()
                .map(|g| (g - mean_gap) * (g - mean_gap))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            report.cells.push(GapCell {
                class: *class,
                method,
                instances: gaps.len(),
                mean_gap,
                std_err: (var / n).sqrt(),
                mean_runtime_ms: runtimes.iter().sum::<f64>() / n,
            });
        }
    }
    Ok(report)
}
