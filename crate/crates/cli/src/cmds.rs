//! Implementations of the subcommands. Every command returns its exit
//! code: 0 for success, 1 for a domain-level negative outcome.


use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use greedy_beta::density::{
    acim_with, birkhoff_histogram, closed_class_weights, transfer_residual, AcimRequest,
    DensityMode,
};
use greedy_beta::intervals::{
    check_kappa_bounds, default_depth, dn_partial_sums, kappa_bound_value, kappa_table,
    primary_bound, refine_to,
};
use greedy_beta::system::{check_allowable, classify_support, evaluate_word, DigitSet, Word};
use greedy_beta::tower::{
    build_tower, check_measure_preservation, exactness_constants, return_times, EdgeTarget,
};
use greedy_beta::{Backend, Error, GreedySystem, Scalar, SupportCase};

use crate::util::{
    csv_header, json_document, parse_backend, parse_scalar, to_json, with_backend,
    CliError, CliResult, Format, Sink,
};

pub struct SystemSpec {
    pub beta_raw: String,
    pub digits_raw: Vec<String>,
    pub backend_raw: String,
}

impl SystemSpec {
    fn parse(&self) -> CliResult<(Scalar, Vec<Scalar>, Backend)> {
        let backend = parse_backend(&self.backend_raw).map_err(CliError::Usage)?;
        let beta = with_backend(
            parse_scalar(&self.beta_raw).map_err(CliError::Usage)?,
            backend,
        );
        // A plain rational compares against either backend.
        if beta.le(&Scalar::one()) {
            return Err(CliError::Usage(format!(
                "beta must exceed 1, got {}",
                beta.to_decimal(6)
            )));
        }
        let digits = self
            .digits_raw
            .iter()
            .map(|s| parse_scalar(s).map(|x| with_backend(x, backend)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::Usage)?;
        Ok((beta, digits, backend))
    }

    /// Builds the system: three-digit when digits are given, the complete
    /// classical set otherwise.
    pub fn build(&self) -> CliResult<GreedySystem> {
        let (beta, digits, _) = self.parse()?;
        let sys = if digits.is_empty() {
            GreedySystem::classical(beta)?
        } else {
            GreedySystem::new(beta, digits)?
        };
        Ok(sys)
    }

    pub fn config(&self, command: &str, extra: serde_json::Value) -> serde_json::Value {
        let mut config = json!({
            "command": command,
            "beta": self.beta_raw,
            "digits": self.digits_raw,
            "backend": self.backend_raw,
        });
        if let (Some(obj), Some(extra)) = (config.as_object_mut(), extra.as_object()) {
            for (k, v) in extra {
                obj.insert(k.clone(), v.clone());
            }
        }
        config
    }
}

fn scalar_row(x: &Scalar) -> String {
    x.to_decimal(12)
}

/// Compact rendering for graph labels: integers print bare.
fn compact(x: &Scalar) -> String {
    let floored = Scalar::from_big_rational(num_rational::BigRational::from_integer(
        x.floor_int(),
    ));
    if floored
        .try_cmp(x)
        .map(|o| o == std::cmp::Ordering::Equal)
        .unwrap_or(false)
    {
        x.floor_int().to_string()
    } else {
        x.to_decimal(4)
    }
}

// ---------------------------------------------------------------- check

pub fn cmd_check(spec: &SystemSpec, format: Format, sink: &Sink) -> CliResult<i32> {
    if format != Format::Json {
        return Err(CliError::Usage("check supports only json output".into()));
    }
    let (beta, digits, backend) = spec.parse()?;
    if digits.is_empty() {
        return Err(CliError::Usage("check needs an explicit digit set".into()));
    }
    let report = check_allowable(&beta, &digits)?;
    let mut payload = json!({
        "allowable": report.allowable(),
        "cond_i": report.cond_i,
        "cond_ii": report.cond_ii,
        "shortcut_used": report.shortcut_used,
        "classification": serde_json::Value::Null,
        "window": serde_json::Value::Null,
    });
    if report.allowable() && digits.len() == 3 && beta.lt(&Scalar::from_int(3)) {
        let ds = DigitSet::new(digits.clone())?;
        let (case, s) = classify_support(&beta, &ds)?;
        payload["classification"] = json!({
            "support_case": to_json(&case),
            "s": to_json(&s),
        });
        // The strict window a₁·max{β−1,1} < a₂ < a₁·min{2,β}.
        let a1 = ds.digit(1);
        let a2 = ds.digit(2);
        let two = Scalar::from_int(2);
        let lower_factor = if beta.gt(&two) {
            beta.try_sub(&Scalar::one())?
        } else {
            Scalar::one()
        };
        let upper_factor = if beta.gt(&two) { two } else { beta.clone() };
        let lower_ok = a1.try_mul(&lower_factor)?.lt(a2);
        let upper_ok = a2.lt(&a1.try_mul(&upper_factor)?);
        payload["window"] = json!({
            "lower_strict": lower_ok,
            "upper_strict": upper_ok,
            "in_window": lower_ok && upper_ok,
        });
    }
    let config = spec.config("check", json!({}));
    sink.write(&json_document("check", &config, backend, payload))?;
    Ok(if report.allowable() { 0 } else { 1 })
}

// ---------------------------------------------------------------- orbit

pub fn cmd_orbit(
    spec: &SystemSpec,
    x_raw: &str,
    depth: usize,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    let sys = spec.build()?;
    let x = with_backend(
        parse_scalar(x_raw).map_err(CliError::Usage)?,
        sys.backend(),
    );
    let orbit = sys.orbit(&x, depth)?;
    let config = spec.config("orbit", json!({"x": x_raw, "depth": depth}));
    let digits_values: Vec<&Scalar> = orbit
        .digits_idx
        .iter()
        .map(|&j| sys.digit_value(j))
        .collect();
    let payload = json!({
        "system": to_json(&sys.descriptor()),
        "start": to_json(&orbit.start),
        "values": to_json(&orbit.values),
        "digits": to_json(&digits_values),
        "preperiod": orbit.preperiod,
        "period": orbit.period,
    });
    match format {
        Format::Json => {
            sink.write(&json_document("orbit", &config, sys.backend(), payload))?;
        }
        Format::Csv => {
            let mut csv = csv_header("orbit", &config, sys.backend());
            csv.push_str("step,value_decimal,digit\n");
            for (k, v) in orbit.values.iter().enumerate() {
                let digit = orbit
                    .digits_idx
                    .get(k)
                    .map(|&j| scalar_row(sys.digit_value(j)))
                    .unwrap_or_default();
                csv.push_str(&format!("{k},{},{digit}\n", scalar_row(v)));
            }
            sink.write(&csv)?;
            sink.write_sidecar(&json_document("orbit", &config, sys.backend(), payload))?;
        }
        Format::Dot => return Err(CliError::Usage("orbit has no dot output".into())),
    }
    Ok(0)
}

// ---------------------------------------------------------------- expand

pub fn cmd_expand(
    spec: &SystemSpec,
    x_raw: &str,
    count: usize,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    let sys = spec.build()?;
    let x = with_backend(
        parse_scalar(x_raw).map_err(CliError::Usage)?,
        sys.backend(),
    );
    let word = sys.expand(&x, count)?;
    let partial = evaluate_word(sys.beta(), &word, None)?;
    let config = spec.config("expand", json!({"x": x_raw, "count": count}));
    let payload = json!({
        "system": to_json(&sys.descriptor()),
        "x": to_json(&x),
        "digits": to_json(&word.symbols),
        "partial_sum": to_json(&partial),
    });
    match format {
        Format::Json => {
            sink.write(&json_document("expand", &config, sys.backend(), payload))?;
        }
        Format::Csv => {
            let mut csv = csv_header("expand", &config, sys.backend());
            csv.push_str("position,digit_decimal\n");
            for (k, d) in word.symbols.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", k + 1, scalar_row(d)));
            }
            sink.write(&csv)?;
            sink.write_sidecar(&json_document("expand", &config, sys.backend(), payload))?;
        }
        Format::Dot => return Err(CliError::Usage("expand has no dot output".into())),
    }
    Ok(0)
}

// ---------------------------------------------------------------- kappa

pub fn cmd_kappa(
    spec: &SystemSpec,
    depth: Option<usize>,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    let sys = spec.build()?;
    let depth = depth.unwrap_or_else(|| default_depth(&sys).min(24));
    let table = kappa_table(&sys, depth)?;
    let (bound_kind, m) = primary_bound(&sys);
    let bounds = if sys.support_case() == SupportCase::MainCase {
        Some(check_kappa_bounds(&sys, depth)?)
    } else {
        None
    };
    let dn = dn_partial_sums(&sys, depth)?;
    let config = spec.config("kappa", json!({"depth": depth}));
    match format {
        Format::Json => {
            let payload = json!({
                "system": to_json(&sys.descriptor()),
                "depth": depth,
                "table": to_json(&table),
                "primary_bound": to_json(&bound_kind),
                "bounds": bounds.as_ref().map(to_json),
                "full_interval_mass": to_json(&dn),
            });
            sink.write(&json_document("kappa", &config, sys.backend(), payload))?;
        }
        Format::Csv => {
            let mut csv = csv_header("kappa", &config, sys.backend());
            csv.push_str("n,kappa,kappa1,kappa2,kappa_bar,bound,bound_ok\n");
            for row in &table {
                let bound = kappa_bound_value(bound_kind, m.max(1), row.n);
                let ok = num_bigint::BigUint::from(row.kappa) <= bound;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.n, row.kappa, row.kappa1, row.kappa2, row.kappa_bar, bound, ok
                ));
            }
            sink.write(&csv)?;
        }
        Format::Dot => return Err(CliError::Usage("kappa has no dot output".into())),
    }
    let ok = bounds.as_ref().map(|b| b.all_ok()).unwrap_or(true) && dn.bound_ok;
    Ok(if ok { 0 } else { 1 })
}

// ---------------------------------------------------------------- tower

pub fn cmd_tower(
    spec: &SystemSpec,
    depth: usize,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    let sys = spec.build()?;
    let tower = build_tower(&sys, depth)?;
    let conservation = check_measure_preservation(&tower, depth)?;
    let constants = exactness_constants(&tower)?;
    let config = spec.config("tower", json!({"depth": depth}));
    match format {
        Format::Json => {
            let payload = json!({
                "system": to_json(&sys.descriptor()),
                "manifest": to_json(&tower.manifest()),
                "conservation": to_json(&conservation),
                "constants": to_json(&constants),
            });
            sink.write(&json_document("tower", &config, sys.backend(), payload))?;
        }
        Format::Dot => {
            let mut dot = String::new();
            dot.push_str(&format!(
                "// {}",
                csv_header("tower", &config, sys.backend()).trim_start_matches("# ")
            ));
            dot.push_str("digraph extension {\n  rankdir=TB;\n  node [shape=box];\n");
            dot.push_str(&format!(
                "  R0 [label=\"base [0,{0})x[0,{0})\"];\n",
                compact(&tower.r0_side)
            ));
            for rect in tower.all_rects() {
                let word: Vec<String> = rect
                    .word
                    .iter()
                    .map(|&j| compact(sys.digit_value(j as usize)))
                    .collect();
                dot.push_str(&format!(
                    "  R{}_{} [label=\"n={} i={}\\nword={}\\nx_end={}\"];\n",
                    rect.n,
                    rect.i,
                    rect.n,
                    rect.i,
                    word.join(""),
                    compact(&rect.x_end)
                ));
            }
            for edge in tower.edges() {
                let from = if edge.from_n == 0 {
                    "R0".to_string()
                } else {
                    format!("R{}_{}", edge.from_n, edge.from_i)
                };
                let digit = compact(sys.digit_value(edge.digit));
                match edge.target {
                    EdgeTarget::Base { band_offset } => {
                        dot.push_str(&format!(
                            "  {from} -> R0 [label=\"{digit} @ {}\"];\n",
                            compact(&band_offset)
                        ));
                    }
                    EdgeTarget::Rect { n, i } => {
                        dot.push_str(&format!("  {from} -> R{n}_{i} [label=\"{digit}\"];\n"));
                    }
                    EdgeTarget::Beyond => {
                        dot.push_str(&format!(
                            "  {from} -> beyond [label=\"{digit}\", style=dashed];\n"
                        ));
                    }
                }
            }
            dot.push_str("}\n");
            sink.write(&dot)?;
        }
        Format::Csv => return Err(CliError::Usage("tower emits json or dot".into())),
    }
    Ok(if conservation.all_ok() { 0 } else { 1 })
}

// ---------------------------------------------------------------- density

pub fn cmd_density(
    spec: &SystemSpec,
    mode: &str,
    depth: Option<usize>,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    let sys = spec.build()?;
    let request = match (mode, depth) {
        ("auto", None) => AcimRequest::Auto,
        ("closed", None) => AcimRequest::Closed,
        ("truncated", Some(n)) => AcimRequest::TruncatedDepth(n),
        ("truncated", None) => AcimRequest::Auto,
        ("auto", Some(n)) | ("closed", Some(n)) => {
            return Err(CliError::Usage(format!(
                "--depth {n} only applies to --mode truncated"
            )))
        }
        (other, _) => {
            return Err(CliError::Usage(format!(
                "mode must be auto, closed or truncated, got {other:?}"
            )))
        }
    };
    let request = if mode == "truncated" && depth.is_none() {
        // Default truncation target when no depth is pinned.
        AcimRequest::TruncatedTail(Scalar::from_ratio(1, 1_000_000_000))
    } else {
        request
    };
    let a = acim_with(&sys, request)?;
    let config = spec.config("density", json!({"mode": mode, "depth": depth}));
    match format {
        Format::Json => {
            let payload = json!({
                "system": to_json(&sys.descriptor()),
                "density": to_json(&a),
            });
            sink.write(&json_document("density", &config, sys.backend(), payload))?;
        }
        Format::Csv => {
            let mut csv = csv_header("density", &config, sys.backend());
            csv.push_str("left,right,value_decimal\n");
            let bps = a.density.breakpoints();
            for (i, v) in a.density.values().iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    scalar_row(&bps[i]),
                    scalar_row(&bps[i + 1]),
                    scalar_row(v)
                ));
            }
            sink.write(&csv)?;
            sink.write_sidecar(&json_document(
                "density",
                &config,
                sys.backend(),
                json!({"density": to_json(&a)}),
            ))?;
        }
        Format::Dot => return Err(CliError::Usage("density has no dot output".into())),
    }
    Ok(0)
}

// ---------------------------------------------------------------- verify

pub fn cmd_verify(spec: &SystemSpec, format: Format, sink: &Sink) -> CliResult<i32> {
    if format != Format::Json {
        return Err(CliError::Usage("verify supports only json output".into()));
    }
    let sys = spec.build()?;
    let mut all_ok = true;

    let lemmas = if sys.support_case() == SupportCase::MainCase {
        let report = sys.verify_lemmas()?;
        all_ok &= report.all_passed();
        Some(report)
    } else {
        None
    };

    let bounds = if sys.support_case() == SupportCase::MainCase {
        let report = check_kappa_bounds(&sys, 15)?;
        all_ok &= report.all_ok();
        Some(report)
    } else {
        None
    };

    let a = acim_with(&sys, AcimRequest::Auto)?;
    let residual = transfer_residual(&sys, &a.density)?;
    let residual_ok = match a.mode {
        DensityMode::Closed => residual.is_zero(),
        DensityMode::Truncated { .. } => {
            let bound = Scalar::from_int(2).try_mul(&a.tail_sup_normalized)?;
            residual.le(&bound)
        }
    };
    all_ok &= residual_ok;

    let config = spec.config("verify", json!({}));
    let payload = json!({
        "system": to_json(&sys.descriptor()),
        "lemmas": lemmas.as_ref().map(to_json),
        "kappa_bounds": bounds.as_ref().map(to_json),
        "density_mode": to_json(&a.mode),
        "transfer_residual": to_json(&residual),
        "residual_ok": residual_ok,
        "all_ok": all_ok,
    });
    sink.write(&json_document("verify", &config, sys.backend(), payload))?;
    Ok(if all_ok { 0 } else { 1 })
}

// ---------------------------------------------------------------- simulate

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    spec: &SystemSpec,
    iterations: u64,
    bins: usize,
    seeds: &[u64],
    x0: Option<f64>,
    jobs: usize,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    if format != Format::Json {
        return Err(CliError::Usage("simulate supports only json output".into()));
    }
    let sys = spec.build()?;
    let jobs = jobs.max(1);

    // Parallel sweep over seeds.
    let mut runs: Vec<(u64, serde_json::Value)> = Vec::new();
    let chunks: Vec<&[u64]> = seeds.chunks(seeds.len().div_ceil(jobs)).collect();
    let results: Vec<CliResult<Vec<(u64, serde_json::Value)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                let sys = &sys;
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&seed| {
                            let r = birkhoff_histogram(sys, x0, iterations, bins, seed)?;
                            Ok((seed, to_json(&r)))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for r in results {
        runs.extend(r?);
    }
    runs.sort_by_key(|(seed, _)| *seed);

    // Return-time statistics on exact points (non-classical systems).
    let return_stats = if sys.support_case() != SupportCase::ClassicalComplete
        && sys.backend() == Backend::Exact
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.first().copied().unwrap_or(0) ^ 0x5eed);
        let samples = 200;
        let mut total = 0usize;
        let mut max = 0usize;
        let mut counted = 0usize;
        for _ in 0..samples {
            let num = rng.random_range(0..1 << 12);
            let x = sys
                .support_end()
                .try_mul(&Scalar::from_ratio(num, 1 << 12))?;
            match return_times(&sys, &x, 1) {
                Ok(times) => {
                    total += times[0];
                    max = max.max(times[0]);
                    counted += 1;
                }
                Err(Error::OrbitBudgetExceeded { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let expected = closed_class_weights(&sys).ok().map(|cw| {
            // Mean return time to the base square: total measure over s².
            let mut integral = sys.support_end().clone();
            for (v, w) in cw.values.iter().zip(cw.weights.iter()) {
                integral = integral.try_add(&w.try_mul(v).unwrap()).unwrap();
            }
            integral.try_div(sys.support_end()).unwrap().to_f64()
        });
        json!({
            "samples": counted,
            "mean_first_return": total as f64 / counted.max(1) as f64,
            "max_first_return": max,
            "expected_mean": expected,
        })
    } else {
        serde_json::Value::Null
    };

    let config = spec.config(
        "simulate",
        json!({"iterations": iterations, "bins": bins, "seeds": seeds, "x0": x0}),
    );
    let payload = json!({
        "system": to_json(&sys.descriptor()),
        "runs": runs.into_iter().map(|(_, v)| v).collect::<Vec<_>>(),
        "return_stats": return_stats,
    });
    sink.write(&json_document("simulate", &config, sys.backend(), payload))?;
    Ok(0)
}

// ---------------------------------------------------------------- levels

/// Extra command: dump the enumerated non-full intervals as JSON.
pub fn cmd_levels(
    spec: &SystemSpec,
    depth: usize,
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    if format != Format::Json {
        return Err(CliError::Usage("levels supports only json output".into()));
    }
    let sys = spec.build()?;
    let refinement = refine_to(&sys, depth)?;
    let config = spec.config("levels", json!({"depth": depth}));
    let levels: Vec<serde_json::Value> = refinement
        .levels
        .iter()
        .map(|level| {
            json!({
                "n": level.n,
                "b": to_json(&level.b),
                "full": to_json(&level.full),
                "kappa_bar": level.kappa_bar,
            })
        })
        .collect();
    let payload = json!({
        "system": to_json(&sys.descriptor()),
        "levels": levels,
    });
    sink.write(&json_document("levels", &config, sys.backend(), payload))?;
    Ok(0)
}

/// Evaluate a word (with an optional repeating tail) at the system's β.
pub fn cmd_evaluate(
    spec: &SystemSpec,
    word_raw: &[String],
    tail_raw: &[String],
    format: Format,
    sink: &Sink,
) -> CliResult<i32> {
    if format != Format::Json {
        return Err(CliError::Usage("evaluate supports only json output".into()));
    }
    let (beta, _, backend) = spec.parse()?;
    let parse_word = |items: &[String]| -> CliResult<Word> {
        let symbols = items
            .iter()
            .map(|s| parse_scalar(s).map(|x| with_backend(x, backend)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::Usage)?;
        Ok(Word::new(symbols))
    };
    let word = parse_word(word_raw)?;
    let tail = if tail_raw.is_empty() {
        None
    } else {
        Some(parse_word(tail_raw)?)
    };
    let value = evaluate_word(&beta, &word, tail.as_ref())?;
    let config = spec.config("evaluate", json!({"word": word_raw, "tail": tail_raw}));
    let payload = json!({
        "value": to_json(&value),
        "decimal": value.to_decimal(24),
    });
    sink.write(&json_document("evaluate", &config, backend, payload))?;
    Ok(0)
}
