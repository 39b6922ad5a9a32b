//! Runs the reference experiment end to end and prints one PASS/FAIL line per
//! acceptance criterion. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use glyphforge::corpus::{dequantize, split_dataset, Dataset, GlyphBitmap, GlyphFont, SamplePair};
use glyphforge::mixer::{
    glyph_png, interpolation_path, mix, one_hot, render_glyphs, render_specimen, MixSpec, StyleRef, StyleWeights,
};
use glyphforge::train::{
    fit, gradient_check, gradient_check_with, negate_array, tiny_config, FitOptions, TrainReport,
};
use glyphforge::unet::{Checkpoint, FontRecord, ModelConfig, Parameters};
use glyphforge::Tensor;
use glyphforge_acceptance as overfit4;
use glyphforge_service::{router, AppState, Limits, LoadedModel};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use tower::ServiceExt;

type Verdict = Result<String, String>;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Verdict) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(format!("panic: {msg}"))
    });
    let (pass, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    let outcome = Outcome {
        name,
        pass,
        detail: format!("{detail} [{:.1}s]", start.elapsed().as_secs_f64()),
    };
    println!(
        "{} {}: {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.name,
        outcome.detail
    );
    outcome
}

fn ensure(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn mean_abs(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
}

fn shape_contract() -> Verdict {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(overfit4::SEED);
    let configs = 60;
    for _ in 0..configs {
        let log = rng.random_range(3..=6u32);
        let size = 1usize << log;
        let depth = rng.random_range(2..=log as usize);
        let base = rng.random_range(1..=8);
        let cap = rng.random_range(1..=64);
        let k = rng.random_range(1..=5);
        let cfg = ModelConfig::new(size, depth, base, k).with_cap(cap).with_seed(rng.random());
        let params = Parameters::<f32>::init(&cfg).map_err(|e| format!("{cfg:?}: {e}"))?;
        let input = Tensor::new([2, 1, size, size], (0..2 * size * size).map(|i| (i % 5) as f32 / 4.0).collect())
            .expect("shape");
        let enc = params.encode(&input).map_err(|e| e.to_string())?;
        let side = size / (1 << depth);
        let channels = cap.min(base * (1 << (depth - 1)));
        if enc.bottleneck.shape() != [2, channels, side, side] {
            return Err(format!("{cfg:?}: bottleneck {:?}", enc.bottleneck.shape()));
        }
        let out = params
            .forward(&input, &one_hot(k - 1, k).expect("k >= 1"))
            .map_err(|e| e.to_string())?;
        if out.shape() != input.shape() {
            return Err(format!("{cfg:?}: output {:?}", out.shape()));
        }
    }
    Ok(format!("{configs} random configs"))
}

fn gradcheck() -> Verdict {
    let cfg = tiny_config();
    let report = gradient_check(&cfg, 3, 1).map_err(|e| e.to_string())?;
    let params = Parameters::<f32>::init(&cfg).map_err(|e| e.to_string())?;
    let mutated = gradient_check_with(&cfg, 3, 1, negate_array(&params, "enc1.weight")).map_err(|e| e.to_string())?;
    ensure(
        report.passes(1e-3) && mutated.max_relative_error > 0.1,
        format!(
            "max relative error {:.2e} over {} coordinates ({} kinks skipped); negated enc1.weight gives {:.2e}",
            report.max_relative_error, report.checked, report.skipped_kinks, mutated.max_relative_error
        ),
    )
}

fn dataset_determinism() -> Verdict {
    let a = overfit4::build().map_err(|e| e.to_string())?;
    let b = overfit4::build().map_err(|e| e.to_string())?;
    let same_hash = a.manifest.content_hash == b.manifest.content_hash;
    let same_bytes = a.to_bytes() == b.to_bytes();
    let s1 = split_dataset(&a.samples, 0.25, overfit4::SEED).map_err(|e| e.to_string())?;
    let s2 = split_dataset(&b.samples, 0.25, overfit4::SEED).map_err(|e| e.to_string())?;
    let same_split = s1 == s2;
    ensure(
        same_hash && same_bytes && same_split,
        format!(
            "{} samples, hash {}…, hashes equal {same_hash}, bytes equal {same_bytes}, split equal {same_split} ({} val chars)",
            a.samples.len(),
            &a.manifest.content_hash[..12],
            s1.val_codepoints().len()
        ),
    )
}

struct Trained {
    dataset: Dataset,
    checkpoint: Checkpoint,
    path: std::path::PathBuf,
    report: TrainReport,
}

fn train(dir: &Path) -> glyphforge::Result<Trained> {
    let dataset = overfit4::build()?;
    let split = split_dataset(&dataset.samples, 0.0, overfit4::SEED)?;
    let (p1, p2) = overfit4::phases();
    let src = &dataset.manifest.source_font;
    let mut progress = |phase: glyphforge::unet::Phase, step: usize, loss: f64, _lr: f32| {
        if step % 250 == 0 {
            eprintln!("  overfit-4 phase{} step {step} loss {loss:.4}", phase.number());
        }
    };
    let (checkpoint, report) = fit(
        &split,
        &overfit4::model(),
        &p1,
        &p2,
        FitOptions {
            out_dir: Some(dir.to_path_buf()),
            styles: dataset.catalog().names(),
            source_font: Some(FontRecord {
                path: src.path.clone(),
                sha256: src.sha256.clone(),
                margin_fraction: dataset.manifest.margin_fraction,
            }),
            progress: Some(&mut progress),
        },
    )?;
    let path = report.final_checkpoint.clone().expect("fit wrote checkpoints");
    Ok(Trained {
        dataset,
        checkpoint,
        path,
        report,
    })
}

fn convergence(t: &Trained) -> Verdict {
    let losses: Vec<f64> = t.report.losses.iter().map(|l| l.loss).collect();
    let tenth = (losses.len() / 10).max(1);
    let first = median(&losses[..tenth]);
    let last = median(&losses[losses.len() - tenth..]);
    let mae = t.report.eval.overall;
    let per_style: Vec<String> = t.report.eval.per_style.values().map(|m| format!("{m:.4}")).collect();
    ensure(
        mae < 0.05 && last < first,
        format!(
            "train MAE {mae:.4} (per style {}), loss median first 10% {first:.4} -> last 10% {last:.4}, {} steps in {:.0}s",
            per_style.join("/"),
            losses.len(),
            t.report.wall_clock.as_secs_f64()
        ),
    )
}

/// Source glyph and the target for every style, per character.
fn by_char(samples: &[SamplePair], k: usize) -> BTreeMap<char, (&SamplePair, Vec<Option<&SamplePair>>)> {
    let mut out: BTreeMap<char, (&SamplePair, Vec<Option<&SamplePair>>)> = BTreeMap::new();
    for s in samples {
        out.entry(s.codepoint()).or_insert_with(|| (s, vec![None; k])).1[s.style_id] = Some(s);
    }
    out
}

fn style_control(t: &Trained) -> Verdict {
    let k = t.checkpoint.config().style_count;
    let size = t.checkpoint.config().input_size;
    let chars = by_char(&t.dataset.samples, k);
    let complete: Vec<_> = chars.values().filter(|(_, ts)| ts.iter().all(Option::is_some)).collect();
    let batch = Tensor::stack_images(size, complete.iter().map(|(s, _)| s.source.pixels.as_slice()))
        .map_err(|e| e.to_string())?;
    let (mut good, mut total) = (0, 0);
    for i in 0..k {
        let out = t
            .checkpoint
            .params
            .forward(&batch, &one_hot(i, k).expect("i < k"))
            .map_err(|e| e.to_string())?;
        for (row, (_, targets)) in complete.iter().enumerate() {
            let y = out.sample(row);
            let own = mean_abs(y, &targets[i].expect("complete").target.pixels);
            let other = (0..k)
                .filter(|&j| j != i)
                .map(|j| mean_abs(y, &targets[j].expect("complete").target.pixels))
                .fold(f64::INFINITY, f64::min);
            good += usize::from(own < other);
            total += 1;
        }
    }
    let rate = good as f64 / total as f64;
    ensure(rate >= 0.9, format!("{good}/{total} cells closest to their own style ({:.1}%)", rate * 100.0))
}

fn style_sensitivity(t: &Trained) -> Verdict {
    let k = t.checkpoint.config().style_count;
    let sample = &t.dataset.samples[0];
    let size = t.checkpoint.config().input_size;
    let x = Tensor::stack_images(size, [sample.source.pixels.as_slice()]).map_err(|e| e.to_string())?;
    let a = t.checkpoint.params.forward(&x, &one_hot(0, k).unwrap()).map_err(|e| e.to_string())?;
    let b = t.checkpoint.params.forward(&x, &one_hot(1, k).unwrap()).map_err(|e| e.to_string())?;
    let diff = mean_abs(a.data(), b.data());
    ensure(diff > 0.0, format!("e_0 vs e_1 outputs differ by {diff:.4} mean abs"))
}

fn source_font(t: &Trained) -> Result<(GlyphFont, f32), String> {
    let record = t.checkpoint.source_font.as_ref().ok_or("checkpoint has no source font")?;
    let font = GlyphFont::load(Path::new(&record.path)).map_err(|e| e.to_string())?;
    Ok((font, record.margin_fraction))
}

fn interpolation(t: &Trained) -> Verdict {
    let k = t.checkpoint.config().style_count;
    let (font, margin) = source_font(t)?;
    let chars: Vec<char> = t.dataset.manifest.charset.iter().take(8).copied().collect();
    let params = &t.checkpoint.params;
    let render = |w: &StyleWeights| -> Result<Vec<GlyphBitmap>, String> {
        let (glyphs, skipped) = render_glyphs(params, &font, margin, &chars, w).map_err(|e| e.to_string())?;
        if !skipped.is_empty() {
            return Err(format!("{} characters skipped", skipped.len()));
        }
        Ok(glyphs.into_iter().flatten().collect())
    };
    let pngs = |glyphs: &[GlyphBitmap]| -> Vec<Vec<u8>> {
        glyphs.iter().map(|g| glyph_png(g).expect("png encodes")).collect()
    };
    let (e0, e1) = (one_hot(0, k).unwrap(), one_hot(1, k).unwrap());
    let path = interpolation_path(&e0, &e1, 11).map_err(|e| e.to_string())?;
    let frames: Vec<Vec<_>> = path.iter().map(render).collect::<Result<_, _>>()?;
    let endpoints = pngs(&frames[0]) == pngs(&render(&e0)?) && pngs(&frames[10]) == pngs(&render(&e1)?);
    let diffs: Vec<f64> = frames
        .windows(2)
        .map(|w| {
            let a: Vec<f32> = w[0].iter().flat_map(|g| g.to_bytes()).map(dequantize).collect();
            let b: Vec<f32> = w[1].iter().flat_map(|g| g.to_bytes()).map(dequantize).collect();
            mean_abs(&a, &b)
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let max = diffs.iter().copied().fold(0.0, f64::max);
    ensure(
        endpoints && max <= 5.0 * mean,
        format!(
            "endpoints byte-identical {endpoints}; adjacent diffs mean {mean:.5} max {max:.5} (ratio {:.2})",
            max / mean
        ),
    )
}

fn mix_equivalence(t: &Trained) -> Verdict {
    let k = t.checkpoint.config().style_count;
    let (font, _) = source_font(t)?;
    let catalog = t.dataset.catalog();
    let chars: Vec<char> = t.dataset.manifest.charset.iter().take(8).copied().collect();
    for (i, name) in catalog.names().iter().enumerate() {
        let spec = MixSpec::new(vec![(StyleRef::Name(name.clone()), 1.0)]);
        let mixed = mix(&spec, &catalog).map_err(|e| e.to_string())?;
        let a = render_specimen(&t.checkpoint, &chars, &[mixed], &font)
            .and_then(|s| s.to_png())
            .map_err(|e| e.to_string())?;
        let b = render_specimen(&t.checkpoint, &chars, &[one_hot(i, k).unwrap()], &font)
            .and_then(|s| s.to_png())
            .map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("style {name} differs"));
        }
    }
    Ok(format!("{k} styles byte-identical"))
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
        None => req.body(Body::empty()),
    }
    .expect("request builds");
    let resp = router(state.clone()).oneshot(req).await.expect("router answers");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body").to_bytes().to_vec();
    (status, bytes)
}

async fn post(state: &Arc<AppState>, uri: &str, body: Value) -> (StatusCode, Vec<u8>) {
    call(state, "POST", uri, Some(serde_json::to_vec(&body).unwrap())).await
}

fn code_of(bytes: &[u8]) -> String {
    serde_json::from_slice::<Value>(bytes)
        .ok()
        .and_then(|v| v["error"]["code"].as_str().map(String::from))
        .unwrap_or_default()
}

async fn service_contract(path: &Path) -> Verdict {
    let start = Instant::now();
    let model = LoadedModel::load(path, None, None).map_err(|e| e.to_string())?;
    let k = model.style_count();
    let state = AppState::ready(model, Limits::default());
    let chars = "的一是了我不人在";
    let e = |i: usize| one_hot(i, k).unwrap().as_slice().to_vec();
    let mut problems = Vec::new();

    let (s1, g1) = post(&state, "/generate", json!({"chars": chars, "weights": e(0)})).await;
    let (s2, g2) = post(&state, "/generate", json!({"chars": chars, "weights": e(0)})).await;
    if s1 != StatusCode::OK || s2 != StatusCode::OK || g1 != g2 {
        problems.push(format!("/generate not deterministic ({s1})"));
    }
    let (_, r1) = post(&state, "/generate?format=raw", json!({"chars": chars, "weights": e(0)})).await;
    let (_, r2) = post(&state, "/generate?format=raw", json!({"chars": chars, "weights": e(0)})).await;
    if r1 != r2 {
        problems.push("raw /generate not deterministic".into());
    }
    let (_, g_end) = post(&state, "/generate", json!({"chars": chars, "weights": e(1)})).await;
    let body = json!({"chars": chars, "from": e(0), "to": e(1), "steps": 11});
    let (si, i1) = post(&state, "/interpolate", body.clone()).await;
    let (_, i2) = post(&state, "/interpolate", body).await;
    if si != StatusCode::OK || i1 != i2 {
        problems.push(format!("/interpolate not deterministic ({si})"));
    }
    let interp: Value = serde_json::from_slice(&i1).map_err(|e| e.to_string())?;
    let start_gen: Value = serde_json::from_slice(&g1).map_err(|e| e.to_string())?;
    let end_gen: Value = serde_json::from_slice(&g_end).map_err(|e| e.to_string())?;
    let frames = interp["frames"].as_array().cloned().unwrap_or_default();
    if frames.len() != 11
        || frames[0]["images"] != start_gen["images"]
        || frames[10]["images"] != end_gen["images"]
    {
        problems.push("interpolation endpoints differ from /generate".into());
    }

    let long: String = "的".repeat(65);
    let cases: Vec<(&str, &str, Option<Vec<u8>>, StatusCode, &str)> = vec![
        ("POST", "/generate", Some(b"{".to_vec()), StatusCode::BAD_REQUEST, "InvalidJson"),
        ("POST", "/generate", Some(serde_json::to_vec(&json!({"chars": "的", "weights": e(0), "extra": 1})).unwrap()), StatusCode::BAD_REQUEST, "InvalidJson"),
        ("POST", "/generate", Some(serde_json::to_vec(&json!({"chars": "", "weights": e(0)})).unwrap()), StatusCode::BAD_REQUEST, "EmptyChars"),
        ("POST", "/generate", Some(serde_json::to_vec(&json!({"chars": long, "weights": e(0)})).unwrap()), StatusCode::BAD_REQUEST, "TooManyChars"),
        ("POST", "/generate", Some(serde_json::to_vec(&json!({"chars": "的", "weights": [1.0]})).unwrap()), StatusCode::BAD_REQUEST, "StyleDimMismatch"),
        ("POST", "/generate", Some(serde_json::to_vec(&json!({"chars": "的", "weights": [1e39, 0, 0, 0]})).unwrap()), StatusCode::BAD_REQUEST, "NonFiniteWeights"),
        ("POST", "/generate?format=gif", Some(serde_json::to_vec(&json!({"chars": "的", "weights": e(0)})).unwrap()), StatusCode::BAD_REQUEST, "UnsupportedFormat"),
        ("POST", "/interpolate", Some(serde_json::to_vec(&json!({"chars": "的", "from": e(0), "to": e(1), "steps": 1})).unwrap()), StatusCode::BAD_REQUEST, "StepsOutOfRange"),
        ("POST", "/interpolate", Some(serde_json::to_vec(&json!({"chars": "的", "from": e(0), "to": e(1), "steps": 34})).unwrap()), StatusCode::BAD_REQUEST, "StepsOutOfRange"),
        ("POST", "/interpolate", Some(serde_json::to_vec(&json!({"chars": "的", "from": e(0), "to": [0.5], "steps": 3})).unwrap()), StatusCode::BAD_REQUEST, "StyleDimMismatch"),
    ];
    let mut checked = 0;
    for (method, uri, body, status, code) in cases {
        let (got, bytes) = call(&state, method, uri, body).await;
        checked += 1;
        if got != status || code_of(&bytes) != code {
            problems.push(format!("{uri}: expected {status} {code}, got {got} {}", code_of(&bytes)));
        }
    }
    let loading = AppState::loading(Limits::default());
    for (method, uri, body) in [
        ("GET", "/styles", None),
        ("POST", "/generate", Some(serde_json::to_vec(&json!({"chars": "的", "weights": e(0)})).unwrap())),
        ("POST", "/interpolate", Some(serde_json::to_vec(&json!({"chars": "的", "from": e(0), "to": e(1), "steps": 2})).unwrap())),
    ] {
        let (got, bytes) = call(&loading, method, uri, body).await;
        checked += 1;
        if got != StatusCode::SERVICE_UNAVAILABLE || code_of(&bytes) != "NotReady" {
            problems.push(format!("{uri} while loading: got {got}"));
        }
    }
    let (health, _) = call(&loading, "GET", "/healthz", None).await;
    checked += 1;
    if health != StatusCode::SERVICE_UNAVAILABLE {
        problems.push(format!("/healthz while loading: got {health}"));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        problems.push(format!("took {:.0}s", elapsed.as_secs_f64()));
    }
    if problems.is_empty() {
        Ok(format!("determinism and endpoint equality hold; {checked} error paths return their codes"))
    } else {
        Err(problems.join("; "))
    }
}

fn main() {
    println!("acceptance: overfit-4 reference experiment");
    let mut outcomes = vec![
        check("shape contract", shape_contract),
        check("gradient check", gradcheck),
        check("dataset determinism", dataset_determinism),
    ];

    let dir = tempfile::tempdir().expect("tempdir");
    eprintln!("  training overfit-4 ({} + {} steps)", overfit4::PHASE1_STEPS, overfit4::PHASE2_STEPS);
    let trained = train(dir.path()).map_err(|e| e.to_string());
    let with_model = |name: &'static str, f: &dyn Fn(&Trained) -> Verdict| match &trained {
        Ok(t) => check(name, || f(t)),
        Err(e) => check(name, || Err(format!("overfit-4 training failed: {e}"))),
    };
    outcomes.push(with_model("overfit-4 convergence", &convergence));
    outcomes.push(with_model("style control", &style_control));
    outcomes.push(with_model("style sensitivity", &style_sensitivity));
    outcomes.push(with_model("interpolation continuity", &interpolation));
    outcomes.push(with_model("one-hot/mix equivalence", &mix_equivalence));
    outcomes.push(with_model("service contract", &|t| {
        tokio::runtime::Runtime::new()
            .map_err(|e| e.to_string())?
            .block_on(service_contract(&t.path))
    }));

    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
