//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::time::Instant;

use common::*;
use dbh_core::eval::{metrics_from_pairs, seg_metrics};
use dbh_core::geometry::one_pixel_distance_bound;
use dbh_core::mask::{align_masks, Provenance};
use dbh_core::service::{
    decode, encode, ErrorReply, HealthRequest, HealthResponse, MaskPair, MeasureRequest, MeasureResponse, Message,
    ProviderHealth, ProviderSelector, ProviderState, SegmentRequest, SegmentResponse, ServiceConfig, StageTimings,
    Status,
};
use dbh_core::synth::{random_scene, SceneRanges, SyntheticScene};
use dbh_core::{measure_pair, CaptureConfig, ErrorCode, Measurement, TrunkMask};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Sweep {
    scenes: Vec<(SyntheticScene, f64, Measurement, Measurement)>,
    seconds: f64,
}

/// 50 seeded field-protocol scenes at 3000 x 4000, measured in both modes.
fn sweep() -> Result<Sweep, String> {
    let ranges = SceneRanges::field_protocol();
    let started = Instant::now();
    let mut scenes = Vec::new();
    for seed in 0..50 {
        let scene = random_scene(seed, &ranges).map_err(|e| e.to_string())?;
        let pair = scene.render_pair().map_err(|e| e.to_string())?;
        let cam = &scene.intrinsics;
        let est = measure_pair(&pair.far, &pair.close, cam, &CaptureConfig::estimated(scene.displacement))
            .map_err(|e| format!("seed {seed} estimated: {e}"))?;
        let man =
            measure_pair(&pair.far, &pair.close, cam, &CaptureConfig::manual(scene.far_distance, scene.displacement))
                .map_err(|e| format!("seed {seed} manual: {e}"))?;
        scenes.push((scene, pair.truth.dbh_cm, est, man));
    }
    Ok(Sweep { scenes, seconds: started.elapsed().as_secs_f64() })
}

fn round_trip(s: &Sweep) -> Outcome {
    let mut worst_est: f64 = 0.0;
    let mut worst_man: f64 = 0.0;
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for (scene, truth, est, man) in &s.scenes {
        if scene.intrinsics.image_height < 3000 {
            return Err("image height below 3000 px".into());
        }
        lo = lo.min(*truth);
        hi = hi.max(*truth);
        worst_est = worst_est.max((est.dbh_cm() - truth).abs() / truth);
        worst_man = worst_man.max((man.dbh_cm() - truth).abs() / truth);
    }
    let detail = format!(
        "{} scenes, DBH {lo:.1}-{hi:.1} cm, worst estimated {:.2}%, worst manual {:.2}%, {:.1} s",
        s.scenes.len(),
        100.0 * worst_est,
        100.0 * worst_man,
        s.seconds
    );
    if worst_est < 0.025 && worst_man < 0.01 && s.seconds < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn distance(s: &Sweep) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_err: f64 = 0.0;
    for (scene, _, est, _) in &s.scenes {
        let x = scene.far_distance.in_meters();
        let pixel = one_pixel_distance_bound(est.h_far_px as f64, est.h_close_px as f64, scene.displacement);
        let allowed = (0.01 * x).max(pixel.in_meters());
        let err = (est.far_distance_m() - x).abs();
        worst_ratio = worst_ratio.max(err / allowed);
        worst_err = worst_err.max(err / x);
    }
    let detail = format!("worst error {:.3}% of 6.096 m, {:.2} of the allowance", 100.0 * worst_err, worst_ratio);
    if worst_ratio <= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn df_identity(s: &Sweep) -> Outcome {
    let mut worst: f64 = 0.0;
    for (scene, _, _, man) in &s.scenes {
        let cam = &scene.intrinsics;
        let expect = scene.far_distance.in_meters() * cam.vertical_pitch().in_meters() / cam.focal_length.in_meters();
        worst = worst.max((man.df.meters_per_px() - expect).abs() / expect);
    }
    let detail = format!("worst relative df deviation {worst:.2e}");
    if worst < 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The seven statistics straight from their definitions, in input order.
fn metrics_oracle(rows: &[(String, f64, f64)]) -> [f64; 7] {
    let n = rows.len() as f64;
    let e: Vec<f64> = rows.iter().map(|r| r.2 - r.1).collect();
    let mean_e = e.iter().sum::<f64>() / n;
    [
        (e.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
        e.iter().map(|x| x.abs()).sum::<f64>() / n,
        100.0 * rows.iter().map(|r| (r.1 - r.2) / r.1).sum::<f64>() / n,
        100.0 * (rows.iter().map(|r| ((r.1 - r.2) / r.1).powi(2)).sum::<f64>() / n).sqrt(),
        e.iter().cloned().fold(f64::INFINITY, f64::min),
        e.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        (e.iter().map(|x| (x - mean_e).powi(2)).sum::<f64>() / n).sqrt(),
    ]
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<(String, f64, f64)> {
    (0..n)
        .map(|i| {
            let y: f64 = rng.random_range(30.0..100.0);
            let p = (y * (1.0 + rng.random_range(-0.2..0.2)) + rng.random_range(-3.0..3.0)).max(0.5);
            (format!("t{i:04}"), y, p)
        })
        .collect()
}

fn metrics_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let rows = random_rows(&mut rng, 200);
    let pairs: Vec<(&str, f64, f64)> = rows.iter().map(|r| (r.0.as_str(), r.1, r.2)).collect();
    let r = metrics_from_pairs(&pairs).map_err(|e| e.to_string())?;
    let got = [r.rmse_cm, r.mae_cm, r.rebias_pct, r.rermse_pct, r.min_error_cm, r.max_error_cm, r.std_dev_cm];
    let want = metrics_oracle(&rows);
    let worst = got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs()).fold(0.0, f64::max);
    if !(worst <= 1e-9) {
        return Err(format!("200 records: worst relative deviation {worst:.2e}"));
    }

    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let rows = random_rows(&mut rng, n);
        let pairs: Vec<(&str, f64, f64)> = rows.iter().map(|r| (r.0.as_str(), r.1, r.2)).collect();
        let m = metrics_from_pairs(&pairs).map_err(|e| e.to_string())?;
        // Equality holds for constant errors; allow the last rounding step.
        if m.rmse_cm < m.mae_cm * (1.0 - 1e-12) || m.rermse_pct < m.rebias_pct.abs() * (1.0 - 1e-12) {
            violations += 1;
        }
    }
    let detail =
        format!("200 records within {worst:.1e} relative; 1000 fuzzed inputs, {violations} invariant violations");
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn segmentation_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(4..64), rng.random_range(4..64));
        let (pa, pb) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        let a = TrunkMask::from_fn(w, h, Provenance::Synthetic, |_, _| rng.random_bool(pa));
        let b = TrunkMask::from_fn(w, h, Provenance::Synthetic, |_, _| rng.random_bool(pb));
        let m = seg_metrics(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((m.dice - 2.0 * m.iou / (1.0 + m.iou)).abs());
    }
    if worst > 1e-12 {
        return Err(format!("dice identity off by {worst:.2e}"));
    }

    let grid = |f: fn(u32, u32) -> bool| TrunkMask::from_fn(8, 8, Provenance::Synthetic, f);
    let left = grid(|c, _| c < 4);
    let right = grid(|c, _| c >= 4);
    let quarter = grid(|c, r| c < 4 && r < 4);
    let fixtures = [
        // Identity: 32 of 32.
        (seg_metrics(&left, &left), (1.0, 1.0, 1.0)),
        // Disjoint halves: nothing shared, every pixel wrong.
        (seg_metrics(&left, &right), (0.0, 0.0, 0.0)),
        // Quarter inside half: 16 shared of 32, 48 of 64 pixels agree.
        (seg_metrics(&quarter, &left), (0.5, 0.75, 2.0 / 3.0)),
    ];
    for (i, (got, (iou, acc, dice))) in fixtures.into_iter().enumerate() {
        let got = got.map_err(|e| e.to_string())?;
        if (got.iou, got.pixel_accuracy, got.dice) != (iou, acc, dice) {
            return Err(format!("fixture {i}: {got:?}"));
        }
    }
    Ok(format!("100 random pairs within {worst:.1e}; identity, disjoint and half-containment fixtures exact"))
}

fn alignment_recovery() -> Outcome {
    let scene = SyntheticScene::field_protocol(60.0);
    let x = scene.far_distance.in_meters();
    let far = scene.render_at(x).map_err(|e| e.to_string())?;
    let height_px = dbh_core::mask::row_profile(&far).map_err(|e| e.to_string())?.height_px;
    let tolerance = (2.0 / height_px as f64).max(0.01);
    let mut parts = Vec::new();
    let mut ok = true;
    for s in [1.1, 1.25, 1.333, 1.5] {
        let close = scene.render_at(x / s).map_err(|e| e.to_string())?;
        let t = align_masks(&far, &close).map_err(|e| format!("s = {s}: {e}"))?;
        ok &= (t.scale - s).abs() <= tolerance && t.iou > 0.95;
        parts.push(format!("s {s}: {:.4} iou {:.4}", t.scale, t.iou));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bytes(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut b = vec![0u8; rng.random_range(0..64)];
    rng.fill_bytes(&mut b);
    b
}

fn text(rng: &mut ChaCha8Rng) -> String {
    let alphabet: Vec<char> = "abcXYZ019 -_\"\\/é\n\t".chars().collect();
    (0..rng.random_range(0..12)).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

fn number(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-1e6..1e6),
        1 => rng.random::<f64>() * 1e-12,
        2 => f64::from_bits(rng.random::<u64>() & 0x7fef_ffff_ffff_ffff),
        _ => rng.random_range(0.0..200.0),
    }
}

fn maybe<T>(rng: &mut ChaCha8Rng, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    rng.random_bool(0.5).then(|| f(rng))
}

fn selector(rng: &mut ChaCha8Rng) -> ProviderSelector {
    match rng.random_range(0..4) {
        0 => ProviderSelector::Mask,
        1 => ProviderSelector::Oracle,
        2 => ProviderSelector::Baseline { invert: rng.random_bool(0.5), open_iterations: rng.random_range(0..5) },
        _ => ProviderSelector::External,
    }
}

fn status(rng: &mut ChaCha8Rng) -> Status {
    if rng.random_bool(0.5) {
        Status::Ok
    } else {
        let code = ErrorCode::ALL[rng.random_range(0..ErrorCode::ALL.len())];
        Status::Error { code: code.as_str().into(), message: text(rng) }
    }
}

fn random_message(rng: &mut ChaCha8Rng, kind: usize) -> Message {
    match kind {
        0 => Message::MeasureRequest(MeasureRequest {
            request_id: text(rng),
            far_image: bytes(rng),
            close_image: bytes(rng),
            focal_length_mm: number(rng),
            sensor_width_mm: number(rng),
            sensor_height_mm: number(rng),
            displacement_m: number(rng),
            far_distance_m: maybe(rng, number),
            provider: selector(rng),
            breast_height_m: maybe(rng, number),
        }),
        1 => Message::MeasureResponse(MeasureResponse {
            request_id: text(rng),
            status: status(rng),
            dbh_cm: maybe(rng, number),
            far_distance_m: maybe(rng, number),
            df_mm_per_px: maybe(rng, number),
            p_pixels: maybe(rng, |r| r.random()),
            breast_row: maybe(rng, |r| r.random()),
            h_far_px: maybe(rng, |r| r.random()),
            h_close_px: maybe(rng, |r| r.random()),
            alignment_iou: maybe(rng, number),
            distance_mode: maybe(rng, text),
            masks: maybe(rng, |r| MaskPair { far_png: bytes(r), close_png: bytes(r) }),
            timings: maybe(rng, |r| StageTimings {
                segment_ms: number(r),
                measure_ms: number(r),
                encode_ms: number(r),
                total_ms: number(r),
            }),
        }),
        2 => Message::SegmentRequest(SegmentRequest {
            request_id: text(rng),
            image: bytes(rng),
            provider: maybe(rng, selector),
        }),
        3 => Message::SegmentResponse(SegmentResponse {
            request_id: text(rng),
            status: status(rng),
            mask_png: maybe(rng, bytes),
        }),
        4 => Message::HealthRequest(HealthRequest {}),
        5 => Message::HealthResponse(HealthResponse {
            status: text(rng),
            version: text(rng),
            providers: (0..rng.random_range(0..4))
                .map(|_| ProviderHealth {
                    name: text(rng),
                    state: if rng.random_bool(0.5) { ProviderState::Available } else { ProviderState::Unavailable },
                    detail: maybe(rng, text),
                })
                .collect(),
        }),
        _ => Message::Error(ErrorReply { request_id: maybe(rng, text), code: text(rng), message: text(rng) }),
    }
}

fn measure_request(far: &TrunkMask, close: &TrunkMask, id: &str) -> Result<MeasureRequest, String> {
    Ok(MeasureRequest {
        request_id: id.into(),
        far_image: far.to_png().map_err(|e| e.to_string())?,
        close_image: close.to_png().map_err(|e| e.to_string())?,
        focal_length_mm: 6.0,
        sensor_width_mm: 4.8,
        sensor_height_mm: 6.4,
        displacement_m: 1.524,
        far_distance_m: None,
        provider: ProviderSelector::Mask,
        breast_height_m: None,
    })
}

fn service_conformance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut count = 0;
    for i in 0..700 {
        let m = random_message(&mut rng, i % 7);
        let back = decode(&encode(&m)).map_err(|e| format!("{}: {e}", m.type_name()))?;
        if back != m {
            return Err(format!("{} did not survive the round trip", m.type_name()));
        }
        count += 1;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scene = SyntheticScene::field_protocol(57.5);
    let pair = scene.render_pair().map_err(|e| e.to_string())?;
    let req = measure_request(&pair.far, &pair.close, "cli")?;
    std::fs::write(dir.path().join("p.far.png"), &req.far_image).map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("p.close.png"), &req.close_image).map_err(|e| e.to_string())?;
    let (out, cli) = measure_json(dir.path(), "p", &[]);
    if !out.status.success() {
        return Err(format!("cli measure failed: {}", stderr(&out)));
    }

    let server = LocalServer::start(ServiceConfig::default());
    let started = Instant::now();
    let reply = server.exchange(&Message::MeasureRequest(req));
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let Message::MeasureResponse(resp) = reply else { return Err(format!("unexpected reply {reply:?}")) };
    let server_ms = resp.timings.as_ref().map_or(f64::INFINITY, |t| t.total_ms);
    let served = serde_json::to_value(&resp).map_err(|e| e.to_string())?;
    if numeric_fields(&served) != numeric_fields(&cli) {
        return Err(format!("server {:?} != cli {:?}", numeric_fields(&served), numeric_fields(&cli)));
    }
    let detail = format!(
        "{count} generated messages round-trip; server equals CLI on {} numeric fields; 12 MP pair {server_ms:.0} ms \
         server-side ({wall_ms:.0} ms with transport)",
        NUMERIC_FIELDS.len()
    );
    if server_ms < 2000.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn error_taxonomy() -> Outcome {
    let cases: [(&str, &str, &str, &[&str]); 5] = [
        ("EMPTY_MASK", "empty.png", "trunk.close.png", &[]),
        ("ALIGN_FAIL", "trunk.far.png", "shrub.png", &[]),
        ("NON_APPROACHING", "trunk.far.png", "trunk.far.png", &[]),
        ("TRUNK_TOO_SHORT", "stump.far.png", "stump.close.png", &["--far-distance-m", "6.096"]),
        (
            "PROVIDER_UNAVAILABLE",
            "trunk.far.png",
            "trunk.close.png",
            &["--provider", "external", "--external", "127.0.0.1:1"],
        ),
    ];
    let mut seen = Vec::new();
    for (code, far, close, extra) in cases {
        let (far, close) = (fixture(far), fixture(close));
        let mut args = vec!["measure", "--far", path_str(&far), "--close", path_str(&close)];
        args.extend(CAMERA);
        args.extend(["--displacement-m", "1.524"]);
        args.extend(extra);
        let out = run(&args);
        let exit = out.status.code().unwrap_or(-1);
        if exit == 0 || !stderr(&out).contains(&format!("error[{code}]")) {
            return Err(format!("{code}: exit {exit}, stderr {}", stderr(&out).trim()));
        }
        seen.push(format!("{code} -> {exit}"));
    }
    Ok(seen.join(", "))
}

fn main() {
    let started = Instant::now();
    let sweep = sweep();
    let from_sweep = |f: fn(&Sweep) -> Outcome| -> Outcome {
        match &sweep {
            Ok(s) => f(s),
            Err(e) => Err(e.clone()),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("synthetic round-trip accuracy", from_sweep(round_trip)),
        ("distance estimation", from_sweep(distance)),
        ("DF identity", from_sweep(df_identity)),
        ("metrics oracle equivalence", metrics_equivalence()),
        ("segmentation metrics", segmentation_metrics()),
        ("alignment recovery", alignment_recovery()),
        ("service conformance", service_conformance()),
        ("error taxonomy", error_taxonomy()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
