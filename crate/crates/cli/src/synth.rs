use std::path::{Path, PathBuf};

use clap::Args;
use dbh_core::synth::{photograph, random_scene, RenderedPair, SceneRanges, SceneSpec, SyntheticScene};
use dbh_core::units::Length;
use dbh_core::CameraIntrinsics;
use serde_json::json;

use crate::{io_err, CliError, CliResult};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File stem; defaults to `scene-<seed>`. With `--count`, `-<k>` is appended.
    #[arg(long)]
    id: Option<String>,
    /// Number of scenes, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    count: u32,
    /// Fixed diameter; drawn from 30-100 cm when omitted.
    #[arg(long)]
    dbh_cm: Option<f64>,
    /// Far camera-to-trunk distance.
    #[arg(long, default_value_t = 6.096)]
    distance_m: f64,
    #[arg(long, default_value_t = 1.524)]
    displacement_m: f64,
    /// Ground to crown base.
    #[arg(long, default_value_t = 3.0)]
    trunk_height_m: f64,
    #[arg(long, default_value_t = 6.0)]
    focal_mm: f64,
    #[arg(long, default_value_t = 4.8)]
    sensor_w_mm: f64,
    #[arg(long, default_value_t = 6.4)]
    sensor_h_mm: f64,
    #[arg(long, default_value_t = 3000)]
    image_w_px: u32,
    #[arg(long, default_value_t = 4000)]
    image_h_px: u32,
    /// TOML scene file with unit-suffixed keys; replaces the geometry flags.
    #[arg(long, conflicts_with_all = ["dbh_cm", "count"])]
    scene: Option<PathBuf>,
    /// Also write grayscale `<id>.far.photo.png` / `<id>.close.photo.png`.
    #[arg(long)]
    photos: bool,
    /// Also register the photos as an oracle store in this directory.
    #[arg(long)]
    oracle_dir: Option<PathBuf>,
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn scene_for(args: &SynthArgs, seed: u64) -> Result<SyntheticScene, CliError> {
    if let Some(path) = &args.scene {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        return Ok(SceneSpec::parse(&text)?.to_scene()?);
    }
    let intrinsics =
        CameraIntrinsics::from_mm(args.focal_mm, args.sensor_w_mm, args.sensor_h_mm, args.image_w_px, args.image_h_px)?;
    if let Some(dbh) = args.dbh_cm {
        let scene = SyntheticScene {
            trunk_height: Length::meters(args.trunk_height_m),
            far_distance: Length::meters(args.distance_m),
            displacement: Length::meters(args.displacement_m),
            intrinsics,
            ..SyntheticScene::field_protocol(dbh)
        };
        scene.validate()?;
        return Ok(scene);
    }
    let ranges = SceneRanges {
        far_distance_m: (args.distance_m, args.distance_m),
        displacement_m: (args.displacement_m, args.displacement_m),
        trunk_height_m: (args.trunk_height_m, args.trunk_height_m),
        intrinsics,
        ..SceneRanges::default()
    };
    Ok(random_scene(seed, &ranges)?)
}

fn truth_json(id: &str, seed: u64, scene: &SyntheticScene, pair: &RenderedPair) -> serde_json::Value {
    let cam = &scene.intrinsics;
    json!({
        "id": id,
        "seed": seed,
        "dbh_cm": pair.truth.dbh_cm,
        "far_distance_m": pair.truth.far_distance_m,
        "df_mm_per_px": pair.truth.df_mm_per_px,
        "displacement_m": scene.displacement.in_meters(),
        "trunk_height_m": scene.trunk_height.in_meters(),
        "camera_height_m": scene.camera_height.in_meters(),
        "focal_mm": cam.focal_length.in_meters() * 1e3,
        "sensor_w_mm": cam.sensor_width.in_meters() * 1e3,
        "sensor_h_mm": cam.sensor_height.in_meters() * 1e3,
        "image_w_px": cam.image_width,
        "image_h_px": cam.image_height,
        "silhouette": scene.silhouette_model,
    })
}

pub fn run_synth(args: &SynthArgs) -> CliResult {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    if let Some(dir) = &args.oracle_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let stem = args.id.clone().unwrap_or_else(|| format!("scene-{}", args.seed));
    for k in 0..args.count {
        let seed = args.seed + k as u64;
        let id = if args.count == 1 { stem.clone() } else { format!("{stem}-{k:03}") };
        let scene = scene_for(args, seed)?;
        let pair = scene.render_pair()?;
        write(&args.out.join(format!("{id}.far.png")), &pair.far.to_png()?)?;
        write(&args.out.join(format!("{id}.close.png")), &pair.close.to_png()?)?;
        let truth = serde_json::to_string_pretty(&truth_json(&id, seed, &scene, &pair)).expect("json value");
        write(&args.out.join(format!("{id}.truth.json")), format!("{truth}\n").as_bytes())?;

        if args.photos || args.oracle_dir.is_some() {
            for (view, mask, salt) in [("far", &pair.far, 0), ("close", &pair.close, 1)] {
                let photo = photograph(mask, seed.wrapping_mul(2).wrapping_add(salt))?;
                if args.photos {
                    write(&args.out.join(format!("{id}.{view}.photo.png")), &photo)?;
                }
                if let Some(dir) = &args.oracle_dir {
                    write(&dir.join(format!("{id}.{view}.img")), &photo)?;
                    write(&dir.join(format!("{id}.{view}.mask.png")), &mask.to_png()?)?;
                }
            }
        }
        println!("{id}\t{:.3}", pair.truth.dbh_cm);
    }
    Ok(())
}
