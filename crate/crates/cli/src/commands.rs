use std::path::{Path, PathBuf};

use serde::Serialize;

use synprob::eval::{match_detections, pr_curve, pr_intersection, MatchParams, PrPoint};
use synprob::io::{
    load_annotations, load_dataset, load_queries, read_manifest, sanitize,
    save_probability_volume, write_dataset, write_json, write_pgm8, Dataset, DatasetManifest,
};
use synprob::model::{Detection, GroundTruthAnnotation, Label, QuerySpec};
use synprob::postprocess::{
    density, density_sweep, extract_detections, threshold_grid, validate_thresholds,
    DetectionParams,
};
use synprob::query::{execute_query, QueryOptions};
use synprob::synaptogram::{build_synaptogram, to_gray8, SynaptogramRequest};
use synprob::synth::{generate, SynthSpec};
use synprob::{Error, Result};

use crate::output::{write_csv, Run};
use crate::{DetectArgs, DetectionArgs, EvalArgs, InputArgs, SweepArgs, SynaptogramArgs, SynthArgs};

impl DetectionArgs {
    fn params(&self) -> Result<DetectionParams> {
        let p = DetectionParams {
            threshold: self.threshold,
            min_voxels: self.min_voxels,
            connectivity: self.connectivity,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Parses `lo:hi:step` or a comma-separated list.
fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("cannot parse threshold grid '{s}'"));
    let grid = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [lo, hi, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || hi < lo {
            return Err(Error::InvalidParameter(format!(
                "threshold grid '{s}' needs lo ≤ hi and a positive step"
            )));
        }
        threshold_grid(lo, hi, step)
    } else {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    validate_thresholds(&grid)?;
    Ok(grid)
}

/// Reads the manifest and queries and checks that every marker names a
/// channel, all before any volume is loaded.
fn prepare(input: &InputArgs) -> Result<(DatasetManifest, Vec<QuerySpec>)> {
    let manifest = read_manifest(&input.manifest)?;
    let queries = load_queries(&input.queries)?;
    for q in &queries {
        for m in q.markers() {
            if !manifest.channels.iter().any(|c| c.name == m.channel_name) {
                return Err(Error::UnknownChannel(m.channel_name.clone()));
            }
        }
    }
    Ok((manifest, queries))
}

fn label_truth(gt: &[GroundTruthAnnotation], q: &QuerySpec) -> Vec<GroundTruthAnnotation> {
    match q.label {
        Some(l) => gt.iter().filter(|a| a.label == l).cloned().collect(),
        None => gt.to_vec(),
    }
}

#[derive(Serialize)]
struct DetectionRow {
    id: usize,
    centroid_x_um: f64,
    centroid_y_um: f64,
    centroid_z_um: f64,
    voxel_count: usize,
    peak_probability: f32,
    mean_probability: f32,
}

const DETECTION_HEADER: [&str; 7] = [
    "id",
    "centroid_x_um",
    "centroid_y_um",
    "centroid_z_um",
    "voxel_count",
    "peak_probability",
    "mean_probability",
];

fn detection_rows(dets: &[Detection]) -> Vec<DetectionRow> {
    dets.iter()
        .map(|d| DetectionRow {
            id: d.id,
            centroid_x_um: d.centroid_um[0],
            centroid_y_um: d.centroid_um[1],
            centroid_z_um: d.centroid_um[2],
            voxel_count: d.voxels.len(),
            peak_probability: d.peak_probability as f32,
            mean_probability: d.mean_probability as f32,
        })
        .collect()
}

pub fn detect(args: DetectArgs) -> Result<()> {
    let params = args.detection.params()?;
    let (_, queries) = prepare(&args.input)?;
    if queries.is_empty() {
        eprintln!("warning: {} lists no queries; nothing to do", args.input.queries.display());
        return Ok(());
    }
    let mut run = Run::start(
        "detect",
        args.clone(),
        &[&args.input.manifest, &args.input.queries],
        &args.out,
    )?;
    let ds = load_dataset(&args.input.manifest)?;
    let opts = QueryOptions {
        keep_stages: args.export_stages,
        ..QueryOptions::default()
    };

    let mut summary = Vec::new();
    for q in &queries {
        let result = execute_query(&ds.channels, q, opts)?;
        let dir = PathBuf::from(sanitize(&q.name));
        let dets = extract_detections(&result.synapse, &params)?;

        let path = run.path(&dir.join("synapse.json").to_string_lossy());
        save_probability_volume(&result.synapse, &path)?;
        run.record(&path);
        let path = run.path(&dir.join("detections.json").to_string_lossy());
        write_json(&path, &dets)?;
        run.record(&path);
        let path = run.path(&dir.join("detections.csv").to_string_lossy());
        write_csv(&path, &DETECTION_HEADER, &detection_rows(&dets))?;
        run.record(&path);

        for (channel, st) in &result.stages {
            for (stage, v) in [
                ("foreground", &st.foreground),
                ("puncta_2d", &st.puncta_2d),
                ("puncta_3d", &st.puncta_3d),
            ] {
                let name = format!("{}_{stage}.json", sanitize(channel));
                let path = run.path(&dir.join("stages").join(name).to_string_lossy());
                save_probability_volume(v, &path)?;
                run.record(&path);
            }
        }

        let d = density(&dets, ds.volume_um3(), None)?;
        println!("{}\t{} detections\t{d:.4} per µm³", q.name, dets.len());
        summary.push((q.name.clone(), dets.len(), d));
    }
    let path = run.path("summary.csv");
    write_csv(&path, &["query", "count", "density_per_um3"], &summary)?;
    run.record(&path);
    run.finish()
}

fn annotations_for(args: &EvalArgs, manifest: &DatasetManifest, ds: &Dataset) -> Result<Vec<GroundTruthAnnotation>> {
    match &args.annotations {
        Some(p) => load_annotations(p, &ds.manifest.geometry, ds.manifest.dims),
        None if manifest.annotations.is_some() => Ok(ds.annotations.clone()),
        None => Err(Error::InvalidParameter(
            "no annotations: pass --annotations or name a file in the manifest".into(),
        )),
    }
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    query: &'a str,
    annotations: usize,
    report: synprob::eval::EvaluationReport,
    intersection: Option<PrPoint>,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let params = args.detection.params()?;
    let grid = parse_thresholds(&args.thresholds)?;
    if !(args.max_distance > 0.0) {
        return Err(Error::InvalidParameter("--max-distance must be positive".into()));
    }
    let (manifest, queries) = prepare(&args.input)?;
    if args.annotations.is_none() && manifest.annotations.is_none() {
        return Err(Error::InvalidParameter(
            "no annotations: pass --annotations or name a file in the manifest".into(),
        ));
    }
    if queries.is_empty() {
        eprintln!("warning: {} lists no queries; nothing to do", args.input.queries.display());
        return Ok(());
    }
    let mut inputs: Vec<&Path> = vec![&args.input.manifest, &args.input.queries];
    if let Some(a) = &args.annotations {
        inputs.push(a);
    }
    let mut run = Run::start("eval", args.clone(), &inputs, &args.out)?;
    let ds = load_dataset(&args.input.manifest)?;
    let all_truth = annotations_for(&args, &manifest, &ds)?;
    let match_params = MatchParams {
        max_centroid_distance_um: args.max_distance,
        ..MatchParams::default()
    };

    for q in &queries {
        let p = execute_query(&ds.channels, q, QueryOptions::default())?.synapse;
        let gt = label_truth(&all_truth, q);
        let curve = pr_curve(&p, &gt, &grid, &params, &match_params)?;
        let dets = extract_detections(&p, &params)?;
        let mut report = match_detections(&dets, &gt, &match_params);
        report.threshold = Some(params.threshold);
        report.pr_curve = curve.clone();
        let intersection = pr_intersection(&curve);

        let stem = sanitize(&q.name);
        let path = run.path(&format!("eval_{stem}.json"));
        write_json(
            &path,
            &EvalOutput {
                query: &q.name,
                annotations: gt.len(),
                report: report.clone(),
                intersection,
            },
        )?;
        run.record(&path);
        let path = run.path(&format!("pr_{stem}.csv"));
        let rows: Vec<_> = curve
            .iter()
            .map(|c| {
                (
                    c.threshold,
                    c.detections,
                    c.true_positives,
                    c.precision,
                    c.precision_undefined,
                    c.recall,
                )
            })
            .collect();
        write_csv(
            &path,
            &[
                "threshold",
                "detections",
                "true_positives",
                "precision",
                "precision_undefined",
                "recall",
            ],
            &rows,
        )?;
        run.record(&path);

        print!(
            "{}\tt={:.2} P={:.3} R={:.3}",
            q.name, params.threshold, report.precision, report.recall
        );
        match intersection {
            Some(x) => println!(
                "\tPR intersection t={:.2} P={:.3} R={:.3}",
                x.threshold, x.precision, x.recall
            ),
            None => println!("\tno PR intersection"),
        }
    }
    run.finish()
}

/// Reference density band (center, half width) per µm³ for a label.
fn reference_band(label: Option<Label>) -> Option<(f64, f64)> {
    match label? {
        Label::Excitatory => Some((0.9, 0.15)),
        Label::Inhibitory => Some((0.1, 0.05)),
        Label::Other => None,
    }
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let grid = parse_thresholds(&args.thresholds)?;
    let params = DetectionParams {
        threshold: 0.5,
        min_voxels: args.min_voxels,
        connectivity: args.connectivity,
    };
    params.validate()?;
    let (_, queries) = prepare(&args.input)?;
    if queries.is_empty() {
        eprintln!("warning: {} lists no queries; nothing to do", args.input.queries.display());
        return Ok(());
    }
    let mut run = Run::start(
        "sweep",
        args.clone(),
        &[&args.input.manifest, &args.input.queries],
        &args.out,
    )?;
    let ds = load_dataset(&args.input.manifest)?;
    for q in &queries {
        let p = execute_query(&ds.channels, q, QueryOptions::default())?.synapse;
        let points = density_sweep(&p, &grid, &params, None)?;
        let band = reference_band(q.label);
        let rows: Vec<_> = points
            .iter()
            .map(|pt| (pt.threshold, pt.count, pt.density, band.map(|b| b.0), band.map(|b| b.1)))
            .collect();
        let path = run.path(&format!("sweep_{}.csv", sanitize(&q.name)));
        write_csv(
            &path,
            &[
                "threshold",
                "count",
                "density_per_um3",
                "reference_density_per_um3",
                "reference_tolerance_per_um3",
            ],
            &rows,
        )?;
        run.record(&path);
        println!("{}\t{} thresholds\t{}", q.name, grid.len(), path.display());
    }
    run.finish()
}

#[derive(Serialize)]
struct Truth<'a> {
    synapses: &'a [synprob::synth::PlantedSynapse],
    decoys: &'a [synprob::synth::Decoy],
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).map_err(|source| Error::Io {
        path: args.spec.clone(),
        source,
    })?;
    let mut spec: SynthSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: args.spec.clone(),
        source,
    })?;
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    spec.validate()?;
    let mut run = Run::start("synth", args.clone(), &[&args.spec], &args.out)?;
    let data = generate(&spec)?;
    let manifest = write_dataset(&args.out, &data.channels, Some(&data.annotations))?;
    run.record(&manifest);
    for c in &data.channels {
        run.record(&args.out.join(format!("{}.raw", sanitize(&c.name))));
    }
    run.record(&args.out.join("annotations.json"));
    let path = run.path("truth.json");
    write_json(
        &path,
        &Truth {
            synapses: &data.synapses,
            decoys: &data.decoys,
        },
    )?;
    run.record(&path);
    println!(
        "{} synapses, {} decoys, {} channels\t{}",
        data.synapses.len(),
        data.decoys.len(),
        data.channels.len(),
        manifest.display()
    );
    run.finish()
}

#[derive(Serialize)]
struct SynaptogramOutput<'a> {
    query: &'a str,
    detection_id: Option<usize>,
    center_um: [f64; 3],
    threshold: f64,
    #[serde(flatten)]
    layout: &'a synprob::synaptogram::SynaptogramLayout,
    /// `files[row][column]`.
    files: Vec<Vec<String>>,
}

pub fn synaptogram(args: SynaptogramArgs) -> Result<()> {
    let params = args.detection.params()?;
    let (_, queries) = prepare(&args.input)?;
    let q = match &args.query {
        Some(name) => queries.iter().find(|q| &q.name == name).ok_or_else(|| Error::InvalidQuery {
            name: name.clone(),
            reason: "not in the query file".into(),
        })?,
        None => queries.first().ok_or_else(|| {
            Error::InvalidParameter(format!("{} lists no queries", args.input.queries.display()))
        })?,
    };
    if args.centroid.as_ref().is_some_and(|c| c.len() != 3) {
        return Err(Error::InvalidParameter("--centroid takes x,y,z in µm".into()));
    }
    if args.slices == 0 || !(args.half_window >= 0.0) {
        return Err(Error::InvalidParameter(
            "--slices must be positive and --half-window non-negative".into(),
        ));
    }
    let mut run = Run::start(
        "synaptogram",
        args.clone(),
        &[&args.input.manifest, &args.input.queries],
        &args.out,
    )?;
    let ds = load_dataset(&args.input.manifest)?;
    let result = execute_query(
        &ds.channels,
        q,
        QueryOptions {
            keep_stages: true,
            ..QueryOptions::default()
        },
    )?;
    let dets = extract_detections(&result.synapse, &params)?;
    let detection = match args.detection_id {
        Some(id) => Some(
            dets.iter()
                .find(|d| d.id == id)
                .ok_or(Error::UnknownDetection(id))?,
        ),
        None => None,
    };
    let center_um = match (detection, &args.centroid) {
        (Some(d), _) => d.centroid_um,
        (None, Some(c)) => [c[0], c[1], c[2]],
        (None, None) => unreachable!("clap requires one of --detection-id or --centroid"),
    };
    let rows: Vec<(String, &synprob::model::ProbabilityVolume)> = result
        .stages
        .iter()
        .map(|(name, st)| (name.clone(), &st.foreground))
        .collect();
    let req = SynaptogramRequest {
        center_um,
        half_window_um: args.half_window,
        slices: args.slices,
    };
    let s = build_synaptogram(&rows, detection, result.synapse.dims, &req)?;
    if s.layout.clamped {
        eprintln!("warning: synaptogram window extends past the volume; outside pixels are zero");
    }

    let columns = s.layout.columns.len();
    let mut files = vec![vec![String::new(); columns]; s.layout.rows.len()];
    for panel in &s.panels {
        let name = format!(
            "{}_z{}.pgm",
            sanitize(&s.layout.rows[panel.row]),
            s.layout.columns[panel.column]
        );
        let path = run.path(&name);
        write_pgm8(
            &path,
            s.layout.panel_width,
            s.layout.panel_height,
            &to_gray8(&panel.pixels),
        )?;
        run.record(&path);
        files[panel.row][panel.column] = name;
    }
    let path = run.path("layout.json");
    write_json(
        &path,
        &SynaptogramOutput {
            query: &q.name,
            detection_id: detection.map(|d| d.id),
            center_um,
            threshold: params.threshold,
            layout: &s.layout,
            files,
        },
    )?;
    run.record(&path);
    println!(
        "{} rows x {} columns of {}x{} px\t{}",
        s.layout.rows.len(),
        columns,
        s.layout.panel_width,
        s.layout.panel_height,
        path.display()
    );
    run.finish()
}
