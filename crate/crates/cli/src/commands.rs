//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use roadstereo::dispxform::{self, RollEstimate};
use roadstereo::evalkit;
use roadstereo::imgcore::{self, DisparityFormat};
use roadstereo::matcher;
use roadstereo::perspective::{self, GroundPlaneShiftModel};
use roadstereo::synthcam;
use roadstereo::{DisparityMap, Error, GrayImage, RoadMask};

use crate::config::{parse_config_text, parse_override, PipelineConfig, ReportFormat};
use crate::report::Report;
use crate::Common;

/// Input and validation problems exit with this code.
pub const EXIT_INPUT: u8 = 2;
/// Processing failures exit with this code.
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    fn input(stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            stage,
            message: message.into(),
        }
    }
}

/// Attaches a stage name and picks the exit code from the error kind.
fn at(stage: &'static str) -> impl Fn(Error) -> Failure {
    move |e| {
        let code = match e {
            Error::Io { .. }
            | Error::UnsupportedFormat(_)
            | Error::UnsupportedDepth(_)
            | Error::UnsupportedChannels(_)
            | Error::Truncated { .. }
            | Error::Malformed(_)
            | Error::DimensionMismatch(..)
            | Error::InvalidDimensions(..)
            | Error::InvalidParameter(_)
            | Error::WindowTooLarge { .. }
            | Error::BadScene(_) => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            stage,
            message: e.to_string(),
        }
    }
}

/// Defaults, then the config file, then `--set`, then `--threads`/`--timing`.
fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Failure::input("config", format!("{}: {e}", path.display())))?;
        let entries = parse_config_text(&text, &path.display().to_string()).map_err(|e| Failure::input("config", e.0))?;
        cfg.apply_all(&entries).map_err(|e| Failure::input("config", e.0))?;
    }
    for o in &common.overrides {
        let (k, v) = parse_override(o).map_err(|e| Failure::input("config", e.0))?;
        cfg.set(&k, &v).map_err(|e| Failure::input("config", e.0))?;
    }
    if let Some(n) = common.threads {
        cfg.threads = Some(n);
    }
    if common.timing {
        cfg.timing = true;
    }
    if let Some(f) = &common.report_format {
        cfg.report_format = f.parse().map_err(|e: crate::config::ConfigError| Failure::input("config", e.0))?;
    }
    cfg.validate().map_err(|e| Failure::input("config", e.0))?;
    if let Some(n) = cfg.threads {
        // fails only if a pool already exists, which never happens here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(cfg)
}

fn emit(report: &Report, cfg: &PipelineConfig, common: &Common) -> Result<(), Failure> {
    let body = match cfg.report_format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Json => report.to_json(),
    };
    match &common.report {
        Some(path) => write_bytes(path, body.as_bytes()),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure {
        code: EXIT_FAILURE,
        stage: "output",
        message: format!("{}: {e}", path.display()),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_FAILURE,
        stage: "output",
        message: format!("{}: {e}", dir.display()),
    })
}

fn output_error(e: Error) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        stage: "output",
        message: e.to_string(),
    }
}

fn load_mask(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<Option<RoadMask>, Failure> {
    match flag.or_else(|| cfg.mask.clone()) {
        Some(p) => Ok(Some(imgcore::load_road_mask(&p).map_err(at("input"))?)),
        None => Ok(None),
    }
}

fn format_for(path: &Path) -> Result<DisparityFormat, Failure> {
    DisparityFormat::from_path(path).map_err(at("output"))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

struct MatchRun {
    disparity: DisparityMap<f64>,
    report: Report,
}

fn match_images(reference: &GrayImage, target: &GrayImage, cfg: &PipelineConfig) -> Result<MatchRun, Failure> {
    let (w, h) = reference.dims();
    if reference.dims() != target.dims() {
        let (tw, th) = target.dims();
        return Err(Failure::input(
            "input",
            format!("image sizes differ: reference {w}x{h}, target {tw}x{th}"),
        ));
    }
    let start = Instant::now();
    let (model, found): (GroundPlaneShiftModel<f64>, usize) = match cfg.fixed_shift(h) {
        Some(m) => (m, 0),
        None => {
            let matches =
                perspective::find_sparse_correspondences(reference, target, &cfg.correspondence).map_err(at("perspective"))?;
            let model = perspective::fit_row_shift_model(&matches, h).map_err(at("perspective"))?;
            (model, matches.len())
        }
    };
    let warped = perspective::warp_target(target, &model);
    let coverage = perspective::warp_coverage(w, h, &model);
    let t_persp = start.elapsed();

    let t_match_start = Instant::now();
    let out = matcher::match_pair::<f64>(reference, &warped, Some(&coverage), &cfg.matcher).map_err(at("matcher"))?;
    let disparity = matcher::undo_perspective_shift(&out.disparity, &model);
    let t_match = t_match_start.elapsed();

    let mut report = Report::new();
    report
        .int("correspondences", found)
        .num("kappa0", model.kappa0)
        .num("kappa1", model.kappa1)
        .num("delta_p", model.delta_p as f64)
        .int("valid_pixels", disparity.valid_count());
    if cfg.timing {
        let mde = evalkit::mde_per_second(w, h, cfg.matcher.d_max, t_match.as_secs_f64().max(1e-9)).map_err(at("timing"))?;
        report
            .num("perspective_ms", ms(t_persp))
            .num("matching_ms", ms(t_match))
            .num("total_ms", ms(start.elapsed()))
            .num("mde_per_s", mde);
    }
    Ok(MatchRun { disparity, report })
}

pub fn run_match(common: &Common, reference: &Path, target: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let format = format_for(out)?;
    let r = imgcore::load_gray_image(reference).map_err(at("input"))?;
    let t = imgcore::load_gray_image(target).map_err(at("input"))?;
    let run = match_images(&r, &t, &cfg)?;
    imgcore::save_disparity(&run.disparity, out, format).map_err(output_error)?;
    emit(&run.report, &cfg, common)
}

fn transform_one(
    disparity: &DisparityMap<f64>,
    mask: Option<&RoadMask>,
    cfg: &PipelineConfig,
    psi_init: f64,
) -> Result<(DisparityMap<f64>, RollEstimate<f64>, f64), Failure> {
    let opts = dispxform::RollOptions { psi_init, ..cfg.roll };
    let samples = dispxform::collect_samples(disparity, mask).map_err(at("transform"))?;
    let est = dispxform::estimate_road_model(&samples, &opts, cfg.trim).map_err(at("transform"))?;
    let transformed = dispxform::transform_disparities(disparity, &est.fit, cfg.delta_t);
    let sigma = evalkit::transformed_stddev(&transformed, mask).map_err(at("transform"))?;
    Ok((transformed, est, sigma))
}

fn fit_report(prefix: &str, est: &RollEstimate<f64>, sigma: f64) -> Report {
    let key = |k: &str| format!("{prefix}{k}");
    let mut r = Report::new();
    r.num(&key("psi"), est.fit.psi)
        .num(&key("alpha0"), est.fit.alpha0)
        .num(&key("alpha1"), est.fit.alpha1)
        .num(&key("e_min"), est.fit.e_min)
        .int(&key("samples"), est.fit.samples)
        .int(&key("iterations"), est.iterations)
        .flag(&key("converged"), est.converged)
        .num(&key("sigma_d"), sigma);
    r
}

pub fn run_transform(
    common: &Common,
    disp: &[PathBuf],
    out: &[PathBuf],
    mask: Option<PathBuf>,
    psi_init: Option<f64>,
    delta_t: Option<f64>,
    trim: bool,
) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(p) = psi_init {
        cfg.roll.psi_init = p;
    }
    if let Some(d) = delta_t {
        cfg.delta_t = d;
    }
    cfg.trim |= trim;
    cfg.validate().map_err(|e| Failure::input("config", e.0))?;
    if disp.len() != out.len() {
        return Err(Failure::input(
            "input",
            format!("{} inputs but {} outputs", disp.len(), out.len()),
        ));
    }
    let formats = out.iter().map(|p| format_for(p)).collect::<Result<Vec<_>, _>>()?;
    let mask = load_mask(mask, &cfg)?;

    let mut report = Report::new();
    let mut psi = cfg.roll.psi_init;
    for (k, (input, output)) in disp.iter().zip(out).enumerate() {
        let d: DisparityMap<f64> = imgcore::load_disparity(input).map_err(at("input"))?;
        if let Some(m) = &mask {
            imgcore::ensure_same_dims(d.dims(), m.dims()).map_err(at("input"))?;
        }
        let (transformed, est, sigma) = transform_one(&d, mask.as_ref(), &cfg, psi)?;
        psi = est.fit.psi;
        imgcore::save_disparity(&transformed, output, formats[k]).map_err(output_error)?;
        let prefix = if disp.len() > 1 { format!("frame{k}.") } else { String::new() };
        report.extend(fit_report(&prefix, &est, sigma));
    }
    emit(&report, &cfg, common)
}

fn eval_report(est: &DisparityMap<f64>, gt: &DisparityMap<f64>, mask: Option<&RoadMask>, eps: f64) -> Result<Report, Failure> {
    imgcore::ensure_same_dims(est.dims(), gt.dims()).map_err(at("evaluate"))?;
    let r = evalkit::evaluate(est, gt, mask, eps).map_err(at("evaluate"))?;
    let mut report = Report::new();
    report.num("e_p", r.e_p).num("e_r", r.e_r).int("m", r.m).num("epsilon_d", r.epsilon_d);
    Ok(report)
}

pub fn run_evaluate(common: &Common, est: &Path, gt: &Path, mask: Option<PathBuf>, epsilon_d: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(e) = epsilon_d {
        cfg.epsilon_d = e;
    }
    cfg.validate().map_err(|e| Failure::input("config", e.0))?;
    let est: DisparityMap<f64> = imgcore::load_disparity(est).map_err(at("input"))?;
    let gt: DisparityMap<f64> = imgcore::load_disparity(gt).map_err(at("input"))?;
    let mask = load_mask(mask, &cfg)?;
    let report = eval_report(&est, &gt, mask.as_ref(), cfg.epsilon_d)?;
    emit(&report, &cfg, common)
}

pub fn run_synth(common: &Common, out_dir: &Path, seed: Option<u64>, psi: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(s) = seed {
        cfg.scene.seed = s;
    }
    if let Some(p) = psi {
        cfg.scene.psi = p;
    }
    let spec = cfg.scene.to_spec();
    let gt = synthcam::ground_truth_disparity(&spec).map_err(at("synth"))?;
    let (r, t) = synthcam::render_stereo_pair(&spec).map_err(at("synth"))?;
    ensure_dir(out_dir)?;
    imgcore::save_gray_image(&r, out_dir.join("ref.png")).map_err(output_error)?;
    imgcore::save_gray_image(&t, out_dir.join("tar.png")).map_err(output_error)?;
    let gt_path = out_dir.join(format!("gt.{}", cfg.format.extension()));
    imgcore::save_disparity(&gt, &gt_path, cfg.format).map_err(output_error)?;
    imgcore::save_road_mask(&spec.visible_mask(), out_dir.join("mask.png")).map_err(output_error)?;
    let (a0, a1) = spec.plane_coefficients();
    let mut report = Report::new();
    report
        .int("width", spec.width)
        .int("height", spec.height)
        .num("alpha0", a0)
        .num("alpha1", a1)
        .num("psi", spec.psi)
        .num("theta", spec.theta)
        .num("t_c", spec.t_c)
        .int("defects", spec.defects.len())
        .int("seed", spec.texture_seed as usize);
    emit(&report, &cfg, common)
}

pub fn run_pipeline(
    common: &Common,
    reference: &Path,
    target: &Path,
    out_dir: &Path,
    gt: Option<PathBuf>,
    mask: Option<PathBuf>,
) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let r = imgcore::load_gray_image(reference).map_err(at("input"))?;
    let t = imgcore::load_gray_image(target).map_err(at("input"))?;
    let mask = load_mask(mask, &cfg)?;
    if let Some(m) = &mask {
        imgcore::ensure_same_dims(r.dims(), m.dims()).map_err(at("input"))?;
    }
    let gt: Option<DisparityMap<f64>> = match gt {
        Some(p) => Some(imgcore::load_disparity(&p).map_err(at("input"))?),
        None => None,
    };
    let run = match_images(&r, &t, &cfg)?;
    let (transformed, est, sigma) = transform_one(&run.disparity, mask.as_ref(), &cfg, cfg.roll.psi_init)?;

    let mut report = run.report;
    report.extend(fit_report("", &est, sigma));
    if let Some(gt) = &gt {
        report.extend(eval_report(&run.disparity, gt, mask.as_ref(), cfg.epsilon_d)?);
    }
    ensure_dir(out_dir)?;
    let ext = cfg.format.extension();
    imgcore::save_disparity(&run.disparity, out_dir.join(format!("disparity.{ext}")), cfg.format).map_err(output_error)?;
    imgcore::save_disparity(&transformed, out_dir.join(format!("transformed.{ext}")), cfg.format).map_err(output_error)?;
    emit(&report, &cfg, common)
}
