use roadstereo::dispxform::{self, RollOptions};
use roadstereo::imgcore::{load_disparity, load_gray_image, save_disparity, save_gray_image, DisparityFormat};
use roadstereo::matcher::{self, MatcherParams};
use roadstereo::perspective::{self, CorrespondenceParams, GroundPlaneShiftModel};
use roadstereo::pipeline::{run_matching, run_transform, ShiftSource};
use roadstereo::synthcam::{ground_truth_disparity, render_stereo_pair, Defect, SceneSpec};
use roadstereo::{DisparityMap, GrayImage, PixelCoord};

fn scene(psi: f64, seed: u64) -> SceneSpec {
    SceneSpec::road_scene(160, 120, 6.0, 20.0, psi, seed)
}

#[test]
fn residual_argmin_tracks_analytic_residual() {
    let spec = scene(0.0, 21);
    let (l, r) = render_stereo_pair(&spec).unwrap();
    let gt = ground_truth_disparity(&spec).unwrap();
    let matches = perspective::find_sparse_correspondences(&l, &r, &CorrespondenceParams::default()).unwrap();
    let model = perspective::fit_row_shift_model::<f64>(&matches, 120).unwrap();
    let warped = perspective::warp_target(&r, &model);
    let coverage = perspective::warp_coverage(160, 120, &model);
    let params = MatcherParams::default();
    let (vol, _) = matcher::compute_cost_volumes(&l, &warped, Some(&coverage), &params).unwrap();
    let wta = matcher::wta_disparity::<f64>(&vol);
    let visible = spec.visible_mask();
    let (mut n, mut close) = (0, 0);
    for v in 10..110 {
        for u in 10..150 {
            if !visible.get(u, v) || !coverage.get(u.saturating_sub(25), v) {
                continue;
            }
            let residual = gt.get(u, v).unwrap() - model.row_shift(v) as f64;
            if let Some(d) = wta.get(u, v) {
                n += 1;
                close += usize::from((d - residual).abs() <= 1.0);
            }
        }
    }
    assert!(n > 5000 && close * 100 >= n * 99, "{close}/{n}");
}

#[test]
fn translation_is_recovered_through_warp_and_undo() {
    let mut spec = scene(0.0, 5);
    spec.theta = std::f64::consts::FRAC_PI_2;
    spec.t_c = 9.0 * spec.beta / spec.f;
    let (l, r) = render_stereo_pair(&spec).unwrap();
    let res = run_matching::<f64>(&l, &r, &MatcherParams::default(), &ShiftSource::Estimate(CorrespondenceParams::default())).unwrap();
    assert!(res.shift_model.row_shift(60).abs() <= 1);
    let (mut n, mut close, mut sum) = (0usize, 0usize, 0.0);
    for (u, _, d) in res.disparity.iter_valid() {
        if u > 20 {
            n += 1;
            close += usize::from((d - 9.0).abs() <= 0.5);
            sum += d - 9.0;
        }
    }
    assert!(n > 10_000);
    assert!(close * 100 >= n * 99, "{close}/{n}");
    assert!((sum / n as f64).abs() < 0.05);
}

#[test]
fn fixed_and_estimated_shift_agree() {
    let spec = scene(0.01, 8);
    let (l, r) = render_stereo_pair(&spec).unwrap();
    let params = MatcherParams::default();
    let est = run_matching::<f64>(&l, &r, &params, &ShiftSource::Estimate(CorrespondenceParams::default())).unwrap();
    let fixed = run_matching::<f64>(&l, &r, &params, &ShiftSource::Fixed(est.shift_model)).unwrap();
    assert_eq!(est.disparity, fixed.disparity);
    assert_eq!(fixed.correspondences, 0);
}

#[test]
fn ground_truth_is_affine_at_true_roll() {
    for psi in [-0.08, 0.0, 0.04] {
        let spec = scene(psi, 3);
        let gt = ground_truth_disparity(&spec).unwrap();
        let samples = dispxform::collect_samples(&gt, None).unwrap();
        let (alpha, e) = dispxform::rotated_energy(&samples, psi).unwrap();
        let (a0, a1) = spec.plane_coefficients();
        assert!(e <= 1e-6, "{e}");
        assert!((alpha[0] - a0).abs() < 1e-6 && (alpha[1] - a1).abs() < 1e-9);
    }
}

#[test]
fn transformed_defects_stand_out_by_their_offset() {
    let mut spec = scene(0.04, 12);
    spec.defects = vec![
        Defect {
            center: PixelCoord::new(50, 60),
            radius: 12.0,
            depth_offset: -2.0,
        },
        Defect {
            center: PixelCoord::new(120, 90),
            radius: 10.0,
            depth_offset: 1.5,
        },
    ];
    let gt = ground_truth_disparity(&spec).unwrap();
    let res = run_transform(&gt, Some(&spec.defect_free_mask()), &RollOptions::default(), 30.0, false).unwrap();
    assert!((res.estimate.fit.psi - 0.04).abs() < 1e-6);
    let t = &res.transformed;
    assert!((t.get(50, 60).unwrap() - 28.0).abs() <= 0.5);
    assert!((t.get(120, 90).unwrap() - 31.5).abs() <= 0.5);
    assert!((t.get(10, 10).unwrap() - 30.0).abs() <= 1e-6);
}

#[test]
fn artifacts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = scene(0.02, 4);
    let (l, _) = render_stereo_pair(&spec).unwrap();
    let gt = ground_truth_disparity(&spec).unwrap();
    for name in ["ref.pgm", "ref.png"] {
        let p = dir.path().join(name);
        save_gray_image(&l, &p).unwrap();
        assert_eq!(load_gray_image(&p).unwrap(), l);
    }
    let pfm = dir.path().join("gt.pfm");
    save_disparity(&gt, &pfm, DisparityFormat::Pfm).unwrap();
    let back: DisparityMap<f64> = load_disparity(&pfm).unwrap();
    for (u, v, d) in gt.iter_valid() {
        assert_eq!(back.get(u, v).unwrap(), d as f32 as f64);
    }
    let png = dir.path().join("gt.png");
    save_disparity(&gt, &png, DisparityFormat::Png16).unwrap();
    let back: DisparityMap<f64> = load_disparity(&png).unwrap();
    for (u, v, d) in gt.iter_valid() {
        assert!((back.get(u, v).unwrap() - d).abs() <= 1.0 / 512.0);
    }
}

#[test]
fn flat_target_fails_with_too_few_matches() {
    let l = GrayImage::from_fn(64, 48, |u, v| ((u * 31 + v * 17) % 251) as u8);
    let r = GrayImage::from_fn(64, 48, |_, _| 128);
    let out = run_matching::<f64>(&l, &r, &MatcherParams::default(), &ShiftSource::Estimate(CorrespondenceParams::default()));
    assert!(matches!(out, Err(roadstereo::Error::InsufficientMatches { .. })));
    let fixed = run_matching::<f64>(&l, &r, &MatcherParams::default(), &ShiftSource::Fixed(GroundPlaneShiftModel::zero()));
    assert_eq!(fixed.unwrap().disparity.valid_count(), 0);
}
