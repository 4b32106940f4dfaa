//! Acceptance suite. Runs without the test harness so that every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rcmservo_core::homography_task::{normalize_homography, task_error, CameraIntrinsics, Homography};
use rcmservo_core::kinematics::{translational_jacobian, ChainEvaluation};
use rcmservo_core::rcm_control::{lambda_projection, rcm_jacobian, rcm_point};
use rcmservo_core::simulator::{run_scenario, ScenarioConfig, ScenarioKind};
use rcmservo_core::vision::{
    estimate_homography_dlt, estimate_homography_ransac_matches, match_views, reprojection_error, Corruption,
    FeatureObservation, RansacParams,
};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn kinematics(rep: &mut Report) {
    let started = Instant::now();
    let mut r = rng(0xC1);
    let mut worst: f64 = 0.0;
    let samples = 120;
    for _ in 0..samples {
        let dof = r.random_range(6..9);
        let chain = random_chain(&mut r, dof);
        let q = random_q(&mut r, dof);
        let eval = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
        let j = DMatrix::from_column_slice(6, dof, eval.jacobian(&eval.x_ip1()).as_slice());
        let fd = fd_camera_jacobian(&chain, &q, 1e-6);
        worst = worst.max((&j - &fd).norm() / j.norm().max(1e-12));
    }
    let secs = started.elapsed().as_secs_f64();
    rep.line(
        1,
        "kinematics",
        worst <= 1e-6 && secs < 5.0,
        format!("{samples} samples, worst relative FD error {worst:.2e} (<= 1e-6), {secs:.2} s (< 5 s)"),
    );
}

fn rcm_algebra(rep: &mut Report) {
    let mut r = rng(0xC2);
    let mut identity_err: f64 = 0.0;
    for _ in 0..100 {
        let p = |r: &mut rand_chacha::ChaCha8Rng| Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let (a, b) = (p(&mut r), p(&mut r));
        if (b - a).norm() < 1e-2 {
            continue;
        }
        identity_err = identity_err.max(lambda_projection(&a, &b, &a).unwrap().abs());
        identity_err = identity_err.max((lambda_projection(&a, &b, &b).unwrap() - 1.0).abs());
        identity_err = identity_err.max((rcm_point(&a, &b, 0.0) - a).norm());
        identity_err = identity_err.max((rcm_point(&a, &b, 1.0) - b).norm());
        // perpendicular offset from the point at λ = 0.3
        let foot = rcm_point(&a, &b, 0.3);
        let mut perp = (b - a).cross(&p(&mut r));
        if perp.norm() < 1e-6 {
            continue;
        }
        perp = perp.normalize() * 0.05;
        identity_err = identity_err.max((lambda_projection(&a, &b, &(foot + perp)).unwrap() - 0.3).abs());
    }
    let mut fd_err: f64 = 0.0;
    for _ in 0..100 {
        let chain = random_chain(&mut r, 7);
        let q0 = random_q(&mut r, 7);
        let q_dot: Vec<f64> = (0..7).map(|_| r.random_range(-1.0..1.0)).collect();
        let (l0, l_dot) = (r.random_range(0.0..1.0), r.random_range(-1.0..1.0));
        let at = |t: f64| {
            let q: Vec<f64> = q0.iter().zip(&q_dot).map(|(a, b)| a + t * b).collect();
            let e = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
            rcm_point(&e.x_i(), &e.x_ip1(), l0 + t * l_dot)
        };
        let h = 1e-6;
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let e = ChainEvaluation::new(&chain, &jc(&q0)).unwrap();
        let j = rcm_jacobian(
            &translational_jacobian(&e.jacobian(&e.x_i())),
            &translational_jacobian(&e.jacobian(&e.x_ip1())),
            l0,
            &e.x_i(),
            &e.x_ip1(),
        )
        .unwrap();
        fd_err = fd_err.max((j * DVector::from_column_slice(&q_dot).push(l_dot) - fd).norm());
    }
    rep.line(
        2,
        "rcm algebra",
        identity_err <= 1e-12 && fd_err <= 1e-5,
        format!("identity error {identity_err:.2e} (<= 1e-12), trajectory FD error {fd_err:.2e} (<= 1e-5)"),
    );
}

fn homography_task(rep: &mut Report) {
    let m_star = Vector3::new(0.0, 0.0, 1.0);
    let e0 = task_error(&Homography::normalized(Matrix3::identity()), &m_star).unwrap();
    let identity_ok = e0.e_v == Vector3::zeros() && e0.e_w == Vector3::zeros();
    let h = normalize_homography(&rodrigues(&Vector3::z(), 30f64.to_radians())).unwrap();
    let roll_err = (task_error(&Homography::normalized(h), &m_star).unwrap().e_w - Vector3::new(0.0, 0.0, 1.0)).norm();
    let d = 0.15;
    let n = Vector3::new(0.0, 0.0, 1.0);
    let mut trans_err: f64 = 0.0;
    for t in [Vector3::new(0.015, 0.0, 0.0), Vector3::new(0.0, 0.01, 0.0), Vector3::new(-0.01, 0.02, 0.0), Vector3::new(0.0, 0.0, 0.02)] {
        let h = normalize_homography(&(Matrix3::identity() + t * n.transpose() / d)).unwrap();
        trans_err = trans_err.max((task_error(&Homography::normalized(h), &m_star).unwrap().e_v - t / d).norm());
    }
    rep.line(
        3,
        "homography task",
        identity_ok && roll_err <= 1e-9 && trans_err <= 1e-9,
        format!("task_error(I) exactly zero: {identity_ok}, 30 deg roll error {roll_err:.2e}, plane translation error {trans_err:.2e} (<= 1e-9)"),
    );
}

fn plane_homography(r: &mut impl Rng, k: &CameraIntrinsics) -> Matrix3<f64> {
    let axis = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let rot = rodrigues(&axis, r.random_range(-0.3..0.3));
    let t = Vector3::new(r.random_range(-0.02..0.02), r.random_range(-0.02..0.02), r.random_range(-0.02..0.02));
    let n = Vector3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), 1.0).normalize();
    k.matrix() * (rot + t * n.transpose() / r.random_range(0.1..0.3)) * k.inverse_matrix()
}

fn estimation(rep: &mut Report) {
    let k = CameraIntrinsics::new(583.0, 583.0, 320.0, 240.0);
    let mut r = rng(0xC4);
    let pixels = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<[f64; 2]> {
        (0..n).map(|_| [r.random_range(0.0..640.0), r.random_range(0.0..480.0)]).collect()
    };
    let mut dlt_err: f64 = 0.0;
    for _ in 0..100 {
        let g = Homography::pixel(plane_homography(&mut r, &k));
        let target = pixels(&mut r, 50);
        let current: Vec<_> = target.iter().map(|p| g.transform(*p).unwrap()).collect();
        let est = estimate_homography_dlt(&target, &current).unwrap();
        for (t, c) in target.iter().zip(&current) {
            dlt_err = dlt_err.max(reprojection_error(&est, *t, *c));
        }
    }
    let obs = |pts: &[[f64; 2]]| -> Vec<FeatureObservation> {
        pts.iter().enumerate().map(|(i, p)| FeatureObservation { id: i as u32, pixel: *p, inside_fov: true }).collect()
    };
    let mut exact = 0;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let g = Homography::pixel(plane_homography(&mut r, &k));
        let target = pixels(&mut r, 120);
        let current: Vec<_> = target.iter().map(|p| g.transform(*p).unwrap()).collect();
        let c = Corruption { outlier_rate: 0.3, ..Corruption::clean() };
        let m = match_views(&obs(&current), &obs(&target), &c, [640.0, 480.0], seed).unwrap();
        let res = estimate_homography_ransac_matches(&m, &RansacParams::default(), seed).unwrap();
        let truth: Vec<bool> = m.outlier_flags().iter().map(|o| !o).collect();
        exact += usize::from(res.inliers == truth);
    }
    rep.line(
        4,
        "estimation",
        dlt_err <= 1e-6 && exact >= 95,
        format!("DLT worst reprojection {dlt_err:.2e} px (<= 1e-6), RANSAC exact inlier masks {exact}/100 (>= 95)"),
    );
}

fn any_to_any(rep: &mut Report) {
    let cfg = ScenarioConfig::new(ScenarioKind::AnyToAny);
    let out = run_scenario(&cfg).unwrap();
    let s = &out.summary;
    let advances: Vec<f64> = out.records.iter().filter(|r| r.event.contains("advance")).map(|r| r.mpd_px).collect();
    let final_mpd = s.final_mpd_px.unwrap_or(f64::INFINITY);
    let tip = s.final_tip_error_mm.unwrap_or(f64::INFINITY);
    let wall = s.wall_time_s.unwrap_or(f64::INFINITY);
    let pass = s.converged
        && s.path.len() == 3
        && advances.len() == 2
        && advances.iter().all(|m| *m <= 5.0)
        && final_mpd <= 1.5
        && s.max_rcm_error_mm <= 1.0
        && s.mean_rcm_error_mm <= 0.2
        && tip <= 0.5
        && wall <= 30.0;
    rep.line(
        5,
        "closed-loop any-to-any",
        pass,
        format!(
            "path {:?}, converged {}, advances at {:?} px (<= 5), final MPD {final_mpd:.3} px (<= 1.5), RCM max {:.4} mm (<= 1) mean {:.4} mm (<= 0.2), tip error {tip:.3} mm (<= 0.5), {} frames in {wall:.3} s (<= 30)",
            s.path, s.converged, advances.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>(), s.max_rcm_error_mm, s.mean_rcm_error_mm, s.steps
        ),
    );
}

fn tool_motion(rep: &mut Report) {
    let mut good = 0;
    let mut worst_tip: f64 = 0.0;
    let mut worst_mpd: f64 = 0.0;
    for seed in 0..10 {
        let cfg = ScenarioConfig { seed, ..ScenarioConfig::new(ScenarioKind::ToolMotion) };
        let b = cfg.bursts().unwrap();
        assert!(b.outlier_rate <= 0.3 && b.dropout <= 0.3);
        let s = run_scenario(&cfg).unwrap().summary;
        let mpd = s.final_mpd_px.unwrap_or(f64::INFINITY);
        let tip = s.final_tip_error_mm.unwrap_or(f64::INFINITY);
        worst_tip = worst_tip.max(tip);
        worst_mpd = worst_mpd.max(mpd);
        good += usize::from(s.converged && mpd <= 1.5 && tip <= 1.4);
    }
    rep.line(
        6,
        "tool-motion bursts",
        good >= 9,
        format!("{good}/10 seeds converged with MPD <= 1.5 px and tip error <= 1.4 mm (>= 9); worst MPD {worst_mpd:.3} px, worst tip {worst_tip:.3} mm"),
    );
}

fn reposition(rep: &mut Report) {
    let cases = [(16.6, [0.0, 0.0, 1.0], "rotate 16.6 deg"), (10.2, [0.0, 0.0, 1.0], "rotate 10.2 deg"), (4.8, [1.0, 0.0, 0.0], "tilt 4.8 deg")];
    let mut pass = true;
    let mut parts = Vec::new();
    for (angle, axis, name) in cases {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Reposition);
        cfg.reposition.angle_deg = angle;
        cfg.reposition.axis = axis;
        let s = run_scenario(&cfg).unwrap().summary;
        let mpd = s.final_mpd_px.unwrap_or(f64::INFINITY);
        pass &= mpd <= 5.0 && s.max_rcm_error_mm <= 0.2;
        parts.push(format!("{name}: converged {}, final MPD {mpd:.3} px, RCM max {:.4} mm", s.converged, s.max_rcm_error_mm));
    }
    rep.line(7, "repositioning", pass, format!("{} (MPD <= 5, RCM <= 0.2)", parts.join("; ")));
}

fn determinism(rep: &mut Report) {
    let mut identical = true;
    let mut sizes = Vec::new();
    for kind in [ScenarioKind::AnyToAny, ScenarioKind::ToolMotion, ScenarioKind::Reposition] {
        let cfg = ScenarioConfig { seed: 23, ..ScenarioConfig::new(kind) };
        let a = run_scenario(&cfg).unwrap().metrics_csv();
        let b = run_scenario(&cfg).unwrap().metrics_csv();
        identical &= a.as_bytes() == b.as_bytes();
        sizes.push(format!("{kind} {} bytes", a.len()));
    }
    rep.line(8, "determinism", identical, format!("byte-identical metrics CSVs across repeated runs: {identical} ({})", sizes.join(", ")));
}

fn main() -> ExitCode {
    let mut rep = Report { failed: 0 };
    kinematics(&mut rep);
    rcm_algebra(&mut rep);
    homography_task(&mut rep);
    estimation(&mut rep);
    any_to_any(&mut rep);
    tool_motion(&mut rep);
    reposition(&mut rep);
    determinism(&mut rep);
    if rep.failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", rep.failed);
        ExitCode::FAILURE
    }
}
