mod support;

use poseref_core::eval::{run_trial, summarize, trial_seed};
use poseref_core::refine::CANDIDATES_PER_SWEEP;
use poseref_core::{
    objective, refine, render_silhouette, run_synthetic_benchmark, BenchmarkSpec, PerturbationRanges, PoseParams,
    RefinerConfig, TriangleMesh,
};

fn car() -> TriangleMesh {
    TriangleMesh::load_obj_file(concat!(env!("CARGO_MANIFEST_DIR"), "/data/car.obj")).unwrap()
}

#[test]
fn bundled_mesh_is_unit_sized() {
    let m = car();
    assert!((900..1300).contains(&m.triangles().len()));
    assert!((m.extent().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_perturbation_trials_stay_perfect() {
    let spec = BenchmarkSpec {
        perturbation: PerturbationRanges::zero(),
        ..BenchmarkSpec::new(5, 160, 120)
    };
    for t in run_synthetic_benchmark(&car(), &spec, 3).unwrap() {
        assert_eq!((t.initial_iou, t.final_iou), (1.0, 1.0));
        assert_eq!(t.refined_pose, t.true_pose);
    }
}

#[test]
fn benchmark_is_reproducible_and_improves() {
    let mesh = car();
    let spec = BenchmarkSpec::new(6, 160, 120);
    let a = run_synthetic_benchmark(&mesh, &spec, 11).unwrap();
    let b = run_synthetic_benchmark(&mesh, &spec, 11).unwrap();
    assert_eq!(a, b);
    for t in &a {
        assert!(t.final_iou >= t.initial_iou);
    }
    let s = summarize(&a);
    assert!(s.mean_final >= s.mean_initial);
    // a single trial replays from its own seed
    let again = run_trial(&mesh, &spec, 4, trial_seed(11, 4)).unwrap();
    assert_eq!(again, a[4]);
}

#[test]
fn golden_objective_value() {
    // 160x120, reference at the truth pose, evaluated with azimuth +5°.
    // Pinned after checking it against the brute-force oracle with a
    // per-pixel IoU count, both recomputed here.
    const GOLDEN_IOU: f64 = 0.9405320813771518;
    let mesh = car();
    let truth = PoseParams::new(35.0, 15.0, 2.0, 3.0, 224.0, 80.0, 60.0).unwrap();
    let off = PoseParams { azimuth_deg: 40.0, ..truth };
    let reference = render_silhouette(&mesh, &truth, 160, 120).unwrap();
    assert_eq!(objective(&mesh, &off, &reference).unwrap(), GOLDEN_IOU);

    let a = support::oracle::oracle_silhouette(&mesh, &truth, 160, 120);
    let b = support::oracle::oracle_silhouette(&mesh, &off, 160, 120);
    let (mut inter, mut union) = (0u32, 0u32);
    for y in 0..120 {
        for x in 0..160 {
            inter += (a.get(x, y) && b.get(x, y)) as u32;
            union += (a.get(x, y) || b.get(x, y)) as u32;
        }
    }
    assert_eq!(inter as f64 / union as f64, GOLDEN_IOU);
}

#[test]
fn refinement_trajectory_accounting() {
    let mesh = car();
    let truth = PoseParams::new(200.0, 20.0, -4.0, 3.2, 420.0, 165.0, 118.0).unwrap();
    let reference = render_silhouette(&mesh, &truth, 320, 240).unwrap();
    let start = PoseParams {
        azimuth_deg: 204.0,
        elevation_deg: 18.0,
        focal: 440.0,
        principal_v: 110.0,
        ..truth
    };
    let cfg = RefinerConfig::for_pose(&start);
    let r = refine(&mesh, &start, &reference, &cfg).unwrap();
    assert!(r.converged);
    assert_eq!(r.evaluations, r.sweeps as u64 * CANDIDATES_PER_SWEEP);
    assert_eq!(r.trajectory.len(), r.sweeps as usize + 1);
    assert!(r.trajectory.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(r.iou_final > r.iou_initial);
    assert_eq!(r.trajectory.last().unwrap().1, r.iou_final);
}
