use courtpose_core::data::{JointMapping, PipelineConfig};
use courtpose_core::data::io::PoseFrame;
use courtpose_core::metrics::evaluate_sequence;
use courtpose_core::pipeline::process_frame;
use courtpose_core::synth::{association_accuracy, generate_scene, labels_within, render_detections, DegradationSpec, SceneSpec};

#[test]
fn clean_scenes_partition_exactly() {
    let config = PipelineConfig::sportcenter();
    for seed in 0..20 {
        let scene = generate_scene(&SceneSpec { seed, ..Default::default() }).unwrap();
        let rendered = render_detections(&scene, &DegradationSpec::default(), seed).unwrap();
        let result = process_frame(&rendered.detections, &scene.rig, &config).unwrap();
        let labels = labels_within(&rendered.labels, &rendered.detections);
        let score = association_accuracy(&result.association.clusters, &labels, config.k_min).unwrap();
        assert!(score.exact_partition, "seed {seed}: {score:?}");
        let report = evaluate_sequence(
            &[PoseFrame { frame_id: 0, poses: result.poses.clone() }],
            &[scene.ground_truth()],
            &JointMapping::identity(15),
            config.fp_threshold_mm,
        );
        assert!(report.mpjpe_mean_mm.unwrap() < 1e-3, "seed {seed}: {report:?}");
        assert_eq!(report.recall_pct, Some(100.0), "seed {seed}");
    }
}
