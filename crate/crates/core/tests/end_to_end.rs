use oilsense_core::eval::{ap_summary, GroundTruthBox, ScoredBox};
use oilsense_core::logic::{ground_scene, init_rule_params, parse_rules, train_rule_params, RuleTrainConfig};
use oilsense_core::pipeline::{classify_pairs, relation_table, run_eval, run_inference, Models};
use oilsense_core::relnet::{self, RelNetConfig, RelNetParams, TrainConfig};
use oilsense_core::scenegen::{gen_pair_dataset, gen_scene, GenConfig};

const RULES: &str = "\
OilArea(A) <- SuspectedArea(A) & Ground(B) & On(A,B).
OilArea(A) <- SuspectedArea(A) & OilStorageDevice(B) & Around(A,B).
";

#[test]
fn generated_data_trains_into_a_working_pipeline() {
    let cfg = GenConfig { seed: 40, ..GenConfig::default() };
    let pairs: Vec<_> = gen_pair_dataset(&cfg, 150).unwrap().into_iter().map(|p| p.sample).collect();
    let init = RelNetParams::init(RelNetConfig::compact(2, 8, 8), 1).unwrap();
    let tc = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() };
    let (relnet, history) = relnet::train(&init, &pairs, &tc).unwrap();
    assert_eq!(history.len(), 3);
    assert!(history.iter().all(|e| e.loss.is_finite()));

    let rules: Vec<_> = parse_rules(RULES).unwrap().into_iter().map(|(r, _)| r).collect();
    let scenes: Vec<_> = (0..30).map(|i| gen_scene(&cfg, i).unwrap()).collect();
    let data: Vec<_> = scenes
        .iter()
        .map(|s| {
            let table = relation_table(&classify_pairs(&relnet, s).unwrap());
            ground_scene(&rules, s, &table, s.leak_label().unwrap()).unwrap()
        })
        .collect();
    let start = init_rule_params(&rules, 2);
    let rc = RuleTrainConfig { steps: 100, ..RuleTrainConfig::default() };
    let (params, losses) = train_rule_params(&rules, &start, &data, &rc).unwrap();
    assert!(losses.last().unwrap() < &losses[0]);

    let models = Models { relnet, rules, params };
    for s in &scenes[..5] {
        let r = run_inference(&models, s, 0.5).unwrap();
        assert!((0.0..=1.0).contains(&r.leak_probability));
        assert_eq!(r.decision, r.leak_probability >= 0.5);
        assert_eq!(r.relations.len(), s.objects().len() * s.objects().len().saturating_sub(1));
    }
    let report = run_eval(&models, &scenes, 0.5).unwrap();
    assert_eq!(report.scenes, 30);
    assert!((0.0..=1.0).contains(&report.pipeline.total_f1));
}

#[test]
fn ground_truth_detections_score_perfect_ap() {
    let cfg = GenConfig { seed: 41, ..GenConfig::default() };
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for i in 0..10 {
        for o in gen_scene(&cfg, i).unwrap().objects() {
            preds.push(ScoredBox { image: i as usize, bbox: *o.bbox(), score: o.confidence() });
            truths.push(GroundTruthBox { image: i as usize, bbox: *o.bbox() });
        }
    }
    let s = ap_summary(&preds, &truths);
    assert_eq!((s.ap50, s.ap75, s.map), (1.0, 1.0, 1.0));
}
