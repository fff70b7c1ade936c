use zonowalk::zono::Vec2;
use zonowalk_sim::export::{render_svg, write_metrics_csv, write_snapshots, write_steps_csv, METRICS_HEADER, STEPS_HEADER};
use zonowalk_sim::recipe::init_models;
use zonowalk_sim::{run_batch, run_trial, Scenario, SimConfig};

fn short_config(steps: usize) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.scenario.steps = steps;
    cfg.mpc.max_iters = 30;
    cfg
}

#[test]
fn empty_inputs_give_header_only_csv() {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", METRICS_HEADER.join(",")));
}

#[test]
fn steps_csv_has_one_row_per_state() {
    let cfg = short_config(6);
    let m = init_models(1);
    let sc = Scenario::sample(&cfg.scenario, 5, 4);
    let (metrics, log) = run_trial(&sc, &m, &cfg);
    assert_eq!(metrics.steps_taken + 1, log.steps.len());
    let mut buf = Vec::new();
    write_steps_csv(&mut buf, &log).unwrap();
    let mut rd = csv::Reader::from_reader(&buf[..]);
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), STEPS_HEADER);
    assert_eq!(rd.records().count(), log.steps.len());
}

#[test]
fn empty_field_has_no_distance() {
    let cfg = short_config(4);
    let sc = Scenario::sample(&cfg.scenario, 0, 2);
    let (metrics, log) = run_trial(&sc, &init_models(2), &cfg);
    assert_eq!(metrics.min_ped_distance, f64::INFINITY);
    assert!(log.steps.iter().all(|s| s.peds.is_empty() && s.ped_zonotopes.is_empty()));
    assert!(metrics.steps_to_goal.is_none_or(|k| k <= cfg.scenario.steps));
}

#[test]
fn starting_on_the_goal_succeeds_at_once() {
    let cfg = short_config(4);
    let mut sc = Scenario::sample(&cfg.scenario, 3, 5);
    sc.goal = sc.ego_start.position() + Vec2::new(0.5, 0.0);
    let (metrics, log) = run_trial(&sc, &init_models(5), &cfg);
    assert!(metrics.success);
    assert_eq!(metrics.steps_to_goal, Some(0));
    assert_eq!(log.steps.len(), 1);
}

#[test]
fn batches_are_reproducible() {
    let cfg = short_config(5);
    let m = init_models(3);
    let a = run_batch(&m, &cfg, 8, 3, 20);
    let b = run_batch(&m, &cfg, 8, 3, 20);
    let seeds: Vec<u64> = a.iter().map(|r| r.0.seed).collect();
    assert_eq!(seeds, [20, 21, 22]);
    for ((ma, la), (mb, lb)) in a.iter().zip(&b) {
        assert_eq!(ma.success, mb.success);
        assert_eq!(ma.min_ped_distance, mb.min_ped_distance);
        let pa: Vec<_> = la.steps.iter().map(|s| s.ego).collect();
        let pb: Vec<_> = lb.steps.iter().map(|s| s.ego).collect();
        assert_eq!(pa, pb);
    }
}

#[test]
fn snapshots_are_valid_svg_with_one_polygon_per_zonotope() {
    let cfg = short_config(3);
    let m = init_models(6);
    let sc = Scenario::sample(&cfg.scenario, 15, 9);
    let (_, log) = run_trial(&sc, &m, &cfg);
    for step in &log.steps {
        let svg = render_svg(&log, step, cfg.scenario.sensory_radius);
        let doc = roxmltree::Document::parse(&svg).expect("well-formed SVG");
        let count = |class: &str| {
            doc.descendants()
                .filter(|n| n.has_tag_name("polygon") && n.attribute("class") == Some(class))
                .count()
        };
        let ped: usize = step.ped_zonotopes.iter().map(|z| z.len()).sum();
        assert_eq!(count("ped-zono"), ped);
        assert_eq!(count("ego-zono"), step.ego_zonotopes.len());
        assert_eq!(count("field"), 1);
    }
    let dir = tempfile::tempdir().unwrap();
    let files = write_snapshots(dir.path(), &log, cfg.scenario.sensory_radius, 2).unwrap();
    // every second step plus the last one
    let last = log.steps.len() - 1;
    let expect = (0..=last).filter(|k| k % 2 == 0 || *k == last).count();
    assert_eq!(files.len(), expect);
    assert!(files.iter().all(|f| f.exists()));
}
