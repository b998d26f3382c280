use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfkit::gradcheck::{check_gradient, DEFAULT_PROBES, FD_STEP};
use surfkit::losses::{BoundaryKind, RegionKind};
use surfkit::schedule::ScheduleKind;
use surfkit::toy::AdamSettings;
use surfkit::toy::{
    initial_logits, optimize, run_experiment, ExperimentConfig, LossSpec, Objective, SceneSpec,
    Sphere, TrainConfig, Variant,
};
use surfkit::volume::Grid3;

fn scene(side: usize) -> SceneSpec {
    let c = side as f64 / 2.0;
    SceneSpec {
        grid: Grid3::isotropic([side, side, side]).unwrap(),
        spheres: vec![Sphere {
            center: [c, c, c],
            radius: side as f64 / 4.0,
            class: 1,
        }],
        num_classes: 2,
    }
}

fn config(loss: LossSpec, epochs: usize) -> TrainConfig {
    TrainConfig {
        scene: scene(16),
        coarse_factor: 4,
        loss,
        epochs,
        learning_rate: 1e-2,
        seed: 7,
        optimizer: AdamSettings::default(),
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut specs = Vec::new();
    for region in [RegionKind::Dice, RegionKind::DiceCe, RegionKind::Gdl] {
        specs.push(LossSpec::region_only(region));
        for boundary in [BoundaryKind::Hl, BoundaryKind::Bl, BoundaryKind::Gsl] {
            specs.push(LossSpec::composite(region, boundary, ScheduleKind::Linear));
        }
    }
    for spec in specs {
        let obj = Objective::new(&scene(16), 2, spec).unwrap();
        let x = initial_logits(obj.num_params(), 3);
        for alpha in [0.0, 0.4, 1.0] {
            let (_, g, _) = obj.value_and_gradient(&x, alpha).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let stats = check_gradient(
                |z| obj.value(z, alpha),
                &x,
                &g,
                DEFAULT_PROBES,
                FD_STEP,
                &mut rng,
            )
            .unwrap();
            assert!(stats.passed, "{spec:?} alpha={alpha}: {stats:?}");
        }
    }
}

#[test]
fn region_only_training_lowers_the_loss() {
    let report = optimize(&config(LossSpec::region_only(RegionKind::Dice), 40)).unwrap();
    assert_eq!(report.epochs.len(), 40);
    assert!(report.final_loss < report.epochs[0].loss);
    assert!(report.epochs.iter().all(|e| e.alpha == 1.0));
}

#[test]
fn identical_configs_give_identical_json() {
    let cfg = config(
        LossSpec::composite(RegionKind::DiceCe, BoundaryKind::Gsl, ScheduleKind::Linear),
        25,
    );
    let a = serde_json::to_string(&optimize(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&optimize(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_schedule_runs_from_region_to_boundary() {
    let cfg = config(
        LossSpec::composite(RegionKind::Dice, BoundaryKind::Bl, ScheduleKind::Linear),
        11,
    );
    let report = optimize(&cfg).unwrap();
    assert_eq!(report.epochs[0].alpha, 1.0);
    assert_eq!(report.epochs.last().unwrap().alpha, 0.0);
    assert!((report.epochs[5].alpha - 0.5).abs() < 1e-15);
}

#[test]
fn full_resolution_dice_ce_fits_a_sphere() {
    let cfg = TrainConfig {
        scene: scene(16),
        coarse_factor: 1,
        loss: LossSpec::region_only(RegionKind::DiceCe),
        epochs: 500,
        learning_rate: 1e-2,
        seed: 42,
        optimizer: AdamSettings::default(),
    };
    let report = optimize(&cfg).unwrap();
    let dice = report.final_metrics[0].report.dice;
    assert!(dice >= 0.99, "dice {dice}");
}

#[test]
fn experiment_rows_follow_variant_then_seed_order() {
    let exp = ExperimentConfig {
        scene: scene(8),
        coarse_factor: 2,
        epochs: 5,
        learning_rate: 1e-2,
        seeds: vec![3, 1, 2],
        optimizer: AdamSettings::default(),
        variants: vec![
            Variant {
                name: "dice-ce".into(),
                loss: LossSpec::region_only(RegionKind::DiceCe),
            },
            Variant {
                name: "gsl".into(),
                loss: LossSpec::composite(
                    RegionKind::DiceCe,
                    BoundaryKind::Gsl,
                    ScheduleKind::Linear,
                ),
            },
        ],
    };
    let table = run_experiment(&exp).unwrap();
    let order: Vec<_> = table
        .rows
        .iter()
        .map(|r| (r.variant.as_str(), r.seed))
        .collect();
    assert_eq!(
        order,
        [
            ("dice-ce", 3),
            ("dice-ce", 1),
            ("dice-ce", 2),
            ("gsl", 3),
            ("gsl", 1),
            ("gsl", 2)
        ]
    );
    assert_eq!(table.summary("gsl").unwrap().runs, 3);

    // A single cell reproduces a standalone run.
    let solo = optimize(&exp.train_config(&exp.variants[1], 1)).unwrap();
    assert_eq!(Some(solo.final_loss), table.rows[4].final_loss);
    assert_eq!(table, run_experiment(&exp).unwrap());
}
