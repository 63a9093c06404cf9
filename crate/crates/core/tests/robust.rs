use std::sync::Mutex;

use gta_core::attack::{AttackReport, Dice, Gta, Termination, ZoGta};
use gta_core::robust::{robust_train_from, robust_train_with};
use gta_core::synthetic::{generate, DatasetProfile};
use gta_core::{
    evaluate_robustness, forward, grad_params, robust_train, AttackBudget, AttackInput, GcnParams,
    Graph, InnerAttack, LossTarget, RobustTrainConfig, Splits, TopologyAttack,
};

fn graph() -> Graph {
    let g = generate(&DatasetProfile::toy(45, 3, 80, 10), 4).unwrap();
    g.with_splits(Splits {
        train: (0..15).collect(),
        val: (15..20).collect(),
        test: (20..45).collect(),
    })
    .unwrap()
}

fn config(iterations: usize, m: usize, inner: InnerAttack) -> RobustTrainConfig {
    RobustTrainConfig {
        iterations,
        beta: 0.5,
        budget: AttackBudget::new(m, 3).unwrap(),
        inner_attack: inner,
        seed: 13,
        hidden: 6,
    }
}

#[test]
fn zero_budget_is_plain_gradient_descent() {
    let g = graph();
    let plain = robust_train_with(&g, &config(25, 0, InnerAttack::None), None).unwrap();
    for attack in [&Gta as &dyn TopologyAttack, &ZoGta::default(), &Dice] {
        let attacked =
            robust_train_with(&g, &config(25, 0, InnerAttack::Gta), Some(attack)).unwrap();
        assert_eq!(attacked.params, plain.params, "{}", attack.name());
        assert_eq!(attacked.adversarial_loss, plain.adversarial_loss);
        assert!(attacked.flips_used.iter().all(|&f| f == 0));
    }
    let losses = &plain.adversarial_loss;
    assert!(losses.last() < losses.first());
}

#[test]
fn one_outer_step_is_a_plain_gradient_step() {
    let g = graph();
    let cfg = config(1, 0, InnerAttack::None);
    let init = GcnParams::seeded(g.feature_dim(), cfg.hidden, g.class_count(), cfg.seed);
    let target = LossTarget::select(g.train(), g.labels());
    let ctx = forward(g.adjacency(), g.features(), &init, target).unwrap();
    let (dw1, dw2) = grad_params(&ctx, &init).unwrap();
    let mut want = init.clone();
    want.w1.axpy(-cfg.beta, &dw1).unwrap();
    want.w2.axpy(-cfg.beta, &dw2).unwrap();
    assert_eq!(robust_train(&g, &cfg).unwrap(), want);
}

#[test]
fn no_iterations_returns_the_seeded_initialization() {
    let g = graph();
    let cfg = config(0, 5, InnerAttack::Gta);
    let p = robust_train(&g, &cfg).unwrap();
    assert_eq!(
        p,
        GcnParams::seeded(g.feature_dim(), 6, g.class_count(), 13)
    );
}

/// Target nodes, target labels and node labels of one inner call.
type Seen = (Vec<usize>, Vec<usize>, Vec<usize>);

struct Spy {
    seen: Mutex<Vec<Seen>>,
}

impl TopologyAttack for Spy {
    fn name(&self) -> &str {
        "spy"
    }

    fn run(&self, input: &AttackInput<'_>) -> gta_core::Result<AttackReport> {
        self.seen.lock().unwrap().push((
            input.target.nodes().to_vec(),
            input.target.labels().to_vec(),
            input.node_labels.to_vec(),
        ));
        Gta.run(input)
    }
}

#[test]
fn inner_attack_sees_training_labels_only() {
    let g = graph();
    let spy = Spy {
        seen: Mutex::new(Vec::new()),
    };
    let out = robust_train_with(&g, &config(4, 6, InnerAttack::Gta), Some(&spy)).unwrap();
    let seen = spy.seen.into_inner().unwrap();
    assert_eq!(seen.len(), 4);
    let truth: Vec<usize> = g.train().iter().map(|&v| g.labels()[v]).collect();
    for (nodes, labels, per_node) in &seen {
        assert_eq!(nodes, g.train());
        assert_eq!(labels, &truth);
        for &v in g.train() {
            assert_eq!(per_node[v], g.labels()[v]);
        }
    }
    assert!(out.flips_used.iter().all(|&f| f == 6));
}

#[test]
fn inner_attack_restarts_from_the_clean_graph() {
    struct Recorder(Mutex<Vec<usize>>);
    impl TopologyAttack for Recorder {
        fn name(&self) -> &str {
            "recorder"
        }
        fn run(&self, input: &AttackInput<'_>) -> gta_core::Result<AttackReport> {
            self.0.lock().unwrap().push(input.graph.adjacency().nnz());
            Gta.run(input)
        }
    }
    let g = graph();
    let rec = Recorder(Mutex::new(Vec::new()));
    robust_train_with(&g, &config(3, 4, InnerAttack::Gta), Some(&rec)).unwrap();
    let nnz = rec.0.into_inner().unwrap();
    assert!(nnz.iter().all(|&k| k == g.adjacency().nnz()));
}

struct Greedy;

impl TopologyAttack for Greedy {
    fn name(&self) -> &str {
        "over-budget"
    }

    fn run(&self, input: &AttackInput<'_>) -> gta_core::Result<AttackReport> {
        let adj = input.graph.adjacency();
        let n = adj.n();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !adj.contains(i, j))
            .take(input.budget.max_flips + 1)
            .collect();
        Ok(AttackReport {
            adjacency: adj.flip_edges(&pairs)?,
            perturbation: Default::default(),
            loss_trace: Vec::new(),
            wall_clock: 0.0,
            misclassification: None,
            termination: Termination::BudgetReached,
            iterations: 1,
            nonpositive_picks: 0,
        })
    }
}

#[test]
fn attacks_breaking_the_budget_are_rejected() {
    let g = graph();
    let err = robust_train_with(&g, &config(2, 3, InnerAttack::Gta), Some(&Greedy)).unwrap_err();
    assert!(err.to_string().contains("over-budget"), "{err}");
}

#[test]
fn randomized_inner_attack_is_deterministic() {
    let g = graph();
    let cfg = config(5, 4, InnerAttack::ZoGta);
    assert_eq!(
        robust_train(&g, &cfg).unwrap(),
        robust_train(&g, &cfg).unwrap()
    );
    let mut other = cfg.clone();
    other.seed = 14;
    assert_ne!(
        robust_train(&g, &cfg).unwrap(),
        robust_train(&g, &other).unwrap()
    );
}

#[test]
fn warm_start_checks_shapes() {
    let g = graph();
    let cfg = config(0, 0, InnerAttack::None);
    let init = GcnParams::seeded(g.feature_dim(), 4, g.class_count(), 1);
    assert_eq!(
        robust_train_from(&g, &cfg, init.clone(), None)
            .unwrap()
            .params,
        init
    );
    let wrong = GcnParams::seeded(3, 4, g.class_count(), 1);
    assert!(robust_train_from(&g, &cfg, wrong, None).is_err());
}

#[test]
fn invalid_configs() {
    let g = graph();
    let mut cfg = config(1, 0, InnerAttack::None);
    cfg.beta = 0.0;
    assert!(robust_train(&g, &cfg).is_err());
    cfg.beta = f64::NAN;
    assert!(robust_train(&g, &cfg).is_err());
    let unsplit = generate(&DatasetProfile::toy(20, 2, 20, 4), 0).unwrap();
    assert!(robust_train(&unsplit, &config(1, 0, InnerAttack::None)).is_err());
}

#[test]
fn zero_budget_evaluation_equals_clean() {
    let g = graph();
    let params = robust_train(&g, &config(30, 0, InnerAttack::None)).unwrap();
    let pseudo = gta_core::pseudo_labels(&g, &params).unwrap();
    let attacks: [&dyn TopologyAttack; 3] = [&Gta, &ZoGta::default(), &Dice];
    let report = evaluate_robustness(
        &params,
        &g,
        &pseudo,
        &attacks,
        AttackBudget::new(0, 1).unwrap(),
        &[0, 1, 2],
    )
    .unwrap();
    assert_eq!(report.attacks.len(), 3);
    for row in &report.attacks {
        assert!(
            row.per_seed.iter().all(|&m| m == report.clean),
            "{}",
            row.attack
        );
        assert!((row.summary.mean - report.clean).abs() < 1e-15);
        assert!(row.summary.std.unwrap() < 1e-15);
    }
    let attacked = evaluate_robustness(
        &params,
        &g,
        &pseudo,
        &attacks[..1],
        AttackBudget::new(10, 10).unwrap(),
        &[0],
    )
    .unwrap();
    assert!(attacked.attacks[0].per_seed[0] >= 0.0);
}
