mod common;

use std::time::Duration;

use assemblab::assembly::{RankSetup, Strategy};
use assemblab::bench::replay_ledger;
use assemblab::core::assembly::{compare_systems, COMPARE_FLOOR, COMPARE_TOLERANCE};
use assemblab::core::kernels::KernelParams;
use assemblab::core::mesh::{build_node_to_elem, generate_box_mesh};
use assemblab::dlb::{run_hybrid_step, run_synthetic, LedgerAction, LedgerEvent, NodeConfig, StepInput, StepOutcome};
use assemblab::Error;
use common::synthetic_makespans;

const UNIT: Duration = Duration::from_millis(2);

#[test]
fn lending_shortens_an_imbalanced_node() {
    let (off, on) = synthetic_makespans(&[60, 30], UNIT).unwrap();
    // Ideal: 45 units instead of 60.
    assert!(on <= 1.15 * 0.75 * off, "on {on:.4}s off {off:.4}s");
}

#[test]
fn lending_does_not_hurt_a_balanced_node() {
    let (off, on) = synthetic_makespans(&[40, 40], UNIT).unwrap();
    assert!(on <= 1.05 * off, "on {on:.4}s off {off:.4}s");
}

#[test]
fn synthetic_ledger_lends_to_the_busy_rank() {
    let out = run_synthetic(&NodeConfig::new(2, 1, true).unwrap(), &[40, 10], UNIT).unwrap();
    let lends: Vec<_> = out.ledger.iter().filter(|e| e.event == LedgerAction::Lend).collect();
    assert_eq!(lends.len(), 1);
    assert_eq!((lends[0].from_rank, lends[0].to_rank, lends[0].tokens), (1, 0, 1));
    assert!(out.rank_done[1] < out.rank_done[0]);
    assert_eq!(replay_ledger(&out.ledger, &NodeConfig::new(2, 1, true).unwrap(), 2).unwrap(), vec![1, 1]);
}

#[test]
fn single_rank_node_has_nothing_to_lend() {
    let cfg = NodeConfig::new(1, 2, true).unwrap();
    let out = run_synthetic(&cfg, &[8], UNIT).unwrap();
    assert!(out.ledger.is_empty());
    let out = run_synthetic(&cfg, &[8, 3, 0], UNIT).unwrap();
    assert!(out.ledger.is_empty());
    assert_eq!(out.rank_done.len(), 3);
}

#[test]
fn sequential_strategy_cannot_balance() {
    let mesh = generate_box_mesh(3, 3, 3, 1).unwrap();
    let n2e = build_node_to_elem(&mesh);
    let els: Vec<usize> = (0..mesh.nelem()).collect();
    let setups = vec![RankSetup::new(&mesh, &n2e, &els, Strategy::Sequential, 8).unwrap(); 2];
    let field = vec![0.0; mesh.nnode()];
    let input = StepInput { mesh: &mesh, setups: &setups, params: &KernelParams::default(), field: &field, step: 0, seed: None };
    assert!(matches!(run_hybrid_step(&input, &NodeConfig::new(2, 1, true).unwrap()), Err(Error::Config(_))));
    assert!(run_hybrid_step(&input, &NodeConfig::new(2, 1, false).unwrap()).is_ok());
}

/// Independent replay: every lend hands over everything the lender holds,
/// tokens never leave their node and each node ends every step at home.
fn check_ledger(events: &[LedgerEvent], rpn: usize, lpr: usize, n_ranks: usize) {
    let mut owned = vec![lpr; n_ranks];
    for e in events {
        assert_eq!(e.from_rank / rpn, e.to_rank / rpn, "{e:?}");
        assert!(e.tokens > 0 && owned[e.from_rank] >= e.tokens, "{e:?} with {owned:?}");
        if e.event == LedgerAction::Lend {
            assert_eq!(owned[e.from_rank], e.tokens, "partial lend {e:?}");
        }
        owned[e.from_rank] -= e.tokens;
        owned[e.to_rank] += e.tokens;
        for node in owned.chunks(rpn) {
            assert_eq!(node.iter().sum::<usize>(), rpn * lpr);
        }
    }
    assert!(owned.iter().all(|&o| o == lpr), "{owned:?}");
}

/// Ranks of uneven size: rank `r` of a node gets a share proportional to `r + 1`.
fn uneven_setups(strategy: Strategy, rpn: usize, nodes: usize) -> (assemblab::core::Mesh, Vec<RankSetup>) {
    let mesh = generate_box_mesh(10, 8, 6, 2).unwrap();
    let n2e = build_node_to_elem(&mesh);
    let n_ranks = rpn * nodes;
    let shares: Vec<usize> = (0..n_ranks).map(|r| r % rpn + 1).collect();
    let total: usize = shares.iter().sum();
    let mut start = 0;
    let mut setups = Vec::new();
    for (r, s) in shares.iter().enumerate() {
        let end = if r + 1 == n_ranks { mesh.nelem() } else { start + mesh.nelem() * s / total };
        let els: Vec<usize> = (start..end).collect();
        setups.push(RankSetup::new(&mesh, &n2e, &els, strategy, 16).unwrap());
        start = end;
    }
    (mesh, setups)
}

fn step(mesh: &assemblab::core::Mesh, setups: &[RankSetup], cfg: NodeConfig, seed: Option<u64>) -> StepOutcome {
    let field: Vec<f64> = mesh.coords().iter().map(|p| p[0] + 2.0 * p[2]).collect();
    let input = StepInput { mesh, setups, params: &KernelParams::default(), field: &field, step: 3, seed };
    run_hybrid_step(&input, &cfg).unwrap()
}

#[test]
fn ledger_replays_to_home_ownership() {
    for strategy in [Strategy::Atomic, Strategy::Multidep] {
        let (mesh, setups) = uneven_setups(strategy, 3, 2);
        let cfg = NodeConfig::new(3, 2, true).unwrap();
        let mut lends = 0;
        for s in 0..3 {
            let out = step(&mesh, &setups, cfg, Some(s));
            check_ledger(&out.ledger, 3, 2, 6);
            assert_eq!(replay_ledger(&out.ledger, &cfg, 6).unwrap(), vec![2; 6]);
            assert!(out.ledger.windows(2).all(|w| w[0].t_ns <= w[1].t_ns));
            assert_eq!(out.timing.len(), 12);
            lends += out.ledger.iter().filter(|e| e.event == LedgerAction::Lend).count();
        }
        assert!(lends > 0, "{strategy}: nothing was lent");
    }
}

#[test]
fn replay_rejects_impossible_logs() {
    let cfg = NodeConfig::new(2, 1, true).unwrap();
    let lend = |from, to, tokens| LedgerEvent { t_ns: 1, event: LedgerAction::Lend, from_rank: from, to_rank: to, tokens };
    assert!(replay_ledger(&[lend(0, 1, 2)], &cfg, 4).is_err());
    assert!(replay_ledger(&[lend(1, 2, 1)], &cfg, 4).is_err());
    assert!(replay_ledger(&[lend(0, 9, 1)], &cfg, 4).is_err());
    assert_eq!(replay_ledger(&[lend(0, 1, 1)], &cfg, 4).unwrap(), vec![0, 2, 1, 1]);
}

#[test]
fn balancing_does_not_change_the_numbers() {
    for strategy in [Strategy::Atomic, Strategy::Coloring, Strategy::LocalPartition, Strategy::Multidep] {
        let (mesh, setups) = uneven_setups(strategy, 2, 2);
        let off = step(&mesh, &setups, NodeConfig::new(2, 2, false).unwrap(), Some(1));
        let on = step(&mesh, &setups, NodeConfig::new(2, 2, true).unwrap(), Some(1));
        assert!(off.ledger.is_empty());
        for (a, b) in off.ranks.iter().zip(&on.ranks) {
            assert_eq!(a.rank, b.rank);
            let d = compare_systems(
                (&a.assembled.matrix, &a.assembled.rhs),
                (&b.assembled.matrix, &b.assembled.rhs),
                COMPARE_FLOOR,
            )
            .unwrap();
            assert!(d.max_rel <= COMPARE_TOLERANCE, "{strategy} rank {}: {d:?}", a.rank);
            assert_eq!(a.subgrid, b.subgrid);
        }
    }
}
