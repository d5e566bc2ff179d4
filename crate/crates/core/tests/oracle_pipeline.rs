use std::collections::HashSet;

use bincover_core::experiment::run_cell;
use bincover_core::generators::{generate, Family, GoodProfile};
use bincover_core::model::is_two_item;
use bincover_core::oracle::{constants, regime_bound, BoundCase};
use bincover_core::{
    canonicalize, compute_advice, partition_groups, run, validate_covering, CaseKind, Dh2bAdvice,
    StrategyKind,
};
use num_rational::BigRational;
use num_traits::Zero;

fn family(beta: &str, opt: usize, profile: GoodProfile) -> Family {
    Family::BetaFamily {
        beta: beta.into(),
        opt,
        two_share: None,
        profile,
    }
}

const PROFILES: [GoodProfile; 5] = [
    GoodProfile::Front,
    GoodProfile::Spread,
    GoodProfile::Case2a,
    GoodProfile::Case2b,
    GoodProfile::Case2c,
];

#[test]
fn tape_decodes_to_plan_and_black_counts_agree() {
    for beta in ["1.03", "1.1"] {
        for profile in PROFILES {
            let g = generate(&family(beta, 400, profile), 3, 16).unwrap();
            let inst = &g.instance;
            let reference = canonicalize(g.reference.as_ref().unwrap(), inst, 16).unwrap();
            let Ok((mut tape, plan)) = compute_advice(inst, &reference, 16) else {
                continue;
            };
            assert_eq!(plan.bits_written(), tape.len());
            let back = Dh2bAdvice::decode(&mut tape, 16).unwrap();
            assert_eq!(back, plan.advice, "{beta} {profile}");
            assert!(tape.fully_consumed());

            // Recount bins of G_2 holding a black item.
            let d_up = plan.advice.d_up(16);
            let groups = partition_groups(inst, &reference, 2).unwrap();
            let n_b = groups
                .g2_bins
                .iter()
                .filter(|&&b| {
                    reference.bins[b]
                        .items
                        .iter()
                        .any(|&i| !is_two_item(inst.size(i)) && *inst.size(i) >= d_up)
                })
                .count() as u64;
            assert_eq!(plan.black.n_b, n_b);
            assert_eq!(plan.black.m_rb, n_b.min(plan.advice.r));
            assert!(plan.advice.m_b <= plan.black.m_rb);
        }
    }
}

#[test]
fn reserved_bins_with_good_items_get_covered() {
    let mut seen = HashSet::new();
    for beta in ["1.03", "1.06", "1.1"] {
        for profile in PROFILES {
            let r = run_cell(
                0,
                &family(beta, 600, profile),
                11,
                StrategyKind::Dh2b(16),
                Some(16),
                18,
            );
            let Some(out) = r.outcome else { continue };
            seen.insert(r.row.case.clone());
            let st = out.dh2b.unwrap();
            let marked: HashSet<usize> = st.good_marked.iter().copied().collect();
            for &b in &st.reserved {
                let bin = &out.covering.bins[b];
                if bin.items.iter().any(|i| marked.contains(i)) {
                    assert!(
                        bin.is_covered(),
                        "{beta} {profile}: reserved bin {b} uncovered"
                    );
                }
            }
        }
    }
    assert!(seen.iter().any(|c| c.starts_with("1:")), "{seen:?}");
    assert!(seen.iter().any(|c| c.starts_with('2')), "{seen:?}");
}

#[test]
fn advised_runs_are_prefix_consistent() {
    let g = generate(&family("1.06", 200, GoodProfile::Case2b), 5, 16).unwrap();
    let inst = &g.instance;
    let reference = canonicalize(g.reference.as_ref().unwrap(), inst, 16).unwrap();
    let (tape, _) = compute_advice(inst, &reference, 16).unwrap();
    let full = run(StrategyKind::Dh2b(16), inst, Some(&mut tape.clone())).unwrap();
    assert!(validate_covering(inst, &full.covering).is_ok());
    for k in [0, 1, inst.len() / 3, inst.len() / 2, inst.len() - 1] {
        let part = run(
            StrategyKind::Dh2b(16),
            &inst.prefix(k),
            Some(&mut tape.clone()),
        )
        .unwrap();
        assert_eq!(&full.placements[..k], &part.placements[..]);
    }
}

#[test]
fn large_beta_dispatches_to_dh2() {
    let r = run_cell(
        0,
        &family("1.2", 300, GoodProfile::Spread),
        1,
        StrategyKind::Dh2b(16),
        Some(16),
        18,
    );
    assert_eq!(r.plan.unwrap().case, CaseKind::BetaLarge);
    assert_eq!(r.row.bits, "1");
    let plain = run_cell(
        0,
        &family("1.2", 300, GoodProfile::Spread),
        1,
        StrategyKind::Dhk(2),
        Some(16),
        18,
    );
    assert_eq!(plain.row.score, r.row.score);
}

#[test]
fn case_bounds_clear_target_on_coarse_grid() {
    let lo = BigRational::from_integer(1.into());
    let hi = constants::beta_threshold();
    let step = BigRational::new(1.into(), 500.into());
    let target = constants::target_ratio();
    let mut beta = lo.clone();
    while beta <= hi {
        for kind in [BoundCase::Desirable, BoundCase::Case2b, BoundCase::Case2c] {
            let v = regime_bound(kind, &beta, &BigRational::zero());
            assert!(v >= target, "{kind:?} at {beta}");
        }
        beta += &step;
    }
}
