use pc_core::optimizer::*;
use pc_core::tcap::{canonicalize, erase_labels, parse, print, Program};

fn corpus(name: &str) -> Program {
    let path = format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn shape(p: &Program) -> Program {
    canonicalize(&erase_labels(p))
}

#[test]
fn salary_selection_reuses_first_call() {
    let (q, log) = optimize_traced(&corpus("sel43.tcap")).unwrap();
    assert_eq!(q.len(), 5);
    assert_eq!(log.len(), 1);
    assert_eq!(shape(&q), shape(&corpus("sel43_opt.tcap")), "{}", print(&q));
}

#[test]
fn join_filter_moves_to_employee_side() {
    let (q, log) = optimize_traced(&corpus("join42.tcap")).unwrap();
    assert!(log.iter().any(|f| f.rule == "push_filter_past_join"));
    assert_eq!(
        shape(&q),
        shape(&corpus("join42_opt.tcap")),
        "{}",
        print(&q)
    );
}

#[test]
fn different_methods_are_left_alone() {
    let p = parse(
        "A(e,m1) <= APPLY(In(e), In(e), 'C', 's1', [('type','methodCall'),('methodName','getSalary')]);
         B(e,m1,m2) <= APPLY(A(e), A(e,m1), 'C', 's2', [('type','methodCall'),('methodName','getAge')]);
         O(e,m1,m2) <= OUTPUT(B(e,m1,m2), 'db', 'out', 'C', []);",
    )
    .unwrap();
    assert_eq!(eliminate_redundant_apply(&p), (p.clone(), false));
}

#[test]
fn same_method_on_different_columns_is_left_alone() {
    let p = parse(
        "A(x,y,m1) <= APPLY(In(x), In(x,y), 'C', 's1', [('type','methodCall'),('methodName','get')]);
         B(x,y,m1,m2) <= APPLY(A(y), A(x,y,m1), 'C', 's2', [('type','methodCall'),('methodName','get')]);
         O(m1,m2) <= OUTPUT(B(m1,m2), 'db', 'out', 'C', []);",
    )
    .unwrap();
    assert!(!eliminate_redundant_apply(&p).1);
}

#[test]
fn lineage_follows_copy_lists() {
    let p = parse(
        "A(x,y,m1) <= APPLY(In(x), In(x,y), 'C', 's1', [('type','methodCall'),('methodName','get')]);
         F(x,y,m1) <= FILTER(A(m1), A(x,y,m1), 'C', []);
         B(x,m2) <= APPLY(F(x), F(x), 'C', 's2', [('type','methodCall'),('methodName','get')]);
         O(x,m2) <= OUTPUT(B(x,m2), 'db', 'out', 'C', []);",
    )
    .unwrap();
    let (q, changed) = eliminate_redundant_apply(&p);
    assert!(changed);
    assert_eq!(q.len(), 3);
    assert_eq!(print(&q).matches("methodCall").count(), 1);
}

#[test]
fn opaque_predicates_are_untouched() {
    let p = parse(
        "A(e,b1) <= APPLY(In(e), In(e), 'C', 'n1', [('type','nativeOpaque'),('functionId','f')]);
         B(e,b1,b2) <= APPLY(A(e), A(e,b1), 'C', 'n2', [('type','nativeOpaque'),('functionId','f')]);
         O(b1,b2) <= OUTPUT(B(b1,b2), 'db', 'out', 'C', []);",
    )
    .unwrap();
    assert_eq!(optimize(&p).unwrap(), canonicalize(&p));
}

const TWO_SIDED: &str = "
    L1(a,k1) <= APPLY(InA(a), InA(a), 'J', 'k1', [('type','attAccess'),('attName','k')]);
    L2(a,h1) <= HASH(L1(k1), L1(a), 'J', []);
    R1(b,k2) <= APPLY(InB(b), InB(b), 'J', 'k2', [('type','attAccess'),('attName','k')]);
    R2(b,h2) <= HASH(R1(k2), R1(b), 'J', []);
    J1(a,b) <= JOIN(L2(h1), L2(a), R2(h2), R2(b), 'J', []);
    P1(a,b,v1) <= APPLY(J1(a), J1(a,b), 'J', 'v1', [('type','attAccess'),('attName','v')]);
    P2(a,b,c1) <= APPLY(P1(v1), P1(a,b), 'J', 'c1', [('type','const_comparison'),('op','>'),('const','3')]);
    P3(a,b,c1,w1) <= APPLY(P2(b), P2(a,b,c1), 'J', 'w1', [('type','attAccess'),('attName','w')]);
    P4(a,b,c1,c2) <= APPLY(P3(w1), P3(a,b,c1), 'J', 'c2', [('type','const_comparison'),('op','<'),('const','5')]);
    P5(a,b,c3) <= APPLY(P4(c1,c2), P4(a,b), 'J', 'and', [('type','bool_and')]);
    F1(a,b) <= FILTER(P5(c3), P5(a,b), 'J', []);
    O1(a,b) <= OUTPUT(F1(a,b), 'db', 'out', 'J', []);";

#[test]
fn single_side_conjuncts_on_both_sides_drop_the_post_join_filter() {
    let p = parse(TWO_SIDED).unwrap();
    let (q, log) = optimize_traced(&p).unwrap();
    assert_eq!(
        log.iter()
            .filter(|f| f.rule == "push_filter_past_join")
            .count(),
        2
    );
    let text = print(&q);
    assert_eq!(text.matches("FILTER").count(), 2);
    assert!(!text.contains("bool_and"));
    let join_pos = text.find("JOIN").unwrap();
    assert!(text.rfind("FILTER").unwrap() < join_pos, "{text}");
}

#[test]
fn conjunct_over_both_inputs_stays_after_join() {
    let p = parse(
        "L2(a,h1) <= HASH(InA(a), InA(a), 'J', []);
         R2(b,h2) <= HASH(InB(b), InB(b), 'J', []);
         J1(a,b) <= JOIN(L2(h1), L2(a), R2(h2), R2(b), 'J', []);
         P1(a,b,c1) <= APPLY(J1(a,b), J1(a,b), 'J', 'eq', [('type','equalityCheck')]);
         F1(a,b) <= FILTER(P1(c1), P1(a,b), 'J', []);
         O1(a,b) <= OUTPUT(F1(a,b), 'db', 'out', 'J', []);",
    )
    .unwrap();
    assert!(!push_filter_past_join(&p).1);
}

#[test]
fn optimize_is_idempotent_on_corpus() {
    for name in [
        "sel43.tcap",
        "join42.tcap",
        "dept_match.tcap",
        "sel43_opt.tcap",
        "join42_opt.tcap",
    ] {
        let once = optimize(&corpus(name)).unwrap();
        assert_eq!(optimize(&once).unwrap(), once, "{name}");
    }
    let once = optimize(&parse(TWO_SIDED).unwrap()).unwrap();
    assert_eq!(optimize(&once).unwrap(), once);
}

#[test]
fn invalid_programs_are_rejected() {
    let p = pc_core::tcap::parse_unchecked("A(x,y) <= FILTER(In(x), In(x), 'C', []);").unwrap();
    assert!(matches!(optimize(&p), Err(OptimizerError::Invalid(_))));
}
