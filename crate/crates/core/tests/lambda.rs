use pc_core::engine::{Udfs, Value};
use pc_core::lambda::*;
use pc_core::tcap::{canonicalize, erase_labels, parse, print, ColRef, Program};

fn corpus(name: &str) -> Program {
    let path = format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn same_shape(a: &Program, b: &Program) -> bool {
    canonicalize(&erase_labels(a)) == canonicalize(&erase_labels(b))
}

fn salary_predicate() -> LambdaTerm {
    make_lambda_from_method(0, "getSalary")
        .gt(constant(50000))
        .and(make_lambda_from_method(0, "getSalary").lt(constant(10000)))
}

#[test]
fn member_and_method_leaves() {
    let m = make_lambda_from_member(0, "deptName");
    assert_eq!(m.kind, TermKind::Member("deptName".into()));
    assert_eq!(m.slots, vec![0]);
    let eq = m.clone().eq(make_lambda_from_method(1, "getDeptName"));
    assert_eq!(eq.kind, TermKind::Binary(BinOp::Eq));
    assert_eq!(eq.children.len(), 2);
    assert_eq!(eq.tag, TypeTag::Bool);
}

#[test]
fn three_way_predicate_has_two_equalities_under_and() {
    let p = make_lambda_from_member(0, "deptName")
        .eq(make_lambda_from_method(1, "getDeptName"))
        .and(make_lambda_from_member(2, "name").eq(make_lambda_from_method(1, "getSupervisor")));
    assert_eq!(p.kind, TermKind::Binary(BinOp::And));
    assert!(p
        .children
        .iter()
        .all(|c| c.kind == TermKind::Binary(BinOp::Eq)));
    assert_eq!(p.conjuncts().len(), 2);
    assert_eq!(p.size(), 7);
}

#[test]
fn opaque_function_must_be_registered() {
    let mut udfs = Udfs::new();
    assert_eq!(
        make_lambda(&udfs, 0, "getClose"),
        Err(LambdaError::UnknownFunction("getClose".into()))
    );
    udfs.add_function("getClose", |_, _| Ok(Value::Int(0)));
    let t = make_lambda(&udfs, 0, "getClose").unwrap();
    assert_eq!(t.kind, TermKind::Opaque("getClose".into()));
}

#[test]
fn two_way_selection_matches_listing() {
    let pred = make_lambda_from_member(0, "deptName").eq(make_lambda_from_method(1, "getDeptName"));
    let input = ColRef::new("In", &["dep", "emp", "sup"]);
    let p = compile_selection_predicate(&pred, &input, "Join_2212").unwrap();
    assert_eq!(p.len(), 4);
    assert!(same_shape(&p, &corpus("dept_match.tcap")), "{}", print(&p));
}

#[test]
fn salary_selection_matches_listing() {
    let p =
        compile_selection_predicate(&salary_predicate(), &ColRef::new("In", &["emp"]), "Sel_43")
            .unwrap();
    assert_eq!(p.len(), 6);
    assert!(same_shape(&p, &corpus("sel43.tcap")), "{}", print(&p));
}

#[test]
fn join_compiles_with_predicate_after_join() {
    let mut g = ComputationGraph::new();
    let sup = g.reader("Sups", "db", "sups", "sup").unwrap();
    let emp = g.reader("Emps", "db", "emps", "emp").unwrap();
    let pred = make_lambda_from_method(1, "getSalary")
        .gt(constant(50000))
        .and(make_lambda_from_method(1, "getSupervisor").eq(make_lambda_from_member(0, "name")));
    g.join("Join_42", &[sup, emp], pred, None).unwrap();
    let p = compile_to_tcap(&g).unwrap();
    assert!(same_shape(&p, &corpus("join42.tcap")), "{}", print(&p));
}

#[test]
fn statement_count_tracks_node_count() {
    let pred = salary_predicate();
    let p = compile_selection_predicate(&pred, &ColRef::new("In", &["emp"]), "S").unwrap();
    let consts = 2;
    assert_eq!(p.len(), pred.size() - consts + 1);
}

#[test]
fn identity_pipeline_is_a_bare_output() {
    let mut g = ComputationGraph::new();
    let r = g.reader("R", "db", "in", "x").unwrap();
    let s = g
        .selection("S", r, Some(constant(true)), Some(make_lambda_from_self(0)))
        .unwrap();
    g.writer("W", s, "db", "out").unwrap();
    let p = compile_to_tcap(&g).unwrap();
    assert_eq!(
        print(&p).trim(),
        "W_1(x) <= OUTPUT(InX(x), 'db', 'out', 'W', []);"
    );
}

#[test]
fn non_boolean_predicate_is_rejected() {
    let mut g = ComputationGraph::new();
    let r = g.reader("R", "db", "in", "x").unwrap();
    let pred = make_lambda_from_member(0, "count").typed(TypeTag::Int);
    g.selection("S", r, Some(pred), None).unwrap();
    assert!(matches!(
        compile_to_tcap(&g),
        Err(LambdaError::TypeMismatch(_))
    ));
}

#[test]
fn arithmetic_on_strings_is_rejected() {
    let mut g = ComputationGraph::new();
    let r = g.reader("R", "db", "in", "x").unwrap();
    let proj = make_lambda_from_member(0, "name")
        .typed(TypeTag::Str)
        .plus(constant(1));
    g.selection("S", r, None, Some(proj)).unwrap();
    assert!(matches!(
        compile_to_tcap(&g),
        Err(LambdaError::TypeMismatch(_))
    ));
}

#[test]
fn slot_out_of_range_is_rejected() {
    let mut g = ComputationGraph::new();
    let r = g.reader("R", "db", "in", "x").unwrap();
    g.selection("S", r, Some(make_lambda_from_method(1, "ok")), None)
        .unwrap();
    assert!(matches!(
        compile_to_tcap(&g),
        Err(LambdaError::SlotOutOfRange {
            slot: 1,
            arity: 1,
            ..
        })
    ));
}

#[test]
fn join_without_equality_has_no_key() {
    let mut g = ComputationGraph::new();
    let a = g.reader("A", "db", "a", "a").unwrap();
    let b = g.reader("B", "db", "b", "b").unwrap();
    let pred = make_lambda_from_member(0, "x").gt(make_lambda_from_member(1, "y"));
    g.join("J", &[a, b], pred, None).unwrap();
    assert!(matches!(
        compile_to_tcap(&g),
        Err(LambdaError::NoJoinKey(_))
    ));
}

#[test]
fn constant_on_left_flips_comparison() {
    let pred = constant(10).lt(make_lambda_from_member(0, "v"));
    let p = compile_selection_predicate(&pred, &ColRef::new("In", &["r"]), "S").unwrap();
    let kv = p.stmts[1].op.kv();
    assert_eq!(kv.get("op"), Some(">"));
    assert_eq!(kv.get("const"), Some("10"));
}

#[test]
fn every_apply_carries_optimizer_metadata() {
    let mut g = ComputationGraph::new();
    let a = g.reader("A", "db", "a", "a").unwrap();
    let b = g.reader("B", "db", "b", "b").unwrap();
    let c = g.reader("C", "db", "c", "c").unwrap();
    let pred = make_lambda_from_member(0, "k")
        .eq(make_lambda_from_member(1, "k"))
        .and(make_lambda_from_method(1, "j").eq(make_lambda_from_method(2, "j")))
        .and(
            make_lambda_from_member(2, "v")
                .ne(constant("x"))
                .or(make_lambda_from_member(0, "v").ge(constant(1.5)).not()),
        );
    let j = g
        .join(
            "J",
            &[a, b, c],
            pred,
            Some(make_lambda_from_member(0, "v").times(constant(2))),
        )
        .unwrap();
    g.aggregate(
        "Agg",
        j,
        make_lambda_from_self(0),
        make_lambda_from_self(0),
        "sum",
    )
    .unwrap();
    let p = compile_to_tcap(&g).unwrap();
    for s in &p.stmts {
        if let pc_core::tcap::Op::Apply { kv, .. } = &s.op {
            let ty = kv.get("type").expect("type");
            let key = match ty {
                "attAccess" => Some("attName"),
                "methodCall" => Some("methodName"),
                "comparison" | "const_comparison" | "arithmetic" | "const_arithmetic" => Some("op"),
                _ => None,
            };
            if let Some(k) = key {
                assert!(kv.get(k).is_some(), "{}", print(&p));
            }
        }
    }
    assert_eq!(p.stmts.iter().filter(|s| s.op.kind() == "JOIN").count(), 2);
}

#[test]
fn compilation_is_deterministic() {
    let build = || {
        let mut g = ComputationGraph::new();
        let r = g.reader("R", "db", "in", "x").unwrap();
        let s = g
            .selection(
                "S",
                r,
                Some(salary_predicate()),
                Some(make_lambda_from_member(0, "dept")),
            )
            .unwrap();
        let a = g
            .aggregate(
                "A",
                s,
                make_lambda_from_self(0),
                make_lambda_from_self(0),
                "sum",
            )
            .unwrap();
        g.writer("W", a, "db", "out").unwrap();
        compile_to_tcap(&g).unwrap()
    };
    assert_eq!(print(&build()), print(&build()));
}
