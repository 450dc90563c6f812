use pc_core::tcap::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../corpus/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

const LISTINGS: [&str; 5] = [
    "dept_match.tcap",
    "sel43.tcap",
    "sel43_opt.tcap",
    "join42.tcap",
    "join42_opt.tcap",
];

#[test]
fn dept_match_listing_parses() {
    let p = parse(&corpus("dept_match.tcap")).unwrap();
    assert_eq!(p.len(), 4);
    assert_eq!(
        p.stmts[0].op.kv(),
        &Kv::new(&[("type", "attAccess"), ("attName", "deptName")])
    );
    assert_eq!(p.stmts[0].cols, ["dep", "emp", "sup", "nm1"]);
    assert!(matches!(p.stmts[3].op, Op::Filter { .. }));
    assert_eq!(p.sources(), vec![ColRef::new("In", &["dep", "emp", "sup"])]);
}

#[test]
fn empty_text_is_empty_program() {
    assert_eq!(parse("").unwrap(), Program::default());
    assert_eq!(parse("  /* nothing */ \n").unwrap(), Program::default());
    assert_eq!(print(&Program::default()), "");
}

#[test]
fn undefined_input_is_named() {
    let err = parse("A(x) <= FILTER(Foo(x), Foo(x), 'c', []);").unwrap_err();
    assert_eq!(err.code, DiagCode::UndefinedInput);
    assert!(err.message.contains("Foo"));
    assert_eq!((err.pos.line, err.pos.col), (1, 1));
}

#[test]
fn duplicate_output_is_rejected() {
    let text = "A(x) <= FILTER(In(x), In(x), 'c', []);\nA(x) <= FILTER(In(x), In(x), 'c', []);";
    let err = parse(text).unwrap_err();
    assert_eq!(err.code, DiagCode::DuplicateOutput);
    assert_eq!(err.pos.line, 2);
}

#[test]
fn syntax_errors_carry_position() {
    let err = parse("A(x) <= APPLY(In(x), In(x), 'c', 's' [])").unwrap_err();
    assert_eq!(err.code, DiagCode::SyntaxError);
    assert_eq!((err.pos.line, err.pos.col), (1, 38));
    let err = parse("A(x) <=\n  FROB(In(x));").unwrap_err();
    assert_eq!((err.pos.line, err.pos.col), (2, 3));
    assert!(parse("A(x) <= FILTER(In(x), In(x), 'c, []);").is_err());
    assert!(parse("/* open").is_err());
}

#[test]
fn bare_empty_kv_is_accepted() {
    let text = "WBl_1(dep,emp,sup,bl) <= APPLY(WDNm_2(nm1,nm2),WDNm_2(dep,emp,sup), 'Join_2212', '==_3', '');";
    let p = parse_unchecked(text).unwrap();
    assert!(p.stmts[0].op.kv().is_empty());
}

#[test]
fn listings_round_trip_and_validate() {
    for name in LISTINGS {
        let text = corpus(name);
        let p = parse(&text).unwrap();
        assert!(validate(&p).is_empty(), "{name}: {:?}", validate(&p));
        let printed = print(&p);
        assert_eq!(parse(&printed).unwrap(), p, "{name}");
        assert_eq!(print(&parse(&printed).unwrap()), printed);
    }
}

#[test]
fn apply_with_two_new_columns_violates_arity() {
    let p = parse_unchecked("A(x,y,z) <= APPLY(In(x), In(x), 'c', 's', []);").unwrap();
    let d = validate(&p);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].code, DiagCode::ArityViolation);
}

#[test]
fn filter_inventing_a_column_is_unknown() {
    let p = parse_unchecked(
        "A(x,b) <= APPLY(In(x), In(x), 'c', 's', []);\nF(x,q) <= FILTER(A(b), A(x,q), 'c', []);",
    )
    .unwrap();
    let d = validate(&p);
    assert!(
        d.iter()
            .any(|d| d.code == DiagCode::UnknownColumn && d.message.contains('q')),
        "{d:?}"
    );
    assert_eq!(
        d[0].render("f.tcap"),
        format!("f.tcap:2:1: UnknownColumn: {}", d[0].message)
    );
}

#[test]
fn other_structural_violations() {
    let cases = [
        (
            "A(x,y) <= APPLY(In(x), In2(x), 'c', 's', []);",
            DiagCode::InputMismatch,
        ),
        (
            "A(y,b) <= APPLY(In(x), In(x), 'c', 's', []);",
            DiagCode::ColumnMismatch,
        ),
        (
            "A(x,x) <= APPLY(In(x), In(x), 'c', 's', []);",
            DiagCode::DuplicateColumn,
        ),
        (
            "A(x) <= FILTER(In(x,y), In(x), 'c', []);",
            DiagCode::ArityViolation,
        ),
        (
            "A(k,v,w) <= AGGREGATE(In(k), In(v), 'c', []);",
            DiagCode::ArityViolation,
        ),
        (
            "A(x) <= FILTER(B(x), B(x), 'c', []);\nB(x) <= FILTER(A(x), A(x), 'c', []);",
            DiagCode::CyclicProgram,
        ),
    ];
    for (text, code) in cases {
        let d = validate(&parse_unchecked(text).unwrap());
        assert!(d.iter().any(|d| d.code == code), "{text}: {d:?}");
    }
}

#[test]
fn dept_match_dag_is_a_chain() {
    let p = parse(&corpus("dept_match.tcap")).unwrap();
    let dag = build_dag(&p).unwrap();
    assert_eq!(dag.len(), 5);
    for i in 0..4 {
        let n = dag.stmt_node(i);
        assert_eq!(dag.producers[n].len(), 1);
        assert_eq!(dag.consumers[n].len(), if i == 3 { 0 } else { 1 });
    }
    assert_eq!(dag.consumer_count("In"), 1);
    assert_eq!(dag.topo_order(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn fan_out_has_two_consumers() {
    let p = parse(
        "A(x,b) <= APPLY(In(x), In(x), 'c', 's', []);\n\
         F1(x) <= FILTER(A(b), A(x), 'c', []);\n\
         F2(x) <= FILTER(A(b), A(x), 'c', []);",
    )
    .unwrap();
    let dag = build_dag(&p).unwrap();
    assert_eq!(dag.consumer_count("A"), 2);
    assert!(dag.is_ancestor(dag.node("In").unwrap(), dag.node("F2").unwrap()));
    assert!(!dag.is_ancestor(dag.node("F1").unwrap(), dag.node("F2").unwrap()));
}

#[test]
fn cyclic_program_is_rejected_by_build_dag() {
    let p = parse_unchecked(
        "A(x) <= FILTER(B(x), B(x), 'c', []);\nB(x) <= FILTER(A(x), A(x), 'c', []);",
    )
    .unwrap();
    match build_dag(&p) {
        Err(TcapError::Invalid(d)) => assert!(d.iter().any(|d| d.code == DiagCode::CyclicProgram)),
        other => panic!("expected a cycle, got {other:?}"),
    }
}

#[test]
fn canonical_form_ignores_names_and_order() {
    let a = parse(
        "X1(e,m) <= APPLY(In(e), In(e), 'c', 's', [('type', 'methodCall')]);\n\
         X2(e) <= FILTER(X1(m), X1(e), 'c', []);",
    )
    .unwrap();
    let b = parse(
        "Q(e,zz) <= APPLY(In(e), In(e), 'c', 's', [('type', 'methodCall')]);\n\
         R(e) <= FILTER(Q(zz), Q(e), 'c', []);",
    )
    .unwrap();
    assert_ne!(a, b);
    assert_eq!(canonicalize(&a), canonicalize(&b));
    assert_eq!(canonicalize(&canonicalize(&a)), canonicalize(&a));
}

/// Generates a random valid program; kv strings include quotes and backslashes.
fn random_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lists: Vec<(String, Vec<String>)> = vec![
        ("In".into(), vec!["a".into(), "b".into()]),
        ("InX".into(), vec!["x".into()]),
    ];
    let mut stmts = Vec::new();
    let n = rng.gen_range(0..14);
    let text_pool = ["t", "it's", "back\\slash", "", "==_3", "(x, y)", "[]"];
    for k in 0..n {
        let (list, cols) = lists[rng.gen_range(0..lists.len())].clone();
        let out = format!("S{k}");
        let mut kv = Kv::default();
        for _ in 0..rng.gen_range(0..3) {
            kv.0.push((
                text_pool[rng.gen_range(0..text_pool.len())].into(),
                text_pool[rng.gen_range(0..text_pool.len())].into(),
            ));
        }
        let copy: Vec<String> = cols.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect();
        let pick = cols[rng.gen_range(0..cols.len())].clone();
        let new = format!("n{k}");
        let stmt = match rng.gen_range(0..5) {
            0 | 1 => {
                let mut oc = copy.clone();
                oc.push(new);
                Stmt {
                    out: out.clone(),
                    cols: oc,
                    op: Op::Apply {
                        input: ColRef {
                            list: list.clone(),
                            cols: vec![pick],
                        },
                        copy: ColRef { list, cols: copy },
                        comp: "Comp".into(),
                        stage: format!("st_{k}"),
                        kv,
                    },
                    pos: Pos::default(),
                }
            }
            2 => {
                let mut oc = copy.clone();
                oc.push(new);
                Stmt {
                    out: out.clone(),
                    cols: oc,
                    op: Op::Hash {
                        input: ColRef {
                            list: list.clone(),
                            cols: vec![pick],
                        },
                        copy: ColRef { list, cols: copy },
                        comp: "Comp".into(),
                        kv,
                    },
                    pos: Pos::default(),
                }
            }
            3 => Stmt {
                out: out.clone(),
                cols: copy.clone(),
                op: Op::Filter {
                    input: ColRef {
                        list: list.clone(),
                        cols: vec![pick],
                    },
                    copy: ColRef { list, cols: copy },
                    comp: "Comp".into(),
                    kv,
                },
                pos: Pos::default(),
            },
            _ => {
                let (rl, rcols) = lists[rng.gen_range(0..lists.len())].clone();
                let rcopy: Vec<String> = rcols
                    .iter()
                    .filter(|c| !copy.contains(c))
                    .cloned()
                    .collect();
                let mut oc = copy.clone();
                oc.extend(rcopy.clone());
                Stmt {
                    out: out.clone(),
                    cols: oc,
                    op: Op::Join {
                        left_hash: ColRef {
                            list: list.clone(),
                            cols: vec![pick],
                        },
                        left_copy: ColRef { list, cols: copy },
                        right_hash: ColRef {
                            list: rl.clone(),
                            cols: vec![rcols[0].clone()],
                        },
                        right_copy: ColRef {
                            list: rl,
                            cols: rcopy,
                        },
                        comp: "Comp".into(),
                        kv,
                    },
                    pos: Pos::default(),
                }
            }
        };
        if !stmt.cols.is_empty() {
            lists.push((out, stmt.cols.clone()));
        }
        stmts.push(stmt);
    }
    Program::new(stmts)
}

proptest! {
    #[test]
    fn random_programs_round_trip(seed in any::<u64>()) {
        let p = random_program(seed);
        prop_assert!(validate(&p).is_empty(), "{:?}\n{}", validate(&p), print(&p));
        let text = print(&p);
        let q = parse(&text).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert_eq!(print(&q), text);
        prop_assert!(build_dag(&q).is_ok());
        let c = canonicalize(&q);
        prop_assert!(validate(&c).is_empty(), "{}", print(&c));
        prop_assert_eq!(canonicalize(&c), c);
    }
}
