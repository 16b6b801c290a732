use super::*;

fn lp_min_x_between(lo: f64, hi: f64) -> (LinearProgram, VarId) {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", lo, hi);
    lp.add_objective(x, 1.0);
    (lp, x)
}

#[test]
fn bound_active_minimum() {
    let (lp, x) = lp_min_x_between(1.0, 2.0);
    let sol = solve_lp(&lp).unwrap();
    assert!(sol.is_optimal());
    assert_eq!(sol.value(x), 1.0);
    assert_eq!(sol.objective, 1.0);
}

#[test]
fn two_variable_vertex() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, f64::INFINITY);
    let y = lp.add_var("y", 0.0, f64::INFINITY);
    lp.add_le("cap", vec![(x, 1.0), (y, 1.0)], 1.0);
    lp.add_objective(x, -2.0);
    lp.add_objective(y, -1.0);
    let sol = solve_lp(&lp).unwrap();
    assert!((sol.value(x) - 1.0).abs() < 1e-9);
    assert!(sol.value(y).abs() < 1e-9);
    assert!((sol.objective + 2.0).abs() < 1e-9);
}

#[test]
fn contradictory_rows_are_infeasible() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
    lp.add_ge("lo", vec![(x, 1.0)], 2.0);
    lp.add_le("hi", vec![(x, 1.0)], 1.0);
    lp.add_objective(x, 1.0);
    assert_eq!(solve_lp(&lp).unwrap().status, Status::Infeasible);
}

#[test]
fn unbounded_direction_is_detected() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, f64::INFINITY);
    let y = lp.add_var("y", 0.0, f64::INFINITY);
    lp.add_le("r", vec![(x, 1.0), (y, -1.0)], 1.0);
    lp.add_objective(x, -1.0);
    assert_eq!(solve_lp(&lp).unwrap().status, Status::Unbounded);
}

#[test]
fn free_variables_and_equalities() {
    // min |x - 3| via z >= x - 3, z >= 3 - x with x free, plus x + y = 10, y in [0, 5]
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
    let y = lp.add_var("y", 0.0, 5.0);
    let z = lp.add_var("z", 0.0, f64::INFINITY);
    lp.add_le("a", vec![(x, 1.0), (z, -1.0)], 3.0);
    lp.add_le("b", vec![(x, -1.0), (z, -1.0)], -3.0);
    lp.add_eq("sum", vec![(x, 1.0), (y, 1.0)], 10.0);
    lp.add_objective(z, 1.0);
    let sol = solve_lp(&lp).unwrap();
    assert!(sol.is_optimal());
    // y <= 5 forces x >= 5, so the best is x = 5, z = 2.
    assert!((sol.value(x) - 5.0).abs() < 1e-9);
    assert!((sol.objective - 2.0).abs() < 1e-9);
}

#[test]
fn malformed_programs_are_rejected() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 2.0, 1.0);
    lp.add_objective(x, 1.0);
    assert!(matches!(solve_lp(&lp), Err(Error::InvalidModel(_))));

    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, 1.0);
    lp.add_le("nan", vec![(x, f64::NAN)], 1.0);
    assert!(matches!(solve_lp(&lp), Err(Error::InvalidModel(_))));

    let mut lp = LinearProgram::new();
    lp.add_binary("b");
    assert!(matches!(solve_lp(&lp), Err(Error::InvalidModel(_))));

    let mut lp = LinearProgram::new();
    let b = lp.add_binary("b");
    lp.set_bounds(b, 0.0, 2.0);
    assert!(matches!(solve_milp(&lp), Err(Error::InvalidModel(_))));
}

#[test]
fn fixed_variables_are_substituted() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, 10.0);
    let y = lp.add_var("y", 4.0, 4.0);
    lp.add_ge("need", vec![(x, 1.0), (y, 1.0)], 7.0);
    lp.add_objective(x, 1.0);
    lp.add_objective(y, 1.0);
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.value(y), 4.0);
    assert!((sol.value(x) - 3.0).abs() < 1e-9);

    // A row left empty by substitution must still be honoured.
    let mut lp = LinearProgram::new();
    let y = lp.add_var("y", 4.0, 4.0);
    lp.add_le("cap", vec![(y, 1.0)], 3.0);
    assert_eq!(solve_lp(&lp).unwrap().status, Status::Infeasible);
}

#[test]
fn milp_single_integer_point() {
    let mut lp = LinearProgram::new();
    let x = lp.add_binary("x");
    lp.add_le("half", vec![(x, 1.0)], 0.5);
    lp.add_objective(x, -1.0);
    let sol = solve_milp(&lp).unwrap();
    assert_eq!(sol.value(x), 0.0);
    assert_eq!(sol.objective, 0.0);
}

#[test]
fn milp_mixed_example() {
    let mut lp = LinearProgram::new();
    let x = lp.add_binary("x");
    let y = lp.add_var("y", 0.0, 1.0);
    lp.add_le("cap", vec![(x, 1.0), (y, 1.0)], 1.5);
    lp.add_objective(x, -1.0);
    lp.add_objective(y, -1.0);
    let sol = solve_milp(&lp).unwrap();
    assert_eq!(sol.value(x), 1.0);
    assert!((sol.value(y) - 0.5).abs() < 1e-9);
    assert!((sol.objective + 1.5).abs() < 1e-9);
}

#[test]
fn integral_relaxation_matches_lp() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, 4.0);
    let b = lp.add_var("b", 0.0, 1.0);
    lp.add_le("link", vec![(x, 1.0), (b, -4.0)], 0.0);
    lp.add_objective(x, -1.0);
    lp.add_objective(b, 0.5);
    let relaxed = solve_lp(&lp).unwrap();

    let mut milp = lp.clone();
    milp.set_bounds(b, 0.0, 1.0);
    let mut flagged = LinearProgram::new();
    let fx = flagged.add_var("x", 0.0, 4.0);
    let fb = flagged.add_binary("b");
    flagged.add_le("link", vec![(fx, 1.0), (fb, -4.0)], 0.0);
    flagged.add_objective(fx, -1.0);
    flagged.add_objective(fb, 0.5);
    let sol = solve_milp(&flagged).unwrap();
    assert_eq!(sol.nodes, 1);
    assert_eq!(sol.values, relaxed.values);
    assert_eq!(sol.objective, relaxed.objective);
}

#[test]
fn node_limit_reports_incumbent() {
    // A knapsack whose relaxation is fractional; one node is not enough.
    let mut lp = LinearProgram::new();
    let weights = [3.0, 4.0, 5.0, 6.0, 7.0];
    let vals = [4.0, 5.0, 7.0, 8.0, 9.0];
    let xs: Vec<VarId> = (0..5).map(|i| lp.add_binary(format!("x{i}"))).collect();
    lp.add_le(
        "w",
        xs.iter().zip(weights).map(|(&x, w)| (x, w)).collect(),
        12.5,
    );
    for (&x, v) in xs.iter().zip(vals) {
        lp.add_objective(x, -v);
    }
    let err = solve_milp_with(
        &lp,
        &MilpOptions {
            node_limit: 1,
            ..MilpOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::ResourceExhausted { limit: 1, .. }));

    let full = solve_milp(&lp).unwrap();
    // best subset: weights 3+4+5 = 12 -> value 16
    assert!((full.objective + 16.0).abs() < 1e-9);
}

#[test]
fn identical_programs_give_identical_solutions() {
    let mut lp = LinearProgram::new();
    let xs: Vec<VarId> = (0..6)
        .map(|i| lp.add_var(format!("x{i}"), 0.0, 3.0))
        .collect();
    let bs: Vec<VarId> = (0..3).map(|i| lp.add_binary(format!("b{i}"))).collect();
    for (i, &b) in bs.iter().enumerate() {
        lp.add_le(
            format!("l{i}"),
            vec![(xs[2 * i], 1.0), (xs[2 * i + 1], 1.0), (b, -2.5)],
            0.0,
        );
        lp.add_objective(b, 0.3);
    }
    lp.add_ge("need", xs.iter().map(|&x| (x, 1.0)).collect(), 4.2);
    for (i, &x) in xs.iter().enumerate() {
        lp.add_objective(x, 1.0 + 0.1 * i as f64);
    }
    let a = solve_milp(&lp).unwrap();
    let b = solve_milp(&lp).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lp_text_dump_has_all_sections() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("power[0]", 0.0, 140.0);
    let c = lp.add_binary("c");
    let f = lp.add_var("free", f64::NEG_INFINITY, f64::INFINITY);
    lp.add_le("cap", vec![(x, 1.0), (c, -140.0)], 0.0);
    lp.add_eq("bal", vec![(x, 1.0), (f, 1.0)], 3.0);
    lp.add_objective(x, -0.5);
    let text = write_lp(&lp);
    for needle in [
        "Minimize",
        "Subject To",
        "Bounds",
        "Binaries",
        "End",
        "power_0__0",
        "free_2 free",
        "<= 0",
        "= 3",
    ] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}
