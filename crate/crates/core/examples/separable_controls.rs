//! Builds controls from constants by concatenation and bifurcation, checks
//! them against a base measure, and round-trips a catalog through TOML.

use bsdej_lab::levy::{
    bifurcate, concatenate, make_base_measure, validate_control, Alpha, ControlEntry, ControlSpec, JumpMap,
    ModelCatalog, Predicate,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = make_base_measure(&[(1.0, 2.0)])?.with_label("poisson");
    let low = ControlSpec::constant(1.0, Alpha::Scalar(0.5), JumpMap::identity());
    let high = ControlSpec::constant(1.0, Alpha::Scalar(2.0), JumpMap::linear(0.5));

    let stepped = concatenate(&low, &high, 0.25)?;
    let reactive = bifurcate(
        &[
            (Predicate::JumpsAtLeast { at: 0.5, count: 1 }, high.clone()),
            (Predicate::JumpsBelow { at: 0.5, count: 1 }, low.clone()),
        ],
        0.5,
        &stepped,
    )?;
    println!("breakpoints {:?}", reactive.breakpoints());
    for (i, cell) in reactive.cells().iter().enumerate() {
        println!("cell {i}: {} branch(es)", cell.branches.len());
    }
    let report = validate_control(&reactive, &f);
    println!("valid: {}", report.passed());

    let bad = ControlSpec::constant(1.0, Alpha::Scalar(-1.0), JumpMap::identity());
    println!("negative volatility rejected: {:?}", validate_control(&bad, &f).failures);

    let mut catalog = ModelCatalog::default();
    catalog.measures.insert("poisson".into(), f);
    catalog.controls.insert("reactive".into(), ControlEntry { measure: "poisson".into(), spec: reactive });
    let text = catalog.to_toml_string()?;
    let back = ModelCatalog::from_toml_str(&text)?;
    println!("catalog round trip exact: {}", back == catalog);
    Ok(())
}
