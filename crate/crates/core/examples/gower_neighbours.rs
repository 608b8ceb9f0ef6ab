//! Mixed-type contextual distances and reference groups.
//!
//! Run with `cargo run --example gower_neighbours`.

use qcad::dataset::{Column, Dataset, Feature, FeatureSchema, Kind, Role};
use qcad::gower::{distance_matrix, reference_group};

fn main() -> qcad::Result<()> {
    let schema = FeatureSchema::new(vec![
        Feature::new("age", Role::Contextual, Kind::Numeric),
        Feature::new("city", Role::Contextual, Kind::Categorical),
        Feature::new("spend", Role::Behavioral, Kind::Numeric),
    ])?;
    let (codes, labels) = qcad::dataset::label_encode(&["paris", "paris", "rome", "rome", "paris", "oslo"]);
    let ds = Dataset::new(
        schema,
        vec![
            Column::Numeric(vec![25.0, 31.0, 27.0, 60.0, 58.0, 40.0]),
            Column::Categorical { codes, labels },
            Column::Numeric(vec![1.0, 2.0, 1.5, 3.0, 2.5, 2.0]),
        ],
        None,
    )?;

    let m = distance_matrix(&ds);
    for i in 0..ds.len() {
        let row: Vec<String> = m.row(i).iter().map(|d| format!("{d:.2}")).collect();
        println!("{i}: {}", row.join(" "));
    }
    let group = reference_group(&m, 0, 3)?;
    println!("three nearest to object 0: {:?}", group.members);
    Ok(())
}
