//! Two snapshots of a tiny knowledge base, the facts that appeared between
//! them, and the labeled test set built from those facts.
//!
//! cargo run --example snapshots_and_dataset

use kbc::dataset::{build_test_set, build_training_positives, dataset_stats, select_top_types, DatasetConfig};
use kbc::{Kb, VocabMode};

fn main() -> kbc::Result<()> {
    let mut kb = Kb::new();
    let earlier = kb.load_snapshot(
        "2013",
        [
            ("tiger_woods", "/people/person"),
            ("tiger_woods", "/sports/athlete"),
            ("serena_williams", "/people/person"),
            ("stanford", "/education/university"),
            ("mit", "/education/university"),
            ("new_person", "/people/person"),
        ],
        VocabMode::Extend,
    )?;
    let later = kb.load_snapshot(
        "2014",
        [
            ("tiger_woods", "/people/person"),
            ("tiger_woods", "/sports/athlete"),
            ("serena_williams", "/people/person"),
            ("serena_williams", "/sports/athlete"),
            ("stanford", "/education/university"),
            ("mit", "/education/university"),
            ("new_person", "/people/person"),
            ("roger_federer", "/people/person"),
        ],
        VocabMode::Extend,
    )?;

    println!("new facts:");
    for (e, t) in kb.diff_snapshots(&earlier, &later)? {
        println!("  {} {}", kb.entities.symbol(e), kb.types.symbol(t));
    }

    let types = select_top_types(&earlier, 2)?;
    let names: Vec<&str> = types.iter().map(|&t| kb.types.symbol(t)).collect();
    println!("top types: {names:?}");

    let cfg = DatasetConfig {
        num_types: 2,
        extra_negative_fraction: 1.0,
        seed: 0,
    };
    let positives = build_training_positives(&earlier, &types);
    let test = build_test_set(&earlier, &later, &types, &cfg)?;
    println!("test set:");
    for x in &test {
        println!("  {:<16} {:<18} {}", kb.entities.symbol(x.entity), kb.types.symbol(x.type_id), u8::from(x.label));
    }
    println!("{}", serde_json::to_string_pretty(&dataset_stats(&positives, &test))?);
    Ok(())
}
