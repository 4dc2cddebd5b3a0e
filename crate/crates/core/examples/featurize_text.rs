//! Tf-idf text blocks and type indicators stacked into one entity vector.
//!
//! cargo run --example featurize_text

use kbc::features::{build_entity_features, tokenize, BlockKind, FeatureSources, FeaturizerConfig};
use kbc::{EntityId, Kb, TypeId, VocabMode};

fn main() -> kbc::Result<()> {
    let mut kb = Kb::new();
    let train = kb.load_snapshot(
        "train",
        [("ada", "/people/person"), ("turing", "/people/person"), ("turing", "/science/scientist")],
        VocabMode::Extend,
    )?;
    let description = [
        ("ada", "Ada Lovelace, English mathematician and writer."),
        ("turing", "Alan Turing was an English mathematician and computer scientist."),
        ("enigma", "Enigma was a cipher machine broken by Turing's team."),
    ];
    let description: Vec<(EntityId, String)> =
        description.iter().map(|(e, d)| (kb.entities.intern(e), d.to_string())).collect();
    println!("tokens: {:?}", tokenize(&description[1].1).collect::<Vec<_>>());

    let types: Vec<TypeId> = kb.types.ids().collect();
    let sources = FeatureSources {
        train: &train,
        types: &types,
        description: &description,
        wikipedia: &[],
    };
    let cfg = FeaturizerConfig {
        blocks: vec![BlockKind::Types, BlockKind::Description],
        min_df: 2,
    };
    let features = build_entity_features(kb.entities.len(), &sources, &cfg)?;
    for b in features.space().blocks() {
        println!("block {} at offset {} width {}", b.kind, b.offset, b.width);
    }
    for e in kb.entities.ids() {
        let row: Vec<String> = features.row(e).iter().map(|(i, w)| format!("{i}:{w:.4}")).collect();
        println!("{:<7} {}", kb.entities.symbol(e), row.join(" "));
    }
    Ok(())
}
