//! MAP treats every type equally; GAP pools all pairs into one ranking, so
//! shifting one type's scores changes GAP but not MAP.
//!
//! cargo run --example ranking_metrics

use kbc::eval::{evaluate, GakNorm, Metric, Prediction};
use kbc::{EntityId, TypeId};

fn report(label: &str, preds: &[Prediction]) -> kbc::Result<()> {
    let r = evaluate(preds, &[Metric::Map, Metric::Gap, Metric::GapAt(2)], GakNorm::Window)?;
    println!(
        "{label:<22} MAP {:.4}  GAP {:.4}  G@2 {:.4}",
        r.map.unwrap_or(f64::NAN),
        r.gap.unwrap_or(f64::NAN),
        r.g_at_k[&2]
    );
    Ok(())
}

fn main() -> kbc::Result<()> {
    let p = |e, t, score, label| Prediction {
        entity: EntityId(e),
        type_id: TypeId(t),
        score,
        label,
    };
    let mut preds = vec![p(0, 0, 0.9, true), p(1, 0, 0.8, false), p(2, 1, 0.7, false), p(3, 1, 0.6, true)];
    report("as scored", &preds)?;
    for x in preds.iter_mut().filter(|x| x.type_id == TypeId(1)) {
        x.score += 1.0;
    }
    report("type 1 shifted up", &preds)?;
    Ok(())
}
