//! Generate a synthetic panel, split one store's log-sales series and print
//! a short summary.
use salescast::data::{log_series, synthesize_panel, train_validation_split, GeneratorParams, SplitSpec};

fn main() -> salescast::error::Result<()> {
    let panel = synthesize_panel(42, 3, 400, &GeneratorParams::default())?;
    let (first, last) = panel.date_range().expect("non-empty panel");
    println!("{} rows, stores {:?}, {first} .. {last}", panel.len(), panel.store_ids());

    let series = log_series(&panel, 1)?;
    let (train, valid) = train_validation_split(&series, &SplitSpec::months(2))?;
    println!("store 1: {} training days, {} validation days", train.len(), valid.len());

    let mut csv = Vec::new();
    panel.write_csv(&mut csv)?;
    let text = String::from_utf8(csv).expect("utf-8");
    for line in text.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
