//! Render each plot kind to SVG and a nested result to sorted JSON and flat CSV.
use salescast::report::{emit_flat_csv, emit_json, emit_svg, kernel_density, PlotData, PlotSpec, Series};
use serde_json::json;

fn main() -> salescast::error::Result<()> {
    let xs: Vec<f64> = (0..200).map(|i| i as f64 / 20.0).collect();
    let wave: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let damped: Vec<f64> = xs.iter().map(|x| (-x / 4.0).exp() * x.cos()).collect();
    let density = kernel_density(&wave, 100)?;
    let specs = [
        (
            "line",
            PlotSpec::new(
                "Line",
                "x",
                "y",
                PlotData::Line(vec![
                    Series::new("sin", xs.clone(), wave.clone()),
                    Series::new("damped", xs.clone(), damped.clone()),
                ]),
            ),
        ),
        (
            "scatter",
            PlotSpec::new(
                "Scatter",
                "sin",
                "damped",
                PlotData::Scatter(vec![Series::new("points", wave.clone(), damped.clone())]),
            ),
        ),
        (
            "histogram",
            PlotSpec::new("Histogram", "value", "count", PlotData::Histogram { values: damped.clone(), bins: 20 }),
        ),
        ("density", PlotSpec::new("Density", "value", "density", PlotData::Density(vec![density]))),
        (
            "heatmap",
            PlotSpec::new(
                "Heatmap",
                "x",
                "y",
                PlotData::Heatmap {
                    x: vec![0.0, 1.0, 2.0],
                    y: vec![0.0, 1.0],
                    z: vec![vec![0.1, 0.5, 0.9], vec![0.3, 0.6, 0.2]],
                },
            ),
        ),
        (
            "boxes",
            PlotSpec::new(
                "Boxes",
                "series",
                "value",
                PlotData::Boxes(vec![("sin".into(), wave), ("damped".into(), damped)]),
            ),
        ),
    ];
    let dir = std::env::temp_dir().join("salescast_svg");
    std::fs::create_dir_all(&dir)?;
    for (name, spec) in &specs {
        let svg = emit_svg(spec)?;
        std::fs::write(dir.join(format!("{name}.svg")), &svg)?;
        println!("{name}: {} bytes", svg.len());
    }
    let result = json!({"method": "blend", "rmse": 0.1, "weights": {"wb": 0.6, "wa": 0.4}});
    print!("{}{}", emit_json(&result)?, emit_flat_csv(&result)?);
    Ok(())
}
