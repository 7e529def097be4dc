//! Deterministic SVG scatter plots of 2-D classification results.
//!
//! Unlabeled points are filled with their predicted label's color; labeled
//! points carry a black outline. Coordinates are formatted with fixed
//! precision so identical runs produce identical bytes.

use ising_ssl::dataset::Dataset;
use ising_ssl::pipeline::ClassifyOutcome;

const PALETTE: [&str; 10] = [
    "#2ca02c", "#d62728", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;

fn color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

/// Renders the dataset with its predictions. Data beyond two dimensions is
/// plotted on its first two axes.
pub fn scatter(dataset: &Dataset, outcome: &ClassifyOutcome, title: &str) -> String {
    let coord = |p: &ising_ssl::dataset::DataPoint, axis: usize| -> f64 {
        p.coords.get(axis).copied().unwrap_or(0.0)
    };

    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for i in 0..dataset.len() {
        let p = dataset.point(i);
        for axis in 0..2 {
            min[axis] = min[axis].min(coord(p, axis));
            max[axis] = max[axis].max(coord(p, axis));
        }
    }
    for axis in 0..2 {
        if !(max[axis] > min[axis]) {
            min[axis] -= 1.0;
            max[axis] += 1.0;
        }
    }
    let project = |p: &ising_ssl::dataset::DataPoint| -> (f64, f64) {
        let x = MARGIN + (coord(p, 0) - min[0]) / (max[0] - min[0]) * (WIDTH - 2.0 * MARGIN);
        let y = HEIGHT - MARGIN - (coord(p, 1) - min[1]) / (max[1] - min[1]) * (HEIGHT - 2.0 * MARGIN);
        (x, y)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));

    for (p, lab) in &dataset.labeled {
        let (x, y) = project(p);
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"{}\" stroke=\"#000000\" stroke-width=\"1.5\"/>\n",
            color(*lab)
        ));
    }
    for (i, p) in dataset.unlabeled.iter().enumerate() {
        let (x, y) = project(p);
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"{}\"/>\n",
            color(outcome.predictions[i])
        ));
    }

    for (lab, name) in dataset.label_names.iter().enumerate() {
        let y = 20.0 + 16.0 * lab as f64;
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{}\"/>\n",
            WIDTH - MARGIN - 60.0,
            color(lab)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN - 50.0,
            y + 4.0,
            name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
