//! Page-level metrics: text overlap, TEDS on tables, reading order.

use doctags_prior::doctags::parse;
use doctags_prior::metrics::{evaluate_page, otsl_body_to_tree, teds, tree_edit_distance};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = otsl_body_to_tree("<fcel>Year<fcel>Sales<nl><fcel>2023<fcel>10<nl><fcel>2024<fcel>12<nl>")?;
    let merged = otsl_body_to_tree("<fcel>Year<lcel><nl><fcel>2023<fcel>10<nl><fcel>2024<fcel>12<nl>")?;
    let retyped = otsl_body_to_tree("<fcel>Year<fcel>Sales<nl><fcel>2023<fcel>11<nl><fcel>2024<fcel>12<nl>")?;

    println!("tree sizes {} / {}", truth.size(), merged.size());
    println!("TED merged header: {}", tree_edit_distance(&truth, &merged));
    println!("TEDS merged header {:.4}, structure only {:.4}", teds(&merged, &truth, false), teds(&merged, &truth, true));
    println!("TEDS one wrong cell {:.4}, structure only {:.4}", teds(&retyped, &truth, false), teds(&retyped, &truth, true));

    let reference = parse(
        "<section_header><loc_10><loc_10><loc_300><loc_20>Results</section_header>\n\
         <text><loc_10><loc_30><loc_490><loc_60>Sales rose in both years.</text>\n\
         <otsl><loc_10><loc_70><loc_490><loc_150><fcel>Year<fcel>Sales<nl><fcel>2023<fcel>10<nl></otsl>",
    )?;
    let pred = parse(
        "<text><loc_10><loc_30><loc_490><loc_60>Sales rose in both years.</text>\n\
         <section_header><loc_10><loc_10><loc_300><loc_20>Results</section_header>\n\
         <otsl><loc_10><loc_70><loc_490><loc_150><fcel>Year<fcel>Sales<nl><fcel>2023<fcel>11<nl></otsl>",
    )?;
    let m = evaluate_page("p1", &pred, &reference)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}
