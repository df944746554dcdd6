//! Parse a DocTags page, inspect it, and serialize it back byte for byte.

use doctags_prior::doctags::{self, count_tokens, DocElement, DocTagsDoc, LayoutTag, Locs};

const PAGE: &str = "<title><loc_40><loc_20><loc_460><loc_40>Quarterly Report</title>
<text><loc_40><loc_50><loc_460><loc_90>Revenue grew in every region.</text>
<unordered_list><list_item><loc_50><loc_95><loc_460><loc_105>Europe</list_item><list_item><loc_50><loc_106><loc_460><loc_116>Asia</list_item></unordered_list>
<otsl><loc_40><loc_120><loc_460><loc_200><fcel>Region<fcel>Growth<nl><fcel>EU<fcel>4%<nl></otsl>";

fn main() -> Result<(), doctags::DocTagsError> {
    let doc: DocTagsDoc = PAGE.parse()?;
    assert_eq!(doc.to_string(), PAGE);

    for el in doc.walk() {
        let locs = el.locs.map(|l| l.to_array());
        println!("{:<16} {:?} {:?}", el.tag.name(), locs, el.content);
    }
    println!("tokens: {}", doc.token_count());
    println!("as a prompt block: {}", count_tokens(&format!("<layout>\n{PAGE}\n</layout>"))?);

    let built = DocTagsDoc::new(vec![DocElement::new(LayoutTag::PageFooter)
        .with_locs(Locs::new(40, 480, 200, 490)?)
        .with_content("page 3")]);
    println!("{built}");

    match doctags::parse("<text><loc_501><loc_0><loc_1><loc_1>x</text>") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
