use quick_xml::Writer;

use super::{into_string, text_element, XSI_NS};
use crate::datestamp;
use crate::index::ResourceRecord;

pub const OAI_DC_NS: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
pub const OAI_DC_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd";
pub const DC_NS: &str = "http://purl.org/dc/elements/1.1/";

/// Unqualified Dublin Core: identifier, date, and format.
pub fn encode_dc(rec: &ResourceRecord) -> String {
    let mut w = Writer::new(Vec::new());
    let schema_location = format!("{OAI_DC_NS} {OAI_DC_SCHEMA}");
    w.create_element("oai_dc:dc")
        .with_attribute(("xmlns:oai_dc", OAI_DC_NS))
        .with_attribute(("xmlns:dc", DC_NS))
        .with_attribute(("xmlns:xsi", XSI_NS))
        .with_attribute(("xsi:schemaLocation", schema_location.as_str()))
        .write_inner_content(|w| {
            text_element(w, "dc:identifier", &rec.url)?;
            text_element(w, "dc:date", &datestamp::format(&rec.datestamp))?;
            text_element(w, "dc:format", &rec.media_type)
        })
        .expect("write to Vec");
    into_string(w)
}
