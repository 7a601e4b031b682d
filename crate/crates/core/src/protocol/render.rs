use std::io;

use quick_xml::events::{BytesDecl, BytesText, Event};
use quick_xml::Writer;

use super::{
    ErrorCode, OaiResponse, Payload, Record, RecordHeader, TokenElement, GRANULARITY,
    PROTOCOL_VERSION,
};
use crate::codecs::XSI_NS;
use crate::datestamp;

pub const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";
pub const OAI_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd";

type W = Writer<Vec<u8>>;

fn text(w: &mut W, name: &str, value: &str) -> io::Result<()> {
    w.create_element(name)
        .write_text_content(BytesText::new(value))
        .map(|_| ())
}

/// Serializes a response as a UTF-8 OAI-PMH document. Identical responses
/// render to identical bytes.
pub fn render_response(resp: &OaiResponse) -> Vec<u8> {
    let mut w = Writer::new(Vec::new());
    write_document(&mut w, resp).expect("write to Vec");
    w.into_inner()
}

fn write_document(w: &mut W, resp: &OaiResponse) -> io::Result<()> {
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    w.get_mut().push(b'\n');
    let schema_location = format!("{OAI_NS} {OAI_SCHEMA}");
    w.create_element("OAI-PMH")
        .with_attribute(("xmlns", OAI_NS))
        .with_attribute(("xmlns:xsi", XSI_NS))
        .with_attribute(("xsi:schemaLocation", schema_location.as_str()))
        .write_inner_content(|w| {
            text(w, "responseDate", &datestamp::format(&resp.response_date))?;
            write_request(w, resp)?;
            match &resp.body {
                Err(err) => {
                    w.create_element("error")
                        .with_attribute(("code", err.code.as_str()))
                        .write_text_content(BytesText::new(&err.message))?;
                }
                Ok(payload) => write_payload(w, payload)?,
            }
            Ok(())
        })?;
    Ok(())
}

fn write_request(w: &mut W, resp: &OaiResponse) -> io::Result<()> {
    let suppress = matches!(
        &resp.body,
        Err(e) if matches!(e.code, ErrorCode::BadVerb | ErrorCode::BadArgument)
    );
    let attrs = match (&resp.request, suppress) {
        (Some(req), false) => req.echo_attributes(),
        _ => Vec::new(),
    };
    w.create_element("request")
        .with_attributes(attrs.iter().map(|(k, v)| (*k, v.as_str())))
        .write_text_content(BytesText::new(&resp.base_url))?;
    Ok(())
}

fn write_payload(w: &mut W, payload: &Payload) -> io::Result<()> {
    match payload {
        Payload::Identify(info) => {
            w.create_element("Identify").write_inner_content(|w| {
                text(w, "repositoryName", &info.repository_name)?;
                text(w, "baseURL", &info.base_url)?;
                text(w, "protocolVersion", PROTOCOL_VERSION)?;
                text(w, "adminEmail", &info.admin_email)?;
                text(
                    w,
                    "earliestDatestamp",
                    &datestamp::format(&info.earliest_datestamp),
                )?;
                text(w, "deletedRecord", "no")?;
                text(w, "granularity", GRANULARITY)
            })?;
        }
        Payload::ListMetadataFormats(formats) => {
            w.create_element("ListMetadataFormats")
                .write_inner_content(|w| {
                    for f in formats {
                        w.create_element("metadataFormat").write_inner_content(|w| {
                            text(w, "metadataPrefix", f.prefix())?;
                            text(w, "schema", f.schema())?;
                            text(w, "metadataNamespace", f.namespace())
                        })?;
                    }
                    Ok(())
                })?;
        }
        Payload::ListSets(sets) => {
            w.create_element("ListSets").write_inner_content(|w| {
                for s in sets {
                    w.create_element("set").write_inner_content(|w| {
                        text(w, "setSpec", &s.spec)?;
                        text(w, "setName", &s.name)
                    })?;
                }
                Ok(())
            })?;
        }
        Payload::ListIdentifiers { headers, token } => {
            w.create_element("ListIdentifiers")
                .write_inner_content(|w| {
                    for h in headers {
                        write_header(w, h)?;
                    }
                    write_token(w, token.as_ref())
                })?;
        }
        Payload::ListRecords { records, token } => {
            w.create_element("ListRecords").write_inner_content(|w| {
                for r in records {
                    write_record(w, r)?;
                }
                write_token(w, token.as_ref())
            })?;
        }
        Payload::GetRecord(record) => {
            w.create_element("GetRecord")
                .write_inner_content(|w| write_record(w, record))?;
        }
    }
    Ok(())
}

fn write_header(w: &mut W, h: &RecordHeader) -> io::Result<()> {
    w.create_element("header").write_inner_content(|w| {
        text(w, "identifier", &h.identifier)?;
        text(w, "datestamp", &datestamp::format(&h.datestamp))?;
        for spec in &h.set_specs {
            text(w, "setSpec", spec)?;
        }
        Ok(())
    })?;
    Ok(())
}

fn write_record(w: &mut W, r: &Record) -> io::Result<()> {
    w.create_element("record").write_inner_content(|w| {
        write_header(w, &r.header)?;
        w.create_element("metadata").write_inner_content(|w| {
            w.get_mut().extend_from_slice(r.metadata.as_bytes());
            Ok(())
        })?;
        Ok(())
    })?;
    Ok(())
}

fn write_token(w: &mut W, token: Option<&TokenElement>) -> io::Result<()> {
    let Some(t) = token else {
        return Ok(());
    };
    let expiration = t.expiration_date.map(|d| datestamp::format(&d));
    let size = t.complete_list_size.to_string();
    let cursor = t.cursor.to_string();
    let mut el = w.create_element("resumptionToken");
    if let Some(exp) = &expiration {
        el = el.with_attribute(("expirationDate", exp.as_str()));
    }
    el = el
        .with_attribute(("completeListSize", size.as_str()))
        .with_attribute(("cursor", cursor.as_str()));
    if t.value.is_empty() {
        el.write_empty()?;
    } else {
        el.write_text_content(BytesText::new(&t.value))?;
    }
    Ok(())
}
