use base64::Engine;
use oaifs_core::codecs::{
    decode_didl, decode_http_header, encode_dc, encode_didl, encode_didl_by_reference,
    encode_http_header, CodecError, DC_NS, OAI_DC_NS,
};
use oaifs_core::datestamp;
use oaifs_core::ResourceRecord;
use proptest::prelude::*;
use quick_xml::events::Event;
use quick_xml::name::ResolveResult;
use quick_xml::NsReader;
use sha2::{Digest, Sha256};

const BASE64_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/=";

fn record_for(content: &[u8], media_type: &str) -> ResourceRecord {
    ResourceRecord {
        url: "http://example.org/dir/file%20name.bin".into(),
        rel_path: "dir/file name.bin".into(),
        datestamp: datestamp::parse_seconds("2004-06-01T08:30:00Z").unwrap(),
        media_type: media_type.into(),
        size_bytes: content.len() as u64,
        digest: hex::encode(Sha256::digest(content)),
        shadowed: false,
    }
}

/// Structural check mirroring oai_dc.xsd: an `oai_dc:dc` root whose children
/// are any of the fifteen unqualified DC elements with simple text content.
fn validate_oai_dc(xml: &str) -> Result<(), String> {
    const ELEMENTS: [&str; 15] = [
        "title", "creator", "subject", "description", "publisher", "contributor", "date",
        "type", "format", "identifier", "source", "language", "relation", "coverage", "rights",
    ];
    let mut reader = NsReader::from_str(xml);
    let mut depth = 0;
    let mut children = 0;
    loop {
        let (ns, event) = reader.read_resolved_event().map_err(|e| e.to_string())?;
        let ns = match ns {
            ResolveResult::Bound(ns) => Some(String::from_utf8_lossy(ns.as_ref()).into_owned()),
            _ => None,
        };
        match event {
            Event::Start(e) | Event::Empty(e) if depth == 0 => {
                if e.local_name().as_ref() != b"dc" || ns.as_deref() != Some(OAI_DC_NS) {
                    return Err("root is not oai_dc:dc".into());
                }
                depth = 1;
            }
            Event::Start(e) if depth == 1 => {
                let local = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if ns.as_deref() != Some(DC_NS) || !ELEMENTS.contains(&local.as_str()) {
                    return Err(format!("unexpected child {local}"));
                }
                for a in e.attributes() {
                    let a = a.map_err(|e| e.to_string())?;
                    if a.key.as_ref() != b"xml:lang" {
                        return Err("DC elements carry only xml:lang".into());
                    }
                }
                children += 1;
                depth = 2;
            }
            Event::Start(_) | Event::Empty(_) if depth >= 2 => {
                return Err("DC elements have simple content".into())
            }
            Event::End(_) => depth -= 1,
            Event::Text(t) if depth == 1 && !t.unescape().unwrap_or_default().trim().is_empty() => {
                return Err("mixed content in oai_dc:dc".into())
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if depth != 0 || children == 0 {
        return Err("truncated or empty".into());
    }
    Ok(())
}

#[test]
fn dc_validates_against_schema_shape() {
    for mt in ["text/html", "application/octet-stream", "image/svg+xml"] {
        let xml = encode_dc(&record_for(b"abc", mt));
        validate_oai_dc(&xml).unwrap();
        assert!(xml.contains("<dc:identifier>http://example.org/dir/file%20name.bin</dc:identifier>"));
        assert!(xml.contains("<dc:date>2004-06-01T08:30:00Z</dc:date>"));
        assert!(xml.contains(&format!("<dc:format>{mt}</dc:format>")));
    }
}

#[test]
fn dc_validator_rejects_bad_shapes() {
    let bad = [
        "<dc/>",
        r#"<oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/"><dc:colour>red</dc:colour></oai_dc:dc>"#,
        r#"<oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/"><dc:title><b>x</b></dc:title></oai_dc:dc>"#,
    ];
    for xml in bad {
        assert!(validate_oai_dc(xml).is_err(), "{xml}");
    }
}

#[test]
fn http_header_round_trip() {
    let rec = record_for(b"hello", "text/plain");
    let block = decode_http_header(encode_http_header(&rec).as_bytes()).unwrap();
    assert_eq!(block.content_type, "text/plain");
    assert_eq!(block.content_length, 5);
    assert_eq!(block.last_modified, rec.datestamp);
    assert_eq!(block.server, oaifs_core::SERVER_TOKEN);
    let expected = base64::engine::general_purpose::STANDARD.encode(Sha256::digest(b"hello"));
    assert_eq!(block.digest_header, Some(format!("SHA-256={expected}")));
}

#[test]
fn single_byte_values_round_trip() {
    for b in 0..=255u8 {
        let content = vec![b; (b as usize % 5) + 1];
        let rec = record_for(&content, "application/octet-stream");
        let doc = decode_didl(encode_didl(&rec, &content, 1 << 20).unwrap().as_bytes()).unwrap();
        assert_eq!(doc.by_value.as_deref(), Some(&content[..]));
    }
}

#[test]
fn empty_file_round_trips() {
    let rec = record_for(b"", "text/plain");
    let doc = decode_didl(encode_didl(&rec, b"", 0).unwrap().as_bytes()).unwrap();
    assert_eq!(doc.by_value.as_deref(), Some(&b""[..]));
}

#[test]
fn over_threshold_is_by_reference() {
    let content = vec![7u8; 2049];
    let rec = record_for(&content, "image/png");
    let xml = encode_didl(&rec, &content, 2048).unwrap();
    assert_eq!(xml, encode_didl_by_reference(&rec));
    let doc = decode_didl(xml.as_bytes()).unwrap();
    assert_eq!(doc.by_value, None);
    assert_eq!(doc.by_ref, rec.url);
    assert_eq!(doc.identifier, rec.url);
    assert_eq!(doc.media_type, "image/png");
}

#[test]
fn mismatched_content_refused() {
    let rec = record_for(b"original", "text/plain");
    assert!(matches!(
        encode_didl(&rec, b"changed!", 1024),
        Err(CodecError::Integrity(_))
    ));
}

fn base64_span(xml: &str) -> std::ops::Range<usize> {
    let open = xml.find(r#"encoding="base64">"#).unwrap() + r#"encoding="base64">"#.len();
    let close = open + xml[open..].find('<').unwrap();
    open..close
}

#[test]
fn truncated_or_broken_structure_rejected() {
    let content = b"some bytes".to_vec();
    let rec = record_for(&content, "text/plain");
    let xml = encode_didl(&rec, &content, 1024).unwrap();
    assert!(decode_didl(&xml.as_bytes()[..xml.len() / 2]).is_err());
    let no_item = xml.replace("didl:Item", "didl:Other");
    assert!(matches!(decode_didl(no_item.as_bytes()), Err(CodecError::Structure(_))));
    let wrong_ref = xml.replacen(r#"ref="http://example.org"#, r#"ref="http://elsewhere.org"#, 1);
    assert!(decode_didl(wrong_ref.as_bytes()).is_err());
    let wrong_len = xml.replace(">10</hh:Content-Length>", ">11</hh:Content-Length>");
    assert_ne!(wrong_len, xml);
    assert!(matches!(decode_didl(wrong_len.as_bytes()), Err(CodecError::Integrity(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn didl_round_trip(content in proptest::collection::vec(any::<u8>(), 0..600)) {
        let rec = record_for(&content, "application/octet-stream");
        let xml = encode_didl(&rec, &content, 1 << 20).unwrap();
        let doc = decode_didl(xml.as_bytes()).unwrap();
        prop_assert_eq!(doc.by_value, Some(content.clone()));
        prop_assert_eq!(&doc.identifier, &rec.url);
        prop_assert_eq!(&doc.by_ref, &rec.url);
        prop_assert_eq!(doc.headers.content_length, content.len() as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn any_base64_mutation_detected(
        content in proptest::collection::vec(any::<u8>(), 1..200),
        pos_seed in any::<usize>(),
        replacement in 0..BASE64_ALPHABET.len(),
    ) {
        let rec = record_for(&content, "application/octet-stream");
        let xml = encode_didl(&rec, &content, 1 << 20).unwrap();
        let span = base64_span(&xml);
        let pos = span.start + pos_seed % span.len();
        let mut bytes = xml.into_bytes();
        let new = BASE64_ALPHABET[replacement];
        prop_assume!(bytes[pos] != new);
        bytes[pos] = new;
        prop_assert!(decode_didl(&bytes).is_err());
    }
}
