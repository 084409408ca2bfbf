//! PNML (place/transition net type) import and export. Timing lives in a
//! JSON sidecar next to the PNML file (`<file>.timing.json`).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesDecl, BytesText, Event};
use quick_xml::{Reader, Writer};
use thiserror::Error;

use crate::composition::TimedNet;
use crate::net::{NetError, PetriNet};
use crate::timing::TimingSpec;

const PNML_NS: &str = "http://www.pnml.org/version-2009/grammar/pnml";
const PTNET: &str = "http://www.pnml.org/version-2009/grammar/ptnet";
const TOOL: &str = "petriflow";

#[derive(Debug, Error)]
pub enum PnmlError {
    #[error("xml: {0}")]
    Xml(#[from] quick_xml::Error),
    #[error("malformed PNML: {0}")]
    Malformed(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("timing sidecar: {0}")]
    Timing(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, PnmlError>;

fn text_child(w: &mut Writer<Vec<u8>>, tag: &str, text: &str) -> std::result::Result<(), quick_xml::Error> {
    w.create_element(tag).write_inner_content::<_, quick_xml::Error>(|w| {
        w.create_element("text").write_text_content(BytesText::new(text))?;
        Ok(())
    })?;
    Ok(())
}

/// Serializes the net; transition labels go into a tool-specific block.
pub fn to_pnml(net: &PetriNet) -> String {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    let res: std::result::Result<(), quick_xml::Error> = (|| {
        w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
        w.create_element("pnml").with_attribute(("xmlns", PNML_NS)).write_inner_content::<_, quick_xml::Error>(|w| {
            w.create_element("net")
                .with_attributes([("id", "net"), ("type", PTNET)])
                .write_inner_content::<_, quick_xml::Error>(|w| {
                    w.create_element("page").with_attribute(("id", "page")).write_inner_content::<_, quick_xml::Error>(|w| {
                        for (p, name) in net.places().iter().enumerate() {
                            let id = format!("p{p}");
                            w.create_element("place").with_attribute(("id", id.as_str())).write_inner_content::<_, quick_xml::Error>(|w| {
                                text_child(w, "name", name)?;
                                if net.m0(p) > 0 {
                                    text_child(w, "initialMarking", &net.m0(p).to_string())?;
                                }
                                Ok(())
                            })?;
                        }
                        for (t, name) in net.transitions().iter().enumerate() {
                            let id = format!("t{t}");
                            w.create_element("transition")
                                .with_attribute(("id", id.as_str()))
                                .write_inner_content::<_, quick_xml::Error>(|w| {
                                    text_child(w, "name", name)?;
                                    if let Some(label) = net.label(name) {
                                        w.create_element("toolspecific")
                                            .with_attributes([("tool", TOOL), ("version", "1")])
                                            .write_inner_content::<_, quick_xml::Error>(|w| {
                                                w.create_element("label").write_text_content(BytesText::new(label))?;
                                                Ok(())
                                            })?;
                                    }
                                    Ok(())
                                })?;
                        }
                        let mut k = 0usize;
                        let mut arc = |w: &mut Writer<Vec<u8>>, src: String, dst: String, weight: u32| {
                            let id = format!("a{k}");
                            k += 1;
                            w.create_element("arc")
                                .with_attributes([("id", id.as_str()), ("source", src.as_str()), ("target", dst.as_str())])
                                .write_inner_content::<_, quick_xml::Error>(|w| {
                                    if weight != 1 {
                                        text_child(w, "inscription", &weight.to_string())?;
                                    }
                                    Ok(())
                                })?;
                            Ok::<(), quick_xml::Error>(())
                        };
                        for t in 0..net.num_transitions() {
                            for p in 0..net.num_places() {
                                if net.pre(p, t) > 0 {
                                    arc(w, format!("p{p}"), format!("t{t}"), net.pre(p, t))?;
                                }
                            }
                            for p in 0..net.num_places() {
                                if net.post(p, t) > 0 {
                                    arc(w, format!("t{t}"), format!("p{p}"), net.post(p, t))?;
                                }
                            }
                        }
                        Ok(())
                    })?;
                    Ok(())
                })?;
            Ok(())
        })?;
        Ok(())
    })();
    res.expect("writing to a Vec cannot fail");
    let mut s = String::from_utf8(w.into_inner()).expect("utf-8");
    s.push('\n');
    s
}

#[derive(Default)]
struct Element {
    kind: String,
    id: String,
    name: Option<String>,
    value: Option<String>,
    label: Option<String>,
    source: String,
    target: String,
}

fn attr(e: &quick_xml::events::BytesStart<'_>, key: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|e| PnmlError::Malformed(e.to_string()))?;
        if a.key.local_name().as_ref() == key.as_bytes() {
            return Ok(Some(a.unescape_value()?.into_owned()));
        }
    }
    Ok(None)
}

fn parse_count(s: &str, what: &str) -> Result<u32> {
    s.trim()
        .parse()
        .map_err(|_| PnmlError::Malformed(format!("{what} `{}` is not a nonnegative integer", s.trim())))
}

/// Parses a place/transition PNML document. Elements without a `<name>`
/// are named by their id; pages are flattened.
pub fn from_pnml(xml: &str) -> Result<PetriNet> {
    let mut reader = Reader::from_str(xml);
    reader.trim_text(true);
    let mut stack: Vec<String> = Vec::new();
    let mut current: Option<Element> = None;
    let mut places = Vec::new();
    let mut transitions = Vec::new();
    let mut arcs = Vec::new();
    let mut saw_pnml = false;
    loop {
        let ev = reader.read_event()?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let tag = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if tag == "pnml" {
                    saw_pnml = true;
                }
                if matches!(tag.as_str(), "place" | "transition" | "arc") && current.is_none() {
                    let id = attr(e, "id")?.ok_or_else(|| PnmlError::Malformed(format!("<{tag}> without id")))?;
                    let mut el = Element {
                        kind: tag.clone(),
                        id,
                        ..Element::default()
                    };
                    if tag == "arc" {
                        el.source = attr(e, "source")?.ok_or_else(|| PnmlError::Malformed("arc without source".into()))?;
                        el.target = attr(e, "target")?.ok_or_else(|| PnmlError::Malformed("arc without target".into()))?;
                    }
                    current = Some(el);
                }
                if matches!(ev, Event::Start(_)) {
                    stack.push(tag);
                } else if matches!(tag.as_str(), "place" | "transition" | "arc") {
                    finish(&mut current, &mut places, &mut transitions, &mut arcs);
                }
            }
            Event::Text(t) => {
                let text = t.unescape()?.into_owned();
                if let Some(el) = current.as_mut() {
                    let n = stack.len();
                    let parent = if n >= 2 { stack[n - 2].as_str() } else { "" };
                    match (parent, stack.last().map(String::as_str)) {
                        ("name", Some("text")) => el.name = Some(text),
                        ("initialMarking" | "inscription", Some("text")) => el.value = Some(text),
                        ("toolspecific", Some("label")) => el.label = Some(text),
                        _ => {}
                    }
                }
            }
            Event::End(e) => {
                let tag = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                stack.pop();
                if matches!(tag.as_str(), "place" | "transition" | "arc") && stack.iter().all(|s| !matches!(s.as_str(), "place" | "transition" | "arc")) {
                    finish(&mut current, &mut places, &mut transitions, &mut arcs);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_pnml {
        return Err(PnmlError::Malformed("missing <pnml> root".into()));
    }
    let mut net = PetriNet::new();
    let mut ids: HashMap<String, String> = HashMap::new();
    for el in &places {
        let name = el.name.clone().unwrap_or_else(|| el.id.clone());
        let m0 = el.value.as_deref().map(|v| parse_count(v, "initial marking")).transpose()?.unwrap_or(0);
        net.add_place(&name, m0)?;
        ids.insert(el.id.clone(), name);
    }
    for el in &transitions {
        let name = el.name.clone().unwrap_or_else(|| el.id.clone());
        net.add_transition(&name)?;
        if let Some(l) = &el.label {
            net.set_label(&name, l.clone())?;
        }
        if ids.insert(el.id.clone(), name).is_some() {
            return Err(PnmlError::Malformed(format!("duplicate id `{}`", el.id)));
        }
    }
    for el in &arcs {
        let lookup = |id: &str| {
            ids.get(id)
                .cloned()
                .ok_or_else(|| PnmlError::Malformed(format!("arc `{}` references unknown node `{id}`", el.id)))
        };
        let (src, dst) = (lookup(&el.source)?, lookup(&el.target)?);
        let w = el.value.as_deref().map(|v| parse_count(v, "inscription")).transpose()?.unwrap_or(1);
        if w == 0 {
            return Err(PnmlError::Malformed(format!("arc `{}` has weight 0", el.id)));
        }
        let is_place = |n: &str| net.place_index(n).is_some();
        let (sp, dp) = (is_place(&src), is_place(&dst));
        if sp == dp {
            return Err(PnmlError::Malformed(format!("arc `{}` must join a place and a transition", el.id)));
        }
        let (p, t) = if sp { (&src, &dst) } else { (&dst, &src) };
        let (pi, ti) = (net.place(p)?, net.transition(t)?);
        if sp {
            let w = net.pre(pi, ti) + w;
            net.set_pre(pi, ti, w);
        } else {
            let w = net.post(pi, ti) + w;
            net.set_post(pi, ti, w);
        }
    }
    Ok(net)
}

fn finish(current: &mut Option<Element>, places: &mut Vec<Element>, transitions: &mut Vec<Element>, arcs: &mut Vec<Element>) {
    if let Some(el) = current.take() {
        match el.kind.as_str() {
            "place" => places.push(el),
            "transition" => transitions.push(el),
            _ => arcs.push(el),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".timing.json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PnmlError + '_ {
    move |source| PnmlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the PNML file and, if any transition is timed, its sidecar.
pub fn write_files(net: &TimedNet, path: &Path) -> Result<()> {
    std::fs::write(path, to_pnml(&net.net)).map_err(io_err(path))?;
    if !net.timing.is_empty() {
        let side = sidecar_path(path);
        std::fs::write(&side, net.timing.to_json()).map_err(io_err(&side))?;
    }
    Ok(())
}

/// Reads a PNML file and its sidecar when present.
pub fn read_files(path: &Path) -> Result<TimedNet> {
    let xml = std::fs::read_to_string(path).map_err(io_err(path))?;
    let net = from_pnml(&xml)?;
    let side = sidecar_path(path);
    let timing = if side.exists() {
        TimingSpec::from_json(&std::fs::read_to_string(&side).map_err(io_err(&side))?)?
    } else {
        TimingSpec::new()
    };
    Ok(TimedNet { net, timing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::make_dtp;

    #[test]
    fn round_trip_preserves_everything() {
        let mut net = make_dtp(3).unwrap().net;
        net.set_label("Move1", "x < 3 & \"q\"").unwrap();
        let p = net.place("Capacity2").unwrap();
        let t = net.transition("Move2").unwrap();
        net.set_pre(p, t, 4);
        let back = from_pnml(&to_pnml(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn reads_foreign_document() {
        let xml = r#"<?xml version="1.0"?>
        <pnml><net id="n1" type="ptnet"><page id="pg">
          <place id="a"><initialMarking><text>2</text></initialMarking></place>
          <transition id="t"><name><text>fire</text></name></transition>
          <arc id="x" source="a" target="t"><inscription><text>2</text></inscription></arc>
          <arc id="y" source="t" target="a"/>
        </page></net></pnml>"#;
        let net = from_pnml(xml).unwrap();
        assert_eq!(net.places(), &["a".to_string()]);
        assert_eq!(net.m0(0), 2);
        assert_eq!(net.pre(0, 0), 2);
        assert_eq!(net.post(0, 0), 1);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(from_pnml("<foo/>").is_err());
        assert!(from_pnml("<pnml><net id='n'><arc id='a' source='x' target='y'/></net></pnml>").is_err());
        assert!(from_pnml("<pnml><net id='n'><place id='p'><initialMarking><text>-1</text></initialMarking></place></net></pnml>").is_err());
        assert!(from_pnml("<pnml><net").is_err());
    }

    #[test]
    fn files_with_sidecar() {
        let dir = std::env::temp_dir().join(format!("pf-pnml-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dtp.pnml");
        let mut net: TimedNet = make_dtp(1).unwrap().net.into();
        net.timing.set("EndTransmission", crate::timing::Timing::exponential(0.5));
        write_files(&net, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(read_files(&path).unwrap(), net);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
