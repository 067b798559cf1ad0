//! Parser for rs3 XML tree files.
//!
//! An rs3 file is a flat list of `<segment>` and `<group>` units, each
//! pointing at a parent unit with a relation name. The header's `<rel>`
//! table says which relations are mono-nuclear (`rst`) and which are
//! multi-nuclear (`multinuc`); `span` is the reserved structural link from a
//! span group to its nucleus. Satellites point at their nucleus unit; the
//! tree node that actually dominates both is the nucleus' span group, which
//! some files leave implicit, so a group is synthesized when missing.

use std::collections::HashMap;

use quick_xml::events::attributes::Attributes;
use quick_xml::events::Event;
use quick_xml::Reader;

use super::{IngestError, NucKind, RawLeaf, RawNode, RawRole, RelationTypeTable, Rs3Parse};

/// Options controlling rs3 ingestion repairs.
#[derive(Clone, Copy, Default, Debug)]
pub struct Rs3Options {
    /// Drop the first segment: some corpora store the document title there,
    /// outside the tree proper.
    pub drop_first_segment: bool,
}

#[derive(Clone, Debug)]
struct Unit {
    id: String,
    parent: Option<String>,
    relname: Option<String>,
    /// `Some(text)` for segments, `None` for groups.
    text: Option<String>,
    /// Groups only: `<group type="multinuc">`.
    multinuc: bool,
    /// Document-order key; segments get their file position, groups a
    /// sentinel (their order is defined by the segments they cover).
    order: usize,
}

impl Unit {
    fn is_segment(&self) -> bool {
        self.text.is_some()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum EdgeKind {
    /// `relname="span"`: nucleus child of a span group.
    SpanLink,
    /// Multi-nuclear relation: nucleus child of a multinuc group.
    Multi,
    /// Mono-nuclear relation: satellite pointing at its nucleus.
    Mono,
}

fn edge_kind(relname: &str, table: &RelationTypeTable) -> Result<EdgeKind, IngestError> {
    if relname.eq_ignore_ascii_case("span") {
        return Ok(EdgeKind::SpanLink);
    }
    match table.kind(relname) {
        Some(NucKind::MonoNuclear) => Ok(EdgeKind::Mono),
        Some(NucKind::MultiNuclear) => Ok(EdgeKind::Multi),
        None => Err(IngestError::UnknownRelationName {
            name: relname.to_string(),
        }),
    }
}

/// Parse an rs3 file into a raw tree plus its relation-type table. Roles are
/// left unresolved except for `span` links; run [`super::derive_nuclearity`],
/// [`super::lift_relations`] and [`super::normalize_raw`] afterwards.
pub fn parse_rs3(input: &str, options: Rs3Options) -> Result<Rs3Parse, IngestError> {
    let (table, mut units) = read_xml(input)?;
    let mut warnings = Vec::new();

    if options.drop_first_segment {
        drop_title(&mut units, &mut warnings)?;
    }
    remove_useless_units(&mut units, &mut warnings)?;

    // Any parent pointer must name a surviving unit; cleanup never removes a
    // unit that someone still points at, so a miss means a malformed file.
    let index: HashMap<String, usize> = units
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.clone(), i))
        .collect();
    for unit in &units {
        if let Some(parent) = &unit.parent {
            if !index.contains_key(parent) {
                return Err(IngestError::DanglingParent {
                    id: unit.id.clone(),
                    parent: parent.clone(),
                });
            }
        }
        if unit.parent.is_some() && unit.relname.is_none() {
            return Err(IngestError::MissingRelation {
                unit: format!("unit {}", unit.id),
            });
        }
        if let Some(text) = &unit.text {
            if text.trim().is_empty() {
                return Err(IngestError::EmptyLinkedSegment {
                    id: unit.id.clone(),
                });
            }
        }
    }

    synthesize_span_groups(&mut units, &table)?;
    check_edges(&units, &table)?;

    let mut roots: Vec<&Unit> = units.iter().filter(|u| u.parent.is_none()).collect();
    roots.sort_by(|a, b| a.id.cmp(&b.id));
    let root_id = match roots.as_slice() {
        [] => {
            return Err(IngestError::Syntax {
                at: "document".into(),
                msg: "no root unit (parent cycle?)".into(),
            })
        }
        [root] => root.id.clone(),
        several => {
            return Err(IngestError::MultipleRoots {
                ids: several.iter().map(|u| u.id.clone()).collect(),
            })
        }
    };

    let builder = Builder::new(&units, &table)?;
    let root = builder.build_root(&root_id)?;
    Ok(Rs3Parse {
        root,
        table,
        warnings,
    })
}

fn drop_title(units: &mut Vec<Unit>, warnings: &mut Vec<String>) -> Result<(), IngestError> {
    let Some(pos) = units
        .iter()
        .enumerate()
        .filter(|(_, u)| u.is_segment())
        .min_by_key(|(_, u)| u.order)
        .map(|(i, _)| i)
    else {
        return Ok(());
    };
    let title_id = units[pos].id.clone();
    let linked = units[pos].parent.is_some()
        || units.iter().any(|u| u.parent.as_deref() == Some(&title_id));
    if linked {
        return Err(IngestError::TitleLinked { id: title_id });
    }
    units.remove(pos);
    warnings.push(format!("dropped first segment `{title_id}` (title)"));
    Ok(())
}

/// Remove units that cannot be part of the tree: unlinked units, and empty
/// segments nothing depends on. Runs to a fixed point because removing a
/// satellite can leave its target unreferenced.
fn remove_useless_units(units: &mut Vec<Unit>, warnings: &mut Vec<String>) -> Result<(), IngestError> {
    if units.len() == 1 && units[0].is_segment() && units[0].parent.is_none() {
        // A single free-standing segment is the whole (one-EDU) tree.
        return Ok(());
    }
    loop {
        let mut incoming: HashMap<&str, usize> = HashMap::new();
        for unit in units.iter() {
            if let Some(parent) = &unit.parent {
                *incoming.entry(parent.as_str()).or_default() += 1;
            }
        }
        let removable: Vec<usize> = units
            .iter()
            .enumerate()
            .filter(|(_, u)| {
                let unreferenced = incoming.get(u.id.as_str()).copied().unwrap_or(0) == 0;
                let unlinked = unreferenced && u.parent.is_none();
                let empty_leaf = unreferenced
                    && u.text.as_deref().is_some_and(|t| t.trim().is_empty());
                unlinked || empty_leaf
            })
            .map(|(i, _)| i)
            .collect();
        if removable.is_empty() || removable.len() == units.len() {
            if removable.len() == units.len() {
                return Err(IngestError::MultipleRoots {
                    ids: units.iter().map(|u| u.id.clone()).collect(),
                });
            }
            return Ok(());
        }
        for &i in removable.iter().rev() {
            warnings.push(format!("removed unlinked unit `{}`", units[i].id));
            units.remove(i);
        }
    }
}

/// Give every satellite target a span group to attach under. A nucleus with
/// satellites normally spans a group (`relname="span"`); when that group is
/// missing, insert one that takes over the nucleus' own parent edge.
fn synthesize_span_groups(
    units: &mut Vec<Unit>,
    table: &RelationTypeTable,
) -> Result<(), IngestError> {
    let mut targets: Vec<String> = Vec::new();
    for unit in units.iter() {
        if let (Some(parent), Some(relname)) = (&unit.parent, &unit.relname) {
            if edge_kind(relname, table)? == EdgeKind::Mono && !targets.contains(parent) {
                targets.push(parent.clone());
            }
        }
    }
    for target_id in targets {
        let Some(pos) = units.iter().position(|u| u.id == target_id) else {
            continue; // dangling parents were rejected earlier
        };
        let has_span_parent = units[pos]
            .relname
            .as_deref()
            .is_some_and(|r| r.eq_ignore_ascii_case("span"));
        if has_span_parent {
            continue;
        }
        let mut group_id = format!("{target_id}*");
        while units.iter().any(|u| u.id == group_id) {
            group_id.push('*');
        }
        let group = Unit {
            id: group_id.clone(),
            parent: units[pos].parent.take(),
            relname: units[pos].relname.take(),
            text: None,
            multinuc: false,
            order: usize::MAX,
        };
        units[pos].parent = Some(group_id);
        units[pos].relname = Some("span".to_string());
        units.push(group);
    }
    Ok(())
}

fn check_edges(units: &[Unit], table: &RelationTypeTable) -> Result<(), IngestError> {
    let index: HashMap<&str, &Unit> = units.iter().map(|u| (u.id.as_str(), u)).collect();
    for unit in units {
        let (Some(parent_id), Some(relname)) = (&unit.parent, &unit.relname) else {
            continue;
        };
        let parent = index[parent_id.as_str()];
        match edge_kind(relname, table)? {
            EdgeKind::SpanLink => {
                if parent.is_segment() || parent.multinuc {
                    return Err(IngestError::Syntax {
                        at: format!("unit {}", unit.id),
                        msg: format!("span link points at non-span unit `{parent_id}`"),
                    });
                }
            }
            EdgeKind::Multi => {
                if !parent.multinuc {
                    return Err(IngestError::Syntax {
                        at: format!("unit {}", unit.id),
                        msg: format!(
                            "multi-nuclear relation `{relname}` points at non-multinuc unit `{parent_id}`"
                        ),
                    });
                }
            }
            EdgeKind::Mono => {}
        }
    }
    Ok(())
}

struct Builder<'a> {
    units: &'a [Unit],
    index: HashMap<&'a str, usize>,
    /// Structural children per unit index: span child, multinuc children,
    /// satellites of the span child (attached at the group level).
    span_child: HashMap<usize, Vec<usize>>,
    multi_children: HashMap<usize, Vec<usize>>,
    sat_children: HashMap<usize, Vec<usize>>,
}

impl<'a> Builder<'a> {
    fn new(units: &'a [Unit], table: &RelationTypeTable) -> Result<Self, IngestError> {
        let index: HashMap<&str, usize> = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.as_str(), i))
            .collect();
        let mut builder = Builder {
            units,
            index,
            span_child: HashMap::new(),
            multi_children: HashMap::new(),
            sat_children: HashMap::new(),
        };
        for (child_idx, unit) in units.iter().enumerate() {
            let (Some(parent_id), Some(relname)) = (&unit.parent, &unit.relname) else {
                continue;
            };
            let parent_idx = builder.index[parent_id.as_str()];
            match edge_kind(relname, table)? {
                EdgeKind::SpanLink => {
                    builder.span_child.entry(parent_idx).or_default().push(child_idx)
                }
                EdgeKind::Multi => builder
                    .multi_children
                    .entry(parent_idx)
                    .or_default()
                    .push(child_idx),
                EdgeKind::Mono => {
                    // Satellites of X structurally live under X's span group.
                    let target = &units[parent_idx];
                    let host_id = target.parent.as_deref().expect("span group was synthesized");
                    let host_idx = builder.index[host_id];
                    builder.sat_children.entry(host_idx).or_default().push(child_idx);
                }
            }
        }
        Ok(builder)
    }

    fn build_root(&self, root_id: &str) -> Result<RawNode, IngestError> {
        let root_idx = self.index[root_id];
        let mut visited = vec![false; self.units.len()];
        let root = self.build(root_idx, RawRole::Unset, None, &mut visited)?;
        let unreachable: Vec<&str> = self
            .units
            .iter()
            .enumerate()
            .filter(|(i, _)| !visited[*i])
            .map(|(_, u)| u.id.as_str())
            .collect();
        if !unreachable.is_empty() {
            return Err(IngestError::Syntax {
                at: "document".into(),
                msg: format!("units unreachable from root: {}", unreachable.join(", ")),
            });
        }
        Ok(root)
    }

    fn build(
        &self,
        idx: usize,
        role: RawRole,
        relation: Option<String>,
        visited: &mut Vec<bool>,
    ) -> Result<RawNode, IngestError> {
        visited[idx] = true;
        let unit = &self.units[idx];
        if let Some(text) = &unit.text {
            return Ok(RawNode::leaf(
                role,
                relation,
                RawLeaf {
                    source_id: unit.id.clone(),
                    order: unit.order,
                    edu: usize::MAX,
                    text: text.clone(),
                },
            ));
        }

        let mut children: Vec<RawNode> = Vec::new();
        if unit.multinuc {
            for &child in self.multi_children.get(&idx).into_iter().flatten() {
                let relname = self.units[child].relname.clone();
                children.push(self.build(child, RawRole::Unset, relname, visited)?);
            }
        } else {
            let spans = self.span_child.get(&idx).map_or(&[][..], Vec::as_slice);
            if spans.len() > 1 {
                return Err(IngestError::SpanChildren {
                    id: unit.id.clone(),
                    count: spans.len(),
                });
            }
            let sats = self.sat_children.get(&idx).map_or(&[][..], Vec::as_slice);
            if let [nucleus] = spans {
                if sats.is_empty() {
                    // Redundant group: pass our own edge role through.
                    return self.build(*nucleus, role, relation, visited);
                }
                children.push(self.build(*nucleus, RawRole::Span, None, visited)?);
            }
            for &sat in sats {
                let relname = self.units[sat].relname.clone();
                children.push(self.build(sat, RawRole::Unset, relname, visited)?);
            }
        }

        match children.len() {
            0 => Err(IngestError::EmptyGroup {
                id: unit.id.clone(),
            }),
            1 => {
                // Single-child group: collapse, keeping our edge annotation.
                let mut only = children.pop().expect("one child");
                only.role = role;
                only.relation = relation;
                Ok(only)
            }
            _ => Ok(RawNode::internal(role, relation, children)),
        }
    }
}

fn read_xml(input: &str) -> Result<(RelationTypeTable, Vec<Unit>), IngestError> {
    let mut reader = Reader::from_str(input);
    let mut table = RelationTypeTable::new();
    let mut units: Vec<Unit> = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut segment_count = 0usize;
    // Index of the segment whose text is being accumulated.
    let mut open_segment: Option<usize> = None;

    loop {
        let event = reader.read_event().map_err(|e| IngestError::Syntax {
            at: format!("byte {}", reader.buffer_position()),
            msg: e.to_string(),
        })?;
        match event {
            Event::Start(e) | Event::Empty(e) => {
                match e.name().as_ref() {
                    b"rel" => {
                        let attrs = read_attrs(&mut e.attributes(), &reader)?;
                        let rel_name = require_attr(&attrs, "name", "rel")?;
                        let rel_type = require_attr(&attrs, "type", "rel")?;
                        table.insert(&rel_name, &rel_type)?;
                    }
                    b"segment" => {
                        segment_count += 1;
                        let attrs = read_attrs(&mut e.attributes(), &reader)?;
                        let id = require_attr(&attrs, "id", "segment")?;
                        if seen.insert(id.clone(), ()).is_some() {
                            return Err(IngestError::Syntax {
                                at: format!("segment {id}"),
                                msg: "duplicate unit id".into(),
                            });
                        }
                        units.push(Unit {
                            id,
                            parent: attrs.get("parent").cloned(),
                            relname: attrs.get("relname").cloned(),
                            text: Some(String::new()),
                            multinuc: false,
                            order: segment_count,
                        });
                        open_segment = Some(units.len() - 1);
                    }
                    b"group" => {
                        let attrs = read_attrs(&mut e.attributes(), &reader)?;
                        let id = require_attr(&attrs, "id", "group")?;
                        if seen.insert(id.clone(), ()).is_some() {
                            return Err(IngestError::Syntax {
                                at: format!("group {id}"),
                                msg: "duplicate unit id".into(),
                            });
                        }
                        let group_type = attrs.get("type").cloned().unwrap_or_else(|| "span".into());
                        units.push(Unit {
                            id,
                            parent: attrs.get("parent").cloned(),
                            relname: attrs.get("relname").cloned(),
                            text: None,
                            multinuc: group_type.eq_ignore_ascii_case("multinuc"),
                            order: usize::MAX,
                        });
                    }
                    _ => {}
                }
            }
            Event::End(e) => {
                if e.name().as_ref() == b"segment" {
                    open_segment = None;
                }
            }
            Event::Text(t) => {
                if let Some(i) = open_segment {
                    let piece = t.decode().map_err(|e| IngestError::Syntax {
                        at: format!("byte {}", reader.buffer_position()),
                        msg: e.to_string(),
                    })?;
                    units[i].text.as_mut().expect("segment").push_str(&piece);
                }
            }
            Event::CData(t) => {
                if let Some(i) = open_segment {
                    let piece = t.decode().map_err(|e| IngestError::Syntax {
                        at: format!("byte {}", reader.buffer_position()),
                        msg: e.to_string(),
                    })?;
                    units[i].text.as_mut().expect("segment").push_str(&piece);
                }
            }
            Event::GeneralRef(r) => {
                if let Some(i) = open_segment {
                    let name = r.decode().map_err(|e| IngestError::Syntax {
                        at: format!("byte {}", reader.buffer_position()),
                        msg: e.to_string(),
                    })?;
                    let resolved =
                        resolve_entity(&name).ok_or_else(|| IngestError::Syntax {
                            at: format!("byte {}", reader.buffer_position()),
                            msg: format!("unknown entity reference `&{name};`"),
                        })?;
                    units[i].text.as_mut().expect("segment").push_str(&resolved);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    for unit in &mut units {
        if let Some(text) = &mut unit.text {
            *text = text.trim().to_string();
        }
    }
    Ok((table, units))
}

fn resolve_entity(name: &str) -> Option<String> {
    let known = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        _ => {
            let digits = name.strip_prefix('#')?;
            let code = match digits.strip_prefix('x').or_else(|| digits.strip_prefix('X')) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => digits.parse().ok()?,
            };
            char::from_u32(code)?
        }
    };
    Some(known.to_string())
}

fn read_attrs(
    attrs: &mut Attributes,
    reader: &Reader<&[u8]>,
) -> Result<HashMap<String, String>, IngestError> {
    let mut out = HashMap::new();
    for attr in attrs {
        let attr = attr.map_err(|e| IngestError::Syntax {
            at: format!("byte {}", reader.buffer_position()),
            msg: e.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).to_string();
        let value = attr
            .normalized_value(quick_xml::XmlVersion::Implicit1_0)
            .map_err(|e| IngestError::Syntax {
            at: format!("byte {}", reader.buffer_position()),
            msg: e.to_string(),
        })?;
        out.insert(key, value.to_string());
    }
    Ok(out)
}

fn require_attr(
    attrs: &HashMap<String, String>,
    key: &str,
    element: &str,
) -> Result<String, IngestError> {
    attrs.get(key).cloned().ok_or_else(|| IngestError::Syntax {
        at: format!("<{element}>"),
        msg: format!("missing `{key}` attribute"),
    })
}
