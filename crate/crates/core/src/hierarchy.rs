//! Topic hierarchy: a rooted forest of named, described nodes whose leaves
//! are topic names. Hierarchies are immutable values; every operation
//! returns a new one.
//!
//! Validation covers the structural invariants (depth bound, unique leaf
//! placement, sibling name uniqueness, and the self-named-child redundancy
//! defect). `prune_redundant` merges parent/child pairs that share a
//! case-folded name until none remain, preserving the leaf-topic set.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("invalid hierarchy: {}", format_violations(.0))]
    InvalidHierarchy(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(Violation::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyHierarchy,
    EmptyNodeName {
        parent: String,
    },
    RedundantSelfNamedChild {
        parent: String,
    },
    DuplicateLeafPlacement {
        topic: String,
    },
    DepthExceeded {
        node: String,
        depth: u32,
        max_depth: u32,
    },
    DuplicateSiblingName {
        name: String,
        parent: String,
    },
    DuplicateNodeName {
        name: String,
    },
    UnknownParent {
        node: String,
        parent: String,
    },
    CycleDetected {
        path: String,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyHierarchy => write!(f, "empty hierarchy"),
            Violation::EmptyNodeName { parent } => {
                write!(f, "empty node name under {parent}")
            }
            Violation::RedundantSelfNamedChild { parent } => {
                write!(f, "redundant self-named child: {parent}")
            }
            Violation::DuplicateLeafPlacement { topic } => {
                write!(f, "duplicate leaf placement: {topic}")
            }
            Violation::DepthExceeded {
                node,
                depth,
                max_depth,
            } => write!(
                f,
                "node {node} at depth {depth} exceeds max depth {max_depth}"
            ),
            Violation::DuplicateSiblingName { name, parent } => {
                write!(f, "duplicate sibling name: {name} under {parent}")
            }
            Violation::DuplicateNodeName { name } => write!(f, "duplicate node name: {name}"),
            Violation::UnknownParent { node, parent } => {
                write!(f, "unknown parent: {node} references {parent}")
            }
            Violation::CycleDetected { path } => write!(f, "cycle detected: {path}"),
        }
    }
}

/// A node: internal nodes may carry both children and leaf topics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub children: Vec<HierarchyNode>,
    #[serde(default)]
    pub leaf_topics: Vec<String>,
}

impl HierarchyNode {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        HierarchyNode {
            name: name.into(),
            description: description.into(),
            children: Vec::new(),
            leaf_topics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicHierarchy {
    pub roots: Vec<HierarchyNode>,
    pub max_depth: u32,
}

/// Default depth bound; the observed taxonomies fit comfortably within it.
pub const DEFAULT_MAX_DEPTH: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyStats {
    pub topic_count: usize,
    pub level_count: u32,
    pub root_count: usize,
    pub branch_counts: BTreeMap<String, usize>,
}

/// Node-list form used by agent replies and the flat import shape: parents
/// are referenced by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatNode {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub parent: Option<String>,
    #[serde(default)]
    pub leaves: Vec<String>,
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Checks every hierarchy invariant; empty result means valid.
pub fn validate(hierarchy: &TopicHierarchy) -> Vec<Violation> {
    let mut violations = Vec::new();
    if hierarchy.roots.is_empty() {
        violations.push(Violation::EmptyHierarchy);
        return violations;
    }
    let mut leaf_counts: BTreeMap<&str, usize> = BTreeMap::new();
    check_siblings(&hierarchy.roots, "<root>", &mut violations);
    for root in &hierarchy.roots {
        walk(
            root,
            "<root>",
            1,
            hierarchy.max_depth,
            &mut violations,
            &mut leaf_counts,
        );
    }
    for (topic, count) in leaf_counts {
        if count > 1 {
            violations.push(Violation::DuplicateLeafPlacement {
                topic: topic.to_string(),
            });
        }
    }
    violations
}

fn walk<'a>(
    node: &'a HierarchyNode,
    parent: &str,
    depth: u32,
    max_depth: u32,
    violations: &mut Vec<Violation>,
    leaf_counts: &mut BTreeMap<&'a str, usize>,
) {
    if node.name.trim().is_empty() {
        violations.push(Violation::EmptyNodeName {
            parent: parent.to_string(),
        });
    }
    if depth > max_depth {
        violations.push(Violation::DepthExceeded {
            node: node.name.clone(),
            depth,
            max_depth,
        });
    }
    for topic in &node.leaf_topics {
        *leaf_counts.entry(topic).or_default() += 1;
    }
    check_siblings(&node.children, &node.name, violations);
    for child in &node.children {
        if fold(&child.name) == fold(&node.name) {
            violations.push(Violation::RedundantSelfNamedChild {
                parent: node.name.clone(),
            });
        }
        walk(
            child,
            &node.name,
            depth + 1,
            max_depth,
            violations,
            leaf_counts,
        );
    }
}

fn check_siblings(siblings: &[HierarchyNode], parent: &str, violations: &mut Vec<Violation>) {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for node in siblings {
        *seen.entry(fold(&node.name)).or_default() += 1;
    }
    for node in siblings {
        let folded = fold(&node.name);
        if seen.get(&folded) == Some(&0) {
            continue;
        }
        if seen[&folded] > 1 {
            violations.push(Violation::DuplicateSiblingName {
                name: node.name.clone(),
                parent: parent.to_string(),
            });
            seen.insert(folded, 0); // report once per name
        }
    }
}

/// Merges every parent/child pair with case-fold-equal names, repeating
/// until none remain: the child's children and leaf topics are absorbed
/// into the parent and descriptions are concatenated. Sibling name
/// collisions created by a merge are disambiguated with a numeric suffix
/// and reported in the returned notes. The leaf-topic set is unchanged.
pub fn prune_redundant(hierarchy: &TopicHierarchy) -> (TopicHierarchy, Vec<String>) {
    let mut result = hierarchy.clone();
    let mut notes = Vec::new();
    loop {
        let mut changed = false;
        for root in &mut result.roots {
            changed |= prune_node(root, &mut notes);
        }
        if !changed {
            break;
        }
    }
    disambiguate_siblings(&mut result.roots, "<root>", &mut notes);
    (result, notes)
}

fn prune_node(node: &mut HierarchyNode, notes: &mut Vec<String>) -> bool {
    let mut changed = false;
    while let Some(index) = node
        .children
        .iter()
        .position(|c| fold(&c.name) == fold(&node.name))
    {
        let child = node.children.remove(index);
        notes.push(format!(
            "merged self-named child into {}: absorbed {} child(ren) and {} leaf topic(s)",
            node.name,
            child.children.len(),
            child.leaf_topics.len()
        ));
        // Absorbed children keep the child's ordering, inserted in place.
        for (offset, grandchild) in child.children.into_iter().enumerate() {
            node.children.insert(index + offset, grandchild);
        }
        for topic in child.leaf_topics {
            if !node.leaf_topics.contains(&topic) {
                node.leaf_topics.push(topic);
            }
        }
        if !child.description.trim().is_empty() && child.description != node.description {
            if node.description.trim().is_empty() {
                node.description = child.description;
            } else {
                node.description = format!("{} | {}", node.description, child.description);
            }
        }
        changed = true;
    }
    for child in &mut node.children {
        changed |= prune_node(child, notes);
    }
    changed
}

fn disambiguate_siblings(siblings: &mut [HierarchyNode], parent: &str, notes: &mut Vec<String>) {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for node in siblings.iter_mut() {
        let folded = fold(&node.name);
        let count = seen.entry(folded).or_insert(0);
        *count += 1;
        if *count > 1 {
            let renamed = format!("{} {}", node.name, count);
            notes.push(format!(
                "sibling name collision under {parent}: renamed {} to {renamed}",
                node.name
            ));
            node.name = renamed;
        }
    }
    for node in siblings.iter_mut() {
        let name = node.name.clone();
        disambiguate_siblings(&mut node.children, &name, notes);
    }
}

/// Counts over a valid hierarchy.
pub fn stats(hierarchy: &TopicHierarchy) -> Result<HierarchyStats, HierarchyError> {
    let violations = validate(hierarchy);
    if !violations.is_empty() {
        return Err(HierarchyError::InvalidHierarchy(violations));
    }
    let mut topic_count = 0usize;
    let mut level_count = 0u32;
    fn count(node: &HierarchyNode, depth: u32, topics: &mut usize, levels: &mut u32) {
        *topics += node.leaf_topics.len();
        *levels = (*levels).max(depth);
        for child in &node.children {
            count(child, depth + 1, topics, levels);
        }
    }
    for root in &hierarchy.roots {
        count(root, 1, &mut topic_count, &mut level_count);
    }
    let branch_counts = hierarchy
        .roots
        .iter()
        .map(|r| (r.name.clone(), r.children.len()))
        .collect();
    Ok(HierarchyStats {
        topic_count,
        level_count,
        root_count: hierarchy.roots.len(),
        branch_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Structured,
    Dot,
}

/// Renders a valid hierarchy. The structured form round-trips through
/// [`import`]; the DOT form has one edge per parent-child pair with leaf
/// topics as boxed nodes.
pub fn export(hierarchy: &TopicHierarchy, format: ExportFormat) -> Result<String, HierarchyError> {
    let violations = validate(hierarchy);
    if !violations.is_empty() {
        return Err(HierarchyError::InvalidHierarchy(violations));
    }
    Ok(match format {
        ExportFormat::Structured => {
            let mut text = serde_json::to_string_pretty(hierarchy).expect("hierarchy serializes");
            text.push('\n');
            text
        }
        ExportFormat::Dot => export_dot(hierarchy),
    })
}

fn export_dot(hierarchy: &TopicHierarchy) -> String {
    let mut out = String::from("digraph topic_hierarchy {\n  rankdir=LR;\n");
    let mut node_seq = 0usize;
    let mut leaf_seq = 0usize;
    fn escape(label: &str) -> String {
        label.replace('\\', "\\\\").replace('"', "\\\"")
    }
    fn emit(
        node: &HierarchyNode,
        out: &mut String,
        node_seq: &mut usize,
        leaf_seq: &mut usize,
    ) -> String {
        let id = format!("n{node_seq}");
        *node_seq += 1;
        writeln!(out, "  {id} [label=\"{}\"];", escape(&node.name)).expect("writing to string");
        for topic in &node.leaf_topics {
            let leaf_id = format!("t{leaf_seq}");
            *leaf_seq += 1;
            writeln!(out, "  {leaf_id} [label=\"{}\", shape=box];", escape(topic))
                .expect("writing to string");
            writeln!(out, "  {id} -> {leaf_id};").expect("writing to string");
        }
        for child in &node.children {
            let child_id = emit(child, out, node_seq, leaf_seq);
            writeln!(out, "  {id} -> {child_id};").expect("writing to string");
        }
        id
    }
    for root in &hierarchy.roots {
        emit(root, &mut out, &mut node_seq, &mut leaf_seq);
    }
    out.push_str("}\n");
    out
}

/// Parses the structured format (either the nested `roots` document written
/// by [`export`] or a flat `nodes` list with parent references) and
/// validates the result.
pub fn import(text: &str) -> Result<TopicHierarchy, HierarchyError> {
    let hierarchy = import_lenient(text)?;
    let violations = validate(&hierarchy);
    if !violations.is_empty() {
        return Err(HierarchyError::InvalidHierarchy(violations));
    }
    Ok(hierarchy)
}

/// Like [`import`] but skips final invariant validation, so callers can
/// inspect or repair a structurally parseable hierarchy that still carries
/// violations. Cycles and unknown parents in the flat form are still
/// errors, since no tree can be built from them.
pub fn import_lenient(text: &str) -> Result<TopicHierarchy, HierarchyError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| HierarchyError::ParseError {
            line: e.line(),
            reason: e.to_string(),
        })?;
    let hierarchy = if value.get("nodes").is_some() {
        #[derive(Deserialize)]
        struct FlatDocument {
            nodes: Vec<FlatNode>,
            #[serde(default)]
            max_depth: Option<u32>,
        }
        let doc: FlatDocument =
            serde_json::from_value(value).map_err(|e| HierarchyError::ParseError {
                line: 0,
                reason: e.to_string(),
            })?;
        build_from_flat(doc.nodes, doc.max_depth.unwrap_or(DEFAULT_MAX_DEPTH))
            .map_err(HierarchyError::InvalidHierarchy)?
    } else {
        serde_json::from_value(value).map_err(|e| HierarchyError::ParseError {
            line: 0,
            reason: e.to_string(),
        })?
    };
    Ok(hierarchy)
}

/// Assembles a tree from parent-referencing nodes, detecting duplicate node
/// names, unknown parents, and parent cycles. Children keep node-list order.
pub fn build_from_flat(
    nodes: Vec<FlatNode>,
    max_depth: u32,
) -> Result<TopicHierarchy, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        if index_of.insert(fold(&node.name), i).is_some() {
            violations.push(Violation::DuplicateNodeName {
                name: node.name.clone(),
            });
        }
    }
    for node in &nodes {
        if let Some(parent) = &node.parent {
            if !index_of.contains_key(&fold(parent)) {
                violations.push(Violation::UnknownParent {
                    node: node.name.clone(),
                    parent: parent.clone(),
                });
            }
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    // Cycle check: follow parent chains.
    for (start, node) in nodes.iter().enumerate() {
        let mut path = vec![node.name.clone()];
        let mut seen = vec![false; nodes.len()];
        seen[start] = true;
        let mut current = node;
        while let Some(parent_name) = &current.parent {
            let parent_index = index_of[&fold(parent_name)];
            path.push(nodes[parent_index].name.clone());
            if seen[parent_index] {
                violations.push(Violation::CycleDetected {
                    path: path.join(" -> "),
                });
                return Err(violations);
            }
            seen[parent_index] = true;
            current = &nodes[parent_index];
        }
    }

    let mut children_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut roots = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        match &node.parent {
            Some(parent) => children_of
                .entry(index_of[&fold(parent)])
                .or_default()
                .push(i),
            None => roots.push(i),
        }
    }
    fn build(
        index: usize,
        nodes: &[FlatNode],
        children_of: &BTreeMap<usize, Vec<usize>>,
    ) -> HierarchyNode {
        let flat = &nodes[index];
        HierarchyNode {
            name: flat.name.clone(),
            description: flat.description.clone(),
            children: children_of
                .get(&index)
                .map(|ids| ids.iter().map(|&i| build(i, nodes, children_of)).collect())
                .unwrap_or_default(),
            leaf_topics: flat.leaves.clone(),
        }
    }
    Ok(TopicHierarchy {
        roots: roots
            .into_iter()
            .map(|i| build(i, &nodes, &children_of))
            .collect(),
        max_depth,
    })
}

/// All leaf topics in traversal order.
pub fn leaf_topics(hierarchy: &TopicHierarchy) -> Vec<String> {
    fn collect(node: &HierarchyNode, out: &mut Vec<String>) {
        out.extend(node.leaf_topics.iter().cloned());
        for child in &node.children {
            collect(child, out);
        }
    }
    let mut out = Vec::new();
    for root in &hierarchy.roots {
        collect(root, &mut out);
    }
    out
}

/// The name of the top-level group (root) containing each leaf topic.
pub fn root_of_each_leaf(hierarchy: &TopicHierarchy) -> BTreeMap<String, String> {
    fn collect(node: &HierarchyNode, root: &str, out: &mut BTreeMap<String, String>) {
        for topic in &node.leaf_topics {
            out.insert(topic.clone(), root.to_string());
        }
        for child in &node.children {
            collect(child, root, out);
        }
    }
    let mut out = BTreeMap::new();
    for root in &hierarchy.roots {
        collect(root, &root.name, &mut out);
    }
    out
}
