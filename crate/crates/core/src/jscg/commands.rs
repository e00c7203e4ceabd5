use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CallGraph, CallOrigin, DynamicTrace, Site};
use crate::corpus::{ModuleGraph, Node, NodeKind};

pub const COMMAND_METHODS: &[&str] = &["exec", "execSync", "spawn", "spawnSync"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandExtraction {
    /// Command binary names, sorted and deduplicated.
    pub commands: Vec<String>,
    pub warnings: Vec<String>,
}

fn first_token(command: &str) -> Option<&str> {
    command.split_whitespace().next()
}

fn call_at<'a>(graph: &'a ModuleGraph, site: &Site) -> Option<&'a Node> {
    let module = graph.module(&site.module)?;
    let mut found = None;
    module.ast.walk(&mut |node| {
        if found.is_none()
            && node.pos() == site.pos()
            && matches!(
                node.kind,
                NodeKind::CallExpression { .. } | NodeKind::NewExpression { .. }
            )
        {
            found = Some(node);
        }
    });
    found
}

fn literal_first_arg(node: &Node) -> Option<&str> {
    match &node.kind {
        NodeKind::CallExpression { arguments, .. } | NodeKind::NewExpression { arguments, .. } => {
            arguments.first().and_then(Node::as_string_literal)
        }
        _ => None,
    }
}

/// Command binaries started through `child_process` command methods.
pub fn extract_commands(graph: &ModuleGraph, cg: &CallGraph, trace: &DynamicTrace) -> CommandExtraction {
    let mut commands = BTreeSet::new();
    let mut warnings = Vec::new();
    let mut seen_sites = BTreeSet::new();
    for call in &cg.builtin_calls {
        if call.origin != CallOrigin::Module
            || call.owner != "child_process"
            || !COMMAND_METHODS.contains(&call.method.as_str())
            || !seen_sites.insert(&call.site)
        {
            continue;
        }
        if let Some(lit) = call_at(graph, &call.site).and_then(literal_first_arg) {
            match first_token(lit) {
                Some(tok) => {
                    commands.insert(tok.to_string());
                }
                None => warnings.push(format!("{}: empty command literal", call.site)),
            }
            continue;
        }
        let mut any = false;
        for rec in trace.command_records.iter().filter(|r| r.site == call.site) {
            if let Some(tok) = first_token(&rec.command) {
                commands.insert(tok.to_string());
                any = true;
            }
        }
        if !any {
            warnings.push(format!(
                "{}: unresolved command for child_process.{}",
                call.site, call.method
            ));
        }
    }
    CommandExtraction {
        commands: commands.into_iter().collect(),
        warnings,
    }
}
