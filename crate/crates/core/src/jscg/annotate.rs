use super::{CallEdge, CallGraph, EdgeKind};
use crate::corpus::BuiltinRegistry;

/// Add an edge from each registry-matched builtin call to the callbacks the
/// builtin will invoke.
pub fn annotate_builtin_edges(cg: &CallGraph, registry: &BuiltinRegistry) -> CallGraph {
    let mut out = cg.clone();
    for call in &cg.builtin_calls {
        for entry in registry.matching(&call.owner, &call.method) {
            for pos in &entry.callback_args {
                let Some(idx) = pos.resolve(call.args.len()) else {
                    continue;
                };
                match &call.args[idx] {
                    Some(callback) => {
                        if out.has_link(&call.site, &call.caller, callback) {
                            continue;
                        }
                        out.nodes.insert(callback.clone());
                        out.edges.insert(CallEdge {
                            site: call.site.clone(),
                            caller: call.caller.clone(),
                            callee: callback.clone(),
                            kind: EdgeKind::BuiltinPattern,
                        });
                    }
                    None => {
                        out.unresolved_callbacks += 1;
                        out.warnings.push(format!(
                            "{}: argument {idx} of {}.{} is not a statically known function",
                            call.site, entry.owner, entry.method
                        ));
                    }
                }
            }
        }
    }
    out
}
