use std::collections::BTreeSet;

use super::{CallGraph, CallOrigin, FunctionId};
use crate::error::{Error, Result};

/// `(module, method)` pairs of builtin-module calls made by functions
/// reachable from `entry`. Calls on language globals are not included.
pub fn reachable_builtins(cg: &CallGraph, entry: &FunctionId) -> Result<BTreeSet<(String, String)>> {
    if !cg.nodes.contains(entry) {
        return Err(Error::input(format!("entry `{entry}` is not in the call graph")));
    }
    let reach = cg.reachable_from(entry);
    Ok(cg
        .builtin_calls
        .iter()
        .filter(|c| c.origin == CallOrigin::Module && reach.contains(&c.caller))
        .map(|c| (c.owner.clone(), c.method.clone()))
        .collect())
}
