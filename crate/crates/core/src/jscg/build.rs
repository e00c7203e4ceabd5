//! Field-based static call graph construction.
//!
//! Function values flow through a constraint graph whose locations are
//! lexically scoped variables, properties keyed by name alone, module
//! exports and function parameters/returns. Call sites are resolved once the
//! flow reaches a fixpoint.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{
    annotate_builtin_edges, BindingCall, BuiltinCall, CallEdge, CallGraph, CallOrigin, EdgeKind, ExportRecord,
    FunctionId, Site, TOP,
};
use crate::corpus::{BuiltinRegistry, ModuleGraph, Node, NodeKind, Resolution, SourceModule};

type FnIdx = usize;
type LocId = usize;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum ObjId {
    /// The `exports` object a module starts with.
    Namespace(String),
    Literal(Site),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Loc {
    Var(FnIdx, String),
    Global(String),
    Prop(String),
    ObjProp(ObjId, String),
    Exports(String),
    Param(FnIdx, usize),
    Ret(FnIdx),
    Tmp(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Val {
    Func(FnIdx),
    Obj(ObjId),
    /// A receiver the analysis knows nothing about (`this`).
    Unknown,
    ModuleObj(String),
    BuiltinModule(String),
    BuiltinMember(String, String),
    Binding(String),
    BindingMember(String, String),
}

impl Val {
    /// Values whose properties are looked up by name alone.
    fn is_plain(&self) -> bool {
        matches!(self, Val::Func(_) | Val::Obj(_) | Val::Unknown)
    }
}

#[derive(Debug)]
enum Constraint {
    Copy { from: LocId, to: LocId },
    Read { base: LocId, prop: String, to: LocId },
    Write { base: LocId, prop: String, from: LocId },
    Call(usize),
}

#[derive(Debug)]
enum ArgRef {
    Func(FnIdx),
    Var(Option<FnIdx>, String),
    Other,
}

#[derive(Debug)]
struct CallSite {
    site: Site,
    caller: FnIdx,
    callee: LocId,
    /// Receiver location and property name for member calls.
    member: Option<(LocId, String)>,
    /// Owner to record when nothing resolves (a global or `*`).
    global_owner: Option<(String, String)>,
    args: Vec<LocId>,
    arg_refs: Vec<ArgRef>,
    result: LocId,
}

#[derive(Debug)]
struct FnInfo {
    id: FunctionId,
    parent: Option<FnIdx>,
    params: Vec<String>,
    declared: BTreeSet<String>,
    fn_decls: BTreeMap<String, FnIdx>,
    used_names: BTreeSet<String>,
}

struct Builder<'a> {
    graph: &'a ModuleGraph,
    registry: &'a BuiltinRegistry,
    fns: Vec<FnInfo>,
    fn_of_node: HashMap<*const Node, FnIdx>,
    locs: Vec<Loc>,
    loc_ids: HashMap<Loc, LocId>,
    vals: Vec<BTreeSet<Val>>,
    constraints: Vec<Constraint>,
    calls: Vec<CallSite>,
    /// Identifier assignments per scope, with the function the right-hand side denotes.
    assigns: BTreeMap<(Option<FnIdx>, String), Vec<Option<FnIdx>>>,
    require_edges: Vec<(Site, FnIdx, FunctionId)>,
    warnings: Vec<String>,
    tmp_counter: usize,
}

/// Build the static call graph and apply builtin execution patterns from `registry`.
pub fn build_static_cg(graph: &ModuleGraph, registry: &BuiltinRegistry) -> CallGraph {
    let cg = build_inner(graph, registry);
    annotate_builtin_edges(&cg, registry)
}

/// Static construction with registry-driven value flow but without
/// builtin-pattern edges; [`annotate_builtin_edges`] adds those.
pub fn build_static_cg_unannotated(graph: &ModuleGraph, registry: &BuiltinRegistry) -> CallGraph {
    build_inner(graph, registry)
}

fn build_inner(graph: &ModuleGraph, registry: &BuiltinRegistry) -> CallGraph {
    let mut b = Builder {
        graph,
        registry,
        fns: Vec::new(),
        fn_of_node: HashMap::new(),
        locs: Vec::new(),
        loc_ids: HashMap::new(),
        vals: Vec::new(),
        constraints: Vec::new(),
        calls: Vec::new(),
        assigns: BTreeMap::new(),
        require_edges: Vec::new(),
        warnings: Vec::new(),
        tmp_counter: 0,
    };
    let mut tops = Vec::new();
    for module in &graph.modules {
        let top = b.new_fn(FunctionId::top(&module.id), None);
        for implicit in ["module", "exports"] {
            b.fns[top].declared.insert(implicit.to_string());
        }
        b.collect(&module.ast, &module.id, top);
        tops.push(top);
    }
    for (module, &top) in graph.modules.iter().zip(&tops) {
        b.module_constraints(module, top);
    }
    b.solve();
    b.finish()
}

impl<'a> Builder<'a> {
    fn new_fn(&mut self, id: FunctionId, parent: Option<FnIdx>) -> FnIdx {
        self.fns.push(FnInfo {
            id,
            parent,
            params: Vec::new(),
            declared: BTreeSet::new(),
            fn_decls: BTreeMap::new(),
            used_names: BTreeSet::new(),
        });
        self.fns.len() - 1
    }

    fn loc(&mut self, loc: Loc) -> LocId {
        if let Some(&id) = self.loc_ids.get(&loc) {
            return id;
        }
        let id = self.locs.len();
        self.locs.push(loc.clone());
        self.loc_ids.insert(loc, id);
        self.vals.push(BTreeSet::new());
        id
    }

    fn tmp(&mut self) -> LocId {
        self.tmp_counter += 1;
        self.loc(Loc::Tmp(self.tmp_counter))
    }

    fn constant(&mut self, val: Val) -> LocId {
        let t = self.tmp();
        self.vals[t].insert(val);
        t
    }

    fn copy(&mut self, from: LocId, to: LocId) {
        self.constraints.push(Constraint::Copy { from, to });
    }

    // ---- pass 1: function identities and declarations ----

    fn child_name(&mut self, parent: FnIdx, node: &Node) -> String {
        let pos = node.pos();
        let named = match &node.kind {
            NodeKind::FunctionDeclaration { id, .. } | NodeKind::FunctionExpression { id, .. } => {
                id.as_deref().and_then(Node::as_identifier).map(str::to_string)
            }
            _ => None,
        };
        let mut name = named.unwrap_or_else(|| format!("anon@{pos}"));
        if self.fns[parent].used_names.contains(&name) {
            name = format!("{name}@{pos}");
        }
        self.fns[parent].used_names.insert(name.clone());
        name
    }

    fn collect(&mut self, node: &Node, module: &str, current: FnIdx) {
        for child in node.children() {
            match &child.kind {
                NodeKind::FunctionDeclaration { id, params, body }
                | NodeKind::FunctionExpression { id, params, body } => {
                    let name = self.child_name(current, child);
                    let path = format!("{}/{}", self.fns[current].id.path, name);
                    let f = self.new_fn(FunctionId::new(module, path), Some(current));
                    self.fn_of_node.insert(child as *const Node, f);
                    let decl_name = id.as_deref().and_then(Node::as_identifier);
                    if let Some(n) = decl_name {
                        if matches!(child.kind, NodeKind::FunctionDeclaration { .. }) {
                            self.fns[current].declared.insert(n.to_string());
                            self.fns[current].fn_decls.insert(n.to_string(), f);
                        } else {
                            self.fns[f].declared.insert(n.to_string());
                            self.fns[f].fn_decls.insert(n.to_string(), f);
                        }
                    }
                    self.declare_params(f, params);
                    self.collect(body, module, f);
                }
                NodeKind::ArrowFunctionExpression { params, body } => {
                    let name = self.child_name(current, child);
                    let path = format!("{}/{}", self.fns[current].id.path, name);
                    let f = self.new_fn(FunctionId::new(module, path), Some(current));
                    self.fn_of_node.insert(child as *const Node, f);
                    self.declare_params(f, params);
                    self.collect(body, module, f);
                }
                NodeKind::VariableDeclarator { id, .. } => {
                    if let Some(n) = id.as_identifier() {
                        self.fns[current].declared.insert(n.to_string());
                    }
                    self.collect(child, module, current);
                }
                _ => self.collect(child, module, current),
            }
        }
    }

    fn declare_params(&mut self, f: FnIdx, params: &[Node]) {
        for p in params {
            let name = p.as_identifier().map(str::to_string).unwrap_or_default();
            if !name.is_empty() {
                self.fns[f].declared.insert(name.clone());
            }
            self.fns[f].params.push(name);
        }
    }

    fn scope_of(&self, name: &str, mut cx: FnIdx) -> Option<FnIdx> {
        loop {
            if self.fns[cx].declared.contains(name) {
                return Some(cx);
            }
            cx = self.fns[cx].parent?;
        }
    }

    fn var_loc(&mut self, name: &str, cx: FnIdx) -> LocId {
        match self.scope_of(name, cx) {
            Some(scope) => self.loc(Loc::Var(scope, name.to_string())),
            None => self.loc(Loc::Global(name.to_string())),
        }
    }

    // ---- pass 2: constraints ----

    fn module_constraints(&mut self, module: &SourceModule, top: FnIdx) {
        let id = module.id.clone();
        let module_var = self.loc(Loc::Var(top, "module".into()));
        self.vals[module_var].insert(Val::ModuleObj(id.clone()));
        let exports_var = self.loc(Loc::Var(top, "exports".into()));
        self.vals[exports_var].insert(Val::Obj(ObjId::Namespace(id.clone())));
        let exports = self.loc(Loc::Exports(id.clone()));
        self.vals[exports].insert(Val::Obj(ObjId::Namespace(id.clone())));
        if let NodeKind::Program { body } = &module.ast.kind {
            for stmt in body {
                self.stmt(stmt, &id, top);
            }
        }
    }

    fn stmt(&mut self, node: &Node, module: &str, cx: FnIdx) {
        match &node.kind {
            NodeKind::VariableDeclaration { declarations, .. } => {
                for d in declarations {
                    self.stmt(d, module, cx);
                }
            }
            NodeKind::VariableDeclarator { id, init } => {
                if let Some(init) = init {
                    let value = self.expr(init, module, cx);
                    if let Some(name) = id.as_identifier() {
                        let target = self.var_loc(name, cx);
                        self.copy(value, target);
                        self.record_assign(name, init, cx);
                    }
                }
            }
            NodeKind::FunctionDeclaration { .. } => {
                let f = self.fn_of_node[&(node as *const Node)];
                self.function(node, module, f);
            }
            NodeKind::ReturnStatement { argument } => {
                if let Some(arg) = argument {
                    let value = self.expr(arg, module, cx);
                    let ret = self.loc(Loc::Ret(cx));
                    self.copy(value, ret);
                }
            }
            NodeKind::ExpressionStatement { expression } => {
                self.expr(expression, module, cx);
            }
            NodeKind::BlockStatement { body } | NodeKind::Program { body } => {
                for s in body {
                    self.stmt(s, module, cx);
                }
            }
            NodeKind::IfStatement {
                test,
                consequent,
                alternate,
            } => {
                self.expr(test, module, cx);
                self.stmt(consequent, module, cx);
                if let Some(alt) = alternate {
                    self.stmt(alt, module, cx);
                }
            }
            NodeKind::EmptyStatement | NodeKind::Skipped { .. } => {}
            _ => {
                self.expr(node, module, cx);
            }
        }
    }

    fn record_assign(&mut self, name: &str, rhs: &Node, cx: FnIdx) {
        let scope = self.scope_of(name, cx);
        let denoted = if rhs.is_function() {
            self.fn_of_node.get(&(rhs as *const Node)).copied()
        } else {
            None
        };
        self.assigns.entry((scope, name.to_string())).or_default().push(denoted);
    }

    /// Constraints for a function body; returns nothing since the caller
    /// decides where the function value itself flows.
    fn function(&mut self, node: &Node, module: &str, f: FnIdx) {
        let params = self.fns[f].params.clone();
        for (i, name) in params.iter().enumerate() {
            if name.is_empty() {
                continue;
            }
            let param = self.loc(Loc::Param(f, i));
            let var = self.loc(Loc::Var(f, name.clone()));
            self.copy(param, var);
        }
        match &node.kind {
            NodeKind::FunctionDeclaration { id, body, .. } | NodeKind::FunctionExpression { id, body, .. } => {
                if let Some(name) = id.as_deref().and_then(Node::as_identifier) {
                    let parent = self.fns[f].parent.expect("nested function has a parent");
                    let scope = if matches!(node.kind, NodeKind::FunctionDeclaration { .. }) {
                        parent
                    } else {
                        f
                    };
                    let var = self.loc(Loc::Var(scope, name.to_string()));
                    self.vals[var].insert(Val::Func(f));
                }
                self.stmt(body, module, f);
            }
            NodeKind::ArrowFunctionExpression { body, .. } => {
                if matches!(body.kind, NodeKind::BlockStatement { .. }) {
                    self.stmt(body, module, f);
                } else {
                    let value = self.expr(body, module, f);
                    let ret = self.loc(Loc::Ret(f));
                    self.copy(value, ret);
                }
            }
            _ => unreachable!("function() called on a non-function node"),
        }
    }

    fn prop_name(property: &Node, computed: bool) -> Option<String> {
        if computed {
            property.as_string_literal().map(str::to_string)
        } else {
            property.as_identifier().map(str::to_string)
        }
    }

    fn expr(&mut self, node: &Node, module: &str, cx: FnIdx) -> LocId {
        match &node.kind {
            NodeKind::Identifier { name } => self.var_loc(name, cx),
            NodeKind::FunctionExpression { .. } | NodeKind::ArrowFunctionExpression { .. } => {
                let f = self.fn_of_node[&(node as *const Node)];
                self.function(node, module, f);
                self.constant(Val::Func(f))
            }
            NodeKind::FunctionDeclaration { .. } => {
                self.stmt(node, module, cx);
                self.tmp()
            }
            NodeKind::MemberExpression {
                object,
                property,
                computed,
            } => {
                let base = self.expr(object, module, cx);
                let to = self.tmp();
                match Self::prop_name(property, *computed) {
                    Some(prop) => self.constraints.push(Constraint::Read { base, prop, to }),
                    None => {
                        self.expr(property, module, cx);
                    }
                }
                to
            }
            NodeKind::AssignmentExpression { operator, left, right } => {
                let value = self.expr(right, module, cx);
                if operator != "=" {
                    self.expr(left, module, cx);
                    return value;
                }
                match &left.kind {
                    NodeKind::Identifier { name } => {
                        let target = self.var_loc(name, cx);
                        self.copy(value, target);
                        self.record_assign(name, right, cx);
                    }
                    NodeKind::MemberExpression {
                        object,
                        property,
                        computed,
                    } => {
                        let base = self.expr(object, module, cx);
                        match Self::prop_name(property, *computed) {
                            Some(prop) => self.constraints.push(Constraint::Write {
                                base,
                                prop,
                                from: value,
                            }),
                            None => {
                                self.expr(property, module, cx);
                            }
                        }
                    }
                    _ => {}
                }
                value
            }
            NodeKind::CallExpression { callee, arguments } => self.call(node, callee, arguments, false, module, cx),
            NodeKind::NewExpression { callee, arguments } => self.call(node, callee, arguments, true, module, cx),
            NodeKind::ObjectExpression { properties } => {
                let obj = ObjId::Literal(Site::new(module, node.pos()));
                let out = self.constant(Val::Obj(obj.clone()));
                for p in properties {
                    if let NodeKind::Property { key, value, computed } = &p.kind {
                        let key_name = if *computed {
                            key.as_string_literal().map(str::to_string)
                        } else {
                            key.as_identifier()
                                .map(str::to_string)
                                .or_else(|| key.as_string_literal().map(str::to_string))
                        };
                        let v = self.expr(value, module, cx);
                        if let Some(k) = key_name {
                            let slot = self.loc(Loc::ObjProp(obj.clone(), k.clone()));
                            self.copy(v, slot);
                            let field = self.loc(Loc::Prop(k));
                            self.copy(v, field);
                        }
                    }
                }
                out
            }
            NodeKind::ArrayExpression { elements } => {
                for e in elements.iter().flatten() {
                    self.expr(e, module, cx);
                }
                self.constant(Val::Obj(ObjId::Literal(Site::new(module, node.pos()))))
            }
            NodeKind::LogicalExpression { left, right, .. } => {
                let out = self.tmp();
                let l = self.expr(left, module, cx);
                let r = self.expr(right, module, cx);
                self.copy(l, out);
                self.copy(r, out);
                out
            }
            NodeKind::ConditionalExpression {
                test,
                consequent,
                alternate,
            } => {
                self.expr(test, module, cx);
                let out = self.tmp();
                let c = self.expr(consequent, module, cx);
                let a = self.expr(alternate, module, cx);
                self.copy(c, out);
                self.copy(a, out);
                out
            }
            NodeKind::BinaryExpression { left, right, .. } => {
                self.expr(left, module, cx);
                self.expr(right, module, cx);
                self.tmp()
            }
            NodeKind::UnaryExpression { argument, .. } => {
                self.expr(argument, module, cx);
                self.tmp()
            }
            NodeKind::ThisExpression => self.constant(Val::Unknown),
            _ => {
                // statements in expression position do not occur in valid ESTree
                for child in node.children() {
                    self.stmt(child, module, cx);
                }
                self.tmp()
            }
        }
    }

    fn is_unbound(&self, name: &str, cx: FnIdx) -> bool {
        self.scope_of(name, cx).is_none()
    }

    fn call(&mut self, node: &Node, callee: &Node, arguments: &[Node], is_new: bool, module: &str, cx: FnIdx) -> LocId {
        let site = Site::new(module, node.pos());
        let result = self.tmp();

        if !is_new {
            if let Some(special) = callee.as_identifier().filter(|n| self.is_unbound(n, cx)) {
                if special == "require" {
                    for a in arguments {
                        self.expr(a, module, cx);
                    }
                    match self.graph.resolve_at(module, node.pos()) {
                        Some(Resolution::Local(target)) => {
                            let target = target.clone();
                            let exports = self.loc(Loc::Exports(target.clone()));
                            self.copy(exports, result);
                            self.require_edges.push((site, cx, FunctionId::top(target)));
                        }
                        Some(Resolution::Builtin(name)) => {
                            let name = name.clone();
                            self.vals[result].insert(Val::BuiltinModule(name));
                        }
                        _ => {}
                    }
                    return result;
                }
                if special == "internalBinding" {
                    for a in arguments {
                        self.expr(a, module, cx);
                    }
                    match arguments.first().and_then(Node::as_string_literal) {
                        Some(name) => {
                            self.vals[result].insert(Val::Binding(name.to_string()));
                        }
                        None => self
                            .warnings
                            .push(format!("{site}: non-literal internalBinding argument skipped")),
                    }
                    return result;
                }
            }
        }

        let (callee_loc, member, global_owner) = match &callee.kind {
            NodeKind::MemberExpression {
                object,
                property,
                computed,
            } => {
                let base = self.expr(object, module, cx);
                let to = self.tmp();
                match Self::prop_name(property, *computed) {
                    Some(prop) => {
                        self.constraints.push(Constraint::Read {
                            base,
                            prop: prop.clone(),
                            to,
                        });
                        let owner = match object.as_identifier() {
                            Some(n) if self.is_unbound(n, cx) => n.to_string(),
                            _ => "*".to_string(),
                        };
                        (to, Some((base, prop.clone())), Some((owner, prop)))
                    }
                    None => {
                        self.expr(property, module, cx);
                        (to, None, None)
                    }
                }
            }
            NodeKind::Identifier { name } if self.is_unbound(name, cx) => {
                let loc = self.var_loc(name, cx);
                let owner = if is_new {
                    (name.clone(), "new".to_string())
                } else {
                    ("global".to_string(), name.clone())
                };
                (loc, None, Some(owner))
            }
            _ => (self.expr(callee, module, cx), None, None),
        };

        let mut args = Vec::with_capacity(arguments.len());
        let mut arg_refs = Vec::with_capacity(arguments.len());
        for a in arguments {
            args.push(self.expr(a, module, cx));
            arg_refs.push(match &a.kind {
                NodeKind::FunctionExpression { .. } | NodeKind::ArrowFunctionExpression { .. } => {
                    ArgRef::Func(self.fn_of_node[&(a as *const Node)])
                }
                NodeKind::Identifier { name } => ArgRef::Var(self.scope_of(name, cx), name.clone()),
                _ => ArgRef::Other,
            });
        }

        let idx = self.calls.len();
        self.calls.push(CallSite {
            site,
            caller: cx,
            callee: callee_loc,
            member,
            global_owner,
            args,
            arg_refs,
            result,
        });
        self.constraints.push(Constraint::Call(idx));
        result
    }

    // ---- fixpoint ----

    fn add_all(&mut self, from: LocId, to: LocId) -> bool {
        if from == to {
            return false;
        }
        let incoming: Vec<Val> = self.vals[from].iter().cloned().collect();
        let mut changed = false;
        for v in incoming {
            changed |= self.vals[to].insert(v);
        }
        changed
    }

    fn add_val(&mut self, val: Val, to: LocId) -> bool {
        self.vals[to].insert(val)
    }

    fn solve(&mut self) {
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..self.constraints.len() {
                changed |= self.apply(i);
            }
        }
    }

    fn apply(&mut self, i: usize) -> bool {
        match &self.constraints[i] {
            Constraint::Copy { from, to } => {
                let (from, to) = (*from, *to);
                self.add_all(from, to)
            }
            Constraint::Read { base, prop, to } => {
                let (base, prop, to) = (*base, prop.clone(), *to);
                let base_vals: Vec<Val> = self.vals[base].iter().cloned().collect();
                let mut changed = false;
                let mut plain = false;
                for v in base_vals {
                    match v {
                        Val::ModuleObj(m) if prop == "exports" => {
                            let exports = self.loc(Loc::Exports(m));
                            changed |= self.add_all(exports, to);
                        }
                        Val::BuiltinModule(n) => changed |= self.add_val(Val::BuiltinMember(n, prop.clone()), to),
                        Val::Binding(n) => changed |= self.add_val(Val::BindingMember(n, prop.clone()), to),
                        v if v.is_plain() => plain = true,
                        _ => {}
                    }
                }
                if plain {
                    let field = self.loc(Loc::Prop(prop));
                    changed |= self.add_all(field, to);
                }
                changed
            }
            Constraint::Write { base, prop, from } => {
                let (base, prop, from) = (*base, prop.clone(), *from);
                let base_vals: Vec<Val> = self.vals[base].iter().cloned().collect();
                let mut changed = false;
                let mut plain = false;
                for v in base_vals {
                    match v {
                        Val::ModuleObj(m) if prop == "exports" => {
                            let exports = self.loc(Loc::Exports(m));
                            changed |= self.add_all(from, exports);
                        }
                        Val::Obj(o) => {
                            let slot = self.loc(Loc::ObjProp(o, prop.clone()));
                            changed |= self.add_all(from, slot);
                            plain = true;
                        }
                        v if v.is_plain() => plain = true,
                        _ => {}
                    }
                }
                if plain {
                    let field = self.loc(Loc::Prop(prop));
                    changed |= self.add_all(from, field);
                }
                changed
            }
            Constraint::Call(idx) => {
                let idx = *idx;
                let callee_vals: Vec<Val> = self.vals[self.calls[idx].callee].iter().cloned().collect();
                let args = self.calls[idx].args.clone();
                let result = self.calls[idx].result;
                let mut changed = false;
                for v in &callee_vals {
                    if let Val::Func(f) = v {
                        let nparams = self.fns[*f].params.len();
                        for (i, &a) in args.iter().enumerate().take(nparams) {
                            let param = self.loc(Loc::Param(*f, i));
                            changed |= self.add_all(a, param);
                        }
                        let ret = self.loc(Loc::Ret(*f));
                        changed |= self.add_all(ret, result);
                    }
                }
                if let Some((owner, method)) = self.creator_key(idx, &callee_vals) {
                    if self.registry.creates_function(&owner, &method) {
                        if let Some((base, _)) = self.calls[idx].member {
                            changed |= self.add_all(base, result);
                        }
                        if let Some(&first) = args.first() {
                            changed |= self.add_all(first, result);
                        }
                    }
                }
                changed
            }
        }
    }

    fn creator_key(&self, idx: usize, callee_vals: &[Val]) -> Option<(String, String)> {
        callee_vals
            .iter()
            .find_map(|v| match v {
                Val::BuiltinMember(o, m) => Some((o.clone(), m.clone())),
                _ => None,
            })
            .or_else(|| self.calls[idx].global_owner.clone())
    }

    // ---- extraction ----

    fn resolve_arg(&self, arg: &ArgRef) -> Option<FnIdx> {
        match arg {
            ArgRef::Func(f) => Some(*f),
            ArgRef::Var(scope, name) => {
                if let Some(s) = scope {
                    if let Some(&f) = self.fns[*s].fn_decls.get(name) {
                        return Some(f);
                    }
                }
                match self.assigns.get(&(*scope, name.clone())).map(Vec::as_slice) {
                    Some([Some(f)]) => Some(*f),
                    _ => None,
                }
            }
            ArgRef::Other => None,
        }
    }

    fn finish(self) -> CallGraph {
        let mut cg = CallGraph {
            nodes: self.fns.iter().map(|f| f.id.clone()).collect(),
            warnings: self.warnings.clone(),
            ..CallGraph::default()
        };
        for (site, caller, target) in &self.require_edges {
            if cg.nodes.contains(target) {
                cg.edges.insert(CallEdge {
                    site: site.clone(),
                    caller: self.fns[*caller].id.clone(),
                    callee: target.clone(),
                    kind: EdgeKind::Static,
                });
            }
        }
        for call in &self.calls {
            let caller = self.fns[call.caller].id.clone();
            let mut resolved = false;
            let args: Vec<Option<FunctionId>> = call
                .arg_refs
                .iter()
                .map(|a| self.resolve_arg(a).map(|f| self.fns[f].id.clone()))
                .collect();
            for v in &self.vals[call.callee] {
                match v {
                    Val::Func(f) => {
                        resolved = true;
                        cg.edges.insert(CallEdge {
                            site: call.site.clone(),
                            caller: caller.clone(),
                            callee: self.fns[*f].id.clone(),
                            kind: EdgeKind::Static,
                        });
                    }
                    Val::BuiltinMember(owner, method) => {
                        resolved = true;
                        cg.builtin_calls.insert(BuiltinCall {
                            site: call.site.clone(),
                            caller: caller.clone(),
                            owner: owner.clone(),
                            method: method.clone(),
                            origin: CallOrigin::Module,
                            args: args.clone(),
                        });
                    }
                    Val::BindingMember(binding, method) => {
                        resolved = true;
                        cg.binding_calls.insert(BindingCall {
                            site: call.site.clone(),
                            caller: caller.clone(),
                            binding: binding.clone(),
                            method: method.clone(),
                        });
                    }
                    _ => {}
                }
            }
            if !resolved {
                cg.unresolved_calls += 1;
                if let Some((owner, method)) = &call.global_owner {
                    cg.builtin_calls.insert(BuiltinCall {
                        site: call.site.clone(),
                        caller,
                        owner: owner.clone(),
                        method: method.clone(),
                        origin: CallOrigin::Global,
                        args,
                    });
                }
            }
        }
        for module in &self.graph.modules {
            let namespace = ObjId::Namespace(module.id.clone());
            let mut objects = vec![namespace.clone()];
            if let Some(&exports) = self.loc_ids.get(&Loc::Exports(module.id.clone())) {
                for v in &self.vals[exports] {
                    if let Val::Obj(o) = v {
                        if *o != namespace {
                            objects.push(o.clone());
                        }
                    }
                }
            }
            for (loc, &id) in &self.loc_ids {
                let Loc::ObjProp(obj, method) = loc else { continue };
                if !objects.contains(obj) {
                    continue;
                }
                for v in &self.vals[id] {
                    if let Val::Func(f) = v {
                        cg.exports.insert(ExportRecord {
                            module: module.id.clone(),
                            name: module.name.clone(),
                            method: method.clone(),
                            function: self.fns[*f].id.clone(),
                        });
                    }
                }
            }
        }
        debug_assert!(cg.nodes.iter().filter(|n| n.path == TOP).count() == self.graph.modules.len());
        cg
    }
}
