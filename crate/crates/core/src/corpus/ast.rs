//! ESTree-compatible AST subset.
//!
//! Module files arrive as standard ESTree JSON. Node types outside the
//! supported subset are replaced by [`NodeKind::Skipped`] during loading and a
//! warning is recorded, so the analysis under-approximates visibly rather than
//! failing.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceLocation {
    pub start: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(flatten)]
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<SourceLocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum NodeKind {
    Program {
        body: Vec<Node>,
    },
    FunctionDeclaration {
        id: Option<Box<Node>>,
        params: Vec<Node>,
        body: Box<Node>,
    },
    FunctionExpression {
        #[serde(default)]
        id: Option<Box<Node>>,
        params: Vec<Node>,
        body: Box<Node>,
    },
    ArrowFunctionExpression {
        params: Vec<Node>,
        body: Box<Node>,
    },
    VariableDeclaration {
        declarations: Vec<Node>,
        #[serde(default = "default_var_kind")]
        kind: String,
    },
    VariableDeclarator {
        id: Box<Node>,
        #[serde(default)]
        init: Option<Box<Node>>,
    },
    AssignmentExpression {
        operator: String,
        left: Box<Node>,
        right: Box<Node>,
    },
    MemberExpression {
        object: Box<Node>,
        property: Box<Node>,
        #[serde(default)]
        computed: bool,
    },
    CallExpression {
        callee: Box<Node>,
        arguments: Vec<Node>,
    },
    NewExpression {
        callee: Box<Node>,
        #[serde(default)]
        arguments: Vec<Node>,
    },
    Identifier {
        name: String,
    },
    Literal {
        #[serde(default)]
        value: Value,
    },
    ObjectExpression {
        properties: Vec<Node>,
    },
    Property {
        key: Box<Node>,
        value: Box<Node>,
        #[serde(default)]
        computed: bool,
    },
    ReturnStatement {
        #[serde(default)]
        argument: Option<Box<Node>>,
    },
    ExpressionStatement {
        expression: Box<Node>,
    },
    BlockStatement {
        body: Vec<Node>,
    },
    IfStatement {
        test: Box<Node>,
        consequent: Box<Node>,
        #[serde(default)]
        alternate: Option<Box<Node>>,
    },
    ConditionalExpression {
        test: Box<Node>,
        consequent: Box<Node>,
        alternate: Box<Node>,
    },
    ArrayExpression {
        elements: Vec<Option<Node>>,
    },
    BinaryExpression {
        operator: String,
        left: Box<Node>,
        right: Box<Node>,
    },
    LogicalExpression {
        operator: String,
        left: Box<Node>,
        right: Box<Node>,
    },
    UnaryExpression {
        operator: String,
        argument: Box<Node>,
    },
    ThisExpression,
    EmptyStatement,
    /// Placeholder for a node whose type is outside the supported subset.
    Skipped {
        skipped: String,
    },
}

fn default_var_kind() -> String {
    "var".to_string()
}

pub const SUPPORTED_NODE_TYPES: &[&str] = &[
    "Program",
    "FunctionDeclaration",
    "FunctionExpression",
    "ArrowFunctionExpression",
    "VariableDeclaration",
    "VariableDeclarator",
    "AssignmentExpression",
    "MemberExpression",
    "CallExpression",
    "NewExpression",
    "Identifier",
    "Literal",
    "ObjectExpression",
    "Property",
    "ReturnStatement",
    "ExpressionStatement",
    "BlockStatement",
    "IfStatement",
    "ConditionalExpression",
    "ArrayExpression",
    "BinaryExpression",
    "LogicalExpression",
    "UnaryExpression",
    "ThisExpression",
    "EmptyStatement",
    "Skipped",
];

impl Node {
    pub fn pos(&self) -> Position {
        self.loc.as_ref().map(|l| l.start).unwrap_or_default()
    }

    pub fn type_name(&self) -> &'static str {
        match &self.kind {
            NodeKind::Program { .. } => "Program",
            NodeKind::FunctionDeclaration { .. } => "FunctionDeclaration",
            NodeKind::FunctionExpression { .. } => "FunctionExpression",
            NodeKind::ArrowFunctionExpression { .. } => "ArrowFunctionExpression",
            NodeKind::VariableDeclaration { .. } => "VariableDeclaration",
            NodeKind::VariableDeclarator { .. } => "VariableDeclarator",
            NodeKind::AssignmentExpression { .. } => "AssignmentExpression",
            NodeKind::MemberExpression { .. } => "MemberExpression",
            NodeKind::CallExpression { .. } => "CallExpression",
            NodeKind::NewExpression { .. } => "NewExpression",
            NodeKind::Identifier { .. } => "Identifier",
            NodeKind::Literal { .. } => "Literal",
            NodeKind::ObjectExpression { .. } => "ObjectExpression",
            NodeKind::Property { .. } => "Property",
            NodeKind::ReturnStatement { .. } => "ReturnStatement",
            NodeKind::ExpressionStatement { .. } => "ExpressionStatement",
            NodeKind::BlockStatement { .. } => "BlockStatement",
            NodeKind::IfStatement { .. } => "IfStatement",
            NodeKind::ConditionalExpression { .. } => "ConditionalExpression",
            NodeKind::ArrayExpression { .. } => "ArrayExpression",
            NodeKind::BinaryExpression { .. } => "BinaryExpression",
            NodeKind::LogicalExpression { .. } => "LogicalExpression",
            NodeKind::UnaryExpression { .. } => "UnaryExpression",
            NodeKind::ThisExpression => "ThisExpression",
            NodeKind::EmptyStatement => "EmptyStatement",
            NodeKind::Skipped { .. } => "Skipped",
        }
    }

    pub fn as_identifier(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Identifier { name } => Some(name),
            _ => None,
        }
    }

    pub fn as_string_literal(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Literal {
                value: Value::String(s),
            } => Some(s),
            _ => None,
        }
    }

    pub fn is_function(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::FunctionDeclaration { .. }
                | NodeKind::FunctionExpression { .. }
                | NodeKind::ArrowFunctionExpression { .. }
        )
    }

    /// Direct children in source order.
    pub fn children(&self) -> Vec<&Node> {
        use NodeKind::*;
        let mut out: Vec<&Node> = Vec::new();
        match &self.kind {
            Program { body } | BlockStatement { body } => out.extend(body),
            FunctionDeclaration { id, params, body } | FunctionExpression { id, params, body } => {
                out.extend(id.as_deref());
                out.extend(params);
                out.push(body);
            }
            ArrowFunctionExpression { params, body } => {
                out.extend(params);
                out.push(body);
            }
            VariableDeclaration { declarations, .. } => out.extend(declarations),
            VariableDeclarator { id, init } => {
                out.push(id);
                out.extend(init.as_deref());
            }
            AssignmentExpression { left, right, .. }
            | BinaryExpression { left, right, .. }
            | LogicalExpression { left, right, .. } => {
                out.push(left);
                out.push(right);
            }
            MemberExpression { object, property, .. } => {
                out.push(object);
                out.push(property);
            }
            CallExpression { callee, arguments } | NewExpression { callee, arguments } => {
                out.push(callee);
                out.extend(arguments);
            }
            ObjectExpression { properties } => out.extend(properties),
            Property { key, value, .. } => {
                out.push(key);
                out.push(value);
            }
            ReturnStatement { argument } => out.extend(argument.as_deref()),
            ExpressionStatement { expression } => out.push(expression),
            IfStatement {
                test,
                consequent,
                alternate,
            } => {
                out.push(test);
                out.push(consequent);
                out.extend(alternate.as_deref());
            }
            ConditionalExpression {
                test,
                consequent,
                alternate,
            } => {
                out.push(test);
                out.push(consequent);
                out.push(alternate);
            }
            ArrayExpression { elements } => out.extend(elements.iter().flatten()),
            UnaryExpression { argument, .. } => out.push(argument),
            Identifier { .. } | Literal { .. } | ThisExpression | EmptyStatement | Skipped { .. } => {}
        }
        out
    }

    /// Pre-order traversal over this node and all descendants.
    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a Node)) {
        visit(self);
        for child in self.children() {
            child.walk(visit);
        }
    }
}

/// Replace every unsupported node in raw ESTree JSON with a `Skipped`
/// placeholder, returning one warning per replaced node.
pub(crate) fn prune_unsupported(value: &mut Value, module: &str, warnings: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            if let Some(Value::String(ty)) = map.get("type") {
                if !SUPPORTED_NODE_TYPES.contains(&ty.as_str()) {
                    let ty = ty.clone();
                    let loc = map.remove("loc");
                    let at = loc
                        .as_ref()
                        .and_then(|l| serde_json::from_value::<SourceLocation>(l.clone()).ok())
                        .map(|l| l.start)
                        .unwrap_or_default();
                    warnings.push(format!("{module}:{at}: skipped unsupported node type `{ty}`"));
                    map.clear();
                    map.insert("type".into(), Value::String("Skipped".into()));
                    map.insert("skipped".into(), Value::String(ty));
                    if let Some(loc) = loc {
                        map.insert("loc".into(), loc);
                    }
                    return;
                }
            }
            for (key, child) in map.iter_mut() {
                if key != "loc" {
                    prune_unsupported(child, module, warnings);
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                prune_unsupported(item, module, warnings);
            }
        }
        _ => {}
    }
}
