//! Thin wrapper over the tree-sitter C++ grammar.

use tree_sitter::{Node, Parser, Tree};

pub(crate) fn parse(src: &str) -> Option<Tree> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_cpp::LANGUAGE.into())
        .expect("bundled C++ grammar is ABI compatible");
    parser.parse(src, None)
}

pub(crate) fn text<'a>(node: Node<'_>, src: &'a str) -> &'a str {
    &src[node.byte_range()]
}

/// The declarator chain of a function definition down to its name node.
pub(crate) fn function_name<'a>(def: Node<'_>, src: &'a str) -> Option<&'a str> {
    let mut decl = def.child_by_field_name("declarator")?;
    loop {
        match decl.kind() {
            "function_declarator" => {
                let name = decl.child_by_field_name("declarator")?;
                return Some(text(name, src));
            }
            _ => decl = decl.child_by_field_name("declarator")?,
        }
    }
}

/// `ns::A::Get<int>` -> `Get`.
pub(crate) fn unqualified(name: &str) -> &str {
    let base = match name.find('<') {
        Some(i) => &name[..i],
        None => name,
    };
    base.rsplit("::").next().unwrap_or(base).trim()
}

/// Preorder walk over every node of `root`.
pub(crate) fn walk<'t>(root: Node<'t>, mut visit: impl FnMut(Node<'t>)) {
    let mut cursor = root.walk();
    loop {
        visit(cursor.node());
        if cursor.goto_first_child() {
            continue;
        }
        loop {
            if cursor.goto_next_sibling() {
                break;
            }
            if !cursor.goto_parent() {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unqualified_names() {
        assert_eq!(unqualified("ns::A::Get"), "Get");
        assert_eq!(unqualified("Max<T>"), "Max");
        assert_eq!(unqualified("f"), "f");
        assert_eq!(unqualified("A::~A"), "~A");
    }
}
