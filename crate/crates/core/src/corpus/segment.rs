use rayon::prelude::*;
use tree_sitter::Node;

use super::{line_slice, RetrievalUnit, SourceFile, UnitKind};
use crate::cpp;
use crate::tokenizer::Tokenizer;

struct Span {
    kind: UnitKind,
    name: Option<String>,
    start_line: usize,
    end_line: usize,
}

/// Splits one file into retrieval units with ids counted from 0.
///
/// Top-level functions, out-of-class member definitions and class
/// definitions become units; a class keeps its inline methods. Files
/// without any function definition, and files whose parse yields no clean
/// definitions, become a single whole-file unit.
pub fn segment(file: &SourceFile, tok: &dyn Tokenizer) -> Vec<RetrievalUnit> {
    if file.line_count == 0 {
        return Vec::new();
    }
    let spans = match definition_spans(file) {
        Some(spans) if !spans.is_empty() => spans,
        _ => vec![Span {
            kind: UnitKind::WholeFile,
            name: None,
            start_line: 1,
            end_line: file.line_count,
        }],
    };
    spans
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let content = line_slice(&file.content, s.start_line, s.end_line);
            RetrievalUnit {
                id: i as u32,
                source_path: file.path.clone(),
                kind: s.kind,
                name: s.name,
                start_line: s.start_line,
                end_line: s.end_line,
                token_count: tok.count(&content),
                content,
            }
        })
        .collect()
}

/// Segments every file (in parallel) and numbers units consecutively in
/// path order.
pub fn segment_all(files: &[SourceFile], tok: &dyn Tokenizer) -> Vec<RetrievalUnit> {
    let mut order: Vec<&SourceFile> = files.iter().collect();
    order.sort_by(|a, b| a.path.cmp(&b.path));
    let per_file: Vec<Vec<RetrievalUnit>> = order.par_iter().map(|f| segment(f, tok)).collect();
    let mut next = 0u32;
    let mut units = Vec::new();
    for mut batch in per_file {
        for u in &mut batch {
            u.id = next;
            next += 1;
        }
        units.append(&mut batch);
    }
    units
}

/// `None` means the file should fall back to a whole-file unit.
fn definition_spans(file: &SourceFile) -> Option<Vec<Span>> {
    let src = file.content.as_str();
    let Some(tree) = cpp::parse(src) else {
        tracing::warn!("{}: parser failed, using whole file", file.path);
        return None;
    };
    let root = tree.root_node();

    let mut has_function = false;
    cpp::walk(root, |n| has_function |= n.kind() == "function_definition");
    if !has_function {
        return None;
    }

    let mut spans = Vec::new();
    collect(root, src, &mut spans);
    if spans.is_empty() {
        if root.has_error() {
            tracing::warn!("{}: syntax errors, using whole file", file.path);
        }
        return None;
    }

    spans.sort_by_key(|s| s.start_line);
    let mut kept: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        // two definitions sharing a line would produce overlapping slices
        if kept.last().is_some_and(|prev| s.start_line <= prev.end_line) {
            continue;
        }
        kept.push(s);
    }
    Some(kept)
}

fn collect(container: Node<'_>, src: &str, out: &mut Vec<Span>) {
    let mut cursor = container.walk();
    for node in container.named_children(&mut cursor) {
        match node.kind() {
            "function_definition" | "class_specifier" | "struct_specifier" | "union_specifier" => {
                if let Some(span) = definition(node, node, src) {
                    out.push(span);
                }
            }
            "template_declaration" => {
                let mut c = node.walk();
                let inner = node.named_children(&mut c).find(|n| {
                    matches!(
                        n.kind(),
                        "function_definition" | "class_specifier" | "struct_specifier"
                    )
                });
                if let Some(span) = inner.and_then(|inner| definition(node, inner, src)) {
                    out.push(span);
                }
            }
            "namespace_definition" | "linkage_specification" => {
                if let Some(body) = node.child_by_field_name("body") {
                    if body.kind() == "declaration_list" {
                        collect(body, src, out);
                    } else if let Some(span) = definition(body, body, src) {
                        out.push(span);
                    }
                }
            }
            "preproc_if" | "preproc_ifdef" | "preproc_else" | "preproc_elif" | "preproc_elifdef"
            | "declaration_list" => collect(node, src, out),
            _ => {}
        }
    }
}

/// `outer` supplies the line span (it may be a template wrapper), `def` the
/// kind and name.
fn definition(outer: Node<'_>, def: Node<'_>, src: &str) -> Option<Span> {
    if outer.has_error() {
        return None;
    }
    let (kind, name) = match def.kind() {
        "function_definition" => (
            UnitKind::Function,
            cpp::function_name(def, src).map(str::to_string),
        ),
        "class_specifier" | "struct_specifier" | "union_specifier" => {
            // forward declarations have no body
            def.child_by_field_name("body")?;
            (
                UnitKind::Class,
                def.child_by_field_name("name")
                    .map(|n| cpp::text(n, src).to_string()),
            )
        }
        _ => return None,
    };
    let start = outer.start_position();
    let end = outer.end_position();
    let end_row = if end.column == 0 && end.row > start.row {
        end.row - 1
    } else {
        end.row
    };
    Some(Span {
        kind,
        name,
        start_line: start.row + 1,
        end_line: end_row + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::CodeTokenizer;

    fn file(src: &str) -> SourceFile {
        SourceFile::new("t.cc", src, &CodeTokenizer)
    }

    fn spans(units: &[RetrievalUnit]) -> Vec<(UnitKind, Option<&str>, usize, usize)> {
        units
            .iter()
            .map(|u| (u.kind, u.name.as_deref(), u.start_line, u.end_line))
            .collect()
    }

    #[test]
    fn two_free_functions() {
        let src = "#include <x>\n\nint f() {\n  return 1;\n}\n\nint g() {\n  return f();\n}\n";
        let units = segment(&file(src), &CodeTokenizer);
        assert_eq!(
            spans(&units),
            vec![
                (UnitKind::Function, Some("f"), 3, 5),
                (UnitKind::Function, Some("g"), 7, 9)
            ]
        );
        assert_eq!(units[0].content, "int f() {\n  return 1;\n}");
    }

    #[test]
    fn prototypes_only_is_whole_file() {
        let src = "#pragma once\nvoid h(int);\nint k(double x);\n";
        let units = segment(&file(src), &CodeTokenizer);
        assert_eq!(spans(&units), vec![(UnitKind::WholeFile, None, 1, 3)]);
        assert_eq!(units[0].content, "#pragma once\nvoid h(int);\nint k(double x);");
    }

    #[test]
    fn class_with_inline_methods_is_one_unit() {
        let src = "class A {\n public:\n  int Get() const { return x_; }\n  void Set(int v) { x_ = v; }\n private:\n  int x_;\n};\n";
        let units = segment(&file(src), &CodeTokenizer);
        assert_eq!(spans(&units), vec![(UnitKind::Class, Some("A"), 1, 7)]);
    }

    #[test]
    fn namespaces_templates_and_out_of_class_members() {
        let src = "\
namespace ns {
struct P {
  int v() { return 1; }
};
template <typename T>
T Max(T a, T b) {
  return a > b ? a : b;
}
int P2::Run(int x) {
  return x;
}
}  // namespace ns
extern \"C\" int c_fn() { return 0; }
struct Fwd;
";
        let units = segment(&file(src), &CodeTokenizer);
        assert_eq!(
            spans(&units),
            vec![
                (UnitKind::Class, Some("P"), 2, 4),
                (UnitKind::Function, Some("Max"), 5, 8),
                (UnitKind::Function, Some("P2::Run"), 9, 11),
                (UnitKind::Function, Some("c_fn"), 13, 13),
            ]
        );
    }

    #[test]
    fn broken_input_falls_back_to_whole_file() {
        let src = "int f( {{{ \n ]] return;\n";
        let units = segment(&file(src), &CodeTokenizer);
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].kind, UnitKind::WholeFile);
    }

    #[test]
    fn units_are_exact_line_slices_and_ids_are_global() {
        let a = SourceFile::new("b.cc", "int f() { return 1; }\nint g() { return 2; }\n", &CodeTokenizer);
        let b = SourceFile::new("a.h", "void h(int);\n", &CodeTokenizer);
        let files = vec![a, b];
        let units = segment_all(&files, &CodeTokenizer);
        assert_eq!(units.iter().map(|u| u.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(units[0].source_path, "a.h");
        for u in &units {
            let f = files.iter().find(|f| f.path == u.source_path).unwrap();
            assert!(u.start_line <= u.end_line && u.end_line <= f.line_count);
            assert_eq!(u.content, f.line_slice(u.start_line, u.end_line));
        }
    }

    #[test]
    fn empty_file_has_no_units() {
        assert!(segment(&file(""), &CodeTokenizer).is_empty());
    }
}
