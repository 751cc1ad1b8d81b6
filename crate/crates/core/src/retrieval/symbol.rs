//! Dependency retrieval: call extraction from a query fragment and
//! resolution of called names to definitions in the retrieval codebase.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tree_sitter::Node;

use super::RetrievalResult;
use crate::corpus::{RetrievalUnit, UnitKind};
use crate::cpp;
use crate::error::Result;
use crate::store::{self, FORMAT_VERSION};

const SYMBOL_TOKENIZER_ID: &str = "cpp-tree-sitter";

/// Keywords that error recovery occasionally turns into call expressions.
const NOT_CALLS: &[&str] = &[
    "if", "for", "while", "switch", "return", "sizeof", "catch", "alignof", "decltype",
    "static_assert", "defined",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolDef {
    pub unit_id: u32,
    pub source_path: String,
}

/// Unqualified function (or class) name -> defining units, ascending id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolIndex {
    defs: BTreeMap<String, Vec<SymbolDef>>,
}

impl SymbolIndex {
    pub fn lookup(&self, name: &str) -> &[SymbolDef] {
        self.defs.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn name_count(&self) -> usize {
        self.defs.len()
    }

    pub fn def_count(&self) -> usize {
        self.defs.values().map(Vec::len).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = SymbolHeader {
            format_version: FORMAT_VERSION,
            kind: "symbol".into(),
            tokenizer_id: SYMBOL_TOKENIZER_ID.into(),
        };
        let records: Vec<SymbolRecord> = self
            .defs
            .iter()
            .map(|(name, defs)| SymbolRecord {
                name: name.clone(),
                defs: defs.clone(),
            })
            .collect();
        store::write_jsonl(path, &header, &records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, records): (SymbolHeader, Vec<SymbolRecord>) = store::read_jsonl(path)?;
        store::check_version(path, header.format_version)?;
        if header.kind != "symbol" {
            return Err(store::format_err(path, "not a symbol index"));
        }
        Ok(Self {
            defs: records.into_iter().map(|r| (r.name, r.defs)).collect(),
        })
    }

    /// Restricts the index to the given unit ids.
    pub fn subset(&self, keep: &HashSet<u32>) -> Self {
        let defs = self
            .defs
            .iter()
            .filter_map(|(name, defs)| {
                let kept: Vec<SymbolDef> =
                    defs.iter().filter(|d| keep.contains(&d.unit_id)).cloned().collect();
                (!kept.is_empty()).then(|| (name.clone(), kept))
            })
            .collect();
        Self { defs }
    }
}

#[derive(Serialize, Deserialize)]
struct SymbolHeader {
    format_version: u32,
    kind: String,
    tokenizer_id: String,
}

#[derive(Serialize, Deserialize)]
struct SymbolRecord {
    name: String,
    defs: Vec<SymbolDef>,
}

/// Function units are indexed by their unqualified name. Class units are
/// indexed by the class name and by the names of their inline methods, since
/// the class unit is where those definitions live.
pub fn build_symbol_index(units: &[RetrievalUnit]) -> SymbolIndex {
    let mut defs: BTreeMap<String, Vec<SymbolDef>> = BTreeMap::new();
    let mut order: Vec<&RetrievalUnit> = units.iter().collect();
    order.sort_by_key(|u| u.id);
    for u in order {
        let mut names = Vec::new();
        match u.kind {
            UnitKind::Function => names.extend(u.name.as_deref().map(cpp::unqualified)),
            UnitKind::Class => {
                names.extend(u.name.as_deref().map(cpp::unqualified));
                names.extend(inline_methods(&u.content));
            }
            UnitKind::WholeFile => {}
        }
        let mut seen = HashSet::new();
        for n in names.into_iter().filter(|n| !n.is_empty()) {
            if seen.insert(n.to_string()) {
                defs.entry(n.to_string()).or_default().push(SymbolDef {
                    unit_id: u.id,
                    source_path: u.source_path.clone(),
                });
            }
        }
    }
    SymbolIndex { defs }
}

fn inline_methods(class_src: &str) -> Vec<&str> {
    let Some(tree) = cpp::parse(class_src) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    cpp::walk(tree.root_node(), |n| {
        if n.kind() == "function_definition"
            && n.parent().is_some_and(|p| p.kind() == "field_declaration_list")
        {
            out.extend(cpp::function_name(n, class_src).map(cpp::unqualified));
        }
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub name: String,
    /// Byte offset of the called name in the fragment.
    pub position: usize,
}

/// Called function names in source order, first occurrence only. Member and
/// qualified calls yield the bare name (`obj.Get()` -> `Get`).
pub fn extract_calls(context_text: &str) -> Vec<CallSite> {
    let Some(tree) = cpp::parse(context_text) else {
        return Vec::new();
    };
    let mut calls = Vec::new();
    cpp::walk(tree.root_node(), |n| {
        if n.kind() == "call_expression" {
            if let Some(site) = n.child_by_field_name("function").and_then(|f| callee(f, context_text)) {
                calls.push(site);
            }
        }
    });
    calls.sort_by_key(|c| c.position);
    let mut seen = HashSet::new();
    calls.retain(|c| seen.insert(c.name.clone()));
    calls
}

fn callee(func: Node<'_>, src: &str) -> Option<CallSite> {
    let name_node = match func.kind() {
        "identifier" => func,
        "field_expression" => func.child_by_field_name("field")?,
        "qualified_identifier" | "template_function" | "template_method" => {
            let mut n = func;
            // descend through ns::A::name and name<T>
            while let Some(inner) = n.child_by_field_name("name") {
                n = inner;
            }
            n
        }
        _ => return None,
    };
    let name = cpp::unqualified(cpp::text(name_node, src));
    if name.is_empty()
        || NOT_CALLS.contains(&name)
        || !name.chars().all(|c| c == '_' || c == '~' || c.is_alphanumeric())
    {
        return None;
    }
    Some(CallSite {
        name: name.to_string(),
        position: name_node.start_byte(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DependencyHits {
    /// One definition per resolvable call, in call order; score 1.0.
    pub results: Vec<RetrievalResult>,
    pub misses: usize,
}

/// Resolves calls to definitions. With several candidates the one whose
/// path shares the most leading components with `query_path` wins, then the
/// smallest unit id.
pub fn dependency_retrieve(sym: &SymbolIndex, calls: &[CallSite], query_path: &str) -> DependencyHits {
    let mut hits = DependencyHits::default();
    for call in calls {
        let best = sym
            .lookup(&call.name)
            .iter()
            .max_by(|a, b| {
                common_prefix(&a.source_path, query_path)
                    .cmp(&common_prefix(&b.source_path, query_path))
                    .then(b.unit_id.cmp(&a.unit_id))
            });
        match best {
            Some(def) => hits.results.push(RetrievalResult {
                unit_id: def.unit_id,
                score: 1.0,
                rank: hits.results.len() + 1,
            }),
            None => hits.misses += 1,
        }
    }
    hits
}

fn common_prefix(a: &str, b: &str) -> usize {
    a.split('/').zip(b.split('/')).take_while(|(x, y)| x == y).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(calls: &[CallSite]) -> Vec<&str> {
        calls.iter().map(|c| c.name.as_str()).collect()
    }

    fn unit(id: u32, path: &str, kind: UnitKind, name: &str, content: &str) -> RetrievalUnit {
        RetrievalUnit {
            id,
            source_path: path.into(),
            kind,
            name: Some(name.into()),
            start_line: 1,
            end_line: content.lines().count(),
            content: content.into(),
            token_count: 0,
        }
    }

    #[test]
    fn calls_in_order_deduplicated() {
        assert_eq!(names(&extract_calls("x = Foo(); Bar(x); Foo();")), vec!["Foo", "Bar"]);
    }

    #[test]
    fn no_calls() {
        assert!(extract_calls("int x = 1;\nx += 2;").is_empty());
        assert!(extract_calls("").is_empty());
    }

    #[test]
    fn member_and_qualified_calls_are_unqualified() {
        assert_eq!(names(&extract_calls("obj.Get();")), vec!["Get"]);
        assert_eq!(
            names(&extract_calls("p->Run(); ns::util::Helper(1); Make<int>(2); a.b().c();")),
            vec!["Run", "Helper", "Make", "b", "c"]
        );
    }

    #[test]
    fn fragment_with_dangling_braces() {
        let frag = "    for (auto& it : items_) {\n      n += it.Size();\n    }\n  }\n  return Compute(n);\n}\n\nint Other::Run() {\n  if (!ready_) Init();";
        assert_eq!(names(&extract_calls(frag)), vec!["Size", "Compute", "Init"]);
    }

    #[test]
    fn resolves_in_call_order_and_counts_misses() {
        let units = vec![
            unit(0, "lib/bar.cc", UnitKind::Function, "Bar", "int Bar() { return 1; }"),
            unit(1, "lib/foo.cc", UnitKind::Function, "ns::Foo", "int Foo() { return 2; }"),
        ];
        let sym = build_symbol_index(&units);
        let calls = extract_calls("Foo(); Bar(); Missing();");
        let hits = dependency_retrieve(&sym, &calls, "app/main.cc");
        assert_eq!(hits.results.iter().map(|r| r.unit_id).collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(hits.results.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2]);
        assert!(hits.results.iter().all(|r| r.score == 1.0));
        assert_eq!(hits.misses, 1);
    }

    #[test]
    fn collisions_prefer_nearest_path_then_lowest_id() {
        let units = vec![
            unit(4, "a/x/f.cc", UnitKind::Function, "F", "void F() {}"),
            unit(2, "b/f.cc", UnitKind::Function, "F", "void F() {}"),
            unit(3, "b/g.cc", UnitKind::Function, "F", "void F() {}"),
        ];
        let sym = build_symbol_index(&units);
        assert_eq!(sym.lookup("F").len(), 3);
        let calls = extract_calls("F();");
        assert_eq!(dependency_retrieve(&sym, &calls, "a/x/q.cc").results[0].unit_id, 4);
        // b/f.cc and b/g.cc tie on one shared component -> lowest id
        assert_eq!(dependency_retrieve(&sym, &calls, "b/q.cc").results[0].unit_id, 2);
        assert_eq!(dependency_retrieve(&sym, &calls, "c/q.cc").results[0].unit_id, 2);
    }

    #[test]
    fn class_units_answer_for_inline_methods() {
        let class = "class Store {\n public:\n  int Get() const { return v_; }\n  void Put(int v);\n  int v_;\n};";
        let sym = build_symbol_index(&[unit(7, "s.h", UnitKind::Class, "Store", class)]);
        assert_eq!(sym.lookup("Get")[0].unit_id, 7);
        assert_eq!(sym.lookup("Store")[0].unit_id, 7);
        // declared only
        assert!(sym.lookup("Put").is_empty());
    }

    #[test]
    fn persistence_and_subset() {
        let units = vec![
            unit(0, "a.cc", UnitKind::Function, "A", "void A() {}"),
            unit(1, "b.cc", UnitKind::Function, "B", "void B() {}"),
        ];
        let sym = build_symbol_index(&units);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        sym.save(&p).unwrap();
        assert_eq!(SymbolIndex::load(&p).unwrap(), sym);
        let only_b = sym.subset(&HashSet::from([1]));
        assert!(only_b.lookup("A").is_empty());
        assert_eq!(only_b.name_count(), 1);
    }
}
