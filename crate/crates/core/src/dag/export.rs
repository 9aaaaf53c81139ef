//! Deterministic text renderings of a history.

use std::fmt::Write;

use super::{DagError, ProvenanceDag};

/// One line per vertex, grouped by layer, rids sorted within each layer:
///
/// ```text
/// layer 0
///   <rid> creator=1 seq=0 key=k payload=gset{x} parents=[]
/// ```
pub fn to_layered_text(dag: &ProvenanceDag) -> Result<String, DagError> {
    let mut out = String::new();
    for (i, layer) in dag.topological_layers()?.iter().enumerate() {
        writeln!(out, "layer {i}").unwrap();
        for rid in layer {
            let c = &dag.vertices()[rid];
            let parents: Vec<String> = c.parents().iter().map(|p| p.short()).collect();
            writeln!(
                out,
                "  {rid} creator={} seq={} key={} payload={} parents=[{}]",
                c.creator(),
                c.creator_seq(),
                c.key(),
                c.payload(),
                parents.join(",")
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Graphviz export. Buffered records are drawn dashed, with their missing
/// parents as point nodes.
pub fn to_dot(dag: &ProvenanceDag) -> String {
    let mut out = String::from("digraph dcs {\n  rankdir=BT;\n  node [shape=box,fontname=monospace];\n");
    for c in dag.known() {
        let style = if dag.vertices().contains_key(&c.rid()) { "solid" } else { "dashed" };
        writeln!(
            out,
            "  \"{}\" [label=\"{}\\n{}#{} {}\\n{}\",style={style}];",
            c.rid(),
            c.rid().short(),
            c.creator(),
            c.creator_seq(),
            escape(c.key()),
            escape(&c.payload().to_string())
        )
        .unwrap();
    }
    for r in dag.dangling() {
        writeln!(out, "  \"{r}\" [shape=point];").unwrap();
    }
    for c in dag.known() {
        for p in c.parents() {
            writeln!(out, "  \"{p}\" -> \"{}\";", c.rid()).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
