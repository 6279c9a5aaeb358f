use super::{Node, WaitForGraph};

/// Graphviz rendering: goroutines as boxes, resources as ellipses.
pub fn export_dot(graph: &WaitForGraph) -> String {
    let mut out = String::from("digraph waitfor {\n");
    for n in graph.nodes() {
        let shape = match n {
            Node::G(_) => "box",
            Node::R(_) => "ellipse",
        };
        out.push_str(&format!("    {} [shape={shape}];\n", graph.name(n)));
    }
    for e in &graph.edges {
        out.push_str(&format!("    {} -> {} [label=\"{}\"];\n", graph.name(e.from), graph.name(e.to), e.kind.as_str()));
    }
    out.push_str("}\n");
    out
}
