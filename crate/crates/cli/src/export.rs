//! Graph documents in GraphML, DOT and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ridgenet_core::fused::{DiffNetwork, DiffTag};
use ridgenet_core::netstats::{CommunityStructure, Network, NodeStats};
use ridgenet_core::sparsify::Edge;
use ridgenet_core::SymMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input, CliResult};
use crate::io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GraphFormat {
    Graphml,
    Dot,
    Json,
}

impl GraphFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Graphml => "graphml",
            Self::Dot => "dot",
            Self::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stats: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn of(w: f64) -> Self {
        if w < 0.0 {
            Self::Neg
        } else {
            Self::Pos
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pos => "pos",
            Self::Neg => "neg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    pub sign: Sign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<DiffTag>,
}

/// Exportable graph: labelled nodes with optional attributes and weighted,
/// signed, optionally tagged edges. Its JSON form is also the network input
/// format of `diff`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

fn bare_nodes(labels: &[String]) -> Vec<NodeRecord> {
    labels
        .iter()
        .map(|l| NodeRecord {
            label: l.clone(),
            community: None,
            stats: BTreeMap::new(),
        })
        .collect()
}

impl GraphDoc {
    pub fn from_network(net: &Network) -> Self {
        Self {
            nodes: bare_nodes(net.labels()),
            edges: net
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    source: e.i,
                    target: e.j,
                    weight: e.weight,
                    sign: Sign::of(e.weight),
                    tag: None,
                })
                .collect(),
        }
    }

    pub fn from_diff(diff: &DiffNetwork) -> Self {
        Self {
            nodes: bare_nodes(&diff.nodes),
            edges: diff
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    source: e.i,
                    target: e.j,
                    weight: e.weight,
                    sign: Sign::of(e.weight),
                    tag: Some(e.tag),
                })
                .collect(),
        }
    }

    pub fn with_communities(mut self, c: &CommunityStructure) -> Self {
        for (node, &m) in self.nodes.iter_mut().zip(&c.membership) {
            node.community = Some(m);
        }
        self
    }

    /// Attaches statistics by node label; nodes without a row are left alone.
    pub fn with_stats(mut self, stats: &NodeStats) -> Self {
        let table = stats.to_table("");
        let row_of: BTreeMap<&str, usize> = table.rows.iter().enumerate().map(|(k, r)| (r.as_str(), k)).collect();
        for node in &mut self.nodes {
            if let Some(&k) = row_of.get(node.label.as_str()) {
                for (col, values) in &table.columns {
                    node.stats.insert(col.clone(), values[k]);
                }
            }
        }
        self
    }

    pub fn labels(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.label.clone()).collect()
    }

    /// Edge set as `(min, max, weight)` triples, sorted.
    pub fn edge_set(&self) -> Vec<(usize, usize, f64)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .map(|e| (e.source.min(e.target), e.source.max(e.target), e.weight))
            .collect();
        v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        v
    }

    pub fn to_network(&self) -> CliResult<Network> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                i: e.source,
                j: e.target,
                weight: e.weight,
            })
            .collect();
        Network::from_edges(self.labels(), edges).map_err(|e| input(e.to_string()))
    }

    /// Weighted adjacency over `labels` (zero diagonal), for comparing
    /// graphs whose node sets differ.
    pub fn weights_over(&self, labels: &[String]) -> CliResult<SymMatrix> {
        let pos: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
        let mut w = nalgebra::DMatrix::zeros(labels.len(), labels.len());
        for e in &self.edges {
            let (Some(a), Some(b)) = (self.nodes.get(e.source), self.nodes.get(e.target)) else {
                return Err(input(format!("edge ({}, {}) refers to a missing node", e.source, e.target)));
            };
            let (i, j) = (pos[a.label.as_str()], pos[b.label.as_str()]);
            w[(i, j)] = e.weight;
            w[(j, i)] = e.weight;
        }
        SymMatrix::new(w, labels.to_vec()).map_err(|e| input(e.to_string()))
    }

    fn stat_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = Vec::new();
        for n in &self.nodes {
            for k in n.stats.keys() {
                if !keys.contains(k) {
                    keys.push(k.clone());
                }
            }
        }
        keys
    }

    pub fn render(&self, format: GraphFormat) -> String {
        match format {
            GraphFormat::Graphml => self.to_graphml(),
            GraphFormat::Dot => self.to_dot(),
            GraphFormat::Json => self.to_json(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| input(format!("invalid network JSON: {e}")))
    }

    pub fn to_graphml(&self) -> String {
        let stat_keys = self.stat_keys();
        let has_community = self.nodes.iter().any(|n| n.community.is_some());
        let has_tag = self.edges.iter().any(|e| e.tag.is_some());
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        s.push_str("  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n");
        if has_community {
            s.push_str("  <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"int\"/>\n");
        }
        for (k, name) in stat_keys.iter().enumerate() {
            let _ = writeln!(
                s,
                "  <key id=\"s{k}\" for=\"node\" attr.name=\"{}\" attr.type=\"double\"/>",
                xml_escape(name)
            );
        }
        s.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
        s.push_str("  <key id=\"sign\" for=\"edge\" attr.name=\"sign\" attr.type=\"string\"/>\n");
        if has_tag {
            s.push_str("  <key id=\"tag\" for=\"edge\" attr.name=\"tag\" attr.type=\"string\"/>\n");
        }
        s.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
        for (k, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "    <node id=\"n{k}\">");
            let _ = writeln!(s, "      <data key=\"label\">{}</data>", xml_escape(&n.label));
            if let Some(c) = n.community {
                let _ = writeln!(s, "      <data key=\"community\">{c}</data>");
            }
            for (k, name) in stat_keys.iter().enumerate() {
                if let Some(v) = n.stats.get(name) {
                    let _ = writeln!(s, "      <data key=\"s{k}\">{}</data>", fmt_f64(*v));
                }
            }
            s.push_str("    </node>\n");
        }
        for (k, e) in self.edges.iter().enumerate() {
            let _ = writeln!(s, "    <edge id=\"e{k}\" source=\"n{}\" target=\"n{}\">", e.source, e.target);
            let _ = writeln!(s, "      <data key=\"weight\">{}</data>", fmt_f64(e.weight));
            let _ = writeln!(s, "      <data key=\"sign\">{}</data>", e.sign.as_str());
            if let Some(t) = e.tag {
                let _ = writeln!(s, "      <data key=\"tag\">{}</data>", t.as_str());
            }
            s.push_str("    </edge>\n");
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }

    pub fn to_dot(&self) -> String {
        let stat_keys = self.stat_keys();
        let mut s = String::from("graph G {\n");
        for (k, n) in self.nodes.iter().enumerate() {
            let mut attrs = vec![format!("label=\"{}\"", dot_escape(&n.label))];
            if let Some(c) = n.community {
                attrs.push(format!("community={c}"));
            }
            for name in &stat_keys {
                if let Some(v) = n.stats.get(name) {
                    attrs.push(format!("\"{}\"=\"{}\"", dot_escape(name), fmt_f64(*v)));
                }
            }
            let _ = writeln!(s, "  n{k} [{}];", attrs.join(", "));
        }
        for e in &self.edges {
            let style = match e.sign {
                Sign::Pos => "solid",
                Sign::Neg => "dashed",
            };
            let mut attrs = vec![
                format!("weight=\"{}\"", fmt_f64(e.weight)),
                format!("sign=\"{}\"", e.sign.as_str()),
                format!("style={style}"),
            ];
            if let Some(t) = e.tag {
                attrs.push(format!("tag=\"{}\"", t.as_str()));
            }
            let _ = writeln!(s, "  n{} -- n{} [{}];", e.source, e.target, attrs.join(", "));
        }
        s.push_str("}\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn chain() -> Network {
        let omega = SymMatrix::new(
            dmatrix![1.0, 0.3, 0.0; 0.3, 1.0, -0.3; 0.0, -0.3, 1.0],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        Network::from_precision(&omega, false).unwrap()
    }

    #[test]
    fn chain_has_one_negative_edge() {
        let doc = GraphDoc::from_network(&chain());
        let neg: Vec<_> = doc.edges.iter().filter(|e| e.sign == Sign::Neg).collect();
        assert_eq!(neg.len(), 1);
        assert_eq!((neg[0].source, neg[0].target), (0, 1));
        assert_eq!(doc.to_graphml().matches("<data key=\"sign\">neg</data>").count(), 1);
        assert_eq!(doc.to_dot().matches("sign=\"neg\"").count(), 1);
    }

    #[test]
    fn empty_network_documents() {
        let net = Network::from_edges(vec![], vec![]).unwrap();
        let doc = GraphDoc::from_network(&net);
        assert!(doc.to_graphml().contains("<graph id=\"G\" edgedefault=\"undirected\">"));
        assert!(!doc.to_graphml().contains("<edge"));
        assert_eq!(doc.to_dot(), "graph G {\n}\n");
        assert_eq!(GraphDoc::from_json(&doc.to_json()).unwrap(), doc);
    }

    #[test]
    fn labels_are_escaped() {
        let net = Network::from_edges(
            vec!["a<&>\"'".into(), "q\"d".into()],
            vec![Edge { i: 0, j: 1, weight: 0.5 }],
        )
        .unwrap();
        let doc = GraphDoc::from_network(&net);
        assert!(doc.to_graphml().contains("a&lt;&amp;&gt;&quot;&apos;"));
        assert!(doc.to_dot().contains("label=\"q\\\"d\""));
    }

    #[test]
    fn attributes_and_weights_over() {
        let net = chain();
        let stats = ridgenet_core::netstats::network_stats(&net).unwrap();
        let comm = ridgenet_core::netstats::communities(&net).unwrap();
        let doc = GraphDoc::from_network(&net).with_stats(&stats).with_communities(&comm);
        assert_eq!(doc.nodes[1].stats["degree"], 2.0);
        assert!(doc.nodes.iter().all(|n| n.community.is_some()));
        let labels: Vec<String> = vec!["c".into(), "z".into(), "a".into(), "b".into()];
        let w = doc.weights_over(&labels).unwrap();
        assert_eq!(w.get(0, 3), 0.3);
        assert_eq!(w.get(2, 3), -0.3);
        assert_eq!(w.get(1, 2), 0.0);
    }
}
