//! Text-attributed graph data model, synthetic generator, neighbor sampling,
//! and node splits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Undirected simple graph where every node carries a text attribute and,
/// optionally, a topic label.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    num_nodes: usize,
    /// Normalized to `u < v`, sorted, no duplicates.
    edges: Vec<(NodeId, NodeId)>,
    text_attrs: Vec<String>,
    labels: Option<Vec<usize>>,
    topic_names: Option<Vec<String>>,
    adj: Vec<Vec<NodeId>>,
}

impl TextAttributedGraph {
    pub fn new(
        num_nodes: usize,
        edges: Vec<(NodeId, NodeId)>,
        text_attrs: Vec<String>,
        labels: Option<Vec<usize>>,
        topic_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidConfig("graph must have at least one node".into()));
        }
        if text_attrs.len() != num_nodes {
            return Err(Error::InvalidConfig(format!(
                "expected {} text attributes, got {}",
                num_nodes,
                text_attrs.len()
            )));
        }
        if let Some(empty) = text_attrs.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "node {empty} has an empty text attribute"
            )));
        }
        let mut edges: Vec<(NodeId, NodeId)> = edges
            .into_iter()
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        for window in edges.windows(2) {
            if window[0] == window[1] {
                return Err(Error::InvalidConfig(format!(
                    "duplicate edge ({}, {})",
                    window[0].0, window[0].1
                )));
            }
        }
        for &(u, v) in &edges {
            if u == v {
                return Err(Error::InvalidConfig(format!("self-loop at node {u}")));
            }
            if v >= num_nodes {
                return Err(Error::InvalidNode { node: v, num_nodes });
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != num_nodes {
                return Err(Error::InvalidConfig("label count must equal node count".into()));
            }
            let names = topic_names.as_ref().ok_or_else(|| {
                Error::InvalidConfig("labels present but topic_names missing".into())
            })?;
            if let Some(&bad) = labels.iter().find(|&&l| l >= names.len()) {
                return Err(Error::InvalidConfig(format!(
                    "label {bad} out of range for {} topics",
                    names.len()
                )));
            }
        }
        let mut adj = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self {
            num_nodes,
            edges,
            text_attrs,
            labels,
            topic_names,
            adj,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn text(&self, v: NodeId) -> &str {
        &self.text_attrs[v]
    }

    pub fn texts(&self) -> &[String] {
        &self.text_attrs
    }

    pub fn label(&self, v: NodeId) -> Option<usize> {
        self.labels.as_ref().map(|l| l[v])
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn topic_names(&self) -> Option<&[String]> {
        self.topic_names.as_deref()
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v]
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v >= self.num_nodes {
            return Err(Error::InvalidNode {
                node: v,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }
}

/// One topic of the synthetic generator: a display name (used only by the
/// evaluation label set, never emitted into node text) plus its phrase pool.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopicLexicon {
    pub name: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticTagConfig {
    pub num_nodes: usize,
    pub num_topics: usize,
    pub intra_topic_edge_prob: f64,
    pub inter_topic_edge_prob: f64,
    /// Inclusive range for the number of phrases sampled per node.
    pub phrases_per_node: (usize, usize),
    pub topic_lexicons: Vec<TopicLexicon>,
    pub seed: u64,
}

impl SyntheticTagConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::InvalidConfig("num_nodes must be positive".into()));
        }
        if self.num_topics == 0 || self.num_topics != self.topic_lexicons.len() {
            return Err(Error::InvalidConfig(format!(
                "num_topics {} must match lexicon count {}",
                self.num_topics,
                self.topic_lexicons.len()
            )));
        }
        let (p_in, p_out) = (self.intra_topic_edge_prob, self.inter_topic_edge_prob);
        if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out >= p_in {
            return Err(Error::InvalidConfig(format!(
                "edge probabilities must satisfy 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
            )));
        }
        let (lo, hi) = self.phrases_per_node;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "phrases_per_node range ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for lex in &self.topic_lexicons {
            let distinct: HashSet<&str> = lex.phrases.iter().map(|s| s.as_str()).collect();
            if distinct.len() < 4 {
                return Err(Error::InvalidConfig(format!(
                    "topic {:?} needs at least 4 distinct phrases",
                    lex.name
                )));
            }
            for p in &distinct {
                if !seen.insert(p) {
                    return Err(Error::InvalidConfig(format!(
                        "phrase {p:?} appears in more than one topic lexicon"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Built-in lexicons: ten topics, eight phrases each, pairwise disjoint and
/// disjoint from the topic names.
pub fn default_topic_lexicons(num_topics: usize) -> Result<Vec<TopicLexicon>> {
    const TOPICS: [(&str, [&str; 8]); 10] = [
        ("automotive", ["cars", "wheels", "engine", "garage", "highway", "driving", "motor", "fuel"]),
        ("cooking", ["recipe", "oven", "baking", "spices", "kitchen", "flavor", "dinner", "ingredients"]),
        ("astronomy", ["stars", "telescope", "galaxy", "orbit", "planets", "comet", "nebula", "eclipse"]),
        ("gardening", ["soil", "flowers", "pruning", "seeds", "compost", "greenhouse", "blossom", "weeds"]),
        ("music", ["guitar", "melody", "concert", "rhythm", "chords", "drums", "singing", "orchestra"]),
        ("fishing", ["rods", "bait", "lakes", "trout", "reels", "hooks", "salmon", "angling"]),
        ("photography", ["camera", "lens", "shutter", "aperture", "tripod", "portrait", "exposure", "darkroom"]),
        ("hiking", ["trails", "summit", "backpack", "ridge", "compass", "boots", "elevation", "wilderness"]),
        ("chess", ["openings", "endgame", "checkmate", "gambit", "bishop", "knights", "tactics", "castling"]),
        ("pottery", ["clay", "kiln", "glaze", "ceramics", "sculpting", "firing", "molding", "earthenware"]),
    ];
    if num_topics == 0 || num_topics > TOPICS.len() {
        return Err(Error::InvalidConfig(format!(
            "default lexicons cover 1..={} topics, requested {num_topics}",
            TOPICS.len()
        )));
    }
    Ok(TOPICS[..num_topics]
        .iter()
        .map(|(name, phrases)| TopicLexicon {
            name: (*name).to_string(),
            phrases: phrases.iter().map(|p| (*p).to_string()).collect(),
        })
        .collect())
}

/// Generate a homophilous labeled graph: topics uniform per node, texts from
/// the node's topic lexicon, each unordered pair an edge with `p_in` or
/// `p_out`. Identical config (seed included) yields a bit-identical graph.
pub fn generate_synthetic_tag(config: &SyntheticTagConfig) -> Result<TextAttributedGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_nodes;

    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..config.num_topics)).collect();

    let mut texts = Vec::with_capacity(n);
    let (lo, hi) = config.phrases_per_node;
    for &topic in &labels {
        let lex = &config.topic_lexicons[topic].phrases;
        let count = rng.gen_range(lo..=hi);
        let phrases: Vec<&str> = (0..count)
            .map(|_| lex[rng.gen_range(0..lex.len())].as_str())
            .collect();
        texts.push(phrases.join(" "));
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                config.intra_topic_edge_prob
            } else {
                config.inter_topic_edge_prob
            };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let topic_names = config
        .topic_lexicons
        .iter()
        .map(|l| l.name.clone())
        .collect();
    TextAttributedGraph::new(n, edges, texts, Some(labels), Some(topic_names))
}

/// Draw exactly `fanout` neighbor ids uniformly with replacement; an isolated
/// node falls back to itself.
pub fn sample_neighbors(
    graph: &TextAttributedGraph,
    v: NodeId,
    fanout: usize,
    rng: &mut impl Rng,
) -> Result<Vec<NodeId>> {
    graph.check_node(v)?;
    if fanout == 0 {
        return Err(Error::InvalidConfig("fanout must be at least 1".into()));
    }
    let nbrs = graph.neighbors(v);
    if nbrs.is_empty() {
        return Ok(vec![v; fanout]);
    }
    Ok((0..fanout).map(|_| nbrs[rng.gen_range(0..nbrs.len())]).collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitFractions {
    /// Fraction of nodes assigned to the producer set V_P.
    pub producer: f64,
    /// Fraction of nodes assigned to the evaluation test set.
    pub eval: f64,
    /// Fraction of V_P held out of stage-1 training for retrieval validation.
    pub align_holdout: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            producer: 0.8,
            eval: 0.2,
            align_holdout: 0.2,
        }
    }
}

/// Disjoint node assignments; `producer` is all of V_P and `align_holdout`
/// is the subset of V_P excluded from stage-1 training batches.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeSplit {
    pub producer: Vec<NodeId>,
    pub align_holdout: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl NodeSplit {
    pub fn producer_train(&self) -> Vec<NodeId> {
        let holdout: HashSet<NodeId> = self.align_holdout.iter().copied().collect();
        self.producer
            .iter()
            .copied()
            .filter(|v| !holdout.contains(v))
            .collect()
    }

    pub fn contains_producer(&self, v: NodeId) -> bool {
        self.producer.binary_search(&v).is_ok()
    }
}

pub fn split_nodes(
    graph: &TextAttributedGraph,
    fractions: SplitFractions,
    seed: u64,
) -> Result<NodeSplit> {
    let SplitFractions {
        producer,
        eval,
        align_holdout,
    } = fractions;
    for (name, f) in [("producer", producer), ("eval", eval), ("align_holdout", align_holdout)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidConfig(format!(
                "{name} fraction {f} out of [0, 1]"
            )));
        }
    }
    if producer + eval > 1.0 + 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "producer + eval fractions exceed 1 ({producer} + {eval})"
        )));
    }
    let n = graph.num_nodes();
    let mut ids: Vec<NodeId> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n_prod = (producer * n as f64).round() as usize;
    let n_test = ((eval * n as f64).round() as usize).min(n - n_prod);
    let mut producer_ids: Vec<NodeId> = ids[..n_prod].to_vec();
    let mut test_ids: Vec<NodeId> = ids[n_prod..n_prod + n_test].to_vec();
    let n_hold = (align_holdout * n_prod as f64).round() as usize;
    let mut holdout_ids: Vec<NodeId> = ids[n_prod.saturating_sub(n_hold)..n_prod].to_vec();

    if test_ids.is_empty() {
        log::warn!("node split has an empty evaluation test set");
    }
    producer_ids.sort_unstable();
    test_ids.sort_unstable();
    holdout_ids.sort_unstable();
    Ok(NodeSplit {
        producer: producer_ids,
        align_holdout: holdout_ids,
        test: test_ids,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    format: String,
    num_nodes: usize,
    topics: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum GraphLine {
    #[serde(rename = "node")]
    Node {
        id: usize,
        text: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<usize>,
    },
    #[serde(rename = "edge")]
    Edge { u: usize, v: usize },
}

/// One JSON object per line: header, then nodes in id order, then edges with
/// `u < v`.
pub fn save_graph(graph: &TextAttributedGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = GraphHeader {
        format: "tag-v1".to_string(),
        num_nodes: graph.num_nodes(),
        topics: graph.topic_names().map(<[String]>::to_vec).unwrap_or_default(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for id in 0..graph.num_nodes() {
        let line = GraphLine::Node {
            id,
            text: graph.text(id).to_string(),
            label: graph.label(id),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    for &(u, v) in graph.edges() {
        serde_json::to_writer(&mut w, &GraphLine::Edge { u, v })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<TextAttributedGraph> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let first = first?;
    let header: GraphHeader = serde_json::from_str(&first)
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    if header.format != "tag-v1" {
        return Err(parse_err(1, format!("unsupported format {:?}", header.format)));
    }

    let mut texts: Vec<Option<String>> = vec![None; header.num_nodes];
    let mut labels: Vec<Option<usize>> = vec![None; header.num_nodes];
    let mut edges = Vec::new();
    let mut seen_edges = HashSet::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GraphLine = serde_json::from_str(&line)
            .map_err(|e| parse_err(lineno, format!("bad record: {e}")))?;
        match record {
            GraphLine::Node { id, text, label } => {
                if id >= header.num_nodes {
                    return Err(parse_err(lineno, format!("node id {id} out of range")));
                }
                if texts[id].is_some() {
                    return Err(parse_err(lineno, format!("duplicate node line for id {id}")));
                }
                texts[id] = Some(text);
                labels[id] = label;
            }
            GraphLine::Edge { u, v } => {
                if u >= v {
                    return Err(parse_err(lineno, format!("edge ({u}, {v}) must satisfy u < v")));
                }
                if !seen_edges.insert((u, v)) {
                    return Err(parse_err(lineno, format!("duplicate edge ({u}, {v})")));
                }
                edges.push((u, v));
            }
        }
    }
    if let Some(missing) = texts.iter().position(Option::is_none) {
        return Err(parse_err(0, format!("missing node line for id {missing}")));
    }
    let texts: Vec<String> = texts.into_iter().map(Option::unwrap).collect();
    let all_labeled = labels.iter().all(Option::is_some);
    let labels = if all_labeled {
        Some(labels.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    let topic_names = if header.topics.is_empty() {
        None
    } else {
        Some(header.topics)
    };
    TextAttributedGraph::new(header.num_nodes, edges, texts, labels, topic_names)
        .map_err(|e| parse_err(0, e.to_string()))
}
