//! Concept graph, interdisciplinary link set, and the misconception rules
//! ("bug rules") hosted on concepts.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ConceptId = usize;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read graph document {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("graph document does not parse: {0}")]
    Parse(String),
    #[error("unsupported graph document version {0}")]
    Version(u32),
    #[error("concept ids must be dense 0..{count}, found {found}")]
    NonDenseConcepts { count: usize, found: usize },
    #[error("misconception ids must be dense 0..{count}, found {found}")]
    NonDenseMisconceptions { count: usize, found: usize },
    #[error("dangling concept id {0}")]
    DanglingId(ConceptId),
    #[error("concept {0} has an empty discipline tag")]
    EmptyDiscipline(ConceptId),
    #[error("prerequisite cycle: concept {0} cannot be ordered")]
    PrerequisiteCycle(ConceptId),
    #[error("same-discipline link between {0} and {1}")]
    SameDisciplineLink(ConceptId, ConceptId),
    #[error("misconception {0} has a negative or non-finite coefficient")]
    BadCoefficient(usize),
    #[error("a graph needs at least 2 concepts, got {0}")]
    TooFewConcepts(usize),
    #[error("at least one discipline is required")]
    NoDisciplines,
    #[error("link density {0} outside [0, 1]")]
    BadDensity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptNode {
    pub id: ConceptId,
    pub name: String,
    pub discipline: String,
    #[serde(default)]
    pub prerequisites: Vec<ConceptId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisconceptionRule {
    pub id: usize,
    #[serde(rename = "host")]
    pub host_concept: ConceptId,
    #[serde(default)]
    pub description: String,
    /// Sensitivity to ambiguous instruction.
    #[serde(rename = "beta")]
    pub beta_ambiguity: f64,
    /// Resilience conferred by mastery of the host concept.
    #[serde(rename = "gamma")]
    pub gamma_resilience: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LinkEntry {
    pair: [ConceptId; 2],
}

/// On-disk layout of a graph document (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    #[serde(default, rename = "concept")]
    pub concepts: Vec<ConceptNode>,
    #[serde(default, rename = "link")]
    links: Vec<LinkEntry>,
    #[serde(default, rename = "misconception")]
    pub misconceptions: Vec<MisconceptionRule>,
}

/// Validated, immutable knowledge graph.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    concepts: Vec<ConceptNode>,
    cross_links: BTreeSet<(ConceptId, ConceptId)>,
    misconceptions: Vec<MisconceptionRule>,
    rules_by_host: Vec<Vec<usize>>,
}

fn ordered(a: ConceptId, b: ConceptId) -> (ConceptId, ConceptId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl KnowledgeGraph {
    /// Validates the parts and assembles a graph. Concepts and rules may be
    /// given in any order; ids must still be dense.
    pub fn new(
        mut concepts: Vec<ConceptNode>,
        links: impl IntoIterator<Item = (ConceptId, ConceptId)>,
        mut misconceptions: Vec<MisconceptionRule>,
    ) -> Result<Self, GraphError> {
        let c = concepts.len();
        if c < 2 {
            return Err(GraphError::TooFewConcepts(c));
        }
        concepts.sort_by_key(|n| n.id);
        for (i, node) in concepts.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::NonDenseConcepts {
                    count: c,
                    found: node.id,
                });
            }
            if node.discipline.trim().is_empty() {
                return Err(GraphError::EmptyDiscipline(i));
            }
            if let Some(&bad) = node.prerequisites.iter().find(|&&p| p >= c) {
                return Err(GraphError::DanglingId(bad));
            }
        }
        if let Some(node) = find_cycle(&concepts) {
            return Err(GraphError::PrerequisiteCycle(node));
        }

        let mut cross_links = BTreeSet::new();
        for (a, b) in links {
            for id in [a, b] {
                if id >= c {
                    return Err(GraphError::DanglingId(id));
                }
            }
            if a == b || concepts[a].discipline == concepts[b].discipline {
                return Err(GraphError::SameDisciplineLink(a, b));
            }
            cross_links.insert(ordered(a, b));
        }

        misconceptions.sort_by_key(|m| m.id);
        let k = misconceptions.len();
        let mut rules_by_host = vec![Vec::new(); c];
        for (i, rule) in misconceptions.iter().enumerate() {
            if rule.id != i {
                return Err(GraphError::NonDenseMisconceptions {
                    count: k,
                    found: rule.id,
                });
            }
            if rule.host_concept >= c {
                return Err(GraphError::DanglingId(rule.host_concept));
            }
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(rule.beta_ambiguity) || !ok(rule.gamma_resilience) {
                return Err(GraphError::BadCoefficient(i));
            }
            rules_by_host[rule.host_concept].push(i);
        }

        Ok(Self {
            concepts,
            cross_links,
            misconceptions,
            rules_by_host,
        })
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::Version(doc.version));
        }
        Self::new(
            doc.concepts,
            doc.links.into_iter().map(|l| (l.pair[0], l.pair[1])),
            doc.misconceptions,
        )
    }

    /// Parses and validates a TOML graph document.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument =
            toml::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            version: GRAPH_FORMAT_VERSION,
            concepts: self.concepts.clone(),
            links: self
                .cross_links
                .iter()
                .map(|&(a, b)| LinkEntry { pair: [a, b] })
                .collect(),
            misconceptions: self.misconceptions.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_document()).expect("graph document serializes")
    }

    /// Deterministic synthetic graph for fixtures. Concepts are assigned to
    /// disciplines round-robin, prerequisites only point to lower ids (so the
    /// relation is acyclic by construction), every cross-discipline pair is
    /// linked with probability `link_density`, and each concept hosts one
    /// misconception with probability 1/2.
    pub fn synth(
        concepts: usize,
        disciplines: usize,
        link_density: f64,
        seed: u64,
    ) -> Result<Self, GraphError> {
        if concepts < 2 {
            return Err(GraphError::TooFewConcepts(concepts));
        }
        if disciplines == 0 {
            return Err(GraphError::NoDisciplines);
        }
        if !(0.0..=1.0).contains(&link_density) {
            return Err(GraphError::BadDensity(link_density));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<ConceptNode> = (0..concepts)
            .map(|id| {
                let discipline = format!("discipline-{}", id % disciplines);
                let prerequisites = (0..id)
                    .filter(|&p| p % disciplines == id % disciplines && rng.random::<f64>() < 0.3)
                    .collect();
                ConceptNode {
                    id,
                    name: format!("concept-{id}"),
                    discipline,
                    prerequisites,
                }
            })
            .collect();
        let mut links = Vec::new();
        for a in 0..concepts {
            for b in (a + 1)..concepts {
                let draw = rng.random::<f64>();
                if nodes[a].discipline != nodes[b].discipline && draw < link_density {
                    links.push((a, b));
                }
            }
        }
        let mut rules = Vec::new();
        for host in 0..concepts {
            if rng.random::<f64>() < 0.5 {
                rules.push(MisconceptionRule {
                    id: rules.len(),
                    host_concept: host,
                    description: format!("bug rule on concept-{host}"),
                    beta_ambiguity: rng.random_range(2.0..6.0),
                    gamma_resilience: rng.random_range(2.0..6.0),
                });
            }
        }
        Self::new(nodes, links, rules)
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn misconception_count(&self) -> usize {
        self.misconceptions.len()
    }

    pub fn concepts(&self) -> &[ConceptNode] {
        &self.concepts
    }

    pub fn misconceptions(&self) -> &[MisconceptionRule] {
        &self.misconceptions
    }

    pub fn rule(&self, id: usize) -> &MisconceptionRule {
        &self.misconceptions[id]
    }

    /// Rule ids hosted on `concept`.
    pub fn rules_on(&self, concept: ConceptId) -> &[usize] {
        &self.rules_by_host[concept]
    }

    pub fn cross_links(&self) -> impl Iterator<Item = (ConceptId, ConceptId)> + '_ {
        self.cross_links.iter().copied()
    }

    pub fn link_count(&self) -> usize {
        self.cross_links.len()
    }

    pub fn is_valid_link(&self, a: ConceptId, b: ConceptId) -> Result<bool, GraphError> {
        for id in [a, b] {
            if id >= self.concepts.len() {
                return Err(GraphError::DanglingId(id));
            }
        }
        Ok(a != b && self.cross_links.contains(&ordered(a, b)))
    }

    /// Same as [`is_valid_link`](Self::is_valid_link) for ids already known to be in range.
    pub fn linked(&self, a: ConceptId, b: ConceptId) -> bool {
        a != b && self.cross_links.contains(&ordered(a, b))
    }

    /// Kahn topological order of the prerequisite relation.
    pub fn topological_order(&self) -> Vec<ConceptId> {
        kahn(&self.concepts).expect("validated graph is acyclic")
    }
}

fn kahn(concepts: &[ConceptNode]) -> Option<Vec<ConceptId>> {
    let c = concepts.len();
    let mut indegree = vec![0usize; c];
    let mut dependents = vec![Vec::new(); c];
    for node in concepts {
        for &p in &node.prerequisites {
            indegree[node.id] += 1;
            dependents[p].push(node.id);
        }
    }
    let mut queue: VecDeque<_> = (0..c).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(c);
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                queue.push_back(d);
            }
        }
    }
    (order.len() == c).then_some(order)
}

/// Returns some concept on a prerequisite cycle, if any.
fn find_cycle(concepts: &[ConceptNode]) -> Option<ConceptId> {
    if kahn(concepts).is_some() {
        return None;
    }
    let mut placed = vec![false; concepts.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for node in concepts {
            if !placed[node.id] && node.prerequisites.iter().all(|&p| placed[p]) {
                placed[node.id] = true;
                changed = true;
            }
        }
    }
    placed.iter().position(|&p| !p)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SIX: &str = r#"
version = 1

[[concept]]
id = 0
name = "photosynthesis"
discipline = "biology"

[[concept]]
id = 1
name = "cell respiration"
discipline = "biology"
prerequisites = [0]

[[concept]]
id = 2
name = "food chains"
discipline = "biology"
prerequisites = [0]

[[concept]]
id = 3
name = "climate zones"
discipline = "geography"

[[concept]]
id = 4
name = "soil formation"
discipline = "geography"
prerequisites = [3]

[[concept]]
id = 5
name = "water cycle"
discipline = "geography"

[[link]]
pair = [0, 3]

[[link]]
pair = [2, 4]

[[link]]
pair = [1, 5]

[[misconception]]
id = 0
host = 0
description = "plants get their mass from the soil"
beta = 4.0
gamma = 4.0

[[misconception]]
id = 1
host = 1
description = "only animals respire"
beta = 3.0
gamma = 5.0

[[misconception]]
id = 2
host = 3
description = "climate equals weather"
beta = 4.0
gamma = 3.0

[[misconception]]
id = 3
host = 5
description = "clouds are water vapour"
beta = 5.0
gamma = 4.0
"#;

    #[test]
    fn builds_six_concept_fixture() {
        let g = KnowledgeGraph::parse(SIX).unwrap();
        assert_eq!(g.concept_count(), 6);
        assert_eq!(g.misconception_count(), 4);
        assert_eq!(g.link_count(), 3);
        assert_eq!(g.rules_on(0), &[0]);
        assert!(g.rules_on(2).is_empty());
    }

    #[test]
    fn rejects_prerequisite_cycle() {
        let text = r#"
version = 1
[[concept]]
id = 0
name = "a"
discipline = "x"
prerequisites = [1]
[[concept]]
id = 1
name = "b"
discipline = "x"
prerequisites = [0]
"#;
        let err = KnowledgeGraph::parse(text).unwrap_err();
        assert!(matches!(err, GraphError::PrerequisiteCycle(_)));
        assert!(err.to_string().contains("prerequisite cycle"));
    }

    #[test]
    fn rejects_same_discipline_link() {
        let text = SIX.replace("pair = [0, 3]", "pair = [0, 1]");
        let err = KnowledgeGraph::parse(&text).unwrap_err();
        assert!(err.to_string().contains("same-discipline link"));
    }

    #[test]
    fn rejects_dangling_and_non_dense_ids() {
        let text = SIX.replace("pair = [2, 4]", "pair = [2, 9]");
        assert!(matches!(
            KnowledgeGraph::parse(&text),
            Err(GraphError::DanglingId(9))
        ));
        let text = SIX.replace("id = 5\n", "id = 7\n");
        assert!(matches!(
            KnowledgeGraph::parse(&text),
            Err(GraphError::NonDenseConcepts { .. })
        ));
        let text = SIX.replace("host = 5", "host = 6");
        assert!(matches!(
            KnowledgeGraph::parse(&text),
            Err(GraphError::DanglingId(6))
        ));
        assert!(matches!(
            KnowledgeGraph::parse("version = 1\n[[concept]\n"),
            Err(GraphError::Parse(_))
        ));
    }

    #[test]
    fn link_lookup() {
        let g = KnowledgeGraph::parse(SIX).unwrap();
        assert!(g.is_valid_link(0, 3).unwrap());
        assert!(g.is_valid_link(3, 0).unwrap());
        assert!(!g.is_valid_link(0, 4).unwrap());
        assert!(!g.is_valid_link(2, 2).unwrap());
        assert!(g.is_valid_link(0, 6).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let a = KnowledgeGraph::synth(6, 2, 0.5, 7).unwrap();
        let b = KnowledgeGraph::synth(6, 2, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(KnowledgeGraph::synth(1, 1, 0.5, 7).is_err());
    }

    #[test]
    fn synth_single_discipline_has_no_links() {
        let g = KnowledgeGraph::synth(2, 1, 1.0, 1).unwrap();
        assert_eq!(g.link_count(), 0);
    }

    #[test]
    fn synth_links_cross_disciplines() {
        let g = KnowledgeGraph::synth(10, 2, 0.5, 3).unwrap();
        assert!(g.link_count() > 0);
        for (a, b) in g.cross_links() {
            assert_ne!(g.concepts()[a].discipline, g.concepts()[b].discipline);
        }
    }

    #[test]
    fn toml_round_trip() {
        let g = KnowledgeGraph::synth(8, 3, 0.4, 11).unwrap();
        let back = KnowledgeGraph::parse(&g.to_toml()).unwrap();
        assert_eq!(g, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn synth_graphs_are_valid(c in 2usize..24, d in 1usize..5, dens in 0.0f64..=1.0, seed in any::<u64>()) {
                let g = KnowledgeGraph::synth(c, d, dens, seed).unwrap();
                let order = g.topological_order();
                let mut pos = vec![0; c];
                for (i, &n) in order.iter().enumerate() { pos[n] = i; }
                for node in g.concepts() {
                    for &p in &node.prerequisites { prop_assert!(pos[p] < pos[node.id]); }
                }
                for rule in g.misconceptions() { prop_assert!(rule.host_concept < c); }
                for a in 0..c {
                    for b in 0..c {
                        prop_assert_eq!(g.is_valid_link(a, b).unwrap(), g.is_valid_link(b, a).unwrap());
                    }
                }
            }
        }
    }
}
