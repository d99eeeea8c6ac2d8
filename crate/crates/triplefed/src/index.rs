//! The structural catalog of redistributed query shapes.
//!
//! The master and every worker hold a [`StructIndex`]: a forest of trees,
//! one per distinct root label, whose edges carry (predicate, parent
//! side, child label) and a globally unique id. All variable-rooted
//! redistributions share a single wildcard-rooted tree — every level-1
//! placement hashes the root binding with the same function, so their
//! data mixes soundly, and merging is what lets a later query combine
//! edges contributed by different redistributions. Structure is mirrored
//! exactly on every node: the master's copy carries no data (its role is
//! eligibility checking), while workers pair each edge id with a
//! triple-holding [`StorageModule`] owned by the worker runtime.
//!
//! New edges from a redistribution are staged inactive and flipped active
//! by a cluster-wide commit, so a failed redistribution rolls back to the
//! previous structure everywhere. Two lookups matter: the exact-match
//! walk deciding which edges of a new redistribution already exist (no
//! data moves for those), and the covering walk deciding whether a query
//! embeds into the active structure (a wildcard label covers a constant;
//! a constant covers only itself).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::planner::{Label, RedistTree, Side};
use crate::sparql::QueryGraph;

/// One edge of the mirrored structure.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEdge {
    pub id: u32,
    /// Tree position in the forest.
    pub tree: usize,
    /// Parent edge id; none for level 1.
    pub parent: Option<u32>,
    /// Child edge ids in creation order.
    pub children: Vec<u32>,
    pub level: u32,
    pub predicate: String,
    /// Which triple column binds the parent vertex.
    pub parent_on: Side,
    pub child: Label,
    /// Staged edges are invisible to eligibility until committed.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexTree {
    pub root: Label,
    /// Level-1 edge ids in creation order.
    pub level1: Vec<u32>,
}

/// Wire description of one staged edge (part of a redistribution
/// announcement).
#[derive(Debug, Clone, PartialEq)]
pub struct NewEdge {
    pub id: u32,
    pub parent: Option<u32>,
    pub level: u32,
    pub predicate: String,
    pub parent_on: Side,
    pub child: Label,
}

/// Everything a redistribution adds: the (single) tree root it extends
/// and the new edges in parent-before-child order. Empty `edges` means
/// the whole shape already exists.
#[derive(Debug, Clone, PartialEq)]
pub struct RedistBatch {
    pub root: Label,
    pub edges: Vec<NewEdge>,
}

/// A successful eligibility check: for each redistribution-tree edge (in
/// tree order), the id of the active index edge it reads.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub edge_ids: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructIndex {
    trees: Vec<IndexTree>,
    edges: HashMap<u32, IndexEdge>,
    staged: Vec<u32>,
    staged_trees: Vec<usize>,
}

impl StructIndex {
    pub fn new() -> StructIndex {
        StructIndex::default()
    }

    pub fn edge(&self, id: u32) -> Option<&IndexEdge> {
        self.edges.get(&id)
    }

    pub fn trees(&self) -> &[IndexTree] {
        &self.trees
    }

    /// Active edge ids, ascending.
    pub fn active_edge_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .edges
            .values()
            .filter(|e| e.active)
            .map(|e| e.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Label on the parent side of an edge: the parent edge's child label,
    /// or the tree root for level 1.
    pub fn parent_label(&self, id: u32) -> Result<Label> {
        let e = self
            .edges
            .get(&id)
            .ok_or_else(|| Error::InvalidState(format!("unknown index edge {id}")))?;
        match e.parent {
            Some(p) => Ok(self
                .edges
                .get(&p)
                .ok_or_else(|| Error::InvalidState(format!("edge {id} orphaned from {p}")))?
                .child
                .clone()),
            None => Ok(self.trees[e.tree].root.clone()),
        }
    }

    fn find_tree(&self, root: &Label) -> Option<usize> {
        self.trees.iter().position(|t| t.root == *root)
    }

    /// Plans a redistribution against the current active structure: walks
    /// the tree, reuses active edges that match exactly (same predicate,
    /// parent side, and identical child label under the same parent), and
    /// allocates fresh ids for the rest. `next_id` advances only for
    /// edges actually created.
    pub fn plan_additions(
        &self,
        tree: &RedistTree,
        g: &QueryGraph,
        next_id: &mut u32,
    ) -> Result<RedistBatch> {
        let root = Label::of(&g.vertices[tree.root]);
        let mut batch = RedistBatch { root: root.clone(), edges: Vec::new() };
        // Work on a scratch copy so in-batch edges are visible to later
        // siblings' exact-match lookups.
        let mut scratch = self.clone();
        scratch.apply_begin(&RedistBatch { root: root.clone(), edges: Vec::new() })?;
        let tree_idx = scratch.find_tree(&root).expect("tree ensured above");

        let mut assigned: Vec<u32> = Vec::with_capacity(tree.edges.len());
        for te in &tree.edges {
            let predicate = g.edges[te.pattern].predicate.token().to_owned();
            if g.edges[te.pattern].predicate.is_var() {
                return Err(Error::VariablePredicate(predicate));
            }
            let child = Label::of(&g.vertices[te.child_vertex]);
            let parent_id = te.parent.map(|p| assigned[p]);
            let siblings: &[u32] = match parent_id {
                None => &scratch.trees[tree_idx].level1,
                Some(p) => &scratch.edges[&p].children,
            };
            let found = siblings.iter().copied().find(|&sid| {
                let s = &scratch.edges[&sid];
                // Active edges and edges added earlier in this batch both
                // count as already distributed.
                s.predicate == predicate && s.parent_on == te.parent_on && s.child == child
            });
            let id = match found {
                Some(id) => id,
                None => {
                    let id = *next_id;
                    *next_id += 1;
                    let ne = NewEdge {
                        id,
                        parent: parent_id,
                        level: te.level,
                        predicate,
                        parent_on: te.parent_on,
                        child,
                    };
                    scratch.stage_edge(tree_idx, &ne)?;
                    batch.edges.push(ne);
                    id
                }
            };
            assigned.push(id);
        }
        Ok(batch)
    }

    fn stage_edge(&mut self, tree_idx: usize, ne: &NewEdge) -> Result<()> {
        if self.edges.contains_key(&ne.id) {
            return Err(Error::InvalidState(format!("edge id {} already exists", ne.id)));
        }
        match ne.parent {
            Some(p) => {
                let parent = self
                    .edges
                    .get_mut(&p)
                    .ok_or_else(|| Error::InvalidState(format!("missing parent edge {p}")))?;
                if parent.level + 1 != ne.level {
                    return Err(Error::InvalidState(format!(
                        "edge {} level {} under parent level {}",
                        ne.id, ne.level, parent.level
                    )));
                }
                parent.children.push(ne.id);
            }
            None => {
                if ne.level != 1 {
                    return Err(Error::InvalidState(format!(
                        "rootless edge {} must be level 1",
                        ne.id
                    )));
                }
                self.trees[tree_idx].level1.push(ne.id);
            }
        }
        self.edges.insert(
            ne.id,
            IndexEdge {
                id: ne.id,
                tree: tree_idx,
                parent: ne.parent,
                children: Vec::new(),
                level: ne.level,
                predicate: ne.predicate.clone(),
                parent_on: ne.parent_on,
                child: ne.child.clone(),
                active: false,
            },
        );
        self.staged.push(ne.id);
        Ok(())
    }

    /// Stages a batch: creates the tree if new, inserts the edges
    /// inactive. Mirrors on every node given identical batches.
    pub fn apply_begin(&mut self, batch: &RedistBatch) -> Result<()> {
        let tree_idx = match self.find_tree(&batch.root) {
            Some(i) => i,
            None => {
                self.trees.push(IndexTree { root: batch.root.clone(), level1: Vec::new() });
                let i = self.trees.len() - 1;
                self.staged_trees.push(i);
                i
            }
        };
        for ne in &batch.edges {
            self.stage_edge(tree_idx, ne)?;
        }
        Ok(())
    }

    /// Activates everything staged.
    pub fn commit_staged(&mut self) {
        for id in self.staged.drain(..) {
            if let Some(e) = self.edges.get_mut(&id) {
                e.active = true;
            }
        }
        self.staged_trees.clear();
    }

    /// Drops everything staged; returns the removed edge ids so callers
    /// can discard any data attached to them.
    pub fn abort_staged(&mut self) -> Vec<u32> {
        let dropped: Vec<u32> = self.staged.drain(..).collect();
        for &id in &dropped {
            if let Some(e) = self.edges.remove(&id) {
                match e.parent {
                    Some(p) => {
                        if let Some(parent) = self.edges.get_mut(&p) {
                            parent.children.retain(|&c| c != id);
                        }
                    }
                    None => {
                        self.trees[e.tree].level1.retain(|&c| c != id);
                    }
                }
            }
        }
        // Trees created by the aborted batch vanish with it (they can only
        // be at the tail, in creation order).
        let mut created = std::mem::take(&mut self.staged_trees);
        created.sort_unstable();
        for idx in created.into_iter().rev() {
            if self.trees[idx].level1.is_empty() {
                self.trees.remove(idx);
                for e in self.edges.values_mut() {
                    if e.tree > idx {
                        e.tree -= 1;
                    }
                }
            }
        }
        dropped
    }

    /// Checks whether a query's redistribution tree embeds into the active
    /// structure: same root up to covering, then level by level each tree
    /// edge needs an active index edge under its parent's image with equal
    /// predicate and parent side, whose child label covers the query's.
    /// First match in creation order wins; backtracking keeps the search
    /// exact.
    pub fn find_embedding(&self, tree: &RedistTree, g: &QueryGraph) -> Option<Embedding> {
        let root = Label::of(&g.vertices[tree.root]);
        for t in &self.trees {
            if !t.root.covers(&root) {
                continue;
            }
            let mut assigned: Vec<u32> = Vec::with_capacity(tree.edges.len());
            if self.embed_from(tree, g, t, 0, &mut assigned) {
                return Some(Embedding { edge_ids: assigned });
            }
        }
        None
    }

    fn embed_from(
        &self,
        tree: &RedistTree,
        g: &QueryGraph,
        t: &IndexTree,
        pos: usize,
        assigned: &mut Vec<u32>,
    ) -> bool {
        if pos == tree.edges.len() {
            return true;
        }
        let te = &tree.edges[pos];
        let predicate = g.edges[te.pattern].predicate.token();
        let child = Label::of(&g.vertices[te.child_vertex]);
        let siblings: &[u32] = match te.parent {
            None => &t.level1,
            Some(p) => &self.edges[&assigned[p]].children,
        };
        for &sid in siblings {
            let s = &self.edges[&sid];
            if s.active
                && s.predicate == predicate
                && s.parent_on == te.parent_on
                && s.child.covers(&child)
            {
                assigned.push(sid);
                if self.embed_from(tree, g, t, pos + 1, assigned) {
                    return true;
                }
                assigned.pop();
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{build_redistribution_tree, select_core};
    use crate::sparql::{parse_query, to_query_graph, BgpQuery};
    use crate::stats::GlobalStats;

    fn university_stats() -> GlobalStats {
        GlobalStats::from_scores(&[
            ("subOrgOf", 3.0, 5.0),
            ("memberOf", 2.0, 4.0),
            ("undergradFrom", 2.0, 4.0),
            ("worksFor", 2.0, 3.5),
            ("type", f64::NEG_INFINITY, f64::NEG_INFINITY),
        ])
    }

    fn tree_of(q: &BgpQuery, eff: &GlobalStats) -> (RedistTree, QueryGraph) {
        let g = to_query_graph(q).unwrap();
        let core = select_core(&g, eff).unwrap();
        (build_redistribution_tree(&g, core, eff).unwrap(), g)
    }

    fn q1() -> BgpQuery {
        parse_query("SELECT ?u WHERE { ?d subOrgOf ?u . ?d type department . ?s memberOf ?d }")
            .unwrap()
    }

    fn q2() -> BgpQuery {
        parse_query("SELECT ?s WHERE { ?s undergradFrom ?u . ?u type university }").unwrap()
    }

    fn full_query() -> BgpQuery {
        parse_query(
            "SELECT ?u WHERE { ?d subOrgOf ?u . ?d type department . ?s memberOf ?d . \
             ?s undergradFrom ?u . ?u type university }",
        )
        .unwrap()
    }

    #[test]
    fn plan_stages_and_commit_activates() {
        let eff = university_stats();
        let (tree, g) = tree_of(&q1(), &eff);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let batch = idx.plan_additions(&tree, &g, &mut next).unwrap();
        assert_eq!(batch.edges.len(), 3);
        assert_eq!(batch.root, Label::Any);
        idx.apply_begin(&batch).unwrap();
        assert!(idx.find_embedding(&tree, &g).is_none(), "staged edges invisible");
        idx.commit_staged();
        let emb = idx.find_embedding(&tree, &g).unwrap();
        assert_eq!(emb.edge_ids.len(), 3);
    }

    #[test]
    fn replanning_same_tree_adds_nothing() {
        let eff = university_stats();
        let (tree, g) = tree_of(&q1(), &eff);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let batch = idx.plan_additions(&tree, &g, &mut next).unwrap();
        idx.apply_begin(&batch).unwrap();
        idx.commit_staged();
        let again = idx.plan_additions(&tree, &g, &mut next).unwrap();
        assert!(again.edges.is_empty());
        assert_eq!(next, 3);
    }

    #[test]
    fn abort_restores_previous_structure() {
        let eff = university_stats();
        let (t1, g1) = tree_of(&q1(), &eff);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let b1 = idx.plan_additions(&t1, &g1, &mut next).unwrap();
        idx.apply_begin(&b1).unwrap();
        idx.commit_staged();
        let before = idx.clone();

        let (t2, g2) = tree_of(&q2(), &eff);
        let b2 = idx.plan_additions(&t2, &g2, &mut next).unwrap();
        assert_eq!(b2.edges.len(), 2);
        idx.apply_begin(&b2).unwrap();
        let dropped = idx.abort_staged();
        assert_eq!(dropped.len(), 2);
        assert_eq!(idx, before);
    }

    #[test]
    fn union_query_is_eligible_after_both_parts() {
        let eff = university_stats();
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        for q in [q1(), q2()] {
            let (tree, g) = tree_of(&q, &eff);
            let batch = idx.plan_additions(&tree, &g, &mut next).unwrap();
            idx.apply_begin(&batch).unwrap();
            idx.commit_staged();
        }
        // Both redistributions share the single wildcard-rooted tree.
        assert_eq!(idx.trees().len(), 1);
        assert_eq!(idx.trees()[0].root, Label::Any);

        let (tree, g) = tree_of(&full_query(), &eff);
        let emb = idx.find_embedding(&tree, &g).expect("full query embeds");
        assert_eq!(emb.edge_ids.len(), 5);
        // No two query edges need the same module here.
        let mut ids = emb.edge_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn partial_structure_is_not_eligible() {
        let eff = university_stats();
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let (t1, g1) = tree_of(&q1(), &eff);
        let b = idx.plan_additions(&t1, &g1, &mut next).unwrap();
        idx.apply_begin(&b).unwrap();
        idx.commit_staged();
        let (tf, gf) = tree_of(&full_query(), &eff);
        assert!(idx.find_embedding(&tf, &gf).is_none());
    }

    #[test]
    fn empty_index_rejects_everything() {
        let eff = university_stats();
        let (t, g) = tree_of(&q1(), &eff);
        assert!(StructIndex::new().find_embedding(&t, &g).is_none());
    }

    #[test]
    fn constant_child_does_not_cover_variable() {
        let eff = university_stats();
        // Index the constant-object form, then ask with a variable there.
        let (tc, gc) = tree_of(
            &parse_query("SELECT ?d WHERE { ?d subOrgOf ?u . ?d type department }").unwrap(),
            &eff,
        );
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let b = idx.plan_additions(&tc, &gc, &mut next).unwrap();
        idx.apply_begin(&b).unwrap();
        idx.commit_staged();
        assert!(idx.find_embedding(&tc, &gc).is_some());

        let (tv, gv) = tree_of(
            &parse_query("SELECT ?d WHERE { ?d subOrgOf ?u . ?d type ?t }").unwrap(),
            &eff,
        );
        assert!(idx.find_embedding(&tv, &gv).is_none());
    }

    #[test]
    fn wildcard_root_serves_constant_rooted_query() {
        // Index ⟨?s, memberOf, ?d⟩ rooted at ?d, then root the same shape
        // at a constant. Every triple incident to that constant sits on
        // the worker its lexical hashes to, so the wildcard tree answers
        // the constant-rooted query completely.
        let eff = GlobalStats::from_scores(&[("memberOf", 2.0, 4.0)]);
        let (tv, gv) =
            tree_of(&parse_query("SELECT ?s WHERE { ?s memberOf ?d }").unwrap(), &eff);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let b = idx.plan_additions(&tv, &gv, &mut next).unwrap();
        idx.apply_begin(&b).unwrap();
        idx.commit_staged();

        let (tc, gc) =
            tree_of(&parse_query("SELECT ?s WHERE { ?s memberOf Stanford-CS }").unwrap(), &eff);
        assert!(idx.find_embedding(&tc, &gc).is_some());
    }

    #[test]
    fn constant_root_does_not_serve_variable_rooted_query() {
        let eff = GlobalStats::from_scores(&[("memberOf", 2.0, 4.0)]);
        let (tc, gc) =
            tree_of(&parse_query("SELECT ?s WHERE { ?s memberOf Stanford-CS }").unwrap(), &eff);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let b = idx.plan_additions(&tc, &gc, &mut next).unwrap();
        assert_eq!(b.root, Label::Const("Stanford-CS".into()));
        idx.apply_begin(&b).unwrap();
        idx.commit_staged();
        assert_eq!(idx.trees().len(), 1);

        // The constant-rooted tree only holds triples touching that one
        // value; a variable root needs the full extent.
        let (tv, gv) =
            tree_of(&parse_query("SELECT ?s WHERE { ?s memberOf ?d }").unwrap(), &eff);
        assert!(idx.find_embedding(&tv, &gv).is_none());
        // A different constant is not covered either.
        let (to, go) =
            tree_of(&parse_query("SELECT ?s WHERE { ?s memberOf MIT-CS }").unwrap(), &eff);
        assert!(idx.find_embedding(&to, &go).is_none());
    }

    #[test]
    fn wildcard_child_covers_constant_in_query() {
        // Core on the subject side: index ⟨?s, memberOf, ?d⟩ rooted at ?s,
        // then query with a constant in the child position.
        let eff = GlobalStats::from_scores(&[("memberOf", 4.0, 2.0)]);
        let (tv, gv) =
            tree_of(&parse_query("SELECT ?s WHERE { ?s memberOf ?d }").unwrap(), &eff);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        let b = idx.plan_additions(&tv, &gv, &mut next).unwrap();
        idx.apply_begin(&b).unwrap();
        idx.commit_staged();

        let (tc, gc) = tree_of(
            &parse_query("SELECT ?s WHERE { ?s memberOf Stanford-CS }").unwrap(),
            &eff,
        );
        // Same core side (?s), constant at the child: wildcard child covers.
        let emb = idx.find_embedding(&tc, &gc);
        assert!(emb.is_some());
    }

    #[test]
    fn conflicting_levels_store_separately() {
        // memberOf's subject score dominates, so in the chain query the
        // organization edge hangs at level 2 even though an earlier
        // redistribution placed the same subquery at level 1.
        let eff = GlobalStats::from_scores(&[
            ("memberOf", 10.0, 2.0),
            ("subOrgOf", 3.0, 5.0),
        ]);
        let mut idx = StructIndex::new();
        let mut next = 0u32;
        // First: subOrgOf rooted at ?u (level 1, object side).
        let (t1, g1) = tree_of(&parse_query("SELECT ?d WHERE { ?d subOrgOf ?u }").unwrap(), &eff);
        let b1 = idx.plan_additions(&t1, &g1, &mut next).unwrap();
        idx.apply_begin(&b1).unwrap();
        idx.commit_staged();
        // Second: chain rooted at ?x, so subOrgOf sits below memberOf.
        let q3 = parse_query("SELECT ?u WHERE { ?x memberOf ?d . ?d subOrgOf ?u }").unwrap();
        let (t3, g3) = tree_of(&q3, &eff);
        let b3 = idx.plan_additions(&t3, &g3, &mut next).unwrap();
        assert_eq!(b3.edges.len(), 2, "level-1 edge is no substitute for level 2");
        idx.apply_begin(&b3).unwrap();
        idx.commit_staged();
        // The subOrgOf edge exists twice: once at level 1, once at level 2.
        let suborg_edges: Vec<&IndexEdge> = idx
            .active_edge_ids()
            .into_iter()
            .map(|id| idx.edge(id).unwrap())
            .filter(|e| e.predicate == "subOrgOf")
            .collect();
        assert_eq!(suborg_edges.len(), 2);
        let mut levels: Vec<u32> = suborg_edges.iter().map(|e| e.level).collect();
        levels.sort_unstable();
        assert_eq!(levels, vec![1, 2]);
        // The embedding for Q3 reads the level-2 module.
        let emb = idx.find_embedding(&t3, &g3).unwrap();
        let suborg_pos = t3
            .edges
            .iter()
            .position(|te| g3.edges[te.pattern].predicate.token() == "subOrgOf")
            .unwrap();
        assert_eq!(idx.edge(emb.edge_ids[suborg_pos]).unwrap().level, 2);
    }

    #[test]
    fn structure_mirrors_across_replicas() {
        let eff = university_stats();
        let mut master = StructIndex::new();
        let mut worker_a = StructIndex::new();
        let mut worker_b = StructIndex::new();
        let mut next = 0u32;
        for q in [q1(), q2(), full_query()] {
            let (tree, g) = tree_of(&q, &eff);
            let batch = master.plan_additions(&tree, &g, &mut next).unwrap();
            for idx in [&mut master, &mut worker_a, &mut worker_b] {
                idx.apply_begin(&batch).unwrap();
                idx.commit_staged();
            }
        }
        assert_eq!(master, worker_a);
        assert_eq!(master, worker_b);
    }
}
