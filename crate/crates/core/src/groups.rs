//! Group structure over design columns: plain partitions for the group
//! penalty, and an ancestry relation for the composite penalty where a group
//! may only enter the model after its ancestors.

use crate::error::{Error, Result};

/// A partition of the `p` design columns into `J` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    groups: Vec<Vec<usize>>,
    p: usize,
}

impl GroupMap {
    /// Build from explicit column lists. The lists must partition `0..p`.
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        for (j, cols) in groups.iter().enumerate() {
            if cols.is_empty() {
                return Err(Error::Dimension(format!("group {j} is empty")));
            }
            for &c in cols {
                if c >= p {
                    return Err(Error::Dimension(format!(
                        "group {j} references column {c} but p = {p}"
                    )));
                }
                if seen[c] {
                    return Err(Error::Dimension(format!(
                        "column {c} appears in more than one group"
                    )));
                }
                seen[c] = true;
            }
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(Error::Dimension(format!("column {c} is in no group")));
        }
        Ok(GroupMap { groups, p })
    }

    /// Contiguous blocks of the given sizes, in order.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut groups = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &m in sizes {
            groups.push((start..start + m).collect());
            start += m;
        }
        GroupMap { groups, p: start }
    }

    /// One singleton group per column.
    pub fn singletons(p: usize) -> Self {
        GroupMap {
            groups: (0..p).map(|c| vec![c]).collect(),
            p,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn columns(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn size(&self, j: usize) -> usize {
        self.groups[j].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    /// Group index for each column.
    pub fn column_to_group(&self) -> Vec<usize> {
        let mut map = vec![0usize; self.p];
        for (j, cols) in self.groups.iter().enumerate() {
            for &c in cols {
                map[c] = j;
            }
        }
        map
    }
}

/// Ancestry relation between groups: an edge `a -> b` means group `a` enters
/// the model before group `b`. Group `a`'s penalty norm then also covers
/// `b`'s coefficients, and `b`'s prior precision accumulates `a`'s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapStructure {
    n_groups: usize,
    edges: Vec<(usize, usize)>,
    descendants: Vec<Vec<usize>>,
    ancestors: Vec<Vec<usize>>,
}

impl CapStructure {
    pub fn new(n_groups: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut descendants = vec![Vec::new(); n_groups];
        let mut ancestors = vec![Vec::new(); n_groups];
        for &(a, b) in &edges {
            if a >= n_groups || b >= n_groups {
                return Err(Error::Dimension(format!(
                    "ancestry edge ({a}, {b}) outside {n_groups} groups"
                )));
            }
            if a == b {
                return Err(Error::ParamDomain(format!("self edge on group {a}")));
            }
            descendants[a].push(b);
            ancestors[b].push(a);
        }
        // cycle check: Kahn's algorithm
        let mut indeg: Vec<usize> = ancestors.iter().map(|v| v.len()).collect();
        let mut queue: Vec<usize> = (0..n_groups).filter(|&j| indeg[j] == 0).collect();
        let mut removed = 0;
        while let Some(j) = queue.pop() {
            removed += 1;
            for &d in &descendants[j] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    queue.push(d);
                }
            }
        }
        if removed != n_groups {
            return Err(Error::ParamDomain(
                "ancestry relation contains a cycle".to_string(),
            ));
        }
        Ok(CapStructure {
            n_groups,
            edges,
            descendants,
            ancestors,
        })
    }

    /// A relation with no edges: the composite penalty degenerates to the
    /// plain group penalty.
    pub fn empty(n_groups: usize) -> Self {
        CapStructure::new(n_groups, Vec::new()).expect("no edges, no cycles")
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn descendants(&self, j: usize) -> &[usize] {
        &self.descendants[j]
    }

    pub fn ancestors(&self, j: usize) -> &[usize] {
        &self.ancestors[j]
    }

    /// Effective size k_j = m_j plus the sizes of j's descendants.
    pub fn effective_size(&self, groups: &GroupMap, j: usize) -> usize {
        groups.size(j)
            + self.descendants[j]
                .iter()
                .map(|&d| groups.size(d))
                .sum::<usize>()
    }
}
