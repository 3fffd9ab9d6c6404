//! Delete-relaxation heuristic over durative actions.
//!
//! Each durative action collapses into one relaxed action whose
//! preconditions are its positive atom conditions (minus what its own start
//! adds) and whose effects are all its adds. Numeric and negative conditions
//! are ignored, so an unreachable goal atom proves a dead end.

use crate::task::{ICond, Task};

pub(crate) const INF: u32 = u32::MAX;

pub(crate) struct Relaxed {
    pre: Vec<Vec<u32>>,
    add: Vec<Vec<u32>>,
    /// Actions having each atom as a precondition.
    users: Vec<Vec<u32>>,
    goal: Vec<u32>,
    n_atoms: usize,
}

impl Relaxed {
    pub(crate) fn new(task: &Task) -> Relaxed {
        let n_atoms = task.names.atoms.len();
        let mut pre = Vec::with_capacity(task.actions.len());
        let mut add = Vec::with_capacity(task.actions.len());
        let mut users = vec![Vec::new(); n_atoms];
        for (i, a) in task.actions.iter().enumerate() {
            let mut p: Vec<u32> = a
                .start
                .pre
                .iter()
                .chain(&a.over)
                .chain(&a.end.pre)
                .filter_map(|c| match c {
                    ICond::Lit(x, true) => Some(*x),
                    _ => None,
                })
                .filter(|x| !a.start.add.contains(x) || a.start.pre.contains(&ICond::Lit(*x, true)))
                .collect();
            p.sort_unstable();
            p.dedup();
            for &x in &p {
                users[x as usize].push(i as u32);
            }
            let mut e: Vec<u32> = a.start.add.iter().chain(&a.end.add).copied().collect();
            e.sort_unstable();
            e.dedup();
            pre.push(p);
            add.push(e);
        }
        let goal = task
            .goal
            .iter()
            .filter_map(|c| match c {
                ICond::Lit(x, true) => Some(*x),
                _ => None,
            })
            .collect();
        Relaxed { pre, add, users, goal, n_atoms }
    }

    /// Relaxed plan length from the given true atoms, `INF` if some goal atom
    /// is unreachable, plus the relaxed-plan actions applicable right away.
    /// `usable` filters actions.
    pub(crate) fn h_ff(&self, facts: impl Iterator<Item = u32>, usable: &[bool]) -> (u32, Vec<u32>) {
        let mut level = vec![INF; self.n_atoms];
        let mut support = vec![INF; self.n_atoms];
        let mut missing: Vec<u32> = self.pre.iter().map(|p| p.len() as u32).collect();
        let mut frontier: Vec<u32> = Vec::new();
        for f in facts {
            if level[f as usize] == INF {
                level[f as usize] = 0;
                frontier.push(f);
            }
        }
        let mut applied = vec![false; self.pre.len()];
        let mut ready: Vec<u32> = (0..self.pre.len() as u32).filter(|&a| missing[a as usize] == 0).collect();
        let mut depth = 0;
        loop {
            for &f in &frontier {
                for &a in &self.users[f as usize] {
                    missing[a as usize] -= 1;
                    if missing[a as usize] == 0 {
                        ready.push(a);
                    }
                }
            }
            frontier.clear();
            if self.goal.iter().all(|g| level[*g as usize] != INF) {
                break;
            }
            depth += 1;
            for a in std::mem::take(&mut ready) {
                if applied[a as usize] || !usable[a as usize] {
                    continue;
                }
                applied[a as usize] = true;
                for &f in &self.add[a as usize] {
                    if level[f as usize] == INF {
                        level[f as usize] = depth;
                        support[f as usize] = a;
                        frontier.push(f);
                    }
                }
            }
            if frontier.is_empty() {
                return (INF, Vec::new());
            }
        }
        let mut chosen = vec![false; self.pre.len()];
        let mut helpful = Vec::new();
        let mut count = 0;
        let mut stack: Vec<u32> = self.goal.clone();
        let mut done = vec![false; self.n_atoms];
        while let Some(f) = stack.pop() {
            if done[f as usize] || level[f as usize] == 0 {
                continue;
            }
            done[f as usize] = true;
            let a = support[f as usize];
            if !chosen[a as usize] {
                chosen[a as usize] = true;
                count += 1;
                if self.pre[a as usize].iter().all(|p| level[*p as usize] == 0) {
                    helpful.push(a);
                }
                stack.extend(self.pre[a as usize].iter().copied());
            }
        }
        (count, helpful)
    }

    /// Actions reachable from `facts` in the relaxation.
    pub(crate) fn reachable(&self, facts: impl Iterator<Item = u32>) -> Vec<bool> {
        let mut have = vec![false; self.n_atoms];
        let mut missing: Vec<u32> = self.pre.iter().map(|p| p.len() as u32).collect();
        let mut stack: Vec<u32> = Vec::new();
        for f in facts {
            if !have[f as usize] {
                have[f as usize] = true;
                stack.push(f);
            }
        }
        let mut out = vec![false; self.pre.len()];
        let mut ready: Vec<u32> = (0..self.pre.len() as u32).filter(|&a| missing[a as usize] == 0).collect();
        loop {
            while let Some(f) = stack.pop() {
                for &a in &self.users[f as usize] {
                    missing[a as usize] -= 1;
                    if missing[a as usize] == 0 {
                        ready.push(a);
                    }
                }
            }
            if ready.is_empty() {
                return out;
            }
            for a in std::mem::take(&mut ready) {
                out[a as usize] = true;
                for &f in &self.add[a as usize] {
                    if !have[f as usize] {
                        have[f as usize] = true;
                        stack.push(f);
                    }
                }
            }
        }
    }
}
