//! Controller extraction from the solved game, runtime stepping, and an
//! exhaustive desk-scale model checker for synthesized automata.

use super::game::{Game, WinInfo};
use super::MissionSpec;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct AutState {
    /// Packed valuation (sys bits above env bits).
    pub packed: u32,
    pub env_val: u32,
    pub sys_val: u32,
    /// Liveness goal currently pursued (strategy memory).
    pub goal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionAutomaton {
    pub env_names: Vec<String>,
    pub sys_names: Vec<String>,
    pub states: Vec<AutState>,
    /// Initial state per assumption-satisfying initial env valuation.
    pub init: BTreeMap<u32, usize>,
    /// Per state: next env valuation -> successor state.
    pub transitions: Vec<BTreeMap<u32, usize>>,
    pub n_goals: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum AdvanceError {
    #[error("environment valuation {0:#b} violates the assumptions here")]
    AssumptionViolated(u32),
    #[error("no initial state for environment valuation {0:#b}")]
    NoInitialState(u32),
}

impl MissionAutomaton {
    pub(super) fn extract(spec: &MissionSpec, game: &Game, win: &WinInfo) -> MissionAutomaton {
        let nx_bits = game.nx_bits;
        let n_goals = game.sys_goals.len();
        let ring_of = |j: usize, s: usize| -> usize {
            win.rings[j]
                .iter()
                .position(|r| r.get(s))
                .expect("winning state belongs to a ring")
        };
        // deterministic successor choice implementing the three strategy
        // rules: goal hit -> advance memory; otherwise decrease ring rank;
        // otherwise stay inside the X trap for a false env goal
        let choose = |s: usize, j: usize, xp: u32| -> (u32, usize) {
            let cands: Vec<u32> = game
                .sys_succ(s, xp)
                .iter()
                .copied()
                .filter(|&yp| win.z.get(game.state(xp, yp)))
                .collect();
            assert!(!cands.is_empty(), "cpre guaranteed a reply");
            if game.goal_holds(&game.sys_goals[j], s) {
                let j2 = (j + 1) % n_goals;
                let yp = cands
                    .iter()
                    .copied()
                    .min_by_key(|&yp| (ring_of(j2, game.state(xp, yp)), yp))
                    .unwrap();
                return (yp, j2);
            }
            let k = ring_of(j, s);
            if let Some(yp) = cands
                .iter()
                .copied()
                .filter(|&yp| ring_of(j, game.state(xp, yp)) < k)
                .min_by_key(|&yp| (ring_of(j, game.state(xp, yp)), yp))
            {
                return (yp, j);
            }
            // trapped: find an env goal currently false whose X set holds s
            for (r, x) in win.xsets[j][k].iter().enumerate() {
                if x.get(s) && !game.goal_holds(&game.env_goals[r], s) {
                    let yp = cands
                        .iter()
                        .copied()
                        .find(|&yp| x.get(game.state(xp, yp)))
                        .expect("X set is cpre-closed under the trap rule");
                    return (yp, j);
                }
            }
            unreachable!("state in ring {k} admits no strategy rule");
        };

        let mut states: Vec<AutState> = Vec::new();
        let mut index: BTreeMap<(u32, usize), usize> = BTreeMap::new();
        let mut transitions: Vec<BTreeMap<u32, usize>> = Vec::new();
        let mut intern = |states: &mut Vec<AutState>,
                          transitions: &mut Vec<BTreeMap<u32, usize>>,
                          packed: u32,
                          j: usize|
         -> usize {
            *index.entry((packed, j)).or_insert_with(|| {
                let i = states.len();
                states.push(AutState {
                    packed,
                    env_val: packed & ((1 << nx_bits) - 1),
                    sys_val: packed >> nx_bits,
                    goal: j,
                });
                transitions.push(BTreeMap::new());
                i
            })
        };
        let mut init = BTreeMap::new();
        let mut queue: Vec<usize> = Vec::new();
        for x in 0..game.nx as u32 {
            if !spec.env_init_ok(x) {
                continue;
            }
            let y0 = (0..game.ny as u32)
                .filter(|&y| spec.sys_init_ok(x, y) && win.z.get(game.state(x, y)))
                .min_by_key(|&y| (ring_of(0, game.state(x, y)), y))
                .expect("realizable spec has winning initial replies");
            let i = intern(&mut states, &mut transitions, (y0 << nx_bits) | x, 0);
            init.insert(x, i);
            queue.push(i);
        }
        let mut seen = init.values().copied().collect::<std::collections::BTreeSet<_>>();
        while let Some(i) = queue.pop() {
            let (packed, j) = (states[i].packed, states[i].goal);
            let s = packed as usize;
            for &xp in game.env_succ[s].clone().iter() {
                let (yp, j2) = choose(s, j, xp);
                let k = intern(&mut states, &mut transitions, (yp << nx_bits) | xp, j2);
                transitions[i].insert(xp, k);
                if seen.insert(k) {
                    queue.push(k);
                }
            }
        }
        MissionAutomaton {
            env_names: spec.env_props.iter().map(|p| p.name.clone()).collect(),
            sys_names: spec.sys_props.iter().map(|p| p.name.clone()).collect(),
            states,
            init,
            transitions,
            n_goals,
        }
    }

    pub fn initial(&self, env_val: u32) -> Result<usize, AdvanceError> {
        self.init
            .get(&env_val)
            .copied()
            .ok_or(AdvanceError::NoInitialState(env_val))
    }

    /// Step the controller: consume the next environment valuation and
    /// return (successor state, system valuation to realize).
    pub fn advance(&self, state: usize, env_val: u32) -> Result<(usize, u32), AdvanceError> {
        match self.transitions[state].get(&env_val) {
            Some(&next) => Ok((next, self.states[next].sys_val)),
            None => Err(AdvanceError::AssumptionViolated(env_val)),
        }
    }

    pub fn sys_prop_true(&self, sys_val: u32, name: &str) -> bool {
        self.sys_names
            .iter()
            .position(|n| n == name)
            .map(|i| sys_val >> i & 1 == 1)
            .unwrap_or(false)
    }

    fn val_names(names: &[String], val: u32) -> String {
        let on: Vec<&str> = names
            .iter()
            .enumerate()
            .filter(|(i, _)| val >> i & 1 == 1)
            .map(|(_, n)| n.as_str())
            .collect();
        if on.is_empty() {
            "-".to_string()
        } else {
            on.join(",")
        }
    }

    /// Human-readable transition table.
    pub fn export_table(&self) -> String {
        let mut out = String::new();
        for (x, i) in &self.init {
            out.push_str(&format!(
                "init env[{}] -> state {}\n",
                Self::val_names(&self.env_names, *x),
                i
            ));
        }
        for (i, st) in self.states.iter().enumerate() {
            out.push_str(&format!(
                "state {} goal={} sys[{}] env[{}]\n",
                i,
                st.goal,
                Self::val_names(&self.sys_names, st.sys_val),
                Self::val_names(&self.env_names, st.env_val),
            ));
            for (xp, k) in &self.transitions[i] {
                out.push_str(&format!(
                    "  on env[{}] -> state {}\n",
                    Self::val_names(&self.env_names, *xp),
                    k
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckReport {
    pub reachable_states: usize,
    pub safety_violations: Vec<String>,
    pub justice_violations: Vec<String>,
}

impl ModelCheckReport {
    pub fn ok(&self) -> bool {
        self.safety_violations.is_empty() && self.justice_violations.is_empty()
    }
}

/// Exhaustively check a synthesized automaton against its spec: every
/// transition must respect the system guarantees, transitions must be
/// total over assumption-satisfying environment moves, and no reachable
/// cycle may satisfy all environment goals while starving a system goal.
pub fn model_check(spec: &MissionSpec, aut: &MissionAutomaton) -> ModelCheckReport {
    let game = Game::build(spec).expect("spec within bounds");
    let mut safety = Vec::new();
    for (x, &i) in &aut.init {
        if !spec.sys_init_ok(*x, aut.states[i].sys_val) {
            safety.push(format!("initial state {i} violates sys_init"));
        }
    }
    for (i, st) in aut.states.iter().enumerate() {
        let s = st.packed as usize;
        for &xp in &game.env_succ[s] {
            match aut.transitions[i].get(&xp) {
                None => safety.push(format!("state {i} lacks a move for env {xp:#b}")),
                Some(&k) => {
                    let succ = &aut.states[k];
                    if succ.env_val != xp {
                        safety.push(format!("state {i} -> {k} mislabels env"));
                    }
                    if !spec.sys_trans_ok(s as u32, xp, succ.sys_val) {
                        safety.push(format!("state {i} -> {k} violates sys_trans"));
                    }
                }
            }
        }
        for (&xp, _) in &aut.transitions[i] {
            if !game.env_succ[s].contains(&xp) {
                safety.push(format!("state {i} has a move for illegal env {xp:#b}"));
            }
        }
    }
    // justice: for each sys goal j, the subgraph of states where the goal is
    // false must contain no cycle exhibiting every env goal
    let mut justice = Vec::new();
    let n = aut.states.len();
    for (j, jf) in game.sys_goals.iter().enumerate() {
        let in_sub: Vec<bool> = aut
            .states
            .iter()
            .map(|st| !game.goal_holds(jf, st.packed as usize))
            .collect();
        let sccs = tarjan_sccs(n, |i| {
            if in_sub[i] {
                aut.transitions[i]
                    .values()
                    .copied()
                    .filter(|&k| in_sub[k])
                    .collect()
            } else {
                Vec::new()
            }
        });
        for scc in sccs {
            let nontrivial = scc.len() > 1
                || aut.transitions[scc[0]].values().any(|&k| k == scc[0] && in_sub[scc[0]]);
            if !nontrivial || !in_sub[scc[0]] {
                continue;
            }
            let all_env = game.env_goals.iter().all(|ef| {
                scc.iter().any(|&i| game.goal_holds(ef, aut.states[i].packed as usize))
            });
            if all_env {
                justice.push(format!(
                    "system goal {j} starved on fair cycle through states {scc:?}"
                ));
            }
        }
    }
    ModelCheckReport {
        reachable_states: n,
        safety_violations: safety,
        justice_violations: justice,
    }
}

fn tarjan_sccs(n: usize, succ: impl Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    struct St {
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    let mut st = St {
        index: vec![None; n],
        low: vec![0; n],
        on: vec![false; n],
        stack: vec![],
        next: 0,
        out: vec![],
    };
    // iterative Tarjan to avoid recursion limits
    enum Frame {
        Enter(usize),
        Resume(usize, usize, Vec<usize>),
    }
    for root in 0..n {
        if st.index[root].is_some() {
            continue;
        }
        let mut frames = vec![Frame::Enter(root)];
        while let Some(f) = frames.pop() {
            match f {
                Frame::Enter(v) => {
                    st.index[v] = Some(st.next);
                    st.low[v] = st.next;
                    st.next += 1;
                    st.stack.push(v);
                    st.on[v] = true;
                    frames.push(Frame::Resume(v, 0, succ(v)));
                }
                Frame::Resume(v, mut i, kids) => {
                    let mut descended = false;
                    while i < kids.len() {
                        let w = kids[i];
                        i += 1;
                        match st.index[w] {
                            None => {
                                frames.push(Frame::Resume(v, i, kids));
                                frames.push(Frame::Enter(w));
                                descended = true;
                                break;
                            }
                            Some(wi) => {
                                if st.on[w] {
                                    st.low[v] = st.low[v].min(wi);
                                }
                            }
                        }
                    }
                    if descended {
                        continue;
                    }
                    if st.low[v] == st.index[v].unwrap() {
                        let mut comp = vec![];
                        loop {
                            let w = st.stack.pop().unwrap();
                            st.on[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        st.out.push(comp);
                    }
                    // propagate lowlink to parent
                    if let Some(Frame::Resume(p, _, _)) = frames.last() {
                        let p = *p;
                        st.low[p] = st.low[p].min(st.low[v]);
                    }
                }
            }
        }
    }
    st.out
}
