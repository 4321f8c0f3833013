//! Mission specification language and reactive synthesis. Specs are
//! generalized reactivity(1) formulas over Boolean propositions bound to
//! sensing functions (environment side) and behavior tags (system side);
//! synthesis either extracts a finite-state controller or returns an
//! environment counter-trace.

mod automaton;
mod game;
mod parser;

pub use automaton::{model_check, AdvanceError, MissionAutomaton, ModelCheckReport};
pub use game::{counter_trace_defeats, synthesize, CounterTrace, SynthError, SynthesisOutcome};
pub use parser::{parse_spec, ParseError};

use crate::envchar::EnvironmentType;
use crate::Color;
use serde::{Deserialize, Serialize};

pub const PROP_BOUND: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvBinding {
    /// An object of this color has been detected on the map.
    ObjectSeen(Color),
    /// Latest characterization of the current target classified as `t`.
    EnvTypeIs(EnvironmentType),
    /// The robot is carrying an object.
    Carrying,
    /// At least one object of these colors is still awaiting handling.
    Pending(Vec<Color>),
    /// Exploration reported completion.
    Explored,
    /// The robot sits above the ground plane.
    Elevated,
    /// The current configuration has a library entry with this
    /// behavior property.
    ConfigCan(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetRef {
    Color(Color),
    /// Whichever pending object is currently selected.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SysBinding {
    /// Drive toward the next best unexplored view.
    Explore,
    /// Drive to the staging waypoint for an object of this color.
    Goto(Color),
    /// Execute the library behavior with this property tag, optionally
    /// staged at a target object.
    Behavior { property: String, target: Option<TargetRef> },
    /// Mission-complete marker; the executor halts when it holds.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    Env(EnvBinding),
    Sys(SysBinding),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposition {
    pub name: String,
    pub binding: Binding,
}

/// Atom reference: side-local proposition index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Env(usize),
    Sys(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Const(bool),
    /// `primed` selects the next-step valuation.
    Prop(Atom, bool),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Evaluate with valuations packed as (sys << nx_bits) | env.
    pub fn eval(&self, cur: u32, next: u32, nx_bits: u32) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Prop(a, primed) => {
                let v = if *primed { next } else { cur };
                let bit = match a {
                    Atom::Env(i) => *i as u32,
                    Atom::Sys(i) => nx_bits + *i as u32,
                };
                v >> bit & 1 == 1
            }
            Formula::Not(f) => !f.eval(cur, next, nx_bits),
            Formula::And(a, b) => a.eval(cur, next, nx_bits) && b.eval(cur, next, nx_bits),
            Formula::Or(a, b) => a.eval(cur, next, nx_bits) || b.eval(cur, next, nx_bits),
            Formula::Implies(a, b) => !a.eval(cur, next, nx_bits) || b.eval(cur, next, nx_bits),
            Formula::Iff(a, b) => a.eval(cur, next, nx_bits) == b.eval(cur, next, nx_bits),
        }
    }

    pub fn has_primed(&self) -> bool {
        match self {
            Formula::Const(_) => false,
            Formula::Prop(_, p) => *p,
            Formula::Not(f) => f.has_primed(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.has_primed() || b.has_primed()
            }
        }
    }

    fn primed_sys(&self) -> bool {
        match self {
            Formula::Const(_) => false,
            Formula::Prop(a, p) => *p && matches!(a, Atom::Sys(_)),
            Formula::Not(f) => f.primed_sys(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.primed_sys() || b.primed_sys()
            }
        }
    }

    fn mentions_sys(&self) -> bool {
        match self {
            Formula::Const(_) => false,
            Formula::Prop(a, _) => matches!(a, Atom::Sys(_)),
            Formula::Not(f) => f.mentions_sys(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.mentions_sys() || b.mentions_sys()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionSpec {
    pub env_props: Vec<Proposition>,
    pub sys_props: Vec<Proposition>,
    pub env_init: Vec<Formula>,
    pub sys_init: Vec<Formula>,
    pub env_trans: Vec<Formula>,
    pub sys_trans: Vec<Formula>,
    pub env_live: Vec<Formula>,
    pub sys_live: Vec<Formula>,
}

impl MissionSpec {
    pub fn nx_bits(&self) -> u32 {
        self.env_props.len() as u32
    }

    pub fn ny_bits(&self) -> u32 {
        self.sys_props.len() as u32
    }

    fn all(fs: &[Formula], cur: u32, next: u32, nx: u32) -> bool {
        fs.iter().all(|f| f.eval(cur, next, nx))
    }

    /// ρ_e: may the environment move to env valuation `xp` from `s`?
    pub fn env_trans_ok(&self, s: u32, xp: u32) -> bool {
        Self::all(&self.env_trans, s, xp, self.nx_bits())
    }

    /// ρ_s: may the system respond with `yp` given `s` and env move `xp`?
    pub fn sys_trans_ok(&self, s: u32, xp: u32, yp: u32) -> bool {
        let next = (yp << self.nx_bits()) | xp;
        Self::all(&self.sys_trans, s, next, self.nx_bits())
    }

    pub fn env_init_ok(&self, x: u32) -> bool {
        Self::all(&self.env_init, x, 0, self.nx_bits())
    }

    pub fn sys_init_ok(&self, x: u32, y: u32) -> bool {
        let s = (y << self.nx_bits()) | x;
        Self::all(&self.sys_init, s, 0, self.nx_bits())
    }

    /// Liveness goal lists with empty lists normalized to a single `true`.
    pub fn live_goals(fs: &[Formula]) -> Vec<Formula> {
        if fs.is_empty() {
            vec![Formula::Const(true)]
        } else {
            fs.to_vec()
        }
    }

    pub fn env_prop_index(&self, name: &str) -> Option<usize> {
        self.env_props.iter().position(|p| p.name == name)
    }

    pub fn sys_prop_index(&self, name: &str) -> Option<usize> {
        self.sys_props.iter().position(|p| p.name == name)
    }

    /// GR(1) side restrictions checked after parsing.
    pub fn validate(&self) -> Result<(), ParseError> {
        let bad = |msg: &str| Err(ParseError::structural(msg));
        if self.env_props.len() + self.sys_props.len() > PROP_BOUND {
            return bad("too many propositions");
        }
        for f in self.env_init.iter().chain(&self.sys_init).chain(&self.env_live).chain(&self.sys_live) {
            if f.has_primed() {
                return bad("next() is only allowed in transition sections");
            }
        }
        for f in &self.env_init {
            if f.mentions_sys() {
                return bad("environment initial formulas mention a system proposition");
            }
        }
        for f in &self.env_trans {
            if f.primed_sys() {
                return bad("environment transitions mention next-step system propositions");
            }
        }
        Ok(())
    }
}
