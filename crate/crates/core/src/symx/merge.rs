use std::collections::BTreeSet;

use super::SymState;
use crate::expr::{Expr, P};

/// Joins the states that reached the final return, in fork order, into one
/// whose values are if-then-else chains over each state's own constraints.
///
/// Constraints common to every state are dropped from the conditions. A
/// location without a value in some state reads as `Undef` there.
pub fn merge_states(mut states: Vec<SymState>) -> SymState {
    assert!(!states.is_empty(), "merge needs at least one state");
    if states.len() == 1 {
        return states.pop().unwrap_or_else(|| unreachable!());
    }
    let shared: Vec<P> = states[0]
        .path_constraints
        .iter()
        .filter(|c| states.iter().all(|s| s.path_constraints.contains(c)))
        .cloned()
        .collect();
    let guards: Vec<P> = states
        .iter()
        .map(|s| {
            let own: Vec<P> = s.path_constraints.iter().filter(|c| !shared.contains(c)).cloned().collect();
            match own.len() {
                0 => Expr::bool_const(true),
                1 => own[0].clone(),
                _ => Expr::and(own),
            }
        })
        .collect();
    let join = |vals: Vec<Option<&P>>| -> Option<P> {
        if vals.iter().all(Option::is_none) {
            return None;
        }
        let mut vals = vals.into_iter().map(|v| v.cloned().unwrap_or_else(Expr::undef)).rev();
        let mut acc = vals.next()?;
        for (v, g) in vals.zip(guards.iter().rev().skip(1)) {
            if v != acc {
                acc = Expr::ite(g.clone(), v, acc);
            }
        }
        Some(acc)
    };
    let mut out = states[0].clone();
    for i in 0..out.s.len() {
        out.s[i] = join(states.iter().map(|s| s.s[i].as_ref()).collect());
    }
    let addrs: BTreeSet<u32> = states.iter().flat_map(|s| s.mem.keys().copied()).collect();
    out.mem = addrs
        .into_iter()
        .filter_map(|a| join(states.iter().map(|s| s.mem.get(&a)).collect()).map(|v| (a, v)))
        .collect();
    out.flags = None;
    out.path_constraints = shared;
    out.step_count = states.iter().map(|s| s.step_count).max().unwrap_or(0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CmpOp;

    fn state_with(s0: P, constraints: Vec<P>) -> SymState {
        let mut st = SymState::entry(0);
        st.s[0] = Some(s0);
        st.path_constraints = constraints;
        st
    }

    #[test]
    fn single_state_is_identity() {
        let st = state_with(Expr::num(1.0), vec![]);
        assert_eq!(merge_states(vec![st.clone()]), st);
    }

    #[test]
    fn two_paths_become_ite() {
        let c = Expr::cmp(CmpOp::Lt, Expr::input("x0"), Expr::num(0.0));
        let a = state_with(Expr::num(1.0), vec![c.clone()]);
        let b = state_with(Expr::num(-1.0), vec![Expr::not(c.clone())]);
        let m = merge_states(vec![a, b]);
        assert_eq!(m.s[0], Some(Expr::ite(c, Expr::num(1.0), Expr::num(-1.0))));
        assert!(m.path_constraints.is_empty());
    }

    #[test]
    fn equal_values_and_missing_locations() {
        let c = Expr::cmp(CmpOp::Lt, Expr::input("x0"), Expr::num(0.0));
        let mut a = state_with(Expr::num(2.0), vec![c.clone()]);
        a.s[1] = Some(Expr::num(5.0));
        let b = state_with(Expr::num(2.0), vec![Expr::not(c.clone())]);
        let m = merge_states(vec![a, b]);
        assert_eq!(m.s[0], Some(Expr::num(2.0)));
        assert_eq!(m.s[1], Some(Expr::ite(c, Expr::num(5.0), Expr::undef())));
        assert_eq!(m.s[2], None);
    }
}
