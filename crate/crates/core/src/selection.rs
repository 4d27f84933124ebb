//! The fixed decision tree mapping an agent's intention, cluster role,
//! resolution outcome, flag and dynamic-safety results to its action.

use crate::conflict::Role;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionInput {
    pub intended_is_lane_change: bool,
    pub role: Role,
    pub winner: bool,
    pub flag: bool,
    pub intended_safe: bool,
    pub straight_safe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Intended,
    Straight,
    Backup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    ReceiverLost,
    SenderLost,
    IntendedTaken,
    Fallback,
}

pub fn select_action(x: &SelectionInput) -> (Choice, Branch) {
    let fallback = if x.straight_safe { Choice::Straight } else { Choice::Backup };
    if x.role.receives() && !x.winner {
        return (Choice::Backup, Branch::ReceiverLost);
    }
    if x.role == Role::Sender && !x.winner {
        return (fallback, Branch::SenderLost);
    }
    let ok = if x.intended_is_lane_change { x.winner && !x.flag && x.intended_safe } else { x.intended_safe };
    if ok {
        (Choice::Intended, Branch::IntendedTaken)
    } else {
        (fallback, Branch::Fallback)
    }
}

/// Every choice `select_action` can return for this input whatever the
/// two safety answers turn out to be.
pub fn possible_choices(x: &SelectionInput) -> Vec<Choice> {
    let mut out = Vec::new();
    for intended_safe in [false, true] {
        for straight_safe in [false, true] {
            let (c, _) = select_action(&SelectionInput { intended_safe, straight_safe, ..*x });
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(role: Role, winner: bool) -> SelectionInput {
        SelectionInput { intended_is_lane_change: true, role, winner, flag: false, intended_safe: true, straight_safe: true }
    }

    #[test]
    fn possible_choices_follow_the_tree() {
        assert_eq!(possible_choices(&input(Role::Receiver, false)), vec![Choice::Backup]);
        assert_eq!(possible_choices(&input(Role::Sender, false)), vec![Choice::Backup, Choice::Straight]);
        let flagged = SelectionInput { flag: true, ..input(Role::Neither, true) };
        assert!(!possible_choices(&flagged).contains(&Choice::Intended));
        assert_eq!(possible_choices(&input(Role::Neither, true)).len(), 3);
    }

    #[test]
    fn stated_rules() {
        assert_eq!(select_action(&input(Role::Sender, true)).0, Choice::Intended);
        assert_eq!(select_action(&input(Role::Receiver, false)).0, Choice::Backup);
        assert_eq!(select_action(&input(Role::Both, false)).0, Choice::Backup);
        assert_eq!(select_action(&input(Role::Sender, false)).0, Choice::Straight);
        let flagged = SelectionInput { flag: true, ..input(Role::Neither, true) };
        assert_eq!(select_action(&flagged), (Choice::Straight, Branch::Fallback));
        let unsafe_all = SelectionInput { intended_safe: false, straight_safe: false, ..input(Role::Neither, true) };
        assert_eq!(select_action(&unsafe_all).0, Choice::Backup);
    }
}
