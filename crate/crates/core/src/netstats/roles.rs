use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

/// Social role of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Role {
    /// Ordinary user.
    OrdUsr,
    /// Opinion leader: top 5% by PageRank.
    OpnLdr,
    /// Structure hole: bottom 5% by constraint among non-leaders.
    StrHole,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::OrdUsr, Role::OpnLdr, Role::StrHole];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::OrdUsr => "OrdUsr",
            Role::OpnLdr => "OpnLdr",
            Role::StrHole => "StrHole",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoleAssignment {
    pub roles: Vec<Role>,
}

impl RoleAssignment {
    #[inline]
    pub fn role(&self, u: usize) -> Role {
        self.roles[u]
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }
}

/// `ceil(5% of n)` in integer arithmetic.
fn five_percent(n: usize) -> usize {
    (n * 5).div_ceil(100)
}

/// Top 5% PageRank become leaders; among the rest, the 5% with the lowest
/// finite constraint become structure holes. Ties go to the lower user id.
pub fn assign_roles(pagerank: &[f64], constraint: &[f64]) -> RoleAssignment {
    assert_eq!(pagerank.len(), constraint.len(), "score vectors must cover the same users");
    let n = pagerank.len();
    let quota = five_percent(n);
    let mut roles = vec![Role::OrdUsr; n];

    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by(|&a, &b| {
        pagerank[b].partial_cmp(&pagerank[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    for &u in by_rank.iter().take(quota) {
        roles[u] = Role::OpnLdr;
    }

    let mut by_constraint: Vec<usize> =
        (0..n).filter(|&u| roles[u] != Role::OpnLdr && constraint[u].is_finite()).collect();
    by_constraint.sort_by(|&a, &b| {
        constraint[a].partial_cmp(&constraint[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    for &u in by_constraint.iter().take(quota) {
        roles[u] = Role::StrHole;
    }
    RoleAssignment { roles }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_arithmetic() {
        assert_eq!(five_percent(20), 1);
        assert_eq!(five_percent(21), 2);
        assert_eq!(five_percent(1), 1);
        assert_eq!(five_percent(0), 0);
    }

    #[test]
    fn twenty_users_get_one_of_each() {
        let pr: Vec<f64> = (0..20).map(|u| u as f64).collect();
        let c: Vec<f64> = (0..20).map(|u| u as f64).collect();
        let r = assign_roles(&pr, &c);
        assert_eq!(r.count(Role::OpnLdr), 1);
        assert_eq!(r.count(Role::StrHole), 1);
        assert_eq!(r.role(19), Role::OpnLdr);
        assert_eq!(r.role(0), Role::StrHole);
    }

    #[test]
    fn leader_takes_precedence() {
        let pr = [0.9, 0.1, 0.0];
        let c = [0.1, 0.5, 0.9];
        let r = assign_roles(&pr, &c);
        assert_eq!(r.role(0), Role::OpnLdr);
        assert_eq!(r.role(1), Role::StrHole);
    }

    #[test]
    fn single_user_is_leader() {
        assert_eq!(assign_roles(&[0.3], &[f64::INFINITY]).roles, vec![Role::OpnLdr]);
    }

    #[test]
    fn infinite_constraint_never_a_hole() {
        let pr = [0.5, 0.4, 0.1, 0.0];
        let c = [1.0, 1.0, f64::INFINITY, 0.5];
        let r = assign_roles(&pr, &c);
        assert_eq!(r.role(2), Role::OrdUsr);
        assert_eq!(r.role(3), Role::StrHole);
    }
}
