//! Symbolic security-protocol verifier with compositional reasoning.
//!
//! The crate models protocols as labeled role specifications over a
//! symbolic term algebra, explores bounded Dolev-Yao traces under
//! optional trace restrictions, evaluates secrecy / session /
//! synchronization claims, checks (strong) protocol independence, and
//! derives properties of sequentially composed protocols from component
//! properties via a small theorem engine.

pub mod claims;
pub mod engine;
pub mod indep;
pub mod knowledge;
pub mod parse;
pub mod proto;
pub mod symbol;
pub mod term;
pub mod theorem;
pub mod trace;

pub use symbol::Sym;
pub use term::{IdentKind, Inst, KeyTable, RunId, Term, TermData, Typing};

/// Bundled corpus sources, compiled in so library tests and downstream
/// tooling agree on one copy.
pub mod corpus {
    pub const NSL: &str = include_str!("../../../corpus/nsl.cpv");
    pub const NSL_PRIME: &str = include_str!("../../../corpus/nsl-prime.cpv");
    pub const NSL_CHAINED_BAD: &str = include_str!("../../../corpus/nsl-chained-bad.cpv");
    pub const NSL_CHAINED_GOOD: &str = include_str!("../../../corpus/nsl-chained-good.cpv");
    pub const WIMAX_RSA: &str = include_str!("../../../corpus/wimax-rsa.cpv");
    pub const WIMAX_P: &str = include_str!("../../../corpus/wimax-p.cpv");
    pub const WIMAX_Q: &str = include_str!("../../../corpus/wimax-q.cpv");
    pub const WIMAX_R: &str = include_str!("../../../corpus/wimax-r.cpv");
    pub const WIMAX_DRV: &str = include_str!("../../../scripts/wimax.drv");
}

#[cfg(test)]
pub(crate) mod test_protos {
    use crate::proto::Protocol;

    fn one(src: &str) -> Protocol {
        let f = crate::parse::parse_file(src).expect("corpus parses");
        assert_eq!(f.protocols.len(), 1);
        f.protocols.into_iter().next().unwrap()
    }

    pub fn nsl() -> Protocol {
        one(crate::corpus::NSL)
    }
    pub fn nsl_prime() -> Protocol {
        one(crate::corpus::NSL_PRIME)
    }
    pub fn nsl_chained_bad() -> Protocol {
        one(crate::corpus::NSL_CHAINED_BAD)
    }
    pub fn wimax_p() -> Protocol {
        one(crate::corpus::WIMAX_P)
    }
    pub fn wimax_q() -> Protocol {
        one(crate::corpus::WIMAX_Q)
    }
    pub fn wimax_r() -> Protocol {
        one(crate::corpus::WIMAX_R)
    }
}
