//! Optimal distribution of user-interface elements across the devices of a
//! multi-user, multi-device setting.
//!
//! A scenario ([`ProblemInstance`]) lists UI elements, devices and users,
//! together with who can reach which device, who may use which element, how
//! much each user cares about each element and how well each element suits
//! each device. [`formulate`] turns it into a mixed-integer program that
//! trades off assignment quality against per-user completeness, and
//! [`solve`] runs an exact branch and bound on it.
//!
//! ```
//! use duiopt::{solve_instance, Capabilities, DeviceSpec, ElementSpec, ProblemInstance, SolveOptions, UserSpec};
//!
//! let mut inst = ProblemInstance::with_entities(
//!     vec![ElementSpec::new("video", Capabilities::new(1.0, 0.0, 0.0, 0.0), (320, 180), (1920, 1080))],
//!     vec![DeviceSpec::new("tv", Capabilities::new(1.0, 0.0, 0.0, 0.0), 1920, 1080)],
//!     vec![UserSpec::new("ann")],
//! );
//! inst.access = vec![vec![1]];
//! inst.permission = vec![vec![1]];
//! inst.importance = vec![vec![1.0]];
//!
//! let sol = solve_instance(&inst, &SolveOptions::default()).unwrap();
//! assert_eq!(sol.assignment, vec![vec![1]]);
//! assert_eq!(sol.sizes[0][0], 1920 * 1080);
//! ```
//!
//! The book under `book/` walks through the model in more detail; its code
//! samples are compiled as doc tests of this crate.

pub mod check;
pub mod error;
pub mod formulation;
pub mod generator;
pub mod live;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod session;
pub mod solver;

pub use error::{FormulationError, ModelError, OracleError};
pub use formulation::{build, compatibility, formulate, mean_importance, preprocess, DerivedCoefficients, Evaluation, FixReason, Milp};
pub use model::{import_raw_scale, validate, Capabilities, DeviceSpec, ElementSpec, Pin, ProblemInstance, UserSpec, Violation, Weights};
pub use session::{AssignmentDiff, Session, SessionError, SessionEvent};
pub use solver::{check_feasible, solve, solve_instance, solve_with_log, CancelToken, Solution, SolveOptions, SolveStatus};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $path))]
            pub struct $name;
        };
    }

    chapter!(Introduction, "introduction.md");
    chapter!(Scenarios, "scenarios.md");
    chapter!(Formulation, "formulation.md");
    chapter!(Solver, "solver.md");
    chapter!(Verification, "verification.md");
    chapter!(Sessions, "sessions.md");
    chapter!(Benchmarks, "benchmarks.md");
    chapter!(Protocol, "protocol.md");
}
