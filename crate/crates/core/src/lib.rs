//! Statics of a planar three-segment manipulator built from dual-triangle
//! tensegrity segments.
//!
//! Each segment is a pair of rigid triangles joined at a revolute joint and
//! tied together by two linear springs whose free lengths are the control
//! inputs. The crate covers
//!
//! * the torque-angle behaviour of one segment ([`segment`]),
//! * kinematics of the chain ([`kinematics`]),
//! * equilibria with a prescribed end point, both through the energy and
//!   through the torque balance ([`equilibrium`]),
//! * the linearized buckling of the straight chain ([`buckling`]),
//! * Cartesian stiffness, unloaded and loaded ([`stiffness`]),
//! * JSON scenarios that drive all of the above ([`scenario`]).

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buckling;
pub mod equilibrium;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod numerics;
pub mod scenario;
pub mod segment;
pub mod stiffness;

pub use error::{Error, Result};
pub use kinematics::{Branch, JointConfig};
pub use model::{ControlInputs, Manipulator};
pub use segment::{SegmentControls, SegmentGeometry, Stability};
