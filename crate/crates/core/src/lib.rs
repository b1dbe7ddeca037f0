//! Task allocation for heterogeneous multi-robot fleets whose robots switch
//! between operation modes.
//!
//! A robot with several modes is split into one virtual robot per mode.
//! Each control step solves a mixed-integer QP that picks one
//! `(task, mode)` pair per robot and an input for every virtual robot,
//! subject to control barrier function constraints that drive the assigned
//! robots towards their tasks.

pub mod allocator;
pub mod cbf;
pub mod convergence;
pub mod dynamics;
pub mod encoding;
pub mod sim;
