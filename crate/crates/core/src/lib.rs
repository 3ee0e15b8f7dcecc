//! Budget-constrained action advising for deep reinforcement learning
//! students: collect teacher advice, imitate it, and reuse it under an
//! uncertainty threshold.

pub mod advising;
pub mod envs;
pub mod harness;
pub mod imitation;
pub mod nn;
pub mod seeding;
pub mod student;
pub mod teacher;
