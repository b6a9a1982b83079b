pub mod bo;
pub mod diagnostics;
pub mod experiments;
pub mod gp;
pub mod mso;
pub mod numerics;
pub mod objectives;
pub mod par;
pub mod qn;
