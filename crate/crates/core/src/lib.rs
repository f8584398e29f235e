pub mod hyperfun;
pub mod quadrature;
pub mod odecore;
pub mod shooting;
pub mod identities;
pub mod experiments;
