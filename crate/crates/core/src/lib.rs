//! Flexibility requests and local flexibility markets for radial
//! distribution grids under forecast uncertainty.

pub mod cases;
pub mod chance;
pub mod evaluate;
pub mod experiment;
pub mod flexreq;
pub mod grid;
pub mod market;
pub mod socp;
pub mod uncertainty;
