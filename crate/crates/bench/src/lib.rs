pub use fsobolev;
