//! Runs every Rust block of the guide in `book/src` as a doc-test.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[cfg(doctest)]
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(information, "information.md");
chapter!(propagation, "propagation.md");
chapter!(bayes, "bayes.md");
chapter!(lada, "lada.md");
chapter!(diagnostics, "diagnostics.md");
chapter!(calibration, "calibration.md");
chapter!(experiments, "experiments.md");
