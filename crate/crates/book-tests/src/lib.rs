//! Runs every code block of the guide as a doc-test.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(intro, "intro.md");
chapter!(data, "data.md");
chapter!(clustering, "clustering.md");
chapter!(boosting, "boosting.md");
chapter!(shap, "shap.md");
chapter!(evaluation, "evaluation.md");
chapter!(statistics, "statistics.md");
chapter!(synthetic, "synthetic.md");
chapter!(pipeline, "pipeline.md");
