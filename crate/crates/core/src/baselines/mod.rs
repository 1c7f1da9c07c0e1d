//! Reference models: flat review classifiers applied to segments, a
//! segment-supervised logistic regression, and keyword rules.

mod keywords;
mod logreg;
mod rev;
mod seg_lr;
mod tfidf;

pub use keywords::{normalize, normalize_word, KeywordRule};
pub use logreg::{train_logreg, Features, LogReg, LogRegConfig, LogRegFit};
pub use rev::{RevEncoder, RevLr, RevLrFeatures, RevNet, RevSpec};
pub use seg_lr::{seg_lr_cross_val, train_seg_lr};
pub use tfidf::{ngrams, TfidfVectorizer};
