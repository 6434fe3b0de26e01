//! Overlap-region depth priors: rectification of adjacent views,
//! semi-global matching, and back-projection onto the original cameras.

mod prior;
mod rectify;
mod sgm;

pub use prior::{
    backproject_prior, build_all_priors, normalize_prior, pair_prior, DepthPrior, PairPrior, PriorOptions,
};
pub use rectify::{rectify_pair, warp_to_rectified, RectifiedPair};
pub use sgm::{
    depth_to_disparity, disparity_to_depth, sgm_match, sgm_match_both, AggregationPaths, DisparityMap, Sgm, SgmParams,
    StereoMatcher,
};
