pub mod contribution;
pub mod report;
pub mod stats;
pub mod survey;

pub use contribution::{contribution_stats, ContributionError, ContributionStats, ParticipantRates, RateSummary};
pub use report::{report, Report, ReportError};
pub use stats::{
    binomial_test, contribution_ratio, format_pct, mean, paired_t_test, percentile, ratio_of, relative_change, sample_variance,
    t_two_sided_p, Degenerate, PairedT, StatsError, Tail,
};
pub use survey::{QuestionSummary, SurveyAnswer, SurveyResponse, SurveySet, QUESTIONS};
