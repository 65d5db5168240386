#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cafe/judge.hpp"

namespace cafe::metrics {

struct EventCounts {
    std::size_t n_mat = 0;
    std::size_t n_hal = 0;
    std::size_t n_misuse = 0;
    std::size_t n_neu = 0;
    std::size_t n_miss = 0;

    EventCounts& operator+=(const EventCounts& o);
    bool operator==(const EventCounts&) const = default;
};

/// List lengths after case-folded, trimmed de-duplication within each list.
EventCounts counts_from_extraction(const judge::EventExtraction& e);

/// Ratios are nullopt when their denominator is zero.
struct FidelityMetrics {
    std::size_t n_pred = 0;
    std::size_t n_tgt = 0;
    std::optional<double> acc_per;
    std::optional<double> err_per;
    std::optional<double> err_use;
    std::optional<double> err_omit;

    bool any_undefined() const { return !acc_per || !err_omit; }
};

FidelityMetrics compute_metrics(const EventCounts& c);

struct MacroMeans {
    std::optional<double> acc_per;
    std::optional<double> err_per;
    std::optional<double> err_use;
    std::optional<double> err_omit;
};

struct Aggregate {
    std::size_t n = 0;
    EventCounts totals;
    FidelityMetrics micro;
    MacroMeans macro;
    std::size_t undefined_n = 0;  // samples with at least one undefined ratio
};

/// Micro metrics over summed counts plus macro means of defined per-sample
/// ratios. Throws invalid_argument on empty input.
Aggregate aggregate_micro(const std::vector<EventCounts>& counts);

struct LengthPoint {
    double token_len = 0.0;
    std::optional<double> acc_per;
    bool correct = false;
};

struct BinSpec {
    double width = 40.0;
    double origin = 0.0;

    void validate() const;
};

struct BinnedPoint {
    long index = 0;
    double bin_mid = 0.0;
    std::optional<double> acc_per_mean;  // nullopt when no sample in the bin has a defined acc_per
    double reasoning_acc = 0.0;
    std::size_t n_samples = 0;
};

/// Bin i holds lengths in [origin + i*width, origin + (i+1)*width). Empty
/// bins are omitted; output is ordered by bin index.
std::vector<BinnedPoint> bin_by_length(const std::vector<LengthPoint>& points, const BinSpec& spec);

struct CorrelationResult {
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

/// Product-moment r with a two-sided p-value from Student's t on n-2 degrees
/// of freedom. Throws invalid_argument for n < 3, mismatched lengths or a
/// zero-variance input.
CorrelationResult pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

struct TagStat {
    double mean = 0.0;
    std::size_t count = 0;
};

struct TaggedLength {
    std::vector<std::string> tags;
    double token_len = 0.0;
};

std::map<std::string, TagStat> length_stats_by_tag(const std::vector<TaggedLength>& records);

}  // namespace cafe::metrics
