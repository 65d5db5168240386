#include "cafe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cafe/error.hpp"

namespace cafe::metrics {

EventCounts& EventCounts::operator+=(const EventCounts& o) {
    n_mat += o.n_mat;
    n_hal += o.n_hal;
    n_misuse += o.n_misuse;
    n_neu += o.n_neu;
    n_miss += o.n_miss;
    return *this;
}

namespace {

std::size_t distinct(const std::vector<std::string>& items) {
    std::set<std::string> seen;
    for (const auto& item : items) {
        auto f = judge::fold_event(item);
        if (!f.empty()) seen.insert(std::move(f));
    }
    return seen.size();
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

struct MeanAcc {
    double sum = 0.0;
    std::size_t n = 0;

    void add(const std::optional<double>& v) {
        if (!v) return;
        sum += *v;
        ++n;
    }
    std::optional<double> mean() const {
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    }
};

}  // namespace

EventCounts counts_from_extraction(const judge::EventExtraction& e) {
    return {distinct(e.matched_events), distinct(e.error_matched), distinct(e.error_use),
            distinct(e.neutral_events), distinct(e.missed_events)};
}

FidelityMetrics compute_metrics(const EventCounts& c) {
    FidelityMetrics m;
    m.n_pred = c.n_mat + c.n_hal + c.n_misuse + c.n_neu;
    m.n_tgt = c.n_mat + c.n_miss;
    m.acc_per = ratio(c.n_mat, m.n_pred);
    m.err_per = ratio(c.n_hal, m.n_pred);
    m.err_use = ratio(c.n_misuse, m.n_pred);
    m.err_omit = ratio(c.n_miss, m.n_tgt);
    return m;
}

Aggregate aggregate_micro(const std::vector<EventCounts>& counts) {
    if (counts.empty()) throw Error(ErrorCode::invalid_argument, "aggregate of an empty list");
    Aggregate agg;
    agg.n = counts.size();
    MeanAcc acc, per, use, omit;
    for (const auto& c : counts) {
        agg.totals += c;
        auto m = compute_metrics(c);
        acc.add(m.acc_per);
        per.add(m.err_per);
        use.add(m.err_use);
        omit.add(m.err_omit);
        if (m.any_undefined()) ++agg.undefined_n;
    }
    agg.micro = compute_metrics(agg.totals);
    agg.macro = {acc.mean(), per.mean(), use.mean(), omit.mean()};
    return agg;
}

void BinSpec::validate() const {
    if (!(width > 0.0) || !std::isfinite(width))
        throw Error(ErrorCode::invalid_argument, "bin width must be > 0");
    if (!(origin >= 0.0) || !std::isfinite(origin))
        throw Error(ErrorCode::invalid_argument, "bin origin must be >= 0");
}

std::vector<BinnedPoint> bin_by_length(const std::vector<LengthPoint>& points, const BinSpec& spec) {
    spec.validate();
    struct Cell {
        MeanAcc acc;
        std::size_t correct = 0;
        std::size_t n = 0;
    };
    std::map<long, Cell> cells;
    for (const auto& p : points) {
        auto i = static_cast<long>(std::floor((p.token_len - spec.origin) / spec.width));
        auto& cell = cells[i];
        cell.acc.add(p.acc_per);
        if (p.correct) ++cell.correct;
        ++cell.n;
    }
    std::vector<BinnedPoint> out;
    for (const auto& [i, cell] : cells) {
        BinnedPoint b;
        b.index = i;
        b.bin_mid = spec.origin + (static_cast<double>(i) + 0.5) * spec.width;
        b.acc_per_mean = cell.acc.mean();
        b.reasoning_acc = static_cast<double>(cell.correct) / static_cast<double>(cell.n);
        b.n_samples = cell.n;
        out.push_back(b);
    }
    return out;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::invalid_argument, "beta parameters must be > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw Error(ErrorCode::invalid_argument, "degrees of freedom must be > 0");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

CorrelationResult pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw Error(ErrorCode::invalid_argument, "pearson inputs differ in length");
    const std::size_t n = xs.size();
    if (n < 3) throw Error(ErrorCode::invalid_argument, "pearson needs at least 3 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::invalid_argument, "pearson input has zero variance");
    CorrelationResult res;
    res.n = n;
    res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(n - 2);
    const double one_minus_r2 = 1.0 - res.r * res.r;
    // df / (df + t^2) simplifies to 1 - r^2.
    res.p = one_minus_r2 <= 0.0 ? 0.0 : std::clamp(incomplete_beta(df / 2.0, 0.5, one_minus_r2), 0.0, 1.0);
    return res;
}

std::map<std::string, TagStat> length_stats_by_tag(const std::vector<TaggedLength>& records) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& r : records)
        for (const auto& tag : r.tags) {
            auto& s = sums[tag];
            s.first += r.token_len;
            ++s.second;
        }
    std::map<std::string, TagStat> out;
    for (const auto& [tag, s] : sums) out[tag] = {s.first / static_cast<double>(s.second), s.second};
    return out;
}

}  // namespace cafe::metrics
