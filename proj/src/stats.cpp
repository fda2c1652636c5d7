#include "cte/stats.hpp"
#include "cte/common.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cte {

Summary summarize_values(std::span<const double> values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
        s.se = s.sd / std::sqrt(static_cast<double>(values.size()));
    }
    return s;
}

WelchResult welch_less(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw ConfigError("welch: each sample needs at least 2 values");
    }
    const Summary sa = summarize_values(a);
    const Summary sb = summarize_values(b);
    const double va = sa.sd * sa.sd / static_cast<double>(a.size());
    const double vb = sb.sd * sb.sd / static_cast<double>(b.size());
    WelchResult r;
    const double diff = sa.mean - sb.mean;
    if (va + vb == 0.0) {
        r.t = diff < 0 ? -std::numeric_limits<double>::infinity() : (diff > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        r.df = static_cast<double>(a.size() + b.size() - 2);
        r.p_less = diff < 0 ? 0.0 : (diff > 0 ? 1.0 : 0.5);
        return r;
    }
    r.t = diff / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    const boost::math::students_t dist(r.df);
    r.p_less = boost::math::cdf(dist, r.t);
    return r;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double improvement_percent(double reference, double candidate) {
    if (reference == 0.0) return 0.0;
    return 100.0 * (reference - candidate) / reference;
}

}  // namespace cte
