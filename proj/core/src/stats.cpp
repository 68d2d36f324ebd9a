#include "dmar/stats.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numeric>

#include "dmar/error.hpp"

namespace dmar {

std::vector<double> midranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

// Sum over tie groups of t^3 - t.
double tie_term(const std::vector<double>& values) {
    std::vector<double> s = values;
    std::sort(s.begin(), s.end());
    double acc = 0.0;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t j = i;
        while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        acc += t * t * t - t;
        i = j + 1;
    }
    return acc;
}

}  // namespace

SizeStrata stratify_by_size(const std::vector<double>& areas, const std::optional<std::vector<double>>& boundaries) {
    if (areas.empty()) throw ParameterError("stratify_by_size: empty batch");
    std::vector<std::size_t> order(areas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return areas[i] < areas[j]; });

    SizeStrata s;
    if (!boundaries) {
        s.names = {"Small", "Medium", "Large"};
        s.groups.resize(3);
        const std::size_t n = order.size();
        for (std::size_t r = 0; r < n; ++r) s.groups[std::min<std::size_t>(2, 3 * r / n)].push_back(order[r]);
        s.boundaries.push_back(areas[order.front()]);
        for (const auto& grp : s.groups)
            if (!grp.empty()) s.boundaries.push_back(areas[grp.back()]);
        return s;
    }
    const auto& b = *boundaries;
    if (b.size() < 2 || !std::is_sorted(b.begin(), b.end()) || std::adjacent_find(b.begin(), b.end()) != b.end())
        throw ParameterError("stratify_by_size: boundaries must be strictly increasing with at least two edges");
    s.boundaries = b;
    const std::size_t k = b.size() - 1;
    s.groups.resize(k);
    if (k == 3)
        s.names = {"Small", "Medium", "Large"};
    else
        for (std::size_t j = 0; j < k; ++j) s.names.push_back("G" + std::to_string(j));
    for (auto i : order) {
        const double a = areas[i];
        for (std::size_t j = 0; j < k; ++j)
            if (a >= b[j] && (a < b[j + 1] || (j + 1 == k && a == b[k]))) {
                s.groups[j].push_back(i);
                break;
            }
    }
    return s;
}

RegressionFit regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ShapeError("regression_slope: xs and ys differ in length");
    if (xs.size() < 2) throw ParameterError("regression_slope: need at least two points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw ParameterError("regression_slope: all xs are equal");
    RegressionFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.pearson_r = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
    return f;
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ParameterError("mann_whitney_u: samples must be nonempty");
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = midranks(pooled);
    const std::size_t na = a.size(), nb = b.size(), n = na + nb;
    const double ra = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
    const double dna = static_cast<double>(na), dnb = static_cast<double>(nb);
    MannWhitneyResult res;
    res.u = ra - dna * (dna + 1.0) / 2.0;
    const double mu = dna * dnb / 2.0;
    const double dev = std::abs(res.u - mu);

    if (na <= 8 && nb <= 8) {
        // Every split of the pooled midranks into groups of size na.
        res.exact = true;
        std::vector<bool> pick(n, false);
        std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(na), true);
        std::size_t total = 0, extreme = 0;
        do {
            double r = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (pick[i]) r += ranks[i];
            const double u = r - dna * (dna + 1.0) / 2.0;
            ++total;
            if (std::abs(u - mu) >= dev - 1e-9) ++extreme;
        } while (std::prev_permutation(pick.begin(), pick.end()));
        res.p = static_cast<double>(extreme) / static_cast<double>(total);
        return res;
    }
    const double dn = static_cast<double>(n);
    const double var = dna * dnb / 12.0 * ((dn + 1.0) - tie_term(pooled) / (dn * (dn - 1.0)));
    if (var <= 0.0) {
        res.p = 1.0;
        return res;
    }
    const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
    res.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return res;
}

KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ParameterError("kruskal_wallis: need at least two groups");
    std::vector<double> pooled;
    for (const auto& grp : groups) {
        if (grp.empty()) throw ParameterError("kruskal_wallis: empty group");
        pooled.insert(pooled.end(), grp.begin(), grp.end());
    }
    const auto ranks = midranks(pooled);
    const double n = static_cast<double>(pooled.size());
    double acc = 0.0;
    std::size_t off = 0;
    for (const auto& grp : groups) {
        double r = 0.0;
        for (std::size_t i = 0; i < grp.size(); ++i) r += ranks[off + i];
        acc += r * r / static_cast<double>(grp.size());
        off += grp.size();
    }
    KruskalWallisResult res;
    res.df = groups.size() - 1;
    const double correction = 1.0 - tie_term(pooled) / (n * n * n - n);
    if (correction <= 0.0) return res;  // every value tied
    res.h = std::max(0.0, (12.0 / (n * (n + 1.0)) * acc - 3.0 * (n + 1.0)) / correction);
    res.p = boost::math::gamma_q(static_cast<double>(res.df) / 2.0, res.h / 2.0);
    return res;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    if (v.empty()) throw ParameterError("median_of: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace dmar
