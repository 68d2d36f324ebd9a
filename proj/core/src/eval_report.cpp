#include "dmar/eval_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "dmar/error.hpp"
#include "dmar/pgmp_io.hpp"
#include "dmar/png_export.hpp"

namespace dmar {

namespace {

using ojson = nlohmann::ordered_json;

ojson number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

std::string fmt(double v, int prec = 2) {
    if (std::isnan(v)) return "-";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}


// Mean / sd that keep infinite PSNR values meaningful.
std::pair<double, double> mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (std::any_of(v.begin(), v.end(), [](double x) { return std::isinf(x); }))
        return {mean_of(v), std::numeric_limits<double>::quiet_NaN()};
    return {mean_of(v), sd_of(v)};
}

}  // namespace

EvalReport eval_report(const std::vector<EvalCase>& cases, const std::vector<std::string>& methods,
                       const MetricWindow& window, const std::optional<std::vector<double>>& boundaries) {
    if (cases.empty()) throw ParameterError("eval_report: no cases");
    if (methods.empty()) throw ParameterError("eval_report: no methods");
    for (const auto& c : cases) {
        if (c.outputs.size() != methods.size()) throw ParameterError("eval_report: case " + c.case_id + " lacks methods");
        for (std::size_t m = 0; m < methods.size(); ++m)
            if (c.outputs[m].first != methods[m])
                throw ParameterError("eval_report: case " + c.case_id + " method order differs");
    }
    EvalReport r;
    r.window = window;
    r.methods = methods;
    r.cases.resize(cases.size());

    // Scores land in per-case slots; errors are collected and rethrown outside the region.
    std::vector<std::string> errors(cases.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(cases.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
            const auto& c = cases[i];
            CaseMetrics cm;
            cm.case_id = c.case_id;
            cm.metal_area = static_cast<double>(std::count_if(c.metal.data.begin(), c.metal.data.end(),
                                                              [](auto v) { return v != 0; }));
            const Image ref = prepare_for_metrics(c.reference, c.reference, &c.metal, window);
            for (const auto& [name, img] : c.outputs) {
                const Image out = prepare_for_metrics(img, c.reference, &c.metal, window);
                cm.scores.push_back({psnr(out, ref, window.range()), ssim(out, ref, window.range())});
            }
            r.cases[i] = std::move(cm);
        } catch (const std::exception& e) {
            errors[i] = cases[i].case_id + ": " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw NumericError("eval_report: " + e);

    std::vector<double> areas;
    for (const auto& c : r.cases) areas.push_back(c.metal_area);
    r.strata = stratify_by_size(areas, boundaries);

    for (std::size_t m = 0; m < methods.size(); ++m) {
        MethodSummary s;
        s.method = methods[m];
        std::vector<double> ps, ss;
        for (const auto& c : r.cases) {
            ps.push_back(c.scores[m].psnr);
            ss.push_back(c.scores[m].ssim);
        }
        std::tie(s.psnr_mean, s.psnr_sd) = mean_sd(ps);
        std::tie(s.ssim_mean, s.ssim_sd) = mean_sd(ss);
        s.psnr_median = median_of(ps);
        for (const auto& grp : r.strata.groups) {
            std::vector<double> g;
            for (auto i : grp) g.push_back(ps[i]);
            s.stratum_psnr_mean.push_back(mean_sd(g).first);
        }
        const bool finite = std::all_of(ps.begin(), ps.end(), [](double v) { return std::isfinite(v); });
        if (finite && areas.size() >= 2 && std::adjacent_find(areas.begin(), areas.end(), std::not_equal_to<>()) != areas.end())
            s.fit = regression_slope(areas, ps);
        r.summary.push_back(std::move(s));
    }
    return r;
}

std::string EvalReport::to_json() const {
    ojson j;
    j["metric_window"] = {{"lo", window.lo}, {"hi", window.hi}, {"data_range", window.range()}};
    j["metal_excluded"] = true;
    j["methods"] = methods;
    ojson strata_j = ojson::array();
    for (std::size_t g = 0; g < strata.groups.size(); ++g)
        strata_j.push_back({{"name", strata.names[g]}, {"n", strata.groups[g].size()}});
    j["size_strata"] = {{"rule", "batch terciles of metal area (px) unless boundaries are given"},
                        {"boundaries", strata.boundaries},
                        {"groups", strata_j}};
    ojson summary_j = ojson::array();
    for (const auto& s : summary) {
        ojson e;
        e["method"] = s.method;
        e["psnr"] = {{"mean", number(s.psnr_mean)}, {"sd", number(s.psnr_sd)}, {"median", number(s.psnr_median)}};
        e["ssim"] = {{"mean", number(s.ssim_mean)}, {"sd", number(s.ssim_sd)}};
        ojson st = ojson::object();
        for (std::size_t g = 0; g < s.stratum_psnr_mean.size(); ++g) st[strata.names[g]] = number(s.stratum_psnr_mean[g]);
        e["psnr_by_size"] = st;
        if (s.fit)
            e["psnr_vs_area"] = {{"slope", s.fit->slope}, {"intercept", s.fit->intercept}, {"pearson_r", s.fit->pearson_r}};
        else
            e["psnr_vs_area"] = nullptr;
        summary_j.push_back(e);
    }
    j["summary"] = summary_j;
    ojson cases_j = ojson::array();
    for (const auto& c : cases) {
        ojson e;
        e["case_id"] = c.case_id;
        e["metal_area_px"] = c.metal_area;
        for (std::size_t m = 0; m < methods.size(); ++m)
            e["scores"][methods[m]] = {{"psnr", number(c.scores[m].psnr)}, {"ssim", number(c.scores[m].ssim)}};
        cases_j.push_back(e);
    }
    j["cases"] = cases_j;
    return j.dump(2) + "\n";
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    char line[256];
    os << "window [" << fmt(window.lo, 0) << ", " << fmt(window.hi, 0) << "] HU, data range " << fmt(window.range(), 0)
       << ", metal pixels excluded, " << cases.size() << " cases\n\n";
    std::snprintf(line, sizeof line, "%-10s %16s %9s %16s\n", "method", "PSNR mean+-sd", "median", "SSIM mean+-sd");
    os << line;
    for (const auto& s : summary) {
        std::snprintf(line, sizeof line, "%-10s %16s %9s %16s\n", s.method.c_str(),
                      (fmt(s.psnr_mean) + " +- " + fmt(s.psnr_sd)).c_str(), fmt(s.psnr_median).c_str(),
                      (fmt(s.ssim_mean, 4) + " +- " + fmt(s.ssim_sd, 4)).c_str());
        os << line;
    }
    os << "\nPSNR by metal size";
    for (std::size_t g = 0; g < strata.groups.size(); ++g)
        os << (g ? ", " : " (") << strata.names[g] << " n=" << strata.groups[g].size();
    os << ")\n";
    std::snprintf(line, sizeof line, "%-10s", "method");
    os << line;
    for (const auto& n : strata.names) {
        std::snprintf(line, sizeof line, " %9s", n.c_str());
        os << line;
    }
    os << "\n";
    for (const auto& s : summary) {
        std::snprintf(line, sizeof line, "%-10s", s.method.c_str());
        os << line;
        for (double v : s.stratum_psnr_mean) {
            std::snprintf(line, sizeof line, " %9s", fmt(v).c_str());
            os << line;
        }
        os << "\n";
    }
    os << "\nPSNR vs metal area (OLS)\n";
    std::snprintf(line, sizeof line, "%-10s %12s %10s %8s\n", "method", "slope/px", "intercept", "r");
    os << line;
    for (const auto& s : summary) {
        if (s.fit)
            std::snprintf(line, sizeof line, "%-10s %12s %10s %8s\n", s.method.c_str(), fmt(s.fit->slope, 5).c_str(),
                          fmt(s.fit->intercept).c_str(), fmt(s.fit->pearson_r, 3).c_str());
        else
            std::snprintf(line, sizeof line, "%-10s %12s %10s %8s\n", s.method.c_str(), "-", "-", "-");
        os << line;
    }
    return os.str();
}

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette{{
    {{31, 119, 180}}, {{255, 127, 14}}, {{44, 160, 44}}, {{214, 39, 40}}, {{148, 103, 189}}, {{140, 86, 75}}}};

struct Axes {
    long top = 20, left = 50, height = 260, width = 420;
    double x0, x1, y0, y1;
    long px(double x) const { return left + static_cast<long>(std::lround((x - x0) / (x1 - x0) * width)); }
    long py(double y) const { return top + height - static_cast<long>(std::lround((y - y0) / (y1 - y0) * height)); }
    void frame(Canvas& c) const {
        const std::array<std::uint8_t, 3> k{0, 0, 0};
        c.line(top, left, top + height, left, k);
        c.line(top + height, left, top + height, left + width, k);
    }
};

std::pair<double, double> finite_range(const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : v)
        if (std::isfinite(x)) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (!(hi > lo)) {
        lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
        hi = lo + 2.0;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

void plot_distribution(const EvalReport& r, const std::filesystem::path& path) {
    std::vector<double> all;
    for (const auto& c : r.cases)
        for (const auto& s : c.scores) all.push_back(s.psnr);
    const auto [lo, hi] = finite_range(all);
    Canvas cv(300, 500);
    Axes ax{20, 50, 260, 420, -0.5, static_cast<double>(r.methods.size()) - 0.5, lo, hi};
    ax.frame(cv);
    for (std::size_t m = 0; m < r.methods.size(); ++m)
        for (std::size_t i = 0; i < r.cases.size(); ++i) {
            const double v = r.cases[i].scores[m].psnr;
            if (!std::isfinite(v)) continue;
            const double jitter = (static_cast<double>(i % 7) - 3.0) * 0.04;
            cv.dot(ax.py(v), ax.px(static_cast<double>(m) + jitter), 2, kPalette[m % kPalette.size()]);
        }
    cv.save(path);
}

void plot_slope(const EvalReport& r, const std::filesystem::path& path) {
    std::vector<double> areas, all;
    for (const auto& c : r.cases) {
        areas.push_back(c.metal_area);
        for (const auto& s : c.scores) all.push_back(s.psnr);
    }
    const auto [xlo, xhi] = finite_range(areas);
    const auto [ylo, yhi] = finite_range(all);
    Canvas cv(300, 500);
    Axes ax{20, 50, 260, 420, xlo, xhi, ylo, yhi};
    ax.frame(cv);
    for (std::size_t m = 0; m < r.methods.size(); ++m) {
        const auto color = kPalette[m % kPalette.size()];
        for (const auto& c : r.cases)
            if (std::isfinite(c.scores[m].psnr)) cv.dot(ax.py(c.scores[m].psnr), ax.px(c.metal_area), 2, color);
        if (const auto& f = r.summary[m].fit)
            cv.line(ax.py(f->intercept + f->slope * xlo), ax.px(xlo), ax.py(f->intercept + f->slope * xhi), ax.px(xhi),
                    color);
    }
    cv.save(path);
}

}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& dir, bool plots) {
    std::filesystem::create_directories(dir);
    const std::string js = report.to_json(), tx = report.to_text();
    write_file_bytes(dir / "report.json", std::vector<std::uint8_t>(js.begin(), js.end()));
    write_file_bytes(dir / "report.txt", std::vector<std::uint8_t>(tx.begin(), tx.end()));
    if (plots) {
        plot_distribution(report, dir / "psnr_distribution.png");
        plot_slope(report, dir / "psnr_vs_area.png");
    }
}

}  // namespace dmar
