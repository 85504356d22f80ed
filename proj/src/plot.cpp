#include "hrf/plot.hpp"

#include "hrf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace hrf::plot {

namespace {

constexpr double kWidth = 900.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 55.0;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    // avoid "-0.00"
    if (std::string_view(buf) == "-0.00") return "0.00";
    return buf;
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Roughly five round tick values covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    }
    std::vector<double> out;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) out.push_back(v);
    return out;
}

std::string tick_label(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

class Canvas {
  public:
    Canvas(double x_lo, double x_hi, double y_lo, double y_hi) {
        if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
        if (!(y_hi > y_lo)) {
            // flat data still gets a visible band around it
            y_lo -= 1.0;
            y_hi += 1.0;
        } else {
            const double pad = 0.05 * (y_hi - y_lo);
            y_lo -= pad;
            y_hi += pad;
        }
        x_lo_ = x_lo, x_hi_ = x_hi, y_lo_ = y_lo, y_hi_ = y_hi;
    }

    [[nodiscard]] double px(double x) const { return kLeft + (x - x_lo_) / (x_hi_ - x_lo_) * (kWidth - kLeft - kRight); }
    [[nodiscard]] double py(double y) const {
        return kHeight - kBottom - (y - y_lo_) / (y_hi_ - y_lo_) * (kHeight - kTop - kBottom);
    }

    void begin(std::string_view title, std::string_view x_label, std::string_view y_label) {
        out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
        out_ << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
        out_ << "<text class=\"title\" x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
             << escape(title) << "</text>\n";
        const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
        out_ << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
        out_ << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y0)
             << "\"/>\n";
        out_ << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y1)
             << "\"/>\n";
        out_ << "</g>\n<g class=\"ticks\" font-size=\"11\">\n";
        for (double t : ticks(x_lo_, x_hi_)) {
            const double x = px(t);
            out_ << "<line x1=\"" << num(x) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x) << "\" y2=\""
                 << num(y0 + 5) << "\" stroke=\"black\"/>";
            out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y0 + 18) << "\" text-anchor=\"middle\">"
                 << tick_label(t) << "</text>\n";
        }
        for (double t : ticks(y_lo_, y_hi_)) {
            const double y = py(t);
            out_ << "<line x1=\"" << num(x0 - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x0) << "\" y2=\""
                 << num(y) << "\" stroke=\"black\"/>";
            out_ << "<text x=\"" << num(x0 - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
                 << tick_label(t) << "</text>\n";
        }
        out_ << "</g>\n";
        out_ << "<text class=\"xlabel\" x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12)
             << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
        out_ << "<text class=\"ylabel\" x=\"18\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
             << num((y0 + y1) / 2) << ")\">" << escape(y_label) << "</text>\n";
    }

    void polyline(std::string_view cls, const std::vector<Point>& pts, std::string_view stroke, double width,
                  std::string_view dash = {}) {
        out_ << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
             << num(width) << '"';
        if (!dash.empty()) out_ << " stroke-dasharray=\"" << dash << '"';
        out_ << " points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i > 0) out_ << ' ';
            out_ << num(px(pts[i].x)) << ',' << num(py(pts[i].y));
        }
        out_ << "\"/>\n";
    }

    void vline(std::string_view cls, double x, std::string_view stroke) {
        out_ << "<line class=\"" << cls << "\" x1=\"" << num(px(x)) << "\" y1=\"" << num(kTop) << "\" x2=\""
             << num(px(x)) << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"" << stroke
             << "\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";
    }

    void legend(const std::vector<std::string>& names, const std::vector<std::string>& strokes,
                const std::vector<std::string>& dashes) {
        out_ << "<g class=\"legend\">\n";
        for (std::size_t i = 0; i < names.size(); ++i) {
            const double y = kTop + 8 + 16.0 * static_cast<double>(i);
            const double x = kWidth - kRight - 150;
            out_ << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 24) << "\" y2=\""
                 << num(y) << "\" stroke=\"" << strokes[i] << "\" stroke-width=\"2\"";
            if (!dashes[i].empty()) out_ << " stroke-dasharray=\"" << dashes[i] << '"';
            out_ << "/>";
            out_ << "<text class=\"legend-entry\" x=\"" << num(x + 30) << "\" y=\"" << num(y + 4) << "\">"
                 << escape(names[i]) << "</text>\n";
        }
        out_ << "</g>\n";
    }

    [[nodiscard]] std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

  private:
    double x_lo_ = 0, x_hi_ = 1, y_lo_ = 0, y_hi_ = 1;
    std::ostringstream out_;
};

std::pair<double, double> range_of(std::span<const double> v, std::pair<double, double> r) {
    for (double x : v) {
        if (std::isfinite(x)) r.first = std::min(r.first, x), r.second = std::max(r.second, x);
    }
    return r;
}

constexpr std::pair<double, double> kEmpty{std::numeric_limits<double>::infinity(),
                                           -std::numeric_limits<double>::infinity()};

}  // namespace

std::string series_svg(const data::TimeSeries& series) {
    if (series.values.empty()) throw InputError("cannot plot an empty series");
    const double dt = series.interval_seconds;
    const auto [lo, hi] = range_of(series.values, kEmpty);
    Canvas c(0.0, dt * static_cast<double>(series.values.size() - 1), lo, hi);
    c.begin(series.id + " heart rate", "time (s)", "heart rate (bpm)");
    std::vector<Point> pts;
    for (std::size_t i = 0; i < series.values.size(); ++i) pts.push_back({dt * static_cast<double>(i), series.values[i]});
    c.polyline("series", pts, "#1f77b4", 1.2);
    return c.finish();
}

std::vector<Point> trend_polyline(const classical::ProphetFit& fit, std::size_t n) {
    std::vector<double> ts;
    for (std::size_t i = 0; i < n; ++i) ts.push_back(static_cast<double>(i));
    for (double s : fit.changepoints) {
        if (s >= 0.0 && s <= static_cast<double>(n - 1)) ts.push_back(s);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    std::vector<Point> out;
    for (double t : ts) out.push_back({t, fit.trend(t)});
    return out;
}

std::string prophet_svg(const classical::ProphetFit& fit, std::span<const double> values, double interval_seconds) {
    if (values.empty()) throw InputError("cannot plot an empty series");
    const std::size_t n = values.size();
    std::vector<double> fitted(n), trend(n);
    for (std::size_t i = 0; i < n; ++i) {
        fitted[i] = fit.predict(static_cast<double>(i));
        trend[i] = fit.trend(static_cast<double>(i));
    }
    auto r = range_of(values, kEmpty);
    r = range_of(fitted, r);
    r = range_of(trend, r);
    const double dt = interval_seconds;
    Canvas c(0.0, dt * static_cast<double>(n - 1), r.first, r.second);
    c.begin("Prophet fit", "time (s)", "heart rate (bpm)");
    std::vector<Point> obs, fit_pts, trend_pts;
    for (std::size_t i = 0; i < n; ++i) {
        obs.push_back({dt * static_cast<double>(i), values[i]});
        fit_pts.push_back({dt * static_cast<double>(i), fitted[i]});
    }
    for (const auto& p : trend_polyline(fit, n)) trend_pts.push_back({dt * p.x, p.y});
    c.polyline("observed", obs, "#add8e6", 1.2);
    c.polyline("fitted", fit_pts, "#1f3a93", 1.0);
    c.polyline("trend", trend_pts, "#d62728", 2.0);
    for (double s : fit.changepoints) c.vline("changepoint", dt * s, "#d62728");
    c.legend({"observed", "fitted", "trend", "changepoints"}, {"#add8e6", "#1f3a93", "#d62728", "#d62728"},
             {"", "", "", "4 3"});
    return c.finish();
}

std::string compare_svg(std::span<const double> truth, const std::vector<NamedSeries>& predictions,
                        double interval_seconds, double x0) {
    if (truth.empty()) throw InputError("cannot plot an empty series");
    auto r = range_of(truth, kEmpty);
    for (const auto& p : predictions) {
        if (p.values.size() != truth.size()) {
            throw DimensionError(p.name + " has " + std::to_string(p.values.size()) + " points, truth has " +
                                 std::to_string(truth.size()));
        }
        r = range_of(p.values, r);
    }
    const double dt = interval_seconds;
    Canvas c(dt * x0, dt * (x0 + static_cast<double>(truth.size() - 1)), r.first, r.second);
    c.begin("True values vs predictions", "time (s)", "heart rate (bpm)");
    static const char* colors[] = {"#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                   "#e377c2", "#17becf", "#bcbd22"};
    static const char* dashes[] = {"", "6 3", "2 2", "8 3 2 3", "1 3", "10 4", "4 4 1 4", "3 6"};
    auto points = [&](std::span<const double> v) {
        std::vector<Point> pts;
        for (std::size_t i = 0; i < v.size(); ++i) pts.push_back({dt * (x0 + static_cast<double>(i)), v[i]});
        return pts;
    };
    std::vector<std::string> names{"truth"}, strokes{"black"}, dash{""};
    c.polyline("truth", points(truth), "black", 1.6);
    for (std::size_t m = 0; m < predictions.size(); ++m) {
        const std::string color = colors[m % 8];
        // cycle the dash pattern on a different stride so styles stay distinct past eight models
        const std::string d = dashes[(m + m / 8) % 8];
        c.polyline("prediction", points(predictions[m].values), color, 1.2, d);
        names.push_back(predictions[m].name);
        strokes.push_back(color);
        dash.push_back(d);
    }
    c.legend(names, strokes, dash);
    return c.finish();
}

}  // namespace hrf::plot
