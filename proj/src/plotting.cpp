#include "modeldisc/plotting.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "modeldisc/errors.hpp"
#include "modeldisc/hashing.hpp"

namespace modeldisc {
namespace {

const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kRed(0, 0, 220);
const cv::Scalar kLightBlue(230, 216, 173);  // BGR
const cv::Scalar kGrey(170, 170, 170);
const cv::Scalar kWhite(255, 255, 255);

constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 35;
constexpr int kMarginBottom = 45;

const std::vector<double>& require(const PlotSpec& spec, const std::string& key) {
  auto it = spec.series.find(key);
  if (it == spec.series.end()) {
    throw RenderError(std::string(plot_kind_name(spec.kind)) + " plot needs series '" + key + "'");
  }
  for (double v : it->second) {
    if (!std::isfinite(v)) throw RenderError("series '" + key + "' has non-finite values");
  }
  return it->second;
}

const std::vector<double>* optional_series(const PlotSpec& spec, const std::string& key) {
  auto it = spec.series.find(key);
  if (it == spec.series.end()) return nullptr;
  return &require(spec, key);
}

void require_same_length(const std::vector<double>& a, const std::vector<double>& b,
                         const std::string& what) {
  if (a.size() != b.size()) throw RenderError("series length mismatch: " + what);
}

struct Frame {
  double x0, x1, y0, y1;
  int left, right, top, bottom;

  cv::Point2d to_px(double x, double y) const {
    const double px = left + (x - x0) / (x1 - x0) * (right - left);
    const double py = bottom - (y - y0) / (y1 - y0) * (bottom - top);
    return {px, py};
  }
  cv::Point to_pt(double x, double y) const {
    auto p = to_px(x, y);
    return {static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
  }
};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(const std::vector<double>& v) {
    for (double d : v) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  void finish(double pad_fraction) {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(lo))) {
      lo -= 1.0;
      hi += 1.0;
    }
    const double pad = (hi - lo) * pad_fraction;
    lo -= pad;
    hi += pad;
  }
};

std::string tick_label(double v) {
  char buf[32];
  if (std::abs(v) < 1e-12) v = 0.0;
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void draw_axes(cv::Mat& img, const Frame& f, const std::string& title) {
  cv::rectangle(img, cv::Point(f.left, f.top), cv::Point(f.right, f.bottom), kBlack, 1);
  const int font = cv::FONT_HERSHEY_SIMPLEX;
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const auto px = f.to_pt(xv, f.y0);
    cv::line(img, cv::Point(px.x, f.bottom), cv::Point(px.x, f.bottom + 5), kBlack, 1);
    const auto label = tick_label(xv);
    int base = 0;
    auto sz = cv::getTextSize(label, font, 0.4, 1, &base);
    cv::putText(img, label, cv::Point(px.x - sz.width / 2, f.bottom + 20), font, 0.4, kBlack, 1,
                cv::LINE_AA);

    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const auto py = f.to_pt(f.x0, yv);
    cv::line(img, cv::Point(f.left - 5, py.y), cv::Point(f.left, py.y), kBlack, 1);
    const auto ylabel = tick_label(yv);
    sz = cv::getTextSize(ylabel, font, 0.4, 1, &base);
    cv::putText(img, ylabel, cv::Point(f.left - 8 - sz.width, py.y + 4), font, 0.4, kBlack, 1,
                cv::LINE_AA);
  }
  if (!title.empty()) {
    cv::putText(img, title, cv::Point(f.left, f.top - 12), font, 0.5, kBlack, 1, cv::LINE_AA);
  }
}

void draw_polyline(cv::Mat& img, const Frame& f, const std::vector<double>& x,
                   const std::vector<double>& y, const cv::Scalar& color, int thickness,
                   bool dashed) {
  if (x.size() < 2) {
    if (x.size() == 1) cv::circle(img, f.to_pt(x[0], y[0]), 2, color, cv::FILLED, cv::LINE_AA);
    return;
  }
  if (!dashed) {
    std::vector<cv::Point> pts;
    pts.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) pts.push_back(f.to_pt(x[i], y[i]));
    cv::polylines(img, pts, false, color, thickness, cv::LINE_AA);
    return;
  }
  // Dash pattern measured in pixels along the path.
  constexpr double kOn = 8.0, kOff = 5.0;
  double phase = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const auto a = f.to_px(x[i], y[i]);
    const auto b = f.to_px(x[i + 1], y[i + 1]);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    double t = 0.0;
    while (t < len) {
      const double period_pos = std::fmod(phase + t, kOn + kOff);
      const bool on = period_pos < kOn;
      const double run = on ? kOn - period_pos : kOn + kOff - period_pos;
      const double t_end = std::min(len, t + run);
      if (on && len > 0.0) {
        const cv::Point2d p0 = a + (b - a) * (t / len);
        const cv::Point2d p1 = a + (b - a) * (t_end / len);
        cv::line(img, cv::Point(std::lround(p0.x), std::lround(p0.y)),
                 cv::Point(std::lround(p1.x), std::lround(p1.y)), color, thickness, cv::LINE_AA);
      }
      t = t_end;
    }
    phase += len;
  }
}

void draw_legend(cv::Mat& img, const Frame& f,
                 const std::vector<std::pair<std::string, cv::Scalar>>& entries) {
  int y = f.top + 16;
  for (const auto& [label, color] : entries) {
    cv::line(img, cv::Point(f.right - 150, y - 4), cv::Point(f.right - 125, y - 4), color, 3);
    cv::putText(img, label, cv::Point(f.right - 118, y), cv::FONT_HERSHEY_SIMPLEX, 0.4, kBlack,
                1, cv::LINE_AA);
    y += 16;
  }
}

Frame make_frame(const PlotSpec& spec, Range xr, Range yr) {
  xr.finish(0.0);
  yr.finish(0.05);
  return Frame{xr.lo, xr.hi, yr.lo, yr.hi, kMarginLeft, spec.width_px - kMarginRight, kMarginTop,
               spec.height_px - kMarginBottom};
}

cv::Mat draw(const PlotSpec& spec) {
  if (spec.width_px < 200 || spec.height_px < 150) throw RenderError("canvas too small");
  cv::Mat img(spec.height_px, spec.width_px, CV_8UC3, kWhite);

  switch (spec.kind) {
    case PlotKind::Data: {
      const auto& x = require(spec, "x");
      const auto& y = require(spec, "y");
      require_same_length(x, y, "x/y");
      const auto* dashed = optional_series(spec, "y_dashed");
      if (dashed) require_same_length(x, *dashed, "x/y_dashed");
      Range xr, yr;
      xr.add(x);
      yr.add(y);
      if (dashed) yr.add(*dashed);
      const auto f = make_frame(spec, xr, yr);
      draw_axes(img, f, spec.title);
      const auto color = spec.line_role == LineRole::Mean ? kRed : kBlack;
      draw_polyline(img, f, x, y, color, spec.line_role == LineRole::Mean ? 2 : 1, false);
      if (dashed) draw_polyline(img, f, x, *dashed, kBlack, 1, true);
      break;
    }
    case PlotKind::Prediction: {
      const auto& x = require(spec, "x");
      const auto& mean = require(spec, "mean");
      const auto& low = require(spec, "low");
      const auto& high = require(spec, "high");
      const auto& tx = require(spec, "train_x");
      const auto& ty = require(spec, "train_y");
      require_same_length(x, mean, "x/mean");
      require_same_length(x, low, "x/low");
      require_same_length(x, high, "x/high");
      require_same_length(tx, ty, "train_x/train_y");
      const auto* sx = optional_series(spec, "test_x");
      const auto* sy = optional_series(spec, "test_y");
      if ((sx == nullptr) != (sy == nullptr)) throw RenderError("test_x and test_y go together");
      if (sx) require_same_length(*sx, *sy, "test_x/test_y");

      Range xr, yr;
      xr.add(x);
      xr.add(tx);
      yr.add(low);
      yr.add(high);
      yr.add(ty);
      if (sx) {
        xr.add(*sx);
        yr.add(*sy);
      }
      const auto f = make_frame(spec, xr, yr);

      std::vector<cv::Point> band;
      band.reserve(2 * x.size());
      for (std::size_t i = 0; i < x.size(); ++i) band.push_back(f.to_pt(x[i], high[i]));
      for (std::size_t i = x.size(); i-- > 0;) band.push_back(f.to_pt(x[i], low[i]));
      if (band.size() >= 3) {
        std::vector<std::vector<cv::Point>> polys{band};
        cv::fillPoly(img, polys, kLightBlue, cv::LINE_AA);
      }
      draw_axes(img, f, spec.title);
      draw_polyline(img, f, tx, ty, kBlack, 1, false);
      if (sx) draw_polyline(img, f, *sx, *sy, kBlack, 1, true);
      draw_polyline(img, f, x, mean, kRed, 2, false);
      draw_legend(img, f, {{"data", kBlack}, {"posterior mean", kRed}, {"95% band", kLightBlue}});
      break;
    }
    case PlotKind::Residual: {
      const auto& x = require(spec, "x");
      const auto& r = require(spec, "residual");
      require_same_length(x, r, "x/residual");
      Range xr, yr;
      xr.add(x);
      yr.add(r);
      yr.add({0.0});
      const auto f = make_frame(spec, xr, yr);
      draw_axes(img, f, spec.title);
      cv::line(img, f.to_pt(f.x0, 0.0), f.to_pt(f.x1, 0.0), kGrey, 1);
      draw_polyline(img, f, x, r, kBlack, 1, false);
      for (std::size_t i = 0; i < x.size(); ++i) {
        cv::circle(img, f.to_pt(x[i], r[i]), 2, kBlack, cv::FILLED, cv::LINE_AA);
      }
      break;
    }
    case PlotKind::Periodogram: {
      const auto& p = require(spec, "period");
      const auto& pw = require(spec, "power");
      require_same_length(p, pw, "period/power");
      Range xr, yr;
      xr.add(p);
      yr.add(pw);
      yr.add({0.0});
      const auto f = make_frame(spec, xr, yr);
      draw_axes(img, f, spec.title);
      // Periods decrease with frequency; draw in increasing-period order.
      std::vector<std::size_t> order(p.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
      std::vector<double> ps, ws;
      for (auto i : order) {
        ps.push_back(p[i]);
        ws.push_back(pw[i]);
      }
      draw_polyline(img, f, ps, ws, kBlack, 1, false);
      break;
    }
  }
  return img;
}

}  // namespace

std::string_view plot_kind_name(PlotKind kind) {
  switch (kind) {
    case PlotKind::Data: return "data";
    case PlotKind::Prediction: return "prediction";
    case PlotKind::Residual: return "residual";
    case PlotKind::Periodogram: return "periodogram";
  }
  return "?";
}

std::vector<double> extrapolation_grid(double train_x_min, double train_x_max, int n_points) {
  if (!(train_x_max > train_x_min)) throw Error("extrapolation grid needs max > min");
  if (n_points < 2) throw Error("extrapolation grid needs at least 2 points");
  const double range = train_x_max - train_x_min;
  const double lo = train_x_min - kExtrapolationMargin * range;
  const double hi = train_x_max + kExtrapolationMargin * range;
  std::vector<double> grid(static_cast<std::size_t>(n_points));
  const double step = (hi - lo) / (n_points - 1);
  for (int i = 0; i < n_points; ++i) grid[i] = lo + step * i;
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

std::string spec_digest(const PlotSpec& spec) {
  std::string buf;
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_str = [&](const std::string& s) {
    put_u64(s.size());
    buf += s;
  };
  put_str(std::string(plot_kind_name(spec.kind)));
  put_u64(static_cast<std::uint64_t>(spec.width_px));
  put_u64(static_cast<std::uint64_t>(spec.height_px));
  put_u64(static_cast<std::uint64_t>(spec.line_role));
  put_str(spec.title);
  put_str(spec.name);
  for (const auto& [key, values] : spec.series) {
    put_str(key);
    put_u64(values.size());
    for (double v : values) put_u64(std::bit_cast<std::uint64_t>(v));
  }
  return sha256_hex(buf);
}

std::vector<std::uint8_t> render_png(const PlotSpec& spec) {
  const cv::Mat img = draw(spec);
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", img, bytes)) throw RenderError("PNG encoding failed");
  return bytes;
}

RenderedPlot render(const PlotSpec& spec, const std::filesystem::path& out_dir) {
  RenderedPlot out;
  out.spec_digest = spec_digest(spec);
  out.image_bytes = render_png(spec);
  const std::string stem = spec.name.empty() ? out.spec_digest.substr(0, 12) : spec.name;
  out.path = out_dir / (stem + "_" + std::string(plot_kind_name(spec.kind)) + ".png");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream file(out.path, std::ios::binary);
  if (!file) throw RenderError("cannot write " + out.path.string());
  file.write(reinterpret_cast<const char*>(out.image_bytes.data()),
             static_cast<std::streamsize>(out.image_bytes.size()));
  if (!file) throw RenderError("write failed for " + out.path.string());
  return out;
}

}  // namespace modeldisc
