#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace modeldisc {

enum class PlotKind { Data, Prediction, Residual, Periodogram };

std::string_view plot_kind_name(PlotKind kind);

/// Colour of the single line drawn by Data plots.
enum class LineRole { Data, Mean };

/// Series keys per kind:
///   Data:        x, y, optional y_dashed (drawn dashed black)
///   Prediction:  x, mean, low, high (grid); train_x, train_y; optional test_x, test_y
///   Residual:    x, residual
///   Periodogram: period, power
struct PlotSpec {
  PlotKind kind = PlotKind::Data;
  std::map<std::string, std::vector<double>> series;
  int width_px = 800;
  int height_px = 500;
  std::string title;
  /// File stem; the written file is `{name}_{kind}.png`.
  std::string name;
  LineRole line_role = LineRole::Data;
};

struct RenderedPlot {
  std::vector<std::uint8_t> image_bytes;  // PNG
  std::filesystem::path path;
  std::string spec_digest;
};

inline constexpr int kDefaultGridPoints = 300;
inline constexpr double kExtrapolationMargin = 0.2;

/// Uniform grid over [min - 0.2 range, max + 0.2 range].
std::vector<double> extrapolation_grid(double train_x_min, double train_x_max, int n_points);

/// SHA-256 over the kind, size, title, name and exact series bits.
std::string spec_digest(const PlotSpec& spec);

/// Encodes the plot as PNG without touching the filesystem. Throws RenderError
/// on malformed specs.
std::vector<std::uint8_t> render_png(const PlotSpec& spec);

/// Renders and writes `{out_dir}/{name}_{kind}.png`. Throws RenderError.
RenderedPlot render(const PlotSpec& spec, const std::filesystem::path& out_dir);

}  // namespace modeldisc
