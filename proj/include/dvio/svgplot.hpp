#pragma once

#include <string>
#include <vector>

namespace dvio {

/// Minimal standalone SVG line plots for trajectory overlays and error
/// curves. Output is deterministic text.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void add_series(const std::string& name, const std::vector<double>& xs,
                  const std::vector<double>& ys);

  /// Keep x and y scales identical (for top-down trajectory views).
  void set_equal_axes(bool v) { equal_axes_ = v; }

  std::string render() const;
  void save(const std::string& path) const;

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
  bool equal_axes_ = false;
};

}  // namespace dvio
